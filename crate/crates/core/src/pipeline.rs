//! End-to-end estimation from epoch cumulants: whiten, build the system or
//! run the optimizer, and map the result back to the input coordinates.
//! Exact elimination runs on the unwhitened differences to the reference,
//! which vanish on the same subspace.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approx;
use crate::cumulants::{build_input_system, build_system, center_whiten, EpochCumulants, Reference, SystemMode};
use crate::error::{Error, Result};
use crate::exact::exact_estimate;
use crate::linalg;
use crate::polyspace::LinearForm;
use crate::ssa::{ssa_optimize, SsaConfig, SsaRun};
use crate::subspace::{normalize_form, SubspaceEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Approx,
    Ssa,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "approx" => Ok(Method::Approx),
            "ssa" => Ok(Method::Ssa),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub method: Method,
    pub reference: Reference,
    pub mode: SystemMode,
    pub ssa: SsaConfig,
    /// Seeds the optimizer restarts; unused by the algebraic methods.
    pub seed: u64,
    /// When false, means are ignored and only covariances are compared. Use
    /// this when the true means are known to coincide, since estimated means
    /// then contribute only noise.
    pub use_means: bool,
}

impl SolveOptions {
    pub fn new(method: Method, reference: Reference) -> Self {
        SolveOptions {
            method,
            reference,
            mode: SystemMode::Reference,
            ssa: SsaConfig::default(),
            seed: 0,
            use_means: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// In the coordinates of the input epochs.
    pub estimate: SubspaceEstimate,
    /// Optimizer details when the method is [`Method::Ssa`].
    pub ssa: Option<SsaRun>,
}

/// Estimates the common `d`-dimensional subspace of `epochs`.
pub fn solve(epochs: &[EpochCumulants], d: usize, options: &SolveOptions) -> Result<Solution> {
    let stripped: Vec<EpochCumulants>;
    let epochs = if options.use_means {
        epochs
    } else {
        stripped = epochs
            .iter()
            .map(|e| EpochCumulants {
                mean: DVector::zeros(e.dim()),
                cov: e.cov.clone(),
            })
            .collect();
        &stripped
    };
    let whitened = center_whiten(epochs, options.reference)?;
    let w = &whitened.transform;
    let w_inv = whitened.inverse_transform();
    match options.method {
        Method::Exact => {
            let system = build_input_system(epochs, options.reference, options.mode)?;
            Ok(Solution {
                estimate: exact_estimate(&system, d)?,
                ssa: None,
            })
        }
        Method::Approx => {
            let system = build_system(&whitened.epochs, options.mode)?;
            Ok(Solution {
                estimate: approx::estimate(&system, d)?.transformed(w, &w_inv)?,
                ssa: None,
            })
        }
        Method::Ssa => {
            let run = ssa_optimize(&whitened.epochs, d, &options.ssa, options.seed)?;
            let basis = linalg::orthonormalize_columns(&(w * run.projection.transpose()));
            let estimate = from_basis(basis)?;
            Ok(Solution {
                estimate,
                ssa: Some(run),
            })
        }
    }
}

/// Wraps an orthonormal `D x d` basis, taking the generators from its
/// orthogonal complement.
pub fn from_basis(basis: DMatrix<f64>) -> Result<SubspaceEstimate> {
    let (dim, d) = basis.shape();
    let complement = linalg::null_space_basis(&basis.transpose(), dim - d)?;
    let generators = complement
        .column_iter()
        .map(|c| {
            let mut v: Vec<f64> = c.iter().copied().collect();
            normalize_form(&mut v);
            LinearForm::new(v)
        })
        .collect();
    Ok(SubspaceEstimate {
        dim_ambient: dim,
        dim_subspace: d,
        basis,
        generators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::principal_angle;
    use crate::synthgen::{generate, InstanceSpec};

    #[test]
    fn algebraic_methods_recover_noise_free_truth() {
        for (dim, d) in [(4, 2), (5, 1), (6, 4)] {
            let m = crate::polyspace::triangular(dim) - crate::polyspace::triangular(d) + 1;
            let inst = generate(&InstanceSpec::new(dim, d, m, None), 11).unwrap();
            for method in [Method::Exact, Method::Approx] {
                let sol = solve(&inst.cumulants(), d, &SolveOptions::new(method, Reference::Last)).unwrap();
                assert!(principal_angle(&sol.estimate.basis, &inst.true_basis).unwrap() < 1e-8);
                assert!(sol.estimate.max_residual() < 1e-8);
            }
        }
    }

    #[test]
    fn ssa_pipeline_maps_back() {
        let inst = generate(&InstanceSpec::new(4, 2, 12, None), 2).unwrap();
        let mut opts = SolveOptions::new(Method::Ssa, Reference::Average);
        opts.ssa.restarts = 10;
        opts.ssa.grad_tol = 1e-9;
        let sol = solve(&inst.cumulants(), 2, &opts).unwrap();
        assert!(principal_angle(&sol.estimate.basis, &inst.true_basis).unwrap() < 1e-3);
        assert!(sol.estimate.max_residual() < 1e-10);
        assert!(sol.ssa.is_some());
    }

    #[test]
    fn means_enter_as_linear_forms() {
        let mut spec = InstanceSpec::new(5, 2, 6, None);
        spec.with_means = true;
        let inst = generate(&spec, 5).unwrap();
        let sol = solve(&inst.cumulants(), 2, &SolveOptions::new(Method::Approx, Reference::Last)).unwrap();
        assert!(principal_angle(&sol.estimate.basis, &inst.true_basis).unwrap() < 1e-8);
    }

    #[test]
    fn covariance_only_ignores_noisy_means() {
        let inst = generate(&InstanceSpec::new(5, 2, 20, None), 9).unwrap();
        let mut cum = inst.cumulants();
        let mut rng = crate::synthgen::rng_from_seed(4);
        for e in &mut cum {
            for x in e.mean.iter_mut() {
                *x = rand::Rng::random_range(&mut rng, -1e-3..1e-3);
            }
        }
        let mut opts = SolveOptions::new(Method::Approx, Reference::Last);
        let noisy = solve(&cum, 2, &opts).unwrap();
        assert!(principal_angle(&noisy.estimate.basis, &inst.true_basis).unwrap() > 1e-3);
        opts.use_means = false;
        let clean = solve(&cum, 2, &opts).unwrap();
        assert!(principal_angle(&clean.estimate.basis, &inst.true_basis).unwrap() < 1e-8);
    }

    #[test]
    fn method_parses() {
        assert_eq!("ssa".parse::<Method>().unwrap(), Method::Ssa);
        assert!("gd".parse::<Method>().is_err());
    }
}
