//! Optimization baseline: find the orthonormal projection `P` (`d x D`) whose
//! projected epochs are closest, in Gaussian Kullback–Leibler divergence, to
//! the standard normal.
//!
//! The frame is the first `d` rows of a rotation `R`. Each step multiplies `R`
//! by `exp(-t H)` for the antisymmetric gradient `H`, so `PPᵀ = I` holds by
//! construction. Step sizes come from Armijo backtracking.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cumulants::EpochCumulants;
use crate::error::{Error, Result};
use crate::linalg;
use crate::synthgen::{mix64, random_orthogonal, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveVariant {
    /// `Σ_i -log det(PΣ_iPᵀ) + ‖Pμ_i‖²`.
    PaperLiteral,
    /// `Σ_i ½(tr(PΣ_iPᵀ) - log det(PΣ_iPᵀ) - d + ‖Pμ_i‖²)`.
    FullKl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsaConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_init: f64,
    pub variant: ObjectiveVariant,
}

impl Default for SsaConfig {
    fn default() -> Self {
        SsaConfig {
            restarts: 5,
            max_iters: 1000,
            grad_tol: 1e-6,
            step_init: 1.0,
            variant: ObjectiveVariant::FullKl,
        }
    }
}

impl SsaConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 || !(self.grad_tol > 0.0) || !(self.step_init > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid optimizer config {self:?}")));
        }
        Ok(())
    }
}

const ORTHONORMAL_TOL: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 50;

fn check_frame(p: &DMatrix<f64>) -> Result<()> {
    let d = p.nrows();
    let dev = (p * p.transpose() - DMatrix::<f64>::identity(d, d)).amax();
    if dev > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal(dev));
    }
    Ok(())
}

/// Objective value and Euclidean gradient with respect to `P`.
fn objective_and_gradient(
    p: &DMatrix<f64>,
    epochs: &[EpochCumulants],
    variant: ObjectiveVariant,
    want_gradient: bool,
) -> Result<(f64, Option<DMatrix<f64>>)> {
    let d = p.nrows();
    let mut value = 0.0;
    let mut grad = want_gradient.then(|| DMatrix::zeros(p.nrows(), p.ncols()));
    for e in epochs {
        let p_sigma = p * &e.cov;
        let projected = &p_sigma * p.transpose();
        let projected = (&projected + projected.transpose()) * 0.5;
        let chol = projected.clone().cholesky().ok_or(Error::SingularProjection)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let p_mu = p * &e.mean;
        let mean_sq = p_mu.norm_squared();
        value += match variant {
            ObjectiveVariant::PaperLiteral => -log_det + mean_sq,
            ObjectiveVariant::FullKl => 0.5 * (projected.trace() - log_det - d as f64 + mean_sq),
        };
        if let Some(g) = grad.as_mut() {
            let inv_p_sigma = chol.solve(&p_sigma);
            let mean_term = &p_mu * e.mean.transpose();
            match variant {
                ObjectiveVariant::PaperLiteral => {
                    *g += (mean_term - inv_p_sigma) * 2.0;
                }
                ObjectiveVariant::FullKl => {
                    *g += p_sigma - inv_p_sigma + mean_term;
                }
            }
        }
    }
    Ok((value, grad))
}

/// Objective of an orthonormal frame `P` (`d x D`) on whitened epochs.
pub fn ssa_objective(p: &DMatrix<f64>, epochs: &[EpochCumulants], variant: ObjectiveVariant) -> Result<f64> {
    check_frame(p)?;
    Ok(objective_and_gradient(p, epochs, variant, false)?.0)
}

/// Euclidean gradient of [`ssa_objective`] with respect to the entries of `P`.
pub fn ssa_gradient(p: &DMatrix<f64>, epochs: &[EpochCumulants], variant: ObjectiveVariant) -> Result<DMatrix<f64>> {
    Ok(objective_and_gradient(p, epochs, variant, true)?
        .1
        .expect("gradient requested"))
}

/// One descent run from a fixed starting rotation.
#[derive(Debug, Clone)]
pub struct SsaRun {
    /// `d x D` with orthonormal rows.
    pub projection: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Antisymmetric descent direction in rotation space for frame `R[..d]`.
fn rotation_gradient(rotation: &DMatrix<f64>, euclidean: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = rotation.nrows();
    let d = euclidean.nrows();
    let mut m = DMatrix::zeros(dim, dim);
    m.rows_mut(0, d).copy_from(&(euclidean * rotation.transpose()));
    &m - m.transpose()
}

/// Gradient descent on the rotation group from `start`.
pub fn ssa_descend(
    epochs: &[EpochCumulants],
    d: usize,
    start: DMatrix<f64>,
    config: &SsaConfig,
) -> Result<SsaRun> {
    let mut rotation = start;
    let frame = |r: &DMatrix<f64>| r.rows(0, d).into_owned();
    let (mut value, grad) = objective_and_gradient(&frame(&rotation), epochs, config.variant, true)?;
    let mut grad = grad.expect("gradient requested");
    let mut trace = vec![value];
    let mut step = config.step_init;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let h = rotation_gradient(&rotation, &grad);
        // Norm over the free parameters (upper triangle).
        let grad_norm = h.norm() / std::f64::consts::SQRT_2;
        if grad_norm < config.grad_tol {
            converged = true;
            break;
        }
        let slope = 0.5 * h.norm_squared();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = (&h * -step).exp() * &rotation;
            if let Ok((v, g)) = objective_and_gradient(&frame(&candidate), epochs, config.variant, true) {
                if v <= value - ARMIJO * step * slope {
                    accepted = Some((candidate, v, g.expect("gradient requested")));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((candidate, v, g)) = accepted else {
            break;
        };
        // Re-orthonormalize to stop drift from repeated products.
        rotation = candidate.qr().q();
        let fresh = objective_and_gradient(&frame(&rotation), epochs, config.variant, true)?;
        value = fresh.0.min(v);
        grad = fresh.1.unwrap_or(g);
        trace.push(value);
        iterations += 1;
        step *= 2.0;
    }
    if !converged && iterations == config.max_iters {
        let h = rotation_gradient(&rotation, &grad);
        converged = h.norm() / std::f64::consts::SQRT_2 < config.grad_tol;
    }
    Ok(SsaRun {
        projection: frame(&rotation),
        objective: value,
        iterations,
        converged,
        trace,
    })
}

/// Best of `config.restarts` descents from random rotations; ties go to the
/// lowest restart index.
pub fn ssa_optimize(epochs: &[EpochCumulants], d: usize, config: &SsaConfig, seed: u64) -> Result<SsaRun> {
    config.validate()?;
    let dim = epochs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no epochs".into()))?
        .dim();
    if d == 0 || d >= dim {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {d} must satisfy 0 < d < {dim}"
        )));
    }
    let mut best: Option<SsaRun> = None;
    for restart in 0..config.restarts {
        let mut rng = rng_from_seed(mix64(seed ^ mix64(restart as u64 + 1)));
        let start = random_orthogonal(dim, &mut rng);
        let run = match ssa_descend(epochs, d, start, config) {
            Ok(run) => run,
            Err(Error::SingularProjection) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let best = best.ok_or(Error::SingularProjection)?;
    debug_assert!(linalg::gram_deviation(&best.projection.transpose()) < ORTHONORMAL_TOL);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::principal_angle;
    use crate::cumulants::{center_whiten, Reference};
    use crate::synthgen::{generate, InstanceSpec};
    use nalgebra::DVector;

    fn standard(dim: usize, m: usize) -> Vec<EpochCumulants> {
        (0..m)
            .map(|_| EpochCumulants {
                mean: DVector::zeros(dim),
                cov: DMatrix::identity(dim, dim),
            })
            .collect()
    }

    fn whitened_instance(spec: &InstanceSpec, seed: u64) -> (Vec<EpochCumulants>, DMatrix<f64>) {
        let inst = generate(spec, seed).unwrap();
        let w = center_whiten(&inst.cumulants(), Reference::Average).unwrap();
        // Truth in whitened coordinates: S' = W^{-1} S.
        let truth = linalg::orthonormalize_columns(&(w.inverse_transform() * &inst.true_basis));
        (w.epochs, truth)
    }

    #[test]
    fn standard_normal_epochs_have_zero_objective() {
        let epochs = standard(4, 3);
        let mut rng = rng_from_seed(1);
        let p = random_orthogonal(4, &mut rng).rows(0, 2).into_owned();
        for v in [ObjectiveVariant::PaperLiteral, ObjectiveVariant::FullKl] {
            assert!(ssa_objective(&p, &epochs, v).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn literal_and_full_values() {
        let e = std::f64::consts::E;
        let epochs = vec![EpochCumulants {
            mean: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 1.0]),
        }];
        let p = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let lit = ssa_objective(&p, &epochs, ObjectiveVariant::PaperLiteral).unwrap();
        assert!((lit + 1.0).abs() < 1e-14);
        let full = ssa_objective(&p, &epochs, ObjectiveVariant::FullKl).unwrap();
        assert!((full - 0.5 * (e - 2.0)).abs() < 1e-14);
        assert!((full - 0.359).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_frames() {
        let epochs = standard(2, 1);
        let p = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(
            ssa_objective(&p, &epochs, ObjectiveVariant::FullKl),
            Err(Error::NotOrthonormal(_))
        ));
        let singular = vec![EpochCumulants {
            mean: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        }];
        let p = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            ssa_objective(&p, &singular, ObjectiveVariant::FullKl),
            Err(Error::SingularProjection)
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (epochs, _) = whitened_instance(&InstanceSpec::new(5, 2, 6, Some(-1.0)), 3);
        let mut rng = rng_from_seed(2);
        let p = random_orthogonal(5, &mut rng).rows(0, 2).into_owned();
        for variant in [ObjectiveVariant::PaperLiteral, ObjectiveVariant::FullKl] {
            let g = ssa_gradient(&p, &epochs, variant).unwrap();
            let h = 1e-6;
            for r in 0..2 {
                for c in 0..5 {
                    let mut plus = p.clone();
                    plus[(r, c)] += h;
                    let mut minus = p.clone();
                    minus[(r, c)] -= h;
                    let fp = objective_and_gradient(&plus, &epochs, variant, false).unwrap().0;
                    let fm = objective_and_gradient(&minus, &epochs, variant, false).unwrap().0;
                    let fd = (fp - fm) / (2.0 * h);
                    assert!((fd - g[(r, c)]).abs() < 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", g[(r, c)]);
                }
            }
        }
    }

    #[test]
    fn objective_is_frame_invariant() {
        let (epochs, _) = whitened_instance(&InstanceSpec::new(6, 3, 8, Some(-2.0)), 4);
        for seed in 0..50 {
            let mut rng = rng_from_seed(seed);
            let p = random_orthogonal(6, &mut rng).rows(0, 3).into_owned();
            let r = random_orthogonal(3, &mut rng);
            let rp = &r * &p;
            for v in [ObjectiveVariant::PaperLiteral, ObjectiveVariant::FullKl] {
                let a = ssa_objective(&p, &epochs, v).unwrap();
                let b = ssa_objective(&rp, &epochs, v).unwrap();
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn descent_is_monotone() {
        let (epochs, _) = whitened_instance(&InstanceSpec::new(6, 3, 12, Some(-3.0)), 5);
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            let start = random_orthogonal(6, &mut rng);
            let run = ssa_descend(&epochs, 3, start, &SsaConfig { max_iters: 200, ..SsaConfig::default() }).unwrap();
            for w in run.trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!(linalg::gram_deviation(&run.projection.transpose()) < 1e-8);
        }
    }

    #[test]
    fn noise_free_optimum_finds_truth() {
        let (epochs, truth) = whitened_instance(&InstanceSpec::new(4, 2, 10, None), 6);
        let config = SsaConfig {
            restarts: 10,
            grad_tol: 1e-9,
            ..SsaConfig::default()
        };
        let run = ssa_optimize(&epochs, 2, &config, 1).unwrap();
        let at_truth = ssa_objective(&truth.transpose(), &epochs, config.variant).unwrap();
        assert!(run.objective <= at_truth + 1e-6);
        let angle = principal_angle(&run.projection.transpose(), &truth).unwrap();
        assert!(angle < 1e-3, "angle {angle}");
    }

    #[test]
    fn identical_epochs_are_optimal_everywhere() {
        let epochs = standard(4, 5);
        let run = ssa_optimize(&epochs, 2, &SsaConfig::default(), 0).unwrap();
        assert!(run.objective.abs() < 1e-12);
        assert!(run.converged);
        assert_eq!(run.iterations, 0);
    }

    #[test]
    fn invalid_config_rejected() {
        let epochs = standard(3, 2);
        let bad = SsaConfig {
            restarts: 0,
            ..SsaConfig::default()
        };
        assert!(ssa_optimize(&epochs, 1, &bad, 0).is_err());
        assert!(ssa_optimize(&epochs, 3, &SsaConfig::default(), 0).is_err());
    }

    #[test]
    fn angle_invariant_under_rotation_of_inputs() {
        let (epochs, truth) = whitened_instance(&InstanceSpec::new(4, 2, 10, Some(-4.0)), 7);
        let mut rng = rng_from_seed(9);
        let r = random_orthogonal(4, &mut rng);
        let rotated: Vec<_> = epochs
            .iter()
            .map(|e| EpochCumulants {
                mean: &r * &e.mean,
                cov: &r * &e.cov * r.transpose(),
            })
            .collect();
        let config = SsaConfig {
            restarts: 10,
            grad_tol: 1e-10,
            max_iters: 5000,
            ..SsaConfig::default()
        };
        let a = ssa_optimize(&epochs, 2, &config, 3).unwrap();
        let b = ssa_optimize(&rotated, 2, &config, 3).unwrap();
        let angle_a = principal_angle(&a.projection.transpose(), &truth).unwrap();
        let angle_b = principal_angle(&b.projection.transpose(), &(&r * &truth)).unwrap();
        assert!((angle_a - angle_b).abs() < 1e-6, "{angle_a} vs {angle_b}");
    }
}
