//! First and second cumulants per epoch, whitening, and the polynomial system
//! whose common zero set is the subspace of agreeing projections.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::polyspace::{gram_to_quadratic, LinearForm, QuadraticForm};

/// Mean and covariance of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochCumulants {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl EpochCumulants {
    /// Validates shape, symmetry (1e-10 relative) and positive semidefiniteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::NotSquare {
                rows: cov.nrows(),
                cols: cov.ncols(),
            });
        }
        if mean.len() != cov.nrows() {
            return Err(Error::DimensionMismatch {
                expected: cov.nrows(),
                found: mean.len(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let (eigenvalues, _) = linalg::sym_eigen(&cov);
        if eigenvalues.first().is_some_and(|&e| e < -1e-10 * scale) {
            return Err(Error::InvalidArgument(
                "covariance is not positive semidefinite".into(),
            ));
        }
        Ok(EpochCumulants { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased (`N - 1`) covariance of an `N x D` sample matrix.
pub fn estimate_epoch(samples: &DMatrix<f64>) -> Result<EpochCumulants> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mean = samples.row_mean().transpose();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(EpochCumulants { mean, cov })
}

/// Which epoch statistics define the whitened coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Average mean and covariance over all epochs.
    Average,
    /// The last epoch.
    Last,
}

impl std::str::FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Reference::Average),
            "last" => Ok(Reference::Last),
            other => Err(Error::InvalidArgument(format!("unknown reference {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Whitened {
    pub epochs: Vec<EpochCumulants>,
    /// `W = Σ_ref^{-1/2}`; whitened coordinates are `W (x - shift)`.
    pub transform: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl Whitened {
    /// `W^{-1} = Σ_ref^{1/2}`.
    pub fn inverse_transform(&self) -> DMatrix<f64> {
        self.transform
            .clone()
            .try_inverse()
            .expect("whitening transform is invertible by construction")
    }
}

/// Maps every epoch through `x ↦ W(x - c)` where `c` and `W = Σ_ref^{-1/2}`
/// come from the chosen reference.
pub fn center_whiten(epochs: &[EpochCumulants], reference: Reference) -> Result<Whitened> {
    let first = epochs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no epochs".into()))?;
    let dim = first.dim();
    for e in epochs {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.dim(),
            });
        }
    }
    let (ref_mean, ref_cov) = match reference {
        Reference::Last => {
            let last = epochs.last().expect("nonempty");
            (last.mean.clone(), last.cov.clone())
        }
        Reference::Average => {
            let m = epochs.len() as f64;
            let mean = epochs
                .iter()
                .fold(DVector::zeros(dim), |acc, e| acc + &e.mean)
                / m;
            let cov = epochs
                .iter()
                .fold(DMatrix::zeros(dim, dim), |acc, e| acc + &e.cov)
                / m;
            (mean, cov)
        }
    };
    let (eigenvalues, vectors) = linalg::sym_eigen(&ref_cov);
    let smallest = eigenvalues[0];
    let largest = eigenvalues[dim - 1];
    if !(largest > 0.0) || smallest <= 1e-12 * largest {
        return Err(Error::SingularReference {
            ratio: smallest / largest,
        });
    }
    let inv_sqrt = DVector::from_iterator(dim, eigenvalues.iter().map(|e| 1.0 / e.sqrt()));
    let w = &vectors * DMatrix::from_diagonal(&inv_sqrt) * vectors.transpose();
    let w = (&w + w.transpose()) * 0.5;
    let transformed = epochs
        .iter()
        .map(|e| {
            let cov = &w * &e.cov * &w;
            EpochCumulants {
                mean: &w * (&e.mean - &ref_mean),
                cov: (&cov + cov.transpose()) * 0.5,
            }
        })
        .collect();
    Ok(Whitened {
        epochs: transformed,
        transform: w,
        shift: ref_mean,
    })
}

/// How quadrics are formed from whitened epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemMode {
    /// `Σ_i - I` and `μ_i` for every epoch but the last.
    Reference,
    /// `Σ_i - Σ_j` and `μ_i - μ_j` for every pair `i < j`.
    Pairwise,
}

impl std::str::FromStr for SystemMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(SystemMode::Reference),
            "pairwise" => Ok(SystemMode::Pairwise),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// Quadratic and linear forms that vanish on the common subspace.
#[derive(Debug, Clone)]
pub struct PolynomialSystem {
    pub dim: usize,
    pub quadrics: Vec<QuadraticForm>,
    pub linears: Vec<LinearForm>,
}

const ZERO_LINEAR: f64 = 1e-12;

/// Forms the system from whitened epochs, where the reference has identity
/// covariance and zero mean.
pub fn build_system(epochs: &[EpochCumulants], mode: SystemMode) -> Result<PolynomialSystem> {
    let dim = epochs.first().map_or(0, EpochCumulants::dim);
    let reference = EpochCumulants {
        mean: DVector::zeros(dim),
        cov: DMatrix::identity(dim, dim),
    };
    build_system_against(epochs, &reference, mode)
}

/// Forms the system in the input coordinates, subtracting the reference
/// statistics instead of whitening. Vanishes on the same subspace as the
/// input epochs.
pub fn build_input_system(
    epochs: &[EpochCumulants],
    reference: Reference,
    mode: SystemMode,
) -> Result<PolynomialSystem> {
    let whitened = center_whiten(epochs, reference)?;
    let dim = whitened.shift.len();
    let ref_cov = match reference {
        Reference::Last => epochs[epochs.len() - 1].cov.clone(),
        Reference::Average => {
            epochs
                .iter()
                .fold(DMatrix::zeros(dim, dim), |acc, e| acc + &e.cov)
                / epochs.len() as f64
        }
    };
    let centered: Vec<EpochCumulants> = epochs
        .iter()
        .map(|e| EpochCumulants {
            mean: &e.mean - &whitened.shift,
            cov: e.cov.clone(),
        })
        .collect();
    let reference = EpochCumulants {
        mean: DVector::zeros(dim),
        cov: ref_cov,
    };
    build_system_against(&centered, &reference, mode)
}

fn build_system_against(
    epochs: &[EpochCumulants],
    reference: &EpochCumulants,
    mode: SystemMode,
) -> Result<PolynomialSystem> {
    if epochs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 epochs, found {}",
            epochs.len()
        )));
    }
    let dim = epochs[0].dim();
    let pairs: Vec<(DMatrix<f64>, DVector<f64>)> = match mode {
        SystemMode::Reference => epochs[..epochs.len() - 1]
            .iter()
            .map(|e| (&e.cov - &reference.cov, &e.mean - &reference.mean))
            .collect(),
        SystemMode::Pairwise => {
            let mut out = Vec::new();
            for i in 0..epochs.len() {
                for j in i + 1..epochs.len() {
                    out.push((
                        &epochs[i].cov - &epochs[j].cov,
                        &epochs[i].mean - &epochs[j].mean,
                    ));
                }
            }
            out
        }
    };
    let mut quadrics = Vec::with_capacity(pairs.len());
    let mut linears = Vec::new();
    for (gram, mean) in pairs {
        quadrics.push(gram_to_quadratic(&gram)?);
        if mean.norm() >= ZERO_LINEAR {
            linears.push(LinearForm::new(mean.iter().copied().collect()));
        }
    }
    Ok(PolynomialSystem {
        dim,
        quadrics,
        linears,
    })
}
