//! Synthetic problem instances: `m` covariance matrices that agree exactly on
//! a random `d`-dimensional subspace, optionally perturbed by disturbance
//! matrices with calibrated mean log-eigenvalue `sigma`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::cumulants::EpochCumulants;
use crate::error::{Error, Result};
use crate::linalg;

/// Generator used for every seeded computation in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` derived from a master seed.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index))
}

fn uniform_pm1() -> Uniform<f64> {
    Uniform::new(-1.0, 1.0).expect("valid range")
}

/// `exp(A)` with `A = (B - Bᵀ)/2`, `B` uniform on `(-1, 1)`; orthogonal with
/// determinant one.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let u = uniform_pm1();
    let b = DMatrix::from_fn(dim, dim, |_, _| u.sample(rng));
    let a = (&b - b.transpose()) * 0.5;
    a.exp()
}

/// Symmetric positive definite `V diag(λ) Vᵀ` with `(1/D) Σ log λ = sigma`.
pub fn disturbance<R: Rng + ?Sized>(dim: usize, sigma: f64, rng: &mut R) -> DMatrix<f64> {
    let u = uniform_pm1();
    let raw: Vec<f64> = (0..dim).map(|_| u.sample(rng)).collect();
    let shift = sigma - raw.iter().sum::<f64>() / dim as f64;
    let eig = DVector::from_iterator(dim, raw.iter().map(|g| (g + shift).exp()));
    let v = random_orthogonal(dim, rng);
    let e = &v * DMatrix::from_diagonal(&eig) * v.transpose();
    (&e + e.transpose()) * 0.5
}

/// Parameters of one synthetic instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub dim: usize,
    pub sub_dim: usize,
    pub epochs: usize,
    /// Disturbance level; `None` leaves the covariances exact.
    pub sigma: Option<f64>,
    /// Draw nonzero means that agree (at zero) on the subspace.
    pub with_means: bool,
}

impl InstanceSpec {
    pub fn new(dim: usize, sub_dim: usize, epochs: usize, sigma: Option<f64>) -> Self {
        InstanceSpec {
            dim,
            sub_dim,
            epochs,
            sigma,
            with_means: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sub_dim == 0 || self.sub_dim >= self.dim {
            return Err(Error::InvalidArgument(format!(
                "subspace dimension {} must satisfy 0 < d < {}",
                self.sub_dim, self.dim
            )));
        }
        if self.epochs < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 epochs, found {}",
                self.epochs
            )));
        }
        if self.sigma.is_some_and(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("sigma must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub dim: usize,
    pub sub_dim: usize,
    pub sigma: Option<f64>,
    pub seed: u64,
    pub covariances: Vec<DMatrix<f64>>,
    pub means: Vec<DVector<f64>>,
    /// `D x d` orthonormal basis of the true subspace.
    pub true_basis: DMatrix<f64>,
}

impl ProblemInstance {
    pub fn epochs(&self) -> usize {
        self.covariances.len()
    }

    pub fn cumulants(&self) -> Vec<EpochCumulants> {
        self.means
            .iter()
            .zip(&self.covariances)
            .map(|(m, c)| EpochCumulants {
                mean: m.clone(),
                cov: c.clone(),
            })
            .collect()
    }
}

const MAX_BASIS_CONDITION: f64 = 1e8;
const MAX_BASIS_ATTEMPTS: usize = 100;

/// `m` matrices `L_i L_iᵀ` whose lower-triangular factors share their first
/// `d` rows, so their top-left `d x d` blocks coincide bit for bit. Factor
/// entries are uniform on `(-1, 1)` with diagonals replaced by `|x| + 0.5`.
pub fn covariance_family<R: Rng + ?Sized>(dim: usize, d: usize, m: usize, rng: &mut R) -> Vec<DMatrix<f64>> {
    let u = uniform_pm1();
    let mut entry = |r: usize, c: usize| -> f64 {
        let x = u.sample(rng);
        if r == c {
            x.abs() + 0.5
        } else {
            x
        }
    };
    let mut shared = DMatrix::zeros(dim, dim);
    for r in 0..d {
        for c in 0..=r {
            shared[(r, c)] = entry(r, c);
        }
    }
    (0..m)
        .map(|_| {
            let mut l = shared.clone();
            for r in d..dim {
                for c in 0..=r {
                    l[(r, c)] = entry(r, c);
                }
            }
            &l * l.transpose()
        })
        .collect()
}

/// Draws an instance from `seed`; identical seeds give identical instances.
pub fn generate(spec: &InstanceSpec, seed: u64) -> Result<ProblemInstance> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let (dim, d) = (spec.dim, spec.sub_dim);
    let u = uniform_pm1();

    let exact = covariance_family(dim, d, spec.epochs, &mut rng);
    let disturbed: Vec<DMatrix<f64>> = match spec.sigma {
        Some(sigma) => exact
            .into_iter()
            .map(|c| c + disturbance(dim, sigma, &mut rng))
            .collect(),
        None => exact,
    };

    // Columns of `basis`: first d span S, the rest complete R^D.
    let mut basis = None;
    for _ in 0..MAX_BASIS_ATTEMPTS {
        let b = DMatrix::from_fn(dim, dim, |_, _| u.sample(&mut rng));
        let s = linalg::singular_values(&b)?;
        let smallest = *s.last().expect("dim > 0");
        if smallest > 0.0 && s[0] / smallest <= MAX_BASIS_CONDITION {
            basis = Some(b);
            break;
        }
    }
    let basis = basis.ok_or_else(|| {
        Error::InvalidArgument("could not draw a well-conditioned basis".into())
    })?;
    // Σ = B^{-T} C B^{-1}, so that (B e_a)ᵀ Σ (B e_b) = C_ab.
    let mixing = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular basis".into()))?
        .transpose();
    let covariances = disturbed
        .iter()
        .map(|c| {
            let s = &mixing * c * mixing.transpose();
            (&s + s.transpose()) * 0.5
        })
        .collect();
    let means = (0..spec.epochs)
        .map(|_| {
            if !spec.with_means {
                return DVector::zeros(dim);
            }
            let source = DVector::from_fn(dim, |r, _| if r < d { 0.0 } else { u.sample(&mut rng) });
            let mut mean = &mixing * source;
            if let Some(sigma) = spec.sigma {
                let scale = sigma.exp();
                for x in mean.iter_mut() {
                    *x += scale * u.sample(&mut rng);
                }
            }
            mean
        })
        .collect();
    let true_basis = linalg::orthonormalize_columns(&basis.columns(0, d).into_owned());
    Ok(ProblemInstance {
        dim,
        sub_dim: d,
        sigma: spec.sigma,
        seed,
        covariances,
        means,
        true_basis,
    })
}

/// `n` Gaussian samples with the given mean and covariance, as rows.
pub fn draw_samples<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let dim = mean.len();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut out = DMatrix::zeros(n, dim);
    let mut z = DVector::zeros(dim);
    for r in 0..n {
        for x in z.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        let x = &l * &z + mean;
        out.row_mut(r).copy_from(&x.transpose());
    }
    Ok(out)
}
