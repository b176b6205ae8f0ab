use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::polyspace::LinearForm;

/// A recovered `d`-dimensional subspace of `R^D`, given both as an
/// orthonormal basis and as `D - d` linear forms vanishing on it.
#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    pub dim_ambient: usize,
    pub dim_subspace: usize,
    /// `D x d`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub generators: Vec<LinearForm>,
}

impl SubspaceEstimate {
    /// Builds the estimate from linearly independent generators; the basis is
    /// the orthonormal null space of the stacked generators.
    pub fn from_generators(dim: usize, generators: Vec<LinearForm>, d: usize) -> Result<Self> {
        if d == 0 || d >= dim {
            return Err(Error::InvalidArgument(format!(
                "subspace dimension {d} must satisfy 0 < d < {dim}"
            )));
        }
        if generators.len() != dim - d {
            return Err(Error::DimensionMismatch {
                expected: dim - d,
                found: generators.len(),
            });
        }
        let g = generator_matrix(&generators, dim)?;
        let basis = linalg::null_space_basis(&g, d)?;
        Ok(SubspaceEstimate {
            dim_ambient: dim,
            dim_subspace: d,
            basis,
            generators,
        })
    }

    /// Generators stacked as rows.
    pub fn generator_matrix(&self) -> DMatrix<f64> {
        generator_matrix(&self.generators, self.dim_ambient).expect("validated on construction")
    }

    /// Smallest singular value of the row-normalized generator matrix.
    pub fn generator_independence(&self) -> f64 {
        let mut g = self.generator_matrix();
        for mut row in g.row_iter_mut() {
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
        }
        linalg::singular_values(&g)
            .ok()
            .and_then(|s| s.last().copied())
            .unwrap_or(0.0)
    }

    /// Largest `|ℓ(b)| / ‖ℓ‖` over generators `ℓ` and basis columns `b`.
    pub fn max_residual(&self) -> f64 {
        let g = self.generator_matrix();
        let prod = &g * &self.basis;
        let mut worst: f64 = 0.0;
        for (r, l) in self.generators.iter().enumerate() {
            let n = l.norm().max(f64::MIN_POSITIVE);
            for c in 0..prod.ncols() {
                worst = worst.max(prod[(r, c)].abs() / n);
            }
        }
        worst
    }

    /// Image of the subspace under the invertible map `T`: the basis becomes
    /// `T S` and each form `ℓ` becomes `T^{-T} ℓ`, so it still vanishes on `T S`.
    pub fn transformed(&self, t: &DMatrix<f64>, t_inv: &DMatrix<f64>) -> Result<Self> {
        let generators = self
            .generators
            .iter()
            .map(|l| {
                let v = t_inv.transpose() * nalgebra::DVector::from_column_slice(l.coeffs());
                let mut c: Vec<f64> = v.iter().copied().collect();
                normalize_form(&mut c);
                LinearForm::new(c)
            })
            .collect();
        let basis = linalg::orthonormalize_columns(&(t * &self.basis));
        Ok(SubspaceEstimate {
            dim_ambient: self.dim_ambient,
            dim_subspace: self.dim_subspace,
            basis,
            generators,
        })
    }
}

fn generator_matrix(generators: &[LinearForm], dim: usize) -> Result<DMatrix<f64>> {
    for l in generators {
        if l.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: l.dim(),
            });
        }
    }
    Ok(DMatrix::from_fn(generators.len(), dim, |r, c| {
        generators[r].coeffs()[c]
    }))
}

/// Scales to unit norm with the first non-negligible coefficient positive.
pub fn normalize_form(c: &mut [f64]) {
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    c.iter_mut().for_each(|x| *x /= norm);
    if let Some(&first) = c.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
