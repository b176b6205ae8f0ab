//! Least-squares recovery of the generators from noisy quadrics using
//! prescribed-rank SVD approximations.
//!
//! For every variable `T_i` the left null space of the quadric matrix with
//! the `T_i`-columns removed selects the combinations of quadrics that are
//! (approximately) divisible by `T_i`. Their dominant row span, read on the
//! `T_i`-columns, estimates the linear generators; the `D` estimates are
//! pooled by a final rank-`(D - d)` row span. All ranks are fixed by `(m, D, d)`.

use nalgebra::{DMatrix, DVector};

use crate::cumulants::PolynomialSystem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::polyspace::{
    canonical_monomials, gram_to_quadratic, quadratic_to_gram, triangular, CoefficientMatrix,
    LinearForm, MonomialOrdering, QuadraticForm,
};
use crate::subspace::SubspaceEstimate;

/// Relative singular-value cutoff for the rank of the linear block.
pub const LINEAR_RANK_TOL: f64 = 1e-6;

/// Ranks used by the approximate estimator, fixed by `(m - 1, D, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSpec {
    pub left_null_rank: usize,
    pub row_span_rank: usize,
}

impl RankSpec {
    pub fn new(quadric_count: usize, dim: usize, d: usize) -> Result<Self> {
        if d == 0 || d >= dim {
            return Err(Error::InvalidArgument(format!(
                "subspace dimension {d} must satisfy 0 < d < {dim}"
            )));
        }
        let required = triangular(dim) - triangular(d);
        if quadric_count < required {
            return Err(Error::TooFewQuadrics {
                found: quadric_count,
                required,
            });
        }
        Ok(RankSpec {
            left_null_rank: quadric_count - required + dim - d,
            row_span_rank: dim - d,
        })
    }
}

/// Rows are the left singular vectors of the `k` smallest singular values
/// (counting the implicit zeros when `A` has more rows than columns).
pub fn rank_k_left_null(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > a.nrows() {
        return Err(Error::InvalidArgument(format!(
            "left null rank {k} out of range 1..={}",
            a.nrows()
        )));
    }
    let (u, _) = linalg::full_left_singular(a)?;
    let n = a.nrows();
    Ok(oriented_rows(u.columns(n - k, k).transpose()))
}

/// Rows are the top-`k` right singular vectors of `A`.
pub fn rank_k_row_span(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > a.nrows().min(a.ncols()) {
        return Err(Error::InvalidArgument(format!(
            "row span rank {k} out of range 1..={}",
            a.nrows().min(a.ncols())
        )));
    }
    let s = linalg::svd(a)?;
    Ok(oriented_rows(s.v_t.rows(0, k).into_owned()))
}

fn oriented_rows(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let mut v: Vec<f64> = row.iter().copied().collect();
        linalg::orient_largest_positive(&mut v);
        row.copy_from_slice(&v);
    }
    m
}

/// Approximate generators of the vanishing ideal from `m - 1 >= Δ(D) - Δ(d)`
/// noisy quadrics. Generators are orthonormal rows.
pub fn approx_generators(quadrics: &[QuadraticForm], d: usize) -> Result<SubspaceEstimate> {
    let dim = quadrics
        .first()
        .ok_or(Error::TooFewQuadrics {
            found: 0,
            required: 1,
        })?
        .dim();
    let ranks = RankSpec::new(quadrics.len(), dim, d)?;
    let q = CoefficientMatrix::from_quadrics(quadrics, &MonomialOrdering::identity(dim))?.entries;
    let monomials = canonical_monomials(dim);

    let mut stacked = DMatrix::zeros(dim * ranks.row_span_rank, dim);
    for var in 0..dim {
        let without: Vec<usize> = (0..monomials.len())
            .filter(|&c| !monomials[c].contains(var))
            .collect();
        let q_i = q.select_columns(&without);
        let left = rank_k_left_null(&q_i, ranks.left_null_rank)?;
        let combined = &left * &q;
        let span = rank_k_row_span(&combined, ranks.row_span_rank)?;
        for (c, m) in monomials.iter().enumerate() {
            if let Some(k) = m.cofactor(var) {
                for r in 0..ranks.row_span_rank {
                    stacked[(var * ranks.row_span_rank + r, k)] = span[(r, c)];
                }
            }
        }
    }
    let pooled = rank_k_row_span(&stacked, ranks.row_span_rank)?;
    let generators = pooled
        .row_iter()
        .map(|row| LinearForm::new(row.iter().copied().collect()))
        .collect();
    SubspaceEstimate::from_generators(dim, generators, d)
}

/// Approximate pipeline on a full polynomial system: estimate the span of the
/// linear forms, restrict the quadrics to its orthogonal complement, and run
/// [`approx_generators`] there.
pub fn estimate(system: &PolynomialSystem, d: usize) -> Result<SubspaceEstimate> {
    let dim = system.dim;
    if d == 0 || d >= dim {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {d} must satisfy 0 < d < {dim}"
        )));
    }
    let f = CoefficientMatrix::from_linears(&system.linears, dim)?.entries;
    let (linear_rows, r) = if f.nrows() == 0 {
        (DMatrix::zeros(0, dim), 0)
    } else {
        let s = linalg::svd(&f)?;
        let top = s.singular_values.first().copied().unwrap_or(0.0);
        let raw = s
            .singular_values
            .iter()
            .filter(|&&x| x > LINEAR_RANK_TOL * top)
            .count();
        let r = raw.min(dim - d);
        (oriented_rows(s.v_t.rows(0, r).into_owned()), r)
    };
    if r == 0 {
        return approx_generators(&system.quadrics, d);
    }
    let mut generators: Vec<LinearForm> = linear_rows
        .row_iter()
        .map(|row| LinearForm::new(row.iter().copied().collect()))
        .collect();
    if r < dim - d {
        let complement = linalg::null_space_basis(&linear_rows, dim - r)?;
        let reduced = system
            .quadrics
            .iter()
            .map(|q| gram_to_quadratic(&(complement.transpose() * quadratic_to_gram(q) * &complement)))
            .collect::<Result<Vec<_>>>()?;
        let inner = approx_generators(&reduced, d)?;
        for l in &inner.generators {
            let lifted = &complement * DVector::from_column_slice(l.coeffs());
            generators.push(LinearForm::new(lifted.iter().copied().collect()));
        }
    }
    SubspaceEstimate::from_generators(dim, generators, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::principal_angle;
    use crate::exact::exact_generators;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        let u = Uniform::new(-1.0, 1.0).unwrap();
        DMatrix::from_fn(rows, cols, |_, _| u.sample(rng))
    }

    fn vanishing_quadrics(rng: &mut ChaCha8Rng, basis: &DMatrix<f64>, count: usize) -> Vec<QuadraticForm> {
        let dim = basis.nrows();
        let ann = linalg::null_space_basis(&basis.transpose(), dim - basis.ncols()).unwrap();
        (0..count)
            .map(|_| {
                let m = random_matrix(rng, dim, ann.ncols());
                gram_to_quadratic(&(&ann * m.transpose())).unwrap()
            })
            .collect()
    }

    #[test]
    fn rank_spec_formula() {
        let r = RankSpec::new(109, 10, 5).unwrap();
        assert_eq!(r.left_null_rank, 109 - 55 + 15 + 5);
        assert_eq!(r.row_span_rank, 5);
        assert!(RankSpec::new(39, 10, 5).is_err());
        assert!(RankSpec::new(40, 10, 0).is_err());
    }

    #[test]
    fn left_null_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, 2.0, 1.0]));
        let l = rank_k_left_null(&a, 1).unwrap();
        assert!((l[(0, 2)] - 1.0).abs() < 1e-14);
        assert!(l[(0, 0)].abs() < 1e-14 && l[(0, 1)].abs() < 1e-14);
        assert!(rank_k_left_null(&a, 4).is_err());
        assert!(rank_k_left_null(&a, 0).is_err());
    }

    #[test]
    fn left_null_annihilates_exact_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 7, 2) * random_matrix(&mut rng, 2, 5);
        let l = rank_k_left_null(&a, 5).unwrap();
        assert!((&l * &a).norm() < 1e-12);
        assert!((&l * l.transpose() - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn left_null_tail_matches_full_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 8, 5);
            let l = rank_k_left_null(&a, 2).unwrap();
            // Oracle: eigenvalues of A Aᵀ; two smallest of the nonzero block are
            // the two smallest singular values squared, but with 8 > 5 rows the
            // three trailing eigenvalues are zero, so the tail is exactly zero.
            let (eig, _) = linalg::sym_eigen(&(&a * a.transpose()));
            let expected: f64 = eig[..2].iter().map(|e| e.max(0.0)).sum();
            assert!(((&l * &a).norm_squared() - expected).abs() < 1e-10);
            // A wide matrix exercises nonzero tails.
            let b = random_matrix(&mut rng, 5, 8);
            let l = rank_k_left_null(&b, 2).unwrap();
            let (eig, _) = linalg::sym_eigen(&(&b * b.transpose()));
            let expected: f64 = eig[..2].iter().sum();
            assert!(((&l * &b).norm_squared() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn row_span_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let s = rank_k_row_span(&a, 1).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-14 && s[(0, 1)].abs() < 1e-14);
        assert!(rank_k_row_span(&a, 3).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = linalg::orthonormalize_columns(&random_matrix(&mut rng, 5, 3)).transpose();
        let s = rank_k_row_span(&o, 3).unwrap();
        // Same row space: projection of o onto span(s) is o.
        let proj = &o * s.transpose() * &s;
        assert!((proj - &o).amax() < 1e-12);
    }

    #[test]
    fn row_span_gives_best_rank_k_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 6, 4);
            let k = 2;
            let s = rank_k_row_span(&a, k).unwrap();
            let err = (&a - &a * s.transpose() * &s).norm_squared();
            // Oracle: Eckart–Young tail from the eigenvalues of AᵀA.
            let (eig, _) = linalg::sym_eigen(&(a.transpose() * &a));
            let tail: f64 = eig[..4 - k].iter().sum();
            assert!((err - tail).abs() < 1e-10);
            // No random rank-2 row space does better.
            for _ in 0..10 {
                let r = linalg::orthonormalize_columns(&random_matrix(&mut rng, 4, k)).transpose();
                let other = (&a - &a * r.transpose() * &r).norm_squared();
                assert!(other >= err - 1e-10);
            }
        }
    }

    #[test]
    fn two_dimensional_example_with_sum() {
        let quadrics = vec![
            QuadraticForm::new(2, vec![1.0, 2.0, 0.0]).unwrap(),
            QuadraticForm::new(2, vec![0.0, 1.0, 2.0]).unwrap(),
            QuadraticForm::new(2, vec![1.0, 3.0, 2.0]).unwrap(),
        ];
        let est = approx_generators(&quadrics, 1).unwrap();
        let l = est.generators[0].coeffs();
        assert!((l[0] * 2.0 - l[1]).abs() < 1e-12);
        let truth = DMatrix::from_column_slice(2, 1, &[2.0, -1.0]) / 5f64.sqrt();
        assert!(principal_angle(&est.basis, &truth).unwrap() < 1e-12);
    }

    #[test]
    fn matches_exact_on_exact_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in 2..=8 {
            for d in 1..dim {
                for _ in 0..3 {
                    let basis = linalg::orthonormalize_columns(&random_matrix(&mut rng, dim, d));
                    let count = triangular(dim) - triangular(d) + (d % 3);
                    let qs = vanishing_quadrics(&mut rng, &basis, count);
                    let a = approx_generators(&qs, d).unwrap();
                    let e = exact_generators(&qs, d).unwrap();
                    assert!(principal_angle(&a.basis, &e.basis).unwrap() < 1e-8, "D={dim} d={d}");
                    let g = a.generator_matrix();
                    let gg = &g * g.transpose();
                    assert!((gg - DMatrix::identity(dim - d, dim - d)).amax() < 1e-10);
                    assert!((&g * &a.basis).amax() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let basis = linalg::orthonormalize_columns(&random_matrix(&mut rng, 5, 2));
        let qs = vanishing_quadrics(&mut rng, &basis, 12);
        let a = approx_generators(&qs, 2).unwrap();
        let b = approx_generators(&qs, 2).unwrap();
        assert_eq!(a.generator_matrix(), b.generator_matrix());
    }

    #[test]
    fn estimate_without_linears_matches_quadrics_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let basis = linalg::orthonormalize_columns(&random_matrix(&mut rng, 4, 2));
        let qs = vanishing_quadrics(&mut rng, &basis, 9);
        let sys = PolynomialSystem {
            dim: 4,
            quadrics: qs.clone(),
            linears: vec![],
        };
        let a = estimate(&sys, 2).unwrap();
        let b = approx_generators(&qs, 2).unwrap();
        assert_eq!(a.generator_matrix(), b.generator_matrix());
    }

    #[test]
    fn estimate_with_enough_linears_uses_them() {
        let sys = PolynomialSystem {
            dim: 3,
            quadrics: vec![],
            linears: vec![
                LinearForm::new(vec![1.0, 0.0, 0.0]),
                LinearForm::new(vec![0.0, 2.0, 0.0]),
            ],
        };
        let est = estimate(&sys, 1).unwrap();
        let truth = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        assert!(principal_angle(&est.basis, &truth).unwrap() < 1e-12);
    }

    #[test]
    fn estimate_with_partial_linears() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (dim, d) = (6, 2);
        let basis = linalg::orthonormalize_columns(&random_matrix(&mut rng, dim, d));
        let ann = linalg::null_space_basis(&basis.transpose(), dim - d).unwrap();
        let linears = vec![LinearForm::new(ann.column(0).iter().copied().collect())];
        let qs = vanishing_quadrics(&mut rng, &basis, triangular(5) - triangular(2) + 1);
        let est = estimate(&PolynomialSystem { dim, quadrics: qs, linears }, d).unwrap();
        assert!(principal_angle(&est.basis, &basis).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_non_finite() {
        let qs = vec![
            QuadraticForm::new(2, vec![f64::NAN, 2.0, 0.0]).unwrap(),
            QuadraticForm::new(2, vec![0.0, 1.0, 2.0]).unwrap(),
        ];
        assert!(matches!(approx_generators(&qs, 1), Err(Error::NonFinite)));
    }
}
