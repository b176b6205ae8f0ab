//! Homogeneous linear and quadratic forms in coefficient space.
//!
//! Variables are indexed from zero. A quadratic form in `D` variables is
//! stored as `Δ(D) = D(D+1)/2` coefficients over the monomials `T_i T_j`
//! (`i <= j`) in canonical order `(0,0), (0,1), …, (0,D-1), (1,1), …, (D-1,D-1)`.
//! The coefficient of a mixed monomial `T_i T_j` is the *summed* Gram entry
//! `A_ij + A_ji`, so `T_1^2 + 5 T_1 T_2 + 4 T_2^2` corresponds to the Gram
//! matrix `[[1, 2.5], [2.5, 4]]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The `n`-th triangular number `n(n+1)/2`, the number of quadratic monomials
/// in `n` variables.
pub const fn triangular(n: usize) -> usize {
    n * (n + 1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial2 {
    pub i: usize,
    pub j: usize,
}

impl Monomial2 {
    /// Builds `T_a T_b`, swapping the indices if needed so that `i <= j`.
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Monomial2 { i: a, j: b }
        } else {
            Monomial2 { i: b, j: a }
        }
    }

    pub fn contains(&self, var: usize) -> bool {
        self.i == var || self.j == var
    }

    /// Position in the canonical storage order for `dim` variables.
    pub fn canonical_index(&self, dim: usize) -> usize {
        debug_assert!(self.i <= self.j && self.j < dim);
        // Row `i` of the upper triangle starts after `i*dim - i(i-1)/2` entries.
        self.i * dim - self.i * self.i.saturating_sub(1) / 2 + (self.j - self.i)
    }

    /// The variable other than `var` in this monomial (`var` itself for a square).
    pub fn cofactor(&self, var: usize) -> Option<usize> {
        if self.i == var {
            Some(self.j)
        } else if self.j == var {
            Some(self.i)
        } else {
            None
        }
    }
}

/// All monomials of `dim` variables in canonical order.
pub fn canonical_monomials(dim: usize) -> Vec<Monomial2> {
    (0..dim)
        .flat_map(|i| (i..dim).map(move |j| Monomial2 { i, j }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    dim: usize,
    coeffs: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != triangular(dim) {
            return Err(Error::DimensionMismatch {
                expected: triangular(dim),
                found: coeffs.len(),
            });
        }
        Ok(QuadraticForm { dim, coeffs })
    }

    pub fn zeros(dim: usize) -> Self {
        QuadraticForm {
            dim,
            coeffs: vec![0.0; triangular(dim)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, m: Monomial2) -> f64 {
        self.coeffs[m.canonical_index(self.dim)]
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForm {
    coeffs: Vec<f64>,
}

impl LinearForm {
    pub fn new(coeffs: Vec<f64>) -> Self {
        LinearForm { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Relabeling of the variables used to order monomial columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialOrdering {
    perm: Vec<usize>,
}

impl MonomialOrdering {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidArgument(format!(
                    "{perm:?} is not a permutation of 0..{}",
                    perm.len()
                )));
            }
            seen[p] = true;
        }
        Ok(MonomialOrdering { perm })
    }

    pub fn identity(dim: usize) -> Self {
        MonomialOrdering {
            perm: (0..dim).collect(),
        }
    }

    /// The `k`-th power of the cyclic permutation `v -> v + 1 (mod dim)`.
    pub fn cyclic_power(dim: usize, k: usize) -> Self {
        MonomialOrdering {
            perm: (0..dim).map(|v| (v + k) % dim).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// The variable ranked last by this ordering.
    pub fn last_var(&self) -> usize {
        *self.perm.last().expect("ordering over zero variables")
    }
}

/// Monomials sorted in descending order under `ordering`: the block of
/// `perm[0]` first (`perm[0]^2, perm[0] perm[1], …`), ending with `perm[D-1]^2`.
pub fn column_order(ordering: &MonomialOrdering) -> Vec<Monomial2> {
    let p = ordering.perm();
    (0..p.len())
        .flat_map(|a| (a..p.len()).map(move |b| Monomial2::new(p[a], p[b])))
        .collect()
}

/// Dense coefficient matrix: one row per polynomial, one column per monomial.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    pub entries: DMatrix<f64>,
    /// Monomial of each column; `None` for linear forms (column `k` is `T_k`).
    pub columns: Option<Vec<Monomial2>>,
}

impl CoefficientMatrix {
    pub fn from_quadrics(quadrics: &[QuadraticForm], ordering: &MonomialOrdering) -> Result<Self> {
        let dim = ordering.dim();
        for q in quadrics {
            if q.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: q.dim(),
                });
            }
        }
        let columns = column_order(ordering);
        let index: Vec<usize> = columns.iter().map(|m| m.canonical_index(dim)).collect();
        let entries = DMatrix::from_fn(quadrics.len(), columns.len(), |r, c| {
            quadrics[r].coeffs[index[c]]
        });
        Ok(CoefficientMatrix {
            entries,
            columns: Some(columns),
        })
    }

    pub fn from_linears(linears: &[LinearForm], dim: usize) -> Result<Self> {
        for l in linears {
            if l.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: l.dim(),
                });
            }
        }
        let entries = DMatrix::from_fn(linears.len(), dim, |r, c| linears[r].coeffs[c]);
        Ok(CoefficientMatrix {
            entries,
            columns: None,
        })
    }

    /// Reads row `r` back as a quadratic form (quadratic matrices only).
    pub fn row_quadric(&self, r: usize, dim: usize) -> QuadraticForm {
        let columns = self.columns.as_ref().expect("not a quadratic coefficient matrix");
        let mut q = QuadraticForm::zeros(dim);
        for (c, m) in columns.iter().enumerate() {
            q.coeffs[m.canonical_index(dim)] = self.entries[(r, c)];
        }
        q
    }
}

/// Quadratic form `v ↦ vᵀ A v`. Non-symmetric input is accepted; the mixed
/// coefficient is `A_ij + A_ji`.
pub fn gram_to_quadratic(a: &DMatrix<f64>) -> Result<QuadraticForm> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let dim = a.nrows();
    let coeffs = canonical_monomials(dim)
        .into_iter()
        .map(|Monomial2 { i, j }| {
            if i == j {
                a[(i, i)]
            } else {
                a[(i, j)] + a[(j, i)]
            }
        })
        .collect();
    Ok(QuadraticForm { dim, coeffs })
}

pub fn quadratic_to_gram(q: &QuadraticForm) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(q.dim, q.dim);
    for (m, &c) in canonical_monomials(q.dim).iter().zip(&q.coeffs) {
        if m.i == m.j {
            a[(m.i, m.i)] = c;
        } else {
            a[(m.i, m.j)] = 0.5 * c;
            a[(m.j, m.i)] = 0.5 * c;
        }
    }
    a
}

pub fn evaluate_quadratic(q: &QuadraticForm, v: &[f64]) -> Result<f64> {
    if v.len() != q.dim {
        return Err(Error::DimensionMismatch {
            expected: q.dim,
            found: v.len(),
        });
    }
    Ok(canonical_monomials(q.dim)
        .iter()
        .zip(&q.coeffs)
        .map(|(m, c)| c * v[m.i] * v[m.j])
        .sum())
}

pub fn evaluate_linear(l: &LinearForm, v: &[f64]) -> Result<f64> {
    if v.len() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            found: v.len(),
        });
    }
    Ok(l.coeffs.iter().zip(v).map(|(c, x)| c * x).sum())
}

/// `T_var · ℓ` as a quadratic form.
pub fn multiply_var(l: &LinearForm, var: usize) -> Result<QuadraticForm> {
    let dim = l.dim();
    if var >= dim {
        return Err(Error::InvalidArgument(format!(
            "variable {var} out of range for {dim} variables"
        )));
    }
    let mut q = QuadraticForm::zeros(dim);
    for (k, &c) in l.coeffs.iter().enumerate() {
        q.coeffs[Monomial2::new(var, k).canonical_index(dim)] += c;
    }
    Ok(q)
}

/// Divides `q` by `T_var`, returning the quotient and the relative residual
/// (norm of the coefficients on monomials without `T_var`, over `‖q‖`).
/// The residual is zero exactly when `T_var` divides `q`.
pub fn divide_by_var(q: &QuadraticForm, var: usize) -> Result<(LinearForm, f64)> {
    let dim = q.dim;
    if var >= dim {
        return Err(Error::InvalidArgument(format!(
            "variable {var} out of range for {dim} variables"
        )));
    }
    let norm = q.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("cannot divide the zero form".into()));
    }
    let mut quotient = vec![0.0; dim];
    let mut rest = 0.0;
    for (m, &c) in canonical_monomials(dim).iter().zip(&q.coeffs) {
        match m.cofactor(var) {
            Some(k) => quotient[k] = c,
            None => rest += c * c,
        }
    }
    Ok((LinearForm::new(quotient), rest.sqrt() / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn triangular_numbers() {
        assert_eq!(triangular(10), 55);
        assert_eq!(triangular(1), 1);
        assert_eq!(triangular(4), 10);
        assert_eq!(triangular(0), 0);
    }

    #[test]
    fn canonical_index_matches_enumeration() {
        for dim in 1..=9 {
            for (k, m) in canonical_monomials(dim).iter().enumerate() {
                assert_eq!(m.canonical_index(dim), k, "dim {dim} monomial {m:?}");
            }
        }
    }

    #[test]
    fn gram_embedding_sums_off_diagonal() {
        let q = gram_to_quadratic(&m2(2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(q.coeffs(), &[1.0, 5.0, 4.0]);
        let q = gram_to_quadratic(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(q.coeffs(), &[1.0, 0.0, 1.0]);
        let q = gram_to_quadratic(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(q.coeffs(), &[0.0; 6]);
        assert!(matches!(
            gram_to_quadratic(&DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn gram_reconstruction_halves_mixed_terms() {
        let q = QuadraticForm::new(2, vec![1.0, 5.0, 4.0]).unwrap();
        assert_eq!(quadratic_to_gram(&q), m2(2, &[1.0, 2.5, 2.5, 4.0]));
        let q = QuadraticForm::new(2, vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(quadratic_to_gram(&q), DMatrix::identity(2, 2));
    }

    #[test]
    fn evaluation_examples() {
        let q = QuadraticForm::new(2, vec![1.0, 5.0, 4.0]).unwrap();
        assert_eq!(evaluate_quadratic(&q, &[1.0, 1.0]).unwrap(), 10.0);
        assert_eq!(evaluate_quadratic(&q, &[0.0, 0.0]).unwrap(), 0.0);
        let l = LinearForm::new(vec![1.0, 2.0]);
        assert_eq!(evaluate_linear(&l, &[2.0, -1.0]).unwrap(), 0.0);
        assert!(evaluate_linear(&l, &[1.0]).is_err());
        assert!(evaluate_quadratic(&q, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn column_order_examples() {
        let id2 = column_order(&MonomialOrdering::identity(2));
        assert_eq!(id2, vec![Monomial2::new(0, 0), Monomial2::new(0, 1), Monomial2::new(1, 1)]);
        let swap = column_order(&MonomialOrdering::new(vec![1, 0]).unwrap());
        assert_eq!(swap, vec![Monomial2::new(1, 1), Monomial2::new(0, 1), Monomial2::new(0, 0)]);
        assert_eq!(column_order(&MonomialOrdering::identity(3)), canonical_monomials(3));
        assert!(MonomialOrdering::new(vec![0, 0]).is_err());
        assert!(MonomialOrdering::new(vec![0, 2]).is_err());
    }

    #[test]
    fn cyclic_power_shifts_labels() {
        assert_eq!(MonomialOrdering::cyclic_power(4, 1).perm(), &[1, 2, 3, 0]);
        assert_eq!(MonomialOrdering::cyclic_power(4, 4).perm(), &[0, 1, 2, 3]);
        assert_eq!(MonomialOrdering::cyclic_power(2, 1).last_var(), 0);
    }

    #[test]
    fn multiply_and_divide_examples() {
        let (alpha, beta) = (0.7, -1.3);
        let l = LinearForm::new(vec![alpha, beta]);
        let q = multiply_var(&l, 1).unwrap();
        assert_eq!(q.coeffs(), &[0.0, alpha, beta]);
        let (back, residual) = divide_by_var(&q, 1).unwrap();
        assert_eq!(back.coeffs(), &[alpha, beta]);
        assert_eq!(residual, 0.0);

        let sq = multiply_var(&LinearForm::new(vec![1.0, 0.0, 0.0]), 0).unwrap();
        assert_eq!(sq.coeffs(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let t1sq = QuadraticForm::new(2, vec![1.0, 0.0, 0.0]).unwrap();
        let (quot, residual) = divide_by_var(&t1sq, 1).unwrap();
        assert_eq!(quot.coeffs(), &[0.0, 0.0]);
        assert_eq!(residual, 1.0);

        assert!(divide_by_var(&QuadraticForm::zeros(2), 0).is_err());
        assert!(multiply_var(&l, 2).is_err());
    }

    #[test]
    fn coefficient_matrix_reorders_and_reads_back() {
        let q = QuadraticForm::new(3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let ordering = MonomialOrdering::cyclic_power(3, 1);
        let cm = CoefficientMatrix::from_quadrics(std::slice::from_ref(&q), &ordering).unwrap();
        // perm [1,2,0]: T1², T1T2, T0T1, T2², T0T2, T0²
        assert_eq!(cm.entries.row(0).iter().copied().collect::<Vec<_>>(), vec![4.0, 5.0, 2.0, 6.0, 3.0, 1.0]);
        assert_eq!(cm.row_quadric(0, 3), q);
    }

    #[test]
    fn complement_counts_match_triangular_difference() {
        // Monomials touching at least one of the first D-d labels, under any
        // relabeling, number Δ(D) - Δ(d).
        for dim in 1..=8 {
            for sub in 0..=dim {
                for k in 0..dim {
                    let ordering = MonomialOrdering::cyclic_power(dim, k);
                    let low: Vec<usize> = ordering.perm()[..dim - sub].to_vec();
                    let count = column_order(&ordering)
                        .iter()
                        .filter(|m| low.contains(&m.i) || low.contains(&m.j))
                        .count();
                    assert_eq!(count, triangular(dim) - triangular(sub));
                }
            }
        }
    }

    fn symmetric(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim * dim).prop_map(move |v| {
            let a = DMatrix::from_vec(dim, dim, v);
            (&a + a.transpose()) * 0.5
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

        #[test]
        fn gram_round_trip_is_exact((a, v) in (1usize..7).prop_flat_map(|d| (symmetric(d), prop::collection::vec(-3.0f64..3.0, d)))) {
            let q = gram_to_quadratic(&a).unwrap();
            let back = quadratic_to_gram(&q);
            prop_assert_eq!(&back, &a);
            prop_assert_eq!(gram_to_quadratic(&back).unwrap(), q.clone());
            // Oracle: vᵀAv against monomial expansion.
            let dv = nalgebra::DVector::from_column_slice(&v);
            let direct = (dv.transpose() * &a * &dv)[(0, 0)];
            let poly = evaluate_quadratic(&q, &v).unwrap();
            prop_assert!((direct - poly).abs() <= 1e-12 * (1.0 + direct.abs()));
        }

        #[test]
        fn nonsymmetric_input_is_symmetrized(v in prop::collection::vec(-5.0f64..5.0, 9)) {
            let a = DMatrix::from_vec(3, 3, v);
            let back = quadratic_to_gram(&gram_to_quadratic(&a).unwrap());
            let sym = (&a + a.transpose()) * 0.5;
            prop_assert!((back - sym).amax() < 1e-14);
        }

        #[test]
        fn multiply_then_divide_is_identity(
            (l, var, v) in (1usize..8).prop_flat_map(|d| (
                prop::collection::vec(-4.0f64..4.0, d),
                0..d,
                prop::collection::vec(-2.0f64..2.0, d),
            ))
        ) {
            let l = LinearForm::new(l);
            let q = multiply_var(&l, var).unwrap();
            let lhs = evaluate_quadratic(&q, &v).unwrap();
            let rhs = v[var] * evaluate_linear(&l, &v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            if l.norm() > 0.0 {
                let (back, residual) = divide_by_var(&q, var).unwrap();
                prop_assert_eq!(residual, 0.0);
                prop_assert_eq!(back, l);
            }
        }

        #[test]
        fn column_order_is_a_permutation(perm in (1usize..9).prop_flat_map(|d| Just((0..d).collect::<Vec<_>>()).prop_shuffle())) {
            let dim = perm.len();
            let cols = column_order(&MonomialOrdering::new(perm).unwrap());
            prop_assert_eq!(cols.len(), triangular(dim));
            let mut sorted = cols.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted, canonical_monomials(dim));
        }
    }
}
