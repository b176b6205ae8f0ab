//! Exact recovery of the linear generators of the vanishing ideal from
//! quadrics that span its degree-two part.
//!
//! For a variable ordering the quadric coefficient matrix is reduced with its
//! columns ordered lexicographically after relabeling the variables. The last
//! nonzero row is then `T_last · ℓ` for a linear form `ℓ` vanishing on the
//! subspace, where `T_last` is the variable the relabeled order ranks last.
//! Every cyclic shift of the labels and of their reversal is tried, and the
//! `D - d` best separated independent generators are kept.

use nalgebra::DMatrix;

use crate::cumulants::PolynomialSystem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::polyspace::{
    column_order, divide_by_var, gram_to_quadratic, quadratic_to_gram, triangular, CoefficientMatrix,
    LinearForm, MonomialOrdering, QuadraticForm,
};
use crate::subspace::{normalize_form, SubspaceEstimate};

/// Rows with norm at most this fraction of the largest row are zero.
pub const ROW_TOL: f64 = 1e-10;
/// Largest division residual accepted as exact divisibility.
pub const DIVISION_TOL: f64 = 1e-6;
/// Relative singular-value cutoff for the rank of the linear block.
pub const LINEAR_RANK_TOL: f64 = 1e-10;

/// Row echelon form by Gaussian elimination with partial pivoting.
///
/// Columns whose remaining entries are all below `pivot_tol` are skipped.
/// Returns the reduced matrix and the pivot column of each leading row.
pub fn row_echelon(mut a: DMatrix<f64>, pivot_tol: f64) -> (DMatrix<f64>, Vec<usize>) {
    let (rows, cols) = a.shape();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, value) = (r..rows)
            .map(|i| (i, a[(i, c)].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("nonempty range");
        if value <= pivot_tol {
            for i in r..rows {
                a[(i, c)] = 0.0;
            }
            continue;
        }
        a.swap_rows(r, best);
        let pivot = a[(r, c)];
        for i in r + 1..rows {
            let factor = a[(i, c)] / pivot;
            if factor != 0.0 {
                for j in c + 1..cols {
                    let delta = factor * a[(r, j)];
                    a[(i, j)] -= delta;
                }
            }
            a[(i, c)] = 0.0;
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

/// Outcome of eliminating one ordered coefficient matrix.
#[derive(Debug, Clone)]
pub struct EliminationRow {
    /// The last nonzero echelon row, as a quadric in canonical storage.
    pub row: QuadraticForm,
    /// Number of rows above the zero threshold.
    pub rank: usize,
    /// Separation of the row from the rest of the row space: the second
    /// smallest singular value of the leading-column block, or of the first
    /// `rank - 1` columns when that is smaller. Small values mean the row is
    /// poorly determined by the data.
    pub separation: f64,
    /// First column of the row under its ordering.
    pub lead: usize,
}

/// Orthonormal basis of the row space of the row-normalized quadrics, in
/// canonical monomial order. Column orderings only permute its columns.
#[derive(Debug, Clone)]
pub struct RowSpace {
    pub dim: usize,
    /// `rank x Δ(D)`, orthonormal rows.
    pub basis: DMatrix<f64>,
}

impl RowSpace {
    pub fn new(quadrics: &[QuadraticForm], dim: usize) -> Result<Self> {
        let normalized: Vec<QuadraticForm> = quadrics
            .iter()
            .map(|q| {
                let n = q.norm();
                if n > 0.0 {
                    QuadraticForm::new(dim, q.coeffs().iter().map(|c| c / n).collect())
                } else {
                    Ok(q.clone())
                }
            })
            .collect::<Result<_>>()?;
        let cm = CoefficientMatrix::from_quadrics(&normalized, &MonomialOrdering::identity(dim))?;
        if cm.entries.amax() == 0.0 {
            return Err(Error::RankMismatch {
                expected: 1,
                found: 0,
            });
        }
        let s = linalg::svd(&cm.entries)?;
        let rank = s
            .singular_values
            .iter()
            .filter(|&&v| v > ROW_TOL * s.singular_values[0])
            .count();
        // Identity-ordered columns are not canonical; move them into place.
        let columns = cm.columns.expect("quadric columns");
        let mut basis = DMatrix::zeros(rank, triangular(dim));
        for (j, m) in columns.iter().enumerate() {
            basis.set_column(m.canonical_index(dim), &s.v_t.rows(0, rank).column(j));
        }
        Ok(RowSpace { dim, basis })
    }

    pub fn rank(&self) -> usize {
        self.basis.nrows()
    }

    /// Last echelon row with columns ordered by `ordering`. `lead_hint` is a
    /// likely first nonzero column, such as the one found for another ordering.
    pub fn last_row(&self, ordering: &MonomialOrdering, lead_hint: Option<usize>) -> Result<EliminationRow> {
        let dim = self.dim;
        if ordering.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: ordering.dim(),
            });
        }
        let columns = column_order(ordering);
        let basis = DMatrix::from_fn(self.rank(), columns.len(), |r, j| {
            self.basis[(r, columns[j].canonical_index(dim))]
        });
        let (lead, weights, separation) = trailing_combination(&basis, lead_hint)?;
        let mut row = weights.transpose() * &basis;
        for c in 0..lead {
            row[(0, c)] = 0.0;
        }
        let reduced = CoefficientMatrix {
            entries: row,
            columns: Some(columns),
        };
        Ok(EliminationRow {
            row: reduced.row_quadric(0, dim),
            rank: self.rank(),
            separation,
            lead,
        })
    }
}

/// Echelon form of the (row-normalized) quadrics under `ordering`, returning
/// the last nonzero row.
pub fn last_nonzero_row(quadrics: &[QuadraticForm], ordering: &MonomialOrdering) -> Result<EliminationRow> {
    RowSpace::new(quadrics, ordering.dim())?.last_row(ordering, None)
}

/// Singular values below this (the rows of the basis are orthonormal) mark a
/// combination that vanishes on the leading columns.
const LEAD_TOL: f64 = 1e-9;

/// For row-orthonormal `basis` (`r x n`), finds the largest `c` for which some
/// combination of the rows vanishes on columns `0..c`, and that combination.
///
/// This is the last row of the echelon form, obtained from orthogonal
/// factorizations instead of pivoted elimination: a nearly vanishing pivot
/// cannot be mistaken for a leading entry.
fn trailing_combination(basis: &DMatrix<f64>, hint: Option<usize>) -> Result<(usize, DMatrix<f64>, f64)> {
    let (r, n) = basis.shape();
    let vanishes_at = |c: usize| -> Result<bool> {
        let sigma = linalg::singular_values(&basis.columns(0, c).into_owned())?;
        Ok(sigma.get(r - 1).copied().unwrap_or(0.0) <= LEAD_TOL)
    };
    // Columns 0..r-1 always admit a vanishing combination; all n never do.
    let (mut lo, mut hi) = (r - 1, n);
    if let Some(c) = hint.filter(|&c| c >= lo && c < hi) {
        if vanishes_at(c)? {
            lo = c;
            if !vanishes_at(c + 1)? {
                hi = c + 1;
            }
        } else {
            hi = c;
        }
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if vanishes_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (u, sigma) = linalg::full_left_singular(&basis.columns(0, lo).into_owned())?;
    if sigma[r - 1] > LEAD_TOL {
        let mut w = DMatrix::zeros(r, 1);
        w[(r - 1, 0)] = 1.0;
        return Ok((lo, w, 0.0));
    }
    let mut separation = if r >= 2 { sigma[r - 2] } else { 1.0 };
    if lo > r - 1 && r >= 2 {
        // A lead past `r - 1` means more than one combination nearly vanishes
        // on the first `r - 1` columns, so the choice among them is unstable.
        let early = linalg::singular_values(&basis.columns(0, r - 1).into_owned())?;
        separation = separation.min(early[r - 2]);
    }
    Ok((lo, u.columns(r - 1, 1).into_owned(), separation))
}

const INDEPENDENCE_TOL: f64 = 1e-3;
const INDEPENDENCE_FLOOR: f64 = 1e-8;

/// Cyclic shifts of the identity and of the reversed labeling.
fn candidate_orderings(dim: usize) -> Result<Vec<MonomialOrdering>> {
    let mut out: Vec<MonomialOrdering> = (1..=dim).map(|k| MonomialOrdering::cyclic_power(dim, k)).collect();
    for k in 0..dim {
        out.push(MonomialOrdering::new((0..dim).map(|v| (dim + k - v) % dim).collect())?);
    }
    Ok(out)
}

fn smallest_singular(rows: &[Vec<f64>], dim: usize) -> Result<f64> {
    let m = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]);
    let s = linalg::singular_values(&m)?;
    Ok(s.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Recovers `D - d` linear generators of the vanishing ideal of the
/// `d`-dimensional subspace on which all `quadrics` vanish.
///
/// Requires at least `Δ(D) - Δ(d)` quadrics in generic position. Errors with
/// [`Error::RankMismatch`] or [`Error::NotDivisible`] when the input is not
/// exact; use the approximate estimator for noisy input.
pub fn exact_generators(quadrics: &[QuadraticForm], d: usize) -> Result<SubspaceEstimate> {
    let dim = quadrics
        .first()
        .ok_or(Error::TooFewQuadrics {
            found: 0,
            required: 1,
        })?
        .dim();
    if d == 0 || d >= dim {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {d} must satisfy 0 < d < {dim}"
        )));
    }
    if let Some(q) = quadrics.iter().find(|q| q.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: q.dim(),
        });
    }
    let required = triangular(dim) - triangular(d);
    if quadrics.len() < required {
        return Err(Error::TooFewQuadrics {
            found: quadrics.len(),
            required,
        });
    }
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::with_capacity(2 * dim);
    let mut worst_residual = 0.0f64;
    let space = RowSpace::new(quadrics, dim)?;
    if space.rank() != required {
        return Err(Error::RankMismatch {
            expected: required,
            found: space.rank(),
        });
    }
    let mut hint = None;
    for ordering in candidate_orderings(dim)? {
        let elim = space.last_row(&ordering, hint)?;
        hint = Some(elim.lead);
        let (quotient, residual) = divide_by_var(&elim.row, ordering.last_var())?;
        if residual > DIVISION_TOL {
            worst_residual = worst_residual.max(residual);
            continue;
        }
        let mut c = quotient.into_coeffs();
        normalize_form(&mut c);
        candidates.push((elim.separation, c));
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut picked: Vec<Vec<f64>> = Vec::with_capacity(dim - d);
    let mut used = vec![false; candidates.len()];
    for tol in [INDEPENDENCE_TOL, INDEPENDENCE_FLOOR] {
        for (i, (_, c)) in candidates.iter().enumerate() {
            if picked.len() == dim - d {
                break;
            }
            if used[i] {
                continue;
            }
            picked.push(c.clone());
            if smallest_singular(&picked, dim)? > tol {
                used[i] = true;
            } else {
                picked.pop();
            }
        }
    }
    if picked.len() < dim - d {
        return Err(Error::NotDivisible {
            residual: worst_residual,
            tolerance: DIVISION_TOL,
        });
    }
    let generators = picked.into_iter().map(LinearForm::new).collect();
    SubspaceEstimate::from_generators(dim, generators, d)
}

/// `(Δ(D) - Δ(d))^2 · Δ(D)`, the elimination operation count.
pub fn complexity_estimate(dim: usize, d: usize) -> u64 {
    let r = (triangular(dim) - triangular(d.min(dim))) as u64;
    r * r * triangular(dim) as u64
}

/// Result of substituting out the variables fixed by linear constraints.
#[derive(Debug, Clone)]
pub struct EliminationRecord {
    pub dim: usize,
    /// Variables that remain, in increasing order.
    pub kept_vars: Vec<usize>,
    /// `D x (D - r)`: maps reduced coordinates to the point of `R^D` on which
    /// every linear constraint vanishes.
    pub embedding: DMatrix<f64>,
    /// The `r` independent linear constraints in reduced echelon form,
    /// normalized; these are generators of the final answer.
    pub linear_generators: Vec<LinearForm>,
}

impl EliminationRecord {
    pub fn rank(&self) -> usize {
        self.linear_generators.len()
    }

    /// Lifts a form in the kept variables to `R^D` (zero on eliminated ones).
    pub fn lift(&self, reduced: &LinearForm) -> LinearForm {
        let mut c = vec![0.0; self.dim];
        for (&v, &x) in self.kept_vars.iter().zip(reduced.coeffs()) {
            c[v] = x;
        }
        LinearForm::new(c)
    }

    /// Restriction of a quadric to the constraint set, in the kept variables.
    pub fn restrict(&self, q: &QuadraticForm) -> Result<QuadraticForm> {
        let g = quadratic_to_gram(q);
        gram_to_quadratic(&(self.embedding.transpose() * g * &self.embedding))
    }
}

/// Removes the variables determined by the system's linear forms.
pub fn eliminate_linears(system: &PolynomialSystem) -> Result<(Vec<QuadraticForm>, EliminationRecord)> {
    let dim = system.dim;
    let f = CoefficientMatrix::from_linears(&system.linears, dim)?.entries;
    let rank = if f.nrows() == 0 {
        0
    } else {
        let s = linalg::singular_values(&f)?;
        let top = s.first().copied().unwrap_or(0.0);
        s.iter().filter(|&&x| x > LINEAR_RANK_TOL * top).count()
    };

    // Reduced echelon form with complete pivoting over `rank` steps.
    let mut a = f;
    let mut pivot_cols = Vec::with_capacity(rank);
    for step in 0..rank {
        let mut best = (step, 0, -1.0);
        for i in step..a.nrows() {
            for j in 0..dim {
                if pivot_cols.contains(&j) {
                    continue;
                }
                if a[(i, j)].abs() > best.2 {
                    best = (i, j, a[(i, j)].abs());
                }
            }
        }
        let (pr, pc, _) = best;
        a.swap_rows(step, pr);
        let pivot = a[(step, pc)];
        for j in 0..dim {
            a[(step, j)] /= pivot;
        }
        for i in 0..a.nrows() {
            if i != step {
                let factor = a[(i, pc)];
                if factor != 0.0 {
                    for j in 0..dim {
                        let delta = factor * a[(step, j)];
                        a[(i, j)] -= delta;
                    }
                }
            }
        }
        pivot_cols.push(pc);
    }

    let kept_vars: Vec<usize> = (0..dim).filter(|v| !pivot_cols.contains(v)).collect();
    let mut embedding = DMatrix::zeros(dim, kept_vars.len());
    for (c, &k) in kept_vars.iter().enumerate() {
        embedding[(k, c)] = 1.0;
        for (step, &p) in pivot_cols.iter().enumerate() {
            embedding[(p, c)] = -a[(step, k)];
        }
    }
    let linear_generators = (0..rank)
        .map(|step| {
            let mut c: Vec<f64> = a.row(step).iter().copied().collect();
            for &p in &pivot_cols {
                if p != pivot_cols[step] {
                    c[p] = 0.0;
                }
            }
            normalize_form(&mut c);
            LinearForm::new(c)
        })
        .collect();
    let record = EliminationRecord {
        dim,
        kept_vars,
        embedding,
        linear_generators,
    };
    let reduced = system
        .quadrics
        .iter()
        .map(|q| record.restrict(q))
        .collect::<Result<_>>()?;
    Ok((reduced, record))
}

/// Exact pipeline on a full polynomial system: eliminate the linear forms,
/// run the exact algorithm on the restricted quadrics, and lift back.
pub fn exact_estimate(system: &PolynomialSystem, d: usize) -> Result<SubspaceEstimate> {
    let dim = system.dim;
    if d == 0 || d >= dim {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {d} must satisfy 0 < d < {dim}"
        )));
    }
    let (reduced, record) = eliminate_linears(system)?;
    let r = record.rank();
    if r > dim - d {
        return Err(Error::DimensionConflict { rank: r, max: dim - d });
    }
    let mut generators = record.linear_generators.clone();
    if r < dim - d {
        let inner = exact_generators(&reduced, d)?;
        generators.extend(inner.generators.iter().map(|l| {
            let mut c = record.lift(l).into_coeffs();
            normalize_form(&mut c);
            LinearForm::new(c)
        }));
    }
    SubspaceEstimate::from_generators(dim, generators, d)
}
