//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Thin SVD with singular values sorted in descending order.
pub struct SortedSvd {
    /// `rows x p` left singular vectors, `p = min(rows, cols)`.
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// `p x cols` right singular vectors as rows.
    pub v_t: DMatrix<f64>,
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)])
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    // Single-threaded factorizations keep results independent of the host.
    faer::set_global_parallelism(faer::Par::Seq);
    Ok(())
}

fn factor(a: &DMatrix<f64>, thin: bool) -> Result<SortedSvd> {
    check_finite(a)?;
    let p = a.nrows().min(a.ncols());
    if p == 0 {
        let u_cols = if thin { 0 } else { a.nrows() };
        return Ok(SortedSvd {
            u: DMatrix::identity(a.nrows(), u_cols),
            singular_values: Vec::new(),
            v_t: DMatrix::zeros(0, a.ncols()),
        });
    }
    let m = to_faer(a);
    let svd = if thin { m.thin_svd() } else { m.svd() }.map_err(|_| Error::SvdFailed)?;
    let singular_values = (0..p).map(|k| svd.S()[k]).collect();
    let v = svd.V();
    Ok(SortedSvd {
        u: from_faer(svd.U()),
        singular_values,
        v_t: DMatrix::from_fn(p, a.ncols(), |r, c| v[(c, r)]),
    })
}

pub fn svd(a: &DMatrix<f64>) -> Result<SortedSvd> {
    factor(a, true)
}

/// Singular values only, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(a)?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    to_faer(a).singular_values().map_err(|_| Error::SvdFailed)
}

/// All `rows(a)` left singular vectors as columns, ordered by descending
/// singular value; vectors beyond `min(rows, cols)` have singular value zero.
pub fn full_left_singular(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let s = factor(a, false)?;
    let mut sigma = s.singular_values;
    sigma.resize(a.nrows(), 0.0);
    Ok((s.u, sigma))
}

/// Orthonormal basis (as columns) of the null space of the row space of `rows`,
/// taking the `dim` right singular directions with the smallest singular values.
pub fn null_space_basis(rows: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    let n = rows.ncols();
    let (v, _) = full_left_singular(&rows.transpose())?;
    Ok(v.columns(n - dim, dim).into_owned())
}

/// Orthonormalize the columns of a full-column-rank matrix.
pub fn orthonormalize_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Symmetric eigendecomposition with eigenvalues ascending.
pub fn sym_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Apply `f` to the eigenvalues of a symmetric matrix.
pub fn sym_fn(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(a);
    let diag = DVector::from_iterator(values.len(), values.into_iter().map(f));
    &vectors * DMatrix::from_diagonal(&diag) * vectors.transpose()
}

/// Flip the sign of a vector so that its largest-magnitude entry is positive.
pub fn orient_largest_positive(v: &mut [f64]) {
    let Some((_, &pivot)) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    else {
        return;
    };
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Largest absolute deviation of `a^T a` from the identity.
pub fn gram_deviation(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    let n = g.nrows();
    (g - DMatrix::<f64>::identity(n, n)).amax()
}
