//! Thin helpers over faer for the dense Hermitian work done everywhere else.

use faer::{Mat, MatRef, Side};

pub use faer::c64;

pub type CMat = Mat<c64>;
pub type RMat = Mat<f64>;

use crate::error::{NahmError, Result};

pub fn cz() -> c64 {
    c64::new(0.0, 0.0)
}

pub fn cr(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn ci(x: f64) -> c64 {
    c64::new(0.0, x)
}

pub fn adjoint(m: MatRef<'_, c64>) -> CMat {
    m.adjoint().to_owned()
}

pub fn to_complex(m: MatRef<'_, f64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| cr(m[(i, j)]))
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { cr(1.0) } else { cz() })
}

/// Kronecker product a ⊗ b.
pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn frobenius(m: MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Largest |entry| of a − b.
pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    let mut d: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            d = d.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    d
}

/// Copy with the Hermitian part only, to kill rounding asymmetry before an eigensolve.
pub fn hermitian_part(m: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Ascending eigenvalues and eigenvectors of a Hermitian matrix.
pub fn eigh(m: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    if m.nrows() == 0 {
        return Ok((vec![], Mat::zeros(0, 0)));
    }
    let h = hermitian_part(m);
    let e = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| NahmError::Numerical(format!("eigensolver: {e:?}")))?;
    let vals = e.S().column_vector().iter().map(|x| x.re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn eigvalsh(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 {
        return Ok(vec![]);
    }
    let h = hermitian_part(m);
    h.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| NahmError::Numerical(format!("eigensolver: {e:?}")))
}

/// Ascending eigenpairs of a real symmetric matrix.
pub fn eigh_real(m: MatRef<'_, f64>) -> Result<(Vec<f64>, RMat)> {
    if m.nrows() == 0 {
        return Ok((vec![], Mat::zeros(0, 0)));
    }
    let h = Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let e = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| NahmError::Numerical(format!("eigensolver: {e:?}")))?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

/// Full SVD `m = U diag(s) V†`, singular values descending.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(m: MatRef<'_, c64>) -> Result<Svd> {
    let d = m
        .svd()
        .map_err(|e| NahmError::Numerical(format!("svd: {e:?}")))?;
    let k = m.nrows().min(m.ncols());
    let s = (0..k).map(|i| d.S().column_vector()[i].re).collect();
    Ok(Svd { u: d.U().to_owned(), s, v: d.V().to_owned() })
}

pub fn singular_values(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(vec![]);
    }
    m.singular_values()
        .map_err(|e| NahmError::Numerical(format!("svd: {e:?}")))
}

pub fn op_norm(m: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Solve a Hermitian positive definite system; falls back to LU if Cholesky refuses.
pub fn solve_hpd(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<CMat> {
    use faer::linalg::solvers::Solve;
    let h = hermitian_part(a);
    match h.llt(Side::Lower) {
        Ok(f) => Ok(f.solve(b)),
        Err(_) => Err(NahmError::SingularSolve("stiffness is not positive definite".into())),
    }
}

/// Matrix square root inverse of a Hermitian positive matrix.
pub fn inv_sqrt_h(m: MatRef<'_, c64>) -> Result<CMat> {
    let (w, u) = eigh(m)?;
    let n = w.len();
    let mut scaled = u.clone();
    for j in 0..n {
        if w[j] <= 0.0 {
            return Err(NahmError::Numerical("inverse square root of a non-positive matrix".into()));
        }
        let f = 1.0 / w[j].sqrt();
        for i in 0..n {
            scaled[(i, j)] *= f;
        }
    }
    Ok(&scaled * u.adjoint())
}

/// Columns `cols` of `m`.
pub fn select_cols(m: MatRef<'_, c64>, cols: &[usize]) -> CMat {
    Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Sum of values by pairwise halving, so the result does not depend on how the
/// values were produced.
pub fn pairwise_sum(v: &[c64]) -> c64 {
    match v.len() {
        0 => cz(),
        1 => v[0],
        n => {
            let h = n / 2;
            pairwise_sum(&v[..h]) + pairwise_sum(&v[h..])
        }
    }
}

pub fn pairwise_sum_real(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => {
            let h = n / 2;
            pairwise_sum_real(&v[..h]) + pairwise_sum_real(&v[h..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_shapes_and_entries() {
        let a = Mat::from_fn(2, 1, |i, _| cr(i as f64 + 1.0));
        let b = Mat::from_fn(1, 2, |_, j| ci(j as f64 + 1.0));
        let k = kron(a.as_ref(), b.as_ref());
        assert_eq!((k.nrows(), k.ncols()), (2, 2));
        assert_eq!(k[(1, 1)], ci(4.0));
    }

    #[test]
    fn eigh_sorted() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { cr(3.0 - i as f64) } else { cz() });
        let (w, _) = eigh(m.as_ref()).unwrap();
        assert_eq!(w, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pairwise_sum_matches_plain_sum_on_integers() {
        let v: Vec<f64> = (0..1001).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum_real(&v), 500500.0);
    }
}
