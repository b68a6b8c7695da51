//! Tolerance-aware dense linear algebra shared by every other module.
//!
//! Empty shapes (0 rows or 0 columns) are valid everywhere: the inverse of an
//! empty matrix is an empty matrix, products with empty factors are zero
//! matrices of the right shape.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use ndarray_linalg::{EigVals, Eigh, SVD, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Thresholds that turn exact-arithmetic rank statements into decidable ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Singular values at or below `rank_rel * sigma_max` count as zero.
    pub rank_rel: f64,
    /// Absolute threshold for "is zero" comparisons and PSD clamping.
    pub zero_abs: f64,
    /// Half-width of the band around |z| = 1 treated as the unit circle.
    pub unit_circle_eps: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rank_rel: 1e-9, zero_abs: 1e-10, unit_circle_eps: 1e-6 }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rank_rel > 0.0
            && self.rank_rel < 1.0
            && self.zero_abs > 0.0
            && self.unit_circle_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("tolerance out of range: {self:?}")))
        }
    }

    /// Effective singular-value cutoff for a p x q matrix with largest singular value `smax`.
    /// Never tighter than the roundoff floor max(p, q) * eps.
    pub fn sv_cutoff(&self, p: usize, q: usize, smax: f64) -> f64 {
        let floor = p.max(q) as f64 * f64::EPSILON;
        self.rank_rel.max(floor) * smax
    }
}

/// Full singular value decomposition M = U diag(S) V^T with square orthogonal U, V.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vector,
    pub v: Mat,
}

fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

fn first_nonzero_negative(col: nalgebra::DVectorView<'_, f64>) -> bool {
    let scale = col.amax();
    col.iter()
        .find(|x| x.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE))
        .is_some_and(|x| *x < 0.0)
}

// Dense decompositions go through LAPACK. nalgebra's own SVD can return wrong
// singular values without losing orthogonality, which no post-check repairs.

fn to_nd<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>) -> Array2<T> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn from_nd<T: nalgebra::Scalar + Copy>(a: &Array2<T>) -> DMatrix<T> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn lapack_err(e: ndarray_linalg::error::LinalgError) -> Error {
    Error::InvalidInput(format!("LAPACK failure: {e}"))
}

/// Full SVD: square U and V, singular values descending.
fn lapack_svd(m: &Mat) -> Result<(Mat, Vector, Mat)> {
    let (u, s, vt) = to_nd(m).svd(true, true).map_err(lapack_err)?;
    let u = from_nd(&u.expect("u requested"));
    let v = from_nd(&vt.expect("vt requested")).transpose();
    Ok((u, Vector::from_iterator(s.len(), s.iter().copied()), v))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
/// Only the lower triangle is read.
pub fn sym_eig(s: &Mat) -> Result<(Vector, Mat)> {
    if s.is_empty() {
        return Ok((Vector::zeros(0), Mat::zeros(0, 0)));
    }
    check_finite(s, "matrix")?;
    let (vals, vecs) = to_nd(s).eigh(UPLO::Lower).map_err(lapack_err)?;
    Ok((Vector::from_iterator(vals.len(), vals.iter().copied()), from_nd(&vecs)))
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    if m.is_empty() {
        return Ok(vec![]);
    }
    check_finite(m, "matrix")?;
    Ok(to_nd(m).eigvals().map_err(lapack_err)?.to_vec())
}

pub fn svd_full(m: &Mat) -> Result<Svd> {
    check_finite(m, "matrix")?;
    let (p, q) = m.shape();
    if p == 0 || q == 0 {
        return Ok(Svd { u: Mat::identity(p, p), s: Vector::zeros(0), v: Mat::identity(q, q) });
    }
    let k = p.min(q);
    let (mut u, s, mut v) = lapack_svd(m)?;
    for c in 0..p {
        if first_nonzero_negative(u.column(c)) {
            u.column_mut(c).neg_mut();
            if c < k {
                v.column_mut(c).neg_mut();
            }
        }
    }
    for c in k..q {
        if first_nonzero_negative(v.column(c)) {
            v.column_mut(c).neg_mut();
        }
    }
    Ok(Svd { u, s, v })
}

pub fn singular_values(m: &Mat) -> Result<Vector> {
    check_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(Vector::zeros(0));
    }
    Ok(lapack_svd(m)?.1)
}

fn rank_of_values(s: &Vector, p: usize, q: usize, tol: &Tolerance) -> usize {
    let smax = s.max();
    if !(smax > 0.0) {
        return 0;
    }
    let cut = tol.sv_cutoff(p, q, smax);
    s.iter().filter(|&&x| x > cut).count()
}

pub fn rank(m: &Mat, tol: &Tolerance) -> Result<usize> {
    let s = singular_values(m)?;
    Ok(rank_of_values(&s, m.nrows(), m.ncols(), tol))
}

pub fn pinv(m: &Mat, tol: &Tolerance) -> Result<Mat> {
    check_finite(m, "matrix")?;
    let (p, q) = m.shape();
    if p == 0 || q == 0 {
        return Ok(Mat::zeros(q, p));
    }
    let (u, s, v) = lapack_svd(m)?;
    let smax = s.max();
    let cut = tol.sv_cutoff(p, q, smax);
    let mut out = Mat::zeros(q, p);
    for i in 0..s.len() {
        if s[i] > cut && smax > 0.0 {
            out += (v.column(i) / s[i]) * u.column(i).transpose();
        }
    }
    Ok(out)
}

/// Symmetric square root of a PSD matrix; eigenvalues in [-zero_abs, 0) are clamped to 0.
pub fn psd_sqrt(s: &Mat, tol: &Tolerance) -> Result<Mat> {
    let (vals, vecs) = sym_eigen(s, tol, "matrix")?;
    let d = Vector::from_iterator(vals.len(), vals.iter().map(|&x| x.max(0.0).sqrt()));
    Ok(&vecs * Mat::from_diagonal(&d) * vecs.transpose())
}

/// Inverse of the symmetric square root of a positive definite matrix.
pub fn pd_inv_sqrt(s: &Mat, tol: &Tolerance) -> Result<Mat> {
    let (vals, vecs) = sym_eigen(s, tol, "matrix")?;
    let smax = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if vals.iter().any(|&x| x <= tol.sv_cutoff(s.nrows(), s.nrows(), smax)) {
        return Err(Error::NotPd("matrix".into()));
    }
    let d = Vector::from_iterator(vals.len(), vals.iter().map(|&x| 1.0 / x.sqrt()));
    Ok(&vecs * Mat::from_diagonal(&d) * vecs.transpose())
}

fn sym_eigen(s: &Mat, tol: &Tolerance, what: &str) -> Result<(Vector, Mat)> {
    check_finite(s, what)?;
    if !s.is_square() {
        return Err(Error::InvalidInput(format!("{what} is not square: {:?}", s.shape())));
    }
    if s.is_empty() {
        return Ok((Vector::zeros(0), Mat::zeros(0, 0)));
    }
    let scale = s.amax().max(1.0);
    if (s - s.transpose()).amax() > tol.zero_abs * scale {
        return Err(Error::InvalidInput(format!("{what} is not symmetric")));
    }
    let (vals, vecs) = sym_eig(&((s + s.transpose()) * 0.5))?;
    let min_eig = vals.min();
    if min_eig < -tol.zero_abs {
        return Err(Error::NotPsd { what: what.into(), min_eig });
    }
    Ok((vals, vecs))
}

/// Inverse of a symmetric positive definite matrix via Cholesky; None if not PD.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    if m.is_empty() {
        return Some(Mat::zeros(m.nrows(), m.ncols()));
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky().map(|c| c.inverse())
}

/// General inverse via LU; None if singular.
pub fn inverse(m: &Mat) -> Option<Mat> {
    if m.is_empty() {
        return Some(Mat::zeros(m.nrows(), m.ncols()));
    }
    // Not try_inverse: it switches to cofactor formulas up to 4 x 4, which lose digits.
    m.clone().lu().try_inverse()
}

pub fn symmetrize(m: &mut Mat) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn expm(m: &Mat) -> Result<Mat> {
    check_finite(m, "matrix")?;
    if !m.is_square() {
        return Err(Error::InvalidInput(format!("expm of non-square {:?}", m.shape())));
    }
    if m.is_empty() {
        return Ok(Mat::zeros(0, 0));
    }
    Ok(m.clone().exp())
}

/// Finite spectrum of the pencil zE - F.
#[derive(Debug, Clone, Default)]
pub struct GeneralizedEigen {
    pub finite: Vec<Complex64>,
    /// Number of eigenvalues at infinity.
    pub infinite: usize,
    /// det(zE - F) vanishes identically; `finite` is empty in that case.
    pub singular: bool,
}

const SHIFTS: [f64; 5] = [1.1283791670955126, -0.7788007830714049, 2.718281828459045, 0.3183098861837907, -1.6180339887498949];

/// Eigenvalues of the square pencil zE - F via a shift-and-invert reduction:
/// with M = (sE - F)^{-1} E, each eigenvalue mu of M maps to z = s - 1/mu and
/// mu = 0 corresponds to z at infinity.
pub fn generalized_eigenvalues(e: &Mat, f: &Mat, tol: &Tolerance) -> Result<GeneralizedEigen> {
    check_finite(e, "E")?;
    check_finite(f, "F")?;
    if !e.is_square() || e.shape() != f.shape() {
        return Err(Error::InvalidInput(format!(
            "pencil shapes {:?} and {:?} must be equal and square",
            e.shape(),
            f.shape()
        )));
    }
    let n = e.nrows();
    if n == 0 {
        return Ok(GeneralizedEigen::default());
    }
    let scale = e.amax().max(f.amax()).max(f64::MIN_POSITIVE);
    for &s0 in SHIFTS.iter() {
        let sigma = s0 * scale.max(1.0);
        let shifted = e * sigma - f;
        let sv = singular_values(&shifted)?;
        if sv.min() <= 1e-12 * sv.max() {
            continue;
        }
        let lu = shifted.lu();
        let m = lu.solve(e).expect("nonsingular shifted pencil");
        let mu = eigenvalues(&m)?;
        let cutoff = 1e-7 * m.norm().max(1.0);
        let mut out = GeneralizedEigen::default();
        for z in mu.iter() {
            if z.norm() <= cutoff {
                out.infinite += 1;
            } else {
                let mut zz = Complex64::new(sigma, 0.0) - Complex64::new(1.0, 0.0) / z;
                if zz.im.abs() <= tol.zero_abs * zz.norm().max(1.0) {
                    zz.im = 0.0;
                }
                out.finite.push(zz);
            }
        }
        return Ok(out);
    }
    Ok(GeneralizedEigen { finite: vec![], infinite: 0, singular: true })
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Singular values of a complex matrix, descending.
pub fn complex_singular_values(m: &CMat) -> Vector {
    if m.is_empty() {
        return Vector::zeros(0);
    }
    let (_, s, _) = to_nd(m).svd(false, false).expect("LAPACK SVD of a finite matrix");
    let mut s: Vec<f64> = s.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Vector::from_vec(s)
}

pub fn complex_rank(m: &CMat, tol: &Tolerance) -> usize {
    let s = complex_singular_values(m);
    rank_of_values(&s, m.nrows(), m.ncols(), tol)
}

/// Stack blocks vertically; all blocks must share a column count.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.rows_mut(r, b.nrows()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Stack blocks horizontally; all blocks must share a row count.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.columns_mut(c, b.ncols()).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Block matrix from a row-major grid of blocks.
pub fn block(grid: &[&[&Mat]]) -> Mat {
    let rows: Vec<Mat> = grid.iter().map(|row| hstack(row)).collect();
    let refs: Vec<&Mat> = rows.iter().collect();
    vstack(&refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn reconstruct(svd: &Svd, p: usize, q: usize) -> Mat {
        let mut s = Mat::zeros(p, q);
        for i in 0..svd.s.len() {
            s[(i, i)] = svd.s[i];
        }
        &svd.u * s * svd.v.transpose()
    }

    #[test]
    fn svd_is_accurate_on_singular_psd_matrices() {
        // nalgebra's bidiagonal iteration gets both of these wrong.
        #[rustfmt::skip]
        let m = Mat::from_column_slice(5, 5, &[
            0.4218214572664646, 9.143747517551332e-5, -0.00021121305644681448, 0.004356430923184453, 8.07632534806981e-6,
            9.143747517551332e-5, 0.0009022580336623641, 5.888133302904257e-6, 0.0002161143857046325, 0.0030116034360327133,
            -0.00021121305644681448, 5.888133302904257e-6, 0.010226208059586078, 0.00013786871988005612, 1.029960757583617e-5,
            0.004356430923184453, 0.0002161143857046325, 0.00013786871988005612, 0.010418759370638912, 1.0708856916226743e-5,
            8.07632534806981e-6, 0.0030116034360327133, 1.029960757583617e-5, 1.0708856916226743e-5, 0.010100999791314666,
        ]);
        let svd = svd_full(&m).unwrap();
        assert!((reconstruct(&svd, 5, 5) - &m).amax() < 1e-14);
        let (vals, _) = sym_eigen(&m, &tol(), "m").unwrap();
        let mut e: Vec<f64> = vals.iter().map(|x| x.abs()).collect();
        e.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for i in 0..4 {
            assert_relative_eq!(svd.s[i], e[i], max_relative = 1e-12);
        }
        let pi = pinv(&m, &tol()).unwrap();
        assert!((&m * &pi * &m - &m).amax() < 1e-14);

        #[rustfmt::skip]
        let m = Mat::from_column_slice(3, 3, &[
            1.6807620954774887, -2.928069673376803, 1.2603640241043341,
            -2.928069673376803, 5.5180048259667736, -0.6349872493332724,
            1.2603640241043341, -0.6349872493332724, 6.786490022434377,
        ]);
        let s = singular_values(&m).unwrap();
        assert_relative_eq!(s[0], 8.147339690573107, max_relative = 1e-12);
        assert_relative_eq!(s[1], 5.837917253305531, max_relative = 1e-12);
        assert!(s[2] < 1e-14);
    }

    #[test]
    fn svd_of_zero_matrix() {
        let m = Mat::zeros(2, 3);
        let svd = svd_full(&m).unwrap();
        assert_eq!(svd.s.as_slice(), &[0.0, 0.0]);
        assert_relative_eq!(&svd.u.transpose() * &svd.u, Mat::identity(2, 2), epsilon = 1e-14);
        assert_relative_eq!(&svd.v.transpose() * &svd.v, Mat::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn svd_of_identity() {
        let svd = svd_full(&Mat::identity(3, 3)).unwrap();
        assert_relative_eq!(svd.s, Vector::from_vec(vec![1.0, 1.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn svd_of_two_unit_columns() {
        // Two distinct unit columns and a zero column: Gram matrix diag(0, 1, 1).
        let h = Mat::from_row_slice(5, 3, &[
            0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0.,
        ]);
        let gram = h.transpose() * &h;
        assert_eq!(gram, Mat::from_diagonal(&Vector::from_vec(vec![0., 1., 1.])));
        let svd = svd_full(&h).unwrap();
        assert_relative_eq!(svd.s, Vector::from_vec(vec![1.0, 1.0, 0.0]), epsilon = 1e-14);
        assert_eq!(rank(&h, &tol()).unwrap(), 2);
        assert_relative_eq!(reconstruct(&svd, 5, 3), h, epsilon = 1e-14);
        assert_relative_eq!(&svd.u.transpose() * &svd.u, Mat::identity(5, 5), epsilon = 1e-14);
    }

    #[test]
    fn svd_signs_are_normalized() {
        let m = Mat::from_row_slice(3, 2, &[-1., 0., 0., -2., 0., 0.]);
        let svd = svd_full(&m).unwrap();
        for c in 0..3 {
            let first = svd.u.column(c).iter().copied().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
        assert_relative_eq!(reconstruct(&svd, 3, 2), m, epsilon = 1e-14);
    }

    #[test]
    fn svd_rejects_nan() {
        let m = Mat::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(svd_full(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&Mat::zeros(0, 0), &tol()).unwrap(), 0);
        assert_eq!(rank(&Mat::from_element(2, 2, 1.0), &tol()).unwrap(), 1);
        assert_eq!(rank(&Mat::zeros(3, 4), &tol()).unwrap(), 0);
        let h2 = Mat::from_row_slice(5, 3, &[
            0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0.,
        ]);
        assert_eq!(rank(&h2, &tol()).unwrap(), 3);
    }

    #[test]
    fn pinv_examples() {
        assert_relative_eq!(pinv(&Mat::identity(3, 3), &tol()).unwrap(), Mat::identity(3, 3));
        let d = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let expect = Mat::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        assert_relative_eq!(pinv(&d, &tol()).unwrap(), expect, epsilon = 1e-15);
        assert_eq!(pinv(&Mat::zeros(0, 3), &tol()).unwrap().shape(), (3, 0));
    }

    #[test]
    fn psd_sqrt_examples() {
        assert_relative_eq!(psd_sqrt(&Mat::identity(3, 3), &tol()).unwrap(), Mat::identity(3, 3), epsilon = 1e-14);
        let s = Mat::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let f = psd_sqrt(&s, &tol()).unwrap();
        assert_relative_eq!(&f * f.transpose(), s, epsilon = 1e-13);
        assert_relative_eq!(f, Mat::from_diagonal(&Vector::from_vec(vec![2.0, 3.0])), epsilon = 1e-13);
        let bad = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(psd_sqrt(&bad, &tol()), Err(Error::NotPsd { .. })));
        let nearly = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1e-12]));
        assert!(psd_sqrt(&nearly, &tol()).is_ok());
    }

    #[test]
    fn expm_examples() {
        assert_relative_eq!(expm(&Mat::zeros(3, 3)).unwrap(), Mat::identity(3, 3));
        let d = Mat::from_diagonal(&Vector::from_vec(vec![0.5, -1.0, 2.0]));
        let e = expm(&d).unwrap();
        assert_relative_eq!(e[(0, 0)], 0.5f64.exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], (-1.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(2, 2)], 2.0f64.exp(), max_relative = 1e-13);
        assert!(expm(&Mat::zeros(2, 3)).is_err());
        // Decoupled -0.1 velocity mode sampled at 0.01 s.
        let a = Mat::from_row_slice(2, 2, &[0., 1., 0., -0.1]) * 0.01;
        assert_relative_eq!(expm(&a).unwrap()[(1, 1)], (-0.001f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn generalized_eigen_examples() {
        let e = Mat::identity(2, 2);
        let f = Mat::from_diagonal(&Vector::from_vec(vec![0.3, 0.8]));
        let g = generalized_eigenvalues(&e, &f, &tol()).unwrap();
        let mut re: Vec<f64> = g.finite.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(re[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(re[1], 0.8, epsilon = 1e-12);

        let g = generalized_eigenvalues(&Mat::zeros(2, 2), &Mat::identity(2, 2), &tol()).unwrap();
        assert!(g.finite.is_empty());
        assert_eq!(g.infinite, 2);

        let z = Mat::zeros(2, 2);
        let g = generalized_eigenvalues(&z, &z, &tol()).unwrap();
        assert!(g.singular);
        assert!(generalized_eigenvalues(&Mat::zeros(2, 2), &Mat::zeros(3, 3), &tol()).is_err());
    }

    #[test]
    fn generalized_eigen_with_infinite_part() {
        // det(zE - F) = (z - 0.5) for E = diag(1, 0), F = diag(0.5, 1).
        let e = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        let f = Mat::from_diagonal(&Vector::from_vec(vec![0.5, 1.0]));
        let g = generalized_eigenvalues(&e, &f, &tol()).unwrap();
        assert_eq!(g.finite.len(), 1);
        assert_eq!(g.infinite, 1);
        assert_relative_eq!(g.finite[0].re, 0.5, epsilon = 1e-12);
    }
}
