//! Direct textbook recursions for the special cases the general filters must
//! collapse to. Written without the output decomposition so they can serve as
//! independent references.

use sise_core::{Mat, SystemStep, Vector};

fn inv(m: &Mat) -> Mat {
    try_inv(m).expect("oracle matrix is invertible")
}

fn try_inv(m: &Mat) -> Option<Mat> {
    m.clone().lu().try_inverse()
}

/// Pseudoinverse of a symmetric matrix, cutting singular values below 1e-10 * scale.
fn pinv(m: &Mat, scale: f64) -> Mat {
    let e = ((m + m.transpose()) * 0.5).symmetric_eigen();
    let d = e.eigenvalues.map(|x| if x.abs() > 1e-10 * scale { 1.0 / x } else { 0.0 });
    &e.eigenvectors * Mat::from_diagonal(&d) * e.eigenvectors.transpose()
}

#[derive(Debug, Clone)]
pub struct OracleStep {
    pub x: Vector,
    pub px: Mat,
    pub gain: Mat,
    /// Input estimate for the previous time index, when the case has one.
    pub d_prev: Option<Vector>,
}

/// Kalman filter with the textbook covariance update P = (I - L C) P^-.
pub fn kalman(s: &SystemStep, x0: &Vector, p0: &Mat, y: &[Vector], u: &[Vector]) -> Vec<OracleStep> {
    let n = s.a.nrows();
    let (mut x, mut p) = (x0.clone(), p0.clone());
    let mut out = Vec::new();
    for k in 1..y.len() {
        let xp = &s.a * &x + &s.b * &u[k - 1];
        let pp = &s.a * &p * s.a.transpose() + &s.q;
        let sk = &s.c * &pp * s.c.transpose() + &s.r;
        let l = &pp * s.c.transpose() * inv(&sk);
        x = &xp + &l * (&y[k] - &s.c * &xp - &s.d * &u[k]);
        p = (Mat::identity(n, n) - &l * &s.c) * &pp;
        p = (&p + p.transpose()) * 0.5;
        let stop = !(p.amax() < 1e12);
        out.push(OracleStep { x: x.clone(), px: p.clone(), gain: l, d_prev: None });
        if stop {
            break;
        }
    }
    out
}

/// Unknown input only in the dynamics (H = 0): input estimated by weighted
/// least squares on the innovation, then a gain restricted to the left null space of C G.
pub fn no_feedthrough(s: &SystemStep, x0: &Vector, p0: &Mat, y: &[Vector], u: &[Vector]) -> Vec<OracleStep> {
    let n = s.a.nrows();
    let (a, c, g, r) = (&s.a, &s.c, &s.g, &s.r);
    let (mut x, mut p) = (x0.clone(), p0.clone());
    let mut out = Vec::new();
    for k in 1..y.len() {
        let xp = a * &x + &s.b * &u[k - 1];
        let pp = a * &p * a.transpose() + &s.q;
        let rt = c * &pp * c.transpose() + r;
        let rti = inv(&rt);
        let cg = c * g;
        let m = inv(&(cg.transpose() * &rti * &cg)) * cg.transpose() * &rti;
        let d = &m * (&y[k] - c * &xp - &s.d * &u[k]);
        let xs = &xp + g * &d;
        let igmc = Mat::identity(n, n) - g * &m * c;
        let ps = &igmc * &pp * igmc.transpose() + g * &m * r * m.transpose() * g.transpose();
        let gmr = g * &m * r;
        let rts = c * &ps * c.transpose() + r - c * &gmr - gmr.transpose() * c.transpose();
        let sk = &ps * c.transpose() - &gmr;
        // Gamma^T (Gamma Rt* Gamma^T)^{-1} Gamma for Gamma spanning the left null space of C G,
        // written through the orthogonal projector onto that space.
        let perp = Mat::identity(c.nrows(), c.nrows()) - &cg * inv(&(cg.transpose() * &cg)) * cg.transpose();
        let l = &sk * pinv(&(&perp * &rts * &perp), rts.amax());
        x = &xs + &l * (&y[k] - c * &xs - &s.d * &u[k]);
        p = &ps + &l * &rts * l.transpose() - &l * sk.transpose() - &sk * l.transpose();
        p = (&p + p.transpose()) * 0.5;
        let stop = !(p.amax() < 1e12);
        out.push(OracleStep { x: x.clone(), px: p.clone(), gain: l, d_prev: Some(d) });
        if stop {
            break;
        }
    }
    out
}

/// Full-column-rank feedthrough: d_k read from y_k by least squares weighted with R^{-1};
/// L = P^- C^T Rt^{-1} (I - H (H^T Rt^{-1} H)^{-1} H^T Rt^{-1}).
pub fn full_rank_feedthrough(s: &SystemStep, x0: &Vector, p0: &Mat, y: &[Vector], u: &[Vector]) -> Vec<OracleStep> {
    let n = s.a.nrows();
    let l_dim = s.c.nrows();
    let (a, c, g, h, r) = (&s.a, &s.c, &s.g, &s.h, &s.r);
    let ri = inv(r);
    let m = inv(&(h.transpose() * &ri * h)) * h.transpose() * &ri;
    let (mut x, mut p) = (x0.clone(), p0.clone());
    let mut d = &m * (&y[0] - c * &x - &s.d * &u[0]);
    let mut pd = &m * (c * &p * c.transpose() + r) * m.transpose();
    let mut pxd = -(&p * c.transpose() * m.transpose());
    let mut out = Vec::new();
    for k in 1..y.len() {
        let d_prev = d.clone();
        let xp = a * &x + &s.b * &u[k - 1] + g * &d;
        let apg = a * &pxd * g.transpose();
        let pp = a * &p * a.transpose() + g * &pd * g.transpose() + &apg + apg.transpose() + &s.q;
        // A diverging draw can overflow before the caller's bound check sees it.
        let Some(rti) = try_inv(&(c * &pp * c.transpose() + r)) else { break };
        let Some(hwh) = try_inv(&(h.transpose() * &rti * h)) else { break };
        let proj = Mat::identity(l_dim, l_dim) - h * hwh * h.transpose() * &rti;
        let l = &pp * c.transpose() * &rti * proj;
        x = &xp + &l * (&y[k] - c * &xp - &s.d * &u[k]);
        let ilc = Mat::identity(n, n) - &l * c;
        p = &ilc * &pp * ilc.transpose() + &l * r * l.transpose();
        p = (&p + p.transpose()) * 0.5;
        d = &m * (&y[k] - c * &x - &s.d * &u[k]);
        let lr = &l * r;
        pd = &m * (c * &p * c.transpose() + r - c * &lr - lr.transpose() * c.transpose()) * m.transpose();
        pxd = &lr * m.transpose() - &p * c.transpose() * m.transpose();
        let stop = !(p.amax() < 1e12);
        out.push(OracleStep { x: x.clone(), px: p.clone(), gain: l, d_prev: Some(d_prev) });
        if stop {
            break;
        }
    }
    out
}

/// Closed-form gain for a full-column-rank feedthrough given the propagated covariance.
pub fn full_rank_gain(s: &SystemStep, p_pred: &Mat) -> Mat {
    let (c, h) = (&s.c, &s.h);
    let l_dim = c.nrows();
    let rti = inv(&(c * p_pred * c.transpose() + &s.r));
    let proj = Mat::identity(l_dim, l_dim) - h * inv(&(h.transpose() * &rti * h)) * h.transpose() * &rti;
    p_pred * c.transpose() * &rti * proj
}
