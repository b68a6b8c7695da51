//! Split the feedthrough H = U1 Sigma V1^T and decouple the measurement into
//! z1 (carries d1 = V1^T d directly) and z2 (free of d, noise uncorrelated with z1).

use crate::error::{Error, Result};
use crate::model::SystemStep;
use crate::numeric::{rank, spd_inverse, svd_full, Mat, Tolerance, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct OutputDecomposition {
    pub p_h: usize,
    pub u1: Mat,
    pub u2: Mat,
    pub v1: Mat,
    pub v2: Mat,
    /// [V1 V2], the full input-space rotation.
    pub v: Mat,
    pub sigma: Mat,
    pub sigma_inv: Mat,
    pub t1: Mat,
    pub t2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d1: Mat,
    pub d2: Mat,
    pub g1: Mat,
    pub g2: Mat,
    pub h1: Mat,
    pub r1: Mat,
    pub r2: Mat,
}

impl OutputDecomposition {
    /// A - G1 Sigma^{-1} C1: dynamics once d1 is eliminated through z1.
    pub fn a_hat(&self, a: &Mat) -> Mat {
        a - &self.g1 * &self.sigma_inv * &self.c1
    }

    /// G1 Sigma^{-1} R1 Sigma^{-1} G1^T + Q.
    pub fn q_hat(&self, q: &Mat) -> Mat {
        let gs = &self.g1 * &self.sigma_inv;
        &gs * &self.r1 * gs.transpose() + q
    }

    pub fn p(&self) -> usize {
        self.v.nrows()
    }

    pub fn l(&self) -> usize {
        self.u1.nrows()
    }
}

pub fn decompose(step: &SystemStep, tol: &Tolerance) -> Result<OutputDecomposition> {
    let errs = step.shape_errors();
    if !errs.is_empty() {
        return Err(Error::InvalidInput(errs.join("; ")));
    }
    let l = step.c.nrows();
    let p = step.g.ncols();
    let r = &step.r;
    if spd_inverse(r).is_none() {
        return Err(Error::NotPd("R".into()));
    }
    let p_h = rank(&step.h, tol)?;
    let (u, v, s) = if p_h == 0 {
        (Mat::identity(l, l), Mat::identity(p, p), Vector::zeros(0))
    } else {
        let svd = svd_full(&step.h)?;
        (svd.u, svd.v, svd.s)
    };
    let u1 = u.columns(0, p_h).into_owned();
    let u2 = u.columns(p_h, l - p_h).into_owned();
    let v1 = v.columns(0, p_h).into_owned();
    let v2 = v.columns(p_h, p - p_h).into_owned();
    let sv = s.rows(0, p_h).into_owned();
    let sigma = Mat::from_diagonal(&sv);
    let sigma_inv = Mat::from_diagonal(&sv.map(|x| 1.0 / x));

    let r2 = u2.transpose() * r * &u2;
    let r2_inv = spd_inverse(&r2).ok_or_else(|| Error::NotPd("U2^T R U2".into()))?;
    let t2 = u2.transpose();
    let t1 = u1.transpose() - u1.transpose() * r * &u2 * &r2_inv * &t2;
    let mut r1 = &t1 * r * t1.transpose();
    crate::numeric::symmetrize(&mut r1);
    if spd_inverse(&r1).is_none() {
        return Err(Error::NotPd("R1".into()));
    }

    Ok(OutputDecomposition {
        p_h,
        c1: &t1 * &step.c,
        c2: &t2 * &step.c,
        d1: &t1 * &step.d,
        d2: &t2 * &step.d,
        g1: &step.g * &v1,
        g2: &step.g * &v2,
        h1: &u1 * &sigma,
        v: v.clone(),
        u1,
        u2,
        v1,
        v2,
        sigma,
        sigma_inv,
        t1,
        t2,
        r1,
        r2,
    })
}

pub fn transform_measurement(dec: &OutputDecomposition, y: &Vector) -> Result<(Vector, Vector)> {
    if y.len() != dec.l() {
        return Err(Error::InvalidInput(format!("measurement has length {}, expected {}", y.len(), dec.l())));
    }
    Ok((&dec.t1 * y, &dec.t2 * y))
}
