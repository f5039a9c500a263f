//! Projection onto the confidence ellipsoid in a weighted Frobenius norm.
//!
//! Minimizes `||A - A_tilde||_{S_i}` over `||A - A_0||_{S_0} <= 1`. The
//! stationarity condition `(A - A_tilde) S_i + lambda (A - A_0) S_0 = 0`
//! gives `A(lambda) = (A_tilde S_i + lambda A_0 S_0)(S_i + lambda S_0)^{-1}`,
//! and `phi(lambda) = ||A(lambda) - A_0||_{S_0} - 1` is strictly decreasing,
//! so the multiplier is found by bracketing and bisection.

use nalgebra::DMatrix;

use super::ConfidenceEllipsoid;
use crate::error::{Error, Result};
use crate::linalg::weighted_norm_sq;

const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub a: DMatrix<f64>,
    pub lambda: f64,
}

struct RootFunction<'a> {
    sigma_i: &'a DMatrix<f64>,
    ellipsoid: &'a ConfidenceEllipsoid,
    // (A_tilde - A_0) S_i, transposed: d x n.
    rhs_t: DMatrix<f64>,
}

impl RootFunction<'_> {
    /// `A(lambda) - A_0`.
    fn offset(&self, lambda: f64) -> Result<DMatrix<f64>> {
        let m = self.sigma_i + &self.ellipsoid.shape * lambda;
        let chol = m.cholesky().ok_or(Error::ProjectionBracket)?;
        // (S_i + lambda S_0) is symmetric, so E^T = M^{-1} (S_i D^T).
        Ok(chol.solve(&self.rhs_t).transpose())
    }

    fn phi(&self, lambda: f64) -> Result<f64> {
        let e = self.offset(lambda)?;
        Ok(weighted_norm_sq(&e, &self.ellipsoid.shape).max(0.0).sqrt() - 1.0)
    }
}

/// Projects `a_tilde` onto `ellipsoid` in the `sigma_i` norm.
///
/// The returned point always satisfies `phi(lambda) <= 0`, i.e. it lies in
/// the ellipsoid up to rounding, with `|phi| <= tol` unless the bracket
/// collapses to machine precision first.
pub fn project_ellipsoid(
    a_tilde: &DMatrix<f64>,
    sigma_i: &DMatrix<f64>,
    ellipsoid: &ConfidenceEllipsoid,
    tol: f64,
) -> Result<Projection> {
    let delta = a_tilde - &ellipsoid.center;
    if ellipsoid.norm_sq_of_offset(&delta) <= 1.0 {
        return Ok(Projection {
            a: a_tilde.clone(),
            lambda: 0.0,
        });
    }
    let f = RootFunction {
        sigma_i,
        ellipsoid,
        rhs_t: sigma_i * delta.transpose(),
    };

    let mut lo = 0.0;
    let mut phi_lo = f.phi(0.0)?;
    let mut hi = 1.0;
    let mut phi_hi = f.phi(hi)?;
    let mut doublings = 0;
    while phi_hi > 0.0 {
        if phi_hi > phi_lo + 1e-12 {
            return Err(Error::ProjectionNotMonotone { lambda: hi });
        }
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::ProjectionBracket);
        }
        lo = hi;
        phi_lo = phi_hi;
        hi *= 2.0;
        phi_hi = f.phi(hi)?;
    }

    let slack = 1e-12;
    for _ in 0..MAX_BISECTIONS {
        if phi_hi.abs() <= tol || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let phi_mid = f.phi(mid)?;
        if phi_mid > phi_lo + slack || phi_mid < phi_hi - slack {
            return Err(Error::ProjectionNotMonotone { lambda: mid });
        }
        if phi_mid > 0.0 {
            lo = mid;
            phi_lo = phi_mid;
        } else {
            hi = mid;
            phi_hi = phi_mid;
        }
    }
    Ok(Projection {
        a: &ellipsoid.center + f.offset(hi)?,
        lambda: hi,
    })
}

/// `||(A - A_tilde) S_i + lambda (A - A_0) S_0||_F`, relative to
/// `||A_tilde S_i||_F + lambda ||A_0 S_0||_F`.
pub fn kkt_residual(
    projection: &Projection,
    a_tilde: &DMatrix<f64>,
    sigma_i: &DMatrix<f64>,
    ellipsoid: &ConfidenceEllipsoid,
) -> f64 {
    let r = (&projection.a - a_tilde) * sigma_i
        + (&projection.a - &ellipsoid.center) * &ellipsoid.shape * projection.lambda;
    let scale = (a_tilde * sigma_i).norm()
        + projection.lambda * (&ellipsoid.center * &ellipsoid.shape).norm()
        + f64::MIN_POSITIVE;
    r.norm() / scale
}
