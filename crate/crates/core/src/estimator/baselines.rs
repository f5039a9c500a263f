//! Ordinary least-squares reference estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::simulator::{CensoredTrajectory, PairedDataset};

/// `(sum y x^T)(sum x x^T)^{-1}` over the given covariate/response pairs.
pub fn least_squares<'a, I>(pairs: I) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = (&'a DVector<f64>, &'a DVector<f64>)>,
{
    let mut iter = pairs.into_iter().peekable();
    let (x0, y0) = iter
        .peek()
        .ok_or(Error::InsufficientPairs { found: 0, required: 1 })?;
    let (d, n) = (x0.len(), y0.len());
    let mut cross = DMatrix::<f64>::zeros(n, d);
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for (x, y) in iter {
        cross.ger(1.0, y, x, 1.0);
        gram.ger(1.0, x, x, 1.0);
    }
    let inv = spd_inverse(&gram).ok_or(Error::InsufficientExcitation {
        condition: f64::INFINITY,
    })?;
    Ok(cross * inv)
}

/// Least squares on the observed consecutive pairs, ignoring censoring.
pub fn ols_on_pairs(data: &PairedDataset) -> Result<DMatrix<f64>> {
    least_squares(data.pairs.iter().map(|p| (&p.x, &p.y)))
}

/// Least squares on the full, uncensored trajectory.
pub fn ols_full(traj: &CensoredTrajectory) -> Result<DMatrix<f64>> {
    least_squares(traj.states.windows(2).map(|w| (&w[0], &w[1])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_noiseless_map() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, 0.1, 0.7]);
        let xs = [
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.3, 2.0]),
            DVector::from_vec(vec![-1.0, 1.0]),
        ];
        let ys: Vec<_> = xs.iter().map(|x| &a * x).collect();
        let est = least_squares(xs.iter().zip(&ys)).unwrap();
        assert!((est - a).abs().max() < 1e-12);
    }
}
