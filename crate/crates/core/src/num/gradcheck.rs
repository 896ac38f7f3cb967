//! Central-difference gradient estimates used to verify [`Graph::backward`](super::Graph::backward).

use crate::error::Result;
use crate::num::{ParamId, ParamStore};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Central differences `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` per coordinate.
pub fn finite_diff(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    point: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x)?;
        x[i] = orig - eps;
        let down = f(&x)?;
        x[i] = orig;
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

/// Central differences for every entry of one parameter tensor.
pub fn finite_diff_param(
    store: &mut ParamStore,
    id: ParamId,
    f: &mut impl FnMut(&ParamStore) -> Result<f64>,
    eps: f64,
) -> Result<Vec<f64>> {
    let n = store.get(id).len();
    let mut out = Vec::with_capacity(n);
    for e in 0..n {
        store.nudge(id, e, eps);
        let up = f(store);
        store.nudge(id, e, -2.0 * eps);
        let down = f(store);
        store.nudge(id, e, eps);
        out.push((up? - down?) / (2.0 * eps));
    }
    Ok(out)
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest [`relative_error`] over paired slices.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n, floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_square() {
        let d = finite_diff(|x| Ok(x[0]), &[0.7], DEFAULT_EPS).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-9);
        let d = finite_diff(|x| Ok(x[0] * x[0]), &[3.0], DEFAULT_EPS).unwrap();
        assert!((d[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-6), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-15);
    }
}
