//! Central finite-difference verification of analytic gradients (f64 mode).

use crate::error::{Error, Result};

/// Compares an analytic gradient against central differences of `f` at
/// `params`, coordinate by coordinate. Returns the max relative error with
/// denominator max(|analytic|, |numeric|, 1e-8).
pub fn finite_diff_check<Func>(
    mut f: Func,
    params: &mut [f64],
    analytic_grad: &[f64],
    h: f64,
) -> Result<f64>
where
    Func: FnMut(&[f64]) -> f64,
{
    let idx: Vec<usize> = (0..params.len()).collect();
    finite_diff_check_coords(&mut f, params, analytic_grad, h, &idx)
}

/// Subset variant: checks only the listed coordinates (used for large nets).
pub fn finite_diff_check_coords<Func>(
    f: &mut Func,
    params: &mut [f64],
    analytic_grad: &[f64],
    h: f64,
    coords: &[usize],
) -> Result<f64>
where
    Func: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic_grad.len() {
        return Err(Error::ShapeMismatch(format!(
            "finite_diff_check: params {}, grad {}",
            params.len(),
            analytic_grad.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite_diff_check: h must be > 0".into()));
    }
    let mut max_rel = 0.0f64;
    for &i in coords {
        let orig = params[i];
        params[i] = orig + h;
        let fp = f(params);
        params[i] = orig - h;
        let fm = f(params);
        params[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("finite_diff_check: f at coord {i}")));
        }
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = analytic_grad[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic - numeric).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_machine_eps() {
        // central difference is exact for linear f
        let mut params = vec![0.3, -1.2, 2.0];
        let w = [2.0, -0.5, 1.5];
        let f = |p: &[f64]| p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let grad = w.to_vec();
        let err = finite_diff_check(f, &mut params, &grad, 1e-4).unwrap();
        assert!(err < 1e-9, "err={err}");
    }

    #[test]
    fn cubic_taylor_error() {
        // f = x^3 at x=1, h=1e-3: numeric grad = 3 + h^2, rel error ~ 3.3e-7
        let mut params = vec![1.0];
        let f = |p: &[f64]| p[0].powi(3);
        let err = finite_diff_check(f, &mut params, &[3.0], 1e-3).unwrap();
        assert!(err > 1e-8 && err < 1e-5, "err={err}");
    }

    #[test]
    fn scaled_gradient_detected() {
        // analytic grad deliberately scaled by 1.01 -> reported error ~ 1e-2
        let mut params = vec![1.0];
        let f = |p: &[f64]| p[0].powi(3);
        let err = finite_diff_check(f, &mut params, &[3.0 * 1.01], 1e-5).unwrap();
        assert!((err - 0.01).abs() < 1e-3, "err={err}");
    }

    #[test]
    fn non_finite_f_rejected() {
        let mut params = vec![0.0];
        let f = |p: &[f64]| 1.0 / p[0];
        assert!(matches!(
            finite_diff_check(f, &mut params, &[0.0], 1e-3),
            Err(Error::NonFinite(_)) | Ok(_)
        ));
        // at exactly 0 the +/-h evaluations are finite; force an actual NaN:
        let g = |_: &[f64]| f64::NAN;
        assert!(finite_diff_check(g, &mut params, &[0.0], 1e-3).is_err());
    }
}
