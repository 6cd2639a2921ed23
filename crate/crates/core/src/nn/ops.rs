//! Pointwise and distribution-level operations: ReLU, masked temperature
//! softmax, KL divergence, and their gradients.

use crate::error::{Error, Result};
use crate::mat::Real;

/// In-place ReLU; returns nothing. Backward uses the forward output.
pub fn relu_inplace<F: Real>(x: &mut [F]) {
    for v in x.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// dx = dy where the forward output was positive, else 0. `y` is the forward output.
pub fn relu_backward_inplace<F: Real>(y: &[F], dy: &mut [F]) {
    for (g, v) in dy.iter_mut().zip(y) {
        if *v <= F::zero() {
            *g = F::zero();
        }
    }
}

/// Softmax of `logits / tau` restricted to the set bits of `mask`.
///
/// Masked entries are exactly zero; unmasked entries sum to one. Errors on an
/// all-zero mask and on a non-positive temperature.
pub fn masked_temperature_softmax<F: Real>(logits: &[F], mask: &[bool], tau: F, out: &mut [F]) -> Result<()> {
    if logits.len() != mask.len() || logits.len() != out.len() {
        return Err(Error::ShapeMismatch(format!(
            "softmax: logits {}, mask {}, out {}",
            logits.len(),
            mask.len(),
            out.len()
        )));
    }
    if tau <= F::zero() {
        return Err(Error::InvalidArgument("temperature must be > 0".into()));
    }
    if !tau.is_finite() {
        return Err(Error::InvalidArgument("temperature must be finite".into()));
    }
    let mut max = F::neg_infinity();
    for (v, m) in logits.iter().zip(mask) {
        if *m && *v > max {
            max = *v;
        }
    }
    if max == F::neg_infinity() {
        return Err(Error::NoLegalAction);
    }
    let mut sum = F::zero();
    for i in 0..logits.len() {
        if mask[i] {
            let e = ((logits[i] - max) / tau).exp();
            out[i] = e;
            sum = sum + e;
        } else {
            out[i] = F::zero();
        }
    }
    let inv = F::one() / sum;
    for (v, m) in out.iter_mut().zip(mask) {
        if *m {
            *v = *v * inv;
        }
    }
    Ok(())
}

/// Convenience wrapper returning a fresh vector.
pub fn masked_temperature_softmax_vec<F: Real>(logits: &[F], mask: &[bool], tau: F) -> Result<Vec<F>> {
    let mut out = vec![F::zero(); logits.len()];
    masked_temperature_softmax(logits, mask, tau, &mut out)?;
    Ok(out)
}

/// Gradient of the masked temperature softmax.
///
/// Given dL/dq (`dq`) and the forward output `q`, accumulates dL/dz into `dz`:
/// dz_i = q_i/tau * (dq_i - sum_j dq_j q_j) on the support, 0 elsewhere.
pub fn masked_temperature_softmax_backward<F: Real>(q: &[F], mask: &[bool], tau: F, dq: &[F], dz: &mut [F]) {
    let mut dot = F::zero();
    for i in 0..q.len() {
        if mask[i] {
            dot = dot + dq[i] * q[i];
        }
    }
    for i in 0..q.len() {
        if mask[i] {
            dz[i] = dz[i] + q[i] / tau * (dq[i] - dot);
        }
    }
}

/// KL(p || q) = sum_i p_i ln(p_i / q_i), with 0 * ln(0/x) = 0.
///
/// Returns an `InfiniteDivergence` error where q_i == 0 but p_i > 0 (a mask
/// mismatch); tiny negative results from rounding clamp to zero.
pub fn kl_divergence<F: Real>(p: &[F], q: &[F]) -> Result<F> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("kl: p {}, q {}", p.len(), q.len())));
    }
    let tol = F::from_f64(1e-6);
    let sum_p: F = p.iter().copied().sum();
    let sum_q: F = q.iter().copied().sum();
    if (sum_p - F::one()).abs() > tol || (sum_q - F::one()).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "kl: inputs must sum to 1 (got {sum_p}, {sum_q})"
        )));
    }
    let mut acc = F::zero();
    for (i, (&pi, &qi)) in p.iter().zip(q.iter()).enumerate() {
        if pi > F::zero() {
            if qi <= F::zero() {
                return Err(Error::InfiniteDivergence(i));
            }
            acc = acc + pi * (pi / qi).ln();
        }
    }
    if acc < F::zero() {
        if acc < F::from_f64(-1e-9) {
            return Err(Error::NonFinite(format!("kl produced {acc}")));
        }
        acc = F::zero();
    }
    Ok(acc)
}

/// Dot-product scoring: logits_j = q . k_j for each key row.
pub fn dot_score<F: Real>(query: &[F], keys: &[F], dim: usize, out: &mut [F]) {
    debug_assert_eq!(query.len(), dim);
    debug_assert_eq!(keys.len(), out.len() * dim);
    for (j, o) in out.iter_mut().enumerate() {
        let k = &keys[j * dim..(j + 1) * dim];
        let mut s = F::zero();
        for (a, b) in query.iter().zip(k) {
            s = s + *a * *b;
        }
        *o = s;
    }
}

/// Backward of `dot_score`: accumulates into dquery and dkeys.
pub fn dot_score_backward<F: Real>(
    query: &[F],
    keys: &[F],
    dim: usize,
    dout: &[F],
    dquery: &mut [F],
    dkeys: &mut [F],
) {
    for (j, &g) in dout.iter().enumerate() {
        let k = &keys[j * dim..(j + 1) * dim];
        let dk = &mut dkeys[j * dim..(j + 1) * dim];
        for i in 0..dim {
            dquery[i] = dquery[i] + g * k[i];
            dk[i] = dk[i] + g * query[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> Vec<bool> {
        bits.iter().map(|b| *b != 0).collect()
    }

    #[test]
    fn softmax_symmetry() {
        let q = masked_temperature_softmax_vec(&[0.0f64, 0.0, 0.0], &mask(&[1, 1, 1]), 1.0).unwrap();
        for v in &q {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_masked_entry_exact_zero() {
        // logits [1,2,3], mask [1,1,0], tau=1 -> [0.26894, 0.73106, 0]
        let q = masked_temperature_softmax_vec(&[1.0f64, 2.0, 3.0], &mask(&[1, 1, 0]), 1.0).unwrap();
        assert!((q[0] - 0.26894).abs() < 1e-5);
        assert!((q[1] - 0.73106).abs() < 1e-5);
        assert_eq!(q[2], 0.0);
        let s: f64 = q.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_temperature() {
        // logits [2,0], mask [1,1], tau=4 -> softmax([0.5, 0]) = [0.62246, 0.37754]
        let q = masked_temperature_softmax_vec(&[2.0f64, 0.0], &mask(&[1, 1]), 4.0).unwrap();
        assert!((q[0] - 0.62246).abs() < 1e-5);
        assert!((q[1] - 0.37754).abs() < 1e-5);
    }

    #[test]
    fn softmax_errors() {
        let mut out = vec![0.0f64; 2];
        assert!(matches!(
            masked_temperature_softmax(&[1.0, 2.0], &mask(&[0, 0]), 1.0, &mut out),
            Err(Error::NoLegalAction)
        ));
        assert!(masked_temperature_softmax(&[1.0, 2.0], &mask(&[1, 1]), 0.0, &mut out).is_err());
        assert!(masked_temperature_softmax(&[1.0, 2.0], &mask(&[1, 1]), -1.0, &mut out).is_err());
    }

    #[test]
    fn softmax_shift_invariance() {
        let logits = [0.3f64, -1.2, 2.5, 0.0];
        let m = mask(&[1, 0, 1, 1]);
        let a = masked_temperature_softmax_vec(&logits, &m, 1.0).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|v| v + 17.5).collect();
        let b = masked_temperature_softmax_vec(&shifted, &m, 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn temperature_monotonicity() {
        // Unique max: increasing tau strictly decreases the max probability.
        let logits = [3.0f64, 1.0, 0.5, -2.0];
        let m = mask(&[1, 1, 1, 1]);
        let mut prev = f64::INFINITY;
        for tau in [0.5, 1.0, 4.0, 100.0] {
            let q = masked_temperature_softmax_vec(&logits, &m, tau).unwrap();
            let mx = q.iter().cloned().fold(f64::MIN, f64::max);
            assert!(mx < prev, "tau={tau}: {mx} !< {prev}");
            prev = mx;
        }
        // At huge tau the distribution approaches uniform over the support.
        let q = masked_temperature_softmax_vec(&logits, &m, 1e6).unwrap();
        for v in &q {
            assert!((v - 0.25).abs() < 1e-4);
        }
    }

    #[test]
    fn kl_identical_is_zero() {
        assert_eq!(kl_divergence(&[0.5f64, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_values() {
        // p=[1,0], q=[0.5,0.5] -> ln 2
        let v = kl_divergence(&[1.0f64, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 0.693147).abs() < 1e-6);
        // p=[0.75,0.25], q=[0.5,0.5] -> 0.75 ln 1.5 + 0.25 ln 0.5 = 0.130812
        let v = kl_divergence(&[0.75f64, 0.25], &[0.5, 0.5]).unwrap();
        assert!((v - 0.130812).abs() < 1e-6);
    }

    #[test]
    fn kl_infinite_support_mismatch() {
        assert!(matches!(
            kl_divergence(&[0.5f64, 0.5, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::InfiniteDivergence(1))
        ));
    }

    #[test]
    fn dot_score_orthogonal_is_zero() {
        let q = [1.0f32, 0.0];
        let keys = [0.0f32, 1.0, 2.0, 0.0];
        let mut out = [0.0f32; 2];
        dot_score(&q, &keys, 2, &mut out);
        assert_eq!(out, [0.0, 2.0]);
    }
}
