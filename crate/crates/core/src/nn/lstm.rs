//! Single LSTM cell, forward only (the teacher is frozen; no gradient path).

use crate::mat::{dense_forward_into, Real};

/// Parameter layout for one cell: `wx` is [in, 4h], `wh` is [h, 4h], `bias` is
/// [4h]; gate order along the 4h axis is (input, forget, cell, output).
#[derive(Debug, Clone, Copy)]
pub struct LstmDims {
    pub input: usize,
    pub hidden: usize,
}

impl LstmDims {
    /// 4 * (h*(h+in) + h): weight and bias count of the cell.
    pub fn param_count(&self) -> usize {
        4 * (self.hidden * (self.hidden + self.input) + self.hidden)
    }
}

#[inline]
fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// One step for a batch of independent states.
///
/// `x` is [m, in]; `h`/`c` are [m, hidden] and are updated in place.
/// `gates` is scratch of size [m, 4*hidden].
#[allow(clippy::too_many_arguments)]
pub fn lstm_cell_forward_batch<F: Real>(
    x: &[F],
    m: usize,
    dims: &LstmDims,
    wx: &[F],
    wh: &[F],
    bias: &[F],
    h: &mut [F],
    c: &mut [F],
    gates: &mut [F],
) {
    let hd = dims.hidden;
    let g4 = 4 * hd;
    debug_assert_eq!(x.len(), m * dims.input);
    debug_assert_eq!(h.len(), m * hd);
    debug_assert_eq!(gates.len(), m * g4);
    dense_forward_into(x, m, dims.input, wx, bias, g4, gates);
    // gates += h * wh
    F::gemm(false, false, m, g4, hd, F::one(), h, wh, F::one(), gates);
    for r in 0..m {
        let g = &mut gates[r * g4..(r + 1) * g4];
        let hrow = &mut h[r * hd..(r + 1) * hd];
        let crow = &mut c[r * hd..(r + 1) * hd];
        for j in 0..hd {
            let i_g = sigmoid(g[j]);
            let f_g = sigmoid(g[hd + j]);
            let g_g = g[2 * hd + j].tanh();
            let o_g = sigmoid(g[3 * hd + j]);
            let c_new = f_g * crow[j] + i_g * g_g;
            crow[j] = c_new;
            hrow[j] = o_g * c_new.tanh();
        }
    }
}

/// Single-state convenience wrapper.
pub fn lstm_cell_forward<F: Real>(
    x: &[F],
    dims: &LstmDims,
    wx: &[F],
    wh: &[F],
    bias: &[F],
    h: &mut [F],
    c: &mut [F],
) {
    let mut gates = vec![F::zero(); 4 * dims.hidden];
    lstm_cell_forward_batch(x, 1, dims, wx, wh, bias, h, c, &mut gates);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_zero_state() {
        let dims = LstmDims { input: 3, hidden: 2 };
        let wx = vec![0.0f64; 3 * 8];
        let wh = vec![0.0f64; 2 * 8];
        let b = vec![0.0f64; 8];
        let mut h = vec![0.0f64; 2];
        let mut c = vec![0.0f64; 2];
        lstm_cell_forward(&[1.0, -2.0, 0.5], &dims, &wx, &wh, &b, &mut h, &mut c);
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn forget_gate_bias_hand_value() {
        // zero weights, forget-gate bias +10, c=[1]:
        // c' = sigmoid(10)*1 + 0.5*0 ~= 0.99995, h' = 0.5*tanh(c') ~= 0.38078
        let dims = LstmDims { input: 1, hidden: 1 };
        let wx = vec![0.0f64; 4];
        let wh = vec![0.0f64; 4];
        let mut b = vec![0.0f64; 4];
        b[1] = 10.0; // forget gate
        let mut h = vec![0.0f64];
        let mut c = vec![1.0f64];
        lstm_cell_forward(&[0.0], &dims, &wx, &wh, &b, &mut h, &mut c);
        assert!((c[0] - 0.99995).abs() < 1e-5, "c'={}", c[0]);
        assert!((h[0] - 0.38078).abs() < 1e-5, "h'={}", h[0]);
    }

    #[test]
    fn matches_scalar_reference() {
        // Independent scalar evaluation of the same gate equations.
        let dims = LstmDims { input: 2, hidden: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let wx: Vec<f64> = (0..2 * 12).map(|_| rng.random::<f64>() - 0.5).collect();
        let wh: Vec<f64> = (0..3 * 12).map(|_| rng.random::<f64>() - 0.5).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.random::<f64>() - 0.5).collect();
        let x = [0.3, -0.7];
        let h0 = [0.1, 0.2, -0.3];
        let c0 = [0.05, -0.15, 0.25];

        let mut h = h0.to_vec();
        let mut c = c0.to_vec();
        lstm_cell_forward(&x, &dims, &wx, &wh, &b, &mut h, &mut c);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for j in 0..3 {
            let pre = |gate: usize| -> f64 {
                let col = gate * 3 + j;
                b[col] + x[0] * wx[col] + x[1] * wx[12 + col]
                    + h0[0] * wh[col]
                    + h0[1] * wh[12 + col]
                    + h0[2] * wh[24 + col]
            };
            let (ig, fg, gg, og) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
            let c_ref = fg * c0[j] + ig * gg;
            let h_ref = og * c_ref.tanh();
            assert!((c[j] - c_ref).abs() < 1e-6, "c[{j}]: {} vs {}", c[j], c_ref);
            assert!((h[j] - h_ref).abs() < 1e-6, "h[{j}]: {} vs {}", h[j], h_ref);
        }
    }

    #[test]
    fn param_count_formula() {
        let dims = LstmDims { input: 1024, hidden: 1024 };
        assert_eq!(dims.param_count(), 8_392_704);
    }
}
