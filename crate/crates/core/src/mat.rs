//! Dense row-major matrices and the scalar abstraction shared by the 32-bit
//! training path and the 64-bit gradient-checking path.

use num_traits::Float;

/// Scalar type usable by every kernel in the crate. `f32` is the training and
/// inference type; `f64` exists for gradient checking and oracles.
pub trait Real:
    Float + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    /// C = alpha * op(A) * op(B) + beta * C, row-major.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        n: usize,
        k: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                trans_a: bool,
                trans_b: bool,
                m: usize,
                n: usize,
                k: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k, "gemm: A too short");
                assert!(b.len() >= k * n, "gemm: B too short");
                assert!(c.len() >= m * n, "gemm: C too short");
                // Row-major strides; a transposed operand swaps its strides.
                let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Row-major 2-D buffer.
#[derive(Debug, Clone)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec: length mismatch");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Resize in place, zeroing contents. Keeps the allocation when possible.
    pub fn reset(&mut self, rows: usize, cols: usize) {
        self.rows = rows;
        self.cols = cols;
        self.data.clear();
        self.data.resize(rows * cols, F::zero());
    }

    /// Resize in place without clearing retained cells; only growth is
    /// zero-filled. For buffers whose every cell is overwritten next.
    pub fn reset_for_overwrite(&mut self, rows: usize, cols: usize) {
        self.rows = rows;
        self.cols = cols;
        self.data.resize(rows * cols, F::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// y = x * w + broadcast(b); x is [m, in], w is [in, out] row-major, b is [out].
pub fn dense_forward_into<F: Real>(x: &[F], m: usize, in_dim: usize, w: &[F], b: &[F], out_dim: usize, y: &mut [F]) {
    debug_assert_eq!(x.len(), m * in_dim);
    debug_assert_eq!(w.len(), in_dim * out_dim);
    debug_assert_eq!(b.len(), out_dim);
    debug_assert_eq!(y.len(), m * out_dim);
    F::gemm(false, false, m, out_dim, in_dim, F::one(), x, w, F::zero(), y);
    for r in 0..m {
        let row = &mut y[r * out_dim..(r + 1) * out_dim];
        for (v, bb) in row.iter_mut().zip(b) {
            *v = *v + *bb;
        }
    }
}

/// dx = dy * w^T. dy is [m, out], w is [in, out]; dx is [m, in].
pub fn dense_backward_input<F: Real>(dy: &[F], m: usize, in_dim: usize, out_dim: usize, w: &[F], dx: &mut [F]) {
    F::gemm(false, true, m, in_dim, out_dim, F::one(), dy, w, F::zero(), dx);
}

/// dw += x^T * dy; db += column sums of dy.
pub fn dense_backward_params<F: Real>(
    x: &[F],
    dy: &[F],
    m: usize,
    in_dim: usize,
    out_dim: usize,
    dw: &mut [F],
    db: &mut [F],
) {
    F::gemm(true, false, in_dim, out_dim, m, F::one(), x, dy, F::one(), dw);
    for r in 0..m {
        let row = &dy[r * out_dim..(r + 1) * out_dim];
        for (acc, v) in db.iter_mut().zip(row) {
            *acc = *acc + *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity() {
        // W = I2, b = 0, x = [3,4] -> [3,4]
        let w = vec![1.0f32, 0.0, 0.0, 1.0];
        let b = vec![0.0f32; 2];
        let x = vec![3.0f32, 4.0];
        let mut y = vec![0.0f32; 2];
        dense_forward_into(&x, 1, 2, &w, &b, 2, &mut y);
        assert_eq!(y, vec![3.0, 4.0]);
    }

    #[test]
    fn dense_hand_example() {
        // W = [[1,2],[3,4]] row-major in->out, b = [1,1], x = [1,1] -> [5,7]
        let w = vec![1.0f32, 2.0, 3.0, 4.0];
        let b = vec![1.0f32, 1.0];
        let x = vec![1.0f32, 1.0];
        let mut y = vec![0.0f32; 2];
        dense_forward_into(&x, 1, 2, &w, &b, 2, &mut y);
        assert_eq!(y, vec![5.0, 7.0]);
    }

    #[test]
    fn dense_zero_input_gives_bias() {
        let w = vec![2.0f32; 6];
        let b = vec![0.5f32, -1.5];
        let x = vec![0.0f32; 3];
        let mut y = vec![0.0f32; 2];
        dense_forward_into(&x, 1, 3, &w, &b, 2, &mut y);
        assert_eq!(y, vec![0.5, -1.5]);
    }

    #[test]
    fn gemm_transpose_matches_manual() {
        // dw = x^T * dy with x [2,3], dy [2,2]
        let x = vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let dy = vec![1.0f64, 0.5, -1.0, 2.0];
        let mut dw = vec![0.0f64; 6];
        let mut db = vec![0.0f64; 2];
        dense_backward_params(&x, &dy, 2, 3, 2, &mut dw, &mut db);
        // manual: dw[i][j] = sum_r x[r][i] * dy[r][j]
        let expect = [
            1.0 * 1.0 + 4.0 * -1.0,
            1.0 * 0.5 + 4.0 * 2.0,
            2.0 * 1.0 + 5.0 * -1.0,
            2.0 * 0.5 + 5.0 * 2.0,
            3.0 * 1.0 + 6.0 * -1.0,
            3.0 * 0.5 + 6.0 * 2.0,
        ];
        for (a, e) in dw.iter().zip(expect.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(db, vec![0.0, 2.5]);
    }
}
