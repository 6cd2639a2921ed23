//! Set max-pooling over equal-length vectors with argmax gradient routing.

use crate::error::{Error, Result};
use crate::mat::Real;

/// Elementwise maximum over `count` stacked vectors of width `width`.
///
/// `argmax` records, per output coordinate, which input vector supplied the
/// max (first index wins ties) so the gradient can be routed back.
pub fn set_max_pool<F: Real>(
    stacked: &[F],
    count: usize,
    width: usize,
    out: &mut [F],
    argmax: &mut [u32],
) -> Result<()> {
    if count == 0 {
        return Err(Error::Empty("set_max_pool: empty input".into()));
    }
    debug_assert_eq!(stacked.len(), count * width);
    debug_assert_eq!(out.len(), width);
    debug_assert_eq!(argmax.len(), width);
    out.copy_from_slice(&stacked[..width]);
    argmax.iter_mut().for_each(|v| *v = 0);
    for i in 1..count {
        let row = &stacked[i * width..(i + 1) * width];
        for j in 0..width {
            if row[j] > out[j] {
                out[j] = row[j];
                argmax[j] = i as u32;
            }
        }
    }
    Ok(())
}

/// Routes `dout` entirely to the argmax vector per coordinate.
pub fn set_max_pool_backward<F: Real>(argmax: &[u32], width: usize, dout: &[F], dstacked: &mut [F]) {
    for j in 0..width {
        let i = argmax[j] as usize;
        dstacked[i * width + j] = dstacked[i * width + j] + dout[j];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vector_is_identity() {
        let x = [1.0f32, -2.0, 3.0];
        let mut out = [0.0f32; 3];
        let mut arg = [9u32; 3];
        set_max_pool(&x, 1, 3, &mut out, &mut arg).unwrap();
        assert_eq!(out, x);
        assert_eq!(arg, [0, 0, 0]);
    }

    #[test]
    fn hand_example() {
        // [1,5], [3,2], [2,2] -> [3,5]
        let x = [1.0f32, 5.0, 3.0, 2.0, 2.0, 2.0];
        let mut out = [0.0f32; 2];
        let mut arg = [0u32; 2];
        set_max_pool(&x, 3, 2, &mut out, &mut arg).unwrap();
        assert_eq!(out, [3.0, 5.0]);
        assert_eq!(arg, [1, 0]);
    }

    #[test]
    fn ties_route_to_first_index() {
        let x = [2.0f32, 2.0, 2.0, 2.0];
        let mut out = [0.0f32; 2];
        let mut arg = [7u32; 2];
        set_max_pool(&x, 2, 2, &mut out, &mut arg).unwrap();
        assert_eq!(out, [2.0, 2.0]);
        assert_eq!(arg, [0, 0]);
        let mut dx = vec![0.0f32; 4];
        set_max_pool_backward(&arg, 2, &[1.0, 1.0], &mut dx);
        assert_eq!(dx, vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_rejected() {
        let mut out = [0.0f32; 0];
        let mut arg = [0u32; 0];
        assert!(set_max_pool::<f32>(&[], 0, 0, &mut out, &mut arg).is_err());
    }

    #[test]
    fn dominated_input_never_changes_output() {
        // max-pool dominance: replacing one vector with elementwise-smaller
        // values never changes the pooled output when it wasn't the argmax.
        let x = [5.0f32, 5.0, 1.0, 1.0];
        let weaker = [5.0f32, 5.0, 0.5, 0.2];
        let mut a = [0.0f32; 2];
        let mut b = [0.0f32; 2];
        let mut arg = [0u32; 2];
        set_max_pool(&x, 2, 2, &mut a, &mut arg).unwrap();
        set_max_pool(&weaker, 2, 2, &mut b, &mut arg).unwrap();
        assert_eq!(a, b);
    }
}
