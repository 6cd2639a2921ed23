//! 2-D convolution in the cross-correlation convention (no kernel flip).

use crate::error::{Error, Result};
use crate::mat::Real;

#[derive(Debug, Clone, Copy)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    pub fn out_hw(&self) -> Result<(usize, usize)> {
        let num_h = self.h + 2 * self.pad;
        let num_w = self.w + 2 * self.pad;
        if num_h < self.k || num_w < self.k {
            return Err(Error::ShapeMismatch("conv: kernel larger than padded input".into()));
        }
        if (num_h - self.k) % self.stride != 0 || (num_w - self.k) % self.stride != 0 {
            return Err(Error::ShapeMismatch(format!(
                "conv: non-integral output extent for h={} w={} k={} s={} p={}",
                self.h, self.w, self.k, self.stride, self.pad
            )));
        }
        Ok(((num_h - self.k) / self.stride + 1, (num_w - self.k) / self.stride + 1))
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }
}

/// Gather the input patches of one image into `cols` ([oh*ow, c_in*k*k] row-major).
pub fn im2col<F: Real>(x: &[F], s: &ConvShape, oh: usize, ow: usize, cols: &mut [F]) {
    let plen = s.patch_len();
    debug_assert_eq!(x.len(), s.c_in * s.h * s.w);
    debug_assert_eq!(cols.len(), oh * ow * plen);
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * plen;
            let iy0 = (oy * s.stride) as isize - s.pad as isize;
            let ix0 = (ox * s.stride) as isize - s.pad as isize;
            let mut p = base;
            for c in 0..s.c_in {
                let chan = &x[c * s.h * s.w..(c + 1) * s.h * s.w];
                for ky in 0..s.k {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= s.h as isize {
                        for _ in 0..s.k {
                            cols[p] = F::zero();
                            p += 1;
                        }
                        continue;
                    }
                    let row = &chan[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for kx in 0..s.k {
                        let ix = ix0 + kx as isize;
                        cols[p] = if ix < 0 || ix >= s.w as isize { F::zero() } else { row[ix as usize] };
                        p += 1;
                    }
                }
            }
        }
    }
}

/// Scatter-add of column gradients back onto the input image (inverse of im2col).
pub fn col2im_add<F: Real>(cols: &[F], s: &ConvShape, oh: usize, ow: usize, dx: &mut [F]) {
    let plen = s.patch_len();
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * plen;
            let iy0 = (oy * s.stride) as isize - s.pad as isize;
            let ix0 = (ox * s.stride) as isize - s.pad as isize;
            let mut p = base;
            for c in 0..s.c_in {
                for ky in 0..s.k {
                    let iy = iy0 + ky as isize;
                    for kx in 0..s.k {
                        let ix = ix0 + kx as isize;
                        if iy >= 0 && iy < s.h as isize && ix >= 0 && ix < s.w as isize {
                            let idx = c * s.h * s.w + iy as usize * s.w + ix as usize;
                            dx[idx] = dx[idx] + cols[p];
                        }
                        p += 1;
                    }
                }
            }
        }
    }
}

/// Forward for one image: y[co, oy, ox] = b[co] + sum_{ci,ky,kx} x[ci, ...] * w[co, ci, ky, kx].
///
/// Plain sequential accumulation, bit-reproducible against a loop-nest oracle
/// in 64-bit mode. The batched training path uses `conv2d_forward_gemm`.
pub fn conv2d_forward<F: Real>(x: &[F], w: &[F], b: &[F], s: &ConvShape, y: &mut [F]) -> Result<()> {
    let (oh, ow) = s.out_hw()?;
    let plen = s.patch_len();
    if w.len() != s.c_out * plen || b.len() != s.c_out || y.len() != s.c_out * oh * ow {
        return Err(Error::ShapeMismatch("conv2d_forward: buffer sizes".into()));
    }
    for co in 0..s.c_out {
        let wrow = &w[co * plen..(co + 1) * plen];
        for oy in 0..oh {
            for ox in 0..ow {
                let iy0 = (oy * s.stride) as isize - s.pad as isize;
                let ix0 = (ox * s.stride) as isize - s.pad as isize;
                let mut acc = b[co];
                for ci in 0..s.c_in {
                    let chan = &x[ci * s.h * s.w..(ci + 1) * s.h * s.w];
                    for ky in 0..s.k {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        for kx in 0..s.k {
                            let ix = ix0 + kx as isize;
                            if ix >= 0 && ix < s.w as isize {
                                acc = acc
                                    + chan[iy as usize * s.w + ix as usize]
                                        * wrow[ci * s.k * s.k + ky * s.k + kx];
                            }
                        }
                    }
                }
                y[co * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    Ok(())
}

/// GEMM-backed forward for one image via im2col; `cols` is reusable scratch.
pub fn conv2d_forward_gemm<F: Real>(
    x: &[F],
    w: &[F],
    b: &[F],
    s: &ConvShape,
    cols: &mut Vec<F>,
    y: &mut [F],
) -> Result<()> {
    let (oh, ow) = s.out_hw()?;
    let plen = s.patch_len();
    if w.len() != s.c_out * plen || b.len() != s.c_out || y.len() != s.c_out * oh * ow {
        return Err(Error::ShapeMismatch("conv2d_forward: buffer sizes".into()));
    }
    cols.clear();
    cols.resize(oh * ow * plen, F::zero());
    im2col(x, s, oh, ow, cols);
    // y^T layout trick: compute [oh*ow, c_out] = cols * w^T then transpose into y.
    let mut yt = vec![F::zero(); oh * ow * s.c_out];
    F::gemm(false, true, oh * ow, s.c_out, plen, F::one(), cols, w, F::zero(), &mut yt);
    for pos in 0..oh * ow {
        for co in 0..s.c_out {
            y[co * oh * ow + pos] = yt[pos * s.c_out + co] + b[co];
        }
    }
    Ok(())
}

/// Backward for one image. `cols` must hold the forward im2col of `x`.
/// Accumulates dw/db; writes dx if provided.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<F: Real>(
    cols: &[F],
    w: &[F],
    s: &ConvShape,
    dy: &[F],
    dw: &mut [F],
    db: &mut [F],
    dx: Option<&mut [F]>,
) -> Result<()> {
    let (oh, ow) = s.out_hw()?;
    let plen = s.patch_len();
    // dy arrives as [c_out, oh*ow]; transpose to [oh*ow, c_out].
    let mut dyt = vec![F::zero(); oh * ow * s.c_out];
    for co in 0..s.c_out {
        for pos in 0..oh * ow {
            dyt[pos * s.c_out + co] = dy[co * oh * ow + pos];
        }
    }
    // dw [c_out, plen] += dyt^T * cols
    F::gemm(true, false, s.c_out, plen, oh * ow, F::one(), &dyt, cols, F::one(), dw);
    for co in 0..s.c_out {
        let mut acc = F::zero();
        for pos in 0..oh * ow {
            acc = acc + dy[co * oh * ow + pos];
        }
        db[co] = db[co] + acc;
    }
    if let Some(dx) = dx {
        let mut dcols = vec![F::zero(); oh * ow * plen];
        F::gemm(false, false, oh * ow, plen, s.c_out, F::one(), &dyt, w, F::zero(), &mut dcols);
        col2im_add(&dcols, s, oh, ow, dx);
    }
    Ok(())
}
