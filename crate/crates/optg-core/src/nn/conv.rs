//! 2-D convolution with cross-correlation semantics (no kernel flip),
//! realized as im2col plus the shared matmul kernels.

use super::{conv_out_dim, LayerParams};
use crate::error::{Error, Result};
use crate::tensor::{mm, mm_a_bt, mm_at_b, Tensor};
use alloc::vec;

struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn dims(p: &LayerParams, x: &Tensor, stride: usize, padding: usize) -> Result<ConvDims> {
    let &[n, c, h, w] = x.shape() else {
        return Err(Error::dimension("conv2d expects [N,C,H,W] input"));
    };
    let &[o, ck, kh, kw] = p.weight.shape() else {
        return Err(Error::dimension("conv2d kernel must be [O,C,kh,kw]"));
    };
    if ck != c {
        return Err(Error::dimension(format_args!(
            "conv2d input channels {c} vs kernel channels {ck}"
        )));
    }
    let ho = conv_out_dim(h, kh, stride, padding)?;
    let wo = conv_out_dim(w, kw, stride, padding)?;
    Ok(ConvDims {
        n,
        c,
        h,
        w,
        o,
        kh,
        kw,
        ho,
        wo,
    })
}

/// Gathers one sample's padded patches into `cols[C*kh*kw, Ho*Wo]`.
fn im2col(x_plane: &[f64], d: &ConvDims, stride: usize, padding: usize, cols: &mut [f64]) {
    let hw = d.ho * d.wo;
    for c in 0..d.c {
        let chan = &x_plane[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = ((c * d.kh + ki) * d.kw + kj) * hw;
                for ho in 0..d.ho {
                    let ih = (ho * stride + ki) as isize - padding as isize;
                    let out_row = &mut cols[row + ho * d.wo..row + (ho + 1) * d.wo];
                    if ih < 0 || ih >= d.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &chan[ih as usize * d.w..(ih as usize + 1) * d.w];
                    for (wo, slot) in out_row.iter_mut().enumerate() {
                        let iw = (wo * stride + kj) as isize - padding as isize;
                        *slot = if iw < 0 || iw >= d.w as isize {
                            0.0
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` gradients back onto one sample's input plane.
fn col2im(cols: &[f64], d: &ConvDims, stride: usize, padding: usize, gx_plane: &mut [f64]) {
    let hw = d.ho * d.wo;
    for c in 0..d.c {
        let chan = &mut gx_plane[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = ((c * d.kh + ki) * d.kw + kj) * hw;
                for ho in 0..d.ho {
                    let ih = (ho * stride + ki) as isize - padding as isize;
                    if ih < 0 || ih >= d.h as isize {
                        continue;
                    }
                    let src = &cols[row + ho * d.wo..row + (ho + 1) * d.wo];
                    let dst = &mut chan[ih as usize * d.w..(ih as usize + 1) * d.w];
                    for (wo, &g) in src.iter().enumerate() {
                        let iw = (wo * stride + kj) as isize - padding as isize;
                        if iw >= 0 && (iw as usize) < d.w {
                            dst[iw as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

pub fn forward(p: &LayerParams, x: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let d = dims(p, x, stride, padding)?;
    let ckk = d.c * d.kh * d.kw;
    let hw = d.ho * d.wo;
    let mut cols = vec![0.0; ckk * hw];
    let mut out = vec![0.0; d.n * d.o * hw];
    let bias = p.bias.data();
    for s in 0..d.n {
        let x_plane = &x.data()[s * d.c * d.h * d.w..(s + 1) * d.c * d.h * d.w];
        im2col(x_plane, &d, stride, padding, &mut cols);
        let y_plane = &mut out[s * d.o * hw..(s + 1) * d.o * hw];
        mm(p.weight.data(), d.o, ckk, &cols, hw, y_plane);
        for (o, chunk) in y_plane.chunks_exact_mut(hw).enumerate() {
            let b = bias[o];
            for v in chunk {
                *v += b;
            }
        }
    }
    Tensor::new(vec![d.n, d.o, d.ho, d.wo], out)
}

pub fn backward(
    p: &LayerParams,
    cached_input: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, LayerParams)> {
    let d = dims(p, cached_input, stride, padding)?;
    if grad_out.shape() != [d.n, d.o, d.ho, d.wo] {
        return Err(Error::dimension("conv2d grad shape mismatch"));
    }
    let ckk = d.c * d.kh * d.kw;
    let hw = d.ho * d.wo;
    let mut cols = vec![0.0; ckk * hw];
    let mut gcols = vec![0.0; ckk * hw];
    let mut gx = vec![0.0; d.n * d.c * d.h * d.w];
    let mut gw = vec![0.0; d.o * ckk];
    let mut gb = vec![0.0; d.o];

    for s in 0..d.n {
        let x_plane =
            &cached_input.data()[s * d.c * d.h * d.w..(s + 1) * d.c * d.h * d.w];
        im2col(x_plane, &d, stride, padding, &mut cols);
        let g_plane = &grad_out.data()[s * d.o * hw..(s + 1) * d.o * hw];

        // dL/dW accumulates g * cols^T across the batch.
        mm_a_bt(g_plane, d.o, hw, &cols, ckk, &mut gw);

        // dL/db accumulates spatial sums per output channel.
        for (o, chunk) in g_plane.chunks_exact(hw).enumerate() {
            gb[o] += chunk.iter().sum::<f64>();
        }

        // dL/dcols = W^T g, then scatter back to the input plane.
        gcols.fill(0.0);
        mm_at_b(p.weight.data(), d.o, ckk, g_plane, hw, &mut gcols);
        let gx_plane = &mut gx[s * d.c * d.h * d.w..(s + 1) * d.c * d.h * d.w];
        col2im(&gcols, &d, stride, padding, gx_plane);
    }

    Ok((
        Tensor::new(vec![d.n, d.c, d.h, d.w], gx)?,
        LayerParams {
            weight: Tensor::new(vec![d.o, d.c, d.kh, d.kw], gw)?,
            bias: Tensor::new(vec![d.o], gb)?,
        },
    ))
}
