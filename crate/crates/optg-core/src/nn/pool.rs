//! 2-D max pooling. The forward records flat argmax indices so backward is
//! an exact scatter; ties resolve to the first element in row-major scan
//! order.

use super::conv_out_dim;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use alloc::vec;
use alloc::vec::Vec;

pub fn forward(x: &Tensor, kernel: usize, stride: usize) -> Result<(Tensor, Vec<u32>)> {
    let &[n, c, h, w] = x.shape() else {
        return Err(Error::dimension("maxpool2d expects [N,C,H,W] input"));
    };
    let ho = conv_out_dim(h, kernel, stride, 0)?;
    let wo = conv_out_dim(w, kernel, stride, 0)?;
    let mut out = vec![0.0; n * c * ho * wo];
    let mut argmax = vec![0u32; n * c * ho * wo];
    let data = x.data();
    let mut oi = 0;
    for s in 0..n {
        for ch in 0..c {
            let plane_base = (s * c + ch) * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for ki in 0..kernel {
                        let row = plane_base + (i * stride + ki) * w + j * stride;
                        for kj in 0..kernel {
                            let v = data[row + kj];
                            if v > best {
                                best = v;
                                best_idx = row + kj;
                            }
                        }
                    }
                    out[oi] = best;
                    argmax[oi] = best_idx as u32;
                    oi += 1;
                }
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, argmax))
}

pub fn backward(input_shape: &[usize], argmax: &[u32], grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::dimension("maxpool2d grad/argmax length mismatch"));
    }
    let numel: usize = input_shape.iter().product();
    let mut gin = vec![0.0; numel];
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gin[idx as usize] += g;
    }
    Tensor::new(input_shape.to_vec(), gin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_maxima() {
        let x = Tensor::new(
            vec![1, 1, 4, 4],
            vec![
                1.0, 2.0, 5.0, 4.0, //
                3.0, 0.0, 1.0, 1.0, //
                0.0, 0.5, 2.0, 2.5, //
                7.0, 1.0, 1.0, 2.0,
            ],
        )
        .unwrap();
        let (y, _) = forward(&x, 2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[3.0, 5.0, 7.0, 2.5]);
    }

    #[test]
    fn backward_routes_to_argmax() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 4.0, 2.0, 3.0]).unwrap();
        let (_, argmax) = forward(&x, 2, 2).unwrap();
        let g = Tensor::new(vec![1, 1, 1, 1], vec![10.0]).unwrap();
        let gin = backward(&[1, 1, 2, 2], &argmax, &g).unwrap();
        assert_eq!(gin.data(), &[0.0, 10.0, 0.0, 0.0]);
    }

    #[test]
    fn ties_take_first_in_scan_order() {
        let x = Tensor::filled(vec![1, 1, 2, 2], 1.5);
        let (_, argmax) = forward(&x, 2, 2).unwrap();
        assert_eq!(argmax, vec![0]);
    }
}
