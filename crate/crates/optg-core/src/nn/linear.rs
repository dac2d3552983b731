//! Fully-connected layer: `y = x W^T + b` with weight `[out, in]`.

use super::LayerParams;
use crate::error::{Error, Result};
use crate::tensor::{mm, mm_a_bt, mm_at_b, Tensor};
use alloc::vec;

pub fn forward(p: &LayerParams, x: &Tensor) -> Result<Tensor> {
    let &[n, input] = x.shape() else {
        return Err(Error::dimension("linear expects [N, in] input"));
    };
    let &[out, input_w] = p.weight.shape() else {
        return Err(Error::dimension("linear weight must be [out, in]"));
    };
    if input != input_w {
        return Err(Error::dimension(format_args!(
            "linear input {input} vs weight fan-in {input_w}"
        )));
    }
    let mut y = vec![0.0; n * out];
    mm_a_bt(x.data(), n, input, p.weight.data(), out, &mut y);
    let bias = p.bias.data();
    for row in y.chunks_exact_mut(out) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    Tensor::new(vec![n, out], y)
}

pub fn backward(
    p: &LayerParams,
    cached_input: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, LayerParams)> {
    let &[n, input] = cached_input.shape() else {
        return Err(Error::dimension("linear cache must be [N, in]"));
    };
    let &[n_g, out] = grad_out.shape() else {
        return Err(Error::dimension("linear grad must be [N, out]"));
    };
    if n != n_g || p.weight.shape() != [out, input] {
        return Err(Error::dimension("linear backward shape mismatch"));
    }

    // dL/dx = g W
    let mut gin = vec![0.0; n * input];
    mm(grad_out.data(), n, out, p.weight.data(), input, &mut gin);

    // dL/dW = g^T x
    let mut gw = vec![0.0; out * input];
    mm_at_b(grad_out.data(), n, out, cached_input.data(), input, &mut gw);

    // dL/db = column sums of g
    let mut gb = vec![0.0; out];
    for row in grad_out.data().chunks_exact(out) {
        for (b, g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }

    Ok((
        Tensor::new(vec![n, input], gin)?,
        LayerParams {
            weight: Tensor::new(vec![out, input], gw)?,
            bias: Tensor::new(vec![out], gb)?,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_layer() -> LayerParams {
        LayerParams {
            weight: Tensor::new(vec![2, 3], vec![1.0, -1.0, 0.5, 0.0, 2.0, -0.5]).unwrap(),
            bias: Tensor::new(vec![2], vec![0.1, -0.2]).unwrap(),
        }
    }

    #[test]
    fn forward_by_hand() {
        let p = small_layer();
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = forward(&p, &x).unwrap();
        // row0: 1 - 2 + 1.5 + 0.1 = 0.6 ; row1: 0 + 4 - 1.5 - 0.2 = 2.3
        assert!((y.data()[0] - 0.6).abs() < 1e-12);
        assert!((y.data()[1] - 2.3).abs() < 1e-12);
    }

    #[test]
    fn zero_cotangent_gives_zero_grads() {
        let p = small_layer();
        let x = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let g = Tensor::zeros(vec![2, 2]);
        let (gin, gp) = backward(&p, &x, &g).unwrap();
        assert!(gin.data().iter().all(|&v| v == 0.0));
        assert!(gp.weight.data().iter().all(|&v| v == 0.0));
        assert!(gp.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_output() {
        let p = LayerParams {
            weight: Tensor::new(vec![2, 3], vec![0.3; 6]).unwrap(),
            bias: Tensor::zeros(vec![2]),
        };
        let x = Tensor::zeros(vec![4, 3]);
        let y = forward(&p, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}
