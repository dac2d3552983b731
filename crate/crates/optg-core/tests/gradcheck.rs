//! Finite-difference validation of every layer kind's analytic gradients.
//!
//! Cases are screened so the loss is differentiable in the probed
//! neighborhood: ReLU pre-activations stay away from the kink and pooling
//! windows have a clear runner-up gap; otherwise central differences would
//! measure the wrong one-sided slope.

use optg_core::gradcheck::check_network_gradients;
use optg_core::nn::{layer_forward, LayerSpec, Network, Params};
use optg_core::rng::Rng;
use optg_core::tensor::Tensor;

const FD_STEP: f64 = 1e-5;
const MARGIN: f64 = 1e-3;

fn random_input(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
}

/// Walks the forward pass and rejects configurations where an infinitesimal
/// step could cross a ReLU kink or flip a pooling argmax.
fn fd_safe(network: &Network, params: &Params, x: &Tensor) -> bool {
    let mut act = x.clone();
    for (i, spec) in network.specs().iter().enumerate() {
        match spec {
            LayerSpec::Relu => {
                if act.data().iter().any(|v| v.abs() < MARGIN) {
                    return false;
                }
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let &[n, c, h, w] = act.shape() else { return false };
                let ho = (h - kernel) / stride + 1;
                let wo = (w - kernel) / stride + 1;
                let data = act.data();
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * h * w;
                        for oi in 0..ho {
                            for oj in 0..wo {
                                let mut vals: Vec<f64> = Vec::new();
                                for ki in 0..*kernel {
                                    for kj in 0..*kernel {
                                        vals.push(
                                            data[base + (oi * stride + ki) * w + oj * stride + kj],
                                        );
                                    }
                                }
                                vals.sort_by(|a, b| b.total_cmp(a));
                                if vals.len() > 1 && vals[0] - vals[1] < MARGIN {
                                    return false;
                                }
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        let (out, _) = layer_forward(spec, params.layers[i].as_ref(), &act).unwrap();
        act = out;
    }
    true
}

/// Finds a seed whose sampled case is FD-safe and runs the check.
fn check_case(input_shape: Vec<usize>, specs: Vec<LayerSpec>, classes: usize, batch: usize, seed: u64) -> f64 {
    let network = Network::new(input_shape.clone(), specs).unwrap();
    for attempt in 0..50 {
        let mut rng = Rng::derive(seed, 0xfd, attempt);
        let params = network.init_params(&mut rng);
        let mut shape = vec![batch];
        shape.extend_from_slice(&input_shape);
        let x = random_input(&mut rng, shape);
        let labels: Vec<usize> = (0..batch).map(|_| rng.below(classes)).collect();
        if !fd_safe(&network, &params, &x) {
            continue;
        }
        let report = check_network_gradients(&network, &params, &x, &labels, FD_STEP).unwrap();
        assert!(report.coords_checked > 0);
        return report.max_rel_err;
    }
    panic!("no FD-safe case found for seed {seed}");
}

#[test]
fn linear_stacks_match_finite_differences() {
    for seed in 0..8 {
        let mut rng = Rng::derive(seed, 0x11, 0);
        let d_in = 1 + rng.below(6);
        let hidden = 1 + rng.below(6);
        let classes = 2 + rng.below(3);
        let batch = 1 + rng.below(3);
        let err = check_case(
            vec![d_in],
            vec![
                LayerSpec::Linear {
                    in_features: d_in,
                    out_features: hidden,
                },
                LayerSpec::Relu,
                LayerSpec::Linear {
                    in_features: hidden,
                    out_features: classes,
                },
            ],
            classes,
            batch,
            seed,
        );
        assert!(err < 1e-6, "seed {seed}: max rel err {err}");
    }
}

#[test]
fn conv_nets_match_finite_differences() {
    for seed in 0..6 {
        let mut rng = Rng::derive(seed, 0x22, 0);
        let c = 1 + rng.below(3);
        let o = 1 + rng.below(3);
        let hw = 4 + rng.below(4);
        let k = 1 + rng.below(3).min(hw - 1);
        let stride = 1 + rng.below(2);
        // k = 1 with padding would make border windows see only padding:
        // identically-zero pre-activations sit exactly on the ReLU kink.
        let padding = if k == 1 { 0 } else { rng.below(2) };
        let classes = 2 + rng.below(3);
        let ho = (hw + 2 * padding - k) / stride + 1;
        let flat = o * ho * ho;
        let err = check_case(
            vec![c, hw, hw],
            vec![
                LayerSpec::Conv2d {
                    in_channels: c,
                    out_channels: o,
                    kernel_h: k,
                    kernel_w: k,
                    stride,
                    padding,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features: flat,
                    out_features: classes,
                },
            ],
            classes,
            1 + rng.below(2),
            seed,
        );
        assert!(err < 1e-6, "seed {seed}: max rel err {err}");
    }
}

#[test]
fn pooled_conv_nets_match_finite_differences() {
    for seed in 0..6 {
        let mut rng = Rng::derive(seed, 0x33, 0);
        let c = 1 + rng.below(2);
        let o = 1 + rng.below(3);
        let hw = 6;
        let classes = 2 + rng.below(3);
        let flat = o * 3 * 3;
        let err = check_case(
            vec![c, hw, hw],
            vec![
                LayerSpec::Conv2d {
                    in_channels: c,
                    out_channels: o,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features: flat,
                    out_features: classes,
                },
            ],
            classes,
            2,
            seed,
        );
        assert!(err < 1e-6, "seed {seed}: max rel err {err}");
    }
}

#[test]
fn relu_dead_region_gets_zero_gradient() {
    use optg_core::nn::layer_backward;
    let spec = LayerSpec::Relu;
    let x = Tensor::new(vec![1, 4], vec![-0.5, -1.0, -2.0, -0.1]).unwrap();
    let (out, entry) = layer_forward(&spec, None, &x).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
    let g = Tensor::filled(vec![1, 4], 3.0);
    let (gin, gparams) = layer_backward(&spec, None, entry, &g).unwrap();
    assert!(gin.data().iter().all(|&v| v == 0.0));
    assert!(gparams.is_none());
}

#[test]
fn forward_is_deterministic() {
    let network = Network::new(
        vec![2, 6, 6],
        vec![
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel_h: 3,
                kernel_w: 3,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Linear {
                in_features: 48,
                out_features: 3,
            },
        ],
    )
    .unwrap();
    let mut rng = Rng::seeded(42);
    let params = network.init_params(&mut rng);
    let x = random_input(&mut rng, vec![3, 2, 6, 6]);
    let a = network.forward(&params, &x, None).unwrap();
    let b = network.forward(&params, &x, None).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn backward_without_forward_is_state_error() {
    let network = Network::new(
        vec![3],
        vec![LayerSpec::Linear {
            in_features: 3,
            out_features: 2,
        }],
    )
    .unwrap();
    let mut rng = Rng::seeded(1);
    let params = network.init_params(&mut rng);
    let mut tape = optg_core::nn::GradientTape::new();
    let g = Tensor::zeros(vec![1, 2]);
    assert!(matches!(
        network.backward(&params, &mut tape, &g),
        Err(optg_core::Error::State(_))
    ));
}

#[test]
fn tape_is_consumed_by_backward() {
    let network = Network::new(
        vec![3],
        vec![LayerSpec::Linear {
            in_features: 3,
            out_features: 2,
        }],
    )
    .unwrap();
    let mut rng = Rng::seeded(2);
    let params = network.init_params(&mut rng);
    let x = random_input(&mut rng, vec![2, 3]);
    let mut tape = optg_core::nn::GradientTape::new();
    network.forward(&params, &x, Some(&mut tape)).unwrap();
    let g = Tensor::zeros(vec![2, 2]);
    network.backward(&params, &mut tape, &g).unwrap();
    assert!(tape.is_empty());
    // second backward on the spent tape fails
    assert!(network.backward(&params, &mut tape, &g).is_err());
}
