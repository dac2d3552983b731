//! Procedural image classification corpora written in the real dataset
//! formats (IDX and CIFAR-10 binary).
//!
//! Classes are signed bump patterns over a class-shared anchor dictionary:
//! every class lights up its own subset of the same anchor set, with its own
//! signs and amplitudes, so spatial energy alone does not separate classes.
//! Samples jitter anchors and amplitudes, mix in distractor bumps borrowed
//! from other classes, and add pixel noise before u8 quantization. The
//! resulting tasks are learnable by small networks but leave real headroom,
//! so capacity allocation at high sparsity matters.

use crate::error::Result;
use crate::formats::{cifar, idx};
use optg_core::rng::Rng;
use std::path::Path;

const DOMAIN_ANCHORS: u64 = 0x9a00;
const DOMAIN_PROTO: u64 = 0x9a01;
const DOMAIN_SAMPLE: u64 = 0x9a02;

#[derive(Clone, Copy)]
struct Bump {
    anchor: usize,
    sigma: f64,
    amp: f64,
    color: [f64; 3],
}

struct Task {
    anchors: Vec<(f64, f64)>,
    classes: Vec<Vec<Bump>>,
    /// Per-class full-image micro-texture, one value per pixel and channel.
    textures: Vec<Vec<f64>>,
}

struct Difficulty {
    anchor_count: usize,
    bumps_per_class: usize,
    /// Per-sample clutter bumps drawn fresh from the dictionary; identically
    /// distributed for every class, so they carry no label information.
    clutter_bumps: usize,
    sigma_range: (f64, f64),
    noise: f64,
    background: f64,
    /// Scale on the class bump patterns; 0 leaves the texture as the only
    /// class signal.
    bump_signal: f64,
    /// Amplitude of the class texture. Low amplitude under pixel noise means
    /// the signal only emerges by integrating many pixels, which is exactly
    /// what a heavily pruned first layer struggles to do.
    texture_amp: f64,
    colored: bool,
}

// Backgrounds sit near the conventional normalization means so the loaded
// tensors are roughly centered; badly off-center inputs destabilize SGD at
// the default learning rate.
const MNIST_LIKE: Difficulty = Difficulty {
    anchor_count: 36,
    bumps_per_class: 12,
    clutter_bumps: 8,
    sigma_range: (1.3, 2.4),
    noise: 0.14,
    background: 0.13,
    bump_signal: 1.0,
    texture_amp: 0.02,
    colored: false,
};

const CIFAR_LIKE: Difficulty = Difficulty {
    anchor_count: 40,
    bumps_per_class: 12,
    clutter_bumps: 12,
    sigma_range: (1.4, 2.8),
    noise: 0.14,
    background: 0.45,
    bump_signal: 0.28,
    texture_amp: 0.03,
    colored: true,
};

fn build_task(seed: u64, classes: usize, side: f64, channels: usize, d: &Difficulty) -> Task {
    let mut rng = Rng::derive(seed, DOMAIN_ANCHORS, 0);
    let anchors: Vec<(f64, f64)> = (0..d.anchor_count)
        .map(|_| {
            (
                rng.uniform_range(0.15 * side, 0.85 * side),
                rng.uniform_range(0.15 * side, 0.85 * side),
            )
        })
        .collect();
    let pixels = channels * (side as usize) * (side as usize);
    let textures = (0..classes)
        .map(|c| {
            let mut rng = Rng::derive(seed, DOMAIN_PROTO, 0x1000 + c as u64);
            (0..pixels).map(|_| rng.normal() * d.texture_amp).collect()
        })
        .collect();
    let class_bumps = (0..classes)
        .map(|c| {
            let mut rng = Rng::derive(seed, DOMAIN_PROTO, c as u64);
            (0..d.bumps_per_class)
                .map(|_| {
                    // Mostly bright bumps; dark ones matter where patterns
                    // overlap, and they clip against the dark background.
                    let sign = if rng.uniform() < 0.3 { -1.0 } else { 1.0 };
                    Bump {
                        anchor: rng.below(d.anchor_count),
                        sigma: rng.uniform_range(d.sigma_range.0, d.sigma_range.1),
                        amp: sign * rng.uniform_range(0.45, 0.85),
                        color: if d.colored {
                            [
                                rng.uniform_range(0.2, 1.0),
                                rng.uniform_range(0.2, 1.0),
                                rng.uniform_range(0.2, 1.0),
                            ]
                        } else {
                            [1.0, 1.0, 1.0]
                        },
                    }
                })
                .collect()
        })
        .collect();
    Task {
        anchors,
        classes: class_bumps,
        textures,
    }
}

fn paint(
    plane: &mut [f64],
    side: usize,
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
    color: &[f64; 3],
    channels: usize,
) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let reach = (3.0 * sigma).ceil() as isize;
    let x0 = ((cx as isize) - reach).max(0) as usize;
    let x1 = (((cx as isize) + reach + 1).max(0) as usize).min(side);
    let y0 = ((cy as isize) - reach).max(0) as usize;
    let y1 = (((cy as isize) + reach + 1).max(0) as usize).min(side);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let v = amp * (-(dx * dx + dy * dy) * inv).exp();
            for ch in 0..channels {
                plane[ch * side * side + y * side + x] += v * color[ch];
            }
        }
    }
}

/// Renders one jittered sample of class `c`, with distractor bumps borrowed
/// from other classes, quantized to u8.
#[allow(clippy::too_many_arguments)]
fn render_sample(
    task: &Task,
    c: usize,
    rng: &mut Rng,
    side: usize,
    channels: usize,
    d: &Difficulty,
    out: &mut [u8],
) {
    let mut plane = vec![d.background; channels * side * side];
    let gx = (rng.normal() * 1.2).clamp(-3.0, 3.0);
    let gy = (rng.normal() * 1.2).clamp(-3.0, 3.0);
    let contrast = rng.uniform_range(0.8, 1.2);
    for (p, t) in plane.iter_mut().zip(&task.textures[c]) {
        *p += t * contrast;
    }
    if d.bump_signal > 0.0 {
        for bump in &task.classes[c] {
            let (ax, ay) = task.anchors[bump.anchor];
            let cx = ax + gx + rng.normal() * 0.8;
            let cy = ay + gy + rng.normal() * 0.8;
            let amp = bump.amp * d.bump_signal * contrast * rng.uniform_range(0.75, 1.25);
            paint(&mut plane, side, cx, cy, bump.sigma, amp, &bump.color, channels);
        }
    }
    // Label-free clutter: bumps drawn fresh from the shared dictionary with
    // the same distribution for every class.
    for _ in 0..d.clutter_bumps {
        let (ax, ay) = task.anchors[rng.below(task.anchors.len())];
        let cx = ax + gx + rng.normal() * 1.2;
        let cy = ay + gy + rng.normal() * 1.2;
        let sigma = rng.uniform_range(d.sigma_range.0, d.sigma_range.1);
        let sign = if rng.uniform() < 0.3 { -1.0 } else { 1.0 };
        let amp = sign * rng.uniform_range(0.2, 0.5);
        let color = if d.colored {
            [rng.uniform(), rng.uniform(), rng.uniform()]
        } else {
            [1.0, 1.0, 1.0]
        };
        paint(&mut plane, side, cx, cy, sigma, amp, &color, channels);
    }
    for (o, v) in out.iter_mut().zip(&plane) {
        let noisy = v + rng.normal() * d.noise;
        *o = (noisy.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
}

fn generate_split(
    seed: u64,
    split: u64,
    n: usize,
    side: usize,
    channels: usize,
    task: &Task,
    d: &Difficulty,
) -> (Vec<u8>, Vec<u8>) {
    let classes = task.classes.len();
    let mut rng = Rng::derive(seed, DOMAIN_SAMPLE, split);
    let mut pixels = vec![0u8; n * channels * side * side];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c as u8);
        let out = &mut pixels[i * channels * side * side..(i + 1) * channels * side * side];
        render_sample(task, c, &mut rng, side, channels, d, out);
    }
    (labels, pixels)
}

/// Writes a 10-class 28x28 grayscale corpus in IDX files with the
/// conventional names under `dir`.
pub fn generate_mnist_like(dir: &Path, seed: u64, n_train: usize, n_test: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::CliError::io(dir, e))?;
    let task = build_task(seed, 10, 28.0, 1, &MNIST_LIKE);
    let (train_labels, train_pixels) =
        generate_split(seed, 0, n_train, 28, 1, &task, &MNIST_LIKE);
    let (test_labels, test_pixels) = generate_split(seed, 1, n_test, 28, 1, &task, &MNIST_LIKE);
    idx::write_images(&dir.join("train-images-idx3-ubyte"), 28, 28, &train_pixels)?;
    idx::write_labels(&dir.join("train-labels-idx1-ubyte"), &train_labels)?;
    idx::write_images(&dir.join("t10k-images-idx3-ubyte"), 28, 28, &test_pixels)?;
    idx::write_labels(&dir.join("t10k-labels-idx1-ubyte"), &test_labels)?;
    Ok(())
}

/// Writes a 10-class 32x32 RGB corpus in CIFAR-10 binary batches under
/// `dir`. All classes share the anchor dictionary and background, so color
/// statistics alone do not separate them.
pub fn generate_cifar_like(dir: &Path, seed: u64, n_train: usize, n_test: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::CliError::io(dir, e))?;
    let task = build_task(seed, 10, 32.0, 3, &CIFAR_LIKE);
    let (train_labels, train_pixels) =
        generate_split(seed, 0, n_train, 32, 3, &task, &CIFAR_LIKE);
    let (test_labels, test_pixels) =
        generate_split(seed, 1, n_test, 32, 3, &task, &CIFAR_LIKE);
    // Spread training records over the five conventional batch files.
    let per = n_train.div_ceil(5).max(1);
    for b in 0..5 {
        let lo = (b * per).min(n_train);
        let hi = ((b + 1) * per).min(n_train);
        cifar::write_batch(
            &dir.join(format!("data_batch_{}.bin", b + 1)),
            &train_labels[lo..hi],
            &train_pixels[lo * cifar::IMAGE_BYTES..hi * cifar::IMAGE_BYTES],
        )?;
    }
    cifar::write_batch(&dir.join("test_batch.bin"), &test_labels, &test_pixels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{cifar, idx};
    use crate::testutil::temp_dir;

    #[test]
    fn mnist_like_is_deterministic_and_loadable() {
        let a = temp_dir("synth-mnist-a");
        let b = temp_dir("synth-mnist-b");
        generate_mnist_like(&a, 5, 60, 20).unwrap();
        generate_mnist_like(&b, 5, 60, 20).unwrap();
        let (train_a, test_a) = idx::load_dir(&a, 0, 0).unwrap();
        let (train_b, _) = idx::load_dir(&b, 0, 0).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(train_a.len(), 60);
        assert_eq!(test_a.len(), 20);
        assert_eq!(train_a.sample_shape(), &[1, 28, 28]);
        // balanced labels
        for c in 0..10 {
            assert_eq!(train_a.labels.iter().filter(|&&l| l == c).count(), 6);
        }
    }

    #[test]
    fn cifar_like_loads_through_the_binary_format() {
        let dir = temp_dir("synth-cifar");
        generate_cifar_like(&dir, 9, 50, 10).unwrap();
        let (train, test) = cifar::load_dir(&dir, 0, 0).unwrap();
        assert_eq!(train.len(), 50);
        assert_eq!(test.len(), 10);
        assert_eq!(train.sample_shape(), &[3, 32, 32]);
        assert!(train.inputs.all_finite());
    }

    #[test]
    fn different_seeds_give_different_tasks() {
        let a = temp_dir("synth-seed-a");
        let b = temp_dir("synth-seed-b");
        generate_mnist_like(&a, 1, 10, 0).unwrap();
        generate_mnist_like(&b, 2, 10, 0).unwrap();
        let (ta, _) = idx::load_dir(&a, 0, 0).unwrap();
        let (tb, _) = idx::load_dir(&b, 0, 0).unwrap();
        assert_ne!(ta.inputs.data(), tb.inputs.data());
    }
}
