//! The prediction-vs-actual gap measurement, validated on quadratic losses
//! where the first-order remainder has a closed form.

use optg_core::baselines::{measure_paradox_gap, NetworkBatchLoss, SaliencyLoss};
use optg_core::nn::{LayerSpec, Network};
use optg_core::rng::Rng;
use optg_core::tensor::Tensor;
use optg_core::trainer::SparseModel;

/// Separable quadratic: L(w) = sum_i a_i (w_i - c_i)^2. Removing a set S
/// changes the loss by sum_{i in S} a_i (c_i^2 - (w_i - c_i)^2); the
/// first-order prediction is sum -2 a_i (w_i - c_i) w_i, so the gap equals
/// sum_{i in S} a_i w_i^2 exactly.
struct Quadratic {
    a: Vec<f64>,
    c: Vec<f64>,
    w: Vec<f64>,
}

impl SaliencyLoss for Quadratic {
    fn weight_count(&self) -> usize {
        self.w.len()
    }

    fn weights(&self) -> Vec<f64> {
        self.w.clone()
    }

    fn dense_loss_and_grad(&self) -> optg_core::Result<(f64, Vec<f64>)> {
        let loss = self
            .a
            .iter()
            .zip(&self.c)
            .zip(&self.w)
            .map(|((a, c), w)| a * (w - c) * (w - c))
            .sum();
        let grad = self
            .a
            .iter()
            .zip(&self.c)
            .zip(&self.w)
            .map(|((a, c), w)| 2.0 * a * (w - c))
            .collect();
        Ok((loss, grad))
    }

    fn loss_with_pruned(&self, pruned: &[bool]) -> optg_core::Result<f64> {
        Ok(self
            .a
            .iter()
            .zip(&self.c)
            .zip(self.w.iter().zip(pruned))
            .map(|((a, c), (w, &p))| {
                let v = if p { 0.0 } else { *w };
                a * (v - c) * (v - c)
            })
            .sum())
    }

    fn finetuned_loss_with_pruned(
        &self,
        _pruned: &[bool],
        _steps: usize,
    ) -> optg_core::Result<Option<f64>> {
        Ok(None)
    }
}

#[test]
fn zero_fraction_gives_zero_gap() {
    let q = Quadratic {
        a: vec![1.0, 2.0, 0.5],
        c: vec![0.3, -0.2, 0.9],
        w: vec![0.5, 0.1, 1.2],
    };
    let report = measure_paradox_gap(&q, &[0.0], 0).unwrap();
    assert_eq!(report.rows[0].removed, 0);
    assert_eq!(report.rows[0].predicted, 0.0);
    assert!(report.rows[0].gap.abs() < 1e-15);
}

#[test]
fn single_weight_gap_equals_second_order_remainder() {
    // One parameter: gap must equal a * w^2 exactly.
    let q = Quadratic {
        a: vec![1.7],
        c: vec![0.4],
        w: vec![0.9],
    };
    let report = measure_paradox_gap(&q, &[0.5], 0).unwrap();
    let row = &report.rows[0];
    assert_eq!(row.removed, 1);
    let remainder = 1.7 * 0.9 * 0.9;
    assert!(
        (row.gap - remainder).abs() < 1e-12,
        "gap {} vs remainder {remainder}",
        row.gap
    );
}

#[test]
fn group_gap_is_sum_of_remainders_and_grows_with_fraction() {
    let mut rng = Rng::seeded(40);
    let n = 64;
    let q = Quadratic {
        a: (0..n).map(|_| 0.5 + rng.uniform()).collect(),
        c: (0..n).map(|_| rng.normal()).collect(),
        w: (0..n).map(|_| rng.normal()).collect(),
    };
    let fractions = [0.1, 0.25, 0.5, 0.75];
    let report = measure_paradox_gap(&q, &fractions, 0).unwrap();

    // Closed form: each row's gap is the sum of a_i w_i^2 over its set, and
    // the sets are nested, so the gap is nondecreasing in the fraction.
    let mut prev_gap = 0.0;
    for row in &report.rows {
        assert!(row.gap >= prev_gap - 1e-12, "gap should grow: {row:?}");
        prev_gap = row.gap;
    }
    // Verify the last row against an explicit recomputation of the set.
    let (_, grad) = q.dense_loss_and_grad().unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (grad[i] * q.w[i])
            .abs()
            .total_cmp(&(grad[j] * q.w[j]).abs())
            .then(i.cmp(&j))
    });
    let removed = report.rows[3].removed;
    let expect: f64 = order[..removed].iter().map(|&i| q.a[i] * q.w[i] * q.w[i]).sum();
    assert!((report.rows[3].gap - expect).abs() < 1e-10);
}

#[test]
fn fraction_of_one_is_input_error() {
    let q = Quadratic {
        a: vec![1.0; 4],
        c: vec![0.0; 4],
        w: vec![1.0; 4],
    };
    assert!(matches!(
        measure_paradox_gap(&q, &[1.0], 0),
        Err(optg_core::Error::Input(_))
    ));
}

#[test]
fn network_adapter_measures_finite_gaps() {
    let net = Network::new(
        vec![6],
        vec![
            LayerSpec::Linear {
                in_features: 6,
                out_features: 8,
            },
            LayerSpec::Relu,
            LayerSpec::Linear {
                in_features: 8,
                out_features: 3,
            },
        ],
    )
    .unwrap();
    let model = SparseModel::init(net, 4, &[]);
    let mut rng = Rng::seeded(8);
    let x = Tensor::new(
        vec![16, 6],
        (0..96).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let labels: Vec<usize> = (0..16).map(|_| rng.below(3)).collect();
    let adapter = NetworkBatchLoss::new(&model, &x, &labels).unwrap();
    let report = measure_paradox_gap(&adapter, &[0.1, 0.5, 0.9], 5).unwrap();
    for row in &report.rows {
        assert!(row.gap.is_finite());
        assert!(row.actual.is_finite());
        let ft = row.actual_finetuned.unwrap();
        assert!(ft.is_finite());
        // Fine-tuning the survivors cannot make the batch loss worse than
        // leaving them untouched (SGD on the measurement batch itself).
        assert!(ft <= row.actual + 1e-9, "{ft} vs {}", row.actual);
    }
}

#[test]
fn network_adapter_requires_dense_start() {
    let net = Network::new(
        vec![3],
        vec![LayerSpec::Linear {
            in_features: 3,
            out_features: 2,
        }],
    )
    .unwrap();
    let mut model = SparseModel::init(net, 4, &[]);
    model.masked[0].mask[0] = 0;
    let x = Tensor::zeros(vec![1, 3]);
    assert!(NetworkBatchLoss::new(&model, &x, &[0]).is_err());
}
