//! Versioned binary checkpoints: every masked parameter (weights, scores,
//! mask), dense weights, biases, all velocity buffers, the epoch cursor,
//! and a config fingerprint so a resume under a changed schedule is
//! rejected instead of silently bending the curves.

use crate::binio::{Reader, Writer};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use optg_core::masking::MaskedParameter;
use optg_core::tensor::Tensor;
use optg_core::trainer::TrainerState;
use std::path::Path;

const MAGIC: &[u8; 8] = b"OPTGCK\x00\x01";

/// The config fields that shape the training trajectory; a resumed run must
/// match them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub epochs: u64,
    pub batch_size: u64,
    pub seed: u64,
    pub sparsity: f64,
    pub alpha: f64,
    pub schedule: String,
    pub zhu_ramp_end: u64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub mask_momentum: f64,
    pub mask_weight_decay: f64,
    pub mask_update: String,
    pub budget: String,
    pub model: String,
    pub dataset: String,
    pub train_limit: u64,
}

impl Fingerprint {
    pub fn of(cfg: &RunConfig) -> Self {
        Fingerprint {
            epochs: cfg.epochs as u64,
            batch_size: cfg.batch_size as u64,
            seed: cfg.seed,
            sparsity: cfg.sparsity,
            alpha: cfg.alpha,
            schedule: cfg.schedule.as_str().to_string(),
            zhu_ramp_end: cfg.zhu_ramp_end as u64,
            lr: cfg.lr,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            mask_momentum: cfg.mask_momentum,
            mask_weight_decay: cfg.mask_weight_decay,
            mask_update: format!("{:?}", cfg.mask_update),
            budget: cfg.budget.as_str().to_string(),
            model: cfg.model.clone(),
            dataset: cfg.dataset.as_str().to_string(),
            train_limit: cfg.train_limit as u64,
        }
    }

    /// Names the first differing field, or `None` when compatible.
    pub fn diff(&self, other: &Fingerprint) -> Option<&'static str> {
        macro_rules! check {
            ($field:ident) => {
                if self.$field != other.$field {
                    return Some(stringify!($field));
                }
            };
        }
        check!(epochs);
        check!(batch_size);
        check!(seed);
        check!(sparsity);
        check!(alpha);
        check!(schedule);
        check!(zhu_ramp_end);
        check!(lr);
        check!(momentum);
        check!(weight_decay);
        check!(mask_momentum);
        check!(mask_weight_decay);
        check!(mask_update);
        check!(budget);
        check!(model);
        check!(dataset);
        check!(train_limit);
        None
    }
}

fn write_tensor(w: &mut Writer, t: &Tensor) {
    w.usize_slice(t.shape());
    for &v in t.data() {
        w.f64(v);
    }
}

fn read_tensor(r: &mut Reader<'_>) -> Result<Tensor> {
    let shape = r.usize_vec()?;
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(r.f64()?);
    }
    Tensor::new(shape, data).map_err(|e| CliError::state(format!("checkpoint tensor: {e}")))
}

fn write_slot_tensors(w: &mut Writer, slots: &[(usize, Tensor)]) {
    w.u64(slots.len() as u64);
    for (layer_id, t) in slots {
        w.u64(*layer_id as u64);
        write_tensor(w, t);
    }
}

fn read_slot_tensors(r: &mut Reader<'_>) -> Result<Vec<(usize, Tensor)>> {
    let n = r.u64()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let layer_id = r.u64()? as usize;
        out.push((layer_id, read_tensor(r)?));
    }
    Ok(out)
}

fn write_tensors(w: &mut Writer, ts: &[Tensor]) {
    w.u64(ts.len() as u64);
    for t in ts {
        write_tensor(w, t);
    }
}

fn read_tensors(r: &mut Reader<'_>) -> Result<Vec<Tensor>> {
    let n = r.u64()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_tensor(r)?);
    }
    Ok(out)
}

pub fn save(path: &Path, fp: &Fingerprint, state: &TrainerState) -> Result<()> {
    let mut w = Writer::new(MAGIC);
    for s in [
        &fp.schedule,
        &fp.mask_update,
        &fp.budget,
        &fp.model,
        &fp.dataset,
    ] {
        w.bytes(s.as_bytes());
    }
    for v in [fp.epochs, fp.batch_size, fp.seed, fp.zhu_ramp_end, fp.train_limit] {
        w.u64(v);
    }
    for v in [
        fp.sparsity,
        fp.alpha,
        fp.lr,
        fp.momentum,
        fp.weight_decay,
        fp.mask_momentum,
        fp.mask_weight_decay,
    ] {
        w.f64(v);
    }

    w.u64(state.epoch as u64);
    w.u64(state.masked.len() as u64);
    for p in &state.masked {
        w.u64(p.layer_id as u64);
        write_tensor(&mut w, &p.weights);
        write_tensor(&mut w, &p.scores);
        w.bytes(&p.mask);
    }
    write_slot_tensors(&mut w, &state.dense);
    write_slot_tensors(&mut w, &state.biases);
    write_tensors(&mut w, &state.vel_weights);
    write_tensors(&mut w, &state.vel_dense);
    write_tensors(&mut w, &state.vel_biases);
    write_tensors(&mut w, &state.vel_scores);
    std::fs::write(path, w.buf).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<(Fingerprint, TrainerState)> {
    let buf = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut r = Reader::new(&buf, path, MAGIC)
        .map_err(|_| CliError::state(format!("{}: not a checkpoint of this version", path.display())))?;
    let mut strings = Vec::with_capacity(5);
    for _ in 0..5 {
        let s = String::from_utf8(r.bytes()?)
            .map_err(|e| CliError::state(format!("checkpoint string: {e}")))?;
        strings.push(s);
    }
    let [schedule, mask_update, budget, model, dataset]: [String; 5] =
        strings.try_into().unwrap();
    let epochs = r.u64()?;
    let batch_size = r.u64()?;
    let seed = r.u64()?;
    let zhu_ramp_end = r.u64()?;
    let train_limit = r.u64()?;
    let sparsity = r.f64()?;
    let alpha = r.f64()?;
    let lr = r.f64()?;
    let momentum = r.f64()?;
    let weight_decay = r.f64()?;
    let mask_momentum = r.f64()?;
    let mask_weight_decay = r.f64()?;
    let fp = Fingerprint {
        epochs,
        batch_size,
        seed,
        sparsity,
        alpha,
        schedule,
        zhu_ramp_end,
        lr,
        momentum,
        weight_decay,
        mask_momentum,
        mask_weight_decay,
        mask_update,
        budget,
        model,
        dataset,
        train_limit,
    };

    let epoch = r.u64()? as usize;
    let n_masked = r.u64()? as usize;
    let mut masked = Vec::with_capacity(n_masked);
    for _ in 0..n_masked {
        let layer_id = r.u64()? as usize;
        let weights = read_tensor(&mut r)?;
        let scores = read_tensor(&mut r)?;
        let mask = r.bytes()?;
        if mask.len() != weights.len() || !weights.same_shape(&scores) {
            return Err(CliError::state("checkpoint mask/weight shape mismatch"));
        }
        masked.push(MaskedParameter {
            layer_id,
            weights,
            scores,
            mask,
        });
    }
    let dense = read_slot_tensors(&mut r)?;
    let biases = read_slot_tensors(&mut r)?;
    let vel_weights = read_tensors(&mut r)?;
    let vel_dense = read_tensors(&mut r)?;
    let vel_biases = read_tensors(&mut r)?;
    let vel_scores = read_tensors(&mut r)?;
    r.done()?;
    Ok((
        fp,
        TrainerState {
            epoch,
            masked,
            dense,
            biases,
            vel_weights,
            vel_dense,
            vel_biases,
            vel_scores,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::temp_dir;

    #[test]
    fn fingerprint_diff_names_changed_field() {
        let cfg = RunConfig::default();
        let a = Fingerprint::of(&cfg);
        let mut changed = cfg.clone();
        changed.epochs += 5;
        let b = Fingerprint::of(&changed);
        assert_eq!(a.diff(&b), Some("epochs"));
        assert_eq!(a.diff(&a.clone()), None);
    }

    #[test]
    fn corrupt_magic_is_state_error() {
        let dir = temp_dir("ckpt-magic");
        let p = dir.join("x.ckpt");
        std::fs::write(&p, b"NOTACKPT").unwrap();
        assert!(matches!(load(&p), Err(CliError::State(_))));
    }
}
