//! Executes run presets: dataset resolution, model construction, the
//! training loops, metric/summary export, checkpoint cadence, and resume.

use crate::checkpoint::{self, Fingerprint};
use crate::config::{build_model, BudgetKind, DatasetKind, Preset, RunConfig, ScheduleVariant};
use crate::error::{CliError, Result};
use crate::formats::{cifar, idx};
use optg_core::baselines::{
    cycle_experiment, first_order_saliency, layer_budget, measure_paradox_gap, one_shot_prune,
    BudgetMode, CycleConfig, NetworkBatchLoss,
};
use optg_core::data::{synthetic_blobs_split, Dataset};
use optg_core::metrics::MetricRecord;
use optg_core::nn::{Network, Params};
use optg_core::schedules::SparsitySchedule;
use optg_core::trainer::{
    evaluate_accuracy, fine_tune_with, FineTuneConfig, MaskUpdateFrequency, SparseModel,
    TrainConfig, Trainer,
};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const METRICS_HEADER: &str = "epoch,sparsity,train_loss,eval_acc,lr_w,lr_m,seconds";
pub const LAYER_HEADER: &str = "epoch,layer,sparsity";

/// Entry point for `optg run`.
pub fn run(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    write_text(&cfg.out.join("config.echo.txt"), &cfg.echo())?;

    if cfg.resume.is_some()
        && !matches!(cfg.preset, Preset::Dense | Preset::Optg)
    {
        return Err(CliError::config(format!(
            "field `resume`: not supported for preset {}",
            cfg.preset.as_str()
        )));
    }

    match cfg.preset {
        Preset::Dense => {
            trainer_run(cfg, &cfg.out, ScheduleVariant::Sigmoid, cfg.budget, 0.0, cfg.alpha)?;
        }
        Preset::Optg => {
            trainer_run(cfg, &cfg.out, cfg.schedule, cfg.budget, cfg.sparsity, cfg.alpha)?;
        }
        Preset::Oneshot => {
            run_oneshot(cfg)?;
        }
        Preset::GmpCycles => run_cycles(cfg)?,
        Preset::Paradox => run_paradox(cfg)?,
        Preset::AblateSchedule => {
            let mut rows = Vec::new();
            for variant in [ScheduleVariant::Sigmoid, ScheduleVariant::ZhuCubic] {
                let dir = cfg.out.join(format!("sched_{}", variant.as_str()));
                fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                let records =
                    trainer_run(cfg, &dir, variant, cfg.budget, cfg.sparsity, cfg.alpha)?;
                rows.push((variant.as_str().to_string(), final_acc(&records)));
            }
            write_summary(&cfg.out, "schedule", &rows)?;
        }
        Preset::AblateAlpha => {
            let mut rows = Vec::new();
            for &alpha in &cfg.alpha_grid {
                let dir = cfg.out.join(format!("alpha_{alpha}"));
                fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                let records =
                    trainer_run(cfg, &dir, cfg.schedule, cfg.budget, cfg.sparsity, alpha)?;
                rows.push((alpha.to_string(), final_acc(&records)));
            }
            write_summary(&cfg.out, "alpha", &rows)?;
        }
        Preset::AblateBudget => {
            let mut rows = Vec::new();
            for budget in [BudgetKind::Global, BudgetKind::Uniform, BudgetKind::Erk] {
                let dir = cfg.out.join(format!("budget_{}", budget.as_str()));
                fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                let records =
                    trainer_run(cfg, &dir, cfg.schedule, budget, cfg.sparsity, cfg.alpha)?;
                rows.push((budget.as_str().to_string(), final_acc(&records)));
            }
            write_summary(&cfg.out, "budget", &rows)?;
        }
        Preset::AblateMaskfreq => {
            let mut rows = Vec::new();
            for (name, freq) in [
                ("epoch", MaskUpdateFrequency::Epoch),
                ("every10", MaskUpdateFrequency::Iterations(10)),
                ("iteration", MaskUpdateFrequency::Iterations(1)),
            ] {
                let dir = cfg.out.join(format!("maskfreq_{name}"));
                fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                let mut sub = cfg.clone();
                sub.mask_update = freq;
                let records =
                    trainer_run(&sub, &dir, cfg.schedule, cfg.budget, cfg.sparsity, cfg.alpha)?;
                rows.push((name.to_string(), final_acc(&records)));
            }
            write_summary(&cfg.out, "mask_update", &rows)?;
        }
    }
    Ok(())
}

fn final_acc(records: &[MetricRecord]) -> f64 {
    records
        .last()
        .and_then(|r| r.eval_accuracy)
        .unwrap_or(f64::NAN)
}

fn write_summary(dir: &Path, key: &str, rows: &[(String, f64)]) -> Result<()> {
    let mut text = format!("{key},final_eval_acc\n");
    for (name, acc) in rows {
        text.push_str(&format!("{name},{acc}\n"));
    }
    write_text(&dir.join("summary.csv"), &text)
}

/// Loads the train/test splits for the configured dataset.
pub fn load_datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        DatasetKind::Synthetic => {
            let train = synthetic_blobs_split(
                cfg.seed,
                0,
                cfg.synth_train,
                cfg.synth_classes,
                cfg.synth_dim,
                cfg.synth_spread,
            )?
            .truncated(cfg.train_limit);
            let test = synthetic_blobs_split(
                cfg.seed,
                1,
                cfg.synth_test,
                cfg.synth_classes,
                cfg.synth_dim,
                cfg.synth_spread,
            )?
            .truncated(cfg.eval_limit);
            Ok((train, test))
        }
        DatasetKind::Mnist => {
            let dir = cfg.data_dir.as_ref().expect("validated");
            idx::load_dir(dir, cfg.train_limit, cfg.eval_limit)
        }
        DatasetKind::Cifar10 => {
            let dir = cfg.data_dir.as_ref().expect("validated");
            cifar::load_dir(dir, cfg.train_limit, cfg.eval_limit)
        }
    }
}

/// Builds the network for the configured model over a dataset's shape.
pub fn build_network(cfg: &RunConfig, train: &Dataset) -> Result<Network> {
    let specs = build_model(&cfg.model, train.sample_shape(), train.num_classes)?;
    Network::new(train.sample_shape().to_vec(), specs)
        .map_err(|e| CliError::config(format!("field `model`: {e}")))
}

fn exempt_layers(cfg: &RunConfig, network: &Network) -> Vec<usize> {
    let parametric = network.parametric_layers();
    match cfg.prune_exempt {
        crate::config::ExemptKind::None => Vec::new(),
        crate::config::ExemptKind::First => parametric.first().copied().into_iter().collect(),
        crate::config::ExemptKind::Last => parametric.last().copied().into_iter().collect(),
        crate::config::ExemptKind::FirstLast => {
            let mut v: Vec<usize> = parametric.first().copied().into_iter().collect();
            if let Some(&l) = parametric.last() {
                if Some(l) != parametric.first().copied() {
                    v.push(l);
                }
            }
            v
        }
    }
}

/// Thread cap: config field, then OPTG_NUM_THREADS, then host parallelism.
pub fn thread_cap(cfg_threads: usize) -> usize {
    if cfg_threads > 0 {
        return cfg_threads;
    }
    if let Ok(v) = std::env::var("OPTG_NUM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get().min(4))
        .unwrap_or(1)
}

/// Accuracy over the whole dataset, chunked across up to `threads` threads.
/// Counts are integers, so the result is identical for any thread count.
pub fn eval_accuracy_parallel(
    network: &Network,
    params: &Params,
    data: &Dataset,
    batch_size: usize,
    threads: usize,
) -> Result<Option<f64>> {
    let n = data.len();
    if n == 0 {
        return Ok(None);
    }
    let threads = threads.max(1).min(n.div_ceil(batch_size.max(1)).max(1));
    if threads == 1 {
        let (correct, total) = evaluate_accuracy(network, params, data, batch_size, 0..n)?;
        return Ok(Some(correct as f64 / total as f64));
    }
    let chunk = n.div_ceil(threads);
    let mut results: Vec<Result<(usize, usize)>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let lo = t * chunk;
            let hi = ((t + 1) * chunk).min(n);
            if lo >= hi {
                continue;
            }
            handles.push(scope.spawn(move || {
                evaluate_accuracy(network, params, data, batch_size, lo..hi)
                    .map_err(CliError::from)
            }));
        }
        for h in handles {
            results.push(h.join().expect("evaluation thread panicked"));
        }
    });
    let mut correct = 0;
    let mut total = 0;
    for r in results {
        let (c, t) = r?;
        correct += c;
        total += t;
    }
    Ok(Some(correct as f64 / total as f64))
}

struct MetricsWriter {
    path: PathBuf,
    layer_path: PathBuf,
}

impl MetricsWriter {
    /// Creates fresh CSVs, or keeps rows before `resume_epoch` when resuming
    /// into an existing run directory.
    fn open(dir: &Path, resume_epoch: Option<usize>) -> Result<Self> {
        let path = dir.join("metrics.csv");
        let layer_path = dir.join("layer_sparsity.csv");
        let keep = |p: &Path, header: &str| -> Result<()> {
            let mut rows = Vec::new();
            if let (Some(k), Ok(existing)) = (resume_epoch, fs::read_to_string(p)) {
                for line in existing.lines().skip(1) {
                    if let Some(e) = line.split(',').next().and_then(|s| s.parse::<usize>().ok()) {
                        if e < k {
                            rows.push(line.to_string());
                        }
                    }
                }
            }
            let mut text = String::from(header);
            text.push('\n');
            for r in rows {
                text.push_str(&r);
                text.push('\n');
            }
            write_text(p, &text)
        };
        keep(&path, METRICS_HEADER)?;
        keep(&layer_path, LAYER_HEADER)?;
        Ok(MetricsWriter { path, layer_path })
    }

    fn append(&self, record: &MetricRecord) -> Result<()> {
        let eval = record
            .eval_accuracy
            .map(|a| a.to_string())
            .unwrap_or_default();
        let row = format!(
            "{},{},{},{},{},{},{}\n",
            record.epoch,
            record.sparsity,
            record.train_loss,
            eval,
            record.weight_lr,
            record.mask_lr,
            record.seconds
        );
        append_text(&self.path, &row)?;
        let mut layers = String::new();
        for (label, s) in &record.per_layer_sparsity {
            layers.push_str(&format!("{},{label},{s}\n", record.epoch));
        }
        append_text(&self.layer_path, &layers)
    }
}

fn write_mask_summary(dir: &Path, model: &SparseModel) -> Result<()> {
    let mut layers = String::new();
    let mut kept_total = 0usize;
    let mut total = 0usize;
    for (i, p) in model.masked.iter().enumerate() {
        let kept = p.len() - p.pruned_count();
        kept_total += kept;
        total += p.len();
        if i > 0 {
            layers.push(',');
        }
        layers.push_str(&format!(
            "{{\"layer\":\"{}\",\"kept\":{},\"total\":{},\"sparsity\":{}}}",
            model.network.layer_label(p.layer_id),
            kept,
            p.len(),
            p.sparsity()
        ));
    }
    let global = if total == 0 {
        0.0
    } else {
        1.0 - kept_total as f64 / total as f64
    };
    let json = format!(
        "{{\"total\":{{\"kept\":{kept_total},\"total\":{total},\"sparsity\":{global}}},\"layers\":[{layers}]}}\n"
    );
    write_text(&dir.join("final_mask_summary.json"), &json)
}

/// The epoch-loop presets (dense and the supermask trainer, plus every
/// ablation variant). Returns the full record stream.
fn trainer_run(
    cfg: &RunConfig,
    dir: &Path,
    variant: ScheduleVariant,
    budget: BudgetKind,
    sparsity: f64,
    alpha: f64,
) -> Result<Vec<MetricRecord>> {
    if cfg.epochs == 0 {
        MetricsWriter::open(dir, None)?;
        println!("epochs = 0: config echoed, nothing to train");
        return Ok(Vec::new());
    }
    let (train, test) = load_datasets(cfg)?;
    if train.is_empty() {
        return Err(CliError::config("training dataset is empty"));
    }
    let network = build_network(cfg, &train)?;
    let exempt = exempt_layers(cfg, &network);
    let model = SparseModel::init(network, cfg.seed, &exempt);

    let schedule = match variant {
        ScheduleVariant::Sigmoid => SparsitySchedule::sigmoid(sparsity, alpha, cfg.epochs),
        ScheduleVariant::ZhuCubic => {
            let ramp = if cfg.zhu_ramp_end == 0 {
                cfg.epochs
            } else {
                cfg.zhu_ramp_end
            };
            SparsitySchedule::zhu_cubic(sparsity, cfg.epochs, ramp)
        }
    }?;
    let budgets = match budget {
        BudgetKind::Global => None,
        BudgetKind::Uniform => Some(layer_budget(&model, BudgetMode::Uniform, sparsity)?),
        BudgetKind::Erk => Some(layer_budget(&model, BudgetMode::Erk, sparsity)?),
    };
    let tc = TrainConfig {
        batch_size: cfg.batch_size,
        weight_lr0: cfg.lr,
        weight_momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        mask_momentum: cfg.mask_momentum,
        mask_weight_decay: cfg.mask_weight_decay,
        mask_update: cfg.mask_update,
        budgets,
        seed: cfg.seed,
        freeze_weights: false,
    };
    let mut trainer = Trainer::new(model, tc, schedule)?;

    let fingerprint = fingerprint_for(cfg, variant, budget, sparsity, alpha);
    let mut resume_epoch = None;
    if let Some(ck) = &cfg.resume {
        let (fp, state) = checkpoint::load(ck)?;
        if let Some(field) = fp.diff(&fingerprint) {
            return Err(CliError::config(format!(
                "field `resume`: checkpoint `{field}` does not match the current config"
            )));
        }
        if state.epoch >= cfg.epochs {
            println!("checkpoint already at final epoch {}; nothing to do", state.epoch);
            return Ok(Vec::new());
        }
        resume_epoch = Some(state.epoch);
        trainer.import_state(state)?;
    }

    let writer = MetricsWriter::open(dir, resume_epoch)?;
    let threads = thread_cap(cfg.threads);
    let mut records = Vec::new();
    while trainer.epoch() < cfg.epochs {
        let started = Instant::now();
        let mut record = trainer.train_epoch(&train, None)?;
        let params = trainer.model().effective_params();
        record.eval_accuracy = eval_accuracy_parallel(
            &trainer.model().network,
            &params,
            &test,
            cfg.batch_size,
            threads,
        )?;
        record.seconds = started.elapsed().as_secs_f64();
        writer.append(&record)?;
        let done = trainer.epoch();
        println!(
            "epoch {}/{} sparsity {:.6} loss {:.6} acc {} ({:.2}s)",
            done,
            cfg.epochs,
            record.sparsity,
            record.train_loss,
            record
                .eval_accuracy
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "-".into()),
            record.seconds
        );
        records.push(record);
        if cfg.checkpoint_every > 0
            && (done % cfg.checkpoint_every == 0 || done == cfg.epochs)
        {
            // Numbered files: earlier checkpoints survive later epochs and
            // divergence, so the last valid one is always on disk.
            checkpoint::save(
                &dir.join(format!("checkpoint_e{done}.ckpt")),
                &fingerprint,
                &trainer.export_state(),
            )?;
        }
    }
    write_mask_summary(dir, trainer.model())?;
    Ok(records)
}

fn fingerprint_for(
    cfg: &RunConfig,
    variant: ScheduleVariant,
    budget: BudgetKind,
    sparsity: f64,
    alpha: f64,
) -> Fingerprint {
    let mut effective = cfg.clone();
    effective.schedule = variant;
    effective.budget = budget;
    effective.sparsity = sparsity;
    effective.alpha = alpha;
    Fingerprint::of(&effective)
}

/// One-shot first-order pruning at initialization, then fixed-mask
/// fine-tuning for the full epoch budget.
fn run_oneshot(cfg: &RunConfig) -> Result<Vec<MetricRecord>> {
    if cfg.epochs == 0 {
        MetricsWriter::open(&cfg.out, None)?;
        println!("epochs = 0: config echoed, nothing to train");
        return Ok(Vec::new());
    }
    let (train, test) = load_datasets(cfg)?;
    if train.is_empty() {
        return Err(CliError::config("training dataset is empty"));
    }
    let network = build_network(cfg, &train)?;
    let exempt = exempt_layers(cfg, &network);
    let mut model = SparseModel::init(network, cfg.seed, &exempt);

    let take = cfg.saliency_batch.min(train.len()).max(1);
    let idx: Vec<u32> = (0..take as u32).collect();
    let (x, y) = train.batch(&idx)?;
    let scores = first_order_saliency(&model, &x, &y)?;
    one_shot_prune(&mut model, &scores, cfg.sparsity)?;

    let writer = MetricsWriter::open(&cfg.out, None)?;
    let records = timed_fine_tune(cfg, &mut model, &train, &test, cfg.epochs, 0, &writer)?;
    write_mask_summary(&cfg.out, &model)?;
    Ok(records)
}

/// Fixed-mask fine-tuning with wall-clock stamping and CSV streaming.
fn timed_fine_tune(
    cfg: &RunConfig,
    model: &mut SparseModel,
    train: &Dataset,
    test: &Dataset,
    epochs: usize,
    shuffle_offset: u64,
    writer: &MetricsWriter,
) -> Result<Vec<MetricRecord>> {
    let ft = FineTuneConfig {
        epochs,
        batch_size: cfg.batch_size,
        lr0: cfg.lr,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        seed: cfg.seed,
        shuffle_offset,
    };
    let mut last = Instant::now();
    let mut write_error: Option<CliError> = None;
    let records = fine_tune_with(model, &ft, train, Some(test), &mut |record| {
        record.seconds = last.elapsed().as_secs_f64();
        last = Instant::now();
        if write_error.is_none() {
            write_error = writer.append(record).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    Ok(records)
}

/// The iterative magnitude prune-and-retrain grid.
fn run_cycles(cfg: &RunConfig) -> Result<()> {
    let (train, test) = load_datasets(cfg)?;
    if train.is_empty() {
        return Err(CliError::config("training dataset is empty"));
    }
    let network = build_network(cfg, &train)?;
    let epoch_grid = if cfg.epoch_grid.is_empty() {
        vec![cfg.epochs]
    } else {
        cfg.epoch_grid.clone()
    };
    for &e in &epoch_grid {
        for &c in &cfg.cycles {
            if c == 0 || e % c != 0 {
                return Err(CliError::config(format!(
                    "field `cycles`: epochs {e} not divisible by {c} cycles"
                )));
            }
        }
    }
    let mut grid = String::from("cycles,epochs,final_acc\n");
    for &e in &epoch_grid {
        for &c in &cfg.cycles {
            let dir = cfg.out.join(format!("c{c}_e{e}"));
            fs::create_dir_all(&dir).map_err(|err| CliError::io(&dir, err))?;
            let cycle_cfg = CycleConfig {
                cycles: c,
                total_epochs: e,
                target: cfg.sparsity,
                batch_size: cfg.batch_size,
                lr0: cfg.lr,
                momentum: cfg.momentum,
                weight_decay: cfg.weight_decay,
                seed: cfg.seed,
            };
            let started = Instant::now();
            let outcome = cycle_experiment(&network, &cycle_cfg, &train, &test)?;
            let writer = MetricsWriter::open(&dir, None)?;
            let per_epoch = started.elapsed().as_secs_f64() / e.max(1) as f64;
            for mut r in outcome.records {
                r.seconds = per_epoch;
                writer.append(&r)?;
            }
            println!(
                "cycles {c} epochs {e}: final accuracy {:.4}",
                outcome.final_accuracy
            );
            grid.push_str(&format!("{c},{e},{}\n", outcome.final_accuracy));
        }
    }
    write_text(&cfg.out.join("cycle_grid.csv"), &grid)
}

/// Dense pre-training followed by the prediction-vs-actual gap measurement
/// on a fixed held-out batch.
fn run_paradox(cfg: &RunConfig) -> Result<()> {
    let (train, test) = load_datasets(cfg)?;
    if train.is_empty() {
        return Err(CliError::config("training dataset is empty"));
    }
    let network = build_network(cfg, &train)?;
    let exempt = exempt_layers(cfg, &network);
    let model = SparseModel::init(network, cfg.seed, &exempt);
    let n = model.prunable_weight_count();
    if n > optg_core::baselines::paradox::MAX_EXACT_WEIGHTS {
        return Err(CliError::config(format!(
            "field `model`: {n} prunable weights exceed the exact-measurement bound {}; use a smaller model",
            optg_core::baselines::paradox::MAX_EXACT_WEIGHTS
        )));
    }

    // Dense pre-training so the measurement happens on trained weights.
    let tc = TrainConfig {
        batch_size: cfg.batch_size,
        weight_lr0: cfg.lr,
        weight_momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        mask_momentum: cfg.mask_momentum,
        mask_weight_decay: cfg.mask_weight_decay,
        mask_update: cfg.mask_update,
        budgets: None,
        seed: cfg.seed,
        freeze_weights: false,
    };
    let schedule = SparsitySchedule::sigmoid(0.0, cfg.alpha, cfg.epochs.max(1))?;
    let mut trainer = Trainer::new(model, tc, schedule)?;
    let writer = MetricsWriter::open(&cfg.out, None)?;
    let threads = thread_cap(cfg.threads);
    for _ in 0..cfg.epochs {
        let started = Instant::now();
        let mut record = trainer.train_epoch(&train, None)?;
        let params = trainer.model().effective_params();
        record.eval_accuracy = eval_accuracy_parallel(
            &trainer.model().network,
            &params,
            &test,
            cfg.batch_size,
            threads,
        )?;
        record.seconds = started.elapsed().as_secs_f64();
        writer.append(&record)?;
    }

    let pool = if test.is_empty() { &train } else { &test };
    let take = cfg.paradox_batch.min(pool.len()).max(1);
    let idx: Vec<u32> = (0..take as u32).collect();
    let (x, y) = pool.batch(&idx)?;
    let model = trainer.model();
    let adapter = NetworkBatchLoss::new(model, &x, &y)?;
    let report = measure_paradox_gap(&adapter, &cfg.paradox_fractions, cfg.paradox_finetune)?;

    let mut csv =
        String::from("fraction,removed,predicted,actual,gap,actual_finetuned,gap_finetuned\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.fraction,
            row.removed,
            row.predicted,
            row.actual,
            row.gap,
            row.actual_finetuned.map(|v| v.to_string()).unwrap_or_default(),
            row.gap_finetuned.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    write_text(&cfg.out.join("paradox_report.csv"), &csv)?;
    println!(
        "paradox report over {} fractions written (dense loss {:.6})",
        report.rows.len(),
        report.dense_loss
    );
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn append_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}
