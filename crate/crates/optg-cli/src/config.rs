//! Run configuration: a flat, typed key=value file format with an explicit
//! schema version, overridable by command-line flags. The resolved config
//! (defaults included) is echoed into every run directory so experiments
//! stay diff-able.

use crate::error::{CliError, Result};
use optg_core::nn::LayerSpec;
use optg_core::trainer::MaskUpdateFrequency;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Dense,
    Optg,
    Oneshot,
    GmpCycles,
    Paradox,
    AblateSchedule,
    AblateAlpha,
    AblateBudget,
    AblateMaskfreq,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dense" => Preset::Dense,
            "optg" => Preset::Optg,
            "oneshot" => Preset::Oneshot,
            "gmp-cycles" => Preset::GmpCycles,
            "paradox" => Preset::Paradox,
            "ablate-schedule" => Preset::AblateSchedule,
            "ablate-alpha" => Preset::AblateAlpha,
            "ablate-budget" => Preset::AblateBudget,
            "ablate-maskfreq" => Preset::AblateMaskfreq,
            other => {
                return Err(CliError::config(format!(
                    "field `preset`: unknown preset `{other}` (expected dense|optg|oneshot|gmp-cycles|paradox|ablate-schedule|ablate-alpha|ablate-budget|ablate-maskfreq)"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Dense => "dense",
            Preset::Optg => "optg",
            Preset::Oneshot => "oneshot",
            Preset::GmpCycles => "gmp-cycles",
            Preset::Paradox => "paradox",
            Preset::AblateSchedule => "ablate-schedule",
            Preset::AblateAlpha => "ablate-alpha",
            Preset::AblateBudget => "ablate-budget",
            Preset::AblateMaskfreq => "ablate-maskfreq",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Synthetic,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "mnist" => DatasetKind::Mnist,
            "cifar10" => DatasetKind::Cifar10,
            "synthetic" => DatasetKind::Synthetic,
            other => {
                return Err(CliError::config(format!(
                    "field `dataset`: unknown dataset `{other}` (expected mnist|cifar10|synthetic)"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleVariant {
    Sigmoid,
    ZhuCubic,
}

impl ScheduleVariant {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sigmoid" => ScheduleVariant::Sigmoid,
            "zhu-cubic" => ScheduleVariant::ZhuCubic,
            other => {
                return Err(CliError::config(format!(
                    "field `schedule`: unknown variant `{other}` (expected sigmoid|zhu-cubic)"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleVariant::Sigmoid => "sigmoid",
            ScheduleVariant::ZhuCubic => "zhu-cubic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetKind {
    Global,
    Uniform,
    Erk,
}

impl BudgetKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "global" => BudgetKind::Global,
            "uniform" => BudgetKind::Uniform,
            "erk" => BudgetKind::Erk,
            other => {
                return Err(CliError::config(format!(
                    "field `budget`: unknown mode `{other}` (expected global|uniform|erk)"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BudgetKind::Global => "global",
            BudgetKind::Uniform => "uniform",
            BudgetKind::Erk => "erk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExemptKind {
    None,
    First,
    Last,
    FirstLast,
}

impl ExemptKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => ExemptKind::None,
            "first" => ExemptKind::First,
            "last" => ExemptKind::Last,
            "first-last" => ExemptKind::FirstLast,
            other => {
                return Err(CliError::config(format!(
                    "field `prune_exempt`: unknown value `{other}` (expected none|first|last|first-last)"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExemptKind::None => "none",
            ExemptKind::First => "first",
            ExemptKind::Last => "last",
            ExemptKind::FirstLast => "first-last",
        }
    }
}

fn parse_mask_update(s: &str) -> Result<MaskUpdateFrequency> {
    if s == "epoch" {
        return Ok(MaskUpdateFrequency::Epoch);
    }
    if s == "iteration" {
        return Ok(MaskUpdateFrequency::Iterations(1));
    }
    if let Some(n) = s.strip_prefix("every:") {
        let n: usize = n.parse().map_err(|_| {
            CliError::config(format!("field `mask_update`: bad interval in `{s}`"))
        })?;
        if n == 0 {
            return Err(CliError::config(
                "field `mask_update`: interval must be positive",
            ));
        }
        return Ok(MaskUpdateFrequency::Iterations(n));
    }
    Err(CliError::config(format!(
        "field `mask_update`: unknown value `{s}` (expected epoch|iteration|every:N)"
    )))
}

fn mask_update_str(f: MaskUpdateFrequency) -> String {
    match f {
        MaskUpdateFrequency::Epoch => "epoch".to_string(),
        MaskUpdateFrequency::Iterations(1) => "iteration".to_string(),
        MaskUpdateFrequency::Iterations(n) => format!("every:{n}"),
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub model: String,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub sparsity: f64,
    pub alpha: f64,
    pub schedule: ScheduleVariant,
    /// Epoch where the cubic ramp reaches the target; 0 means `epochs`.
    pub zhu_ramp_end: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub mask_momentum: f64,
    pub mask_weight_decay: f64,
    pub mask_update: MaskUpdateFrequency,
    pub budget: BudgetKind,
    pub prune_exempt: ExemptKind,
    pub train_limit: usize,
    pub eval_limit: usize,
    pub checkpoint_every: usize,
    pub resume: Option<PathBuf>,
    pub cycles: Vec<usize>,
    /// Epoch grid for the cycle experiment; empty means `[epochs]`.
    pub epoch_grid: Vec<usize>,
    pub paradox_fractions: Vec<f64>,
    pub paradox_finetune: usize,
    pub paradox_batch: usize,
    pub saliency_batch: usize,
    pub alpha_grid: Vec<f64>,
    pub synth_train: usize,
    pub synth_test: usize,
    pub synth_classes: usize,
    pub synth_dim: usize,
    pub synth_spread: f64,
    /// Parallel evaluation cap; 0 defers to OPTG_NUM_THREADS or the host.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::Optg,
            dataset: DatasetKind::Synthetic,
            data_dir: None,
            out: PathBuf::from("runs/run"),
            model: "auto".to_string(),
            seed: 0,
            epochs: 20,
            batch_size: 64,
            sparsity: 0.9,
            alpha: 0.5,
            schedule: ScheduleVariant::Sigmoid,
            zhu_ramp_end: 0,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-3,
            mask_momentum: 0.9,
            mask_weight_decay: 0.0,
            mask_update: MaskUpdateFrequency::Epoch,
            budget: BudgetKind::Global,
            prune_exempt: ExemptKind::None,
            train_limit: 0,
            eval_limit: 0,
            checkpoint_every: 0,
            resume: None,
            cycles: vec![5],
            epoch_grid: Vec::new(),
            paradox_fractions: vec![0.01, 0.1, 0.5, 0.9],
            paradox_finetune: 100,
            paradox_batch: 512,
            saliency_batch: 512,
            alpha_grid: vec![0.25, 0.5, 1.0],
            synth_train: 2048,
            synth_test: 512,
            synth_classes: 10,
            synth_dim: 32,
            synth_spread: 6.0,
            threads: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::config(format!("field `{field}`: cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(field: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::config(format!("field `{field}`: cannot parse `{s}`")))
        })
        .collect()
}

impl RunConfig {
    /// Applies one key=value pair (from a file line or a flag).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "schema_version" => {
                let v: u64 = parse_num(key, value)?;
                if v != SCHEMA_VERSION {
                    return Err(CliError::config(format!(
                        "field `schema_version`: file has {v}, this build reads {SCHEMA_VERSION}"
                    )));
                }
            }
            "preset" => self.preset = Preset::parse(value)?,
            "dataset" => self.dataset = DatasetKind::parse(value)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "model" => self.model = value.to_string(),
            "seed" => self.seed = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "sparsity" => self.sparsity = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "schedule" => self.schedule = ScheduleVariant::parse(value)?,
            "zhu_ramp_end" => self.zhu_ramp_end = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "mask_momentum" => self.mask_momentum = parse_num(key, value)?,
            "mask_weight_decay" => self.mask_weight_decay = parse_num(key, value)?,
            "mask_update" => self.mask_update = parse_mask_update(value)?,
            "budget" => self.budget = BudgetKind::parse(value)?,
            "prune_exempt" => self.prune_exempt = ExemptKind::parse(value)?,
            "train_limit" => self.train_limit = parse_num(key, value)?,
            "eval_limit" => self.eval_limit = parse_num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "resume" => self.resume = Some(PathBuf::from(value)),
            "cycles" => self.cycles = parse_list(key, value)?,
            "epoch_grid" => self.epoch_grid = parse_list(key, value)?,
            "paradox_fractions" => self.paradox_fractions = parse_list(key, value)?,
            "paradox_finetune" => self.paradox_finetune = parse_num(key, value)?,
            "paradox_batch" => self.paradox_batch = parse_num(key, value)?,
            "saliency_batch" => self.saliency_batch = parse_num(key, value)?,
            "alpha_grid" => self.alpha_grid = parse_list(key, value)?,
            "synth_train" => self.synth_train = parse_num(key, value)?,
            "synth_test" => self.synth_test = parse_num(key, value)?,
            "synth_classes" => self.synth_classes = parse_num(key, value)?,
            "synth_dim" => self.synth_dim = parse_num(key, value)?,
            "synth_spread" => self.synth_spread = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            other => {
                return Err(CliError::config(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    /// Parses a config file: `key = value` lines, `#` comments, and a
    /// mandatory `schema_version` line.
    pub fn load_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = RunConfig::default();
        let mut saw_version = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "{}:{}: expected `key = value`, got `{raw}`",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim();
            if key == "schema_version" {
                saw_version = true;
            }
            cfg.apply(key, value.trim())?;
        }
        if !saw_version {
            return Err(CliError::config(format!(
                "{}: missing required `schema_version = {SCHEMA_VERSION}` line",
                path.display()
            )));
        }
        Ok(cfg)
    }

    /// Field-level validation; called before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CliError::config("field `batch_size`: must be positive"));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(CliError::config(format!(
                "field `sparsity`: must be in [0, 1), got {}",
                self.sparsity
            )));
        }
        if self.alpha <= 0.0 {
            return Err(CliError::config(format!(
                "field `alpha`: must be positive, got {}",
                self.alpha
            )));
        }
        if self.lr < 0.0 {
            return Err(CliError::config("field `lr`: must be nonnegative"));
        }
        for (name, v) in [("momentum", self.momentum), ("mask_momentum", self.mask_momentum)] {
            if !(0.0..1.0).contains(&v) {
                return Err(CliError::config(format!(
                    "field `{name}`: must be in [0, 1), got {v}"
                )));
            }
        }
        if self.zhu_ramp_end > self.epochs {
            return Err(CliError::config(format!(
                "field `zhu_ramp_end`: {} exceeds epochs {}",
                self.zhu_ramp_end, self.epochs
            )));
        }
        if matches!(self.dataset, DatasetKind::Mnist | DatasetKind::Cifar10)
            && self.data_dir.is_none()
        {
            return Err(CliError::config(format!(
                "field `data_dir`: required for dataset {}",
                self.dataset.as_str()
            )));
        }
        if self.cycles.is_empty() || self.cycles.contains(&0) {
            return Err(CliError::config(
                "field `cycles`: needs at least one positive cycle count",
            ));
        }
        if let Some(&f) = self
            .paradox_fractions
            .iter()
            .find(|f| !(0.0..1.0).contains(*f))
        {
            return Err(CliError::config(format!(
                "field `paradox_fractions`: fraction {f} must be in [0, 1)"
            )));
        }
        if self.synth_classes < 2 {
            return Err(CliError::config("field `synth_classes`: need at least 2"));
        }
        if self.synth_dim == 0 {
            return Err(CliError::config("field `synth_dim`: must be positive"));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|&a| a <= 0.0) {
            return Err(CliError::config(
                "field `alpha_grid`: needs positive alphas",
            ));
        }
        Ok(())
    }

    /// The resolved configuration in file syntax, defaults included.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "schema_version = {SCHEMA_VERSION}");
        let _ = writeln!(s, "preset = {}", self.preset.as_str());
        let _ = writeln!(s, "dataset = {}", self.dataset.as_str());
        if let Some(d) = &self.data_dir {
            let _ = writeln!(s, "data_dir = {}", d.display());
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "sparsity = {}", self.sparsity);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "schedule = {}", self.schedule.as_str());
        let _ = writeln!(s, "zhu_ramp_end = {}", self.zhu_ramp_end);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "mask_momentum = {}", self.mask_momentum);
        let _ = writeln!(s, "mask_weight_decay = {}", self.mask_weight_decay);
        let _ = writeln!(s, "mask_update = {}", mask_update_str(self.mask_update));
        let _ = writeln!(s, "budget = {}", self.budget.as_str());
        let _ = writeln!(s, "prune_exempt = {}", self.prune_exempt.as_str());
        let _ = writeln!(s, "train_limit = {}", self.train_limit);
        let _ = writeln!(s, "eval_limit = {}", self.eval_limit);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "cycles = {}", join(&self.cycles));
        if !self.epoch_grid.is_empty() {
            let _ = writeln!(s, "epoch_grid = {}", join(&self.epoch_grid));
        }
        let _ = writeln!(s, "paradox_fractions = {}", join(&self.paradox_fractions));
        let _ = writeln!(s, "paradox_finetune = {}", self.paradox_finetune);
        let _ = writeln!(s, "paradox_batch = {}", self.paradox_batch);
        let _ = writeln!(s, "saliency_batch = {}", self.saliency_batch);
        let _ = writeln!(s, "alpha_grid = {}", join(&self.alpha_grid));
        let _ = writeln!(s, "synth_train = {}", self.synth_train);
        let _ = writeln!(s, "synth_test = {}", self.synth_test);
        let _ = writeln!(s, "synth_classes = {}", self.synth_classes);
        let _ = writeln!(s, "synth_dim = {}", self.synth_dim);
        let _ = writeln!(s, "synth_spread = {}", self.synth_spread);
        let _ = writeln!(s, "threads = {}", self.threads);
        s
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Builds the layer list for a model string against the dataset's sample
/// shape and class count.
///
/// Accepted forms:
/// - `auto`: a dataset-appropriate default
/// - `mlp:H1-H2-...`: flatten (if needed) then linear/ReLU chain to classes
/// - explicit chain: comma-separated `flatten`, `relu`, `linear:IN:OUT`,
///   `conv:IN:OUT:K:S:P`, `maxpool:K:S`
pub fn build_model(model: &str, sample_shape: &[usize], classes: usize) -> Result<Vec<LayerSpec>> {
    let flat: usize = sample_shape.iter().product();
    if model == "auto" {
        return match sample_shape.len() {
            1 => build_model(&format!("mlp:{}", default_hidden(flat)), sample_shape, classes),
            3 => {
                let c = sample_shape[0];
                let side = sample_shape[1];
                if side % 4 != 0 {
                    return Err(CliError::config(format!(
                        "field `model`: auto conv model needs side divisible by 4, got {side}"
                    )));
                }
                let flat_out = 24 * (side / 4) * (side / 4);
                build_model(
                    &format!(
                        "conv:{c}:12:3:1:1,relu,maxpool:2:2,conv:12:24:3:1:1,relu,maxpool:2:2,flatten,linear:{flat_out}:64,relu,linear:64:{classes}"
                    ),
                    sample_shape,
                    classes,
                )
            }
            _ => Err(CliError::config(format!(
                "field `model`: no auto model for sample shape {sample_shape:?}"
            ))),
        };
    }
    if let Some(spec) = model.strip_prefix("mlp:") {
        let hidden: Vec<usize> = spec
            .split('-')
            .map(|h| parse_num::<usize>("model", h))
            .collect::<Result<_>>()?;
        let mut chain = String::new();
        if sample_shape.len() > 1 {
            chain.push_str("flatten,");
        }
        let mut prev = flat;
        for h in &hidden {
            let _ = write!(chain, "linear:{prev}:{h},relu,");
            prev = *h;
        }
        let _ = write!(chain, "linear:{prev}:{classes}");
        return build_model(&chain, sample_shape, classes);
    }

    let mut specs = Vec::new();
    for part in model.split(',') {
        let fields: Vec<&str> = part.trim().split(':').collect();
        let spec = match fields.as_slice() {
            ["flatten"] => LayerSpec::Flatten,
            ["relu"] => LayerSpec::Relu,
            ["linear", i, o] => LayerSpec::Linear {
                in_features: parse_num("model", i)?,
                out_features: parse_num("model", o)?,
            },
            ["conv", i, o, k, s, p] => LayerSpec::Conv2d {
                in_channels: parse_num("model", i)?,
                out_channels: parse_num("model", o)?,
                kernel_h: parse_num("model", k)?,
                kernel_w: parse_num("model", k)?,
                stride: parse_num("model", s)?,
                padding: parse_num("model", p)?,
            },
            ["maxpool", k, s] => LayerSpec::MaxPool2d {
                kernel: parse_num("model", k)?,
                stride: parse_num("model", s)?,
            },
            _ => {
                return Err(CliError::config(format!(
                    "field `model`: unknown layer `{part}`"
                )))
            }
        };
        specs.push(spec);
    }
    Ok(specs)
}

fn default_hidden(input: usize) -> usize {
    // Keeps the default MLP proportionate to the input width.
    (input / 8).clamp(16, 64)
}
