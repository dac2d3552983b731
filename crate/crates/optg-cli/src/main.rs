//! `optg` command-line entry point.

use optg_cli::config::RunConfig;
use optg_cli::error::{CliError, Result};
use optg_cli::{report, runner, synthgen};
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "\
usage:
  optg run [flags]                 run an experiment preset
  optg report <RUN_DIR>            emit plot-data CSVs for a finished run
  optg datagen [flags]             write a synthetic image corpus
  optg help                        show this message

run flags (CLI overrides config-file keys):
  --config PATH        key = value config file (schema_version = 1)
  --preset NAME        dense|optg|oneshot|gmp-cycles|paradox|ablate-schedule|
                       ablate-alpha|ablate-budget|ablate-maskfreq
  --dataset NAME       mnist|cifar10|synthetic
  --data-dir PATH      dataset directory (mnist/cifar10)
  --out PATH           output directory
  --model SPEC         auto | mlp:H1-H2 | layer chain (see README)
  --seed N             master seed (init, shuffling, synthetic data)
  --epochs N           total training epochs
  --batch-size N       minibatch size
  --sparsity F         target sparsity in [0, 1)
  --alpha F            sparsity-ramp steepness
  --schedule NAME      sigmoid|zhu-cubic
  --lr F               initial weight learning rate (cosine annealed)
  --budget NAME        global|uniform|erk
  --mask-update SPEC   epoch|iteration|every:N
  --train-limit N      cap training samples (0 = all)
  --eval-limit N       cap evaluation samples (0 = all)
  --checkpoint-every N checkpoint cadence in epochs (0 = off)
  --resume PATH        continue from a checkpoint (dense/optg presets)
  --cycles LIST        cycle counts for gmp-cycles, e.g. 1,5
  --epoch-grid LIST    epoch grid for gmp-cycles, e.g. 20,100
  --threads N          parallel evaluation cap (or OPTG_NUM_THREADS)

datagen flags:
  --dataset NAME       mnist|cifar10 (format to write)
  --out PATH           target directory
  --seed N --train N --test N
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(args: &[String]) -> Result<()> {
    match args.first().map(String::as_str) {
        Some("run") => cmd_run(&args[1..]),
        Some("report") => cmd_report(&args[1..]),
        Some("datagen") => cmd_datagen(&args[1..]),
        Some("help") | Some("--help") | Some("-h") | None => {
            print!("{USAGE}");
            Ok(())
        }
        Some(other) => Err(CliError::config(format!(
            "unknown command `{other}`; try `optg help`"
        ))),
    }
}

/// Collects `--key value` / `--key=value` pairs.
fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let Some(stripped) = arg.strip_prefix("--") else {
            return Err(CliError::config(format!(
                "unexpected argument `{arg}`; flags look like --key value"
            )));
        };
        let (key, value) = if let Some((k, v)) = stripped.split_once('=') {
            (k.to_string(), v.to_string())
        } else {
            let Some(v) = args.get(i + 1) else {
                return Err(CliError::config(format!("flag --{stripped} needs a value")));
            };
            i += 1;
            (stripped.to_string(), v.clone())
        };
        out.push((key.replace('-', "_"), value));
        i += 1;
    }
    Ok(out)
}

fn cmd_run(args: &[String]) -> Result<()> {
    let flags = parse_flags(args)?;
    let mut cfg = match flags.iter().find(|(k, _)| k == "config") {
        Some((_, path)) => RunConfig::load_file(&PathBuf::from(path))?,
        None => RunConfig::default(),
    };
    for (key, value) in &flags {
        if key == "config" {
            continue;
        }
        cfg.apply(key, value)?;
    }
    runner::run(&cfg)
}

fn cmd_report(args: &[String]) -> Result<()> {
    let [dir] = args else {
        return Err(CliError::config("usage: optg report <RUN_DIR>"));
    };
    report::report(&PathBuf::from(dir))
}

fn cmd_datagen(args: &[String]) -> Result<()> {
    let flags = parse_flags(args)?;
    let mut dataset = String::from("mnist");
    let mut out = PathBuf::from("data");
    let mut seed = 0u64;
    let mut train = 10_000usize;
    let mut test = 2_000usize;
    for (key, value) in &flags {
        match key.as_str() {
            "dataset" => dataset = value.clone(),
            "out" => out = PathBuf::from(value),
            "seed" => {
                seed = value
                    .parse()
                    .map_err(|_| CliError::config(format!("field `seed`: bad value `{value}`")))?
            }
            "train" => {
                train = value
                    .parse()
                    .map_err(|_| CliError::config(format!("field `train`: bad value `{value}`")))?
            }
            "test" => {
                test = value
                    .parse()
                    .map_err(|_| CliError::config(format!("field `test`: bad value `{value}`")))?
            }
            other => return Err(CliError::config(format!("unknown datagen flag `{other}`"))),
        }
    }
    match dataset.as_str() {
        "mnist" => synthgen::generate_mnist_like(&out, seed, train, test)?,
        "cifar10" => synthgen::generate_cifar_like(&out, seed, train, test)?,
        other => {
            return Err(CliError::config(format!(
                "field `dataset`: datagen writes mnist|cifar10, got `{other}`"
            )))
        }
    }
    println!(
        "wrote {dataset}-format corpus to {} (seed {seed}, {train} train / {test} test)",
        out.display()
    );
    Ok(())
}
