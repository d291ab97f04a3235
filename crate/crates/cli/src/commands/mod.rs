//! One module per subcommand plus the option plumbing they share.

mod gradcheck;
mod inspect;
mod merge;
mod quantize;
mod sweep;
mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use qbara::adapters::ScaleOperator;
use qbara::model::Activation;
use qbara::quant::{QuantConfig, QuantMode};
use qbara::training::{OptimizerConfig, TaskConfig, TaskKind, TrainConfig};

use crate::config::Settings;
use crate::failure::{Failure, Outcome};
use crate::{OptimArgs, QuantArgs, TaskArgs};

pub use gradcheck::gradcheck;
pub use inspect::inspect;
pub use merge::merge;
pub use quantize::quantize;
pub use sweep::sweep;
pub use train::train;

pub(crate) fn check_input(path: &Path) -> Outcome {
    match path.metadata() {
        Ok(m) if m.is_file() => Ok(()),
        Ok(_) => Err(Failure::data(format!("{} is not a file", path.display()))),
        Err(e) => Err(Failure::data(format!("cannot read {}: {e}", path.display()))),
    }
}

/// The parent directory must exist and the path must not alias an input.
pub(crate) fn check_output(path: &Path, inputs: &[&Path]) -> Outcome {
    if path.is_dir() {
        return Err(Failure::data(format!("{} is a directory", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(Failure::data(format!(
                "output directory {} does not exist",
                parent.display()
            )));
        }
    }
    if let Ok(out) = path.canonicalize() {
        for input in inputs {
            if input.canonicalize().is_ok_and(|i| i == out) {
                return Err(Failure::data(format!(
                    "refusing to overwrite input {}",
                    input.display()
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::data(format!("cannot open {}: {e}", path.display())))
}

/// Creates `path`, hands a buffered writer to `write` and flushes it.
pub(crate) fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> qbara::Result<()>) -> Outcome {
    let file = File::create(path).map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush()
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

/// `RxC`, or `N` for `NxN`.
pub(crate) fn parse_tile(s: &str) -> Outcome<(usize, usize)> {
    let side = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::data(format!("invalid tile shape '{s}'")))
    };
    match s.split_once(['x', 'X']) {
        Some((r, c)) => Ok((side(r)?, side(c)?)),
        None => side(s).map(|n| (n, n)),
    }
}

pub(crate) fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Outcome<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Failure::data(format!("invalid {what} '{}' in '{s}'", v.trim())))
        })
        .collect()
}

pub(crate) fn quant_config(args: &QuantArgs, s: &Settings) -> Outcome<QuantConfig> {
    let bits = s.or(args.bits, "bits", 4u8)?;
    let (tr, tc) = parse_tile(&s.or(args.tile.clone(), "tile", "8x8".to_string())?)?;
    let mode = match s.or(args.mode.clone(), "mode", "minmax".to_string())?.as_str() {
        "minmax" => QuantMode::MinMax,
        "absmax" => QuantMode::AbsMax,
        other => return Err(Failure::data(format!("unknown quantization mode '{other}'"))),
    };
    Ok(QuantConfig::new(bits, tr, tc, mode)?)
}

pub(crate) fn task_config(args: &TaskArgs, seed: u64, s: &Settings) -> Outcome<TaskConfig> {
    let d = TaskConfig::default();
    let kind = TaskKind::from_name(&s.or(args.task.clone(), "task", d.kind.name().to_string())?)?;
    let widths = match s.pick(args.widths.clone(), "widths")? {
        Some(w) => parse_list(&w, "width")?,
        None => d.widths,
    };
    let activation =
        Activation::from_name(&s.or(args.activation.clone(), "activation", d.activation.name().to_string())?)?;
    let latent = s.or(args.latent_dim, "latent-dim", d.latent_dim.unwrap_or(0))?;
    Ok(TaskConfig {
        kind,
        widths,
        activation,
        latent_dim: (latent > 0).then_some(latent),
        input_noise: s.or(args.input_noise, "input-noise", d.input_noise)?,
        eval_samples: s.or(args.eval_samples, "eval-samples", d.eval_samples)?,
        seed,
    })
}

pub(crate) fn operator(flag: Option<String>, s: &Settings) -> Outcome<ScaleOperator> {
    let name = s.or(flag, "operator", ScaleOperator::default().name().to_string())?;
    Ok(ScaleOperator::from_name(&name)?)
}

/// Training settings; the loss follows the task kind.
pub(crate) fn train_config(args: &OptimArgs, kind: TaskKind, s: &Settings) -> Outcome<TrainConfig> {
    let d = TrainConfig::default();
    let lr = s.or(args.lr, "lr", d.optimizer.lr())?;
    let optimizer = match s.or(args.optimizer.clone(), "optimizer", "adam".to_string())?.as_str() {
        "adam" => OptimizerConfig::adam(lr),
        "sgd" => OptimizerConfig::sgd(lr),
        other => return Err(Failure::data(format!("unknown optimizer '{other}'"))),
    };
    let cfg = TrainConfig {
        optimizer,
        steps: s.or(args.steps, "steps", d.steps)?,
        batch_size: s.or(args.batch_size, "batch-size", d.batch_size)?,
        seed: s.or(args.seed, "seed", d.seed)?,
        loss: kind.default_loss(),
        lora_alpha: s.or(args.lora_alpha, "lora-alpha", d.lora_alpha)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles() {
        assert_eq!(parse_tile("8x4").unwrap(), (8, 4));
        assert_eq!(parse_tile("16").unwrap(), (16, 16));
        assert!(parse_tile("0x4").is_err());
        assert!(parse_tile("axb").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("64, 64,32", "width").unwrap(), vec![64, 64, 32]);
        assert_eq!(parse_list::<usize>("1,x", "width").unwrap_err().code, 2);
    }
}
