use qbara::model::Model;
use qbara::numerics::{Distribution, Matrix, Rng};
use qbara::persistence::{format_float, load_checkpoint, save_checkpoint, save_dense_model};

use super::{check_input, check_output, open, write_file};
use crate::config::Settings;
use crate::failure::{Failure, Outcome};
use crate::MergeArgs;

const PROBES: usize = 64;
const MAX_DEVIATION: f64 = 1e-8;

fn probes(model: &Model, seed: u64) -> Outcome<Matrix> {
    Ok(Rng::seed_from_u64(seed).fill(PROBES, model.widths()[0], Distribution::normal(0.0, 1.0))?)
}

pub fn merge(args: MergeArgs, s: &Settings) -> Outcome {
    let ckpt = s.require(args.ckpt, "ckpt")?;
    let out = s.require(args.out, "out")?;
    let mode = s.require(args.mode, "mode")?;
    let seed = s.or(args.seed, "seed", 0u64)?;
    check_input(&ckpt)?;
    check_output(&out, &[&ckpt])?;

    let model = load_checkpoint(open(&ckpt)?)?;
    let x = probes(&model, seed)?;
    let reference = model.predict(&x)?;
    let deviation = match mode.as_str() {
        "bara-dense" => {
            let dense = model.merge_dense()?;
            let deviation = reference.max_abs_diff(&dense.forward(&x)?);
            write_file(&out, |f| save_dense_model(&dense, f))?;
            deviation
        }
        "hira-beta" => {
            let merged = model.merge_hira()?;
            let deviation = reference.max_abs_diff(&merged.predict(&x)?);
            let mut bytes = Vec::new();
            save_checkpoint(&merged, &mut bytes)?;
            let stored = load_checkpoint(bytes.as_slice())?;
            let stored_dev = reference.max_abs_diff(&stored.predict(&x)?);
            write_file(&out, |f| {
                use std::io::Write;
                f.write_all(&bytes).map_err(qbara::Error::from)
            })?;
            println!("stored_max_abs_deviation: {}", format_float(stored_dev));
            deviation
        }
        other => {
            return Err(Failure::data(format!(
                "unknown merge mode '{other}' (expected bara-dense or hira-beta)"
            )))
        }
    };
    println!("max_abs_deviation: {}", format_float(deviation));
    if deviation.is_nan() || deviation > MAX_DEVIATION {
        return Err(Failure::numeric(format!(
            "merged model deviates by {deviation:e}, above {MAX_DEVIATION:e}"
        )));
    }
    Ok(())
}
