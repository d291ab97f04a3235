use qbara::persistence::{format_float, read_raw_matrix, save_quantized};
use qbara::quant::{quantization_stats, quantize_matrix};

use super::{check_input, check_output, open, quant_config, write_file};
use crate::config::Settings;
use crate::failure::Outcome;
use crate::QuantizeArgs;

pub fn quantize(args: QuantizeArgs, s: &Settings) -> Outcome {
    let input = s.require(args.input, "in")?;
    let out = s.require(args.out, "out")?;
    let cfg = quant_config(&args.quant, s)?;
    check_input(&input)?;
    check_output(&out, &[&input])?;

    let w = read_raw_matrix(open(&input)?)?;
    let q = quantize_matrix(&w, &cfg)?;
    let stats = quantization_stats(&w, &q)?;
    write_file(&out, |f| save_quantized(&q, f))?;
    println!("max_abs_err: {}", format_float(stats.max_abs_err));
    println!("mse: {}", format_float(stats.mse));
    println!("bits_per_weight: {}", format_float(stats.bits_per_weight));
    Ok(())
}
