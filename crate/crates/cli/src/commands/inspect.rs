use qbara::adapters::{Adapter, AdapterShape};
use qbara::model::Model;
use qbara::persistence::{format_float, load_checkpoint, read_raw_matrix, write_csv};
use qbara::training::magnitude_report;

use super::{check_input, check_output, open, write_file};
use crate::config::Settings;
use crate::failure::{Failure, Outcome};
use crate::geometry::Geometry;
use crate::InspectArgs;

fn describe_adapter(a: Option<&Adapter>) -> String {
    let Some(a) = a else {
        return "adapter=none".into();
    };
    let detail = match a.shape() {
        AdapterShape::Lora { rank } => format!("rank={rank}"),
        AdapterShape::Bara { balance, rank } => {
            format!("lambda={balance} rank={rank} operator={}", a.operator().name())
        }
        AdapterShape::Hira { balance } => format!("lambda={balance} operator={}", a.operator().name()),
    };
    format!(
        "adapter={} {detail} scaling={} params={}",
        a.kind().name(),
        format_float(a.scaling()),
        a.param_count()
    )
}

fn print_model(model: &Model) {
    let widths: Vec<String> = model.widths().iter().map(ToString::to_string).collect();
    println!("layers: {}", model.layers().len());
    println!("widths: {}", widths.join(","));
    println!("activation: {}", model.activation().name());
    for (i, l) in model.layers().iter().enumerate() {
        let cfg = l.base().config();
        println!(
            "layer {i}: {}x{} bits={} tile={}x{} mode={} bits_per_weight={} bias={} {}",
            l.d_in(),
            l.d_out(),
            cfg.bits,
            cfg.tile_rows,
            cfg.tile_cols,
            match cfg.mode {
                qbara::quant::QuantMode::MinMax => "minmax",
                qbara::quant::QuantMode::AbsMax => "absmax",
            },
            cfg.bits_per_weight(),
            match (l.bias().is_some(), l.bias_trainable()) {
                (false, _) => "none",
                (true, false) => "frozen",
                (true, true) => "trainable",
            },
            describe_adapter(l.adapter())
        );
    }
    println!("trainable_params: {}", model.trainable_param_count());
}

fn print_geometry(g: &Geometry) -> Outcome {
    let per_layer = g.layer_params()?;
    println!("blocks: {}", g.blocks);
    println!("adapter: {}", g.shape.kind().name());
    for (l, p) in g.layers.iter().zip(&per_layer) {
        println!("layer {}: {}x{} params_per_block={p}", l.name, l.d_in, l.d_out);
    }
    println!("trainable_params: {}", g.total_params()?);
    Ok(())
}

pub fn inspect(args: InspectArgs, s: &Settings) -> Outcome {
    let ckpt = s.pick(args.ckpt, "ckpt")?;
    let geometry = s.pick(args.geometry, "geometry")?;
    let probes = s.pick(args.magnitudes, "magnitudes")?;
    let csv = s.pick(args.csv, "csv")?;
    match (ckpt, geometry) {
        (Some(_), Some(_)) => Err(Failure::usage("--ckpt and --geometry are exclusive")),
        (None, None) => Err(Failure::usage("one of --ckpt or --geometry is required")),
        (None, Some(g)) => {
            if probes.is_some() {
                return Err(Failure::usage("--magnitudes needs --ckpt"));
            }
            check_input(&g)?;
            print_geometry(&Geometry::load(&g)?)
        }
        (Some(ckpt), None) => {
            check_input(&ckpt)?;
            let report_paths = match (probes, csv) {
                (Some(p), Some(c)) => {
                    check_input(&p)?;
                    check_output(&c, &[&ckpt, &p])?;
                    Some((p, c))
                }
                (Some(_), None) => return Err(Failure::usage("--magnitudes needs --csv")),
                (None, _) => None,
            };
            let model = load_checkpoint(open(&ckpt)?)?;
            print_model(&model);
            if let Some((p, c)) = report_paths {
                let x = read_raw_matrix(open(&p)?)?;
                let report = magnitude_report(&model, &x)?;
                write_file(&c, |f| write_csv(&report, f))?;
            }
            Ok(())
        }
    }
}
