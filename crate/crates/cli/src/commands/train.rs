use qbara::adapters::{AdapterKind, AdapterShape, Balance};
use qbara::persistence::{format_float, save_checkpoint, write_csv};
use qbara::training::{build_student, evaluate, train_loop, AdapterPlan, SyntheticTask};

use super::{check_output, operator, quant_config, task_config, train_config, write_file};
use crate::config::Settings;
use crate::failure::{Failure, Outcome};
use crate::TrainArgs;

pub fn train(args: TrainArgs, s: &Settings) -> Outcome {
    let out = s.require(args.out, "out")?;
    let history_path = s.pick(args.history, "history")?;
    check_output(&out, &[])?;
    if let Some(h) = &history_path {
        check_output(h, &[])?;
        if *h == out {
            return Err(Failure::data("--out and --history must differ"));
        }
    }
    let cfg = train_config(&args.optim, Default::default(), s)?;
    let task_cfg = task_config(&args.task, cfg.seed, s)?;
    let cfg = qbara::training::TrainConfig {
        loss: task_cfg.kind.default_loss(),
        ..cfg
    };
    let quant = quant_config(&args.quant, s)?;
    let op = operator(args.optim.operator.clone(), s)?;
    let adapter = s.or(args.adapter, "adapter", "bara".to_string())?;
    let lambda = s
        .pick(args.lambda, "lambda")?
        .map(|l| l.parse::<Balance>())
        .transpose()?;
    let rank = s.or(args.rank, "rank", 8usize)?;
    let shape = match adapter.as_str() {
        "none" => None,
        name => Some(match AdapterKind::from_name(name)? {
            AdapterKind::Lora => AdapterShape::Lora { rank },
            AdapterKind::Bara => AdapterShape::Bara {
                balance: lambda.unwrap_or(Balance::square(2)),
                rank,
            },
            AdapterKind::Hira => AdapterShape::Hira {
                balance: lambda.unwrap_or(Balance::new(quant.tile_rows, quant.tile_cols)),
            },
        }),
    };
    let plan = shape.map(|shape| AdapterPlan { shape, operator: op });

    let task = SyntheticTask::generate(&task_cfg)?;
    let (mut init, _) = cfg.streams();
    let mut model = build_student(&task, &quant, plan.as_ref(), cfg.lora_alpha, &mut init)?;
    let baseline = evaluate(&model.without_adapters(), &task, cfg.loss)?;
    let history = train_loop(&mut model, &task, &cfg)?;
    let last = history.last().map_or(baseline, |h| h.eval_loss);

    write_file(&out, |f| save_checkpoint(&model, f))?;
    if let Some(h) = &history_path {
        write_csv(&history, std::fs::File::create(h).map_err(qbara::Error::from)?)?;
    }
    println!("adapter: {adapter}");
    println!("trainable_params: {}", model.trainable_param_count());
    println!("steps: {}", history.len());
    println!("baseline_eval_loss: {}", format_float(baseline));
    println!("final_eval_loss: {}", format_float(last));
    println!("ratio: {}", format_float(last / baseline));
    Ok(())
}
