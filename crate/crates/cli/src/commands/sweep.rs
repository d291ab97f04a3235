use qbara::adapters::Balance;
use qbara::persistence::{format_float, write_csv};
use qbara::training::{lambda_sweep, SyntheticTask, DEFAULT_RANK_BASE};

use super::{check_output, operator, parse_list, quant_config, task_config, train_config, write_file};
use crate::config::Settings;
use crate::failure::Outcome;
use crate::SweepArgs;

pub fn sweep(args: SweepArgs, s: &Settings) -> Outcome {
    let out = s.require(args.out, "out")?;
    check_output(&out, &[])?;
    let lambdas: Vec<Balance> = parse_list(
        &s.or(args.lambdas, "lambdas", "1,2,4,8".to_string())?,
        "balancing factor",
    )?;
    let rank_base = s.or(args.rank_base, "rank-base", DEFAULT_RANK_BASE)?;
    let cfg = train_config(&args.optim, Default::default(), s)?;
    let task_cfg = task_config(&args.task, cfg.seed, s)?;
    let cfg = qbara::training::TrainConfig {
        loss: task_cfg.kind.default_loss(),
        ..cfg
    };
    let quant = quant_config(&args.quant, s)?;
    let op = operator(args.optim.operator.clone(), s)?;

    let task = SyntheticTask::generate(&task_cfg)?;
    let records = lambda_sweep(&task, &quant, &lambdas, rank_base, op, &cfg)?;
    write_file(&out, |f| write_csv(&records, f))?;
    for r in &records {
        println!(
            "lambda={} rank={} params={} final_eval_loss={}",
            r.lambda,
            r.rank,
            r.params,
            format_float(r.final_eval_loss)
        );
    }
    Ok(())
}
