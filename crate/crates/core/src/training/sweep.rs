use crate::adapters::{AdapterShape, Balance, ScaleOperator};
use crate::error::{Error, Result};
use crate::quant::QuantConfig;

use super::{fine_tune, AdapterPlan, SyntheticTask, TrainConfig};

/// Default `r_base`; `r′ = r_base · max(λ₁, λ₂)`.
pub const DEFAULT_RANK_BASE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRecord {
    pub lambda: Balance,
    pub rank: usize,
    pub params: u64,
    pub final_eval_loss: f64,
}

/// Trains one BaRA student per balancing factor.
///
/// With square factors `r′ = λ·r_base` keeps the trainable-parameter count
/// equal to LoRA at rank `r_base`; asymmetric pairs use the larger factor.
pub fn lambda_sweep(
    task: &SyntheticTask,
    quant: &QuantConfig,
    lambdas: &[Balance],
    rank_base: usize,
    operator: ScaleOperator,
    cfg: &TrainConfig,
) -> Result<Vec<SweepRecord>> {
    if rank_base == 0 {
        return Err(Error::Parameter("rank base must be >= 1".into()));
    }
    let widths = task.widths();
    for lambda in lambdas {
        for w in widths.windows(2) {
            if lambda.compressed(w[0], w[1]).is_err() {
                return Err(Error::Shape(format!(
                    "balancing factor λ={lambda} does not divide layer {}x{}",
                    w[0], w[1]
                )));
            }
        }
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let rank = rank_base * lambda.lambda_in.max(lambda.lambda_out);
            let plan = AdapterPlan {
                shape: AdapterShape::Bara { balance: lambda, rank },
                operator,
            };
            let run = fine_tune(task, quant, &plan, cfg)?;
            Ok(SweepRecord {
                lambda,
                rank,
                params: run.model.trainable_param_count() as u64,
                final_eval_loss: run.final_eval_loss(),
            })
        })
        .collect()
}
