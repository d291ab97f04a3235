use qbara::adapters::{AdapterKind, ScaleOperator};
use qbara::persistence::format_float;
use qbara::training::{run_gradcheck, GRADCHECK_TOLERANCE};

use crate::config::Settings;
use crate::failure::{Failure, Outcome};
use crate::GradcheckArgs;

pub fn gradcheck(args: GradcheckArgs, s: &Settings) -> Outcome {
    let kind = AdapterKind::from_name(&s.or(args.adapter, "adapter", "bara".to_string())?)?;
    let op =
        ScaleOperator::from_name(&s.or(args.operator, "operator", ScaleOperator::default().name().to_string())?)?;
    let seed = s.or(args.seed, "seed", 0u64)?;
    let err = run_gradcheck(kind, op, seed)?;
    println!("max_relative_error: {}", format_float(err));
    if err.is_nan() || err > GRADCHECK_TOLERANCE {
        return Err(Failure::numeric(format!(
            "gradient check failed: {err:e} > {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}
