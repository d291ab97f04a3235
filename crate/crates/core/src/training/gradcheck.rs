use crate::adapters::{AdapterKind, AdapterShape, Balance, ScaleOperator};
use crate::error::{Error, Result};
use crate::model::{model_backward, model_forward, Activation, DenseModel, Model};
use crate::numerics::{Distribution, Matrix, Rng};
use crate::quant::{QuantConfig, QuantMode};

use super::{compute_loss, LossKind};

/// Denominator floor for relative errors, so near-zero gradients compare absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Step used by the built-in gradient check.
pub const GRADCHECK_EPS: f64 = 1e-5;

/// Largest tolerated relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Worst relative error between backprop and central differences over every
/// trainable parameter of `model`.
pub fn finite_difference_check(model: &Model, x: &Matrix, target: &Matrix, loss: LossKind, eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Parameter(format!(
            "finite-difference step must be > 0, got {eps}"
        )));
    }
    let (pred, tape) = model_forward(model, x)?;
    let (_, g) = compute_loss(loss, &pred, target)?;
    let grads = model_backward(model, &tape, &g)?;
    let analytic: Vec<Matrix> = grads.flatten().into_iter().cloned().collect();

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (p, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = probe.params()[p].as_slice()[j];
            let mut eval_at = |v: f64| -> Result<f64> {
                probe.params_mut()[p].as_mut_slice()[j] = v;
                let out = probe.predict(x)?;
                Ok(compute_loss(loss, &out, target)?.0)
            };
            let plus = eval_at(orig + eps)?;
            let minus = eval_at(orig - eps)?;
            eval_at(orig)?;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(grad.as_slice()[j], numeric));
        }
    }
    Ok(worst)
}

/// Seeded 16→16→8 tanh model with random, non-zero adapters on both layers.
#[derive(Clone, Debug)]
pub struct GradcheckCase {
    pub model: Model,
    pub x: Matrix,
    pub target: Matrix,
}

pub fn gradcheck_case(kind: AdapterKind, operator: ScaleOperator, seed: u64) -> Result<GradcheckCase> {
    let mut rng = Rng::seed_from_u64(seed);
    let widths = [16, 16, 8];
    let weights = widths
        .windows(2)
        .map(|w| rng.fill(w[0], w[1], Distribution::normal(0.0, 1.0 / (w[0] as f64).sqrt())))
        .collect::<Result<Vec<_>>>()?;
    let dense = DenseModel::new(Activation::Tanh, weights)?;
    let quant = QuantConfig::new(4, 4, 4, QuantMode::MinMax)?;
    let mut model = Model::quantize_dense(&dense, &quant)?;
    let shape = match kind {
        AdapterKind::Lora => AdapterShape::Lora { rank: 4 },
        AdapterKind::Bara => AdapterShape::Bara {
            balance: Balance::square(2),
            rank: 2,
        },
        AdapterKind::Hira => AdapterShape::Hira {
            balance: Balance::square(2),
        },
    };
    for (i, w) in widths.windows(2).enumerate() {
        let mut adapter = shape.zeros(w[0], w[1], 0.5, operator)?;
        for p in adapter.params_mut() {
            *p = rng.fill(p.rows(), p.cols(), Distribution::normal(0.0, 0.5))?;
        }
        model.set_adapter(i, Some(adapter))?;
    }
    let x = rng.fill(4, widths[0], Distribution::normal(0.0, 1.0))?;
    let target = rng.fill(4, widths[2], Distribution::normal(0.0, 1.0))?;
    Ok(GradcheckCase { model, x, target })
}

/// Runs [`finite_difference_check`] on [`gradcheck_case`] with MSE and `ε = 1e-5`.
pub fn run_gradcheck(kind: AdapterKind, operator: ScaleOperator, seed: u64) -> Result<f64> {
    let case = gradcheck_case(kind, operator, seed)?;
    finite_difference_check(&case.model, &case.x, &case.target, LossKind::Mse, GRADCHECK_EPS)
}
