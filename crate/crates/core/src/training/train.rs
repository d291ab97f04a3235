use crate::adapters::{default_scaling, Adapter, AdapterShape, ScaleOperator};
use crate::error::{Error, Result};
use crate::model::{model_backward, model_forward, Model};
use crate::numerics::{Distribution, Rng};
use crate::quant::QuantConfig;

use super::{compute_loss, LossKind, Optimizer, OptimizerConfig, SyntheticTask};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    /// Zero steps is allowed and leaves the model untouched.
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub lora_alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::adam(1e-3),
            steps: 500,
            batch_size: 32,
            seed: 7,
            loss: LossKind::Mse,
            lora_alpha: 16.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if !self.lora_alpha.is_finite() {
            return Err(Error::Parameter(format!(
                "lora_alpha must be finite, got {}",
                self.lora_alpha
            )));
        }
        Ok(())
    }

    /// Independent generators for adapter initialization and batch sampling.
    pub fn streams(&self) -> (Rng, Rng) {
        let mut root = Rng::seed_from_u64(self.seed);
        let init = root.split();
        let batches = root.split();
        (init, batches)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRecord {
    pub step: usize,
    /// Loss of the batch used for this step, before the update.
    pub train_loss: f64,
    /// Loss on the task's evaluation set after the update.
    pub eval_loss: f64,
}

/// LoRA/BaRA: `A ~ U(±1/√fan_in)` with `fan_in = A.rows`, `B = 0`. HiRA: `C = 0`.
///
/// The adapter path is therefore exactly zero after initialization.
pub fn init_adapter(adapter: &mut Adapter, rng: &mut Rng) -> Result<()> {
    match adapter {
        Adapter::Lora(_) | Adapter::Bara(_) => {
            let mut params = adapter.params_mut();
            let a = &mut params[0];
            let bound = 1.0 / (a.rows() as f64).sqrt();
            **a = rng.fill(a.rows(), a.cols(), Distribution::uniform(-bound, bound))?;
            params[1].as_mut_slice().fill(0.0);
        }
        Adapter::Hira(_) => {
            for p in adapter.params_mut() {
                p.as_mut_slice().fill(0.0);
            }
        }
    }
    Ok(())
}

/// Same adapter geometry and operator on every layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdapterPlan {
    pub shape: AdapterShape,
    pub operator: ScaleOperator,
}

/// Quantizes the task teacher and attaches freshly initialized adapters.
pub fn build_student(
    task: &SyntheticTask,
    quant: &QuantConfig,
    plan: Option<&AdapterPlan>,
    lora_alpha: f64,
    rng: &mut Rng,
) -> Result<Model> {
    let mut model = Model::quantize_dense(task.teacher(), quant)?;
    if let Some(plan) = plan {
        let widths = model.widths();
        for (i, w) in widths.windows(2).enumerate() {
            let scaling = default_scaling(lora_alpha, plan.shape.effective_rank(w[0], w[1])?);
            let mut adapter = plan.shape.zeros(w[0], w[1], scaling, plan.operator)?;
            init_adapter(&mut adapter, rng)?;
            model.set_adapter(i, Some(adapter))?;
        }
    }
    Ok(model)
}

/// Loss of `model` on the task's evaluation set.
pub fn evaluate(model: &Model, task: &SyntheticTask, loss: LossKind) -> Result<f64> {
    let pred = model.predict(task.eval_inputs())?;
    Ok(compute_loss(loss, &pred, task.eval_targets())?.0)
}

fn check_geometry(model: &Model, task: &SyntheticTask) -> Result<()> {
    if model.widths() != task.widths() {
        return Err(Error::Shape(format!(
            "model widths {:?} do not match task widths {:?}",
            model.widths(),
            task.widths()
        )));
    }
    Ok(())
}

/// Trains adapter parameters (and flagged biases) on fresh task batches.
pub fn train_loop(model: &mut Model, task: &SyntheticTask, cfg: &TrainConfig) -> Result<Vec<HistoryRecord>> {
    cfg.validate()?;
    check_geometry(model, task)?;
    let (_, mut batches) = cfg.streams();
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let (x, y) = task.sample_batch(&mut batches, cfg.batch_size)?;
        let (pred, tape) = model_forward(model, &x)?;
        let (train_loss, g) = compute_loss(cfg.loss, &pred, &y)?;
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss became non-finite at step {step}"
            )));
        }
        let grads = model_backward(model, &tape, &g)?;
        opt.step(model.params_mut(), &grads.flatten())?;
        let eval_loss = evaluate(model, task, cfg.loss)?;
        if !eval_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "evaluation loss became non-finite at step {step}"
            )));
        }
        history.push(HistoryRecord {
            step,
            train_loss,
            eval_loss,
        });
    }
    Ok(history)
}

/// Outcome of [`fine_tune`].
#[derive(Clone, Debug)]
pub struct FineTuneRun {
    pub model: Model,
    /// Evaluation loss of the quantized base without adapters.
    pub baseline_eval_loss: f64,
    pub history: Vec<HistoryRecord>,
}

impl FineTuneRun {
    pub fn final_eval_loss(&self) -> f64 {
        self.history.last().map_or(self.baseline_eval_loss, |h| h.eval_loss)
    }
}

/// Builds a quantized student for `task`, attaches adapters per `plan` and trains it.
pub fn fine_tune(
    task: &SyntheticTask,
    quant: &QuantConfig,
    plan: &AdapterPlan,
    cfg: &TrainConfig,
) -> Result<FineTuneRun> {
    cfg.validate()?;
    let (mut init, _) = cfg.streams();
    let mut model = build_student(task, quant, Some(plan), cfg.lora_alpha, &mut init)?;
    let baseline_eval_loss = evaluate(&model.without_adapters(), task, cfg.loss)?;
    let history = train_loop(&mut model, task, cfg)?;
    Ok(FineTuneRun {
        model,
        baseline_eval_loss,
        history,
    })
}
