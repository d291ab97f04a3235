use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Mean of `(p - t)²` over every element.
    #[default]
    Mse,
    /// Softmax cross-entropy, mean over rows.
    CrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mse" => Ok(LossKind::Mse),
            "cross_entropy" | "cross-entropy" => Ok(LossKind::CrossEntropy),
            other => Err(Error::Parameter(format!("unknown loss '{other}'"))),
        }
    }
}

/// Batch-mean loss and its gradient with respect to `pred`.
pub fn compute_loss(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return shape_err(format!(
            "prediction {}x{} does not match target {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        ));
    }
    match kind {
        LossKind::Mse => {
            let n = pred.len() as f64;
            let diff = pred.sub(target)?;
            let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n;
            Ok((loss, diff.scale(2.0 / n)))
        }
        LossKind::CrossEntropy => {
            let rows = pred.rows();
            let mut grad = Matrix::zeros(rows, pred.cols());
            let mut total = 0.0;
            for i in 0..rows {
                let z = pred.row(i);
                let t = target.row(i);
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let log_norm = max + sum_exp.ln();
                let mass: f64 = t.iter().sum();
                total += t.iter().zip(z).map(|(t, z)| t * (log_norm - z)).sum::<f64>();
                for j in 0..z.len() {
                    let p = (z[j] - log_norm).exp();
                    grad.set(i, j, (p * mass - t[j]) / rows as f64);
                }
            }
            Ok((total / rows as f64, grad))
        }
    }
}
