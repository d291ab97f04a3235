use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam { lr: f64, b1: f64, b2: f64, eps: f64 },
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig::Sgd { lr }
    }

    /// Adam with `b1 = 0.9`, `b2 = 0.999`, `eps = 1e-8`.
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            b1: 0.9,
            b2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    /// A zero learning rate is accepted; it freezes training.
    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::Parameter(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        if let OptimizerConfig::Adam { b1, b2, eps, .. } = *self {
            if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
                return Err(Error::Parameter(format!(
                    "Adam betas must lie in [0, 1), got {b1}, {b2}"
                )));
            }
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::Parameter(format!("Adam eps must be > 0, got {eps}")));
            }
        }
        Ok(())
    }
}

/// Optimizer state; moment buffers are created on the first step.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[&Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return shape_err(format!("{} parameters but {} gradients", params.len(), grads.len()));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return shape_err(format!(
                    "parameter {i} is {}x{} but its gradient is {}x{}",
                    p.rows(),
                    p.cols(),
                    g.rows(),
                    g.cols()
                ));
            }
        }
        self.t += 1;
        match self.cfg {
            OptimizerConfig::Sgd { lr } => {
                for (p, g) in params.into_iter().zip(grads) {
                    p.add_scaled_assign(g, -lr)?;
                }
            }
            OptimizerConfig::Adam { lr, b1, b2, eps } => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
                    self.v = self.m.clone();
                } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.shape() != g.shape()) {
                    return Err(Error::State("parameter set changed between optimizer steps".into()));
                }
                let c1 = 1.0 - b1.powf(self.t as f64);
                let c2 = 1.0 - b2.powf(self.t as f64);
                for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let m = self.m[k].as_mut_slice();
                    let v = self.v[k].as_mut_slice();
                    let p = p.as_mut_slice();
                    for (j, &gj) in g.as_slice().iter().enumerate() {
                        m[j] = b1 * m[j] + (1.0 - b1) * gj;
                        v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
