use crate::error::{Error, Result};
use crate::model::{Activation, DenseModel};
use crate::numerics::{Distribution, Matrix, Rng};

use super::LossKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TaskKind {
    /// Regress the teacher's outputs.
    #[default]
    TeacherStudent,
    /// Predict the teacher's arg-max output as a one-hot class.
    Classification,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::TeacherStudent => "teacher-student",
            TaskKind::Classification => "classification",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "teacher-student" | "teacher_student" => Ok(TaskKind::TeacherStudent),
            "classification" => Ok(TaskKind::Classification),
            other => Err(Error::Parameter(format!("unknown task '{other}'"))),
        }
    }

    pub fn default_loss(self) -> LossKind {
        match self {
            TaskKind::TeacherStudent => LossKind::Mse,
            TaskKind::Classification => LossKind::CrossEntropy,
        }
    }
}

/// How input rows are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum InputDistribution {
    /// Every feature independent.
    Iid(Distribution),
    /// `x = z·mix + noise·ε` with `z` and `ε` standard normal; `mix` is
    /// `latent × width`. Models activations concentrated in a few directions.
    Latent { mix: Matrix, noise: f64 },
}

impl InputDistribution {
    pub fn width(&self) -> Option<usize> {
        match self {
            InputDistribution::Iid(_) => None,
            InputDistribution::Latent { mix, .. } => Some(mix.cols()),
        }
    }

    pub fn sample(&self, rng: &mut Rng, rows: usize, width: usize) -> Result<Matrix> {
        match self {
            InputDistribution::Iid(dist) => rng.fill(rows, width, *dist),
            InputDistribution::Latent { mix, noise } => {
                let z = rng.fill(rows, mix.rows(), Distribution::normal(0.0, 1.0))?;
                let eps = rng.fill(rows, width, Distribution::normal(0.0, *noise))?;
                z.matmul(mix)?.add(&eps)
            }
        }
    }
}

/// Recipe for a [`SyntheticTask`].
#[derive(Clone, Debug, PartialEq)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Latent dimension of the inputs; `None` draws iid standard normal features.
    pub latent_dim: Option<usize>,
    pub input_noise: f64,
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    /// 64→64→32 ReLU teacher with 8-dimensional latent inputs.
    fn default() -> Self {
        Self {
            kind: TaskKind::TeacherStudent,
            widths: vec![64, 64, 32],
            activation: Activation::Relu,
            latent_dim: Some(8),
            input_noise: 0.1,
            eval_samples: 512,
            seed: 7,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Parameter(format!(
                "task needs at least two non-zero widths, got {:?}",
                self.widths
            )));
        }
        if self.latent_dim == Some(0) {
            return Err(Error::Parameter("latent dimension must be >= 1".into()));
        }
        if !(self.input_noise.is_finite() && self.input_noise >= 0.0) {
            return Err(Error::Parameter(format!(
                "input noise must be >= 0, got {}",
                self.input_noise
            )));
        }
        if self.eval_samples == 0 {
            return Err(Error::Parameter("eval_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Teacher network, input law and a fixed evaluation set.
///
/// Training batches are fresh draws from the input law, labelled by the teacher.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    kind: TaskKind,
    teacher: DenseModel,
    input: InputDistribution,
    eval_x: Matrix,
    eval_y: Matrix,
}

impl SyntheticTask {
    pub fn generate(cfg: &TaskConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::seed_from_u64(cfg.seed);
        let gain = match cfg.activation {
            Activation::Relu => 2f64.sqrt(),
            _ => 1.0,
        };
        let weights = cfg
            .widths
            .windows(2)
            .map(|w| rng.fill(w[0], w[1], Distribution::normal(0.0, gain / (w[0] as f64).sqrt())))
            .collect::<Result<Vec<_>>>()?;
        let teacher = DenseModel::new(cfg.activation, weights)?;
        let input = match cfg.latent_dim {
            None => InputDistribution::Iid(Distribution::normal(0.0, 1.0)),
            Some(k) => {
                let mix = rng.fill(k, cfg.widths[0], Distribution::normal(0.0, 1.0 / (k as f64).sqrt()))?;
                InputDistribution::Latent {
                    mix,
                    noise: cfg.input_noise,
                }
            }
        };
        Self::with_teacher(cfg.kind, teacher, input, cfg.eval_samples, &mut rng)
    }

    pub fn with_teacher(
        kind: TaskKind,
        teacher: DenseModel,
        input: InputDistribution,
        eval_samples: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let width = teacher.widths()[0];
        if input.width().is_some_and(|w| w != width) {
            return Err(Error::Shape(format!(
                "input law produces {} features, teacher expects {width}",
                input.width().unwrap_or_default()
            )));
        }
        let mut task = Self {
            kind,
            teacher,
            input,
            eval_x: Matrix::zeros(1, 1),
            eval_y: Matrix::zeros(1, 1),
        };
        let (x, y) = task.sample_batch(rng, eval_samples)?;
        task.eval_x = x;
        task.eval_y = y;
        Ok(task)
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn teacher(&self) -> &DenseModel {
        &self.teacher
    }

    pub fn widths(&self) -> Vec<usize> {
        self.teacher.widths()
    }

    pub fn eval_inputs(&self) -> &Matrix {
        &self.eval_x
    }

    pub fn eval_targets(&self) -> &Matrix {
        &self.eval_y
    }

    pub fn targets(&self, x: &Matrix) -> Result<Matrix> {
        let out = self.teacher.forward(x)?;
        Ok(match self.kind {
            TaskKind::TeacherStudent => out,
            TaskKind::Classification => {
                let mut onehot = Matrix::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let row = out.row(i);
                    let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                    onehot.set(i, best, 1.0);
                }
                onehot
            }
        })
    }

    pub fn sample_inputs(&self, rng: &mut Rng, rows: usize) -> Result<Matrix> {
        self.input.sample(rng, rows, self.widths()[0])
    }

    pub fn sample_batch(&self, rng: &mut Rng, rows: usize) -> Result<(Matrix, Matrix)> {
        let x = self.sample_inputs(rng, rows)?;
        let y = self.targets(&x)?;
        Ok((x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = TaskConfig::default();
        let a = SyntheticTask::generate(&cfg).unwrap();
        let b = SyntheticTask::generate(&cfg).unwrap();
        assert_eq!(a.eval_inputs(), b.eval_inputs());
        assert_eq!(a.teacher(), b.teacher());
        assert_eq!(a.widths(), vec![64, 64, 32]);
    }

    #[test]
    fn classification_targets_are_one_hot() {
        let cfg = TaskConfig {
            kind: TaskKind::Classification,
            widths: vec![8, 8, 4],
            eval_samples: 16,
            ..TaskConfig::default()
        };
        let task = SyntheticTask::generate(&cfg).unwrap();
        for i in 0..16 {
            let row = task.eval_targets().row(i);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TaskConfig {
                widths: vec![8],
                ..TaskConfig::default()
            },
            TaskConfig {
                latent_dim: Some(0),
                ..TaskConfig::default()
            },
            TaskConfig {
                eval_samples: 0,
                ..TaskConfig::default()
            },
        ];
        for cfg in bad {
            assert!(SyntheticTask::generate(&cfg).is_err());
        }
    }
}
