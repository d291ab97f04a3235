//! Adapters attached to a frozen quantized linear layer.
//!
//! Three kinds share the layer convention `y = x·W̃ + path(x)` with batch
//! rows:
//!
//! * [`LoraAdapter`]: `path(x) = s·x·A·B`.
//! * [`BaraAdapter`]: `path(x) = s·expand(compress(x)·A·B)` with balancing
//!   factors `λ₁` (input) and `λ₂` (output) and rank `r′`.
//! * [`HiraAdapter`]: `path(x) = s·expand(compress(x)·C)` with a single
//!   matrix `C`.
//!
//! The scaling `s` multiplies only the adapter path. Merging is exact for the
//! pool/repeat operator: [`merge_bara`] produces a dense weight and
//! [`merge_hira`] rewrites the per-tile offsets of the quantized base.

mod bara;
mod hira;
mod lora;
mod scale_op;

pub use bara::{merge_bara, BaraAdapter, BaraGrads};
pub use hira::{merge_hira, HiraAdapter, HiraGrads};
pub use lora::{merge_lora, LoraAdapter, LoraGrads};
pub use scale_op::{compress_features, expand_features, ScaleOperator};

use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;
use crate::quant::{dequantize_matrix, QuantizedMatrix};

/// Input (`λ₁`) and output (`λ₂`) balancing factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Balance {
    pub lambda_in: usize,
    pub lambda_out: usize,
}

impl Balance {
    pub fn new(lambda_in: usize, lambda_out: usize) -> Self {
        Self { lambda_in, lambda_out }
    }

    pub fn square(lambda: usize) -> Self {
        Self::new(lambda, lambda)
    }

    /// Default factors for an offset-folding adapter given the base tile size:
    /// `(8, 8)` for 64-element tiles and `(4, 8)` for 32-element tiles.
    pub fn hira_default_for_tile_len(len: usize) -> Option<Self> {
        match len {
            64 => Some(Self::new(8, 8)),
            32 => Some(Self::new(4, 8)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_in == 0 || self.lambda_out == 0 {
            return Err(Error::Parameter(format!(
                "balancing factors must be >= 1, got ({}, {})",
                self.lambda_in, self.lambda_out
            )));
        }
        Ok(())
    }

    /// Compressed `(D_in/λ₁, D_out/λ₂)`, or a shape error naming the offending factor.
    pub fn compressed(&self, d_in: usize, d_out: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if d_in == 0 || !d_in.is_multiple_of(self.lambda_in) {
            return shape_err(format!("D_in={d_in} is not divisible by λ₁={}", self.lambda_in));
        }
        if d_out == 0 || !d_out.is_multiple_of(self.lambda_out) {
            return shape_err(format!("D_out={d_out} is not divisible by λ₂={}", self.lambda_out));
        }
        Ok((d_in / self.lambda_in, d_out / self.lambda_out))
    }
}

impl std::fmt::Display for Balance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.lambda_in == self.lambda_out {
            write!(f, "{}", self.lambda_in)
        } else {
            write!(f, "{}x{}", self.lambda_in, self.lambda_out)
        }
    }
}

impl std::str::FromStr for Balance {
    type Err = Error;

    /// Accepts `"2"` for `(2, 2)` or `"4x8"` for `(4, 8)`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parameter(format!("invalid balancing factor '{s}'")))
        };
        let b = match s.split_once(['x', 'X']) {
            Some((a, b)) => Balance::new(parse(a)?, parse(b)?),
            None => Balance::square(parse(s)?),
        };
        b.validate()?;
        Ok(b)
    }
}

/// `s = lora_alpha / effective_rank`.
pub fn default_scaling(lora_alpha: f64, effective_rank: usize) -> f64 {
    lora_alpha / effective_rank as f64
}

pub(crate) fn check_layer_inputs(x: &Matrix, w_tilde: &Matrix, d_in: usize, d_out: usize) -> Result<()> {
    if w_tilde.shape() != (d_in, d_out) {
        return shape_err(format!(
            "adapter expects a {d_in}x{d_out} base weight, got {}x{}",
            w_tilde.rows(),
            w_tilde.cols()
        ));
    }
    if x.cols() != d_in {
        return shape_err(format!("input has {} features, layer expects {d_in}", x.cols()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdapterKind {
    Lora,
    Bara,
    Hira,
}

impl AdapterKind {
    pub fn code(self) -> u8 {
        match self {
            AdapterKind::Lora => 0,
            AdapterKind::Bara => 1,
            AdapterKind::Hira => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(AdapterKind::Lora),
            1 => Some(AdapterKind::Bara),
            2 => Some(AdapterKind::Hira),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AdapterKind::Lora => "lora",
            AdapterKind::Bara => "bara",
            AdapterKind::Hira => "hira",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "lora" => Ok(AdapterKind::Lora),
            "bara" => Ok(AdapterKind::Bara),
            "hira" => Ok(AdapterKind::Hira),
            other => Err(Error::Parameter(format!(
                "unknown adapter kind '{other}' (expected lora, bara or hira)"
            ))),
        }
    }
}

/// Any of the three adapter kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum Adapter {
    Lora(LoraAdapter),
    Bara(BaraAdapter),
    Hira(HiraAdapter),
}

/// Parameter gradients of an [`Adapter`], in the order of [`Adapter::params`].
#[derive(Clone, Debug, PartialEq)]
pub enum AdapterGrads {
    Lora { a: Matrix, b: Matrix },
    Bara { a: Matrix, b: Matrix },
    Hira { c: Matrix },
}

impl AdapterGrads {
    pub fn matrices(&self) -> Vec<&Matrix> {
        match self {
            AdapterGrads::Lora { a, b } | AdapterGrads::Bara { a, b } => vec![a, b],
            AdapterGrads::Hira { c } => vec![c],
        }
    }
}

impl Adapter {
    pub fn kind(&self) -> AdapterKind {
        match self {
            Adapter::Lora(_) => AdapterKind::Lora,
            Adapter::Bara(_) => AdapterKind::Bara,
            Adapter::Hira(_) => AdapterKind::Hira,
        }
    }

    pub fn d_in(&self) -> usize {
        match self {
            Adapter::Lora(a) => a.d_in(),
            Adapter::Bara(a) => a.d_in(),
            Adapter::Hira(a) => a.d_in(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            Adapter::Lora(a) => a.d_out(),
            Adapter::Bara(a) => a.d_out(),
            Adapter::Hira(a) => a.d_out(),
        }
    }

    pub fn scaling(&self) -> f64 {
        match self {
            Adapter::Lora(a) => a.scaling(),
            Adapter::Bara(a) => a.scaling(),
            Adapter::Hira(a) => a.scaling(),
        }
    }

    pub fn operator(&self) -> ScaleOperator {
        match self {
            Adapter::Lora(_) => ScaleOperator::PoolRepeat,
            Adapter::Bara(a) => a.operator(),
            Adapter::Hira(a) => a.operator(),
        }
    }

    pub fn shape(&self) -> AdapterShape {
        match self {
            Adapter::Lora(a) => AdapterShape::Lora { rank: a.rank() },
            Adapter::Bara(a) => AdapterShape::Bara {
                balance: a.balance(),
                rank: a.rank(),
            },
            Adapter::Hira(a) => AdapterShape::Hira { balance: a.balance() },
        }
    }

    pub fn params(&self) -> Vec<&Matrix> {
        match self {
            Adapter::Lora(a) => vec![a.a(), a.b()],
            Adapter::Bara(a) => vec![a.a(), a.b()],
            Adapter::Hira(a) => vec![a.c()],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Adapter::Lora(a) => a.params_mut().into(),
            Adapter::Bara(a) => a.params_mut().into(),
            Adapter::Hira(a) => a.params_mut().into(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    pub fn path(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Adapter::Lora(a) => a.path(x),
            Adapter::Bara(a) => a.path(x),
            Adapter::Hira(a) => a.path(x),
        }
    }

    pub fn forward(&self, x: &Matrix, w_tilde: &Matrix) -> Result<Matrix> {
        match self {
            Adapter::Lora(a) => a.forward(x, w_tilde),
            Adapter::Bara(a) => a.forward(x, w_tilde),
            Adapter::Hira(a) => a.forward(x, w_tilde),
        }
    }

    /// Parameter gradients and the input gradient (base path included).
    pub fn backward(&self, x: &Matrix, g_y: &Matrix, w_tilde: &Matrix) -> Result<(AdapterGrads, Matrix)> {
        Ok(match self {
            Adapter::Lora(ad) => {
                let g = ad.backward(x, g_y, w_tilde)?;
                (AdapterGrads::Lora { a: g.a, b: g.b }, g.x)
            }
            Adapter::Bara(ad) => {
                let g = ad.backward(x, g_y, w_tilde)?;
                (AdapterGrads::Bara { a: g.a, b: g.b }, g.x)
            }
            Adapter::Hira(ad) => {
                let g = ad.backward(x, g_y, w_tilde)?;
                (AdapterGrads::Hira { c: g.c }, g.x)
            }
        })
    }

    /// Dense `s·ΔW` for pool/repeat adapters.
    pub fn scaled_delta_weight(&self) -> Result<Matrix> {
        match self {
            Adapter::Lora(a) => Ok(a.delta_weight()?.scale(a.scaling())),
            Adapter::Bara(a) => Ok(a.delta_weight()?.scale(a.scaling())),
            Adapter::Hira(a) => {
                let b = a.balance();
                Ok(a.delta_beta_grid()?.repeat_rows(b.lambda_in).repeat_cols(b.lambda_out))
            }
        }
    }

    /// Full-precision merged weight `W̃ + s·ΔW`.
    pub fn merge_dense(&self, q: &QuantizedMatrix) -> Result<Matrix> {
        match self {
            Adapter::Lora(a) => merge_lora(q, a),
            Adapter::Bara(a) => merge_bara(q, a),
            Adapter::Hira(_) => {
                if (q.rows(), q.cols()) != (self.d_in(), self.d_out()) {
                    return shape_err(format!(
                        "adapter {}x{} does not match base {}x{}",
                        self.d_in(),
                        self.d_out(),
                        q.rows(),
                        q.cols()
                    ));
                }
                dequantize_matrix(q)?.add(&self.scaled_delta_weight()?)
            }
        }
    }
}

/// Adapter geometry independent of layer size, used for parameter accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdapterShape {
    Lora { rank: usize },
    Bara { balance: Balance, rank: usize },
    Hira { balance: Balance },
}

impl AdapterShape {
    pub fn kind(&self) -> AdapterKind {
        match self {
            AdapterShape::Lora { .. } => AdapterKind::Lora,
            AdapterShape::Bara { .. } => AdapterKind::Bara,
            AdapterShape::Hira { .. } => AdapterKind::Hira,
        }
    }

    /// Rank entering `s = lora_alpha / rank`: `r`, `r′`, or `min(D_in/λ₁, D_out/λ₂)`.
    pub fn effective_rank(&self, d_in: usize, d_out: usize) -> Result<usize> {
        match *self {
            AdapterShape::Lora { rank } | AdapterShape::Bara { rank, .. } => Ok(rank),
            AdapterShape::Hira { balance } => {
                let (a, b) = balance.compressed(d_in, d_out)?;
                Ok(a.min(b))
            }
        }
    }

    /// Builds a zero-initialized adapter for a `d_in × d_out` layer.
    pub fn zeros(&self, d_in: usize, d_out: usize, scaling: f64, operator: ScaleOperator) -> Result<Adapter> {
        Ok(match *self {
            AdapterShape::Lora { rank } => Adapter::Lora(LoraAdapter::zeros(d_in, d_out, rank, scaling)?),
            AdapterShape::Bara { balance, rank } => {
                Adapter::Bara(BaraAdapter::zeros(d_in, d_out, balance, rank, scaling, operator)?)
            }
            AdapterShape::Hira { balance } => {
                Adapter::Hira(HiraAdapter::zeros(d_in, d_out, balance, scaling, operator)?)
            }
        })
    }
}

/// Trainable parameters of one adapter on a `d_in × d_out` layer.
///
/// LoRA: `r·(D_in + D_out)`; BaRA: `(D_in/λ₁)·r′ + r′·(D_out/λ₂)`;
/// HiRA: `D_in·D_out / (λ₁·λ₂)`.
pub fn adapter_param_count(shape: &AdapterShape, d_in: usize, d_out: usize) -> Result<u64> {
    if d_in == 0 || d_out == 0 {
        return shape_err(format!("layer {d_in}x{d_out} is empty"));
    }
    let n = match *shape {
        AdapterShape::Lora { rank } => rank as u64 * (d_in as u64 + d_out as u64),
        AdapterShape::Bara { balance, rank } => {
            let (a, b) = balance.compressed(d_in, d_out)?;
            rank as u64 * (a as u64 + b as u64)
        }
        AdapterShape::Hira { balance } => {
            let (a, b) = balance.compressed(d_in, d_out)?;
            a as u64 * b as u64
        }
    };
    Ok(n)
}
