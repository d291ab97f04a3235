//! Weightless layer-geometry descriptions for parameter accounting.
//!
//! ```text
//! # comment
//! blocks = 32
//! adapter = lora        # lora, bara or hira
//! rank = 64
//! lambda = 2            # bara/hira only
//! layer = q_proj 4096 4096
//! ```

use std::fs;
use std::path::Path;

use qbara::adapters::{adapter_param_count, AdapterKind, AdapterShape, Balance};

use crate::failure::{Failure, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryLayer {
    pub name: String,
    pub d_in: usize,
    pub d_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub blocks: usize,
    pub shape: AdapterShape,
    pub layers: Vec<GeometryLayer>,
}

impl Geometry {
    pub fn load(path: &Path) -> Outcome<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|m| Failure::data(format!("{}: {m}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut blocks = 1;
        let mut kind = None;
        let mut rank = None;
        let mut lambda = None;
        let mut layers = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |m: String| format!("line {}: {m}", n + 1);
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| at("expected `key = value`".into()))?;
            let number = |v: &str| v.parse::<usize>().map_err(|e| at(format!("{key}: {e}")));
            match key {
                "blocks" => blocks = number(value)?,
                "adapter" => kind = Some(AdapterKind::from_name(value).map_err(|e| at(e.to_string()))?),
                "rank" => rank = Some(number(value)?),
                "lambda" => lambda = Some(value.parse::<Balance>().map_err(|e| at(e.to_string()))?),
                "layer" => {
                    let parts: Vec<_> = value.split_whitespace().collect();
                    let [name, d_in, d_out] = parts[..] else {
                        return Err(at("layer needs `name d_in d_out`".into()));
                    };
                    layers.push(GeometryLayer {
                        name: name.to_string(),
                        d_in: number(d_in)?,
                        d_out: number(d_out)?,
                    });
                }
                other => return Err(at(format!("unknown key '{other}'"))),
            }
        }
        if layers.is_empty() {
            return Err("no layers declared".into());
        }
        let need_rank = || rank.ok_or_else(|| "adapter needs a rank".to_string());
        let shape = match kind.unwrap_or(AdapterKind::Lora) {
            AdapterKind::Lora => AdapterShape::Lora { rank: need_rank()? },
            AdapterKind::Bara => AdapterShape::Bara {
                balance: lambda.unwrap_or(Balance::square(2)),
                rank: need_rank()?,
            },
            AdapterKind::Hira => AdapterShape::Hira {
                balance: lambda.ok_or("hira needs a lambda")?,
            },
        };
        Ok(Self { blocks, shape, layers })
    }

    /// Per-layer trainable parameters within one block.
    pub fn layer_params(&self) -> Outcome<Vec<u64>> {
        self.layers
            .iter()
            .map(|l| adapter_param_count(&self.shape, l.d_in, l.d_out).map_err(Failure::from))
            .collect()
    }

    pub fn total_params(&self) -> Outcome<u64> {
        Ok(self.layer_params()?.iter().sum::<u64>() * self.blocks as u64)
    }
}
