use crate::error::{Error, Result};

use super::QuantMode;

/// Result of quantizing one tile: integer codes plus the affine pair `(α, β)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TileQuant {
    pub codes: Vec<u8>,
    pub alpha: f64,
    pub beta: f64,
}

/// Largest signed magnitude representable in symmetric N-bit storage.
#[inline]
pub(crate) fn absmax_levels(bits: u8) -> u32 {
    (1u32 << (bits - 1)) - 1
}

#[inline]
pub(crate) fn minmax_levels(bits: u8) -> u32 {
    (1u32 << bits) - 1
}

/// Largest valid stored code for the mode.
#[inline]
pub(crate) fn max_code(mode: QuantMode, bits: u8) -> u32 {
    match mode {
        QuantMode::MinMax => minmax_levels(bits),
        QuantMode::AbsMax => 2 * absmax_levels(bits),
    }
}

/// Quantizes one tile: `ŵ = round((w - β) / α)` with ties to even.
///
/// Min-max uses `α = (max - min) / (2^N - 1)` and `β = min`. Abs-max uses
/// `β = 0` and `α = absmax / (2^(N-1) - 1)`, storing the signed code with an
/// offset of `2^(N-1) - 1`. A tile whose `α` would be zero keeps `α = 0`,
/// all-zero codes and `β` equal to its (single) value.
pub fn quantize_tile(values: &[f64], mode: QuantMode, bits: u8) -> Result<TileQuant> {
    if values.is_empty() {
        return Err(Error::Parameter("cannot quantize an empty tile".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {} at tile index {i}", values[i])));
    }
    match mode {
        QuantMode::MinMax => {
            let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            let levels = minmax_levels(bits) as f64;
            let alpha = (hi - lo) / levels;
            if !alpha.is_finite() {
                return Err(Error::Data(format!("tile range [{lo}, {hi}] overflows the scale")));
            }
            if alpha == 0.0 {
                return Ok(constant_tile(values.len(), lo));
            }
            let codes = values
                .iter()
                .map(|&w| ((w - lo) / alpha).round_ties_even().clamp(0.0, levels) as u8)
                .collect();
            Ok(TileQuant { codes, alpha, beta: lo })
        }
        QuantMode::AbsMax => {
            let amax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if amax == 0.0 {
                return Ok(constant_tile(values.len(), 0.0));
            }
            let levels = absmax_levels(bits) as f64;
            let alpha = amax / levels;
            let codes = values
                .iter()
                .map(|&w| ((w / alpha).round_ties_even().clamp(-levels, levels) + levels) as u8)
                .collect();
            Ok(TileQuant {
                codes,
                alpha,
                beta: 0.0,
            })
        }
    }
}

fn constant_tile(len: usize, beta: f64) -> TileQuant {
    TileQuant {
        codes: vec![0; len],
        alpha: 0.0,
        beta,
    }
}

/// Reconstructs `w̃ = α·ŵ + β`, undoing the abs-max offset first.
pub fn dequantize_tile(codes: &[u8], alpha: f64, beta: f64, mode: QuantMode, bits: u8) -> Result<Vec<f64>> {
    let limit = max_code(mode, bits);
    let offset = match mode {
        QuantMode::MinMax => 0.0,
        QuantMode::AbsMax => absmax_levels(bits) as f64,
    };
    codes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if c as u32 > limit {
                Err(Error::Data(format!(
                    "code {c} at tile index {i} exceeds {limit} for {bits}-bit {mode:?}"
                )))
            } else {
                Ok(alpha * (c as f64 - offset) + beta)
            }
        })
        .collect()
}
