//! Tile-wise N-bit affine quantization of weight matrices.
//!
//! A weight matrix is cut into `tile_rows × tile_cols` rectangles and each
//! rectangle is stored as a triplet of N-bit codes and one `(α, β)` pair with
//! `w̃ = α·ŵ + β`. Tiles are enumerated in row-major tile order and the codes
//! of a tile are row-major inside it, so the code stream is tile-major.

mod pack;
mod tile;

pub use pack::{pack_codes, packed_len, unpack_codes};
pub use tile::{dequantize_tile, quantize_tile, TileQuant};

use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum QuantMode {
    /// Asymmetric: `α = (max - min) / (2^N - 1)`, `β = min`.
    #[default]
    MinMax,
    /// Symmetric: `α = absmax / (2^(N-1) - 1)`, `β = 0`, offset-binary codes.
    AbsMax,
}

impl QuantMode {
    pub fn code(self) -> u8 {
        match self {
            QuantMode::MinMax => 0,
            QuantMode::AbsMax => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(QuantMode::MinMax),
            1 => Some(QuantMode::AbsMax),
            _ => None,
        }
    }
}

pub const SUPPORTED_BITS: [u8; 4] = [2, 3, 4, 8];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantConfig {
    pub bits: u8,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub mode: QuantMode,
}

impl QuantConfig {
    pub fn new(bits: u8, tile_rows: usize, tile_cols: usize, mode: QuantMode) -> Result<Self> {
        let cfg = Self {
            bits,
            tile_rows,
            tile_cols,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_BITS.contains(&self.bits) {
            return Err(Error::Parameter(format!(
                "bit width {} not in {:?}",
                self.bits, SUPPORTED_BITS
            )));
        }
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return Err(Error::Parameter(format!(
                "tile {}x{} must have positive sides",
                self.tile_rows, self.tile_cols
            )));
        }
        Ok(())
    }

    pub fn tile_len(&self) -> usize {
        self.tile_rows * self.tile_cols
    }

    /// Storage cost per weight including the per-tile `α` and `β` (64 bits each).
    pub fn bits_per_weight(&self) -> f64 {
        self.bits as f64 + 128.0 / self.tile_len() as f64
    }
}

/// A frozen weight matrix in tile-wise `(ŵ, α, β)` form.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    config: QuantConfig,
    packed: Vec<u8>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
}

fn check_geometry(rows: usize, cols: usize, cfg: &QuantConfig) -> Result<()> {
    cfg.validate()?;
    if rows == 0 || cols == 0 || !rows.is_multiple_of(cfg.tile_rows) || !cols.is_multiple_of(cfg.tile_cols) {
        return shape_err(format!(
            "{rows}x{cols} matrix is not divisible into {}x{} tiles",
            cfg.tile_rows, cfg.tile_cols
        ));
    }
    Ok(())
}

impl QuantizedMatrix {
    /// Assembles a quantized matrix from stored parts, checking every invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        config: QuantConfig,
        packed: Vec<u8>,
        alphas: Vec<f64>,
        betas: Vec<f64>,
    ) -> Result<Self> {
        check_geometry(rows, cols, &config)?;
        let tiles = (rows / config.tile_rows) * (cols / config.tile_cols);
        if alphas.len() != tiles || betas.len() != tiles {
            return shape_err(format!(
                "expected {tiles} tile parameters, got {} alphas and {} betas",
                alphas.len(),
                betas.len()
            ));
        }
        if let Some(i) = alphas.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Data(format!("alpha {} of tile {i} is invalid", alphas[i])));
        }
        if let Some(i) = betas.iter().position(|b| !b.is_finite()) {
            return Err(Error::Data(format!("beta {} of tile {i} is not finite", betas[i])));
        }
        let expected = packed_len(rows * cols, config.bits);
        if packed.len() != expected {
            return Err(Error::Data(format!(
                "code buffer has {} bytes, expected {expected}",
                packed.len()
            )));
        }
        let q = Self {
            rows,
            cols,
            config,
            packed,
            alphas,
            betas,
        };
        let limit = tile::max_code(config.mode, config.bits);
        if let Some((i, c)) = q.codes()?.iter().enumerate().find(|(_, &c)| c as u32 > limit) {
            return Err(Error::Data(format!("code {c} at position {i} exceeds {limit}")));
        }
        // Unused padding bits in the final byte must be zero.
        if pack_codes(&q.codes()?, config.bits)? != q.packed {
            return Err(Error::Data("non-zero padding bits in code buffer".into()));
        }
        Ok(q)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn config(&self) -> &QuantConfig {
        &self.config
    }

    /// Tile grid as `(tiles down, tiles across)`.
    pub fn tile_grid(&self) -> (usize, usize) {
        (self.rows / self.config.tile_rows, self.cols / self.config.tile_cols)
    }

    pub fn tile_count(&self) -> usize {
        self.alphas.len()
    }

    pub fn packed_codes(&self) -> &[u8] {
        &self.packed
    }

    /// Unpacked codes in tile-major order.
    pub fn codes(&self) -> Result<Vec<u8>> {
        unpack_codes(&self.packed, self.config.bits, self.rows * self.cols)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Copy with replaced offsets; codes and scales are shared unchanged.
    pub fn with_betas(&self, betas: Vec<f64>) -> Result<Self> {
        if betas.len() != self.betas.len() {
            return shape_err(format!("{} betas supplied for {} tiles", betas.len(), self.betas.len()));
        }
        if let Some(i) = betas.iter().position(|b| !b.is_finite()) {
            return Err(Error::Data(format!("beta {} of tile {i} is not finite", betas[i])));
        }
        Ok(Self { betas, ..self.clone() })
    }

    /// Rounds every `α` and `β` to the nearest `f32`, the precision used on disk.
    ///
    /// Codes are kept. A matrix passed through this method survives a
    /// save/load cycle with bit-identical dequantized values.
    pub fn to_storage_precision(&self) -> Result<Self> {
        let round = |v: &f64| {
            let r = *v as f32;
            if r.is_finite() {
                Ok(r as f64)
            } else {
                Err(Error::Data(format!("tile parameter {v} overflows f32 storage")))
            }
        };
        Ok(Self {
            alphas: self.alphas.iter().map(round).collect::<Result<_>>()?,
            betas: self.betas.iter().map(round).collect::<Result<_>>()?,
            ..self.clone()
        })
    }

    /// Row/column ranges covered by tile `t` (row-major tile order).
    pub fn tile_origin(&self, t: usize) -> (usize, usize) {
        let (_, across) = self.tile_grid();
        (
            (t / across) * self.config.tile_rows,
            (t % across) * self.config.tile_cols,
        )
    }
}

/// Quantizes each tile of `m` independently.
pub fn quantize_matrix(m: &Matrix, cfg: &QuantConfig) -> Result<QuantizedMatrix> {
    check_geometry(m.rows(), m.cols(), cfg)?;
    let (down, across) = (m.rows() / cfg.tile_rows, m.cols() / cfg.tile_cols);
    let mut codes = Vec::with_capacity(m.len());
    let mut alphas = Vec::with_capacity(down * across);
    let mut betas = Vec::with_capacity(down * across);
    let mut buf = Vec::with_capacity(cfg.tile_len());
    for ti in 0..down {
        for tj in 0..across {
            buf.clear();
            for r in ti * cfg.tile_rows..(ti + 1) * cfg.tile_rows {
                buf.extend_from_slice(&m.row(r)[tj * cfg.tile_cols..(tj + 1) * cfg.tile_cols]);
            }
            let tq = quantize_tile(&buf, cfg.mode, cfg.bits)?;
            codes.extend_from_slice(&tq.codes);
            alphas.push(tq.alpha);
            betas.push(tq.beta);
        }
    }
    Ok(QuantizedMatrix {
        rows: m.rows(),
        cols: m.cols(),
        config: *cfg,
        packed: pack_codes(&codes, cfg.bits)?,
        alphas,
        betas,
    })
}

/// Dense `W̃` assembled tile by tile.
pub fn dequantize_matrix(q: &QuantizedMatrix) -> Result<Matrix> {
    let cfg = q.config;
    let codes = q.codes()?;
    let mut out = Matrix::zeros(q.rows, q.cols);
    for (t, tile_codes) in codes.chunks_exact(cfg.tile_len()).enumerate() {
        let values = dequantize_tile(tile_codes, q.alphas[t], q.betas[t], cfg.mode, cfg.bits)?;
        let (r0, c0) = q.tile_origin(t);
        for (k, v) in values.into_iter().enumerate() {
            out.set(r0 + k / cfg.tile_cols, c0 + k % cfg.tile_cols, v);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantStats {
    pub max_abs_err: f64,
    pub mse: f64,
    pub bits_per_weight: f64,
}

pub fn quantization_stats(m: &Matrix, q: &QuantizedMatrix) -> Result<QuantStats> {
    if m.shape() != (q.rows, q.cols) {
        return shape_err(format!(
            "matrix {}x{} vs quantized {}x{}",
            m.rows(),
            m.cols(),
            q.rows,
            q.cols
        ));
    }
    let w_tilde = dequantize_matrix(q)?;
    let mut max_abs_err = 0.0f64;
    let mut sq = 0.0;
    for (a, b) in m.as_slice().iter().zip(w_tilde.as_slice()) {
        let d = a - b;
        max_abs_err = max_abs_err.max(d.abs());
        sq += d * d;
    }
    Ok(QuantStats {
        max_abs_err,
        mse: sq / m.len() as f64,
        bits_per_weight: q.config.bits_per_weight(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Distribution, Rng};
    use proptest::prelude::*;

    fn cfg(bits: u8, tr: usize, tc: usize) -> QuantConfig {
        QuantConfig::new(bits, tr, tc, QuantMode::MinMax).unwrap()
    }

    #[test]
    fn tile_count_arithmetic() {
        let m = Rng::seed_from_u64(0)
            .fill(4, 4, Distribution::normal(0.0, 1.0))
            .unwrap();
        let q = quantize_matrix(&m, &cfg(4, 2, 2)).unwrap();
        assert_eq!(q.tile_count(), 4);
        assert_eq!(q.alphas().len(), 4);
        assert_eq!(q.betas().len(), 4);
        assert_eq!(q.tile_grid(), (2, 2));
    }

    #[test]
    fn whole_matrix_tile_equals_single_tile_call() {
        let m = Rng::seed_from_u64(1)
            .fill(3, 5, Distribution::normal(0.0, 1.0))
            .unwrap();
        let q = quantize_matrix(&m, &cfg(4, 3, 5)).unwrap();
        let t = quantize_tile(m.as_slice(), QuantMode::MinMax, 4).unwrap();
        assert_eq!(q.codes().unwrap(), t.codes);
        assert_eq!((q.alphas()[0], q.betas()[0]), (t.alpha, t.beta));
    }

    #[test]
    fn tile_major_code_order() {
        // 2x4 matrix, 2x2 tiles: tile 0 = cols 0..2, tile 1 = cols 2..4
        let m = Matrix::from_rows(&[&[0.0, 1.0, 10.0, 11.0], &[2.0, 3.0, 12.0, 13.0]]);
        let q = quantize_matrix(&m, &cfg(2, 2, 2)).unwrap();
        assert_eq!(q.codes().unwrap(), vec![0, 1, 2, 3, 0, 1, 2, 3]);
        assert_eq!(q.betas(), &[0.0, 10.0]);
        assert_eq!(dequantize_matrix(&q).unwrap(), m);
    }

    #[test]
    fn non_divisible_geometry_names_dims() {
        let m = Matrix::zeros(64, 64);
        let err = quantize_matrix(&m, &cfg(4, 7, 7)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let msg = err.to_string();
        assert!(msg.contains("64x64") && msg.contains("7x7"), "{msg}");
    }

    #[test]
    fn constant_matrix_exact() {
        let m = Matrix::filled(4, 4, -0.3);
        let q = quantize_matrix(&m, &cfg(3, 2, 2)).unwrap();
        assert_eq!(dequantize_matrix(&q).unwrap(), m);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(QuantConfig::new(5, 2, 2, QuantMode::MinMax).is_err());
        assert!(QuantConfig::new(4, 0, 2, QuantMode::MinMax).is_err());
    }

    #[test]
    fn global_mse_is_sum_of_tile_mses() {
        let m = Rng::seed_from_u64(7)
            .fill(64, 64, Distribution::normal(0.0, 1.0))
            .unwrap();
        let c = cfg(4, 8, 8);
        let q = quantize_matrix(&m, &c).unwrap();
        let stats = quantization_stats(&m, &q).unwrap();
        // per-tile oracle: quantize each tile directly and accumulate squared error
        let mut sq = 0.0;
        for ti in 0..8 {
            for tj in 0..8 {
                let vals: Vec<f64> = (0..8)
                    .flat_map(|r| (0..8).map(move |c| (ti * 8 + r, tj * 8 + c)))
                    .map(|(r, c)| m.get(r, c))
                    .collect();
                let t = quantize_tile(&vals, QuantMode::MinMax, 4).unwrap();
                for (w, code) in vals.iter().zip(&t.codes) {
                    let d = w - (t.alpha * *code as f64 + t.beta);
                    sq += d * d;
                }
            }
        }
        assert!((stats.mse - sq / 4096.0).abs() <= 1e-12);
    }

    #[test]
    fn stats_on_grid_and_bits_per_weight() {
        let m = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let q = quantize_matrix(&m, &cfg(2, 2, 2)).unwrap();
        let s = quantization_stats(&m, &q).unwrap();
        assert_eq!(s.max_abs_err, 0.0);
        assert_eq!(cfg(4, 8, 8).bits_per_weight(), 6.0);
        assert!(quantization_stats(&Matrix::zeros(2, 4), &q).is_err());
    }

    #[test]
    fn stats_mse_matches_naive_oracle() {
        let m = Rng::seed_from_u64(8)
            .fill(16, 8, Distribution::uniform(-2.0, 2.0))
            .unwrap();
        let q = quantize_matrix(&m, &cfg(3, 4, 4)).unwrap();
        let w = dequantize_matrix(&q).unwrap();
        let mut sq = 0.0;
        for r in 0..16 {
            for c in 0..8 {
                sq += (m.get(r, c) - w.get(r, c)).powi(2);
            }
        }
        let s = quantization_stats(&m, &q).unwrap();
        assert!((s.mse - sq / 128.0).abs() <= 1e-12);
    }

    #[test]
    fn dequantized_error_within_tile_half_step() {
        let m = Rng::seed_from_u64(9)
            .fill(32, 32, Distribution::normal(0.0, 1.0))
            .unwrap();
        let q = quantize_matrix(&m, &cfg(4, 4, 8)).unwrap();
        let worst_alpha = q.alphas().iter().cloned().fold(0.0, f64::max);
        let w = dequantize_matrix(&q).unwrap();
        assert!(m.max_abs_diff(&w) <= worst_alpha / 2.0 * (1.0 + 1e-12));
    }

    #[test]
    fn from_parts_validates() {
        let m = Rng::seed_from_u64(3)
            .fill(4, 4, Distribution::normal(0.0, 1.0))
            .unwrap();
        let q = quantize_matrix(&m, &cfg(4, 2, 2)).unwrap();
        let rebuilt = QuantizedMatrix::from_parts(
            4,
            4,
            *q.config(),
            q.packed_codes().to_vec(),
            q.alphas().to_vec(),
            q.betas().to_vec(),
        )
        .unwrap();
        assert_eq!(rebuilt, q);
        let mut neg = q.alphas().to_vec();
        neg[0] = -1.0;
        assert!(
            QuantizedMatrix::from_parts(4, 4, *q.config(), q.packed_codes().to_vec(), neg, q.betas().to_vec()).is_err()
        );
        assert!(
            QuantizedMatrix::from_parts(4, 4, *q.config(), vec![0; 3], q.alphas().to_vec(), q.betas().to_vec())
                .is_err()
        );
        // abs-max codes above 2·(2^(N-1)-1) are out of range
        let absmax = QuantConfig::new(2, 2, 2, QuantMode::AbsMax).unwrap();
        let packed = pack_codes(&[3, 0, 0, 0], 2).unwrap();
        assert!(matches!(
            QuantizedMatrix::from_parts(2, 2, absmax, packed, vec![1.0], vec![0.0]),
            Err(Error::Data(_))
        ));
    }

    proptest! {
        #[test]
        fn requantize_is_idempotent(seed in any::<u64>(), bits in prop::sample::select(SUPPORTED_BITS.to_vec()),
                                    absmax in any::<bool>()) {
            let mode = if absmax { QuantMode::AbsMax } else { QuantMode::MinMax };
            let c = QuantConfig::new(bits, 4, 2, mode).unwrap();
            let m = Rng::seed_from_u64(seed).fill(8, 8, Distribution::normal(0.0, 1.0)).unwrap();
            let q1 = quantize_matrix(&m, &c).unwrap();
            let q2 = quantize_matrix(&dequantize_matrix(&q1).unwrap(), &c).unwrap();
            prop_assert_eq!(q1.packed_codes(), q2.packed_codes());
            prop_assert_eq!(q1.betas(), q2.betas());
            for (a, b) in q1.alphas().iter().zip(q2.alphas()) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a);
            }
        }

        #[test]
        fn tiles_are_independent(seed in any::<u64>(), tile in 0usize..4, delta in -5.0f64..5.0) {
            let c = QuantConfig::new(4, 4, 4, QuantMode::MinMax).unwrap();
            let m = Rng::seed_from_u64(seed).fill(8, 8, Distribution::normal(0.0, 1.0)).unwrap();
            let q = quantize_matrix(&m, &c).unwrap();
            let (r0, c0) = q.tile_origin(tile);
            let mut m2 = m.clone();
            m2.set(r0 + 1, c0 + 2, m.get(r0 + 1, c0 + 2) + delta);
            let q2 = quantize_matrix(&m2, &c).unwrap();
            let (a, b) = (q.codes().unwrap(), q2.codes().unwrap());
            for t in (0..4).filter(|&t| t != tile) {
                prop_assert_eq!(&a[t * 16..(t + 1) * 16], &b[t * 16..(t + 1) * 16]);
                prop_assert_eq!(q.alphas()[t], q2.alphas()[t]);
                prop_assert_eq!(q.betas()[t], q2.betas()[t]);
            }
        }
    }
}
