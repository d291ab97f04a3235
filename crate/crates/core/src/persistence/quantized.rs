use std::io::{Read, Write};

use super::header::{read_header, write_header, RecordKind};
use super::io::{Reader, Writer};
use crate::error::Result;
use crate::quant::{QuantConfig, QuantMode, QuantizedMatrix};

pub(crate) fn write_quantized_body<W: Write>(w: &mut Writer<W>, q: &QuantizedMatrix) -> Result<()> {
    let cfg = q.config();
    w.u32(q.rows(), "rows")?;
    w.u32(q.cols(), "cols")?;
    w.u16(cfg.tile_rows, "tile_rows")?;
    w.u16(cfg.tile_cols, "tile_cols")?;
    w.u8(cfg.bits)?;
    w.u8(cfg.mode.code())?;
    for &a in q.alphas() {
        w.f32(a, "alpha")?;
    }
    for &b in q.betas() {
        w.f32(b, "beta")?;
    }
    w.bytes(q.packed_codes())
}

pub(crate) fn read_quantized_body(r: &mut Reader) -> Result<QuantizedMatrix> {
    let start = r.offset();
    let rows = r.u32("rows")?;
    let cols = r.u32("cols")?;
    let tile_rows = r.u16("tile_rows")?;
    let tile_cols = r.u16("tile_cols")?;
    let bits = r.u8("bits")?;
    let mode_byte = r.u8("mode")?;
    let Some(mode) = QuantMode::from_code(mode_byte) else {
        return Err(r.error_at(r.offset() - 1, format!("unknown quantization mode byte {mode_byte}")));
    };
    let cfg = QuantConfig::new(bits, tile_rows, tile_cols, mode).map_err(|e| r.error_at(start, e.to_string()))?;
    if rows == 0 || cols == 0 || rows % tile_rows != 0 || cols % tile_cols != 0 {
        return Err(r.error_at(
            start,
            format!("{rows}x{cols} matrix is not divisible into {tile_rows}x{tile_cols} tiles"),
        ));
    }
    let tiles = (rows / tile_rows) * (cols / tile_cols);
    let Some(code_bits) = rows.checked_mul(cols).and_then(|n| n.checked_mul(bits as usize)) else {
        return Err(r.error_at(start, format!("{rows}x{cols} matrix is too large")));
    };
    let mut alphas = Vec::with_capacity(tiles.min(1 << 20));
    for _ in 0..tiles {
        alphas.push(r.f32("alpha")?);
    }
    let mut betas = Vec::with_capacity(tiles.min(1 << 20));
    for _ in 0..tiles {
        betas.push(r.f32("beta")?);
    }
    let packed = r.take(code_bits.div_ceil(8), "packed codes")?.to_vec();
    QuantizedMatrix::from_parts(rows, cols, cfg, packed, alphas, betas).map_err(|e| r.error_at(start, e.to_string()))
}

/// Writes a `.qmz` record. Tile parameters are narrowed to `f32`.
pub fn save_quantized(q: &QuantizedMatrix, sink: impl Write) -> Result<()> {
    let mut w = Writer::new(sink);
    write_header(&mut w, RecordKind::Quantized)?;
    write_quantized_body(&mut w, q)
}

pub fn load_quantized(source: impl Read) -> Result<QuantizedMatrix> {
    let mut r = Reader::from_source(source)?;
    read_header(&mut r, RecordKind::Quantized)?;
    let q = read_quantized_body(&mut r)?;
    r.finish()?;
    Ok(q)
}
