use std::io::{Read, Write};

use super::header::{read_header, write_header, RecordKind};
use super::io::{Reader, Writer};
use crate::error::Result;
use crate::model::{Activation, DenseModel};
use crate::numerics::Matrix;

/// Writes a dense network: layer count, activation, then per layer the
/// weight (`rows u32`, `cols u32`, `f64` row-major), a bias flag byte and the
/// optional `f64` bias.
pub fn save_dense_model(model: &DenseModel, sink: impl Write) -> Result<()> {
    let mut w = Writer::new(sink);
    write_header(&mut w, RecordKind::Dense)?;
    w.u32(model.weights.len(), "layer count")?;
    w.u8(model.activation.code())?;
    for (weight, bias) in model.weights.iter().zip(&model.biases) {
        w.u32(weight.rows(), "rows")?;
        w.u32(weight.cols(), "cols")?;
        w.f64s(weight.as_slice())?;
        w.u8(bias.is_some() as u8)?;
        if let Some(b) = bias {
            w.f64s(b.as_slice())?;
        }
    }
    Ok(())
}

pub fn load_dense_model(source: impl Read) -> Result<DenseModel> {
    let mut r = Reader::from_source(source)?;
    read_header(&mut r, RecordKind::Dense)?;
    let count_at = r.offset();
    let count = r.u32("layer count")?;
    if count == 0 {
        return Err(r.error_at(count_at, "dense model has no layers"));
    }
    let act_byte = r.u8("activation")?;
    let Some(activation) = Activation::from_code(act_byte) else {
        return Err(r.error_at(r.offset() - 1, format!("unknown activation byte {act_byte}")));
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for _ in 0..count {
        let at = r.offset();
        let rows = r.u32("rows")?;
        let cols = r.u32("cols")?;
        let n = rows
            .checked_mul(cols)
            .map_or_else(|| r.fail("weight size overflows"), Ok)?;
        let data = r.f64s(n, "weight")?;
        weights.push(Matrix::from_vec(rows, cols, data).map_err(|e| r.error_at(at, e.to_string()))?);
        let flag_at = r.offset();
        biases.push(match r.u8("bias flag")? {
            0 => None,
            1 => {
                let data = r.f64s(cols, "bias")?;
                Some(Matrix::from_vec(1, cols, data).map_err(|e| r.error_at(flag_at, e.to_string()))?)
            }
            other => return Err(r.error_at(flag_at, format!("invalid bias flag {other}"))),
        });
    }
    r.finish()?;
    DenseModel::with_biases(activation, weights, biases).map_err(|e| r.error_at(count_at, e.to_string()))
}
