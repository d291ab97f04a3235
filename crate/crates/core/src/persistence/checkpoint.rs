use std::io::{Read, Write};

use super::adapter::{read_adapter_body, write_adapter_body};
use super::header::{read_header, write_header, RecordKind};
use super::io::{Reader, Writer};
use super::quantized::{read_quantized_body, write_quantized_body};
use crate::error::Result;
use crate::model::{Activation, Model, QuantizedLinear};
use crate::numerics::Matrix;

const HAS_ADAPTER: u8 = 1;
const HAS_BIAS: u8 = 1 << 1;
const BIAS_TRAINABLE: u8 = 1 << 2;

/// Writes a `.ckpt` record: layer count, widths, activation, then per layer
/// the quantized base, a flag byte, the optional adapter and optional bias.
pub fn save_checkpoint(model: &Model, sink: impl Write) -> Result<()> {
    let mut w = Writer::new(sink);
    write_header(&mut w, RecordKind::Checkpoint)?;
    w.u32(model.layers().len(), "layer count")?;
    for width in model.widths() {
        w.u32(width, "width")?;
    }
    w.u8(model.activation().code())?;
    for layer in model.layers() {
        write_quantized_body(&mut w, layer.base())?;
        let mut flags = 0;
        if layer.adapter().is_some() {
            flags |= HAS_ADAPTER;
        }
        if layer.bias().is_some() {
            flags |= HAS_BIAS;
        }
        if layer.bias_trainable() {
            flags |= BIAS_TRAINABLE;
        }
        w.u8(flags)?;
        if let Some(a) = layer.adapter() {
            write_adapter_body(&mut w, a)?;
        }
        if let Some(b) = layer.bias() {
            w.f64s(b.as_slice())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(source: impl Read) -> Result<Model> {
    let mut r = Reader::from_source(source)?;
    read_header(&mut r, RecordKind::Checkpoint)?;
    let count_at = r.offset();
    let count = r.u32("layer count")?;
    if count == 0 {
        return Err(r.error_at(count_at, "checkpoint has no layers"));
    }
    let mut widths = Vec::new();
    for _ in 0..=count {
        widths.push(r.u32("width")?);
    }
    let act_byte = r.u8("activation")?;
    let Some(activation) = Activation::from_code(act_byte) else {
        return Err(r.error_at(r.offset() - 1, format!("unknown activation byte {act_byte}")));
    };
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let at = r.offset();
        let base = read_quantized_body(&mut r)?;
        if (base.rows(), base.cols()) != (widths[i], widths[i + 1]) {
            return Err(r.error_at(
                at,
                format!(
                    "layer {i} base is {}x{} but widths say {}x{}",
                    base.rows(),
                    base.cols(),
                    widths[i],
                    widths[i + 1]
                ),
            ));
        }
        let mut layer = QuantizedLinear::new(base).map_err(|e| r.error_at(at, e.to_string()))?;
        let flags_at = r.offset();
        let flags = r.u8("layer flags")?;
        if flags & !(HAS_ADAPTER | HAS_BIAS | BIAS_TRAINABLE) != 0
            || (flags & BIAS_TRAINABLE != 0 && flags & HAS_BIAS == 0)
        {
            return Err(r.error_at(flags_at, format!("invalid layer flags {flags:#04x}")));
        }
        if flags & HAS_ADAPTER != 0 {
            let at = r.offset();
            let adapter = read_adapter_body(&mut r)?;
            layer = layer.with_adapter(adapter).map_err(|e| r.error_at(at, e.to_string()))?;
        }
        if flags & HAS_BIAS != 0 {
            let at = r.offset();
            let data = r.f64s(widths[i + 1], "bias")?;
            let bias = Matrix::from_vec(1, widths[i + 1], data).map_err(|e| r.error_at(at, e.to_string()))?;
            layer = layer
                .with_bias(bias, flags & BIAS_TRAINABLE != 0)
                .map_err(|e| r.error_at(at, e.to_string()))?;
        }
        layers.push(layer);
    }
    r.finish()?;
    Model::new(activation, layers).map_err(|e| r.error_at(count_at, e.to_string()))
}
