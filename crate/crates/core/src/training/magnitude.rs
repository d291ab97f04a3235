use crate::error::Result;
use crate::model::{model_forward, Model};
use crate::numerics::Matrix;

/// Which tensor a [`MagnitudeRecord`] describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MagnitudeTensor {
    /// Layer input; one record per input feature.
    Input,
    /// Layer output before the activation; one record per output feature.
    Output,
    /// Dequantized base weight; one record per input feature (row).
    Weight,
}

impl MagnitudeTensor {
    pub fn name(self) -> &'static str {
        match self {
            MagnitudeTensor::Input => "input",
            MagnitudeTensor::Output => "output",
            MagnitudeTensor::Weight => "weight",
        }
    }
}

/// Mean and max of `|·|` for one channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagnitudeRecord {
    pub layer: usize,
    pub tensor: MagnitudeTensor,
    pub channel: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
}

fn column_stats(m: &Matrix, layer: usize, tensor: MagnitudeTensor, out: &mut Vec<MagnitudeRecord>) {
    for c in 0..m.cols() {
        let (mut sum, mut max) = (0.0, 0.0f64);
        for r in 0..m.rows() {
            let v = m.get(r, c).abs();
            sum += v;
            max = max.max(v);
        }
        out.push(MagnitudeRecord {
            layer,
            tensor,
            channel: c,
            mean_abs: sum / m.rows() as f64,
            max_abs: max,
        });
    }
}

fn row_stats(m: &Matrix, layer: usize, out: &mut Vec<MagnitudeRecord>) {
    for r in 0..m.rows() {
        let row = m.row(r);
        out.push(MagnitudeRecord {
            layer,
            tensor: MagnitudeTensor::Weight,
            channel: r,
            mean_abs: row.iter().map(|v| v.abs()).sum::<f64>() / row.len() as f64,
            max_abs: row.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        });
    }
}

/// Per-layer, per-channel magnitude statistics on a batch of probe inputs.
///
/// Records are ordered by layer, then input, output, weight, then channel.
pub fn magnitude_report(model: &Model, inputs: &Matrix) -> Result<Vec<MagnitudeRecord>> {
    let (_, tape) = model_forward(model, inputs)?;
    let mut out = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        column_stats(&tape.inputs()[l], l, MagnitudeTensor::Input, &mut out);
        column_stats(&tape.pre_activations()[l], l, MagnitudeTensor::Output, &mut out);
        row_stats(layer.w_tilde(), l, &mut out);
    }
    Ok(out)
}
