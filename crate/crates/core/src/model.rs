//! Small feed-forward networks built from frozen quantized linear layers.
//!
//! Every layer keeps its [`QuantizedMatrix`] untouched and caches the
//! dequantized `W̃` once at construction. Only adapter parameters (and
//! biases explicitly flagged trainable) ever receive gradients.

use crate::adapters::{merge_hira, Adapter, AdapterGrads};
use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;
use crate::quant::{dequantize_matrix, quantize_matrix, QuantConfig, QuantizedMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parameter(format!("unknown activation '{other}'"))),
        }
    }

    pub fn apply(self, pre: &Matrix) -> Matrix {
        match self {
            Activation::Relu => pre.map(|v| v.max(0.0)),
            Activation::Tanh => pre.map(f64::tanh),
            Activation::Identity => pre.clone(),
        }
    }

    /// Gradient through the activation given the pre-activation values.
    fn backprop(self, pre: &Matrix, g: &Matrix) -> Matrix {
        match self {
            Activation::Relu => pre.zip_map(g, |p, g| if p > 0.0 { g } else { 0.0 }),
            Activation::Tanh => pre.zip_map(g, |p, g| {
                let t = p.tanh();
                g * (1.0 - t * t)
            }),
            Activation::Identity => g.clone(),
        }
    }
}

/// Linear layer `y = x·W̃ + adapter(x) + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLinear {
    base: QuantizedMatrix,
    w_tilde: Matrix,
    adapter: Option<Adapter>,
    bias: Option<Matrix>,
    bias_trainable: bool,
}

impl QuantizedLinear {
    pub fn new(base: QuantizedMatrix) -> Result<Self> {
        let w_tilde = dequantize_matrix(&base)?;
        Ok(Self {
            base,
            w_tilde,
            adapter: None,
            bias: None,
            bias_trainable: false,
        })
    }

    pub fn with_adapter(mut self, adapter: Adapter) -> Result<Self> {
        self.set_adapter(Some(adapter))?;
        Ok(self)
    }

    pub fn with_bias(mut self, bias: Matrix, trainable: bool) -> Result<Self> {
        if bias.shape() != (1, self.d_out()) {
            return shape_err(format!(
                "bias {}x{} does not match layer output width {}",
                bias.rows(),
                bias.cols(),
                self.d_out()
            ));
        }
        self.bias = Some(bias);
        self.bias_trainable = trainable;
        Ok(self)
    }

    fn set_adapter(&mut self, adapter: Option<Adapter>) -> Result<()> {
        if let Some(a) = &adapter {
            if (a.d_in(), a.d_out()) != (self.d_in(), self.d_out()) {
                return shape_err(format!(
                    "{} adapter {}x{} does not fit a {}x{} layer",
                    a.kind().name(),
                    a.d_in(),
                    a.d_out(),
                    self.d_in(),
                    self.d_out()
                ));
            }
        }
        self.adapter = adapter;
        Ok(())
    }

    pub fn base(&self) -> &QuantizedMatrix {
        &self.base
    }

    /// Cached `dequantize_matrix(base)`.
    pub fn w_tilde(&self) -> &Matrix {
        &self.w_tilde
    }

    pub fn adapter(&self) -> Option<&Adapter> {
        self.adapter.as_ref()
    }

    pub fn bias(&self) -> Option<&Matrix> {
        self.bias.as_ref()
    }

    pub fn bias_trainable(&self) -> bool {
        self.bias.is_some() && self.bias_trainable
    }

    pub fn d_in(&self) -> usize {
        self.base.rows()
    }

    pub fn d_out(&self) -> usize {
        self.base.cols()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.adapter.as_ref().map_or(0, Adapter::param_count) + if self.bias_trainable() { self.d_out() } else { 0 }
    }

    fn params(&self) -> Vec<&Matrix> {
        let mut out = self.adapter.as_ref().map_or_else(Vec::new, Adapter::params);
        if self.bias_trainable {
            out.extend(self.bias.as_ref());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.adapter.as_mut().map_or_else(Vec::new, Adapter::params_mut);
        if self.bias_trainable {
            out.extend(self.bias.as_mut());
        }
        out
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.d_in() {
            return shape_err(format!(
                "input has {} features, layer expects {}",
                x.cols(),
                self.d_in()
            ));
        }
        let y = match &self.adapter {
            Some(a) => a.forward(x, &self.w_tilde)?,
            None => x.matmul(&self.w_tilde)?,
        };
        match &self.bias {
            Some(b) => y.add_row_broadcast(b),
            None => Ok(y),
        }
    }

    fn backward(&self, x: &Matrix, g_y: &Matrix) -> Result<(LayerGrads, Matrix)> {
        let (adapter, g_x) = match &self.adapter {
            Some(a) => {
                let (g, g_x) = a.backward(x, g_y, &self.w_tilde)?;
                (Some(g), g_x)
            }
            None => (None, g_y.matmul_t(&self.w_tilde)?),
        };
        let bias = self.bias_trainable().then(|| g_y.sum_rows());
        Ok((LayerGrads { adapter, bias }, g_x))
    }
}

/// Single-layer forward, dispatching on the adapter kind.
pub fn layer_forward(layer: &QuantizedLinear, x: &Matrix) -> Result<Matrix> {
    layer.forward(x)
}

/// Gradients of one layer's trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub adapter: Option<AdapterGrads>,
    pub bias: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<LayerGrads>,
    /// Gradient with respect to the model input.
    pub input: Matrix,
}

impl ModelGrads {
    /// Gradients in the same order as [`Model::params`].
    pub fn flatten(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| {
                l.adapter
                    .as_ref()
                    .map_or_else(Vec::new, AdapterGrads::matrices)
                    .into_iter()
                    .chain(l.bias.as_ref())
            })
            .collect()
    }
}

/// Activations recorded by [`model_forward`] for [`model_backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    version: u64,
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl Tape {
    /// Input fed to each layer.
    pub fn inputs(&self) -> &[Matrix] {
        &self.inputs
    }

    /// Raw output of each layer before its activation.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }
}

/// Feed-forward network; the activation follows every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    activation: Activation,
    layers: Vec<QuantizedLinear>,
    version: u64,
}

impl Model {
    pub fn new(activation: Activation, layers: Vec<QuantizedLinear>) -> Result<Self> {
        if layers.is_empty() {
            return shape_err("a model needs at least one layer");
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].d_out() != pair[1].d_in() {
                return shape_err(format!(
                    "layer {i} outputs {} features but layer {} expects {}",
                    pair[0].d_out(),
                    i + 1,
                    pair[1].d_in()
                ));
            }
        }
        Ok(Self {
            activation,
            layers,
            version: 0,
        })
    }

    /// Quantizes every weight of a dense network into a frozen base.
    ///
    /// Tile parameters are rounded to their on-disk `f32` precision so a
    /// checkpoint round trip reproduces the model bit for bit.
    pub fn quantize_dense(dense: &DenseModel, cfg: &QuantConfig) -> Result<Self> {
        let layers = dense
            .weights
            .iter()
            .map(|w| QuantizedLinear::new(quantize_matrix(w, cfg)?.to_storage_precision()?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dense.activation, layers)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[QuantizedLinear] {
        &self.layers
    }

    /// `[D_in of layer 0, D_out of layer 0, …, D_out of last layer]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].d_in())
            .chain(self.layers.iter().map(QuantizedLinear::d_out))
            .collect()
    }

    pub fn set_adapter(&mut self, layer: usize, adapter: Option<Adapter>) -> Result<()> {
        let n = self.layers.len();
        let l = self
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::Parameter(format!("layer {layer} out of range (model has {n})")))?;
        l.set_adapter(adapter)?;
        self.version += 1;
        Ok(())
    }

    pub fn without_adapters(&self) -> Model {
        let mut m = self.clone();
        for l in &mut m.layers {
            l.adapter = None;
        }
        m.version += 1;
        m
    }

    pub fn trainable_param_count(&self) -> usize {
        self.layers.iter().map(QuantizedLinear::trainable_param_count).sum()
    }

    /// Trainable matrices in layer order: adapter factors, then a flagged bias.
    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(QuantizedLinear::params).collect()
    }

    /// Mutable trainable matrices; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.version += 1;
        self.layers.iter_mut().flat_map(QuantizedLinear::params_mut).collect()
    }

    /// Output only, without recording a tape.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(&h)?;
            h = if i == last { pre } else { self.activation.apply(&pre) };
        }
        Ok(h)
    }

    /// Folds every offset-folding adapter into its base offsets.
    ///
    /// Layers without an adapter are kept as they are; any other adapter kind
    /// is a capability error.
    pub fn merge_hira(&self) -> Result<Model> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            match &l.adapter {
                None => layers.push(l.clone()),
                Some(Adapter::Hira(h)) => {
                    let mut merged = QuantizedLinear::new(merge_hira(&l.base, h)?)?;
                    merged.bias = l.bias.clone();
                    merged.bias_trainable = l.bias_trainable;
                    layers.push(merged);
                }
                Some(other) => {
                    return Err(Error::Capability(format!(
                        "layer {i} carries a {} adapter, which cannot be folded into offsets",
                        other.kind().name()
                    )))
                }
            }
        }
        Model::new(self.activation, layers)
    }

    /// Full-precision network with every adapter merged into its weight.
    pub fn merge_dense(&self) -> Result<DenseModel> {
        let mut weights = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            weights.push(match &l.adapter {
                Some(a) => a.merge_dense(&l.base)?,
                None => l.w_tilde.clone(),
            });
        }
        let biases = self.layers.iter().map(|l| l.bias.clone()).collect();
        DenseModel::with_biases(self.activation, weights, biases)
    }
}

/// Runs the network and records what the backward pass needs.
pub fn model_forward(model: &Model, x: &Matrix) -> Result<(Matrix, Tape)> {
    let mut tape = Tape {
        version: model.version,
        inputs: Vec::with_capacity(model.layers.len()),
        pre_activations: Vec::with_capacity(model.layers.len()),
    };
    let mut h = x.clone();
    let last = model.layers.len() - 1;
    for (i, layer) in model.layers.iter().enumerate() {
        let pre = layer.forward(&h)?;
        let next = if i == last {
            pre.clone()
        } else {
            model.activation.apply(&pre)
        };
        tape.inputs.push(h);
        tape.pre_activations.push(pre);
        h = next;
    }
    Ok((h, tape))
}

/// Gradients of the trainable parameters given `∂loss/∂output`.
pub fn model_backward(model: &Model, tape: &Tape, g_output: &Matrix) -> Result<ModelGrads> {
    if tape.version != model.version || tape.inputs.len() != model.layers.len() {
        return Err(Error::State("tape was recorded against a different model state".into()));
    }
    let last = model.layers.len() - 1;
    if g_output.shape() != tape.pre_activations[last].shape() {
        return shape_err(format!(
            "output gradient {}x{} does not match output {}x{}",
            g_output.rows(),
            g_output.cols(),
            tape.pre_activations[last].rows(),
            tape.pre_activations[last].cols()
        ));
    }
    let mut layers = Vec::with_capacity(model.layers.len());
    let mut g = g_output.clone();
    for i in (0..model.layers.len()).rev() {
        if i != last {
            g = model.activation.backprop(&tape.pre_activations[i], &g);
        }
        let (grads, g_x) = model.layers[i].backward(&tape.inputs[i], &g)?;
        layers.push(grads);
        g = g_x;
    }
    layers.reverse();
    Ok(ModelGrads { layers, input: g })
}

/// Full-precision feed-forward network (teachers and merged models).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseModel {
    pub activation: Activation,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Option<Matrix>>,
}

impl DenseModel {
    pub fn new(activation: Activation, weights: Vec<Matrix>) -> Result<Self> {
        let biases = vec![None; weights.len()];
        Self::with_biases(activation, weights, biases)
    }

    pub fn with_biases(activation: Activation, weights: Vec<Matrix>, biases: Vec<Option<Matrix>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return shape_err("dense model needs one bias slot per non-empty weight list");
        }
        for (i, pair) in weights.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return shape_err(format!("weights {i} and {} do not chain", i + 1));
            }
        }
        for (w, b) in weights.iter().zip(&biases) {
            if let Some(b) = b {
                if b.shape() != (1, w.cols()) {
                    return shape_err("bias width does not match its weight");
                }
            }
        }
        Ok(Self {
            activation,
            weights,
            biases,
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.weights[0].rows())
            .chain(self.weights.iter().map(Matrix::cols))
            .collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut pre = h.matmul(w)?;
            if let Some(b) = b {
                pre = pre.add_row_broadcast(b)?;
            }
            h = if i == last { pre } else { self.activation.apply(&pre) };
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{Balance, BaraAdapter, ScaleOperator};
    use crate::numerics::{Distribution, Rng};
    use crate::quant::QuantMode;

    fn qcfg() -> QuantConfig {
        QuantConfig::new(4, 2, 2, QuantMode::MinMax).unwrap()
    }

    fn dense(seed: u64, widths: &[usize], act: Activation) -> DenseModel {
        let mut rng = Rng::seed_from_u64(seed);
        let weights = widths
            .windows(2)
            .map(|w| rng.fill(w[0], w[1], Distribution::normal(0.0, 0.5)).unwrap())
            .collect();
        DenseModel::new(act, weights).unwrap()
    }

    #[test]
    fn plain_layer_is_base_product() {
        let m = Model::quantize_dense(&dense(1, &[4, 6], Activation::Relu), &qcfg()).unwrap();
        let x = Rng::seed_from_u64(2)
            .fill(3, 4, Distribution::normal(0.0, 1.0))
            .unwrap();
        let layer = &m.layers()[0];
        assert_eq!(layer_forward(layer, &x).unwrap(), x.matmul(layer.w_tilde()).unwrap());
    }

    #[test]
    fn zero_adapter_plus_bias() {
        let m = Model::quantize_dense(&dense(1, &[4, 6], Activation::Relu), &qcfg()).unwrap();
        let ad = BaraAdapter::zeros(4, 6, Balance::square(2), 2, 1.0, ScaleOperator::PoolRepeat).unwrap();
        let bias = Matrix::row_vector(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let layer = m.layers()[0]
            .clone()
            .with_adapter(Adapter::Bara(ad))
            .unwrap()
            .with_bias(bias.clone(), false)
            .unwrap();
        let x = Rng::seed_from_u64(2)
            .fill(3, 4, Distribution::normal(0.0, 1.0))
            .unwrap();
        let expect = x.matmul(layer.w_tilde()).unwrap().add_row_broadcast(&bias).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), expect);
    }

    #[test]
    fn two_layers_match_manual_composition() {
        let m = Model::quantize_dense(&dense(3, &[4, 6, 2], Activation::Relu), &qcfg()).unwrap();
        let x = Rng::seed_from_u64(4)
            .fill(5, 4, Distribution::normal(0.0, 1.0))
            .unwrap();
        let (y, _) = model_forward(&m, &x).unwrap();
        let h = x.matmul(m.layers()[0].w_tilde()).unwrap().map(|v| v.max(0.0));
        let expect = h.matmul(m.layers()[1].w_tilde()).unwrap();
        assert_eq!(y, expect);
        assert_eq!(m.predict(&x).unwrap(), y);
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut m = Model::quantize_dense(&dense(5, &[4, 4], Activation::Tanh), &qcfg()).unwrap();
        let x = Matrix::filled(1, 4, 0.5);
        let (_, tape) = model_forward(&m, &x).unwrap();
        m.set_adapter(
            0,
            Some(Adapter::Bara(
                BaraAdapter::zeros(4, 4, Balance::square(2), 1, 1.0, ScaleOperator::PoolRepeat).unwrap(),
            )),
        )
        .unwrap();
        assert!(matches!(
            model_backward(&m, &tape, &Matrix::zeros(1, 4)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let mut m = Model::quantize_dense(&dense(6, &[4, 4, 2], Activation::Tanh), &qcfg()).unwrap();
        let mut rng = Rng::seed_from_u64(1);
        let mut ad = BaraAdapter::zeros(4, 4, Balance::square(2), 2, 1.0, ScaleOperator::PoolRepeat).unwrap();
        for p in ad.params_mut() {
            *p = rng.fill(p.rows(), p.cols(), Distribution::normal(0.0, 1.0)).unwrap();
        }
        m.set_adapter(0, Some(Adapter::Bara(ad))).unwrap();
        let x = rng.fill(3, 4, Distribution::normal(0.0, 1.0)).unwrap();
        let (y, tape) = model_forward(&m, &x).unwrap();
        let g = model_backward(&m, &tape, &Matrix::zeros(y.rows(), y.cols())).unwrap();
        assert!(g.flatten().iter().all(|m| m.is_zero()));
        assert_eq!(g.flatten().len(), m.params().len());
    }

    #[test]
    fn mismatched_widths_rejected() {
        let a = Model::quantize_dense(&dense(1, &[4, 6], Activation::Relu), &qcfg()).unwrap();
        let b = Model::quantize_dense(&dense(1, &[4, 2], Activation::Relu), &qcfg()).unwrap();
        let layers = vec![a.layers()[0].clone(), b.layers()[0].clone()];
        assert!(Model::new(Activation::Relu, layers).is_err());
        assert!(Model::new(Activation::Relu, vec![]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let m = Model::quantize_dense(&dense(8, &[4, 8, 4], Activation::Tanh), &qcfg()).unwrap();
        let x = Rng::seed_from_u64(9)
            .fill(7, 4, Distribution::normal(0.0, 1.0))
            .unwrap();
        let a = m.predict(&x).unwrap();
        let b = m.predict(&x).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}
