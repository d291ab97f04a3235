use super::check_layer_inputs;
use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;
use crate::quant::{dequantize_matrix, QuantizedMatrix};

/// Plain low-rank adapter: `y = x·W̃ + s·(x·A)·B`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    a: Matrix,
    b: Matrix,
    scaling: f64,
}

/// Gradients of [`LoraAdapter::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct LoraGrads {
    pub a: Matrix,
    pub b: Matrix,
    pub x: Matrix,
}

impl LoraAdapter {
    /// `a` is `D_in × r`, `b` is `r × D_out`.
    pub fn new(a: Matrix, b: Matrix, scaling: f64) -> Result<Self> {
        if a.cols() != b.rows() {
            return shape_err(format!(
                "LoRA factors {}x{} and {}x{} disagree on rank",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ));
        }
        if !scaling.is_finite() {
            return Err(Error::Parameter(format!("scaling {scaling} is not finite")));
        }
        Ok(Self { a, b, scaling })
    }

    pub fn zeros(d_in: usize, d_out: usize, rank: usize, scaling: f64) -> Result<Self> {
        if d_in == 0 || d_out == 0 || rank == 0 {
            return shape_err(format!("LoRA geometry {d_in}x{d_out} rank {rank} is empty"));
        }
        Self::new(Matrix::zeros(d_in, rank), Matrix::zeros(rank, d_out), scaling)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn d_in(&self) -> usize {
        self.a.rows()
    }

    pub fn d_out(&self) -> usize {
        self.b.cols()
    }

    pub fn params_mut(&mut self) -> [&mut Matrix; 2] {
        [&mut self.a, &mut self.b]
    }

    /// Adapter contribution `s·(x·A)·B`.
    pub fn path(&self, x: &Matrix) -> Result<Matrix> {
        Ok(x.matmul(&self.a)?.matmul(&self.b)?.scale(self.scaling))
    }

    pub fn forward(&self, x: &Matrix, w_tilde: &Matrix) -> Result<Matrix> {
        check_layer_inputs(x, w_tilde, self.d_in(), self.d_out())?;
        x.matmul(w_tilde)?.add(&self.path(x)?)
    }

    pub fn backward(&self, x: &Matrix, g_y: &Matrix, w_tilde: &Matrix) -> Result<LoraGrads> {
        check_layer_inputs(x, w_tilde, self.d_in(), self.d_out())?;
        let h = x.matmul(&self.a)?;
        let g_z = g_y.scale(self.scaling);
        let g_b = h.t_matmul(&g_z)?;
        let g_h = g_z.matmul_t(&self.b)?;
        let g_a = x.t_matmul(&g_h)?;
        let mut g_x = g_y.matmul_t(w_tilde)?;
        g_x.add_scaled_assign(&g_h.matmul_t(&self.a)?, 1.0)?;
        Ok(LoraGrads { a: g_a, b: g_b, x: g_x })
    }

    /// `ΔW = A·B`, without the scaling.
    pub fn delta_weight(&self) -> Result<Matrix> {
        self.a.matmul(&self.b)
    }
}

/// `W′ = W̃ + s·A·B`.
pub fn merge_lora(q: &QuantizedMatrix, adapter: &LoraAdapter) -> Result<Matrix> {
    if (q.rows(), q.cols()) != (adapter.d_in(), adapter.d_out()) {
        return shape_err(format!(
            "LoRA adapter {}x{} does not match base {}x{}",
            adapter.d_in(),
            adapter.d_out(),
            q.rows(),
            q.cols()
        ));
    }
    let mut w = dequantize_matrix(q)?;
    w.add_scaled_assign(&adapter.delta_weight()?, adapter.scaling)?;
    Ok(w)
}
