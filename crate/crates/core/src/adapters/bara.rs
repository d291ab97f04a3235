//! Balanced-rank adapter.
//!
//! The adapter input is compressed by `λ₁`, passed through `A·B` of rank
//! `r′`, and the result is expanded by `λ₂`. With pooling and repetition the
//! whole path equals a dense `ΔW` that is constant on every `λ₁ × λ₂` block,
//! which is what makes the merge exact.

use super::scale_op::{compress_adjoint, compress_features, expand_adjoint, expand_features};
use super::{check_layer_inputs, Balance, ScaleOperator};
use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;
use crate::quant::{dequantize_matrix, QuantizedMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct BaraAdapter {
    balance: Balance,
    a: Matrix,
    b: Matrix,
    scaling: f64,
    operator: ScaleOperator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaraGrads {
    pub a: Matrix,
    pub b: Matrix,
    pub x: Matrix,
}

impl BaraAdapter {
    /// `a` is `D_in/λ₁ × r′` and `b` is `r′ × D_out/λ₂`; the layer geometry follows from them.
    pub fn new(balance: Balance, a: Matrix, b: Matrix, scaling: f64, operator: ScaleOperator) -> Result<Self> {
        balance.validate()?;
        if a.cols() != b.rows() {
            return shape_err(format!(
                "BaRA factors {}x{} and {}x{} disagree on rank",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ));
        }
        if !scaling.is_finite() {
            return Err(Error::Parameter(format!("scaling {scaling} is not finite")));
        }
        Ok(Self {
            balance,
            a,
            b,
            scaling,
            operator,
        })
    }

    pub fn zeros(
        d_in: usize,
        d_out: usize,
        balance: Balance,
        rank: usize,
        scaling: f64,
        operator: ScaleOperator,
    ) -> Result<Self> {
        let (cin, cout) = balance.compressed(d_in, d_out)?;
        if rank == 0 {
            return shape_err("BaRA rank must be positive");
        }
        Self::new(
            balance,
            Matrix::zeros(cin, rank),
            Matrix::zeros(rank, cout),
            scaling,
            operator,
        )
    }

    pub fn balance(&self) -> Balance {
        self.balance
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

    pub fn operator(&self) -> ScaleOperator {
        self.operator
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn d_in(&self) -> usize {
        self.a.rows() * self.balance.lambda_in
    }

    pub fn d_out(&self) -> usize {
        self.b.cols() * self.balance.lambda_out
    }

    pub fn params_mut(&mut self) -> [&mut Matrix; 2] {
        [&mut self.a, &mut self.b]
    }

    /// Adapter contribution `s·expand(compress(x)·A·B)`.
    pub fn path(&self, x: &Matrix) -> Result<Matrix> {
        let u = compress_features(x, self.balance.lambda_in, self.operator)?;
        let z = u.matmul(&self.a)?.matmul(&self.b)?;
        let y = expand_features(&z, self.balance.lambda_out, self.operator, self.d_out())?;
        Ok(y.scale(self.scaling))
    }

    /// `x·W̃` plus the adapter path; the scaling touches the adapter path only.
    pub fn forward(&self, x: &Matrix, w_tilde: &Matrix) -> Result<Matrix> {
        check_layer_inputs(x, w_tilde, self.d_in(), self.d_out())?;
        x.matmul(w_tilde)?.add(&self.path(x)?)
    }

    pub fn backward(&self, x: &Matrix, g_y: &Matrix, w_tilde: &Matrix) -> Result<BaraGrads> {
        check_layer_inputs(x, w_tilde, self.d_in(), self.d_out())?;
        let Balance { lambda_in, lambda_out } = self.balance;
        let u = compress_features(x, lambda_in, self.operator)?;
        let h = u.matmul(&self.a)?;
        let g_z = expand_adjoint(g_y, lambda_out, self.operator)?.scale(self.scaling);
        let g_b = h.t_matmul(&g_z)?;
        let g_h = g_z.matmul_t(&self.b)?;
        let g_a = u.t_matmul(&g_h)?;
        let g_u = g_h.matmul_t(&self.a)?;
        let mut g_x = g_y.matmul_t(w_tilde)?;
        g_x.add_scaled_assign(&compress_adjoint(&g_u, lambda_in, self.operator, self.d_in())?, 1.0)?;
        Ok(BaraGrads { a: g_a, b: g_b, x: g_x })
    }

    /// Dense `D_in × D_out` equivalent of the adapter path without the scaling.
    ///
    /// Rows of `A·B` are repeated `λ₁` times and divided by `λ₁`, then columns
    /// are repeated `λ₂` times, so every `λ₁ × λ₂` block holds one value.
    pub fn delta_weight(&self) -> Result<Matrix> {
        if self.operator != ScaleOperator::PoolRepeat {
            return Err(Error::Capability(format!(
                "dense delta weight is only defined for pool/repeat, not {}",
                self.operator.name()
            )));
        }
        let ab = self.a.matmul(&self.b)?;
        let lambda_in = self.balance.lambda_in as f64;
        Ok(ab
            .repeat_rows(self.balance.lambda_in)
            .map(|v| v / lambda_in)
            .repeat_cols(self.balance.lambda_out))
    }
}

/// `W′ = W̃ + s·ΔW`, a full-precision weight whose forward equals the adapted layer.
pub fn merge_bara(q: &QuantizedMatrix, adapter: &BaraAdapter) -> Result<Matrix> {
    if (q.rows(), q.cols()) != (adapter.d_in(), adapter.d_out()) {
        return shape_err(format!(
            "BaRA adapter {}x{} does not match base {}x{}",
            adapter.d_in(),
            adapter.d_out(),
            q.rows(),
            q.cols()
        ));
    }
    let delta = adapter.delta_weight()?;
    let mut w = dequantize_matrix(q)?;
    w.add_scaled_assign(&delta, adapter.scaling)?;
    Ok(w)
}
