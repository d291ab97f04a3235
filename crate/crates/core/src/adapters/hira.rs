//! Higher-rank adapter whose update folds into the per-tile offsets.
//!
//! A single matrix `C` of shape `D_in/λ₁ × D_out/λ₂` sits between input
//! pooling and output repetition. When the base tiles are exactly `λ₁ × λ₂`
//! the dense equivalent of the path is constant on each tile, so it can be
//! absorbed into `β` without touching codes or scales.

use super::scale_op::{compress_adjoint, compress_features, expand_adjoint, expand_features};
use super::{check_layer_inputs, Balance, ScaleOperator};
use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;
use crate::quant::QuantizedMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct HiraAdapter {
    balance: Balance,
    c: Matrix,
    scaling: f64,
    operator: ScaleOperator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiraGrads {
    pub c: Matrix,
    pub x: Matrix,
}

impl HiraAdapter {
    pub fn new(balance: Balance, c: Matrix, scaling: f64, operator: ScaleOperator) -> Result<Self> {
        balance.validate()?;
        if !scaling.is_finite() {
            return Err(Error::Parameter(format!("scaling {scaling} is not finite")));
        }
        Ok(Self {
            balance,
            c,
            scaling,
            operator,
        })
    }

    pub fn zeros(d_in: usize, d_out: usize, balance: Balance, scaling: f64, operator: ScaleOperator) -> Result<Self> {
        let (cin, cout) = balance.compressed(d_in, d_out)?;
        Self::new(balance, Matrix::zeros(cin, cout), scaling, operator)
    }

    pub fn balance(&self) -> Balance {
        self.balance
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn operator(&self) -> ScaleOperator {
        self.operator
    }

    pub fn d_in(&self) -> usize {
        self.c.rows() * self.balance.lambda_in
    }

    pub fn d_out(&self) -> usize {
        self.c.cols() * self.balance.lambda_out
    }

    /// `min(D_in/λ₁, D_out/λ₂)`, the largest rank `C` can carry.
    pub fn effective_rank(&self) -> usize {
        self.c.rows().min(self.c.cols())
    }

    pub fn params_mut(&mut self) -> [&mut Matrix; 1] {
        [&mut self.c]
    }

    pub fn path(&self, x: &Matrix) -> Result<Matrix> {
        let u = compress_features(x, self.balance.lambda_in, self.operator)?;
        let z = u.matmul(&self.c)?;
        let y = expand_features(&z, self.balance.lambda_out, self.operator, self.d_out())?;
        Ok(y.scale(self.scaling))
    }

    pub fn forward(&self, x: &Matrix, w_tilde: &Matrix) -> Result<Matrix> {
        check_layer_inputs(x, w_tilde, self.d_in(), self.d_out())?;
        x.matmul(w_tilde)?.add(&self.path(x)?)
    }

    pub fn backward(&self, x: &Matrix, g_y: &Matrix, w_tilde: &Matrix) -> Result<HiraGrads> {
        check_layer_inputs(x, w_tilde, self.d_in(), self.d_out())?;
        let Balance { lambda_in, lambda_out } = self.balance;
        let u = compress_features(x, lambda_in, self.operator)?;
        let g_z = expand_adjoint(g_y, lambda_out, self.operator)?.scale(self.scaling);
        let g_c = u.t_matmul(&g_z)?;
        let g_u = g_z.matmul_t(&self.c)?;
        let mut g_x = g_y.matmul_t(w_tilde)?;
        g_x.add_scaled_assign(&compress_adjoint(&g_u, lambda_in, self.operator, self.d_in())?, 1.0)?;
        Ok(HiraGrads { c: g_c, x: g_x })
    }

    /// Per-tile offset increments `(s/λ₁)·C`, one entry per `λ₁ × λ₂` tile.
    pub fn delta_beta_grid(&self) -> Result<Matrix> {
        if self.operator != ScaleOperator::PoolRepeat {
            return Err(Error::Capability(format!(
                "offset folding is only defined for pool/repeat, not {}",
                self.operator.name()
            )));
        }
        let lambda_in = self.balance.lambda_in as f64;
        let s = self.scaling;
        Ok(self.c.map(|v| v / lambda_in * s))
    }
}

/// Folds the adapter into the offsets: codes and scales are untouched and
/// `β′ = β + (s/λ₁)·C` tile by tile.
pub fn merge_hira(q: &QuantizedMatrix, adapter: &HiraAdapter) -> Result<QuantizedMatrix> {
    let Balance { lambda_in, lambda_out } = adapter.balance;
    let cfg = q.config();
    if (cfg.tile_rows, cfg.tile_cols) != (lambda_in, lambda_out) {
        return Err(Error::Capability(format!(
            "offset folding requires {lambda_in}x{lambda_out} quantization tiles, base uses {}x{}",
            cfg.tile_rows, cfg.tile_cols
        )));
    }
    if (q.rows(), q.cols()) != (adapter.d_in(), adapter.d_out()) {
        return shape_err(format!(
            "HiRA adapter {}x{} does not match base {}x{}",
            adapter.d_in(),
            adapter.d_out(),
            q.rows(),
            q.cols()
        ));
    }
    let grid = adapter.delta_beta_grid()?;
    // tile grid and C grid share row-major order
    let betas = q.betas().iter().zip(grid.as_slice()).map(|(b, d)| b + d).collect();
    q.with_betas(betas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{dequantize_matrix, quantize_matrix, QuantConfig, QuantMode};

    fn worked_adapter() -> HiraAdapter {
        HiraAdapter::new(
            Balance::square(2),
            Matrix::from_rows(&[&[1.0]]),
            1.0,
            ScaleOperator::PoolRepeat,
        )
        .unwrap()
    }

    #[test]
    fn worked_forward() {
        let y = worked_adapter()
            .forward(&Matrix::row_vector(&[1.0, 3.0]), &Matrix::identity(2))
            .unwrap();
        assert_eq!(y, Matrix::row_vector(&[3.0, 5.0]));
    }

    #[test]
    fn worked_grid() {
        assert_eq!(
            worked_adapter().delta_beta_grid().unwrap(),
            Matrix::from_rows(&[&[0.5]])
        );
    }

    #[test]
    fn worked_merge_moves_beta_only() {
        // single 2x2 tile with β = 0.1
        let w = Matrix::from_rows(&[&[0.1, 0.4], &[0.7, 1.0]]);
        let q = quantize_matrix(&w, &QuantConfig::new(2, 2, 2, QuantMode::MinMax).unwrap()).unwrap();
        assert_eq!(q.betas(), &[0.1]);
        let merged = merge_hira(&q, &worked_adapter()).unwrap();
        assert_eq!(merged.betas(), &[0.1 + 0.5]);
        assert!((merged.betas()[0] - 0.6).abs() < 1e-15);
        assert_eq!(merged.packed_codes(), q.packed_codes());
        assert_eq!(merged.alphas(), q.alphas());
    }

    #[test]
    fn zero_adapter_merge_is_identity() {
        let w = Matrix::from_rows(&[&[0.1, 0.4, 0.2, 0.3], &[0.7, 1.0, -0.5, 0.0]]);
        let q = quantize_matrix(&w, &QuantConfig::new(4, 2, 2, QuantMode::MinMax).unwrap()).unwrap();
        let ad = HiraAdapter::zeros(2, 4, Balance::square(2), 3.0, ScaleOperator::PoolRepeat).unwrap();
        assert_eq!(merge_hira(&q, &ad).unwrap(), q);
        assert!(ad.delta_beta_grid().unwrap().is_zero());
        let x = Matrix::row_vector(&[0.3, -1.0]);
        let wt = dequantize_matrix(&q).unwrap();
        assert_eq!(ad.forward(&x, &wt).unwrap(), x.matmul(&wt).unwrap());
    }

    #[test]
    fn tile_shape_mismatch_is_capability_error() {
        let w = Matrix::zeros(4, 4);
        let q = quantize_matrix(&w, &QuantConfig::new(4, 4, 4, QuantMode::MinMax).unwrap()).unwrap();
        let ad = HiraAdapter::zeros(4, 4, Balance::square(2), 1.0, ScaleOperator::PoolRepeat).unwrap();
        let err = merge_hira(&q, &ad).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
        assert!(err.to_string().contains("2x2"));
    }

    #[test]
    fn non_pool_operators_cannot_fold() {
        let w = Matrix::zeros(4, 4);
        let q = quantize_matrix(&w, &QuantConfig::new(4, 2, 2, QuantMode::MinMax).unwrap()).unwrap();
        for op in [ScaleOperator::TruncatePad, ScaleOperator::StrideInterp] {
            let ad = HiraAdapter::zeros(4, 4, Balance::square(2), 1.0, op).unwrap();
            assert!(matches!(merge_hira(&q, &ad), Err(Error::Capability(_))));
        }
    }

    #[test]
    fn unit_balance_gradient_is_plain_outer_product() {
        use crate::numerics::{Distribution, Rng};
        let mut rng = Rng::seed_from_u64(4);
        let n = Distribution::normal(0.0, 1.0);
        let c = rng.fill(5, 3, n).unwrap();
        let ad = HiraAdapter::new(Balance::square(1), c, 0.3, ScaleOperator::PoolRepeat).unwrap();
        let x = rng.fill(4, 5, n).unwrap();
        let g = rng.fill(4, 3, n).unwrap();
        let w = rng.fill(5, 3, n).unwrap();
        let grads = ad.backward(&x, &g, &w).unwrap();
        let expect = x.transpose().matmul(&g).unwrap().scale(0.3);
        assert!(grads.c.max_abs_diff(&expect) <= 1e-12);
    }
}
