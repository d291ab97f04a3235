//! Compress/expand operator pairs wrapped around an adapter.
//!
//! `compress` shrinks the adapter input from `D` to `D/λ` features and
//! `expand` grows the adapter output from `D/λ` back to `D`. With `λ = 1`
//! every operator is the identity.

use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ScaleOperator {
    /// Window mean over groups of `λ` features; outputs repeated `λ` times.
    #[default]
    PoolRepeat,
    /// Keep the first `D/λ` features; outputs zero-padded at the end.
    TruncatePad,
    /// Keep features `0, λ, 2λ, …`; outputs placed at those indices, zeros between.
    StrideInterp,
}

impl ScaleOperator {
    pub const ALL: [ScaleOperator; 3] = [
        ScaleOperator::PoolRepeat,
        ScaleOperator::TruncatePad,
        ScaleOperator::StrideInterp,
    ];

    pub fn code(self) -> u8 {
        match self {
            ScaleOperator::PoolRepeat => 0,
            ScaleOperator::TruncatePad => 1,
            ScaleOperator::StrideInterp => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Short name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            ScaleOperator::PoolRepeat => "pool",
            ScaleOperator::TruncatePad => "truncate",
            ScaleOperator::StrideInterp => "stride",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name).ok_or_else(|| {
            Error::Parameter(format!(
                "unknown scale operator '{name}' (expected pool, truncate or stride)"
            ))
        })
    }
}

fn check_lambda(width: usize, lambda: usize) -> Result<()> {
    if lambda == 0 || !width.is_multiple_of(lambda) {
        return shape_err(format!("feature width {width} is not divisible by λ={lambda}"));
    }
    Ok(())
}

/// `batch × D` → `batch × D/λ`.
pub fn compress_features(x: &Matrix, lambda: usize, op: ScaleOperator) -> Result<Matrix> {
    check_lambda(x.cols(), lambda)?;
    if lambda == 1 {
        return Ok(x.clone());
    }
    let out_cols = x.cols() / lambda;
    match op {
        ScaleOperator::PoolRepeat => {
            let sums = x.segment_sum_cols(lambda)?;
            Ok(sums.map(|v| v / lambda as f64))
        }
        ScaleOperator::TruncatePad => select_cols(x, (0..out_cols).collect()),
        ScaleOperator::StrideInterp => select_cols(x, (0..out_cols).map(|j| j * lambda).collect()),
    }
}

/// `batch × D/λ` → `batch × width` with `width == λ · y.cols()`.
pub fn expand_features(y: &Matrix, lambda: usize, op: ScaleOperator, width: usize) -> Result<Matrix> {
    if lambda == 0 || width != lambda * y.cols() {
        return shape_err(format!(
            "cannot expand {} features by λ={lambda} to width {width}",
            y.cols()
        ));
    }
    if lambda == 1 {
        return Ok(y.clone());
    }
    match op {
        ScaleOperator::PoolRepeat => Ok(y.repeat_cols(lambda)),
        ScaleOperator::TruncatePad => Ok(scatter_cols(y, width, |j| j)),
        ScaleOperator::StrideInterp => Ok(scatter_cols(y, width, |j| j * lambda)),
    }
}

/// Adjoint of [`compress_features`]: `batch × D/λ` → `batch × width`.
pub(crate) fn compress_adjoint(g: &Matrix, lambda: usize, op: ScaleOperator, width: usize) -> Result<Matrix> {
    let spread = expand_features(g, lambda, op, width)?;
    Ok(match op {
        ScaleOperator::PoolRepeat if lambda > 1 => spread.map(|v| v / lambda as f64),
        _ => spread,
    })
}

/// Adjoint of [`expand_features`]: `batch × D` → `batch × D/λ`.
pub(crate) fn expand_adjoint(g: &Matrix, lambda: usize, op: ScaleOperator) -> Result<Matrix> {
    match op {
        ScaleOperator::PoolRepeat => g.segment_sum_cols(lambda),
        _ => compress_features(g, lambda, op),
    }
}

fn select_cols(x: &Matrix, idx: Vec<usize>) -> Result<Matrix> {
    let mut data = Vec::with_capacity(x.rows() * idx.len());
    for r in 0..x.rows() {
        let row = x.row(r);
        data.extend(idx.iter().map(|&i| row[i]));
    }
    Matrix::from_vec(x.rows(), idx.len(), data)
}

fn scatter_cols(y: &Matrix, width: usize, place: impl Fn(usize) -> usize) -> Matrix {
    let mut out = Matrix::zeros(y.rows(), width);
    for r in 0..y.rows() {
        for (j, &v) in y.row(r).iter().enumerate() {
            out.set(r, place(j), v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Distribution, Rng};

    fn x() -> Matrix {
        Matrix::row_vector(&[1.0, 3.0, 5.0, 7.0])
    }

    #[test]
    fn compress_examples() {
        let pool = compress_features(&x(), 2, ScaleOperator::PoolRepeat).unwrap();
        let trunc = compress_features(&x(), 2, ScaleOperator::TruncatePad).unwrap();
        let stride = compress_features(&x(), 2, ScaleOperator::StrideInterp).unwrap();
        assert_eq!(pool, Matrix::row_vector(&[2.0, 6.0]));
        assert_eq!(trunc, Matrix::row_vector(&[1.0, 3.0]));
        assert_eq!(stride, Matrix::row_vector(&[1.0, 5.0]));
    }

    #[test]
    fn expand_examples() {
        let y = Matrix::row_vector(&[2.0, 6.0]);
        let e = |op| expand_features(&y, 2, op, 4).unwrap();
        assert_eq!(e(ScaleOperator::PoolRepeat), Matrix::row_vector(&[2.0, 2.0, 6.0, 6.0]));
        assert_eq!(e(ScaleOperator::TruncatePad), Matrix::row_vector(&[2.0, 6.0, 0.0, 0.0]));
        assert_eq!(
            e(ScaleOperator::StrideInterp),
            Matrix::row_vector(&[2.0, 0.0, 6.0, 0.0])
        );
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            compress_features(&Matrix::zeros(1, 5), 2, ScaleOperator::PoolRepeat),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            expand_features(&Matrix::zeros(1, 2), 2, ScaleOperator::PoolRepeat, 5),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn names_round_trip() {
        for op in ScaleOperator::ALL {
            assert_eq!(ScaleOperator::from_name(op.name()).unwrap(), op);
            assert_eq!(ScaleOperator::from_code(op.code()), Some(op));
        }
        assert!(ScaleOperator::from_name("bilinear").is_err());
        assert_eq!(ScaleOperator::from_code(3), None);
    }

    // <P(x), g> == <x, P*(g)> and <E(y), g> == <y, E*(g)>
    #[test]
    fn adjoint_identities() {
        let mut rng = Rng::seed_from_u64(17);
        for op in ScaleOperator::ALL {
            for lambda in [1, 2, 4] {
                let x = rng.fill(3, 8, Distribution::normal(0.0, 1.0)).unwrap();
                let gx = rng.fill(3, 8 / lambda, Distribution::normal(0.0, 1.0)).unwrap();
                let lhs: f64 = compress_features(&x, lambda, op)
                    .unwrap()
                    .as_slice()
                    .iter()
                    .zip(gx.as_slice())
                    .map(|(a, b)| a * b)
                    .sum();
                let adj = compress_adjoint(&gx, lambda, op, 8).unwrap();
                let rhs: f64 = x.as_slice().iter().zip(adj.as_slice()).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() < 1e-12);

                let y = rng.fill(3, 8 / lambda, Distribution::normal(0.0, 1.0)).unwrap();
                let gy = rng.fill(3, 8, Distribution::normal(0.0, 1.0)).unwrap();
                let lhs: f64 = expand_features(&y, lambda, op, 8)
                    .unwrap()
                    .as_slice()
                    .iter()
                    .zip(gy.as_slice())
                    .map(|(a, b)| a * b)
                    .sum();
                let adj = expand_adjoint(&gy, lambda, op).unwrap();
                let rhs: f64 = y.as_slice().iter().zip(adj.as_slice()).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }
}
