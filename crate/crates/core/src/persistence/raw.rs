use std::io::{Read, Write};

use super::io::{Reader, Writer};
use crate::error::Result;
use crate::numerics::Matrix;

/// Headerless dense matrix: `rows u32`, `cols u32`, then `f64` row-major, all
/// little-endian.
pub fn write_raw_matrix(m: &Matrix, sink: impl Write) -> Result<()> {
    let mut w = Writer::new(sink);
    w.u32(m.rows(), "rows")?;
    w.u32(m.cols(), "cols")?;
    w.f64s(m.as_slice())
}

pub fn read_raw_matrix(source: impl Read) -> Result<Matrix> {
    let mut r = Reader::from_source(source)?;
    let rows = r.u32("rows")?;
    let cols = r.u32("cols")?;
    if rows == 0 || cols == 0 {
        return r.fail(format!("matrix {rows}x{cols} is empty"));
    }
    let data = r.f64s(rows * cols, "matrix data")?;
    r.finish()?;
    Matrix::from_vec(rows, cols, data).map_err(|e| r.error_at(8, e.to_string()))
}
