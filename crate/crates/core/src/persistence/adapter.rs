use std::io::{Read, Write};

use super::header::{read_header, write_header, RecordKind};
use super::io::{Reader, Writer};
use crate::adapters::{Adapter, AdapterKind, Balance, BaraAdapter, HiraAdapter, LoraAdapter, ScaleOperator};
use crate::error::Result;
use crate::numerics::Matrix;

pub(crate) fn write_adapter_body<W: Write>(w: &mut Writer<W>, adapter: &Adapter) -> Result<()> {
    let (balance, rank, operator) = match adapter {
        Adapter::Lora(a) => (Balance::square(1), a.rank(), ScaleOperator::PoolRepeat),
        Adapter::Bara(a) => (a.balance(), a.rank(), a.operator()),
        Adapter::Hira(a) => (a.balance(), a.effective_rank(), a.operator()),
    };
    w.u8(adapter.kind().code())?;
    w.u8(operator.code())?;
    w.u32(adapter.d_in(), "d_in")?;
    w.u32(adapter.d_out(), "d_out")?;
    w.u32(balance.lambda_in, "lambda_in")?;
    w.u32(balance.lambda_out, "lambda_out")?;
    w.u32(rank, "rank")?;
    w.f64(adapter.scaling())?;
    for m in adapter.params() {
        w.f64s(m.as_slice())?;
    }
    Ok(())
}

fn read_matrix(r: &mut Reader, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
    let at = r.offset();
    let count = rows
        .checked_mul(cols)
        .map_or_else(|| r.fail(format!("{what} size overflows")), Ok)?;
    let data = r.f64s(count, what)?;
    Matrix::from_vec(rows, cols, data).map_err(|e| r.error_at(at, format!("{what}: {e}")))
}

pub(crate) fn read_adapter_body(r: &mut Reader) -> Result<Adapter> {
    let start = r.offset();
    let kind_byte = r.u8("adapter kind")?;
    let Some(kind) = AdapterKind::from_code(kind_byte) else {
        return Err(r.error_at(start, format!("unknown adapter kind byte {kind_byte}")));
    };
    let op_byte = r.u8("operator")?;
    let Some(operator) = ScaleOperator::from_code(op_byte) else {
        return Err(r.error_at(start + 1, format!("operator byte {op_byte} outside {{0,1,2}}")));
    };
    let d_in = r.u32("d_in")?;
    let d_out = r.u32("d_out")?;
    let balance = Balance::new(r.u32("lambda_in")?, r.u32("lambda_out")?);
    let rank_at = r.offset();
    let rank = r.u32("rank")?;
    let scaling = r.f64("scaling")?;
    if rank == 0 {
        return Err(r.error_at(rank_at, "adapter rank must be >= 1"));
    }
    if d_in == 0 || d_out == 0 {
        return Err(r.error_at(start, format!("adapter layer {d_in}x{d_out} is empty")));
    }
    let (ci, co) = balance
        .compressed(d_in, d_out)
        .map_err(|e| r.error_at(start, e.to_string()))?;
    let bad = |msg: String| r.error_at(start, msg);
    let adapter = match kind {
        AdapterKind::Lora => {
            if balance != Balance::square(1) || operator != ScaleOperator::PoolRepeat {
                return Err(bad("LoRA records must carry λ=1 and operator 0".into()));
            }
            let a = read_matrix(r, d_in, rank, "A")?;
            let b = read_matrix(r, rank, d_out, "B")?;
            LoraAdapter::new(a, b, scaling).map(Adapter::Lora)
        }
        AdapterKind::Bara => {
            let a = read_matrix(r, ci, rank, "A")?;
            let b = read_matrix(r, rank, co, "B")?;
            BaraAdapter::new(balance, a, b, scaling, operator).map(Adapter::Bara)
        }
        AdapterKind::Hira => {
            if rank != ci.min(co) {
                return Err(bad(format!(
                    "HiRA rank field {rank} differs from its effective rank {}",
                    ci.min(co)
                )));
            }
            let c = read_matrix(r, ci, co, "C")?;
            HiraAdapter::new(balance, c, scaling, operator).map(Adapter::Hira)
        }
    };
    adapter.map_err(|e| r.error_at(start, e.to_string()))
}

/// Writes an `.adp` record; factor matrices are stored as `f64`.
pub fn save_adapter(adapter: &Adapter, sink: impl Write) -> Result<()> {
    let mut w = Writer::new(sink);
    write_header(&mut w, RecordKind::Adapter)?;
    write_adapter_body(&mut w, adapter)
}

pub fn load_adapter(source: impl Read) -> Result<Adapter> {
    let mut r = Reader::from_source(source)?;
    read_header(&mut r, RecordKind::Adapter)?;
    let a = read_adapter_body(&mut r)?;
    r.finish()?;
    Ok(a)
}
