use std::io::Write;

use super::io::{Reader, Writer};
use crate::error::Result;

pub const MAGIC: [u8; 4] = *b"QBRA";
pub const FORMAT_VERSION: u16 = 1;

/// Record type byte following the version.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordKind {
    Quantized = 1,
    Adapter = 2,
    Checkpoint = 3,
    /// Full-precision weights produced by a dense merge.
    Dense = 4,
}

impl RecordKind {
    fn name(self) -> &'static str {
        match self {
            RecordKind::Quantized => "quantized matrix",
            RecordKind::Adapter => "adapter",
            RecordKind::Checkpoint => "checkpoint",
            RecordKind::Dense => "dense model",
        }
    }
}

/// Size of the magic + version + kind prefix.
pub const HEADER_LEN: usize = 7;

pub(crate) fn write_header<W: Write>(w: &mut Writer<W>, kind: RecordKind) -> Result<()> {
    w.bytes(&MAGIC)?;
    w.bytes(&FORMAT_VERSION.to_le_bytes())?;
    w.u8(kind as u8)
}

pub(crate) fn read_header(r: &mut Reader, expected: RecordKind) -> Result<()> {
    if r.take(4, "magic")? != MAGIC {
        return Err(r.error_at(0, "bad magic, not a QBRA file"));
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION as usize {
        return Err(r.error_at(4, format!("unsupported format version {version}")));
    }
    let kind = r.u8("record kind")?;
    if kind != expected as u8 {
        return Err(r.error_at(
            6,
            format!("record kind {kind} is not a {} ({})", expected.name(), expected as u8),
        ));
    }
    Ok(())
}
