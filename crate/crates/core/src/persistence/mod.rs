//! Binary record formats and CSV output.
//!
//! Every binary record starts with the 4-byte magic `QBRA`, a `u16` format
//! version (1) and a `u8` record kind. All multi-byte fields are
//! little-endian with fixed widths; there is no padding or compression.
//! Loaders read the whole record, validate every invariant and report the
//! byte offset of the first problem as [`Error::Format`](crate::Error::Format).

mod adapter;
mod checkpoint;
mod csv;
mod dense;
mod header;
mod io;
mod quantized;
mod raw;

pub use self::csv::{format_float, write_csv, CsvRecord};
pub use adapter::{load_adapter, save_adapter};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dense::{load_dense_model, save_dense_model};
pub use header::{RecordKind, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use quantized::{load_quantized, save_quantized};
pub use raw::{read_raw_matrix, write_raw_matrix};
