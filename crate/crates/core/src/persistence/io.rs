//! Little-endian primitives with offset-aware error reporting.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub(crate) fn new(inner: W) -> Self {
        Self { inner }
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub(crate) fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }

    pub(crate) fn u16(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u16::try_from(v).map_err(|_| Error::Data(format!("{what}={v} does not fit in 16 bits")))?;
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn u32(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Data(format!("{what}={v} does not fit in 32 bits")))?;
        self.bytes(&v.to_le_bytes())
    }

    /// Rejects values whose magnitude overflows `f32`.
    pub(crate) fn f32(&mut self, v: f64, what: &str) -> Result<()> {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::Data(format!("{what}={v} is not representable as f32")));
        }
        self.bytes(&narrow.to_le_bytes())
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for v in vs {
            self.bytes(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub(crate) fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
}

/// Cursor over a fully buffered record.
pub(crate) struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    pub(crate) fn from_source(mut source: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        Ok(Self { buf, pos: 0 })
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(self.error_at(self.offset(), message))
    }

    pub(crate) fn error_at(&self, offset: u64, message: impl Into<String>) -> Error {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return self.fail(format!(
                "truncated while reading {what}: need {n} bytes, {available} left"
            ));
        }
        let start = self.pos;
        self.pos += n;
        Ok(&self.buf[start..self.pos])
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N, what)?);
        Ok(out)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<usize> {
        Ok(u16::from_le_bytes(self.array(what)?) as usize)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.array(what)?) as usize)
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f64> {
        Ok(f32::from_le_bytes(self.array(what)?) as f64)
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    /// `count` little-endian `f64`s, checking the length up front so a bogus
    /// count cannot trigger a huge allocation.
    pub(crate) fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .map_or_else(|| self.fail(format!("{what} length overflows")), Ok)?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return self.fail(format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }
}
