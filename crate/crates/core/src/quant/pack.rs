//! LSB-first bit packing of N-bit codes.
//!
//! Code `i` occupies bits `[i·N, (i+1)·N)` of the little-endian bit stream, so
//! two 4-bit codes `[1, 2]` become the single byte `0x21`. Codes may straddle
//! byte boundaries for N = 3. The final byte is zero-padded in its high bits.

use crate::error::{Error, Result};

/// Number of bytes needed for `count` codes of `bits` bits each.
pub fn packed_len(count: usize, bits: u8) -> usize {
    (count * bits as usize).div_ceil(8)
}

pub fn pack_codes(codes: &[u8], bits: u8) -> Result<Vec<u8>> {
    check_bits(bits)?;
    let limit = 1u16 << bits;
    let mut out = vec![0u8; packed_len(codes.len(), bits)];
    let mut bit = 0usize;
    for (i, &code) in codes.iter().enumerate() {
        if code as u16 >= limit {
            return Err(Error::Data(format!(
                "code {code} at index {i} does not fit in {bits} bits"
            )));
        }
        let mut value = code as u16;
        let mut remaining = bits as usize;
        while remaining > 0 {
            let byte = bit / 8;
            let offset = bit % 8;
            let take = remaining.min(8 - offset);
            out[byte] |= ((value & ((1 << take) - 1)) << offset) as u8;
            value >>= take;
            bit += take;
            remaining -= take;
        }
    }
    Ok(out)
}

pub fn unpack_codes(bytes: &[u8], bits: u8, count: usize) -> Result<Vec<u8>> {
    check_bits(bits)?;
    let need = packed_len(count, bits);
    if bytes.len() < need {
        return Err(Error::Data(format!(
            "truncated code buffer: {count} codes of {bits} bits need {need} bytes, got {}",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut value = 0u16;
        let mut filled = 0usize;
        while filled < bits as usize {
            let byte = bit / 8;
            let offset = bit % 8;
            let take = (bits as usize - filled).min(8 - offset);
            let chunk = (bytes[byte] as u16 >> offset) & ((1 << take) - 1);
            value |= chunk << filled;
            filled += take;
            bit += take;
        }
        out.push(value as u8);
    }
    Ok(out)
}

fn check_bits(bits: u8) -> Result<()> {
    if bits == 0 || bits > 8 {
        return Err(Error::Parameter(format!("unsupported code width {bits}")));
    }
    Ok(())
}
