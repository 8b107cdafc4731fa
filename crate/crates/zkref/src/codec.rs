//! Little-endian byte envelope shared by proofs, keys and statements.
//!
//! Every container starts with a one-byte format version. Variable-length
//! sections carry a `u32` length prefix; field elements are fixed 8 bytes.

use crate::field::{Fp, ENCODED_LEN};

pub const FORMAT_VERSION: u8 = 1;

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: vec![FORMAT_VERSION] }
    }

    pub fn with_capacity(capacity: usize) -> Self {
        let mut buf = Vec::with_capacity(capacity);
        buf.push(FORMAT_VERSION);
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_prefix(&mut self, len: usize) {
        self.u32(u32::try_from(len).expect("section longer than u32::MAX"));
    }

    pub fn fp(&mut self, v: Fp) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn fps(&mut self, values: &[Fp]) {
        self.len_prefix(values.len());
        self.buf.reserve(values.len() * ENCODED_LEN);
        for v in values {
            self.fp(*v);
        }
    }

    pub fn bytes32(&mut self, v: &[u8; 32]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Bounds-checked cursor. Every read returns `None` on truncation or a
/// non-canonical value so callers can map it to their own error.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Consumes and checks the version byte.
    pub fn new(bytes: &'a [u8]) -> Result<Self, String> {
        match bytes.first() {
            None => Err("empty input".into()),
            Some(&FORMAT_VERSION) => Ok(Reader { bytes, pos: 1 }),
            Some(v) => Err(format!("unsupported version {v}")),
        }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    pub fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn fp(&mut self) -> Option<Fp> {
        self.take(ENCODED_LEN)
            .and_then(|b| Fp::from_le_bytes(b.try_into().unwrap()))
    }

    /// Reads a length-prefixed element vector, refusing lengths that cannot
    /// fit in the remaining input before allocating.
    pub fn fps(&mut self) -> Option<Vec<Fp>> {
        let len = self.u32()? as usize;
        if len.checked_mul(ENCODED_LEN)? > self.remaining() {
            return None;
        }
        (0..len).map(|_| self.fp()).collect()
    }

    pub fn bytes32(&mut self) -> Option<[u8; 32]> {
        self.take(32).map(|b| b.try_into().unwrap())
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_vectors_do_not_allocate() {
        let mut w = Writer::new();
        w.u32(u32::MAX);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes).unwrap();
        assert!(r.fps().is_none());
    }

    #[test]
    fn version_byte_is_checked() {
        assert!(Reader::new(&[]).is_err());
        assert!(Reader::new(&[2]).is_err());
        assert!(Reader::new(&[FORMAT_VERSION]).is_ok());
    }
}
