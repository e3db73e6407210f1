//! Little-endian primitives shared by the binary containers.

use volcore::Volume;

use crate::error::FormatError;

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn str32(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }
    /// Rank byte, u32 dims, then f64 values.
    pub fn array(&mut self, v: &Volume) {
        self.u8(v.rank() as u8);
        for &d in v.shape() {
            self.u32(d as u32);
        }
        self.buf.reserve(v.len() * 8);
        for x in v.data() {
            self.f64(*x);
        }
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated {
                expected: (self.pos + n) as u64,
                found: self.data.len() as u64,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if found != expected {
            return Err(FormatError::BadMagic { expected, found });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u16) -> Result<(), FormatError> {
        let found = self.u16()?;
        if found != expected {
            return Err(FormatError::Version { expected, found });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str32(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|e| FormatError::Corrupt(format!("utf-8: {e}")))
    }

    pub fn array(&mut self) -> Result<Volume, FormatError> {
        let rank = self.u8()? as usize;
        if rank == 0 || rank > 5 {
            return Err(FormatError::Corrupt(format!("array rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8).map(|_| n))
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{shape:?}")))?;
        let raw = self.take(len * 8)?;
        let mut data = Vec::with_capacity(len);
        for (i, c) in raw.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::NonFinite(i));
            }
            data.push(v);
        }
        Volume::from_vec(&shape, data).map_err(|e| FormatError::Corrupt(e.to_string()))
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n as u64)),
        }
    }
}
