//! Little-endian binary encoding for checkpoints. Floats are stored as raw
//! bits so a decoded state is bit-identical to the encoded one.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Default, Debug)]
pub struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.usize(b.len());
        self.buf.extend_from_slice(b);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    pub fn c64s<'a>(&mut self, v: impl ExactSizeIterator<Item = &'a C64>) {
        self.usize(v.len());
        for z in v {
            self.f64(z.re);
            self.f64(z.im);
        }
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

fn truncated() -> Error {
    Error::Checkpoint("unexpected end of data".into())
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.data.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(truncated)?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }

    /// A length that must fit in the remaining data given `unit` bytes per item.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(unit) > self.data.len() - self.pos {
            return Err(truncated());
        }
        Ok(n)
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn c64s(&mut self) -> Result<Vec<C64>> {
        let n = self.len(16)?;
        (0..n).map(|_| Ok(C64::new(self.f64()?, self.f64()?))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut e = Encoder::default();
        e.u64(7);
        e.f64(-0.1);
        e.str("abc");
        e.f64s(&[f64::NAN, 1e-300]);
        e.c64s([C64::new(1.0, -2.0)].iter());
        e.i64(-3);
        let mut d = Decoder::new(&e.buf);
        assert_eq!(d.u64().unwrap(), 7);
        assert_eq!(d.f64().unwrap().to_bits(), (-0.1f64).to_bits());
        assert_eq!(d.str().unwrap(), "abc");
        let v = d.f64s().unwrap();
        assert!(v[0].is_nan() && v[1] == 1e-300);
        assert_eq!(d.c64s().unwrap(), vec![C64::new(1.0, -2.0)]);
        assert_eq!(d.i64().unwrap(), -3);
        assert!(d.is_done());
        assert!(Decoder::new(&e.buf[..5]).u64().is_err());
        let mut bad = Encoder::default();
        bad.u64(u64::MAX);
        assert!(Decoder::new(&bad.buf).f64s().is_err());
    }
}
