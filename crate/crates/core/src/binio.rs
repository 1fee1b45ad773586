//! Little-endian encoding helpers shared by checkpoint and feature files.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numcore::{Linear, Matrix, Mlp};

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

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn len_u32(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length fits in u32"));
    }

    pub fn matrix(&mut self, m: &Matrix) {
        self.len_u32(m.rows());
        self.len_u32(m.cols());
        self.f64s(m.data());
    }

    pub fn mlp(&mut self, net: &Mlp) {
        self.f64(net.slope());
        let widths = net.widths();
        self.len_u32(widths.len());
        for w in widths {
            self.len_u32(w);
        }
        for layer in net.layers() {
            self.f64s(layer.weight.data());
            self.f64s(layer.bias.data());
        }
    }

    pub fn string(&mut self, s: &str) {
        self.len_u32(s.len());
        self.bytes(s.as_bytes());
    }
}

/// Cursor over a byte buffer that reports offsets on malformed input.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], path: &Path) -> Self {
        Reader { buf, pos: 0, path: path.to_path_buf() }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn error(&self, detail: impl Into<String>) -> Error {
        Error::Format { path: self.path.clone(), offset: self.pos as u64, detail: detail.into() }
    }

    pub fn error_at(&self, offset: u64, detail: impl Into<String>) -> Error {
        Error::Format { path: self.path.clone(), offset, detail: detail.into() }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(format!("truncated: need {n} bytes, {} left", self.remaining())));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.error("length overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.len()?;
        let cols = self.len()?;
        let data = self.f64s(rows * cols)?;
        Matrix::new(rows, cols, data)
    }

    pub fn mlp(&mut self) -> Result<Mlp> {
        let at = self.offset();
        let slope = self.f64()?;
        let n = self.len()?;
        if !(2..=64).contains(&n) {
            return Err(self.error(format!("implausible layer count {n}")));
        }
        let widths = (0..n).map(|_| self.len()).collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(n - 1);
        for w in widths.windows(2) {
            let weight = Matrix::new(w[0], w[1], self.f64s(w[0] * w[1])?)?;
            let bias = Matrix::new(1, w[1], self.f64s(w[1])?)?;
            layers.push(Linear { weight, bias });
        }
        Mlp::from_layers(layers, slope).map_err(|e| self.error_at(at, e.to_string()))
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.len()?;
        let at = self.offset();
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.error_at(at, "invalid utf-8"))
    }

    pub fn expect(&mut self, magic: &[u8], what: &str) -> Result<()> {
        let at = self.pos;
        let got = self.take(magic.len())?;
        if got != magic {
            self.pos = at;
            return Err(self.error(format!("bad {what}: expected {:?}", String::from_utf8_lossy(magic))));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
