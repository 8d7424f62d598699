//! Little-endian binary containers: an 8-byte magic, a format version and a
//! sequence of tagged, length-prefixed sections.

use std::path::{Path, PathBuf};

use crate::error::{GsneError, Result};

pub type Tag = [u8; 4];

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u128(&mut self, v: u128) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
        self
    }

    pub fn u32s(&mut self, v: &[u32]) -> &mut Self {
        self.u64(v.len() as u64);
        for x in v {
            self.u32(*x);
        }
        self
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Decoder { buf, pos: 0, path }
    }

    fn err(&self, msg: &str) -> GsneError {
        GsneError::load(self.path, format!("{msg} at byte {}", self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err("unexpected end of data"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
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

    pub fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.checked_mul(elem).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(self.err("length prefix exceeds remaining data"));
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err("invalid utf-8 string"))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.len(4)?;
        (0..n).map(|_| self.u32()).collect()
    }
}

/// An in-memory container of tagged sections.
#[derive(Debug)]
pub struct Container {
    pub path: PathBuf,
    pub version: u32,
    sections: Vec<(Tag, Vec<u8>)>,
}

impl Container {
    pub fn new(version: u32) -> Self {
        Container {
            path: PathBuf::new(),
            version,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, tag: Tag, enc: Encoder) {
        self.sections.push((tag, enc.into_bytes()));
    }

    pub fn section(&self, tag: Tag) -> Option<Decoder<'_>> {
        self.sections
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, b)| Decoder::new(b, &self.path))
    }

    pub fn require(&self, tag: Tag) -> Result<Decoder<'_>> {
        self.section(tag).ok_or_else(|| {
            GsneError::load(
                &self.path,
                format!("missing section {}", String::from_utf8_lossy(&tag)),
            )
        })
    }

    pub fn to_bytes(&self, magic: &[u8; 8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(magic);
        out.extend_from_slice(&self.version.to_le_bytes());
        for (tag, payload) in &self.sections {
            out.extend_from_slice(tag);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn write(&self, path: &Path, magic: &[u8; 8]) -> Result<()> {
        std::fs::write(path, self.to_bytes(magic)).map_err(|e| GsneError::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8], path: &Path, magic: &[u8; 8], version: u32) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != magic {
            return Err(GsneError::load(path, "bad magic bytes"));
        }
        let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if found != version {
            return Err(GsneError::load(
                path,
                format!("unsupported format version {found} (expected {version})"),
            ));
        }
        let mut sections = Vec::new();
        let mut pos = 12;
        while pos < bytes.len() {
            if bytes.len() - pos < 12 {
                return Err(GsneError::load(path, "truncated section header"));
            }
            let tag: Tag = bytes[pos..pos + 4].try_into().unwrap();
            let len = u64::from_le_bytes(bytes[pos + 4..pos + 12].try_into().unwrap()) as usize;
            pos += 12;
            if bytes.len() - pos < len {
                return Err(GsneError::load(path, "truncated section payload"));
            }
            sections.push((tag, bytes[pos..pos + len].to_vec()));
            pos += len;
        }
        Ok(Container {
            path: path.to_path_buf(),
            version,
            sections,
        })
    }

    pub fn read(path: &Path, magic: &[u8; 8], version: u32) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| GsneError::io(path, e))?;
        Self::from_bytes(&bytes, path, magic, version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC: &[u8; 8] = b"TESTFMT\0";

    #[test]
    fn sections_round_trip() {
        let mut c = Container::new(3);
        let mut e = Encoder::new();
        e.u32(9).f64s(&[1.5, -0.0, f64::MAX]).str("hé");
        c.push(*b"AAAA", e);
        let bytes = c.to_bytes(MAGIC);
        let back = Container::from_bytes(&bytes, Path::new("x"), MAGIC, 3).unwrap();
        let mut d = back.require(*b"AAAA").unwrap();
        assert_eq!(d.u32().unwrap(), 9);
        assert_eq!(d.f64s().unwrap(), vec![1.5, -0.0, f64::MAX]);
        assert_eq!(d.str().unwrap(), "hé");
        assert!(d.is_empty());
        assert!(back.require(*b"BBBB").is_err());
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let mut c = Container::new(1);
        let mut e = Encoder::new();
        e.f64s(&[1.0; 4]);
        c.push(*b"DATA", e);
        let bytes = c.to_bytes(MAGIC);
        let p = Path::new("x");
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(Container::from_bytes(&bad, p, MAGIC, 1).is_err());
        assert!(Container::from_bytes(&bytes, p, MAGIC, 2).is_err());
        assert!(Container::from_bytes(&bytes[..bytes.len() - 3], p, MAGIC, 1).is_err());
    }
}
