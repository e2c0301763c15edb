//! Little-endian encode/decode helpers shared by the CSSD, CSSK and CSSM formats.
//!
//! Every file starts with a 4-byte magic followed by a `u32` version. Unknown
//! versions are rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { buf }
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

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vals: &[f64]) {
        for &v in vals {
            self.buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, leaving the cursor at the payload.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::format("truncated: missing magic"));
        }
        if &bytes[..4] != magic {
            return Err(Error::format(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let mut r = Self { bytes, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported version {version} (expected {FORMAT_VERSION})"
            )));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(format!(
                    "truncated: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
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

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| Error::format("size overflow"))?)?;
        let vals: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("non-finite value in file"));
        }
        Ok(vals)
    }

    /// Ensures a count read from the header fits in the remaining bytes before allocating.
    pub fn check_remaining(&self, count: u64, elem_size: u64) -> Result<()> {
        let remaining = (self.bytes.len() - self.pos) as u64;
        match count.checked_mul(elem_size) {
            Some(need) if need <= remaining => Ok(()),
            _ => Err(Error::format(format!(
                "truncated: header promises {count} elements of {elem_size} bytes, {remaining} bytes left"
            ))),
        }
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(format!(
                "trailing bytes: {} unread",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn to_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::format(format!("{what} too large: {v}")))
}

/// Writes via a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(format!("renaming into {}", path.display()), e)
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_checks() {
        let mut w = Writer::new(b"TEST");
        w.u32(7);
        let bytes = w.finish();
        let mut r = Reader::open(&bytes, b"TEST").unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        r.finish().unwrap();

        let err = Reader::open(&bytes, b"NOPE").err().unwrap();
        assert!(err.to_string().starts_with("bad magic"));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        let err = Reader::open(&v2, b"TEST").err().unwrap();
        assert!(err.to_string().contains("unsupported version 2"));

        let err = Reader::open(&bytes[..6], b"TEST").err().unwrap();
        assert!(err.to_string().starts_with("truncated"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(read_file(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
