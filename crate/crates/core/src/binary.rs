//! Little-endian primitives shared by the binary formats.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub(crate) fn put_u32(w: &mut impl Write, v: usize) -> io::Result<()> {
    let v = u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_f32(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&(v as f32).to_le_bytes())
}

pub(crate) struct ByteReader<R> {
    inner: R,
    pub(crate) offset: u64,
}

impl<R: Read> ByteReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub(crate) fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::ParseBinary { offset: self.offset, message: format!("unexpected end of data: {e}") })?;
        self.offset += N as u64;
        Ok(buf)
    }

    /// `None` at a clean end of stream.
    pub(crate) fn try_u32(&mut self) -> Result<Option<u32>> {
        let mut buf = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            let n = self.inner.read(&mut buf[got..])?;
            if n == 0 {
                break;
            }
            got += n;
        }
        match got {
            0 => Ok(None),
            4 => {
                self.offset += 4;
                Ok(Some(u32::from_le_bytes(buf)))
            }
            _ => Err(Error::ParseBinary { offset: self.offset, message: "unexpected end of data".into() }),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.bytes()?) as f64)
    }
}
