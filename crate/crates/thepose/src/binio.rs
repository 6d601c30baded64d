//! Little-endian primitives shared by the dataset and checkpoint formats.

use std::io::{self, Read, Write};

use crate::error::FormatError;

pub(crate) struct LeReader<R> {
    inner: R,
}

fn map_eof(e: io::Error) -> ReadError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        ReadError::Format(FormatError::Truncated)
    } else {
        ReadError::Io(e)
    }
}

#[derive(Debug)]
pub(crate) enum ReadError {
    Io(io::Error),
    Format(FormatError),
}

impl From<FormatError> for ReadError {
    fn from(e: FormatError) -> Self {
        ReadError::Format(e)
    }
}

macro_rules! read_le {
    ($name:ident, $t:ty) => {
        pub(crate) fn $name(&mut self) -> Result<$t, ReadError> {
            let mut buf = [0u8; std::mem::size_of::<$t>()];
            self.inner.read_exact(&mut buf).map_err(map_eof)?;
            Ok(<$t>::from_le_bytes(buf))
        }
    };
}

impl<R: Read> LeReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        LeReader { inner }
    }

    read_le!(u8, u8);
    read_le!(u16, u16);
    read_le!(u32, u32);
    read_le!(u64, u64);
    read_le!(f32, f32);
    read_le!(f64, f64);

    pub(crate) fn bytes(&mut self, n: usize) -> Result<Vec<u8>, ReadError> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(map_eof)?;
        Ok(buf)
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ReadError> {
        (0..n).map(|_| self.f64()).collect()
    }

    /// Magic string followed by a version word.
    pub(crate) fn header(&mut self, magic: &'static [u8; 12], version: u32) -> Result<(), ReadError> {
        let expected = std::str::from_utf8(magic).expect("ascii magic");
        let mut buf = [0u8; 12];
        match self.inner.read_exact(&mut buf) {
            Ok(()) if &buf == magic => {}
            Ok(()) => return Err(FormatError::BadMagic { expected }.into()),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(FormatError::BadMagic { expected }.into())
            }
            Err(e) => return Err(ReadError::Io(e)),
        }
        let found = self.u32()?;
        if found != version {
            return Err(FormatError::Version { found, expected: version }.into());
        }
        Ok(())
    }

    pub(crate) fn expect_end(&mut self) -> Result<(), ReadError> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(FormatError::Invalid("trailing bytes after the last record".into()).into()),
            Err(e) => Err(ReadError::Io(e)),
        }
    }
}

pub(crate) struct LeWriter<W> {
    inner: W,
}

macro_rules! write_le {
    ($name:ident, $t:ty) => {
        pub(crate) fn $name(&mut self, v: $t) -> io::Result<()> {
            self.inner.write_all(&v.to_le_bytes())
        }
    };
}

impl<W: Write> LeWriter<W> {
    pub(crate) fn new(inner: W) -> Self {
        LeWriter { inner }
    }

    write_le!(u8, u8);
    write_le!(u16, u16);
    write_le!(u32, u32);
    write_le!(u64, u64);
    write_le!(f32, f32);
    write_le!(f64, f64);

    pub(crate) fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.inner.write_all(b)
    }

    pub(crate) fn f64s(&mut self, v: &[f64]) -> io::Result<()> {
        v.iter().try_for_each(|x| self.f64(*x))
    }

    pub(crate) fn len32(&mut self, n: usize) -> io::Result<()> {
        let n = u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "length exceeds u32"))?;
        self.u32(n)
    }

    pub(crate) fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}
