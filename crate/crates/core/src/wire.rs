//! Little-endian framing shared by the dataset and checkpoint files.
//!
//! Layout: 8-byte magic, `u32` header-line count, then each header line as a
//! `u32` byte length followed by ASCII `key=value\n`. The payload follows.

use crate::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], header: &[(&str, String)]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        for (key, value) in header {
            let line = format!("{key}={value}\n");
            buf.extend_from_slice(&(line.len() as u32).to_le_bytes());
            buf.extend_from_slice(line.as_bytes());
        }
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
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
    /// Checks the magic and returns the reader plus the ordered header lines.
    pub fn open(bytes: &'a [u8], magic: &[u8; 8]) -> Result<(Self, Vec<(String, String)>)> {
        let mut r = Reader { bytes, pos: 0 };
        let got = r.take(8)?;
        if got != magic {
            return Err(Error::format(0, "bad magic"));
        }
        let n = r.u32()? as usize;
        if n > 1024 {
            return Err(Error::format(8, format!("implausible header line count {n}")));
        }
        let mut header = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.pos as u64;
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let line = std::str::from_utf8(raw)
                .ok()
                .filter(|s| s.is_ascii())
                .ok_or_else(|| Error::format(at, "header line is not ASCII"))?;
            let line = line
                .strip_suffix('\n')
                .ok_or_else(|| Error::format(at, "header line missing newline"))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(at, format!("header line `{line}` lacks '='")))?;
            header.push((k.to_string(), v.to_string()));
        }
        Ok((r, header))
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.pos as u64,
                format!("unexpected end of file: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Typed lookup over parsed header lines.
pub(crate) struct Header<'h> {
    lines: &'h [(String, String)],
}

impl<'h> Header<'h> {
    pub fn new(lines: &'h [(String, String)]) -> Self {
        Self { lines }
    }

    pub fn get(&self, key: &str) -> Result<&'h str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(8, format!("missing header key `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::format(8, format!("header key `{key}` has unparsable value `{raw}`")))
    }
}
