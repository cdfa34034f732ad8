//! Binary frame files:
//! `magic(4) | version(1) | m, l, n (u32 BE) | c bits padded | g bits padded`.

use std::fmt::Write as _;

use super::{bits, CodingError};

pub const MAGIC: [u8; 4] = *b"MOQF";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 12;

/// The published part of a frame: ciphertext and hash seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameFile {
    pub m: u32,
    pub l: u32,
    pub n: u32,
    pub c: Vec<bool>,
    pub g: Vec<bool>,
}

impl FrameFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CodingError> {
        if self.c.len() != self.n as usize || self.g.len() + 1 != self.l as usize {
            return Err(CodingError::FrameFile(format!(
                "lengths disagree with header: |c|={} n={}, |g|={} l={}",
                self.c.len(),
                self.n,
                self.g.len(),
                self.l
            )));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.c.len() / 8 + self.g.len() / 8 + 2);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        for v in [self.m, self.l, self.n] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend(bits::pack(&self.c));
        out.extend(bits::pack(&self.g));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodingError> {
        let err = |msg: String| CodingError::FrameFile(msg);
        if bytes.len() < HEADER_LEN {
            return Err(err(format!("truncated header ({} bytes)", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(err("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(err(format!("unsupported version {}", bytes[4])));
        }
        let word = |i: usize| u32::from_be_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap());
        let (m, l, n) = (word(0), word(1), word(2));
        if l == 0 {
            return Err(err("l must be positive".into()));
        }
        let c_bytes = (n as usize).div_ceil(8);
        let g_len = l as usize - 1;
        let g_bytes = g_len.div_ceil(8);
        if bytes.len() != HEADER_LEN + c_bytes + g_bytes {
            return Err(err(format!(
                "expected {} bytes, found {}",
                HEADER_LEN + c_bytes + g_bytes,
                bytes.len()
            )));
        }
        let body = &bytes[HEADER_LEN..];
        Ok(Self {
            m,
            l,
            n,
            c: bits::unpack(&body[..c_bytes], n as usize),
            g: bits::unpack(&body[c_bytes..], g_len),
        })
    }
}

/// Offset-prefixed hex dump, 16 bytes per line.
pub fn hex_dump(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (i, chunk) in bytes.chunks(16).enumerate() {
        let _ = write!(out, "{:08x}:", i * 16);
        for b in chunk {
            let _ = write!(out, " {b:02x}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_hex_dump(text: &str) -> Result<Vec<u8>, CodingError> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let body = line
            .split_once(':')
            .map(|(_, rest)| rest)
            .ok_or_else(|| CodingError::FrameFile(format!("bad hex line `{line}`")))?;
        for tok in body.split_whitespace() {
            out.push(
                u8::from_str_radix(tok, 16)
                    .map_err(|_| CodingError::FrameFile(format!("bad hex byte `{tok}`")))?,
            );
        }
    }
    Ok(out)
}
