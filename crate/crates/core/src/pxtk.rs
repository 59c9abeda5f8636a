//! `PXTK` tokenised-corpus container.
//!
//! ```text
//! "PXTK"  u8 version (=1)  u32 record_count
//! per record:
//!     u32 token_count  u8 segment_count
//!     per segment: u8 modality  u32 start  u32 length  [u16 T  u16 H  u16 W   if image]
//!     token_count × u16 token id
//! ```
//!
//! All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::{ImageGeometry, Modality, Segment, Token, TokenStream};

pub const MAGIC: &[u8; 4] = b"PXTK";
pub const VERSION: u8 = 1;

pub fn encode(records: &[TokenStream]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&u32_of(records.len(), "record count")?.to_le_bytes());
    for rec in records {
        out.extend_from_slice(&u32_of(rec.tokens.len(), "token count")?.to_le_bytes());
        let nseg = u8::try_from(rec.segments.len())
            .map_err(|_| Error::InvalidArgument("more than 255 segments in a record".into()))?;
        out.push(nseg);
        for seg in &rec.segments {
            out.push(seg.modality.code());
            out.extend_from_slice(&u32_of(seg.start, "segment start")?.to_le_bytes());
            out.extend_from_slice(&u32_of(seg.len, "segment length")?.to_le_bytes());
            if seg.modality == Modality::Image {
                let g = seg
                    .geometry
                    .ok_or_else(|| Error::InvalidArgument("image segment without geometry".into()))?;
                for d in [g.frames, g.height, g.width] {
                    let d = u16::try_from(d)
                        .map_err(|_| Error::InvalidArgument(format!("image dimension {d} exceeds u16")))?;
                    out.extend_from_slice(&d.to_le_bytes());
                }
            }
        }
        for &t in &rec.tokens {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u32")))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::corrupt(self.pos, format!("truncated {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a corpus; every record is validated against the stream invariants.
pub fn decode(bytes: &[u8]) -> Result<Vec<TokenStream>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::corrupt(0, "bad magic"));
    }
    let version = c.u8("version")?;
    if version != VERSION {
        return Err(Error::corrupt(4, format!("unsupported version {version}")));
    }
    let count = c.u32("record count")? as usize;
    // Each record needs at least five bytes; refuse counts the buffer cannot hold.
    if count > (bytes.len() - c.pos) / 5 {
        return Err(Error::corrupt(5, format!("record count {count} exceeds file size")));
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let rec_start = c.pos;
        let ntok = c.u32("token count")? as usize;
        let nseg = c.u8("segment count")?;
        let mut segments = Vec::with_capacity(nseg.into());
        for _ in 0..nseg {
            let at = c.pos;
            let code = c.u8("modality")?;
            let modality =
                Modality::from_code(code).ok_or_else(|| Error::corrupt(at, format!("unknown modality {code}")))?;
            let start = c.u32("segment start")? as usize;
            let len = c.u32("segment length")? as usize;
            let geometry = if modality == Modality::Image {
                Some(ImageGeometry {
                    frames: c.u16("frames")?.into(),
                    height: c.u16("height")?.into(),
                    width: c.u16("width")?.into(),
                })
            } else {
                None
            };
            segments.push(Segment {
                modality,
                start,
                len,
                geometry,
            });
        }
        if ntok > (bytes.len() - c.pos) / 2 {
            return Err(Error::corrupt(c.pos, "truncated token ids"));
        }
        let raw = c.take(ntok * 2, "token ids")?;
        let tokens: Vec<Token> = raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
        let stream = TokenStream { tokens, segments };
        stream.validate().map_err(|e| match e {
            Error::MalformedStream { offset, reason } => {
                Error::corrupt(rec_start, format!("record token {offset}: {reason}"))
            }
            other => other,
        })?;
        if stream.segments.is_empty() && !stream.tokens.is_empty() {
            return Err(Error::corrupt(rec_start, "tokens without segments"));
        }
        records.push(stream);
    }
    if c.pos != bytes.len() {
        return Err(Error::corrupt(c.pos, "trailing bytes"));
    }
    Ok(records)
}

pub fn write_file(path: &Path, records: &[TokenStream]) -> Result<()> {
    let bytes = encode(records)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<TokenStream>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
