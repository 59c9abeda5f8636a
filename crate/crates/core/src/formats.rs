//! Input fixtures: PCM16 WAV audio and `.grid` palette-index images.
//!
//! A `.grid` file holds one frame per block of lines. Each line is a row of
//! whitespace-separated palette indices; blank lines separate frames. Lines
//! starting with `#` are comments. All frames must share one `H × W` shape.

use crate::error::{Error, Result};
use crate::frames::Frames;
use crate::palette::PALETTE_SIZE;

#[derive(Debug, Clone, PartialEq)]
pub struct Wav {
    pub sample_rate: u32,
    /// One vector per channel, samples scaled to `[-1, 1)`.
    pub channels: Vec<Vec<f64>>,
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

/// Parses a RIFF/WAVE file with 16-bit PCM samples. Unknown chunks are skipped.
pub fn parse_wav(bytes: &[u8]) -> Result<Wav> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::corrupt(0, "not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u32)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body = pos + 8;
        if size > bytes.len() - body {
            return Err(Error::corrupt(pos, "chunk runs past end of file"));
        }
        let chunk = &bytes[body..body + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::corrupt(pos, "short fmt chunk"));
                }
                let format = le_u16(&chunk[0..2]);
                let channels = le_u16(&chunk[2..4]);
                let rate = le_u32(&chunk[4..8]);
                let bits = le_u16(&chunk[14..16]);
                // 0xFFFE is WAVE_FORMAT_EXTENSIBLE; accept it when the sample size says PCM16.
                if format != 1 && format != 0xFFFE {
                    return Err(Error::corrupt(body, format!("unsupported audio format {format}")));
                }
                if bits != 16 {
                    return Err(Error::corrupt(body + 14, format!("{bits}-bit samples, need 16")));
                }
                if channels == 0 {
                    return Err(Error::corrupt(body + 2, "zero channels"));
                }
                fmt = Some((channels, rate));
            }
            b"data" => {
                let (nch, rate) = fmt.ok_or_else(|| Error::corrupt(pos, "data chunk before fmt chunk"))?;
                let nch = nch as usize;
                let frame = 2 * nch;
                if size % frame != 0 {
                    return Err(Error::corrupt(body, "data size is not a whole number of frames"));
                }
                let mut channels = vec![Vec::with_capacity(size / frame); nch];
                for f in chunk.chunks_exact(frame) {
                    for (c, s) in f.chunks_exact(2).enumerate() {
                        channels[c].push(i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0);
                    }
                }
                return Ok(Wav {
                    sample_rate: rate,
                    channels,
                });
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(Error::corrupt(pos.min(bytes.len()), "no data chunk"))
}

/// 16-bit PCM encoding of `wav`; samples are clamped to `[-1, 1]`.
pub fn write_wav(wav: &Wav) -> Result<Vec<u8>> {
    let nch = wav.channels.len();
    if nch == 0 || nch > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("{nch} channels")));
    }
    let n = wav.channels[0].len();
    if wav.channels.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("channels differ in length".into()));
    }
    let data_len = u32::try_from(n * nch * 2)
        .ok()
        .filter(|&d| d <= u32::MAX - 36)
        .ok_or_else(|| Error::InvalidArgument("audio too long".into()))?;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(nch as u16).to_le_bytes());
    out.extend_from_slice(&wav.sample_rate.to_le_bytes());
    out.extend_from_slice(&wav.sample_rate.saturating_mul(nch as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(nch as u16).saturating_mul(2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for i in 0..n {
        for c in &wav.channels {
            let s = (c[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn parse_grid(text: &str) -> Result<Frames<u8>> {
    let mut frames: Vec<Vec<Vec<u8>>> = vec![Vec::new()];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if frames.last().is_some_and(|f| !f.is_empty()) {
                frames.push(Vec::new());
            }
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|w| {
                w.parse::<usize>()
                    .ok()
                    .filter(|&v| v < PALETTE_SIZE)
                    .map(|v| v as u8)
                    .ok_or_else(|| Error::PaletteFile {
                        line: ln + 1,
                        reason: format!("{w:?} is not a palette index"),
                    })
            })
            .collect::<Result<Vec<u8>>>()?;
        frames.last_mut().expect("non-empty").push(row);
    }
    if frames.last().is_some_and(Vec::is_empty) {
        frames.pop();
    }
    let first = frames.first().ok_or(Error::EmptyFrames)?;
    let (h, w) = (first.len(), first[0].len());
    let mut data = Vec::with_capacity(frames.len() * h * w);
    for (t, f) in frames.iter().enumerate() {
        if f.len() != h || f.iter().any(|r| r.len() != w) {
            return Err(Error::Shape(format!("frame {t} is not {h}x{w}")));
        }
        data.extend(f.iter().flatten());
    }
    Frames::from_vec(frames.len(), h, w, data)
}

pub fn write_grid(frames: &Frames<u8>) -> String {
    let (t, h, w) = frames.shape();
    let mut s = String::new();
    for ti in 0..t {
        if ti > 0 {
            s.push('\n');
        }
        for hi in 0..h {
            let row: Vec<String> = (0..w).map(|wi| frames.get(ti, hi, wi).to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    }
    s
}
