//! The 151-token vocabulary and the multimodal tokenizer.
//!
//! Layout (`VocabLayout`):
//!
//! | ids       | meaning                                          |
//! |-----------|--------------------------------------------------|
//! | 0         | padding                                          |
//! | 1         | line break (end of pixel row / time step / LF)   |
//! | 2         | modality switch                                  |
//! | 3..72     | 69 printable ASCII symbols, uppercase folded     |
//! | 72..127   | 55 palette colours                               |
//! | 127..151  | 24 action bins over `[-1, 1]`                    |

use std::ops::Range;

use crate::error::{Error, Result};
use crate::frames::Frames;
use crate::palette::{Palette, Rgb, PALETTE_SIZE};

pub type Token = u16;

pub const VOCAB_SIZE: usize = 151;
pub const PAD: Token = 0;
pub const LINE_BREAK: Token = 1;
pub const MODALITY_SWITCH: Token = 2;
pub const TEXT_SYMBOLS: usize = 69;
pub const ACTION_BINS: usize = 24;

const TEXT_START: usize = 3;
const PALETTE_START: usize = TEXT_START + TEXT_SYMBOLS;
const ACTION_START: usize = PALETTE_START + PALETTE_SIZE;

/// Static description of how the 151 ids are partitioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabLayout;

impl VocabLayout {
    pub const fn size(self) -> usize {
        VOCAB_SIZE
    }

    pub const fn text_ids(self) -> Range<usize> {
        TEXT_START..PALETTE_START
    }

    pub const fn palette_ids(self) -> Range<usize> {
        PALETTE_START..ACTION_START
    }

    pub const fn action_ids(self) -> Range<usize> {
        ACTION_START..VOCAB_SIZE
    }

    /// Text id of a byte after lowercase folding, or `None` for non-printables.
    pub fn text_id(self, byte: u8) -> Option<Token> {
        let b = byte.to_ascii_lowercase();
        if !(0x20..=0x7e).contains(&b) {
            return None;
        }
        // Printables below 'a' that are not uppercase letters keep their rank;
        // bytes above 'Z' shift down by the 26 removed uppercase letters.
        let rank = if b < b'A' {
            b - 0x20
        } else {
            b - 0x20 - 26
        };
        Some((TEXT_START + rank as usize) as Token)
    }

    pub fn text_byte(self, id: Token) -> Option<u8> {
        let id = id as usize;
        if !self.text_ids().contains(&id) {
            return None;
        }
        let rank = (id - TEXT_START) as u8;
        Some(if rank < b'A' - 0x20 {
            rank + 0x20
        } else {
            rank + 0x20 + 26
        })
    }

    pub fn palette_id(self, index: usize) -> Result<Token> {
        if index >= PALETTE_SIZE {
            return Err(Error::NotPaletteIndex(index));
        }
        Ok((PALETTE_START + index) as Token)
    }

    pub fn palette_index(self, id: Token) -> Option<usize> {
        let id = id as usize;
        self.palette_ids().contains(&id).then(|| id - PALETTE_START)
    }

    pub fn action_id(self, bin: usize) -> Token {
        (ACTION_START + bin.min(ACTION_BINS - 1)) as Token
    }

    pub fn action_bin(self, id: Token) -> Option<usize> {
        let id = id as usize;
        self.action_ids().contains(&id).then(|| id - ACTION_START)
    }

    pub fn is_action(self, id: Token) -> bool {
        self.action_bin(id).is_some()
    }
}

/// Centre of action bin `k`: `-1 + (2k + 1) / 24`.
#[inline]
pub fn action_center(bin: usize) -> f64 {
    -1.0 + (2 * bin + 1) as f64 / ACTION_BINS as f64
}

/// Nearest bin centre to `v` (clamped to `[-1, 1]`); midpoints go to the upper bin.
#[inline]
pub fn action_bin_of(v: f64) -> usize {
    if v.is_nan() {
        return ACTION_BINS / 2;
    }
    let k = ((v.clamp(-1.0, 1.0) + 1.0) * (ACTION_BINS as f64 / 2.0)).floor();
    (k as usize).min(ACTION_BINS - 1)
}

pub fn action_token(v: f64) -> Token {
    VocabLayout.action_id(action_bin_of(v))
}

pub fn action_value(id: Token) -> Option<f64> {
    VocabLayout.action_bin(id).map(action_center)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Text,
    Image,
    Audio,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Text => 0,
            Modality::Image => 1,
            Modality::Audio => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Text),
            1 => Some(Modality::Image),
            2 => Some(Modality::Audio),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageGeometry {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageGeometry {
    pub fn token_count(&self) -> usize {
        self.frames * self.height * (self.width + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub modality: Modality,
    pub start: usize,
    pub len: usize,
    /// Present exactly for image segments.
    pub geometry: Option<ImageGeometry>,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end()
    }
}

/// Flat token sequence plus its modality segmentation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    pub segments: Vec<Segment>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn segment_tokens(&self, seg: &Segment) -> &[Token] {
        &self.tokens[seg.range()]
    }

    /// Appends `other`, inserting a modality switch when both sides are non-empty.
    pub fn append(&mut self, other: TokenStream) {
        if other.segments.is_empty() {
            return;
        }
        if !self.segments.is_empty() {
            self.tokens.push(MODALITY_SWITCH);
        }
        let offset = self.tokens.len();
        self.tokens.extend(other.tokens);
        self.segments.extend(other.segments.into_iter().map(|mut s| {
            s.start += offset;
            s
        }));
    }

    /// Checks every structural invariant; the error carries the first bad offset.
    pub fn validate(&self) -> Result<()> {
        let layout = VocabLayout;
        if let Some(pos) = self.tokens.iter().position(|&t| t as usize >= VOCAB_SIZE) {
            return Err(Error::malformed(pos, format!("token {} >= {VOCAB_SIZE}", self.tokens[pos])));
        }
        let mut cursor = 0;
        for (i, seg) in self.segments.iter().enumerate() {
            if i > 0 {
                if seg.start != cursor + 1 || self.tokens.get(cursor) != Some(&MODALITY_SWITCH) {
                    return Err(Error::malformed(cursor, "segments must be separated by one modality switch"));
                }
            } else if seg.start != 0 {
                return Err(Error::malformed(0, "first segment must start at 0"));
            }
            if seg.len == 0 {
                return Err(Error::malformed(seg.start, "empty segment"));
            }
            if seg.end() > self.tokens.len() {
                return Err(Error::malformed(seg.start, "segment runs past end of stream"));
            }
            let toks = self.segment_tokens(seg);
            match seg.modality {
                Modality::Text => {
                    if let Some(k) = toks
                        .iter()
                        .position(|&t| t != LINE_BREAK && layout.text_byte(t).is_none())
                    {
                        return Err(Error::malformed(seg.start + k, "non-text token in text segment"));
                    }
                }
                Modality::Image => {
                    let g = seg
                        .geometry
                        .ok_or_else(|| Error::malformed(seg.start, "image segment without geometry"))?;
                    if g.frames == 0 || g.height == 0 || g.width == 0 || g.token_count() != seg.len {
                        return Err(Error::malformed(seg.start, "image geometry does not match segment length"));
                    }
                    for (k, &t) in toks.iter().enumerate() {
                        let row_end = k % (g.width + 1) == g.width;
                        let ok = if row_end {
                            t == LINE_BREAK
                        } else {
                            layout.palette_index(t).is_some()
                        };
                        if !ok {
                            return Err(Error::malformed(seg.start + k, "bad pixel row layout"));
                        }
                    }
                }
                Modality::Audio => {
                    if seg.geometry.is_some() {
                        return Err(Error::malformed(seg.start, "audio segment with image geometry"));
                    }
                    audio_channels(toks)
                        .map_err(|k| Error::malformed(seg.start + k, "bad audio step layout"))?;
                }
            }
            cursor = seg.end();
        }
        if cursor != self.tokens.len() {
            return Err(Error::malformed(cursor, "trailing tokens outside any segment"));
        }
        Ok(())
    }

    pub fn count_modality_switches(&self) -> usize {
        self.tokens.iter().filter(|&&t| t == MODALITY_SWITCH).count()
    }
}

/// Channel count of an audio segment body; `Err(offset)` on a layout violation.
///
/// Mono audio has no line breaks; multichannel audio is `C` action tokens
/// followed by a line break per time step.
pub(crate) fn audio_channels(tokens: &[Token]) -> std::result::Result<usize, usize> {
    match tokens.iter().position(|&t| t == LINE_BREAK) {
        None => match tokens.iter().position(|&t| !VocabLayout.is_action(t)) {
            None => Ok(1),
            Some(k) => Err(k),
        },
        Some(0) => Err(0),
        Some(c) => {
            let step = c + 1;
            if tokens.len() % step != 0 {
                return Err(tokens.len());
            }
            for (k, &t) in tokens.iter().enumerate() {
                let ok = if k % step == c {
                    t == LINE_BREAK
                } else {
                    VocabLayout.is_action(t)
                };
                if !ok {
                    return Err(k);
                }
            }
            Ok(c)
        }
    }
}

/// One decoded segment.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedSegment {
    Text(String),
    Image(Frames<u8>),
    /// One vector of dequantised samples per channel.
    Audio(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decoded {
    pub segments: Vec<DecodedSegment>,
}

impl Decoded {
    pub fn text(&self) -> String {
        self.segments
            .iter()
            .filter_map(|s| match s {
                DecodedSegment::Text(t) => Some(t.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn images(&self) -> impl Iterator<Item = &Frames<u8>> {
        self.segments.iter().filter_map(|s| match s {
            DecodedSegment::Image(f) => Some(f),
            _ => None,
        })
    }

    pub fn audio(&self) -> impl Iterator<Item = &Vec<Vec<f64>>> {
        self.segments.iter().filter_map(|s| match s {
            DecodedSegment::Audio(a) => Some(a),
            _ => None,
        })
    }
}

/// Text encoding result: the stream and how many bytes were dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextEncoding {
    pub stream: TokenStream,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    palette: Palette,
}

impl Tokenizer {
    pub fn new(palette: Palette) -> Self {
        Self { palette }
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    pub fn layout(&self) -> VocabLayout {
        VocabLayout
    }

    pub fn encode_text(&self, text: &[u8]) -> TextEncoding {
        let mut tokens = Vec::with_capacity(text.len());
        let mut dropped = 0;
        for &b in text {
            if b == b'\n' {
                tokens.push(LINE_BREAK);
            } else if let Some(id) = VocabLayout.text_id(b) {
                tokens.push(id);
            } else {
                dropped += 1;
            }
        }
        let segments = if tokens.is_empty() {
            Vec::new()
        } else {
            vec![Segment {
                modality: Modality::Text,
                start: 0,
                len: tokens.len(),
                geometry: None,
            }]
        };
        TextEncoding {
            stream: TokenStream { tokens, segments },
            dropped,
        }
    }

    /// Serialises palette-index frames: frame by frame, row-major, each row
    /// terminated by a line break.
    pub fn encode_frames(&self, indices: &Frames<u8>) -> Result<TokenStream> {
        if indices.is_empty() {
            return Err(Error::EmptyFrames);
        }
        let (t, h, w) = indices.shape();
        let geometry = ImageGeometry {
            frames: t,
            height: h,
            width: w,
        };
        let mut tokens = Vec::with_capacity(geometry.token_count());
        for row in indices.as_slice().chunks(w) {
            for &i in row {
                tokens.push(VocabLayout.palette_id(i.into())?);
            }
            tokens.push(LINE_BREAK);
        }
        Ok(TokenStream {
            segments: vec![Segment {
                modality: Modality::Image,
                start: 0,
                len: tokens.len(),
                geometry: Some(geometry),
            }],
            tokens,
        })
    }

    pub fn encode_rgb_frames(&self, frames: &Frames<Rgb>) -> Result<TokenStream> {
        self.encode_frames(&self.palette.quantize_frames(frames)?)
    }

    /// Audio: per channel, remove the mean, divide by the max magnitude, then
    /// quantise to the 24 action bins.
    pub fn encode_audio(&self, channels: &[Vec<f64>]) -> Result<TokenStream> {
        let normalized: Vec<Vec<f64>> = channels.iter().map(|c| normalize_channel(c)).collect();
        self.encode_action_channels(&normalized)
    }

    /// Quantises already-scaled signals (clamped to `[-1, 1]`) without normalisation.
    pub fn encode_action_channels(&self, channels: &[Vec<f64>]) -> Result<TokenStream> {
        let n = channels.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::EmptyInput("audio"));
        }
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("audio channels differ in length".into()));
        }
        let multi = channels.len() > 1;
        let mut tokens = Vec::with_capacity(n * (channels.len() + usize::from(multi)));
        for i in 0..n {
            for c in channels {
                tokens.push(action_token(c[i]));
            }
            if multi {
                tokens.push(LINE_BREAK);
            }
        }
        Ok(TokenStream {
            segments: vec![Segment {
                modality: Modality::Audio,
                start: 0,
                len: tokens.len(),
                geometry: None,
            }],
            tokens,
        })
    }

    /// Concatenates the present modalities with one modality switch between each.
    pub fn encode_record(
        &self,
        text: Option<&[u8]>,
        frames: Option<&Frames<u8>>,
        audio: Option<&[Vec<f64>]>,
    ) -> Result<TokenStream> {
        let mut out = TokenStream::default();
        if let Some(t) = text {
            out.append(self.encode_text(t).stream);
        }
        if let Some(f) = frames {
            if !f.is_empty() {
                out.append(self.encode_frames(f)?);
            }
        }
        if let Some(a) = audio {
            if a.first().is_some_and(|c| !c.is_empty()) {
                out.append(self.encode_audio(a)?);
            }
        }
        if out.segments.is_empty() {
            return Err(Error::EmptyInput("record has no modality"));
        }
        Ok(out)
    }

    pub fn decode(&self, stream: &TokenStream) -> Result<Decoded> {
        stream.validate()?;
        let mut segments = Vec::with_capacity(stream.segments.len());
        for seg in &stream.segments {
            let toks = stream.segment_tokens(seg);
            segments.push(match seg.modality {
                Modality::Text => DecodedSegment::Text(
                    toks.iter()
                        .map(|&t| {
                            if t == LINE_BREAK {
                                '\n'
                            } else {
                                VocabLayout.text_byte(t).map(char::from).unwrap_or('?')
                            }
                        })
                        .collect(),
                ),
                Modality::Image => {
                    let g = seg.geometry.expect("validated");
                    let data = toks
                        .iter()
                        .filter(|&&t| t != LINE_BREAK)
                        .map(|&t| VocabLayout.palette_index(t).expect("validated") as u8)
                        .collect();
                    DecodedSegment::Image(Frames::from_vec(g.frames, g.height, g.width, data)?)
                }
                Modality::Audio => {
                    let c = audio_channels(toks).map_err(|k| Error::malformed(seg.start + k, "bad audio"))?;
                    let mut chans = vec![Vec::new(); c];
                    let step = if c > 1 { c + 1 } else { 1 };
                    for chunk in toks.chunks(step) {
                        for (ch, &t) in chans.iter_mut().zip(chunk) {
                            ch.push(action_value(t).expect("validated"));
                        }
                    }
                    DecodedSegment::Audio(chans)
                }
            });
        }
        Ok(Decoded { segments })
    }

    /// Re-encodes decoded content. Audio is quantised directly (it is already
    /// on bin centres), so this is the exact inverse of `decode`.
    pub fn encode_decoded(&self, decoded: &Decoded) -> Result<TokenStream> {
        let mut out = TokenStream::default();
        for seg in &decoded.segments {
            let s = match seg {
                DecodedSegment::Text(t) => self.encode_text(t.as_bytes()).stream,
                DecodedSegment::Image(f) => self.encode_frames(f)?,
                DecodedSegment::Audio(a) => self.encode_action_channels(a)?,
            };
            out.append(s);
        }
        Ok(out)
    }
}

/// Mean removal followed by max-magnitude scaling; an all-zero result stays zero.
pub fn normalize_channel(samples: &[f64]) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let centered: Vec<f64> = samples.iter().map(|s| s - mean).collect();
    let peak = centered.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return vec![0.0; samples.len()];
    }
    centered.into_iter().map(|s| s / peak).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_bin(v: f64) -> usize {
        // Nearest centre, upper bin on ties.
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..ACTION_BINS {
            let d = (v - action_center(k)).abs();
            if d <= best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    #[test]
    fn vocabulary_partitions_ids() {
        let l = VocabLayout;
        let mut seen = [0u8; VOCAB_SIZE];
        for id in [PAD, LINE_BREAK, MODALITY_SWITCH] {
            seen[id as usize] += 1;
        }
        for r in [l.text_ids(), l.palette_ids(), l.action_ids()] {
            for id in r {
                seen[id] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(l.text_ids().len(), 69);
        assert_eq!(l.palette_ids().len(), 55);
        assert_eq!(l.action_ids().len(), 24);
    }

    #[test]
    fn every_printable_byte_has_one_text_id() {
        let l = VocabLayout;
        let mut ids: Vec<Token> = (0x20u8..=0x7e).map(|b| l.text_id(b).unwrap()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 69);
        for b in 0x20u8..=0x7e {
            let id = l.text_id(b).unwrap();
            assert_eq!(l.text_byte(id), Some(b.to_ascii_lowercase()));
        }
        assert_eq!(l.text_id(b'\t'), None);
        assert_eq!(l.text_id(0x7f), None);
    }

    #[test]
    fn text_encoding() {
        let tk = Tokenizer::default();
        assert_eq!(tk.encode_text(b"A").stream, tk.encode_text(b"a").stream);
        let empty = tk.encode_text(b"").stream;
        assert!(empty.tokens.is_empty() && empty.segments.is_empty());
        let abc = tk.encode_text(b"abc").stream.tokens;
        assert_eq!(abc.len(), 3);
        assert_eq!(abc[1], abc[0] + 1);
        assert_eq!(abc[2], abc[1] + 1);
        let e = tk.encode_text(b"a\tb\x00\nc\xff");
        assert_eq!(e.dropped, 3);
        assert_eq!(e.stream.tokens[2], LINE_BREAK);
        let d = tk.decode(&tk.encode_text(b"hello").stream).unwrap();
        assert_eq!(d.text(), "hello");
    }

    #[test]
    fn frame_encoding() {
        let tk = Tokenizer::default();
        let one = Frames::from_vec(1, 1, 1, vec![9u8]).unwrap();
        assert_eq!(
            tk.encode_frames(&one).unwrap().tokens,
            vec![VocabLayout.palette_id(9).unwrap(), LINE_BREAK]
        );
        let sq = Frames::from_vec(1, 2, 2, vec![0u8, 1, 2, 3]).unwrap();
        let s = tk.encode_frames(&sq).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s.tokens[2], LINE_BREAK);
        assert_eq!(s.tokens[5], LINE_BREAK);
        let bad = Frames::from_vec(1, 1, 2, vec![3u8, 55]).unwrap();
        assert!(matches!(tk.encode_frames(&bad), Err(Error::NotPaletteIndex(55))));
        let d = tk.decode(&s).unwrap();
        assert_eq!(d.images().next().unwrap(), &sq);
    }

    #[test]
    fn bin_rule_matches_exhaustive_centres() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let v: f64 = rng.random_range(-1.0..=1.0);
            assert_eq!(action_bin_of(v), brute_bin(v), "{v}");
        }
        assert_eq!(action_bin_of(1.0), 23);
        assert_eq!(action_bin_of(-1.0), 0);
        assert_eq!(action_bin_of(0.0), 12);
        assert!(action_center(12) > 0.0);
    }

    #[test]
    fn audio_encoding() {
        let tk = Tokenizer::default();
        let constant = tk.encode_audio(&[vec![0.3; 5]]).unwrap();
        assert!(constant.tokens.iter().all(|&t| t == VocabLayout.action_id(12)));

        let s = tk.encode_audio(&[vec![0.0, 2.0, -1.0, 1.0]]).unwrap();
        // Mean 0.5 removed; peak sample 2.0 -> +1.0 -> top bin.
        assert_eq!(s.tokens[1], VocabLayout.action_id(23));

        assert!(tk.encode_audio(&[vec![]]).is_err());
        assert!(tk.encode_audio(&[]).is_err());

        let stereo = tk.encode_audio(&[vec![1.0, -1.0], vec![0.5, 0.25]]).unwrap();
        assert_eq!(stereo.len(), 6);
        assert_eq!(stereo.tokens[2], LINE_BREAK);
        assert_eq!(stereo.tokens[5], LINE_BREAK);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sig: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = tk.encode_audio(std::slice::from_ref(&sig)).unwrap();
        let norm = normalize_channel(&sig);
        for (t, v) in s.tokens.iter().zip(&norm) {
            assert_eq!(VocabLayout.action_bin(*t).unwrap(), brute_bin(*v));
        }
        let back = tk.decode(&s).unwrap();
        let a = &back.audio().next().unwrap()[0];
        for (x, y) in a.iter().zip(&norm) {
            assert!((x - y).abs() <= 1.0 / 24.0 + 1e-12);
        }
    }

    #[test]
    fn record_assembly() {
        let tk = Tokenizer::default();
        let text_only = tk.encode_record(Some(b"hi"), None, None).unwrap();
        assert_eq!(text_only, tk.encode_text(b"hi").stream);

        let img = Frames::from_vec(1, 2, 3, vec![1u8; 6]).unwrap();
        let ti = tk.encode_record(Some(b"hi"), Some(&img), None).unwrap();
        assert_eq!(ti.len(), 2 + 1 + 8);
        let all = tk
            .encode_record(Some(b"hi"), Some(&img), Some(&[vec![0.1, 0.2]]))
            .unwrap();
        assert_eq!(all.count_modality_switches(), 2);
        all.validate().unwrap();
        assert!(tk.encode_record(Some(b""), None, None).is_err());
        assert!(tk.encode_record(None, None, None).is_err());
    }

    #[test]
    fn decode_rejects_bad_geometry() {
        let tk = Tokenizer::default();
        let img = Frames::from_vec(1, 2, 2, vec![1u8; 4]).unwrap();
        let mut s = tk.encode_frames(&img).unwrap();
        s.tokens[2] = VocabLayout.palette_id(0).unwrap();
        match tk.decode(&s) {
            Err(Error::MalformedStream { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
    }
}
