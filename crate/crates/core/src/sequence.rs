//! Causal context construction and windowed datasets.
//!
//! Every target token at raster position `(t, h, w)` of a `T×H×W` token volume
//! gets a six-slot context:
//!
//! ```text
//! [ X(t-1,h-1,w), X(t-1,h,w), X(t-1,h+1,w), X(t,h-1,w-1), X(t,h,w-1), prev ]
//! ```
//!
//! where out-of-volume reads are padding and `prev` is the previous target in
//! raster order (the first row keeps `X(t,h-1,w)`, which is always padding).

use crate::error::{Error, Result};
use crate::frames::Frames;
use crate::tokenizer::{
    audio_channels, Modality, Segment, Token, TokenStream, LINE_BREAK, MODALITY_SWITCH, PAD,
};

pub const CONTEXT_WIDTH: usize = 6;

pub type ContextRow = [Token; CONTEXT_WIDTH];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextArray {
    pub contexts: Vec<ContextRow>,
    pub targets: Vec<Token>,
}

impl ContextArray {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Context array of a whole record. Each segment is laid out as a volume
    /// (text `1×1×n`, image `T×H×(W+1)` including line breaks, mono audio
    /// `n×1×1`, multichannel audio `T×1×(C+1)`); segments are joined by a
    /// modality-switch row and the `prev` column runs across the joins.
    pub fn from_stream(stream: &TokenStream) -> Result<Self> {
        stream.validate()?;
        let mut out = ContextArray::default();
        for (i, seg) in stream.segments.iter().enumerate() {
            if i > 0 {
                out.contexts.push([PAD; CONTEXT_WIDTH]);
                out.targets.push(MODALITY_SWITCH);
            }
            let vol = segment_volume(stream, seg)?;
            let part = create_sequence_data(&vol)?;
            out.contexts.extend(part.contexts);
            out.targets.extend(part.targets);
        }
        out.link_previous();
        Ok(out)
    }

    /// Re-establishes `contexts[i][5] == targets[i-1]`.
    pub fn link_previous(&mut self) {
        for i in 1..self.targets.len() {
            self.contexts[i][CONTEXT_WIDTH - 1] = self.targets[i - 1];
        }
    }
}

/// Token volume a segment occupies; see [`ContextArray::from_stream`].
pub fn segment_volume(stream: &TokenStream, seg: &Segment) -> Result<Frames<Token>> {
    let toks = stream.segment_tokens(seg).to_vec();
    let n = toks.len();
    match seg.modality {
        Modality::Text => Frames::from_vec(1, 1, n, toks),
        Modality::Image => {
            let g = seg
                .geometry
                .ok_or_else(|| Error::malformed(seg.start, "image segment without geometry"))?;
            Frames::from_vec(g.frames, g.height, g.width + 1, toks)
        }
        Modality::Audio => {
            let c = audio_channels(&toks).map_err(|k| Error::malformed(seg.start + k, "bad audio layout"))?;
            if c == 1 {
                Frames::from_vec(n, 1, 1, toks)
            } else {
                Frames::from_vec(n / (c + 1), 1, c + 1, toks)
            }
        }
    }
}

/// Builds contexts and targets for one token volume.
pub fn create_sequence_data(x: &Frames<Token>) -> Result<ContextArray> {
    let (t_len, h_len, w_len) = x.shape();
    if t_len == 0 || h_len == 0 || w_len == 0 {
        return Err(Error::Shape(format!("volume {t_len}x{h_len}x{w_len} has an empty axis")));
    }
    let n = x.len();
    let mut contexts = Vec::with_capacity(n);
    let at = |t: usize, h: usize, w: usize, dt: isize, dh: isize, dw: isize| -> Token {
        x.get_signed(t as isize + dt, h as isize + dh, w as isize + dw)
            .copied()
            .unwrap_or(PAD)
    };
    for t in 0..t_len {
        for h in 0..h_len {
            for w in 0..w_len {
                contexts.push([
                    at(t, h, w, -1, -1, 0),
                    at(t, h, w, -1, 0, 0),
                    at(t, h, w, -1, 1, 0),
                    at(t, h, w, 0, -1, -1),
                    at(t, h, w, 0, 0, -1),
                    at(t, h, w, 0, -1, 0),
                ]);
            }
        }
    }
    let mut out = ContextArray {
        contexts,
        targets: x.as_slice().to_vec(),
    };
    out.link_previous();
    Ok(out)
}

/// Incremental version of the context rule for generation: tokens are pushed
/// in raster order into a volume of fixed `height × width` frames and the
/// context of the next (not yet known) position can be read at any time.
#[derive(Debug, Clone)]
pub struct Canvas {
    height: usize,
    width: usize,
    tokens: Vec<Token>,
}

impl Canvas {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape("canvas needs non-zero height and width".into()));
        }
        Ok(Self {
            height,
            width,
            tokens: Vec::new(),
        })
    }

    pub fn with_tokens(height: usize, width: usize, tokens: Vec<Token>) -> Result<Self> {
        let mut c = Self::new(height, width)?;
        c.tokens = tokens;
        Ok(c)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn push(&mut self, token: Token) {
        self.tokens.push(token);
    }

    fn read(&self, t: isize, h: isize, w: isize) -> Token {
        if t < 0 || h < 0 || w < 0 || h as usize >= self.height || w as usize >= self.width {
            return PAD;
        }
        let idx = (t as usize * self.height + h as usize) * self.width + w as usize;
        self.tokens.get(idx).copied().unwrap_or(PAD)
    }

    /// Context row of raster position `index` (which may be the next unknown one).
    pub fn context_at(&self, index: usize) -> ContextRow {
        let plane = self.height * self.width;
        let t = (index / plane) as isize;
        let h = ((index % plane) / self.width) as isize;
        let w = (index % self.width) as isize;
        let prev = if index == 0 {
            self.read(t, h - 1, w)
        } else {
            self.tokens[index - 1]
        };
        [
            self.read(t - 1, h - 1, w),
            self.read(t - 1, h, w),
            self.read(t - 1, h + 1, w),
            self.read(t, h - 1, w - 1),
            self.read(t, h, w - 1),
            prev,
        ]
    }

    pub fn next_context(&self) -> ContextRow {
        self.context_at(self.tokens.len())
    }
}

/// 3×3 windows used by the patch embedding. Image tokens see their spatial
/// neighbourhood inside the frame's `H×(W+1)` grid (line breaks included);
/// every other token sees only the up-to-8 preceding stream tokens,
/// right-aligned, so slot 0 and the unfilled leading slots stay padding.
pub fn build_context_2d(stream: &TokenStream) -> Result<Vec<[Token; 9]>> {
    stream.validate()?;
    let mut out: Vec<[Token; 9]> = Vec::with_capacity(stream.len());
    let mut image_of = vec![None; stream.len()];
    for seg in &stream.segments {
        if let (Modality::Image, Some(g)) = (seg.modality, seg.geometry) {
            for k in 0..seg.len {
                image_of[seg.start + k] = Some((seg.start, g.height, g.width + 1));
            }
        }
    }
    for (i, slot) in image_of.iter().enumerate() {
        let mut win = [PAD; 9];
        match *slot {
            Some((start, h_len, w_len)) => {
                let k = i - start;
                let plane = h_len * w_len;
                let base = start + (k / plane) * plane;
                let h = ((k % plane) / w_len) as isize;
                let w = (k % w_len) as isize;
                for (j, cell) in win.iter_mut().enumerate() {
                    let nh = h + j as isize / 3 - 1;
                    let nw = w + j as isize % 3 - 1;
                    if nh >= 0 && nw >= 0 && (nh as usize) < h_len && (nw as usize) < w_len {
                        *cell = stream.tokens[base + nh as usize * w_len + nw as usize];
                    }
                }
            }
            None => {
                let lo = i.saturating_sub(8);
                let prev = &stream.tokens[lo..i];
                win[9 - prev.len()..].copy_from_slice(prev);
            }
        }
        out.push(win);
    }
    Ok(out)
}

/// `L` consecutive rows of one item, wrapped circularly at the item's end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub item: usize,
    pub start: usize,
    pub contexts: Vec<ContextRow>,
    pub targets: Vec<Token>,
    /// Context row following each row (shift-by-one), also wrapped.
    pub next_contexts: Vec<ContextRow>,
}

#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub items: Vec<ContextArray>,
    pub seq_len: usize,
    pub stride: usize,
}

impl WindowedDataset {
    pub fn new(items: Vec<ContextArray>, seq_len: usize, stride: usize) -> Result<Self> {
        if seq_len == 0 || stride == 0 || stride > seq_len {
            return Err(Error::InvalidArgument(format!(
                "need seq_len >= 1 and 1 <= stride <= seq_len (got {seq_len}, {stride})"
            )));
        }
        Ok(Self {
            items: items.into_iter().filter(|i| !i.is_empty()).collect(),
            seq_len,
            stride,
        })
    }

    /// `(item, start)` of every window, in item order then start order.
    pub fn index(&self) -> Vec<(usize, usize)> {
        let mut idx = Vec::new();
        for (i, item) in self.items.iter().enumerate() {
            let mut s = 0;
            while s < item.len() {
                idx.push((i, s));
                s += self.stride;
            }
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.index().len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn window(&self, item: usize, start: usize) -> Window {
        let a = &self.items[item];
        let n = a.len();
        let row = |j: usize| (start + j) % n;
        Window {
            item,
            start,
            contexts: (0..self.seq_len).map(|j| a.contexts[row(j)]).collect(),
            targets: (0..self.seq_len).map(|j| a.targets[row(j)]).collect(),
            next_contexts: (0..self.seq_len).map(|j| a.contexts[row(j + 1)]).collect(),
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = Window> + '_ {
        self.index().into_iter().map(|(i, s)| self.window(i, s))
    }

    /// Token counts over every context slot of every item.
    pub fn token_frequencies(&self, vocab: usize) -> Vec<f64> {
        let mut f = vec![0.0; vocab];
        for item in &self.items {
            for row in &item.contexts {
                for &t in row {
                    f[t as usize] += 1.0;
                }
            }
        }
        f
    }
}

/// Free-function form of [`WindowedDataset::windows`].
pub fn window(dataset: &WindowedDataset) -> impl Iterator<Item = Window> + '_ {
    dataset.windows()
}

/// Temporal subsampling: audio steps and image frames whose index is a
/// multiple of the factor survive; text is untouched.
pub fn reduce_modalities(item: &TokenStream, audio_factor: usize, image_factor: usize) -> Result<TokenStream> {
    if audio_factor == 0 || image_factor == 0 {
        return Err(Error::InvalidArgument("reduction factors must be >= 1".into()));
    }
    item.validate()?;
    let mut out = TokenStream::default();
    for seg in &item.segments {
        let toks = item.segment_tokens(seg);
        let (tokens, geometry) = match seg.modality {
            Modality::Text => (toks.to_vec(), None),
            Modality::Image => {
                let mut g = seg.geometry.expect("validated");
                let frame = g.height * (g.width + 1);
                let kept: Vec<Token> = toks
                    .chunks(frame)
                    .step_by(image_factor)
                    .flatten()
                    .copied()
                    .collect();
                g.frames = kept.len() / frame;
                (kept, Some(g))
            }
            Modality::Audio => {
                let c = audio_channels(toks).map_err(|k| Error::malformed(seg.start + k, "bad audio layout"))?;
                let step = if c > 1 { c + 1 } else { 1 };
                let kept = toks.chunks(step).step_by(audio_factor).flatten().copied().collect();
                (kept, None)
            }
        };
        out.append(TokenStream {
            segments: vec![Segment {
                modality: seg.modality,
                start: 0,
                len: tokens.len(),
                geometry,
            }],
            tokens,
        });
    }
    Ok(out)
}

/// Whether a token is structural (not content).
pub fn is_structural(t: Token) -> bool {
    t == PAD || t == LINE_BREAK || t == MODALITY_SWITCH
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Tokenizer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct (t,h,w) neighbour lookup written against a nested Vec, with no
    /// padding array and no slicing.
    fn oracle(x: &[Vec<Vec<Token>>]) -> (Vec<ContextRow>, Vec<Token>) {
        let (tn, hn, wn) = (x.len() as i64, x[0].len() as i64, x[0][0].len() as i64);
        let get = |t: i64, h: i64, w: i64| -> Token {
            if (0..tn).contains(&t) && (0..hn).contains(&h) && (0..wn).contains(&w) {
                x[t as usize][h as usize][w as usize]
            } else {
                0
            }
        };
        let mut c = Vec::new();
        let mut y = Vec::new();
        for t in 0..tn {
            for h in 0..hn {
                for w in 0..wn {
                    let prev = if y.is_empty() { get(t, h - 1, w) } else { *y.last().unwrap() };
                    c.push([
                        get(t - 1, h - 1, w),
                        get(t - 1, h, w),
                        get(t - 1, h + 1, w),
                        get(t, h - 1, w - 1),
                        get(t, h, w - 1),
                        prev,
                    ]);
                    y.push(get(t, h, w));
                }
            }
        }
        (c, y)
    }

    fn random_volume(rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<Token>>> {
        let t = rng.random_range(1..=5);
        let h = rng.random_range(1..=5);
        let w = rng.random_range(1..=5);
        (0..t)
            .map(|_| (0..h).map(|_| (0..w).map(|_| rng.random_range(1..151)).collect()).collect())
            .collect()
    }

    fn flatten(x: &[Vec<Vec<Token>>]) -> Frames<Token> {
        let data: Vec<Token> = x.iter().flatten().flatten().copied().collect();
        Frames::from_vec(x.len(), x[0].len(), x[0][0].len(), data).unwrap()
    }

    #[test]
    fn single_cell() {
        let x = Frames::from_vec(1, 1, 1, vec![7]).unwrap();
        let c = create_sequence_data(&x).unwrap();
        assert_eq!(c.contexts, vec![[0; 6]]);
        assert_eq!(c.targets, vec![7]);
    }

    #[test]
    fn two_by_two_matches_oracle() {
        let x = vec![vec![vec![1, 2], vec![3, 4]]];
        let c = create_sequence_data(&flatten(&x)).unwrap();
        let (oc, oy) = oracle(&x);
        assert_eq!(c.contexts, oc);
        assert_eq!(c.targets, oy);
        assert_eq!(
            c.contexts,
            vec![[0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 1, 1], [0, 0, 0, 0, 0, 2], [0, 0, 0, 1, 3, 3]]
        );
    }

    #[test]
    fn random_volumes_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let x = random_volume(&mut rng);
            let c = create_sequence_data(&flatten(&x)).unwrap();
            let (oc, oy) = oracle(&x);
            assert_eq!(c.contexts, oc);
            assert_eq!(c.targets, oy);
            for i in 1..c.len() {
                assert_eq!(c.contexts[i][5], c.targets[i - 1]);
            }
        }
    }

    #[test]
    fn canvas_agrees_with_batch_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = random_volume(&mut rng);
            let f = flatten(&x);
            let c = create_sequence_data(&f).unwrap();
            let mut canvas = Canvas::new(f.height(), f.width()).unwrap();
            for (i, &t) in f.as_slice().iter().enumerate() {
                assert_eq!(canvas.next_context(), c.contexts[i]);
                canvas.push(t);
            }
        }
    }

    #[test]
    fn empty_axis_is_rejected() {
        let x: Frames<Token> = Frames::from_vec(1, 0, 3, vec![]).unwrap();
        assert!(create_sequence_data(&x).is_err());
    }

    #[test]
    fn stream_contexts_join_segments() {
        let tk = Tokenizer::default();
        let img = Frames::from_vec(1, 2, 2, vec![1u8, 2, 3, 4]).unwrap();
        let s = tk.encode_record(Some(b"ab"), Some(&img), None).unwrap();
        let c = ContextArray::from_stream(&s).unwrap();
        assert_eq!(c.targets, s.tokens);
        for i in 1..c.len() {
            assert_eq!(c.contexts[i][5], c.targets[i - 1]);
        }
        // First image pixel (after "ab" + switch) sees nothing but `prev`.
        assert_eq!(&c.contexts[3][..5], &[0; 5]);
    }

    fn window_oracle(n: usize, l: usize, stride: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < n {
            out.push((start..start + l).map(|r| r % n).collect());
            start += stride;
        }
        out
    }

    fn item_of_len(n: usize) -> ContextArray {
        // Targets encode the row index so windows can be read back.
        let x = Frames::from_vec(1, 1, n, (1..=n as Token).collect()).unwrap();
        create_sequence_data(&x).unwrap()
    }

    #[test]
    fn windows_wrap_circularly() {
        let ds = WindowedDataset::new(vec![item_of_len(5)], 8, 8).unwrap();
        let w: Vec<Window> = ds.windows().collect();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].targets, vec![1, 2, 3, 4, 5, 1, 2, 3]);

        let ds = WindowedDataset::new(vec![item_of_len(8)], 8, 8).unwrap();
        let w: Vec<Window> = ds.windows().collect();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].targets, (1..=8).collect::<Vec<Token>>());

        let ds = WindowedDataset::new(vec![item_of_len(10)], 8, 4).unwrap();
        let got: Vec<Vec<usize>> = ds
            .windows()
            .map(|w| w.targets.iter().map(|&t| t as usize - 1).collect())
            .collect();
        assert_eq!(got, window_oracle(10, 8, 4));
        assert_eq!(ds.index().iter().map(|x| x.1).collect::<Vec<_>>(), vec![0, 4, 8]);

        let empty = WindowedDataset::new(vec![], 4, 2).unwrap();
        assert_eq!(empty.windows().count(), 0);
        assert!(WindowedDataset::new(vec![], 4, 5).is_err());
        assert!(WindowedDataset::new(vec![], 0, 0).is_err());
    }

    #[test]
    fn next_contexts_are_shifted_rows() {
        let item = item_of_len(6);
        let ds = WindowedDataset::new(vec![item.clone()], 4, 2).unwrap();
        for w in ds.windows() {
            for j in 0..4 {
                assert_eq!(w.next_contexts[j], item.contexts[(w.start + j + 1) % 6]);
            }
        }
    }

    #[test]
    fn reduction_subsamples() {
        let tk = Tokenizer::default();
        let img = Frames::from_vec(4, 2, 2, (0..16u8).collect()).unwrap();
        let audio: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin()).collect();
        let rec = tk
            .encode_record(Some(b"hi"), Some(&img), Some(std::slice::from_ref(&audio)))
            .unwrap();
        let same = reduce_modalities(&rec, 1, 1).unwrap();
        assert_eq!(same, rec);
        let r = reduce_modalities(&rec, 4, 2).unwrap();
        let d = tk.decode(&r).unwrap();
        assert_eq!(d.images().next().unwrap().frames(), 2);
        assert_eq!(d.audio().next().unwrap()[0].len(), 25);
        assert_eq!(d.text(), "hi");

        let a8 = tk.encode_audio(&[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]]).unwrap();
        assert_eq!(reduce_modalities(&a8, 2, 1).unwrap().len(), 4);
        assert!(reduce_modalities(&a8, 0, 1).is_err());
    }

    fn brute_window_2d(grid: &[Vec<Token>], h: usize, w: usize) -> [Token; 9] {
        let mut out = [0; 9];
        for dh in 0..3 {
            for dw in 0..3 {
                let (y, x) = (h as i64 + dh as i64 - 1, w as i64 + dw as i64 - 1);
                if y >= 0 && x >= 0 && (y as usize) < grid.len() && (x as usize) < grid[0].len() {
                    out[dh * 3 + dw] = grid[y as usize][x as usize];
                }
            }
        }
        out
    }

    #[test]
    fn context_2d_windows() {
        let tk = Tokenizer::default();
        let text = tk.encode_text(b"abc").stream;
        let w = build_context_2d(&text).unwrap();
        assert_eq!(w[0], [0; 9]);
        assert_eq!(w[2], [0, 0, 0, 0, 0, 0, 0, text.tokens[0], text.tokens[1]]);

        let img = Frames::from_vec(1, 3, 3, (0..9u8).collect()).unwrap();
        let s = tk.encode_frames(&img).unwrap();
        let wins = build_context_2d(&s).unwrap();
        let grid: Vec<Vec<Token>> = s.tokens.chunks(4).map(|r| r.to_vec()).collect();
        for h in 0..3 {
            for c in 0..4 {
                assert_eq!(wins[h * 4 + c], brute_window_2d(&grid, h, c));
            }
        }
        // Interior pixel: all nine cells are real tokens.
        assert!(wins[5].iter().all(|&t| t != 0));
        // Top-left corner: the row above and the column to the left are padding.
        assert_eq!(wins[0].iter().filter(|&&t| t == 0).count(), 5);
    }
}
