//! The 55-colour NES-derived palette and perceptual nearest-colour quantisation.
//!
//! Colours are compared in CIE L\*a\*b\* (D65) with the CIE76 distance. The
//! palette order comes from `data/nes55.txt`; palette token ids are positions
//! in that file.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::frames::Frames;

pub const PALETTE_SIZE: usize = 55;

const NES55: &str = include_str!("../data/nes55.txt");

pub type Rgb = [u8; 3];
pub type Lab = [f64; 3];

// sRGB (linear) -> XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

#[inline]
fn srgb_to_linear(c: u8) -> f64 {
    let c = f64::from(c) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB → XYZ(D65) → L\*a\*b\*.
///
/// The reference white is the XYZ image of sRGB white under the same matrix,
/// so `(255,255,255)` lands on `L = 100, a = b = 0` up to rounding.
pub fn rgb_to_lab(rgb: Rgb) -> Lab {
    let lin = rgb.map(srgb_to_linear);
    let mut xyz = [0.0; 3];
    let mut white = [0.0; 3];
    for (i, row) in RGB_TO_XYZ.iter().enumerate() {
        xyz[i] = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
        white[i] = row[0] + row[1] + row[2];
    }
    let fx = lab_f(xyz[0] / white[0]);
    let fy = lab_f(xyz[1] / white[1]);
    let fz = lab_f(xyz[2] / white[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[inline]
pub fn lab_distance_sq(a: &Lab, b: &Lab) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaletteColor {
    pub rgb: Rgb,
    pub lab: Lab,
}

impl PaletteColor {
    pub fn new(rgb: Rgb) -> Self {
        Self {
            rgb,
            lab: rgb_to_lab(rgb),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    colors: Vec<PaletteColor>,
}

impl Default for Palette {
    fn default() -> Self {
        Self::nes55()
    }
}

impl Palette {
    /// The palette shipped with the crate.
    pub fn nes55() -> Self {
        Self::parse(NES55).expect("bundled palette file is valid")
    }

    pub fn from_rgb(colors: &[Rgb]) -> Result<Self> {
        if colors.len() != PALETTE_SIZE {
            return Err(Error::PaletteFile {
                line: colors.len(),
                reason: format!("expected {PALETTE_SIZE} colours, got {}", colors.len()),
            });
        }
        for (i, c) in colors.iter().enumerate() {
            if let Some(j) = colors[..i].iter().position(|d| d == c) {
                return Err(Error::PaletteFile {
                    line: i + 1,
                    reason: format!("duplicate of entry {j}"),
                });
            }
        }
        Ok(Self {
            colors: colors.iter().copied().map(PaletteColor::new).collect(),
        })
    }

    /// Parses the `index R G B` text format (one colour per line, indices in order).
    pub fn parse(text: &str) -> Result<Self> {
        let mut rgb = Vec::with_capacity(PALETTE_SIZE);
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let bad = |reason: &str| Error::PaletteFile {
                line: line_no,
                reason: reason.to_string(),
            };
            if line.trim().is_empty() {
                return Err(bad("blank line"));
            }
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            if fields.len() != 4 {
                return Err(bad("expected `index R G B`"));
            }
            let index: usize = fields[0].parse().map_err(|_| bad("bad index"))?;
            if index != rgb.len() {
                return Err(bad("indices must be 0,1,2,... in order"));
            }
            let mut c = [0u8; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                c[k] = f.parse().map_err(|_| bad("channel is not a byte"))?;
            }
            rgb.push(c);
        }
        Self::from_rgb(&rgb)
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for (i, c) in self.colors.iter().enumerate() {
            let [r, g, b] = c.rgb;
            let _ = writeln!(s, "{i} {r} {g} {b}");
        }
        s
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn colors(&self) -> &[PaletteColor] {
        &self.colors
    }

    pub fn rgb(&self, index: usize) -> Result<Rgb> {
        self.colors
            .get(index)
            .map(|c| c.rgb)
            .ok_or(Error::NotPaletteIndex(index))
    }

    /// CIE76 argmin over the palette; exact ties go to the lower index.
    pub fn nearest_index(&self, rgb: Rgb) -> usize {
        self.nearest_index_lab(&rgb_to_lab(rgb))
    }

    pub fn nearest_index_lab(&self, lab: &Lab) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.colors.iter().enumerate() {
            let d = lab_distance_sq(lab, &c.lab);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Quantises a stack of RGB frames to palette indices.
    pub fn quantize_frames(&self, frames: &Frames<Rgb>) -> Result<Frames<u8>> {
        if frames.is_empty() {
            return Err(Error::EmptyFrames);
        }
        Ok(frames.map(|&rgb| self.nearest_index(rgb) as u8))
    }

    pub fn dequantize_frames(&self, indices: &Frames<u8>) -> Result<Frames<Rgb>> {
        for &i in indices.as_slice() {
            if usize::from(i) >= self.len() {
                return Err(Error::NotPaletteIndex(i.into()));
            }
        }
        Ok(indices.map(|&i| self.colors[usize::from(i)].rgb))
    }
}

pub fn nearest_palette_index(rgb: Rgb, palette: &Palette) -> usize {
    palette.nearest_index(rgb)
}

pub fn quantize_frames(frames: &Frames<Rgb>, palette: &Palette) -> Result<Frames<u8>> {
    palette.quantize_frames(frames)
}
