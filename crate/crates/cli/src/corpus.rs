//! Fixture directories: files sharing a stem form one record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pixelbytes::formats::{parse_grid, parse_wav, write_grid, write_wav, Wav};
use pixelbytes::palette::Rgb;
use pixelbytes::tokenizer::{DecodedSegment, Modality};
use pixelbytes::{Frames, TokenStream, Tokenizer};

#[derive(Debug, Default)]
struct Parts {
    text: Option<PathBuf>,
    image: Option<PathBuf>,
    audio: Option<PathBuf>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_png(path: &Path) -> Result<Frames<Rgb>> {
    let img = image::load_from_memory(&read(path)?)
        .with_context(|| format!("cannot decode {}", path.display()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Frames::from_vec(1, h as usize, w as usize, data)?)
}

fn set(slot: &mut Option<PathBuf>, path: PathBuf) -> Result<()> {
    if let Some(old) = slot {
        bail!("{} and {} both supply the same modality", old.display(), path.display());
    }
    *slot = Some(path);
    Ok(())
}

/// Groups `.txt`, `.grid`/`.png` and `.wav` files by stem, in stem order.
/// Files with other extensions are ignored.
pub fn load_dir(dir: &Path, tk: &Tokenizer) -> Result<Vec<TokenStream>> {
    let mut groups: BTreeMap<String, Parts> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))?;
    for e in entries {
        let path = e.with_context(|| format!("cannot read {}", dir.display()))?.path();
        let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else {
            continue;
        };
        let parts = groups.entry(stem.to_string_lossy().into_owned()).or_default();
        match ext.to_string_lossy().to_ascii_lowercase().as_str() {
            "txt" => set(&mut parts.text, path)?,
            "grid" | "png" => set(&mut parts.image, path)?,
            "wav" => set(&mut parts.audio, path)?,
            _ => log::warn!("skipping {}", path.display()),
        }
    }
    let mut out = Vec::new();
    for parts in groups.values() {
        let text = parts.text.as_deref().map(read).transpose()?;
        let frames = match &parts.image {
            Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) => {
                Some(tk.palette().quantize_frames(&load_png(p)?)?)
            }
            Some(p) => {
                let s = String::from_utf8(read(p)?).with_context(|| format!("{} is not UTF-8", p.display()))?;
                Some(parse_grid(&s).with_context(|| format!("bad grid {}", p.display()))?)
            }
            None => None,
        };
        let audio = match &parts.audio {
            Some(p) => Some(parse_wav(&read(p)?).with_context(|| format!("bad wav {}", p.display()))?.channels),
            None => None,
        };
        // A text file with nothing encodable and no other part adds no record.
        match tk.encode_record(text.as_deref(), frames.as_ref(), audio.as_deref()) {
            Ok(r) => out.push(r),
            Err(pixelbytes::Error::EmptyInput(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub records: usize,
    pub text: usize,
    pub image: usize,
    pub audio: usize,
    pub modality_switch: usize,
}

pub fn count(records: &[TokenStream]) -> Counts {
    let mut c = Counts {
        records: records.len(),
        ..Default::default()
    };
    for r in records {
        for s in &r.segments {
            match s.modality {
                Modality::Text => c.text += s.len,
                Modality::Image => c.image += s.len,
                Modality::Audio => c.audio += s.len,
            }
        }
        c.modality_switch += r.count_modality_switches();
    }
    c
}

/// Writes each segment of record `index` next to the others with the stem `record_NNNN`.
pub fn write_record(dir: &Path, index: usize, record: &TokenStream, tk: &Tokenizer, sample_rate: u32) -> Result<Vec<PathBuf>> {
    let decoded = tk.decode(record)?;
    let mut written = Vec::new();
    let mut seen = [0usize; 3];
    for seg in &decoded.segments {
        let (k, ext, bytes) = match seg {
            DecodedSegment::Text(t) => (0, "txt", t.clone().into_bytes()),
            DecodedSegment::Image(f) => (1, "grid", write_grid(f).into_bytes()),
            DecodedSegment::Audio(a) => (
                2,
                "wav",
                write_wav(&Wav {
                    sample_rate,
                    channels: a.clone(),
                })?,
            ),
        };
        let suffix = if seen[k] == 0 { String::new() } else { format!("_{}", seen[k]) };
        seen[k] += 1;
        let path = dir.join(format!("record_{index:04}{suffix}.{ext}"));
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
