//! Replays the checked-in fuzz seeds, plus truncations and byte flips of each,
//! through the same checks the fuzz targets make.

use std::path::PathBuf;

use pixelbytes::checkpoint::{to_model, Checkpoint};
use pixelbytes::control::ControlConfig;
use pixelbytes::formats::{parse_grid, parse_wav, write_grid};
use pixelbytes::sequence::{build_context_2d, ContextArray};
use pixelbytes::{pxtk, Palette, Tokenizer};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

/// Each seed, every prefix of it (up to 512 bytes) and a few single-byte flips.
fn variants(target: &str) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for s in seeds(target) {
        for n in 0..s.len().min(512) {
            out.push(s[..n].to_vec());
        }
        for i in (0..s.len()).step_by((s.len() / 64).max(1)) {
            for x in [0x01, 0x80, 0xff] {
                let mut m = s.clone();
                m[i] ^= x;
                out.push(m);
            }
        }
        out.push(s);
    }
    out
}

#[test]
fn pxtk_seeds() {
    let mut ok = 0;
    for data in variants("pxtk_decode") {
        if let Ok(records) = pxtk::decode(&data) {
            ok += 1;
            assert_eq!(pxtk::decode(&pxtk::encode(&records).unwrap()).unwrap(), records);
        }
    }
    assert!(ok >= 2);
}

#[test]
fn token_seeds() {
    let tk = Tokenizer::default();
    for data in variants("token_decode") {
        let Ok(records) = pxtk::decode(&data) else { continue };
        for r in records.iter().filter(|r| r.validate().is_ok()) {
            if let Ok(d) = tk.decode(r) {
                assert_eq!(&tk.encode_decoded(&d).unwrap(), r);
            }
            let _ = ContextArray::from_stream(r);
            let _ = build_context_2d(r);
        }
    }
}

#[test]
fn palette_seeds() {
    for data in variants("palette_parse") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(p) = Palette::parse(text) {
            let again = Palette::parse(&p.to_file_string()).unwrap();
            assert_eq!(again.len(), p.len());
        }
    }
}

#[test]
fn wav_seeds() {
    let tk = Tokenizer::default();
    let mut ok = 0;
    for data in variants("wav_decode") {
        if let Ok(w) = parse_wav(&data) {
            ok += 1;
            let _ = tk.encode_audio(&w.channels);
        }
    }
    assert!(ok >= 3);
}

#[test]
fn grid_seeds() {
    for data in variants("grid_parse") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(f) = parse_grid(text) {
            assert_eq!(parse_grid(&write_grid(&f)).unwrap(), f);
        }
    }
}

#[test]
fn checkpoint_seeds() {
    let mut ok = 0;
    for data in variants("checkpoint_decode") {
        if let Ok(ck) = Checkpoint::decode(&data) {
            ok += usize::from(to_model(&ck).is_ok());
        }
    }
    assert!(ok >= 2);
}

#[test]
fn control_config_seeds() {
    for data in variants("control_config") {
        if let Ok(cfg) = serde_json::from_slice::<ControlConfig>(&data) {
            if cfg.validate().is_ok() {
                let _ = cfg.ranges();
            }
        }
    }
}
