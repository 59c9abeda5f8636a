//! Synthetic multimodal records: a short caption, a short sprite animation
//! and a two-channel action/state signal whose state channel is the filtered
//! action channel. The action is a square-wave burst followed by silence.

use std::f64::consts::PI;

use rand::Rng;

use crate::control::filter::gameboy_filter;
use crate::error::Result;
use crate::frames::Frames;
use crate::rng::derive;
use crate::tokenizer::{TokenStream, Tokenizer};

pub const SPRITE_SIZE: usize = 8;
pub const SPRITE_FRAMES: usize = 4;
pub const SIGNAL_STEPS: usize = 32;

const SHAPES: [&str; 4] = ["block", "cross", "ring", "bar"];
const COLORS: [(&str, u8); 6] = [("red", 22), ("blue", 11), ("green", 26), ("yellow", 35), ("purple", 4), ("white", 33)];
const MOVES: [(&str, isize, isize); 4] = [("left", 0, -1), ("right", 0, 1), ("up", -1, 0), ("down", 1, 0)];
const BACKGROUND: u8 = 13;

fn covers(shape: usize, y: isize, x: isize) -> bool {
    let (cy, cx) = (y - 3, x - 3);
    match shape {
        0 => (-1..=1).contains(&cy) && (-1..=1).contains(&cx),
        1 => (cy == 0 && cx.abs() <= 2) || (cx == 0 && cy.abs() <= 2),
        2 => cy.abs().max(cx.abs()) == 2,
        _ => cy == 0 && cx.abs() <= 3,
    }
}

/// Sprite animation: frame `f` is shifted `f` pixels along `(dy, dx)`.
pub fn sprite(shape: usize, color: u8, dy: isize, dx: isize) -> Frames<u8> {
    let n = SPRITE_SIZE;
    let mut data = Vec::with_capacity(SPRITE_FRAMES * n * n);
    for f in 0..SPRITE_FRAMES as isize {
        for y in 0..n as isize {
            for x in 0..n as isize {
                let hit = covers(shape, y - f * dy, x - f * dx);
                data.push(if hit { color } else { BACKGROUND });
            }
        }
    }
    Frames::from_vec(SPRITE_FRAMES, n, n, data).expect("sized above")
}

/// Square-wave burst of `burst` steps with the given period, silence after
/// it, and the filtered response.
pub fn signal(period: usize, phase: usize, burst: usize) -> [Vec<f64>; 2] {
    let action: Vec<f64> = (0..SIGNAL_STEPS)
        .map(|k| match k {
            k if k >= burst => 0.0,
            k if (k + phase) % period < period / 2 => 1.0,
            _ => -1.0,
        })
        .collect();
    let state = gameboy_filter(&action, 1.0, 2.0 * PI * 0.08, 0.4, 1.0).expect("valid filter");
    [action, state]
}

/// One record drawn from `rng`.
pub fn record(tk: &Tokenizer, rng: &mut impl Rng) -> Result<TokenStream> {
    let shape = rng.random_range(0..SHAPES.len());
    let (cname, color) = COLORS[rng.random_range(0..COLORS.len())];
    let (mname, dy, dx) = MOVES[rng.random_range(0..MOVES.len())];
    let caption = format!("a {cname} {} moves {mname}.", SHAPES[shape]);
    let frames = sprite(shape, color, dy, dx);
    let [a, s] = signal(4 + 2 * shape, rng.random_range(0..4), rng.random_range(8..=20));
    tk.encode_record(Some(caption.as_bytes()), Some(&frames), Some(&[a, s]))
}

/// Records from `derive(seed, i)` until at least `min_tokens` tokens.
pub fn corpus(seed: u64, min_tokens: usize) -> Result<Vec<TokenStream>> {
    let tk = Tokenizer::default();
    let mut out = Vec::new();
    let mut total = 0;
    let mut i = 0;
    while total < min_tokens {
        let r = record(&tk, &mut derive(seed, i))?;
        total += r.len();
        out.push(r);
        i += 1;
    }
    Ok(out)
}
