//! PixelBytes: one token vocabulary for text, palette images and action/audio
//! signals, causal context construction over that vocabulary, LSTM sequence
//! models (predictive, autoregressive and diffusion modes) trained from
//! scratch, and an optimal-control data generator.

pub mod checkpoint;
pub mod control;
pub mod embed;
pub mod error;
pub mod formats;
pub mod frames;
pub mod gradcheck;
pub mod lstm;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod palette;
pub mod pxtk;
pub mod rng;
pub mod sequence;
pub mod synth;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
pub use frames::Frames;
pub use palette::Palette;
pub use tokenizer::{Token, TokenStream, Tokenizer, VOCAB_SIZE};
