//! Context-row sequence model: six-slot token embedding, LSTM stack and a
//! linear head, run in predictive, autoregressive or diffusion mode.

use ndarray::{s, Array2, ArrayD, ArrayView1, Axis, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{Lstm, LstmCache};
use crate::optim::Params;
use crate::rng::{categorical, normal};
use crate::sequence::{Canvas, ContextRow, CONTEXT_WIDTH};
use crate::tokenizer::{Token, VOCAB_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Predictive,
    Autoregressive,
    Diffusion,
}

impl Mode {
    /// Number of `V`-way distributions predicted per step.
    pub fn groups(self) -> usize {
        match self {
            Mode::Predictive => 1,
            Mode::Autoregressive | Mode::Diffusion => CONTEXT_WIDTH,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predictive" => Ok(Mode::Predictive),
            "autoregressive" => Ok(Mode::Autoregressive),
            "diffusion" => Ok(Mode::Diffusion),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeqModelConfig {
    pub mode: Mode,
    pub vocab: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub diffusion_steps: usize,
}

impl Default for SeqModelConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Predictive,
            vocab: VOCAB_SIZE,
            embed_dim: 48,
            hidden: 64,
            layers: 2,
            bidirectional: false,
            diffusion_steps: 10,
        }
    }
}

impl SeqModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.embed_dim % CONTEXT_WIDTH != 0 {
            return Err(Error::InvalidArgument(format!(
                "embed_dim {} is not a positive multiple of {CONTEXT_WIDTH}",
                self.embed_dim
            )));
        }
        if self.vocab == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::InvalidArgument("vocab, hidden and layers must be positive".into()));
        }
        if self.mode == Mode::Diffusion && self.diffusion_steps == 0 {
            return Err(Error::InvalidArgument("diffusion mode needs at least one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqModelParams {
    /// `V × D/6`, row 0 zero.
    pub table: Array2<f64>,
    pub lstm: Lstm,
    /// `hidden·dirs × groups·V`
    pub head_w: Array2<f64>,
    pub head_b: Array2<f64>,
}

impl Params for SeqModelParams {
    fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let mut v = vec![("embed.table".to_string(), &self.table)];
        v.extend(self.lstm.named());
        v.push(("head.w".into(), &self.head_w));
        v.push(("head.b".into(), &self.head_b));
        v
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut v = vec![("embed.table".to_string(), &mut self.table)];
        v.extend(self.lstm.named_mut());
        v.push(("head.w".into(), &mut self.head_w));
        v.push(("head.b".into(), &mut self.head_b));
        v
    }
}

/// Noising applied in a diffusion forward pass. `keep[b][l]` positions carry
/// clean embeddings; the rest are blended towards noise with `α = 1 − t/n_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub t: Vec<usize>,
    pub keep: Vec<Vec<bool>>,
}

pub struct ForwardCache {
    ids: Vec<ContextRow>,
    batch: usize,
    len: usize,
    lstm: LstmCache,
    hidden: Array2<f64>,
    alpha: Vec<f64>,
}

pub struct ForwardOutput {
    /// Rows ordered `(b·L + l)·groups + k`, `V` columns.
    pub logits: Array2<f64>,
    pub batch: usize,
    pub len: usize,
    pub groups: usize,
    pub diffusion: Option<DiffusionState>,
    pub cache: ForwardCache,
}

impl ForwardOutput {
    /// `B×L×V` (predictive) or `B×L×6×V`.
    pub fn shaped(&self) -> ArrayD<f64> {
        let v = self.logits.ncols();
        let shape: Vec<usize> = if self.groups == 1 {
            vec![self.batch, self.len, v]
        } else {
            vec![self.batch, self.len, self.groups, v]
        };
        self.logits
            .to_shape(IxDyn(&shape))
            .expect("row-major logits")
            .to_owned()
    }

    pub fn row(&self, b: usize, l: usize, k: usize) -> ArrayView1<'_, f64> {
        self.logits.row((b * self.len + l) * self.groups + k)
    }
}

/// Temperature softmax, max-shifted.
pub fn softmax(logits: ArrayView1<f64>, temperature: f64) -> Vec<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p: Vec<f64> = logits.iter().map(|&x| ((x - m) / temperature).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqModel {
    pub config: SeqModelConfig,
    pub params: SeqModelParams,
}

impl SeqModel {
    pub fn new(config: SeqModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d6 = config.embed_dim / CONTEXT_WIDTH;
        let mut table = Array2::from_shape_fn((config.vocab, d6), |_| rng.random_range(-1.0..1.0));
        table.row_mut(0).fill(0.0);
        let lstm = Lstm::init(config.embed_dim, config.hidden, config.layers, config.bidirectional, rng);
        let out_in = lstm.output_dim();
        let k = 1.0 / (out_in as f64).sqrt();
        let out = config.mode.groups() * config.vocab;
        let head_w = Array2::from_shape_fn((out_in, out), |_| rng.random_range(-k..k));
        let head_b = Array2::zeros((1, out));
        Ok(Self {
            config,
            params: SeqModelParams {
                table,
                lstm,
                head_w,
                head_b,
            },
        })
    }

    fn check_batch(&self, x: &[Vec<ContextRow>]) -> Result<(usize, usize)> {
        let batch = x.len();
        let len = x.first().map_or(0, Vec::len);
        if batch == 0 || len == 0 {
            return Err(Error::EmptyInput("context batch"));
        }
        if x.iter().any(|w| w.len() != len) {
            return Err(Error::Shape("windows in a batch differ in length".into()));
        }
        for row in x.iter().flatten() {
            if let Some(&id) = row.iter().find(|&&id| id as usize >= self.config.vocab) {
                return Err(Error::TokenOutOfRange {
                    id: id as usize,
                    vocab: self.config.vocab,
                });
            }
        }
        Ok((batch, len))
    }

    /// `B × L × D` embedding of context rows, as time-major `B × D` slices.
    pub fn embed_contexts(&self, x: &[Vec<ContextRow>]) -> Result<Vec<Array2<f64>>> {
        let (batch, len) = self.check_batch(x)?;
        Ok(self.embed_unchecked(x, batch, len))
    }

    fn embed_unchecked(&self, x: &[Vec<ContextRow>], batch: usize, len: usize) -> Vec<Array2<f64>> {
        let d6 = self.params.table.ncols();
        (0..len)
            .map(|l| {
                let mut e = Array2::<f64>::zeros((batch, d6 * CONTEXT_WIDTH));
                for b in 0..batch {
                    for (k, &id) in x[b][l].iter().enumerate() {
                        e.slice_mut(s![b, k * d6..(k + 1) * d6])
                            .assign(&self.params.table.row(id as usize));
                    }
                }
                e
            })
            .collect()
    }

    fn draw_diffusion(
        &self,
        batch: usize,
        len: usize,
        t: Option<usize>,
        m: Option<&[Vec<bool>]>,
        rng: &mut impl Rng,
    ) -> Result<DiffusionState> {
        let n_d = self.config.diffusion_steps;
        if let Some(t) = t {
            if t > n_d {
                return Err(Error::InvalidArgument(format!("diffusion step {t} outside [0, {n_d}]")));
            }
        }
        if let Some(m) = m {
            if m.len() != batch || m.iter().any(|r| r.len() != len) {
                return Err(Error::Shape(format!("mask does not match batch {batch} × len {len}")));
            }
        }
        let mut ts = Vec::with_capacity(batch);
        let mut keep = Vec::with_capacity(batch);
        let n_keep = (3 * len).div_ceil(4);
        for b in 0..batch {
            ts.push(t.unwrap_or_else(|| rng.random_range(1..=n_d)));
            keep.push(match m {
                Some(m) => m[b].clone(),
                None => {
                    let mut row = vec![false; len];
                    for p in rand::seq::index::sample(rng, len, n_keep) {
                        row[p] = true;
                    }
                    row
                }
            });
        }
        Ok(DiffusionState { t: ts, keep })
    }

    /// Noise schedule `α(t) = 1 − t/n_d`.
    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - t as f64 / self.config.diffusion_steps as f64
    }

    /// Time-major embeddings after noising at step `t` with keep-mask `keep`.
    pub fn noised_embeddings(
        &self,
        x: &[Vec<ContextRow>],
        t: usize,
        keep: &[Vec<bool>],
        rng: &mut impl Rng,
    ) -> Result<(Vec<Array2<f64>>, DiffusionState)> {
        if self.config.mode != Mode::Diffusion {
            return Err(Error::WrongMode("noising needs a diffusion model"));
        }
        let (batch, len) = self.check_batch(x)?;
        let d = self.draw_diffusion(batch, len, Some(t), Some(keep), rng)?;
        let mut xs = self.embed_unchecked(x, batch, len);
        self.apply_noise(&mut xs, &d, rng);
        Ok((xs, d))
    }

    /// Blends non-kept positions towards unit Gaussian noise; returns α per item.
    fn apply_noise(&self, xs: &mut [Array2<f64>], d: &DiffusionState, rng: &mut impl Rng) -> Vec<f64> {
        let alpha: Vec<f64> = d.t.iter().map(|&t| self.alpha(t)).collect();
        for (b, &a) in alpha.iter().enumerate() {
            for (l, step) in xs.iter_mut().enumerate() {
                // Noise is drawn for every position so the stream does not
                // depend on the mask.
                let noise: Vec<f64> = (0..self.config.embed_dim).map(|_| normal(rng)).collect();
                if d.keep[b][l] {
                    continue;
                }
                for (e, n) in step.row_mut(b).iter_mut().zip(noise) {
                    *e = (1.0 - a) * n + a * *e;
                }
            }
        }
        alpha
    }

    /// Full forward pass. `t` and `m` are only meaningful in diffusion mode;
    /// when absent they are drawn from `rng` per batch item.
    pub fn forward(
        &self,
        x: &[Vec<ContextRow>],
        t: Option<usize>,
        m: Option<&[Vec<bool>]>,
        rng: &mut impl Rng,
    ) -> Result<ForwardOutput> {
        let (batch, len) = self.check_batch(x)?;
        let diffusion = if self.config.mode == Mode::Diffusion {
            Some(self.draw_diffusion(batch, len, t, m, rng)?)
        } else if t.is_some() || m.is_some() {
            return Err(Error::WrongMode("noising arguments need diffusion mode"));
        } else {
            None
        };
        let mut xs = self.embed_unchecked(x, batch, len);
        let alpha = match &diffusion {
            Some(d) => self.apply_noise(&mut xs, d, rng),
            None => vec![1.0; batch],
        };
        let (hs, lstm_cache) = self.params.lstm.forward(&xs);
        let hdim = self.params.lstm.output_dim();
        let mut hidden = Array2::<f64>::zeros((batch * len, hdim));
        for (l, h) in hs.iter().enumerate() {
            for b in 0..batch {
                hidden.row_mut(b * len + l).assign(&h.row(b));
            }
        }
        let flat = hidden.dot(&self.params.head_w) + &self.params.head_b;
        let groups = self.config.mode.groups();
        let logits = flat
            .into_shape_with_order((batch * len * groups, self.config.vocab))
            .expect("row-major head output");
        Ok(ForwardOutput {
            logits,
            batch,
            len,
            groups,
            diffusion,
            cache: ForwardCache {
                ids: x.iter().flatten().copied().collect(),
                batch,
                len,
                lstm: lstm_cache,
                hidden,
                alpha,
            },
        })
    }

    /// Gradients of a scalar loss given `dL/dlogits` in the layout of
    /// [`ForwardOutput::logits`].
    pub fn backward(&self, out: &ForwardOutput, d_logits: &Array2<f64>) -> Result<SeqModelParams> {
        let c = &out.cache;
        if d_logits.dim() != out.logits.dim() {
            return Err(Error::Shape(format!(
                "logit gradient {:?} vs logits {:?}",
                d_logits.dim(),
                out.logits.dim()
            )));
        }
        let (batch, len) = (c.batch, c.len);
        let d_flat = d_logits
            .to_shape((batch * len, out.groups * self.config.vocab))
            .expect("row-major");
        let mut g = self.params.zeros_like();
        g.head_w = c.hidden.t().dot(&d_flat);
        g.head_b = d_flat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_hidden = d_flat.dot(&self.params.head_w.t());
        let d_hs: Vec<Array2<f64>> = (0..len)
            .map(|l| {
                let mut m = Array2::<f64>::zeros((batch, d_hidden.ncols()));
                for b in 0..batch {
                    m.row_mut(b).assign(&d_hidden.row(b * len + l));
                }
                m
            })
            .collect();
        let (g_lstm, d_xs) = self.params.lstm.backward(&c.lstm, &d_hs);
        g.lstm = g_lstm;
        let d6 = self.params.table.ncols();
        for (l, dx) in d_xs.iter().enumerate() {
            for b in 0..batch {
                let kept = out.diffusion.as_ref().is_none_or(|d| d.keep[b][l]);
                let scale = if kept { 1.0 } else { c.alpha[b] };
                let row = &c.ids[b * len + l];
                for (k, &id) in row.iter().enumerate() {
                    if id == 0 {
                        continue;
                    }
                    let src = dx.slice(s![b, k * d6..(k + 1) * d6]);
                    g.table.row_mut(id as usize).scaled_add(scale, &src);
                }
            }
        }
        Ok(g)
    }

    /// Raster generation for predictive and autoregressive models. Every
    /// canvas is extended by `max_len` tokens; the model sees the last
    /// `window` context rows ending at the next unknown position. All canvases
    /// must hold the same number of tokens.
    pub fn generate(
        &self,
        canvases: &mut [Canvas],
        window: usize,
        temperature: f64,
        max_len: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        if self.config.mode == Mode::Diffusion {
            return Err(Error::WrongMode("raster generation needs a predictive or autoregressive model"));
        }
        if !(temperature > 0.0) || window == 0 {
            return Err(Error::InvalidArgument("temperature and window must be positive".into()));
        }
        let Some(first) = canvases.first() else {
            return Ok(());
        };
        let start = first.tokens().len();
        if canvases.iter().any(|c| c.tokens().len() != start) {
            return Err(Error::Shape("canvases differ in length".into()));
        }
        // Column of the target token inside a predicted group.
        let k = if self.config.mode == Mode::Autoregressive {
            CONTEXT_WIDTH - 1
        } else {
            0
        };
        for _ in 0..max_len {
            let next = canvases[0].tokens().len();
            let lo = (next + 1).saturating_sub(window);
            let x: Vec<Vec<ContextRow>> = canvases
                .iter()
                .map(|c| (lo..=next).map(|i| c.context_at(i)).collect())
                .collect();
            let out = self.forward(&x, None, None, rng)?;
            let last = out.len - 1;
            for (b, canvas) in canvases.iter_mut().enumerate() {
                let p = softmax(out.row(b, last, k), temperature);
                canvas.push(categorical(rng, &p) as Token);
            }
        }
        Ok(())
    }

    /// Iterative unmasking for diffusion models. Each of `max_len` rounds
    /// picks one unknown position per batch item, samples its six tokens
    /// from the fully-noised prediction and marks it known.
    pub fn generate_diffusion(
        &self,
        contexts: &mut [Vec<ContextRow>],
        known: &mut [Vec<bool>],
        temperature: f64,
        max_len: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        if self.config.mode != Mode::Diffusion {
            return Err(Error::WrongMode("diffusion generation needs a diffusion model"));
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        if contexts.is_empty() {
            return Ok(());
        }
        let (batch, len) = self.check_batch(contexts)?;
        if known.len() != batch || known.iter().any(|r| r.len() != len) {
            return Err(Error::Shape("known mask does not match contexts".into()));
        }
        let n_d = self.config.diffusion_steps;
        let v = self.config.vocab;
        for _ in 0..max_len {
            let picks: Vec<Option<usize>> = known
                .iter()
                .map(|row| {
                    let open: Vec<usize> = (0..len).filter(|&p| !row[p]).collect();
                    (!open.is_empty()).then(|| open[rng.random_range(0..open.len())])
                })
                .collect();
            if picks.iter().all(Option::is_none) {
                break;
            }
            let (hidden, _) = self.hidden_noised(contexts, n_d, known, rng)?;
            for (b, pick) in picks.into_iter().enumerate() {
                let Some(p) = pick else { continue };
                let h = hidden.row(b * len + p);
                let logits = h.dot(&self.params.head_w) + self.params.head_b.row(0);
                for k in 0..CONTEXT_WIDTH {
                    let probs = softmax(logits.slice(s![k * v..(k + 1) * v]), temperature);
                    contexts[b][p][k] = categorical(rng, &probs) as Token;
                }
                known[b][p] = true;
            }
        }
        Ok(())
    }

    /// Hidden states of a diffusion pass without the head, for callers that
    /// only need a few positions.
    pub fn hidden_noised(
        &self,
        x: &[Vec<ContextRow>],
        t: usize,
        keep: &[Vec<bool>],
        rng: &mut impl Rng,
    ) -> Result<(Array2<f64>, DiffusionState)> {
        let (xs, d) = self.noised_embeddings(x, t, keep, rng)?;
        let batch = x.len();
        let len = xs.len();
        let (hs, _) = self.params.lstm.forward(&xs);
        let mut hidden = Array2::<f64>::zeros((batch * len, self.params.lstm.output_dim()));
        for (l, h) in hs.iter().enumerate() {
            for b in 0..batch {
                hidden.row_mut(b * len + l).assign(&h.row(b));
            }
        }
        Ok((hidden, d))
    }
}
