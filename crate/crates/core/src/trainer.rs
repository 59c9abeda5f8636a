//! Training loop: per-mode losses, gradient accumulation, frequency-based
//! class weights, metric CSVs and best-checkpoint retention.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::model::{ForwardOutput, Mode, SeqModel, SeqModelParams};
use crate::optim::{Adam, AdamConfig, Params};
use crate::rng::{derive, seeded};
use crate::sequence::{Window, WindowedDataset, CONTEXT_WIDTH};
use crate::tokenizer::PAD;

pub const METRICS_HEADER: &str = "epoch,train_loss,train_accuracy,val_loss,val_accuracy";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub stride: usize,
    pub learning_rate: f64,
    pub grad_accum_steps: usize,
    pub audio_reduction: usize,
    pub image_reduction: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            seq_len: 1024,
            stride: 1024,
            learning_rate: 1e-3,
            grad_accum_steps: 1,
            audio_reduction: 1,
            image_reduction: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("seq_len", self.seq_len),
            ("stride", self.stride),
            ("grad_accum_steps", self.grad_accum_steps),
            ("audio_reduction", self.audio_reduction),
            ("image_reduction", self.image_reduction),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.train_loss, self.train_accuracy, self.val_loss, self.val_accuracy
        )
    }
}

/// `w_i = sqrt(Σ f) / sqrt(f_i)`, zero where `f_i = 0`.
pub fn class_weights(frequencies: &[f64]) -> Result<Vec<f64>> {
    if frequencies.iter().any(|&f| !(f >= 0.0) || !f.is_finite()) {
        return Err(Error::InvalidArgument("frequencies must be finite and non-negative".into()));
    }
    let total: f64 = frequencies.iter().sum();
    if total == 0.0 {
        return Err(Error::EmptyInput("token frequencies"));
    }
    let root = total.sqrt();
    Ok(frequencies
        .iter()
        .map(|&f| if f > 0.0 { root / f.sqrt() } else { 0.0 })
        .collect())
}

/// Unnormalised loss statistics of one or more batches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSums {
    pub weighted_loss: f64,
    pub weight: f64,
    pub correct: usize,
    pub counted: usize,
}

impl LossSums {
    pub fn add(&mut self, o: &LossSums) {
        self.weighted_loss += o.weighted_loss;
        self.weight += o.weight;
        self.correct += o.correct;
        self.counted += o.counted;
    }

    pub fn loss(&self) -> f64 {
        if self.weight > 0.0 {
            self.weighted_loss / self.weight
        } else {
            0.0
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.counted > 0 {
            self.correct as f64 / self.counted as f64
        } else {
            0.0
        }
    }
}

/// Target token of every logit row, with its weight (`None` = excluded).
pub fn targets_for(
    mode: Mode,
    out: &ForwardOutput,
    windows: &[&Window],
    class_w: Option<&[f64]>,
) -> Vec<Option<(usize, f64)>> {
    let g = out.groups;
    let mut t = Vec::with_capacity(out.logits.nrows());
    for (b, w) in windows.iter().enumerate() {
        for l in 0..out.len {
            match mode {
                Mode::Predictive => {
                    let tok = w.targets[l];
                    t.push((tok != PAD).then(|| (tok as usize, weight_of(class_w, tok as usize))));
                }
                Mode::Autoregressive => {
                    for k in 0..CONTEXT_WIDTH {
                        let tok = w.next_contexts[l][k];
                        t.push((tok != PAD).then(|| (tok as usize, weight_of(class_w, tok as usize))));
                    }
                }
                Mode::Diffusion => {
                    let noised = out.diffusion.as_ref().is_some_and(|d| !d.keep[b][l]);
                    for k in 0..CONTEXT_WIDTH {
                        let tok = w.contexts[l][k] as usize;
                        t.push(noised.then(|| (tok, weight_of(class_w, tok))));
                    }
                }
            }
        }
        debug_assert_eq!(t.len(), (b + 1) * out.len * g);
    }
    t
}

fn weight_of(class_w: Option<&[f64]>, tok: usize) -> f64 {
    class_w.map_or(1.0, |w| w[tok])
}

/// Weighted cross-entropy `Σ w·ℓ / Σ w` over selected rows. Returns the
/// unnormalised sums and `d(Σ w·ℓ)/d logits`.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[Option<(usize, f64)>]) -> (LossSums, Array2<f64>) {
    let mut sums = LossSums::default();
    let mut grad = Array2::<f64>::zeros(logits.raw_dim());
    for (r, tgt) in targets.iter().enumerate() {
        let Some((tok, w)) = *tgt else { continue };
        let row = logits.row(r);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = row.iter().map(|&x| (x - m).exp()).sum();
        let log_z = m + z.ln();
        let argmax = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        sums.counted += 1;
        sums.correct += usize::from(argmax == tok);
        if w == 0.0 {
            continue;
        }
        sums.weighted_loss += w * (log_z - row[tok]);
        sums.weight += w;
        let mut g = grad.row_mut(r);
        for (j, &x) in row.iter().enumerate() {
            g[j] = w * (x - log_z).exp();
        }
        g[tok] -= w;
    }
    (sums, grad)
}

/// One pass over `windows` in the given order. With an optimiser, gradients
/// of `grad_accum_steps` consecutive batches are summed and normalised by
/// their combined weight before each step.
pub fn process_epoch(
    model: &mut SeqModel,
    windows: &[Window],
    batch_size: usize,
    mut optimizer: Option<(&mut Adam<SeqModelParams>, usize)>,
    class_w: Option<&[f64]>,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("training windows"));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mode = model.config.mode;
    let mut total = LossSums::default();
    let mut acc_grad: Option<SeqModelParams> = None;
    let mut acc_sums = LossSums::default();
    let mut acc_batches = 0;
    let batches: Vec<&[Window]> = windows.chunks(batch_size).collect();
    let n_batches = batches.len();
    for (bi, chunk) in batches.into_iter().enumerate() {
        let refs: Vec<&Window> = chunk.iter().collect();
        let x: Vec<_> = chunk.iter().map(|w| w.contexts.clone()).collect();
        let out = model.forward(&x, None, None, rng)?;
        let targets = targets_for(mode, &out, &refs, class_w);
        let (sums, d_logits) = cross_entropy(&out.logits, &targets);
        total.add(&sums);
        let Some((opt, accum)) = optimizer.as_mut() else { continue };
        let g = model.backward(&out, &d_logits)?;
        match acc_grad.as_mut() {
            Some(a) => a.add_assign(&g),
            None => acc_grad = Some(g),
        }
        acc_sums.add(&sums);
        acc_batches += 1;
        if acc_batches == *accum || bi + 1 == n_batches {
            let mut g = acc_grad.take().expect("accumulated");
            if acc_sums.weight > 0.0 {
                g.scale(1.0 / acc_sums.weight);
                opt.step(&mut model.params, &g);
            }
            acc_sums = LossSums::default();
            acc_batches = 0;
        }
    }
    Ok((total.loss(), total.accuracy()))
}

/// Index of the epoch with the smallest validation loss (first on ties).
pub fn best_epoch(metrics: &[EpochMetrics]) -> Option<usize> {
    let mut best: Option<&EpochMetrics> = None;
    for m in metrics {
        if best.is_none_or(|b| m.val_loss < b.val_loss) {
            best = Some(m);
        }
    }
    best.map(|m| m.epoch)
}

pub struct TrainOutputs {
    pub metrics: Vec<EpochMetrics>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub best_epoch: usize,
}

/// Trains for `config.epochs` epochs, shuffling training windows each epoch,
/// writing `metrics.csv` and keeping `best.pxck` at minimum validation loss.
/// Diffusion models weight classes by their training-set frequencies.
pub fn train_model(
    model: &mut SeqModel,
    train: &WindowedDataset,
    val: &WindowedDataset,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutputs> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics_path = out_dir.join("metrics.csv");
    let checkpoint_path = out_dir.join("best.pxck");
    let mut csv = std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(csv, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;

    let class_w = match model.config.mode {
        Mode::Diffusion => Some(class_weights(&train.token_frequencies(model.config.vocab))?),
        _ => None,
    };
    let mut train_windows: Vec<Window> = train.windows().collect();
    let val_windows: Vec<Window> = val.windows().collect();
    let mut opt = Adam::new(
        AdamConfig {
            lr: config.learning_rate,
            ..Default::default()
        },
        &model.params,
    );
    let mut shuffle_rng = derive(config.seed, 1);
    let mut model_rng = derive(config.seed, 2);
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best: Option<f64> = None;
    let mut best_epoch = 0;
    for epoch in 1..=config.epochs {
        train_windows.shuffle(&mut shuffle_rng);
        let (train_loss, train_accuracy) = process_epoch(
            model,
            &train_windows,
            config.batch_size,
            Some((&mut opt, config.grad_accum_steps)),
            class_w.as_deref(),
            &mut model_rng,
        )?;
        // Validation noise comes from a per-epoch stream so it does not
        // perturb the training stream.
        let mut val_rng = derive(config.seed ^ 0x7661_6c00, epoch as u64);
        let (val_loss, val_accuracy) = process_epoch(
            model,
            &val_windows,
            config.batch_size,
            None,
            class_w.as_deref(),
            &mut val_rng,
        )?;
        let m = EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        log::info!("{}", m.csv_row());
        writeln!(csv, "{}", m.csv_row()).map_err(|e| Error::io(&metrics_path, e))?;
        if best.is_none_or(|b| val_loss < b) {
            best = Some(val_loss);
            best_epoch = epoch;
            let extra = serde_json::json!({ "train": config, "epoch": epoch });
            checkpoint::save_model(&checkpoint_path, model, config.seed, extra)?;
        }
        metrics.push(m);
    }
    Ok(TrainOutputs {
        metrics,
        metrics_path,
        checkpoint_path,
        best_epoch,
    })
}

/// Seeded model initialisation shared by tools and tests.
pub fn init_model(config: crate::model::SeqModelConfig, seed: u64) -> Result<SeqModel> {
    SeqModel::new(config, &mut seeded(seed))
}
