//! Setpoint following by diffusion infilling.
//!
//! After a noisy bang-bang warmup, each control step lays the trace history
//! out as `(setpoint, action, output, line break)` token rows with the
//! current action unknown. The context row that carries the current action
//! (the row predicting the current output) is hidden from the model and
//! resampled by `n_repeat` independent copies; the mean of their dequantised
//! action tokens is applied to the plant for one step.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sim::{chatter_amplitude, BangBang, ControlTrace, ControllerKind, Plant};
use super::system::StateSpace;
use crate::error::{Error, Result};
use crate::frames::Frames;
use crate::model::{Mode, SeqModel};
use crate::rng::derive;
use crate::sequence::{create_sequence_data, ContextRow};
use crate::tokenizer::{action_token, action_value, Token, LINE_BREAK, PAD};

const STEP_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub setpoint: f64,
    pub warmup_steps: usize,
    pub horizon: usize,
    pub n_repeat: usize,
    /// Context rows shown to the model (a multiple of 4 keeps whole steps).
    pub window: usize,
    pub bang_bang_delay: usize,
    pub noise_sigma: f64,
    pub dt: f64,
    pub temperature: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Trailing steps averaged for the terminal error.
    pub tail_steps: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            setpoint: 0.5,
            warmup_steps: 126,
            horizon: 125,
            n_repeat: 8,
            window: 64,
            bang_bang_delay: 2,
            noise_sigma: 0.05,
            dt: 0.05,
            temperature: 1.0,
            u_min: -1.0,
            u_max: 1.0,
            tail_steps: 10,
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps == 0 || self.n_repeat == 0 || self.window < STEP_WIDTH || self.tail_steps == 0 {
            return Err(Error::InvalidArgument(
                "warmup_steps, n_repeat, tail_steps must be positive and window >= 4".into(),
            ));
        }
        if self.tail_steps > self.horizon.max(1) {
            return Err(Error::InvalidArgument("tail_steps exceeds horizon".into()));
        }
        if !(self.dt > 0.0) || !(self.temperature > 0.0) || !(self.u_min < self.u_max) {
            return Err(Error::InvalidArgument("need dt > 0, temperature > 0, u_min < u_max".into()));
        }
        Ok(())
    }
}

/// Token rows for a history whose last action is unknown.
fn history_tokens(trace: &ControlTrace, r: f64, y: f64) -> Vec<Token> {
    let mut toks = Vec::with_capacity((trace.len() + 1) * STEP_WIDTH);
    for k in 0..trace.len() {
        toks.extend([
            action_token(trace.setpoint[k]),
            action_token(trace.action[k]),
            action_token(trace.output[k]),
            LINE_BREAK,
        ]);
    }
    toks.extend([action_token(r), PAD, action_token(y), LINE_BREAK]);
    toks
}

/// One diffusion-chosen action for the step following `trace`.
pub fn diffusion_action(
    model: &SeqModel,
    trace: &ControlTrace,
    r: f64,
    y: f64,
    cfg: &DemoConfig,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    let toks = history_tokens(trace, r, y);
    let steps = toks.len() / STEP_WIDTH;
    let ctx = create_sequence_data(&Frames::from_vec(steps, 1, STEP_WIDTH, toks)?)?;
    let n = ctx.len();
    let lo = n.saturating_sub(cfg.window);
    let rows: Vec<ContextRow> = ctx.contexts[lo..].to_vec();
    // The row whose target is the current output holds the action in its
    // last two slots.
    let hidden = n - 2 - lo;
    let mut contexts = vec![rows; cfg.n_repeat];
    let mut known = vec![vec![true; n - lo]; cfg.n_repeat];
    for k in &mut known {
        k[hidden] = false;
    }
    model.generate_diffusion(&mut contexts, &mut known, cfg.temperature, 1, rng)?;
    let vals: Vec<f64> = contexts
        .iter()
        .filter_map(|c| action_value(c[hidden][5]))
        .collect();
    Ok((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    /// Warmup followed by diffusion control.
    pub diffusion: ControlTrace,
    /// Warmup followed by continued bang-bang control.
    pub bang_bang: ControlTrace,
    /// Mean `|y − r|` over the last `tail_steps` diffusion-controlled steps.
    pub terminal_error: f64,
    /// Half the output range of the bang-bang continuation.
    pub chatter_amplitude: f64,
}

impl DemoOutcome {
    pub fn diffusion_wins(&self) -> bool {
        self.terminal_error < self.chatter_amplitude
    }
}

/// Runs warmup, then both continuations from the same state. Randomness is
/// drawn from streams derived from `seed`.
pub fn diffusion_control_rollout(model: &SeqModel, sys: &StateSpace, cfg: &DemoConfig, seed: u64) -> Result<DemoOutcome> {
    if model.config.mode != Mode::Diffusion {
        return Err(Error::WrongMode("control rollout needs a diffusion model"));
    }
    cfg.validate()?;
    let r = cfg.setpoint;
    let mut noise_rng = derive(seed, 0);
    let mut model_rng = derive(seed, 1);
    let mut plant = Plant::new(sys.clone(), DVector::zeros(sys.order()), cfg.dt)?;
    let mut bb = BangBang::new(cfg.u_min, cfg.u_max, cfg.bang_bang_delay, cfg.noise_sigma)?;
    let mut warm = ControlTrace::new(cfg.dt);
    warm.delay = cfg.bang_bang_delay;
    warm.noise_sigma = cfg.noise_sigma;
    for _ in 0..cfg.warmup_steps {
        let y = plant.output(0.0);
        let u = bb.act(r, y, &mut noise_rng);
        warm.push(r, u, y, ControllerKind::BangBang);
        plant.step(u);
    }

    let mut base = warm.clone();
    {
        let mut plant = plant.clone();
        let mut bb = bb.clone();
        let mut rng = noise_rng.clone();
        for _ in 0..cfg.horizon {
            let y = plant.output(0.0);
            let u = bb.act(r, y, &mut rng);
            base.push(r, u, y, ControllerKind::BangBang);
            plant.step(u);
        }
    }

    let mut trace = warm;
    let mut u_prev = *trace.action.last().expect("warmup is non-empty");
    for _ in 0..cfg.horizon {
        let y = plant.output(0.0);
        let u = diffusion_action(model, &trace, r, y, cfg, &mut model_rng)?
            .unwrap_or(u_prev)
            .clamp(cfg.u_min, cfg.u_max);
        trace.push(r, u, y, ControllerKind::Diffusion);
        plant.step(u);
        u_prev = u;
    }

    let tail = &trace.output[trace.len() - cfg.tail_steps.min(cfg.horizon)..];
    let terminal_error = if cfg.horizon == 0 {
        f64::NAN
    } else {
        tail.iter().map(|y| (y - r).abs()).sum::<f64>() / tail.len() as f64
    };
    let chatter = chatter_amplitude(&base.output[cfg.warmup_steps..]);
    Ok(DemoOutcome {
        diffusion: trace,
        bang_bang: base,
        terminal_error,
        chatter_amplitude: chatter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SeqModelConfig;
    use crate::rng::seeded;

    fn tiny(mode: Mode) -> SeqModel {
        SeqModel::new(
            SeqModelConfig {
                mode,
                embed_dim: 12,
                hidden: 6,
                layers: 1,
                bidirectional: true,
                diffusion_steps: 5,
                ..Default::default()
            },
            &mut seeded(0),
        )
        .unwrap()
    }

    fn quick() -> DemoConfig {
        DemoConfig {
            warmup_steps: 10,
            horizon: 6,
            n_repeat: 1,
            window: 16,
            tail_steps: 3,
            ..Default::default()
        }
    }

    #[test]
    fn hidden_row_carries_the_action() {
        let mut t = ControlTrace::new(0.05);
        t.push(0.5, 0.25, 0.1, ControllerKind::BangBang);
        let toks = history_tokens(&t, 0.5, 0.2);
        let ctx = create_sequence_data(&Frames::from_vec(2, 1, 4, toks.clone()).unwrap()).unwrap();
        // Row for y_1 sees u_1 (unknown: pad) in its last two slots; the
        // same row of step 0 sees u_0.
        assert_eq!(ctx.contexts[2][4], action_token(0.25));
        assert_eq!(ctx.contexts[2][5], action_token(0.25));
        assert_eq!(ctx.contexts[6][4], PAD);
        assert_eq!(ctx.contexts[6][5], PAD);
        assert_eq!(ctx.targets[6], action_token(0.2));
    }

    #[test]
    fn runs_with_single_repeat_and_replays() {
        let m = tiny(Mode::Diffusion);
        let sys = StateSpace::scalar(-1.0, 1.0, 1.0);
        let a = diffusion_control_rollout(&m, &sys, &quick(), 3).unwrap();
        assert_eq!(a.diffusion.len(), 16);
        assert_eq!(a.bang_bang.len(), 16);
        assert_eq!(a.diffusion.output[..10], a.bang_bang.output[..10]);
        assert!(a.diffusion.controller[10..].iter().all(|&k| k == ControllerKind::Diffusion));
        assert!(a.terminal_error.is_finite());
        let b = diffusion_control_rollout(&m, &sys, &quick(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_diffusion_models() {
        let m = tiny(Mode::Predictive);
        let sys = StateSpace::scalar(-1.0, 1.0, 1.0);
        assert!(matches!(
            diffusion_control_rollout(&m, &sys, &quick(), 0),
            Err(Error::WrongMode(_))
        ));
    }
}
