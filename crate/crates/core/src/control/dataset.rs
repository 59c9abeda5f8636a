//! Optimal-control corpus: sampled plants driven by LQR or bang-bang
//! controllers from random initial conditions towards random setpoints.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lqr::solve_care;
use super::sim::{bang_bang_rollout, handover_rollout, BangBang, ControlTrace};
use super::system::{sample_system, StateSpace, SystemRanges};
use crate::error::{Error, Result};
use crate::rng::derive;
use crate::tokenizer::{TokenStream, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub system_order: [usize; 2],
    pub eigenvalues_of_a: [f64; 2],
    pub elements_of_b: [f64; 2],
    pub elements_of_c: [f64; 2],
    pub initial_conditions: [f64; 2],
    pub setpoints: [f64; 2],
    pub bang_bang_delay: [usize; 2],
    pub noise_standard_deviation: [f64; 2],
    pub systems: usize,
    pub pairs_per_system: usize,
    pub lqr_fraction: f64,
    /// LQR traces open with this many bang-bang steps (inclusive range).
    pub lqr_warmup_steps: [usize; 2],
    /// Standard deviation of the input disturbance during LQR control.
    pub lqr_input_noise: f64,
    pub dt: f64,
    pub steps: usize,
    pub r_weight: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            system_order: [1, 5],
            eigenvalues_of_a: [-5.0, -0.1],
            elements_of_b: [-1.0, 1.0],
            elements_of_c: [0.0, 1.0],
            initial_conditions: [-1.0, 1.0],
            setpoints: [-1.0, 1.0],
            bang_bang_delay: [0, 5],
            noise_standard_deviation: [0.0, 0.1],
            systems: 10,
            pairs_per_system: 4,
            lqr_fraction: 0.5,
            lqr_warmup_steps: [0, 0],
            lqr_input_noise: 0.0,
            dt: 0.05,
            steps: 200,
            r_weight: 0.1,
            u_min: -1.0,
            u_max: 1.0,
        }
    }
}

fn draw(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        let [o_lo, o_hi] = self.system_order;
        if o_lo == 0 || o_lo > o_hi || o_hi > 5 {
            return bad("system_order must satisfy 1 <= min <= max <= 5");
        }
        for (name, [lo, hi]) in [
            ("eigenvalues_of_a", self.eigenvalues_of_a),
            ("elements_of_b", self.elements_of_b),
            ("elements_of_c", self.elements_of_c),
            ("initial_conditions", self.initial_conditions),
            ("setpoints", self.setpoints),
            ("noise_standard_deviation", self.noise_standard_deviation),
        ] {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!("{name}: min exceeds max")));
            }
        }
        if self.eigenvalues_of_a[1] >= 0.0 {
            return bad("eigenvalues_of_a must be negative");
        }
        if self.bang_bang_delay[0] > self.bang_bang_delay[1] {
            return bad("bang_bang_delay: min exceeds max");
        }
        if self.lqr_warmup_steps[0] > self.lqr_warmup_steps[1] {
            return bad("lqr_warmup_steps: min exceeds max");
        }
        if self.noise_standard_deviation[0] < 0.0 {
            return bad("noise_standard_deviation must be non-negative");
        }
        if !(self.lqr_input_noise >= 0.0) {
            return bad("lqr_input_noise must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.lqr_fraction) {
            return bad("lqr_fraction must lie in [0, 1]");
        }
        if !(self.dt > 0.0) || !(self.r_weight > 0.0) || !(self.u_min < self.u_max) {
            return bad("need dt > 0, r_weight > 0 and u_min < u_max");
        }
        Ok(())
    }

    pub fn ranges(&self) -> SystemRanges {
        SystemRanges {
            eigenvalues_of_a: self.eigenvalues_of_a,
            elements_of_b: self.elements_of_b,
            elements_of_c: self.elements_of_c,
        }
    }

    pub fn trace_count(&self) -> usize {
        self.systems * self.pairs_per_system
    }
}

/// One trace of the corpus. Plants come from the per-system stream
/// `derive(seed, s)` and controllers/initial conditions from the per-trace
/// stream `derive(!seed, i)`, so any trace can be rebuilt on its own.
pub fn generate_trace(config: &ControlConfig, seed: u64, index: usize) -> Result<(StateSpace, ControlTrace)> {
    let s = index / config.pairs_per_system.max(1);
    let mut sys_rng = derive(seed, s as u64);
    let order = sys_rng.random_range(config.system_order[0]..=config.system_order[1]);
    let sys = sample_system(&mut sys_rng, order, &config.ranges())?;
    let mut rng = derive(!seed, index as u64);
    let x0 = DVector::from_fn(order, |_, _| draw(&mut rng, config.initial_conditions));
    let r = draw(&mut rng, config.setpoints);
    let use_lqr = rng.random::<f64>() < config.lqr_fraction;
    let delay = rng.random_range(config.bang_bang_delay[0]..=config.bang_bang_delay[1]);
    let sigma = draw(&mut rng, config.noise_standard_deviation);
    let trace = if use_lqr {
        let q = sys.c.transpose() * &sys.c;
        let rw = DMatrix::identity(sys.inputs(), sys.inputs()) * config.r_weight;
        let lqr = solve_care(&sys.a, &sys.b, &q, &rw)?;
        let warmup = rng.random_range(config.lqr_warmup_steps[0]..=config.lqr_warmup_steps[1]);
        let bb = BangBang::new(config.u_min, config.u_max, delay, sigma)?;
        handover_rollout(&sys, &lqr, &x0, r, bb, warmup, config.lqr_input_noise, config.dt, config.steps, &mut rng)?
    } else {
        bang_bang_rollout(&sys, &x0, r, config.u_min, config.u_max, delay, sigma, config.dt, config.steps, &mut rng)?
    };
    Ok((sys, trace))
}

pub fn build_control_traces(config: &ControlConfig, seed: u64) -> Result<Vec<ControlTrace>> {
    config.validate()?;
    (0..config.trace_count())
        .map(|i| generate_trace(config, seed, i).map(|(_, t)| t))
        .collect()
}

/// Token records of the corpus, one per trace. Empty traces are skipped.
pub fn build_control_dataset(config: &ControlConfig, seed: u64) -> Result<Vec<TokenStream>> {
    let tk = Tokenizer::default();
    build_control_traces(config, seed)?
        .iter()
        .filter(|t| !t.is_empty())
        .map(|t| t.to_tokens(&tk))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::sim::is_trace_token;
    use crate::pxtk;

    fn small() -> ControlConfig {
        ControlConfig {
            systems: 3,
            pairs_per_system: 2,
            steps: 40,
            ..Default::default()
        }
    }

    #[test]
    fn empty_config_gives_empty_corpus() {
        let cfg = ControlConfig {
            systems: 0,
            ..Default::default()
        };
        let recs = build_control_dataset(&cfg, 1).unwrap();
        assert!(recs.is_empty());
        assert_eq!(pxtk::encode(&recs).unwrap(), b"PXTK\x01\x00\x00\x00\x00");
    }

    #[test]
    fn corpus_tokens_are_trace_tokens() {
        let recs = build_control_dataset(&small(), 7).unwrap();
        assert_eq!(recs.len(), 6);
        for r in &recs {
            assert!(r.tokens.iter().all(|&t| is_trace_token(t)));
            r.validate().unwrap();
        }
        assert_eq!(recs, build_control_dataset(&small(), 7).unwrap());
        assert_ne!(recs, build_control_dataset(&small(), 8).unwrap());
    }

    #[test]
    fn traces_can_be_rebuilt_individually() {
        let cfg = small();
        let all = build_control_traces(&cfg, 3).unwrap();
        let (_, t4) = generate_trace(&cfg, 3, 4).unwrap();
        assert_eq!(all[4], t4);
    }

    #[test]
    fn controller_mix_follows_fraction() {
        let mut cfg = small();
        cfg.lqr_fraction = 1.0;
        let t = build_control_traces(&cfg, 1).unwrap();
        assert!(t.iter().all(|t| t.controller[0] == crate::control::sim::ControllerKind::Lqr));
        cfg.lqr_fraction = 0.0;
        let t = build_control_traces(&cfg, 1).unwrap();
        assert!(t.iter().all(|t| t.controller[0] == crate::control::sim::ControllerKind::BangBang));
    }

    #[test]
    fn config_json_uses_table_names() {
        let cfg: ControlConfig =
            serde_json::from_str(r#"{"system_order": [1, 1], "bang_bang_delay": [2, 2], "noise_standard_deviation": [0.05, 0.05]}"#)
                .unwrap();
        assert_eq!(cfg.system_order, [1, 1]);
        assert!(cfg.validate().is_ok());
        assert!(serde_json::from_str::<ControlConfig>(r#"{"bogus": 1}"#).is_err());
        let bad = ControlConfig {
            system_order: [0, 3],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
