//! Fixed-step simulation with zero-order hold, LQR and bang-bang
//! controllers, and control traces.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lqr::LqrSolution;
use super::system::StateSpace;
use crate::error::{Error, Result};
use crate::rng::normal;
use crate::tokenizer::{Token, TokenStream, Tokenizer};

/// Classical RK4 step of `ẋ = f(x)`.
pub fn rk4_step(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (dt / 2.0)));
    let k3 = f(&(x + &k2 * (dt / 2.0)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// A plant advanced in steps of `dt` with the input held over each step.
#[derive(Debug, Clone)]
pub struct Plant {
    pub sys: StateSpace,
    pub x: DVector<f64>,
    pub dt: f64,
}

impl Plant {
    pub fn new(sys: StateSpace, x0: DVector<f64>, dt: f64) -> Result<Self> {
        if x0.len() != sys.order() {
            return Err(Error::Shape(format!("x0 has {} entries for order {}", x0.len(), sys.order())));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        Ok(Self { sys, x: x0, dt })
    }

    /// First output channel for input `u` (SISO plants only use `D` here).
    pub fn output(&self, u: f64) -> f64 {
        (&self.sys.c * &self.x)[0] + self.sys.d[(0, 0)] * u
    }

    pub fn step(&mut self, u: f64) {
        let bu = self.sys.b.column(0) * u;
        let a = &self.sys.a;
        self.x = rk4_step(|x| a * x + &bu, &self.x, self.dt);
    }
}

/// Steady state `(x_ss, u_ss)` with `A x + B u = 0`, `C x + D u = r`, via the
/// pseudo-inverse of the stacked system.
pub fn steady_state(sys: &StateSpace, r: f64) -> Result<(DVector<f64>, f64)> {
    let n = sys.order();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    m.view_mut((0, n), (n, 1)).copy_from(&sys.b.columns(0, 1));
    m.view_mut((n, 0), (1, n)).copy_from(&sys.c.rows(0, 1));
    m[(n, n)] = sys.d[(0, 0)];
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = r;
    let sol = m
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::NoConvergence(format!("steady state: {e}")))?
        * rhs;
    Ok((sol.rows(0, n).into_owned(), sol[n]))
}

pub struct LqrController {
    k: DMatrix<f64>,
    x_ss: DVector<f64>,
    u_ss: f64,
}

impl LqrController {
    pub fn new(sys: &StateSpace, lqr: &LqrSolution, r: f64) -> Result<Self> {
        let (x_ss, u_ss) = steady_state(sys, r)?;
        Ok(Self {
            k: lqr.k.clone(),
            x_ss,
            u_ss,
        })
    }

    pub fn act(&self, x: &DVector<f64>) -> f64 {
        -(&self.k * (x - &self.x_ss))[0] + self.u_ss
    }
}

/// Two-level switching on the delayed, noise-corrupted error `r − y + n`.
/// A zero error keeps the previous input; before the delay has elapsed the
/// held input is 0.
#[derive(Debug, Clone)]
pub struct BangBang {
    pub u_min: f64,
    pub u_max: f64,
    pub delay: usize,
    pub noise_sigma: f64,
    errors: Vec<f64>,
    held: f64,
}

impl BangBang {
    pub fn new(u_min: f64, u_max: f64, delay: usize, noise_sigma: f64) -> Result<Self> {
        if !(u_min < u_max) || !(noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("need u_min < u_max and sigma >= 0".into()));
        }
        Ok(Self {
            u_min,
            u_max,
            delay,
            noise_sigma,
            errors: Vec::new(),
            held: 0.0,
        })
    }

    pub fn act(&mut self, r: f64, y: f64, rng: &mut impl Rng) -> f64 {
        let noise = if self.noise_sigma > 0.0 {
            self.noise_sigma * normal(rng)
        } else {
            0.0
        };
        self.errors.push(r - y + noise);
        let k = self.errors.len() - 1;
        if k >= self.delay {
            let e = self.errors[k - self.delay];
            if e > 0.0 {
                self.held = self.u_max;
            } else if e < 0.0 {
                self.held = self.u_min;
            }
        }
        self.held
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Lqr,
    BangBang,
    Diffusion,
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::Lqr => "lqr",
            ControllerKind::BangBang => "bang_bang",
            ControllerKind::Diffusion => "diffusion",
        })
    }
}

/// Sampled closed-loop signals. At step `k` the output `y[k]` is measured
/// first, then `u[k]` is held over `[k·dt, (k+1)·dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTrace {
    pub dt: f64,
    pub setpoint: Vec<f64>,
    pub action: Vec<f64>,
    pub output: Vec<f64>,
    pub controller: Vec<ControllerKind>,
    pub delay: usize,
    pub noise_sigma: f64,
}

pub const TRACE_CSV_HEADER: &str = "t,setpoint,output,action,controller";

impl ControlTrace {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            setpoint: Vec::new(),
            action: Vec::new(),
            output: Vec::new(),
            controller: Vec::new(),
            delay: 0,
            noise_sigma: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }

    pub fn push(&mut self, r: f64, u: f64, y: f64, kind: ControllerKind) {
        self.setpoint.push(r);
        self.action.push(u);
        self.output.push(y);
        self.controller.push(kind);
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt).collect()
    }

    /// Three-channel action stream: per step `(setpoint, action, output, line break)`.
    pub fn to_tokens(&self, tk: &Tokenizer) -> Result<TokenStream> {
        tk.encode_action_channels(&[self.setpoint.clone(), self.action.clone(), self.output.clone()])
    }

    pub fn write_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                k as f64 * self.dt,
                self.setpoint[k],
                self.output[k],
                self.action[k],
                self.controller[k]
            )?;
        }
        Ok(())
    }
}

/// Decodes a three-channel trace stream back to `(setpoint, action, output)`
/// bin centres.
pub fn trace_values(tk: &Tokenizer, stream: &TokenStream) -> Result<[Vec<f64>; 3]> {
    let decoded = tk.decode(stream)?;
    let audio = decoded
        .audio()
        .next()
        .ok_or_else(|| Error::InvalidArgument("no action segment".into()))?;
    if audio.len() != 3 {
        return Err(Error::Shape(format!("{} channels, expected 3", audio.len())));
    }
    Ok([audio[0].clone(), audio[1].clone(), audio[2].clone()])
}

pub fn lqr_rollout(sys: &StateSpace, lqr: &LqrSolution, x0: &DVector<f64>, r: f64, dt: f64, steps: usize) -> Result<ControlTrace> {
    let ctl = LqrController::new(sys, lqr, r)?;
    let mut plant = Plant::new(sys.clone(), x0.clone(), dt)?;
    let mut trace = ControlTrace::new(dt);
    for _ in 0..steps {
        let u = ctl.act(&plant.x);
        trace.push(r, u, plant.output(u), ControllerKind::Lqr);
        plant.step(u);
    }
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
pub fn bang_bang_rollout(
    sys: &StateSpace,
    x0: &DVector<f64>,
    r: f64,
    u_min: f64,
    u_max: f64,
    delay: usize,
    noise_sigma: f64,
    dt: f64,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<ControlTrace> {
    let mut ctl = BangBang::new(u_min, u_max, delay, noise_sigma)?;
    let mut plant = Plant::new(sys.clone(), x0.clone(), dt)?;
    let mut trace = ControlTrace::new(dt);
    trace.delay = delay;
    trace.noise_sigma = noise_sigma;
    for _ in 0..steps {
        let y = plant.output(0.0);
        let u = ctl.act(r, y, rng);
        trace.push(r, u, y, ControllerKind::BangBang);
        plant.step(u);
    }
    Ok(trace)
}

/// Bang-bang for the first `warmup` steps, then LQR from wherever the plant
/// ended up. During the LQR phase the plant input is disturbed by Gaussian
/// noise of standard deviation `input_noise`; the trace records the commanded
/// action.
#[allow(clippy::too_many_arguments)]
pub fn handover_rollout(
    sys: &StateSpace,
    lqr: &LqrSolution,
    x0: &DVector<f64>,
    r: f64,
    mut bang_bang: BangBang,
    warmup: usize,
    input_noise: f64,
    dt: f64,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<ControlTrace> {
    let ctl = LqrController::new(sys, lqr, r)?;
    let mut plant = Plant::new(sys.clone(), x0.clone(), dt)?;
    let mut trace = ControlTrace::new(dt);
    trace.delay = bang_bang.delay;
    trace.noise_sigma = bang_bang.noise_sigma;
    for k in 0..steps {
        let (u, y, kind) = if k < warmup {
            let y = plant.output(0.0);
            (bang_bang.act(r, y, rng), y, ControllerKind::BangBang)
        } else {
            let u = ctl.act(&plant.x);
            (u, plant.output(u), ControllerKind::Lqr)
        };
        trace.push(r, u, y, kind);
        let w = if kind == ControllerKind::Lqr && input_noise > 0.0 {
            input_noise * normal(rng)
        } else {
            0.0
        };
        plant.step(u + w);
    }
    Ok(trace)
}

/// `∫ (xᵀQx + uᵀRu) dt` by the rectangle rule over a state/input history.
pub fn quadratic_cost(xs: &[DVector<f64>], us: &[f64], q: &DMatrix<f64>, r: f64, dt: f64) -> f64 {
    xs.iter()
        .zip(us)
        .map(|(x, &u)| (x.transpose() * q * x)[0] + r * u * u)
        .sum::<f64>()
        * dt
}

/// Half the peak-to-peak output range over `ys`.
pub fn chatter_amplitude(ys: &[f64]) -> f64 {
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    if ys.is_empty() {
        0.0
    } else {
        (hi - lo) / 2.0
    }
}

/// Trace tokens restricted to action ids and line breaks, used by tests.
pub fn is_trace_token(t: Token) -> bool {
    t == crate::tokenizer::LINE_BREAK || crate::tokenizer::VocabLayout.is_action(t)
}
