//! Continuous-time LTI systems and their Kalman conditions.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::normal;

pub const MAX_REJECTIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Shape(format!("A must be square and non-empty, got {:?}", a.shape())));
        }
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Shape(format!(
                "inconsistent shapes A{:?} B{:?} C{:?} D{:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// `ẋ = a x + b u`, `y = c x`.
    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self {
            a: m(a),
            b: m(b),
            c: m(c),
            d: m(0.0),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_stable(&self) -> bool {
        is_hurwitz(&self.a)
    }

    pub fn is_controllable(&self) -> bool {
        rank(&controllability_matrix(&self.a, &self.b)) == self.order()
    }

    pub fn is_observable(&self) -> bool {
        rank(&observability_matrix(&self.a, &self.c)) == self.order()
    }

    /// All three Kalman conditions.
    pub fn is_admissible(&self) -> bool {
        self.is_stable() && self.is_controllable() && self.is_observable()
    }
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.clone().complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// `[B  AB  …  A^{n−1}B]`
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// `[C; CA; …; CA^{n−1}]`
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let p = c.nrows();
    let mut out = DMatrix::zeros(n * p, n);
    let mut blk = c.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&blk);
        blk = blk * a;
    }
    out
}

/// Numerical rank with tolerance `max(rows, cols) · σ_max · 1e−12`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * smax * 1e-12;
    sv.iter().filter(|&&s| s > tol).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemRanges {
    pub eigenvalues_of_a: [f64; 2],
    pub elements_of_b: [f64; 2],
    pub elements_of_c: [f64; 2],
}

impl Default for SystemRanges {
    fn default() -> Self {
        Self {
            eigenvalues_of_a: [-5.0, -0.1],
            elements_of_b: [-1.0, 1.0],
            elements_of_c: [0.0, 1.0],
        }
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
    g.qr().q()
}

/// Draws a single-input single-output system of the given order whose `A`
/// has real eigenvalues in the configured range, `A = V Λ V⁻¹` with
/// `cond(V) ≤ 3`. Systems failing a Kalman condition are redrawn.
pub fn sample_system(rng: &mut impl Rng, order: usize, ranges: &SystemRanges) -> Result<StateSpace> {
    if !(1..=5).contains(&order) {
        return Err(Error::InvalidArgument(format!("system order {order} outside 1..=5")));
    }
    let draw = |rng: &mut dyn rand::RngCore| -> StateSpace {
        let mut rng = rng;
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(order, |_, _| {
            uniform(&mut rng, ranges.eigenvalues_of_a)
        }));
        let q1 = random_orthogonal(&mut rng, order);
        let q2 = random_orthogonal(&mut rng, order);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(order, |_, _| rng.random_range(1.0..3.0)));
        let v = &q1 * s * q2.transpose();
        let v_inv = v.clone().try_inverse().expect("singular values bounded below by 1");
        let a = &v * lambda * v_inv;
        let b = DMatrix::from_fn(order, 1, |_, _| uniform(&mut rng, ranges.elements_of_b));
        let c = DMatrix::from_fn(1, order, |_, _| uniform(&mut rng, ranges.elements_of_c));
        StateSpace {
            a,
            b,
            c,
            d: DMatrix::zeros(1, 1),
        }
    };
    sample_with(rng, draw)
}

/// Rejection loop shared by [`sample_system`] and tests: gives up after
/// [`MAX_REJECTIONS`] consecutive inadmissible draws.
pub fn sample_with<R: Rng>(
    rng: &mut R,
    mut draw: impl FnMut(&mut dyn rand::RngCore) -> StateSpace,
) -> Result<StateSpace> {
    for _ in 0..MAX_REJECTIONS {
        let sys = draw(rng);
        if sys.is_admissible() {
            return Ok(sys);
        }
    }
    Err(Error::SamplingFailed(MAX_REJECTIONS))
}
