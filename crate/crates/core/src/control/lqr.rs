//! Continuous algebraic Riccati equation and LQR gains.
//!
//! Solved by Newton–Kleinman iteration: starting from a stabilising `K₀`,
//! each step solves the Lyapunov equation
//! `(A − BKₖ)ᵀP + P(A − BKₖ) + Q + KₖᵀRKₖ = 0` and sets `Kₖ₊₁ = R⁻¹BᵀP`.

use nalgebra::DMatrix;

use super::system::is_hurwitz;
use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Solves `F X + X Gᵀ = H` through the Kronecker system
/// `(I ⊗ F + G ⊗ I) vec X = vec H`.
fn sylvester(f: &DMatrix<f64>, g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let big = eye.kronecker(f) + g.kronecker(&eye);
    let rhs = DMatrix::from_column_slice(n * n, 1, h.as_slice());
    let x = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoConvergence("singular Lyapunov operator".into()))?;
    Ok(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// `AᵀP + PA + M = 0` for symmetric `M`.
pub fn solve_lyapunov(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = sylvester(&a.transpose(), &a.transpose(), &(-m))?;
    Ok((&p + p.transpose()) * 0.5)
}

pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("R is singular".into()))?;
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    Ok(res.norm())
}

fn initial_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if is_hurwitz(a) {
        return Ok(DMatrix::zeros(b.ncols(), n));
    }
    // Shifted Lyapunov construction: with β > ‖A‖, A + βI is anti-stable and
    // (A + βI)Z + Z(A + βI)ᵀ = 2BBᵀ has a positive definite solution, so
    // K = BᵀZ⁻¹ places A − BK in the left half-plane.
    let beta = a.norm() + 1.0;
    let shifted = a + DMatrix::identity(n, n) * beta;
    let z = sylvester(&shifted, &shifted, &(b * b.transpose() * 2.0))?;
    let z = (&z + z.transpose()) * 0.5;
    let z_inv = z
        .try_inverse()
        .ok_or_else(|| Error::NoConvergence("system is not stabilisable".into()))?;
    Ok(b.transpose() * z_inv)
}

pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<LqrSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Shape("inconsistent CARE operands".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("R is singular".into()))?;
    let mut k = initial_gain(a, b)?;
    if !is_hurwitz(&(a - b * &k)) {
        return Err(Error::NoConvergence("could not find a stabilising initial gain".into()));
    }
    let mut p = DMatrix::<f64>::zeros(n, n);
    for it in 0..MAX_ITER {
        let acl = a - b * &k;
        let rhs = q + k.transpose() * r * &k;
        let next = solve_lyapunov(&acl, &rhs)?;
        let delta = (&next - &p).norm();
        p = next;
        k = &r_inv * b.transpose() * &p;
        if it > 0 && delta <= 1e-14 * (1.0 + p.norm()) {
            break;
        }
    }
    let residual = care_residual(a, b, q, r, &p)?;
    if !(residual <= 1e-8 * (1.0 + p.norm())) {
        return Err(Error::NoConvergence(format!("CARE residual {residual:e}")));
    }
    if !is_hurwitz(&(a - b * &k)) {
        return Err(Error::NoConvergence("closed loop is not stable".into()));
    }
    Ok(LqrSolution {
        p,
        k,
        q: q.clone(),
        r: r.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::system::{sample_system, SystemRanges};
    use crate::rng::seeded;
    use rand::Rng;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_closed_form() {
        let sol = solve_care(&s(-1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        let expected = 2f64.sqrt() - 1.0;
        assert!((sol.p[(0, 0)] - expected).abs() < 1e-12);
        assert!((sol.k[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn random_scalar_closed_forms() {
        let mut rng = seeded(2);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-5.0..-0.01);
            let b: f64 = rng.random_range(0.1..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let q: f64 = rng.random_range(0.01..5.0);
            let r: f64 = rng.random_range(0.01..5.0);
            // Positive root of −(b²/r)P² + 2aP + q = 0.
            let k2 = b * b / r;
            let p = (a + (a * a + k2 * q).sqrt()) / k2;
            let sol = solve_care(&s(a), &s(b), &s(q), &s(r)).unwrap();
            assert!((sol.p[(0, 0)] - p).abs() < 1e-9, "{a} {b} {q} {r}");
        }
    }

    #[test]
    fn zero_cost_gives_zero_gain() {
        let sol = solve_care(&s(-2.0), &s(1.0), &s(0.0), &s(1.0)).unwrap();
        assert_eq!(sol.p[(0, 0)], 0.0);
        assert_eq!(sol.k[(0, 0)], 0.0);
    }

    #[test]
    fn unstable_plants_are_stabilised() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let sol = solve_care(&a, &b, &q, &s(0.1)).unwrap();
        assert!(is_hurwitz(&(&a - &b * &sol.k)));
        assert!(care_residual(&a, &b, &q, &s(0.1), &sol.p).unwrap() < 1e-8);
        let sol = solve_care(&s(0.5), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        let expected = 0.5 + (0.25f64 + 1.0).sqrt();
        assert!((sol.p[(0, 0)] - expected).abs() < 1e-10);
    }

    #[test]
    fn residual_contract_on_sampled_systems() {
        let mut rng = seeded(3);
        let ranges = SystemRanges::default();
        for i in 0..40 {
            let sys = sample_system(&mut rng, 1 + i % 5, &ranges).unwrap();
            let q = sys.c.transpose() * &sys.c;
            let r = s(0.1);
            let sol = solve_care(&sys.a, &sys.b, &q, &r).unwrap();
            let res = care_residual(&sys.a, &sys.b, &q, &r, &sol.p).unwrap();
            assert!(res <= 1e-8 * (1.0 + sol.p.norm()));
            assert!(is_hurwitz(&(&sys.a - &sys.b * &sol.k)));
            assert!((&sol.p - sol.p.transpose()).norm() < 1e-12);
            assert!(sol.p.clone().symmetric_eigenvalues().iter().all(|&l| l > -1e-9));
        }
    }
}
