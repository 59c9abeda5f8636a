//! Second-order low-pass `H(s) = K ω_n² / (s² + 2ζω_n s + ω_n²)`,
//! discretised with the bilinear transform prewarped at `ω_n`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a[0]` is normalised to 1.
    pub a: [f64; 3],
}

impl Biquad {
    pub fn second_order(gain: f64, omega_n: f64, zeta: f64, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && omega_n > 0.0 && zeta > 0.0) {
            return Err(Error::InvalidArgument("sample_rate, omega_n and zeta must be positive".into()));
        }
        if omega_n >= std::f64::consts::PI * sample_rate {
            return Err(Error::InvalidArgument("omega_n must lie below the Nyquist frequency".into()));
        }
        let w = omega_n;
        let c = w / (w / (2.0 * sample_rate)).tan();
        let a0 = c * c + 2.0 * zeta * w * c + w * w;
        let a1 = -2.0 * c * c + 2.0 * w * w;
        let a2 = c * c - 2.0 * zeta * w * c + w * w;
        let g = gain * w * w / a0;
        Ok(Self {
            b: [g, 2.0 * g, g],
            a: [1.0, a1 / a0, a2 / a0],
        })
    }

    /// Direct form I from rest.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[1] * y1 - self.a[2] * y2;
                (x2, x1, y2, y1) = (x1, x0, y1, y0);
                y0
            })
            .collect()
    }
}

pub fn gameboy_filter(samples: &[f64], gain: f64, omega_n: f64, zeta: f64, sample_rate: f64) -> Result<Vec<f64>> {
    Ok(Biquad::second_order(gain, omega_n, zeta, sample_rate)?.apply(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dc_gain() {
        let y = gameboy_filter(&vec![0.3; 4000], 2.0, 2.0 * PI * 50.0, 0.7, 8000.0).unwrap();
        assert!((y.last().unwrap() - 0.6).abs() < 1e-3);
    }

    #[test]
    fn resonance_gain_is_one_over_two_zeta() {
        let fs = 8000.0;
        let w = 2.0 * PI * 200.0;
        let n = 16000;
        let x: Vec<f64> = (0..n).map(|k| (w * k as f64 / fs).sin()).collect();
        let y = gameboy_filter(&x, 1.0, w, 0.5, fs).unwrap();
        let peak = y[n / 2..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.02, "{peak}");
    }

    #[test]
    fn impulse_energy_is_finite() {
        let mut x = vec![0.0; 20000];
        x[0] = 1.0;
        let y = gameboy_filter(&x, 1.0, 2.0 * PI * 100.0, 0.1, 8000.0).unwrap();
        let energy: f64 = y.iter().map(|v| v * v).sum();
        assert!(energy.is_finite() && energy > 0.0);
        assert!(y[19000..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gameboy_filter(&[1.0], 1.0, 0.0, 0.5, 8000.0).is_err());
        assert!(gameboy_filter(&[1.0], 1.0, 1.0, 0.0, 8000.0).is_err());
        assert!(gameboy_filter(&[1.0], 1.0, 1.0e6, 0.5, 8000.0).is_err());
    }
}
