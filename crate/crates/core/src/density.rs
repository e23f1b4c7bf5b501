//! Truncated Fourier density estimates on the circle and the 2-torus.
//!
//! Densities are relative to the uniform measure, so the constant mode is 1.
//! If the plain truncated series dips to zero or below on the check grid, the
//! estimate falls back to Fejér (Cesàro) weights, whose kernel is nonnegative.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DENSITY_FLOOR: f64 = 1e-6;
pub const DENSITY_CEIL: f64 = 1e6;
const CHECK_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierDensity {
    /// Highest mode in the first (exit-angle) variable.
    pub kmax: usize,
    /// Highest mode in the second (frame-angle) variable; 0 for circle densities.
    pub lmax: usize,
    /// Row-major over `k ∈ −kmax..=kmax`, `l ∈ −lmax..=lmax`.
    coeffs: Vec<Complex64>,
    pub fejer: bool,
    pub samples: usize,
}

fn powers(theta: f64, n: usize) -> Vec<Complex64> {
    let e = Complex64::from_polar(1.0, theta);
    let mut out = Vec::with_capacity(2 * n + 1);
    let mut pos = vec![Complex64::new(1.0, 0.0); n + 1];
    for j in 1..=n {
        pos[j] = pos[j - 1] * e;
    }
    for j in (1..=n).rev() {
        out.push(pos[j].conj());
    }
    out.extend_from_slice(&pos);
    out
}

impl FourierDensity {
    /// Fits a density on the torus from `(ψ, φ)` samples.
    pub fn fit_torus(samples: &[(f64, f64)], kmax: usize, lmax: usize) -> Self {
        let (nk, nl) = (2 * kmax + 1, 2 * lmax + 1);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); nk * nl];
        for &(psi, phi) in samples {
            let (pk, pl) = (powers(-psi, kmax), powers(-phi, lmax));
            for (i, a) in pk.iter().enumerate() {
                for (j, b) in pl.iter().enumerate() {
                    coeffs[i * nl + j] += a * b;
                }
            }
        }
        let n = samples.len().max(1) as f64;
        coeffs.iter_mut().for_each(|c| *c /= n);
        let mut fit = FourierDensity { kmax, lmax, coeffs, fejer: false, samples: samples.len() };
        if fit.grid_extrema().0 <= 0.0 {
            fit.apply_fejer();
        }
        fit
    }

    pub fn fit_circle(samples: &[f64], kmax: usize) -> Self {
        let pairs: Vec<(f64, f64)> = samples.iter().map(|&a| (a, 0.0)).collect();
        Self::fit_torus(&pairs, kmax, 0)
    }

    fn apply_fejer(&mut self) {
        let nl = 2 * self.lmax + 1;
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            let k = (idx / nl) as f64 - self.kmax as f64;
            let l = (idx % nl) as f64 - self.lmax as f64;
            let wk = 1.0 - k.abs() / (self.kmax as f64 + 1.0);
            let wl = 1.0 - l.abs() / (self.lmax as f64 + 1.0);
            *c *= wk * wl;
        }
        self.fejer = true;
    }

    /// Unclamped series value.
    pub fn raw(&self, psi: f64, phi: f64) -> f64 {
        let (pk, pl) = (powers(psi, self.kmax), powers(phi, self.lmax));
        let nl = pl.len();
        let mut acc = 0.0;
        for (i, a) in pk.iter().enumerate() {
            let row = &self.coeffs[i * nl..(i + 1) * nl];
            let s: Complex64 = row.iter().zip(&pl).map(|(c, b)| c * b).sum();
            acc += (a * s).re;
        }
        acc
    }

    /// Density value clamped to `[DENSITY_FLOOR, DENSITY_CEIL]`.
    pub fn eval(&self, psi: f64, phi: f64) -> f64 {
        self.raw(psi, phi).clamp(DENSITY_FLOOR, DENSITY_CEIL)
    }

    /// Minimum and maximum of the raw series on the check grid.
    pub fn grid_extrema(&self) -> (f64, f64) {
        let step = std::f64::consts::TAU / CHECK_GRID as f64;
        let phis = if self.lmax == 0 { 1 } else { CHECK_GRID };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..CHECK_GRID {
            for j in 0..phis {
                let v = self.raw(i as f64 * step, j as f64 * step);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Clamped extrema on the check grid.
    pub fn clamped_extrema(&self) -> (f64, f64) {
        let (lo, hi) = self.grid_extrema();
        (lo.clamp(DENSITY_FLOOR, DENSITY_CEIL), hi.clamp(DENSITY_FLOOR, DENSITY_CEIL))
    }

    pub fn coefficient(&self, k: i64, l: i64) -> Complex64 {
        let nl = 2 * self.lmax + 1;
        let i = (k + self.kmax as i64) as usize;
        let j = (l + self.lmax as i64) as usize;
        self.coeffs[i * nl + j]
    }
}
