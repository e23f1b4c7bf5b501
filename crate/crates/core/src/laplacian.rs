//! Horizontal Laplacian of scalarized tensors versus the scalarized rough
//! Laplacian, for differentials of harmonic functions.
//!
//! The horizontal side uses only frame flows: each `H_i` flow is the geodesic
//! in direction `e_i` with the frame carried along. The covariant side is a
//! chart computation with the Christoffel symbols of `g = e^{2φ}|dz|²`,
//! `Γ^k_ij = δ_ik φ_j + δ_jk φ_i − δ_ij φ_k`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle::Frame;
use crate::geometry::{ChartPoint, GeometryError, ModelSpace};
use crate::groupoid::{push_components, ScalarizedValue, Valence};

/// `h = Re f` with `f` a complex polynomial (ascending coefficients).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPolynomial {
    pub coeffs: Vec<Complex64>,
}

impl HarmonicPolynomial {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        HarmonicPolynomial { coeffs }
    }

    /// `f^{(k)}(z)`.
    pub fn derivative(&self, k: usize, z: Complex64) -> Complex64 {
        // Horner for Σ c_n n!/(n−k)! z^{n−k}.
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, c) in self.coeffs.iter().enumerate().skip(k).rev() {
            let falling: f64 = (n + 1 - k..=n).map(|j| j as f64).product();
            acc = acc * z + c * falling;
        }
        acc
    }

    pub fn value(&self, p: ChartPoint) -> f64 {
        self.derivative(0, p.z()).re
    }

    /// Chart components `(∂_x h, ∂_y h)`.
    pub fn differential(&self, p: ChartPoint) -> [f64; 2] {
        let d = self.derivative(1, p.z());
        [d.re, -d.im]
    }
}

/// Chart-component multipliers: `ω_k = Re(C[k]·f′)`, `∂_i = D[i]` acting on
/// holomorphic functions.
const C: [Complex64; 2] = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
const D: [Complex64; 2] = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];

/// `(φ_i, φ_ij)` for the log conformal factor.
fn log_factor_jet(model: ModelSpace, p: ChartPoint) -> ([f64; 2], [[f64; 2]; 2]) {
    match model {
        ModelSpace::Flat => ([0.0; 2], [[0.0; 2]; 2]),
        ModelSpace::Hyperbolic => {
            let x = [p.x(), p.y()];
            let q = 1.0 - p.z().norm_sqr();
            let grad = [2.0 * x[0] / q, 2.0 * x[1] / q];
            let mut hess = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    hess[i][j] = 4.0 * x[i] * x[j] / (q * q) + if i == j { 2.0 / q } else { 0.0 };
                }
            }
            (grad, hess)
        }
    }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// Chart components of the rough Laplacian `tr ∇²(dh)`.
pub fn rough_laplacian_of_differential(model: ModelSpace, h: &HarmonicPolynomial, p: ChartPoint) -> [f64; 2] {
    let z = p.z();
    let (f1, f2, f3) = (h.derivative(1, z), h.derivative(2, z), h.derivative(3, z));
    let (phi, dphi) = log_factor_jet(model, p);
    let gamma = |k: usize, i: usize, j: usize| delta(i, k) * phi[j] + delta(j, k) * phi[i] - delta(i, j) * phi[k];
    let dgamma = |l: usize, k: usize, i: usize, j: usize| {
        delta(i, k) * dphi[j][l] + delta(j, k) * dphi[i][l] - delta(i, j) * dphi[k][l]
    };
    let omega = |k: usize| (C[k] * f1).re;
    let d_omega = |i: usize, k: usize| (C[k] * D[i] * f2).re;
    let dd_omega = |j: usize, i: usize, k: usize| (C[k] * D[i] * D[j] * f3).re;
    // T_ik = ∂_i ω_k − Γ^m_ik ω_m, and its partial derivatives.
    let t = |i: usize, k: usize| d_omega(i, k) - (0..2).map(|m| gamma(m, i, k) * omega(m)).sum::<f64>();
    let dt = |l: usize, i: usize, k: usize| {
        dd_omega(l, i, k) - (0..2).map(|m| dgamma(l, m, i, k) * omega(m) + gamma(m, i, k) * d_omega(l, m)).sum::<f64>()
    };
    let inv_g = model.conformal_factor(p).powi(-2);
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..2 {
            acc += dt(i, i, k);
            for m in 0..2 {
                acc -= gamma(m, i, i) * t(m, k) + gamma(m, i, k) * t(i, m);
            }
        }
        *o = inv_g * acc;
    }
    out
}

/// Scalarized chart 1-form components at a frame.
fn scalarize_form(model: ModelSpace, frame: &Frame, chart: [f64; 2]) -> [f64; 2] {
    let [e1, e2] = frame.vectors(model);
    [chart[0] * e1.re + chart[1] * e1.im, chart[0] * e2.re + chart[1] * e2.im]
}

/// Flow of the standard horizontal field `H_i` (0-based) for time `t`.
pub fn horizontal_flow(model: ModelSpace, frame: &Frame, i: usize, t: f64) -> Result<Frame, GeometryError> {
    let e = frame.vectors(model)[i];
    let (q, turn) = model.geodesic_step(frame.base, e * t)?;
    Ok(Frame::new(q, frame.angle + turn))
}

/// `Σ_i H_i² F` by symmetric second differences along the horizontal flows.
pub fn horizontal_laplacian(
    model: ModelSpace,
    f: impl Fn(&Frame) -> Vec<f64>,
    frame: &Frame,
    t: f64,
) -> Result<Vec<f64>, GeometryError> {
    let centre = f(frame);
    let mut out = vec![0.0; centre.len()];
    for i in 0..2 {
        let fwd = f(&horizontal_flow(model, frame, i, t)?);
        let bwd = f(&horizontal_flow(model, frame, i, -t)?);
        for (k, o) in out.iter_mut().enumerate() {
            *o += (fwd[k] - 2.0 * centre[k] + bwd[k]) / (t * t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutationReport {
    pub steps: Vec<f64>,
    /// Largest relative error over frames, per step.
    pub relative_errors: Vec<f64>,
    /// Observed convergence orders between consecutive steps.
    pub orders: Vec<f64>,
}

impl CommutationReport {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn finest_error(&self) -> f64 {
        *self.relative_errors.last().unwrap_or(&f64::NAN)
    }
}

/// Compares `Δ_H F_{dh}` with `F_{Δ dh}` at each frame and step.
pub fn laplacian_commutation(
    model: ModelSpace,
    h: &HarmonicPolynomial,
    frames: &[Frame],
    steps: &[f64],
) -> Result<CommutationReport, GeometryError> {
    let scalarized = |fr: &Frame| scalarize_form(model, fr, h.differential(fr.base)).to_vec();
    let mut relative_errors = Vec::with_capacity(steps.len());
    for &t in steps {
        let mut worst: f64 = 0.0;
        for fr in frames {
            let lhs = horizontal_laplacian(model, scalarized, fr, t)?;
            let rhs = scalarize_form(model, fr, rough_laplacian_of_differential(model, h, fr.base));
            let num = ((lhs[0] - rhs[0]).powi(2) + (lhs[1] - rhs[1]).powi(2)).sqrt();
            let den = (rhs[0].powi(2) + rhs[1].powi(2)).sqrt();
            worst = worst.max(num / den);
        }
        relative_errors.push(worst);
    }
    let orders = relative_errors.windows(2).zip(steps.windows(2)).map(|(e, s)| (e[0] / e[1]).ln() / (s[0] / s[1]).ln()).collect();
    Ok(CommutationReport { steps: steps.to_vec(), relative_errors, orders })
}

/// Scalarized value of `dh` at a frame, as a valence-(0,1) tensor.
pub fn scalarized_differential(model: ModelSpace, h: &HarmonicPolynomial, frame: &Frame) -> ScalarizedValue {
    let chart = ScalarizedValue { valence: Valence(0, 1), data: h.differential(frame.base).to_vec() };
    let [e1, e2] = frame.vectors(model);
    let e = nalgebra::Matrix2::new(e1.re, e2.re, e1.im, e2.im);
    push_components(&chart, &e.try_inverse().expect("frame matrix is invertible"))
}
