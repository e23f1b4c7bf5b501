//! Curvature, Lie brackets of horizontal fields and infinitesimal holonomy on
//! the oriented frame bundle, in coordinates `(x, y, θ)`.
//!
//! The connection form is `ω(W) = α(π_*W) − W^θ`, where `α(v)` is the rate
//! at which a parallel frame turns against the chart frame along `v`. With
//! this sign the curvature `Ω(H₁, H₂) = −ω([H₁, H₂])` equals the Gauss
//! curvature.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle::Frame;
use crate::geometry::{ChartPoint, ModelSpace};

pub type BundlePoint = [f64; 3];

/// Step for the curvature form's bracket stencil.
pub const CURVATURE_STEP: f64 = 1e-4;
/// Base step for Richardson-extrapolated stencils.
pub const IDENTITY_STEP: f64 = 1e-3;
/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOL: f64 = 1e-6;
/// Absolute cutoff below which a vertical value counts as zero.
pub const VERTICAL_TOL: f64 = 1e-6;

/// Coefficient of the `so(2)` generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalValue(pub f64);

pub fn coords(frame: &Frame) -> BundlePoint {
    [frame.base.x(), frame.base.y(), frame.angle]
}

type FieldFn = dyn Fn(BundlePoint) -> BundlePoint + Send + Sync;
type ScalarFn = dyn Fn(BundlePoint) -> f64 + Send + Sync;

/// A vector field on the frame bundle.
#[derive(Clone)]
pub struct BundleVectorField {
    f: Arc<FieldFn>,
}

impl std::fmt::Debug for BundleVectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BundleVectorField")
    }
}

fn add(a: BundlePoint, b: BundlePoint, s: f64) -> BundlePoint {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn unit(j: usize) -> BundlePoint {
    let mut e = [0.0; 3];
    e[j] = 1.0;
    e
}

/// Central-difference Jacobian, Richardson-extrapolated: `J[i][j] = ∂_j F^i`.
fn jacobian(f: &FieldFn, p: BundlePoint, h: f64) -> [[f64; 3]; 3] {
    let central = |h: f64| {
        let mut j = [[0.0; 3]; 3];
        for c in 0..3 {
            let fp = f(add(p, unit(c), h));
            let fm = f(add(p, unit(c), -h));
            for (r, row) in j.iter_mut().enumerate() {
                row[c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    };
    let (coarse, fine) = (central(h), central(0.5 * h));
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (4.0 * fine[r][c] - coarse[r][c]) / 3.0;
        }
    }
    out
}

/// Derivative of a scalar function along `v`, Richardson-extrapolated.
fn directional(f: &ScalarFn, p: BundlePoint, v: BundlePoint, h: f64) -> f64 {
    let central = |h: f64| (f(add(p, v, h)) - f(add(p, v, -h))) / (2.0 * h);
    (4.0 * central(0.5 * h) - central(h)) / 3.0
}

impl BundleVectorField {
    pub fn new(f: impl Fn(BundlePoint) -> BundlePoint + Send + Sync + 'static) -> Self {
        BundleVectorField { f: Arc::new(f) }
    }

    pub fn eval(&self, p: BundlePoint) -> BundlePoint {
        (self.f)(p)
    }

    /// Standard horizontal field `H_i`, `i ∈ {1, 2}`.
    pub fn horizontal(model: ModelSpace, i: usize) -> Self {
        assert!(i == 1 || i == 2, "horizontal fields are indexed 1 and 2");
        let quarter = (i - 1) as f64 * std::f64::consts::FRAC_PI_2;
        BundleVectorField::new(move |p| {
            let base = ChartPoint::new(p[0], p[1]);
            let e = Complex64::from_polar(1.0 / model.conformal_factor(base), p[2] + quarter);
            [e.re, e.im, model.connection_rotation_rate(base, e)]
        })
    }

    /// `g·X` for a smooth function `g`.
    pub fn scaled(&self, g: impl Fn(BundlePoint) -> f64 + Send + Sync + 'static) -> Self {
        let f = self.f.clone();
        BundleVectorField::new(move |p| {
            let (s, v) = (g(p), f(p));
            [s * v[0], s * v[1], s * v[2]]
        })
    }

    /// `[self, other]` by Richardson-extrapolated central-difference Jacobians.
    pub fn bracket(&self, other: &BundleVectorField, h: f64) -> Self {
        let (x, y) = (self.f.clone(), other.f.clone());
        BundleVectorField::new(move |p| {
            let (xp, yp) = (x(p), y(p));
            let (jx, jy) = (jacobian(&*x, p, h), jacobian(&*y, p, h));
            let mut out = [0.0; 3];
            for (r, o) in out.iter_mut().enumerate() {
                for c in 0..3 {
                    *o += jy[r][c] * xp[c] - jx[r][c] * yp[c];
                }
            }
            out
        })
    }

    /// Vertical part `v(W)`: the vertical vector with the same ω-value.
    pub fn vertical_part(&self, model: ModelSpace) -> Self {
        let f = self.f.clone();
        BundleVectorField::new(move |p| [0.0, 0.0, -connection_form(model, p, f(p))])
    }
}

pub fn connection_form(model: ModelSpace, p: BundlePoint, w: BundlePoint) -> f64 {
    model.connection_rotation_rate(ChartPoint::new(p[0], p[1]), Complex64::new(w[0], w[1])) - w[2]
}

/// `Ω(H_v, H_w) = −ω([H_v, H_w])` with a bracket stencil of step 10⁻⁴.
pub fn curvature_form(model: ModelSpace, sigma: &Frame, v: usize, w: usize) -> VerticalValue {
    let p = coords(sigma);
    let hv = BundleVectorField::horizontal(model, v);
    let hw = BundleVectorField::horizontal(model, w);
    VerticalValue(-connection_form(model, p, hv.bracket(&hw, CURVATURE_STEP).eval(p)))
}

/// Horizontal fields and their iterated brackets `[H_i, Z]`, grouped by depth.
fn bracket_levels(model: ModelSpace, depth: usize) -> Vec<Vec<BundleVectorField>> {
    let h = [BundleVectorField::horizontal(model, 1), BundleVectorField::horizontal(model, 2)];
    let mut levels = vec![h.to_vec()];
    for d in 1..=depth {
        let next = if d == 1 {
            vec![h[0].bracket(&h[1], IDENTITY_STEP)]
        } else {
            levels[d - 1].iter().flat_map(|z| h.iter().map(move |hi| hi.bracket(z, IDENTITY_STEP))).collect()
        };
        levels.push(next);
    }
    levels
}

pub fn numerical_rank(vectors: &[BundlePoint]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(3, vectors.len(), |r, c| vectors[c][r]);
    let sv = m.svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Rank of `{H₁, H₂}` together with their brackets up to `depth`.
pub fn bracket_span_dim(model: ModelSpace, sigma: &Frame, depth: usize) -> usize {
    let p = coords(sigma);
    let values: Vec<BundlePoint> = bracket_levels(model, depth).iter().flatten().map(|f| f.eval(p)).collect();
    numerical_rank(&values)
}

/// Dimension of the span of ω over brackets of depth 1 and 2.
pub fn infinitesimal_holonomy_dim(model: ModelSpace, sigma: &Frame) -> usize {
    let p = coords(sigma);
    let nonzero = bracket_levels(model, 2)
        .iter()
        .skip(1)
        .flatten()
        .any(|f| connection_form(model, p, f.eval(p)).abs() > VERTICAL_TOL);
    usize::from(nonzero)
}

/// `dω(X, Y)` from the coordinate expression `(∂_x b − ∂_y a) dx∧dy` of
/// `d(a dx + b dy − dθ)`, with `a, b` differentiated by central differences.
fn d_omega(model: ModelSpace, p: BundlePoint, x: BundlePoint, y: BundlePoint) -> f64 {
    let a = move |q: BundlePoint| model.connection_rotation_rate(ChartPoint::new(q[0], q[1]), Complex64::new(1.0, 0.0));
    let b = move |q: BundlePoint| model.connection_rotation_rate(ChartPoint::new(q[0], q[1]), Complex64::new(0.0, 1.0));
    let curl = directional(&b, p, unit(0), IDENTITY_STEP) - directional(&a, p, unit(1), IDENTITY_STEP);
    curl * (x[0] * y[1] - x[1] * y[0])
}

/// Fixed smooth multipliers for the test fields of the vertical identity.
fn test_fields(model: ModelSpace) -> (BundleVectorField, BundleVectorField, BundleVectorField) {
    let x = BundleVectorField::horizontal(model, 1).scaled(|p| 1.0 + 0.25 * (p[2] + p[0]).sin());
    let y = BundleVectorField::horizontal(model, 2).scaled(|p| (0.3 * p[1] - 0.2 * p[0]).exp() * (1.0 + 0.1 * p[2].cos()));
    (x, y, BundleVectorField::horizontal(model, 1))
}

/// `|U_k⋯U₁ Ω(X,Y) + ω(v[U_k, v[…, v[X,Y]]])|` for `k ∈ {0, 1}`, with
/// `X = f·H₁`, `Y = g·H₂`, `U₁ = H₁`.
pub fn verify_vertical_identity(model: ModelSpace, sigma: &Frame, k: usize) -> f64 {
    assert!(k <= 1, "only k = 0 and k = 1 are implemented");
    let p = coords(sigma);
    let (x, y, u1) = test_fields(model);
    let omega_xy = {
        let (x, y) = (x.clone(), y.clone());
        move |q: BundlePoint| d_omega(model, q, x.eval(q), y.eval(q))
    };
    let mut rhs_field = x.bracket(&y, IDENTITY_STEP).vertical_part(model);
    let lhs = if k == 0 {
        omega_xy(p)
    } else {
        rhs_field = u1.bracket(&rhs_field, IDENTITY_STEP).vertical_part(model);
        directional(&omega_xy, p, u1.eval(p), IDENTITY_STEP)
    };
    let rhs = -connection_form(model, p, rhs_field.eval(p));
    (lhs - rhs).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn frames(n: usize, seed: u64) -> Vec<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z = Complex64::from_polar(0.6 * rng.random::<f64>().sqrt(), rng.random_range(-PI..PI));
                Frame::new(ChartPoint(z), rng.random_range(-PI..PI))
            })
            .collect()
    }

    #[test]
    fn curvature_values() {
        for f in frames(20, 1) {
            assert_eq!(curvature_form(ModelSpace::Hyperbolic, &f, 1, 1).0, 0.0);
            assert!((curvature_form(ModelSpace::Hyperbolic, &f, 1, 2).0 + 1.0).abs() < 1e-3);
            let anti = curvature_form(ModelSpace::Hyperbolic, &f, 2, 1).0;
            assert!((anti - 1.0).abs() < 1e-3);
            assert_eq!(curvature_form(ModelSpace::Flat, &f, 1, 2).0, 0.0);
        }
    }

    #[test]
    fn curvature_at_origin_matches_hand_computation() {
        // At 0: α = 0, ∂α(e₂)·e₁ − ∂α(e₁)·e₂ = −1 for every θ.
        for theta in [0.0, 0.7, -2.0] {
            let f = Frame::new(ChartPoint::ORIGIN, theta);
            let b = BundleVectorField::horizontal(ModelSpace::Hyperbolic, 1)
                .bracket(&BundleVectorField::horizontal(ModelSpace::Hyperbolic, 2), IDENTITY_STEP)
                .eval(coords(&f));
            assert!(b[0].abs() < 1e-9 && b[1].abs() < 1e-9, "{b:?}");
            assert!((b[2] + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn curvature_is_tensorial() {
        let m = ModelSpace::Hyperbolic;
        for f in frames(10, 2) {
            let p = coords(&f);
            let g = |q: BundlePoint| 2.0 + q[0] * q[2].sin();
            let x = BundleVectorField::horizontal(m, 1).scaled(g);
            let y = BundleVectorField::horizontal(m, 2);
            let val = -connection_form(m, p, x.bracket(&y, IDENTITY_STEP).eval(p));
            assert!((val - g(p) * curvature_form(m, &f, 1, 2).0).abs() < 1e-3);
        }
    }

    #[test]
    fn span_dimensions() {
        for f in frames(5, 3) {
            assert_eq!(bracket_span_dim(ModelSpace::Hyperbolic, &f, 0), 2);
            assert_eq!(bracket_span_dim(ModelSpace::Hyperbolic, &f, 1), 3);
            assert_eq!(bracket_span_dim(ModelSpace::Hyperbolic, &f, 2), 3);
            for depth in 0..=2 {
                assert_eq!(bracket_span_dim(ModelSpace::Flat, &f, depth), 2);
            }
            assert_eq!(bracket_span_dim(ModelSpace::Hyperbolic, &f.rotated(1.3), 1), 3);
        }
    }

    #[test]
    fn holonomy_dimensions_and_consistency() {
        for f in frames(5, 4) {
            let hyp = infinitesimal_holonomy_dim(ModelSpace::Hyperbolic, &f);
            let flat = infinitesimal_holonomy_dim(ModelSpace::Flat, &f);
            assert_eq!((hyp, flat), (1, 0));
            assert_eq!(hyp + 2, bracket_span_dim(ModelSpace::Hyperbolic, &f, 2));
            assert_eq!(flat + 2, bracket_span_dim(ModelSpace::Flat, &f, 2));
        }
    }

    #[test]
    fn vertical_identity_residuals() {
        for f in frames(5, 5) {
            assert!(verify_vertical_identity(ModelSpace::Hyperbolic, &f, 0) < 1e-3);
            assert!(verify_vertical_identity(ModelSpace::Hyperbolic, &f, 1) < 1e-2);
            assert!(verify_vertical_identity(ModelSpace::Flat, &f, 0) < 1e-6);
            assert!(verify_vertical_identity(ModelSpace::Flat, &f, 1) < 1e-6);
        }
    }

    #[test]
    fn rank_of_degenerate_collections() {
        assert_eq!(numerical_rank(&[]), 0);
        assert_eq!(numerical_rank(&[[0.0; 3]]), 0);
        assert_eq!(numerical_rank(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]), 1);
        assert_eq!(numerical_rank(&[[1.0, 0.0, 0.0], [0.0, 1.0, 1e-12]]), 2);
    }
}
