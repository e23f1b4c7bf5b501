//! Orthonormal frames, parallel transport and the horizontal diffusion.
//!
//! On an oriented surface an orthonormal frame at `p` is `e₁ = λ⁻¹e^{iθ}`,
//! `e₂ = λ⁻¹ie^{iθ}` in chart components, so a frame is a point and one angle.
//! The horizontal diffusion is realized as a geodesic random walk: each step
//! moves along the geodesic whose initial velocity is the frame applied to a
//! Gaussian increment, and transports the frame along it.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ChartPoint, GeometryError, MobiusMap, ModelSpace};

/// Distance tolerance of boundary crossings located by bisection.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BundleError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Covering(#[from] crate::covering::CoveringError),
    #[error("no exit after {0} steps")]
    NonConvergence(u64),
    #[error("invalid diffusion configuration: {0}")]
    InvalidConfig(String),
    #[error("start point lies outside the region")]
    OutsideRegion,
    #[error("polyline does not start at the frame's base point")]
    PolylineStart,
}

/// Wraps an angle into `(−π, π]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub base: ChartPoint,
    pub angle: f64,
}

impl Frame {
    pub fn new(base: ChartPoint, angle: f64) -> Self {
        Frame { base, angle: wrap_angle(angle) }
    }

    /// Chart components of the two frame vectors.
    pub fn vectors(&self, model: ModelSpace) -> [Complex64; 2] {
        let e1 = Complex64::from_polar(1.0 / model.conformal_factor(self.base), self.angle);
        [e1, e1 * Complex64::i()]
    }

    /// Right action of the rotation by `g`.
    pub fn rotated(&self, g: f64) -> Frame {
        Frame::new(self.base, self.angle + g)
    }

    /// Image under an isometry of the model.
    pub fn pushed(&self, model: ModelSpace, m: &MobiusMap) -> Result<Frame, GeometryError> {
        let base = m.apply(model, self.base)?;
        Ok(Frame::new(base, self.angle + m.derivative(self.base.z()).arg()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalState {
    pub frame: Frame,
    pub time: f64,
    pub escaped: bool,
}

impl HorizontalState {
    pub fn new(frame: Frame) -> Self {
        HorizontalState { frame, time: 0.0, escaped: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub step: f64,
    pub rng_seed: u64,
    pub max_steps: u64,
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<(), BundleError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(BundleError::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if self.max_steps == 0 {
            return Err(BundleError::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Closed metric ball `B(center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: ChartPoint,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: ChartPoint, radius: f64) -> Self {
        Ball { center, radius }
    }

    /// Chart coordinates in which the ball is the disk of radius `chart_radius(radius)` about 0.
    #[inline]
    pub fn to_local(&self, model: ModelSpace, p: ChartPoint) -> Complex64 {
        let c = self.center.z();
        match model {
            ModelSpace::Flat => p.z() - c,
            ModelSpace::Hyperbolic => (p.z() - c) / (Complex64::new(1.0, 0.0) - c.conj() * p.z()),
        }
    }

    #[inline]
    pub fn from_local(&self, model: ModelSpace, w: Complex64) -> ChartPoint {
        let c = self.center.z();
        match model {
            ModelSpace::Flat => ChartPoint(w + c),
            ModelSpace::Hyperbolic => ChartPoint((w + c) / (Complex64::new(1.0, 0.0) + c.conj() * w)),
        }
    }
}

/// Parallel transport of `start` along the chart-straight polyline through `waypoints`.
///
/// The connection form is integrated over each segment by Simpson's rule.
pub fn transport_polyline(model: ModelSpace, start: Frame, waypoints: &[ChartPoint]) -> Result<Frame, BundleError> {
    let Some(first) = waypoints.first() else {
        return Ok(start);
    };
    if (first.z() - start.base.z()).norm() > 1e-12 {
        return Err(BundleError::PolylineStart);
    }
    let mut angle = start.angle;
    for w in waypoints.windows(2) {
        let (a, b) = (model.check(w[0])?, model.check(w[1])?);
        let d = b.z() - a.z();
        let mid = ChartPoint(a.z() + 0.5 * d);
        angle += (model.connection_rotation_rate(a, d)
            + 4.0 * model.connection_rotation_rate(mid, d)
            + model.connection_rotation_rate(b, d))
            / 6.0;
    }
    Ok(Frame::new(*waypoints.last().unwrap(), angle))
}

/// Chart velocity of the geodesic step driven by the frame-coordinate increment `g`.
#[inline]
fn step_velocity(model: ModelSpace, frame: &Frame, g: Complex64) -> Complex64 {
    Complex64::from_polar(1.0 / model.conformal_factor(frame.base), frame.angle) * g
}

/// Moves along the geodesic with initial velocity `v` for time `t`, transporting the frame.
#[inline]
fn advance(model: ModelSpace, frame: &Frame, v: Complex64, t: f64) -> Result<Frame, GeometryError> {
    let (q, turn) = model.geodesic_step(frame.base, v * t)?;
    Ok(Frame::new(q, frame.angle + turn))
}

/// One step of the horizontal random walk. `gaussian` is already scaled by `√step`.
pub fn horizontal_step(model: ModelSpace, s: &HorizontalState, gaussian: (f64, f64), cfg: &DiffusionConfig) -> HorizontalState {
    if s.escaped {
        return *s;
    }
    let v = step_velocity(model, &s.frame, Complex64::new(gaussian.0, gaussian.1));
    match advance(model, &s.frame, v, 1.0) {
        Ok(frame) => HorizontalState { frame, time: s.time + cfg.step, escaped: false },
        Err(_) => HorizontalState { frame: s.frame, time: s.time + cfg.step, escaped: true },
    }
}

/// Draws a frame-coordinate increment with covariance `step·I`.
#[inline]
pub fn gaussian_increment<R: Rng + ?Sized>(rng: &mut R, sqrt_step: f64) -> Complex64 {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    Complex64::new(a, b) * sqrt_step
}

/// Result of advancing the walk until a stopping condition holds.
#[derive(Debug, Clone, Copy)]
pub enum WalkOutcome {
    Stopped(HorizontalState),
    Escaped(HorizontalState),
}

/// Runs the horizontal walk until `stop` becomes true, locating the crossing by bisection.
///
/// `clearance(p)` must return a lower bound on the metric distance from `p`
/// to the stopping set (non-positive once stopped) and be 1-Lipschitz; steps
/// whose accumulated length stays below the last clearance skip evaluation.
/// `escape(p)` is checked at the same times as `clearance`.
pub fn walk_until<R, C, E>(
    model: ModelSpace,
    start: &HorizontalState,
    cfg: &DiffusionConfig,
    rng: &mut R,
    mut clearance: C,
    mut escape: E,
) -> Result<WalkOutcome, BundleError>
where
    R: Rng + ?Sized,
    C: FnMut(ChartPoint) -> Result<f64, BundleError>,
    E: FnMut(ChartPoint) -> bool,
{
    let sqrt_h = cfg.step.sqrt();
    let mut state = *start;
    let mut margin = clearance(state.frame.base)?;
    if margin <= 0.0 {
        return Ok(WalkOutcome::Stopped(state));
    }
    let mut travelled = 0.0;
    for _ in 0..cfg.max_steps {
        let g = gaussian_increment(rng, sqrt_h);
        let v = step_velocity(model, &state.frame, g);
        let next = match advance(model, &state.frame, v, 1.0) {
            Ok(f) => f,
            Err(_) => {
                state.escaped = true;
                return Ok(WalkOutcome::Escaped(state));
            }
        };
        // Metric length of the step equals the norm of the frame increment.
        travelled += g.norm();
        if travelled < margin {
            state.frame = next;
            state.time += cfg.step;
            continue;
        }
        travelled = 0.0;
        if escape(next.base) {
            state.frame = next;
            state.time += cfg.step;
            state.escaped = true;
            return Ok(WalkOutcome::Escaped(state));
        }
        let m = clearance(next.base)?;
        if m > 0.0 {
            margin = m;
            state.frame = next;
            state.time += cfg.step;
            continue;
        }
        // Crossing inside the last step: bisect on the fraction of the step.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut hit = next;
        let len = g.norm();
        while (hi - lo) * len > BOUNDARY_TOL {
            let mid = 0.5 * (lo + hi);
            let f = advance(model, &state.frame, v, mid)?;
            if clearance(f.base)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
                hit = f;
            }
        }
        return Ok(WalkOutcome::Stopped(HorizontalState {
            frame: hit,
            time: state.time + hi * cfg.step,
            escaped: false,
        }));
    }
    Err(BundleError::NonConvergence(cfg.max_steps))
}

/// First exit from the closed ball, with the frame transported along the path.
pub fn simulate_to_exit<R: Rng + ?Sized>(
    model: ModelSpace,
    s: &HorizontalState,
    region: &Ball,
    cfg: &DiffusionConfig,
    rng: &mut R,
) -> Result<HorizontalState, BundleError> {
    cfg.validate()?;
    if region.radius <= 0.0 {
        return Ok(*s);
    }
    let d0 = model.dist(region.center, s.frame.base)?;
    if d0 > region.radius {
        return Err(BundleError::OutsideRegion);
    }
    let outcome = walk_until(
        model,
        s,
        cfg,
        rng,
        |p| Ok(region.radius - model.dist_unchecked(region.center, p) + f64::MIN_POSITIVE),
        |_| false,
    )?;
    Ok(match outcome {
        WalkOutcome::Stopped(st) | WalkOutcome::Escaped(st) => st,
    })
}

/// Samples the Brownian exit position from the ball started at `y`.
///
/// In local coordinates the ball is a Euclidean disk of radius `R`, and the
/// exit law from `w` is the image of the uniform law under the disk
/// automorphism of the unit disk taking 0 to `w/R`.
pub fn sample_exit_exact<R: Rng + ?Sized>(
    model: ModelSpace,
    y: ChartPoint,
    region: &Ball,
    rng: &mut R,
) -> Result<ChartPoint, BundleError> {
    model.check(y)?;
    let big_r = model.chart_radius(region.radius);
    let w = region.to_local(model, y) / big_r;
    if w.norm() >= 1.0 {
        return Ok(y);
    }
    let phi: f64 = rng.random::<f64>() * 2.0 * PI;
    let u = Complex64::from_polar(1.0, phi);
    let zeta = (u + w) / (Complex64::new(1.0, 0.0) + w.conj() * u);
    Ok(region.from_local(model, zeta / zeta.norm() * big_r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{path_rng, Stream};
    use crate::stats::{angle_histogram, chi_square_uniform};

    const H: ModelSpace = ModelSpace::Hyperbolic;

    fn cfg(step: f64) -> DiffusionConfig {
        DiffusionConfig { step, rng_seed: 1, max_steps: 10_000_000 }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn frame_vectors_are_orthonormal() {
        let f = Frame::new(ChartPoint::new(0.3, -0.5), 1.1);
        let [e1, e2] = f.vectors(H);
        let lam = H.conformal_factor(f.base);
        let dot = |a: Complex64, b: Complex64| lam * lam * (a.re * b.re + a.im * b.im);
        assert!((dot(e1, e1) - 1.0).abs() < 1e-12);
        assert!((dot(e2, e2) - 1.0).abs() < 1e-12);
        assert!(dot(e1, e2).abs() < 1e-12);
    }

    #[test]
    fn transport_constant_path_and_flat() {
        let f = Frame::new(ChartPoint::new(0.2, 0.1), 0.4);
        let same = transport_polyline(H, f, &[f.base, f.base, f.base]).unwrap();
        assert_eq!(same, f);
        let pts = [ChartPoint::new(0.0, 0.0), ChartPoint::new(3.0, 1.0), ChartPoint::new(-2.0, 5.0)];
        let g = transport_polyline(ModelSpace::Flat, Frame::new(pts[0], 0.7), &pts).unwrap();
        assert_eq!(g.angle, 0.7);
        assert!(transport_polyline(H, f, &[ChartPoint::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn transport_then_reverse_returns() {
        let pts: Vec<ChartPoint> = (0..=50).map(|i| {
            let t = i as f64 / 50.0;
            ChartPoint::new(0.6 * t - 0.2, 0.3 * (6.0 * t).sin())
        }).collect();
        let f = Frame::new(pts[0], 0.25);
        let there = transport_polyline(H, f, &pts).unwrap();
        let rev: Vec<ChartPoint> = pts.iter().rev().copied().collect();
        let back = transport_polyline(H, there, &rev).unwrap();
        assert!(wrap_angle(back.angle - f.angle).abs() < 1e-12);
    }

    #[test]
    fn zero_increment_only_advances_time() {
        let s = HorizontalState::new(Frame::new(ChartPoint::new(0.1, 0.2), 0.3));
        let t = horizontal_step(H, &s, (0.0, 0.0), &cfg(0.01));
        assert_eq!(t.frame, s.frame);
        assert_eq!(t.time, 0.01);
    }

    #[test]
    fn flat_step_is_planar_increment() {
        let s = HorizontalState::new(Frame::new(ChartPoint::new(1.0, 2.0), 0.5));
        let t = horizontal_step(ModelSpace::Flat, &s, (0.3, -0.1), &cfg(0.01));
        let expect = Complex64::new(1.0, 2.0) + Complex64::from_polar(1.0, 0.5) * Complex64::new(0.3, -0.1);
        assert!((t.frame.base.z() - expect).norm() < 1e-15);
        assert_eq!(t.frame.angle, 0.5);
    }

    #[test]
    fn right_invariance_with_rotated_noise() {
        let g = 0.9;
        let mut rng = path_rng(3, 0, Stream::Diffusion);
        let mut a = HorizontalState::new(Frame::new(ChartPoint::new(0.1, -0.3), 0.2));
        let mut b = HorizontalState::new(a.frame.rotated(g));
        let rot = Complex64::from_polar(1.0, -g);
        for _ in 0..1000 {
            let n = gaussian_increment(&mut rng, 0.05);
            a = horizontal_step(H, &a, (n.re, n.im), &cfg(0.0025));
            let m = n * rot;
            b = horizontal_step(H, &b, (m.re, m.im), &cfg(0.0025));
        }
        assert!((a.frame.base.z() - b.frame.base.z()).norm() < 1e-12);
        assert!(wrap_angle(b.frame.angle - a.frame.angle - g).abs() < 1e-10);
    }

    #[test]
    fn deck_equivariance_of_paths() {
        let m = MobiusMap::hyperbolic_translation(0.7, 1.3).compose(&MobiusMap::rotation(0.4));
        let mut rng = path_rng(5, 0, Stream::Diffusion);
        let mut a = HorizontalState::new(Frame::new(ChartPoint::new(0.05, 0.1), 0.0));
        let mut b = HorizontalState::new(a.frame.pushed(H, &m).unwrap());
        for _ in 0..500 {
            let n = gaussian_increment(&mut rng, 0.05);
            a = horizontal_step(H, &a, (n.re, n.im), &cfg(0.0025));
            b = horizontal_step(H, &b, (n.re, n.im), &cfg(0.0025));
        }
        let pa = a.frame.pushed(H, &m).unwrap();
        assert!((pa.base.z() - b.frame.base.z()).norm() < 1e-8);
        assert!(wrap_angle(pa.angle - b.frame.angle).abs() < 1e-8);
    }

    #[test]
    fn degenerate_region_returns_immediately() {
        let s = HorizontalState::new(Frame::new(ChartPoint::ORIGIN, 0.0));
        let mut rng = path_rng(1, 0, Stream::Diffusion);
        let out = simulate_to_exit(H, &s, &Ball::new(ChartPoint::ORIGIN, 0.0), &cfg(0.01), &mut rng).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn exit_lands_on_boundary() {
        let ball = Ball::new(ChartPoint::new(0.2, 0.1), 0.7);
        let s = HorizontalState::new(Frame::new(ball.center, 0.0));
        for path in 0..50 {
            let mut rng = path_rng(9, path, Stream::Diffusion);
            let out = simulate_to_exit(H, &s, &ball, &cfg(1e-3), &mut rng).unwrap();
            let d = H.dist(ball.center, out.frame.base).unwrap();
            assert!(d >= ball.radius && d < ball.radius + 2.0 * BOUNDARY_TOL, "{d}");
            assert!(out.time > 0.0);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let s = HorizontalState::new(Frame::new(ChartPoint::ORIGIN, 0.0));
        let mut rng = path_rng(1, 0, Stream::Diffusion);
        let c = DiffusionConfig { step: 1e-6, rng_seed: 0, max_steps: 10 };
        let err = simulate_to_exit(H, &s, &Ball::new(ChartPoint::ORIGIN, 1.0), &c, &mut rng).unwrap_err();
        assert_eq!(err, BundleError::NonConvergence(10));
    }

    #[test]
    fn exact_exit_from_center_is_uniform() {
        let ball = Ball::new(ChartPoint::new(-0.3, 0.2), 0.5);
        let mut rng = path_rng(2, 0, Stream::Diffusion);
        let angles: Vec<f64> = (0..20_000)
            .map(|_| {
                let z = sample_exit_exact(H, ball.center, &ball, &mut rng).unwrap();
                ball.to_local(H, z).arg()
            })
            .collect();
        assert!(chi_square_uniform(&angle_histogram(&angles, 32)).p_value > 1e-3);
    }

    #[test]
    fn exact_exit_lies_on_sphere() {
        let ball = Ball::new(ChartPoint::new(0.4, 0.1), 0.9);
        let mut rng = path_rng(2, 1, Stream::Diffusion);
        let y = ball.from_local(H, Complex64::new(0.1, -0.2));
        for _ in 0..100 {
            let z = sample_exit_exact(H, y, &ball, &mut rng).unwrap();
            assert!((H.dist(ball.center, z).unwrap() - ball.radius).abs() < 1e-9);
        }
    }
}
