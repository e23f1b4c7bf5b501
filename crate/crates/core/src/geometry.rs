//! Chart-level Riemannian geometry of the two model spaces.
//!
//! Both spaces live in a single global chart: the Euclidean plane with the
//! standard metric, and the Poincaré disk with `ds² = 4|dz|²/(1−|z|²)²`
//! (curvature −1). Points and chart vectors are complex numbers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points with `|z| ≥ 1 − DISK_GUARD` are treated as having left the disk chart.
pub const DISK_GUARD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({x}, {y}) lies outside the chart domain")]
    Domain { x: f64, y: f64 },
    #[error("tangent vectors are based at different points")]
    BaseMismatch,
    #[error("Möbius map does not preserve the model space")]
    InvalidMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSpace {
    Flat,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChartPoint(pub Complex64);

impl ChartPoint {
    pub const ORIGIN: ChartPoint = ChartPoint(Complex64::new(0.0, 0.0));

    pub fn new(x: f64, y: f64) -> Self {
        ChartPoint(Complex64::new(x, y))
    }

    #[inline]
    pub fn z(self) -> Complex64 {
        self.0
    }

    pub fn x(self) -> f64 {
        self.0.re
    }

    pub fn y(self) -> f64 {
        self.0.im
    }
}

/// A chart vector `v` attached to `base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub v: Complex64,
}

impl TangentVector {
    pub fn new(base: ChartPoint, v: Complex64) -> Self {
        Self { base, v }
    }
}

impl ModelSpace {
    pub fn curvature(self) -> f64 {
        match self {
            ModelSpace::Flat => 0.0,
            ModelSpace::Hyperbolic => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelSpace::Flat => "flat",
            ModelSpace::Hyperbolic => "hyperbolic",
        }
    }

    pub fn contains(self, p: ChartPoint) -> bool {
        let z = p.z();
        if !(z.re.is_finite() && z.im.is_finite()) {
            return false;
        }
        match self {
            ModelSpace::Flat => true,
            ModelSpace::Hyperbolic => z.norm() < 1.0 - DISK_GUARD,
        }
    }

    pub fn check(self, p: ChartPoint) -> Result<ChartPoint, GeometryError> {
        if self.contains(p) {
            Ok(p)
        } else {
            Err(GeometryError::Domain { x: p.x(), y: p.y() })
        }
    }

    /// Conformal factor λ with `g = λ²|dz|²`.
    #[inline]
    pub fn conformal_factor(self, p: ChartPoint) -> f64 {
        match self {
            ModelSpace::Flat => 1.0,
            ModelSpace::Hyperbolic => 2.0 / (1.0 - p.z().norm_sqr()),
        }
    }

    pub fn dist(self, a: ChartPoint, b: ChartPoint) -> Result<f64, GeometryError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.dist_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn dist_unchecked(self, a: ChartPoint, b: ChartPoint) -> f64 {
        match self {
            ModelSpace::Flat => (a.z() - b.z()).norm(),
            ModelSpace::Hyperbolic => {
                let (a, b) = (a.z(), b.z());
                let diff = a - b;
                if diff.norm_sqr() == 0.0 {
                    return 0.0;
                }
                let den = (Complex64::new(1.0, 0.0) - a.conj() * b).norm_sqr();
                // 1 − r² computed from the product form keeps precision near the boundary.
                let r = (diff.norm_sqr() / den).sqrt();
                let one_minus_r2 = (1.0 - a.norm_sqr()) * (1.0 - b.norm_sqr()) / den;
                ((1.0 + r) * (1.0 + r) / one_minus_r2).ln()
            }
        }
    }

    /// Distance from the chart origin.
    #[inline]
    pub(crate) fn dist_origin(self, p: ChartPoint) -> f64 {
        match self {
            ModelSpace::Flat => p.z().norm(),
            ModelSpace::Hyperbolic => 2.0 * p.z().norm().atanh(),
        }
    }

    /// Chart radius of the metric ball of radius `r` about the origin.
    pub fn chart_radius(self, r: f64) -> f64 {
        match self {
            ModelSpace::Flat => r,
            ModelSpace::Hyperbolic => (0.5 * r).tanh(),
        }
    }

    pub fn inner(self, p: ChartPoint, u: TangentVector, w: TangentVector) -> Result<f64, GeometryError> {
        if u.base != p || w.base != p {
            return Err(GeometryError::BaseMismatch);
        }
        self.check(p)?;
        let lam = self.conformal_factor(p);
        Ok(lam * lam * (u.v.re * w.v.re + u.v.im * w.v.im))
    }

    pub fn norm(self, u: TangentVector) -> Result<f64, GeometryError> {
        self.inner(u.base, u, u).map(f64::sqrt)
    }

    pub fn exp_map(self, p: ChartPoint, v: TangentVector, t: f64) -> Result<ChartPoint, GeometryError> {
        if v.base != p {
            return Err(GeometryError::BaseMismatch);
        }
        self.check(p)?;
        self.geodesic_step(p, v.v * t).map(|(q, _)| q)
    }

    /// Follows the geodesic with initial chart velocity `v` for unit time.
    ///
    /// Returns the endpoint and the angle by which any parallel-transported
    /// vector has turned relative to the chart coordinate frame.
    #[inline]
    pub fn geodesic_step(self, p: ChartPoint, v: Complex64) -> Result<(ChartPoint, f64), GeometryError> {
        match self {
            ModelSpace::Flat => Ok((ChartPoint(p.z() + v), 0.0)),
            ModelSpace::Hyperbolic => {
                let vn = v.norm();
                if vn == 0.0 {
                    return Ok((p, 0.0));
                }
                let z = p.z();
                let s = z.norm_sqr();
                // Metric length, then the point at that distance from 0 along v/|v|,
                // carried back by the disk automorphism w ↦ (w + z)/(1 + z̄w).
                let len = 2.0 * vn / (1.0 - s);
                let w = v * ((0.5 * len).tanh() / vn);
                let den = Complex64::new(1.0, 0.0) + z.conj() * w;
                let q = ChartPoint((w + z) / den);
                if q.z().norm_sqr() >= (1.0 - DISK_GUARD) * (1.0 - DISK_GUARD) || !q.0.re.is_finite() {
                    return Err(GeometryError::Domain { x: q.x(), y: q.y() });
                }
                Ok((q, -2.0 * den.arg()))
            }
        }
    }

    /// Inverse of the exponential map: chart vector at `p` whose geodesic hits `q` at time 1.
    pub fn log_map(self, p: ChartPoint, q: ChartPoint) -> Result<TangentVector, GeometryError> {
        self.check(p)?;
        self.check(q)?;
        let v = match self {
            ModelSpace::Flat => q.z() - p.z(),
            ModelSpace::Hyperbolic => {
                let z = p.z();
                let w = (q.z() - z) / (Complex64::new(1.0, 0.0) - z.conj() * q.z());
                let wn = w.norm();
                if wn == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    let d = 2.0 * wn.atanh();
                    w / wn * (d * (1.0 - z.norm_sqr()) / 2.0)
                }
            }
        };
        Ok(TangentVector::new(p, v))
    }

    /// Levi-Civita connection 1-form of the chart frame, evaluated on `dir`.
    ///
    /// For `g = e^{2φ}|dz|²` an orthonormal frame parallel along a curve turns,
    /// relative to the chart frame, at rate `φ_y ẋ − φ_x ẏ`.
    #[inline]
    pub fn connection_rotation_rate(self, p: ChartPoint, dir: Complex64) -> f64 {
        match self {
            ModelSpace::Flat => 0.0,
            ModelSpace::Hyperbolic => {
                let z = p.z();
                2.0 * (z.im * dir.re - z.re * dir.im) / (1.0 - z.norm_sqr())
            }
        }
    }

    /// Gradient `(φ_x, φ_y)` of the log conformal factor.
    pub fn log_conformal_gradient(self, p: ChartPoint) -> (f64, f64) {
        match self {
            ModelSpace::Flat => (0.0, 0.0),
            ModelSpace::Hyperbolic => {
                let z = p.z();
                let den = 1.0 - z.norm_sqr();
                (2.0 * z.re / den, 2.0 * z.im / den)
            }
        }
    }
}

/// Orientation-preserving isometry as a normalized 2×2 complex matrix acting by
/// `z ↦ (az + b)/(cz + d)`. Euclidean motions are the matrices with `c = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusMap {
    pub m: [[Complex64; 2]; 2],
}

impl MobiusMap {
    pub const IDENTITY: MobiusMap = MobiusMap {
        m: [
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ],
    };

    pub fn new(m: [[Complex64; 2]; 2]) -> Self {
        MobiusMap { m }.normalized()
    }

    /// Rotation about the origin by `angle`.
    pub fn rotation(angle: f64) -> Self {
        let h = Complex64::from_polar(1.0, 0.5 * angle);
        let zero = Complex64::new(0.0, 0.0);
        MobiusMap { m: [[h, zero], [zero, h.conj()]] }
    }

    /// Hyperbolic translation by distance `d` along the diameter at angle `direction`.
    pub fn hyperbolic_translation(direction: f64, d: f64) -> Self {
        let c = Complex64::new((0.5 * d).cosh(), 0.0);
        let s = (0.5 * d).sinh();
        let e = Complex64::from_polar(1.0, direction);
        MobiusMap { m: [[c, e * s], [e.conj() * s, c]] }
    }

    /// Disk automorphism without rotation taking 0 to `p`.
    pub fn disk_translation_to(p: ChartPoint) -> Self {
        let z = p.z();
        MobiusMap::new([[Complex64::new(1.0, 0.0), z], [z.conj(), Complex64::new(1.0, 0.0)]])
    }

    /// Euclidean motion `z ↦ e^{iθ} z + shift`.
    pub fn euclidean(rotation: f64, shift: Complex64) -> Self {
        MobiusMap::new([
            [Complex64::from_polar(1.0, rotation), shift],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ])
    }

    pub fn det(&self) -> Complex64 {
        let [[a, b], [c, d]] = self.m;
        a * d - b * c
    }

    /// Divides by a square root of the determinant.
    pub fn normalized(self) -> Self {
        let s = self.det().sqrt();
        let [[a, b], [c, d]] = self.m;
        MobiusMap { m: [[a / s, b / s], [c / s, d / s]] }
    }

    /// `self ∘ other`, renormalized.
    pub fn compose(&self, other: &MobiusMap) -> Self {
        let [[a, b], [c, d]] = self.m;
        let [[e, f], [g, h]] = other.m;
        MobiusMap {
            m: [[a * e + b * g, a * f + b * h], [c * e + d * g, c * f + d * h]],
        }
        .normalized()
    }

    pub fn inverse(&self) -> Self {
        let [[a, b], [c, d]] = self.m;
        MobiusMap { m: [[d, -b], [-c, a]] }
    }

    #[inline]
    pub fn apply_z(&self, z: Complex64) -> Complex64 {
        let [[a, b], [c, d]] = self.m;
        (a * z + b) / (c * z + d)
    }

    /// Complex derivative at `z`; unit determinant is assumed.
    #[inline]
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let [[_, _], [c, d]] = self.m;
        let den = c * z + d;
        self.det() / (den * den)
    }

    pub fn apply(&self, model: ModelSpace, p: ChartPoint) -> Result<ChartPoint, GeometryError> {
        model.check(ChartPoint(self.apply_z(p.z())))
    }

    pub fn pushforward(&self, model: ModelSpace, u: TangentVector) -> Result<TangentVector, GeometryError> {
        let base = self.apply(model, u.base)?;
        Ok(TangentVector::new(base, self.derivative(u.base.z()) * u.v))
    }

    /// Checks that the map is an isometry of `model`.
    pub fn is_valid(&self, model: ModelSpace, tol: f64) -> bool {
        let n = self.normalized();
        let [[a, b], [c, d]] = n.m;
        if !(a.re.is_finite() && b.re.is_finite() && c.re.is_finite() && d.re.is_finite()) {
            return false;
        }
        match model {
            ModelSpace::Flat => c.norm() <= tol && ((a / d).norm() - 1.0).abs() <= tol,
            ModelSpace::Hyperbolic => {
                // SU(1,1) up to the overall sign ±1.
                let plus = (d - a.conj()).norm() + (c - b.conj()).norm();
                let minus = (d + a.conj()).norm() + (c + b.conj()).norm();
                plus.min(minus) <= tol * (1.0 + a.norm())
            }
        }
    }

    /// Projective distance to `other` (matrices agree up to sign).
    pub fn distance_to(&self, other: &MobiusMap) -> f64 {
        let p = self.normalized();
        let q = other.normalized();
        let mut plus = 0.0f64;
        let mut minus = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                plus = plus.max((p.m[i][j] - q.m[i][j]).norm());
                minus = minus.max((p.m[i][j] + q.m[i][j]).norm());
            }
        }
        plus.min(minus)
    }
}
