//! Groupoid of linear isometries over the fiber, random walks on it, tensor
//! fields, scalarization and μ-harmonicity.
//!
//! Conventions:
//! * The reference frame at a point is the chart-aligned orthonormal frame
//!   (angle 0). An isometry's `matrix` maps reference components at the source
//!   to reference components at the target.
//! * The representative frame at a fiber point `d·0` is the deck image of the
//!   reference frame at 0, i.e. angle `arg d′(0)`. Tensor components on the
//!   fiber are always stored in representative frames.
//! * Tensor components list upper indices first, then lower, row-major.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::Frame;
use crate::covering::{DeckElement, FiberLabel, FiberPoint, OrbitRegistry};
use crate::geometry::{ChartPoint, ModelSpace, DISK_GUARD};
use crate::lyons_sullivan::TransitionEstimate;

/// Largest total valence accepted from external input.
pub const MAX_TOTAL_VALENCE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupoidError {
    #[error("isometries are not composable: target {0} differs from source {1}")]
    NotComposable(FiberLabel, FiberLabel),
    #[error("shape mismatch: expected {expected} components, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("no tensor components at fiber point {0}")]
    MissingComponents(FiberLabel),
    #[error("no transitions recorded for source {0}")]
    MissingSource(FiberLabel),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("malformed JSON: {0}")]
    Json(String),
}

/// Tensor valence `(r, s)`: `r` contravariant and `s` covariant indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Valence(pub usize, pub usize);

impl Valence {
    pub fn order(self) -> usize {
        self.0 + self.1
    }

    /// Number of components, `2^(r+s)`.
    pub fn components(self) -> usize {
        1usize << self.order()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarizedValue {
    pub valence: Valence,
    pub data: Vec<f64>,
}

impl ScalarizedValue {
    pub fn new(valence: Valence, data: Vec<f64>) -> Result<Self, GroupoidError> {
        if data.len() != valence.components() {
            return Err(GroupoidError::Shape { expected: valence.components(), got: data.len() });
        }
        Ok(ScalarizedValue { valence, data })
    }

    pub fn scalar(v: f64) -> Self {
        ScalarizedValue { valence: Valence(0, 0), data: vec![v] }
    }

    pub fn max_abs_diff(&self, other: &ScalarizedValue) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }
}

/// Contracts index `k` of an order-`n` array with `m`.
fn mode_product(data: &[f64], n: usize, k: usize, m: &Matrix2<f64>) -> Vec<f64> {
    let stride = 1usize << (n - 1 - k);
    (0..data.len())
        .map(|idx| {
            let bit = (idx / stride) & 1;
            let base = idx - bit * stride;
            m[(bit, 0)] * data[base] + m[(bit, 1)] * data[base + stride]
        })
        .collect()
}

/// Pushforward by the linear map `m`: upper indices by `m`, lower by `m^{-T}`.
pub fn push_components(value: &ScalarizedValue, m: &Matrix2<f64>) -> ScalarizedValue {
    let inv_t = m.try_inverse().expect("invertible frame change").transpose();
    let n = value.valence.order();
    let mut data = value.data.clone();
    for k in 0..n {
        let factor = if k < value.valence.0 { m } else { &inv_t };
        data = mode_product(&data, n, k, factor);
    }
    ScalarizedValue { valence: value.valence, data }
}

pub fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn to_rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub source: FiberPoint,
    pub target: FiberPoint,
    pub source_label: FiberLabel,
    pub target_label: FiberLabel,
    /// Row-major matrix in reference frames.
    pub matrix: [[f64; 2]; 2],
}

impl Isometry {
    pub fn identity(point: FiberPoint, label: FiberLabel) -> Self {
        Isometry { source: point.clone(), target: point, source_label: label, target_label: label, matrix: [[1.0, 0.0], [0.0, 1.0]] }
    }

    /// The isometry taking the representative frame at `source` to the one at `target`.
    pub fn between_representatives(source: (FiberLabel, FiberPoint), target: (FiberLabel, FiberPoint)) -> Self {
        let m = rotation(target.1.representative_angle() - source.1.representative_angle());
        Isometry { source: source.1, target: target.1, source_label: source.0, target_label: target.0, matrix: to_rows(&m) }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        let m = self.matrix;
        Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }

    /// Matrix relative to the representative frames at source and target.
    pub fn representative_matrix(&self) -> Matrix2<f64> {
        rotation(-self.target.representative_angle()) * self.matrix() * rotation(self.source.representative_angle())
    }

    pub fn orthogonality_defect(&self) -> f64 {
        let m = self.matrix();
        (m.transpose() * m - Matrix2::identity()).abs().max()
    }
}

/// `η ∘ σ`, defined when `t(σ) = s(η)`.
pub fn compose(sigma: &Isometry, eta: &Isometry) -> Result<Isometry, GroupoidError> {
    if sigma.target_label != eta.source_label {
        return Err(GroupoidError::NotComposable(sigma.target_label, eta.source_label));
    }
    Ok(Isometry {
        source: sigma.source.clone(),
        target: eta.target.clone(),
        source_label: sigma.source_label,
        target_label: eta.target_label,
        matrix: to_rows(&(eta.matrix() * sigma.matrix())),
    })
}

pub fn invert(sigma: &Isometry) -> Isometry {
    Isometry {
        source: sigma.target.clone(),
        target: sigma.source.clone(),
        source_label: sigma.target_label,
        target_label: sigma.source_label,
        matrix: to_rows(&sigma.matrix().transpose()),
    }
}

/// Carries components at the source (representative frame) to the target.
pub fn apply_to_tensor(sigma: &Isometry, value: &ScalarizedValue) -> Result<ScalarizedValue, GroupoidError> {
    if value.data.len() != value.valence.components() {
        return Err(GroupoidError::Shape { expected: value.valence.components(), got: value.data.len() });
    }
    Ok(push_components(value, &sigma.representative_matrix()))
}

/// A tensor field on the model given by chart (coordinate-basis) components.
pub trait ChartTensorField {
    fn valence(&self) -> Valence;
    fn chart_components(&self, model: ModelSpace, p: ChartPoint) -> Vec<f64>;
}

/// The Riemannian metric `g`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricTensor;

impl ChartTensorField for MetricTensor {
    fn valence(&self) -> Valence {
        Valence(0, 2)
    }

    fn chart_components(&self, model: ModelSpace, p: ChartPoint) -> Vec<f64> {
        let l2 = model.conformal_factor(p).powi(2);
        vec![l2, 0.0, 0.0, l2]
    }
}

/// The Riemannian area form of the standard orientation.
#[derive(Debug, Clone, Copy, Default)]
pub struct VolumeForm;

impl ChartTensorField for VolumeForm {
    fn valence(&self) -> Valence {
        Valence(0, 2)
    }

    fn chart_components(&self, model: ModelSpace, p: ChartPoint) -> Vec<f64> {
        let l2 = model.conformal_factor(p).powi(2);
        vec![0.0, l2, -l2, 0.0]
    }
}

/// A field given by a closure returning chart components.
pub struct FnField<F> {
    pub valence: Valence,
    pub f: F,
}

impl<F: Fn(ChartPoint) -> Vec<f64>> ChartTensorField for FnField<F> {
    fn valence(&self) -> Valence {
        self.valence
    }

    fn chart_components(&self, _model: ModelSpace, p: ChartPoint) -> Vec<f64> {
        (self.f)(p)
    }
}

/// Components of `τ` in the orthonormal frame `σ`, i.e. `σ⁻¹τ(π(σ))`.
pub fn scalarize(model: ModelSpace, tau: &dyn ChartTensorField, sigma: &Frame) -> ScalarizedValue {
    let [e1, e2] = sigma.vectors(model);
    let e = Matrix2::new(e1.re, e2.re, e1.im, e2.im);
    let chart = ScalarizedValue { valence: tau.valence(), data: tau.chart_components(model, sigma.base) };
    push_components(&chart, &e.try_inverse().expect("frame matrix is invertible"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub label: FiberLabel,
    pub components: Vec<f64>,
}

/// Tensors `τ_x` at fiber points, in representative frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFieldOnX {
    pub valence: Valence,
    pub entries: Vec<TensorEntry>,
}

impl TensorFieldOnX {
    /// Restriction of a chart tensor field to the given fiber points.
    pub fn restrict(model: ModelSpace, tau: &dyn ChartTensorField, fibers: &[(FiberLabel, FiberPoint)]) -> Self {
        let entries = fibers
            .iter()
            .map(|(label, fp)| {
                let frame = Frame::new(fp.coords, fp.representative_angle());
                TensorEntry { label: *label, components: scalarize(model, tau, &frame).data }
            })
            .collect();
        TensorFieldOnX { valence: tau.valence(), entries }
    }

    pub fn get(&self, label: FiberLabel) -> Option<ScalarizedValue> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| ScalarizedValue { valence: self.valence, data: e.components.clone() })
    }

    pub fn validate(&self) -> Result<(), GroupoidError> {
        if self.valence.order() > MAX_TOTAL_VALENCE {
            return Err(GroupoidError::Invalid(format!("total valence {} exceeds {MAX_TOTAL_VALENCE}", self.valence.order())));
        }
        let want = self.valence.components();
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if e.components.len() != want {
                return Err(GroupoidError::Shape { expected: want, got: e.components.len() });
            }
            if e.components.iter().any(|c| !c.is_finite()) {
                return Err(GroupoidError::Invalid(format!("non-finite component at {}", e.label)));
            }
            if !seen.insert(e.label) {
                return Err(GroupoidError::Invalid(format!("duplicate label {}", e.label)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GroupoidError> {
        let field: TensorFieldOnX = serde_json::from_str(text).map_err(|e| GroupoidError::Json(e.to_string()))?;
        field.validate()?;
        Ok(field)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tensor fields serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub isometry: Isometry,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkEntry {
    pub source_label: FiberLabel,
    pub source: FiberPoint,
    pub transitions: Vec<Transition>,
    pub escaped_mass: f64,
}

/// Transition probabilities `μ_x` stored at the identities of the fiber points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkFamily {
    pub entries: Vec<WalkEntry>,
}

fn fiber_point_is_sane(fp: &FiberPoint) -> bool {
    let z = fp.coords.z();
    if !(z.re.is_finite() && z.im.is_finite()) {
        return false;
    }
    match &fp.deck {
        DeckElement::Lattice { m, n } => (z.re - *m as f64).abs() < 1e-9 && (z.im - *n as f64).abs() < 1e-9,
        DeckElement::Fuchsian { map, .. } => {
            map.m.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
                && z.norm() < 1.0 - DISK_GUARD
                && map.is_valid(ModelSpace::Hyperbolic, 1e-6)
        }
    }
}

impl RandomWalkFamily {
    pub fn entry(&self, label: FiberLabel) -> Option<&WalkEntry> {
        self.entries.iter().find(|e| e.source_label == label)
    }

    pub fn validate(&self) -> Result<(), GroupoidError> {
        for entry in &self.entries {
            if !fiber_point_is_sane(&entry.source) {
                return Err(GroupoidError::Invalid(format!("source {} has inconsistent coordinates", entry.source_label)));
            }
            if !(0.0..=1.0).contains(&entry.escaped_mass) {
                return Err(GroupoidError::Invalid(format!("escaped mass {} outside [0, 1]", entry.escaped_mass)));
            }
            let mut total = entry.escaped_mass;
            for t in &entry.transitions {
                let iso = &t.isometry;
                if iso.source_label != entry.source_label {
                    return Err(GroupoidError::Invalid(format!(
                        "isometry source {} listed under {}",
                        iso.source_label, entry.source_label
                    )));
                }
                if !(t.probability >= 0.0 && t.probability.is_finite()) {
                    return Err(GroupoidError::Invalid(format!("probability {} is not a nonnegative number", t.probability)));
                }
                if !iso.matrix.iter().flatten().all(|v| v.is_finite()) || iso.orthogonality_defect() > 1e-10 {
                    return Err(GroupoidError::Invalid(format!("matrix towards {} is not orthogonal", iso.target_label)));
                }
                if !fiber_point_is_sane(&iso.target) || !fiber_point_is_sane(&iso.source) {
                    return Err(GroupoidError::Invalid(format!("target {} has inconsistent coordinates", iso.target_label)));
                }
                total += t.probability;
            }
            if total > 1.0 + 1e-9 {
                return Err(GroupoidError::Invalid(format!("probabilities at {} sum to {total} > 1", entry.source_label)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GroupoidError> {
        let fam: RandomWalkFamily = serde_json::from_str(text).map_err(|e| GroupoidError::Json(e.to_string()))?;
        fam.validate()?;
        Ok(fam)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("walk families serialize")
    }

    /// Every fiber point mentioned, sources first, without duplicates.
    pub fn support(&self) -> Vec<(FiberLabel, FiberPoint)> {
        let mut out: Vec<(FiberLabel, FiberPoint)> = Vec::new();
        let mut push = |l: FiberLabel, p: &FiberPoint| {
            if !out.iter().any(|(m, _)| *m == l) {
                out.push((l, p.clone()));
            }
        };
        for e in &self.entries {
            push(e.source_label, &e.source);
        }
        for e in &self.entries {
            for t in &e.transitions {
                push(t.isometry.target_label, &t.isometry.target);
            }
        }
        out
    }
}

/// Re-labels bundle-level estimates as a walk on the groupoid: one isometry
/// `v∘u⁻¹` per (source, target) pair between representative frames.
pub fn build_groupoid_walk(estimates: &[TransitionEstimate], registry: &mut OrbitRegistry) -> RandomWalkFamily {
    let entries = estimates
        .iter()
        .map(|est| {
            let source_label = registry.label_of(&est.source);
            let transitions = est
                .weights
                .iter()
                .map(|w| {
                    let target_label = registry.label_of(&w.fiber);
                    Transition {
                        isometry: Isometry::between_representatives(
                            (source_label, est.source.clone()),
                            (target_label, w.fiber.clone()),
                        ),
                        probability: w.frequency,
                    }
                })
                .collect();
            WalkEntry { source_label, source: est.source.clone(), transitions, escaped_mass: est.escaped_mass }
        })
        .collect();
    RandomWalkFamily { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicResidual {
    /// `max|m·τ_x − Σ μ(σ) σ⁻¹τ_{t(σ)}|` with `m = Σ μ(σ)` the retained mass.
    pub residual: f64,
    /// `max|τ_x − Σ μ(σ) σ⁻¹τ_{t(σ)}|`.
    pub raw_residual: f64,
    /// `escaped·max|τ|` over the involved points; bounds `raw_residual − residual`.
    pub slack: f64,
    pub mass: f64,
}

pub fn mu_harmonic_residual(
    tau: &TensorFieldOnX,
    mu: &RandomWalkFamily,
    x: FiberLabel,
) -> Result<HarmonicResidual, GroupoidError> {
    let entry = mu.entry(x).ok_or(GroupoidError::MissingSource(x))?;
    let tx = tau.get(x).ok_or(GroupoidError::MissingComponents(x))?;
    let mut acc = vec![0.0; tx.data.len()];
    let mut mass = 0.0;
    let mut sup = tx.max_abs();
    for t in &entry.transitions {
        let target = t.isometry.target_label;
        let tt = tau.get(target).ok_or(GroupoidError::MissingComponents(target))?;
        sup = sup.max(tt.max_abs());
        let pulled = apply_to_tensor(&invert(&t.isometry), &tt)?;
        for (a, v) in acc.iter_mut().zip(&pulled.data) {
            *a += t.probability * v;
        }
        mass += t.probability;
    }
    let norm = |scale: f64| tx.data.iter().zip(&acc).map(|(a, b)| (scale * a - b).abs()).fold(0.0, f64::max);
    Ok(HarmonicResidual { residual: norm(mass), raw_residual: norm(1.0), slack: entry.escaped_mass * sup, mass })
}
