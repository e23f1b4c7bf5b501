//! ∗-recurrent families and the acceptance–rejection chain.
//!
//! A path is stopped alternately at hitting times `T_n` of `E = ⋃ E_x` and at
//! exit times `τ_n` from `V_{X_n}`. Stage `n` is accepted when
//! `U_n ≤ C⁻¹·(dε_{X_n}/dε_{Y_n})(Z_n)`; the accepted fiber points form a
//! Markov chain on `X` whose transition law is estimated here.
//!
//! At the base level only positions matter, so exits are sampled exactly from
//! the harmonic measure. At the bundle level frames ride along the path and
//! exit densities on `∂V × S¹` are fitted by Fourier series.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{
    gaussian_increment, simulate_to_exit, walk_until, wrap_angle, Ball, BundleError, DiffusionConfig, Frame,
    HorizontalState, WalkOutcome,
};
use crate::covering::{Cover, CoveringError, DeckElement, FiberLabel, FiberPoint, OrbitRegistry};
use crate::density::FourierDensity;
use crate::geometry::{ChartPoint, ModelSpace};
use crate::rng::{derive_seed, path_rng, Stream};
use crate::stats::wilson_se;

/// Distance tolerance for "on the boundary of V" in ratio evaluations.
const BOUNDARY_CONTRACT_TOL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LsError {
    #[error("invalid ∗-recurrent family: {0}")]
    InvalidFamily(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("density estimation failed: {0}")]
    Estimation(String),
    #[error(transparent)]
    Covering(#[from] CoveringError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

impl From<crate::geometry::GeometryError> for LsError {
    fn from(e: crate::geometry::GeometryError) -> Self {
        LsError::Bundle(BundleError::Geometry(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Base,
    Bundle,
}

/// A point with a frame angle in the chart centred at a fiber point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalState {
    pub z: Complex64,
    pub angle: f64,
}

impl LocalState {
    pub const CENTER: LocalState = LocalState { z: Complex64::new(0.0, 0.0), angle: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Exit samples per start radius.
    pub samples: usize,
    /// Number of start radii in `[0, r_E]`.
    pub radii: usize,
    /// Fourier truncation per variable.
    pub modes: usize,
    pub step: f64,
    pub seed: u64,
    /// Frame angle of the start states; exit frames are recorded relative to it.
    pub frame_angle: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { samples: 100_000, radii: 5, modes: 8, step: 1e-3, seed: 0, frame_angle: 0.0 }
    }
}

/// Fitted exit densities on `∂V × S¹` from the start states `(r_j, frame 0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleDensities {
    /// Metric start radii, equally spaced from 0 to `r_E`.
    pub radii: Vec<f64>,
    pub fits: Vec<FourierDensity>,
    /// `max_j max q₀ / min q_j` before the safety factor.
    pub raw_bound: f64,
    /// True when exit frames were deterministic and densities are on the circle.
    pub circle: bool,
}

impl BundleDensities {
    fn density(&self, r: f64, psi: f64, phi: f64) -> f64 {
        let last = self.radii.len() - 1;
        let t = if last == 0 { 0.0 } else { (r / self.radii[last] * last as f64).clamp(0.0, last as f64) };
        let j = (t.floor() as usize).min(last.saturating_sub(1));
        let frac = t - j as f64;
        let phi = if self.circle { 0.0 } else { phi };
        let a = self.fits[j].eval(psi, phi);
        if last == 0 || frac == 0.0 {
            return a;
        }
        (1.0 - frac) * a + frac * self.fits[j + 1].eval(psi, phi)
    }

    /// Exit density at `z` for the walk started at `start`, both in local coordinates.
    fn at(&self, model: ModelSpace, start: &LocalState, z: &LocalState) -> f64 {
        let r = model_dist_origin(model, start.z);
        let beta = if start.z.norm() > 0.0 { start.z.arg() } else { 0.0 };
        self.density(r, wrap_angle(z.z.arg() - beta), wrap_angle(z.angle - start.angle))
    }
}

fn model_dist_origin(model: ModelSpace, z: Complex64) -> f64 {
    match model {
        ModelSpace::Flat => z.norm(),
        ModelSpace::Hyperbolic => 2.0 * z.norm().atanh(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StarRecurrentFamily {
    pub model: ModelSpace,
    pub r_e: f64,
    pub r_v: f64,
    pub c: f64,
    pub level: Level,
    pub densities: Option<Arc<BundleDensities>>,
}

/// Closed-form base-level Harnack constant: `(R+ρ)/(R−ρ)` for the image disks.
pub fn base_harnack_bound(model: ModelSpace, r_e: f64, r_v: f64) -> f64 {
    let (big_r, rho) = (model.chart_radius(r_v), model.chart_radius(r_e));
    (big_r + rho) / (big_r - rho)
}

/// Radius constraints for a family at the given level.
pub fn check_radii(cover: &Cover, r_e: f64, r_v: f64, level: Level) -> Result<(), LsError> {
    let slb = cover.systole_lower_bound();
    if !(r_e > 0.0 && r_e.is_finite()) {
        return Err(LsError::InvalidFamily(format!("r_E must be positive, got {r_e}")));
    }
    if r_e >= r_v {
        return Err(LsError::InvalidFamily(format!(
            "need E_x ⊂ V_x, i.e. r_E < r_V (got r_E = {r_e}, r_V = {r_v})"
        )));
    }
    if r_e >= slb / 2.0 {
        return Err(LsError::InvalidFamily(format!(
            "E_x must be pairwise disjoint: r_E = {r_e} must stay below systole bound / 2 = {}",
            slb / 2.0
        )));
    }
    if level == Level::Base && r_v >= slb / 2.0 {
        return Err(LsError::InvalidFamily(format!(
            "r_V = {r_v} must stay below systole bound / 2 = {}",
            slb / 2.0
        )));
    }
    if cover.model() == ModelSpace::Hyperbolic && r_v > 20.0 {
        return Err(LsError::InvalidFamily(format!("r_V = {r_v} exceeds the chart's usable range")));
    }
    Ok(())
}

impl StarRecurrentFamily {
    pub fn base(cover: &Cover, r_e: f64, r_v: f64) -> Result<Self, LsError> {
        check_radii(cover, r_e, r_v, Level::Base)?;
        Ok(StarRecurrentFamily {
            model: cover.model(),
            r_e,
            r_v,
            c: base_harnack_bound(cover.model(), r_e, r_v),
            level: Level::Base,
            densities: None,
        })
    }

    /// Bundle-level family with exit densities fitted by simulation.
    ///
    /// `V_x` may overlap here; only the `E_x` must be disjoint.
    pub fn bundle(cover: &Cover, r_e: f64, r_v: f64, fit: &FitConfig) -> Result<Self, LsError> {
        check_radii(cover, r_e, r_v, Level::Bundle)?;
        let densities = fit_bundle_densities(cover.model(), r_e, r_v, fit)?;
        Ok(StarRecurrentFamily {
            model: cover.model(),
            r_e,
            r_v,
            c: 2.0 * densities.raw_bound,
            level: Level::Bundle,
            densities: Some(Arc::new(densities)),
        })
    }

    /// Minimum gap between distinct `E_x`: orbit separation minus `2 r_E`.
    pub fn e_gap(&self, cover: &Cover) -> f64 {
        2.0 * cover.systole_lower_bound() - 2.0 * self.r_e
    }
}

pub fn harnack_bound(family: &StarRecurrentFamily) -> f64 {
    family.c
}

/// Fits exit densities on `∂B(r_V)` from starts spread over `[0, r_E]`, without checking the radii against the cover.
pub fn fit_bundle_densities(model: ModelSpace, r_e: f64, r_v: f64, fit: &FitConfig) -> Result<BundleDensities, LsError> {
    if fit.radii < 2 || fit.samples == 0 || fit.modes == 0 {
        return Err(LsError::Estimation("fit needs ≥ 2 radii, ≥ 1 sample and ≥ 1 mode".into()));
    }
    let cfg = DiffusionConfig { step: fit.step, rng_seed: fit.seed, max_steps: 100_000_000 };
    cfg.validate()?;
    let region = Ball::new(ChartPoint::ORIGIN, r_v);
    let seed = derive_seed(fit.seed, 0xF17);
    let radii: Vec<f64> = (0..fit.radii).map(|j| r_e * j as f64 / (fit.radii - 1) as f64).collect();
    let mut fits = Vec::with_capacity(radii.len());
    let mut circle = model == ModelSpace::Flat;
    for &r in &radii {
        let start = HorizontalState::new(Frame::new(ChartPoint::new(model.chart_radius(r), 0.0), fit.frame_angle));
        // Common random numbers across radii: path i uses the same stream for every r.
        let exits: Vec<Result<(f64, f64), LsError>> = (0..fit.samples as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_rng(seed, i, Stream::Diffusion);
                let out = simulate_to_exit(model, &start, &region, &cfg, &mut rng)?;
                Ok((out.frame.base.z().arg(), wrap_angle(out.frame.angle - fit.frame_angle)))
            })
            .collect();
        let exits: Vec<(f64, f64)> = exits.into_iter().collect::<Result<_, _>>()?;
        if model == ModelSpace::Hyperbolic && exits.iter().all(|e| e.1.abs() < 1e-12) {
            circle = true;
        }
        fits.push(if circle {
            FourierDensity::fit_circle(&exits.iter().map(|e| e.0).collect::<Vec<_>>(), fit.modes)
        } else {
            FourierDensity::fit_torus(&exits, fit.modes, fit.modes)
        });
    }
    let top = fits[0].clamped_extrema().1;
    let raw_bound = fits.iter().map(|f| top / f.clamped_extrema().0).fold(1.0, f64::max);
    if !raw_bound.is_finite() {
        return Err(LsError::Estimation("non-finite density ratio bound".into()));
    }
    Ok(BundleDensities { radii, fits, raw_bound, circle })
}

/// Poisson kernel of the unit disk relative to the uniform measure.
#[inline]
fn poisson(w: Complex64, zeta: Complex64) -> f64 {
    (1.0 - w.norm_sqr()) / (zeta - w).norm_sqr()
}

/// `dε_x/dε_y` at `z`, all states in the chart centred at the fiber point owning `V`.
pub fn density_ratio(family: &StarRecurrentFamily, x: &LocalState, y: &LocalState, z: &LocalState) -> Result<f64, LsError> {
    let model = family.model;
    let dz = model_dist_origin(model, z.z);
    if (dz - family.r_v).abs() > BOUNDARY_CONTRACT_TOL {
        return Err(LsError::Contract(format!("exit point at distance {dz} is not on ∂V (r_V = {})", family.r_v)));
    }
    match family.level {
        Level::Base => {
            let big_r = model.chart_radius(family.r_v);
            let zeta = z.z / z.z.norm();
            Ok(poisson(x.z / big_r, zeta) / poisson(y.z / big_r, zeta))
        }
        Level::Bundle => {
            let d = family.densities.as_ref().ok_or_else(|| LsError::Contract("bundle family without fits".into()))?;
            let ratio = d.at(model, x, z) / d.at(model, y, z);
            Ok(ratio.clamp(crate::density::DENSITY_FLOOR, crate::density::DENSITY_CEIL))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub diffusion: DiffusionConfig,
    /// Paths farther than this from the chart origin count as escaped.
    pub truncation: f64,
    /// Stop after this many acceptances.
    pub acceptances: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage {
    pub n: usize,
    /// Path time of `T_n`.
    pub t_hit: f64,
    /// Path time of `τ_n`; absent when the exit was sampled exactly.
    pub t_exit: Option<f64>,
    pub x: FiberPoint,
    pub y: HorizontalState,
    pub z: HorizontalState,
    pub u: f64,
    pub threshold: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRecord {
    pub level: Level,
    /// Exit time from `V_x` when the chain starts at a fiber point, else 0.
    pub tau0: Option<f64>,
    pub stages: Vec<Stage>,
    /// Stage indices `N_1 < N_2 < …`.
    pub accepted: Vec<usize>,
    pub escaped: bool,
}

impl ChainRecord {
    pub fn accepted_fiber(&self, k: usize) -> Option<&FiberPoint> {
        self.accepted.get(k).map(|&n| &self.stages[n - 1].x)
    }

    /// Threshold values outside `[0, 1]`.
    pub fn threshold_violations(&self) -> usize {
        self.stages.iter().filter(|s| !(0.0..=1.0).contains(&s.threshold)).count()
    }
}

/// Runs the chain from `start` until `cfg.acceptances` stages are accepted or the path escapes.
pub fn run_chain(
    cover: &Cover,
    family: &StarRecurrentFamily,
    start: &HorizontalState,
    cfg: &ChainConfig,
    path: u64,
) -> Result<ChainRecord, LsError> {
    cfg.diffusion.validate()?;
    let model = cover.model();
    let mut rng = path_rng(cfg.diffusion.rng_seed, path, Stream::Diffusion);
    let mut uniforms = path_rng(cfg.diffusion.rng_seed, path, Stream::Acceptance);
    let mut record = ChainRecord { level: family.level, tau0: None, stages: Vec::new(), accepted: Vec::new(), escaped: false };
    let mut guess = DeckElement::identity(model);
    let mut state = *start;

    // τ₀: exit from V_x if the start is a fiber point.
    let first = cover.nearest_from(state.frame.base, &guess)?;
    if first.distance < 1e-12 {
        let t0 = state.time;
        state = exit_from(cover, family, &first.fiber, &state, cfg, &mut rng)?.0;
        record.tau0 = Some(if family.level == Level::Base { 0.0 } else { state.time - t0 });
        guess = first.fiber.deck;
    } else {
        record.tau0 = Some(0.0);
    }

    let r_e = family.r_e;
    let trunc = cfg.truncation;
    let mut n = 0;
    loop {
        n += 1;
        let outcome = walk_until(
            model,
            &state,
            &cfg.diffusion,
            &mut rng,
            |p| {
                let near = cover.nearest_from(p, &guess)?;
                guess = near.fiber.deck;
                let gap = near.distance - r_e;
                if gap <= 0.0 {
                    Ok(gap)
                } else {
                    Ok(gap.min(trunc - model.dist_origin(p)).max(f64::MIN_POSITIVE))
                }
            },
            |p| model.dist_origin(p) > trunc,
        )?;
        let y = match outcome {
            WalkOutcome::Escaped(_) => {
                record.escaped = true;
                return Ok(record);
            }
            WalkOutcome::Stopped(s) => s,
        };
        let near = cover.nearest_from(y.frame.base, &guess)?;
        let x = near.fiber;
        let (z, zl) = exit_from(cover, family, &x, &y, cfg, &mut rng)?;
        let yl = local_state(cover, &x, &y);
        let ratio = density_ratio(family, &LocalState::CENTER, &yl, &zl)?;
        let threshold = ratio / family.c;
        let u: f64 = uniforms.random();
        let accepted = u <= threshold;
        record.stages.push(Stage {
            n,
            t_hit: y.time,
            t_exit: (family.level == Level::Bundle).then_some(z.time),
            x,
            y,
            z,
            u,
            threshold,
            accepted,
        });
        if accepted {
            record.accepted.push(n);
            if record.accepted.len() >= cfg.acceptances {
                return Ok(record);
            }
        }
        state = z;
    }
}

fn local_state(cover: &Cover, x: &FiberPoint, s: &HorizontalState) -> LocalState {
    let (z, angle) = cover.to_local(&x.deck, s.frame.base, s.frame.angle);
    LocalState { z, angle: wrap_angle(angle) }
}

/// Exit from `V_x` starting at `s`: exact at the base level, simulated with frames at the bundle level.
///
/// Also returns the exit in coordinates local to `x`. Mapping the global exit
/// back loses precision far from the origin, so the local one is kept as computed.
fn exit_from(
    cover: &Cover,
    family: &StarRecurrentFamily,
    x: &FiberPoint,
    s: &HorizontalState,
    cfg: &ChainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(HorizontalState, LocalState), LsError> {
    let model = cover.model();
    let local = local_state(cover, x, s);
    let big_r = model.chart_radius(family.r_v);
    match family.level {
        Level::Base => {
            let w = local.z / big_r;
            if w.norm() >= 1.0 {
                return Err(LsError::Contract("start point is outside V".into()));
            }
            let u = Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI);
            let zeta = (u + w) / (Complex64::new(1.0, 0.0) + w.conj() * u);
            let zl = zeta / zeta.norm() * big_r;
            // The frame keeps its local angle, so chains started at deck-related points stay deck-related.
            let angle = wrap_angle(local.angle + x.deck.turn_at(ChartPoint(zl)));
            let global = HorizontalState { frame: Frame::new(ChartPoint(x.deck.apply_z(zl)), angle), time: s.time, escaped: false };
            Ok((global, LocalState { z: zl, angle: local.angle }))
        }
        Level::Bundle => {
            let ls = HorizontalState { frame: Frame::new(ChartPoint(local.z), local.angle), time: s.time, escaped: false };
            let out = simulate_to_exit(model, &ls, &Ball::new(ChartPoint::ORIGIN, family.r_v), &cfg.diffusion, rng)?;
            let zl = out.frame.base;
            let angle = out.frame.angle + x.deck.turn_at(zl);
            let global = HorizontalState { frame: Frame::new(ChartPoint(x.deck.apply_z(zl.z())), angle), time: out.time, escaped: out.escaped };
            Ok((global, LocalState { z: zl.z(), angle: wrap_angle(out.frame.angle) }))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightEntry {
    pub label: FiberLabel,
    pub fiber: FiberPoint,
    pub count: u64,
    pub frequency: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub stages: u64,
    pub accepted: u64,
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub threshold_violations: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub source: FiberPoint,
    pub level: Level,
    pub weights: Vec<WeightEntry>,
    pub total_runs: u64,
    pub escaped_count: u64,
    pub escaped_mass: f64,
    pub diagnostics: ChainDiagnostics,
}

impl TransitionEstimate {
    pub fn frequency_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.frequency).sum::<f64>() + self.escaped_mass
    }

    pub fn weight(&self, label: FiberLabel) -> Option<&WeightEntry> {
        self.weights.iter().find(|w| w.label == label)
    }
}

/// Runs `n_runs` independent chains from `x` (bundle chains start at its representative frame).
pub fn run_chains(
    cover: &Cover,
    family: &StarRecurrentFamily,
    x: &FiberPoint,
    n_runs: u64,
    cfg: &ChainConfig,
) -> Result<Vec<ChainRecord>, LsError> {
    let start = HorizontalState::new(Frame::new(x.coords, x.representative_angle()));
    (0..n_runs).into_par_iter().map(|i| run_chain(cover, family, &start, cfg, i)).collect()
}

/// Empirical law of `X_{N₁}` from `x`.
pub fn estimate_transitions(
    cover: &Cover,
    family: &StarRecurrentFamily,
    x: &FiberPoint,
    n_runs: u64,
    cfg: &ChainConfig,
) -> Result<TransitionEstimate, LsError> {
    if n_runs == 0 {
        return Err(LsError::Contract("n_runs must be at least 1".into()));
    }
    let records = run_chains(cover, family, x, n_runs, cfg)?;
    let mut registry = OrbitRegistry::new(cover);
    Ok(aggregate(&mut registry, family.level, x, &records, |r| r.accepted_fiber(0).cloned()))
}

/// Tallies one fiber point per record (`None` counts as escaped), in record order.
pub fn aggregate(
    registry: &mut OrbitRegistry,
    level: Level,
    source: &FiberPoint,
    records: &[ChainRecord],
    pick: impl Fn(&ChainRecord) -> Option<FiberPoint>,
) -> TransitionEstimate {
    let mut entries: Vec<WeightEntry> = Vec::new();
    let mut index: std::collections::HashMap<FiberLabel, usize> = std::collections::HashMap::new();
    let mut escaped = 0u64;
    let mut diag = ChainDiagnostics { threshold_min: f64::INFINITY, threshold_max: f64::NEG_INFINITY, ..Default::default() };
    for r in records {
        diag.stages += r.stages.len() as u64;
        diag.accepted += r.accepted.len() as u64;
        diag.threshold_violations += r.threshold_violations() as u64;
        for s in &r.stages {
            diag.threshold_min = diag.threshold_min.min(s.threshold);
            diag.threshold_max = diag.threshold_max.max(s.threshold);
        }
        match pick(r) {
            None => escaped += 1,
            Some(fp) => {
                let label = registry.label_of(&fp);
                let i = *index.entry(label).or_insert_with(|| {
                    entries.push(WeightEntry { label, fiber: fp.clone(), count: 0, frequency: 0.0, standard_error: 0.0 });
                    entries.len() - 1
                });
                entries[i].count += 1;
            }
        }
    }
    let n = records.len() as u64;
    for e in &mut entries {
        e.frequency = e.count as f64 / n as f64;
        e.standard_error = wilson_se(e.count, n);
    }
    entries.sort_by_key(|e| e.label);
    TransitionEstimate {
        source: source.clone(),
        level,
        weights: entries,
        total_runs: n,
        escaped_count: escaped,
        escaped_mass: escaped as f64 / n as f64,
        diagnostics: diag,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub value_at_source: f64,
    pub average: f64,
    pub residual: f64,
    pub standard_error: f64,
    pub error_budget: f64,
}

/// `|h(x) − Σ p(x,y) h(y)|` with budget `3·SE + escaped·sup|h|`.
pub fn discretization_residual(h: impl Fn(ChartPoint) -> f64, sup_h: f64, est: &TransitionEstimate) -> Residual {
    let n = est.total_runs as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for w in &est.weights {
        let v = h(w.fiber.coords);
        m1 += w.frequency * v;
        m2 += w.frequency * v * v;
    }
    let var = if n > 1.0 { (m2 - m1 * m1).max(0.0) * n / (n - 1.0) } else { 0.0 };
    let se = (var / n).sqrt();
    let hx = h(est.source.coords);
    Residual {
        value_at_source: hx,
        average: m1,
        residual: (hx - m1).abs(),
        standard_error: se,
        error_budget: 3.0 * se + est.escaped_mass * sup_h,
    }
}

/// Draws one Gaussian-driven step; re-exported for step-size studies.
pub fn sample_increment(rng: &mut ChaCha8Rng, step: f64) -> Complex64 {
    gaussian_increment(rng, step.sqrt())
}
