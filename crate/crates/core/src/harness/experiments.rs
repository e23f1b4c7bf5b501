//! Experiment drivers. Each returns a list of quantities with budgets; the
//! thresholds here are the pass criteria of the verification suites.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use super::config::{Experiment, ExperimentConfig};
use super::report::{Quantity, Report};
use crate::bundle::{sample_exit_exact, simulate_to_exit, transport_polyline, Ball, BundleError, DiffusionConfig, Frame, HorizontalState};
use crate::covering::{Cover, CoveringError, FiberLabel, OrbitRegistry};
use crate::geometry::{ChartPoint, GeometryError, ModelSpace};
use crate::groupoid::{
    build_groupoid_walk, compose, invert, mu_harmonic_residual, rotation, ChartTensorField, GroupoidError, MetricTensor,
    TensorFieldOnX, VolumeForm,
};
use crate::holonomy::{bracket_span_dim, curvature_form, infinitesimal_holonomy_dim, verify_vertical_identity};
use crate::laplacian::{laplacian_commutation, HarmonicPolynomial};
use crate::lyons_sullivan::{
    base_harnack_bound, discretization_residual, estimate_transitions, fit_bundle_densities, ChainConfig, FitConfig, LsError, StarRecurrentFamily,
    TransitionEstimate,
};
use crate::rng::{derive_seed, path_rng, Stream};
use crate::stats::{angle_histogram, chi_square_uniform, ks_test, ks_two_sample};

/// Step cap per chain segment; hitting it is a configuration error.
pub const MAX_STEPS: u64 = 200_000_000;
/// Significance level of every distributional test.
pub const ALPHA: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{experiment}: {source}")]
    Chain { experiment: Experiment, source: LsError },
    #[error("{experiment}: {source}")]
    Simulation { experiment: Experiment, source: BundleError },
    #[error("{experiment}: {source}")]
    Groupoid { experiment: Experiment, source: GroupoidError },
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
}

trait Context<T> {
    fn ctx(self, e: Experiment) -> Result<T, ExperimentError>;
}

impl<T> Context<T> for Result<T, LsError> {
    fn ctx(self, experiment: Experiment) -> Result<T, ExperimentError> {
        self.map_err(|source| ExperimentError::Chain { experiment, source })
    }
}

impl<T> Context<T> for Result<T, BundleError> {
    fn ctx(self, experiment: Experiment) -> Result<T, ExperimentError> {
        self.map_err(|source| ExperimentError::Simulation { experiment, source })
    }
}

impl<T> Context<T> for Result<T, GeometryError> {
    fn ctx(self, experiment: Experiment) -> Result<T, ExperimentError> {
        self.map_err(|e| ExperimentError::Simulation { experiment, source: BundleError::Geometry(e) })
    }
}

impl<T> Context<T> for Result<T, CoveringError> {
    fn ctx(self, experiment: Experiment) -> Result<T, ExperimentError> {
        self.map_err(|e| ExperimentError::Chain { experiment, source: LsError::Covering(e) })
    }
}

impl<T> Context<T> for Result<T, GroupoidError> {
    fn ctx(self, experiment: Experiment) -> Result<T, ExperimentError> {
        self.map_err(|source| ExperimentError::Groupoid { experiment, source })
    }
}

/// Runs the experiment on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, ExperimentError> {
    let quantities = match cfg.experiment {
        Experiment::FunctionDiscretization => function_discretization(cfg)?,
        Experiment::TensorDiscretization => tensor_discretization(cfg)?,
        Experiment::Holonomy => holonomy(cfg)?,
        Experiment::Transport => transport(cfg)?,
        Experiment::ExitSampling => exit_sampling(cfg)?,
        Experiment::Harnack => harnack(cfg)?,
    };
    Ok(Report::new(cfg.clone(), quantities))
}

/// Runs the experiment on a dedicated pool of `threads` workers.
pub fn run_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<Report, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

fn chain_config(cfg: &ExperimentConfig) -> ChainConfig {
    ChainConfig {
        diffusion: DiffusionConfig { step: cfg.step, rng_seed: cfg.seed, max_steps: MAX_STEPS },
        truncation: cfg.truncation,
        acceptances: 1,
    }
}

/// Frames with base points uniform in the chart disk of radius 0.6.
pub fn random_frames(n: usize, seed: u64) -> Vec<Frame> {
    let mut rng = path_rng(seed, 0, Stream::Diffusion);
    (0..n)
        .map(|_| {
            let z = Complex64::from_polar(0.6 * rng.random::<f64>().sqrt(), rng.random_range(-PI..PI));
            Frame::new(ChartPoint(z), rng.random_range(-PI..PI))
        })
        .collect()
}

fn chain_bookkeeping(est: &TransitionEstimate, c: f64, q: &mut Vec<Quantity>) {
    q.push(Quantity::info("rejection_constant", c));
    q.push(Quantity::info("support_size", est.weights.len() as f64));
    q.push(Quantity::info("escaped_mass", est.escaped_mass));
    q.push(Quantity::near("frequency_sum_minus_one", est.frequency_sum(), 1.0, 1e-12));
    let d = &est.diagnostics;
    let rate = if d.stages == 0 { 0.0 } else { d.accepted as f64 / d.stages as f64 };
    q.push(Quantity::info("stages_per_run", d.stages as f64 / est.total_runs as f64));
    q.push(Quantity::ge("acceptance_rate_lower", rate, 1.0 / (c * c)));
    q.push(Quantity::le("acceptance_rate_upper", rate, 1.0));
    q.push(Quantity::ge("threshold_min", d.threshold_min, 0.0));
}

/// Largest continuity-corrected `|count(ℓ) − orbit mean| / sd` over labels, with the binomial sd at the orbit mean.
pub fn dihedral_max_z(est: &TransitionEstimate) -> f64 {
    let n = est.total_runs;
    let count = |m: i64, k: i64| est.weight(FiberLabel::Lattice(m, k)).map_or(0, |w| w.count);
    let mut worst: f64 = 0.0;
    for w in &est.weights {
        let FiberLabel::Lattice(m, k) = w.label else { continue };
        let mut orbit = vec![(m, k), (-m, k), (m, -k), (-m, -k), (k, m), (-k, m), (k, -m), (-k, -m)];
        orbit.sort_unstable();
        orbit.dedup();
        // Under symmetry every label in the orbit is Binomial(n, p̄); score with the pooled
        // standard deviation and a continuity correction, which stay sane for rare labels.
        let mean = orbit.iter().map(|&(a, b)| count(a, b) as f64).sum::<f64>() / orbit.len() as f64;
        let p = mean / n as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        if sd == 0.0 {
            continue;
        }
        for &(a, b) in &orbit {
            let dev = ((count(a, b) as f64 - mean).abs() - 0.5).max(0.0);
            worst = worst.max(dev / sd);
        }
    }
    worst
}

fn function_discretization(cfg: &ExperimentConfig) -> Result<Vec<Quantity>, ExperimentError> {
    let e = cfg.experiment;
    let cover = Cover::new(cfg.model);
    let family = StarRecurrentFamily::base(&cover, cfg.r_e, cfg.r_v).ctx(e)?;
    let est = estimate_transitions(&cover, &family, &cover.basepoint(), cfg.n_runs, &chain_config(cfg)).ctx(e)?;
    let mut q = Vec::new();
    q.push(Quantity::info("e_gap", family.e_gap(&cover)));
    chain_bookkeeping(&est, family.c, &mut q);
    q.push(Quantity::le("threshold_max", est.diagnostics.threshold_max, 1.0));
    match cfg.model {
        ModelSpace::Hyperbolic => {
            // Poisson integral of cos θ on the disk: h = Re z, sup|h| = 1, osc h = 2.
            let r = discretization_residual(|p| p.x(), 1.0, &est);
            q.push(Quantity::info("h_at_source", r.value_at_source));
            q.push(Quantity::info("h_average", r.average));
            q.push(Quantity::info("standard_error", r.standard_error));
            q.push(Quantity::le("residual_vs_budget", r.residual, r.error_budget));
            q.push(Quantity::le("residual_vs_osc", r.residual, 0.05 * 2.0));
        }
        ModelSpace::Flat => {
            let sup = cfg.truncation + cfg.r_v;
            let r = discretization_residual(|p| p.x(), sup, &est);
            q.push(Quantity::info("h_average", r.average));
            q.push(Quantity::info("standard_error", r.standard_error));
            q.push(Quantity::le("residual_vs_budget", r.residual, r.error_budget));
            q.push(Quantity::le("dihedral_max_z", dihedral_max_z(&est), 3.0));
            q.push(Quantity::le("escaped_mass_bound", est.escaped_mass, 1e-3));
        }
    }
    Ok(q)
}

fn fit_config(cfg: &ExperimentConfig, frame_angle: f64) -> FitConfig {
    FitConfig {
        samples: cfg.fit_samples as usize,
        radii: 5,
        modes: cfg.fit_modes as usize,
        step: cfg.fit_step,
        seed: derive_seed(cfg.seed, 0xB0D1E),
        frame_angle,
    }
}

fn tensor_discretization(cfg: &ExperimentConfig) -> Result<Vec<Quantity>, ExperimentError> {
    let e = cfg.experiment;
    let cover = Cover::new(cfg.model);
    let family = StarRecurrentFamily::bundle(&cover, cfg.r_e, cfg.r_v, &fit_config(cfg, 0.0)).ctx(e)?;
    let base = cover.basepoint();
    let est = estimate_transitions(&cover, &family, &base, cfg.n_runs, &chain_config(cfg)).ctx(e)?;
    let mut q = Vec::new();
    chain_bookkeeping(&est, family.c, &mut q);
    let d = &est.diagnostics;
    q.push(Quantity::le("threshold_violation_fraction", d.threshold_violations as f64 / d.stages.max(1) as f64, 1e-3));

    let mut registry = OrbitRegistry::new(&cover);
    let walk = build_groupoid_walk(std::slice::from_ref(&est), &mut registry);
    let source = registry.label_of(&base);
    let support = walk.support();
    for (name, tau) in [("metric", &MetricTensor as &dyn ChartTensorField), ("volume_form", &VolumeForm)] {
        let field = TensorFieldOnX::restrict(cfg.model, tau, &support);
        let r = mu_harmonic_residual(&field, &walk, source).ctx(e)?;
        q.push(Quantity::le(format!("{name}_harmonic_residual"), r.residual, 1e-12));
        q.push(Quantity::info(format!("{name}_raw_residual"), r.raw_residual));
        q.push(Quantity::info(format!("{name}_escape_slack"), r.slack));
    }

    // Stored isometries against the deck-group derivative, alone and composed.
    let transitions = walk.entry(source).map(|w| w.transitions.as_slice()).unwrap_or(&[]);
    let mut single: f64 = 0.0;
    let mut closure: f64 = 0.0;
    let mut orthogonality: f64 = 0.0;
    for t in transitions {
        let g = t.isometry.target.deck.map();
        let expect = rotation(g.derivative(Complex64::new(0.0, 0.0)).arg());
        single = single.max((t.isometry.matrix() - expect).abs().max());
    }
    for a in transitions.iter().take(40) {
        for b in transitions.iter().take(40) {
            let s = compose(&invert(&a.isometry), &b.isometry).ctx(e)?;
            let g = b.isometry.target.deck.compose(&a.isometry.target.deck.inverse());
            let expect = rotation(g.map().derivative(a.isometry.target.coords.z()).arg());
            closure = closure.max((s.matrix() - expect).abs().max());
            orthogonality = orthogonality.max(s.orthogonality_defect());
        }
    }
    q.push(Quantity::le("isometry_vs_deck_derivative", single, 1e-9));
    q.push(Quantity::le("composition_vs_deck_product", closure, 1e-8));
    q.push(Quantity::le("composition_orthogonality", orthogonality, 1e-8));
    Ok(q)
}

fn holonomy(cfg: &ExperimentConfig) -> Result<Vec<Quantity>, ExperimentError> {
    let e = cfg.experiment;
    let m = cfg.model;
    let hyperbolic = m == ModelSpace::Hyperbolic;
    let frames = random_frames(cfg.n_runs as usize, derive_seed(cfg.seed, 0x401));
    let (mut curv, mut anti) = (0.0f64, 0.0f64);
    let target_curv = m.curvature();
    let mut span_dev = [0.0f64; 3];
    let (mut hol_dev, mut consistency, mut rotation_mismatch) = (0.0f64, 0.0f64, 0.0f64);
    let (mut k0, mut k1) = (0.0f64, 0.0f64);
    let mut hol_dims = Vec::new();
    for f in &frames {
        let o12 = curvature_form(m, f, 1, 2).0;
        curv = curv.max((o12 - target_curv).abs());
        anti = anti.max((o12 + curvature_form(m, f, 2, 1).0).abs());
        for (depth, dev) in span_dev.iter_mut().enumerate() {
            let want = if depth == 0 || !hyperbolic { 2.0 } else { 3.0 };
            *dev = dev.max((bracket_span_dim(m, f, depth) as f64 - want).abs());
        }
        let hd = infinitesimal_holonomy_dim(m, f);
        hol_dims.push(hd as f64);
        hol_dev = hol_dev.max((hd as f64 - if hyperbolic { 1.0 } else { 0.0 }).abs());
        consistency = consistency.max((hd as f64 + 2.0 - bracket_span_dim(m, f, 2) as f64).abs());
        rotation_mismatch = rotation_mismatch.max((bracket_span_dim(m, &f.rotated(1.0), 1) as f64 - bracket_span_dim(m, f, 1) as f64).abs());
        k0 = k0.max(verify_vertical_identity(m, f, 0));
        k1 = k1.max(verify_vertical_identity(m, f, 1));
    }
    let mean = hol_dims.iter().sum::<f64>() / hol_dims.len().max(1) as f64;
    let var = hol_dims.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / hol_dims.len().max(1) as f64;
    let mut q = vec![
        Quantity::info("frames", frames.len() as f64),
        Quantity::le("curvature_abs_err", curv, 1e-3),
        Quantity::le("curvature_antisymmetry", anti, 1e-3),
        Quantity::le("span_dim_depth0_dev", span_dev[0], 0.0),
        Quantity::le("span_dim_depth1_dev", span_dev[1], 0.0),
        Quantity::le("span_dim_depth2_dev", span_dev[2], 0.0),
        Quantity::le("span_dim_rotation_mismatch", rotation_mismatch, 0.0),
        Quantity::le("holonomy_dim_dev", hol_dev, 0.0),
        Quantity::le("holonomy_dim_variance", var, 0.0),
        Quantity::le("holonomy_plus_base_vs_span", consistency, 0.0),
        Quantity::le("vertical_identity_k0", k0, if hyperbolic { 1e-3 } else { 1e-6 }),
        Quantity::le("vertical_identity_k1", k1, if hyperbolic { 1e-2 } else { 1e-6 }),
    ];
    // Scalarized Laplacian of dh, h = Re(z + 0.3z² + 0.2i z³).
    let h = HarmonicPolynomial::new(vec![
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(0.3, 0.0),
        Complex64::new(0.0, 0.2),
    ]);
    let lap_frames = random_frames(20, derive_seed(cfg.seed, 0x1A9));
    if hyperbolic {
        let rep = laplacian_commutation(m, &h, &lap_frames, &[0.1, 0.05, 0.025]).ctx(e)?;
        for (t, err) in rep.steps.iter().zip(&rep.relative_errors) {
            q.push(Quantity::info(format!("laplacian_rel_err_step_{t}"), *err));
        }
        q.push(Quantity::le("laplacian_rel_err", rep.finest_error(), 1e-2));
        q.push(Quantity::ge("laplacian_order", rep.min_order(), 1.8));
    } else {
        let mut worst: f64 = 0.0;
        for f in &lap_frames {
            let lap = crate::laplacian::horizontal_laplacian(m, |g: &Frame| crate::laplacian::scalarized_differential(m, &h, g).data, f, 0.025)
                .ctx(e)?;
            worst = worst.max(lap.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
        q.push(Quantity::le("laplacian_abs_err", worst, 1e-8));
    }
    Ok(q)
}

/// Vertices of the equilateral triangle with all angles `π/4`, centred at 0.
pub fn quarter_pi_triangle() -> [ChartPoint; 3] {
    let c = FRAC_PI_4.cos();
    let side = (c / (1.0 - c)).acosh();
    let m = ModelSpace::Hyperbolic;
    let vertex = |rho: f64, k: usize| ChartPoint(Complex64::from_polar(m.chart_radius(rho), 2.0 * PI * k as f64 / 3.0));
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if m.dist(vertex(mid, 0), vertex(mid, 1)).expect("inside the disk") < side {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    [vertex(rho, 0), vertex(rho, 1), vertex(rho, 2)]
}

/// Closed loop through `vertices` with `per_side` geodesic sub-segments per side.
pub fn geodesic_loop(model: ModelSpace, vertices: &[ChartPoint], per_side: usize) -> Result<Vec<ChartPoint>, GeometryError> {
    let mut pts = vec![vertices[0]];
    for i in 0..vertices.len() {
        let (a, b) = (vertices[i], vertices[(i + 1) % vertices.len()]);
        let v = model.log_map(a, b)?;
        for k in 1..=per_side {
            pts.push(if k == per_side { b } else { model.exp_map(a, v, k as f64 / per_side as f64)? });
        }
    }
    Ok(pts)
}

/// Net frame rotation around the `π/4` triangle with chart-straight sub-segments.
pub fn triangle_rotation(per_side: usize) -> Result<f64, BundleError> {
    let m = ModelSpace::Hyperbolic;
    let pts = geodesic_loop(m, &quarter_pi_triangle(), per_side)?;
    let start = Frame::new(pts[0], 0.0);
    let end = transport_polyline(m, start, &pts)?;
    Ok(crate::bundle::wrap_angle(end.angle - start.angle))
}

fn transport(cfg: &ExperimentConfig) -> Result<Vec<Quantity>, ExperimentError> {
    let e = cfg.experiment;
    let m = cfg.model;
    let mut q = Vec::new();
    if m == ModelSpace::Hyperbolic {
        let ns = [8usize, 16, 32, 64];
        let mut errs = Vec::new();
        for n in ns {
            let rot = triangle_rotation(n).ctx(e)?;
            let err = (rot.abs() - FRAC_PI_4).abs();
            q.push(Quantity::info(format!("gauss_bonnet_err_n{n}"), err));
            errs.push(err);
        }
        let order = errs.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);
        q.push(Quantity::le("gauss_bonnet_err", *errs.last().unwrap(), 1e-3));
        q.push(Quantity::ge("gauss_bonnet_order", order, 1.8));
    } else {
        let tri = [ChartPoint::new(0.0, 0.0), ChartPoint::new(1.0, 0.0), ChartPoint::new(0.5, 0.75f64.sqrt())];
        let pts = geodesic_loop(m, &tri, 16).ctx(e)?;
        let end = transport_polyline(m, Frame::new(pts[0], 0.3), &pts).ctx(e)?;
        q.push(Quantity::le("flat_loop_rotation", (end.angle - 0.3).abs(), 1e-12));
    }
    // Forward then reverse along random polylines.
    let mut rng = path_rng(derive_seed(cfg.seed, 0x7A), 0, Stream::Diffusion);
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.n_runs {
        let mut pts = vec![ChartPoint(Complex64::from_polar(0.5 * rng.random::<f64>(), rng.random_range(-PI..PI)))];
        for _ in 0..20 {
            let last = pts.last().unwrap().z();
            let next = last + Complex64::from_polar(0.05, rng.random_range(-PI..PI));
            pts.push(ChartPoint(if next.norm() < 0.8 { next } else { last * 0.9 }));
        }
        let length: f64 = pts.windows(2).map(|w| m.dist(w[0], w[1]).unwrap_or(0.0)).sum();
        let f0 = Frame::new(pts[0], rng.random_range(-PI..PI));
        let there = transport_polyline(m, f0, &pts).ctx(e)?;
        let rev: Vec<ChartPoint> = pts.iter().rev().copied().collect();
        let back = transport_polyline(m, there, &rev).ctx(e)?;
        worst = worst.max(crate::bundle::wrap_angle(back.angle - f0.angle).abs() / length.max(1e-12));
    }
    q.push(Quantity::le("reversal_err_per_length", worst, 1e-6));
    Ok(q)
}

fn exit_sampling(cfg: &ExperimentConfig) -> Result<Vec<Quantity>, ExperimentError> {
    let e = cfg.experiment;
    let m = cfg.model;
    let n = cfg.n_runs;
    let region = Ball::new(ChartPoint::ORIGIN, cfg.r_v);
    let big_r = m.chart_radius(cfg.r_v);
    let diffusion = DiffusionConfig { step: cfg.step, rng_seed: cfg.seed, max_steps: MAX_STEPS };
    let mut q = Vec::new();

    // Simulated exits from the centre: uniform angle.
    let seed = derive_seed(cfg.seed, 0xE1);
    let centre = HorizontalState::new(Frame::new(ChartPoint::ORIGIN, 0.0));
    let angles = parallel_exits(n, |i| {
        let mut rng = path_rng(seed, i, Stream::Diffusion);
        simulate_to_exit(m, &centre, &region, &diffusion, &mut rng).map(|s| s.frame.base.z().arg())
    })
    .ctx(e)?;
    q.push(Quantity::ge("centre_exit_chi2_p", chi_square_uniform(&angle_histogram(&angles, 32)).p_value, ALPHA));

    // Simulated exits from distance r_E: pull back by the disk automorphism to uniform.
    let seed = derive_seed(cfg.seed, 0xE2);
    let y = ChartPoint::new(m.chart_radius(cfg.r_e), 0.0);
    let w = Complex64::new(y.x() / big_r, 0.0);
    let off = HorizontalState::new(Frame::new(y, 0.0));
    let exits = parallel_exits(n, |i| {
        let mut rng = path_rng(seed, i, Stream::Diffusion);
        simulate_to_exit(m, &off, &region, &diffusion, &mut rng).map(|s| s.frame.base.z())
    })
    .ctx(e)?;
    let pulled: Vec<f64> = exits
        .iter()
        .map(|z| {
            let zeta = z / z.norm();
            ((zeta - w) / (1.0 - w.conj() * zeta)).arg()
        })
        .collect();
    q.push(Quantity::ge("offcentre_exit_ks_p", ks_test(&pulled, |a| (a + PI) / (2.0 * PI)).p_value, ALPHA));

    // Exact sampler against the simulated marginal.
    let mut rng = path_rng(derive_seed(cfg.seed, 0xE3), 0, Stream::Diffusion);
    let exact: Vec<f64> = (0..n)
        .map(|_| sample_exit_exact(m, y, &region, &mut rng).map(|p| p.z().arg()))
        .collect::<Result<_, _>>()
        .ctx(e)?;
    let simulated: Vec<f64> = exits.iter().map(|z| z.arg()).collect();
    q.push(Quantity::ge("exact_vs_simulated_ks_p", ks_two_sample(&exact, &simulated).p_value, ALPHA));

    // Flat unit disk from (0.5, 0): Poisson kernel 3 at angle 0, 1/3 at π.
    let flat_region = Ball::new(ChartPoint::ORIGIN, 1.0);
    let mut rng = path_rng(derive_seed(cfg.seed, 0xE4), 0, Stream::Diffusion);
    let shift = PI / 32.0;
    let half = ChartPoint::new(0.5, 0.0);
    let shifted: Vec<f64> = (0..100_000)
        .map(|_| sample_exit_exact(ModelSpace::Flat, half, &flat_region, &mut rng).map(|p| p.z().arg() + shift))
        .collect::<Result<_, _>>()
        .ctx(e)?;
    let hist = angle_histogram(&shifted, 32);
    let ratio = hist[16] as f64 / hist[0].max(1) as f64;
    q.push(Quantity::info("poisson_ratio", ratio));
    q.push(Quantity::le("poisson_ratio_rel_err", (ratio - 9.0).abs() / 9.0, 0.1));

    let mut rng = path_rng(derive_seed(cfg.seed, 0xE5), 0, Stream::Diffusion);
    let centred: Vec<f64> = (0..100_000)
        .map(|_| sample_exit_exact(ModelSpace::Flat, ChartPoint::ORIGIN, &flat_region, &mut rng).map(|p| p.z().arg()))
        .collect::<Result<_, _>>()
        .ctx(e)?;
    q.push(Quantity::ge("exact_centre_chi2_p", chi_square_uniform(&angle_histogram(&centred, 32)).p_value, ALPHA));
    Ok(q)
}

fn parallel_exits<T: Send>(
    n: u64,
    f: impl Fn(u64) -> Result<T, BundleError> + Sync + Send,
) -> Result<Vec<T>, BundleError> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

fn harnack(cfg: &ExperimentConfig) -> Result<Vec<Quantity>, ExperimentError> {
    let e = cfg.experiment;
    let mut q = vec![
        Quantity::near("flat_unit_half_bound", base_harnack_bound(ModelSpace::Flat, 0.5, 1.0), 3.0, 1e-9),
        Quantity::near("degenerate_bound", base_harnack_bound(cfg.model, 1e-12, cfg.r_v), 1.0, 1e-9),
    ];
    let base = base_harnack_bound(cfg.model, cfg.r_e, cfg.r_v);
    q.push(Quantity::info("base_bound", base));
    // The bound is a property of the model-space balls, so no cover is needed.
    let fitted = fit_bundle_densities(cfg.model, cfg.r_e, cfg.r_v, &fit_config(cfg, 0.0)).ctx(e)?;
    let rotated = fit_bundle_densities(cfg.model, cfg.r_e, cfg.r_v, &fit_config(cfg, 1.0)).ctx(e)?;
    let raw = fitted.raw_bound;
    q.push(Quantity::info("bundle_raw_bound", raw));
    q.push(Quantity::le("rotated_copy_rel_diff", (rotated.raw_bound - raw).abs() / raw, 0.1));
    if cfg.model == ModelSpace::Flat {
        q.push(Quantity::le("bundle_vs_base_rel_diff", (raw - base).abs() / base, 0.1));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_has_the_right_shape() {
        let m = ModelSpace::Hyperbolic;
        let v = quarter_pi_triangle();
        let side = m.dist(v[0], v[1]).unwrap();
        assert!((side - 1.528570919480998).abs() < 1e-9, "{side}");
        assert!((m.dist(v[1], v[2]).unwrap() - side).abs() < 1e-12);
    }

    #[test]
    fn triangle_rotation_converges_to_area() {
        let coarse = (triangle_rotation(8).unwrap().abs() - FRAC_PI_4).abs();
        let fine = (triangle_rotation(64).unwrap().abs() - FRAC_PI_4).abs();
        assert!(fine < 1e-3 && fine < coarse / 32.0, "{coarse} {fine}");
    }

    #[test]
    fn dihedral_score_of_symmetric_counts_is_zero() {
        let cover = Cover::flat();
        let mut reg = OrbitRegistry::new(&cover);
        let records: Vec<crate::lyons_sullivan::ChainRecord> = Vec::new();
        let mut est = crate::lyons_sullivan::aggregate(&mut reg, crate::lyons_sullivan::Level::Base, &cover.basepoint(), &records, |_| None);
        est.total_runs = 40;
        for (m, k) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let fiber = crate::covering::FiberPoint::from_deck(crate::covering::DeckElement::Lattice { m, n: k });
            est.weights.push(crate::lyons_sullivan::WeightEntry {
                label: FiberLabel::Lattice(m, k),
                fiber,
                count: 10,
                frequency: 0.25,
                standard_error: crate::stats::wilson_se(10, 40),
            });
        }
        assert_eq!(dihedral_max_z(&est), 0.0);
        est.weights[0].count = 16;
        assert!(dihedral_max_z(&est) > 1.0);
    }

    #[test]
    fn quick_experiments_pass() {
        for model in [ModelSpace::Flat, ModelSpace::Hyperbolic] {
            for exp in [Experiment::Holonomy, Experiment::Transport] {
                let cfg = ExperimentConfig::defaults(exp, model);
                let r = run_experiment(&cfg).unwrap();
                assert!(r.pass, "{exp} {model:?}: {:?}", r.failures().collect::<Vec<_>>());
            }
        }
    }
}
