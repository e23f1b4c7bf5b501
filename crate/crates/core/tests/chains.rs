//! Monte Carlo properties of the discretizing chain.

use std::collections::HashMap;

use lsdisc::bundle::{gaussian_increment, horizontal_step, DiffusionConfig, Frame, HorizontalState};
use lsdisc::covering::{Cover, DeckElement, FiberLabel, FiberPoint, OrbitRegistry};
use lsdisc::geometry::{ChartPoint, ModelSpace};
use lsdisc::lyons_sullivan::{estimate_transitions, run_chains, ChainConfig, StarRecurrentFamily};
use lsdisc::rng::{path_rng, Stream};
use lsdisc::stats::MeanVar;

fn chain_cfg(step: f64, seed: u64, truncation: f64, acceptances: usize) -> ChainConfig {
    ChainConfig { diffusion: DiffusionConfig { step, rng_seed: seed, max_steps: 100_000_000 }, truncation, acceptances }
}

fn lattice(x: &FiberPoint) -> (i64, i64) {
    match x.deck {
        DeckElement::Lattice { m, n } => (m, n),
        _ => unreachable!("flat fiber points are lattice translations"),
    }
}

/// Two-proportion z with pooled variance and continuity correction.
fn two_sample_z(c1: u64, n1: u64, c2: u64, n2: u64) -> f64 {
    let p = (c1 + c2) as f64 / (n1 + n2) as f64;
    let sd = (p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let dev = (c1 as f64 / n1 as f64 - c2 as f64 / n2 as f64).abs() - 0.5 * (1.0 / n1 as f64 + 1.0 / n2 as f64);
    dev.max(0.0) / sd
}

#[test]
fn second_acceptance_is_markov_in_the_first() {
    let cover = Cover::flat();
    let family = StarRecurrentFamily::base(&cover, 0.1, 0.2).unwrap();
    let records = run_chains(&cover, &family, &cover.basepoint(), 30_000, &chain_cfg(4e-4, 7, 10.0, 2)).unwrap();

    // Condition on the most frequent first landing point y.
    let mut first: HashMap<(i64, i64), u64> = HashMap::new();
    for r in &records {
        if let Some(x) = r.accepted_fiber(0) {
            *first.entry(lattice(x)).or_default() += 1;
        }
    }
    let y = *first.iter().max_by_key(|(k, c)| (**c, **k)).unwrap().0;
    let mut given_y: HashMap<(i64, i64), u64> = HashMap::new();
    let mut n_given = 0u64;
    for r in records.iter().filter(|r| r.accepted_fiber(0).map(lattice) == Some(y)) {
        n_given += 1;
        if let Some(x) = r.accepted_fiber(1) {
            let (m, n) = lattice(x);
            *given_y.entry((m - y.0, n - y.1)).or_default() += 1;
        }
    }
    assert!(n_given > 1000, "{n_given}");

    // Fresh chains started at y, with an independent seed.
    let start = FiberPoint::from_deck(DeckElement::Lattice { m: y.0, n: y.1 });
    let fresh = estimate_transitions(&cover, &family, &start, 30_000, &chain_cfg(4e-4, 8, 10.0, 1)).unwrap();
    let mut worst: f64 = 0.0;
    for w in &fresh.weights {
        let FiberLabel::Lattice(m, n) = w.label else { unreachable!() };
        let c_cond = given_y.get(&(m - y.0, n - y.1)).copied().unwrap_or(0);
        if c_cond + w.count < 20 {
            continue;
        }
        worst = worst.max(two_sample_z(c_cond, n_given, w.count, fresh.total_runs));
    }
    assert!(worst <= 3.0, "largest per-label z = {worst}");
}

#[test]
fn escape_fraction_decreases_with_truncation() {
    let escaped = |cover: &Cover, family: &StarRecurrentFamily, step: f64, runs: u64, radii: &[f64]| -> Vec<u64> {
        radii
            .iter()
            .map(|&t| {
                let recs = run_chains(cover, family, &cover.basepoint(), runs, &chain_cfg(step, 3, t, 1)).unwrap();
                recs.iter().filter(|r| r.escaped).count() as u64
            })
            .collect()
    };
    let h = Cover::hyperbolic();
    let hf = StarRecurrentFamily::base(&h, 0.2, 0.5).unwrap();
    let he = escaped(&h, &hf, 1e-3, 1500, &[6.0, 8.0, 10.0]);
    assert!(he[0] >= he[1] && he[1] >= he[2] && he[0] > he[2], "{he:?}");

    let f = Cover::flat();
    let ff = StarRecurrentFamily::base(&f, 0.1, 0.2).unwrap();
    let fe = escaped(&f, &ff, 1e-3, 1500, &[5.0, 10.0, 20.0]);
    assert!(fe[0] >= fe[1] && fe[1] >= fe[2], "{fe:?}");
}

#[test]
fn generator_is_consistent_under_step_refinement() {
    let h = ModelSpace::Hyperbolic;
    let mean_dist = |step: f64| {
        let n_steps = (1.0 / step).round() as usize;
        let cfg = DiffusionConfig { step, rng_seed: 0, max_steps: n_steps as u64 };
        let mut acc = MeanVar::default();
        for path in 0..4000 {
            let mut rng = path_rng(step.to_bits(), path, Stream::Diffusion);
            let mut s = HorizontalState::new(Frame::new(ChartPoint::ORIGIN, 0.0));
            for _ in 0..n_steps {
                let g = gaussian_increment(&mut rng, step.sqrt());
                s = horizontal_step(h, &s, (g.re, g.im), &cfg);
            }
            acc.push(h.dist(ChartPoint::ORIGIN, s.frame.base).unwrap());
        }
        acc
    };
    let (coarse, fine) = (mean_dist(0.01), mean_dist(0.01 / 16.0));
    let se = (coarse.standard_error().powi(2) + fine.standard_error().powi(2)).sqrt();
    assert!((coarse.mean - fine.mean).abs() <= 3.0 * se, "{} vs {} (se {se})", coarse.mean, fine.mean);
}

#[test]
fn transition_estimates_are_deck_equivariant() {
    let cover = Cover::hyperbolic();
    let family = StarRecurrentFamily::base(&cover, 0.2, 0.5).unwrap();
    let cfg = chain_cfg(1e-3, 5, 8.0, 1);
    let g = cover.word_element(&[1, -3]);
    let x = FiberPoint::from_deck(g.clone());
    let from_base = run_chains(&cover, &family, &cover.basepoint(), 400, &cfg).unwrap();
    let truncation_shift = ChainConfig { truncation: 8.0 + ModelSpace::Hyperbolic.dist(ChartPoint::ORIGIN, x.coords).unwrap(), ..cfg };
    let from_x = run_chains(&cover, &family, &x, 400, &truncation_shift).unwrap();

    // Same Gaussian streams: g carries every landing point from the basepoint to the one from g·x₀.
    let mut registry = OrbitRegistry::new(&cover);
    let mut agree = 0;
    let mut compared = 0;
    for (a, b) in from_base.iter().zip(&from_x) {
        let (Some(pa), Some(pb)) = (a.accepted_fiber(0), b.accepted_fiber(0)) else { continue };
        compared += 1;
        let carried = FiberPoint::from_deck(g.compose(&pa.deck));
        if registry.label_of(&carried) == registry.label_of(pb) {
            agree += 1;
        }
    }
    assert!(compared > 200, "{compared}");
    assert!(agree as f64 >= 0.99 * compared as f64, "{agree}/{compared}");
}
