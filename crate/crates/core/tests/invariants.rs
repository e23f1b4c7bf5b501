//! Randomized checks of the structural invariants across modules.

use std::f64::consts::PI;

use lsdisc::bundle::{gaussian_increment, horizontal_step, transport_polyline, wrap_angle, DiffusionConfig, Frame, HorizontalState};
use lsdisc::covering::{Cover, DeckElement, FiberPoint, OrbitRegistry};
use lsdisc::geometry::{ChartPoint, MobiusMap, ModelSpace};
use lsdisc::groupoid::{
    apply_to_tensor, compose, invert, push_components, rotation, scalarize, ChartTensorField, FnField, Isometry, MetricTensor,
    ScalarizedValue, Valence, VolumeForm,
};
use lsdisc::harness::{parse_config_str, Experiment, ExperimentConfig, Quantity};
use lsdisc::holonomy::{bracket_span_dim, curvature_form};
use lsdisc::rng::{path_rng, Stream};
use num_complex::Complex64;
use proptest::prelude::*;

const H: ModelSpace = ModelSpace::Hyperbolic;

fn disk_point(max_r: f64) -> impl Strategy<Value = ChartPoint> {
    (0.0..max_r, -PI..PI).prop_map(|(r, a)| ChartPoint(Complex64::from_polar(r, a)))
}

fn word(max_len: usize) -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop::sample::select(vec![1i8, 2, 3, 4, -1, -2, -3, -4]), 0..=max_len)
}

fn valence() -> impl Strategy<Value = Valence> {
    prop::sample::select(vec![Valence(0, 0), Valence(1, 0), Valence(0, 1), Valence(1, 1), Valence(2, 0), Valence(0, 2)])
}

fn fiber(cover: &Cover, w: &[i8]) -> FiberPoint {
    FiberPoint::from_deck(cover.word_element(w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hyperbolic_distance_is_mobius_invariant(a in disk_point(0.7), b in disk_point(0.7), to in disk_point(0.8), rot in -PI..PI) {
        let m = MobiusMap::disk_translation_to(to).compose(&MobiusMap::rotation(rot));
        let d = H.dist(a, b).unwrap();
        let e = H.dist(m.apply(H, a).unwrap(), m.apply(H, b).unwrap()).unwrap();
        prop_assert!((d - e).abs() < 1e-10 * d.max(1.0), "{d} {e}");
    }

    #[test]
    fn flat_distance_is_translation_invariant(ax in -5.0..5.0f64, ay in -5.0..5.0f64, bx in -5.0..5.0f64, by in -5.0..5.0f64, m in -3i64..3, n in -3i64..3) {
        let flat = ModelSpace::Flat;
        let g = DeckElement::Lattice { m, n };
        let (a, b) = (ChartPoint::new(ax, ay), ChartPoint::new(bx, by));
        let d = flat.dist(a, b).unwrap();
        let e = flat.dist(g.apply(flat, a).unwrap(), g.apply(flat, b).unwrap()).unwrap();
        prop_assert!((d - e).abs() < 1e-10);
    }

    #[test]
    fn triangle_inequality(a in disk_point(0.8), b in disk_point(0.8), c in disk_point(0.8)) {
        let (ab, bc, ac) = (H.dist(a, b).unwrap(), H.dist(b, c).unwrap(), H.dist(a, c).unwrap());
        prop_assert!(ac <= ab + bc + 1e-10);
    }

    #[test]
    fn deck_words_evaluate_to_their_matrices(w in word(6)) {
        let cover = Cover::hyperbolic();
        let g = cover.word_element(&w);
        let map = cover.group().unwrap().evaluate(g.word());
        // Entries grow geometrically with word length, so compare relative to their size.
        let scale = g.map().normalized().m.iter().flatten().map(|c| c.norm()).fold(1.0, f64::max);
        prop_assert!(map.distance_to(&g.map()) < 1e-9 * scale, "{} at scale {scale}", map.distance_to(&g.map()));
        prop_assert!((g.map().normalized().det().norm() - 1.0).abs() < 1e-9);
        let back = g.inverse().compose(&g);
        prop_assert!(back.map().distance_to(&MobiusMap::IDENTITY) < 1e-8);
    }

    #[test]
    fn fiber_coordinates_are_deck_images_of_the_basepoint(w in word(4)) {
        let cover = Cover::hyperbolic();
        let x = fiber(&cover, &w);
        let expect = x.deck.apply(H, ChartPoint::ORIGIN).unwrap();
        prop_assert!((x.coords.z() - expect.z()).norm() < 1e-9);
        let near = cover.nearest_fiber_point(x.coords).unwrap();
        prop_assert!(near.distance < 1e-8);
    }

    #[test]
    fn frames_stay_orthonormal_along_diffusion(seed in 0u64..1000, angle in -PI..PI) {
        let cfg = DiffusionConfig { step: 1e-3, rng_seed: seed, max_steps: 10_000 };
        let mut rng = path_rng(seed, 0, Stream::Diffusion);
        let mut s = HorizontalState::new(Frame::new(ChartPoint::new(0.1, -0.2), angle));
        for _ in 0..1000 {
            let n = gaussian_increment(&mut rng, cfg.step.sqrt());
            s = horizontal_step(H, &s, (n.re, n.im), &cfg);
            if s.frame.base.z().norm() > 0.95 {
                break;
            }
        }
        let [e1, e2] = s.frame.vectors(H);
        let l2 = H.conformal_factor(s.frame.base).powi(2);
        let dot = |a: Complex64, b: Complex64| l2 * (a.re * b.re + a.im * b.im);
        prop_assert!((dot(e1, e1) - 1.0).abs() < 1e-9);
        prop_assert!((dot(e2, e2) - 1.0).abs() < 1e-9);
        prop_assert!(dot(e1, e2).abs() < 1e-9);
        prop_assert!(s.frame.angle > -PI && s.frame.angle <= PI);
    }

    #[test]
    fn transport_reversal_returns_the_frame(pts in prop::collection::vec(disk_point(0.6), 2..12), angle in -PI..PI) {
        let f = Frame::new(pts[0], angle);
        let there = transport_polyline(H, f, &pts).unwrap();
        let rev: Vec<ChartPoint> = pts.iter().rev().copied().collect();
        let back = transport_polyline(H, there, &rev).unwrap();
        let length: f64 = pts.windows(2).map(|w| H.dist(w[0], w[1]).unwrap()).sum();
        prop_assert!((back.base.z() - f.base.z()).norm() < 1e-12);
        prop_assert!(wrap_angle(back.angle - f.angle).abs() <= 1e-6 * length.max(1.0));
    }

    #[test]
    fn scalarization_is_equivariant_under_frame_rotation(v in valence(), p in disk_point(0.8), angle in -PI..PI, g in -PI..PI, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let comps: Vec<f64> = (0..v.components()).map(|_| rng.random::<f64>() - 0.5).collect();
        let tau = FnField { valence: v, f: move |_p: ChartPoint| comps.clone() };
        let frame = Frame::new(p, angle);
        let direct = scalarize(H, &tau, &frame.rotated(g));
        let via_action = push_components(&scalarize(H, &tau, &frame), &rotation(-g));
        prop_assert!(direct.max_abs_diff(&via_action) < 1e-10 * via_action.max_abs().max(1.0));
    }

    #[test]
    fn groupoid_composition_matches_deck_products(w1 in word(3), w2 in word(3)) {
        let cover = Cover::hyperbolic();
        let mut reg = OrbitRegistry::new(&cover);
        let x0 = cover.basepoint();
        let x1 = fiber(&cover, &w1);
        let x2 = FiberPoint::from_deck(x1.deck.compose(&cover.word_element(&w2)));
        let labelled = |reg: &mut OrbitRegistry, x: &FiberPoint| (reg.label_of(x), x.clone());
        let (l0, l1, l2) = (labelled(&mut reg, &x0), labelled(&mut reg, &x1), labelled(&mut reg, &x2));
        let a = Isometry::between_representatives(l0.clone(), l1.clone());
        let b = Isometry::between_representatives(l1, l2.clone());
        let ab = compose(&a, &b).unwrap();
        let direct = Isometry::between_representatives(l0.clone(), l2);
        prop_assert!((ab.matrix() - direct.matrix()).abs().max() < 1e-8);
        prop_assert!(ab.orthogonality_defect() < 1e-8);
        let round = compose(&a, &invert(&a)).unwrap();
        prop_assert!((round.matrix() - Isometry::identity(l0.1, l0.0).matrix()).abs().max() < 1e-12);
        prop_assert!(compose(&b, &a).is_err() || l0.0 == ab.target_label);
    }

    #[test]
    fn parallel_tensors_are_carried_to_themselves(w in word(4)) {
        let cover = Cover::hyperbolic();
        let mut reg = OrbitRegistry::new(&cover);
        let x0 = cover.basepoint();
        let x1 = fiber(&cover, &w);
        let iso = Isometry::between_representatives((reg.label_of(&x0), x0.clone()), (reg.label_of(&x1), x1.clone()));
        for tau in [&MetricTensor as &dyn ChartTensorField, &VolumeForm] {
            let at0 = scalarize(H, tau, &Frame::new(x0.coords, x0.representative_angle()));
            let at1 = scalarize(H, tau, &Frame::new(x1.coords, x1.representative_angle()));
            let carried = apply_to_tensor(&iso, &at0).unwrap();
            prop_assert!(carried.max_abs_diff(&at1) < 1e-9);
        }
    }

    #[test]
    fn bracket_span_is_invariant_under_the_right_action(p in disk_point(0.7), angle in -PI..PI, g in -PI..PI) {
        let f = Frame::new(p, angle);
        prop_assert_eq!(bracket_span_dim(H, &f, 1), bracket_span_dim(H, &f.rotated(g), 1));
        prop_assert_eq!(bracket_span_dim(ModelSpace::Flat, &f, 2), bracket_span_dim(ModelSpace::Flat, &f.rotated(g), 2));
    }

    #[test]
    fn curvature_form_is_antisymmetric(p in disk_point(0.7), angle in -PI..PI) {
        let f = Frame::new(p, angle);
        let (a, b) = (curvature_form(H, &f, 1, 2).0, curvature_form(H, &f, 2, 1).0);
        prop_assert!((a + b).abs() < 1e-3);
        prop_assert!(curvature_form(H, &f, 1, 1).0.abs() < 1e-3);
    }

    #[test]
    fn emitted_configs_parse_back(exp in prop::sample::select(Experiment::ALL.to_vec()), flat in any::<bool>(), seed in any::<u64>(), runs in 1u64..1_000_000, scale in 0.5..2.0f64) {
        let model = if flat { ModelSpace::Flat } else { H };
        let mut cfg = ExperimentConfig::defaults(exp, model);
        cfg.seed = seed;
        cfg.n_runs = runs;
        cfg.step *= scale;
        let parsed = parse_config_str(&cfg.emit()).unwrap();
        prop_assert_eq!(parsed.config, cfg);
    }

    #[test]
    fn pass_flags_are_recomputable(value in prop::num::f64::NORMAL, budget in prop::num::f64::NORMAL) {
        for q in [Quantity::le("q", value, budget), Quantity::ge("q", value, budget), Quantity::info("q", value)] {
            prop_assert_eq!(q.pass, q.recomputed_pass());
        }
    }
}

#[test]
fn scalarized_values_reject_bad_shapes() {
    assert!(ScalarizedValue::new(Valence(1, 1), vec![0.0; 3]).is_err());
    assert!(ScalarizedValue::new(Valence(1, 1), vec![0.0; 4]).is_ok());
}
