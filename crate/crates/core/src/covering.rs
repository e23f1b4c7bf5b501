//! Deck groups of the two covers and bookkeeping for the fiber `X = π⁻¹(x)`.
//!
//! The flat cover is `ℝ² → ℝ²/ℤ²`; the hyperbolic cover is the Poincaré disk
//! over the genus-2 surface obtained from the regular octagon with vertex
//! angles π/4. Orbit points of the basepoint 0 are the fiber points.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ChartPoint, GeometryError, MobiusMap, ModelSpace};

pub const MAX_REDUCTION_STEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoveringError {
    #[error("Dirichlet reduction did not terminate within {0} steps")]
    ReductionFailure(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("deck element does not belong to the {0} cover")]
    WrongModel(&'static str),
}

/// A generator letter: `±1 = a₁^{±1}`, `±2 = b₁^{±1}`, `±3 = a₂^{±1}`, `±4 = b₂^{±1}`.
pub type Letter = i8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DeckElement {
    Lattice { m: i64, n: i64 },
    Fuchsian { map: MobiusMap, word: Vec<Letter> },
}

impl DeckElement {
    pub fn identity(model: ModelSpace) -> Self {
        match model {
            ModelSpace::Flat => DeckElement::Lattice { m: 0, n: 0 },
            ModelSpace::Hyperbolic => DeckElement::Fuchsian { map: MobiusMap::IDENTITY, word: Vec::new() },
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            DeckElement::Lattice { m, n } => *m == 0 && *n == 0,
            DeckElement::Fuchsian { map, .. } => map.distance_to(&MobiusMap::IDENTITY) < 1e-9,
        }
    }

    pub fn model(&self) -> ModelSpace {
        match self {
            DeckElement::Lattice { .. } => ModelSpace::Flat,
            DeckElement::Fuchsian { .. } => ModelSpace::Hyperbolic,
        }
    }

    /// The isometry as a Möbius map (a translation in the flat case).
    pub fn map(&self) -> MobiusMap {
        match self {
            DeckElement::Lattice { m, n } => MobiusMap::euclidean(0.0, Complex64::new(*m as f64, *n as f64)),
            DeckElement::Fuchsian { map, .. } => *map,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &DeckElement) -> DeckElement {
        match (self, other) {
            (DeckElement::Lattice { m: a, n: b }, DeckElement::Lattice { m: c, n: d }) => {
                DeckElement::Lattice { m: a + c, n: b + d }
            }
            (DeckElement::Fuchsian { map: f, word: w1 }, DeckElement::Fuchsian { map: g, word: w2 }) => {
                let mut word = w1.clone();
                for &l in w2 {
                    push_letter(&mut word, l);
                }
                DeckElement::Fuchsian { map: f.compose(g), word }
            }
            _ => panic!("composing deck elements of different covers"),
        }
    }

    pub fn inverse(&self) -> DeckElement {
        match self {
            DeckElement::Lattice { m, n } => DeckElement::Lattice { m: -m, n: -n },
            DeckElement::Fuchsian { map, word } => DeckElement::Fuchsian {
                map: map.inverse(),
                word: word.iter().rev().map(|l| -l).collect(),
            },
        }
    }

    #[inline]
    pub fn apply_z(&self, z: Complex64) -> Complex64 {
        match self {
            DeckElement::Lattice { m, n } => z + Complex64::new(*m as f64, *n as f64),
            DeckElement::Fuchsian { map, .. } => map.apply_z(z),
        }
    }

    #[inline]
    pub fn apply_inverse_z(&self, z: Complex64) -> Complex64 {
        match self {
            DeckElement::Lattice { m, n } => z - Complex64::new(*m as f64, *n as f64),
            DeckElement::Fuchsian { map, .. } => {
                let [[a, b], [c, d]] = map.m;
                (d * z - b) / (a - c * z)
            }
        }
    }

    pub fn apply(&self, model: ModelSpace, p: ChartPoint) -> Result<ChartPoint, GeometryError> {
        model.check(ChartPoint(self.apply_z(p.z())))
    }

    /// Angle by which the differential rotates tangent vectors at `p`.
    #[inline]
    pub fn turn_at(&self, p: ChartPoint) -> f64 {
        match self {
            DeckElement::Lattice { .. } => 0.0,
            DeckElement::Fuchsian { map, .. } => map.derivative(p.z()).arg(),
        }
    }

    pub fn word(&self) -> &[Letter] {
        match self {
            DeckElement::Lattice { .. } => &[],
            DeckElement::Fuchsian { word, .. } => word,
        }
    }
}

fn push_letter(word: &mut Vec<Letter>, l: Letter) {
    if word.last() == Some(&-l) {
        word.pop();
    } else {
        word.push(l);
    }
}

/// Genus-2 surface group realized by side pairings of the regular octagon
/// with vertex angles π/4 centred at the origin.
#[derive(Debug, Clone)]
pub struct FuchsianGroup {
    /// Indexed by `letter_index`: a₁, b₁, a₂, b₂, a₁⁻¹, b₁⁻¹, a₂⁻¹, b₂⁻¹.
    generators: [MobiusMap; 8],
    pub inradius: f64,
}

fn letter_index(l: Letter) -> usize {
    debug_assert!(l != 0 && l.abs() <= 4);
    if l > 0 {
        (l - 1) as usize
    } else {
        (-l + 3) as usize
    }
}

const LETTERS: [Letter; 8] = [1, 2, 3, 4, -1, -2, -3, -4];

impl FuchsianGroup {
    pub fn genus_two() -> Self {
        let inradius = (1.0 / (PI / 8.0).tan()).acosh();
        let mid = |j: usize| j as f64 * PI / 4.0 + PI / 8.0;
        // Rotate side j to face side k, then translate across side k.
        let pairing = |j: usize, k: usize| {
            MobiusMap::hyperbolic_translation(mid(k), 2.0 * inradius)
                .compose(&MobiusMap::rotation(mid(k) + PI - mid(j)))
        };
        // Sides read a₁ b₁ a₁⁻¹ b₁⁻¹ a₂ b₂ a₂⁻¹ b₂⁻¹ counterclockwise from angle π/8.
        let a1 = pairing(2, 0);
        let b1 = pairing(1, 3);
        let a2 = pairing(6, 4);
        let b2 = pairing(5, 7);
        FuchsianGroup {
            generators: [a1, b1, a2, b2, a1.inverse(), b1.inverse(), a2.inverse(), b2.inverse()],
            inradius,
        }
    }

    pub fn generator(&self, l: Letter) -> &MobiusMap {
        &self.generators[letter_index(l)]
    }

    pub fn element(&self, l: Letter) -> DeckElement {
        DeckElement::Fuchsian { map: *self.generator(l), word: vec![l] }
    }

    /// Evaluates a word as a product of generator matrices.
    pub fn evaluate(&self, word: &[Letter]) -> MobiusMap {
        word.iter().fold(MobiusMap::IDENTITY, |acc, &l| acc.compose(self.generator(l)))
    }

    /// The product `[a₁,b₁][a₂,b₂]`, which is ±identity.
    pub fn relator(&self) -> MobiusMap {
        self.evaluate(&[1, 2, -1, -2, 3, 4, -3, -4])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberPoint {
    pub deck: DeckElement,
    pub coords: ChartPoint,
}

impl FiberPoint {
    pub fn from_deck(deck: DeckElement) -> Self {
        let coords = ChartPoint(deck.apply_z(Complex64::new(0.0, 0.0)));
        FiberPoint { deck, coords }
    }

    /// Angle of the representative frame: the deck image of the reference frame at 0.
    pub fn representative_angle(&self) -> f64 {
        self.deck.turn_at(ChartPoint::ORIGIN)
    }
}

/// Result of a nearest-fiber-point query.
#[derive(Debug, Clone)]
pub struct NearestFiber {
    pub fiber: FiberPoint,
    pub distance: f64,
    /// False when `distance ≥ systole_lower_bound / 2`; the answer is then best-effort.
    pub unique: bool,
}

#[derive(Debug, Clone)]
pub struct Cover {
    model: ModelSpace,
    group: Option<FuchsianGroup>,
    systole_lower_bound: f64,
}

impl Cover {
    pub fn new(model: ModelSpace) -> Self {
        let group = match model {
            ModelSpace::Flat => None,
            ModelSpace::Hyperbolic => Some(FuchsianGroup::genus_two()),
        };
        let mut cover = Cover { model, group, systole_lower_bound: 0.0 };
        cover.systole_lower_bound = cover.measure_systole_bound();
        cover
    }

    pub fn flat() -> Self {
        Cover::new(ModelSpace::Flat)
    }

    pub fn hyperbolic() -> Self {
        Cover::new(ModelSpace::Hyperbolic)
    }

    pub fn model(&self) -> ModelSpace {
        self.model
    }

    pub fn group(&self) -> Option<&FuchsianGroup> {
        self.group.as_ref()
    }

    pub fn systole_lower_bound(&self) -> f64 {
        self.systole_lower_bound
    }

    pub fn basepoint(&self) -> FiberPoint {
        FiberPoint::from_deck(DeckElement::identity(self.model))
    }

    pub fn deck_generators(&self) -> Vec<DeckElement> {
        match &self.group {
            None => vec![DeckElement::Lattice { m: 1, n: 0 }, DeckElement::Lattice { m: 0, n: 1 }],
            Some(g) => (1..=4).map(|l| g.element(l)).collect(),
        }
    }

    /// Generators together with their inverses.
    pub fn symmetric_generators(&self) -> Vec<DeckElement> {
        match &self.group {
            None => vec![
                DeckElement::Lattice { m: 1, n: 0 },
                DeckElement::Lattice { m: 0, n: 1 },
                DeckElement::Lattice { m: -1, n: 0 },
                DeckElement::Lattice { m: 0, n: -1 },
            ],
            Some(g) => LETTERS.iter().map(|&l| g.element(l)).collect(),
        }
    }

    /// Deck element of a word in the symmetric generators (flat letters: ±1 = (±1,0), ±2 = (0,±1)).
    pub fn word_element(&self, word: &[Letter]) -> DeckElement {
        match &self.group {
            None => {
                let (mut m, mut n) = (0, 0);
                for &l in word {
                    match l {
                        1 => m += 1,
                        -1 => m -= 1,
                        2 => n += 1,
                        -2 => n -= 1,
                        _ => panic!("flat letters are ±1 and ±2"),
                    }
                }
                DeckElement::Lattice { m, n }
            }
            Some(g) => {
                let mut word_out = Vec::new();
                for &l in word {
                    push_letter(&mut word_out, l);
                }
                DeckElement::Fuchsian { map: g.evaluate(word), word: word_out }
            }
        }
    }

    /// Half of the shortest displacement of the basepoint by a word of length ≤ 2.
    fn measure_systole_bound(&self) -> f64 {
        let gens = self.symmetric_generators();
        let origin = ChartPoint::ORIGIN;
        let mut best = f64::INFINITY;
        for g in &gens {
            let p = ChartPoint(g.apply_z(origin.z()));
            best = best.min(self.model.dist_unchecked(origin, p));
            for h in &gens {
                let q = ChartPoint(g.compose(h).apply_z(origin.z()));
                let d = self.model.dist_unchecked(origin, q);
                if d > 1e-9 {
                    best = best.min(d);
                }
            }
        }
        best / 2.0
    }

    pub fn reduce_to_domain(&self, p: ChartPoint) -> Result<(ChartPoint, DeckElement), CoveringError> {
        self.reduce_from(p, &DeckElement::identity(self.model))
    }

    /// Dirichlet reduction starting from a guess `start` for the deck element.
    ///
    /// Returns `(p', d)` with `d·p' = p` and `p'` in the Dirichlet domain of 0.
    pub fn reduce_from(&self, p: ChartPoint, start: &DeckElement) -> Result<(ChartPoint, DeckElement), CoveringError> {
        self.model.check(p)?;
        if start.model() != self.model {
            return Err(CoveringError::WrongModel(self.model.name()));
        }
        match &self.group {
            None => {
                let z = p.z();
                let (m, n) = (z.re.round(), z.im.round());
                Ok((ChartPoint(z - Complex64::new(m, n)), DeckElement::Lattice { m: m as i64, n: n as i64 }))
            }
            Some(group) => {
                let DeckElement::Fuchsian { map, word } = start else { unreachable!() };
                let mut map = *map;
                let mut word = word.clone();
                let mut local = map.inverse().apply_z(p.z());
                let mut steps = 0usize;
                loop {
                    let r2 = local.norm_sqr();
                    let mut best: Option<(Letter, Complex64, f64)> = None;
                    for &l in &LETTERS {
                        let w = group.generator(l).apply_z(local);
                        let w2 = w.norm_sqr();
                        if w2 < best.map_or(r2, |b| b.2) {
                            best = Some((l, w, w2));
                        }
                    }
                    match best {
                        // Strict decrease beyond rounding noise; ties on the domain boundary stop.
                        Some((l, w, w2)) if w2 < r2 * (1.0 - 1e-14) - 1e-300 => {
                            local = w;
                            map = map.compose(group.generator(-l));
                            push_letter(&mut word, -l);
                            steps += 1;
                            if steps > MAX_REDUCTION_STEPS {
                                return Err(CoveringError::ReductionFailure(MAX_REDUCTION_STEPS));
                            }
                        }
                        _ => break,
                    }
                }
                Ok((ChartPoint(local), DeckElement::Fuchsian { map, word }))
            }
        }
    }

    pub fn nearest_fiber_point(&self, p: ChartPoint) -> Result<NearestFiber, CoveringError> {
        self.nearest_from(p, &DeckElement::identity(self.model))
    }

    pub fn nearest_from(&self, p: ChartPoint, guess: &DeckElement) -> Result<NearestFiber, CoveringError> {
        let (local, deck) = self.reduce_from(p, guess)?;
        let distance = self.model.dist_origin(local);
        Ok(NearestFiber {
            fiber: FiberPoint::from_deck(deck),
            distance,
            unique: distance < self.systole_lower_bound / 2.0,
        })
    }

    /// Whether `p` coincides with a fiber point.
    pub fn is_fiber_point(&self, p: ChartPoint) -> Result<Option<FiberPoint>, CoveringError> {
        let n = self.nearest_fiber_point(p)?;
        Ok((n.distance < 1e-12).then_some(n.fiber))
    }

    /// Moves a chart point and frame angle into the coordinates centred at fiber point `x`.
    #[inline]
    pub fn to_local(&self, x: &DeckElement, p: ChartPoint, angle: f64) -> (Complex64, f64) {
        let z = x.apply_inverse_z(p.z());
        match x {
            DeckElement::Lattice { .. } => (z, angle),
            // d(x⁻¹) at p is the reciprocal of dx at x⁻¹p.
            DeckElement::Fuchsian { map, .. } => (z, angle - map.derivative(z).arg()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FiberLabel {
    Lattice(i64, i64),
    Orbit(u32),
}

impl std::fmt::Display for FiberLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FiberLabel::Lattice(m, n) => write!(f, "({m},{n})"),
            FiberLabel::Orbit(i) => write!(f, "#{i}"),
        }
    }
}

/// Canonical labels for fiber points, assigned in insertion order.
///
/// Hyperbolic orbit points are matched by coordinates within a quarter of the
/// systole bound; the basepoint is always label 0.
#[derive(Debug, Clone)]
pub struct OrbitRegistry {
    model: ModelSpace,
    tolerance: f64,
    points: Vec<FiberPoint>,
    shells: HashMap<i64, Vec<u32>>,
}

const SHELL_WIDTH: f64 = 0.5;

impl OrbitRegistry {
    pub fn new(cover: &Cover) -> Self {
        let mut reg = OrbitRegistry {
            model: cover.model(),
            tolerance: cover.systole_lower_bound() / 4.0,
            points: Vec::new(),
            shells: HashMap::new(),
        };
        if reg.model == ModelSpace::Hyperbolic {
            reg.label_of(&cover.basepoint());
        }
        reg
    }

    fn shell(&self, p: ChartPoint) -> i64 {
        (self.model.dist_origin(p) / SHELL_WIDTH).floor() as i64
    }

    pub fn lookup(&self, q: &FiberPoint) -> Option<FiberLabel> {
        match q.deck {
            DeckElement::Lattice { m, n } => Some(FiberLabel::Lattice(m, n)),
            DeckElement::Fuchsian { .. } => {
                let s = self.shell(q.coords);
                (s - 1..=s + 1)
                    .filter_map(|k| self.shells.get(&k))
                    .flatten()
                    .copied()
                    .find(|&i| self.model.dist_unchecked(self.points[i as usize].coords, q.coords) < self.tolerance)
                    .map(FiberLabel::Orbit)
            }
        }
    }

    pub fn label_of(&mut self, q: &FiberPoint) -> FiberLabel {
        if let Some(l) = self.lookup(q) {
            return l;
        }
        let idx = self.points.len() as u32;
        let s = self.shell(q.coords);
        self.points.push(q.clone());
        self.shells.entry(s).or_default().push(idx);
        FiberLabel::Orbit(idx)
    }

    pub fn fiber(&self, label: FiberLabel) -> Option<FiberPoint> {
        match label {
            FiberLabel::Lattice(m, n) => Some(FiberPoint::from_deck(DeckElement::Lattice { m, n })),
            FiberLabel::Orbit(i) => self.points.get(i as usize).cloned(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_word(rng: &mut impl Rng, max_len: usize) -> Vec<Letter> {
        let len = rng.random_range(0..=max_len);
        (0..len).map(|_| LETTERS[rng.random_range(0..8)]).collect()
    }

    #[test]
    fn flat_generators_are_unit_translations() {
        let gens = Cover::flat().deck_generators();
        assert_eq!(gens, vec![DeckElement::Lattice { m: 1, n: 0 }, DeckElement::Lattice { m: 0, n: 1 }]);
        assert_eq!(Cover::flat().systole_lower_bound(), 0.5);
    }

    #[test]
    fn surface_relation_holds() {
        let g = FuchsianGroup::genus_two();
        let rel = g.relator();
        assert!(rel.distance_to(&MobiusMap::IDENTITY) < 1e-10, "{rel:?}");
        for l in LETTERS {
            assert!(g.generator(l).is_valid(ModelSpace::Hyperbolic, 1e-12));
        }
    }

    #[test]
    fn generators_move_basepoint_equally() {
        let cover = Cover::hyperbolic();
        let g = cover.group().unwrap();
        let expect = 2.0 * g.inradius;
        for e in cover.symmetric_generators() {
            let d = ModelSpace::Hyperbolic.dist(ChartPoint::ORIGIN, e.apply(ModelSpace::Hyperbolic, ChartPoint::ORIGIN).unwrap()).unwrap();
            assert!((d - expect).abs() < 1e-9, "{d} vs {expect}");
        }
        assert!((cover.systole_lower_bound() - expect / 2.0).abs() < 1e-9);
    }

    #[test]
    fn orbit_separation_for_short_words() {
        let cover = Cover::hyperbolic();
        let h = ModelSpace::Hyperbolic;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 1000 {
            let (w1, w2) = (random_word(&mut rng, 3), random_word(&mut rng, 3));
            let p = cover.word_element(&w1).apply(h, ChartPoint::ORIGIN).unwrap();
            let q = cover.word_element(&w2).apply(h, ChartPoint::ORIGIN).unwrap();
            let d = h.dist(p, q).unwrap();
            if d < 1e-9 {
                continue;
            }
            assert!(d >= cover.systole_lower_bound(), "{w1:?} {w2:?}: {d}");
            checked += 1;
        }
    }

    #[test]
    fn reduce_point_in_domain_is_fixed() {
        let cover = Cover::hyperbolic();
        let p = ChartPoint::new(0.1, -0.2);
        let (q, d) = cover.reduce_to_domain(p).unwrap();
        assert_eq!(q, p);
        assert!(d.is_identity());
        let (q2, d2) = cover.reduce_to_domain(q).unwrap();
        assert_eq!(q2, q);
        assert!(d2.is_identity());
    }

    #[test]
    fn reduce_generator_orbit_point() {
        let cover = Cover::hyperbolic();
        for g in cover.symmetric_generators() {
            let p = g.apply(ModelSpace::Hyperbolic, ChartPoint::ORIGIN).unwrap();
            let (q, d) = cover.reduce_to_domain(p).unwrap();
            assert!(q.z().norm() < 1e-9);
            assert!(d.map().distance_to(&g.map()) < 1e-9);
        }
    }

    #[test]
    fn reduce_inverts_random_words() {
        let cover = Cover::hyperbolic();
        let h = ModelSpace::Hyperbolic;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let p0 = ChartPoint(Complex64::from_polar(0.3 * rng.random::<f64>(), rng.random::<f64>() * 6.3));
            let w = cover.word_element(&random_word(&mut rng, 6));
            let p = w.apply(h, p0).unwrap();
            let (q, d) = cover.reduce_to_domain(p).unwrap();
            assert!((d.apply_z(q.z()) - p.z()).norm() < 1e-9);
            // p0 lies deep inside the domain, so the reduction recovers w exactly.
            assert!(d.inverse().compose(&w).map().distance_to(&MobiusMap::IDENTITY) < 1e-8);
            // Stored words evaluate to the stored matrix.
            let DeckElement::Fuchsian { map, word } = &d else { unreachable!() };
            assert!(cover.group().unwrap().evaluate(word).distance_to(map) < 1e-9);
            // Dirichlet property: no generator brings q closer to 0.
            for g in cover.symmetric_generators() {
                let gq = g.apply(h, q).unwrap();
                assert!(h.dist_origin(q) <= h.dist_origin(gq) + 1e-12);
            }
        }
    }

    #[test]
    fn nearest_fiber_point_cases() {
        let cover = Cover::hyperbolic();
        let n = cover.nearest_fiber_point(ChartPoint::ORIGIN).unwrap();
        assert!(n.fiber.deck.is_identity() && n.distance == 0.0 && n.unique);

        let g = &cover.symmetric_generators()[2];
        let p = g.apply(ModelSpace::Hyperbolic, ChartPoint::ORIGIN).unwrap();
        let n = cover.nearest_fiber_point(ChartPoint(p.z() + Complex64::new(1e-6, -1e-6))).unwrap();
        assert!(n.fiber.deck.map().distance_to(&g.map()) < 1e-9);
        assert!(n.distance < 1e-4);

        let flat = Cover::flat();
        let p = ChartPoint::new(3.2, -1.7);
        let n = flat.nearest_fiber_point(p).unwrap();
        assert_eq!(n.fiber.deck, DeckElement::Lattice { m: 3, n: -2 });
        let oracle = ModelSpace::Flat.dist(p, ChartPoint::new(3.0, -2.0)).unwrap();
        assert!((n.distance - oracle).abs() < 1e-12);
    }

    #[test]
    fn nearest_commutes_with_deck_maps() {
        let cover = Cover::hyperbolic();
        let h = ModelSpace::Hyperbolic;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let p = ChartPoint(Complex64::from_polar(0.9 * rng.random::<f64>().sqrt(), rng.random::<f64>() * 6.3));
            let g = cover.word_element(&random_word(&mut rng, 3));
            let Ok(gp) = g.apply(h, p) else { continue };
            let a = cover.nearest_fiber_point(gp).unwrap();
            let b = cover.nearest_fiber_point(p).unwrap();
            if !a.unique {
                continue;
            }
            let expect = g.compose(&b.fiber.deck);
            assert!(a.fiber.deck.map().distance_to(&expect.map()) < 1e-8);
        }
    }

    #[test]
    fn labels_are_stable_and_separating() {
        let cover = Cover::hyperbolic();
        let mut reg = OrbitRegistry::new(&cover);
        assert_eq!(reg.label_of(&cover.basepoint()), FiberLabel::Orbit(0));
        let gens = cover.symmetric_generators();
        let a = FiberPoint::from_deck(gens[0].clone());
        let b = FiberPoint::from_deck(gens[1].clone());
        let la = reg.label_of(&a);
        assert_eq!(reg.label_of(&a), la);
        assert_ne!(reg.label_of(&b), la);
        // Same orbit point reached by a different word.
        let alt = FiberPoint::from_deck(cover.word_element(&[1, 2, -2]));
        assert_eq!(reg.label_of(&alt), la);

        let mut flat = OrbitRegistry::new(&Cover::flat());
        let q = FiberPoint::from_deck(DeckElement::Lattice { m: 2, n: -1 });
        assert_eq!(flat.label_of(&q), FiberLabel::Lattice(2, -1));
        assert_eq!(flat.label_of(&Cover::flat().basepoint()), FiberLabel::Lattice(0, 0));
    }

    #[test]
    fn to_local_sends_fiber_point_and_representative_frame_to_origin() {
        let cover = Cover::hyperbolic();
        let x = cover.word_element(&[1, 3, -2]);
        let fp = FiberPoint::from_deck(x.clone());
        let (z, angle) = cover.to_local(&x, fp.coords, fp.representative_angle());
        assert!(z.norm() < 1e-10);
        assert!(angle.abs() < 1e-10);
    }
}
