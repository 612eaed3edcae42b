//! Twisted C*-dynamical systems `(G, M_k, α, ω)` and the bundle operations
//! `(a,x)•(b,y) = (a α_x(b) ω(x,y), xy)` and `(a,x)^•`.

mod fiber;

pub use fiber::{Fiber, FiberLiteral, C64};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::groups::{Element, GroupModel};

/// An exact rational `num/den` with `den > 0`, reduced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidSpec("zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        let s = den.signum();
        Ok(Rational {
            num: s * num / g,
            den: s * den / g,
        })
    }

    /// Parses `"p/q"`, an integer, or a terminating decimal.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidSpec(format!("cannot parse rational {s:?}"));
        if let Some((p, q)) = s.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            return Rational::new(p, q);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.len() > 15 || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let neg = int.starts_with('-');
            let ip: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
            let den = 10i64.pow(frac.len() as u32);
            let fp: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
            let num = ip.abs() * den + fp;
            return Rational::new(if neg { -num } else { num }, den);
        }
        Rational::new(s.parse().map_err(|_| bad())?, 1)
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `exp(2πi·(num/den)·n)` with the exponent reduced exactly mod 1.
    pub fn phase(&self, n: i64) -> C64 {
        let r = ((self.num as i128 * n as i128).rem_euclid(self.den as i128)) as f64 / self.den as f64;
        C64::from_polar(1.0, 2.0 * PI * r)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Serialize for Rational {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Rational::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// The unitaries `W_x` of an inner action.
#[derive(Clone, Debug)]
pub enum Unitaries {
    /// `W_x = U^{x₀}` (cyclic groups or ℤ).
    Power(Fiber),
    /// `W_x = U₁^{x₁} ⋯ U_d^{x_d}` on ℤ^d.
    ZdProduct(Vec<Fiber>),
    /// Explicit table (finite groups); missing entries are an error.
    Table(BTreeMap<Element, Fiber>),
}

impl Unitaries {
    pub fn get(&self, x: &Element) -> Fiber {
        match self {
            Unitaries::Power(u) => u.unitary_pow(x.coords()[0]),
            Unitaries::ZdProduct(us) => {
                let mut w = Fiber::identity(us[0].dim());
                for (u, &c) in us.iter().zip(x.coords()) {
                    if c != 0 {
                        w = w.matmul(&u.unitary_pow(c));
                    }
                }
                w
            }
            Unitaries::Table(t) => t
                .get(x)
                .cloned()
                .unwrap_or_else(|| panic!("unitary table has no entry for {x:?}")),
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Unitaries::Power(u) => Some(u.dim()),
            Unitaries::ZdProduct(us) => us.first().map(|u| u.dim()),
            Unitaries::Table(t) => t.values().next().map(|u| u.dim()),
        }
    }

    /// Random unitary per element of a finite group, with `W_e = 1`.
    pub fn random_table(model: &GroupModel, k: usize, seed: u64) -> Result<Self> {
        let els = model
            .elements()
            .ok_or_else(|| Error::InvalidSpec("unitary tables need a finite group".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = BTreeMap::new();
        for x in els {
            let u = if model.is_identity(&x) {
                Fiber::identity(k)
            } else {
                Fiber::random_unitary(k, &mut rng)
            };
            t.insert(x, u);
        }
        Ok(Unitaries::Table(t))
    }
}

#[derive(Clone, Debug)]
pub enum Action {
    Trivial,
    /// `α_x = Ad(W_x)`.
    Inner(Arc<Unitaries>),
    /// `G` permutes the index set `{0..k}` by `i ↦ i + x₀ mod k`; fibers are diagonal.
    PermutationDiagonal,
}

pub type CocycleFn = Arc<dyn Fn(&Element, &Element) -> Fiber + Send + Sync>;

#[derive(Clone)]
pub enum Cocycle {
    Trivial,
    /// `ω((m₁,m₂),(n₁,n₂)) = exp(2πiθ m₂n₁)` on ℤ².
    NcTorus(Rational),
    /// `ω(x,y) = W_x W_y W_{xy}^*` built from the inner action's unitaries.
    Coboundary,
    Custom(CocycleFn),
}

impl fmt::Debug for Cocycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cocycle::Trivial => write!(f, "Trivial"),
            Cocycle::NcTorus(t) => write!(f, "NcTorus({t})"),
            Cocycle::Coboundary => write!(f, "Coboundary"),
            Cocycle::Custom(_) => write!(f, "Custom"),
        }
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// A twisted action of a group model on `M_k`.
#[derive(Clone, Debug)]
pub struct TwistedSystem {
    pub group: GroupModel,
    pub k: usize,
    pub action: Action,
    pub cocycle: Cocycle,
    id: u64,
}

/// Precomputed action data for one group element.
pub enum Prepared {
    Identity,
    Conj(Fiber, Fiber),
    Shift(usize),
}

impl Prepared {
    pub fn apply(&self, a: &Fiber) -> Fiber {
        match self {
            Prepared::Identity => a.clone(),
            Prepared::Conj(w, wa) => w.matmul(a).matmul(wa),
            Prepared::Shift(s) => {
                let k = a.dim();
                let mut out = Fiber::zeros(k);
                for i in 0..k {
                    for j in 0..k {
                        out.set((i + s) % k, (j + s) % k, a.get(i, j));
                    }
                }
                out
            }
        }
    }
}

impl TwistedSystem {
    pub fn new(group: GroupModel, k: usize, action: Action, cocycle: Cocycle) -> Result<Self> {
        group.validate()?;
        if k == 0 {
            return Err(Error::InvalidSpec("fiber dimension must be positive".into()));
        }
        if let Action::Inner(u) = &action {
            if let Some(d) = u.dim() {
                if d != k {
                    return Err(Error::DimensionMismatch { left: d, right: k });
                }
            }
        }
        if let Action::PermutationDiagonal = &action {
            let ok = match &group {
                GroupModel::Zd { .. } => true,
                GroupModel::Cyclic { m } => *m % k as i64 == 0,
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidSpec("shift action needs ℤ^d or a cyclic group whose order k divides".into()));
            }
        }
        if let Cocycle::NcTorus(_) = &cocycle {
            if group != (GroupModel::Zd { d: 2 }) {
                return Err(Error::InvalidSpec("the torus cocycle lives on Zd:2".into()));
            }
        }
        if let Cocycle::Coboundary = &cocycle {
            if !matches!(action, Action::Inner(_)) {
                return Err(Error::InvalidSpec("coboundary cocycle needs an inner action".into()));
            }
        }
        Ok(TwistedSystem {
            group,
            k,
            action,
            cocycle,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    /// Scalar fibers, trivial action and twist: the group algebra.
    pub fn scalar(group: GroupModel) -> Arc<Self> {
        Arc::new(Self::new(group, 1, Action::Trivial, Cocycle::Trivial).expect("valid"))
    }

    /// The rotation-algebra twist on ℤ² with scalar fibers.
    pub fn nc_torus(theta: Rational) -> Arc<Self> {
        Arc::new(
            Self::new(GroupModel::Zd { d: 2 }, 1, Action::Trivial, Cocycle::NcTorus(theta)).expect("valid"),
        )
    }

    /// Inner action by `unitaries`, optionally with the coboundary twist they induce.
    pub fn inner(group: GroupModel, unitaries: Unitaries, twisted: bool) -> Result<Arc<Self>> {
        let k = unitaries
            .dim()
            .ok_or_else(|| Error::InvalidSpec("empty unitary family".into()))?;
        let cocycle = if twisted { Cocycle::Coboundary } else { Cocycle::Trivial };
        Ok(Arc::new(Self::new(group, k, Action::Inner(Arc::new(unitaries)), cocycle)?))
    }

    pub fn permutation_diagonal(group: GroupModel, k: usize) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(group, k, Action::PermutationDiagonal, Cocycle::Trivial)?))
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn trivial_action(&self) -> bool {
        matches!(self.action, Action::Trivial) || (self.k == 1 && !matches!(self.action, Action::PermutationDiagonal))
    }

    /// `θ` when the cocycle is the rotation cocycle on ℤ².
    pub fn cocycle_theta(&self) -> Option<Rational> {
        match &self.cocycle {
            Cocycle::NcTorus(t) => Some(*t),
            _ => None,
        }
    }

    pub fn trivial_twist(&self) -> bool {
        matches!(self.cocycle, Cocycle::Trivial)
    }

    /// Whether fibers must be diagonal.
    pub fn diagonal_fibers(&self) -> bool {
        matches!(self.action, Action::PermutationDiagonal)
    }

    pub fn prepare(&self, x: &Element) -> Prepared {
        match &self.action {
            Action::Trivial => Prepared::Identity,
            Action::Inner(_) if self.k == 1 => Prepared::Identity,
            Action::Inner(u) => {
                let w = u.get(x);
                let wa = w.adjoint();
                Prepared::Conj(w, wa)
            }
            Action::PermutationDiagonal => {
                let s = x.coords()[0].rem_euclid(self.k as i64) as usize;
                if s == 0 {
                    Prepared::Identity
                } else {
                    Prepared::Shift(s)
                }
            }
        }
    }

    pub fn alpha(&self, x: &Element, a: &Fiber) -> Fiber {
        self.prepare(x).apply(a)
    }

    /// `ω(x,y)`, or `None` when it is the unit.
    pub fn omega(&self, x: &Element, y: &Element) -> Option<Fiber> {
        match &self.cocycle {
            Cocycle::Trivial => None,
            Cocycle::NcTorus(theta) => {
                let n = x.coords()[1] * y.coords()[0];
                (n != 0).then(|| Fiber::scalar(theta.phase(n)))
            }
            Cocycle::Coboundary => {
                let Action::Inner(u) = &self.action else { unreachable!() };
                let xy = self.group.multiply(x, y);
                Some(u.get(x).matmul(&u.get(y)).matmul(&u.get(&xy).adjoint()))
            }
            Cocycle::Custom(f) => Some(f(x, y)),
        }
    }

    /// `ω(x,y)` as a scalar, for `k = 1`.
    pub fn omega_scalar(&self, x: &Element, y: &Element) -> Option<C64> {
        match &self.cocycle {
            Cocycle::Trivial => None,
            Cocycle::NcTorus(theta) => {
                let n = x.coords()[1] * y.coords()[0];
                (n != 0).then(|| theta.phase(n))
            }
            _ => self.omega(x, y).map(|w| w.get(0, 0)),
        }
    }

    pub fn omega_or_one(&self, x: &Element, y: &Element) -> Fiber {
        self.omega(x, y).unwrap_or_else(|| Fiber::identity(self.k))
    }

    fn check_dim(&self, a: &Fiber) -> Result<()> {
        if a.dim() != self.k {
            return Err(Error::DimensionMismatch { left: a.dim(), right: self.k });
        }
        Ok(())
    }

    /// `(a,x)•(b,y) = (a α_x(b) ω(x,y), xy)`.
    pub fn bundle_mul(&self, p: &BundleElement, q: &BundleElement) -> Result<BundleElement> {
        self.check_dim(&p.fiber)?;
        self.check_dim(&q.fiber)?;
        let mut f = p.fiber.matmul(&self.alpha(&p.point, &q.fiber));
        if let Some(w) = self.omega(&p.point, &q.point) {
            f = f.matmul(&w);
        }
        Ok(BundleElement {
            fiber: f,
            point: self.group.multiply(&p.point, &q.point),
        })
    }

    /// `(a,x)^• = (ω(x⁻¹,x)^* α_{x⁻¹}(a^*), x⁻¹)`, the form for which
    /// `Φ^*(x) = Φ(x⁻¹)^•` reproduces `Φ^*(x) = ω(x,x⁻¹)^* α_x(Φ(x⁻¹)^*)`.
    pub fn bundle_adjoint(&self, p: &BundleElement) -> BundleElement {
        let xi = self.group.inverse(&p.point);
        let mut f = self.alpha(&xi, &p.fiber.adjoint());
        if let Some(w) = self.omega(&xi, &p.point) {
            f = w.adjoint().matmul(&f);
        }
        BundleElement { fiber: f, point: xi }
    }

    /// A random admissible fiber (diagonal when the action requires it).
    pub fn random_fiber<R: Rng>(&self, rng: &mut R) -> Fiber {
        Fiber::random(self.k, self.diagonal_fibers(), rng)
    }
}

impl PartialEq for TwistedSystem {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BundleElement {
    pub fiber: Fiber,
    pub point: Element,
}

impl BundleElement {
    pub fn new(fiber: Fiber, point: Element) -> Self {
        BundleElement { fiber, point }
    }

    pub fn norm(&self) -> f64 {
        self.fiber.norm()
    }
}

/// Worst defect of the twisted-action axioms on sampled triples.
#[derive(Clone, Debug, Serialize)]
pub struct CocycleReport {
    pub pass: bool,
    pub worst_violation: f64,
    pub axiom: String,
    pub witness: Option<[Element; 3]>,
    pub samples: usize,
}

/// Samples `(x,y,z)` from the ball of radius `radius` (or the whole group) and
/// evaluates the cocycle identity, the action compatibility, normalization,
/// unitarity of `ω` and isometry of `α`. Passes iff every defect is at most 1e-10.
pub fn cocycle_check(system: &TwistedSystem, sample_size: usize, seed: u64, radius: u32) -> CocycleReport {
    let g = &system.group;
    let gens = g.standard_generators();
    let finite = g.elements();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = g.identity();
    let one = Fiber::identity(system.k);
    let mut worst = 0.0f64;
    let mut axiom = String::from("none");
    let mut witness = None;
    let mut record = |v: f64, name: &str, w: [Element; 3], worst: &mut f64| {
        if v > *worst || !v.is_finite() {
            *worst = if v.is_finite() { v } else { f64::INFINITY };
            axiom = name.to_string();
            witness = Some(w);
        }
    };
    for _ in 0..sample_size {
        let mut pick = || match &finite {
            Some(els) => els[rng.random_range(0..els.len())].clone(),
            None => g.random_word(&gens, radius, &mut rng),
        };
        let (x, y, z) = (pick(), pick(), pick());
        let a = {
            let f = system.random_fiber(&mut rng);
            let n = f.norm();
            if n > 0.0 { f.scale(C64::new(1.0 / n, 0.0)) } else { f }
        };
        let w = |p: &Element, q: &Element| system.omega_or_one(p, q);
        let trip = [x.clone(), y.clone(), z.clone()];
        let yz = g.multiply(&y, &z);
        let xy = g.multiply(&x, &y);
        let lhs = system.alpha(&x, &w(&y, &z)).matmul(&w(&x, &yz));
        let rhs = w(&x, &y).matmul(&w(&xy, &z));
        record((lhs - rhs).norm(), "cocycle identity", trip.clone(), &mut worst);
        let lhs = system.alpha(&x, &system.alpha(&y, &a)).matmul(&w(&x, &y));
        let rhs = w(&x, &y).matmul(&system.alpha(&xy, &a));
        record((lhs - rhs).norm(), "action compatibility", trip.clone(), &mut worst);
        let norm_defect = (w(&x, &e) - one.clone()).norm().max((w(&e, &y) - one.clone()).norm());
        record(norm_defect, "normalization", trip.clone(), &mut worst);
        record((system.alpha(&e, &a) - a.clone()).norm(), "identity action", trip.clone(), &mut worst);
        record(w(&x, &y).unitarity_defect(), "unitarity", trip.clone(), &mut worst);
        record((system.alpha(&x, &a).norm() - a.norm()).abs(), "isometry", trip, &mut worst);
    }
    CocycleReport {
        pass: worst <= 1e-10,
        worst_violation: worst,
        axiom,
        witness,
        samples: sample_size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_x() -> Fiber {
        Fiber::from_rows(&[
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        ])
        .unwrap()
    }

    fn pt(c: &[i64]) -> Element {
        Element::new(c)
    }

    #[test]
    fn rationals() {
        assert_eq!(Rational::parse("2/6").unwrap(), Rational { num: 1, den: 3 });
        assert_eq!(Rational::parse("0.25").unwrap(), Rational { num: 1, den: 4 });
        assert_eq!(Rational::parse("-1.5").unwrap(), Rational { num: -3, den: 2 });
        assert_eq!(Rational::parse("3").unwrap(), Rational { num: 3, den: 1 });
        assert!(Rational::parse("1/0").is_err());
        let t = Rational::parse("1/3").unwrap();
        let t1 = Rational::parse("4/3").unwrap();
        for n in -7..7 {
            assert!((t.phase(n) - t1.phase(n)).norm() < 1e-15);
        }
    }

    #[test]
    fn torus_products() {
        let theta = Rational::parse("1/3").unwrap();
        let s = TwistedSystem::nc_torus(theta);
        let one = Fiber::real(1.0);
        let a = BundleElement::new(one.clone(), pt(&[1, 0]));
        let b = BundleElement::new(one.clone(), pt(&[0, 1]));
        let ab = s.bundle_mul(&a, &b).unwrap();
        assert_eq!(ab, BundleElement::new(one.clone(), pt(&[1, 1])));
        let ba = s.bundle_mul(&b, &a).unwrap();
        assert_eq!(ba.point, pt(&[1, 1]));
        assert!((ba.fiber.get(0, 0) - theta.phase(1)).norm() < 1e-15);
        let adj = s.bundle_adjoint(&a);
        assert_eq!(adj.point, pt(&[-1, 0]));
        assert!((adj.fiber.get(0, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn unit_fiber_at_identity_is_left_unit() {
        let s = TwistedSystem::inner(GroupModel::Cyclic { m: 6 }, Unitaries::Power(pauli_x()), false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = BundleElement::new(Fiber::random(2, false, &mut rng), pt(&[4]));
        let u = BundleElement::new(Fiber::identity(2), pt(&[0]));
        assert_eq!(s.bundle_mul(&u, &b).unwrap(), b);
    }

    #[test]
    fn pauli_inner_action_product() {
        let s = TwistedSystem::inner(GroupModel::Cyclic { m: 6 }, Unitaries::Power(pauli_x()), false).unwrap();
        let p = Fiber::diagonal(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let r = s
            .bundle_mul(&BundleElement::new(p.clone(), pt(&[1])), &BundleElement::new(p, pt(&[0])))
            .unwrap();
        assert_eq!(r.point, pt(&[1]));
        assert!(r.fiber.is_zero());
        let bad = BundleElement::new(Fiber::real(1.0), pt(&[0]));
        assert!(matches!(
            s.bundle_mul(&bad, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn systems() -> Vec<Arc<TwistedSystem>> {
        let c6 = GroupModel::Cyclic { m: 6 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        vec![
            TwistedSystem::scalar(GroupModel::Heis3),
            TwistedSystem::nc_torus(Rational::parse("1/3").unwrap()),
            TwistedSystem::nc_torus(Rational::parse("0.5").unwrap()),
            TwistedSystem::inner(c6.clone(), Unitaries::Power(pauli_x()), false).unwrap(),
            TwistedSystem::inner(c6.clone(), Unitaries::random_table(&c6, 2, 3).unwrap(), true).unwrap(),
            TwistedSystem::inner(
                GroupModel::Zd { d: 2 },
                Unitaries::ZdProduct(vec![Fiber::random_unitary(3, &mut rng), Fiber::random_unitary(3, &mut rng)]),
                true,
            )
            .unwrap(),
            TwistedSystem::permutation_diagonal(GroupModel::Cyclic { m: 3 }, 3).unwrap(),
        ]
    }

    #[test]
    fn valid_systems_pass_cocycle_check() {
        for s in systems() {
            let r = cocycle_check(&s, 200, 1, 4);
            assert!(r.pass, "{:?} {:?}: {r:?}", s.group, s.cocycle);
        }
    }

    #[test]
    fn perturbed_torus_cocycle_fails() {
        let theta = Rational::parse("1/3").unwrap();
        let bad = TwistedSystem::new(
            GroupModel::Zd { d: 2 },
            1,
            Action::Trivial,
            Cocycle::Custom(Arc::new(move |x: &Element, y: &Element| {
                let base = theta.phase(x.coords()[1] * y.coords()[0]);
                Fiber::scalar(base * C64::from_polar(1.0, 2.0 * PI * 0.01 * x.coords()[0] as f64))
            })),
        )
        .unwrap();
        let r = cocycle_check(&bad, 100, 2, 3);
        assert!(!r.pass && r.worst_violation > 1e-3 && r.witness.is_some());
    }

    #[test]
    fn untwisted_inner_action_with_generic_unitaries_fails() {
        let c5 = GroupModel::Cyclic { m: 5 };
        let s = TwistedSystem::inner(c5.clone(), Unitaries::random_table(&c5, 2, 1).unwrap(), false).unwrap();
        assert!(!cocycle_check(&s, 100, 3, 2).pass);
    }

    #[test]
    fn adjoint_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for s in systems() {
            let gens = s.group.standard_generators();
            for _ in 0..100 {
                let x = s.group.random_word(&gens, 5, &mut rng);
                let p = BundleElement::new(s.random_fiber(&mut rng), x);
                let q = s.bundle_adjoint(&p);
                let pp = s.bundle_adjoint(&q);
                assert_eq!(pp.point, p.point);
                assert!((&pp.fiber - &p.fiber).norm() <= 1e-12 * p.norm());
                assert!((q.norm() - p.norm()).abs() <= 1e-12 * p.norm());
                let qp = s.bundle_mul(&q, &p).unwrap();
                assert!(s.group.is_identity(&qp.point));
                assert!((qp.norm() - p.norm().powi(2)).abs() <= 1e-12 * p.norm().powi(2));
                let y = s.group.random_word(&gens, 5, &mut rng);
                let r = BundleElement::new(s.random_fiber(&mut rng), y);
                assert!(s.bundle_mul(&p, &r).unwrap().norm() <= p.norm() * r.norm() * (1.0 + 1e-12));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn adjoint_is_an_isometric_involution(seed in 0u64..10_000, len in 0u32..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in systems() {
                let x = s.group.random_word(&s.group.standard_generators(), len, &mut rng);
                let p = BundleElement::new(s.random_fiber(&mut rng), x);
                let pp = s.bundle_adjoint(&s.bundle_adjoint(&p));
                proptest::prop_assert_eq!(&pp.point, &p.point);
                proptest::prop_assert!((&pp.fiber - &p.fiber).norm() <= 1e-12 * p.norm());
                let qp = s.bundle_mul(&s.bundle_adjoint(&p), &p).unwrap();
                proptest::prop_assert!((qp.norm() - p.norm().powi(2)).abs() <= 1e-12 * p.norm().powi(2));
            }
        }
    }
}
