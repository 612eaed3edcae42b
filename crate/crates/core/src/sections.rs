//! Finitely supported cross-sections `C_c(G|𝒞)` with twisted convolution and
//! involution, and the minimal unitization.

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use crate::bundle::{BundleElement, Fiber, FiberLiteral, TwistedSystem, C64};
use crate::error::{Error, Result};
use crate::groups::{Element, GroupModel};

/// Fibers smaller than this fraction of the section's ℓ¹ norm are dropped.
pub const PRUNE_REL: f64 = 1e-15;

/// A finitely supported section `x ↦ Φ(x)`, kept sorted by element encoding.
///
/// `dropped` is an ℓ¹ bound on everything pruned away while producing this
/// value, including pruning inherited from the operands.
#[derive(Clone, Debug)]
pub struct CrossSection {
    system: Arc<TwistedSystem>,
    terms: BTreeMap<Element, Fiber>,
    dropped: f64,
}

fn same_system(a: &TwistedSystem, b: &TwistedSystem) -> Result<()> {
    if a.id() != b.id() {
        return Err(Error::SystemMismatch);
    }
    Ok(())
}

impl CrossSection {
    pub fn zero(system: &Arc<TwistedSystem>) -> Self {
        CrossSection {
            system: system.clone(),
            terms: BTreeMap::new(),
            dropped: 0.0,
        }
    }

    /// `δ_e ⊗ 1`, the unit of the discrete algebra.
    pub fn unit(system: &Arc<TwistedSystem>) -> Self {
        CrossSection::point(system, system.group.identity(), Fiber::identity(system.k))
    }

    pub fn point(system: &Arc<TwistedSystem>, x: Element, a: Fiber) -> Self {
        let mut s = CrossSection::zero(system);
        s.insert(x, a);
        s
    }

    /// Scalar point mass `c·δ_x ⊗ 1`.
    pub fn delta(system: &Arc<TwistedSystem>, coords: &[i64], c: f64) -> Self {
        CrossSection::point(system, Element::new(coords), Fiber::scalar_in(system.k, C64::new(c, 0.0)))
    }

    pub fn from_terms<I: IntoIterator<Item = (Element, Fiber)>>(system: &Arc<TwistedSystem>, terms: I) -> Result<Self> {
        let mut s = CrossSection::zero(system);
        for (x, a) in terms {
            if a.dim() != system.k {
                return Err(Error::DimensionMismatch { left: a.dim(), right: system.k });
            }
            if !system.group.contains(&x) {
                return Err(Error::InvalidSpec(format!("{x:?} is not an element of {}", system.group)));
            }
            if system.diagonal_fibers() && !a.is_diagonal() {
                return Err(Error::InvalidSpec("this action requires diagonal fibers".into()));
            }
            match s.terms.get_mut(&x) {
                Some(f) => *f += &a,
                None => {
                    s.terms.insert(x, a);
                }
            }
        }
        s.terms.retain(|_, f| !f.is_zero());
        Ok(s)
    }

    /// Adds `a` at `x`, dropping the entry if it cancels to zero.
    pub fn insert(&mut self, x: Element, a: Fiber) {
        match self.terms.get_mut(&x) {
            Some(f) => {
                *f += &a;
                if f.is_zero() {
                    self.terms.remove(&x);
                }
            }
            None => {
                if !a.is_zero() {
                    self.terms.insert(x, a);
                }
            }
        }
    }

    pub fn system(&self) -> &Arc<TwistedSystem> {
        &self.system
    }

    pub fn group(&self) -> &GroupModel {
        &self.system.group
    }

    pub fn k(&self) -> usize {
        self.system.k
    }

    pub fn get(&self, x: &Element) -> Option<&Fiber> {
        self.terms.get(x)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Element, &Fiber)> {
        self.terms.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Element> {
        self.terms.keys()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dropped_mass(&self) -> f64 {
        self.dropped
    }

    /// Returns the dropped budget and resets it to zero.
    pub fn take_dropped(&mut self) -> f64 {
        std::mem::take(&mut self.dropped)
    }

    pub fn add_dropped(&mut self, m: f64) {
        self.dropped += m;
    }

    /// `Σ ‖Φ(x)‖`.
    pub fn norm_l1(&self) -> f64 {
        self.terms.values().map(|f| f.norm()).sum()
    }

    /// Scalar coefficient at `x` (entry (0,0) of the fiber).
    pub fn coeff(&self, coords: &[i64]) -> C64 {
        self.terms
            .get(&Element::new(coords))
            .map(|f| f.get(0, 0))
            .unwrap_or_default()
    }

    /// Drops fibers below `rel × ‖Φ‖₁`, charging their mass to the dropped budget.
    pub fn prune(&mut self, rel: f64) {
        let cut = rel * self.norm_l1();
        let mut lost = 0.0;
        self.terms.retain(|_, f| {
            if f.is_zero() {
                return false;
            }
            let n = f.norm();
            if n < cut {
                lost += n;
                false
            } else {
                true
            }
        });
        self.dropped += lost;
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = CrossSection::zero(&self.system);
        if c != C64::new(0.0, 0.0) {
            out.terms = self.terms.iter().map(|(x, f)| (x.clone(), f.scale(c))).collect();
        }
        out.dropped = self.dropped * c.norm();
        out
    }

    pub fn scale_real(&self, r: f64) -> Self {
        self.scale(C64::new(r, 0.0))
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, other: &CrossSection, c: C64) -> Result<Self> {
        same_system(&self.system, &other.system)?;
        let mut out = self.clone();
        for (x, f) in &other.terms {
            out.insert(x.clone(), f.scale(c));
        }
        out.dropped += other.dropped * c.norm();
        Ok(out)
    }

    pub fn add(&self, other: &CrossSection) -> Result<Self> {
        self.add_scaled(other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &CrossSection) -> Result<Self> {
        self.add_scaled(other, C64::new(-1.0, 0.0))
    }

    /// `‖Φ − Ψ‖₁`.
    pub fn distance_l1(&self, other: &CrossSection) -> Result<f64> {
        Ok(self.sub(other)?.norm_l1())
    }

    /// `(Φ*Ψ)(x) = Σ_y Φ(y)•Ψ(y⁻¹x)`, as a double loop over both supports.
    pub fn convolve(&self, other: &CrossSection) -> Result<Self> {
        same_system(&self.system, &other.system)?;
        let sys = &self.system;
        let g = &sys.group;
        let mut acc: FxHashMap<Element, Fiber> = FxHashMap::with_capacity_and_hasher((self.len() * other.len() / 2 + 1).min(1 << 16), Default::default());
        let plain = sys.trivial_action() && sys.trivial_twist();
        if sys.k == 1 {
            // Scalar fibers: the action is trivial and the cocycle is a phase.
            if let Some(out) = self.convolve_dense(other) {
                return Ok(out);
            }
            let twisted = !sys.trivial_twist();
            let mut sacc: FxHashMap<Element, C64> = FxHashMap::with_capacity_and_hasher((self.len() * other.len() / 2 + 1).min(1 << 16), Default::default());
            for (y, a) in &self.terms {
                let a = a.get(0, 0);
                for (z, b) in &other.terms {
                    let mut c = a * b.get(0, 0);
                    if twisted {
                        if let Some(w) = sys.omega_scalar(y, z) {
                            c *= w;
                        }
                    }
                    *sacc.entry(g.multiply(y, z)).or_default() += c;
                }
            }
            acc = sacc.into_iter().map(|(x, c)| (x, Fiber::scalar(c))).collect();
        } else {
            for (y, a) in &self.terms {
                let prep = sys.prepare(y);
                for (z, b) in &other.terms {
                    let yz = g.multiply(y, z);
                    let ab = if plain { a.matmul(b) } else { a.matmul(&prep.apply(b)) };
                    let f = match sys.omega(y, z) {
                        Some(w) => ab.matmul(&w),
                        None => ab,
                    };
                    match acc.get_mut(&yz) {
                        Some(s) => *s += &f,
                        None => {
                            acc.insert(yz, f);
                        }
                    }
                }
            }
        }
        let mut out = CrossSection::zero(sys);
        out.terms = acc.into_iter().collect();
        let (n1, n2) = (self.norm_l1(), other.norm_l1());
        out.dropped = self.dropped * n2 + other.dropped * n1 + self.dropped * other.dropped;
        out.prune(PRUNE_REL);
        Ok(out)
    }

    /// Scalar convolution accumulated in a dense coordinate box, when the
    /// box is not much larger than the number of products.
    fn convolve_dense(&self, other: &CrossSection) -> Option<Self> {
        let sys = &self.system;
        let g = &sys.group;
        if self.is_empty() || other.is_empty() {
            return None;
        }
        let bounds = |s: &CrossSection| {
            let n = g.arity();
            let mut b = vec![(i64::MAX, i64::MIN); n];
            for x in s.terms.keys() {
                for (i, &c) in x.coords().iter().enumerate() {
                    b[i] = (b[i].0.min(c), b[i].1.max(c));
                }
            }
            b
        };
        let bx = g.product_box(&bounds(self), &bounds(other))?;
        let mut vol: usize = 1;
        for &(lo, hi) in &bx {
            vol = vol.checked_mul(usize::try_from(hi - lo + 1).ok()?)?;
        }
        let pairs = self.len().saturating_mul(other.len());
        if vol > (4 * pairs).max(1 << 12) || vol > 1 << 24 {
            return None;
        }
        let strides: Vec<usize> = {
            let mut st = vec![1usize; bx.len()];
            for i in (0..bx.len().saturating_sub(1)).rev() {
                st[i] = st[i + 1] * (bx[i + 1].1 - bx[i + 1].0 + 1) as usize;
            }
            st
        };
        let nc_theta = match &sys.cocycle_theta() {
            Some(t) if t.den <= 1 << 16 => Some(*t),
            Some(_) => return None,
            None if sys.trivial_twist() => None,
            None => return None,
        };
        let table: Vec<C64> = nc_theta.map(|t| (0..t.den).map(|n| t.phase(n)).collect()).unwrap_or_default();
        let mut dense = vec![C64::new(0.0, 0.0); vol];
        let mut xy = vec![0i64; bx.len()];
        let rhs: Vec<(&Element, C64)> = other.terms.iter().map(|(z, b)| (z, b.get(0, 0))).collect();
        for (y, a) in &self.terms {
            let a = a.get(0, 0);
            let yc = y.coords();
            for &(z, b) in &rhs {
                let zc = z.coords();
                g.mul_coords(yc, zc, &mut xy);
                let mut c = a * b;
                if let Some(t) = nc_theta {
                    c *= table[(yc[1] * zc[0]).rem_euclid(t.den) as usize];
                }
                let idx: usize = xy.iter().zip(&bx).zip(&strides).map(|((v, (lo, _)), s)| (v - lo) as usize * s).sum();
                dense[idx] += c;
            }
        }
        let mut out = CrossSection::zero(sys);
        let mut coords = vec![0i64; bx.len()];
        for (idx, v) in dense.into_iter().enumerate() {
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            let mut r = idx;
            for (i, s) in strides.iter().enumerate() {
                coords[i] = bx[i].0 + (r / s) as i64;
                r %= s;
            }
            out.terms.insert(Element::new(&coords), Fiber::scalar(v));
        }
        let (n1, n2) = (self.norm_l1(), other.norm_l1());
        out.dropped = self.dropped * n2 + other.dropped * n1 + self.dropped * other.dropped;
        out.prune(PRUNE_REL);
        Some(out)
    }

    /// `Φ^*(x) = ω(x,x⁻¹)^* α_x(Φ(x⁻¹)^*)`.
    pub fn involution(&self) -> Self {
        let sys = &self.system;
        let g = &sys.group;
        let mut out = CrossSection::zero(sys);
        for (y, a) in &self.terms {
            let x = g.inverse(y);
            let mut f = sys.alpha(&x, &a.adjoint());
            if let Some(w) = sys.omega(&x, y) {
                f = w.adjoint().matmul(&f);
            }
            out.terms.insert(x, f);
        }
        out.dropped = self.dropped;
        out
    }

    /// `Φ^*(x) = Φ(x⁻¹)^•`, pointwise through the bundle involution.
    pub fn involution_via_bundle(&self) -> Self {
        let mut out = CrossSection::zero(&self.system);
        for (x, a) in &self.terms {
            let b = self.system.bundle_adjoint(&BundleElement::new(a.clone(), x.clone()));
            out.terms.insert(b.point, b.fiber);
        }
        out.dropped = self.dropped;
        out
    }

    /// `‖Φ − Φ^*‖₁ ≤ tol·max(1, ‖Φ‖₁)`.
    pub fn is_selfadjoint(&self, tol: f64) -> bool {
        let d = self.sub(&self.involution()).map(|s| s.norm_l1()).unwrap_or(f64::INFINITY);
        d <= tol * self.norm_l1().max(1.0)
    }

    /// `(Φ + Φ^*)/2`.
    pub fn selfadjoint_part(&self) -> Self {
        self.add(&self.involution()).expect("same system").scale_real(0.5)
    }

    /// `Φⁿ` by repeated squaring.
    pub fn power(&self, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec("power needs n >= 1".into()));
        }
        let mut base = self.clone();
        let mut e = n;
        let mut acc: Option<CrossSection> = None;
        loop {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => a.convolve(&base)?,
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            base = base.convolve(&base)?;
        }
        Ok(acc.expect("n >= 1"))
    }

    /// Largest word radius of the support under the standard generators.
    pub fn support_radius(&self) -> Result<u32> {
        let g = self.group();
        let metric = crate::groups::WordMetric::new(g, &g.standard_generators())?;
        let mut r = 0;
        for x in self.support() {
            r = r.max(metric.length(x)?);
        }
        Ok(r)
    }

    /// Seeded random section with `n_points` random points of word length
    /// at most `radius` and Gaussian fibers.
    pub fn random<R: Rng>(system: &Arc<TwistedSystem>, radius: u32, n_points: usize, selfadjoint: bool, rng: &mut R) -> Self {
        let g = &system.group;
        let gens = g.standard_generators();
        let mut s = CrossSection::zero(system);
        for _ in 0..n_points {
            let x = g.random_word(&gens, radius, rng);
            let a = system.random_fiber(rng);
            s.insert(x, a);
        }
        if selfadjoint {
            s.selfadjoint_part()
        } else {
            s
        }
    }

    /// Writes `point,row,col,re,im` rows; point coordinates are `;`-separated.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "point,row,col,re,im")?;
        for (x, f) in &self.terms {
            let p: Vec<String> = x.coords().iter().map(|c| c.to_string()).collect();
            for i in 0..f.dim() {
                for j in 0..f.dim() {
                    let z = f.get(i, j);
                    if z.re != 0.0 || z.im != 0.0 {
                        writeln!(w, "{},{},{},{:e},{:e}", p.join(";"), i, j, z.re, z.im)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_literal(&self) -> SectionLiteral {
        SectionLiteral(
            self.terms
                .iter()
                .map(|(x, f)| PointLiteral {
                    point: x.clone(),
                    fiber: FiberLiteral::from_fiber(f),
                })
                .collect(),
        )
    }
}

/// One `{"point": [...], "fiber": ...}` entry of a section literal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointLiteral {
    pub point: Element,
    pub fiber: FiberLiteral,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectionLiteral(pub Vec<PointLiteral>);

impl SectionLiteral {
    /// Scalar literals are promoted to `c·1` when the fibers are matrices.
    pub fn to_section(&self, system: &Arc<TwistedSystem>) -> Result<CrossSection> {
        let mut terms = Vec::new();
        for p in &self.0 {
            let mut f = p.fiber.to_fiber()?;
            if f.dim() == 1 && system.k > 1 {
                f = Fiber::scalar_in(system.k, f.get(0, 0));
            }
            terms.push((p.point.clone(), f));
        }
        CrossSection::from_terms(system, terms)
    }
}

/// `r·1 + Φ` in the minimal unitization, normed by `‖Φ‖ + |r|`.
#[derive(Clone, Debug)]
pub struct UnitalElement {
    pub scalar: C64,
    pub section: CrossSection,
}

impl UnitalElement {
    pub fn new(scalar: C64, section: CrossSection) -> Self {
        UnitalElement { scalar, section }
    }

    pub fn one(system: &Arc<TwistedSystem>) -> Self {
        UnitalElement::new(C64::new(1.0, 0.0), CrossSection::zero(system))
    }

    pub fn from_section(section: CrossSection) -> Self {
        UnitalElement::new(C64::new(0.0, 0.0), section)
    }

    /// `(r,Φ)(s,Ψ) = (rs, rΨ + sΦ + Φ*Ψ)`.
    pub fn mul(&self, other: &UnitalElement) -> Result<Self> {
        let prod = self.section.convolve(&other.section)?;
        let sec = prod
            .add_scaled(&other.section, self.scalar)?
            .add_scaled(&self.section, other.scalar)?;
        Ok(UnitalElement::new(self.scalar * other.scalar, sec))
    }

    pub fn add(&self, other: &UnitalElement) -> Result<Self> {
        Ok(UnitalElement::new(self.scalar + other.scalar, self.section.add(&other.section)?))
    }

    pub fn sub(&self, other: &UnitalElement) -> Result<Self> {
        Ok(UnitalElement::new(self.scalar - other.scalar, self.section.sub(&other.section)?))
    }

    pub fn scale(&self, c: C64) -> Self {
        UnitalElement::new(self.scalar * c, self.section.scale(c))
    }

    pub fn adjoint(&self) -> Self {
        UnitalElement::new(self.scalar.conj(), self.section.involution())
    }

    /// `‖Φ‖₁ + |r|`.
    pub fn norm_l1(&self) -> f64 {
        self.section.norm_l1() + self.scalar.norm()
    }

    /// Image in the discrete algebra, where the unit is `δ_e ⊗ 1`.
    pub fn to_section(&self) -> CrossSection {
        let sys = self.section.system();
        let e = sys.group.identity();
        let mut s = self.section.clone();
        if self.scalar != C64::new(0.0, 0.0) {
            s.insert(e, Fiber::scalar_in(sys.k, self.scalar));
        }
        s
    }
}
