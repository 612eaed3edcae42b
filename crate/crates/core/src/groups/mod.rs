//! Discrete groups of polynomial growth: models, balls, word metrics and weights.
//!
//! Elements are stored as short integer coordinate vectors whose derived
//! ordering doubles as the canonical encoding used for sorted storage.

mod ball;
mod metric;
mod weight;

pub use ball::{growth_profile, Ball, GroupGrowth};
pub use metric::{word_length, WordMetric};
pub use weight::{
    make_weight, weight_axiom_check, weight_domination_fit, weight_integrability, AxiomReport, DominationFit,
    Integrability, MSequence, Weight, WeightKind, WeightSpec,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::fmt;

use crate::error::{Error, Result};

/// Default cap on enumerated elements.
pub const DEFAULT_BUDGET: usize = 2_000_000;

/// Number of coordinates used by the default generators of `DirectSumZ2`.
pub const DIRECT_SUM_DEFAULT_RANK: u32 = 8;

/// A group element in coordinates. Equality of coordinates is equality in the group.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Element(pub SmallVec<[i64; 4]>);

impl Element {
    pub fn new(coords: &[i64]) -> Self {
        Element(SmallVec::from_slice(coords))
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0.as_slice())
    }
}

impl Serialize for Element {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Element {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<i64>::deserialize(d)?;
        Ok(Element::new(&v))
    }
}

/// The built-in group models.
///
/// Heis3 stores `[[1,a,c],[0,1,b],[0,0,1]]` as `(a, b, c)`. DirectSumZ2 stores
/// a finitely supported 0/1 sequence as a bit mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GroupModel {
    Zd { d: usize },
    Heis3,
    Cyclic { m: i64 },
    DirectSumZ2,
    Product { left: Box<GroupModel>, right: Box<GroupModel> },
}

impl GroupModel {
    pub fn product(left: GroupModel, right: GroupModel) -> Self {
        GroupModel::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroupModel::Zd { d } if *d == 0 => Err(Error::InvalidSpec("Zd needs d >= 1".into())),
            GroupModel::Cyclic { m } if *m < 1 => {
                Err(Error::InvalidSpec("Cyclic needs m >= 1".into()))
            }
            GroupModel::Product { left, right } => {
                left.validate()?;
                right.validate()
            }
            _ => Ok(()),
        }
    }

    /// Number of integer coordinates per element.
    pub fn arity(&self) -> usize {
        match self {
            GroupModel::Zd { d } => *d,
            GroupModel::Heis3 => 3,
            GroupModel::Cyclic { .. } | GroupModel::DirectSumZ2 => 1,
            GroupModel::Product { left, right } => left.arity() + right.arity(),
        }
    }

    pub fn identity(&self) -> Element {
        Element(SmallVec::from_elem(0, self.arity()))
    }

    pub fn is_identity(&self, x: &Element) -> bool {
        x.0.iter().all(|&c| c == 0)
    }

    /// Whether `x` is a well-formed element of this model.
    pub fn contains(&self, x: &Element) -> bool {
        x.0.len() == self.arity() && self.contains_coords(&x.0)
    }

    fn contains_coords(&self, c: &[i64]) -> bool {
        match self {
            GroupModel::Zd { .. } | GroupModel::Heis3 => true,
            GroupModel::Cyclic { m } => (0..*m).contains(&c[0]),
            GroupModel::DirectSumZ2 => c[0] >= 0,
            GroupModel::Product { left, right } => {
                let k = left.arity();
                left.contains_coords(&c[..k]) && right.contains_coords(&c[k..])
            }
        }
    }

    pub fn multiply(&self, x: &Element, y: &Element) -> Element {
        let mut out = Element(SmallVec::from_elem(0, self.arity()));
        self.mul_into(&x.0, &y.0, &mut out.0);
        out
    }

    /// `xy` written into `out`, on raw coordinates.
    pub fn mul_coords(&self, x: &[i64], y: &[i64], out: &mut [i64]) {
        self.mul_into(x, y, out)
    }

    fn mul_into(&self, x: &[i64], y: &[i64], out: &mut [i64]) {
        match self {
            GroupModel::Zd { .. } => {
                for i in 0..x.len() {
                    out[i] = x[i] + y[i];
                }
            }
            GroupModel::Heis3 => {
                out[0] = x[0] + y[0];
                out[1] = x[1] + y[1];
                out[2] = x[2] + y[2] + x[0] * y[1];
            }
            GroupModel::Cyclic { m } => out[0] = (x[0] + y[0]).rem_euclid(*m),
            GroupModel::DirectSumZ2 => out[0] = x[0] ^ y[0],
            GroupModel::Product { left, right } => {
                let k = left.arity();
                let (ol, or) = out.split_at_mut(k);
                left.mul_into(&x[..k], &y[..k], ol);
                right.mul_into(&x[k..], &y[k..], or);
            }
        }
    }

    /// Coordinate-wise bounds on `xy` for `x`, `y` in the given coordinate
    /// boxes; `None` where no useful box exists.
    pub fn product_box(&self, a: &[(i64, i64)], b: &[(i64, i64)]) -> Option<Vec<(i64, i64)>> {
        let add = |p: (i64, i64), q: (i64, i64)| Some((p.0.checked_add(q.0)?, p.1.checked_add(q.1)?));
        match self {
            GroupModel::Zd { .. } => a.iter().zip(b).map(|(p, q)| add(*p, *q)).collect(),
            GroupModel::Heis3 => {
                let prods = [a[0].0.checked_mul(b[1].0)?, a[0].0.checked_mul(b[1].1)?, a[0].1.checked_mul(b[1].0)?, a[0].1.checked_mul(b[1].1)?];
                let m = (*prods.iter().min()?, *prods.iter().max()?);
                Some(vec![add(a[0], b[0])?, add(a[1], b[1])?, add(add(a[2], b[2])?, m)?])
            }
            GroupModel::Cyclic { m } => Some(vec![(0, m - 1)]),
            GroupModel::DirectSumZ2 => None,
            GroupModel::Product { left, right } => {
                let k = left.arity();
                let mut l = left.product_box(&a[..k], &b[..k])?;
                l.extend(right.product_box(&a[k..], &b[k..])?);
                Some(l)
            }
        }
    }

    pub fn inverse(&self, x: &Element) -> Element {
        let mut out = Element(SmallVec::from_elem(0, self.arity()));
        self.inv_into(&x.0, &mut out.0);
        out
    }

    fn inv_into(&self, x: &[i64], out: &mut [i64]) {
        match self {
            GroupModel::Zd { .. } => {
                for i in 0..x.len() {
                    out[i] = -x[i];
                }
            }
            GroupModel::Heis3 => {
                out[0] = -x[0];
                out[1] = -x[1];
                out[2] = x[0] * x[1] - x[2];
            }
            GroupModel::Cyclic { m } => out[0] = (-x[0]).rem_euclid(*m),
            GroupModel::DirectSumZ2 => out[0] = x[0],
            GroupModel::Product { left, right } => {
                let k = left.arity();
                let (ol, or) = out.split_at_mut(k);
                left.inv_into(&x[..k], ol);
                right.inv_into(&x[k..], or);
            }
        }
    }

    /// Declared polynomial growth order.
    pub fn growth_order(&self) -> u32 {
        match self {
            GroupModel::Zd { d } => *d as u32,
            GroupModel::Heis3 => 4,
            GroupModel::Cyclic { .. } | GroupModel::DirectSumZ2 => 0,
            GroupModel::Product { left, right } => left.growth_order() + right.growth_order(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            GroupModel::Cyclic { .. } => true,
            GroupModel::Product { left, right } => left.is_finite() && right.is_finite(),
            _ => false,
        }
    }

    pub fn order(&self) -> Option<usize> {
        match self {
            GroupModel::Cyclic { m } => Some(*m as usize),
            GroupModel::Product { left, right } => Some(left.order()? * right.order()?),
            _ => None,
        }
    }

    /// All elements of a finite group in canonical order.
    pub fn elements(&self) -> Option<Vec<Element>> {
        match self {
            GroupModel::Cyclic { m } => Some((0..*m).map(|i| Element::new(&[i])).collect()),
            GroupModel::Product { left, right } => {
                let l = left.elements()?;
                let r = right.elements()?;
                let mut out = Vec::with_capacity(l.len() * r.len());
                for a in &l {
                    for b in &r {
                        let mut c = a.0.clone();
                        c.extend_from_slice(&b.0);
                        out.push(Element(c));
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// The standard symmetric generating set, identity included.
    pub fn standard_generators(&self) -> GeneratingSet {
        let mut gens = vec![self.identity()];
        self.push_standard(&mut gens);
        GeneratingSet::new(self, gens).expect("standard generators are symmetric")
    }

    fn push_standard(&self, gens: &mut Vec<Element>) {
        let n = self.arity();
        let unit = |i: usize, s: i64| {
            let mut c: SmallVec<[i64; 4]> = SmallVec::from_elem(0, n);
            c[i] = s;
            Element(c)
        };
        match self {
            GroupModel::Zd { d } => {
                for i in 0..*d {
                    gens.push(unit(i, 1));
                    gens.push(unit(i, -1));
                }
            }
            GroupModel::Heis3 => {
                for i in 0..2 {
                    gens.push(unit(i, 1));
                    gens.push(unit(i, -1));
                }
            }
            GroupModel::Cyclic { m } => {
                if *m >= 2 {
                    gens.push(Element::new(&[1]));
                }
                if *m >= 3 {
                    gens.push(Element::new(&[m - 1]));
                }
            }
            GroupModel::DirectSumZ2 => {
                for i in 0..DIRECT_SUM_DEFAULT_RANK {
                    gens.push(Element::new(&[1i64 << i]));
                }
            }
            GroupModel::Product { left, right } => {
                let (lk, rk) = (left.arity(), right.arity());
                let mut lg = Vec::new();
                left.push_standard(&mut lg);
                for g in lg {
                    let mut c = g.0.clone();
                    c.extend(std::iter::repeat(0).take(rk));
                    gens.push(Element(c));
                }
                let mut rg = Vec::new();
                right.push_standard(&mut rg);
                for g in rg {
                    let mut c: SmallVec<[i64; 4]> = SmallVec::from_elem(0, lk);
                    c.extend_from_slice(&g.0);
                    gens.push(Element(c));
                }
            }
        }
    }

    /// Random element of word length at most `radius`, as a random word in `gens`.
    pub fn random_word<R: Rng>(&self, gens: &GeneratingSet, radius: u32, rng: &mut R) -> Element {
        let len = rng.random_range(0..=radius);
        let mut x = self.identity();
        for _ in 0..len {
            let g = &gens.elements[rng.random_range(0..gens.elements.len())];
            x = self.multiply(&x, g);
        }
        x
    }
}

impl GroupModel {
    /// Inverse of the `Display` form: `Zd:2`, `Heis3`, `Cyclic:6`,
    /// `DirectSumZ2`, `(A)x(B)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("unknown group {s:?}"));
        if let Some(rest) = s.strip_prefix('(') {
            // Split at the `)x(` whose left part has balanced parentheses.
            let mut depth = 1usize;
            for (i, c) in rest.char_indices() {
                match c {
                    '(' => depth += 1,
                    ')' => {
                        depth -= 1;
                        if depth == 0 {
                            let right = rest[i + 1..].strip_prefix("x(").and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
                            return Ok(GroupModel::product(GroupModel::parse(&rest[..i])?, GroupModel::parse(right)?));
                        }
                    }
                    _ => {}
                }
            }
            return Err(bad());
        }
        let g = match s.split_once(':') {
            Some(("Zd", d)) => GroupModel::Zd { d: d.parse().map_err(|_| bad())? },
            Some(("Cyclic", m)) => GroupModel::Cyclic { m: m.parse().map_err(|_| bad())? },
            None if s == "Heis3" => GroupModel::Heis3,
            None if s == "DirectSumZ2" => GroupModel::DirectSumZ2,
            _ => return Err(bad()),
        };
        g.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(g)
    }
}

impl fmt::Display for GroupModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupModel::Zd { d } => write!(f, "Zd:{d}"),
            GroupModel::Heis3 => write!(f, "Heis3"),
            GroupModel::Cyclic { m } => write!(f, "Cyclic:{m}"),
            GroupModel::DirectSumZ2 => write!(f, "DirectSumZ2"),
            GroupModel::Product { left, right } => write!(f, "({left})x({right})"),
        }
    }
}

/// A finite generating set containing the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratingSet {
    pub elements: Vec<Element>,
    pub symmetric: bool,
}

impl GeneratingSet {
    /// Adds the identity if missing and records whether the set is closed under inverses.
    pub fn new(model: &GroupModel, mut elements: Vec<Element>) -> Result<Self> {
        for x in &elements {
            if !model.contains(x) {
                return Err(Error::InvalidSpec(format!("{x:?} is not an element of {model}")));
            }
        }
        let e = model.identity();
        if !elements.contains(&e) {
            elements.insert(0, e);
        }
        let mut dedup = Vec::with_capacity(elements.len());
        for x in elements {
            if !dedup.contains(&x) {
                dedup.push(x);
            }
        }
        let symmetric = dedup.iter().all(|x| dedup.contains(&model.inverse(x)));
        Ok(GeneratingSet {
            elements: dedup,
            symmetric,
        })
    }

    /// Same as [`GeneratingSet::new`] but rejects non-symmetric input.
    pub fn symmetric(model: &GroupModel, elements: Vec<Element>) -> Result<Self> {
        let k = Self::new(model, elements)?;
        if !k.symmetric {
            return Err(Error::InvalidSpec("generating set is not symmetric".into()));
        }
        Ok(k)
    }

    /// Generators other than the identity, in stored order.
    pub fn moves<'a>(&'a self, model: &'a GroupModel) -> impl Iterator<Item = &'a Element> + 'a {
        self.elements.iter().filter(move |x| !model.is_identity(x))
    }

    /// `{0} ∪ {±e_i}` style cube generators on ℤ^d: all vectors in {-1,0,1}^d.
    pub fn zd_cube(d: usize) -> Self {
        let model = GroupModel::Zd { d };
        let mut els = Vec::new();
        let total = 3usize.pow(d as u32);
        for mut code in 0..total {
            let mut c: SmallVec<[i64; 4]> = SmallVec::new();
            for _ in 0..d {
                c.push((code % 3) as i64 - 1);
                code /= 3;
            }
            els.push(Element(c));
        }
        GeneratingSet::new(&model, els).expect("cube is symmetric")
    }

    /// Every element of a finite group.
    pub fn whole_group(model: &GroupModel) -> Option<Self> {
        GeneratingSet::new(model, model.elements()?).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_inverts_display() {
        let mut all = models();
        all.push(GroupModel::product(GroupModel::product(GroupModel::Zd { d: 1 }, GroupModel::Heis3), GroupModel::Cyclic { m: 5 }));
        for g in all {
            assert_eq!(GroupModel::parse(&g.to_string()).unwrap(), g);
        }
        for bad in ["Zd:0", "Zd", "Cyclic:x", "Heis4", "(Zd:1)x", "(Zd:1)(Zd:2)"] {
            assert!(GroupModel::parse(bad).is_err(), "{bad}");
        }
    }

    fn models() -> Vec<GroupModel> {
        vec![
            GroupModel::Zd { d: 1 },
            GroupModel::Zd { d: 3 },
            GroupModel::Heis3,
            GroupModel::Cyclic { m: 6 },
            GroupModel::DirectSumZ2,
            GroupModel::product(GroupModel::Cyclic { m: 2 }, GroupModel::Heis3),
        ]
    }

    #[test]
    fn heisenberg_matches_matrix_product() {
        let g = GroupModel::Heis3;
        let mat = |x: &Element| {
            let c = x.coords();
            [[1, c[0], c[2]], [0, 1, c[1]], [0, 0, 1]]
        };
        let x = Element::new(&[2, -3, 5]);
        let y = Element::new(&[-1, 4, 7]);
        let (a, b) = (mat(&x), mat(&y));
        let mut prod = [[0i64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                prod[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        assert_eq!(mat(&g.multiply(&x, &y)), prod);
    }

    #[test]
    fn group_axioms_on_random_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in models() {
            let k = g.standard_generators();
            for _ in 0..200 {
                let x = g.random_word(&k, 6, &mut rng);
                let y = g.random_word(&k, 6, &mut rng);
                let z = g.random_word(&k, 6, &mut rng);
                assert!(g.is_identity(&g.multiply(&x, &g.inverse(&x))), "{g}");
                assert_eq!(
                    g.multiply(&g.multiply(&x, &y), &z),
                    g.multiply(&x, &g.multiply(&y, &z)),
                    "{g}"
                );
                assert!(g.contains(&g.multiply(&x, &y)));
            }
        }
    }

    #[test]
    fn finite_orders_and_growth_orders() {
        let p = GroupModel::product(GroupModel::Cyclic { m: 2 }, GroupModel::Cyclic { m: 3 });
        assert_eq!(p.order(), Some(6));
        assert_eq!(p.elements().unwrap().len(), 6);
        assert_eq!(GroupModel::Heis3.growth_order(), 4);
        assert_eq!(GroupModel::Zd { d: 2 }.growth_order(), 2);
        assert_eq!(GroupModel::Cyclic { m: 5 }.growth_order(), 0);
    }

    #[test]
    fn generating_sets() {
        let z = GroupModel::Zd { d: 1 };
        let k = GeneratingSet::new(&z, vec![Element::new(&[1])]).unwrap();
        assert!(!k.symmetric);
        assert!(k.elements.contains(&z.identity()));
        assert!(GeneratingSet::symmetric(&z, vec![Element::new(&[1])]).is_err());
        assert_eq!(GeneratingSet::zd_cube(3).elements.len(), 27);
    }

    proptest! {
        #[test]
        fn encoding_is_injective_on_words(w1 in proptest::collection::vec(0usize..5, 0..12),
                                          w2 in proptest::collection::vec(0usize..5, 0..12)) {
            // Equal coordinates must coincide with equal matrices.
            let g = GroupModel::Heis3;
            let k = g.standard_generators();
            let eval = |w: &[usize]| w.iter().fold(g.identity(), |x, &i| g.multiply(&x, &k.elements[i]));
            let (x, y) = (eval(&w1), eval(&w2));
            let q = g.multiply(&g.inverse(&x), &y);
            prop_assert_eq!(x == y, g.is_identity(&q));
        }
    }
}
