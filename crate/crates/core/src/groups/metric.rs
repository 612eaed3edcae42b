use std::collections::HashSet;
use std::sync::RwLock;

use super::{Ball, Element, GeneratingSet, GroupModel, DEFAULT_BUDGET};
use crate::error::{Error, Result};

/// `σ_K(x)` by breadth-first search, failing past `r_max`.
pub fn word_length(model: &GroupModel, gens: &GeneratingSet, x: &Element, r_max: u32) -> Result<u32> {
    let mut ball = Ball::new(model, gens);
    loop {
        if let Some(n) = ball.length_of(x) {
            return Ok(n);
        }
        if ball.radius() >= r_max || ball.exhausted() {
            return Err(Error::NotGenerated { radius: r_max });
        }
        ball.extend_to(ball.radius() + 1, DEFAULT_BUDGET)?;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    ZdL1,
    CyclicStd(i64),
    WholeFinite,
    DirectSumBits(u32),
    Heis3Std,
    Bfs,
}

/// Word metric `σ_K` with closed forms for standard generating sets and a
/// lazily grown table otherwise. Safe to share; lookups fill caches idempotently.
#[derive(Debug)]
pub struct WordMetric {
    model: GroupModel,
    gens: GeneratingSet,
    kind: Kind,
    r_max: u32,
    budget: usize,
    bfs: RwLock<Ball>,
    heis: RwLock<HeisTable>,
}

impl Clone for WordMetric {
    fn clone(&self) -> Self {
        WordMetric {
            model: self.model.clone(),
            gens: self.gens.clone(),
            kind: self.kind,
            r_max: self.r_max,
            budget: self.budget,
            bfs: RwLock::new(self.bfs.read().unwrap().clone()),
            heis: RwLock::new(self.heis.read().unwrap().clone()),
        }
    }
}

fn same_set(a: &[Element], b: &[Element]) -> bool {
    let sa: HashSet<&Element> = a.iter().collect();
    let sb: HashSet<&Element> = b.iter().collect();
    sa == sb
}

impl WordMetric {
    pub fn new(model: &GroupModel, gens: &GeneratingSet) -> Result<Self> {
        Self::with_limits(model, gens, 4096, DEFAULT_BUDGET)
    }

    pub fn with_limits(model: &GroupModel, gens: &GeneratingSet, r_max: u32, budget: usize) -> Result<Self> {
        if !gens.symmetric {
            return Err(Error::InvalidSpec("word metric needs a symmetric generating set".into()));
        }
        let std = model.standard_generators();
        let kind = match model {
            GroupModel::Zd { .. } if same_set(&gens.elements, &std.elements) => Kind::ZdL1,
            GroupModel::Cyclic { m } if same_set(&gens.elements, &std.elements) => Kind::CyclicStd(*m),
            GroupModel::Heis3 if same_set(&gens.elements, &std.elements) => Kind::Heis3Std,
            GroupModel::DirectSumZ2 => {
                let rank = gens.elements.len() as u32 - 1;
                let bits: Vec<Element> = std::iter::once(model.identity())
                    .chain((0..rank).map(|i| Element::new(&[1i64 << i])))
                    .collect();
                if rank < 62 && same_set(&gens.elements, &bits) {
                    Kind::DirectSumBits(rank)
                } else {
                    Kind::Bfs
                }
            }
            _ if model.is_finite() && gens.elements.len() == model.order().unwrap_or(0) => Kind::WholeFinite,
            _ => Kind::Bfs,
        };
        Ok(WordMetric {
            model: model.clone(),
            gens: gens.clone(),
            kind,
            r_max,
            budget,
            bfs: RwLock::new(Ball::new(model, gens)),
            heis: RwLock::new(HeisTable::default()),
        })
    }

    pub fn model(&self) -> &GroupModel {
        &self.model
    }

    pub fn generators(&self) -> &GeneratingSet {
        &self.gens
    }

    /// Whether the metric is evaluated by a closed form or table rather than search.
    pub fn has_fast_path(&self) -> bool {
        self.kind != Kind::Bfs
    }

    pub fn length(&self, x: &Element) -> Result<u32> {
        let c = x.coords();
        match self.kind {
            Kind::ZdL1 => Ok(c.iter().map(|v| v.unsigned_abs()).sum::<u64>() as u32),
            Kind::CyclicStd(m) => Ok(c[0].min(m - c[0]) as u32),
            Kind::WholeFinite => Ok(u32::from(!self.model.is_identity(x))),
            Kind::DirectSumBits(rank) => {
                if c[0] >> rank != 0 {
                    Err(Error::NotGenerated { radius: self.r_max })
                } else {
                    Ok(c[0].count_ones())
                }
            }
            Kind::Heis3Std => self.heis_length(c[0], c[1], c[2]),
            Kind::Bfs => self.bfs_length(x),
        }
    }

    fn bfs_length(&self, x: &Element) -> Result<u32> {
        if let Some(n) = self.bfs.read().unwrap().length_of(x) {
            return Ok(n);
        }
        let mut ball = self.bfs.write().unwrap();
        loop {
            if let Some(n) = ball.length_of(x) {
                return Ok(n);
            }
            if ball.radius() >= self.r_max || ball.exhausted() {
                return Err(Error::NotGenerated { radius: self.r_max });
            }
            let r = ball.radius() + 1;
            ball.extend_to(r, self.budget)?;
        }
    }

    /// Number of Heisenberg elements `(a, b, ·)` of word length at most `n`.
    pub(crate) fn heis_count(&self, a: i64, b: i64, n: u32) -> Result<u64> {
        let n0 = (a.unsigned_abs() + b.unsigned_abs()) as u32;
        if n < n0 {
            return Ok(0);
        }
        if self.heis.read().unwrap().radius < n {
            let mut t = self.heis.write().unwrap();
            if t.radius < n {
                *t = HeisTable::build(n.max(2 * t.radius));
            }
        }
        let t = self.heis.read().unwrap();
        let (lo, hi) = t.cells[HeisTable::idx(t.radius as i64, a, b)][(n - n0) as usize];
        Ok((hi - lo + 1) as u64)
    }

    fn heis_length(&self, a: i64, b: i64, c: i64) -> Result<u32> {
        let need = (a.unsigned_abs() + b.unsigned_abs()) as u32;
        {
            let t = self.heis.read().unwrap();
            if let Some(n) = t.lookup(a, b, c) {
                return Ok(n);
            }
        }
        let mut t = self.heis.write().unwrap();
        let mut r = t.radius.max(need).max(8);
        loop {
            if let Some(n) = t.lookup(a, b, c) {
                return Ok(n);
            }
            if t.radius >= self.r_max {
                return Err(Error::NotGenerated { radius: self.r_max });
            }
            r = (r * 2).min(self.r_max);
            let cells = (2 * r as usize + 1).pow(2) * (r as usize + 1) / 3;
            if cells > 64 * self.budget {
                return Err(Error::BudgetExceeded {
                    what: "Heisenberg word-length table",
                    partial: cells,
                    limit: 64 * self.budget,
                });
            }
            *t = HeisTable::build(r);
        }
    }
}

/// For each `(a, b)` and `n`, the elements `(a, b, c)` of word length `≤ n`
/// form an integer interval in `c`. The table stores these intervals; the
/// interval property is checked against breadth-first search in the tests.
#[derive(Clone, Debug, Default)]
struct HeisTable {
    radius: u32,
    /// Per `(a,b)` cell: intervals for n = |a|+|b| ..= radius.
    cells: Vec<Vec<(i64, i64)>>,
}

impl HeisTable {
    fn idx(r: i64, a: i64, b: i64) -> usize {
        let w = 2 * r + 1;
        ((a + r) * w + (b + r)) as usize
    }

    fn build(r: u32) -> Self {
        let ri = r as i64;
        let w = (2 * ri + 1) as usize;
        const NONE: (i64, i64) = (i64::MAX, i64::MIN);
        let mut cur = vec![NONE; w * w];
        cur[Self::idx(ri, 0, 0)] = (0, 0);
        let mut cells: Vec<Vec<(i64, i64)>> = vec![Vec::new(); w * w];
        cells[Self::idx(ri, 0, 0)].push((0, 0));
        for n in 1..=ri {
            let mut next = cur.clone();
            for a in -n..=n {
                let rest = n - a.abs();
                for b in -rest..=rest {
                    let i = Self::idx(ri, a, b);
                    let mut iv = next[i];
                    let mut merge = |lo: i64, hi: i64| {
                        if lo <= hi {
                            iv.0 = iv.0.min(lo);
                            iv.1 = iv.1.max(hi);
                        }
                    };
                    // Appending (±1,0,0) keeps c; appending (0,±1,0) from (a, b∓1) adds ±a.
                    if a > -ri {
                        let p = cur[Self::idx(ri, a - 1, b)];
                        merge(p.0, p.1);
                    }
                    if a < ri {
                        let p = cur[Self::idx(ri, a + 1, b)];
                        merge(p.0, p.1);
                    }
                    if b > -ri {
                        let p = cur[Self::idx(ri, a, b - 1)];
                        if p.0 <= p.1 {
                            merge(p.0 + a, p.1 + a);
                        }
                    }
                    if b < ri {
                        let p = cur[Self::idx(ri, a, b + 1)];
                        if p.0 <= p.1 {
                            merge(p.0 - a, p.1 - a);
                        }
                    }
                    next[i] = iv;
                    if iv.0 <= iv.1 {
                        cells[i].push(iv);
                    }
                }
            }
            cur = next;
        }
        HeisTable { radius: r, cells }
    }

    fn lookup(&self, a: i64, b: i64, c: i64) -> Option<u32> {
        let r = self.radius as i64;
        let n0 = a.abs() + b.abs();
        if self.cells.is_empty() || n0 > r {
            return None;
        }
        let cell = &self.cells[Self::idx(r, a, b)];
        // Intervals are nested and increasing in n.
        let k = cell.partition_point(|&(lo, hi)| !(lo <= c && c <= hi));
        (k < cell.len()).then(|| (n0 + k as i64) as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simple_values() {
        let z = GroupModel::Zd { d: 1 };
        let k = z.standard_generators();
        assert_eq!(word_length(&z, &k, &Element::new(&[5]), 100).unwrap(), 5);
        assert_eq!(word_length(&z, &k, &z.identity(), 0).unwrap(), 0);
        assert!(matches!(
            word_length(&z, &k, &Element::new(&[50]), 10),
            Err(Error::NotGenerated { .. })
        ));
        let h = GroupModel::Heis3;
        let kh = h.standard_generators();
        // The commutator [x, y] is the central element (0,0,1) and has length 4.
        assert_eq!(word_length(&h, &kh, &Element::new(&[0, 0, 1]), 10).unwrap(), 4);
        assert_eq!(word_length(&h, &kh, &Element::new(&[1, 0, 1]), 10).unwrap(), 3);
    }

    #[test]
    fn heisenberg_table_matches_bfs_on_ball() {
        let h = GroupModel::Heis3;
        let k = h.standard_generators();
        let ball = Ball::enumerate(&h, &k, 18, DEFAULT_BUDGET).unwrap();
        let m = WordMetric::new(&h, &k).unwrap();
        assert!(m.has_fast_path());
        for x in ball.elements_within(18) {
            assert_eq!(m.length(x).unwrap(), ball.length_of(x).unwrap(), "{x:?}");
        }
        // Points just outside the ball must have length 19 or more.
        let outside = [Element::new(&[0, 0, 30]), Element::new(&[9, 9, 0]), Element::new(&[10, 9, 0])];
        for x in &outside {
            if ball.length_of(x).is_none() {
                assert!(m.length(x).unwrap() > 18);
            }
        }
    }

    #[test]
    fn closed_forms_match_bfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cases = vec![
            (GroupModel::Zd { d: 2 }, None),
            (GroupModel::Zd { d: 3 }, None),
            (GroupModel::Cyclic { m: 7 }, None),
            (GroupModel::Cyclic { m: 8 }, None),
            (GroupModel::DirectSumZ2, None),
            (GroupModel::Cyclic { m: 5 }, GeneratingSet::whole_group(&GroupModel::Cyclic { m: 5 })),
        ];
        for (g, gens) in cases {
            let k = gens.unwrap_or_else(|| g.standard_generators());
            let m = WordMetric::new(&g, &k).unwrap();
            assert!(m.has_fast_path(), "{g}");
            for _ in 0..200 {
                let x = g.random_word(&k, 7, &mut rng);
                assert_eq!(m.length(&x).unwrap(), word_length(&g, &k, &x, 20).unwrap(), "{g} {x:?}");
            }
        }
    }

    #[test]
    fn bfs_fallback_with_cube_generators() {
        let g = GroupModel::Zd { d: 2 };
        let k = GeneratingSet::zd_cube(2);
        let m = WordMetric::new(&g, &k).unwrap();
        assert!(!m.has_fast_path());
        assert_eq!(m.length(&Element::new(&[3, -7])).unwrap(), 7);
        assert_eq!(m.length(&Element::new(&[2, 1])).unwrap(), 2);
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in -30i64..30, b in -30i64..30, c in -200i64..200,
                               a2 in -30i64..30, b2 in -30i64..30, c2 in -200i64..200) {
            static METRIC: std::sync::OnceLock<WordMetric> = std::sync::OnceLock::new();
            let h = GroupModel::Heis3;
            let m = METRIC.get_or_init(|| WordMetric::new(&h, &h.standard_generators()).unwrap());
            let x = Element::new(&[a, b, c]);
            let y = Element::new(&[a2, b2, c2]);
            let lx = m.length(&x).unwrap();
            let ly = m.length(&y).unwrap();
            prop_assert_eq!(lx, m.length(&h.inverse(&x)).unwrap());
            prop_assert!(m.length(&h.multiply(&x, &y)).unwrap() <= lx + ly);
        }
    }
}
