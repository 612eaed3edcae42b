use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use super::ball::fit_line;
use super::{Ball, Element, GeneratingSet, GroupModel, WordMetric, DEFAULT_BUDGET};
use crate::error::{Error, Result};

/// Level values `m_n` of a locally finite weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MSequence {
    /// `m_n = n + 1`
    Linear,
    /// `m_n = 2ⁿ`
    PowerOfTwo,
    Explicit(Vec<f64>),
}

impl MSequence {
    fn get(&self, n: u32) -> Option<f64> {
        match self {
            MSequence::Linear => Some(n as f64 + 1.0),
            MSequence::PowerOfTwo => Some(2f64.powi(n as i32)),
            MSequence::Explicit(v) => v.get(n as usize).copied(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let MSequence::Explicit(v) = self {
            if v.iter().any(|&m| !(m >= 1.0) || !m.is_finite()) {
                return Err(Error::InvalidSpec("locally finite levels must be >= 1".into()));
            }
            if v.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidSpec("locally finite levels must be nondecreasing".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum WeightKind {
    WordLength,
    PowerOfWordLength { s: f64 },
    /// On DirectSumZ2 with the chain `G_n` = span of the first n coordinates:
    /// `ν(x) = m_n` for `x ∈ G_{n+1} \ G_n` and `ν(e) = 1`.
    LocallyFinite { m: MSequence },
    Explicit { name: String },
}

/// Config-level weight description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Trivial,
    Word,
    WordPower { s: f64 },
    LocallyFinite { m: MSequence },
}

/// Convergence diagnostic for `Σ ν(x)^{-p}`.
#[derive(Clone, Debug, Serialize)]
pub struct Integrability {
    pub p: f64,
    /// Partial sum over the enumerated ball.
    pub partial: f64,
    pub n_max: u32,
    pub converged: bool,
    /// Fitted decay exponent `a` of shell contributions `~ n^{-a}`.
    pub shell_decay: f64,
    /// Estimated remainder beyond `n_max` (zero when the group is exhausted).
    pub tail_estimate: f64,
    pub exhausted: bool,
}

type Evaluator = Arc<dyn Fn(&Element) -> f64 + Send + Sync>;

/// A weight `ν : G → [1, ∞)` with its polynomial constant.
#[derive(Clone)]
pub struct Weight {
    pub kind: WeightKind,
    pub poly_constant: Option<f64>,
    pub integrability: Option<Integrability>,
    metric: Option<Arc<WordMetric>>,
    explicit: Option<Evaluator>,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Weight")
            .field("kind", &self.kind)
            .field("poly_constant", &self.poly_constant)
            .finish()
    }
}

impl Weight {
    /// `ν_K = 1 + σ_K`.
    pub fn word(model: &GroupModel, gens: &GeneratingSet) -> Result<Self> {
        Ok(Weight {
            kind: WeightKind::WordLength,
            poly_constant: Some(1.0),
            integrability: None,
            metric: Some(Arc::new(WordMetric::new(model, gens)?)),
            explicit: None,
        })
    }

    /// `(1 + σ_K)^s` for `s ≥ 1`.
    pub fn word_power(model: &GroupModel, gens: &GeneratingSet, s: f64) -> Result<Self> {
        if !(s >= 1.0) {
            return Err(Error::InvalidSpec(format!("weight power s = {s} must be >= 1")));
        }
        Ok(Weight {
            kind: WeightKind::PowerOfWordLength { s },
            poly_constant: Some(2f64.powf(s - 1.0)),
            integrability: None,
            metric: Some(Arc::new(WordMetric::new(model, gens)?)),
            explicit: None,
        })
    }

    pub fn locally_finite(model: &GroupModel, m: MSequence) -> Result<Self> {
        if *model != GroupModel::DirectSumZ2 {
            return Err(Error::InvalidSpec("locally finite chain weights live on DirectSumZ2".into()));
        }
        m.validate()?;
        Ok(Weight {
            kind: WeightKind::LocallyFinite { m },
            poly_constant: Some(1.0),
            integrability: None,
            metric: None,
            explicit: None,
        })
    }

    /// User-supplied evaluator. The caller vouches for the weight axioms.
    pub fn explicit(
        name: &str,
        poly_constant: Option<f64>,
        f: impl Fn(&Element) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Weight {
            kind: WeightKind::Explicit { name: name.into() },
            poly_constant,
            integrability: None,
            metric: None,
            explicit: Some(Arc::new(f)),
        }
    }

    /// The constant weight 1.
    pub fn trivial() -> Self {
        Weight::explicit("trivial", Some(1.0), |_| 1.0)
    }

    pub fn metric(&self) -> Option<&WordMetric> {
        self.metric.as_deref()
    }

    pub fn value(&self, x: &Element) -> Result<f64> {
        match &self.kind {
            WeightKind::WordLength => Ok(1.0 + self.metric.as_ref().unwrap().length(x)? as f64),
            WeightKind::PowerOfWordLength { s } => {
                let l = self.metric.as_ref().unwrap().length(x)? as f64;
                Ok((1.0 + l).powf(*s))
            }
            WeightKind::LocallyFinite { m } => {
                let mask = x.coords()[0];
                if mask == 0 {
                    return Ok(1.0);
                }
                let n = 63 - mask.leading_zeros();
                m.get(n).ok_or(Error::NotGenerated { radius: n })
            }
            WeightKind::Explicit { .. } => Ok((self.explicit.as_ref().unwrap())(x)),
        }
    }

    /// Weight of a whole shell of word length `n`, when it depends only on `n`.
    fn shell_value(&self, n: u32) -> Option<f64> {
        match &self.kind {
            WeightKind::WordLength => Some(1.0 + n as f64),
            WeightKind::PowerOfWordLength { s } => Some((1.0 + n as f64).powf(*s)),
            _ => None,
        }
    }
}

/// Sampled check of `ν ≥ 1`, `ν(x⁻¹) = ν(x)`, `ν(xy) ≤ ν(x)ν(y)` and
/// `ν(xy) ≤ C(ν(x)+ν(y))`.
#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub pairs: usize,
    pub violations: usize,
    /// Integer-valued weights are compared with zero slack.
    pub exact: bool,
    /// `max ν(xy)/(ν(x)ν(y))`
    pub worst_submult: f64,
    /// `max ν(xy)/(C(ν(x)+ν(y)))`
    pub worst_poly: f64,
    pub witness: Option<(Element, Element)>,
}

pub fn weight_axiom_check(
    w: &Weight,
    model: &GroupModel,
    gens: &GeneratingSet,
    radius: u32,
    pairs: usize,
    rng: &mut impl rand::Rng,
) -> Result<AxiomReport> {
    let c = w
        .poly_constant
        .ok_or_else(|| Error::InvalidSpec("weight has no polynomial constant".into()))?;
    let integral = |v: f64| v.fract() == 0.0;
    let mut exact = integral(c);
    let mut rows = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let x = model.random_word(gens, radius, rng);
        let y = model.random_word(gens, radius, rng);
        let vx = w.value(&x)?;
        let vy = w.value(&y)?;
        let vi = w.value(&model.inverse(&x))?;
        let vxy = w.value(&model.multiply(&x, &y))?;
        exact &= [vx, vy, vi, vxy].iter().all(|v| integral(*v) && *v < 2f64.powi(52));
        rows.push((x, y, vx, vy, vi, vxy));
    }
    let slack = if exact { 0.0 } else { 1e-12 };
    let mut rep = AxiomReport {
        pairs,
        violations: 0,
        exact,
        worst_submult: 0.0,
        worst_poly: 0.0,
        witness: None,
    };
    for (x, y, vx, vy, vi, vxy) in rows {
        let sub = vxy / (vx * vy);
        let poly = vxy / (c * (vx + vy));
        rep.worst_submult = rep.worst_submult.max(sub);
        rep.worst_poly = rep.worst_poly.max(poly);
        let bad = vx < 1.0
            || (vi - vx).abs() > slack * vx
            || vxy > vx * vy * (1.0 + slack)
            || vxy > c * (vx + vy) * (1.0 + slack);
        if bad {
            rep.violations += 1;
            rep.witness.get_or_insert((x, y));
        }
    }
    Ok(rep)
}

pub fn make_weight(model: &GroupModel, gens: &GeneratingSet, spec: &WeightSpec) -> Result<Weight> {
    match spec {
        WeightSpec::Trivial => Ok(Weight::trivial()),
        WeightSpec::Word => Weight::word(model, gens),
        WeightSpec::WordPower { s } => Weight::word_power(model, gens, *s),
        WeightSpec::LocallyFinite { m } => Weight::locally_finite(model, m.clone()),
    }
}

impl WordMetric {
    /// Number of elements of word length exactly n, for n = 0..=n_max.
    pub fn shell_sizes(&self, n_max: u32) -> Result<Vec<u64>> {
        let model = self.model().clone();
        if let Some(sizes) = closed_form_shells(&model, self, n_max) {
            return Ok(sizes);
        }
        let ball = Ball::enumerate(&model, self.generators(), n_max, DEFAULT_BUDGET)?;
        Ok((0..=n_max).map(|n| ball.shell(n).len() as u64).collect())
    }
}

fn binom(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn closed_form_shells(model: &GroupModel, metric: &WordMetric, n_max: u32) -> Option<Vec<u64>> {
    if !metric.has_fast_path() {
        return None;
    }
    match model {
        GroupModel::Zd { d } => {
            let d = *d as u64;
            Some(
                (0..=n_max as u64)
                    .map(|n| {
                        if n == 0 {
                            return 1;
                        }
                        (1..=d.min(n))
                            .map(|k| 2f64.powi(k as i32) * binom(d, k) * binom(n - 1, k - 1))
                            .sum::<f64>()
                            .round() as u64
                    })
                    .collect(),
            )
        }
        GroupModel::Heis3 => heis_shells(metric, n_max).ok(),
        _ => None,
    }
}

/// Partial sums of `Σ ν(x)^{-p}` over balls, with a convergence diagnostic.
///
/// Shell contributions of word weights decay polynomially, so convergence is
/// judged by the fitted decay exponent of the shell sums: exponent above 1 with
/// margin means a summable tail. Finite groups converge once exhausted.
pub fn weight_integrability(weight: &Weight, p: f64, n_max: u32) -> Result<Integrability> {
    if !(p > 0.0) {
        return Err(Error::InvalidSpec("integrability exponent must be positive".into()));
    }
    let (contrib, exhausted) = shell_contributions(weight, p, n_max)?;
    let partial: f64 = contrib.iter().sum();
    let n_used = contrib.len() as u32 - 1;
    if exhausted {
        return Ok(Integrability {
            p,
            partial,
            n_max: n_used,
            converged: true,
            shell_decay: f64::INFINITY,
            tail_estimate: 0.0,
            exhausted,
        });
    }
    let lo = (n_used / 2).max(1);
    let pts: Vec<(f64, f64)> = (lo..=n_used)
        .filter(|&n| contrib[n as usize] > 0.0)
        .map(|n| ((n as f64).ln(), contrib[n as usize].ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (slope, icpt, _) = if xs.len() >= 2 { fit_line(&xs, &ys) } else { (0.0, 0.0, 0.0) };
    let decay = -slope;
    let converged = decay > 1.05;
    let tail_estimate = if converged {
        icpt.exp() * (n_used as f64).powf(1.0 - decay) / (decay - 1.0)
    } else {
        f64::INFINITY
    };
    Ok(Integrability {
        p,
        partial,
        n_max: n_used,
        converged,
        shell_decay: decay,
        tail_estimate,
        exhausted,
    })
}

fn shell_contributions(weight: &Weight, p: f64, n_max: u32) -> Result<(Vec<f64>, bool)> {
    if let WeightKind::LocallyFinite { m } = &weight.kind {
        // Layers G_{n+1} \ G_n have 2ⁿ elements each.
        let mut out = vec![1.0];
        for n in 0..n_max.min(62) {
            match m.get(n) {
                Some(v) => out.push(2f64.powi(n as i32) * v.powf(-p)),
                None => break,
            }
        }
        return Ok((out, false));
    }
    let metric = weight
        .metric()
        .ok_or_else(|| Error::InvalidSpec("integrability needs a word-metric weight".into()))?;
    let sizes = metric.shell_sizes(n_max)?;
    let model = metric.model();
    let mut out = Vec::with_capacity(sizes.len());
    let mut exhausted = false;
    for (n, &s) in sizes.iter().enumerate() {
        if s == 0 {
            exhausted = true;
            break;
        }
        let v = weight.shell_value(n as u32).expect("word weights are shell constant");
        out.push(s as f64 * v.powf(-p));
    }
    if model.is_finite() && sizes.iter().sum::<u64>() as usize == model.order().unwrap_or(0) {
        exhausted = true;
    }
    Ok((out, exhausted))
}

/// Heisenberg shells from the word-length table: count c-values per (a,b).
fn heis_shells(metric: &WordMetric, n_max: u32) -> Result<Vec<u64>> {
    let mut sizes = vec![0u64; n_max as usize + 1];
    let r = n_max as i64;
    for a in -r..=r {
        for b in -(r - a.abs())..=(r - a.abs()) {
            let mut prev = 0u64;
            for n in (a.abs() + b.abs())..=r {
                let cnt = metric.heis_count(a, b, n as u32)?;
                sizes[n as usize] += cnt - prev;
                prev = cnt;
            }
        }
    }
    Ok(sizes)
}

/// Result of fitting `ν ≤ M ν_K^δ` on a sampled ball.
#[derive(Clone, Debug, Serialize)]
pub struct DominationFit {
    pub m: f64,
    pub delta: f64,
    /// Largest shell constant in the outer half over the largest in the inner half.
    pub violation_ratio: f64,
    pub radius: u32,
}

/// Finds `(M, δ)` with `ν ≤ M (1+σ_K)^δ` on the ball of radius `n_max`.
pub fn weight_domination_fit(weight: &Weight, model: &GroupModel, gens: &GeneratingSet, n_max: u32) -> Result<DominationFit> {
    const TOL: f64 = 1e-9;
    const CAP: f64 = 16.0;
    let ball = Ball::enumerate(model, gens, n_max, DEFAULT_BUDGET)?;
    let radius = ball.radius();
    let mut shell_max = Vec::new();
    for n in 1..=radius {
        let mut best = f64::NEG_INFINITY;
        for x in ball.shell(n) {
            best = best.max(weight.value(x)?.ln());
        }
        if best.is_finite() {
            shell_max.push((n, best));
        }
    }
    if shell_max.is_empty() {
        return Ok(DominationFit {
            m: 1.0,
            delta: 1.0,
            violation_ratio: 1.0,
            radius,
        });
    }
    let xs: Vec<f64> = shell_max.iter().map(|(n, _)| (1.0 + *n as f64).ln()).collect();
    let ys: Vec<f64> = shell_max.iter().map(|(_, v)| *v).collect();
    let (slope, _, _) = if xs.len() >= 2 { fit_line(&xs, &ys) } else { (1.0, 0.0, 0.0) };
    let mut delta = ((slope * 1e6).round() / 1e6).max(0.25);
    let split = shell_max.last().unwrap().0 / 2;
    while delta <= CAP {
        let logm: Vec<(u32, f64)> = shell_max
            .iter()
            .map(|(n, v)| (*n, v - delta * (1.0 + *n as f64).ln()))
            .collect();
        let inner = logm.iter().filter(|(n, _)| *n <= split.max(1)).map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let outer = logm.iter().filter(|(n, _)| *n > split.max(1)).map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let m = inner.max(outer).max(0.0).exp();
        let ratio = if outer.is_finite() { (outer - inner).exp() } else { 1.0 };
        if ratio <= 1.0 + TOL {
            return Ok(DominationFit {
                m,
                delta,
                violation_ratio: ratio,
                radius,
            });
        }
        delta += 0.25;
    }
    Err(Error::NoFit { cap: CAP })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn axioms(w: &Weight, model: &GroupModel, gens: &GeneratingSet, radius: u32, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = weight_axiom_check(w, model, gens, radius, 1000, &mut rng).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        r.worst_poly
    }

    #[test]
    fn word_weights_on_integers() {
        let z = GroupModel::Zd { d: 1 };
        let k = z.standard_generators();
        let w = Weight::word(&z, &k).unwrap();
        assert_eq!(w.value(&Element::new(&[5])).unwrap(), 6.0);
        assert_eq!(w.value(&Element::new(&[0])).unwrap(), 1.0);
        let w2 = Weight::word_power(&z, &k, 2.0).unwrap();
        assert_eq!(w2.value(&Element::new(&[3])).unwrap(), 16.0);
        assert_eq!(w2.poly_constant, Some(2.0));
        assert!(Weight::word_power(&z, &k, 0.5).is_err());
    }

    #[test]
    fn sampled_power_constant_is_tight() {
        // (1+|m+n|)^2 / (ν(m)+ν(n)) approaches 2 for m = n large.
        let z = GroupModel::Zd { d: 1 };
        let w = Weight::word_power(&z, &z.standard_generators(), 2.0).unwrap();
        let mut best: f64 = 0.0;
        for m in -200i64..=200 {
            for n in [-200i64, -50, 0, 50, 200] {
                let v = w.value(&Element::new(&[m + n])).unwrap();
                let r = v / (w.value(&Element::new(&[m])).unwrap() + w.value(&Element::new(&[n])).unwrap());
                best = best.max(r);
            }
        }
        assert!(best <= 2.0 && best > 1.95, "{best}");
    }

    #[test]
    fn locally_finite_levels() {
        let g = GroupModel::DirectSumZ2;
        let w = Weight::locally_finite(&g, MSequence::PowerOfTwo).unwrap();
        assert_eq!(w.value(&Element::new(&[0b1011])).unwrap(), 8.0);
        assert_eq!(w.value(&Element::new(&[1])).unwrap(), 1.0);
        assert_eq!(w.value(&g.identity()).unwrap(), 1.0);
        assert!(Weight::locally_finite(&g, MSequence::Explicit(vec![1.0, 3.0, 2.0])).is_err());
        assert!(Weight::locally_finite(&g, MSequence::Explicit(vec![0.5])).is_err());
        assert!(Weight::locally_finite(&GroupModel::Zd { d: 1 }, MSequence::Linear).is_err());
    }

    #[test]
    fn all_weights_satisfy_axioms() {
        let h = GroupModel::Heis3;
        let z2 = GroupModel::Zd { d: 2 };
        let ds = GroupModel::DirectSumZ2;
        let c6 = GroupModel::Cyclic { m: 6 };
        let cases: Vec<(Weight, GroupModel)> = vec![
            (Weight::word(&z2, &z2.standard_generators()).unwrap(), z2.clone()),
            (Weight::word_power(&z2, &z2.standard_generators(), 3.0).unwrap(), z2.clone()),
            (Weight::word(&h, &h.standard_generators()).unwrap(), h.clone()),
            (Weight::word_power(&h, &h.standard_generators(), 2.0).unwrap(), h.clone()),
            (Weight::word(&c6, &c6.standard_generators()).unwrap(), c6.clone()),
            (Weight::locally_finite(&ds, MSequence::Linear).unwrap(), ds.clone()),
            (Weight::locally_finite(&ds, MSequence::PowerOfTwo).unwrap(), ds.clone()),
        ];
        for (i, (w, g)) in cases.iter().enumerate() {
            let r = axioms(w, g, &g.standard_generators(), 12, i as u64);
            assert!(r <= 1.0, "{:?}: {r}", w.kind);
        }
    }

    #[test]
    fn integrability_on_integers() {
        let z = GroupModel::Zd { d: 1 };
        let w = Weight::word(&z, &z.standard_generators()).unwrap();
        let i2 = weight_integrability(&w, 2.0, 10_000).unwrap();
        // Independent partial sum 1 + 2 Σ (1+n)^-2.
        let oracle: f64 = 1.0 + 2.0 * (1..=10_000).map(|n| 1.0 / ((1.0 + n as f64).powi(2))).sum::<f64>();
        assert!((i2.partial - oracle).abs() < 1e-12);
        let limit = std::f64::consts::PI.powi(2) / 3.0 - 1.0;
        assert!((i2.partial - limit).abs() < 1e-3);
        assert!(i2.converged);
        let i1 = weight_integrability(&w, 1.0, 10_000).unwrap();
        assert!(!i1.converged);
    }

    #[test]
    fn integrability_in_dimension_two_and_heisenberg() {
        let z2 = GroupModel::Zd { d: 2 };
        let w = Weight::word(&z2, &z2.standard_generators()).unwrap();
        assert!(weight_integrability(&w, 4.0, 400).unwrap().converged);
        let h = GroupModel::Heis3;
        let wh = Weight::word(&h, &h.standard_generators()).unwrap();
        let ih = weight_integrability(&wh, 6.0, 40).unwrap();
        assert!(ih.converged, "{ih:?}");
        let c = GroupModel::Cyclic { m: 9 };
        let wc = Weight::word(&c, &c.standard_generators()).unwrap();
        let ic = weight_integrability(&wc, 1.0, 50).unwrap();
        assert!(ic.converged && ic.exhausted);
    }

    #[test]
    fn domination_fits() {
        let z2 = GroupModel::Zd { d: 2 };
        let k = z2.standard_generators();
        let f = weight_domination_fit(&Weight::word(&z2, &k).unwrap(), &z2, &k, 12).unwrap();
        assert!((f.m - 1.0).abs() < 1e-9 && (f.delta - 1.0).abs() < 1e-9);
        let f2 = weight_domination_fit(&Weight::word_power(&z2, &k, 2.0).unwrap(), &z2, &k, 12).unwrap();
        assert!((f2.delta - 2.0).abs() < 1e-6);
        let ds = GroupModel::DirectSumZ2;
        let kd = ds.standard_generators();
        let lf = Weight::locally_finite(&ds, MSequence::Linear).unwrap();
        let f3 = weight_domination_fit(&lf, &ds, &kd, 10).unwrap();
        assert!(f3.violation_ratio <= 1.0 + 1e-9 && f3.delta > 0.0);
    }

    #[test]
    fn shell_sizes_closed_form_matches_bfs() {
        for d in 1..=3 {
            let g = GroupModel::Zd { d };
            let k = g.standard_generators();
            let m = WordMetric::new(&g, &k).unwrap();
            let b = Ball::enumerate(&g, &k, 9, DEFAULT_BUDGET).unwrap();
            let bfs: Vec<u64> = (0..=9).map(|n| b.shell(n).len() as u64).collect();
            assert_eq!(m.shell_sizes(9).unwrap(), bfs);
        }
        let h = GroupModel::Heis3;
        let k = h.standard_generators();
        let m = WordMetric::new(&h, &k).unwrap();
        let b = Ball::enumerate(&h, &k, 12, DEFAULT_BUDGET).unwrap();
        let bfs: Vec<u64> = (0..=12).map(|n| b.shell(n).len() as u64).collect();
        assert_eq!(m.shell_sizes(12).unwrap(), bfs);
    }
}
