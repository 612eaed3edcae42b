//! Norms on cross-sections, the truncated left regular representation, and
//! operator-norm / spectral-radius estimators.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;

use crate::bundle::{BundleElement, Fiber, Prepared, C64};
use crate::error::{Error, Result};
use crate::groups::{Ball, Element, Weight, DEFAULT_BUDGET};
use crate::sections::CrossSection;

/// Cap on the dimension `k²·|B_R|` of dense regular-representation matrices.
pub const REGULAR_REP_CAP: usize = 4000;

/// Default power-iteration cap.
pub const DEFAULT_ITERS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    Truncated { radius: u32 },
    Sampled { n: usize, seed: u64 },
    Extrapolated,
}

/// A computed norm with provenance. `lower_bound` marks values that can only
/// grow as the computation is refined.
#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub value: f64,
    pub method: Method,
    pub lower_bound: bool,
    pub error_budget: f64,
    pub last_increment: Option<f64>,
    pub iterations: Option<usize>,
}

impl NormReport {
    fn exact(value: f64, error_budget: f64) -> Self {
        NormReport {
            value,
            method: Method::Exact,
            lower_bound: false,
            error_budget,
            last_increment: None,
            iterations: None,
        }
    }
}

/// `(Σ‖Φ(x)‖^p)^{1/p}`, or the sup norm for `p = ∞`.
pub fn norm_lp(phi: &CrossSection, p: f64) -> f64 {
    if p.is_infinite() {
        return norm_linf(phi);
    }
    if p == 1.0 {
        return phi.norm_l1();
    }
    phi.iter().map(|(_, f)| f.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

pub fn norm_linf(phi: &CrossSection) -> f64 {
    phi.iter().map(|(_, f)| f.norm()).fold(0.0, f64::max)
}

/// `(Σ ν(x)^p‖Φ(x)‖^p)^{1/p}`; for `p = ∞`, `max ν(x)‖Φ(x)‖`.
pub fn norm_lp_weighted(phi: &CrossSection, p: f64, nu: &Weight) -> Result<f64> {
    let mut acc = 0.0f64;
    for (x, f) in phi.iter() {
        let v = nu.value(x)? * f.norm();
        if p.is_infinite() {
            acc = acc.max(v);
        } else {
            acc += v.powf(p);
        }
    }
    Ok(if p.is_infinite() || p == 1.0 { acc } else { acc.powf(1.0 / p) })
}

/// `‖Σ_x Φ(x)^•Φ(x)‖^{1/2}`, the Hilbert-module norm over the unit fiber.
pub fn norm_l2e(phi: &CrossSection) -> f64 {
    let sys = phi.system();
    let mut acc = Fiber::zeros(sys.k);
    for (x, a) in phi.iter() {
        let p = BundleElement::new(a.clone(), x.clone());
        let q = sys.bundle_adjoint(&p);
        let prod = sys.bundle_mul(&q, &p).expect("fiber dimensions agree");
        acc += &prod.fiber;
    }
    acc.norm().sqrt()
}

/// `max{‖Φ‖_{1,ν}, ‖Φ‖_∞}`.
pub fn norm_e(phi: &CrossSection, nu: &Weight) -> Result<f64> {
    Ok(norm_lp_weighted(phi, 1.0, nu)?.max(norm_linf(phi)))
}

/// The compression of `λ(Φ)` to `⊕_{y∈B_R} M_k`, stored as a sparse list of
/// block moves `ξ(src) ↦ a·α_y(ξ(src))·ω(y,src)` landing at `dst = y·src`.
pub struct TruncatedRep {
    k: usize,
    points: usize,
    scalar: Vec<(u32, u32, C64)>,
    blocks: Vec<(u32, u32, u32, Option<Fiber>)>,
    preps: Vec<(Fiber, Prepared)>,
}

impl TruncatedRep {
    /// `elements` must list `B_R`; only the first `points` are used.
    pub fn new(phi: &CrossSection, elements: &[Element], index: &HashMap<Element, u32>, points: usize) -> Self {
        let sys = phi.system();
        let g = &sys.group;
        let k = sys.k;
        let mut rep = TruncatedRep {
            k,
            points,
            scalar: Vec::new(),
            blocks: Vec::new(),
            preps: Vec::new(),
        };
        for (y, a) in phi.iter() {
            let yi = rep.preps.len() as u32;
            if k > 1 {
                rep.preps.push((a.clone(), sys.prepare(y)));
            }
            for (j, v) in elements.iter().take(points).enumerate() {
                let w = g.multiply(y, v);
                let Some(&i) = index.get(&w) else { continue };
                if i as usize >= points {
                    continue;
                }
                let om = sys.omega(y, v);
                if k == 1 {
                    let c = a.get(0, 0) * om.map(|o| o.get(0, 0)).unwrap_or(C64::new(1.0, 0.0));
                    rep.scalar.push((j as u32, i, c));
                } else {
                    rep.blocks.push((j as u32, i, yi, om));
                }
            }
        }
        rep
    }

    pub fn dim(&self) -> usize {
        self.points * self.k * self.k
    }

    pub fn apply(&self, xi: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        if self.k == 1 {
            for &(s, d, c) in &self.scalar {
                out[d as usize] += c * xi[s as usize];
            }
            return;
        }
        let kk = self.k * self.k;
        for (s, d, yi, om) in &self.blocks {
            let src = &xi[*s as usize * kk..(*s as usize + 1) * kk];
            if src.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                continue;
            }
            let mut b = Fiber::zeros(self.k);
            b.entries_mut().copy_from_slice(src);
            let (a, prep) = &self.preps[*yi as usize];
            let mut f = a.matmul(&prep.apply(&b));
            if let Some(w) = om {
                f = f.matmul(w);
            }
            for (o, v) in out[*d as usize * kk..(*d as usize + 1) * kk].iter_mut().zip(f.entries()) {
                *o += v;
            }
        }
    }
}

fn ball_index(phi: &CrossSection, radius: u32, budget: usize) -> Result<(Ball, Vec<Element>, HashMap<Element, u32>)> {
    let g = phi.group();
    let ball = Ball::enumerate(g, &g.standard_generators(), radius, budget)?;
    let elements: Vec<Element> = ball.elements_within(radius).cloned().collect();
    let index = elements.iter().enumerate().map(|(i, x)| (x.clone(), i as u32)).collect();
    Ok((ball, elements, index))
}

/// Dense matrix of `ξ ↦ 1_{B_R}·(Φ*ξ)` in the basis `E_ij ⊗ δ_y`, `y ∈ B_R`
/// in breadth-first order, together with that point order.
pub fn regular_rep_matrix(phi: &CrossSection, radius: u32, cap: usize) -> Result<(DMatrix<C64>, Vec<Element>)> {
    let kk = phi.k() * phi.k();
    let (_, elements, index) = ball_index(phi, radius, cap / kk + 1)?;
    let dim = kk * elements.len();
    if dim > cap {
        return Err(Error::BudgetExceeded {
            what: "regular representation matrix",
            partial: dim,
            limit: cap,
        });
    }
    let rep = TruncatedRep::new(phi, &elements, &index, elements.len());
    let mut m = DMatrix::zeros(dim, dim);
    let mut e = vec![C64::new(0.0, 0.0); dim];
    let mut out = vec![C64::new(0.0, 0.0); dim];
    for c in 0..dim {
        e[c] = C64::new(1.0, 0.0);
        rep.apply(&e, &mut out);
        for (r, v) in out.iter().enumerate() {
            m[(r, c)] = *v;
        }
        e[c] = C64::new(0.0, 0.0);
    }
    Ok((m, elements))
}

fn normalize(v: &mut [C64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
    n
}

/// Deterministic start vector: all ones plus a small seeded perturbation so
/// that no eigenvector is missed by symmetry.
fn start_vector(dim: usize) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(1.0 + 0.01 * re, 0.01 * im)
        })
        .collect();
    normalize(&mut v);
    v
}

/// Power iteration on `T^*T` from `v` (unit vector); returns the final
/// Rayleigh quotient, last increment and iteration count. `v` is updated.
fn power_iterate(t: &TruncatedRep, ta: &TruncatedRep, v: &mut [C64], iters: usize) -> (f64, f64, usize) {
    let dim = v.len();
    let mut tv = vec![C64::new(0.0, 0.0); dim];
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let mut mu = 0.0f64;
    let mut inc = f64::INFINITY;
    let mut it = 0;
    while it < iters {
        t.apply(v, &mut tv);
        let m = tv.iter().map(|z| z.norm_sqr()).sum::<f64>();
        ta.apply(&tv, &mut w);
        inc = m - mu;
        mu = m;
        it += 1;
        if normalize(&mut w) == 0.0 {
            break;
        }
        v.copy_from_slice(&w);
        if it > 1 && inc.abs() < 1e-12 * mu.max(1e-300) {
            break;
        }
    }
    (mu, inc, it)
}

/// Lower bound for `‖λ(Φ)‖` from power iteration on the compression to `B_R`.
pub fn opnorm_estimate(phi: &CrossSection, radius: u32, iters: usize) -> Result<NormReport> {
    Ok(opnorm_escalate(phi, &[radius], iters, DEFAULT_BUDGET)?.0)
}

/// Runs power iteration on the increasing radii in `radii`, warm-starting each
/// stage from the previous vector padded by zeros, so the values are
/// nondecreasing. Returns the last report and the per-radius trace.
pub fn opnorm_escalate(
    phi: &CrossSection,
    radii: &[u32],
    iters: usize,
    budget: usize,
) -> Result<(NormReport, Vec<(u32, f64)>)> {
    let r_max = *radii.iter().max().ok_or_else(|| Error::InvalidSpec("no radii".into()))?;
    let (ball, elements, index) = ball_index(phi, r_max, budget)?;
    let sizes = ball.sizes();
    let kk = phi.k() * phi.k();
    let adj = phi.involution();
    let mut trace = Vec::new();
    let mut v: Vec<C64> = Vec::new();
    let mut report = None;
    let mut prev = 0.0f64;
    for &r in radii {
        let points = sizes[(r as usize).min(sizes.len() - 1)];
        let t = TruncatedRep::new(phi, &elements, &index, points);
        let ta = TruncatedRep::new(&adj, &elements, &index, points);
        if v.is_empty() {
            v = start_vector(points * kk);
        } else {
            v.resize(points * kk, C64::new(0.0, 0.0));
        }
        let (mu, inc, it) = power_iterate(&t, &ta, &mut v, iters);
        let value = mu.max(0.0).sqrt().max(prev);
        trace.push((r, value));
        report = Some(NormReport {
            value,
            method: if ball.exhausted() && r >= ball.radius() {
                Method::Exact
            } else {
                Method::Truncated { radius: r }
            },
            lower_bound: true,
            error_budget: phi.dropped_mass(),
            last_increment: Some(value - prev),
            iterations: Some(it),
        });
        let _ = inc;
        prev = value;
    }
    Ok((report.expect("nonempty radii"), trace))
}

/// Geometric escalation from `4 × supp radius` until the increment drops
/// below `tol` or the budget trips.
pub fn opnorm_auto(phi: &CrossSection, tol: f64, iters: usize, budget: usize) -> Result<NormReport> {
    let r0 = (4 * phi.support_radius()?).max(4);
    let mut radii = vec![r0];
    let mut best: Option<NormReport> = None;
    loop {
        match opnorm_escalate(phi, &radii, iters, budget) {
            Ok((rep, trace)) => {
                let n = trace.len();
                let done = n >= 2 && (trace[n - 1].1 - trace[n - 2].1) < tol;
                let exact = rep.method == Method::Exact;
                best = Some(rep);
                if done || exact {
                    break;
                }
            }
            Err(e @ Error::BudgetExceeded { .. }) => match best {
                Some(_) => break,
                None => return Err(e),
            },
            Err(e) => return Err(e),
        }
        let next = (*radii.last().unwrap() as f64 * 1.5).ceil() as u32;
        radii.push(next);
    }
    Ok(best.expect("at least one radius ran"))
}

/// `X ↦ a·α_x(X)` on `M_k ≅ ℂ^{k²}`, row-major vectorization.
fn fiber_operator(phi: &CrossSection, x: &Element, a: &Fiber) -> DMatrix<C64> {
    let k = phi.k();
    let kk = k * k;
    let prep = phi.system().prepare(x);
    let mut m = DMatrix::zeros(kk, kk);
    for c in 0..kk {
        let mut e = Fiber::zeros(k);
        e.set(c / k, c % k, C64::new(1.0, 0.0));
        let img = a.matmul(&prep.apply(&e));
        for (r, v) in img.entries().iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

/// The family `H_x = S_x^†S_x` where `‖π(Φ(x))ξ‖² = Σ_w ⟨ξ_w, H_x ξ_w⟩`. The
/// cocycle factor `ω(x,w)` is a right unitary and drops out of these norms.
pub struct PiForms {
    pub k: usize,
    forms: Vec<DMatrix<C64>>,
}

impl PiForms {
    pub fn new(phi: &CrossSection) -> Self {
        let forms = phi
            .iter()
            .map(|(x, a)| {
                let s = fiber_operator(phi, x, a);
                s.adjoint() * s
            })
            .collect();
        PiForms { k: phi.k(), forms }
    }

    /// `‖π(Φ(x))ξ‖` for each support point, `ξ` given as a `k² × |B_R|` matrix.
    pub fn pointwise(&self, xi: &DMatrix<C64>) -> Vec<f64> {
        self.forms
            .iter()
            .map(|h| {
                let hx = h * xi;
                xi.iter().zip(hx.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>().max(0.0).sqrt()
            })
            .collect()
    }

    /// `(Σ_x ‖π(Φ(x))ξ‖^p)^{1/p}`; `p = ∞` gives the max.
    pub fn value(&self, p: f64, xi: &DMatrix<C64>) -> f64 {
        let v = self.pointwise(xi);
        if p.is_infinite() {
            v.into_iter().fold(0.0, f64::max)
        } else {
            v.iter().map(|t| t.powf(p)).sum::<f64>().powf(1.0 / p)
        }
    }

    /// Normalized gradient step for the convex objective `Σ_x ‖S_xξ‖^p`.
    fn ascend(&self, p: f64, xi: &DMatrix<C64>) -> DMatrix<C64> {
        let norms = self.pointwise(xi);
        let mut g = DMatrix::zeros(xi.nrows(), xi.ncols());
        for (h, n) in self.forms.iter().zip(norms) {
            if n <= 0.0 {
                continue;
            }
            g += (h * xi) * C64::new(n.powf(p - 2.0), 0.0);
        }
        let gn = g.norm();
        if gn > 0.0 {
            g / C64::new(gn, 0.0)
        } else {
            xi.clone()
        }
    }

    /// `Σ_x H_x` on a single block; its top eigenvalue is `‖Φ‖²_{π,2}`.
    pub fn gram(&self) -> DMatrix<C64> {
        let kk = self.k * self.k;
        self.forms.iter().fold(DMatrix::zeros(kk, kk), |acc, h| acc + h)
    }
}

/// Seeded unit vectors in `⊕_{y∈B_R} M_k`, as `k² × points` matrices.
pub fn sample_xis(k: usize, points: usize, n: usize, seed: u64) -> Vec<DMatrix<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let m = DMatrix::from_fn(k * k, points, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im)
            });
            let nn = m.norm();
            m / C64::new(nn, 0.0)
        })
        .collect()
}

fn top_eigvec(h: &DMatrix<C64>) -> (f64, DVector<C64>) {
    let eig = h.clone().symmetric_eigen();
    let (i, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    (lam, eig.eigenvectors.column(i).into_owned())
}

/// Estimate of `‖Φ‖_{π,p}` over the regular covariant representation on
/// `⊕_{y∈B_R} M_k`.
///
/// `p = 2` is computed exactly as the top eigenvalue of the Gram form. Other
/// `p` take the best of `n_samples` seeded vectors plus one structured start
/// per large fiber, each refined by normalized gradient ascent; the result is
/// a lower bound and never falls below `‖Φ‖_∞`.
pub fn norm_pi_p_estimate(phi: &CrossSection, p: f64, radius: u32, n_samples: usize, seed: u64) -> Result<NormReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidSpec(format!("p must lie in [1,∞], got {p}")));
    }
    if phi.is_empty() {
        return Ok(NormReport::exact(0.0, 0.0));
    }
    let forms = PiForms::new(phi);
    if p == 2.0 {
        let (lam, _) = top_eigvec(&forms.gram());
        return Ok(NormReport::exact(lam.max(0.0).sqrt(), phi.dropped_mass()));
    }
    let g = phi.group();
    let points = Ball::enumerate(g, &g.standard_generators(), radius, DEFAULT_BUDGET)?.len();
    let kk = phi.k() * phi.k();
    let mut starts = sample_xis(phi.k(), points, n_samples, seed);
    let mut by_norm: Vec<(usize, f64)> = phi.iter().map(|(_, f)| f.norm()).enumerate().collect();
    by_norm.sort_by(|a, b| b.1.total_cmp(&a.1));
    for &(i, _) in by_norm.iter().take(4) {
        let (_, v) = top_eigvec(&forms.forms[i]);
        let mut m = DMatrix::zeros(kk, points);
        m.set_column(0, &v);
        starts.push(m);
    }
    let mut best = 0.0f64;
    let steps = 40;
    for mut xi in starts {
        let mut val = forms.value(p, &xi);
        for _ in 0..steps {
            let next = forms.ascend(p, &xi);
            let nv = forms.value(p, &next);
            if nv <= val * (1.0 + 1e-13) {
                val = val.max(nv);
                break;
            }
            xi = next;
            val = nv;
        }
        best = best.max(val);
    }
    Ok(NormReport {
        value: best,
        method: Method::Sampled { n: n_samples, seed },
        lower_bound: true,
        error_budget: phi.dropped_mass(),
        last_increment: None,
        iterations: Some(steps),
    })
}

/// The sequence `‖Φ^{2^j}‖^{1/2^j}` under ℓ¹ (and optionally ℓ^{1,ν}).
#[derive(Clone, Debug, Serialize)]
pub struct GelfandReport {
    pub powers: Vec<u64>,
    pub roots: Vec<f64>,
    pub weighted_roots: Option<Vec<f64>>,
    /// Last term of the sequence.
    pub raw: f64,
    /// Aitken Δ² on the last three terms.
    pub aitken: Option<f64>,
    /// `exp(s)` from fitting `log‖Φⁿ‖ = s·n + a·log n + b` through the last three powers.
    pub extrapolated: f64,
    pub raw_weighted: Option<f64>,
    pub extrapolated_weighted: Option<f64>,
    pub doublings: usize,
    pub budget_hit: bool,
    pub error_budget: f64,
}

fn three_point(logs: &[f64], powers: &[u64]) -> Option<f64> {
    let n = logs.len();
    if n < 3 {
        return None;
    }
    let (l1, l2, l3) = (logs[n - 3], logs[n - 2], logs[n - 1]);
    if !(l1.is_finite() && l2.is_finite() && l3.is_finite()) {
        return None;
    }
    Some(((l3 - 2.0 * l2 + l1) / powers[n - 3] as f64).exp())
}

fn aitken(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let (a, b, c) = (x[n - 3], x[n - 2], x[n - 1]);
    let d = c - 2.0 * b + a;
    if d.abs() < 1e-300 {
        return Some(c);
    }
    Some(c - (c - b).powi(2) / d)
}

/// Repeated squaring with a log-scale accumulator: `Ψ_j = Φ^{2^j}/s_j` is kept
/// at unit ℓ¹ norm. Stops early, with `budget_hit`, when the next square
/// would exceed `budget` pair products.
pub fn spectral_radius_gelfand(
    phi: &CrossSection,
    max_doublings: usize,
    weight: Option<&Weight>,
    budget: usize,
) -> Result<GelfandReport> {
    let n0 = phi.norm_l1();
    let mut powers = vec![1u64];
    let mut logs = vec![n0.ln()];
    let mut wlogs = Vec::new();
    if let Some(w) = weight {
        wlogs.push(norm_lp_weighted(phi, 1.0, w)?.ln());
    }
    let mut budget_hit = false;
    if n0 > 0.0 {
        let mut psi = phi.scale_real(1.0 / n0);
        let mut log_s = n0.ln();
        for _ in 0..max_doublings {
            if psi.len().saturating_mul(psi.len()) > budget {
                budget_hit = true;
                break;
            }
            let sq = psi.convolve(&psi)?;
            let c = sq.norm_l1();
            let n = 2 * powers.last().unwrap();
            log_s *= 2.0;
            powers.push(n);
            if c == 0.0 {
                logs.push(f64::NEG_INFINITY);
                if weight.is_some() {
                    wlogs.push(f64::NEG_INFINITY);
                }
                break;
            }
            if let Some(w) = weight {
                wlogs.push(norm_lp_weighted(&sq, 1.0, w)?.ln() + log_s);
            }
            log_s += c.ln();
            logs.push(log_s);
            psi = sq.scale_real(1.0 / c);
        }
    }
    let roots: Vec<f64> = logs.iter().zip(&powers).map(|(l, &n)| (l / n as f64).exp()).collect();
    let wroots: Option<Vec<f64>> =
        weight.map(|_| wlogs.iter().zip(&powers).map(|(l, &n)| (l / n as f64).exp()).collect());
    let raw = *roots.last().unwrap();
    let fit = |ls: &[f64], last: f64| three_point(ls, &powers).map(|v| v.min(last)).unwrap_or(last);
    Ok(GelfandReport {
        extrapolated: fit(&logs, raw),
        aitken: aitken(&roots),
        raw,
        raw_weighted: wroots.as_ref().map(|r| *r.last().unwrap()),
        extrapolated_weighted: wroots.as_ref().map(|r| fit(&wlogs, *r.last().unwrap())),
        weighted_roots: wroots,
        doublings: powers.len() - 1,
        powers,
        roots,
        budget_hit,
        error_budget: phi.dropped_mass(),
    })
}
