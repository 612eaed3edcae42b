//! Spectral oracles (finite groups, Fourier symbols on ℤ^d, rational-flux
//! symbols on the noncommutative torus) and the spectral-invariance experiments.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::bundle::{Fiber, Rational, TwistedSystem, Unitaries, C64};
use crate::error::{Error, Result};
use crate::groups::{Element, GroupModel, Weight};
use crate::norms::{regular_rep_matrix, spectral_radius_gelfand, REGULAR_REP_CAP};
use crate::sections::CrossSection;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumMethod {
    FiniteExact,
    SymbolGrid { resolution: usize },
    TruncatedOperator { radius: u32 },
}

/// A spectrum as a finite value set plus, for self-adjoint inputs, its hull.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEstimate {
    #[serde(serialize_with = "ser_values")]
    pub values: Vec<C64>,
    pub hull: Option<(f64, f64)>,
    /// Largest modulus (for self-adjoint inputs, also the operator norm).
    pub radius: f64,
    pub method: SpectrumMethod,
    pub tolerance: f64,
}

fn ser_values<S: serde::Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

impl SpectrumEstimate {
    fn from_values(values: Vec<C64>, method: SpectrumMethod, tolerance: f64, real: bool) -> Self {
        let radius = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let hull = real.then(|| {
            values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z.re), hi.max(z.re)))
        });
        SpectrumEstimate {
            values,
            hull,
            radius,
            method,
            tolerance,
        }
    }
}

/// Eigenvalues of a general complex matrix.
pub fn complex_eigenvalues(m: &DMatrix<C64>) -> Vec<C64> {
    match m.nrows() {
        0 => vec![],
        1 => vec![m[(0, 0)]],
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let tr = a + d;
            let disc = ((a - d) * (a - d) + 4.0 * b * c).sqrt();
            vec![(tr + disc) / 2.0, (tr - disc) / 2.0]
        }
        _ => m
            .clone()
            .schur()
            .eigenvalues()
            .expect("complex Schur form is triangular")
            .iter()
            .copied()
            .collect(),
    }
}

/// Left multiplication `Ψ ↦ Φ*Ψ` on the `k²|G|`-dimensional algebra, built
/// from `convolve` on the basis `δ_x ⊗ E_ij`.
pub fn left_multiplication_matrix(phi: &CrossSection, cap: usize) -> Result<DMatrix<C64>> {
    let sys = phi.system();
    let g = &sys.group;
    let els = g
        .elements()
        .ok_or_else(|| Error::InvalidSpec("left multiplication matrix needs a finite group".into()))?;
    let k = sys.k;
    let kk = k * k;
    let dim = kk * els.len();
    if dim > cap {
        return Err(Error::BudgetExceeded {
            what: "finite group spectrum",
            partial: dim,
            limit: cap,
        });
    }
    let pos: std::collections::HashMap<&Element, usize> = els.iter().enumerate().map(|(i, x)| (x, i)).collect();
    let mut m = DMatrix::zeros(dim, dim);
    for (xi, x) in els.iter().enumerate() {
        for e in 0..kk {
            let mut f = Fiber::zeros(k);
            f.set(e / k, e % k, C64::new(1.0, 0.0));
            let basis = CrossSection::point(sys, x.clone(), f);
            let img = phi.convolve(&basis)?;
            for (y, b) in img.iter() {
                let yi = pos[y];
                for (r, v) in b.entries().iter().enumerate() {
                    m[(yi * kk + r, xi * kk + e)] = *v;
                }
            }
        }
    }
    Ok(m)
}

/// Exact spectrum of `Φ` on a finite group.
pub fn finite_group_spectrum(phi: &CrossSection, cap: usize) -> Result<SpectrumEstimate> {
    let m = left_multiplication_matrix(phi, cap)?;
    let sa = phi.is_selfadjoint(1e-12);
    let values: Vec<C64> = if sa {
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigen().eigenvalues.iter().map(|&v| C64::new(v, 0.0)).collect()
    } else {
        complex_eigenvalues(&m)
    };
    Ok(SpectrumEstimate::from_values(values, SpectrumMethod::FiniteExact, 1e-10, sa))
}

fn require_scalar_untwisted(phi: &CrossSection) -> Result<usize> {
    let sys = phi.system();
    match (&sys.group, sys.k, sys.trivial_twist()) {
        (GroupModel::Zd { d }, 1, true) => Ok(*d),
        _ => Err(Error::InvalidSpec("symbol oracle needs a scalar untwisted section on Zd".into())),
    }
}

/// `Φ̂(t) = Σ_x Φ(x) e^{i x·t}`.
pub fn zd_symbol(phi: &CrossSection, t: &[f64]) -> C64 {
    phi.iter()
        .map(|(x, f)| {
            let ph: f64 = x.coords().iter().zip(t).map(|(&a, &b)| a as f64 * b).sum();
            f.get(0, 0) * C64::from_polar(1.0, ph)
        })
        .sum()
}

/// Local pattern search for the maximum of `f` near `x0` on the torus.
fn refine_max<F: Fn(&[f64]) -> f64>(f: &F, x0: Vec<f64>, step0: f64) -> (f64, Vec<f64>) {
    let mut x = x0;
    let mut best = f(&x);
    let mut step = step0;
    while step > 1e-10 {
        let mut improved = false;
        for i in 0..x.len() {
            for s in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] += s * step;
                let v = f(&y);
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, x)
}

/// Evaluates `f` on the uniform grid of `[0,2π)^d` with `n` points per axis
/// and polishes the top few grid maxima by pattern search.
fn torus_sup<F: Fn(&[f64]) -> f64>(f: &F, d: usize, n: usize) -> f64 {
    let h = 2.0 * PI / n as f64;
    let total = n.pow(d as u32);
    let mut top: Vec<(f64, usize)> = Vec::new();
    let point = |mut idx: usize| {
        let mut t = vec![0.0; d];
        for ti in t.iter_mut() {
            *ti = (idx % n) as f64 * h;
            idx /= n;
        }
        t
    };
    for idx in 0..total {
        let v = f(&point(idx));
        if top.len() < 4 || v > top[top.len() - 1].0 {
            top.push((v, idx));
            top.sort_by(|a, b| b.0.total_cmp(&a.0));
            top.truncate(4);
        }
    }
    top.into_iter()
        .map(|(_, idx)| refine_max(f, point(idx), h / 2.0).0)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn grid_per_axis(d: usize, grid_n: usize) -> usize {
    let cap = 4_000_000f64.powf(1.0 / d as f64) as usize;
    grid_n.min(cap).max(8)
}

/// Values of the Fourier symbol on a grid of `𝕋^d`. For self-adjoint input
/// the hull endpoints are polished to local optimality.
pub fn zd_symbol_spectrum(phi: &CrossSection, grid_n: usize) -> Result<SpectrumEstimate> {
    let d = require_scalar_untwisted(phi)?;
    let n = grid_per_axis(d, grid_n);
    let sa = phi.is_selfadjoint(1e-12);
    let h = 2.0 * PI / n as f64;
    let total = n.pow(d as u32);
    let mut values = Vec::with_capacity(total.min(1 << 16));
    let stride = (total / (1 << 16)).max(1);
    for idx in (0..total).step_by(stride) {
        let mut t = vec![0.0; d];
        let mut r = idx;
        for ti in t.iter_mut() {
            *ti = (r % n) as f64 * h;
            r /= n;
        }
        values.push(zd_symbol(phi, &t));
    }
    let mut est = SpectrumEstimate::from_values(values, SpectrumMethod::SymbolGrid { resolution: n }, h * h, sa);
    if sa {
        let hi = torus_sup(&|t: &[f64]| zd_symbol(phi, t).re, d, n);
        let lo = -torus_sup(&|t: &[f64]| -zd_symbol(phi, t).re, d, n);
        est.hull = Some((lo, hi));
        est.radius = hi.abs().max(lo.abs());
    } else {
        est.radius = torus_sup(&|t: &[f64]| zd_symbol(phi, t).norm(), d, n);
    }
    est.tolerance = 1e-9;
    Ok(est)
}

/// `sup_t |Φ̂(t)|`, the C*-norm of a scalar section on ℤ^d.
pub fn zd_symbol_norm(phi: &CrossSection, grid_n: usize) -> Result<f64> {
    let d = require_scalar_untwisted(phi)?;
    Ok(torus_sup(&|t: &[f64]| zd_symbol(phi, t).norm(), d, grid_per_axis(d, grid_n)))
}

fn torus_theta(phi: &CrossSection) -> Result<Rational> {
    let sys = phi.system();
    if sys.k != 1 || sys.group != (GroupModel::Zd { d: 2 }) {
        return Err(Error::InvalidSpec("torus symbol needs scalar fibers on Zd:2".into()));
    }
    match &sys.cocycle {
        crate::bundle::Cocycle::NcTorus(t) => Ok(*t),
        crate::bundle::Cocycle::Trivial => Ok(Rational { num: 0, den: 1 }),
        _ => Err(Error::InvalidSpec("torus symbol needs the rotation cocycle".into())),
    }
}

/// The `q×q` symbol of `Φ` at `(k₁,k₂)` for `θ = p/q`: `δ_{(m₁,m₂)} ↦ U^{m₁}V^{m₂}`
/// with `U = e^{ik₁}·Shift` and `V = e^{ik₂}·Clock`.
pub fn nc_torus_symbol(theta: Rational, phi: &CrossSection, k1: f64, k2: f64) -> DMatrix<C64> {
    let q = theta.den as usize;
    let mut m = DMatrix::zeros(q, q);
    for (x, f) in phi.iter() {
        let (a, b) = (x.coords()[0], x.coords()[1]);
        let c = f.get(0, 0) * C64::from_polar(1.0, a as f64 * k1 + b as f64 * k2);
        for j in 0..q {
            let row = (j as i64 + a).rem_euclid(q as i64) as usize;
            m[(row, j)] += c * theta.phase(b * j as i64);
        }
    }
    m
}

fn matrix_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].norm();
    }
    m.singular_values().max()
}

/// Union of symbol eigenvalues over a `grid_n × grid_n` grid of `(k₁,k₂)`;
/// the hull endpoints and the norm are polished by local search.
pub fn nc_torus_symbol_spectrum(theta: Rational, phi: &CrossSection, grid_n: usize) -> Result<SpectrumEstimate> {
    let th = torus_theta(phi)?;
    if (th.num * theta.den - theta.num * th.den) % (th.den * theta.den) != 0 {
        return Err(Error::InvalidSpec("θ does not match the section's cocycle".into()));
    }
    if theta.den > 16 {
        return Err(Error::InvalidSpec("rational flux oracle supports denominators up to 16".into()));
    }
    let sa = phi.is_selfadjoint(1e-12);
    let n = grid_n.clamp(8, 512);
    let h = 2.0 * PI / n as f64;
    let mut values = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let s = nc_torus_symbol(theta, phi, i as f64 * h, j as f64 * h);
            if sa {
                let hm = (&s + s.adjoint()) * C64::new(0.5, 0.0);
                values.extend(hm.symmetric_eigen().eigenvalues.iter().map(|&v| C64::new(v, 0.0)));
            } else {
                values.extend(complex_eigenvalues(&s));
            }
        }
    }
    let mut est = SpectrumEstimate::from_values(values, SpectrumMethod::SymbolGrid { resolution: n }, h * h, sa);
    if sa {
        let eig_ext = |t: &[f64], top: bool| {
            let s = nc_torus_symbol(theta, phi, t[0], t[1]);
            let hm = (&s + s.adjoint()) * C64::new(0.5, 0.0);
            let e = hm.symmetric_eigen().eigenvalues;
            if top {
                e.max()
            } else {
                -e.min()
            }
        };
        let hi = torus_sup(&|t: &[f64]| eig_ext(t, true), 2, n.min(128));
        let lo = -torus_sup(&|t: &[f64]| eig_ext(t, false), 2, n.min(128));
        est.hull = Some((lo.min(est.hull.unwrap().0), hi.max(est.hull.unwrap().1)));
        est.radius = est.hull.unwrap().0.abs().max(est.hull.unwrap().1.abs());
        est.tolerance = 1e-9;
    }
    Ok(est)
}

/// `sup_{k₁,k₂} ‖symbol‖`, the C*-norm in the rotation algebra at rational θ.
pub fn nc_torus_norm(phi: &CrossSection, grid_n: usize) -> Result<f64> {
    let theta = torus_theta(phi)?;
    Ok(torus_sup(
        &|t: &[f64]| matrix_norm(&nc_torus_symbol(theta, phi, t[0], t[1])),
        2,
        grid_n.clamp(8, 256),
    ))
}

/// The ℤ² section `(a,c) ↦ Φ(a,0,c)` (or `(b,c) ↦ Φ(0,b,c)`) when a Heis3
/// section lives in one of the abelian subgroups `⟨x,z⟩`, `⟨y,z⟩`.
pub fn heis_abelian_restriction(phi: &CrossSection) -> Option<CrossSection> {
    if phi.group() != &GroupModel::Heis3 || phi.k() != 1 || !phi.system().trivial_twist() {
        return None;
    }
    let z2 = TwistedSystem::scalar(GroupModel::Zd { d: 2 });
    for slot in [1usize, 0] {
        if phi.support().all(|x| x.coords()[slot] == 0) {
            let keep = 1 - slot;
            let terms = phi
                .iter()
                .map(|(x, f)| (Element::new(&[x.coords()[keep], x.coords()[2]]), f.clone()));
            return CrossSection::from_terms(&z2, terms).ok();
        }
    }
    None
}

/// `sup_θ ‖π_θ(Φ)‖` over `θ = p/q`, `q ≤ q_max`, with `π_θ(a,b,c) = e^{2πiθc}δ_{(b,a)}`
/// into the rotation algebra. A lower bound for the C*-norm on Heis3.
pub fn heis_fibered_norm(phi: &CrossSection, q_max: i64, grid_n: usize) -> Result<f64> {
    if phi.group() != &GroupModel::Heis3 || phi.k() != 1 {
        return Err(Error::InvalidSpec("fibered oracle needs a scalar section on Heis3".into()));
    }
    let mut best = 0.0f64;
    for q in 1..=q_max {
        for p in 0..q {
            let theta = Rational::new(p, q)?;
            if theta.den != q {
                continue;
            }
            let sys = TwistedSystem::nc_torus(theta);
            let terms = phi.iter().map(|(x, f)| {
                let c = x.coords();
                (Element::new(&[c[1], c[0]]), f.scale(theta.phase(c[2])))
            });
            let img = CrossSection::from_terms(&sys, terms)?;
            best = best.max(nc_torus_norm(&img, grid_n)?);
        }
    }
    Ok(best)
}

/// Exact `‖λ(Φ)‖` on a finite group from the full regular representation.
pub fn finite_opnorm(phi: &CrossSection) -> Result<f64> {
    let g = phi.group();
    let n = g.order().ok_or_else(|| Error::InvalidSpec("finite group expected".into()))?;
    let (m, _) = regular_rep_matrix(phi, n as u32, REGULAR_REP_CAP)?;
    Ok(m.singular_values().max())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SuiteFamily {
    Z1,
    Z2,
    Heis3,
    NcTorus(String),
    Finite,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteRow {
    pub family: String,
    pub instance: usize,
    pub support: usize,
    pub rho_l1_raw: f64,
    pub rho_l1: f64,
    pub rho_l1nu: f64,
    pub opnorm: f64,
    pub opnorm_method: String,
    pub ratio_l1: f64,
    pub ratio_l1nu: f64,
    pub doublings: usize,
    /// For finite groups, `|max|λ| − ‖λ(Φ)‖|` between the two exact constructions.
    pub exact_gap: Option<f64>,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub tol_r: f64,
    pub pass: bool,
    pub worst_ratio_deviation: f64,
}

/// Relative tolerance for radius ratios.
pub const SUITE_TOL: f64 = 2e-2;

struct Instance {
    phi: CrossSection,
    weight: Weight,
    doublings: usize,
}

fn random_selfadjoint_scalar(sys: &Arc<TwistedSystem>, points: &[Vec<i64>], rng: &mut ChaCha8Rng) -> CrossSection {
    use rand::Rng;
    let mut s = CrossSection::zero(sys);
    for p in points {
        if rng.random_bool(0.8) || p.iter().all(|&c| c == 0) {
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = rng.random_range(-1.0..1.0);
            s.insert(Element::new(p), Fiber::scalar(C64::new(re, im)));
        }
    }
    s.selfadjoint_part()
}

fn family_instances(fam: &SuiteFamily, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Instance>> {
    use rand::Rng;
    let mut out = Vec::new();
    let word = |g: &GroupModel| Weight::word(g, &g.standard_generators());
    match fam {
        SuiteFamily::Z1 => {
            let g = GroupModel::Zd { d: 1 };
            let sys = TwistedSystem::scalar(g.clone());
            let pts: Vec<Vec<i64>> = (-2..=2).map(|a| vec![a]).collect();
            for i in 0..n {
                let phi = if i == 0 {
                    CrossSection::delta(&sys, &[1], 1.0).add(&CrossSection::delta(&sys, &[-1], 1.0))?
                } else {
                    random_selfadjoint_scalar(&sys, &pts, rng)
                };
                out.push(Instance { phi, weight: word(&g)?, doublings: 9 });
            }
        }
        SuiteFamily::Z2 | SuiteFamily::NcTorus(_) => {
            let g = GroupModel::Zd { d: 2 };
            let sys = match fam {
                SuiteFamily::NcTorus(t) => TwistedSystem::nc_torus(Rational::parse(t)?),
                _ => TwistedSystem::scalar(g.clone()),
            };
            let pts: Vec<Vec<i64>> = vec![vec![0, 0], vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]];
            for i in 0..n {
                let phi = if i == 0 {
                    pts[1..].iter().try_fold(CrossSection::zero(&sys), |acc, p| acc.add(&CrossSection::delta(&sys, p, 1.0)))?
                } else {
                    random_selfadjoint_scalar(&sys, &pts, rng)
                };
                out.push(Instance { phi, weight: word(&g)?, doublings: 6 });
            }
        }
        SuiteFamily::Heis3 => {
            let g = GroupModel::Heis3;
            let sys = TwistedSystem::scalar(g.clone());
            for i in 0..n {
                let pts: Vec<Vec<i64>> = if i % 2 == 0 {
                    vec![vec![0, 0, 0], vec![1, 0, 0], vec![-1, 0, 0], vec![0, 0, 1], vec![0, 0, -1]]
                } else {
                    vec![vec![0, 0, 0], vec![0, 1, 0], vec![0, -1, 0], vec![0, 0, 1], vec![0, 0, -1], vec![0, 1, 1], vec![0, -1, -1]]
                };
                let phi = random_selfadjoint_scalar(&sys, &pts, rng);
                out.push(Instance { phi, weight: word(&g)?, doublings: 6 });
            }
        }
        SuiteFamily::Finite => {
            for i in 0..n {
                let m = 4 + (i as i64 % 5);
                let g = GroupModel::Cyclic { m };
                let sys = match i % 3 {
                    0 => TwistedSystem::scalar(g.clone()),
                    1 => TwistedSystem::inner(g.clone(), Unitaries::random_table(&g, 2, rng.random())?, true)?,
                    _ => TwistedSystem::permutation_diagonal(g.clone(), if m % 2 == 0 { 2 } else { 1 })?,
                };
                let phi = CrossSection::random(&sys, 3, 4, true, rng);
                out.push(Instance { phi, weight: word(&g)?, doublings: 10 });
            }
        }
    }
    Ok(out)
}

/// Reference C*-norm from an exact oracle.
fn reference_opnorm(phi: &CrossSection) -> Result<(f64, String)> {
    let g = phi.group();
    if g.is_finite() {
        return Ok((finite_opnorm(phi)?, "finite_exact".into()));
    }
    match g {
        GroupModel::Zd { d: 2 } if !phi.system().trivial_twist() => Ok((nc_torus_norm(phi, 128)?, "nc_torus_symbol".into())),
        GroupModel::Zd { .. } => Ok((zd_symbol_norm(phi, 512)?, "zd_symbol".into())),
        GroupModel::Heis3 => {
            let r = heis_abelian_restriction(phi)
                .ok_or_else(|| Error::InvalidSpec("Heis3 suite instances must lie in an abelian subgroup".into()))?;
            Ok((zd_symbol_norm(&r, 512)?, "abelian_subgroup_symbol".into()))
        }
        _ => Err(Error::InvalidSpec(format!("no norm oracle for {g}"))),
    }
}

/// Gelfand radii under ℓ¹ and ℓ^{1,ν} against an exact operator-norm oracle
/// for random self-adjoint instances. Budget failures are recorded per row.
pub fn radius_invariance_suite(families: &[SuiteFamily], n_instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for fam in families {
        let name = match fam {
            SuiteFamily::NcTorus(t) => format!("NcTorus:{t}"),
            f => format!("{f:?}"),
        };
        for (i, inst) in family_instances(fam, n_instances, &mut rng)?.into_iter().enumerate() {
            rows.push(suite_row(&name, i, &inst));
        }
    }
    let worst = rows
        .iter()
        .map(|r| (r.ratio_l1 - 1.0).abs().max((r.ratio_l1nu - 1.0).abs()))
        .fold(0.0, f64::max);
    let pass = rows.iter().all(|r| r.pass);
    Ok(SuiteReport {
        rows,
        tol_r: SUITE_TOL,
        pass,
        worst_ratio_deviation: worst,
    })
}

fn suite_row(family: &str, instance: usize, inst: &Instance) -> SuiteRow {
    let mut row = SuiteRow {
        family: family.to_string(),
        instance,
        support: inst.phi.len(),
        rho_l1_raw: f64::NAN,
        rho_l1: f64::NAN,
        rho_l1nu: f64::NAN,
        opnorm: f64::NAN,
        opnorm_method: String::new(),
        ratio_l1: f64::NAN,
        ratio_l1nu: f64::NAN,
        doublings: 0,
        exact_gap: None,
        pass: false,
        note: None,
    };
    let result = (|| -> Result<()> {
        let (op, method) = reference_opnorm(&inst.phi)?;
        row.opnorm = op;
        row.opnorm_method = method;
        if inst.phi.group().is_finite() {
            let spec = finite_group_spectrum(&inst.phi, REGULAR_REP_CAP)?;
            row.exact_gap = Some((spec.radius - op).abs());
        }
        let g = spectral_radius_gelfand(&inst.phi, inst.doublings, Some(&inst.weight), 200_000_000)?;
        row.rho_l1_raw = g.raw;
        row.rho_l1 = g.extrapolated;
        row.rho_l1nu = g.extrapolated_weighted.unwrap_or(f64::NAN);
        row.doublings = g.doublings;
        if g.budget_hit {
            row.note = Some("pair budget reached".into());
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.note = Some(e.to_string());
        return row;
    }
    row.ratio_l1 = row.rho_l1 / row.opnorm;
    row.ratio_l1nu = row.rho_l1nu / row.opnorm;
    let within = |r: f64| (r - 1.0).abs() <= SUITE_TOL;
    row.pass = within(row.ratio_l1)
        && within(row.ratio_l1nu)
        && row.doublings >= 6
        && row.exact_gap.map(|gap| gap <= 1e-8 * row.opnorm.max(1.0)).unwrap_or(true);
    row
}

/// Grid size of the Fourier-division oracle.
pub const DIVISION_GRID: usize = 1 << 14;

/// Coefficients of `1/Φ̂` on ℤ from an FFT of the sampled reciprocal symbol,
/// indexed `n = −N/2 … N/2−1`.
pub fn fourier_division(phi: &CrossSection, n: usize) -> Result<Vec<(i64, C64)>> {
    require_scalar_untwisted(phi)?;
    if phi.group() != (&GroupModel::Zd { d: 1 }) {
        return Err(Error::InvalidSpec("Fourier division oracle runs on Zd:1".into()));
    }
    let mut buf: Vec<C64> = (0..n)
        .map(|j| C64::new(1.0, 0.0) / zd_symbol(phi, &[2.0 * PI * j as f64 / n as f64]))
        .collect();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = (n / 2) as i64;
    Ok((-half..half)
        .map(|k| (k, buf[k.rem_euclid(n as i64) as usize] / n as f64))
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct WienerReport {
    pub min_symbol: f64,
    pub max_symbol: f64,
    pub neumann_terms: usize,
    pub residual: f64,
    pub inverse_support_radius: u32,
    /// Largest coefficient gap between the Neumann inverse and the oracle.
    pub max_coeff_error: f64,
    /// `Σ_{|n|>R} ν(n)|Φ⁻¹(n)|` from the oracle, above its round-off floor.
    pub weighted_tail: f64,
    pub inverse_e_norm: f64,
    pub pass: bool,
}

/// Inverts a positive scalar element on ℤ by the Neumann series and checks it
/// against Fourier division.
pub fn wiener_inversion_check(phi: &CrossSection, margin: f64, nu: &Weight, tol: f64) -> Result<(CrossSection, WienerReport)> {
    if phi.group() != (&GroupModel::Zd { d: 1 }) || phi.k() != 1 || !phi.is_selfadjoint(1e-12) {
        return Err(Error::InvalidSpec("Wiener check needs a self-adjoint scalar section on Zd:1".into()));
    }
    let spec = zd_symbol_spectrum(phi, 4096)?;
    let (lo, hi) = spec.hull.expect("self-adjoint");
    let scale = hi.abs().max(lo.abs());
    if lo.abs() <= 1e-9 * scale || (lo < 0.0 && hi > 0.0) {
        return Err(Error::NotInvertible { contraction: 1.0 });
    }
    if lo < margin {
        return Err(Error::InvalidSpec(format!("min symbol {lo} below margin {margin}")));
    }
    let (inv, rep) = crate::inversion::invert_neumann(phi, scale, 1.0 / lo, nu, tol, 200_000)?;
    let oracle = fourier_division(phi, DIVISION_GRID)?;
    let radius = inv.support().map(|x| x.coords()[0].unsigned_abs()).max().unwrap_or(0) as u32;
    let c0 = oracle.iter().map(|(_, c)| c.norm()).fold(0.0, f64::max);
    let mut max_err = 0.0f64;
    let mut tail = 0.0;
    for (k, c) in &oracle {
        max_err = max_err.max((inv.coeff(&[*k]) - c).norm());
        if k.unsigned_abs() > radius as u64 && c.norm() > 1e-14 * c0 {
            tail += nu.value(&Element::new(&[*k]))? * c.norm();
        }
    }
    let pass = max_err <= 1e-8 && rep.residual <= tol && tail <= tol.max(1e-12);
    Ok((
        inv,
        WienerReport {
            min_symbol: lo,
            max_symbol: hi,
            neumann_terms: rep.terms,
            residual: rep.residual,
            inverse_support_radius: radius,
            max_coeff_error: max_err,
            weighted_tail: tail,
            inverse_e_norm: rep.inverse_e_norm,
            pass,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{opnorm_estimate, DEFAULT_ITERS};
    use crate::sections::tests::test_systems;

    fn harper(s: &Arc<TwistedSystem>) -> CrossSection {
        [[1, 0], [-1, 0], [0, 1], [0, -1]]
            .iter()
            .fold(CrossSection::zero(s), |acc, c| acc.add(&CrossSection::delta(s, c, 1.0)).unwrap())
    }

    fn close_sets(a: &[C64], b: &[C64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().all(|z| b.iter().any(|w| (z - w).norm() < tol))
    }

    #[test]
    fn finite_spectra() {
        let c4 = TwistedSystem::scalar(GroupModel::Cyclic { m: 4 });
        let s = finite_group_spectrum(&CrossSection::unit(&c4), 100).unwrap();
        assert!(s.values.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-12));
        let s = finite_group_spectrum(&CrossSection::delta(&c4, &[1], 1.0), 100).unwrap();
        let want = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
        assert!(close_sets(&s.values, &want, 1e-10), "{:?}", s.values);
        let pd = TwistedSystem::permutation_diagonal(GroupModel::Cyclic { m: 3 }, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = CrossSection::random(&pd, 2, 4, true, &mut rng);
        let s = finite_group_spectrum(&phi, 1000).unwrap();
        assert!(s.hull.is_some());
        let m = left_multiplication_matrix(&phi, 1000).unwrap();
        let gen = complex_eigenvalues(&m);
        assert!(gen.iter().all(|z| z.im.abs() < 1e-8));
    }

    #[test]
    fn two_constructions_agree_on_finite_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for sys in test_systems().into_iter().filter(|s| s.group.is_finite()) {
            let phi = CrossSection::random(&sys, 3, 4, false, &mut rng);
            let a = left_multiplication_matrix(&phi, 4000).unwrap();
            let n = sys.group.order().unwrap() as u32;
            let (b, pts) = regular_rep_matrix(&phi, n, 4000).unwrap();
            assert_eq!(pts.len(), sys.group.order().unwrap());
            let ea = complex_eigenvalues(&a);
            let eb = complex_eigenvalues(&b);
            let mut ra: Vec<f64> = ea.iter().map(|z| z.norm()).collect();
            let mut rb: Vec<f64> = eb.iter().map(|z| z.norm()).collect();
            ra.sort_by(f64::total_cmp);
            rb.sort_by(f64::total_cmp);
            for (x, y) in ra.iter().zip(&rb) {
                assert!((x - y).abs() < 1e-8, "{x} {y}");
            }
        }
    }

    #[test]
    fn zd_symbol_examples() {
        let z1 = TwistedSystem::scalar(GroupModel::Zd { d: 1 });
        let lap = CrossSection::delta(&z1, &[1], 1.0).add(&CrossSection::delta(&z1, &[-1], 1.0)).unwrap();
        let s = zd_symbol_spectrum(&lap, 512).unwrap();
        let (lo, hi) = s.hull.unwrap();
        assert!((lo + 2.0).abs() < 1e-9 && (hi - 2.0).abs() < 1e-9);
        let s = zd_symbol_spectrum(&CrossSection::unit(&z1), 64).unwrap();
        assert_eq!(s.hull.unwrap(), (1.0, 1.0));
        let sq = lap.convolve(&lap).unwrap();
        let (lo, hi) = zd_symbol_spectrum(&sq, 512).unwrap().hull.unwrap();
        assert!(lo.abs() < 1e-9 && (hi - 4.0).abs() < 1e-9);
        let op = opnorm_estimate(&lap, 200, DEFAULT_ITERS).unwrap().value;
        assert!(op <= hi.abs().max(lo.abs()) && op > 2.0 - 1e-2);
    }

    #[test]
    fn harper_symbols() {
        let half = Rational::parse("1/2").unwrap();
        let s = TwistedSystem::nc_torus(half);
        let est = nc_torus_symbol_spectrum(half, &harper(&s), 64).unwrap();
        let r = 2.0 * 2f64.sqrt();
        let (lo, hi) = est.hull.unwrap();
        assert!((lo + r).abs() < 1e-8 && (hi - r).abs() < 1e-8, "{lo} {hi}");
        assert!((nc_torus_norm(&harper(&s), 64).unwrap() - r).abs() < 1e-8);
        // Closed form ±2√(cos²k₁ + cos²k₂) at θ = 1/2.
        for &(k1, k2) in &[(0.3, 1.1), (2.0, -0.7)] {
            let m = nc_torus_symbol(half, &harper(&s), k1, k2);
            let e = m.symmetric_eigen().eigenvalues;
            let want = 2.0 * (f64::cos(k1).powi(2) + f64::cos(k2).powi(2)).sqrt();
            assert!((e.max() - want).abs() < 1e-12 && (e.min() + want).abs() < 1e-12);
        }
        let third = Rational::parse("1/3").unwrap();
        let s3 = TwistedSystem::nc_torus(third);
        let est = nc_torus_symbol_spectrum(third, &harper(&s3), 48).unwrap();
        let (lo, hi) = est.hull.unwrap();
        assert!((lo + hi).abs() < 1e-6);
        let mut vals: Vec<f64> = est.values.iter().map(|z| z.re).collect();
        vals.sort_by(f64::total_cmp);
        let gaps = vals.windows(2).filter(|w| w[1] - w[0] > 0.1).count();
        assert_eq!(gaps, 2, "three bands expected");
        // θ and θ+1 give the same oracle.
        let four_thirds = Rational::parse("4/3").unwrap();
        let s43 = TwistedSystem::nc_torus(four_thirds);
        let a = nc_torus_symbol(third, &harper(&s3), 0.4, 0.9);
        let b = nc_torus_symbol(four_thirds, &harper(&s43), 0.4, 0.9);
        assert!((a - b).norm() < 1e-12);
        // θ = 0 reduces to the ℤ² symbol.
        let z2 = TwistedSystem::nc_torus(Rational::parse("0").unwrap());
        let zs = TwistedSystem::scalar(GroupModel::Zd { d: 2 });
        let n0 = nc_torus_norm(&harper(&z2), 64).unwrap();
        let nz = zd_symbol_norm(&harper(&zs), 64).unwrap();
        assert!((n0 - 4.0).abs() < 1e-9 && (nz - 4.0).abs() < 1e-9);
    }

    #[test]
    fn symbol_is_a_representation() {
        let third = Rational::parse("1/3").unwrap();
        let s = TwistedSystem::nc_torus(third);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = CrossSection::random(&s, 3, 4, false, &mut rng);
            let b = CrossSection::random(&s, 3, 4, false, &mut rng);
            let (k1, k2) = (0.37, -1.3);
            let lhs = nc_torus_symbol(third, &a.convolve(&b).unwrap(), k1, k2);
            let rhs = nc_torus_symbol(third, &a, k1, k2) * nc_torus_symbol(third, &b, k1, k2);
            assert!((&lhs - &rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
            let adj = nc_torus_symbol(third, &a.involution(), k1, k2);
            assert!((adj - nc_torus_symbol(third, &a, k1, k2).adjoint()).norm() < 1e-10);
        }
    }

    #[test]
    fn heis_oracles_agree_on_abelian_subgroups() {
        let s = TwistedSystem::scalar(GroupModel::Heis3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = vec![vec![0, 0, 0], vec![1, 0, 0], vec![-1, 0, 0], vec![0, 0, 1], vec![0, 0, -1]];
        let phi = random_selfadjoint_scalar(&s, &pts, &mut rng);
        let r = heis_abelian_restriction(&phi).unwrap();
        let exact = zd_symbol_norm(&r, 256).unwrap();
        let fib = heis_fibered_norm(&phi, 16, 32).unwrap();
        assert!(fib <= exact * (1.0 + 1e-9) && fib > exact * 0.97, "{fib} {exact}");
        let op = opnorm_estimate(&phi, 12, DEFAULT_ITERS).unwrap().value;
        assert!(op <= exact * (1.0 + 1e-9));
    }

    #[test]
    fn wiener_examples() {
        let z1 = TwistedSystem::scalar(GroupModel::Zd { d: 1 });
        let g = GroupModel::Zd { d: 1 };
        let nu = Weight::word(&g, &g.standard_generators()).unwrap();
        let phi = CrossSection::delta(&z1, &[0], 2.0)
            .sub(&CrossSection::delta(&z1, &[1], 0.5))
            .unwrap()
            .sub(&CrossSection::delta(&z1, &[-1], 0.5))
            .unwrap();
        let (_, rep) = wiener_inversion_check(&phi, 1.0, &nu, 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
        let (inv, rep) = wiener_inversion_check(&CrossSection::unit(&z1), 0.5, &nu, 1e-12).unwrap();
        assert!(rep.pass && inv.len() == 1 && inv.coeff(&[0]) == C64::new(1.0, 0.0));
        let bad = CrossSection::delta(&z1, &[0], 2.0)
            .sub(&CrossSection::delta(&z1, &[1], 1.0))
            .unwrap()
            .sub(&CrossSection::delta(&z1, &[-1], 1.0))
            .unwrap();
        assert!(matches!(wiener_inversion_check(&bad, 0.1, &nu, 1e-8), Err(Error::NotInvertible { .. })));
    }

    #[test]
    fn small_suite_passes() {
        let fams = [SuiteFamily::Z1, SuiteFamily::Finite];
        let rep = radius_invariance_suite(&fams, 3, 7).unwrap();
        for r in &rep.rows {
            assert!(r.pass, "{r:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn zd_symbol_is_a_character_of_the_algebra(seed in 0u64..10_000, t1 in -3.2f64..3.2, t2 in -3.2f64..3.2) {
            use rand::SeedableRng;
            let s = TwistedSystem::scalar(crate::groups::GroupModel::Zd { d: 2 });
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = CrossSection::random(&s, 3, 5, false, &mut rng);
            let b = CrossSection::random(&s, 3, 5, false, &mut rng);
            let t = [t1, t2];
            let ab = zd_symbol(&a.convolve(&b).unwrap(), &t);
            proptest::prop_assert!((ab - zd_symbol(&a, &t) * zd_symbol(&b, &t)).norm() <= 1e-10 * (1.0 + a.norm_l1() * b.norm_l1()));
            proptest::prop_assert!((zd_symbol(&a.involution(), &t) - zd_symbol(&a, &t).conj()).norm() <= 1e-10 * (1.0 + a.norm_l1()));
            proptest::prop_assert!(zd_symbol(&a, &t).norm() <= a.norm_l1() * (1.0 + 1e-12));
        }
    }
}
