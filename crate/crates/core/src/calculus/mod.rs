//! Entire-function series `u, v, w`, the one-parameter group `e^{itΦ}`,
//! growth profiling and the Dixmier–Baillet functional calculus
//! `f(Φ) = (1/2π)∫ f̂(t) e^{−itΦ} dt` with `f̂(t) = ∫ f(x) e^{itx} dx`.
//!
//! `u(z) = e^{iz} − 1`, `v(z) = (e^{iz} − 1 − iz)/z`, `w(z) = v(z)/z`.

pub mod functions;

pub use functions::{DecayFit, Family, FourierEnvelope, FunctionSpec, RAISED_COSINE_POWER};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::bundle::{Rational, C64};
use crate::error::{Error, Result};
use crate::groups::Weight;
use crate::norms::{norm_l2e, norm_lp_weighted};
use crate::sections::{CrossSection, UnitalElement};
use crate::spectra::{left_multiplication_matrix, nc_torus_symbol};

/// Default target for `dixmier_baillet`.
pub const DEFAULT_TOL: f64 = 1e-4;
/// Cap on the truncation `T`.
pub const T_CAP: f64 = 1024.0;
/// Cap on quadrature nodes per half-line.
pub const NODE_CAP: usize = 1 << 15;
/// Largest `|δ|·‖Φ‖₁` for one stepping factor `e^{iδΦ}`.
const STEP_ARG: f64 = 1.0;
const STEP_TOL: f64 = 1e-13;

fn i_pow(k: u32) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Series {
    U,
    V,
    W,
}

impl Series {
    fn first(self) -> u32 {
        match self {
            Series::U => 1,
            Series::V | Series::W => 0,
        }
    }

    /// `(power of z, coefficient)` of the `k`-th term.
    fn term(self, k: u32) -> (u32, C64) {
        match self {
            Series::U => (k, i_pow(k) / factorial(k)),
            Series::V => (k + 1, -i_pow(k) / factorial(k + 2)),
            Series::W => (k, -i_pow(k) / factorial(k + 2)),
        }
    }

    /// Scalar value, for oracles.
    pub fn eval(self, z: C64) -> C64 {
        let i = C64::new(0.0, 1.0);
        if z.norm() < 1e-3 {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.first()..self.first() + 12 {
                let (p, c) = self.term(k);
                acc += c * z.powu(p);
            }
            return acc;
        }
        let e = (i * z).exp();
        match self {
            Series::U => e - 1.0,
            Series::V => (e - 1.0 - i * z) / z,
            Series::W => (e - 1.0 - i * z) / (z * z),
        }
    }
}

/// Truncated series value and the ℓ¹ bound on the discarded tail.
#[derive(Clone, Debug)]
pub struct SeriesValue {
    pub value: CrossSection,
    pub terms: u32,
    pub tail_bound: f64,
}

/// `Σ_k c_k Φ^{p_k}`, stopping once `Σ_{k>K}|c_k|‖Φ‖₁^{p_k} < tol`.
pub fn entire_apply(series: Series, phi: &CrossSection, tol: f64) -> Result<SeriesValue> {
    if !(tol > 0.0) {
        return Err(Error::InvalidSpec("series tolerance must be positive".into()));
    }
    let sys = phi.system();
    let x = phi.norm_l1();
    let mag = |k: u32| {
        let (p, c) = series.term(k);
        c.norm() * x.powi(p as i32)
    };
    let mut acc = CrossSection::zero(sys);
    let mut power = CrossSection::unit(sys);
    let mut p_have = 0;
    let mut k = series.first();
    loop {
        let (p, c) = series.term(k);
        while p_have < p {
            power = power.convolve(phi)?;
            p_have += 1;
        }
        acc = acc.add_scaled(&power, c)?;
        let next = mag(k + 1);
        let ratio = if next > 0.0 { mag(k + 2) / next } else { 0.0 };
        let tail = if ratio < 1.0 { next / (1.0 - ratio) } else { f64::INFINITY };
        if tail < tol || x == 0.0 {
            let tail = if x == 0.0 { 0.0 } else { tail };
            return Ok(SeriesValue {
                value: acc,
                terms: k - series.first() + 1,
                tail_bound: tail,
            });
        }
        k += 1;
    }
}

/// `e^{itΦ} = (1, u(tΦ))` with an a posteriori ℓ¹ error bound.
#[derive(Clone, Debug)]
pub struct ExpValue {
    pub value: UnitalElement,
    pub squarings: u32,
    pub series_terms: u32,
    pub error: f64,
}

/// Scaling and squaring: `m = ⌈log₂(1+|t|‖Φ‖₁)⌉`, the `u` series at `t/2^m`,
/// then `m` squarings of `1 + u` in the unitization.
pub fn exp_it(phi: &CrossSection, t: f64, tol: f64) -> Result<ExpValue> {
    let sys = phi.system();
    let x = t.abs() * phi.norm_l1();
    if x == 0.0 {
        return Ok(ExpValue {
            value: UnitalElement::one(sys),
            squarings: 0,
            series_terms: 0,
            error: 0.0,
        });
    }
    let m = (1.0 + x).log2().ceil() as u32;
    let s = t / 2f64.powi(m as i32);
    let eps0 = (tol * 1e-6 / 2f64.powi(m as i32)).max(1e-300);
    let sv = entire_apply(Series::U, &phi.scale_real(s), eps0)?;
    let mut err = sv.tail_bound;
    let mut cur = UnitalElement::new(C64::new(1.0, 0.0), sv.value);
    for _ in 0..m {
        let n = cur.norm_l1();
        cur = cur.mul(&cur)?;
        err = 2.0 * n * err + err * err;
    }
    let error = err + cur.section.dropped_mass();
    Ok(ExpValue {
        value: cur,
        squarings: m,
        series_terms: sv.terms,
        error,
    })
}

/// Walks `t ↦ e^{itΦ}` by multiplying with small steps `e^{iδΦ}`.
///
/// The error after `N` steps is `Σ_j X_j·ε·S^{N−j−1}` with `S = e^{iδΦ}`;
/// `‖S^m‖₁` is estimated by the largest norm seen along the walk.
struct Stepper {
    phi: CrossSection,
    cur: UnitalElement,
    t: f64,
    err0: f64,
    step_err_sum: f64,
    max_norm: f64,
}

impl Stepper {
    fn new(phi: &CrossSection, t0: f64) -> Result<Self> {
        let mut e = exp_it(phi, t0, STEP_TOL)?;
        e.value.section.take_dropped();
        let n = e.value.norm_l1();
        Ok(Stepper {
            phi: phi.clone(),
            cur: e.value,
            t: t0,
            err0: e.error,
            step_err_sum: 0.0,
            max_norm: n,
        })
    }

    /// `step` must carry no inherited dropped mass; see `clean_step`.
    fn mul_step(&mut self, step: &ExpValue) -> Result<()> {
        self.step_err_sum += self.cur.norm_l1() * step.error;
        self.cur = self.cur.mul(&step.value)?;
        self.step_err_sum += self.cur.section.take_dropped();
        self.max_norm = self.max_norm.max(self.cur.norm_l1());
        Ok(())
    }

    /// Moves to `target ≥ t` with steps of argument at most `STEP_ARG`.
    fn advance_to(&mut self, target: f64) -> Result<()> {
        let gap = target - self.t;
        if gap <= 0.0 {
            return Ok(());
        }
        let n = ((gap * self.phi.norm_l1()) / STEP_ARG).ceil().max(1.0) as usize;
        let step = clean_step(&self.phi, gap / n as f64)?;
        for _ in 0..n {
            self.mul_step(&step)?;
        }
        self.t = target;
        Ok(())
    }

    fn error(&self) -> f64 {
        (self.err0 + self.step_err_sum) * self.max_norm
    }
}

/// `e^{iδΦ}` with its pruning folded into the error.
fn clean_step(phi: &CrossSection, delta: f64) -> Result<ExpValue> {
    let mut e = exp_it(phi, delta, STEP_TOL)?;
    e.value.section.take_dropped();
    Ok(e)
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthProfile {
    pub t: Vec<f64>,
    pub norm_l1: Vec<f64>,
    pub norm_l1nu: Option<Vec<f64>>,
    /// Per-point ℓ¹ error bound on `u(tΦ)`.
    pub error: Vec<f64>,
    /// Log-log slope over the upper half of the grid.
    pub slope: f64,
    pub slope_weighted: Option<f64>,
    /// `2d+2`.
    pub exponent: f64,
    /// `2d+2+4δ`, `δ = 1 + log₂ C`, when the weight carries a constant `C`.
    pub exponent_weighted: Option<f64>,
    /// Exponent used in tail bounds: the slope, clamped to `[0, 2d+2]`.
    pub n_hat: f64,
    /// `max_t ‖u(tΦ)‖₁/(1+t)^{n̂}` over the grid.
    pub c_hat: f64,
}

fn loglog_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len();
    let pts: Vec<(f64, f64)> = t[n / 2..]
        .iter()
        .zip(&y[n / 2..])
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn fit_profile(phi: &CrossSection, t: Vec<f64>, norm_l1: Vec<f64>, norm_l1nu: Option<Vec<f64>>, error: Vec<f64>, nu: Option<&Weight>) -> GrowthProfile {
    let d = phi.group().growth_order() as f64;
    let exponent = 2.0 * d + 2.0;
    let slope = loglog_slope(&t, &norm_l1);
    let n_hat = slope.clamp(0.0, exponent);
    let c_hat = t
        .iter()
        .zip(&norm_l1)
        .map(|(s, v)| v / (1.0 + s).powf(n_hat))
        .fold(0.0, f64::max);
    let slope_weighted = norm_l1nu.as_ref().map(|w| loglog_slope(&t, w));
    let exponent_weighted = nu.and_then(|w| w.poly_constant).map(|c| exponent + 4.0 * (1.0 + c.log2()));
    GrowthProfile {
        t,
        norm_l1,
        norm_l1nu,
        error,
        slope,
        slope_weighted,
        exponent,
        exponent_weighted,
        n_hat,
        c_hat,
    }
}

/// `‖u(tΦ)‖₁` (and `‖u(tΦ)‖_{1,ν}`) on an increasing grid of `t ≥ 0`.
///
/// The values come from one walk `e^{iδΦ}` by `e^{iδΦ}`; this keeps supports
/// from being squared, which matters on 2D groups.
pub fn growth_profile_op(phi: &CrossSection, t_grid: &[f64], nu: Option<&Weight>) -> Result<GrowthProfile> {
    if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec("t grid must be non-negative and increasing".into()));
    }
    let mut st = Stepper::new(phi, 0.0)?;
    let (mut n1, mut nn, mut errs) = (Vec::new(), Vec::new(), Vec::new());
    for &t in t_grid {
        st.advance_to(t)?;
        n1.push(st.cur.section.norm_l1());
        if let Some(w) = nu {
            nn.push(norm_lp_weighted(&st.cur.section, 1.0, w)?);
        }
        errs.push(st.error());
    }
    Ok(fit_profile(phi, t_grid.to_vec(), n1, nu.map(|_| nn), errs, nu))
}

/// `T`, `Δt`, target and tail model. Unset fields are chosen automatically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub tol: f64,
    /// `(Ĉ, n̂)` with `‖u(tΦ)‖₁ ≤ Ĉ(1+|t|)^{n̂}`.
    pub growth: Option<(f64, f64)>,
}

impl QuadratureSpec {
    pub fn with_tol(tol: f64) -> Self {
        QuadratureSpec {
            t_max: None,
            dt: None,
            tol,
            growth: None,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::with_tol(DEFAULT_TOL)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ErrorBudget {
    pub quadrature: f64,
    pub tail: f64,
    pub series: f64,
    pub prune: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct CalculusValue {
    pub value: UnitalElement,
    pub budget: ErrorBudget,
    pub t_max: f64,
    pub dt: f64,
    pub nodes: usize,
    pub growth: Option<GrowthProfile>,
    pub c_hat: f64,
    pub n_hat: f64,
    pub met: bool,
}

/// Grows the profile until it covers the truncation it implies.
fn plan_truncation(
    f: &FunctionSpec,
    phi: &CrossSection,
    env: &FourierEnvelope,
    target: f64,
) -> Result<(f64, Option<GrowthProfile>, f64, f64)> {
    let mut grid: Vec<f64> = vec![0.5, 1.0, 2.0, 4.0, 8.0];
    let mut st = Stepper::new(phi, 0.0)?;
    let (mut ts, mut n1, mut errs) = (Vec::new(), Vec::new(), Vec::new());
    let mut idx = 0;
    loop {
        while idx < grid.len() {
            st.advance_to(grid[idx])?;
            ts.push(grid[idx]);
            n1.push(st.cur.section.norm_l1());
            errs.push(st.error());
            idx += 1;
        }
        let prof = fit_profile(phi, ts.clone(), n1.clone(), None, errs.clone(), None);
        let t = env.truncation_for(target, prof.c_hat, prof.n_hat);
        let last = *grid.last().expect("non-empty");
        match t {
            Some(t) if t <= last || last >= T_CAP => {
                let (c, n) = (prof.c_hat, prof.n_hat);
                return Ok((t.min(T_CAP), Some(prof), c, n));
            }
            None if last >= T_CAP => {
                let (c, n) = (prof.c_hat, prof.n_hat);
                return Ok((T_CAP, Some(prof), c, n));
            }
            _ => {
                let _ = f;
                grid.push((2.0 * last).min(T_CAP));
            }
        }
    }
}

/// One composite midpoint pass with `n` nodes per half-line of width `dt`.
fn midpoint_pass(f: &FunctionSpec, phi: &CrossSection, dt: f64, n: usize) -> Result<(UnitalElement, f64)> {
    let sys = phi.system();
    let mut acc = UnitalElement::new(C64::new(0.0, 0.0), CrossSection::zero(sys));
    let mut st = Stepper::new(phi, 0.5 * dt)?;
    let step = clean_step(phi, dt)?;
    let w = dt / (2.0 * PI);
    let mut series = 0.0;
    for j in 0..n {
        if j > 0 {
            st.mul_step(&step)?;
        }
        // f̂(t) = ∫f(x)e^{itx}dx inverts against e^{−itΦ}; the node at t carries f̂(−t).
        let t = (j as f64 + 0.5) * dt;
        let (fp, fm) = (f.fourier_transform(-t), f.fourier_transform(t));
        let adj = st.cur.adjoint();
        acc = acc.add(&st.cur.scale(fp * w))?.add(&adj.scale(fm * w))?;
        series += w * (fp.norm() + fm.norm()) * st.error();
    }
    Ok((acc, series))
}

/// `f(Φ)` with its error budget, whether or not the target was met.
pub fn dixmier_baillet_best_effort(f: &FunctionSpec, phi: &CrossSection, quad: &QuadratureSpec) -> Result<CalculusValue> {
    if !(quad.tol > 0.0) {
        return Err(Error::InvalidSpec("quadrature tolerance must be positive".into()));
    }
    if !phi.is_selfadjoint(1e-12) {
        return Err(Error::InvalidSpec("functional calculus needs a self-adjoint element".into()));
    }
    let sys = phi.system();
    let norm = phi.norm_l1();
    if norm == 0.0 || f.scale == C64::new(0.0, 0.0) {
        return Ok(CalculusValue {
            value: UnitalElement::new(f.value_at_zero(), CrossSection::zero(sys)),
            budget: ErrorBudget::default(),
            t_max: 0.0,
            dt: 0.0,
            nodes: 0,
            growth: None,
            c_hat: 0.0,
            n_hat: 0.0,
            met: true,
        });
    }
    let d = phi.group().growth_order() as f64;
    let env = FourierEnvelope::new(f, 2.0 * d + 4.0);
    let (t_max, growth, c_hat, n_hat) = match (quad.t_max, quad.growth) {
        (Some(t), Some((c, n))) => (t, None, c, n),
        (t, g) => {
            let (t_auto, prof, c, n) = plan_truncation(f, phi, &env, quad.tol / 2.0)?;
            let (c, n) = g.unwrap_or((c, n));
            (t.unwrap_or(t_auto), prof, c, n)
        }
    };
    let tail = env.tail(t_max, c_hat, n_hat);
    let mut dt = quad.dt.unwrap_or(PI / (norm + f.extent()));
    let nodes_for = |dt: f64| ((t_max / dt).ceil() as usize).max(1);
    let mut n = nodes_for(dt);
    dt = t_max / n as f64;
    let (mut prev, mut prev_series) = midpoint_pass(f, phi, dt, n)?;
    let mut quad_err = f64::INFINITY;
    while 2 * n <= NODE_CAP {
        n *= 2;
        dt /= 2.0;
        let (next, ser) = midpoint_pass(f, phi, dt, n)?;
        quad_err = next.sub(&prev)?.norm_l1();
        prev = next;
        prev_series = ser;
        if quad_err < quad.tol / 4.0 {
            break;
        }
    }
    let prune = prev.section.dropped_mass();
    let total = quad_err + tail + prev_series + prune;
    Ok(CalculusValue {
        value: prev,
        budget: ErrorBudget {
            quadrature: quad_err,
            tail,
            series: prev_series,
            prune,
            total,
        },
        t_max,
        dt,
        nodes: 2 * n,
        growth,
        c_hat,
        n_hat,
        met: total <= quad.tol,
    })
}

/// `f(Φ) = (1/2π)∫ f̂(t) e^{−itΦ} dt`; `ToleranceNotMet` carries the best budget.
pub fn dixmier_baillet(f: &FunctionSpec, phi: &CrossSection, quad: &QuadratureSpec) -> Result<CalculusValue> {
    let r = dixmier_baillet_best_effort(f, phi, quad)?;
    if !r.met {
        return Err(Error::ToleranceNotMet {
            achieved: r.budget.total,
            target: quad.tol,
        });
    }
    Ok(r)
}

#[derive(Clone, Debug, Serialize)]
pub struct HomomorphismReport {
    /// `‖(fg)(Φ) − f(Φ)g(Φ)‖₁`.
    pub product_residual: f64,
    /// `‖f̄(Φ) − f(Φ)^*‖₁`.
    pub adjoint_residual: f64,
    /// Budgets of `f(Φ)`, `g(Φ)`, `(fg)(Φ)`.
    pub budgets: [f64; 3],
    pub budget_sum: f64,
    /// `e_f‖g(Φ)‖ + e_g‖f(Φ)‖ + e_f e_g + e_fg`.
    pub product_bound: f64,
    pub pass: bool,
}

pub fn calculus_homomorphism_check(f: &FunctionSpec, g: &FunctionSpec, phi: &CrossSection, quad: &QuadratureSpec) -> Result<HomomorphismReport> {
    let rf = dixmier_baillet_best_effort(f, phi, quad)?;
    let rg = dixmier_baillet_best_effort(g, phi, quad)?;
    let rfg = dixmier_baillet_best_effort(&f.product(g), phi, quad)?;
    let rfc = dixmier_baillet_best_effort(&f.conj(), phi, quad)?;
    let prod = rf.value.mul(&rg.value)?;
    let product_residual = rfg.value.sub(&prod)?.norm_l1();
    let adjoint_residual = rfc.value.sub(&rf.value.adjoint())?.norm_l1();
    let budgets = [rf.budget.total, rg.budget.total, rfg.budget.total];
    let budget_sum: f64 = budgets.iter().sum();
    let (ef, eg) = (budgets[0], budgets[1]);
    let product_bound = ef * rg.value.norm_l1() + eg * rf.value.norm_l1() + ef * eg + budgets[2];
    let pass = product_residual <= budget_sum && adjoint_residual <= budget_sum + rfc.budget.total;
    Ok(HomomorphismReport {
        product_residual,
        adjoint_residual,
        budgets,
        budget_sum,
        product_bound,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DixReport {
    /// `‖v(Φ)‖_{ℓ²ₑ}`.
    pub lhs: f64,
    /// `½‖Φ‖_{ℓ²ₑ}`.
    pub rhs: f64,
    pub series_tail: f64,
    /// `max |w|` on the test grid.
    pub w_sup: f64,
    pub w_at_zero: f64,
    pub pass: bool,
}

/// `max |w(x)|` on `[−100, 100]` with step `1/64`.
pub fn w_sup_on_grid() -> f64 {
    (-6400..=6400)
        .map(|j| Series::W.eval(C64::new(j as f64 / 64.0, 0.0)).norm())
        .fold(0.0, f64::max)
}

/// `‖v(Φ)‖_{ℓ²ₑ} ≤ ½‖Φ‖_{ℓ²ₑ} + tol` and `sup_ℝ |w| = ½`.
pub fn dix_contraction_check(phi: &CrossSection, tol: f64) -> Result<DixReport> {
    let sv = entire_apply(Series::V, phi, tol * 1e-3)?;
    let lhs = norm_l2e(&sv.value);
    let rhs = 0.5 * norm_l2e(phi);
    let w_sup = w_sup_on_grid();
    let w_at_zero = Series::W.eval(C64::new(0.0, 0.0)).norm();
    let pass = lhs <= rhs + tol + sv.tail_bound && (w_sup - 0.5).abs() < 1e-12 && (w_at_zero - 0.5).abs() < 1e-15;
    Ok(DixReport {
        lhs,
        rhs,
        series_tail: sv.tail_bound,
        w_sup,
        w_at_zero,
        pass,
    })
}

/// Image of `r·1 + Ψ` under the left regular representation of a finite group.
pub fn finite_group_rep(x: &UnitalElement, cap: usize) -> Result<DMatrix<C64>> {
    let mut m = left_multiplication_matrix(&x.section, cap)?;
    for i in 0..m.nrows() {
        m[(i, i)] += x.scalar;
    }
    Ok(m)
}

/// Image of `r·1 + Ψ` under the `q×q` rational-rotation representation at `(k₁,k₂)`.
pub fn nc_torus_rep(theta: Rational, x: &UnitalElement, k1: f64, k2: f64) -> DMatrix<C64> {
    let mut m = nc_torus_symbol(theta, &x.section, k1, k2);
    for i in 0..m.nrows() {
        m[(i, i)] += x.scalar;
    }
    m
}

/// `f(H)` for Hermitian `H` by eigendecomposition.
pub fn matrix_function(h: &DMatrix<C64>, f: &FunctionSpec) -> DMatrix<C64> {
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let u = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| f.eval(l)));
    u * d * u.adjoint()
}

pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    m.singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::TwistedSystem;
    use crate::groups::GroupModel;
    use crate::sections::tests::test_systems;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn z1() -> Arc<TwistedSystem> {
        TwistedSystem::scalar(GroupModel::Zd { d: 1 })
    }

    fn laplacian(s: &Arc<TwistedSystem>) -> CrossSection {
        CrossSection::delta(s, &[1], 1.0).add(&CrossSection::delta(s, &[-1], 1.0)).unwrap()
    }

    fn harper(s: &Arc<TwistedSystem>) -> CrossSection {
        [[1, 0], [-1, 0], [0, 1], [0, -1]]
            .iter()
            .fold(CrossSection::zero(s), |acc, c| acc.add(&CrossSection::delta(s, c, 1.0)).unwrap())
    }

    /// `(1/2π)∫ g(2cos θ) e^{−inθ} dθ` by the trapezoid rule.
    fn cosine_coefficient<F: Fn(f64) -> C64>(g: F, n: i64, pts: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..pts {
            let th = 2.0 * PI * j as f64 / pts as f64;
            acc += g(2.0 * th.cos()) * C64::from_polar(1.0, -(n as f64) * th);
        }
        acc / pts as f64
    }

    #[test]
    fn series_at_zero() {
        let s = z1();
        let zero = CrossSection::zero(&s);
        let u = entire_apply(Series::U, &zero, 1e-12).unwrap();
        assert!(u.value.is_empty());
        let w = entire_apply(Series::W, &zero, 1e-12).unwrap();
        assert_eq!(w.value.coeff(&[0]), C64::new(-0.5, 0.0));
        assert_eq!(w.value.len(), 1);
    }

    #[test]
    fn u_on_z_matches_fourier_integral() {
        let s = z1();
        let u = entire_apply(Series::U, &laplacian(&s), 1e-14).unwrap();
        for n in -12..=12 {
            let want = cosine_coefficient(|x| C64::new(0.0, x).exp() - 1.0, n, 256);
            assert!((u.value.coeff(&[n]) - want).norm() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn scalar_series_identities() {
        let i = C64::new(0.0, 1.0);
        for x in [-7.0, -0.3, 1e-4, 0.9, 12.0] {
            let z = C64::new(x, 0.0);
            let (u, v, w) = (Series::U.eval(z), Series::V.eval(z), Series::W.eval(z));
            assert!((u - (v * z + i * z)).norm() < 1e-12);
            assert!((v - w * z).norm() < 1e-12);
        }
        assert!((w_sup_on_grid() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn series_identity_on_random_sections() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let i = C64::new(0.0, 1.0);
        let mut count = 0;
        for s in test_systems() {
            for _ in 0..17 {
                let raw = CrossSection::random(&s, 2, 4, false, &mut rng);
                let phi = raw.scale_real(rng.random_range(0.2..3.0) / raw.norm_l1());
                let tol = 1e-12;
                let u = entire_apply(Series::U, &phi, tol).unwrap();
                let v = entire_apply(Series::V, &phi, tol).unwrap();
                let rhs = v.value.convolve(&phi).unwrap().add_scaled(&phi, i).unwrap();
                let budget = u.tail_bound
                    + v.tail_bound * phi.norm_l1()
                    + u.value.dropped_mass()
                    + rhs.dropped_mass()
                    + 1e-12 * (1.0 + phi.norm_l1()).powi(2);
                let d = u.value.distance_l1(&rhs).unwrap();
                assert!(d <= budget, "{d:e} > {budget:e}");
                count += 1;
            }
        }
        assert!(count >= 100);
    }

    #[test]
    fn exp_it_examples() {
        let s = z1();
        let d1 = CrossSection::delta(&s, &[1], 1.0);
        let e0 = exp_it(&d1, 0.0, 1e-12).unwrap();
        assert_eq!(e0.value.scalar, C64::new(1.0, 0.0));
        assert!(e0.value.section.is_empty());
        // δ₁ⁿ = δ_n, so e^{itδ₁}(n) = (it)ⁿ/n! (with the unit at n = 0).
        let t = 2.5;
        let e = exp_it(&d1, t, 1e-12).unwrap();
        let full = e.value.to_section();
        for n in 0..20u32 {
            let want = C64::new(0.0, t).powu(n) / factorial(n);
            assert!((full.coeff(&[n as i64]) - want).norm() < 1e-11, "n={n}");
        }
        assert!(e.error < 1e-10);
        // Group law.
        let phi = laplacian(&s);
        let a = exp_it(&phi, 1.3, 1e-12).unwrap();
        let b = exp_it(&phi, 2.1, 1e-12).unwrap();
        let ab = exp_it(&phi, 3.4, 1e-12).unwrap();
        let prod = a.value.mul(&b.value).unwrap();
        assert!(prod.sub(&ab.value).unwrap().norm_l1() < 1e-10);
    }

    #[test]
    fn exp_it_is_unitary_in_representations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for s in test_systems() {
            if !s.group.is_finite() {
                continue;
            }
            let phi = CrossSection::random(&s, 2, 4, true, &mut rng);
            let e = exp_it(&phi, 3.0, 1e-12).unwrap();
            let m = finite_group_rep(&e.value, 4000).unwrap();
            for sv in m.singular_values().iter() {
                assert!((sv - 1.0).abs() < 1e-9, "{sv}");
            }
        }
        let th = Rational::parse("1/3").unwrap();
        let s = TwistedSystem::nc_torus(th);
        let e = exp_it(&harper(&s), 2.0, 1e-12).unwrap();
        let m = nc_torus_rep(th, &e.value, 0.4, -1.1);
        for sv in m.singular_values().iter() {
            assert!((sv - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn growth_on_z() {
        let s = z1();
        let grid: Vec<f64> = (3..=6).flat_map(|e| [1.0, 1.5].map(|m| m * 2f64.powi(e))).filter(|t| *t <= 64.0).collect();
        let p = growth_profile_op(&laplacian(&s), &grid, None).unwrap();
        assert!((p.slope - 0.5).abs() < 0.12, "{}", p.slope);
        assert!(p.slope <= p.exponent + 0.25);
        assert_eq!(p.exponent, 4.0);
        assert!(p.error.iter().zip(&p.norm_l1).all(|(e, n)| *e <= 1e-6 * n.max(1.0)));
        let nu = Weight::word(&s.group, &s.group.standard_generators()).unwrap();
        let pw = growth_profile_op(&laplacian(&s), &grid, Some(&nu)).unwrap();
        let sw = pw.slope_weighted.unwrap();
        assert!(sw > pw.slope && sw <= 8.0, "{sw}");
        assert_eq!(pw.exponent_weighted, Some(8.0));
    }

    #[test]
    fn growth_bounded_on_finite_groups() {
        let s = TwistedSystem::scalar(GroupModel::Cyclic { m: 6 });
        let phi = CrossSection::delta(&s, &[1], 1.0).add(&CrossSection::delta(&s, &[5], 1.0)).unwrap();
        let grid: Vec<f64> = (0..8).map(|e| 2f64.powi(e)).collect();
        let p = growth_profile_op(&phi, &grid, None).unwrap();
        assert!(p.slope.abs() < 0.2, "{}", p.slope);
        assert!(p.norm_l1.iter().all(|n| *n <= 2.0 * 6.0));
    }

    #[test]
    fn growth_constant_depends_on_norms_and_support() {
        let s = z1();
        let mk = |c: [C64; 3]| {
            let mut x = CrossSection::zero(&s);
            for (n, v) in [(0i64, c[0]), (1, c[1]), (2, c[2])] {
                x = x.add(&CrossSection::delta(&s, &[n], 1.0).scale(v)).unwrap();
                if n > 0 {
                    x = x.add(&CrossSection::delta(&s, &[-n], 1.0).scale(v.conj())).unwrap();
                }
            }
            x
        };
        let a = mk([C64::new(1.0, 0.0), C64::new(0.5, 0.0), C64::new(0.25, 0.0)]);
        let b = mk([C64::new(-1.0, 0.0), C64::new(0.0, 0.5), C64::from_polar(0.25, 0.7)]);
        assert!((a.norm_l1() - b.norm_l1()).abs() < 1e-12);
        let grid: Vec<f64> = (0..=6).map(|e| 2f64.powi(e)).collect();
        let pa = growth_profile_op(&a, &grid, None).unwrap();
        let pb = growth_profile_op(&b, &grid, None).unwrap();
        let r = pa.c_hat / pb.c_hat;
        assert!((0.5..=2.0).contains(&r), "{r}");
    }

    #[test]
    fn dix_contraction_on_random_sections() {
        let s = z1();
        let r = dix_contraction_check(&CrossSection::zero(&s), 1e-9).unwrap();
        assert!(r.pass && r.lhs == 0.0 && r.rhs == 0.0);
        assert!((r.w_at_zero - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for s in test_systems() {
            for _ in 0..9 {
                let raw = CrossSection::random(&s, 2, 4, true, &mut rng);
                let phi = raw.scale_real(rng.random_range(0.2..2.0) / raw.norm_l1());
                let r = dix_contraction_check(&phi, 1e-9).unwrap();
                assert!(r.pass, "{:?}", r);
            }
        }
    }

    #[test]
    fn calculus_at_zero_element() {
        let s = z1();
        let f = FunctionSpec::gaussian(0.3, 1.0).unwrap();
        let r = dixmier_baillet(&f, &CrossSection::zero(&s), &QuadratureSpec::default()).unwrap();
        assert!((r.value.scalar - f.value_at_zero()).norm() < 1e-12);
        assert!(r.value.section.is_empty());
    }

    #[test]
    fn raised_cosine_on_z_matches_symbol() {
        let s = z1();
        let f = FunctionSpec::raised_cosine(1.5, 1.0).unwrap();
        assert_eq!(f.value_at_zero(), C64::new(0.0, 0.0));
        let r = dixmier_baillet(&f, &laplacian(&s), &QuadratureSpec::default()).unwrap();
        assert!(r.budget.total <= 1e-4);
        assert!(r.value.scalar.norm() <= r.budget.total);
        let full = r.value.to_section();
        for n in -15..=15 {
            let want = cosine_coefficient(|x| f.eval(x), n, 4096);
            assert!((full.coeff(&[n]) - want).norm() < 1e-4, "n={n}");
        }
    }

    #[test]
    fn finite_group_matches_matrix_calculus() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = FunctionSpec::gaussian(0.5, 1.2).unwrap();
        for s in test_systems() {
            if !s.group.is_finite() {
                continue;
            }
            let phi = CrossSection::random(&s, 2, 3, true, &mut rng);
            let r = dixmier_baillet(&f, &phi, &QuadratureSpec::with_tol(1e-5)).unwrap();
            let lhs = finite_group_rep(&r.value, 4000).unwrap();
            let rhs = matrix_function(&finite_group_rep(&UnitalElement::from_section(phi.clone()), 4000).unwrap(), &f);
            let res = spectral_norm(&(lhs - rhs));
            assert!(res <= r.budget.total, "{res} > {}", r.budget.total);
        }
    }

    #[test]
    fn homomorphism_on_z() {
        let s = z1();
        let f = FunctionSpec::raised_cosine(0.5, 1.0).unwrap();
        let g = FunctionSpec::raised_cosine(1.0, 1.0).unwrap();
        let rep = calculus_homomorphism_check(&f, &g, &laplacian(&s), &QuadratureSpec::default()).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.product_residual <= 5e-4 && rep.adjoint_residual <= 5e-4);
        let z = calculus_homomorphism_check(&FunctionSpec::zero(), &FunctionSpec::zero(), &laplacian(&s), &QuadratureSpec::default()).unwrap();
        assert_eq!(z.product_residual, 0.0);
        // Real f gives a self-adjoint f(Φ).
        let rf = dixmier_baillet(&f, &laplacian(&s), &QuadratureSpec::default()).unwrap();
        assert!(rf.value.sub(&rf.value.adjoint()).unwrap().norm_l1() <= 2.0 * rf.budget.total);
    }

    #[test]
    fn nc_torus_rep_matches_matrix_calculus() {
        let th = Rational::parse("1/3").unwrap();
        let s = TwistedSystem::nc_torus(th);
        let f = FunctionSpec::gaussian(1.0, 1.0).unwrap();
        let h = harper(&s);
        let r = dixmier_baillet(&f, &h, &QuadratureSpec::with_tol(1e-4)).unwrap();
        for &(k1, k2) in &[(0.0, 0.0), (0.7, -1.9), (2.2, 0.4)] {
            let lhs = nc_torus_rep(th, &r.value, k1, k2);
            let rhs = matrix_function(&nc_torus_rep(th, &UnitalElement::from_section(h.clone()), k1, k2), &f);
            assert!(spectral_norm(&(lhs - rhs)) <= r.budget.total);
        }
    }

    #[test]
    fn tolerance_not_met_reports_budget() {
        let s = z1();
        let f = FunctionSpec::raised_cosine(0.0, 1.0).unwrap();
        let q = QuadratureSpec {
            t_max: Some(2.0),
            dt: None,
            tol: 1e-6,
            growth: Some((1.0, 0.5)),
        };
        match dixmier_baillet(&f, &laplacian(&s), &q) {
            Err(Error::ToleranceNotMet { achieved, target }) => assert!(achieved > target),
            other => panic!("{other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn scalar_series_relations(re in -6.0f64..6.0, im in -2.0f64..2.0) {
            let z = C64::new(re, im);
            let i = C64::new(0.0, 1.0);
            let (u, v, w) = (Series::U.eval(z), Series::V.eval(z), Series::W.eval(z));
            let scale = 1.0 + (i * z).exp().norm() + z.norm();
            proptest::prop_assert!((u - (v * z + i * z)).norm() <= 1e-9 * scale);
            proptest::prop_assert!((v - w * z).norm() <= 1e-9 * scale);
        }

        #[test]
        fn u_series_on_z_matches_symbol(seed in 0u64..10_000, t in -3.1f64..3.1) {
            let s = z1();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = CrossSection::random(&s, 3, 4, false, &mut rng);
            let phi = raw.scale_real(2.0 / raw.norm_l1());
            let u = entire_apply(Series::U, &phi, 1e-13).unwrap();
            let lhs = crate::spectra::zd_symbol(&u.value, &[t]);
            let rhs = Series::U.eval(crate::spectra::zd_symbol(&phi, &[t]));
            proptest::prop_assert!((lhs - rhs).norm() <= 1e-10 + u.tail_bound + u.value.dropped_mass());
        }
    }
}
