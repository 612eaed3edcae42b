//! Seeded property and oracle checks, one per acceptance criterion.
//!
//! Every check is deterministic in its seed. Reports carry the worst case
//! observed and, on failure, a witness.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::sync::Arc;

use crate::bundle::{cocycle_check, Fiber, Rational, TwistedSystem, Unitaries, C64};
use crate::calculus::{
    calculus_homomorphism_check, dix_contraction_check, dixmier_baillet_best_effort, finite_group_rep,
    growth_profile_op, matrix_function, nc_torus_rep, spectral_norm, FunctionSpec, QuadratureSpec,
};
use crate::error::{Error, Result};
use crate::groups::{
    weight_axiom_check, weight_integrability, GroupModel, MSequence, Weight, DEFAULT_BUDGET,
};
use crate::inversion::{norm_control_bound, weight_constants, BoundStatus};
use crate::norms::{
    norm_e, norm_l2e, norm_linf, norm_lp, norm_pi_p_estimate, opnorm_escalate, regular_rep_matrix, DEFAULT_ITERS,
    REGULAR_REP_CAP,
};
use crate::sections::{CrossSection, UnitalElement};
use crate::spectra::{
    nc_torus_symbol_spectrum, radius_invariance_suite, wiener_inversion_check, zd_symbol_spectrum, SuiteFamily,
};

/// Number of criteria covered by [`run_criterion`].
pub const CRITERIA: u8 = 9;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub cases: usize,
    pub failures: usize,
    /// What `worst` measures.
    pub metric: String,
    pub worst: f64,
    pub witness: Option<String>,
    pub detail: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub seed: u64,
    pub pass: bool,
    pub criteria: Vec<CriterionReport>,
}

/// Criteria in the named suite. `core` is all of them.
pub fn suite_criteria(suite: &str) -> Result<Vec<u8>> {
    match suite {
        "core" => Ok((1..=CRITERIA).collect()),
        other => Err(Error::Config(format!("unknown suite {other:?} (expected core)"))),
    }
}

pub fn run_suite(suite: &str, seed: u64) -> Result<VerifyReport> {
    let ids = suite_criteria(suite)?;
    let criteria = ids.iter().map(|&id| run_criterion(id, seed)).collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport {
        suite: suite.to_string(),
        seed,
        pass: criteria.iter().all(|c| c.pass),
        criteria,
    })
}

pub fn run_criterion(id: u8, seed: u64) -> Result<CriterionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(id as u64));
    match id {
        1 => young(&mut rng),
        2 => pi_two(&mut rng),
        3 => dix(&mut rng),
        4 => growth(),
        5 => calculus(&mut rng),
        6 => inversion(),
        7 => radius_invariance(seed),
        8 => harper_half(),
        9 => weights(&mut rng),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    }
}

/// Running worst case plus the first failing witness.
struct Tally {
    cases: usize,
    failures: usize,
    worst: f64,
    witness: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            cases: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
            witness: None,
        }
    }

    fn record(&mut self, value: f64, ok: bool, label: impl FnOnce() -> String) {
        self.cases += 1;
        if value > self.worst || value.is_nan() {
            self.worst = value;
        }
        if !ok {
            self.failures += 1;
            if self.witness.is_none() {
                self.witness = Some(label());
            }
        }
    }

    fn finish(self, id: u8, name: &str, metric: &str, extra_ok: bool, detail: Value) -> CriterionReport {
        CriterionReport {
            id,
            name: name.into(),
            pass: self.failures == 0 && self.cases > 0 && extra_ok,
            cases: self.cases,
            failures: self.failures,
            metric: metric.into(),
            worst: self.worst,
            witness: self.witness,
            detail,
        }
    }
}

fn theta(s: &str) -> Rational {
    Rational::parse(s).expect("literal rational")
}

fn harper(s: &Arc<TwistedSystem>) -> CrossSection {
    [[1, 0], [-1, 0], [0, 1], [0, -1]]
        .iter()
        .fold(CrossSection::zero(s), |acc, c| acc.add(&CrossSection::delta(s, c, 1.0)).expect("same system"))
}

/// `V diag(ζ^a, ζ^b) V^*` with `ζ⁶ = 1`, so that `Ad U` is an action of ℤ/6.
fn order_six_unitary(rng: &mut ChaCha8Rng) -> Fiber {
    let v = Fiber::random_unitary(2, rng);
    let zeta = |j: u32| C64::from_polar(1.0, std::f64::consts::PI * j as f64 / 3.0);
    let d = Fiber::diagonal(&[zeta(rng.random_range(0..6)), zeta(rng.random_range(0..6))]);
    v.matmul(&d).matmul(&v.adjoint())
}

/// The mixed systems used by the pairwise checks.
fn mixed_systems(rng: &mut ChaCha8Rng) -> Result<Vec<(String, Arc<TwistedSystem>)>> {
    let c6 = GroupModel::Cyclic { m: 6 };
    let systems: Vec<(String, Arc<TwistedSystem>)> = vec![
        ("Zd:2".into(), TwistedSystem::scalar(GroupModel::Zd { d: 2 })),
        ("nc_torus:1/3".into(), TwistedSystem::nc_torus(theta("1/3"))),
        ("nc_torus:1/2".into(), TwistedSystem::nc_torus(theta("1/2"))),
        ("Heis3".into(), TwistedSystem::scalar(GroupModel::Heis3)),
        (
            "Cyclic:6 inner M2".into(),
            TwistedSystem::inner(c6.clone(), Unitaries::Power(order_six_unitary(rng)), false)?,
        ),
        (
            "Cyclic:6 inner M2 twisted".into(),
            TwistedSystem::inner(c6.clone(), Unitaries::random_table(&c6, 2, rng.random())?, true)?,
        ),
    ];
    checked(systems)
}

/// Refuses systems whose action and twist fail the sampled cocycle axioms.
fn checked(systems: Vec<(String, Arc<TwistedSystem>)>) -> Result<Vec<(String, Arc<TwistedSystem>)>> {
    for (name, s) in &systems {
        let r = cocycle_check(s, 200, 1, 4);
        if !r.pass {
            return Err(Error::InvalidSpec(format!("{name} fails the cocycle axioms by {:e}", r.worst_violation)));
        }
    }
    Ok(systems)
}

fn young(rng: &mut ChaCha8Rng) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let systems = mixed_systems(rng)?;
    for (name, s) in &systems {
        for i in 0..40 {
            let psi = CrossSection::random(s, rng.random_range(1..=3), rng.random_range(1..=6), false, rng);
            let phi = CrossSection::random(s, rng.random_range(1..=3), rng.random_range(1..=6), false, rng);
            let lhs = norm_linf(&psi.convolve(&phi)?);
            let rhs = norm_lp(&psi, 2.0) * norm_l2e(&phi);
            let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
            t.record(ratio, lhs <= rhs * (1.0 + 1e-9), || format!("{name} pair {i}: {lhs:e} > {rhs:e}"));
        }
    }
    Ok(t.finish(
        1,
        "strengthened Young inequality",
        "max ‖Ψ*Φ‖_∞ / (‖Ψ‖₂‖Φ‖_{ℓ²ₑ})",
        true,
        json!({ "systems": systems.iter().map(|s| s.0.clone()).collect::<Vec<_>>(), "rel_tol": 1e-9 }),
    ))
}

/// `‖Φ‖_{π,2}` over the full regular representation: the top eigenvalue of
/// `Σ_x T_x^†T_x` with `T_x` the dense matrix of the single point `x`.
fn full_pi_two(phi: &CrossSection, m: u32) -> Result<f64> {
    let mut gram: Option<DMatrix<_>> = None;
    for (x, a) in phi.iter() {
        let single = CrossSection::point(phi.system(), x.clone(), a.clone());
        let (t, _) = regular_rep_matrix(&single, m, REGULAR_REP_CAP)?;
        let g = t.adjoint() * t;
        gram = Some(match gram {
            Some(acc) => acc + g,
            None => g,
        });
    }
    Ok(gram.map(|g| g.symmetric_eigen().eigenvalues.max().max(0.0).sqrt()).unwrap_or(0.0))
}

fn pi_two(rng: &mut ChaCha8Rng) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut est_gap = 0.0f64;
    for m in 3..=8i64 {
        let g = GroupModel::Cyclic { m };
        let s = TwistedSystem::inner(g.clone(), Unitaries::random_table(&g, 2, rng.random())?, true)?;
        for i in 0..50 {
            let phi = CrossSection::random(&s, m as u32, rng.random_range(1..=2 * m as usize), false, rng);
            let dense = full_pi_two(&phi, m as u32)?;
            let l2e = norm_l2e(&phi);
            let est = norm_pi_p_estimate(&phi, 2.0, m as u32, 0, 0)?.value;
            est_gap = est_gap.max((est - dense).abs() / dense.max(1e-300));
            let rel = (dense - l2e).abs() / l2e.max(1e-300);
            t.record(rel, rel <= 1e-8, || format!("Cyclic:{m} section {i}: π,2 = {dense} vs ℓ²ₑ = {l2e}"));
        }
    }
    Ok(t.finish(
        2,
        "π,2 norm equals ℓ²ₑ on twisted cyclic groups",
        "max relative gap",
        est_gap <= 1e-8,
        json!({ "groups": "Cyclic:3..8, inner M2 twisted", "estimator_vs_dense": est_gap }),
    ))
}

fn dix(rng: &mut ChaCha8Rng) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut systems = mixed_systems(rng)?;
    systems.extend(checked(vec![(
        "Cyclic:3 permutation diagonal".into(),
        TwistedSystem::permutation_diagonal(GroupModel::Cyclic { m: 3 }, 3)?,
    )])?);
    let mut w_ok = true;
    for (name, s) in &systems {
        for i in 0..50 {
            let raw = CrossSection::random(s, 2, rng.random_range(1..=4), true, rng);
            let n1 = raw.norm_l1();
            let phi = if n1 > 0.0 { raw.scale_real(rng.random_range(0.2..2.0) / n1) } else { raw };
            let r = dix_contraction_check(&phi, 1e-9)?;
            w_ok &= (r.w_sup - 0.5).abs() < 1e-12 && (r.w_at_zero - 0.5).abs() < 1e-15;
            let gap = r.lhs - r.rhs;
            t.record(gap, gap <= 1e-9, || format!("{name} section {i}: {} > {} + 1e-9", r.lhs, r.rhs));
        }
    }
    Ok(t.finish(
        3,
        "v(Φ) contraction in ℓ²ₑ",
        "max ‖v(Φ)‖_{ℓ²ₑ} − ½‖Φ‖_{ℓ²ₑ}",
        w_ok,
        json!({ "systems": systems.len(), "per_system": 50, "w_sup_is_half": w_ok }),
    ))
}

pub(crate) fn loglog_fit(t: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn growth() -> Result<CriterionReport> {
    let s = TwistedSystem::scalar(GroupModel::Zd { d: 1 });
    let phi = CrossSection::delta(&s, &[1], 1.0).add(&CrossSection::delta(&s, &[-1], 1.0))?;
    let grid: Vec<f64> = (0..=12).map(|k| 8.0 * 2f64.powf(k as f64 / 4.0)).collect();
    let nu = Weight::word(&s.group, &s.group.standard_generators())?;
    let p = growth_profile_op(&phi, &grid, Some(&nu))?;
    let slope = loglog_fit(&grid, &p.norm_l1);
    let slope_w = loglog_fit(&grid, p.norm_l1nu.as_ref().expect("weighted profile"));
    let mut t = Tally::new();
    t.record(slope, (0.3..=4.0).contains(&slope), || format!("unweighted slope {slope}"));
    t.record(slope_w, slope_w <= 8.0, || format!("weighted slope {slope_w}"));
    let max_err = p.error.iter().cloned().fold(0.0, f64::max);
    Ok(t.finish(
        4,
        "growth of ‖u(tΦ)‖ on ℤ",
        "fitted log-log slope",
        p.exponent == 4.0 && p.exponent_weighted == Some(8.0),
        json!({
            "t": grid,
            "norm_l1": p.norm_l1,
            "norm_l1nu": p.norm_l1nu,
            "error_budget": max_err,
            "slope": slope,
            "slope_weighted": slope_w,
            "exponent": p.exponent,
            "exponent_weighted": p.exponent_weighted,
        }),
    ))
}

struct CalcCase {
    label: String,
    f: FunctionSpec,
    g: FunctionSpec,
    phi: CrossSection,
    torus: Option<Rational>,
}

fn calc_cases(rng: &mut ChaCha8Rng) -> Result<Vec<CalcCase>> {
    let mut cases = Vec::new();
    let gauss = |rng: &mut ChaCha8Rng| FunctionSpec::gaussian(rng.random_range(-1.0..1.0), rng.random_range(0.8..1.6));
    for m in 4..=8i64 {
        let g = GroupModel::Cyclic { m };
        let systems = [
            ("scalar", TwistedSystem::scalar(g.clone())),
            ("inner M2 twisted", TwistedSystem::inner(g.clone(), Unitaries::random_table(&g, 2, rng.random())?, true)?),
            ("scalar", TwistedSystem::scalar(g.clone())),
        ];
        for (kind, s) in systems {
            let raw = CrossSection::random(&s, 2, 3, true, rng);
            let phi = raw.scale_real(rng.random_range(0.5..1.5) / raw.norm_l1().max(1e-300));
            cases.push(CalcCase {
                label: format!("Cyclic:{m} {kind}"),
                f: gauss(rng)?,
                g: gauss(rng)?,
                phi,
                torus: None,
            });
        }
    }
    let th = theta("1/3");
    let s = TwistedSystem::nc_torus(th);
    for i in 0..5 {
        let phi = if i == 0 {
            harper(&s)
        } else {
            let raw = CrossSection::random(&s, 1, 3, true, rng);
            raw.scale_real(rng.random_range(0.5..1.5) / raw.norm_l1().max(1e-300))
        };
        cases.push(CalcCase {
            label: format!("nc_torus:1/3 #{i}"),
            f: gauss(rng)?,
            g: gauss(rng)?,
            phi,
            torus: Some(th),
        });
    }
    Ok(cases)
}

fn calculus(rng: &mut ChaCha8Rng) -> Result<CriterionReport> {
    let quad = QuadratureSpec::with_tol(1e-4);
    let mut t = Tally::new();
    let mut rows = Vec::new();
    for case in calc_cases(rng)? {
        let r = dixmier_baillet_best_effort(&case.f, &case.phi, &quad)?;
        let budget = r.budget.total;
        let x = UnitalElement::from_section(case.phi.clone());
        let residual = match case.torus {
            None => {
                let lhs = finite_group_rep(&r.value, REGULAR_REP_CAP)?;
                spectral_norm(&(lhs - matrix_function(&finite_group_rep(&x, REGULAR_REP_CAP)?, &case.f)))
            }
            Some(th) => {
                let mut worst = 0.0f64;
                for _ in 0..4 {
                    let (k1, k2) = (rng.random_range(0.0..6.3), rng.random_range(0.0..6.3));
                    let lhs = nc_torus_rep(th, &r.value, k1, k2);
                    let rhs = matrix_function(&nc_torus_rep(th, &x, k1, k2), &case.f);
                    worst = worst.max(spectral_norm(&(lhs - rhs)));
                }
                worst
            }
        };
        let hom = calculus_homomorphism_check(&case.f, &case.g, &case.phi, &quad)?;
        let hb = hom.budgets.iter().cloned().fold(0.0, f64::max);
        let ok = residual <= budget
            && budget <= 1e-3
            && hom.product_residual <= 3.0 * hb
            && hom.adjoint_residual <= 3.0 * hom.budgets[0];
        let ratio = residual / budget.max(1e-300);
        t.record(ratio, ok, || {
            format!(
                "{}: residual {residual:e}, budget {budget:e}, product {:e}, adjoint {:e}",
                case.label, hom.product_residual, hom.adjoint_residual
            )
        });
        rows.push(json!({
            "case": case.label,
            "residual": residual,
            "budget": budget,
            "t_max": r.t_max,
            "nodes": r.nodes,
            "product_residual": hom.product_residual,
            "adjoint_residual": hom.adjoint_residual,
            "hom_budget": hb,
        }));
    }
    Ok(t.finish(5, "functional calculus against matrix calculus", "max residual / budget", true, json!(rows)))
}

fn inversion() -> Result<CriterionReport> {
    let s = TwistedSystem::scalar(GroupModel::Zd { d: 1 });
    let nu = Weight::word(&s.group, &s.group.standard_generators())?;
    let phi = CrossSection::delta(&s, &[0], 2.0)
        .add(&CrossSection::delta(&s, &[1], -0.5))?
        .add(&CrossSection::delta(&s, &[-1], -0.5))?;
    let k = weight_constants(&nu, 2.0, 100_000)?;
    let spec = zd_symbol_spectrum(&phi, 4096)?;
    let (lo, hi) = spec.hull.expect("self-adjoint");
    let (op_phi, op_inv) = (hi.abs().max(lo.abs()), 1.0 / lo);
    let e_norm = norm_e(&phi, &nu)?;
    let bound = norm_control_bound(&k, e_norm, op_phi, op_inv, crate::inversion::K_MAX)?;
    let (_, w) = wiener_inversion_check(&phi, 0.5, &nu, 1e-12)?;
    let b_oracle = std::f64::consts::PI.powi(2) / 3.0 - 1.0;
    let log_measured = w.inverse_e_norm.ln();
    let mut t = Tally::new();
    let finite = bound.status != BoundStatus::NotConverged && bound.log_value.is_finite();
    t.record(log_measured - bound.log_value, finite && log_measured <= bound.log_value, || {
        format!("ln‖Φ⁻¹‖_𝔈 = {log_measured} vs ln bound {}", bound.log_value)
    });
    t.record(w.max_coeff_error, w.max_coeff_error <= 1e-8, || {
        format!("coefficient gap to Fourier division {:e}", w.max_coeff_error)
    });
    let b_ok = (k.b - b_oracle).abs() <= 1e-3 && (k.theta - 11.0 / 3.0).abs() < 1e-12;
    Ok(t.finish(
        6,
        "norm-controlled inversion on ℤ",
        "ln measured − ln bound, then coefficient error",
        b_ok,
        json!({
            "b": k.b,
            "b_closed_form": b_oracle,
            "theta": k.theta,
            "d": k.d,
            "op_phi": op_phi,
            "op_inv": op_inv,
            "e_norm": e_norm,
            "inverse_e_norm": w.inverse_e_norm,
            "log_bound": bound.log_value,
            "bound_status": bound.status,
            "neumann_terms": w.neumann_terms,
            "max_coeff_error": w.max_coeff_error,
        }),
    ))
}

fn radius_invariance(seed: u64) -> Result<CriterionReport> {
    let fams = [
        SuiteFamily::Z1,
        SuiteFamily::Z2,
        SuiteFamily::Heis3,
        SuiteFamily::NcTorus("1/3".into()),
        SuiteFamily::Finite,
    ];
    let rep = radius_invariance_suite(&fams, 6, seed)?;
    let mut t = Tally::new();
    for r in &rep.rows {
        let dev = (r.ratio_l1 - 1.0).abs().max((r.ratio_l1nu - 1.0).abs());
        t.record(dev, r.pass, || format!("{} #{}: ratios {} {} ({:?})", r.family, r.instance, r.ratio_l1, r.ratio_l1nu, r.note));
    }
    Ok(t.finish(
        7,
        "spectral radius invariance",
        "max |ρ/‖λ(Φ)‖ − 1|",
        rep.pass,
        serde_json::to_value(&rep).map_err(|e| Error::Config(e.to_string()))?,
    ))
}

fn harper_half() -> Result<CriterionReport> {
    let th = theta("1/2");
    let s = TwistedSystem::nc_torus(th);
    let h = harper(&s);
    let target = 2.0 * 2f64.sqrt();
    let (rep, trace) = opnorm_escalate(&h, &[10, 20, 30, 40, 50, 60], DEFAULT_ITERS, DEFAULT_BUDGET)?;
    let monotone = trace.windows(2).all(|w| w[1].1 >= w[0].1);
    let grid = 64;
    let spec = nc_torus_symbol_spectrum(th, &h, grid)?;
    let (lo, hi) = spec.hull.expect("self-adjoint");
    let resolution = (2.0 * std::f64::consts::PI / grid as f64).powi(2);
    let mut t = Tally::new();
    let gap = target - rep.value;
    t.record(gap.abs(), monotone && gap >= -1e-9 && gap <= 1e-2, || format!("opnorm trace {trace:?}"));
    let hull_gap = (lo + target).abs().max((hi - target).abs());
    t.record(hull_gap, hull_gap <= resolution, || format!("hull [{lo}, {hi}]"));
    Ok(t.finish(
        8,
        "Harper element at θ = 1/2",
        "distance to 2√2",
        true,
        json!({ "trace": trace, "hull": [lo, hi], "grid": grid, "resolution": resolution }),
    ))
}

fn weights(rng: &mut ChaCha8Rng) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut integ = Vec::new();
    for (g, n_max) in [(GroupModel::Zd { d: 1 }, 10_000), (GroupModel::Zd { d: 2 }, 400), (GroupModel::Heis3, 40)] {
        let p = g.growth_order() as f64 + 2.0;
        let w = Weight::word(&g, &g.standard_generators())?;
        let r = weight_integrability(&w, p, n_max)?;
        t.record(0.0, r.converged, || format!("{g}: Σν^-{p} not converged"));
        integ.push(json!({ "group": g.to_string(), "p": p, "partial": r.partial, "shell_decay": r.shell_decay }));
    }
    let mut axioms = Vec::new();
    let groups = [
        GroupModel::Zd { d: 1 },
        GroupModel::Zd { d: 2 },
        GroupModel::Heis3,
        GroupModel::Cyclic { m: 6 },
    ];
    let mut weights: Vec<(String, GroupModel, Weight)> = Vec::new();
    for g in &groups {
        let k = g.standard_generators();
        weights.push((format!("{g} word"), g.clone(), Weight::word(g, &k)?));
        weights.push((format!("{g} word^2"), g.clone(), Weight::word_power(g, &k, 2.0)?));
        weights.push((format!("{g} word^1.5"), g.clone(), Weight::word_power(g, &k, 1.5)?));
    }
    let ds = GroupModel::DirectSumZ2;
    weights.push(("DirectSumZ2 linear".into(), ds.clone(), Weight::locally_finite(&ds, MSequence::Linear)?));
    weights.push(("DirectSumZ2 2^n".into(), ds.clone(), Weight::locally_finite(&ds, MSequence::PowerOfTwo)?));
    for (name, g, w) in &weights {
        let r = weight_axiom_check(w, g, &g.standard_generators(), 12, 1000, rng)?;
        t.record(r.worst_poly, r.violations == 0, || format!("{name}: {:?}", r.witness));
        axioms.push(json!({
            "weight": name,
            "pairs": r.pairs,
            "exact": r.exact,
            "worst_submult": r.worst_submult,
            "worst_poly": r.worst_poly,
        }));
    }
    Ok(t.finish(
        9,
        "weight integrability and axioms",
        "max ν(xy)/(C(ν(x)+ν(y)))",
        true,
        json!({ "integrability": integ, "axioms": axioms }),
    ))
}
