//! Weighted-algebra constants, the weighted inequalities, Neumann inversion
//! and the log-space norm-controlled inversion bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::groups::{Weight, WordMetric};
use crate::norms::{norm_e, norm_l2e, norm_lp_weighted};
use crate::sections::CrossSection;

/// Constants of the weighted algebra `𝔈 = ℓ^{1,ν} ∩ ℓ^∞` at exponent `p`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct WeightConstants {
    pub p: f64,
    /// `‖ν⁻¹‖_p^p`
    pub b: f64,
    /// `2B^{1/(p+1)}`
    pub a: f64,
    /// Polynomial constant: `ν(xy) ≤ C(ν(x)+ν(y))`.
    pub c: f64,
    /// `max{2CA, 1}`
    pub d: f64,
    /// `(4p+3)/(p+1)`
    pub theta: f64,
    /// `1 + log₂ C`
    pub delta: f64,
}

impl WeightConstants {
    pub fn from_parts(p: f64, b: f64, c: f64) -> Self {
        let a = 2.0 * b.powf(1.0 / (p + 1.0));
        WeightConstants {
            p,
            b,
            a,
            c,
            d: (2.0 * c * a).max(1.0),
            theta: (4.0 * p + 3.0) / (p + 1.0),
            delta: 1.0 + c.log2(),
        }
    }
}

/// `B` from the integrability partial sums plus their tail estimate.
pub fn weight_constants(weight: &Weight, p: f64, n_max: u32) -> Result<WeightConstants> {
    let integ = crate::groups::weight_integrability(weight, p, n_max)?;
    if !integ.converged {
        return Err(Error::Diverged { p });
    }
    let c = weight
        .poly_constant
        .ok_or_else(|| Error::InvalidSpec("weight has no polynomial constant".into()))?;
    Ok(WeightConstants::from_parts(p, integ.partial + integ.tail_estimate, c))
}

#[derive(Clone, Debug, Serialize)]
pub struct SubmultReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `(n, ‖Ψ^{2n}‖_{1,ν} / (2C‖Ψⁿ‖_{1,ν}‖Ψⁿ‖₁))` for `n ∈ {1,2,4}`.
    pub squaring: Vec<(u32, f64)>,
    pub pass: bool,
}

const REL_SLACK: f64 = 1e-12;

/// `‖Ψ*Φ‖_{1,ν} ≤ C(‖Ψ‖_{1,ν}‖Φ‖₁ + ‖Ψ‖₁‖Φ‖_{1,ν})` and its squaring form.
pub fn weighted_submult_check(phi: &CrossSection, psi: &CrossSection, nu: &Weight, c: f64) -> Result<SubmultReport> {
    let w = |s: &CrossSection| norm_lp_weighted(s, 1.0, nu);
    let lhs = w(&psi.convolve(phi)?)?;
    let rhs = c * (w(psi)? * phi.norm_l1() + psi.norm_l1() * w(phi)?);
    let mut squaring = Vec::new();
    for n in [1u32, 2, 4] {
        let pn = psi.power(n)?;
        let l = w(&pn.convolve(&pn)?)?;
        let r = 2.0 * c * w(&pn)? * pn.norm_l1();
        squaring.push((n, if r > 0.0 { l / r } else { 0.0 }));
    }
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    let pass = ratio <= 1.0 + REL_SLACK && squaring.iter().all(|&(_, r)| r <= 1.0 + REL_SLACK);
    Ok(SubmultReport {
        lhs,
        rhs,
        ratio,
        squaring,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GendiffReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// `‖Φ⁴‖_𝔈 ≤ D‖Φ‖_{ℓ²ₑ}^{1/(p+1)}‖Φ‖_𝔈^θ`.
pub fn gendiff_check(phi: &CrossSection, nu: &Weight, k: &WeightConstants) -> Result<GendiffReport> {
    let lhs = norm_e(&phi.power(4)?, nu)?;
    let rhs = k.d * norm_l2e(phi).powf(1.0 / (k.p + 1.0)) * norm_e(phi, nu)?.powf(k.theta);
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(GendiffReport {
        lhs,
        rhs,
        ratio,
        pass: ratio <= 1.0 + REL_SLACK,
    })
}

/// Contraction level at which inversion is refused.
pub const INVERTIBILITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct NeumannReport {
    pub terms: usize,
    /// `‖Ψ‖_{C*} = 1 − 1/(‖Φ⁻¹‖²‖Φ‖²)`
    pub contraction: f64,
    pub last_increment: f64,
    /// `max(‖ΦΦ⁻¹ − 1‖_{1,ν}, ‖Φ⁻¹Φ − 1‖_{1,ν})`
    pub residual: f64,
    pub inverse_e_norm: f64,
    pub error_budget: f64,
}

/// `Φ⁻¹ = ‖Φ‖⁻²(Σₙ Ψⁿ)Φ^*` with `Ψ = 1 − Φ^*Φ/‖Φ‖²`, summed until the
/// 𝔈-increment and the two-sided residual are both below `tol`.
pub fn invert_neumann(
    phi: &CrossSection,
    op_phi: f64,
    op_inv: f64,
    nu: &Weight,
    tol: f64,
    max_terms: usize,
) -> Result<(CrossSection, NeumannReport)> {
    if !(op_phi > 0.0 && op_inv > 0.0 && op_phi.is_finite() && op_inv.is_finite()) {
        return Err(Error::NotInvertible { contraction: 1.0 });
    }
    let contraction = 1.0 - 1.0 / (op_phi * op_phi * op_inv * op_inv);
    if contraction >= 1.0 - INVERTIBILITY_MARGIN {
        return Err(Error::NotInvertible { contraction });
    }
    let s = 1.0 / (op_phi * op_phi);
    let unit = CrossSection::unit(phi.system());
    let adj = phi.involution();
    let psi = unit.sub(&adj.convolve(phi)?.scale_real(s))?;
    let step = adj.scale_real(s);
    let mut term = step.clone();
    let mut inv = step;
    let mut last = f64::INFINITY;
    let mut n = 1;
    while n < max_terms {
        term = psi.convolve(&term)?;
        term.prune(crate::sections::PRUNE_REL);
        last = norm_e(&term, nu)?;
        inv = inv.add(&term)?;
        n += 1;
        if last < tol && (n % 8 == 0 || last < tol * 1e-3) {
            let residual = residual(phi, &inv, &unit, nu)?;
            if residual <= tol {
                inv.prune(crate::sections::PRUNE_REL);
                let report = NeumannReport {
                    terms: n,
                    contraction,
                    last_increment: last,
                    residual,
                    inverse_e_norm: norm_e(&inv, nu)?,
                    error_budget: inv.dropped_mass() + last,
                };
                return Ok((inv, report));
            }
        }
    }
    Err(Error::SlowConvergence {
        terms: n,
        last_increment: last,
    })
}

fn residual(phi: &CrossSection, inv: &CrossSection, unit: &CrossSection, nu: &Weight) -> Result<f64> {
    let r1 = norm_lp_weighted(&phi.convolve(inv)?.sub(unit)?, 1.0, nu)?;
    let r2 = norm_lp_weighted(&inv.convolve(phi)?.sub(unit)?, 1.0, nu)?;
    Ok(r1.max(r2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    /// The bound fits in an `f64`.
    Finite,
    /// Finite, but only representable through its logarithm.
    Overflow,
    /// Terms had not decayed by `k_max`; the log value is a partial product.
    NotConverged,
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlBound {
    /// Natural log of the bound.
    pub log_value: f64,
    pub value: Option<f64>,
    pub status: BoundStatus,
    /// `log α_k` per factor, `k = 0, 1, …`
    pub log_alpha: Vec<f64>,
    pub k_used: usize,
    /// Upper estimate of the log-contribution of factors beyond `k_used`.
    pub log_tail: f64,
}

/// `ln(1 + a + a² + a³)` for `a = e^{la}` without overflow.
fn log_factor(la: f64) -> f64 {
    if la == f64::NEG_INFINITY {
        return 0.0;
    }
    if la > 0.0 {
        // a³(1 + a⁻¹ + a⁻² + a⁻³)
        let r = (-la).exp();
        3.0 * la + (r * (1.0 + r * (1.0 + r))).ln_1p()
    } else {
        let a = la.exp();
        (a * (1.0 + a * (1.0 + a))).ln_1p()
    }
}

/// Default number of factors before declaring non-convergence.
pub const K_MAX: usize = 40;

/// The product bound on `‖Φ⁻¹‖_𝔈`, evaluated in log space with
/// `α_k = D^{(θᵏ−1)/(θ−1)} (1−1/κ²)^{4ᵏ−θᵏ} (2‖Φ‖²_𝔈/‖Φ‖²_{C*})^{θᵏ}`, `κ = ‖Φ⁻¹‖‖Φ‖`.
pub fn norm_control_bound(k: &WeightConstants, e_norm: f64, op_phi: f64, op_inv: f64, k_max: usize) -> Result<ControlBound> {
    if !(e_norm > 0.0 && op_phi > 0.0 && op_inv > 0.0) {
        return Err(Error::InvalidSpec("norm control inputs must be positive".into()));
    }
    let kappa2 = (op_inv * op_phi).powi(2);
    if kappa2 < 1.0 - 1e-12 {
        return Err(Error::InvalidSpec(format!("‖Φ⁻¹‖‖Φ‖ = {} < 1", kappa2.sqrt())));
    }
    let log_base = if kappa2 <= 1.0 { f64::NEG_INFINITY } else { (-1.0 / kappa2).ln_1p() };
    let log_d = k.d.ln();
    let log_q = (2.0 * e_norm * e_norm / (op_phi * op_phi)).ln();
    let ln_theta = k.theta.ln();
    let ln4 = 4f64.ln();
    let mut log_alpha = Vec::new();
    let mut total = (e_norm / (op_phi * op_phi)).ln();
    let mut decayed = false;
    let mut kk = 0;
    while kk <= k_max {
        let th = (kk as f64 * ln_theta).exp();
        let four = (kk as f64 * ln4).exp();
        let d_exp = if (k.theta - 1.0).abs() < 1e-15 { kk as f64 } else { (th - 1.0) / (k.theta - 1.0) };
        let gap = four - th;
        let base_term = if gap <= 0.0 { 0.0 } else { gap * log_base };
        let la = d_exp * log_d + base_term + th * log_q;
        log_alpha.push(la);
        total += log_factor(la);
        kk += 1;
        // Past the crossover the exponent 4ᵏ−θᵏ dominates and α_k collapses
        // super-geometrically.
        if la < -50.0 && log_alpha.len() >= 2 && la < log_alpha[log_alpha.len() - 2] {
            decayed = true;
            break;
        }
    }
    // Each further α is at most the square of the previous one, so the tail
    // sum is below 2α_last.
    let log_tail = if decayed { (2.0 * log_alpha.last().unwrap().exp()).ln_1p() } else { f64::INFINITY };
    let status = if !decayed {
        BoundStatus::NotConverged
    } else if total + log_tail < f64::MAX.ln() {
        BoundStatus::Finite
    } else {
        BoundStatus::Overflow
    };
    let log_value = if decayed { total + log_tail } else { total };
    Ok(ControlBound {
        log_value,
        value: (status == BoundStatus::Finite).then(|| log_value.exp()),
        status,
        log_alpha,
        k_used: kk,
        log_tail,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExistRow {
    pub truncation_radius: u32,
    pub truncation_l1_distance: f64,
    /// `max_{n ∈ [n_max/2, n_max]} ‖Ψ²Φⁿ‖₁^{1/n}`
    pub tail_root: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExistDiagnostic {
    pub rho_l1: f64,
    pub rows: Vec<ExistRow>,
    /// Smallest truncation radius whose tail root reaches `rho_l1` (within 1e-9 relative).
    pub witness_radius: Option<u32>,
}

/// For ball truncations `Ψ` of `Φ`, compares `‖Ψ²Φⁿ‖₁^{1/n}` at `n ≤ n_max`
/// with the Gelfand radius of `Φ`. Descriptive only.
pub fn exist_diagnostic(phi: &CrossSection, n_max: u32) -> Result<ExistDiagnostic> {
    let rho = crate::norms::spectral_radius_gelfand(phi, 8, None, 50_000_000)?.extrapolated;
    let metric = WordMetric::new(phi.group(), &phi.group().standard_generators())?;
    let radius = phi.support_radius()?;
    let mut powers = vec![CrossSection::unit(phi.system())];
    for _ in 0..n_max {
        let mut next = powers.last().unwrap().convolve(phi)?;
        next.prune(crate::sections::PRUNE_REL);
        powers.push(next);
    }
    let mut rows = Vec::new();
    for r in 0..=radius {
        let mut psi = CrossSection::zero(phi.system());
        for (x, f) in phi.iter() {
            if metric.length(x)? <= r {
                psi.insert(x.clone(), f.clone());
            }
        }
        let psi2 = psi.convolve(&psi)?;
        let mut best = 0.0f64;
        for n in (n_max / 2).max(1)..=n_max {
            let v = psi2.convolve(&powers[n as usize])?.norm_l1();
            best = best.max(v.powf(1.0 / n as f64));
        }
        rows.push(ExistRow {
            truncation_radius: r,
            truncation_l1_distance: phi.distance_l1(&psi)?,
            tail_root: best,
        });
    }
    let witness_radius = rows
        .iter()
        .find(|row| row.tail_root >= rho * (1.0 - 1e-9))
        .map(|row| row.truncation_radius);
    Ok(ExistDiagnostic {
        rho_l1: rho,
        rows,
        witness_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{Rational, TwistedSystem};
    use crate::groups::{Element, GroupModel};
    use crate::sections::tests::test_systems;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn z(d: usize) -> (GroupModel, Arc<TwistedSystem>, Weight) {
        let g = GroupModel::Zd { d };
        let w = Weight::word(&g, &g.standard_generators()).unwrap();
        (g.clone(), TwistedSystem::scalar(g), w)
    }

    fn example(s: &Arc<TwistedSystem>) -> CrossSection {
        CrossSection::delta(s, &[0], 2.0)
            .sub(&CrossSection::delta(s, &[1], 0.5))
            .unwrap()
            .sub(&CrossSection::delta(s, &[-1], 0.5))
            .unwrap()
    }

    #[test]
    fn constants_on_z() {
        let (_, _, w) = z(1);
        let k = weight_constants(&w, 2.0, 400).unwrap();
        let b = PI2_OVER_3 - 1.0;
        assert!((k.b - b).abs() < 1e-4, "{}", k.b);
        assert!((k.a - 2.0 * b.powf(1.0 / 3.0)).abs() < 1e-4);
        assert!((k.a - 2.634).abs() < 5e-3 && (k.d - 5.268).abs() < 1e-2);
        assert_eq!(k.theta, 11.0 / 3.0);
        assert_eq!(k.delta, 1.0);
        assert_eq!(WeightConstants::from_parts(1.0, 3.0, 1.0).theta, 3.5);
        let one = WeightConstants::from_parts(2.0, 1.0, 1.0);
        assert_eq!((one.a, one.d), (2.0, 4.0));
        let fin = GroupModel::Cyclic { m: 5 };
        let wf = Weight::word(&fin, &fin.standard_generators()).unwrap();
        let kf = weight_constants(&wf, 2.0, 10).unwrap();
        assert!((kf.b - (1.0 + 2.0 / 4.0 + 2.0 / 9.0)).abs() < 1e-12);
        let (_, _, w2) = z(2);
        assert!(matches!(weight_constants(&w2, 1.0, 60), Err(Error::Diverged { .. })));
    }

    const PI2_OVER_3: f64 = std::f64::consts::PI * std::f64::consts::PI / 3.0;

    #[test]
    fn submult_examples() {
        let (_, s, w) = z(1);
        let r = weighted_submult_check(&CrossSection::unit(&s), &CrossSection::unit(&s), &w, 1.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (1.0, 2.0));
        assert!(r.pass);
        let (_, s2, w2) = z(2);
        let a = CrossSection::delta(&s2, &[500, 300], 1.0);
        let b = CrossSection::delta(&s2, &[200, 700], 1.0);
        let r = weighted_submult_check(&a, &b, &w2, 1.0).unwrap();
        assert!(r.pass && r.ratio > 0.99, "{}", r.ratio);
    }

    #[test]
    fn gendiff_examples() {
        let (_, s, w) = z(1);
        let k = weight_constants(&w, 2.0, 400).unwrap();
        let r = gendiff_check(&CrossSection::unit(&s), &w, &k).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!(r.rhs >= 1.0 && r.pass);
        let far = CrossSection::delta(&s, &[10_000], 0.37);
        assert!(gendiff_check(&far, &w, &k).unwrap().pass);
    }

    #[test]
    fn neumann_examples() {
        let (_, s, w) = z(1);
        let (inv, rep) = invert_neumann(&CrossSection::delta(&s, &[0], 2.0), 2.0, 0.5, &w, 1e-12, 100).unwrap();
        assert!((inv.coeff(&[0]).re - 0.5).abs() < 1e-15 && inv.len() == 1);
        assert!(rep.residual <= 1e-12);
        let phi = example(&s);
        let (inv, rep) = invert_neumann(&phi, 3.0, 1.0, &w, 1e-12, 5000).unwrap();
        assert!(rep.residual <= 1e-12);
        // 1/(2 − cos t) has coefficients r^{|n|}/√3 with r = 2 − √3.
        let r = 2.0 - 3f64.sqrt();
        for n in -20i64..=20 {
            let want = r.powi(n.abs() as i32) / 3f64.sqrt();
            assert!((inv.coeff(&[n]).re - want).abs() < 1e-10, "n={n}");
        }
        let bad = CrossSection::delta(&s, &[0], 2.0)
            .sub(&CrossSection::delta(&s, &[1], 1.0))
            .unwrap()
            .sub(&CrossSection::delta(&s, &[-1], 1.0))
            .unwrap();
        assert!(matches!(invert_neumann(&bad, 4.0, f64::INFINITY, &w, 1e-8, 100), Err(Error::NotInvertible { .. })));
        assert!(matches!(invert_neumann(&bad, 4.0, 1e6, &w, 1e-8, 100), Err(Error::NotInvertible { .. })));
        assert!(matches!(invert_neumann(&phi, 3.0, 1.0, &w, 1e-12, 10), Err(Error::SlowConvergence { .. })));
    }

    #[test]
    fn neumann_on_torus_and_finite() {
        let third = Rational::parse("1/3").unwrap();
        let s = TwistedSystem::nc_torus(third);
        let g = GroupModel::Zd { d: 2 };
        let w = Weight::word(&g, &g.standard_generators()).unwrap();
        let harper = [[1, 0], [-1, 0], [0, 1], [0, -1]]
            .iter()
            .fold(CrossSection::zero(&s), |acc, c| acc.add(&CrossSection::delta(&s, c, 1.0)).unwrap());
        let eps = 1.5;
        let top = crate::spectra::nc_torus_norm(&harper, 64).unwrap();
        let phi = CrossSection::unit(&s).scale_real(top + eps).sub(&harper).unwrap();
        // Spectrum of Φ is (top+ε) − [−top, top], so ‖Φ‖ = 2top+ε and ‖Φ⁻¹‖ = 1/ε.
        let (_, rep) = invert_neumann(&phi, 2.0 * top + eps, 1.0 / eps, &w, 1e-8, 20_000).unwrap();
        assert!(rep.residual <= 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for sys in test_systems().into_iter().filter(|s| s.group.is_finite()) {
            let x = CrossSection::random(&sys, 2, 3, false, &mut rng).scale_real(0.1);
            let phi = CrossSection::unit(&sys).add(&x).unwrap();
            let m = crate::spectra::left_multiplication_matrix(&phi, 4000).unwrap();
            let sv = m.singular_values();
            let (hi, lo) = (sv.max(), sv.min());
            let gw = Weight::word(&sys.group, &sys.group.standard_generators()).unwrap();
            let (inv, rep) = invert_neumann(&phi, hi, 1.0 / lo, &gw, 1e-10, 10_000).unwrap();
            assert!(rep.residual <= 1e-10);
            assert!(inv.convolve(&phi).unwrap().distance_l1(&CrossSection::unit(&sys)).unwrap() < 1e-9);
        }
    }

    #[test]
    fn control_bound_examples() {
        let (_, s, w) = z(1);
        let k = weight_constants(&w, 2.0, 400).unwrap();
        // Unitary case: only the k = 0 factor survives.
        let b = norm_control_bound(&k, 1.0, 1.0, 1.0, K_MAX).unwrap();
        let la0 = (2.0f64).ln();
        let hand = (1.0f64).ln() + (1.0 + 2.0 + 4.0 + 8.0f64).ln();
        assert_eq!(b.log_alpha[0], la0);
        assert!((b.log_value - hand).abs() < 1e-12 && b.status == BoundStatus::Finite);
        let phi = example(&s);
        let e = norm_e(&phi, &w).unwrap();
        assert_eq!(e, 4.0);
        let bound = norm_control_bound(&k, e, 3.0, 1.0, K_MAX).unwrap();
        assert!(bound.log_value.is_finite() && bound.status != BoundStatus::NotConverged);
        let (_, rep) = invert_neumann(&phi, 3.0, 1.0, &w, 1e-12, 5000).unwrap();
        assert!(rep.inverse_e_norm.ln() <= bound.log_value);
        let doubled = norm_control_bound(&k, 2.0 * e, 3.0, 1.0, K_MAX).unwrap();
        assert!(doubled.log_value > bound.log_value);
        let short = norm_control_bound(&k, e, 3.0, 1.0, 10).unwrap();
        assert_eq!(short.status, BoundStatus::NotConverged);
    }

    #[test]
    fn log_factor_is_stable() {
        for la in [-800.0, -5.0, 0.0, 3.0, 200.0] {
            let direct = (1.0 + f64::exp(la) + f64::exp(2.0 * la) + f64::exp(3.0 * la)).ln();
            if direct.is_finite() {
                assert!((log_factor(la) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }
        assert_eq!(log_factor(1e6), 3e6);
    }

    #[test]
    fn exist_diagnostic_reaches_radius() {
        let (_, s, _) = z(1);
        let d = exist_diagnostic(&example(&s), 32).unwrap();
        assert!((d.rho_l1 - 3.0).abs() < 1e-2);
        let last = d.rows.last().unwrap();
        assert!(last.truncation_l1_distance == 0.0);
        assert!(d.rows.iter().all(|r| r.tail_root > 0.0));
    }

    fn z1_section(s: &Arc<TwistedSystem>, coeffs: Vec<(i64, f64)>) -> CrossSection {
        let mut out = CrossSection::zero(s);
        for (x, c) in coeffs {
            out.insert(Element::new(&[x]), crate::bundle::Fiber::real(c));
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn submult_and_gendiff_hold_on_z(
            a in prop::collection::vec((-30i64..30, -2.0f64..2.0), 1..6),
            b in prop::collection::vec((-30i64..30, -2.0f64..2.0), 1..6),
        ) {
            let (_, s, w) = z(1);
            let (phi, psi) = (z1_section(&s, a), z1_section(&s, b));
            prop_assume!(phi.norm_l1() > 0.0 && psi.norm_l1() > 0.0);
            prop_assert!(weighted_submult_check(&phi, &psi, &w, 1.0).unwrap().pass);
            let k = WeightConstants::from_parts(2.0, PI2_OVER_3 - 1.0, 1.0);
            prop_assert!(gendiff_check(&phi, &w, &k).unwrap().pass);
        }

        #[test]
        fn control_bound_is_monotone(e in 1.0f64..10.0, op in 0.5f64..5.0, kappa in 1.0f64..4.0) {
            let k = WeightConstants::from_parts(2.0, PI2_OVER_3 - 1.0, 1.0);
            let op_inv = kappa / op;
            let base = norm_control_bound(&k, e, op, op_inv, 200).unwrap();
            let more_e = norm_control_bound(&k, 1.5 * e, op, op_inv, 200).unwrap();
            let more_inv = norm_control_bound(&k, e, op, 1.5 * op_inv, 200).unwrap();
            prop_assert!(more_e.log_value >= base.log_value);
            prop_assert!(more_inv.log_value >= base.log_value);
        }
    }
}
