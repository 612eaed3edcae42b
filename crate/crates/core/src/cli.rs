//! Experiment configuration and the runner behind the `fellband` binary.
//!
//! A run produces named artifacts (JSON always, CSV where a table makes
//! sense) plus a one-line summary. Nothing in an artifact depends on wall
//! time or hash order, so equal configs give equal bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::bundle::{Rational, TwistedSystem, Unitaries};
use crate::calculus::{dixmier_baillet_best_effort, growth_profile_op, FunctionSpec, QuadratureSpec, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::groups::{
    make_weight, weight_axiom_check, weight_integrability, GroupModel, Weight, WeightSpec, DEFAULT_BUDGET,
};
use crate::inversion::{invert_neumann, norm_control_bound, weight_constants, BoundStatus, K_MAX};
use crate::norms::{norm_e, opnorm_auto, DEFAULT_ITERS, REGULAR_REP_CAP};
use crate::sections::{CrossSection, SectionLiteral};
use crate::spectra::{
    finite_group_spectrum, fourier_division, left_multiplication_matrix, nc_torus_symbol_spectrum, zd_symbol_spectrum,
    SpectrumEstimate, DIVISION_GRID,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Verify,
    Growth,
    Calculus,
    Invert,
    Spectrum,
    Weights,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Csv,
    #[default]
    Json,
}

impl FromStr for Emit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Emit::Csv),
            "json" => Ok(Emit::Json),
            _ => Err(Error::Config(format!("--emit must be csv or json, got {s:?}"))),
        }
    }
}

/// A section given either by preset name or as a literal point list.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiSpec {
    Preset(String),
    Literal(SectionLiteral),
}

/// Everything a run needs. Unset fields take per-operation defaults; a
/// config file and command-line flags are merged with flags winning.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operation: Option<Operation>,
    /// `Zd:2`, `Heis3`, `Cyclic:6`, `DirectSumZ2`, `(A)x(B)`.
    pub group: Option<String>,
    /// `none`, `nc_torus:p/q`, `inner_twisted:k`, `perm_diag:k`.
    pub twist: Option<String>,
    pub weight: Option<WeightSpec>,
    pub p: Option<f64>,
    pub phi: Option<PhiSpec>,
    /// `gaussian:c,w`, `bump:c,r`, `raised_cosine:c,r`, `poly_bump:c,r:a0;a1;…`.
    pub function: Option<String>,
    pub tol: Option<f64>,
    pub t_max: Option<f64>,
    pub points: Option<usize>,
    pub n_max: Option<u32>,
    pub pairs: Option<usize>,
    pub grid: Option<usize>,
    pub suite: Option<String>,
    pub budget_elems: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub emit: Option<Emit>,
    pub seed: Option<u64>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(mut self, other: ExperimentConfig) -> Self {
        merge_fields!(self, other; operation, group, twist, weight, p, phi, function, tol, t_max, points,
            n_max, pairs, grid, suite, budget_elems, out_dir, emit, seed);
        self
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn budget(&self) -> usize {
        self.budget_elems.unwrap_or(DEFAULT_BUDGET)
    }

    fn group(&self) -> Result<GroupModel> {
        match (&self.group, self.twist.as_deref()) {
            (Some(g), _) => GroupModel::parse(g),
            (None, Some(t)) if t.starts_with("nc_torus") => Ok(GroupModel::Zd { d: 2 }),
            (None, _) => Ok(GroupModel::Zd { d: 1 }),
        }
    }

    pub fn system(&self) -> Result<Arc<TwistedSystem>> {
        let g = self.group()?;
        let twist = self.twist.as_deref().unwrap_or("none");
        let cfg = |e: Error| Error::Config(e.to_string());
        let (kind, arg) = twist.split_once(':').unwrap_or((twist, ""));
        let k = || arg.parse::<usize>().map_err(|_| Error::Config(format!("bad fiber dimension in {twist:?}")));
        match kind {
            "none" => Ok(TwistedSystem::scalar(g)),
            "nc_torus" => {
                if g != (GroupModel::Zd { d: 2 }) {
                    return Err(Error::Config("nc_torus twist needs group Zd:2".into()));
                }
                Ok(TwistedSystem::nc_torus(Rational::parse(arg).map_err(cfg)?))
            }
            "inner_twisted" => {
                let table = Unitaries::random_table(&g, k()?, self.seed()).map_err(cfg)?;
                TwistedSystem::inner(g, table, true).map_err(cfg)
            }
            "perm_diag" => TwistedSystem::permutation_diagonal(g, k()?).map_err(cfg),
            _ => Err(Error::Config(format!("unknown twist {twist:?}"))),
        }
    }

    pub fn weight(&self, g: &GroupModel) -> Result<Weight> {
        let spec = self.weight.clone().unwrap_or(WeightSpec::Word);
        make_weight(g, &g.standard_generators(), &spec).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn section(&self, sys: &Arc<TwistedSystem>, default: &str) -> Result<CrossSection> {
        match &self.phi {
            Some(PhiSpec::Literal(l)) => l.to_section(sys).map_err(|e| Error::Config(e.to_string())),
            Some(PhiSpec::Preset(p)) => preset(sys, p, self.seed()),
            None => preset(sys, default, self.seed()),
        }
    }
}

/// `laplacian`, `harper`, `lattice:a,b` (`aδ_e + bΣ_sδ_s`) or `random:r,n`.
pub fn preset(sys: &Arc<TwistedSystem>, name: &str, seed: u64) -> Result<CrossSection> {
    let g = &sys.group;
    let bad = || Error::Config(format!("unknown section preset {name:?}"));
    let nums = |s: &str| -> Result<Vec<f64>> { s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect() };
    let (kind, arg) = name.split_once(':').unwrap_or((name, ""));
    let (a, b) = match kind {
        "laplacian" => (0.0, 1.0),
        "harper" => {
            if *g != (GroupModel::Zd { d: 2 }) {
                return Err(Error::Config("harper needs group Zd:2".into()));
            }
            (0.0, 1.0)
        }
        "lattice" => match nums(arg)?.as_slice() {
            [a, b] => (*a, *b),
            _ => return Err(bad()),
        },
        "random" => {
            let v = nums(arg)?;
            let [r, n] = v.as_slice() else { return Err(bad()) };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            return Ok(CrossSection::random(sys, *r as u32, *n as usize, true, &mut rng));
        }
        _ => return Err(bad()),
    };
    let gens = g.standard_generators();
    let moves: BTreeSet<_> = gens.moves(g).flat_map(|s| [s.clone(), g.inverse(s)]).collect();
    let mut phi = CrossSection::delta(sys, g.identity().coords(), a);
    for s in moves {
        phi = phi.add(&CrossSection::delta(sys, s.coords(), b))?;
    }
    phi.prune(0.0);
    Ok(phi)
}

/// A named output. `csv` is absent for operations without a natural table.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub json: Value,
    pub csv: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// False when a tolerance or property check failed.
    pub pass: bool,
    pub summary: String,
}

impl Outcome {
    /// Writes each artifact to `out_dir/<name>.<ext>`, or concatenates them
    /// on the returned string when no directory is configured.
    pub fn write(&self, cfg: &ExperimentConfig) -> Result<String> {
        let emit = cfg.emit.unwrap_or_default();
        let mut stdout = String::new();
        if let Some(dir) = &cfg.out_dir {
            std::fs::create_dir_all(dir)?;
        }
        for a in &self.artifacts {
            let (body, ext) = match (emit, &a.csv) {
                (Emit::Csv, Some(c)) => (c.clone(), "csv"),
                _ => (serde_json::to_string_pretty(&a.json).expect("serializable") + "\n", "json"),
            };
            match &cfg.out_dir {
                Some(dir) => std::fs::write(dir.join(format!("{}.{ext}", a.name)), body)?,
                None => {
                    if !stdout.is_empty() {
                        stdout.push('\n');
                    }
                    stdout.push_str(&body);
                }
            }
        }
        Ok(stdout)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.operation.ok_or_else(|| Error::Config("no operation selected".into()))? {
        Operation::Verify => run_verify(cfg),
        Operation::Growth => run_growth(cfg),
        Operation::Calculus => run_calculus(cfg),
        Operation::Invert => run_invert(cfg),
        Operation::Spectrum => run_spectrum(cfg),
        Operation::Weights => run_weights(cfg),
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn run_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let suite = cfg.suite.as_deref().unwrap_or("core");
    let report = crate::verify::run_suite(suite, cfg.seed())?;
    let mut csv = String::from("id,name,pass,cases,failures,metric,worst\n");
    for c in &report.criteria {
        writeln!(csv, "{},\"{}\",{},{},{},\"{}\",{:e}", c.id, c.name, c.pass, c.cases, c.failures, c.metric, c.worst).unwrap();
    }
    let passed = report.criteria.iter().filter(|c| c.pass).count();
    Ok(Outcome {
        summary: format!("verify {suite}: {passed}/{} criteria pass", report.criteria.len()),
        pass: report.pass,
        artifacts: vec![Artifact {
            name: "verify".into(),
            json: to_json(&report),
            csv: Some(csv),
        }],
    })
}

fn run_growth(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let phi = cfg.section(&sys, "laplacian")?;
    let t_max = cfg.t_max.unwrap_or(64.0);
    let t_min = t_max / 8.0;
    let n = cfg.points.unwrap_or(13).max(2);
    if !(t_max > 0.0) {
        return Err(Error::Config("t_max must be positive".into()));
    }
    let grid: Vec<f64> = (0..n).map(|i| t_min * 8f64.powf(i as f64 / (n - 1) as f64)).collect();
    let nu = cfg.weight(&sys.group)?;
    let p = growth_profile_op(&phi, &grid, Some(&nu))?;
    let slope = crate::verify::loglog_fit(&grid, &p.norm_l1);
    let weighted = p.norm_l1nu.clone().expect("weight given");
    let slope_w = crate::verify::loglog_fit(&grid, &weighted);
    let c = grid
        .iter()
        .zip(&p.norm_l1)
        .map(|(t, v)| v / (1.0 + t).powf(p.exponent))
        .fold(0.0, f64::max);
    let mut csv = String::from("t,norm_l1,norm_l1nu,bound_t_pow,error_budget,method,slope,slope_weighted\n");
    for i in 0..n {
        let bound = c * (1.0 + grid[i]).powf(p.exponent);
        writeln!(
            csv,
            "{:?},{:?},{:?},{:?},{:e},stepped_exp,{:?},{:?}",
            grid[i], p.norm_l1[i], weighted[i], bound, p.error[i], slope, slope_w
        )
        .unwrap();
    }
    let json = json!({
        "group": sys.group.to_string(),
        "profile": p,
        "slope_fit_range": [t_min, t_max],
        "slope": slope,
        "slope_weighted": slope_w,
        "bound_constant": c,
        "method": "stepped_exp",
    });
    Ok(Outcome {
        summary: format!("growth: slope {slope:.4} (exponent {}), weighted slope {slope_w:.4}", p.exponent),
        pass: true,
        artifacts: vec![Artifact {
            name: "growth".into(),
            json,
            csv: Some(csv),
        }],
    })
}

fn coeff_csv(out: &mut String, label: &str, phi: &CrossSection, method: &str, budget: f64) {
    for (x, a) in phi.iter() {
        let point: Vec<String> = x.coords().iter().map(|c| c.to_string()).collect();
        for i in 0..a.dim() {
            for j in 0..a.dim() {
                let v = a.get(i, j);
                writeln!(out, "{label}{},{i},{j},{:?},{:?},{method},{budget:e}", point.join(";"), v.re, v.im).unwrap();
            }
        }
    }
}

fn run_calculus(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let phi = cfg.section(&sys, "laplacian")?;
    let f = FunctionSpec::parse(cfg.function.as_deref().unwrap_or("gaussian:0,1"))?;
    let quad = QuadratureSpec {
        t_max: cfg.t_max,
        dt: None,
        tol: cfg.tol.unwrap_or(DEFAULT_TOL),
        growth: None,
    };
    let r = match dixmier_baillet_best_effort(&f, &phi, &quad) {
        Err(Error::InvalidSpec(m)) => return Err(Error::Config(m)),
        other => other?,
    };
    let total = r.budget.total;
    let mut csv = String::from("point,row,col,re,im,method,error_budget\n");
    writeln!(csv, "unit,0,0,{:?},{:?},fourier_quadrature,{total:e}", r.value.scalar.re, r.value.scalar.im).unwrap();
    coeff_csv(&mut csv, "", &r.value.section, "fourier_quadrature", total);
    let json = json!({
        "function": f,
        "tol": quad.tol,
        "met": r.met,
        "budget": r.budget,
        "t_max": r.t_max,
        "dt": r.dt,
        "nodes": r.nodes,
        "c_hat": r.c_hat,
        "n_hat": r.n_hat,
        "scalar": [r.value.scalar.re, r.value.scalar.im],
        "section": r.value.section.to_literal(),
        "growth": r.growth,
        "method": "fourier_quadrature",
    });
    Ok(Outcome {
        summary: format!("calculus: budget {total:.3e} against tol {:.1e} ({} nodes, T = {:.3})", quad.tol, r.nodes, r.t_max),
        pass: r.met,
        artifacts: vec![Artifact {
            name: "calculus".into(),
            json,
            csv: Some(csv),
        }],
    })
}

/// `(‖Φ‖, ‖Φ⁻¹‖)` in the C*-norm from an exact or symbol oracle.
fn operator_norms(phi: &CrossSection, cap: usize) -> Result<(f64, f64, &'static str)> {
    let g = phi.group();
    if g.is_finite() {
        let sv = left_multiplication_matrix(phi, cap)?.singular_values();
        return Ok((sv.max(), 1.0 / sv.min(), "finite_exact"));
    }
    if matches!(g, GroupModel::Zd { .. }) && phi.k() == 1 && phi.system().trivial_twist() {
        let spec = zd_symbol_spectrum(phi, 4096)?;
        let lo = match spec.hull {
            Some((lo, hi)) if lo > 0.0 || hi < 0.0 => lo.abs().min(hi.abs()),
            Some(_) => 0.0,
            None => spec.values.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min),
        };
        return Ok((spec.radius, 1.0 / lo, "symbol"));
    }
    Err(Error::Config(format!("no operator-norm oracle for inversion on {g}")))
}

fn run_invert(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let phi = cfg.section(&sys, "lattice:2,-0.5")?;
    let nu = cfg.weight(&sys.group)?;
    let p = cfg.p.unwrap_or(2.0);
    let tol = cfg.tol.unwrap_or(1e-12);
    let (op_phi, op_inv, method) = operator_norms(&phi, cfg.budget().min(REGULAR_REP_CAP))?;
    let (inv, rep) = invert_neumann(&phi, op_phi, op_inv, &nu, tol, 200_000)?;
    let k = weight_constants(&nu, p, cfg.n_max.unwrap_or(10_000))?;
    let e_norm = norm_e(&phi, &nu)?;
    let bound = norm_control_bound(&k, e_norm, op_phi, op_inv, K_MAX)?;
    let log_measured = rep.inverse_e_norm.ln();
    let within = bound.status != BoundStatus::NotConverged && log_measured <= bound.log_value;
    let oracle_error = if sys.group == (GroupModel::Zd { d: 1 }) && sys.k == 1 && sys.trivial_twist() {
        let oracle = fourier_division(&phi, DIVISION_GRID)?;
        Some(oracle.iter().map(|(n, c)| (inv.coeff(&[*n]) - c).norm()).fold(0.0, f64::max))
    } else {
        None
    };
    let mut csv = String::from("point,row,col,re,im,method,error_budget\n");
    coeff_csv(&mut csv, "", &inv, "neumann", rep.error_budget);
    let json = json!({
        "op_norm_method": method,
        "op_phi": op_phi,
        "op_inv": op_inv,
        "e_norm": e_norm,
        "neumann": rep,
        "constants": k,
        "bound": bound,
        "log_measured": log_measured,
        "within_bound": within,
        "fourier_division_error": oracle_error,
        "inverse": inv.to_literal(),
    });
    let pass = within && rep.residual <= tol && oracle_error.is_none_or(|e| e <= 1e-8);
    Ok(Outcome {
        summary: format!(
            "invert: ‖Φ⁻¹‖_E = {:.6}, ln bound {:.4e} ({:?}), residual {:.2e}",
            rep.inverse_e_norm, bound.log_value, bound.status, rep.residual
        ),
        pass,
        artifacts: vec![Artifact {
            name: "invert".into(),
            json,
            csv: Some(csv),
        }],
    })
}

fn run_spectrum(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let phi = cfg.section(&sys, "laplacian")?;
    let g = &sys.group;
    let est: SpectrumEstimate = if g.is_finite() {
        finite_group_spectrum(&phi, cfg.budget().min(REGULAR_REP_CAP))?
    } else if let Some(theta) = sys.cocycle_theta() {
        nc_torus_symbol_spectrum(theta, &phi, cfg.grid.unwrap_or(64))?
    } else if matches!(g, GroupModel::Zd { .. }) && sys.k == 1 && sys.trivial_twist() {
        zd_symbol_spectrum(&phi, cfg.grid.unwrap_or(256))?
    } else {
        let rep = opnorm_auto(&phi, cfg.tol.unwrap_or(1e-6), DEFAULT_ITERS, cfg.budget())?;
        let json = json!({ "values": [], "hull": null, "opnorm": rep });
        return Ok(Outcome {
            summary: format!("spectrum: no exact oracle on {g}; ‖λ(Φ)‖ ≥ {:.6}", rep.value),
            pass: true,
            artifacts: vec![Artifact {
                name: "spectrum".into(),
                json,
                csv: None,
            }],
        });
    };
    let method = match &est.method {
        crate::spectra::SpectrumMethod::FiniteExact => "finite_exact".to_string(),
        crate::spectra::SpectrumMethod::SymbolGrid { resolution } => format!("symbol_grid_{resolution}"),
        crate::spectra::SpectrumMethod::TruncatedOperator { radius } => format!("truncated_{radius}"),
    };
    let mut csv = String::from("index,re,im,method,error_budget\n");
    for (i, z) in est.values.iter().enumerate() {
        writeln!(csv, "{i},{:?},{:?},{method},{:e}", z.re, z.im, est.tolerance).unwrap();
    }
    let mut artifacts = vec![Artifact {
        name: "spectrum".into(),
        json: to_json(&est),
        csv: Some(csv),
    }];
    let summary = match est.hull {
        Some((lo, hi)) => {
            artifacts.push(Artifact {
                name: "spectrum_hull".into(),
                json: json!({ "lo": lo, "hi": hi, "method": method, "error_budget": est.tolerance }),
                csv: Some(format!("lo,hi,method,error_budget\n{lo:?},{hi:?},{method},{:e}\n", est.tolerance)),
            });
            format!("spectrum: hull [{lo:.6}, {hi:.6}] ({method})")
        }
        None => format!("spectrum: {} values, radius {:.6} ({method})", est.values.len(), est.radius),
    };
    Ok(Outcome {
        summary,
        pass: true,
        artifacts,
    })
}

fn run_weights(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = cfg.group()?;
    let nu = cfg.weight(&g)?;
    let p = cfg.p.unwrap_or(g.growth_order() as f64 + 2.0);
    let n_max = cfg.n_max.unwrap_or(match g.growth_order() {
        0 | 1 => 2000,
        2 => 400,
        _ => 40,
    });
    let integ = weight_integrability(&nu, p, n_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let axioms = weight_axiom_check(&nu, &g, &g.standard_generators(), 12, cfg.pairs.unwrap_or(1000), &mut rng)?;
    let constants = if integ.converged {
        Some(weight_constants(&nu, p, n_max)?)
    } else {
        None
    };
    let b = constants.as_ref().map(|k| k.b);
    let csv = format!(
        "p,partial,tail_estimate,converged,shell_decay,b,c,method,error_budget\n{p:?},{:?},{:?},{},{:?},{},{},shell_sums,{:e}\n",
        integ.partial,
        integ.tail_estimate,
        integ.converged,
        integ.shell_decay,
        b.map(|v| format!("{v:?}")).unwrap_or_default(),
        nu.poly_constant.map(|v| format!("{v:?}")).unwrap_or_default(),
        integ.tail_estimate,
    );
    let pass = integ.converged && axioms.violations == 0;
    Ok(Outcome {
        summary: format!(
            "weights on {g}: Σν^-{p} ≈ {:.6} ({}), axiom violations {}",
            integ.partial + integ.tail_estimate,
            if integ.converged { "converged" } else { "not converged" },
            axioms.violations
        ),
        pass,
        artifacts: vec![Artifact {
            name: "weights".into(),
            json: json!({ "group": g.to_string(), "kind": nu.kind, "integrability": integ, "axioms": axioms, "constants": constants }),
            csv: Some(csv),
        }],
    })
}

/// Process exit code for an error: 2 tolerance, 3 budget, 4 configuration.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BudgetExceeded { .. } => 3,
        Error::Config(_) | Error::InvalidSpec(_) | Error::Io(_) => 4,
        _ => 2,
    }
}
