use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use fellband::calculus::FunctionSpec;
use fellband::cli::{exit_code, run, Emit, ExperimentConfig, Operation, PhiSpec};
use fellband::groups::{MSequence, WeightSpec};
use fellband::sections::SectionLiteral;
use fellband::{Error, Result};

/// Experiments on weighted twisted convolution algebras.
///
/// Exit codes: 0 pass, 2 tolerance or check failure, 3 element budget, 4 configuration.
#[derive(Parser, Debug)]
#[command(name = "fellband", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on enumerated group elements or matrix dimension.
    #[arg(long, global = true)]
    budget_elems: Option<usize>,
    /// Write artifacts here instead of standard output.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Artifact format.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    emit: Option<String>,
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

/// Options shared by the operations that build a section.
#[derive(Args, Debug, Default)]
struct Setup {
    /// Zd:d, Heis3, Cyclic:m, DirectSumZ2 or (A)x(B).
    #[arg(long)]
    group: Option<String>,
    /// none, nc_torus:p/q, inner_twisted:k or perm_diag:k.
    #[arg(long)]
    twist: Option<String>,
    /// laplacian, harper, lattice:a,b, random:r,n, or @file.json with a section literal.
    #[arg(long)]
    phi: Option<String>,
    /// trivial, word, word_power:s, locally_finite:linear|pow2.
    #[arg(long)]
    weight: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the property and oracle suite and write a pass/fail report.
    Verify {
        #[arg(long)]
        suite: Option<String>,
    },
    /// ‖u(tΦ)‖₁ and ‖u(tΦ)‖_{1,ν} on a log grid ending at --tmax.
    Growth {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// f(Φ) by Fourier quadrature with an error budget.
    Calculus {
        #[command(flatten)]
        setup: Setup,
        /// gaussian:c,w, bump:c,r, raised_cosine:c,r or poly_bump:c,r:a0;a1;...
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Neumann inverse with the norm-control bound.
    Invert {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Spectrum from the exact or symbol oracle.
    Spectrum {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Integrability of ν^{-p} and sampled weight axioms.
    Weights {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        n_max: Option<u32>,
        #[arg(long)]
        pairs: Option<usize>,
    },
}

fn parse_weight(s: &str) -> Result<WeightSpec> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    match (kind, arg) {
        ("trivial", "") => Ok(WeightSpec::Trivial),
        ("word", "") => Ok(WeightSpec::Word),
        ("word_power", a) => a
            .parse()
            .map(|s| WeightSpec::WordPower { s })
            .map_err(|_| Error::Config(format!("bad weight power in {s:?}"))),
        ("locally_finite", "linear") => Ok(WeightSpec::LocallyFinite { m: MSequence::Linear }),
        ("locally_finite", "pow2") => Ok(WeightSpec::LocallyFinite { m: MSequence::PowerOfTwo }),
        _ => Err(Error::Config(format!("unknown weight {s:?}"))),
    }
}

fn parse_phi(s: &str) -> Result<PhiSpec> {
    match s.strip_prefix('@') {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
            let lit: SectionLiteral = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path}: {e}")))?;
            Ok(PhiSpec::Literal(lit))
        }
        None => Ok(PhiSpec::Preset(s.to_string())),
    }
}

impl Setup {
    fn apply(self, c: &mut ExperimentConfig) -> Result<()> {
        c.group = self.group;
        c.twist = self.twist;
        c.phi = self.phi.as_deref().map(parse_phi).transpose()?;
        c.weight = self.weight.as_deref().map(parse_weight).transpose()?;
        Ok(())
    }
}

fn flags(cli: Cli) -> Result<(Option<PathBuf>, ExperimentConfig)> {
    let g = cli.global;
    let mut c = ExperimentConfig {
        seed: g.seed,
        budget_elems: g.budget_elems,
        out_dir: g.out_dir,
        emit: g.emit.as_deref().map(str::parse::<Emit>).transpose()?,
        ..Default::default()
    };
    match cli.command {
        Command::Verify { suite } => {
            c.operation = Some(Operation::Verify);
            c.suite = suite;
        }
        Command::Growth { setup, tmax, points } => {
            c.operation = Some(Operation::Growth);
            setup.apply(&mut c)?;
            c.t_max = tmax;
            c.points = points;
        }
        Command::Calculus {
            setup,
            function,
            tol,
            tmax,
        } => {
            c.operation = Some(Operation::Calculus);
            setup.apply(&mut c)?;
            if let Some(f) = &function {
                FunctionSpec::parse(f)?;
            }
            c.function = function;
            c.tol = tol;
            c.t_max = tmax;
        }
        Command::Invert { setup, p, tol } => {
            c.operation = Some(Operation::Invert);
            setup.apply(&mut c)?;
            c.p = p;
            c.tol = tol;
        }
        Command::Spectrum { setup, grid } => {
            c.operation = Some(Operation::Spectrum);
            setup.apply(&mut c)?;
            c.grid = grid;
        }
        Command::Weights { setup, p, n_max, pairs } => {
            c.operation = Some(Operation::Weights);
            setup.apply(&mut c)?;
            c.p = p;
            c.n_max = n_max;
            c.pairs = pairs;
        }
    }
    Ok((g.config, c))
}

fn main_inner(cli: Cli) -> Result<bool> {
    let (config_path, from_flags) = flags(cli)?;
    let cfg = match config_path {
        Some(p) => {
            let base = ExperimentConfig::from_file(&p)?;
            if base.operation.is_some() && base.operation != from_flags.operation {
                return Err(Error::Config("config operation disagrees with the subcommand".into()));
            }
            base.merge(from_flags)
        }
        None => from_flags,
    };
    let outcome = run(&cfg)?;
    let stdout = outcome.write(&cfg)?;
    print!("{stdout}");
    eprintln!("{}", outcome.summary);
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("fellband: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
