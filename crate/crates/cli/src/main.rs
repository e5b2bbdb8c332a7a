#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lef_core::ModelKind;

mod commands;
mod config;

use commands::{Artifact, CliError};
use config::{AlphaRange, Format, OutputSpec, PartialConfig, PartialModel, SweepAxis};

/// Radial solutions of Lane-Emden-Fowler equations on rotationally symmetric manifolds.
#[derive(Parser, Debug)]
#[command(name = "lef-models", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate ψ, its log-derivative, sectional curvatures and geodesic ball
    /// volumes of the model at the given radii.
    ModelInfo,
    /// Check the structural hypotheses on ψ (convexity-type, log-concavity
    /// and growth conditions) numerically on a window.
    Hypotheses,
    /// Integrate the radial Cauchy problem u'' + (n-1)(ψ'/ψ)u' + |u|^{p-1}u = 0,
    /// u(0) = α, and report zeros of u and u' as events.
    Solve,
    /// Integrate v = ∂u/∂α; a zero of v signals intersecting solutions.
    Linearize,
    /// Energy and Pohozaev-type functionals, the convexity and G_λ properties,
    /// and the weighted Sobolev quotient.
    Functionals,
    /// Bottom of the spectrum: λ₁ on balls, λ₁ of the manifold, the
    /// volume-based lower bound and μ₁ of the linearized operator.
    Spectrum,
    /// Decide whether u_α is stable: μ₁(B_R) stays nonnegative as R grows.
    Stability,
    /// Bisect for the largest α whose solution is stable.
    Alpha0,
    /// Bisect for the threshold separating solutions with a zero from
    /// positive ones, and measure the ground state's decay.
    Groundstate,
    /// Compare the tail of u_α with the predicted slow or fast decay.
    Asymptotics,
    /// Check that stable solutions are ordered and never intersect.
    Ordering,
    /// Regime table: stability, ordering and decay for a set of α.
    Table,
    /// Run stability over many α, or λ₁/μ₁ over many radii, in parallel.
    Sweep,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Euclidean,
    Hyperbolic,
    ExpPower,
    Custom,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Euclidean => ModelKind::Euclidean,
            KindArg::Hyperbolic => ModelKind::Hyperbolic,
            KindArg::ExpPower => ModelKind::ExpPower,
            KindArg::Custom => ModelKind::Custom,
        }
    }
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    model: Option<KindArg>,
    /// Dimension.
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Exponent γ of the `exp-power` model.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Expression for ψ(r) with the `custom` model.
    #[arg(long, global = true)]
    expr: Option<String>,
    /// Nonlinearity exponent, p > 1.
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Initial value u(0).
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Comma-separated list of α.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    alphas: Option<Vec<f64>>,
    /// `lo:hi:count` or `lo:hi:count:log`.
    #[arg(long, global = true, value_parser = parse_range)]
    alpha_range: Option<AlphaRange>,
    #[arg(long, global = true)]
    r_max: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    grid_count: Option<usize>,
    #[arg(long, global = true)]
    r_horizon: Option<f64>,
    #[arg(long, global = true)]
    tol_alpha: Option<f64>,
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Comma-separated increasing radii.
    #[arg(long, global = true, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// `lo,hi`.
    #[arg(long, global = true, value_delimiter = ',', num_args = 2)]
    window: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum)]
    over: Option<SweepAxis>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the artifact here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, env = "LEF_MODELS_THREADS")]
    threads: Option<usize>,
}

fn parse_range(s: &str) -> Result<AlphaRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || format!("expected lo:hi:count[:log], got `{s}`");
    if !(3..=4).contains(&parts.len()) {
        return Err(bad());
    }
    let log = match parts.get(3) {
        None => false,
        Some(&"log") => true,
        Some(_) => return Err(bad()),
    };
    Ok(AlphaRange {
        lo: parts[0].parse().map_err(|_| bad())?,
        hi: parts[1].parse().map_err(|_| bad())?,
        count: parts[2].parse().map_err(|_| bad())?,
        log,
    })
}

impl Flags {
    fn partial(&self) -> PartialConfig {
        let model = if self.model.is_some() || self.n.is_some() || self.gamma.is_some() || self.expr.is_some() {
            Some(PartialModel {
                kind: self.model.map(Into::into),
                n: self.n,
                gamma: self.gamma,
                expr: self.expr.clone(),
            })
        } else {
            None
        };
        let output = if self.format.is_some() || self.output.is_some() {
            Some(OutputSpec {
                format: self.format,
                path: self.output.clone(),
            })
        } else {
            None
        };
        PartialConfig {
            schema_version: None,
            model,
            p: self.p,
            alpha: self.alpha,
            alphas: self.alphas.clone(),
            alpha_range: self.alpha_range.clone(),
            r_max: self.r_max,
            tol: self.tol,
            grid_count: self.grid_count,
            r_horizon: self.r_horizon,
            tol_alpha: self.tol_alpha,
            radius: self.radius,
            radii: self.radii.clone(),
            window: self.window.as_ref().map(|w| [w[0], w[1]]),
            sweep_over: self.over,
            threads: self.threads,
            output,
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ModelInfo => "model-info",
            Command::Hypotheses => "hypotheses",
            Command::Solve => "solve",
            Command::Linearize => "linearize",
            Command::Functionals => "functionals",
            Command::Spectrum => "spectrum",
            Command::Stability => "stability",
            Command::Alpha0 => "alpha0",
            Command::Groundstate => "groundstate",
            Command::Asymptotics => "asymptotics",
            Command::Ordering => "ordering",
            Command::Table => "table",
            Command::Sweep => "sweep",
        }
    }

    fn default_format(&self) -> Format {
        match self {
            Command::Solve | Command::Linearize | Command::Sweep => Format::Csv,
            Command::Table => Format::Text,
            _ => Format::Json,
        }
    }
}

fn write_artifact(art: &Artifact, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        None => print!("{}", art.primary),
        Some(p) => {
            std::fs::write(p, &art.primary)?;
            for (ext, body) in &art.extras {
                std::fs::write(p.with_extension(ext), body)?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.flags.config {
        Some(p) => config::load_file(p)?,
        None => PartialConfig::default(),
    };
    let merged = file.overlay(cli.flags.partial());
    if let Some(t) = merged.threads {
        if t == 0 {
            return Err(config::FieldError {
                field: "threads",
                message: "must be at least 1".into(),
            }
            .into());
        }
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let cfg = merged.resolve(cli.command.name(), cli.command.default_format())?;
    let art = match cli.command {
        Command::ModelInfo => commands::model_info(&cfg),
        Command::Hypotheses => commands::hypotheses(&cfg),
        Command::Solve => commands::solve(&cfg),
        Command::Linearize => commands::linearize(&cfg),
        Command::Functionals => commands::functionals(&cfg),
        Command::Spectrum => commands::spectrum(&cfg),
        Command::Stability => commands::stability(&cfg),
        Command::Alpha0 => commands::alpha0(&cfg),
        Command::Groundstate => commands::groundstate(&cfg),
        Command::Asymptotics => commands::asymptotics(&cfg),
        Command::Ordering => commands::ordering(&cfg),
        Command::Table => commands::table(&cfg),
        Command::Sweep => commands::sweep(&cfg),
    }?;
    write_artifact(&art, cfg.path.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lef-models: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
