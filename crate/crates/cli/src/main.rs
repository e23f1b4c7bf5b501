//! Command-line driver: one subcommand per experiment.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsdisc::harness::{emit_report, parse_config, run_with_threads, Experiment};

#[derive(Parser)]
#[command(name = "lsdisc", version, about = "Discretization of harmonic functions and tensors on covers of compact surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Residual of h(x) = Σ p(x,y) h(y) for the estimated base-level walk.
    FunctionDiscretization(RunArgs),
    /// μ-harmonicity of parallel tensors under the bundle-level groupoid walk.
    TensorDiscretization(RunArgs),
    /// Curvature, bracket spans, holonomy dimension and the scalarized Laplacian.
    Holonomy(RunArgs),
    /// Parallel transport around a geodesic triangle and along reversed paths.
    Transport(RunArgs),
    /// Exit distributions from balls against Poisson-kernel oracles.
    ExitSampling(RunArgs),
    /// Harnack constants, closed form and fitted.
    Harnack(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Flat,
    Hyperbolic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Flags override values from `--config`; unset values fall back to per-experiment defaults.
#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` file using the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model space [default: hyperbolic].
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Radius of the balls E_x.
    #[arg(long)]
    re: Option<f64>,
    /// Radius of the balls V_x.
    #[arg(long)]
    rv: Option<f64>,
    /// Diffusion time step.
    #[arg(long)]
    step: Option<f64>,
    /// Number of chains, exits or frames, depending on the experiment.
    #[arg(long)]
    runs: Option<u64>,
    /// Master seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Chains farther than this from the basepoint count as escaped.
    #[arg(long)]
    truncation: Option<f64>,
    /// Exit samples per start radius for bundle density fits.
    #[arg(long)]
    fit_samples: Option<u64>,
    /// Fourier modes per variable for bundle density fits.
    #[arg(long)]
    fit_modes: Option<u64>,
    /// Time step for bundle density fits.
    #[arg(long)]
    fit_step: Option<f64>,
    /// Report destination [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format [default: json].
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved configuration as a config file and exit.
    #[arg(long)]
    emit_config: bool,
}

impl RunArgs {
    fn overrides(&self, experiment: Experiment) -> Vec<(String, String)> {
        let mut o = vec![("experiment".to_string(), experiment.name().to_string())];
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        push("model", self.model.map(|m| match m {
            Model::Flat => "flat".into(),
            Model::Hyperbolic => "hyperbolic".into(),
        }));
        push("re", self.re.map(|v| v.to_string()));
        push("rv", self.rv.map(|v| v.to_string()));
        push("step", self.step.map(|v| v.to_string()));
        push("runs", self.runs.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("truncation", self.truncation.map(|v| v.to_string()));
        push("fit_samples", self.fit_samples.map(|v| v.to_string()));
        push("fit_modes", self.fit_modes.map(|v| v.to_string()));
        push("fit_step", self.fit_step.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("format", self.format.map(|f| match f {
            Format::Json => "json".into(),
            Format::Csv => "csv".into(),
        }));
        push("threads", self.threads.map(|v| v.to_string()));
        o
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::FunctionDiscretization(a) => (Experiment::FunctionDiscretization, a),
        Command::TensorDiscretization(a) => (Experiment::TensorDiscretization, a),
        Command::Holonomy(a) => (Experiment::Holonomy, a),
        Command::Transport(a) => (Experiment::Transport, a),
        Command::ExitSampling(a) => (Experiment::ExitSampling, a),
        Command::Harnack(a) => (Experiment::Harnack, a),
    };
    let settings = match parse_config(args.config.as_deref(), &args.overrides(experiment)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.emit_config {
        print!("{}", settings.config.emit());
        return ExitCode::SUCCESS;
    }
    let report = match run_with_threads(&settings.config, settings.threads) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = emit_report(&report, settings.format, settings.out.as_deref()) {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(3);
    }
    for q in report.failures() {
        eprintln!("FAIL {}: {} (budget {:?}, {})", q.name, q.value, q.budget, q.relation.as_str());
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
