use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qhalab_cli::{commands, CommandError, ExperimentConfig, Outcome};

#[derive(Parser)]
#[command(name = "qhalab", version, about = "Operator-translate frames and phase-space numerics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a frame plan and check its generator spectrum.
    FrameBuild(Flags),
    /// Check a stored plan: condition 2, residual spectra, bound, Neumann.
    FrameVerify(Flags),
    /// Transform identities and refinement studies on N and 2N grids.
    QhaVerify(Flags),
    /// Support test, span membership and the orthogonal witness.
    T2(Flags),
    /// Least-squares residuals against perturbed integer translates.
    Perturbed(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    radius: Option<u64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    grid_l: Option<f64>,
    #[arg(long)]
    decay_a: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Directory for the report and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tolerance_scale: Option<f64>,
    /// Plan file for frame-verify.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Heisenberg shift `X,W` for qha-verify.
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<String>,
}

impl Flags {
    fn resolve(self) -> Result<ExperimentConfig, CommandError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CommandError::Malformed(format!("cannot read config {}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        Ok(file.overlay(ExperimentConfig {
            p: self.p,
            dim: self.dim,
            radius: self.radius,
            grid_n: self.grid_n,
            grid_l: self.grid_l,
            decay_a: self.decay_a,
            seed: self.seed,
            trials: self.trials,
            out: self.out,
            tolerance_scale: self.tolerance_scale,
            plan: self.plan,
            shift: self.shift,
        }))
    }
}

type Runner = fn(&ExperimentConfig) -> Result<Outcome, CommandError>;

fn run(cli: Cli) -> Result<Outcome, CommandError> {
    let (flags, command): (Flags, Runner) = match cli.command {
        Command::FrameBuild(f) => (f, commands::frame_build),
        Command::FrameVerify(f) => (f, commands::frame_verify),
        Command::QhaVerify(f) => (f, commands::qha_verify),
        Command::T2(f) => (f, commands::t2),
        Command::Perturbed(f) => (f, commands::perturbed),
    };
    let cfg = flags.resolve()?;
    let outcome = command(&cfg)?;
    if let Some(dir) = &cfg.out {
        outcome.write_to(dir)?;
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let status = match run(Cli::parse()) {
        Ok(outcome) => {
            print!("{}", outcome.report_text());
            if !outcome.passed {
                eprintln!("qhalab: {} reported a property failure", outcome.name);
            }
            outcome.status()
        }
        Err(e) => {
            eprintln!("qhalab: {e}");
            e.status()
        }
    };
    ExitCode::from(status.code() as u8)
}
