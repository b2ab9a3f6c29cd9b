mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sssc_core::{Error, ErrorClass, SolverConfig, ThetaMode};

#[derive(Parser)]
#[command(
    name = "sssc",
    version,
    about = "Structured sparse subspace clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the features listed in a manifest.
    Cluster {
        manifest: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build a motion matrix from a trajectory CSV, optionally clustering it.
    Motion {
        trajectories: PathBuf,
        /// Where to write the motion matrix.
        #[arg(short, long, default_value = "motion.csv")]
        matrix: PathBuf,
        /// Number of frames (default: the largest frame index present).
        #[arg(long)]
        frames: Option<usize>,
        /// Omit the status signature rows (2F rows instead of 3F).
        #[arg(long)]
        no_signature: bool,
        /// Cluster the motion matrix into this many groups.
        #[arg(long, value_name = "M")]
        cluster: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare a predicted label file to a ground-truth label file.
    Eval {
        predicted: PathBuf,
        ground_truth: PathBuf,
        /// Average the score over both directions.
        #[arg(long)]
        symmetric: bool,
    },
    /// Generate a synthetic instance with ground truth.
    Synth {
        #[command(subcommand)]
        kind: commands::SynthKind,
    },
}

/// Overrides for the solver configuration. Unset flags keep the manifest's
/// values (or the defaults).
#[derive(Args, Debug, Default)]
pub struct SolverArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda_scale: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Drop the affine constraint `C^T 1 = 1`.
    #[arg(long)]
    pub no_affine: bool,
    #[arg(long, value_parser = parse_theta_mode)]
    pub theta_mode: Option<ThetaMode>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_theta_mode(s: &str) -> Result<ThetaMode, String> {
    s.parse::<ThetaMode>().map_err(|e| e.to_string())
}

impl SolverArgs {
    pub fn apply(&self, mut c: SolverConfig) -> SolverConfig {
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { c.$target = v; })*
            };
        }
        set!(alpha => alpha, beta => beta, lambda_scale => lambda_scale, rho => rho,
             mu0 => mu0, eps => eps_inner, max_inner => max_inner, max_outer => max_outer,
             clusters => num_clusters, seed => seed);
        if let Some(mode) = self.theta_mode {
            c.theta_mode = mode;
        }
        if self.no_affine {
            c.affine_constraint = false;
        }
        c
    }
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Directory receiving `labels.txt` and `report.json`.
    #[arg(short, long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Leave wall-clock timings out of the report so it is reproducible byte for byte.
    #[arg(long)]
    pub omit_timings: bool,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Parse => 2,
        ErrorClass::Spec => 3,
        ErrorClass::Numeric => 4,
    }
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Parse => "parse",
        ErrorClass::Spec => "spec",
        ErrorClass::Numeric => "numeric",
    }
}

fn fail(err: &Error) -> ExitCode {
    let class = err.class();
    let body = serde_json::json!({
        "error": {
            "class": class_name(class),
            "kind": err.name(),
            "message": err.to_string(),
        }
    });
    eprintln!("{body}");
    ExitCode::from(exit_code(class))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cluster {
            manifest,
            solver,
            output,
        } => commands::cluster(&manifest, &solver, &output),
        Command::Motion {
            trajectories,
            matrix,
            frames,
            no_signature,
            cluster,
            solver,
            output,
        } => commands::motion(
            &trajectories,
            &matrix,
            frames,
            !no_signature,
            cluster,
            &solver,
            &output,
        ),
        Command::Eval {
            predicted,
            ground_truth,
            symmetric,
        } => commands::eval(&predicted, &ground_truth, symmetric),
        Command::Synth { kind } => commands::synth(&kind),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
