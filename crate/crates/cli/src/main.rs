//! Command-line front end: polygon and config ingestion, experiment runners,
//! and report emission.
//!
//! Every command resolves an effective configuration (JSON config file
//! values overridden by command-line flags), embeds that configuration and
//! its SHA-256 hash in the JSON report, prints the report to standard
//! output, and optionally writes it to files together with a CSV table.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4
//! divergence-experiment verdict contradicting its expectation. Failures are
//! reported as a single JSON object on standard error.

mod commands;
mod config;
mod report;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "polyberg",
    version,
    about = "Bergman kernels, Toeplitz operators, and Whitney decompositions on polygonal domains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a polygon's prevertex parameter problem and report residuals.
    MapSolve(MapSolveArgs),
    /// Decompose a polygon into Whitney squares and summarize the invariants.
    Whitney(WhitneyArgs),
    /// Evaluate the Bergman kernel at a point pair or on a diagonal grid.
    Kernel(KernelArgs),
    /// Apply a Toeplitz operator to a test function at an interior point.
    ToeplitzApply(ToeplitzApplyArgs),
    /// Decide projection and Toeplitz boundedness from p and the largest
    /// angle factor.
    Classify(ClassifyArgs),
    /// Sample the averaged-symbol boundedness condition over Whitney squares.
    SymbolCheck(SymbolCheckArgs),
    /// Run a packaged experiment: e0a, e0b, e1a, e1b, e2-closed-form, or
    /// e3-szego.
    Experiment(ExperimentArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON config file; explicit command-line flags override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Also write the JSON report to this file.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
    /// Write the CSV table to this file.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MapSolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Polygon: a name (unit-square, triangle, l-hexagon, regular-<n>,
    /// spiked-pentagon-<alpha>, random-7gon-<seed>) or an inline JSON object
    /// with "vertices" or "path".
    #[arg(long)]
    pub polygon: Option<String>,
}

#[derive(Args, Debug)]
pub struct WhitneyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub polygon: Option<String>,
    /// Finest dyadic level of the decomposition.
    #[arg(long)]
    pub max_level: Option<u32>,
    /// Interior sample points for the enlargement-overlap bound.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed for the overlap sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub polygon: Option<String>,
    /// First kernel argument as "x,y".
    #[arg(long)]
    pub z: Option<String>,
    /// Second kernel argument as "x,y"; defaults to z.
    #[arg(long)]
    pub w: Option<String>,
    /// Tabulate the diagonal K(z, z) on an n-by-n interior grid (CSV).
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ToeplitzApplyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub polygon: Option<String>,
    /// Symbol descriptor as inline JSON, e.g.
    /// '{"kind":"constant","params":{"re":1}}'.
    #[arg(long)]
    pub symbol: Option<String>,
    /// Test function descriptor as inline JSON: kinds "constant",
    /// "disk-monomial" (params.n), "corner-decay" (params.s, params.vertex).
    #[arg(long)]
    pub f: Option<String>,
    /// Finest Whitney level.
    #[arg(long)]
    pub max_level: Option<u32>,
    /// Evaluation point as "x,y"; must be interior.
    #[arg(long)]
    pub z: Option<String>,
    /// Level-increment convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Integrability exponent p in (1, infinity).
    #[arg(long)]
    pub p: Option<f64>,
    /// Largest interior angle factor in (0, 2).
    #[arg(long)]
    pub alpha_max: Option<f64>,
    /// Require the weighted regime; fails when 4/3 <= p <= 4.
    #[arg(long)]
    pub weighted: bool,
}

#[derive(Args, Debug)]
pub struct SymbolCheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub polygon: Option<String>,
    /// Symbol descriptor as inline JSON.
    #[arg(long)]
    pub symbol: Option<String>,
    /// Finest Whitney level to sample.
    #[arg(long)]
    pub max_level: Option<u32>,
    /// Seed for jittered translate sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Divide averages by the corner weight |1 - conj(z_m) phi|^t with this
    /// exponent.
    #[arg(long)]
    pub weighted_t: Option<f64>,
    /// Vertex index for the corner weight; defaults to the widest corner.
    #[arg(long)]
    pub vertex: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment name: e0a, e0b, e1a, e1b, e2-closed-form, or e3-szego.
    pub name: String,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub polygon: Option<String>,
    /// Integrability exponent p.
    #[arg(long)]
    pub p: Option<f64>,
    /// Largest angle factor for the default spiked-pentagon domain.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Corner-weight exponent for e0b; defaults to twice the threshold.
    #[arg(long)]
    pub t: Option<f64>,
    /// Disk truncation radius for e1b.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Dyadic probe depth.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Growth margin for divergence verdicts.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Include the borderline witness function in the e0b family.
    #[arg(long)]
    pub witness: Option<bool>,
    /// Degrees for e2-closed-form / e3-szego: "0..10", "0,1,3", or "5".
    #[arg(long)]
    pub n: Option<String>,
    /// Zero orders for e3-szego: "2..4" or "2,3,4".
    #[arg(long)]
    pub m: Option<String>,
    /// Zero locations for e3-szego: "0.3,0.7".
    #[arg(long)]
    pub r: Option<String>,
    /// Evaluation points for e3-szego: "x,y;x,y;...".
    #[arg(long)]
    pub z: Option<String>,
    /// Residual tolerance for e2-closed-form / e3-szego.
    #[arg(long)]
    pub tol: Option<f64>,
}

/// A failed run: exit code, machine-readable kind, human-readable message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            kind: "io",
            message: message.into(),
        }
    }

    pub fn mismatch(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            kind: "verdict-mismatch",
            message: message.into(),
        }
    }
}

impl From<polyberg::Error> for Failure {
    fn from(e: polyberg::Error) -> Self {
        match &e {
            polyberg::Error::Config(_) | polyberg::Error::Geometry(_) => Failure {
                code: 2,
                kind: "config",
                message: e.to_string(),
            },
            _ => Failure {
                code: 3,
                kind: "numerical",
                message: e.to_string(),
            },
        }
    }
}

fn emit_failure(f: &Failure) -> ! {
    let json = serde_json::json!({
        "error": {
            "exit_code": f.code,
            "kind": f.kind,
            "message": f.message,
        }
    });
    eprintln!("{json}");
    std::process::exit(f.code);
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            emit_failure(&Failure {
                code: 2,
                kind: "usage",
                message: e.render().to_string(),
            });
        }
    };
    if let Err(f) = commands::run(cli) {
        emit_failure(&f);
    }
}
