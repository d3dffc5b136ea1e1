//! `fsmap` command-line front end.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "fsmap", version, about = "Analysis of fast-slow maps near singular points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Map-spec file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output file (CSV table or map spec, depending on the command).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tolerance override, e.g. `tol_floor=1e-5`. Repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Classify a point of the critical manifold by its multipliers.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated point; defaults to the base point.
        #[arg(long)]
        point: Option<String>,
    },
    /// Projection onto the critical manifold and the reduced vector field.
    Reduce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: Option<String>,
    },
    /// Formal vector field whose time-1 map matches the extended map.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        order: Option<u32>,
    },
    /// Compare the slow map with the time-1 map of the reduced flow.
    VerifyReduced {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        order: Option<u32>,
    },
    /// Exit height past a regular fold over a grid of ε.
    FoldExit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        /// `A:B:log:N`, `A:B:lin:N` or a single value.
        #[arg(long, default_value = "1e-4:1e-2:log:13")]
        eps: String,
    },
    /// Which outgoing branch the attracting slow manifold follows.
    BranchSelect {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1e-3")]
        eps: String,
        /// transcritical or pitchfork; defaults to the spec's `case` line or the classifier.
        #[arg(long)]
        case: Option<String>,
    },
    /// Regular contact conditions at a point.
    Contact {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: Option<String>,
    },
    /// Center-manifold reduction and embedding at a contact base point.
    CenterManifold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        order: Option<u32>,
    },
    /// Run the built-in consistency checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
