//! fellbench: validate Fell bundles, compute their cross-sectional
//! algebras, check absorption and the approximation property.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use fell::analysis::Which;
use fell::FellError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Fell(#[from] FellError),
}

impl CliError {
    /// 2 for malformed input, 1 for everything the library rejects on
    /// mathematical grounds.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Fell(e) => match e {
                FellError::Shape(_)
                | FellError::TooLarge(_)
                | FellError::NotAssociative(..)
                | FellError::NoUniqueInverse(_)
                | FellError::BadUnit => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fellbench", version, about = "Fell bundles over finite inverse semigroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the bundle axioms and the commutation identities.
    Validate {
        bundle: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Dimensions and blocks of Q_c, C_alg and C*_red, and the weak-containment verdict.
    Algebras {
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = WhichArg::Both)]
        which: WhichArg,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Check a witness of the approximation property, or synthesize one from an action.
    #[command(group(ArgGroup::new("source").required(true).args(["witness", "synth"])))]
    Ap {
        bundle: PathBuf,
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long)]
        synth: Option<PathBuf>,
        /// Write the synthesized witness here.
        #[arg(long, requires = "synth")]
        emit: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Verify that U_π intertwines the induced representation with π^Λ.
    Absorb {
        bundle: PathBuf,
        rep: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Write a preset bundle with its action and carrier representation.
    Gen {
        preset: String,
        params: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum WhichArg {
    Full,
    Reduced,
    Both,
}

impl From<WhichArg> for Which {
    fn from(w: WhichArg) -> Which {
        match w {
            WhichArg::Full => Which::Full,
            WhichArg::Reduced => Which::Reduced,
            WhichArg::Both => Which::Both,
        }
    }
}

fn env_seed() -> Result<u64, CliError> {
    match std::env::var("FB_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Input(format!("FB_SEED={v} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let seed = env_seed()?;
    match cli.command {
        Command::Validate { bundle, tol } => commands::validate(&bundle, tol, seed),
        Command::Algebras { bundle, which, tol } => commands::algebras(&bundle, which.into(), tol, seed),
        Command::Ap { bundle, witness, synth, emit, tol } => {
            commands::ap(&bundle, witness.as_deref(), synth.as_deref(), emit.as_deref(), tol, seed)
        }
        Command::Absorb { bundle, rep, tol } => commands::absorb(&bundle, &rep, tol, seed),
        Command::Gen { preset, params, seed: s, out } => commands::gen(&preset, &params, s.unwrap_or(seed), &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.report).expect("reports serialize"));
            ExitCode::from(if outcome.report.verdict == commands::Verdict::Pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("fellbench: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
