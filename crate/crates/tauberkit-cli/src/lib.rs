//! Batch front end for `tauberkit`: each subcommand reads one JSON request,
//! writes CSV results and a JSON provenance sidecar, and reports failures
//! through the exit code.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | malformed or invalid input (nothing is written) |
//! | 3 | numerical fault raised by a module |
//! | 4 | an asserted inequality or property does not hold |

pub mod commands;
pub mod request;

use clap::{ArgAction, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use tauberkit::ErrorFamily;
use thiserror::Error;

pub const EXIT_SCHEMA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_ASSERTION: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "tauberkit", version, about = "Tauberian remainder estimates from JSON requests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON request file.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// CSV file, or a directory for `table` and `testfn`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Recorded in the provenance sidecar; every command is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Upper end of the λ search for `rate` (default: chosen per x).
    #[arg(long, global = true)]
    pub lambda_max: Option<f64>,
    /// Largest quadrature budget accepted from the sandwich and pairing checks.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol_quadrature: f64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimal λ and bound on an x-grid for one boundary class.
    Rate,
    /// Regenerate the table of decay rates.
    Table {
        /// `all` or a comma-separated list of row ids.
        #[arg(long, default_value = "all")]
        rows: String,
    },
    /// Build a test function and check its defining properties.
    Testfn,
    /// Check the first-order sandwich inequality.
    VerifyLemma,
    /// Check the order-m sandwich inequality.
    VerifyLemmaM,
    /// Compare both sides of the convolution/Fourier pairing.
    Pairing,
    /// Check the Berry–Esseen inequality on distribution pairs.
    BerryEsseen,
    /// Associated function and structural checks of a weight sequence.
    Growth,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rate => "rate",
            Command::Table { .. } => "table",
            Command::Testfn => "testfn",
            Command::VerifyLemma => "verify-lemma",
            Command::VerifyLemmaM => "verify-lemma-m",
            Command::Pairing => "pairing",
            Command::BerryEsseen => "berry-esseen",
            Command::Growth => "growth",
        }
    }

    /// Commands whose `--output` names a directory.
    fn writes_directory(&self) -> bool {
        matches!(self, Command::Table { .. } | Command::Testfn)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Module(#[from] tauberkit::Error),
    #[error("numerical fault: {0}")]
    Numerical(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Assertion(_) => EXIT_ASSERTION,
            CliError::Module(e) => match e.family() {
                ErrorFamily::Schema => EXIT_SCHEMA,
                ErrorFamily::Numerical => EXIT_NUMERICAL,
                ErrorFamily::Assertion => EXIT_ASSERTION,
            },
        }
    }
}

/// Files produced by one command, kept in memory until the whole run succeeded.
#[derive(Debug, Default)]
pub struct Artifacts {
    /// `(name, bytes)`; names are relative to the output directory, or
    /// replaced by the output path itself for single-file commands.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Value,
    /// Set when a checked property failed; outputs are still written.
    pub violation: Option<String>,
}

#[derive(Debug, Serialize)]
struct Tolerances {
    quadrature: f64,
    lambda_max: Option<f64>,
    berry_esseen_slack: f64,
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: String,
    seed: u64,
    tolerances: Tolerances,
    outputs: Vec<String>,
    summary: &'a serde_json::Value,
}

/// Where the provenance sidecar of an output goes.
pub fn sidecar_path(command: &Command, output: &Path) -> PathBuf {
    if command.writes_directory() {
        output.join("provenance.json")
    } else {
        let mut name = output.as_os_str().to_owned();
        name.push(".provenance.json");
        PathBuf::from(name)
    }
}

/// SHA-256 over the command, the canonicalized request and every flag that
/// can change the results.
pub fn config_hash(cli: &Cli, request: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(cli.command.name().as_bytes());
    if let Command::Table { rows } = &cli.command {
        h.update(rows.as_bytes());
    }
    h.update(b"\0");
    h.update(request.to_string().as_bytes());
    h.update(b"\0");
    h.update(cli.seed.to_le_bytes());
    h.update(cli.lambda_max.unwrap_or(f64::NAN).to_bits().to_le_bytes());
    h.update(cli.tol_quadrature.to_bits().to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn read_request(cli: &Cli) -> Result<serde_json::Value, CliError> {
    match &cli.input {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
        }
        None if matches!(cli.command, Command::Table { .. }) => Ok(serde_json::Value::Null),
        None => Err(CliError::Schema(format!("`{}` needs --input", cli.command.name()))),
    }
}

fn write_outputs(cli: &Cli, output: &Path, hash: String, art: &Artifacts) -> Result<(), CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Module(tauberkit::Error::Io(format!("{}: {e}", p.display())));
    let mut names = Vec::new();
    if cli.command.writes_directory() {
        fs::create_dir_all(output).map_err(|e| io(output, e))?;
        for (name, bytes) in &art.files {
            let p = output.join(name);
            fs::write(&p, bytes).map_err(|e| io(&p, e))?;
            names.push(name.clone());
        }
    } else {
        for (_, bytes) in &art.files {
            fs::write(output, bytes).map_err(|e| io(output, e))?;
        }
        names.push(output.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
    }
    let prov = Provenance {
        tool: "tauberkit",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config_hash: hash,
        seed: cli.seed,
        tolerances: Tolerances {
            quadrature: cli.tol_quadrature,
            lambda_max: cli.lambda_max,
            berry_esseen_slack: tauberkit::berry_esseen::BE_SLACK,
        },
        outputs: names,
        summary: &art.summary,
    };
    let side = sidecar_path(&cli.command, output);
    let text = serde_json::to_string_pretty(&prov).map_err(|e| CliError::Schema(e.to_string()))?;
    fs::write(&side, text + "\n").map_err(|e| io(&side, e))?;
    Ok(())
}

/// Runs one command end to end. Nothing is written unless the command
/// completes; a failed property check still writes its outputs before
/// returning [`CliError::Assertion`].
pub fn run(cli: &Cli) -> Result<Artifacts, CliError> {
    let output = cli.output.clone().ok_or_else(|| CliError::Schema("--output is required".into()))?;
    if !(cli.tol_quadrature > 0.0) {
        return Err(CliError::Schema(format!("--tol-quadrature must be positive, got {}", cli.tol_quadrature)));
    }
    if let Some(l) = cli.lambda_max {
        if !(l > 1.0 && l.is_finite()) {
            return Err(CliError::Schema(format!("--lambda-max must exceed 1, got {l}")));
        }
    }
    let request = read_request(cli)?;
    let hash = config_hash(cli, &request);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Schema(format!("thread pool: {e}")))?;
    let art = pool.install(|| commands::dispatch(cli, request))?;
    write_outputs(cli, &output, hash, &art)?;
    if cli.verbose > 0 {
        eprintln!("{}: wrote {}", cli.command.name(), output.display());
    }
    match &art.violation {
        Some(msg) => Err(CliError::Assertion(msg.clone())),
        None => Ok(art),
    }
}
