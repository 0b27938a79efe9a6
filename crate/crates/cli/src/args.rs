use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "wetting-lab", version, about = "Transfer-matrix and lattice-path computations for multi-level pinning")]
pub struct Cli {
    /// Directory receiving the outputs and `run.json`.
    #[arg(long, global = true, default_value = "wetting-out")]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Zero every timing column so that repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Re-run the configuration recorded in a previous `run.json`.
    #[arg(long, value_name = "RUN_JSON")]
    pub replay: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Free energy of a pinned walk above a wall.
    FreeEnergy(FreeEnergyArgs),
    /// Spectral and induction verdicts plus free energy over a grid.
    PhaseScan(PhaseScanArgs),
    /// Doubling-induction delocalization certificate (JSON).
    CertifyDeloc(CertifyDelocArgs),
    /// Spectral localization certificate (JSON).
    CertifyLoc(CertifyLocArgs),
    /// Bracket the critical amplitude of a potential family.
    Threshold(ThresholdArgs),
    /// Local limit check of the free bridge partition function.
    VerifyClt(VerifyCltArgs),
    /// Dump all self-avoiding paths between two vertices.
    SawEnumerate(SawEnumerateArgs),
    /// Check the lattice-path / SOS identity with certificates.
    SawVerify(SawVerifyArgs),
    /// Cross-check the transfer engine against brute-force enumeration.
    OracleCheck(OracleCheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FreeEnergy(_) => "free-energy",
            Command::PhaseScan(_) => "phase-scan",
            Command::CertifyDeloc(_) => "certify-deloc",
            Command::CertifyLoc(_) => "certify-loc",
            Command::Threshold(_) => "threshold",
            Command::VerifyClt(_) => "verify-clt",
            Command::SawEnumerate(_) => "saw-enumerate",
            Command::SawVerify(_) => "saw-verify",
            Command::OracleCheck(_) => "oracle-check",
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyArgs {
    /// e.g. `binomial:sigma2=0.5`, `sos:beta=3`, `table:<path>`
    #[arg(long)]
    pub kernel: String,
    /// e.g. `single:j=0,eps=0.4`, `power:delta=0.5,amp=0.2`, `list:<path>`
    #[arg(long)]
    pub potential: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 2048)]
    pub cross_length: usize,
    #[arg(long, default_value_t = 1 << 14)]
    pub max_window: usize,
    /// Class constant used for the kernel membership columns.
    #[arg(long, default_value_t = 1.0)]
    pub c0: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseScanArgs {
    /// Kernel spec; repeat for several kernels.
    #[arg(long, required = true)]
    pub kernel: Vec<String>,
    /// Potential family without amplitude, e.g. `single:j=0`; repeatable.
    #[arg(long, required = true)]
    pub family: Vec<String>,
    /// Comma-separated amplitudes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub amplitudes: Vec<f64>,
    /// Horizon of the induction checks.
    #[arg(long, default_value_t = 2048)]
    pub l_max: usize,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyDelocArgs {
    #[arg(long)]
    pub kernel: String,
    #[arg(long)]
    pub potential: String,
    /// Decoupling constant; defaults to ρ so that the level weights sum to one.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 4096)]
    pub l_max: usize,
    /// Midpoint constant `C` in `L₁ = C(j+1)²/σ²` (default: calibrated value).
    #[arg(long)]
    pub c: Option<f64>,
    /// Check every length instead of a sampled grid.
    #[arg(long)]
    pub exhaustive: bool,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyLocArgs {
    #[arg(long)]
    pub kernel: String,
    #[arg(long)]
    pub potential: String,
    #[arg(long, default_value_t = 4096)]
    pub d_max: usize,
    #[arg(long, default_value_t = 2048)]
    pub h_max: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub kernel: String,
    /// Family without amplitude, e.g. `single:j=0`.
    #[arg(long)]
    pub family: String,
    /// Lower amplitude (must be delocalized); searched downwards if omitted.
    #[arg(long)]
    pub amp_lo: Option<f64>,
    /// Upper amplitude (must be localized); searched upwards if omitted.
    #[arg(long)]
    pub amp_hi: Option<f64>,
    /// Relative bisection tolerance on the amplitude.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 2048)]
    pub l_max: usize,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyCltArgs {
    #[arg(long, default_values_t = ["binomial:sigma2=0.1".to_string(), "binomial:sigma2=0.5".to_string()])]
    pub kernel: Vec<String>,
    #[arg(long = "L-max", default_value_t = 1 << 14)]
    pub l_max: usize,
    /// Smallest `σ²L` included.
    #[arg(long, default_value_t = 100.0)]
    pub min_scale: f64,
    #[arg(long, default_value_t = 0.2)]
    pub band_lo: f64,
    #[arg(long, default_value_t = 0.6)]
    pub band_hi: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SawEnumerateArgs {
    /// Start vertex in doubled coordinates, e.g. `1,0` for (½, 0).
    #[arg(long, allow_hyphen_values = true)]
    pub from: String,
    /// End vertex in doubled coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub to: String,
    /// Extra length allowed beyond the minimal one.
    #[arg(long, default_value_t = 0)]
    pub cap: usize,
    /// `none`, `wall:<depth>` or `avoid:<level>`.
    #[arg(long, default_value = "none")]
    pub constraint: String,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SawVerifyArgs {
    #[arg(long = "L", value_delimiter = ',', default_values_t = [2usize, 4, 6, 8])]
    pub l: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2.5, 3.0, 4.0])]
    pub beta: Vec<f64>,
    /// Target relative width of the enumeration certificate.
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckArgs {
    #[arg(long = "L-max", default_value_t = 12)]
    pub l_max: usize,
    #[arg(long, default_values_t = [
        "binomial:sigma2=0.1".to_string(),
        "binomial:sigma2=0.25".to_string(),
        "binomial:sigma2=0.5".to_string(),
    ])]
    pub kernel: Vec<String>,
    /// Largest relative error accepted.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

/// Everything needed to reproduce a run; written as `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub workers: usize,
    pub deterministic: bool,
    pub command: Command,
}
