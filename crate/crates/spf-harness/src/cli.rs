//! Command-line interface.
//!
//! Exit codes: 0 on success or when all checks are within tolerance, 1 on a
//! tolerance violation, 2 on usage or I/O errors.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use ipccp::pooling::Preprocess;
use ipccp::sketch::SketchKind;

use crate::bench::{parse_list, run_bench, BenchParams};
use crate::experiments::{
    run_convergence, run_gradcheck, run_unbiasedness, ConvergenceParams, GradcheckParams,
    PolyArg, UnbiasednessParams,
};
use crate::feature_file::Dtype;
use crate::gen::{Dist, GenParams};
use crate::Outcome;

#[derive(Parser)]
#[command(
    name = "spf",
    version,
    about = "Sketched covariance pooling: data generation, verification experiments, and timing sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate seeded synthetic descriptor-set files.
    Gen(GenArgs),
    /// Monte-Carlo check that sketched inner products match the exact oracle.
    Unbiasedness(UnbiasednessArgs),
    /// Square-root error and coupling residual per iteration count.
    Convergence(ConvergenceArgs),
    /// Median wall times over a (d, n, D) grid.
    Bench(BenchArgs),
    /// Reverse-mode gradient vs central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SketchArg {
    Ts,
    Rm,
}

impl From<SketchArg> for SketchKind {
    fn from(v: SketchArg) -> Self {
        match v {
            SketchArg::Ts => SketchKind::TensorSketch,
            SketchArg::Rm => SketchKind::RandomMaclaurin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

impl From<DtypeArg> for Dtype {
    fn from(v: DtypeArg) -> Self {
        match v {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PreprocessArg {
    None,
    Center,
    Gaussian,
}

impl From<PreprocessArg> for Preprocess {
    fn from(v: PreprocessArg) -> Self {
        match v {
            PreprocessArg::None => Preprocess::None,
            PreprocessArg::Center => Preprocess::Center,
            PreprocessArg::Gaussian => Preprocess::Gaussian,
        }
    }
}

#[derive(Args)]
pub struct GenArgs {
    /// Descriptor dimension.
    #[arg(long)]
    pub d: u32,
    /// Descriptors per file.
    #[arg(long)]
    pub n: u32,
    /// Number of files to write.
    #[arg(long, default_value_t = 1)]
    pub count: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Dist::Gaussian)]
    pub dist: Dist,
    /// On-disk element type.
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    pub dtype: DtypeArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct UnbiasednessArgs {
    /// The two descriptor-set files X and Y.
    #[arg(long = "in", num_args = 2, value_names = ["X.spf", "Y.spf"])]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub sketch: SketchArg,
    /// Sketch output dimension.
    #[arg(long = "D")]
    pub dim: usize,
    /// Iteration count for the sqrt polynomial.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// sqrt | x | x2 | x3 | comma-separated ascending coefficients of q.
    #[arg(long)]
    pub poly: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Acceptance band on |z|.
    #[arg(long, default_value_t = 5.0)]
    pub z_tol: f64,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ConvergenceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "k-max", default_value_t = 20)]
    pub k_max: usize,
    /// Report CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub sketch: SketchArg,
    /// Comma-separated descriptor dimensions.
    #[arg(long = "d-list")]
    pub d_list: String,
    /// Comma-separated descriptor counts.
    #[arg(long = "n-list")]
    pub n_list: String,
    /// Comma-separated sketch dimensions.
    #[arg(long = "D-list")]
    pub dim_list: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Timed repetitions per cell (3 warm-ups excluded).
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluation precision of the sketch stages.
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    pub dtype: DtypeArg,
    /// Report CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub sketch: SketchArg,
    #[arg(long = "D")]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 8)]
    pub probes: usize,
    /// Maximum accepted relative discrepancy.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PreprocessArg::None)]
    pub preprocess: PreprocessArg,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Gen(args) => {
            let paths = crate::gen::run(&GenParams {
                d: args.d,
                n: args.n,
                count: args.count,
                seed: args.seed,
                dist: args.dist,
                dtype: args.dtype.into(),
                out: args.out,
            })?;
            println!("gen: wrote {} file(s)", paths.len());
            Ok(Outcome::Pass)
        }
        Command::Unbiasedness(args) => {
            let [x, y]: [PathBuf; 2] = args
                .inputs
                .clone()
                .try_into()
                .map_err(|_| anyhow::anyhow!("--in expects exactly two files"))?;
            let (outcome, _) = run_unbiasedness(&UnbiasednessParams {
                input_x: x,
                input_y: y,
                sketch: args.sketch.into(),
                dim: args.dim,
                k: args.k,
                poly: PolyArg::parse(&args.poly)?,
                trials: args.trials,
                seed: args.seed,
                z_tol: args.z_tol,
                out: args.out,
            })?;
            Ok(outcome)
        }
        Command::Convergence(args) => {
            run_convergence(&ConvergenceParams {
                input: args.input,
                k_max: args.k_max,
                out: args.out,
            })?;
            Ok(Outcome::Pass)
        }
        Command::Bench(args) => {
            run_bench(&BenchParams {
                sketch: args.sketch.into(),
                d_list: parse_list(&args.d_list)?,
                n_list: parse_list(&args.n_list)?,
                dim_list: parse_list(&args.dim_list)?,
                k: args.k,
                reps: args.reps.max(1),
                seed: args.seed,
                dtype: args.dtype.into(),
                out: args.out,
            })?;
            Ok(Outcome::Pass)
        }
        Command::Gradcheck(args) => {
            let (outcome, _) = run_gradcheck(&GradcheckParams {
                input: args.input,
                sketch: args.sketch.into(),
                dim: args.dim,
                k: args.k,
                eps: args.eps,
                probes: args.probes,
                tol: args.tol,
                seed: args.seed,
                preprocess: args.preprocess.into(),
                out: args.out,
            })?;
            Ok(outcome)
        }
    }
}
