//! Verification experiments: Monte-Carlo unbiasedness, square-root
//! convergence traces, and gradient checking.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use ipccp::eig::matrix_sqrt_exact;
use ipccp::grad::{finite_diff_check, IpccpPipeline};
use ipccp::matrix::{covariance_feature, frobenius_inner, gram};
use ipccp::newton_schulz::NsState;
use ipccp::pooling::{isqrt_cov_exact, poly_pool, PolynomialSpec, Preprocess};
use ipccp::sketch::{SketchConfig, SketchKind};
use ipccp::SymmetricMatrix;

use crate::feature_file::FeatureFile;
use crate::report::{aggregate, csv_writer, write_json, Aggregate, Timing};
use crate::trials::{run_trials, thread_count, trial_seed};
use crate::Outcome;

/// Target polynomial of the unbiasedness experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum PolyArg {
    /// Square-root weights from the coupled iteration (uses `k`).
    Sqrt,
    /// Explicit polynomial, ascending coefficients of `q`.
    Spec(PolynomialSpec),
}

impl PolyArg {
    /// Accepts `sqrt`, the shorthands `x`, `x2`, `x3`, or a comma-separated
    /// ascending coefficient list such as `1,0,2` for `1 + 2x^2`.
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "sqrt" => Ok(PolyArg::Sqrt),
            "x" => Ok(PolyArg::Spec(PolynomialSpec::monomial(1))),
            "x2" => Ok(PolyArg::Spec(PolynomialSpec::monomial(2))),
            "x3" => Ok(PolyArg::Spec(PolynomialSpec::monomial(3))),
            other => {
                let coeffs: Vec<f64> = other
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .with_context(|| format!("bad polynomial coefficient {c:?}"))
                    })
                    .collect::<Result<_>>()?;
                if coeffs.is_empty() || coeffs.iter().all(|&c| c == 0.0) {
                    bail!("polynomial must have at least one nonzero coefficient");
                }
                Ok(PolyArg::Spec(PolynomialSpec::from_q_coeffs(&coeffs)))
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            PolyArg::Sqrt => "sqrt".to_string(),
            PolyArg::Spec(s) => format!("q_coeffs={:?}", s.q_coeffs()),
        }
    }
}

pub struct UnbiasednessParams {
    pub input_x: PathBuf,
    pub input_y: PathBuf,
    pub sketch: SketchKind,
    pub dim: usize,
    pub k: usize,
    pub poly: PolyArg,
    pub trials: u64,
    pub seed: u64,
    pub z_tol: f64,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct UnbiasednessConfig {
    input_x: String,
    input_y: String,
    sketch: String,
    d: usize,
    n_x: usize,
    n_y: usize,
    #[serde(rename = "D")]
    dim: usize,
    k: usize,
    poly: String,
    trials: u64,
    seed: u64,
    z_tol: f64,
    threads: usize,
}

#[derive(Serialize)]
struct UnbiasednessReport {
    experiment: &'static str,
    config: UnbiasednessConfig,
    oracle: f64,
    stats: Aggregate,
    z_score: Option<f64>,
    within_tolerance: Option<bool>,
    trials: Vec<f64>,
    timing: Timing,
}

pub fn sketch_name(kind: SketchKind) -> &'static str {
    match kind {
        SketchKind::TensorSketch => "ts",
        SketchKind::RandomMaclaurin => "rm",
    }
}

/// Per-trial inner products plus the exact oracle they estimate.
pub struct McResult {
    pub records: Vec<f64>,
    pub oracle: f64,
}

impl McResult {
    /// `(mean - oracle) / standard_error`; `None` for fewer than two trials.
    pub fn z_score(&self) -> Option<f64> {
        let stats = aggregate(&self.records);
        stats.std_error.map(|se| (stats.mean - self.oracle) / se)
    }
}

/// Core of the unbiasedness experiment: `trials` seeded draws of
/// `<phi(X), phi(Y)>` against the exact oracle for the requested polynomial.
pub fn unbiasedness_records(
    x: &ipccp::LocalFeatureSet,
    y: &ipccp::LocalFeatureSet,
    sketch: SketchKind,
    dim: usize,
    k: usize,
    poly: &PolyArg,
    trials: u64,
    seed: u64,
) -> Result<McResult> {
    if x.dim() != y.dim() {
        bail!(
            "descriptor dimensions differ: {} vs {} (the two sets must be comparable)",
            x.dim(),
            y.dim()
        );
    }
    let d = x.dim();

    // per-trial feature weights do not depend on the sketch draw, so they
    // are computed once
    let (bias, wx, wy, oracle) = match poly {
        PolyArg::Sqrt => {
            let mx = isqrt_cov_exact(x, k, Preprocess::None).map_err(zero_trace_hint)?;
            let my = isqrt_cov_exact(y, k, Preprocess::None).map_err(zero_trace_hint)?;
            let oracle = frobenius_inner(&mx, &my)?;
            let (wx, _) =
                ipccp::newton_schulz::sqrt_weights(&gram(x), k).map_err(zero_trace_hint)?;
            let (wy, _) =
                ipccp::newton_schulz::sqrt_weights(&gram(y), k).map_err(zero_trace_hint)?;
            (0.0, wx, wy, oracle)
        }
        PolyArg::Spec(spec) => {
            let q = spec.q_coeffs();
            let qx = ipccp::matrix::poly_eval_matrix(&q, &covariance_feature(x));
            let qy = ipccp::matrix::poly_eval_matrix(&q, &covariance_feature(y));
            let oracle = frobenius_inner(&qx, &qy)?;
            let wx = ipccp::matrix::poly_eval_matrix(&spec.r_coeffs, &gram(x)).into_matrix();
            let wy = ipccp::matrix::poly_eval_matrix(&spec.r_coeffs, &gram(y)).into_matrix();
            (spec.bias, wx, wy, oracle)
        }
    };
    let pool_spec = PolynomialSpec::new(bias, vec![]);

    let records = run_trials(trials, |t| {
        let cfg = SketchConfig::new(sketch, d, dim, trial_seed(seed, t))
            .expect("validated dimensions");
        let fx = poly_pool(x, &pool_spec, &cfg, Some(&wx)).expect("validated inputs");
        let fy = poly_pool(y, &pool_spec, &cfg, Some(&wy)).expect("validated inputs");
        fx.data.iter().zip(&fy.data).map(|(a, b)| a * b).sum()
    })?;
    Ok(McResult { records, oracle })
}

/// Runs `trials` seeded evaluations of `<phi(X), phi(Y)>` and compares the
/// Monte-Carlo mean against the exact oracle. Returns the outcome and the
/// z-score (when defined).
pub fn run_unbiasedness(p: &UnbiasednessParams) -> Result<(Outcome, Option<f64>)> {
    let start = Instant::now();
    let x = FeatureFile::read(&p.input_x)?.to_feature_set()?;
    let y = FeatureFile::read(&p.input_y)?.to_feature_set()?;
    let McResult { records, oracle } = unbiasedness_records(
        &x, &y, p.sketch, p.dim, p.k, &p.poly, p.trials, p.seed,
    )?;
    let stats = aggregate(&records);
    let z_score = stats.std_error.map(|se| (stats.mean - oracle) / se);
    let within = z_score.map(|z| z.abs() < p.z_tol);
    let report = UnbiasednessReport {
        experiment: "unbiasedness",
        config: UnbiasednessConfig {
            input_x: p.input_x.display().to_string(),
            input_y: p.input_y.display().to_string(),
            sketch: sketch_name(p.sketch).to_string(),
            d: x.dim(),
            n_x: x.len(),
            n_y: y.len(),
            dim: p.dim,
            k: p.k,
            poly: p.poly.describe(),
            trials: p.trials,
            seed: p.seed,
            z_tol: p.z_tol,
            threads: thread_count(),
        },
        oracle,
        stats,
        z_score,
        within_tolerance: within,
        trials: records,
        timing: Timing {
            wall_s: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&p.out, &report)?;
    match z_score {
        Some(z) => println!(
            "unbiasedness: mean {:.6e}, oracle {:.6e}, z = {:.3} ({})",
            report.stats.mean,
            oracle,
            z,
            if within == Some(true) { "ok" } else { "VIOLATION" },
        ),
        None => println!(
            "unbiasedness: mean {:.6e}, oracle {:.6e} (single trial, no standard error)",
            report.stats.mean, oracle
        ),
    }
    let outcome = if within == Some(false) {
        Outcome::ToleranceViolation
    } else {
        Outcome::Pass
    };
    Ok((outcome, z_score))
}

fn zero_trace_hint(e: ipccp::Error) -> anyhow::Error {
    match e {
        ipccp::Error::ZeroTrace => anyhow::anyhow!(
            "input has vanishing trace (all-zero descriptors); \
             generate non-degenerate features or skip centering"
        ),
        other => other.into(),
    }
}

pub struct ConvergenceParams {
    pub input: PathBuf,
    pub k_max: usize,
    pub out: PathBuf,
}

/// Per-iteration square-root error and coupling residual, written as CSV
/// columns `k, sqrt_rel_err, coupling_residual`.
pub fn run_convergence(p: &ConvergenceParams) -> Result<()> {
    if p.k_max < 1 {
        bail!("--k-max must be at least 1");
    }
    let x = FeatureFile::read(&p.input)?.to_feature_set()?;
    let s = gram(&x);
    let trace = s.trace();
    if trace <= 1e-300 {
        return Err(zero_trace_hint(ipccp::Error::ZeroTrace));
    }
    let exact = matrix_sqrt_exact(&covariance_feature(&x))?;
    let exact_norm = exact.frobenius_norm().max(1e-300);
    let a = SymmetricMatrix::from_symmetrized(&s.scale(1.0 / trace));
    let xm = x.to_matrix();

    let mut writer = csv_writer(&p.out)?;
    writer.write_record(["k", "sqrt_rel_err", "coupling_residual"])?;
    let mut state = NsState::new(&a);
    for k in 1..=p.k_max {
        state.step()?;
        let w = state.z().scale(1.0 / trace.sqrt());
        let feat = xm.matmul(&w).matmul(&xm.transpose());
        let sqrt_rel_err = feat.sub(exact.matrix()).frobenius_norm() / exact_norm;
        let coupling = a
            .matmul(state.z())
            .sub(state.y())
            .frobenius_norm()
            / state.y().frobenius_norm().max(1e-300);
        writer.write_record([
            k.to_string(),
            format!("{sqrt_rel_err}"),
            format!("{coupling}"),
        ])?;
    }
    writer.flush()?;
    println!("convergence: wrote {} rows to {}", p.k_max, p.out.display());
    Ok(())
}

pub struct GradcheckParams {
    pub input: PathBuf,
    pub sketch: SketchKind,
    pub dim: usize,
    pub k: usize,
    pub eps: f64,
    pub probes: usize,
    pub tol: f64,
    pub seed: u64,
    pub preprocess: Preprocess,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct GradcheckConfig {
    input: String,
    sketch: String,
    d: usize,
    n: usize,
    #[serde(rename = "D")]
    dim: usize,
    k: usize,
    eps: f64,
    probes: usize,
    tol: f64,
    seed: u64,
    preprocess: String,
}

#[derive(Serialize)]
struct GradcheckReport {
    experiment: &'static str,
    config: GradcheckConfig,
    max_rel_error: f64,
    pass: bool,
    stats: Aggregate,
    trials: Vec<f64>,
    timing: Timing,
}

/// Compares the reverse-mode gradient of the full pipeline against central
/// finite differences; nonzero outcome when the worst probe exceeds `tol`.
pub fn run_gradcheck(p: &GradcheckParams) -> Result<(Outcome, f64)> {
    let start = Instant::now();
    if p.probes < 1 {
        bail!("--probes must be at least 1");
    }
    let x = FeatureFile::read(&p.input)?.to_feature_set()?;
    let cfg_d = match p.preprocess {
        Preprocess::Gaussian => x.dim() + 1,
        _ => x.dim(),
    };
    let cfg = SketchConfig::new(p.sketch, cfg_d, p.dim, p.seed)?;
    let pipe = IpccpPipeline {
        cfg: &cfg,
        k: p.k,
        preprocess: p.preprocess,
    };
    let mut records = Vec::with_capacity(p.probes);
    for probe in 0..p.probes {
        let err = finite_diff_check(&pipe, &x, p.eps, 1, trial_seed(p.seed, probe as u64))
            .map_err(zero_trace_hint)?;
        records.push(err);
    }
    let max_rel_error = records.iter().copied().fold(0.0, f64::max);
    let pass = max_rel_error <= p.tol;
    let report = GradcheckReport {
        experiment: "gradcheck",
        config: GradcheckConfig {
            input: p.input.display().to_string(),
            sketch: sketch_name(p.sketch).to_string(),
            d: x.dim(),
            n: x.len(),
            dim: p.dim,
            k: p.k,
            eps: p.eps,
            probes: p.probes,
            tol: p.tol,
            seed: p.seed,
            preprocess: p.preprocess.to_string(),
        },
        max_rel_error,
        pass,
        stats: aggregate(&records),
        trials: records,
        timing: Timing {
            wall_s: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&p.out, &report)?;
    println!(
        "gradcheck: max relative discrepancy {max_rel_error:.3e} over {} probes ({})",
        p.probes,
        if pass { "ok" } else { "VIOLATION" }
    );
    let outcome = if pass {
        Outcome::Pass
    } else {
        Outcome::ToleranceViolation
    };
    Ok((outcome, max_rel_error))
}
