//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 I/O.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{parse_config, parse_study_config};
use crate::distances::w2sq;
use crate::engine::{default_l, BOUNDARY_WARNING_FRACTION};
use crate::error::Error;
use crate::exec::Execution;
use crate::harness::{
    binned_summary, run_conditional_study, run_study, Scale, StudyConfig, StudyId, StudyOutput,
};
use crate::io::{
    bins_csv, companion, format_float, write_atomic, write_result, Payload, Provenance,
    ResultEnvelope,
};
use crate::models::{BetaParams, Gaussian1D, Posterior};
use crate::numerics::clustered_gauss_legendre;
use crate::theory::{opess_pmf, opess_pmf_table, posterior_mean, ChainMode, PmfQuery};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "opess",
    version,
    about = "Observed prior effective sample size"
)]
pub struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially. Results do not depend on it.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Output file (compute) or directory (study).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Study size preset.
    #[arg(long, global = true, value_enum)]
    pub scale: Option<ScaleArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    /// The prior mean.
    Prior,
    /// The posterior mean.
    PosteriorPredictive,
    /// The sample mean.
    Bootstrap,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DistanceFamily {
    /// Arguments: mean and variance of each distribution.
    Gaussian,
    /// Arguments: both shape parameters of each distribution.
    Beta,
}

fn parse_study_id(s: &str) -> Result<StudyId, String> {
    s.parse::<StudyId>().map_err(|_| {
        let known: Vec<&str> = StudyId::ALL.iter().map(|id| id.as_str()).collect();
        format!("unknown study `{s}`; expected one of {}", known.join(", "))
    })
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the OPESS distribution and MOPESS for a configured analysis.
    Compute,
    /// Run a replication study and write its CSV files.
    #[command(allow_negative_numbers = true)]
    Study {
        /// One of gaussian_fig1_2, gaussian_conditional_fig3, beta_fig4,
        /// regression_fig5_6, small_mopess_appE.
        #[arg(value_parser = parse_study_id)]
        study_id: StudyId,
        /// Sample mean for the conditional study.
        #[arg(long, default_value_t = 0.0)]
        ybar: f64,
        /// Fixed mean for the conditional study.
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        /// Number of equal-count bins in the summary.
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Theoretical PMF of the OPESS for the Gaussian family.
    #[command(allow_negative_numbers = true)]
    TheoryPmf {
        /// Support point; the whole table when absent.
        #[arg(long)]
        v: Option<i64>,
        /// Observed sample mean.
        #[arg(long, default_value_t = 0.0)]
        ybar: f64,
        /// Observed sample size.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Nominal prior sample size, sigma^2 / prior variance.
        #[arg(long, default_value_t = 10.0)]
        z: f64,
        /// Sampling standard deviation.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Prior mean.
        #[arg(long, default_value_t = 0.0)]
        mu0: f64,
        /// Condition on this mean instead of integrating it out.
        #[arg(long)]
        mu: Option<f64>,
        /// Posterior draws of the mean when integrating it out.
        #[arg(long, default_value_t = 200)]
        mu_draws: usize,
        /// Monte Carlo draws over the chain noise per mean.
        #[arg(long, default_value_t = 2000)]
        t_draws: usize,
        /// Largest candidate sample size; defaults to n + max(10 ceil(z), 50).
        #[arg(long)]
        l: Option<usize>,
    },
    /// Check the deterministic-chain properties of the Gaussian family.
    #[command(allow_negative_numbers = true)]
    PropCheck {
        /// Data-generating mean of the deterministic chain.
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Observed sample size.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Nominal prior sample size, sigma^2 / prior variance.
        #[arg(long, default_value_t = 10.0)]
        z: f64,
        /// Sampling standard deviation.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Observed sample mean.
        #[arg(long, default_value_t = 0.3)]
        ybar: f64,
        /// Prior mean.
        #[arg(long, default_value_t = 0.0)]
        mu0: f64,
        /// Largest candidate sample size; defaults to n + 200 ceil(n + z).
        #[arg(long)]
        l: Option<usize>,
    },
    /// Squared 2-Wasserstein distance between two distributions.
    #[command(allow_negative_numbers = true)]
    Distance {
        #[arg(value_enum)]
        family: DistanceFamily,
        /// First parameter of the first distribution.
        a1: f64,
        /// Second parameter of the first distribution.
        b1: f64,
        /// First parameter of the second distribution.
        a2: f64,
        /// Second parameter of the second distribution.
        b2: f64,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn out_err(e: std::io::Error) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("cannot write output: {e}"),
    }
}

/// Parses `args` and runs the command, returning the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn execution(cli: &Cli, configured: Option<usize>) -> Execution {
    Execution::from_workers(cli.workers.map(|w| w as usize).or(configured))
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    match &cli.command {
        Command::Compute => cmd_compute(cli, stdout, stderr),
        Command::Study {
            study_id,
            ybar,
            mu,
            bins,
        } => cmd_study(cli, *study_id, *ybar, *mu, *bins, stdout),
        Command::TheoryPmf {
            v,
            ybar,
            n,
            z,
            sigma,
            mu0,
            mu,
            mu_draws,
            t_draws,
            l,
        } => {
            let query = PmfQuery {
                v: v.unwrap_or(0),
                ybar: *ybar,
                n: *n,
                z: *z,
                sigma: *sigma,
                mu0: *mu0,
                mu_draws: *mu_draws,
                t_draws: *t_draws,
                fixed_mu: *mu,
                l: l.unwrap_or_else(|| default_l(*n, *z)),
                seed: cli.seed.unwrap_or(0),
            };
            cmd_theory_pmf(cli, &query, v.is_some(), stdout)
        }
        Command::PropCheck {
            mode,
            n,
            z,
            sigma,
            ybar,
            mu0,
            l,
        } => cmd_prop_check(*mode, *n, *z, *sigma, *ybar, *mu0, *l, stdout),
        Command::Distance {
            family,
            a1,
            b1,
            a2,
            b2,
        } => cmd_distance(*family, [*a1, *b1, *a2, *b2], stdout),
    }
}

fn read_config_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

fn cmd_compute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| usage("compute requires --config PATH"))?;
    let mut cfg = parse_config(&read_config_text(path)?)?;
    if let Some(seed) = cli.seed {
        cfg.engine.seed = seed;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let problem = cfg.problem(base)?;
    let result = problem.prepare()?.run(execution(cli, cfg.engine.workers))?;
    writeln!(stdout, "MOPESS: {}", format_float(result.mopess)).map_err(out_err)?;
    writeln!(stdout, "q05: {}", format_float(result.quantiles.q05)).map_err(out_err)?;
    writeln!(stdout, "q50: {}", format_float(result.quantiles.q50)).map_err(out_err)?;
    writeln!(stdout, "q95: {}", format_float(result.quantiles.q95)).map_err(out_err)?;
    if result.warning {
        writeln!(
            stderr,
            "warning: {} of realizations reached the boundary |m_n| = L - n (above {}); increase L",
            format_float(result.boundary_fraction),
            format_float(BOUNDARY_WARNING_FRACTION)
        )
        .map_err(out_err)?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.path.as_ref().map(|p| base.join(p)));
    if let Some(out) = out {
        let env = ResultEnvelope {
            provenance: Provenance::new(cfg.engine.seed, &cfg.canonical()?),
            payload: Payload::Result(result),
        };
        write_result(&env, &out)?;
    }
    Ok(EXIT_OK)
}

fn cmd_study(
    cli: &Cli,
    study_id: StudyId,
    ybar: f64,
    mu: f64,
    bins: usize,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = parse_study_config(&read_config_text(path)?)?;
            if cfg.study_id != study_id {
                return Err(usage(format!(
                    "config is for study `{}`, not `{study_id}`",
                    cfg.study_id
                )));
            }
            cfg
        }
        None => {
            let scale = match cli.scale {
                Some(ScaleArg::Paper) => Scale::Paper,
                _ => Scale::Desk,
            };
            StudyConfig::at_scale(study_id, scale)
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let exec = execution(cli, None);
    let output = if study_id == StudyId::GaussianConditionalFig3 {
        let c = run_conditional_study(&cfg, ybar, mu, exec)?;
        writeln!(
            stdout,
            "empirical mean: {} (se {})\ntheory mean: {}\ntotal variation: {}",
            format_float(c.empirical_mean),
            format_float(c.empirical_std_error),
            format_float(c.theory_mean),
            format_float(c.total_variation)
        )
        .map_err(out_err)?;
        StudyOutput {
            rows: Vec::new(),
            histogram: Some(c.histogram),
        }
    } else {
        let out = run_study(&cfg, exec)?;
        let mean = out.rows.iter().map(|r| r.mopess).sum::<f64>() / out.rows.len().max(1) as f64;
        writeln!(
            stdout,
            "datasets: {}\nmean MOPESS: {}",
            out.rows.len(),
            format_float(mean)
        )
        .map_err(out_err)?;
        out
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(format!("{study_id}.csv"));
    let canonical = serde_json::to_string(&cfg).map_err(|e| usage(e.to_string()))?;
    let binned = binned_summary(&output.rows, bins)?;
    let env = ResultEnvelope {
        provenance: Provenance::new(cfg.seed, &canonical),
        payload: Payload::Study(output),
    };
    write_result(&env, &path)?;
    if !binned.is_empty() {
        write_atomic(&companion(&path, "bins.csv"), bins_csv(&binned).as_bytes())?;
    }
    writeln!(stdout, "wrote {}", path.display()).map_err(out_err)?;
    Ok(EXIT_OK)
}

fn cmd_theory_pmf(
    cli: &Cli,
    query: &PmfQuery,
    single: bool,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    if single {
        let est = opess_pmf(query)?;
        writeln!(stdout, "{}", format_float(est.probability)).map_err(out_err)?;
        return Ok(EXIT_OK);
    }
    let table = opess_pmf_table(query, execution(cli, None))?;
    let mut text = String::from("v,probability,std_error\n");
    for e in &table {
        text.push_str(&format!(
            "{},{},{}\n",
            e.v,
            format_float(e.probability),
            format_float(e.std_error)
        ));
    }
    match &cli.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => stdout.write_all(text.as_bytes()).map_err(out_err)?,
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_prop_check(
    mode: ModeArg,
    n: usize,
    z: f64,
    sigma: f64,
    ybar: f64,
    mu0: f64,
    l: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let l = l.unwrap_or(n + 200 * (n as f64 + z).ceil() as usize);
    let mode = match mode {
        ModeArg::Prior => ChainMode::Prior,
        ModeArg::PosteriorPredictive => ChainMode::PosteriorPredictive,
        ModeArg::Bootstrap => ChainMode::Bootstrap,
    };
    let c = crate::theory::chain_curves(mode, n, z, sigma, ybar, mu0, l)?;
    let m_n = c.realization.m_n;
    writeln!(stdout, "m_n = {m_n}").map_err(out_err)?;
    let mut checks: Vec<(String, bool)> = Vec::new();
    match mode {
        ChainMode::Prior => {
            if z.fract() == 0.0 {
                checks.push((format!("m_n = z = {z}"), m_n as f64 == z));
            } else {
                checks.push((
                    format!("|m_n - z| < 1 with z = {z}"),
                    (m_n as f64 - z).abs() < 1.0,
                ));
            }
        }
        ChainMode::PosteriorPredictive => {
            checks.push((format!("m_n >= z = {z}"), m_n as f64 >= z));
            let above = c.w.iter().zip(&c.w_tilde).skip(1).all(|(w, wt)| wt > w);
            checks.push((
                "mirror distance exceeds primary for all m > n".into(),
                above,
            ));
        }
        ChainMode::Bootstrap => {
            let gap = (ybar - posterior_mean(n, z, ybar, mu0)).abs();
            let bound = sigma / (n as f64).sqrt();
            if gap > bound {
                checks.push(("m_n < 0 when |ybar - mu_n| > sigma/sqrt(n)".into(), m_n < 0));
            } else {
                writeln!(
                    stdout,
                    "SKIP m_n < 0: |ybar - mu_n| = {} does not exceed sigma/sqrt(n) = {}",
                    format_float(gap),
                    format_float(bound)
                )
                .map_err(out_err)?;
            }
        }
    }
    let mut ok = true;
    for (name, pass) in &checks {
        ok &= *pass;
        writeln!(stdout, "{} {name}", if *pass { "PASS" } else { "FAIL" }).map_err(out_err)?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_VALIDATION })
}

fn cmd_distance(
    family: DistanceFamily,
    p: [f64; 4],
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let (a, b) = match family {
        DistanceFamily::Gaussian => {
            for v in [p[1], p[3]] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Domain(format!("variance must be > 0, got {v}")).into());
                }
            }
            (
                Posterior::Gaussian1D(Gaussian1D {
                    mean: p[0],
                    var: p[1],
                }),
                Posterior::Gaussian1D(Gaussian1D {
                    mean: p[2],
                    var: p[3],
                }),
            )
        }
        DistanceFamily::Beta => (
            Posterior::Beta(BetaParams { a: p[0], b: p[1] }),
            Posterior::Beta(BetaParams { a: p[2], b: p[3] }),
        ),
    };
    let d = w2sq(
        &a,
        &b,
        &clustered_gauss_legendre(crate::engine::DEFAULT_QUADRATURE_NODES),
    )?;
    writeln!(stdout, "{}", format_float(d.value)).map_err(out_err)?;
    Ok(EXIT_OK)
}
