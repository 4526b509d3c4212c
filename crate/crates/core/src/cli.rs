//! Command-line surface: argument definitions and the drivers behind the
//! estimate/test/ci/mc/power subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::inference::{
    ai_test, ai_variance, invert_ci, permutation_test, sign_changes_test, SearchGrid, TestMethod,
};
use crate::io::{
    load_config_file, load_csv, render_analysis, render_mc_rows, AnalysisReport, CiReport, McRow,
    PartialConfig, RunConfig, TestReport,
};
use crate::matching::estimate;
use crate::sample::Sample;
use crate::simulation::{run_mc_power, run_mc_size, McConfig};

#[derive(Debug, Parser)]
#[command(
    name = "fewmatch",
    version,
    about = "Nearest-neighbor ATT estimation with randomization inference for few treated units"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Matching estimate of the ATT on a dataset
    Estimate(CommonArgs),
    /// Tests of H0: tau = c (sign changes, permutations, asymptotic)
    Test(CommonArgs),
    /// Confidence interval by inverting one of the tests
    Ci(CommonArgs),
    /// Monte Carlo size study on a synthetic design
    Mc(CommonArgs),
    /// Monte Carlo power curve, optionally size-adjusted for the ai test
    Power(CommonArgs),
}

impl CliCommand {
    fn name(&self) -> &'static str {
        match self {
            CliCommand::Estimate(_) => "estimate",
            CliCommand::Test(_) => "test",
            CliCommand::Ci(_) => "ci",
            CliCommand::Mc(_) => "mc",
            CliCommand::Power(_) => "power",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            CliCommand::Estimate(a)
            | CliCommand::Test(a)
            | CliCommand::Ci(a)
            | CliCommand::Mc(a)
            | CliCommand::Power(a) => a,
        }
    }
}

/// Flags shared by every subcommand; unset flags fall back to the config
/// file and then to defaults.
#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// Flat JSON config file; command-line flags override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with columns y, w, x1..xk
    #[arg(long)]
    pub input: Option<String>,
    /// Outcome column name
    #[arg(long)]
    pub y_col: Option<String>,
    /// Treatment column name
    #[arg(long)]
    pub w_col: Option<String>,
    /// Number of matches (comma list for mc/power grids)
    #[arg(long)]
    pub m: Option<String>,
    /// Distance metric: euclid or mahalanobis
    #[arg(long)]
    pub metric: Option<String>,
    /// CSV file with a k x k positive-definite weight matrix
    #[arg(long)]
    pub v_matrix: Option<String>,
    /// Covariate columns (0-based, comma list) requiring exact equality
    #[arg(long)]
    pub exact: Option<String>,
    /// Bias correction: off, all, or neighbors
    #[arg(long)]
    pub bias_adjust: Option<String>,
    /// Significance level
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Null value subtracted from unit effects
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    /// Tests to run: comma list of ai, sign, perm
    #[arg(long)]
    pub method: Option<String>,
    /// Permutation statistic: absmean or std
    #[arg(long)]
    pub stat: Option<String>,
    /// Seed for sampled transformation groups and Monte Carlo streams
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo replications
    #[arg(long)]
    pub reps: Option<usize>,
    /// Sampled transformations when a group is too large to enumerate
    #[arg(long)]
    pub n_draws: Option<usize>,
    /// Largest group size enumerated exhaustively
    #[arg(long)]
    pub max_enumeration: Option<u64>,
    /// Same-group matches in the asymptotic variance estimate
    #[arg(long)]
    pub j_var: Option<usize>,
    /// Output file (stdout when absent)
    #[arg(long)]
    pub output: Option<String>,
    /// Output format: csv, json-lines, or human-text
    #[arg(long)]
    pub format: Option<String>,
    /// Synthetic design a|b|c|d|e for mc/power
    #[arg(long)]
    pub panel: Option<String>,
    /// Treated mean override: zero, linear, or chi2:<dof>
    #[arg(long)]
    pub mu1: Option<String>,
    /// Treated error override: normal or chi2:<dof>[:<scale>]
    #[arg(long)]
    pub err: Option<String>,
    /// Control mean override: zero or linear
    #[arg(long)]
    pub mu0: Option<String>,
    /// Shift added to the first treated covariate (selection designs)
    #[arg(long, allow_hyphen_values = true)]
    pub x_shift: Option<f64>,
    /// True effect grid for power (comma list)
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<String>,
    /// Treated sample sizes for mc/power (comma list)
    #[arg(long)]
    pub n1: Option<String>,
    /// Control sample size for mc/power
    #[arg(long)]
    pub n0: Option<usize>,
    /// Covariate dimension for mc/power (extra columns are noise)
    #[arg(long)]
    pub k: Option<usize>,
    /// Worker threads for Monte Carlo replications
    #[arg(long)]
    pub threads: Option<usize>,
    /// Lower end of the ci search range
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    /// Upper end of the ci search range
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    /// Grid points for ci inversion
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Size-adjust the ai power curve against a tau=0 companion run
    #[arg(long)]
    pub size_adjust: Option<bool>,
}

impl CommonArgs {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            input: self.input.clone(),
            y_col: self.y_col.clone(),
            w_col: self.w_col.clone(),
            m: self.m.clone(),
            metric: self.metric.clone(),
            v_matrix: self.v_matrix.clone(),
            exact: self.exact.clone(),
            bias_adjust: self.bias_adjust.clone(),
            alpha: self.alpha,
            c: self.c,
            method: self.method.clone(),
            stat: self.stat.clone(),
            seed: self.seed,
            reps: self.reps,
            n_draws: self.n_draws,
            max_enumeration: self.max_enumeration,
            j_var: self.j_var,
            output: self.output.clone(),
            format: self.format.clone(),
            panel: self.panel.clone(),
            mu1: self.mu1.clone(),
            err: self.err.clone(),
            mu0: self.mu0.clone(),
            x_shift: self.x_shift,
            tau: self.tau.clone(),
            n1: self.n1.clone(),
            n0: self.n0,
            k: self.k,
            threads: self.threads,
            lo: self.lo,
            hi: self.hi,
            grid_points: self.grid_points,
            size_adjust: self.size_adjust,
        }
    }
}

/// A completed run: the rendered body plus any ingestion warnings.
#[derive(Debug)]
pub struct RunOutput {
    pub config: RunConfig,
    pub body: String,
    pub warnings: Vec<String>,
}

/// Resolves configuration and dispatches the subcommand.
pub fn execute(cli: &Cli) -> Result<RunOutput> {
    let args = cli.command.args();
    let mut partial = args.partial();
    if let Some(path) = &args.config {
        partial = partial.over(load_config_file(path)?);
    }
    let config = RunConfig::resolve(cli.command.name(), partial)?;
    let (body, warnings) = match cli.command {
        CliCommand::Estimate(_) => run_estimate(&config)?,
        CliCommand::Test(_) => run_test(&config)?,
        CliCommand::Ci(_) => run_ci(&config)?,
        CliCommand::Mc(_) => (run_mc(&config)?, Vec::new()),
        CliCommand::Power(_) => (run_power(&config)?, Vec::new()),
    };
    Ok(RunOutput {
        config,
        body,
        warnings,
    })
}

fn load_input(config: &RunConfig) -> Result<(Sample, Vec<String>)> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("--input is required for this command".into()))?;
    load_csv(Path::new(path), &config.y_col, &config.w_col)
}

fn base_report(
    command: &str,
    sample: &Sample,
    sets: &crate::matching::MatchedSets,
    estimate_value: f64,
    bias_adjusted: bool,
    config: &RunConfig,
) -> AnalysisReport {
    AnalysisReport {
        command: command.to_string(),
        estimate: estimate_value,
        n1: sample.n1(),
        n0: sample.n0(),
        k: sample.k(),
        m: sets.m(),
        component_count: sets.components().len(),
        shared_neighbors: sets.has_shared_neighbors(),
        sign_min_attainable_p: 2.0 * (-(sets.components().len() as f64)).exp2(),
        bias_adjusted,
        tests: Vec::new(),
        ci: None,
        config: config.clone(),
    }
}

fn run_estimate(config: &RunConfig) -> Result<(String, Vec<String>)> {
    let (sample, warnings) = load_input(config)?;
    let spec = config.match_spec()?;
    let (sets, effects) = estimate(&sample, &spec)?;
    let report = base_report(
        "estimate",
        &sample,
        &sets,
        effects.tau_hat,
        effects.bias_adjusted,
        config,
    );
    Ok((render_analysis(&report, config.output_format())?, warnings))
}

fn test_reports(
    sample: &Sample,
    sets: &crate::matching::MatchedSets,
    effects: &crate::matching::UnitEffects,
    config: &RunConfig,
) -> Result<Vec<TestReport>> {
    let spec = config.match_spec()?;
    let tc = config.test_config();
    let mut out = Vec::new();
    for method in config.test_methods() {
        let report = match method {
            TestMethod::SignChanges => {
                let r = sign_changes_test(effects, sets.components(), &tc)?;
                TestReport {
                    method: "sign".into(),
                    statistic: r.statistic,
                    p_value: r.p_value,
                    reject: r.reject,
                    group_size: Some(r.group_size),
                    enumerated: Some(r.enumerated),
                    critical_value: Some(r.critical_value),
                    min_attainable_p: Some(r.min_attainable_p),
                    std_error: None,
                    z: None,
                }
            }
            TestMethod::Permutation => {
                let r = permutation_test(sample, sets, &spec, &tc)?;
                TestReport {
                    method: "perm".into(),
                    statistic: r.statistic,
                    p_value: r.p_value,
                    reject: r.reject,
                    group_size: Some(r.group_size),
                    enumerated: Some(r.enumerated),
                    critical_value: Some(r.critical_value),
                    min_attainable_p: Some(r.min_attainable_p),
                    std_error: None,
                    z: None,
                }
            }
            TestMethod::Ai => {
                let parts = ai_variance(sample, sets, &spec, effects, config.j_var)?;
                let r = ai_test(effects, &parts, config.alpha)?;
                TestReport {
                    method: "ai".into(),
                    statistic: r.z,
                    p_value: r.p_value,
                    reject: r.reject,
                    group_size: None,
                    enumerated: None,
                    critical_value: None,
                    min_attainable_p: None,
                    std_error: Some(r.std_error),
                    z: Some(r.z),
                }
            }
        };
        out.push(report);
    }
    Ok(out)
}

fn run_test(config: &RunConfig) -> Result<(String, Vec<String>)> {
    let (sample, warnings) = load_input(config)?;
    let spec = config.match_spec()?;
    let (sets, effects) = estimate(&sample, &spec)?;
    let mut report = base_report(
        "test",
        &sample,
        &sets,
        effects.tau_hat,
        effects.bias_adjusted,
        config,
    );
    report.tests = test_reports(&sample, &sets, &effects, config)?;
    Ok((render_analysis(&report, config.output_format())?, warnings))
}

fn run_ci(config: &RunConfig) -> Result<(String, Vec<String>)> {
    let (sample, warnings) = load_input(config)?;
    let methods = config.test_methods();
    if methods.len() != 1 {
        return Err(Error::Config(
            "ci needs exactly one --method (ai, sign, or perm)".into(),
        ));
    }
    let (lo, hi) = match (config.lo, config.hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            return Err(Error::Config(
                "ci needs a search range: --lo and --hi".into(),
            ))
        }
    };
    let spec = config.match_spec()?;
    let (sets, effects) = estimate(&sample, &spec)?;
    let ci = invert_ci(
        &sample,
        &spec,
        &config.test_config(),
        methods[0],
        SearchGrid {
            lo,
            hi,
            points: config.grid_points,
        },
    )?;
    let mut report = base_report(
        "ci",
        &sample,
        &sets,
        effects.tau_hat,
        effects.bias_adjusted,
        config,
    );
    report.tests = test_reports(&sample, &sets, &effects, config)?;
    report.ci = Some(CiReport {
        method: methods[0].name().into(),
        lower: ci.lower,
        upper: ci.upper,
        lower_censored: ci.lower_censored,
        upper_censored: ci.upper_censored,
        range_censored: ci.range_censored(),
    });
    Ok((render_analysis(&report, config.output_format())?, warnings))
}

fn mc_config(config: &RunConfig, m: usize) -> Result<McConfig> {
    Ok(McConfig {
        reps: config.reps,
        master_seed: config.seed,
        tests: config.test_methods(),
        match_spec: config.match_spec_with_m(m)?,
        test_config: config.test_config(),
        j_var: config.j_var,
        threads: config.threads,
    })
}

fn run_mc(config: &RunConfig) -> Result<String> {
    if config.taus.iter().any(|&t| t != 0.0) {
        return Err(Error::Config(
            "mc is a size study with tau = 0; use the power subcommand for tau != 0".into(),
        ));
    }
    if config.c != 0.0 {
        return Err(Error::Config("mc tests the null c = 0".into()));
    }
    let mut rows = Vec::new();
    for &n1 in &config.n1 {
        for &m in &config.m {
            let dgp = config.dgp(n1, config.n0, 0.0)?;
            let mc = mc_config(config, m)?;
            let result = run_mc_size(&dgp, &mc)?;
            for rate in &result.rates {
                rows.push(McRow {
                    panel: config.panel.clone(),
                    n1,
                    n0: config.n0,
                    m,
                    test: rate.test.name().into(),
                    tau: 0.0,
                    rate: rate.rate,
                    mc_se: rate.se,
                    size_adjusted: rate.size_adjusted,
                    tau_mean: result.tau_mean,
                    tau_sd: result.tau_sd,
                    shared_nn_rate: result.shared_nn_rate,
                    reps: result.reps,
                    seed: config.seed,
                });
            }
        }
    }
    render_mc_rows(&rows, config, config.output_format())
}

fn run_power(config: &RunConfig) -> Result<String> {
    let mut rows = Vec::new();
    for &n1 in &config.n1 {
        for &m in &config.m {
            let dgp = config.dgp(n1, config.n0, 0.0)?;
            let mc = mc_config(config, m)?;
            let curve = run_mc_power(&dgp, &config.taus, &mc, config.size_adjust)?;
            for point in &curve {
                for rate in &point.result.rates {
                    rows.push(McRow {
                        panel: config.panel.clone(),
                        n1,
                        n0: config.n0,
                        m,
                        test: rate.test.name().into(),
                        tau: point.tau,
                        rate: rate.rate,
                        mc_se: rate.se,
                        size_adjusted: rate.size_adjusted,
                        tau_mean: point.result.tau_mean,
                        tau_sd: point.result.tau_sd,
                        shared_nn_rate: point.result.shared_nn_rate,
                        reps: point.result.reps,
                        seed: config.seed,
                    });
                }
            }
        }
    }
    render_mc_rows(&rows, config, config.output_format())
}
