//! Dataset ingestion, configuration resolution, and report serialization.
//!
//! Configuration comes from an optional flat JSON file plus command-line
//! flags, with flags taking precedence and documented defaults filling the
//! rest.
//! The resolved configuration is echoed into every output for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{StatVariant, TestConfig, TestMethod};
use crate::linalg::Mat;
use crate::matching::{BiasAdjust, MatchSpec, Metric};
use crate::sample::Sample;
use crate::simulation::{DgpSpec, Mu0Kind, Mu1Kind, Panel, TreatedError};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Loads a sample from a headered CSV file. Column names are matched
/// case-insensitively; covariates are the columns x1..xk; other columns are
/// ignored with a warning.
pub fn load_csv(path: &Path, y_col: &str, w_col: &str) -> Result<(Sample, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, y_col, w_col)
}

pub fn parse_csv(text: &str, y_col: &str, w_col: &str) -> Result<(Sample, Vec<String>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Data("empty input file".into()))?;
    let header: Vec<String> = header_line
        .split(',')
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();

    let y_name = y_col.to_ascii_lowercase();
    let w_name = w_col.to_ascii_lowercase();
    let find_unique = |name: &str| -> Result<usize> {
        let hits: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match hits.len() {
            0 => Err(Error::Data(format!("missing required column '{name}'"))),
            1 => Ok(hits[0]),
            _ => Err(Error::Data(format!("duplicate column '{name}'"))),
        }
    };
    let y_idx = find_unique(&y_name)?;
    let w_idx = find_unique(&w_name)?;

    // covariate columns x1..xk
    let mut x_cols: Vec<(usize, usize)> = Vec::new(); // (covariate number, header index)
    let mut warnings = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if i == y_idx || i == w_idx {
            continue;
        }
        if let Some(num) = h
            .strip_prefix('x')
            .and_then(|rest| rest.parse::<usize>().ok())
        {
            if num >= 1 {
                x_cols.push((num, i));
                continue;
            }
        }
        warnings.push(format!("ignoring column '{h}'"));
    }
    x_cols.sort_unstable();
    if x_cols.is_empty() {
        return Err(Error::Data("no covariate columns x1..xk found".into()));
    }
    for (pos, &(num, _)) in x_cols.iter().enumerate() {
        if num != pos + 1 {
            return Err(Error::Data(format!(
                "covariate columns must be contiguous x1..xk; missing x{}",
                pos + 1
            )));
        }
    }
    if x_cols.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Data("duplicate covariate column".into()));
    }

    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut x = Vec::new();
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
        if cells.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row}: has {} cells, header has {}",
                cells.len(),
                header.len()
            )));
        }
        let parse = |idx: usize, name: &str| -> Result<f64> {
            cells[idx].parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "row {row}, column {name}: cannot parse '{}'",
                    cells[idx]
                ))
            })
        };
        y.push(parse(y_idx, &y_name)?);
        w.push(parse(w_idx, &w_name)?);
        let mut xr = Vec::with_capacity(x_cols.len());
        for &(num, idx) in &x_cols {
            xr.push(parse(idx, &format!("x{num}"))?);
        }
        x.push(xr);
    }
    if y.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let sample = Sample::from_columns(y, &w, &x)?;
    Ok((sample, warnings))
}

/// Serializes a sample back into the CSV layout `load_csv` accepts.
pub fn write_sample_csv(sample: &Sample) -> String {
    let mut out = String::from("y,w");
    for j in 1..=sample.k() {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for i in 0..sample.n() {
        out.push_str(&format!(
            "{},{}",
            sample.y(i),
            if sample.is_treated(i) { 1 } else { 0 }
        ));
        for v in sample.x_row(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Loads a k x k weight matrix from a headerless CSV of numbers.
pub fn load_v_matrix(path: &Path) -> Result<Mat> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("v-matrix row {i}: cannot parse '{c}'")))
            })
            .collect();
        rows.push(row?);
    }
    Mat::from_rows(&rows)
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Raw configuration keys as they appear in the JSON file and on the
/// command line. Unknown keys in the file are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub input: Option<String>,
    pub y_col: Option<String>,
    pub w_col: Option<String>,
    pub m: Option<String>,
    pub metric: Option<String>,
    pub v_matrix: Option<String>,
    pub exact: Option<String>,
    pub bias_adjust: Option<String>,
    pub alpha: Option<f64>,
    pub c: Option<f64>,
    pub method: Option<String>,
    pub stat: Option<String>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub n_draws: Option<usize>,
    pub max_enumeration: Option<u64>,
    pub j_var: Option<usize>,
    pub output: Option<String>,
    pub format: Option<String>,
    pub panel: Option<String>,
    pub mu1: Option<String>,
    pub err: Option<String>,
    pub mu0: Option<String>,
    pub x_shift: Option<f64>,
    pub tau: Option<String>,
    pub n1: Option<String>,
    pub n0: Option<usize>,
    pub k: Option<usize>,
    pub threads: Option<usize>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub grid_points: Option<usize>,
    pub size_adjust: Option<bool>,
}

impl PartialConfig {
    /// Overlays `self` (higher precedence) on `base`.
    pub fn over(self, base: PartialConfig) -> PartialConfig {
        macro_rules! pick {
            ($field:ident) => {
                self.$field.or(base.$field)
            };
        }
        PartialConfig {
            input: pick!(input),
            y_col: pick!(y_col),
            w_col: pick!(w_col),
            m: pick!(m),
            metric: pick!(metric),
            v_matrix: pick!(v_matrix),
            exact: pick!(exact),
            bias_adjust: pick!(bias_adjust),
            alpha: pick!(alpha),
            c: pick!(c),
            method: pick!(method),
            stat: pick!(stat),
            seed: pick!(seed),
            reps: pick!(reps),
            n_draws: pick!(n_draws),
            max_enumeration: pick!(max_enumeration),
            j_var: pick!(j_var),
            output: pick!(output),
            format: pick!(format),
            panel: pick!(panel),
            mu1: pick!(mu1),
            err: pick!(err),
            mu0: pick!(mu0),
            x_shift: pick!(x_shift),
            tau: pick!(tau),
            n1: pick!(n1),
            n0: pick!(n0),
            k: pick!(k),
            threads: pick!(threads),
            lo: pick!(lo),
            hi: pick!(hi),
            grid_points: pick!(grid_points),
            size_adjust: pick!(size_adjust),
        }
    }
}

pub fn load_config_file(path: &Path) -> Result<PartialConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("config file: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    JsonLines,
    HumanText,
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{what}: cannot parse '{p}'")))
        })
        .collect()
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{what}: cannot parse '{p}'")))
        })
        .collect()
}

/// A fully resolved run: every knob has a concrete value and is echoed into
/// the output verbatim.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub input: Option<String>,
    pub y_col: String,
    pub w_col: String,
    /// Match counts; scalar commands use the first entry.
    pub m: Vec<usize>,
    pub metric: String,
    pub v_matrix: Option<String>,
    pub exact: Vec<usize>,
    pub bias_adjust: String,
    pub alpha: f64,
    pub c: f64,
    pub methods: Vec<String>,
    pub stat: String,
    pub seed: u64,
    pub reps: usize,
    pub n_draws: usize,
    pub max_enumeration: u64,
    pub j_var: usize,
    /// Destination only; not part of what was computed, so it stays out of
    /// the echo and files written to different paths still compare equal.
    #[serde(skip)]
    pub output: Option<String>,
    pub format: String,
    pub panel: String,
    pub mu1: Option<String>,
    pub err: Option<String>,
    pub mu0: Option<String>,
    pub x_shift: f64,
    pub taus: Vec<f64>,
    pub n1: Vec<usize>,
    pub n0: usize,
    pub k: usize,
    /// Worker count never changes results, so it stays out of the echoed
    /// provenance and reruns are byte-identical at any parallelism.
    #[serde(skip)]
    pub threads: Option<usize>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub grid_points: usize,
    pub size_adjust: bool,
}

impl RunConfig {
    /// Applies the documented defaults over the merged partial configuration.
    pub fn resolve(subcommand: &str, p: PartialConfig) -> Result<RunConfig> {
        let m = match p.m {
            None => match subcommand {
                "mc" => vec![1, 4, 10],
                "power" => vec![4],
                _ => vec![1],
            },
            Some(s) => parse_usize_list(&s, "m")?,
        };
        if m.is_empty() || m.contains(&0) {
            return Err(Error::Config("m must be >= 1".into()));
        }
        let n1 = match p.n1 {
            None => match subcommand {
                "power" => vec![50],
                _ => vec![5, 10, 25, 50],
            },
            Some(s) => parse_usize_list(&s, "n1")?,
        };
        let taus = match p.tau {
            None => match subcommand {
                "power" => vec![0.0, 0.25, 0.5, 0.75, 1.0],
                _ => vec![0.0],
            },
            Some(s) => parse_f64_list(&s, "tau")?,
        };
        let methods: Vec<String> = p
            .method
            .unwrap_or_else(|| match subcommand {
                "ci" => "sign".to_string(),
                _ => "sign,ai".to_string(),
            })
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        for mth in &methods {
            if !matches!(mth.as_str(), "ai" | "sign" | "perm") {
                return Err(Error::Config(format!(
                    "unknown method '{mth}' (expected ai, sign, or perm)"
                )));
            }
        }
        let metric = p.metric.unwrap_or_else(|| "euclid".into());
        if !matches!(metric.as_str(), "euclid" | "mahalanobis") {
            return Err(Error::Config(format!("unknown metric '{metric}'")));
        }
        let bias_adjust = p.bias_adjust.unwrap_or_else(|| "off".into());
        if !matches!(bias_adjust.as_str(), "off" | "all" | "neighbors") {
            return Err(Error::Config(format!(
                "unknown bias-adjust '{bias_adjust}'"
            )));
        }
        let stat = p.stat.unwrap_or_else(|| "absmean".into());
        if !matches!(stat.as_str(), "absmean" | "std") {
            return Err(Error::Config(format!("unknown stat '{stat}'")));
        }
        let format = p.format.unwrap_or_else(|| "human-text".into());
        if !matches!(format.as_str(), "csv" | "json-lines" | "human-text") {
            return Err(Error::Config(format!("unknown format '{format}'")));
        }
        let alpha = p.alpha.unwrap_or(0.10);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha={alpha} outside (0,1)")));
        }
        let reps = p.reps.unwrap_or(2000);
        if reps == 0 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        let n_draws = p.n_draws.unwrap_or(9999);
        if n_draws == 0 {
            return Err(Error::Config("n-draws must be >= 1".into()));
        }
        let j_var = p.j_var.unwrap_or(1);
        if j_var == 0 {
            return Err(Error::Config("j-var must be >= 1".into()));
        }
        let exact = match p.exact {
            None => Vec::new(),
            Some(s) => parse_usize_list(&s, "exact")?,
        };
        let panel = p.panel.unwrap_or_else(|| "a".into());
        Panel::parse(&panel)?;
        let grid_points = p.grid_points.unwrap_or(101);
        if grid_points < 3 {
            return Err(Error::Config("grid-points must be >= 3".into()));
        }
        Ok(RunConfig {
            subcommand: subcommand.to_string(),
            input: p.input,
            y_col: p.y_col.unwrap_or_else(|| "y".into()),
            w_col: p.w_col.unwrap_or_else(|| "w".into()),
            m,
            metric,
            v_matrix: p.v_matrix,
            exact,
            bias_adjust,
            alpha,
            c: p.c.unwrap_or(0.0),
            methods,
            stat,
            seed: p.seed.unwrap_or(0),
            reps,
            n_draws,
            max_enumeration: p.max_enumeration.unwrap_or(1 << 20),
            j_var,
            output: p.output,
            format,
            panel,
            mu1: p.mu1,
            err: p.err,
            mu0: p.mu0,
            x_shift: p.x_shift.unwrap_or(0.0),
            taus,
            n1,
            n0: p.n0.unwrap_or(1000),
            k: p.k.unwrap_or(1),
            threads: p.threads,
            lo: p.lo,
            hi: p.hi,
            grid_points,
            size_adjust: p.size_adjust.unwrap_or(true),
        })
    }

    pub fn output_format(&self) -> OutputFormat {
        match self.format.as_str() {
            "csv" => OutputFormat::Csv,
            "json-lines" => OutputFormat::JsonLines,
            _ => OutputFormat::HumanText,
        }
    }

    /// Matching parameters with an explicit match count.
    pub fn match_spec_with_m(&self, m: usize) -> Result<MatchSpec> {
        let metric = match self.metric.as_str() {
            "mahalanobis" => Metric::MahalanobisFromControls,
            _ => Metric::WeightedEuclidean,
        };
        let v = match &self.v_matrix {
            None => None,
            Some(path) => Some(load_v_matrix(Path::new(path))?),
        };
        let bias_adjust = match self.bias_adjust.as_str() {
            "all" => BiasAdjust::LinearAllControls,
            "neighbors" => BiasAdjust::LinearNeighborsOnly,
            _ => BiasAdjust::Off,
        };
        Ok(MatchSpec {
            m,
            metric,
            v,
            exact_columns: self.exact.clone(),
            bias_adjust,
            center: self.c,
        })
    }

    pub fn match_spec(&self) -> Result<MatchSpec> {
        self.match_spec_with_m(self.m[0])
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            max_enumeration: self.max_enumeration,
            n_draws: self.n_draws,
            stat_variant: match self.stat.as_str() {
                "std" => StatVariant::Standardized,
                _ => StatVariant::AbsoluteMean,
            },
            seed: self.seed,
        }
    }

    pub fn test_methods(&self) -> Vec<TestMethod> {
        self.methods
            .iter()
            .map(|m| match m.as_str() {
                "ai" => TestMethod::Ai,
                "perm" => TestMethod::Permutation,
                _ => TestMethod::SignChanges,
            })
            .collect()
    }

    /// Generative model for one (n1, n0) cell, honoring panel presets and
    /// any mu1/err/mu0/x-shift overrides.
    pub fn dgp(&self, n1: usize, n0: usize, tau: f64) -> Result<DgpSpec> {
        let mut dgp = Panel::parse(&self.panel)?.dgp(n1, n0);
        dgp.tau = tau;
        dgp.k = self.k;
        if let Some(s) = &self.mu1 {
            dgp.mu1 = parse_mu1(s)?;
        }
        if let Some(s) = &self.err {
            dgp.error = parse_err(s)?;
        }
        if let Some(s) = &self.mu0 {
            dgp.mu0 = match s.as_str() {
                "zero" => Mu0Kind::Zero,
                "linear" => Mu0Kind::Linear,
                other => return Err(Error::Config(format!("unknown mu0 '{other}'"))),
            };
        }
        dgp.treated_x_shift = self.x_shift;
        Ok(dgp)
    }
}

fn parse_mu1(s: &str) -> Result<Mu1Kind> {
    match s {
        "zero" => Ok(Mu1Kind::Zero),
        "linear" => Ok(Mu1Kind::Linear),
        other => {
            if let Some(rest) = other.strip_prefix("chi2:") {
                let dof = rest
                    .parse::<u32>()
                    .map_err(|_| Error::Config(format!("mu1: bad dof '{rest}'")))?;
                Ok(Mu1Kind::Chi2Transform { dof })
            } else {
                Err(Error::Config(format!("unknown mu1 '{other}'")))
            }
        }
    }
}

fn parse_err(s: &str) -> Result<TreatedError> {
    match s {
        "normal" => Ok(TreatedError::StandardNormal),
        other => {
            if let Some(rest) = other.strip_prefix("chi2:") {
                let mut parts = rest.split(':');
                let dof = parts
                    .next()
                    .unwrap_or("")
                    .parse::<u32>()
                    .map_err(|_| Error::Config(format!("err: bad dof in '{other}'")))?;
                let scale = match parts.next() {
                    None => 1.0,
                    Some(sc) => sc
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("err: bad scale in '{other}'")))?,
                };
                Ok(TreatedError::Chi2Centered { dof, scale })
            } else {
                Err(Error::Config(format!("unknown err '{other}'")))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One test's entry inside an analysis report.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_size: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enumerated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_attainable_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CiReport {
    pub method: String,
    pub lower: f64,
    pub upper: f64,
    pub lower_censored: bool,
    pub upper_censored: bool,
    pub range_censored: bool,
}

/// Report for the estimate/test/ci commands.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub command: String,
    pub estimate: f64,
    pub n1: usize,
    pub n0: usize,
    pub k: usize,
    pub m: usize,
    pub component_count: usize,
    pub shared_neighbors: bool,
    /// Smallest p-value the sign-changes group can produce here (2/2^C).
    pub sign_min_attainable_p: f64,
    pub bias_adjusted: bool,
    pub tests: Vec<TestReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<CiReport>,
    pub config: RunConfig,
}

/// One row of a Monte Carlo table.
#[derive(Debug, Clone, Serialize)]
pub struct McRow {
    pub panel: String,
    pub n1: usize,
    pub n0: usize,
    pub m: usize,
    pub test: String,
    pub tau: f64,
    pub rate: f64,
    pub mc_se: f64,
    pub size_adjusted: bool,
    pub tau_mean: f64,
    pub tau_sd: f64,
    pub shared_nn_rate: f64,
    pub reps: usize,
    pub seed: u64,
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const ANALYSIS_CSV_HEADER: &str = "command,estimate,n1,n0,k,m,component_count,shared_neighbors,\
sign_min_attainable_p,bias_adjusted,method,statistic,p_value,reject,group_size,enumerated,\
critical_value,min_attainable_p,std_error,z,ci_lower,ci_upper,ci_range_censored,alpha,c,seed,config";

pub fn render_analysis(report: &AnalysisReport, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::JsonLines => {
            let mut line = serde_json::to_string(report)
                .map_err(|e| Error::Data(format!("serialize: {e}")))?;
            line.push('\n');
            Ok(line)
        }
        OutputFormat::Csv => {
            let config_json = serde_json::to_string(&report.config)
                .map_err(|e| Error::Data(format!("serialize: {e}")))?;
            let mut out = String::from(ANALYSIS_CSV_HEADER);
            out.push('\n');
            let base = |method: &str,
                        stat: &str,
                        p: &str,
                        reject: &str,
                        group: &str,
                        enumerated: &str,
                        crit: &str,
                        min_p: &str,
                        se: &str,
                        z: &str|
             -> String {
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    report.command,
                    report.estimate,
                    report.n1,
                    report.n0,
                    report.k,
                    report.m,
                    report.component_count,
                    report.shared_neighbors,
                    report.sign_min_attainable_p,
                    report.bias_adjusted,
                    method,
                    stat,
                    p,
                    reject,
                    group,
                    enumerated,
                    crit,
                    min_p,
                    se,
                    z,
                    opt_f64(report.ci.as_ref().map(|c| c.lower)),
                    opt_f64(report.ci.as_ref().map(|c| c.upper)),
                    opt_bool(report.ci.as_ref().map(|c| c.range_censored)),
                    report.config.alpha,
                    report.config.c,
                    report.config.seed,
                    csv_escape(&config_json)
                )
            };
            if report.tests.is_empty() {
                out.push_str(&base("", "", "", "", "", "", "", "", "", ""));
            } else {
                for t in &report.tests {
                    out.push_str(&base(
                        &t.method,
                        &t.statistic.to_string(),
                        &t.p_value.to_string(),
                        &t.reject.to_string(),
                        &opt_u64(t.group_size),
                        &opt_bool(t.enumerated),
                        &opt_f64(t.critical_value),
                        &opt_f64(t.min_attainable_p),
                        &opt_f64(t.std_error),
                        &opt_f64(t.z),
                    ));
                }
            }
            Ok(out)
        }
        OutputFormat::HumanText => {
            let mut out = String::new();
            out.push_str(&format!("fewmatch {}\n", report.command));
            out.push_str(&format!("  estimate (tau_hat): {:.6}\n", report.estimate));
            out.push_str(&format!(
                "  sample: N1={} N0={} k={} m={}{}\n",
                report.n1,
                report.n0,
                report.k,
                report.m,
                if report.bias_adjusted {
                    " (bias-adjusted)"
                } else {
                    ""
                }
            ));
            out.push_str(&format!(
                "  shared-neighbor components: {}{} (sign-test min p = {})\n",
                report.component_count,
                if report.shared_neighbors {
                    " (shared neighbors present)"
                } else {
                    ""
                },
                report.sign_min_attainable_p
            ));
            for t in &report.tests {
                let decision = if t.reject { "reject" } else { "fail to reject" };
                let mut extra = String::new();
                if let Some(g) = t.group_size {
                    extra.push_str(&format!(
                        " K={g}{}",
                        if t.enumerated == Some(true) {
                            ""
                        } else {
                            " (sampled)"
                        }
                    ));
                }
                if let Some(mp) = t.min_attainable_p {
                    extra.push_str(&format!(" min_p={mp:.6}"));
                }
                if let Some(se) = t.std_error {
                    extra.push_str(&format!(" se={se:.6}"));
                }
                if let Some(z) = t.z {
                    extra.push_str(&format!(" z={z:.4}"));
                }
                out.push_str(&format!(
                    "  {}: statistic={:.6} p={:.6}{} -> {} at alpha={}\n",
                    t.method, t.statistic, t.p_value, extra, decision, report.config.alpha
                ));
            }
            if let Some(ci) = &report.ci {
                out.push_str(&format!(
                    "  {}% CI ({}): [{:.6}, {:.6}]{}\n",
                    (1.0 - report.config.alpha) * 100.0,
                    ci.method,
                    ci.lower,
                    ci.upper,
                    if ci.range_censored {
                        " (range-censored: no grid value rejected)"
                    } else if ci.lower_censored || ci.upper_censored {
                        " (censored at search bound)"
                    } else {
                        ""
                    }
                ));
            }
            let config_json = serde_json::to_string(&report.config)
                .map_err(|e| Error::Data(format!("serialize: {e}")))?;
            out.push_str(&format!("  config: {config_json}\n"));
            Ok(out)
        }
    }
}

const MC_CSV_HEADER: &str =
    "panel,n1,n0,m,test,tau,rate,mc_se,size_adjusted,tau_mean,tau_sd,shared_nn_rate,reps,seed";

pub fn render_mc_rows(rows: &[McRow], config: &RunConfig, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::JsonLines => {
            let mut out = String::new();
            for row in rows {
                out.push_str(
                    &serde_json::to_string(row).map_err(|e| Error::Data(format!("serialize: {e}")))?,
                );
                out.push('\n');
            }
            Ok(out)
        }
        OutputFormat::Csv => {
            let config_json = serde_json::to_string(config)
                .map_err(|e| Error::Data(format!("serialize: {e}")))?;
            let mut out = format!("# config: {config_json}\n{MC_CSV_HEADER}\n");
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    r.panel,
                    r.n1,
                    r.n0,
                    r.m,
                    r.test,
                    r.tau,
                    r.rate,
                    r.mc_se,
                    r.size_adjusted,
                    r.tau_mean,
                    r.tau_sd,
                    r.shared_nn_rate,
                    r.reps,
                    r.seed
                ));
            }
            Ok(out)
        }
        OutputFormat::HumanText => {
            let mut out = String::new();
            out.push_str(&format!(
                "{:>5} {:>5} {:>6} {:>3} {:>5} {:>7} {:>7} {:>7} {:>9} {:>9} {:>10} {:>6}\n",
                "panel", "n1", "n0", "m", "test", "tau", "rate", "mc_se", "tau_mean", "tau_sd",
                "shared_nn", "reps"
            ));
            for r in rows {
                out.push_str(&format!(
                    "{:>5} {:>5} {:>6} {:>3} {:>5} {:>7.3} {:>7.4} {:>7.4} {:>9.4} {:>9.4} {:>10.4} {:>6}\n",
                    r.panel,
                    r.n1,
                    r.n0,
                    r.m,
                    if r.size_adjusted {
                        format!("{}*", r.test)
                    } else {
                        r.test.clone()
                    },
                    r.tau,
                    r.rate,
                    r.mc_se,
                    r.tau_mean,
                    r.tau_sd,
                    r.shared_nn_rate,
                    r.reps
                ));
            }
            let config_json = serde_json::to_string(config)
                .map_err(|e| Error::Data(format!("serialize: {e}")))?;
            out.push_str(&format!("# config: {config_json}\n"));
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_load_minimal() {
        let (s, warnings) = parse_csv("y,w,x1\n1,1,0.5\n0,0,0.4\n", "y", "w").unwrap();
        assert_eq!(s.n1(), 1);
        assert_eq!(s.n0(), 1);
        assert!(warnings.is_empty());
    }

    #[test]
    fn csv_column_order_immaterial_extra_warned() {
        let (s, warnings) = parse_csv("x1,extra,Y,W\n0.5,9,1,1\n0.4,9,0,0\n", "y", "w").unwrap();
        assert_eq!(s.k(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("extra"));
    }

    #[test]
    fn csv_missing_w_column() {
        let err = parse_csv("y,x1\n1,0.5\n", "y", "w").unwrap_err();
        assert!(err.to_string().contains("missing required column 'w'"));
    }

    #[test]
    fn csv_non_binary_treatment_names_row() {
        let err = parse_csv("y,w,x1\n1,1,0.5\n1,2,0.5\n", "y", "w").unwrap_err();
        assert!(matches!(err, Error::NonBinaryTreatment { row: 1, .. }));
    }

    #[test]
    fn csv_unparsable_cell_names_location() {
        let err = parse_csv("y,w,x1\n1,1,0.5\nfoo,0,0.4\n", "y", "w").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1"), "{msg}");
        assert!(msg.contains("column y"), "{msg}");
    }

    #[test]
    fn csv_empty_file() {
        assert!(parse_csv("", "y", "w").is_err());
        assert!(parse_csv("y,w,x1\n", "y", "w").is_err());
    }

    #[test]
    fn csv_gap_in_covariates() {
        let err = parse_csv("y,w,x1,x3\n1,1,0.5,1\n0,0,0.4,2\n", "y", "w").unwrap_err();
        assert!(err.to_string().contains("missing x2"));
    }

    #[test]
    fn csv_roundtrip() {
        let (s, _) = parse_csv("y,w,x1,x2\n1.5,1,0.5,2\n0.25,0,0.4,1\n-3,0,0,0\n", "y", "w").unwrap();
        let text = write_sample_csv(&s);
        let (s2, _) = parse_csv(&text, "y", "w").unwrap();
        assert_eq!(s.n(), s2.n());
        for i in 0..s.n() {
            assert_eq!(s.y(i), s2.y(i));
            assert_eq!(s.is_treated(i), s2.is_treated(i));
            assert_eq!(s.x_row(i), s2.x_row(i));
        }
    }

    #[test]
    fn config_defaults_match_spec() {
        let cfg = RunConfig::resolve("test", PartialConfig::default()).unwrap();
        assert_eq!(cfg.m, vec![1]);
        assert_eq!(cfg.alpha, 0.10);
        assert_eq!(cfg.c, 0.0);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.reps, 2000);
        assert_eq!(cfg.metric, "euclid");
        assert_eq!(cfg.format, "human-text");
    }

    #[test]
    fn config_flags_override_file() {
        let file = PartialConfig {
            alpha: Some(0.10),
            ..Default::default()
        };
        let flags = PartialConfig {
            alpha: Some(0.05),
            ..Default::default()
        };
        let merged = flags.over(file);
        let cfg = RunConfig::resolve("test", merged).unwrap();
        assert_eq!(cfg.alpha, 0.05);
    }

    #[test]
    fn config_rejects_out_of_range() {
        let p = PartialConfig {
            m: Some("0".into()),
            ..Default::default()
        };
        assert!(matches!(
            RunConfig::resolve("estimate", p),
            Err(Error::Config(_))
        ));
        let p2 = PartialConfig {
            alpha: Some(1.5),
            ..Default::default()
        };
        assert!(RunConfig::resolve("test", p2).is_err());
    }

    #[test]
    fn config_file_unknown_key_strict() {
        let parsed: std::result::Result<PartialConfig, _> =
            serde_json::from_str(r#"{"alpha": 0.1, "wat": 3}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn dgp_overrides_parse() {
        let p = PartialConfig {
            panel: Some("e".into()),
            mu1: Some("chi2:8".into()),
            err: Some("chi2:1:2".into()),
            mu0: Some("linear".into()),
            x_shift: Some(1.0),
            ..Default::default()
        };
        let cfg = RunConfig::resolve("mc", p).unwrap();
        let dgp = cfg.dgp(5, 100, 0.0).unwrap();
        assert_eq!(dgp.mu1, Mu1Kind::Chi2Transform { dof: 8 });
        assert_eq!(
            dgp.error,
            TreatedError::Chi2Centered { dof: 1, scale: 2.0 }
        );
        assert_eq!(dgp.mu0, Mu0Kind::Linear);
        assert_eq!(dgp.treated_x_shift, 1.0);
    }
}
