//! Python bindings for the matching estimator, the randomization tests, the
//! asymptotic test, confidence intervals, and the synthetic Monte Carlo
//! engine.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fewmatch::inference::{
    ai_test, ai_variance, invert_ci, permutation_test, sign_changes_test, RandomizationResult,
    SearchGrid, StatVariant, TestConfig, TestMethod,
};
use fewmatch::matching::{estimate, BiasAdjust, MatchSpec, Metric};
use fewmatch::sample::Sample;
use fewmatch::simulation::{draw_sample, run_mc_size, McConfig, Panel};
use fewmatch::statfun;

fn err(e: fewmatch::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn build_sample(y: Vec<f64>, w: Vec<f64>, x: Vec<Vec<f64>>) -> PyResult<Sample> {
    Sample::from_columns(y, &w, &x).map_err(err)
}

fn build_spec(
    m: usize,
    metric: &str,
    bias_adjust: &str,
    c: f64,
    exact: Option<Vec<usize>>,
) -> PyResult<MatchSpec> {
    let metric = match metric {
        "euclid" => Metric::WeightedEuclidean,
        "mahalanobis" => Metric::MahalanobisFromControls,
        other => return Err(PyValueError::new_err(format!("unknown metric '{other}'"))),
    };
    let bias_adjust = match bias_adjust {
        "off" => BiasAdjust::Off,
        "all" => BiasAdjust::LinearAllControls,
        "neighbors" => BiasAdjust::LinearNeighborsOnly,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown bias_adjust '{other}'"
            )))
        }
    };
    Ok(MatchSpec {
        m,
        metric,
        v: None,
        exact_columns: exact.unwrap_or_default(),
        bias_adjust,
        center: c,
    })
}

fn build_config(
    alpha: f64,
    seed: u64,
    n_draws: usize,
    max_enumeration: u64,
    stat: &str,
) -> PyResult<TestConfig> {
    let stat_variant = match stat {
        "absmean" => StatVariant::AbsoluteMean,
        "std" => StatVariant::Standardized,
        other => return Err(PyValueError::new_err(format!("unknown stat '{other}'"))),
    };
    Ok(TestConfig {
        alpha,
        max_enumeration,
        n_draws,
        stat_variant,
        seed,
    })
}

fn randomization_dict<'py>(
    py: Python<'py>,
    r: &RandomizationResult,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("statistic", r.statistic)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("reject", r.reject)?;
    d.set_item("group_size", r.group_size)?;
    d.set_item("enumerated", r.enumerated)?;
    d.set_item("critical_value", r.critical_value)?;
    d.set_item("min_attainable_p", r.min_attainable_p)?;
    Ok(d)
}

/// Nearest-neighbor ATT estimate with the matched-set structure.
#[pyfunction]
#[pyo3(signature = (y, w, x, m=1, metric="euclid", bias_adjust="off", c=0.0, exact=None))]
#[allow(clippy::too_many_arguments)]
fn estimate_att<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    w: Vec<f64>,
    x: Vec<Vec<f64>>,
    m: usize,
    metric: &str,
    bias_adjust: &str,
    c: f64,
    exact: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = build_sample(y, w, x)?;
    let spec = build_spec(m, metric, bias_adjust, c, exact)?;
    let (sets, effects) = estimate(&sample, &spec).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("tau_hat", effects.tau_hat)?;
    d.set_item("tau_i", effects.tau_i.clone())?;
    d.set_item("center", effects.center)?;
    d.set_item("bias_adjusted", effects.bias_adjusted)?;
    d.set_item("n1", sample.n1())?;
    d.set_item("n0", sample.n0())?;
    let neighbors: Vec<Vec<usize>> = (0..sets.n1())
        .map(|t| sets.neighbors(t).iter().map(|&(r, _)| r).collect())
        .collect();
    d.set_item("neighbors", neighbors)?;
    d.set_item("components", sets.components().to_vec())?;
    d.set_item("shared_neighbors", sets.has_shared_neighbors())?;
    Ok(d)
}

/// Sign-changes randomization test of H0: tau = c.
#[pyfunction]
#[pyo3(signature = (y, w, x, m=1, alpha=0.10, c=0.0, metric="euclid", bias_adjust="off",
                    exact=None, seed=0, n_draws=9999, max_enumeration=1u64<<20))]
#[allow(clippy::too_many_arguments)]
fn sign_test<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    w: Vec<f64>,
    x: Vec<Vec<f64>>,
    m: usize,
    alpha: f64,
    c: f64,
    metric: &str,
    bias_adjust: &str,
    exact: Option<Vec<usize>>,
    seed: u64,
    n_draws: usize,
    max_enumeration: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = build_sample(y, w, x)?;
    let spec = build_spec(m, metric, bias_adjust, c, exact)?;
    let config = build_config(alpha, seed, n_draws, max_enumeration, "absmean")?;
    let (sets, effects) = estimate(&sample, &spec).map_err(err)?;
    let r = sign_changes_test(&effects, sets.components(), &config).map_err(err)?;
    let d = randomization_dict(py, &r)?;
    d.set_item("tau_hat", effects.tau_hat)?;
    Ok(d)
}

/// Within-set permutation test of H0: tau = c.
#[pyfunction]
#[pyo3(signature = (y, w, x, m=1, alpha=0.10, c=0.0, stat="absmean", metric="euclid",
                    bias_adjust="off", exact=None, seed=0, n_draws=9999,
                    max_enumeration=1u64<<20))]
#[allow(clippy::too_many_arguments)]
fn perm_test<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    w: Vec<f64>,
    x: Vec<Vec<f64>>,
    m: usize,
    alpha: f64,
    c: f64,
    stat: &str,
    metric: &str,
    bias_adjust: &str,
    exact: Option<Vec<usize>>,
    seed: u64,
    n_draws: usize,
    max_enumeration: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = build_sample(y, w, x)?;
    let spec = build_spec(m, metric, bias_adjust, c, exact)?;
    let config = build_config(alpha, seed, n_draws, max_enumeration, stat)?;
    let (sets, effects) = estimate(&sample, &spec).map_err(err)?;
    let r = permutation_test(&sample, &sets, &spec, &config).map_err(err)?;
    let d = randomization_dict(py, &r)?;
    d.set_item("tau_hat", effects.tau_hat)?;
    Ok(d)
}

/// Asymptotic normal test of H0: tau = c with the matching variance
/// estimate.
#[pyfunction]
#[pyo3(signature = (y, w, x, m=1, alpha=0.10, c=0.0, j_var=1, metric="euclid",
                    bias_adjust="off", exact=None))]
#[allow(clippy::too_many_arguments)]
fn asymptotic_test<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    w: Vec<f64>,
    x: Vec<Vec<f64>>,
    m: usize,
    alpha: f64,
    c: f64,
    j_var: usize,
    metric: &str,
    bias_adjust: &str,
    exact: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = build_sample(y, w, x)?;
    let spec = build_spec(m, metric, bias_adjust, c, exact)?;
    let (sets, effects) = estimate(&sample, &spec).map_err(err)?;
    let parts = ai_variance(&sample, &sets, &spec, &effects, j_var).map_err(err)?;
    let r = ai_test(&effects, &parts, alpha).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("estimate", r.estimate)?;
    d.set_item("std_error", r.std_error)?;
    d.set_item("z", r.z)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("reject", r.reject)?;
    d.set_item("variance_conditional", r.variance.conditional)?;
    d.set_item("variance_heterogeneity", r.variance.heterogeneity_raw)?;
    Ok(d)
}

/// Confidence interval by inverting one of the tests over a grid of null
/// values.
#[pyfunction]
#[pyo3(signature = (y, w, x, lo, hi, method="sign", grid_points=101, m=1, alpha=0.10,
                    stat="absmean", metric="euclid", bias_adjust="off", exact=None, seed=0,
                    n_draws=9999, max_enumeration=1u64<<20))]
#[allow(clippy::too_many_arguments)]
fn confidence_interval<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    w: Vec<f64>,
    x: Vec<Vec<f64>>,
    lo: f64,
    hi: f64,
    method: &str,
    grid_points: usize,
    m: usize,
    alpha: f64,
    stat: &str,
    metric: &str,
    bias_adjust: &str,
    exact: Option<Vec<usize>>,
    seed: u64,
    n_draws: usize,
    max_enumeration: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = build_sample(y, w, x)?;
    let spec = build_spec(m, metric, bias_adjust, 0.0, exact)?;
    let config = build_config(alpha, seed, n_draws, max_enumeration, stat)?;
    let method = match method {
        "ai" => TestMethod::Ai,
        "sign" => TestMethod::SignChanges,
        "perm" => TestMethod::Permutation,
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    };
    let ci = invert_ci(
        &sample,
        &spec,
        &config,
        method,
        SearchGrid {
            lo,
            hi,
            points: grid_points,
        },
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("lower", ci.lower)?;
    d.set_item("upper", ci.upper)?;
    d.set_item("alpha", ci.alpha)?;
    d.set_item("method", method.name())?;
    d.set_item("lower_censored", ci.lower_censored)?;
    d.set_item("upper_censored", ci.upper_censored)?;
    d.set_item("range_censored", ci.range_censored())?;
    Ok(d)
}

/// One deterministic draw from a synthetic panel design; returns
/// (y, w, x) with treated rows first.
#[pyfunction]
#[pyo3(signature = (panel, n1, n0, seed=0, tau=0.0))]
#[allow(clippy::type_complexity)]
fn draw_panel_sample(
    panel: &str,
    n1: usize,
    n0: usize,
    seed: u64,
    tau: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let mut dgp = Panel::parse(panel).map_err(err)?.dgp(n1, n0);
    dgp.tau = tau;
    let sample = draw_sample(&dgp, seed).map_err(err)?;
    let n = sample.n();
    let y = (0..n).map(|i| sample.y(i)).collect();
    let w = (0..n)
        .map(|i| if sample.is_treated(i) { 1.0 } else { 0.0 })
        .collect();
    let x = (0..n).map(|i| sample.x_row(i).to_vec()).collect();
    Ok((y, w, x))
}

/// Rejection rates on a synthetic design under the null; returns one dict
/// per requested test.
#[pyfunction]
#[pyo3(signature = (panel, n1, n0, m=1, reps=2000, seed=0, alpha=0.10,
                    tests=vec!["sign".into(), "ai".into()]))]
#[allow(clippy::too_many_arguments)]
fn size_study<'py>(
    py: Python<'py>,
    panel: &str,
    n1: usize,
    n0: usize,
    m: usize,
    reps: usize,
    seed: u64,
    alpha: f64,
    tests: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let dgp = Panel::parse(panel).map_err(err)?.dgp(n1, n0);
    let methods: Vec<TestMethod> = tests
        .iter()
        .map(|t| match t.as_str() {
            "ai" => Ok(TestMethod::Ai),
            "sign" => Ok(TestMethod::SignChanges),
            "perm" => Ok(TestMethod::Permutation),
            other => Err(PyValueError::new_err(format!("unknown test '{other}'"))),
        })
        .collect::<PyResult<_>>()?;
    let mc = McConfig {
        reps,
        master_seed: seed,
        tests: methods,
        match_spec: MatchSpec {
            m,
            ..Default::default()
        },
        test_config: TestConfig {
            alpha,
            ..Default::default()
        },
        j_var: 1,
        threads: None,
    };
    let res = run_mc_size(&dgp, &mc).map_err(err)?;
    let d = PyDict::new(py);
    for rate in &res.rates {
        let entry = PyDict::new(py);
        entry.set_item("rate", rate.rate)?;
        entry.set_item("se", rate.se)?;
        d.set_item(rate.test.name(), entry)?;
    }
    d.set_item("tau_mean", res.tau_mean)?;
    d.set_item("tau_sd", res.tau_sd)?;
    d.set_item("shared_nn_rate", res.shared_nn_rate)?;
    d.set_item("reps", res.reps)?;
    Ok(d)
}

#[pyfunction]
fn norm_cdf(x: f64) -> f64 {
    statfun::norm_cdf(x)
}

#[pyfunction]
fn norm_quantile(u: f64) -> PyResult<f64> {
    statfun::norm_quantile(u).map_err(err)
}

#[pyfunction]
fn chi2_cdf(x: f64, dof: u32) -> PyResult<f64> {
    statfun::chi2_cdf(x, dof).map_err(err)
}

#[pyfunction]
fn chi2_quantile(u: f64, dof: u32) -> PyResult<f64> {
    statfun::chi2_quantile(u, dof).map_err(err)
}

#[pymodule]
fn fewmatch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(estimate_att, m)?)?;
    m.add_function(wrap_pyfunction!(sign_test, m)?)?;
    m.add_function(wrap_pyfunction!(perm_test, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_test, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_interval, m)?)?;
    m.add_function(wrap_pyfunction!(draw_panel_sample, m)?)?;
    m.add_function(wrap_pyfunction!(size_study, m)?)?;
    m.add_function(wrap_pyfunction!(norm_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(norm_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_quantile, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
