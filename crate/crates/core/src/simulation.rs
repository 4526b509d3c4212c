//! Synthetic data-generating processes and seeded, parallel Monte Carlo
//! studies: size tables, power curves (optionally size-adjusted), bias
//! summaries, and shared-neighbor diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{
    ai_test, ai_variance, permutation_test, sign_changes_test, TestConfig, TestMethod,
};
use crate::matching::{estimate, MatchSpec};
use crate::sample::Sample;
use crate::statfun::chi2_normal_transform;

/// Mean outcome function for the treated arm, applied to the first
/// covariate. The `tau` shift always comes on top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mu1Kind {
    Zero,
    /// mu1(x) = tau + x.
    Linear,
    /// mu1(x) = tau + (Q^{-1}(Phi(x); dof) - dof) / sqrt(2 dof): mean zero,
    /// variance one, right-skewed with skew decreasing in dof.
    Chi2Transform { dof: u32 },
}

/// Distribution of the treated-arm error around mu1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TreatedError {
    StandardNormal,
    /// scale * (chi2_dof - dof) / sqrt(2 dof).
    Chi2Centered { dof: u32, scale: f64 },
}

/// Mean outcome function for the control arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mu0Kind {
    Zero,
    /// mu0(x) = x; pairs with a treated covariate shift to produce a
    /// selection DGP where the naive contrast is biased.
    Linear,
}

/// A fully specified generative model.
#[derive(Debug, Clone, Serialize)]
pub struct DgpSpec {
    pub n1: usize,
    pub n0: usize,
    pub mu1: Mu1Kind,
    pub error: TreatedError,
    /// True ATT shift.
    pub tau: f64,
    /// Covariate dimension; columns beyond the first are pure noise.
    pub k: usize,
    pub mu0: Mu0Kind,
    /// Added to the first treated covariate, creating selection.
    pub treated_x_shift: f64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n1 < 2 {
            return Err(Error::Config("dgp needs n1 >= 2".into()));
        }
        if self.n0 < 1 {
            return Err(Error::Config("dgp needs n0 >= 1".into()));
        }
        if self.k < 1 {
            return Err(Error::Config("dgp needs k >= 1".into()));
        }
        if let Mu1Kind::Chi2Transform { dof } = self.mu1 {
            if dof == 0 {
                return Err(Error::Config("chi2 transform needs dof >= 1".into()));
            }
        }
        if let TreatedError::Chi2Centered { dof, scale } = self.error {
            if dof == 0 {
                return Err(Error::Config("chi2 error needs dof >= 1".into()));
            }
            if scale.is_nan() || scale <= 0.0 {
                return Err(Error::Config("chi2 error needs scale > 0".into()));
            }
        }
        Ok(())
    }
}

/// The five synthetic designs used by the size simulations, from symmetric
/// (A) to strongly asymmetric (E).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Panel {
    A,
    B,
    C,
    D,
    E,
}

impl Panel {
    pub fn parse(s: &str) -> Result<Panel> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Panel::A),
            "b" => Ok(Panel::B),
            "c" => Ok(Panel::C),
            "d" => Ok(Panel::D),
            "e" => Ok(Panel::E),
            other => Err(Error::Config(format!("unknown panel '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Panel::A => "a",
            Panel::B => "b",
            Panel::C => "c",
            Panel::D => "d",
            Panel::E => "e",
        }
    }

    pub fn dgp(&self, n1: usize, n0: usize) -> DgpSpec {
        let (mu1, error) = match self {
            Panel::A => (Mu1Kind::Linear, TreatedError::StandardNormal),
            Panel::B => (Mu1Kind::Chi2Transform { dof: 8 }, TreatedError::StandardNormal),
            Panel::C => (Mu1Kind::Chi2Transform { dof: 1 }, TreatedError::StandardNormal),
            Panel::D => (
                Mu1Kind::Chi2Transform { dof: 1 },
                TreatedError::Chi2Centered { dof: 1, scale: 1.0 },
            ),
            Panel::E => (
                Mu1Kind::Chi2Transform { dof: 1 },
                TreatedError::Chi2Centered { dof: 1, scale: 2.0 },
            ),
        };
        DgpSpec {
            n1,
            n0,
            mu1,
            error,
            tau: 0.0,
            k: 1,
            mu0: Mu0Kind::Zero,
            treated_x_shift: 0.0,
        }
    }
}

/// SplitMix64-style stream derivation: replication streams depend only on
/// (master_seed, index), never on scheduling.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, one variate per pair of uniforms
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn draw_error(rng: &mut ChaCha8Rng, error: &TreatedError) -> f64 {
    match error {
        TreatedError::StandardNormal => standard_normal(rng),
        TreatedError::Chi2Centered { dof, scale } => {
            let mut chi2 = 0.0;
            for _ in 0..*dof {
                let z = standard_normal(rng);
                chi2 += z * z;
            }
            scale * (chi2 - *dof as f64) / (2.0 * *dof as f64).sqrt()
        }
    }
}

fn mu1_value(mu1: &Mu1Kind, tau: f64, x1: f64) -> Result<f64> {
    Ok(match mu1 {
        Mu1Kind::Zero => tau,
        Mu1Kind::Linear => tau + x1,
        Mu1Kind::Chi2Transform { dof } => tau + chi2_normal_transform(x1, *dof)?,
    })
}

fn mu0_value(mu0: &Mu0Kind, x1: f64) -> f64 {
    match mu0 {
        Mu0Kind::Zero => 0.0,
        Mu0Kind::Linear => x1,
    }
}

/// One deterministic draw from the DGP; treated rows come first.
pub fn draw_sample(dgp: &DgpSpec, seed: u64) -> Result<Sample> {
    dgp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dgp.n1 + dgp.n0;
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..dgp.n1 {
        let mut xr: Vec<f64> = (0..dgp.k).map(|_| standard_normal(&mut rng)).collect();
        xr[0] += dgp.treated_x_shift;
        let eps = draw_error(&mut rng, &dgp.error);
        y.push(mu1_value(&dgp.mu1, dgp.tau, xr[0])? + eps);
        w.push(1.0);
        x.push(xr);
    }
    for _ in 0..dgp.n0 {
        let xr: Vec<f64> = (0..dgp.k).map(|_| standard_normal(&mut rng)).collect();
        let eps = standard_normal(&mut rng);
        y.push(mu0_value(&dgp.mu0, xr[0]) + eps);
        w.push(0.0);
        x.push(xr);
    }
    Sample::from_columns(y, &w, &x)
}

/// Monte Carlo run configuration.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub reps: usize,
    pub master_seed: u64,
    pub tests: Vec<TestMethod>,
    pub match_spec: MatchSpec,
    pub test_config: TestConfig,
    /// Same-group matches used by the asymptotic variance estimate.
    pub j_var: usize,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            reps: 2000,
            master_seed: 0,
            tests: vec![TestMethod::SignChanges, TestMethod::Ai],
            match_spec: MatchSpec::default(),
            test_config: TestConfig::default(),
            j_var: 1,
            threads: None,
        }
    }
}

/// One test's rejection rate with its Monte Carlo standard error.
#[derive(Debug, Clone, Serialize)]
pub struct TestRate {
    pub test: TestMethod,
    pub rate: f64,
    pub se: f64,
    pub size_adjusted: bool,
}

/// Aggregate over the replications of one Monte Carlo cell.
#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub rates: Vec<TestRate>,
    pub tau_mean: f64,
    pub tau_sd: f64,
    /// Share of replications with at least one shared nearest neighbor.
    pub shared_nn_rate: f64,
    pub reps: usize,
    pub master_seed: u64,
}

struct RepOutcome {
    tau_hat: f64,
    naive: f64,
    shared: bool,
    rejects: Vec<bool>,
    z_abs: Option<f64>,
}

fn run_one_rep(dgp: &DgpSpec, mc: &McConfig, rep: usize) -> Result<RepOutcome> {
    let sample_seed = mix_seed(mc.master_seed, 2 * rep as u64);
    let test_seed = mix_seed(mc.master_seed, 2 * rep as u64 + 1);
    let sample = draw_sample(dgp, sample_seed)?;
    let (sets, effects) = estimate(&sample, &mc.match_spec)?;

    let t_mean = sample
        .treated_rows()
        .iter()
        .map(|&r| sample.y(r))
        .sum::<f64>()
        / sample.n1() as f64;
    let c_mean = sample
        .control_rows()
        .iter()
        .map(|&r| sample.y(r))
        .sum::<f64>()
        / sample.n0() as f64;

    let config = TestConfig {
        seed: test_seed,
        ..mc.test_config.clone()
    };
    let mut rejects = Vec::with_capacity(mc.tests.len());
    let mut z_abs = None;
    for test in &mc.tests {
        let reject = match test {
            TestMethod::Ai => {
                let parts = ai_variance(&sample, &sets, &mc.match_spec, &effects, mc.j_var)?;
                let res = ai_test(&effects, &parts, config.alpha)?;
                z_abs = Some(res.z.abs());
                res.reject
            }
            TestMethod::SignChanges => {
                sign_changes_test(&effects, sets.components(), &config)?.reject
            }
            TestMethod::Permutation => permutation_test(&sample, &sets, &mc.match_spec, &config)?.reject,
        };
        rejects.push(reject);
    }
    Ok(RepOutcome {
        tau_hat: effects.tau_hat,
        naive: t_mean - c_mean,
        shared: sets.has_shared_neighbors(),
        rejects,
        z_abs,
    })
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_reps(dgp: &DgpSpec, mc: &McConfig) -> Result<Vec<RepOutcome>> {
    let outcomes: Vec<Result<RepOutcome>> = with_pool(mc.threads, || {
        (0..mc.reps)
            .into_par_iter()
            .map(|rep| run_one_rep(dgp, mc, rep))
            .collect()
    })?;
    outcomes
        .into_iter()
        .enumerate()
        .map(|(rep, r)| {
            r.map_err(|e| Error::Replication {
                rep,
                source: Box::new(e),
            })
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn rate_se(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

fn aggregate(outcomes: &[RepOutcome], mc: &McConfig) -> McResult {
    let reps = outcomes.len();
    let rates = mc
        .tests
        .iter()
        .enumerate()
        .map(|(idx, &test)| {
            let rate =
                outcomes.iter().filter(|o| o.rejects[idx]).count() as f64 / reps as f64;
            TestRate {
                test,
                rate,
                se: rate_se(rate, reps),
                size_adjusted: false,
            }
        })
        .collect();
    let taus: Vec<f64> = outcomes.iter().map(|o| o.tau_hat).collect();
    McResult {
        rates,
        tau_mean: mean(&taus),
        tau_sd: sd(&taus),
        shared_nn_rate: outcomes.iter().filter(|o| o.shared).count() as f64 / reps as f64,
        reps,
        master_seed: mc.master_seed,
    }
}

/// Size study: rejection rates with the null true (tau = 0, c = 0).
pub fn run_mc_size(dgp: &DgpSpec, mc: &McConfig) -> Result<McResult> {
    if mc.reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    dgp.validate()?;
    let outcomes = run_reps(dgp, mc)?;
    Ok(aggregate(&outcomes, mc))
}

/// One point of a power curve.
#[derive(Debug, Clone, Serialize)]
pub struct PowerPoint {
    pub tau: f64,
    pub result: McResult,
}

/// Power study over a grid of true effects. With `size_adjust`, a companion
/// null run under the same replication seeds supplies the empirical
/// (1-alpha) critical value for the asymptotic |z| statistic; the
/// randomization tests are never adjusted.
pub fn run_mc_power(
    dgp: &DgpSpec,
    taus: &[f64],
    mc: &McConfig,
    size_adjust: bool,
) -> Result<Vec<PowerPoint>> {
    if mc.reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    if taus.is_empty() {
        return Err(Error::Config("power needs at least one tau".into()));
    }
    dgp.validate()?;
    let ai_idx = mc.tests.iter().position(|t| *t == TestMethod::Ai);

    let null_crit = if size_adjust {
        if ai_idx.is_none() {
            return Err(Error::Config(
                "size adjustment requires the ai test to be included".into(),
            ));
        }
        let null_dgp = DgpSpec {
            tau: 0.0,
            ..dgp.clone()
        };
        let outcomes = run_reps(&null_dgp, mc)?;
        let mut z: Vec<f64> = outcomes
            .iter()
            .map(|o| o.z_abs.expect("ai test ran in the null companion"))
            .collect();
        z.sort_unstable_by(f64::total_cmp);
        let k = ((mc.reps as f64) * (1.0 - mc.test_config.alpha) - 1e-9).ceil() as usize;
        Some(z[k.clamp(1, mc.reps) - 1])
    } else {
        None
    };

    let mut curve = Vec::with_capacity(taus.len());
    for &tau in taus {
        let point_dgp = DgpSpec {
            tau,
            ..dgp.clone()
        };
        let outcomes = run_reps(&point_dgp, mc)?;
        let mut result = aggregate(&outcomes, mc);
        if let (Some(crit), Some(idx)) = (null_crit, ai_idx) {
            let rate = outcomes
                .iter()
                .filter(|o| o.z_abs.expect("ai test ran") > crit)
                .count() as f64
                / outcomes.len() as f64;
            result.rates[idx] = TestRate {
                test: TestMethod::Ai,
                rate,
                se: rate_se(rate, outcomes.len()),
                size_adjusted: true,
            };
        }
        curve.push(PowerPoint { tau, result });
    }
    Ok(curve)
}

/// Bias summary of the matching estimator against the naive difference in
/// means, both centered at the true tau.
#[derive(Debug, Clone, Serialize)]
pub struct BiasSummary {
    pub matching_bias: f64,
    pub matching_se: f64,
    pub naive_bias: f64,
    pub naive_se: f64,
    pub tau_mean: f64,
    pub tau_sd: f64,
    pub reps: usize,
}

pub fn mc_bias(dgp: &DgpSpec, mc: &McConfig) -> Result<BiasSummary> {
    let quiet = McConfig {
        tests: Vec::new(),
        ..mc.clone()
    };
    dgp.validate()?;
    let outcomes = run_reps(dgp, &quiet)?;
    let taus: Vec<f64> = outcomes.iter().map(|o| o.tau_hat).collect();
    let naives: Vec<f64> = outcomes.iter().map(|o| o.naive).collect();
    let reps = outcomes.len();
    Ok(BiasSummary {
        matching_bias: mean(&taus) - dgp.tau,
        matching_se: sd(&taus) / (reps as f64).sqrt(),
        naive_bias: mean(&naives) - dgp.tau,
        naive_se: sd(&naives) / (reps as f64).sqrt(),
        tau_mean: mean(&taus),
        tau_sd: sd(&taus),
        reps,
    })
}

/// Fraction of replications whose matched sets contain a shared nearest
/// neighbor (a non-singleton component).
pub fn shared_nn_rate(dgp: &DgpSpec, mc: &McConfig) -> Result<f64> {
    let quiet = McConfig {
        tests: Vec::new(),
        ..mc.clone()
    };
    dgp.validate()?;
    let outcomes = run_reps(dgp, &quiet)?;
    Ok(outcomes.iter().filter(|o| o.shared).count() as f64 / outcomes.len() as f64)
}
