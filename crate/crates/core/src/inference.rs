//! Randomization inference (sign changes and within-set permutations), the
//! asymptotic normal test, and confidence intervals by test inversion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matching::{
    estimate, fit_outcome_model, BiasAdjust, DistKernel, MatchSpec, MatchedSets, ModelScope,
    UnitEffects,
};
use crate::sample::Sample;
use crate::statfun::norm_cdf;

/// Configuration shared by the randomization tests.
#[derive(Debug, Clone)]
pub struct TestConfig {
    /// Significance level.
    pub alpha: f64,
    /// Largest group size that is enumerated exhaustively.
    pub max_enumeration: u64,
    /// Number of sampled transformations when enumeration is infeasible.
    pub n_draws: usize,
    /// Statistic for the permutation test.
    pub stat_variant: StatVariant,
    /// Seed for transformation sampling.
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.10,
            max_enumeration: 1 << 20,
            n_draws: 9999,
            stat_variant: StatVariant::AbsoluteMean,
            seed: 0,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha={} outside (0,1)",
                self.alpha
            )));
        }
        if self.n_draws == 0 {
            return Err(Error::Config("n_draws must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatVariant {
    /// Absolute mean of the per-set effects.
    AbsoluteMean,
    /// Absolute mean studentized by the (N1-1)-denominator SD.
    Standardized,
}

/// Which test a result or an inverted interval came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Ai,
    SignChanges,
    Permutation,
}

impl TestMethod {
    pub fn name(&self) -> &'static str {
        match self {
            TestMethod::Ai => "ai",
            TestMethod::SignChanges => "sign",
            TestMethod::Permutation => "perm",
        }
    }
}

/// Outcome of a randomization test.
#[derive(Debug, Clone, Serialize)]
pub struct RandomizationResult {
    /// Observed statistic T(S).
    pub statistic: f64,
    /// Share of evaluated transformations with T(gS) >= T(S); the identity
    /// always counts, so this is at least 1/group_size.
    pub p_value: f64,
    /// Non-randomized decision: reject iff statistic > critical_value.
    pub reject: bool,
    /// Number of transformations the p-value lattice is built on (the full
    /// group when enumerated, identity plus draws when sampled).
    pub group_size: u64,
    pub enumerated: bool,
    /// The ceil(K(1-alpha))-th ordered statistic value.
    pub critical_value: f64,
    /// Smallest p-value this group can produce.
    pub min_attainable_p: f64,
}

/// Studentized sign-change statistic: |mean(g tau)| over the
/// (N1-1)-denominator SD of the transformed effects.
///
/// Degenerate convention: zero SD gives 0 when the mean is zero and +inf
/// otherwise, which keeps the order statistics well defined.
pub fn sign_statistic(effects: &[f64], signs: &[i8]) -> Result<f64> {
    let n = effects.len();
    if n < 2 {
        return Err(Error::Domain(
            "sign statistic requires at least two treated units".into(),
        ));
    }
    debug_assert_eq!(signs.len(), n);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (&e, &s) in effects.iter().zip(signs) {
        sum += s as f64 * e;
        sum_sq += e * e;
    }
    let mean = sum / n as f64;
    Ok(studentized(mean, sum_sq, n))
}

#[inline]
fn studentized(mean: f64, sum_sq: f64, n: usize) -> f64 {
    let var = (sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0);
    if var <= 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        mean.abs() / var.sqrt()
    }
}

/// ceil(K(1 - alpha)) guarded against float noise at integer boundaries.
fn order_index(k_total: usize, alpha: f64) -> usize {
    let raw = (k_total as f64 * (1.0 - alpha) - 1e-9).ceil() as isize;
    raw.clamp(1, k_total as isize) as usize
}

/// Decision rule shared by both randomization tests. `t_values` holds the
/// statistic for every evaluated transformation, identity included.
fn randomization_decision(
    t_values: Vec<f64>,
    t_obs: f64,
    alpha: f64,
    enumerated: bool,
    min_attainable_p: f64,
) -> RandomizationResult {
    let k_total = t_values.len();
    let ge = t_values.iter().filter(|&&t| t >= t_obs).count();
    let p_value = ge as f64 / k_total as f64;
    let mut sorted = t_values;
    sorted.sort_unstable_by(f64::total_cmp);
    let critical_value = sorted[order_index(k_total, alpha) - 1];
    RandomizationResult {
        statistic: t_obs,
        p_value,
        reject: t_obs > critical_value,
        group_size: k_total as u64,
        enumerated,
        critical_value,
        min_attainable_p,
    }
}

fn check_components(components: &[Vec<usize>], n1: usize) -> Result<()> {
    let mut seen = vec![false; n1];
    for comp in components {
        for &t in comp {
            if t >= n1 || seen[t] {
                return Err(Error::Config(
                    "components do not partition the treated units".into(),
                ));
            }
            seen[t] = true;
        }
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(Error::Config(
            "components do not partition the treated units".into(),
        ))
    }
}

/// Sign-changes randomization test with one sign per shared-neighbor
/// component. Enumerates all 2^C component sign vectors when that count is
/// within `max_enumeration`; otherwise evaluates the identity plus `n_draws`
/// seeded uniform draws.
pub fn sign_changes_test(
    effects: &UnitEffects,
    components: &[Vec<usize>],
    config: &TestConfig,
) -> Result<RandomizationResult> {
    config.validate()?;
    let n1 = effects.tau_i.len();
    if n1 < 2 {
        return Err(Error::Domain(
            "sign-changes test requires at least two treated units".into(),
        ));
    }
    check_components(components, n1)?;

    let comp_sums: Vec<f64> = components
        .iter()
        .map(|c| c.iter().map(|&t| effects.tau_i[t]).sum())
        .collect();
    let sum_sq: f64 = effects.tau_i.iter().map(|&t| t * t).sum();
    let n_comp = comp_sums.len();
    let nf = n1 as f64;

    let t_of_mask_words = |words: &[u64]| -> f64 {
        let mut sum = 0.0;
        for (c, &cs) in comp_sums.iter().enumerate() {
            let bit = (words[c / 64] >> (c % 64)) & 1;
            sum += if bit == 0 { cs } else { -cs };
        }
        studentized(sum / nf, sum_sq, n1)
    };

    let t_obs = studentized(comp_sums.iter().sum::<f64>() / nf, sum_sq, n1);

    let enumerable = n_comp < 64 && (1u128 << n_comp) <= config.max_enumeration as u128;
    if enumerable {
        let k = 1usize << n_comp;
        let mut t_values = Vec::with_capacity(k);
        for mask in 0..k as u64 {
            t_values.push(t_of_mask_words(&[mask]));
        }
        Ok(randomization_decision(
            t_values,
            t_obs,
            config.alpha,
            true,
            2.0 / k as f64,
        ))
    } else {
        let words_len = n_comp.div_ceil(64);
        let tail_bits = n_comp % 64;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut t_values = Vec::with_capacity(config.n_draws + 1);
        t_values.push(t_obs);
        let mut words = vec![0u64; words_len];
        for _ in 0..config.n_draws {
            for (i, w) in words.iter_mut().enumerate() {
                *w = rng.random::<u64>();
                if tail_bits != 0 && i == words_len - 1 {
                    *w &= (1u64 << tail_bits) - 1;
                }
            }
            t_values.push(t_of_mask_words(&words));
        }
        let evaluated = t_values.len();
        Ok(randomization_decision(
            t_values,
            t_obs,
            config.alpha,
            false,
            1.0 / evaluated as f64,
        ))
    }
}

// ---------------------------------------------------------------------------
// Within-set permutation test
// ---------------------------------------------------------------------------

/// Admissible treated-slot choices for one block of sets coupled by shared
/// controls. Each choice vector is parallel to `sets`.
struct BlockChoices {
    sets: Vec<usize>,
    choices: Vec<Vec<u8>>,
}

/// Prepared permutation test, reusable across null values of c.
pub struct PermutationEngine {
    n1: usize,
    m: usize,
    /// Per set: slot 0 holds the treated outcome (before centering), slots
    /// 1..=m the matched outcomes (bias-adjusted when requested).
    values: Vec<Vec<f64>>,
    blocks: Vec<BlockChoices>,
    /// Total admissible assignments across blocks (saturating).
    group_size: u128,
}

fn enumerate_block(
    sets_in_block: &[usize],
    members: &[Vec<usize>],
    cap: usize,
) -> Result<Vec<Vec<u8>>> {
    // roles[row] = (times forced treated, times forced control)
    use std::collections::HashMap;
    let mut roles: HashMap<usize, (u32, u32)> = HashMap::new();
    let mut current = vec![0u8; sets_in_block.len()];
    let mut out: Vec<Vec<u8>> = Vec::new();

    fn recurse(
        depth: usize,
        sets_in_block: &[usize],
        members: &[Vec<usize>],
        roles: &mut std::collections::HashMap<usize, (u32, u32)>,
        current: &mut Vec<u8>,
        out: &mut Vec<Vec<u8>>,
        cap: usize,
    ) -> Result<()> {
        if depth == sets_in_block.len() {
            if out.len() >= cap {
                return Err(Error::GroupTooLarge(format!(
                    "a shared-control block admits more than {cap} role assignments"
                )));
            }
            out.push(current.clone());
            return Ok(());
        }
        let mem = &members[sets_in_block[depth]];
        // the set's own treated observation occupies slot 0 and is never
        // shared, so only the control members constrain the choice
        let forced: Vec<usize> = mem
            .iter()
            .enumerate()
            .filter(|(_, row)| roles.get(row).map(|r| r.0 > 0).unwrap_or(false))
            .map(|(pos, _)| pos)
            .collect();
        if forced.len() > 1 {
            return Ok(()); // two controls both demand the treated slot
        }
        let options: Vec<usize> = if let Some(&pos) = forced.first() {
            vec![pos + 1]
        } else {
            let mut opts = vec![0usize];
            for (pos, row) in mem.iter().enumerate() {
                let is_control_elsewhere = roles.get(row).map(|r| r.1 > 0).unwrap_or(false);
                if !is_control_elsewhere {
                    opts.push(pos + 1);
                }
            }
            opts
        };
        for choice in options {
            // apply
            for (pos, row) in mem.iter().enumerate() {
                let entry = roles.entry(*row).or_insert((0, 0));
                if pos + 1 == choice {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
            }
            current[depth] = choice as u8;
            recurse(depth + 1, sets_in_block, members, roles, current, out, cap)?;
            // undo
            for (pos, row) in mem.iter().enumerate() {
                let entry = roles.get_mut(row).unwrap();
                if pos + 1 == choice {
                    entry.0 -= 1;
                } else {
                    entry.1 -= 1;
                }
            }
        }
        Ok(())
    }

    recurse(
        0,
        sets_in_block,
        members,
        &mut roles,
        &mut current,
        &mut out,
        cap,
    )?;
    Ok(out)
}

impl PermutationEngine {
    /// Builds member values and the admissible assignment blocks for the
    /// matched sets. Bias adjustment, when requested, shifts each matched
    /// outcome exactly as in the bias-corrected estimator.
    pub fn build(sample: &Sample, sets: &MatchedSets, spec: &MatchSpec) -> Result<Self> {
        let n1 = sets.n1();
        let m = sets.m();
        let coef = match spec.bias_adjust {
            BiasAdjust::Off => None,
            BiasAdjust::LinearAllControls => {
                Some(fit_outcome_model(sample, sets, ModelScope::AllControls)?)
            }
            BiasAdjust::LinearNeighborsOnly => {
                Some(fit_outcome_model(sample, sets, ModelScope::NeighborsOnly)?)
            }
        };
        let predict = |x: &[f64], c: &Vec<f64>| -> f64 {
            c[0] + x.iter().zip(&c[1..]).map(|(&xi, &b)| xi * b).sum::<f64>()
        };
        let mut values = Vec::with_capacity(n1);
        let mut members = Vec::with_capacity(n1);
        for (t, &t_row) in sample.treated_rows().iter().enumerate() {
            let mut vals = Vec::with_capacity(m + 1);
            let mut mem = Vec::with_capacity(m);
            vals.push(sample.y(t_row));
            for &(c_row, _) in sets.neighbors(t) {
                let v = match &coef {
                    None => sample.y(c_row),
                    Some(c) => {
                        sample.y(c_row) + predict(sample.x_row(t_row), c)
                            - predict(sample.x_row(c_row), c)
                    }
                };
                vals.push(v);
                mem.push(c_row);
            }
            values.push(vals);
            members.push(mem);
        }

        let cap = BLOCK_ENUMERATION_CAP;
        let mut blocks = Vec::new();
        let mut group_size: u128 = 1;
        for comp in sets.components() {
            let choices = enumerate_block(comp, &members, cap)?;
            group_size = group_size.saturating_mul(choices.len() as u128);
            blocks.push(BlockChoices {
                sets: comp.clone(),
                choices,
            });
        }
        Ok(PermutationEngine {
            n1,
            m,
            values,
            blocks,
            group_size,
        })
    }

    /// Effective group size after the shared-control constraint.
    pub fn group_size(&self) -> u128 {
        self.group_size
    }

    /// Runs the test of H0: tau = `center`.
    pub fn evaluate(&self, center: f64, config: &TestConfig) -> Result<RandomizationResult> {
        config.validate()?;
        if self.n1 < 1 {
            return Err(Error::Domain("permutation test needs a treated unit".into()));
        }
        if config.stat_variant == StatVariant::Standardized && self.n1 < 2 {
            return Err(Error::Domain(
                "standardized permutation statistic requires at least two treated units".into(),
            ));
        }
        let mf = self.m as f64;
        // member values with the treated slot centered at the null
        let centered: Vec<Vec<f64>> = self
            .values
            .iter()
            .map(|v| {
                let mut cv = v.clone();
                cv[0] -= center;
                cv
            })
            .collect();
        // effect of choosing slot a in set i: chosen value minus the mean of
        // the rest, evaluated in slot order so that at m = 1 it reproduces
        // the sign-change effects bit for bit
        let effect = |set: usize, slot: u8| -> f64 {
            let cv = &centered[set];
            let mut rest = 0.0;
            for (j, &vj) in cv.iter().enumerate() {
                if j != slot as usize {
                    rest += vj;
                }
            }
            cv[slot as usize] - rest / mf
        };
        let nf = self.n1 as f64;
        let stat_of = |assignment: &[u8]| -> f64 {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for (i, &a) in assignment.iter().enumerate() {
                let e = effect(i, a);
                sum += e;
                sum_sq += e * e;
            }
            let mean = sum / nf;
            match config.stat_variant {
                StatVariant::AbsoluteMean => mean.abs(),
                StatVariant::Standardized => studentized(mean, sum_sq, self.n1),
            }
        };

        let identity = vec![0u8; self.n1];
        let t_obs = stat_of(&identity);

        if self.group_size <= config.max_enumeration as u128 {
            let k = self.group_size as usize;
            let mut t_values = Vec::with_capacity(k);
            let mut assignment = vec![0u8; self.n1];
            let mut idx = vec![0usize; self.blocks.len()];
            loop {
                for (b, block) in self.blocks.iter().enumerate() {
                    let choice = &block.choices[idx[b]];
                    for (pos, &set) in block.sets.iter().enumerate() {
                        assignment[set] = choice[pos];
                    }
                }
                t_values.push(stat_of(&assignment));
                // odometer increment
                let mut b = 0;
                loop {
                    if b == self.blocks.len() {
                        break;
                    }
                    idx[b] += 1;
                    if idx[b] < self.blocks[b].choices.len() {
                        break;
                    }
                    idx[b] = 0;
                    b += 1;
                }
                if b == self.blocks.len() {
                    break;
                }
            }
            debug_assert_eq!(t_values.len(), k);
            let min_p = if self.m == 1 {
                // global role swap mirrors the statistic exactly
                2.0 / k as f64
            } else {
                1.0 / k as f64
            };
            Ok(randomization_decision(
                t_values,
                t_obs,
                config.alpha,
                true,
                min_p,
            ))
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut t_values = Vec::with_capacity(config.n_draws + 1);
            t_values.push(t_obs);
            let mut assignment = vec![0u8; self.n1];
            for _ in 0..config.n_draws {
                for block in &self.blocks {
                    let pick = rng.random_range(0..block.choices.len());
                    let choice = &block.choices[pick];
                    for (pos, &set) in block.sets.iter().enumerate() {
                        assignment[set] = choice[pos];
                    }
                }
                t_values.push(stat_of(&assignment));
            }
            let evaluated = t_values.len();
            Ok(randomization_decision(
                t_values,
                t_obs,
                config.alpha,
                false,
                1.0 / evaluated as f64,
            ))
        }
    }
}

// Admissible assignments within one shared-control block are enumerated so
// sampling can stay exactly uniform; a single block past this size is
// reported as an error instead.
const BLOCK_ENUMERATION_CAP: usize = 1 << 20;

/// Within-set permutation test: reassigns the treated role inside each
/// matched set, holding shared controls to one role across sets.
pub fn permutation_test(
    sample: &Sample,
    sets: &MatchedSets,
    spec: &MatchSpec,
    config: &TestConfig,
) -> Result<RandomizationResult> {
    let engine = PermutationEngine::build(sample, sets, spec)?;
    engine.evaluate(spec.center, config)
}

// ---------------------------------------------------------------------------
// Asymptotic test
// ---------------------------------------------------------------------------

/// The two pieces of the matching variance estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VarianceParts {
    /// Conditional-variance part (always nonnegative).
    pub conditional: f64,
    /// Effect-heterogeneity part; negative draws are kept because the
    /// treated conditional variances cancel in the sum.
    pub heterogeneity_raw: f64,
}

impl VarianceParts {
    /// Total variance estimate. Identical to
    /// (1/N1^2) [sum_t (tau_i - tau)^2 + (1/M^2) sum_c K(K-1) sigma2_c],
    /// which is nonnegative up to rounding.
    pub fn total(&self) -> f64 {
        self.conditional + self.heterogeneity_raw
    }
}

/// Result of the asymptotic normal test.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticResult {
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub reject: bool,
    pub variance: VarianceParts,
}

/// Matching-based variance estimate for the pooled effect.
///
/// Unit-level conditional variances come from each unit's `j_var` closest
/// same-treatment-group neighbors; control contributions are weighted by
/// their match counts.
pub fn ai_variance(
    sample: &Sample,
    sets: &MatchedSets,
    spec: &MatchSpec,
    effects: &UnitEffects,
    j_var: usize,
) -> Result<VarianceParts> {
    if j_var == 0 {
        return Err(Error::Config("j_var must be >= 1".into()));
    }
    let kernel = DistKernel::build(sample, spec)?;
    let sigma2 = |row: usize| -> Result<f64> {
        let group: &[usize] = if sample.is_treated(row) {
            sample.treated_rows()
        } else {
            sample.control_rows()
        };
        let xr = sample.x_row(row);
        let mut cand: Vec<(f64, usize)> = group
            .iter()
            .filter(|&&r| r != row)
            .map(|&r| (kernel.dist(xr, sample.x_row(r)), r))
            .collect();
        if cand.len() < j_var {
            return Err(Error::TooFewNeighbors {
                row: sample.row_id(row),
                needed: j_var,
                available: cand.len(),
            });
        }
        let cmp =
            |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
        if cand.len() > j_var {
            cand.select_nth_unstable_by(j_var - 1, cmp);
            cand.truncate(j_var);
        }
        let mean = cand.iter().map(|&(_, r)| sample.y(r)).sum::<f64>() / j_var as f64;
        let d = sample.y(row) - mean;
        Ok(j_var as f64 / (j_var + 1) as f64 * d * d)
    };

    let n1 = sample.n1() as f64;
    let m = sets.m() as f64;

    let mut sigma_treated = Vec::with_capacity(sample.n1());
    for &t_row in sample.treated_rows() {
        sigma_treated.push(sigma2(t_row)?);
    }
    // iterate matched controls in row order so sums do not depend on hash
    // layout
    let matched = sets.matched_controls();
    let mut sigma_control = std::collections::HashMap::new();
    for &c_row in &matched {
        sigma_control.insert(c_row, sigma2(c_row)?);
    }

    let mut conditional = 0.0;
    for s in &sigma_treated {
        conditional += s;
    }
    for &c_row in &matched {
        let weight = sets.k_count(c_row) as f64 / m;
        conditional += weight * weight * sigma_control[&c_row];
    }
    conditional /= n1 * n1;

    let mean_tau = effects.tau_i.iter().sum::<f64>() / n1;
    let mut het = 0.0;
    for (t, &st) in sigma_treated.iter().enumerate() {
        let dev = effects.tau_i[t] - mean_tau;
        let nbr_var: f64 = sets
            .neighbors(t)
            .iter()
            .map(|&(c_row, _)| sigma_control[&c_row])
            .sum::<f64>()
            / (m * m);
        het += dev * dev - (st + nbr_var);
    }
    het /= n1 * n1;

    Ok(VarianceParts {
        conditional,
        heterogeneity_raw: het,
    })
}

/// Two-sided z test of H0: tau = c against the matching variance estimate.
pub fn ai_test(
    effects: &UnitEffects,
    variance: &VarianceParts,
    alpha: f64,
) -> Result<AsymptoticResult> {
    let v = variance.total();
    if v <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let std_error = v.sqrt();
    let z = effects.centered_mean() / std_error;
    let p_value = 2.0 * (1.0 - norm_cdf(z.abs()));
    Ok(AsymptoticResult {
        estimate: effects.tau_hat,
        std_error,
        z,
        p_value,
        reject: p_value <= alpha,
        variance: *variance,
    })
}

// ---------------------------------------------------------------------------
// Confidence intervals by test inversion
// ---------------------------------------------------------------------------

/// Search window and grid resolution for interval inversion.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SearchGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub method: TestMethod,
    pub grid: SearchGrid,
    /// True when the boundary ran into the search range instead of a
    /// rejection region.
    pub lower_censored: bool,
    pub upper_censored: bool,
}

impl ConfidenceInterval {
    /// True when no grid value was rejected at all.
    pub fn range_censored(&self) -> bool {
        self.lower_censored && self.upper_censored
    }
}

/// Inverts the chosen test over a grid of null values: matching is computed
/// once, effects are re-centered per grid point, and each boundary between a
/// rejected and a non-rejected value is refined by bisection to
/// (hi-lo)/1e4.
pub fn invert_ci(
    sample: &Sample,
    spec: &MatchSpec,
    config: &TestConfig,
    method: TestMethod,
    grid: SearchGrid,
) -> Result<ConfidenceInterval> {
    config.validate()?;
    if !grid.lo.is_finite() || !grid.hi.is_finite() || grid.lo >= grid.hi {
        return Err(Error::Config("ci search range needs finite lo < hi".into()));
    }
    if grid.points < 3 {
        return Err(Error::Config("ci grid needs at least 3 points".into()));
    }
    let base_spec = MatchSpec {
        center: 0.0,
        ..spec.clone()
    };
    let (sets, base_effects) = estimate(sample, &base_spec)?;

    enum Evaluator<'a> {
        Sign {
            effects: UnitEffects,
            components: &'a [Vec<usize>],
        },
        Perm(PermutationEngine),
        Ai {
            tau_hat: f64,
            std_error: f64,
            alpha: f64,
        },
    }

    let evaluator = match method {
        TestMethod::SignChanges => Evaluator::Sign {
            effects: base_effects.clone(),
            components: sets.components(),
        },
        TestMethod::Permutation => {
            Evaluator::Perm(PermutationEngine::build(sample, &sets, &base_spec)?)
        }
        TestMethod::Ai => {
            let parts = ai_variance(sample, &sets, &base_spec, &base_effects, 1)?;
            let v = parts.total();
            if v <= 0.0 {
                return Err(Error::ZeroVariance);
            }
            Evaluator::Ai {
                tau_hat: base_effects.tau_hat,
                std_error: v.sqrt(),
                alpha: config.alpha,
            }
        }
    };

    let rejects = |c: f64| -> Result<bool> {
        match &evaluator {
            Evaluator::Sign {
                effects,
                components,
            } => Ok(sign_changes_test(&effects.recentered(c), components, config)?.reject),
            Evaluator::Perm(engine) => Ok(engine.evaluate(c, config)?.reject),
            Evaluator::Ai {
                tau_hat,
                std_error,
                alpha,
            } => {
                let z = (tau_hat - c) / std_error;
                let p = 2.0 * (1.0 - norm_cdf(z.abs()));
                Ok(p <= *alpha)
            }
        }
    };

    let step = (grid.hi - grid.lo) / (grid.points - 1) as f64;
    let grid_values: Vec<f64> = (0..grid.points)
        .map(|i| {
            if i == grid.points - 1 {
                grid.hi
            } else {
                grid.lo + step * i as f64
            }
        })
        .collect();
    let decisions: Vec<bool> = grid_values
        .iter()
        .map(|&c| rejects(c))
        .collect::<Result<_>>()?;

    let first_acc = decisions.iter().position(|&r| !r);
    let last_acc = decisions.iter().rposition(|&r| !r);
    let (first_acc, last_acc) = match (first_acc, last_acc) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::EmptyInterval),
    };

    let tol = (grid.hi - grid.lo) / 1e4;
    let bisect = |mut rej: f64, mut acc: f64| -> Result<f64> {
        while (acc - rej).abs() > tol {
            let mid = 0.5 * (rej + acc);
            if rejects(mid)? {
                rej = mid;
            } else {
                acc = mid;
            }
        }
        Ok(acc)
    };

    let (lower, lower_censored) = if first_acc == 0 {
        (grid.lo, true)
    } else {
        (bisect(grid_values[first_acc - 1], grid_values[first_acc])?, false)
    };
    let (upper, upper_censored) = if last_acc == grid.points - 1 {
        (grid.hi, true)
    } else {
        (bisect(grid_values[last_acc + 1], grid_values[last_acc])?, false)
    };

    Ok(ConfidenceInterval {
        lower,
        upper,
        alpha: config.alpha,
        method,
        grid,
        lower_censored,
        upper_censored,
    })
}
