//! Nearest-neighbor matching with replacement: neighbor search, shared-
//! neighbor structure, and unit-level ATT effects with optional linear bias
//! correction.

use crate::error::{Error, Result};
use crate::linalg::{least_squares, quad_form_diff, Mat};
use crate::sample::{control_covariance, Sample};

/// Distance metric for the covariate space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// d(a,b) = sqrt((a-b)' V (a-b)) with V positive definite (identity
    /// when no weight matrix is supplied).
    WeightedEuclidean,
    /// Weighted Euclidean with V the inverse of the control-sample
    /// covariance matrix.
    MahalanobisFromControls,
}

/// Scope of the linear outcome model behind the bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasAdjust {
    Off,
    LinearAllControls,
    LinearNeighborsOnly,
}

/// Everything that parameterizes the matching step.
#[derive(Debug, Clone)]
pub struct MatchSpec {
    /// Number of matches per treated unit.
    pub m: usize,
    pub metric: Metric,
    /// Weight matrix for `WeightedEuclidean`; identity when absent.
    pub v: Option<Mat>,
    /// Covariate columns that must match exactly for a control to be
    /// eligible.
    pub exact_columns: Vec<usize>,
    pub bias_adjust: BiasAdjust,
    /// Null value subtracted from each unit effect.
    pub center: f64,
}

impl Default for MatchSpec {
    fn default() -> Self {
        MatchSpec {
            m: 1,
            metric: Metric::WeightedEuclidean,
            v: None,
            exact_columns: Vec::new(),
            bias_adjust: BiasAdjust::Off,
            center: 0.0,
        }
    }
}

impl MatchSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if let Some(v) = &self.v {
            if v.rows() != k || v.cols() != k {
                return Err(Error::Config(format!(
                    "weight matrix is {}x{}, covariates have k={k}",
                    v.rows(),
                    v.cols()
                )));
            }
            if !v.is_symmetric(1e-10) {
                return Err(Error::Config("weight matrix is not symmetric".into()));
            }
            if v.cholesky().is_none() {
                return Err(Error::Config(
                    "weight matrix is not positive definite".into(),
                ));
            }
        }
        for &c in &self.exact_columns {
            if c >= k {
                return Err(Error::Config(format!(
                    "exact column index {c} out of range for k={k}"
                )));
            }
        }
        Ok(())
    }
}

/// Prepared distance evaluator for one (sample, spec) pair.
pub(crate) struct DistKernel {
    weight: Option<Mat>,
}

impl DistKernel {
    pub(crate) fn build(sample: &Sample, spec: &MatchSpec) -> Result<DistKernel> {
        let weight = match spec.metric {
            Metric::WeightedEuclidean => spec.v.clone(),
            Metric::MahalanobisFromControls => {
                let cov = control_covariance(sample)?;
                Some(cov.spd_inverse("control covariance")?)
            }
        };
        Ok(DistKernel { weight })
    }

    #[inline]
    pub(crate) fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.weight {
            None => {
                let mut s = 0.0;
                for (&ai, &bi) in a.iter().zip(b) {
                    let d = ai - bi;
                    s += d * d;
                }
                s.sqrt()
            }
            Some(w) => quad_form_diff(w, a, b).max(0.0).sqrt(),
        }
    }
}

/// Matched sets for every treated unit plus the reuse and sharing structure.
#[derive(Debug, Clone)]
pub struct MatchedSets {
    m: usize,
    /// Per treated unit (in treated order), `m` control rows with their
    /// distances, sorted by (distance, row_id).
    neighbors: Vec<Vec<(usize, f64)>>,
    /// Per sample row, how many treated units matched to it (K_M).
    k_count: Vec<usize>,
    /// Partition of treated positions under "share at least one matched
    /// control", ordered by smallest member.
    components: Vec<Vec<usize>>,
}

impl MatchedSets {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n1(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighbor list for the t-th treated unit: (control row, distance).
    pub fn neighbors(&self, t: usize) -> &[(usize, f64)] {
        &self.neighbors[t]
    }

    /// Times the given sample row was used as a match.
    pub fn k_count(&self, row: usize) -> usize {
        self.k_count[row]
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// True when some control is matched to two or more treated units.
    pub fn has_shared_neighbors(&self) -> bool {
        self.components.iter().any(|c| c.len() > 1)
    }

    /// Control rows matched at least once.
    pub fn matched_controls(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .k_count
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(row, _)| row)
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// Unit-level effects and the pooled ATT estimate.
#[derive(Debug, Clone)]
pub struct UnitEffects {
    /// Per treated unit, the raw effect minus the center c.
    pub tau_i: Vec<f64>,
    /// Pooled ATT estimate (mean of `tau_i` plus the center).
    pub tau_hat: f64,
    /// The null value c the effects were centered at.
    pub center: f64,
    pub bias_adjusted: bool,
}

impl UnitEffects {
    /// Mean of the centered effects, i.e. tau_hat - center.
    pub fn centered_mean(&self) -> f64 {
        self.tau_hat - self.center
    }

    /// The same effects re-centered at a different null value.
    pub fn recentered(&self, center: f64) -> UnitEffects {
        let shift = center - self.center;
        UnitEffects {
            tau_i: self.tau_i.iter().map(|&t| t - shift).collect(),
            tau_hat: self.tau_hat,
            center,
            bias_adjusted: self.bias_adjusted,
        }
    }
}

fn eligible(sample: &Sample, exact: &[usize], t_row: usize, c_row: usize) -> bool {
    let xt = sample.x_row(t_row);
    let xc = sample.x_row(c_row);
    exact.iter().all(|&col| xt[col] == xc[col])
}

fn neighbors_for(
    sample: &Sample,
    spec: &MatchSpec,
    kernel: &DistKernel,
    t_row: usize,
) -> Result<Vec<(usize, f64)>> {
    let xt = sample.x_row(t_row);
    let mut candidates: Vec<(f64, usize)> = sample
        .control_rows()
        .iter()
        .filter(|&&c| eligible(sample, &spec.exact_columns, t_row, c))
        .map(|&c| (kernel.dist(xt, sample.x_row(c)), c))
        .collect();
    if candidates.len() < spec.m {
        return Err(Error::TooFewControls {
            treated_row: sample.row_id(t_row),
            needed: spec.m,
            available: candidates.len(),
        });
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
    };
    if candidates.len() > spec.m {
        candidates.select_nth_unstable_by(spec.m - 1, cmp);
        candidates.truncate(spec.m);
    }
    candidates.sort_unstable_by(cmp);
    Ok(candidates.into_iter().map(|(d, c)| (c, d)).collect())
}

/// The `m` nearest eligible controls for one treated unit, sorted by
/// (distance, row_id); ties go to the smaller row_id.
pub fn find_neighbors(
    sample: &Sample,
    spec: &MatchSpec,
    treated_index: usize,
) -> Result<Vec<(usize, f64)>> {
    spec.validate(sample.k())?;
    let kernel = DistKernel::build(sample, spec)?;
    let t_row = *sample
        .treated_rows()
        .get(treated_index)
        .ok_or_else(|| Error::Config(format!("treated index {treated_index} out of range")))?;
    neighbors_for(sample, spec, &kernel, t_row)
}

// Union-find over treated positions.
fn find_root(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn components_of(neighbors: &[Vec<(usize, f64)>], n_rows: usize) -> Vec<Vec<usize>> {
    let n1 = neighbors.len();
    let mut parent: Vec<usize> = (0..n1).collect();
    let mut owner: Vec<Option<usize>> = vec![None; n_rows];
    for (t, list) in neighbors.iter().enumerate() {
        for &(c_row, _) in list {
            match owner[c_row] {
                None => owner[c_row] = Some(t),
                Some(prev) => {
                    let (a, b) = (find_root(&mut parent, prev), find_root(&mut parent, t));
                    if a != b {
                        parent[b.max(a)] = b.min(a);
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n1];
    for t in 0..n1 {
        let r = find_root(&mut parent, t);
        groups[r].push(t);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Matches every treated unit, tallying control reuse and the shared-
/// neighbor components.
pub fn match_all(sample: &Sample, spec: &MatchSpec) -> Result<MatchedSets> {
    spec.validate(sample.k())?;
    let kernel = DistKernel::build(sample, spec)?;
    let mut neighbors = Vec::with_capacity(sample.n1());
    for &t_row in sample.treated_rows() {
        neighbors.push(neighbors_for(sample, spec, &kernel, t_row)?);
    }
    let mut k_count = vec![0usize; sample.n()];
    for list in &neighbors {
        for &(c_row, _) in list {
            k_count[c_row] += 1;
        }
    }
    let components = components_of(&neighbors, sample.n());
    Ok(MatchedSets {
        m: spec.m,
        neighbors,
        k_count,
        components,
    })
}

/// Connected components of treated units under "share >= 1 matched control".
pub fn shared_components(sets: &MatchedSets) -> &[Vec<usize>] {
    sets.components()
}

/// Unit effects tau_i = Y_i - mean(matched Y) - c and their pooled mean.
pub fn unit_effects(sample: &Sample, sets: &MatchedSets, spec: &MatchSpec) -> UnitEffects {
    let tau_i: Vec<f64> = sample
        .treated_rows()
        .iter()
        .enumerate()
        .map(|(t, &t_row)| {
            let nbrs = sets.neighbors(t);
            let nbr_mean =
                nbrs.iter().map(|&(c, _)| sample.y(c)).sum::<f64>() / nbrs.len() as f64;
            sample.y(t_row) - nbr_mean - spec.center
        })
        .collect();
    let mean = tau_i.iter().sum::<f64>() / tau_i.len() as f64;
    UnitEffects {
        tau_i,
        tau_hat: mean + spec.center,
        center: spec.center,
        bias_adjusted: false,
    }
}

/// Fitting set for the bias-correction outcome model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelScope {
    AllControls,
    NeighborsOnly,
}

/// Least-squares fit of y on (1, x) over controls; returns the intercept
/// followed by the k slopes.
pub fn fit_outcome_model(
    sample: &Sample,
    sets: &MatchedSets,
    scope: ModelScope,
) -> Result<Vec<f64>> {
    let rows: Vec<usize> = match scope {
        ModelScope::AllControls => sample.control_rows().to_vec(),
        ModelScope::NeighborsOnly => sets.matched_controls(),
    };
    let design: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            let mut d = Vec::with_capacity(sample.k() + 1);
            d.push(1.0);
            d.extend_from_slice(sample.x_row(r));
            d
        })
        .collect();
    let design_refs: Vec<&[f64]> = design.iter().map(|d| d.as_slice()).collect();
    let y: Vec<f64> = rows.iter().map(|&r| sample.y(r)).collect();
    if design_refs.len() <= sample.k() + 1 {
        return Err(Error::FittingSetTooSmall {
            rows: design_refs.len(),
            params: sample.k() + 1,
        });
    }
    least_squares(&design_refs, &y, "outcome model design")
}

fn predict(coef: &[f64], x: &[f64]) -> f64 {
    coef[0] + x.iter().zip(&coef[1..]).map(|(&xi, &b)| xi * b).sum::<f64>()
}

/// Bias-corrected unit effects: each matched outcome is shifted by
/// mu0(X_i) - mu0(X_j) before averaging.
pub fn bias_adjusted_unit_effects(
    sample: &Sample,
    sets: &MatchedSets,
    spec: &MatchSpec,
    coef: &[f64],
) -> UnitEffects {
    let tau_i: Vec<f64> = sample
        .treated_rows()
        .iter()
        .enumerate()
        .map(|(t, &t_row)| {
            let nbrs = sets.neighbors(t);
            let mu_t = predict(coef, sample.x_row(t_row));
            let adj_mean = nbrs
                .iter()
                .map(|&(c, _)| sample.y(c) + mu_t - predict(coef, sample.x_row(c)))
                .sum::<f64>()
                / nbrs.len() as f64;
            sample.y(t_row) - adj_mean - spec.center
        })
        .collect();
    let mean = tau_i.iter().sum::<f64>() / tau_i.len() as f64;
    UnitEffects {
        tau_i,
        tau_hat: mean + spec.center,
        center: spec.center,
        bias_adjusted: true,
    }
}

/// Full pipeline: match, optionally fit and apply the bias correction, and
/// return the matched sets with the unit effects.
pub fn estimate(sample: &Sample, spec: &MatchSpec) -> Result<(MatchedSets, UnitEffects)> {
    let sets = match_all(sample, spec)?;
    let effects = match spec.bias_adjust {
        BiasAdjust::Off => unit_effects(sample, &sets, spec),
        BiasAdjust::LinearAllControls => {
            let coef = fit_outcome_model(sample, &sets, ModelScope::AllControls)?;
            bias_adjusted_unit_effects(sample, &sets, spec, &coef)
        }
        BiasAdjust::LinearNeighborsOnly => {
            let coef = fit_outcome_model(sample, &sets, ModelScope::NeighborsOnly)?;
            bias_adjusted_unit_effects(sample, &sets, spec, &coef)
        }
    };
    Ok((sets, effects))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_1d(treated: &[(f64, f64)], controls: &[(f64, f64)]) -> Sample {
        // (x, y) pairs; treated first
        let mut y = Vec::new();
        let mut w = Vec::new();
        let mut x = Vec::new();
        for &(xi, yi) in treated {
            y.push(yi);
            w.push(1.0);
            x.push(vec![xi]);
        }
        for &(xi, yi) in controls {
            y.push(yi);
            w.push(0.0);
            x.push(vec![xi]);
        }
        Sample::from_columns(y, &w, &x).unwrap()
    }

    #[test]
    fn find_neighbors_by_distance() {
        // controls at 0, 1, 2, 10; treated at 1.1; m = 2
        let s = sample_1d(&[(1.1, 0.0)], &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (10.0, 0.0)]);
        let spec = MatchSpec {
            m: 2,
            ..Default::default()
        };
        let nbrs = find_neighbors(&s, &spec, 0).unwrap();
        assert_eq!(nbrs.len(), 2);
        assert_eq!(nbrs[0].0, 2); // x=1.0 is row 2
        assert!((nbrs[0].1 - 0.1).abs() < 1e-12);
        assert_eq!(nbrs[1].0, 3); // x=2.0 is row 3
        assert!((nbrs[1].1 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_distance_match() {
        let s = sample_1d(&[(1.0, 0.0)], &[(1.0, 0.0), (3.0, 0.0)]);
        let nbrs = find_neighbors(&s, &MatchSpec::default(), 0).unwrap();
        assert_eq!(nbrs[0].0, 1);
        assert_eq!(nbrs[0].1, 0.0);
    }

    #[test]
    fn equidistant_tie_breaks_to_smaller_row_id() {
        // controls at 0.9 (row 1) and 1.1 (row 2), treated at 1.0
        let s = sample_1d(&[(1.0, 0.0)], &[(0.9, 0.0), (1.1, 0.0)]);
        let nbrs = find_neighbors(&s, &MatchSpec::default(), 0).unwrap();
        assert_eq!(nbrs[0].0, 1);
    }

    #[test]
    fn too_few_eligible_controls() {
        let s = sample_1d(&[(1.0, 0.0)], &[(0.9, 0.0)]);
        let spec = MatchSpec {
            m: 2,
            ..Default::default()
        };
        assert!(matches!(
            find_neighbors(&s, &spec, 0),
            Err(Error::TooFewControls {
                needed: 2,
                available: 1,
                ..
            })
        ));
    }

    #[test]
    fn exact_columns_restrict_eligibility() {
        // k=2: second column is a discrete cell id
        let s = Sample::from_columns(
            vec![1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[vec![0.0, 1.0], vec![0.1, 0.0], vec![5.0, 1.0]],
        )
        .unwrap();
        let spec = MatchSpec {
            exact_columns: vec![1],
            ..Default::default()
        };
        // nearest overall is row 1, but only row 2 shares the cell
        let nbrs = find_neighbors(&s, &spec, 0).unwrap();
        assert_eq!(nbrs[0].0, 2);
        // requiring two matches in the cell fails
        let spec2 = MatchSpec {
            m: 2,
            exact_columns: vec![1],
            ..Default::default()
        };
        assert!(matches!(
            find_neighbors(&s, &spec2, 0),
            Err(Error::TooFewControls { .. })
        ));
    }

    #[test]
    fn match_all_shared_control_structure() {
        // treated at 0.9 and 1.1; controls at 1.0, 5.0, 6.0; m=1
        let s = sample_1d(
            &[(0.9, 0.0), (1.1, 0.0)],
            &[(1.0, 0.0), (5.0, 0.0), (6.0, 0.0)],
        );
        let sets = match_all(&s, &MatchSpec::default()).unwrap();
        assert_eq!(sets.neighbors(0)[0].0, 2);
        assert_eq!(sets.neighbors(1)[0].0, 2);
        assert_eq!(sets.k_count(2), 2);
        assert_eq!(sets.components(), &[vec![0, 1]]);
        assert!(sets.has_shared_neighbors());
    }

    #[test]
    fn match_all_disjoint_singletons() {
        let s = sample_1d(
            &[(0.0, 0.0), (10.0, 0.0)],
            &[(0.1, 0.0), (10.1, 0.0), (50.0, 0.0)],
        );
        let sets = match_all(&s, &MatchSpec::default()).unwrap();
        assert_eq!(sets.components(), &[vec![0], vec![1]]);
        assert!(!sets.has_shared_neighbors());
    }

    #[test]
    fn match_all_saturated_m_equals_n0() {
        let s = sample_1d(
            &[(0.0, 0.0), (10.0, 0.0)],
            &[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
        );
        let spec = MatchSpec {
            m: 3,
            ..Default::default()
        };
        let sets = match_all(&s, &spec).unwrap();
        assert_eq!(sets.components().len(), 1);
        let total: usize = (0..s.n()).map(|r| sets.k_count(r)).sum();
        assert_eq!(total, 3 * 2);
    }

    #[test]
    fn chain_components_are_transitive() {
        // t0 and t1 share control row 3; t1 and t2 share control row 4
        // (m = 2 so t1 matches both)
        let s = sample_1d(
            &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            &[(0.05, 0.0), (0.95, 0.0), (1.05, 0.0), (2.05, 0.0), (80.0, 0.0)],
        );
        let spec = MatchSpec {
            m: 2,
            ..Default::default()
        };
        let sets = match_all(&s, &spec).unwrap();
        // t0 -> {0.05, 0.95}, t1 -> {0.95, 1.05}, t2 -> {1.05(?), 2.05}
        assert_eq!(sets.components(), &[vec![0, 1, 2]]);
    }

    #[test]
    fn unit_effects_arithmetic_and_centering() {
        // treated Y=5 with two neighbors Y=3 and Y=1
        let s = sample_1d(&[(0.0, 5.0)], &[(0.1, 3.0), (0.2, 1.0)]);
        let spec = MatchSpec {
            m: 2,
            ..Default::default()
        };
        let sets = match_all(&s, &spec).unwrap();
        let eff = unit_effects(&s, &sets, &spec);
        assert!((eff.tau_i[0] - 3.0).abs() < 1e-12);
        assert!((eff.tau_hat - 3.0).abs() < 1e-12);

        let spec_c = MatchSpec {
            m: 2,
            center: 3.0,
            ..Default::default()
        };
        let eff_c = unit_effects(&s, &sets, &spec_c);
        assert!((eff_c.tau_i[0] - 0.0).abs() < 1e-12);
        // tau_hat is the estimate itself, unchanged by centering
        assert!((eff_c.tau_hat - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_estimate_is_mean_of_unit_effects() {
        let s = sample_1d(
            &[(0.0, 3.0), (10.0, -1.0)],
            &[(0.1, 0.0), (10.1, 0.0)],
        );
        let spec = MatchSpec::default();
        let sets = match_all(&s, &spec).unwrap();
        let eff = unit_effects(&s, &sets, &spec);
        assert!((eff.tau_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outcome_model_exact_fits() {
        // y = 2x on the controls
        let s = sample_1d(
            &[(0.5, 9.0)],
            &[(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)],
        );
        let sets = match_all(&s, &MatchSpec::default()).unwrap();
        let coef = fit_outcome_model(&s, &sets, ModelScope::AllControls).unwrap();
        assert!(coef[0].abs() < 1e-10);
        assert!((coef[1] - 2.0).abs() < 1e-10);

        // constant y = 7
        let s2 = sample_1d(&[(0.5, 9.0)], &[(0.0, 7.0), (1.0, 7.0), (2.0, 7.0)]);
        let sets2 = match_all(&s2, &MatchSpec::default()).unwrap();
        let coef2 = fit_outcome_model(&s2, &sets2, ModelScope::AllControls).unwrap();
        assert!((coef2[0] - 7.0).abs() < 1e-10);
        assert!(coef2[1].abs() < 1e-10);
    }

    #[test]
    fn outcome_model_singular_design() {
        // all controls share one x value: no slope is identified
        let s = sample_1d(&[(0.5, 9.0)], &[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]);
        let sets = match_all(&s, &MatchSpec::default()).unwrap();
        assert!(matches!(
            fit_outcome_model(&s, &sets, ModelScope::AllControls),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn bias_adjustment_cancels_for_identical_covariates() {
        let s = sample_1d(&[(1.0, 5.0)], &[(1.0, 3.0), (1.0, 1.0), (0.0, 0.5), (2.0, 4.5)]);
        let spec = MatchSpec {
            m: 2,
            ..Default::default()
        };
        let sets = match_all(&s, &spec).unwrap();
        let plain = unit_effects(&s, &sets, &spec);
        let coef = fit_outcome_model(&s, &sets, ModelScope::AllControls).unwrap();
        let adj = bias_adjusted_unit_effects(&s, &sets, &spec, &coef);
        // neighbors sit exactly at the treated covariate value
        assert!((plain.tau_i[0] - adj.tau_i[0]).abs() < 1e-12);
        assert!(adj.bias_adjusted);
    }

    #[test]
    fn bias_adjustment_recovers_linear_truth() {
        // controls follow y = 1 + 3x exactly; treated sits off-support so the
        // raw match is biased but the corrected effect is Y_i - mu0(X_i)
        let s = sample_1d(
            &[(2.0, 10.0)],
            &[(0.0, 1.0), (0.5, 2.5), (1.0, 4.0), (1.5, 5.5)],
        );
        let spec = MatchSpec {
            m: 2,
            ..Default::default()
        };
        let sets = match_all(&s, &spec).unwrap();
        let coef = fit_outcome_model(&s, &sets, ModelScope::AllControls).unwrap();
        let adj = bias_adjusted_unit_effects(&s, &sets, &spec, &coef);
        // mu0(2.0) = 7, so the corrected effect is 10 - 7 = 3
        assert!((adj.tau_i[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_slope_model_matches_unadjusted() {
        let s = sample_1d(&[(1.0, 5.0)], &[(0.5, 2.0), (1.5, 2.0), (3.0, 2.0)]);
        let spec = MatchSpec {
            m: 2,
            ..Default::default()
        };
        let sets = match_all(&s, &spec).unwrap();
        let plain = unit_effects(&s, &sets, &spec);
        let adj = bias_adjusted_unit_effects(&s, &sets, &spec, &[4.0, 0.0]);
        assert!((plain.tau_i[0] - adj.tau_i[0]).abs() < 1e-12);
    }

    #[test]
    fn weight_matrix_reorders_neighbors() {
        // with identity weights control B is closer; weighting the second
        // covariate 4x flips the ranking to control A
        let s = Sample::from_columns(
            vec![0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[vec![0.0, 0.0], vec![1.0, 0.5], vec![0.6, 0.9]],
        )
        .unwrap();
        let ident = MatchSpec::default();
        assert_eq!(find_neighbors(&s, &ident, 0).unwrap()[0].0, 2);
        let weighted = MatchSpec {
            v: Some(Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap()),
            ..Default::default()
        };
        assert_eq!(find_neighbors(&s, &weighted, 0).unwrap()[0].0, 1);
        // a non-PD weight matrix is a configuration error
        let bad = MatchSpec {
            v: Some(Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, -4.0]]).unwrap()),
            ..Default::default()
        };
        assert!(matches!(
            find_neighbors(&s, &bad, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mahalanobis_requires_nonsingular_controls() {
        let s = sample_1d(&[(1.0, 5.0)], &[(0.5, 2.0), (0.5, 3.0)]);
        let spec = MatchSpec {
            metric: Metric::MahalanobisFromControls,
            ..Default::default()
        };
        assert!(matches!(match_all(&s, &spec), Err(Error::Singular { .. })));
    }

    #[test]
    fn estimate_runs_bias_adjust_scopes() {
        let s = sample_1d(
            &[(0.6, 9.0), (1.4, 8.0)],
            &[(0.0, 1.0), (0.5, 2.5), (1.0, 4.0), (1.5, 5.5), (2.0, 7.0)],
        );
        for scope in [BiasAdjust::LinearAllControls, BiasAdjust::LinearNeighborsOnly] {
            let spec = MatchSpec {
                m: 2,
                bias_adjust: scope,
                ..Default::default()
            };
            let (_, eff) = estimate(&s, &spec).unwrap();
            assert!(eff.bias_adjusted);
            assert!(eff.tau_hat.is_finite());
        }
    }
}
