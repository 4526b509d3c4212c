//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one pass/fail line. Monte Carlo criteria pin their master seeds so
//! the whole suite is reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fewmatch::cli::{execute, Cli};
use fewmatch::inference::{
    permutation_test, sign_changes_test, StatVariant, TestConfig, TestMethod,
};
use fewmatch::matching::{estimate, MatchSpec, MatchedSets};
use fewmatch::sample::Sample;
use fewmatch::simulation::{
    draw_sample, mc_bias, mix_seed, run_mc_power, run_mc_size, DgpSpec, McConfig, Mu0Kind,
    Mu1Kind, Panel, TreatedError,
};
use fewmatch::statfun::{chi2_cdf, chi2_quantile, norm_cdf};

struct Criterion {
    id: usize,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(id: usize) -> Self {
        Criterion {
            id,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check_interval(&mut self, what: &str, got: f64, target: f64, tol: f64) {
        self.notes.push(format!("{what}={got:.4}"));
        if (got - target).abs() > tol {
            self.failures
                .push(format!("{what}: {got:.4} outside {target} +/- {tol}"));
        }
    }

    fn check(&mut self, what: &str, ok: bool) {
        if !ok {
            self.failures.push(what.to_string());
        }
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("criterion {}: PASS ({})", self.id, self.notes.join(", "));
        } else {
            println!(
                "criterion {}: FAIL ({})",
                self.id,
                self.failures.join("; ")
            );
        }
        assert!(
            self.failures.is_empty(),
            "criterion {} failed: {}",
            self.id,
            self.failures.join("; ")
        );
    }
}

fn panel_mc(m: usize, seed: u64, tests: Vec<TestMethod>) -> McConfig {
    McConfig {
        reps: 2000,
        master_seed: seed,
        tests,
        match_spec: MatchSpec {
            m,
            ..Default::default()
        },
        test_config: TestConfig::default(),
        j_var: 1,
        threads: None,
    }
}

#[test]
fn criterion_1_panel_a_size() {
    let start = std::time::Instant::now();
    let mut c = Criterion::new(1);
    let both = vec![TestMethod::SignChanges, TestMethod::Ai];
    // (n1, sign target, sign tol, ai target+tol); ai pinned at n1 = 5, 50
    #[allow(clippy::type_complexity)]
    let cells: [(usize, f64, f64, Option<(f64, f64)>); 3] = [
        (5, 0.067, 0.02, Some((0.213, 0.03))),
        (10, 0.098, 0.02, None),
        (50, 0.091, 0.02, Some((0.104, 0.03))),
    ];
    for (n1, sign_target, sign_tol, ai_target) in cells {
        let dgp = Panel::A.dgp(n1, 1000);
        let res = run_mc_size(&dgp, &panel_mc(1, 42, both.clone())).unwrap();
        c.check_interval(
            &format!("sign(n1={n1})"),
            res.rates[0].rate,
            sign_target,
            sign_tol,
        );
        if let Some((target, tol)) = ai_target {
            c.check_interval(&format!("ai(n1={n1})"), res.rates[1].rate, target, tol);
        }
    }
    let elapsed = start.elapsed();
    c.notes.push(format!("elapsed={elapsed:.1?}"));
    c.check("runtime under 10 minutes", elapsed.as_secs() < 600);
    c.finish();
}

#[test]
fn criterion_2_panel_e_asymmetry() {
    let mut c = Criterion::new(2);
    let dgp = Panel::E.dgp(5, 1000);
    let res = run_mc_size(
        &dgp,
        &panel_mc(4, 42, vec![TestMethod::SignChanges, TestMethod::Ai]),
    )
    .unwrap();
    let sign = res.rates[0].rate;
    let ai = res.rates[1].rate;
    c.check_interval("sign", sign, 0.107, 0.025);
    c.check_interval("ai", ai, 0.267, 0.03);
    c.check("sign over-rejection strictly milder than ai", sign < ai);
    c.finish();
}

#[test]
fn criterion_3_power_point() {
    let mut c = Criterion::new(3);
    let mut gaps = std::collections::BTreeMap::new();
    for n0 in [500usize, 1000, 2000] {
        let dgp = Panel::A.dgp(50, n0);
        let mc = panel_mc(4, 42, vec![TestMethod::SignChanges, TestMethod::Ai]);
        let curve = run_mc_power(&dgp, &[0.5], &mc, true).unwrap();
        let sign = curve[0].result.rates[0].rate;
        let ai = curve[0].result.rates[1].rate;
        assert!(curve[0].result.rates[1].size_adjusted);
        if n0 == 1000 {
            c.check_interval("sign power", sign, 0.690, 0.03);
            c.check_interval("ai size-adjusted power", ai, 0.756, 0.03);
        }
        gaps.insert(n0, ai - sign);
    }
    c.check_interval("gap at n0=2000", gaps[&2000], 0.037, 0.02);
    c.check_interval("gap at n0=500", gaps[&500], 0.11, 0.025);
    c.finish();
}

#[test]
fn criterion_4_conservativeness_lattice() {
    let mut c = Criterion::new(4);
    // five treated with distinct strong effects and private control pools
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut x = Vec::new();
    for i in 0..5 {
        y.push(10.0 + i as f64);
        w.push(1.0);
        x.push(vec![i as f64 * 100.0]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..5 {
        for j in 0..5 {
            y.push(rng.random::<f64>() - 0.5);
            w.push(0.0);
            x.push(vec![i as f64 * 100.0 + j as f64]);
        }
    }
    let sample = Sample::from_columns(y, &w, &x).unwrap();

    // sign changes with m = 1: K = 2^5 = 32
    let spec = MatchSpec::default();
    let (sets, effects) = estimate(&sample, &spec).unwrap();
    c.check("no shared neighbors", !sets.has_shared_neighbors());
    let at = |alpha: f64| {
        sign_changes_test(
            &effects,
            sets.components(),
            &TestConfig {
                alpha,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let r10 = at(0.10);
    let r05 = at(0.05);
    c.check("sign min attainable p is 2/32", r10.min_attainable_p == 0.0625);
    c.check("sign rejects at alpha=0.10", r10.reject);
    c.check("sign cannot reject at alpha=0.05", !r05.reject);
    c.check(
        "alpha=0.05 sits below the attainable lattice",
        r05.min_attainable_p > 0.05,
    );

    // permutations with m = 4: K = 5^5 = 3125
    let spec4 = MatchSpec {
        m: 4,
        ..Default::default()
    };
    let (sets4, _) = estimate(&sample, &spec4).unwrap();
    let p05 = permutation_test(
        &sample,
        &sets4,
        &spec4,
        &TestConfig {
            alpha: 0.05,
            ..Default::default()
        },
    )
    .unwrap();
    c.check("perm group size is 3125", p05.group_size == 3125);
    c.check(
        "perm min attainable p is 1/3125",
        (p05.min_attainable_p - 1.0 / 3125.0).abs() < 1e-15,
    );
    c.check("perm rejects at alpha=0.05", p05.reject);
    c.check("perm p-value equals 1/3125", p05.p_value == 1.0 / 3125.0);
    c.finish();
}

// --- independent brute-force oracles (no group machinery shared) ---------

fn brute_statistic(vals: &[f64]) -> f64 {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
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

/// Enumerates all sign vectors over units directly, keeping those constant
/// on every pair of treated units that shares a matched control.
fn brute_sign(effects: &[f64], sets: &MatchedSets, alpha: f64) -> (f64, bool, u64) {
    let n = effects.len();
    let shares = |i: usize, j: usize| -> bool {
        sets.neighbors(i)
            .iter()
            .any(|&(r, _)| sets.neighbors(j).iter().any(|&(r2, _)| r2 == r))
    };
    let mut stats = Vec::new();
    let mut t_obs = f64::NAN;
    for mask in 0u64..(1 << n) {
        let mut admissible = true;
        'pairs: for i in 0..n {
            for j in (i + 1)..n {
                if shares(i, j) && ((mask >> i) ^ (mask >> j)) & 1 == 1 {
                    admissible = false;
                    break 'pairs;
                }
            }
        }
        if !admissible {
            continue;
        }
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                if (mask >> i) & 1 == 0 {
                    effects[i]
                } else {
                    -effects[i]
                }
            })
            .collect();
        let t = brute_statistic(&vals);
        if mask == 0 {
            t_obs = t;
        }
        stats.push(t);
    }
    let k_total = stats.len();
    let p = stats.iter().filter(|&&t| t >= t_obs).count() as f64 / k_total as f64;
    let mut sorted = stats;
    sorted.sort_unstable_by(f64::total_cmp);
    let k = ((k_total as f64) * (1.0 - alpha) - 1e-9).ceil() as usize;
    let crit = sorted[k.clamp(1, k_total) - 1];
    (p, t_obs > crit, k_total as u64)
}

/// Enumerates all (m+1)^n1 treated-slot assignments directly, keeping those
/// where every shared control plays one role across its sets.
fn brute_perm(
    sample: &Sample,
    sets: &MatchedSets,
    center: f64,
    alpha: f64,
    standardized: bool,
) -> (f64, bool, u64) {
    let n1 = sets.n1();
    let m = sets.m();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (t, &t_row) in sample.treated_rows().iter().enumerate() {
        let mut v = vec![sample.y(t_row) - center];
        for &(c_row, _) in sets.neighbors(t) {
            v.push(sample.y(c_row));
        }
        values.push(v);
    }
    let total = (m + 1).pow(n1 as u32);
    let mut stats = Vec::new();
    let mut t_obs = f64::NAN;
    for code in 0..total {
        let mut assignment = Vec::with_capacity(n1);
        let mut rest = code;
        for _ in 0..n1 {
            assignment.push(rest % (m + 1));
            rest /= m + 1;
        }
        // role consistency: a control picked in one set must be picked in
        // every set that contains it
        let mut admissible = true;
        'sets: for i in 0..n1 {
            for j in 0..n1 {
                if i == j {
                    continue;
                }
                for (pos_i, &(row, _)) in sets.neighbors(i).iter().enumerate() {
                    if let Some(pos_j) = sets.neighbors(j).iter().position(|&(r, _)| r == row) {
                        let picked_i = assignment[i] == pos_i + 1;
                        let picked_j = assignment[j] == pos_j + 1;
                        if picked_i != picked_j {
                            admissible = false;
                            break 'sets;
                        }
                    }
                }
            }
        }
        if !admissible {
            continue;
        }
        let effs: Vec<f64> = (0..n1)
            .map(|i| {
                let v = &values[i];
                let chosen = v[assignment[i]];
                let rest_sum: f64 = v
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != assignment[i])
                    .map(|(_, &x)| x)
                    .sum();
                chosen - rest_sum / m as f64
            })
            .collect();
        let t = if standardized {
            brute_statistic(&effs)
        } else {
            (effs.iter().sum::<f64>() / n1 as f64).abs()
        };
        if code == 0 {
            t_obs = t;
        }
        stats.push(t);
    }
    let k_total = stats.len();
    let p = stats.iter().filter(|&&t| t >= t_obs).count() as f64 / k_total as f64;
    let mut sorted = stats;
    sorted.sort_unstable_by(f64::total_cmp);
    let k = ((k_total as f64) * (1.0 - alpha) - 1e-9).ceil() as usize;
    let crit = sorted[k.clamp(1, k_total) - 1];
    (p, t_obs > crit, k_total as u64)
}

fn random_sample(rng: &mut ChaCha8Rng, n1: usize, n0: usize) -> Sample {
    let normal = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let n = n1 + n0;
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for i in 0..n {
        y.push(normal(rng));
        w.push(if i < n1 { 1.0 } else { 0.0 });
        x.push(vec![normal(rng)]);
    }
    Sample::from_columns(y, &w, &x).unwrap()
}

#[test]
fn criterion_5_oracle_equivalence() {
    let mut c = Criterion::new(5);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut datasets = 0;

    // sign-changes oracle, including tight control pools that force sharing
    for case in 0..12 {
        let n1 = 3 + case % 3; // 3..5
        let n0 = if case % 2 == 0 { n1 + 1 } else { 4 * n1 };
        let m = 1 + case % 2;
        let sample = random_sample(&mut rng, n1, n0);
        let spec = MatchSpec {
            m,
            ..Default::default()
        };
        let (sets, effects) = estimate(&sample, &spec).unwrap();
        let config = TestConfig::default();
        let res = sign_changes_test(&effects, sets.components(), &config).unwrap();
        let (bp, brej, bk) = brute_sign(&effects.tau_i, &sets, config.alpha);
        c.check(
            &format!("sign case {case}: enumerated"),
            res.enumerated && res.group_size <= 4096,
        );
        c.check(
            &format!("sign case {case}: p matches brute force exactly"),
            res.p_value == bp,
        );
        c.check(
            &format!("sign case {case}: decision matches"),
            res.reject == brej,
        );
        c.check(
            &format!("sign case {case}: group size matches"),
            res.group_size == bk,
        );

        // sampled mode within 3 binomial SEs of the enumerated value
        let n_draws = 50 * bk as usize;
        let sampled = sign_changes_test(
            &effects,
            sets.components(),
            &TestConfig {
                max_enumeration: 1,
                n_draws,
                seed: 1000 + case as u64,
                ..Default::default()
            },
        )
        .unwrap();
        let se = (bp * (1.0 - bp) / n_draws as f64).sqrt();
        // the sampled estimator counts the identity once, a 1/(n+1) lattice
        // discretization on top of the binomial noise
        let slack = 3.0 * se + 2.0 / (n_draws as f64 + 1.0);
        c.check(
            &format!("sign case {case}: sampled p within 3 SE"),
            (sampled.p_value - bp).abs() <= slack,
        );
        datasets += 1;
    }

    // permutation oracle, both statistics
    for case in 0..12 {
        let n1 = 2 + case % 3; // 2..4
        let m = 1 + case % 3; // 1..3
        let n0 = m * n1 + case % 4;
        let sample = random_sample(&mut rng, n1, n0);
        let spec = MatchSpec {
            m,
            ..Default::default()
        };
        let (sets, _) = estimate(&sample, &spec).unwrap();
        for standardized in [false, true] {
            if standardized && n1 < 2 {
                continue;
            }
            let config = TestConfig {
                stat_variant: if standardized {
                    StatVariant::Standardized
                } else {
                    StatVariant::AbsoluteMean
                },
                ..Default::default()
            };
            let res = permutation_test(&sample, &sets, &spec, &config).unwrap();
            let (bp, brej, bk) = brute_perm(&sample, &sets, 0.0, config.alpha, standardized);
            let tag = format!("perm case {case} std={standardized}");
            c.check(&format!("{tag}: enumerated"), res.enumerated);
            c.check(&format!("{tag}: p matches brute force"), res.p_value == bp);
            c.check(&format!("{tag}: decision matches"), res.reject == brej);
            c.check(&format!("{tag}: group size matches"), res.group_size == bk);
        }
        datasets += 1;
    }
    c.notes.push(format!("{datasets} datasets"));
    c.check("at least 20 datasets", datasets >= 20);
    c.finish();
}

#[test]
fn criterion_6_m1_equivalence() {
    let mut c = Criterion::new(6);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut mismatches = 0;
    for case in 0..100 {
        let n1 = 2 + case % 7; // 2..8
        let n0 = n1 + case % 17; // occasionally tight, forcing sharing
        let sample = random_sample(&mut rng, n1, n0.max(2));
        let spec = MatchSpec::default();
        let (sets, effects) = estimate(&sample, &spec).unwrap();
        let config = TestConfig {
            stat_variant: StatVariant::Standardized,
            ..Default::default()
        };
        let sign = sign_changes_test(&effects, sets.components(), &config).unwrap();
        let perm = permutation_test(&sample, &sets, &spec, &config).unwrap();
        if sign.p_value != perm.p_value || sign.reject != perm.reject {
            mismatches += 1;
        }
    }
    c.notes.push("100 datasets".into());
    c.check(
        &format!("{mismatches} mismatches between sign and m=1 permutation"),
        mismatches == 0,
    );
    c.finish();
}

#[test]
fn criterion_7_unbiasedness() {
    let mut c = Criterion::new(7);
    for n1 in [5usize, 25] {
        let dgp = Panel::A.dgp(n1, 1000);
        let mc = McConfig {
            reps: 2000,
            master_seed: 7,
            tests: vec![],
            ..Default::default()
        };
        let b = mc_bias(&dgp, &mc).unwrap();
        let ratio = b.matching_bias.abs() / b.matching_se;
        c.notes
            .push(format!("panelA n1={n1} |bias|/se={ratio:.2}"));
        c.check(
            &format!("panel A n1={n1}: |mean tau_hat| within 3 MC SEs of 0"),
            ratio <= 3.0,
        );
    }

    // selection design: treated covariates shifted, outcomes linear in x
    let sel = DgpSpec {
        n1: 10,
        n0: 2000,
        mu1: Mu1Kind::Linear,
        error: TreatedError::StandardNormal,
        tau: 0.0,
        k: 1,
        mu0: Mu0Kind::Linear,
        treated_x_shift: 1.0,
    };
    let mc = McConfig {
        reps: 2000,
        master_seed: 42,
        tests: vec![],
        ..Default::default()
    };
    let b = mc_bias(&sel, &mc).unwrap();
    c.notes.push(format!(
        "selection naive={:.3} matching={:.3}",
        b.naive_bias, b.matching_bias
    ));
    c.check(
        "naive difference in means biased by about 1.0",
        (b.naive_bias - 1.0).abs() <= 3.0 * b.naive_se,
    );
    c.check(
        "matching bias within 3 MC SEs of 0",
        b.matching_bias.abs() <= 3.0 * b.matching_se,
    );
    c.finish();
}

#[test]
fn criterion_8_special_function_accuracy() {
    let mut c = Criterion::new(8);
    c.check(
        "norm_cdf(1.959964) within 1e-7 of 0.975",
        (norm_cdf(1.959964) - 0.975).abs() < 1e-7,
    );
    c.check(
        "chi2_quantile(0.5, 1) within 1e-5 of 0.454936",
        (chi2_quantile(0.5, 1).unwrap() - 0.454936).abs() < 1e-5,
    );
    c.check(
        "chi2_quantile(0.5, 8) within 1e-5 of 7.344121",
        (chi2_quantile(0.5, 8).unwrap() - 7.344121).abs() < 1e-5,
    );
    let mut worst: f64 = 0.0;
    for p in [1u32, 2, 5, 8, 12] {
        for i in 1..50 {
            let u = i as f64 / 50.0;
            let err = (chi2_cdf(chi2_quantile(u, p).unwrap(), p).unwrap() - u).abs();
            worst = worst.max(err);
        }
    }
    c.notes.push(format!("roundtrip worst={worst:.2e}"));
    c.check("cdf(quantile(u)) roundtrip under 1e-9", worst < 1e-9);
    c.finish();
}

#[test]
fn criterion_9_byte_identical_outputs() {
    let mut c = Criterion::new(9);
    let dir = std::env::temp_dir().join(format!("fewmatch-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let run = |sub: &str, threads: &str, out: &std::path::Path| {
        use clap::Parser;
        let out_s = out.to_str().unwrap().to_string();
        let mut argv = vec![
            "fewmatch".to_string(),
            sub.to_string(),
            "--panel".into(),
            "a".into(),
            "--n1".into(),
            "5".into(),
            "--m".into(),
            "1,4".into(),
            "--n0".into(),
            "60".into(),
            "--reps".into(),
            "60".into(),
            "--seed".into(),
            "31".into(),
            "--method".into(),
            "sign,ai,perm".into(),
            "--threads".into(),
            threads.to_string(),
            "--format".into(),
            "csv".into(),
            "--output".into(),
            out_s,
        ];
        if sub == "power" {
            argv.extend(["--tau".into(), "0,0.5".into()]);
        }
        let cli = Cli::parse_from(argv);
        let result = execute(&cli).unwrap();
        std::fs::write(out, &result.body).unwrap();
    };
    for sub in ["mc", "power"] {
        let f1 = dir.join(format!("{sub}-t1.csv"));
        let f2 = dir.join(format!("{sub}-t2.csv"));
        run(sub, "1", &f1);
        run(sub, "2", &f2);
        let b1 = std::fs::read(&f1).unwrap();
        let b2 = std::fs::read(&f2).unwrap();
        c.check(
            &format!("{sub} output byte-identical across thread counts"),
            b1 == b2,
        );
        c.notes.push(format!("{sub}: {} bytes", b1.len()));
    }
    c.finish();
}

// Supplementary size-control sweep: with the symmetric null design the
// sign-changes test must not over-reject anywhere on the design grid.
#[test]
fn panel_a_sign_test_controls_size_on_the_grid() {
    let reps = 600;
    for n1 in [5usize, 10, 25, 50] {
        for m in [1usize, 4, 10] {
            let dgp = Panel::A.dgp(n1, 1000);
            let mc = McConfig {
                reps,
                master_seed: 314,
                tests: vec![TestMethod::SignChanges],
                match_spec: MatchSpec {
                    m,
                    ..Default::default()
                },
                ..Default::default()
            };
            let res = run_mc_size(&dgp, &mc).unwrap();
            let rate = res.rates[0].rate;
            let bound = 0.10 + 3.0 * (0.10 * 0.90 / reps as f64).sqrt();
            assert!(
                rate <= bound,
                "sign rate {rate:.3} over-rejects at n1={n1} m={m} (bound {bound:.3})"
            );
        }
    }
}

// Supplementary distribution check: under the symmetric null design the
// per-unit effects should show no skew.
#[test]
fn panel_a_unit_effects_are_symmetric() {
    let dgp = Panel::A.dgp(5, 500);
    let spec = MatchSpec::default();
    let mut all_effects = Vec::new();
    for rep in 0..800usize {
        let sample = draw_sample(&dgp, mix_seed(808, rep as u64)).unwrap();
        let (_, eff) = estimate(&sample, &spec).unwrap();
        all_effects.extend(eff.tau_i);
    }
    let n = all_effects.len() as f64;
    let mean = all_effects.iter().sum::<f64>() / n;
    let m2 = all_effects.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = all_effects.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let se = (6.0 / n).sqrt();
    assert!(
        skew.abs() <= 3.0 * se,
        "skew {skew:.4} exceeds 3 x {se:.4}"
    );
}
