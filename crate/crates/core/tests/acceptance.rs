//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use common::{cn_vector, gain, log2_1p, log2_det_sum, random_channel, rng, sic_chain_rule_rates, CVec};
use rsma::baselines;
use rsma::channel::ChannelMatrix;
use rsma::downlink::{self, DownlinkDesign};
use rsma::experiments::{self, ChannelSource, ExperimentConfig, ScenarioKind, Scheme};
use rsma::precoder::{self, Objective, OptimizerSettings, PrivateBeams};
use rsma::uplink::{self, StreamLabel, UplinkDesign};

type Criterion = (&'static str, u64, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Random beams with total power `p` split at random.
fn random_beams(rng: &mut rand_chacha::ChaCha20Rng, n_tx: usize, count: usize, p: f64) -> Vec<CVec> {
    let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| {
            let v = cn_vector(rng, n_tx, 1.0);
            let n = v.norm();
            v * Complex64::new((p * w / total).sqrt() / n, 0.0)
        })
        .collect()
}

fn sdma_reduction() -> Outcome {
    let (m, k, p) = (4, 3, 10.0);
    let mut worst = 0f64;
    for i in 0..1000u64 {
        let mut r = rng(0xC1_0000 + i);
        let noise = r.random_range(0.5..2.0);
        let ch = random_channel(&mut r, m, k, noise);
        let beams = random_beams(&mut r, m, k, p);
        let design = DownlinkDesign::new(CVec::zeros(m), beams.clone(), vec![0.0; k], p).unwrap();
        let rsma = downlink::evaluate(&ch, &design).unwrap().totals();
        let sdma = baselines::sdma_rates(&ch, &beams).unwrap();
        for u in 0..k {
            let h = ch.user(u);
            let interf: f64 = (0..k).filter(|&j| j != u).map(|j| gain(h, &beams[j])).sum();
            let oracle = log2_1p(gain(h, &beams[u]) / (interf + noise));
            worst = worst.max((rsma[u] - sdma[u]).abs()).max((rsma[u] - oracle).abs());
        }
    }
    check(worst <= 1e-12, format!("max |rsma - sdma| = {worst:.2e} over 1000 instances (M=4, K=3)"))
}

fn noma_reduction() -> Outcome {
    let p = 10.0;
    let mut worst = 0f64;
    for i in 0..1000u64 {
        let mut r = rng(0xC2_0000 + i);
        let m = r.random_range(1..=4);
        let noise = r.random_range(0.5..2.0);
        let ch = random_channel(&mut r, m, 2, noise);
        let weak = r.random_range(0..2usize);
        let strong = 1 - weak;
        let beams = random_beams(&mut r, m, 2, p);
        let mut private = vec![CVec::zeros(m); 2];
        private[strong] = beams[strong].clone();
        let design = DownlinkDesign::new(beams[weak].clone(), private, vec![0.0; 2], p).unwrap();
        let mut shares = vec![0.0; 2];
        shares[weak] = downlink::common_rate(&ch, &design).unwrap();
        let rsma = downlink::evaluate(&ch, &design.with_shares(shares).unwrap()).unwrap().totals();
        let noma = baselines::noma_rates_2user(&ch, &beams, weak).unwrap();
        let decode_weak = |u: usize| log2_1p(gain(ch.user(u), &beams[weak]) / (gain(ch.user(u), &beams[strong]) + noise));
        let oracle_weak = decode_weak(0).min(decode_weak(1));
        let oracle_strong = log2_1p(gain(ch.user(strong), &beams[strong]) / noise);
        worst = worst
            .max((rsma[0] - noma[0]).abs())
            .max((rsma[1] - noma[1]).abs())
            .max((rsma[weak] - oracle_weak).abs())
            .max((rsma[strong] - oracle_strong).abs());
    }
    check(worst <= 1e-12, format!("max |rsma - noma| = {worst:.2e} over 1000 two-user instances"))
}

fn uplink_sum_conservation() -> Outcome {
    let mut worst = 0f64;
    let mut evaluations = 0usize;
    let orders = [uplink::enumerate_orders(2).unwrap(), uplink::enumerate_orders(3).unwrap()];
    for i in 0..1000u64 {
        let m = [1, 2, 4][(i % 3) as usize];
        let k = [2, 3][((i / 3) % 2) as usize];
        let mut r = rng(0xC3_0000 + i);
        let noise = r.random_range(0.5..2.0);
        let ch = random_channel(&mut r, m, k, noise);
        let budgets: Vec<f64> = (0..k).map(|_| 10f64.powf(r.random_range(-1.0..2.0))).collect();
        let target = log2_det_sum(&ch, &budgets);
        for order in &orders[k - 2] {
            for _ in 0..5 {
                let fractions: Vec<f64> = (0..k - 1).map(|_| r.random::<f64>()).collect();
                let design = UplinkDesign::full_power(&budgets, &fractions, order.clone()).unwrap();
                let rates = uplink::evaluate_uplink(&ch, &design).unwrap();
                let streams: f64 = rates.stream_rates.iter().map(|(_, x)| x).sum();
                worst = worst.max((streams - target).abs());
                evaluations += 1;
            }
        }
    }
    check(
        worst <= 1e-9,
        format!("max |sum of stream rates - log2 det| = {worst:.2e} over {evaluations} evaluations"),
    )
}

fn siso_region_coverage() -> Outcome {
    let one = |x: f64| vec![Complex64::new(x, 0.0)];
    let ch = ChannelMatrix::new(vec![CVec::from_vec(one(1.0)), CVec::from_vec(one(1.0))], 1.0).unwrap();
    let budgets = [1.0, 1.0];
    let cloud = uplink::trace_region_2user(&ch, budgets, 1001, 1001).unwrap();

    // Pentagon oracle for unit gains and powers.
    let single = log2_1p(1.0);
    let sum = 3f64.log2();
    let inside_err = cloud
        .iter()
        .map(|p| {
            let (a, b) = p.rates;
            (a - single).max(b - single).max(a + b - sum).max(-a).max(-b)
        })
        .fold(f64::NEG_INFINITY, f64::max);

    // Each point must come from its own single design.
    let replay_err = cloud
        .iter()
        .map(|p| {
            let (a, b) = uplink::region_point_rates(&ch, budgets, p).unwrap();
            (a - p.rates.0).abs().max((b - p.rates.1).abs())
        })
        .fold(0f64, f64::max);

    let mut r = rng(0xC4);
    let face_lo = sum - single;
    let coverage = (0..50)
        .map(|_| {
            let lambda: f64 = r.random();
            let target = (face_lo + lambda * (single - face_lo), single - lambda * (single - face_lo));
            cloud
                .iter()
                .map(|p| ((p.rates.0 - target.0).powi(2) + (p.rates.1 - target.1).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0f64, f64::max);
    check(
        coverage <= 1e-3 && inside_err <= 1e-9 && replay_err <= 1e-12,
        format!(
            "worst face gap {coverage:.2e} over 50 face points, worst pentagon excess {inside_err:.2e}, {} points, single-design replay error {replay_err:.1e}",
            cloud.len()
        ),
    )
}

fn degenerate_split() -> Outcome {
    let mut worst = 0f64;
    for i in 0..500u64 {
        let mut r = rng(0xC5_0000 + i);
        let m = r.random_range(1..=4);
        let k = r.random_range(2..=4);
        let noise = r.random_range(0.5..2.0);
        let ch = random_channel(&mut r, m, k, noise);
        let budgets: Vec<f64> = (0..k).map(|_| 10f64.powf(r.random_range(-1.0..2.0))).collect();
        let user_order = common::permutation(&mut r, k);
        let mut order: Vec<StreamLabel> = user_order
            .iter()
            .map(|&u| if u == k - 1 { StreamLabel::Last } else { StreamLabel::Part { user: u, part: 1 } })
            .collect();
        for u in 0..k - 1 {
            let at = r.random_range(0..=order.len());
            order.insert(at, StreamLabel::Part { user: u, part: 2 });
        }
        let split = (0..k - 1).map(|u| (budgets[u], 0.0)).collect();
        let design = UplinkDesign::new(split, budgets[k - 1], order, budgets.clone()).unwrap();
        let split_rates = uplink::evaluate_uplink(&ch, &design).unwrap().user_rates;
        let sic = baselines::uplink_sic_rates(&ch, &budgets, &user_order).unwrap();
        let oracle = sic_chain_rule_rates(&ch, &budgets, &user_order);
        for u in 0..k {
            worst = worst.max((split_rates[u] - sic[u]).abs());
            // The log-det oracle is only accurate to LU rounding.
            assert!((split_rates[u] - oracle[u]).abs() < 1e-9, "chain-rule oracle mismatch");
        }
    }
    check(worst <= 1e-12, format!("max |split - unsplit SIC| = {worst:.2e} over 500 instances"))
}

/// Two users whose channels share a dominant direction.
fn aligned_leaning(seed: u64) -> ChannelMatrix {
    let mut r = rng(seed);
    let h1 = cn_vector(&mut r, 2, 1.0);
    let scale = cn_vector(&mut r, 1, 1.0)[0];
    let h2 = &h1 * (scale / Complex64::new(h1.norm(), 0.0)) + cn_vector(&mut r, 2, 0.09);
    ChannelMatrix::new(vec![h1, h2], 1.0).unwrap()
}

fn optimizer_dominance() -> Outcome {
    let p = 100.0;
    let weights = [1.0, 1.0];
    let settings = OptimizerSettings::default();
    let results: Vec<(f64, f64, bool, bool)> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let ch = aligned_leaning(0xC6_0000 + i);
            let split = precoder::split_search(&ch, p, Objective::SumRate, precoder::DEFAULT_GRID_SIZE)
                .or_else(|_| precoder::split_search_with(&ch, p, Objective::SumRate, precoder::DEFAULT_GRID_SIZE, PrivateBeams::MatchedFilter))
                .unwrap();
            let sdma = precoder::optimize_sdma(&ch, p, &weights, &settings).unwrap();
            let noma = precoder::optimize_noma(&ch, p, &weights, precoder::DEFAULT_GRID_SIZE, &settings).unwrap();
            let starts = [split.0.clone(), sdma.best_design.clone(), noma.best_design.clone()];
            let rsma = precoder::optimize_wsr(&ch, &weights, &starts, settings.max_iters, settings.tol).unwrap();

            let value = |d: &DownlinkDesign| downlink::evaluate(&ch, d).unwrap().sum_rate();
            let baseline = split.1.sum_rate().max(value(&sdma.best_design)).max(value(&noma.best_design));
            let achieved = value(&rsma.best_design);
            let monotone = rsma.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9)
                && (rsma.objective() - achieved).abs() < 1e-9;
            (achieved - baseline, achieved, monotone, achieved > baseline + 1e-6)
        })
        .collect();
    let worst_margin = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let all_monotone = results.iter().all(|r| r.2);
    let improved = results.iter().filter(|r| r.3).count();
    let mean: f64 = results.iter().map(|r| r.1).sum::<f64>() / results.len() as f64;
    check(
        worst_margin >= -1e-9 && all_monotone,
        format!(
            "worst margin over best baseline {worst_margin:.2e}, traces monotone: {all_monotone}, strictly improved {improved}/200, mean sum rate {mean:.3}"
        ),
    )
}

fn downlink_config(trials: usize, snr: Vec<f64>, alpha: Option<f64>, schemes: Vec<Scheme>) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.scenario.kind = ScenarioKind::Downlink;
    c.scenario.n_tx = 2;
    c.scenario.n_users = 2;
    c.scenario.snr_grid_db = snr;
    c.scenario.alpha = alpha;
    c.scenario.trials = trials;
    c.scenario.master_seed = 2024;
    c.scenario.schemes = schemes;
    c
}

fn imperfect_csit_trend() -> Outcome {
    let config = downlink_config(1000, vec![20.0], Some(0.5), vec![Scheme::Rsma, Scheme::Sdma]);
    let table = experiments::run(&config).unwrap();
    let rate = |scheme: &str| {
        let mut v: Vec<(usize, f64)> = table.rows.iter().filter(|r| r.scheme == scheme).map(|r| (r.trial, r.sum_rate)).collect();
        v.sort_by_key(|x| x.0);
        v
    };
    let (rsma, sdma) = (rate("rsma"), rate("sdma"));
    let diffs: Vec<f64> = rsma.iter().zip(&sdma).map(|(a, b)| {
        assert_eq!(a.0, b.0);
        a.1 - b.1
    }).collect();
    let n = diffs.len() as f64;
    let finite = diffs.iter().all(|d| d.is_finite());
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let lower = mean - 1.644_853_626_951_472_2 * sd / n.sqrt();
    check(
        finite && diffs.len() == 1000 && lower > 0.0,
        format!("mean(rsma - sdma) = {mean:.4} bits/s/Hz, one-sided 95% lower bound {lower:.4}, n = {}", diffs.len()),
    )
}

fn fixture_slope(rows: Vec<Vec<[f64; 2]>>, scheme: Scheme) -> f64 {
    let mut c = downlink_config(1, vec![20.0, 40.0], None, vec![scheme]);
    c.scenario.channel = ChannelSource::Fixture;
    c.scenario.fixture = Some(rows);
    let t = experiments::run(&c).unwrap();
    assert!(t.rows.iter().all(|r| r.is_ok()));
    let r20 = t.rows.iter().find(|r| r.snr_db == 20.0).unwrap().sum_rate;
    let r40 = t.rows.iter().find(|r| r.snr_db == 40.0).unwrap().sum_rate;
    (r40 - r20) / (experiments::snr_to_power(40.0).log2() - experiments::snr_to_power(20.0).log2())
}

fn high_snr_slopes() -> Outcome {
    let orthogonal = vec![vec![[1.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0], [1.0, 0.0]]];
    let aligned = vec![vec![[1.0, 0.0], [0.0, 0.0]], vec![[0.6, 0.3], [0.0, 0.0]]];
    let rsma = fixture_slope(orthogonal, Scheme::Rsma);
    let sdma = fixture_slope(aligned, Scheme::Sdma);
    check(
        (rsma - 2.0).abs() <= 0.1 && sdma <= 1.1,
        format!("orthogonal RSMA slope {rsma:.4} (target 2 +/- 0.1), aligned SDMA slope {sdma:.4} (limit 1.1)"),
    )
}

fn csv_bytes(config: &ExperimentConfig, threads: Option<usize>, dir: &std::path::Path, name: &str) -> Vec<u8> {
    let table = experiments::run_with_threads(config, threads).unwrap();
    let path = dir.join(name);
    experiments::write_csv(&table, &path).unwrap();
    std::fs::read(path).unwrap()
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut downlink = downlink_config(12, vec![0.0, 20.0], Some(0.5), vec![Scheme::Rsma, Scheme::Sdma, Scheme::Noma, Scheme::Oma]);
    downlink.optimizer.max_iters = 100;
    let mut perfect = downlink.clone();
    perfect.scenario.alpha = None;
    let mut up = ExperimentConfig::default();
    up.scenario.kind = ScenarioKind::Uplink;
    up.scenario.n_users = 3;
    up.scenario.trials = 8;
    up.scenario.snr_grid_db = vec![10.0];
    up.optimizer.split_grid = 11;

    let mut identical = true;
    let mut rows = 0;
    for (i, c) in [downlink, perfect, up].iter().enumerate() {
        let a = csv_bytes(c, None, dir.path(), &format!("{i}_a.csv"));
        let b = csv_bytes(c, None, dir.path(), &format!("{i}_b.csv"));
        let one = csv_bytes(c, Some(1), dir.path(), &format!("{i}_1.csv"));
        let eight = csv_bytes(c, Some(8), dir.path(), &format!("{i}_8.csv"));
        identical &= a == b && a == one && a == eight;
        rows += c.expected_rows();
    }
    check(identical, format!("3 configs ({rows} rows): repeat run and 1 vs 8 threads byte-identical: {identical}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("sdma-reduction identity", 5, sdma_reduction),
        ("noma-reduction identity", 5, noma_reduction),
        ("uplink sum conservation", 60, uplink_sum_conservation),
        ("two-user MAC region coverage", 10, siso_region_coverage),
        ("degenerate-split equivalence", 5, degenerate_split),
        ("optimizer dominance", 120, optimizer_dominance),
        ("imperfect-CSIT trend", 300, imperfect_csit_trend),
        ("high-SNR slopes", 30, high_snr_slopes),
        ("reproducibility", 30, reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let pass = outcome.pass && in_time;
        failures += usize::from(!pass);
        println!(
            "[{}] {}. {name}: {} ({:.2} s, budget {budget} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
