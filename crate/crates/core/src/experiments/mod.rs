//! Seeded Monte Carlo experiments over SNR and CSIT quality.
//!
//! Each `(snr index, trial)` cell draws one channel (and at most one CSIT
//! error) from seeds derived from the master seed, and every scheme in the
//! cell is designed on the same estimate and scored on the same true
//! channel. Cells are independent, run on a rayon pool, and are collected
//! in cell order so the output does not depend on the thread count.

mod config;
mod table;

pub use config::{
    parse_assignment, ChannelSource, ExperimentConfig, FilterKind, OptimizerConfig, OutputConfig, ScenarioConfig, ScenarioKind, Scheme,
    KNOWN_KEYS,
};
pub use table::{
    format_sig, from_csv_str, header, read_csv, summarize, summary_csv_string, to_csv_string, write_csv, AggregateRow, GroupKey, Metric,
    ResultRow, ResultTable,
};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::baselines;
use crate::channel::{self, ChannelMatrix, CsitModel, RNG_ID};
use crate::downlink::{self, DownlinkDesign};
use crate::linalg::norm_sqr;
use crate::precoder::{self, Objective, OptimizerSettings, PrivateBeams};
use crate::uplink::{self, RegionPoint};
use crate::{Error, Result};

/// Identifier of the cell-seed derivation, written to CSV metadata.
pub const SEED_MIX_ID: &str = "splitmix64-chain-v1";

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of cell `(snr_index, trial)`: `sm(sm(sm(master) ^ snr_index) ^ trial)`.
pub fn cell_seed(master_seed: u64, snr_index: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ snr_index as u64) ^ trial as u64)
}

/// Independent stream `tag` within a cell: 0 channel, 1 CSIT error, 2 design sampling.
pub fn substream_seed(cell: u64, tag: u64) -> u64 {
    splitmix64(cell ^ splitmix64(tag.wrapping_add(0x5EED)))
}

/// Transmit power for an SNR in dB with unit noise.
pub fn snr_to_power(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

fn metadata(config: &ExperimentConfig) -> Vec<(String, String)> {
    let s = &config.scenario;
    vec![
        ("generator".into(), format!("rsma {}", env!("CARGO_PKG_VERSION"))),
        ("rng".into(), RNG_ID.into()),
        ("seed_mix".into(), SEED_MIX_ID.into()),
        ("scenario".into(), s.kind.as_str().into()),
        ("dims".into(), format!("n_tx={} n_users={}", s.n_tx, s.n_users)),
        ("master_seed".into(), s.master_seed.to_string()),
        ("noise_var".into(), "1".into()),
        (
            "csit".into(),
            s.alpha.map_or("perfect".to_string(), |a| format!("imperfect alpha={}", format_sig(a))),
        ),
    ]
}

struct Cell {
    snr_index: usize,
    trial: usize,
}

fn true_channel(config: &ExperimentConfig, seed: u64) -> Result<ChannelMatrix> {
    let s = &config.scenario;
    match (s.channel, &s.fixture) {
        (ChannelSource::Fixture, Some(rows)) => channel::deterministic_channel(
            rows.iter()
                .map(|r| r.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
                .collect(),
            1.0,
        ),
        _ => channel::sample_rayleigh(s.n_tx, s.n_users, 1.0, substream_seed(seed, 0)),
    }
}

/// Status string for a failed scheme evaluation.
fn status_of(err: &Error) -> String {
    match err {
        Error::ZfInfeasible(_) => "zf-infeasible".into(),
        Error::Unsupported(_) => "unsupported".into(),
        Error::TooLarge(_) => "too-large".into(),
        Error::Feasibility { .. } => "infeasible".into(),
        Error::OptimizerInit => "no-initial-design".into(),
        _ => "error".into(),
    }
}

struct Outcome {
    user_rates: Vec<f64>,
    power_used: f64,
    iterations: usize,
}

fn row_for(config: &ExperimentConfig, cell: &Cell, seed: u64, scheme: Scheme, outcome: Result<Outcome>) -> ResultRow {
    let s = &config.scenario;
    let base = |user_rates: Vec<f64>, power_used, iterations, status: String| {
        let sum_rate = user_rates.iter().sum();
        let min_rate = user_rates.iter().copied().fold(f64::INFINITY, f64::min);
        ResultRow {
            scenario: s.kind.as_str().into(),
            scheme: scheme.as_str().into(),
            snr_db: s.snr_grid_db[cell.snr_index],
            alpha: if s.kind == ScenarioKind::Downlink { s.alpha } else { None },
            trial: cell.trial,
            seed,
            user_rates,
            sum_rate,
            min_rate,
            power_used,
            iterations,
            status,
        }
    };
    match outcome {
        Ok(o) => base(o.user_rates, o.power_used, o.iterations, "ok".into()),
        Err(e) => {
            log::debug!("cell ({}, {}) {}: {e}", cell.snr_index, cell.trial, scheme.as_str());
            let mut r = base(vec![f64::NAN; s.n_users], f64::NAN, 0, status_of(&e));
            r.sum_rate = f64::NAN;
            r.min_rate = f64::NAN;
            r
        }
    }
}

/// Scores a design built on the estimate against the true channel.
fn score_on_truth(truth: &ChannelMatrix, design: &DownlinkDesign, iterations: usize) -> Result<Outcome> {
    let fitted = downlink::rescale_shares(truth, design)?;
    let rates = downlink::evaluate(truth, &fitted)?;
    Ok(Outcome {
        user_rates: rates.totals(),
        power_used: downlink::total_power(&fitted),
        iterations,
    })
}

struct DownlinkCell<'a> {
    config: &'a ExperimentConfig,
    truth: ChannelMatrix,
    estimate: ChannelMatrix,
    csit: CsitModel,
    power: f64,
    design_seed: u64,
    weights: Vec<f64>,
    sdma: Option<Result<(DownlinkDesign, usize)>>,
    noma: Option<Result<(DownlinkDesign, usize)>>,
}

impl DownlinkCell<'_> {
    fn settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            max_iters: self.config.optimizer.max_iters,
            tol: self.config.optimizer.tol,
            ..OptimizerSettings::default()
        }
    }

    fn sdma(&mut self) -> Result<(DownlinkDesign, usize)> {
        if self.sdma.is_none() {
            let result = if self.csit.perfect {
                precoder::optimize_sdma(&self.estimate, self.power, &self.weights, &self.settings())
                    .map(|r| (r.best_design, r.iterations))
            } else {
                precoder::sdma_design(&self.estimate, self.power, PrivateBeams::for_channel(&self.estimate)).map(|d| (d, 0))
            };
            self.sdma = Some(result);
        }
        clone_result(self.sdma.as_ref().expect("just computed"))
    }

    fn noma(&mut self) -> Result<(DownlinkDesign, usize)> {
        if self.noma.is_none() {
            let grid = self.config.optimizer.grid_size;
            let result = if self.csit.perfect {
                precoder::optimize_noma(&self.estimate, self.power, &self.weights, grid, &self.settings())
                    .map(|r| (r.best_design, r.iterations))
            } else {
                precoder::noma_design(&self.estimate, self.power, &self.weights, grid).map(|d| (d, 0))
            };
            self.noma = Some(result);
        }
        clone_result(self.noma.as_ref().expect("just computed"))
    }

    fn rsma(&mut self) -> Result<(DownlinkDesign, usize)> {
        let grid = self.config.optimizer.grid_size;
        let beams = PrivateBeams::for_channel(&self.estimate);
        if !self.csit.perfect {
            let d = precoder::robust_rsma_design(
                &self.estimate,
                &self.csit,
                self.power,
                &self.weights,
                grid,
                self.config.optimizer.robust_samples,
                self.design_seed,
            )?;
            return Ok((d, 0));
        }
        let mut starts = vec![precoder::split_search_with(&self.estimate, self.power, Objective::SumRate, grid, beams)?.0];
        if let Ok((d, _)) = self.sdma() {
            starts.push(d);
        }
        if self.estimate.n_users() == 2 {
            if let Ok((d, _)) = self.noma() {
                starts.push(d);
            }
        }
        let report = precoder::optimize_structured(&self.estimate, &self.weights, &starts, precoder::Structure::Rsma, &self.settings())?;
        Ok((report.best_design, report.iterations))
    }

    fn outcome(&mut self, scheme: Scheme) -> Result<Outcome> {
        match scheme {
            Scheme::Oma => Ok(Outcome {
                user_rates: baselines::oma_tdma_rates_with_estimate(&self.truth, &self.estimate, self.power),
                power_used: self.power,
                iterations: 0,
            }),
            Scheme::Sdma => {
                let (d, it) = self.sdma()?;
                score_on_truth(&self.truth, &d, it)
            }
            Scheme::Noma => {
                let (d, it) = self.noma()?;
                score_on_truth(&self.truth, &d, it)
            }
            Scheme::Rsma => {
                let (d, it) = self.rsma()?;
                score_on_truth(&self.truth, &d, it)
            }
        }
    }
}

fn clone_result(r: &Result<(DownlinkDesign, usize)>) -> Result<(DownlinkDesign, usize)> {
    match r {
        Ok(v) => Ok(v.clone()),
        Err(e) => Err(match e {
            Error::ZfInfeasible(m) => Error::ZfInfeasible(m.clone()),
            Error::Unsupported(m) => Error::Unsupported(m.clone()),
            Error::OptimizerInit => Error::OptimizerInit,
            Error::Feasibility { constraint, slack } => Error::Feasibility {
                constraint: constraint.clone(),
                slack: *slack,
            },
            other => Error::InvalidArgument(other.to_string()),
        }),
    }
}

fn downlink_cell(config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Vec<ResultRow>> {
    let power = snr_to_power(config.scenario.snr_grid_db[cell.snr_index]);
    let truth = true_channel(config, seed)?;
    let (estimate, csit) = match config.scenario.alpha {
        Some(alpha) => channel::apply_csit_error(&truth, alpha, power, substream_seed(seed, 1))?,
        None => (truth.clone(), CsitModel::perfect()),
    };
    let mut state = DownlinkCell {
        config,
        weights: vec![1.0; truth.n_users()],
        truth,
        estimate,
        csit,
        power,
        design_seed: substream_seed(seed, 2),
        sdma: None,
        noma: None,
    };
    Ok(config
        .scenario
        .schemes
        .iter()
        .map(|&scheme| {
            let outcome = state.outcome(scheme);
            row_for(config, cell, seed, scheme, outcome)
        })
        .collect())
}

fn uplink_outcome(config: &ExperimentConfig, truth: &ChannelMatrix, power: f64, scheme: Scheme) -> Result<Outcome> {
    let k = truth.n_users();
    let budgets = vec![power; k];
    let total = power * k as f64;
    match scheme {
        Scheme::Rsma => {
            let grid = config.optimizer.split_grid;
            let (_, rates) = uplink::optimize_uplink_sumrate_with(truth, &budgets, grid, None, config.optimizer.receive_filter.into())?;
            let searched = uplink::enumerate_orders(k)?.len() * grid.pow((k - 1) as u32);
            Ok(Outcome {
                user_rates: rates.user_rates,
                power_used: total,
                iterations: searched,
            })
        }
        Scheme::Noma => {
            // Conventional SIC: strongest user decoded first.
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| norm_sqr(truth.user(b)).total_cmp(&norm_sqr(truth.user(a))).then(a.cmp(&b)));
            Ok(Outcome {
                user_rates: baselines::uplink_sic_rates(truth, &budgets, &order)?,
                power_used: total,
                iterations: 0,
            })
        }
        Scheme::Sdma => Ok(Outcome {
            user_rates: baselines::uplink_tin_rates(truth, &budgets)?,
            power_used: total,
            iterations: 0,
        }),
        Scheme::Oma => Ok(Outcome {
            user_rates: baselines::oma_tdma_rates(truth, power),
            power_used: power,
            iterations: 0,
        }),
    }
}

fn uplink_cell(config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Vec<ResultRow>> {
    let power = snr_to_power(config.scenario.snr_grid_db[cell.snr_index]);
    let truth = true_channel(config, seed)?;
    Ok(config
        .scenario
        .schemes
        .iter()
        .map(|&scheme| row_for(config, cell, seed, scheme, uplink_outcome(config, &truth, power, scheme)))
        .collect())
}

fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    (0..config.scenario.snr_grid_db.len())
        .flat_map(|snr_index| (0..config.scenario.trials).map(move |trial| Cell { snr_index, trial }))
        .collect()
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

/// Runs a downlink or uplink experiment on the global rayon pool.
pub fn run(config: &ExperimentConfig) -> Result<ResultTable> {
    run_with_threads(config, None)
}

/// Runs on a dedicated pool of `threads` workers (`None`: global pool).
pub fn run_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<ResultTable> {
    config.validate()?;
    let cell_fn = match config.scenario.kind {
        ScenarioKind::Downlink => downlink_cell,
        ScenarioKind::Uplink => uplink_cell,
        ScenarioKind::Region => {
            return Err(Error::config("scenario.kind", "region experiments produce point clouds; use run_region"));
        }
    };
    log::info!(
        "running {} experiment: {} cells x {} schemes",
        config.scenario.kind.as_str(),
        config.scenario.snr_grid_db.len() * config.scenario.trials,
        config.scenario.schemes.len()
    );
    let cells = cells(config);
    let master = config.scenario.master_seed;
    let per_cell: Vec<Result<Vec<ResultRow>>> = in_pool(threads, || {
        cells
            .par_iter()
            .map(|c| cell_fn(config, c, cell_seed(master, c.snr_index, c.trial)))
            .collect()
    })?;
    let mut rows = Vec::with_capacity(config.expected_rows());
    for r in per_cell {
        rows.extend(r?);
    }
    debug_assert_eq!(rows.len(), config.expected_rows());
    Ok(ResultTable {
        n_users: config.scenario.n_users,
        metadata: metadata(config),
        rows,
    })
}

/// Traced uplink region of one cell, with its pentagon.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCell {
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub points: Vec<RegionPoint>,
    pub pentagon: baselines::PentagonRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTable {
    pub metadata: Vec<(String, String)>,
    pub cells: Vec<RegionCell>,
}

/// Two-user uplink region tracing for every cell (both users at budget `P`).
pub fn run_region(config: &ExperimentConfig, threads: Option<usize>) -> Result<RegionTable> {
    config.validate()?;
    if config.scenario.n_users != 2 {
        return Err(Error::config("scenario.n_users", "region tracing needs exactly 2 users"));
    }
    let grid = config.optimizer.split_grid;
    let master = config.scenario.master_seed;
    let cells = cells(config);
    let results: Vec<Result<RegionCell>> = in_pool(threads, || {
        cells
            .par_iter()
            .map(|c| {
                let seed = cell_seed(master, c.snr_index, c.trial);
                let snr_db = config.scenario.snr_grid_db[c.snr_index];
                let p = snr_to_power(snr_db);
                let truth = true_channel(config, seed)?;
                let (points, pentagon) = uplink::region_with_pentagon(&truth, [p, p], grid, grid)?;
                Ok(RegionCell {
                    snr_db,
                    trial: c.trial,
                    seed,
                    points,
                    pentagon,
                })
            })
            .collect()
    })?;
    let mut metadata = metadata(config);
    metadata[3].1 = "region".into();
    Ok(RegionTable {
        metadata,
        cells: results.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

fn meta_lines(metadata: &[(String, String)]) -> String {
    metadata.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

/// CSV of the traced RSMA points.
pub fn region_points_csv(table: &RegionTable) -> String {
    let mut out = meta_lines(&table.metadata);
    out.push_str("snr_db,trial,seed,split_user,split_fraction,order,rate_user_1,rate_user_2\n");
    for c in &table.cells {
        for p in &c.points {
            // Orders are written in the split user's labelling.
            let order: Vec<String> = p.order.iter().map(|l| l.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                format_sig(c.snr_db),
                c.trial,
                c.seed,
                p.split_user + 1,
                format_sig(p.split_fraction),
                order.join(">"),
                format_sig(p.rates.0),
                format_sig(p.rates.1)
            ));
        }
    }
    out
}

/// CSV of the pentagon vertices.
pub fn region_pentagon_csv(table: &RegionTable) -> String {
    let mut out = meta_lines(&table.metadata);
    out.push_str("snr_db,trial,seed,vertex,rate_user_1,rate_user_2\n");
    for c in &table.cells {
        for (i, (a, b)) in c.pentagon.vertices().iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                format_sig(c.snr_db),
                c.trial,
                c.seed,
                i,
                format_sig(*a),
                format_sig(*b)
            ));
        }
    }
    out
}
