//! Uplink rate-splitting over the Gaussian multiple access channel.
//!
//! Users `0..K-1` split their message into two independently encoded
//! streams; the last user sends a single stream. The base station decodes the
//! `2K - 1` streams by SIC in the order `pi`: each stream is detected with a
//! receive filter against the streams still undecoded (later in `pi`) plus
//! noise, then subtracted.
//!
//! With MMSE filters the stream SINRs chain into the log-det sum capacity
//! for every order and every power split, which is what lets a single
//! operating point reach any point of the MAC dominant face.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::baselines::{mac_pentagon, PentagonRegion};
use crate::capacity;
use crate::channel::ChannelMatrix;
use crate::linalg::{gain, norm_sqr, CMatrix, CVector};
use crate::{Error, Result};

/// Largest K for exhaustive order enumeration ((2K-1)! orders).
pub const MAX_ENUMERATED_USERS: usize = 4;
pub const DEFAULT_SPLIT_GRID: usize = 101;

/// One uplink stream. Users are zero-based; part is 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamLabel {
    Part { user: usize, part: u8 },
    Last,
}

impl StreamLabel {
    /// The user owning this stream in a K-user system.
    pub fn user(&self, n_users: usize) -> usize {
        match *self {
            StreamLabel::Part { user, .. } => user,
            StreamLabel::Last => n_users - 1,
        }
    }
}

impl std::fmt::Display for StreamLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StreamLabel::Part { user, part } => write!(f, "s{}.{}", user + 1, part),
            StreamLabel::Last => write!(f, "sK"),
        }
    }
}

/// The `2K - 1` labels in canonical order: `(1,1), (1,2), ..., (K-1,2), K`.
pub fn stream_labels(n_users: usize) -> Vec<StreamLabel> {
    let mut labels: Vec<StreamLabel> = (0..n_users.saturating_sub(1))
        .flat_map(|user| [1, 2].map(|part| StreamLabel::Part { user, part }))
        .collect();
    labels.push(StreamLabel::Last);
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkDesign {
    split_powers: Vec<(f64, f64)>,
    last_power: f64,
    order: Vec<StreamLabel>,
    budgets: Vec<f64>,
}

impl UplinkDesign {
    pub fn new(split_powers: Vec<(f64, f64)>, last_power: f64, order: Vec<StreamLabel>, budgets: Vec<f64>) -> Result<Self> {
        let k = split_powers.len() + 1;
        if budgets.len() != k {
            return Err(Error::invalid(format!("{} budgets for {} users", budgets.len(), k)));
        }
        let tol = 1e-12;
        for (u, &(a, b)) in split_powers.iter().enumerate() {
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::invalid(format!("user {u} stream powers must be >= 0")));
            }
            if a + b > budgets[u] * (1.0 + tol) + tol {
                return Err(Error::Feasibility {
                    constraint: format!("user {} power <= budget", u + 1),
                    slack: a + b - budgets[u],
                });
            }
        }
        if !(last_power >= 0.0) {
            return Err(Error::invalid("last user's power must be >= 0"));
        }
        if last_power > budgets[k - 1] * (1.0 + tol) + tol {
            return Err(Error::Feasibility {
                constraint: format!("user {k} power <= budget"),
                slack: last_power - budgets[k - 1],
            });
        }
        let mut sorted = order.clone();
        sorted.sort();
        if sorted != stream_labels(k) {
            return Err(Error::invalid(format!(
                "decoding order must be a permutation of the {} stream labels",
                2 * k - 1
            )));
        }
        Ok(Self {
            split_powers,
            last_power,
            order,
            budgets,
        })
    }

    /// Every user at full budget; split users put `fractions[k]` of it on stream 1.
    pub fn full_power(budgets: &[f64], fractions: &[f64], order: Vec<StreamLabel>) -> Result<Self> {
        if budgets.is_empty() || fractions.len() + 1 != budgets.len() {
            return Err(Error::invalid("need K budgets and K - 1 split fractions"));
        }
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("split fractions must lie in [0, 1]"));
        }
        let split = fractions
            .iter()
            .zip(budgets)
            .map(|(&f, &p)| (f * p, (1.0 - f) * p))
            .collect();
        Self::new(split, budgets[budgets.len() - 1], order, budgets.to_vec())
    }

    pub fn n_users(&self) -> usize {
        self.split_powers.len() + 1
    }

    pub fn order(&self) -> &[StreamLabel] {
        &self.order
    }

    pub fn split_powers(&self) -> &[(f64, f64)] {
        &self.split_powers
    }

    pub fn last_power(&self) -> f64 {
        self.last_power
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn power(&self, label: StreamLabel) -> f64 {
        match label {
            StreamLabel::Part { user, part: 1 } => self.split_powers[user].0,
            StreamLabel::Part { user, .. } => self.split_powers[user].1,
            StreamLabel::Last => self.last_power,
        }
    }

    fn position(&self, label: StreamLabel) -> Result<usize> {
        self.order
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::invalid(format!("stream {label} is not part of this design")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkRates {
    /// `(label, rate)` in decoding order.
    pub stream_rates: Vec<(StreamLabel, f64)>,
    pub user_rates: Vec<f64>,
}

impl UplinkRates {
    pub fn sum_rate(&self) -> f64 {
        self.stream_rates.iter().map(|(_, r)| r).sum()
    }

    pub fn stream(&self, label: StreamLabel) -> Option<f64> {
        self.stream_rates.iter().find(|(l, _)| *l == label).map(|(_, r)| *r)
    }
}

/// Receive filter family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReceiveFilter {
    /// MMSE against the not-yet-decoded streams.
    #[default]
    Mmse,
    /// `d = h`; comparison mode only, does not reach the sum capacity.
    Matched,
}

fn check(channel: &ChannelMatrix, design: &UplinkDesign) -> Result<()> {
    if channel.n_users() != design.n_users() {
        return Err(Error::invalid(format!(
            "design has {} users, channel has {}",
            design.n_users(),
            channel.n_users()
        )));
    }
    Ok(())
}

fn channel_of(channel: &ChannelMatrix, label: StreamLabel) -> &CVector {
    channel.user(label.user(channel.n_users()))
}

/// Filter for `label` with the chosen family. MMSE:
/// `d = (sum_{later} P h h^H + sigma^2 I)^-1 h`, unnormalized.
pub fn receive_filter_with(channel: &ChannelMatrix, design: &UplinkDesign, label: StreamLabel, filter: ReceiveFilter) -> Result<CVector> {
    check(channel, design)?;
    let pos = design.position(label)?;
    let h = channel_of(channel, label);
    match filter {
        ReceiveFilter::Matched => Ok(h.clone()),
        ReceiveFilter::Mmse => {
            let m = channel.n_tx();
            let mut cov = CMatrix::identity(m, m) * Complex64::new(channel.noise_var(), 0.0);
            for &later in &design.order[pos + 1..] {
                let g = channel_of(channel, later);
                cov += (g * g.adjoint()) * Complex64::new(design.power(later), 0.0);
            }
            let chol = cov
                .cholesky()
                .ok_or_else(|| Error::invalid("interference-plus-noise covariance is not positive definite"))?;
            Ok(chol.solve(h))
        }
    }
}

pub fn receive_filter(channel: &ChannelMatrix, design: &UplinkDesign, label: StreamLabel) -> Result<CVector> {
    receive_filter_with(channel, design, label, ReceiveFilter::Mmse)
}

/// SINR of `label` under filter `d`: signal `P |d^H h|^2` against
/// `sum_{later} P' |d^H h'|^2 + sigma^2 ||d||^2`.
fn sinr_with_filter(channel: &ChannelMatrix, design: &UplinkDesign, pos: usize, d: &CVector) -> f64 {
    let label = design.order[pos];
    let signal = design.power(label) * gain(d, channel_of(channel, label));
    let interference: f64 = design.order[pos + 1..]
        .iter()
        .map(|&l| design.power(l) * gain(d, channel_of(channel, l)))
        .sum();
    let noise = channel.noise_var() * norm_sqr(d);
    if signal == 0.0 {
        0.0
    } else {
        signal / (interference + noise)
    }
}

pub fn stream_rate_with(channel: &ChannelMatrix, design: &UplinkDesign, label: StreamLabel, filter: ReceiveFilter) -> Result<f64> {
    let d = receive_filter_with(channel, design, label, filter)?;
    let pos = design.position(label)?;
    Ok(capacity(sinr_with_filter(channel, design, pos, &d)))
}

/// Rate of one stream under MMSE-SIC.
pub fn stream_rate(channel: &ChannelMatrix, design: &UplinkDesign, label: StreamLabel) -> Result<f64> {
    stream_rate_with(channel, design, label, ReceiveFilter::Mmse)
}

fn aggregate(n_users: usize, stream_rates: Vec<(StreamLabel, f64)>) -> UplinkRates {
    let mut user_rates = vec![0.0; n_users];
    for &(l, r) in &stream_rates {
        user_rates[l.user(n_users)] += r;
    }
    UplinkRates { stream_rates, user_rates }
}

/// All stream rates under MMSE-SIC. Walks the order backwards keeping the
/// inverse interference-plus-noise covariance current with rank-one
/// (Sherman-Morrison) updates, so each stream costs O(M^2).
pub fn evaluate_uplink(channel: &ChannelMatrix, design: &UplinkDesign) -> Result<UplinkRates> {
    check(channel, design)?;
    let m = channel.n_tx();
    let mut inv: CMatrix = DMatrix::identity(m, m) * Complex64::new(1.0 / channel.noise_var(), 0.0);
    let mut rates = vec![(StreamLabel::Last, 0.0); design.order.len()];
    for (pos, &label) in design.order.iter().enumerate().rev() {
        let h = channel_of(channel, label);
        let p = design.power(label);
        let ih: CVector = &inv * h;
        let quad = h.dotc(&ih).re.max(0.0);
        rates[pos] = (label, capacity(p * quad));
        if p > 0.0 {
            // (C + p h h^H)^-1 = C^-1 - p C^-1 h h^H C^-1 / (1 + p h^H C^-1 h)
            let denom = Complex64::new(1.0 + p * quad, 0.0);
            inv -= (&ih * ih.adjoint()) * (Complex64::new(p, 0.0) / denom);
        }
    }
    Ok(aggregate(channel.n_users(), rates))
}

/// Stream rates with either filter family, computed stream by stream.
pub fn evaluate_uplink_with(channel: &ChannelMatrix, design: &UplinkDesign, filter: ReceiveFilter) -> Result<UplinkRates> {
    check(channel, design)?;
    let rates = design
        .order
        .iter()
        .map(|&l| Ok((l, stream_rate_with(channel, design, l, filter)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(channel.n_users(), rates))
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Every decoding order of the `2K - 1` streams, lexicographic over the
/// canonical label order.
pub fn enumerate_orders(n_users: usize) -> Result<Vec<Vec<StreamLabel>>> {
    if n_users == 0 {
        return Err(Error::invalid("need at least one user"));
    }
    if n_users > MAX_ENUMERATED_USERS {
        return Err(Error::TooLarge(n_users));
    }
    let labels = stream_labels(n_users);
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    let mut orders = Vec::new();
    loop {
        orders.push(idx.iter().map(|&i| labels[i]).collect());
        if !next_permutation(&mut idx) {
            break;
        }
    }
    Ok(orders)
}

fn split_grid_points(split_grid: usize) -> Result<Vec<f64>> {
    if split_grid < 2 {
        return Err(Error::invalid(format!("split grid must have >= 2 points, got {split_grid}")));
    }
    let last = (split_grid - 1) as f64;
    Ok((0..split_grid).map(|i| i as f64 / last).collect())
}

/// Cartesian product of per-user split fractions, first user slowest.
fn split_combinations(points: &[f64], n_split: usize) -> Vec<Vec<f64>> {
    let mut combos = vec![Vec::new()];
    for _ in 0..n_split {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                points.iter().map(move |&p| {
                    let mut next = c.clone();
                    next.push(p);
                    next
                })
            })
            .collect();
    }
    combos
}

/// Exhaustive search over decoding orders and split fractions at full
/// budgets. Ties (within 1e-12) keep the first candidate in enumeration
/// order: orders outermost, then split fractions.
pub fn optimize_uplink_sumrate(
    channel: &ChannelMatrix,
    power_budgets: &[f64],
    split_grid: usize,
    restrict_orders: Option<&[Vec<StreamLabel>]>,
) -> Result<(UplinkDesign, UplinkRates)> {
    optimize_uplink_sumrate_with(channel, power_budgets, split_grid, restrict_orders, ReceiveFilter::Mmse)
}

/// [`optimize_uplink_sumrate`] with a chosen receive filter.
pub fn optimize_uplink_sumrate_with(
    channel: &ChannelMatrix,
    power_budgets: &[f64],
    split_grid: usize,
    restrict_orders: Option<&[Vec<StreamLabel>]>,
    filter: ReceiveFilter,
) -> Result<(UplinkDesign, UplinkRates)> {
    let k = channel.n_users();
    if power_budgets.len() != k {
        return Err(Error::invalid(format!("{} budgets for {} users", power_budgets.len(), k)));
    }
    let orders = match restrict_orders {
        Some(o) if !o.is_empty() => o.to_vec(),
        Some(_) => return Err(Error::invalid("restricted order list is empty")),
        None => enumerate_orders(k)?,
    };
    let combos = split_combinations(&split_grid_points(split_grid)?, k - 1);

    let per_order: Vec<Result<Option<(f64, UplinkDesign, UplinkRates)>>> = orders
        .par_iter()
        .map(|order| {
            let mut best: Option<(f64, UplinkDesign, UplinkRates)> = None;
            for fractions in &combos {
                let design = UplinkDesign::full_power(power_budgets, fractions, order.clone())?;
                let rates = match filter {
                    ReceiveFilter::Mmse => evaluate_uplink(channel, &design)?,
                    other => evaluate_uplink_with(channel, &design, other)?,
                };
                let sum = rates.sum_rate();
                if best.as_ref().is_none_or(|(b, _, _)| sum > b + 1e-12) {
                    best = Some((sum, design, rates));
                }
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<(f64, UplinkDesign, UplinkRates)> = None;
    for candidate in per_order {
        if let Some(c) = candidate? {
            if best.as_ref().is_none_or(|(b, _, _)| c.0 > b + 1e-12) {
                best = Some(c);
            }
        }
    }
    let (_, design, rates) = best.expect("at least one order and one split");
    Ok((design, rates))
}

/// One traced operating point and the single design producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPoint {
    pub rates: (f64, f64),
    /// Which user carries the two-part message (0 or 1).
    pub split_user: usize,
    /// Fraction of the split user's budget on its first stream.
    pub split_fraction: f64,
    /// Decoding order in terms of the split user's parts and the other user.
    pub order: Vec<StreamLabel>,
}

/// Keeps the points not dominated by any other (coordinate-wise, with a
/// 1e-12 slack), sorted by decreasing first rate.
pub fn pareto_clean(mut points: Vec<RegionPoint>) -> Vec<RegionPoint> {
    points.sort_by(|a, b| {
        b.rates
            .0
            .total_cmp(&a.rates.0)
            .then(b.rates.1.total_cmp(&a.rates.1))
    });
    let mut kept: Vec<RegionPoint> = Vec::new();
    let mut best_r2 = f64::NEG_INFINITY;
    for p in points {
        if p.rates.1 > best_r2 + 1e-12 {
            best_r2 = p.rates.1;
            kept.push(p);
        }
    }
    kept
}

fn swap_users(channel: &ChannelMatrix) -> Result<ChannelMatrix> {
    ChannelMatrix::new(vec![channel.user(1).clone(), channel.user(0).clone()], channel.noise_var())
}

/// Traces the two-user RSMA region at full power without time sharing.
/// Pass one splits user 1 over `split_grid` fractions; pass two mirrors it,
/// splitting user 2 over `mirror_grid` fractions. Each pass runs all six
/// orders. The union is Pareto-cleaned.
pub fn trace_region_2user(channel: &ChannelMatrix, budgets: [f64; 2], split_grid: usize, mirror_grid: usize) -> Result<Vec<RegionPoint>> {
    if channel.n_users() != 2 {
        return Err(Error::invalid(format!(
            "region tracing needs exactly two users (got K = {})",
            channel.n_users()
        )));
    }
    let orders = enumerate_orders(2)?;
    let swapped = swap_users(channel)?;
    let mut points = Vec::new();
    for (split_user, grid, ch, b) in [
        (0usize, split_grid, channel, budgets),
        (1, mirror_grid, &swapped, [budgets[1], budgets[0]]),
    ] {
        for f in split_grid_points(grid)? {
            for order in &orders {
                let design = UplinkDesign::full_power(&b, &[f], order.clone())?;
                let r = evaluate_uplink(ch, &design)?.user_rates;
                let rates = if split_user == 0 { (r[0], r[1]) } else { (r[1], r[0]) };
                points.push(RegionPoint {
                    rates,
                    split_user,
                    split_fraction: f,
                    order: order.clone(),
                });
            }
        }
    }
    Ok(pareto_clean(points))
}

/// Re-evaluates a traced point from its design alone.
pub fn region_point_rates(channel: &ChannelMatrix, budgets: [f64; 2], point: &RegionPoint) -> Result<(f64, f64)> {
    if point.split_user == 0 {
        let d = UplinkDesign::full_power(&budgets, &[point.split_fraction], point.order.clone())?;
        let r = evaluate_uplink(channel, &d)?.user_rates;
        Ok((r[0], r[1]))
    } else {
        let d = UplinkDesign::full_power(&[budgets[1], budgets[0]], &[point.split_fraction], point.order.clone())?;
        let r = evaluate_uplink(&swap_users(channel)?, &d)?.user_rates;
        Ok((r[1], r[0]))
    }
}

/// Region tracer plus the capacity pentagon oracle.
pub fn region_with_pentagon(
    channel: &ChannelMatrix,
    budgets: [f64; 2],
    split_grid: usize,
    mirror_grid: usize,
) -> Result<(Vec<RegionPoint>, PentagonRegion)> {
    Ok((
        trace_region_2user(channel, budgets, split_grid, mirror_grid)?,
        mac_pentagon(channel, budgets)?,
    ))
}
