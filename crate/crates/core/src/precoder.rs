//! Downlink precoder construction.
//!
//! Closed-form builders (zero-forcing private precoders, a multicast common
//! precoder along the dominant singular vector of the stacked channel), a
//! grid search over the common/private power split, and a monotone
//! weighted-sum-rate optimizer. Every builder consumes a channel *estimate*;
//! the true channel is only ever used to score a finished design.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::capacity;
use crate::channel::{ChannelMatrix, CsitModel};
use crate::downlink::{self, DownlinkDesign, DownlinkRates, FEASIBILITY_TOL};
use crate::linalg::{condition_number, dominant_left_singular_vector, gain, norm_sqr, with_power, CMatrix, CVector};
use crate::{Error, Result};

/// Channels whose stacked matrix is worse conditioned than this are treated
/// as rank deficient by the ZF builder.
pub const ZF_MAX_CONDITION: f64 = 1e8;

pub const DEFAULT_GRID_SIZE: usize = 33;
pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Fraction `t` of the budget on the common stream, and the split of the
/// remaining `(1 - t) P` among the private streams.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSplit {
    common_fraction: f64,
    private_fractions: Vec<f64>,
}

impl PowerSplit {
    pub fn new(common_fraction: f64, private_fractions: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&common_fraction) {
            return Err(Error::invalid(format!("common fraction must lie in [0, 1], got {common_fraction}")));
        }
        if private_fractions.is_empty() || private_fractions.iter().any(|f| !(*f >= 0.0)) {
            return Err(Error::invalid("private fractions must be nonempty and nonnegative"));
        }
        let total: f64 = private_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("private fractions must sum to 1, got {total}")));
        }
        Ok(Self {
            common_fraction,
            private_fractions,
        })
    }

    /// Common fraction `t`, remaining power split equally over `n_users`.
    pub fn equal(common_fraction: f64, n_users: usize) -> Result<Self> {
        Self::new(common_fraction, vec![1.0 / n_users as f64; n_users])
    }

    pub fn common_fraction(&self) -> f64 {
        self.common_fraction
    }

    pub fn private_fractions(&self) -> &[f64] {
        &self.private_fractions
    }

    fn private_power(&self, power_budget: f64, k: usize) -> f64 {
        (1.0 - self.common_fraction) * power_budget * self.private_fractions[k]
    }
}

fn check_split(channel: &ChannelMatrix, split: &PowerSplit) -> Result<()> {
    if split.private_fractions.len() != channel.n_users() {
        return Err(Error::invalid(format!(
            "power split has {} private fractions for K = {}",
            split.private_fractions.len(),
            channel.n_users()
        )));
    }
    Ok(())
}

/// Unit-norm zero-forcing directions: normalized columns of the
/// pseudo-inverse of the stacked (Hermitian) channel.
pub fn zf_directions(channel_estimate: &ChannelMatrix) -> Result<Vec<CVector>> {
    let (m, k) = (channel_estimate.n_tx(), channel_estimate.n_users());
    if k > m {
        return Err(Error::ZfInfeasible(format!("K = {k} users exceed M = {m} antennas")));
    }
    let h = channel_estimate.stacked();
    let cond = condition_number(&h);
    if !(cond < ZF_MAX_CONDITION) {
        return Err(Error::ZfInfeasible(format!("channel condition number {cond:.3e} exceeds {ZF_MAX_CONDITION:.0e}")));
    }
    // W = H (H^H H)^-1 = Q R^-H for H = QR; h_j^H w_k = delta_jk.
    let qr = h.qr();
    let r_adj: CMatrix = qr.r().adjoint();
    let r_inv_adj = r_adj
        .solve_lower_triangular(&CMatrix::identity(k, k))
        .ok_or_else(|| Error::ZfInfeasible("rank-deficient channel".into()))?;
    let w = qr.q() * r_inv_adj;
    Ok((0..k)
        .map(|j| {
            let col: CVector = w.column(j).into_owned();
            let n = norm_sqr(&col).sqrt();
            col / Complex64::new(n, 0.0)
        })
        .collect())
}

/// Zero-forcing private precoders with powers `(1 - t) P f_k`.
pub fn zf_private(channel_estimate: &ChannelMatrix, split: &PowerSplit, power_budget: f64) -> Result<Vec<CVector>> {
    check_split(channel_estimate, split)?;
    let dirs = zf_directions(channel_estimate)?;
    Ok(dirs
        .iter()
        .enumerate()
        .map(|(k, d)| with_power(d, split.private_power(power_budget, k)))
        .collect())
}

/// Matched-filter (MRT) private precoders; always available, used when ZF is not.
pub fn mrt_private(channel_estimate: &ChannelMatrix, split: &PowerSplit, power_budget: f64) -> Result<Vec<CVector>> {
    check_split(channel_estimate, split)?;
    Ok(channel_estimate
        .vectors()
        .iter()
        .enumerate()
        .map(|(k, h)| with_power(h, split.private_power(power_budget, k)))
        .collect())
}

/// Common precoder of power `t P` along the dominant left singular vector
/// of the M x K stacked estimate.
pub fn multicast_common(channel_estimate: &ChannelMatrix, split: &PowerSplit, power_budget: f64) -> CVector {
    let power = split.common_fraction * power_budget;
    if power <= 0.0 {
        return CVector::zeros(channel_estimate.n_tx());
    }
    with_power(&dominant_left_singular_vector(&channel_estimate.stacked()), power)
}

/// Which family of private precoders a closed-form design uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivateBeams {
    ZeroForcing,
    MatchedFilter,
}

impl PrivateBeams {
    /// ZF when the estimate supports it, matched filter otherwise.
    pub fn for_channel(channel_estimate: &ChannelMatrix) -> Self {
        if zf_directions(channel_estimate).is_ok() {
            PrivateBeams::ZeroForcing
        } else {
            PrivateBeams::MatchedFilter
        }
    }
}

/// ZF (or MRT) private streams plus a multicast common stream, all shares zero.
pub fn split_design(
    channel_estimate: &ChannelMatrix,
    split: &PowerSplit,
    power_budget: f64,
    beams: PrivateBeams,
) -> Result<DownlinkDesign> {
    let private = match beams {
        PrivateBeams::ZeroForcing => zf_private(channel_estimate, split, power_budget)?,
        PrivateBeams::MatchedFilter => mrt_private(channel_estimate, split, power_budget)?,
    };
    let common = multicast_common(channel_estimate, split, power_budget);
    DownlinkDesign::new(common, private, vec![0.0; channel_estimate.n_users()], power_budget)
}

/// Design objective for grid searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    SumRate,
    MaxMin,
}

/// Water-fills `common_rate` over users, lowest private rate first, so that
/// the smallest totals are raised to a common level.
pub fn water_fill_shares(private_rates: &[f64], common_rate: f64) -> Vec<f64> {
    let k = private_rates.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| private_rates[a].total_cmp(&private_rates[b]).then(a.cmp(&b)));
    // Find the number of users below the water level.
    let mut level = 0.0;
    let mut prefix = 0.0;
    for (n, &u) in order.iter().enumerate() {
        prefix += private_rates[u];
        let candidate = (common_rate + prefix) / (n + 1) as f64;
        let next = order.get(n + 1).map(|&v| private_rates[v]);
        if next.is_none_or(|r| candidate <= r) {
            level = candidate;
            break;
        }
    }
    let mut shares: Vec<f64> = private_rates.iter().map(|&r| (level - r).max(0.0)).collect();
    // Keep the total exactly at the budget despite rounding.
    let total: f64 = shares.iter().sum();
    if total > common_rate && total > 0.0 {
        let scale = common_rate / total;
        shares.iter_mut().for_each(|c| *c *= scale);
    }
    shares
}

/// Shares for an objective: the whole common rate to user 0 for sum rate,
/// water-filling for max-min.
pub fn assign_shares(private_rates: &[f64], common_rate: f64, objective: Objective) -> Vec<f64> {
    match objective {
        Objective::SumRate => {
            let mut shares = vec![0.0; private_rates.len()];
            shares[0] = common_rate;
            shares
        }
        Objective::MaxMin => water_fill_shares(private_rates, common_rate),
    }
}

fn objective_value(rates: &DownlinkRates, objective: Objective) -> f64 {
    match objective {
        Objective::SumRate => rates.sum_rate(),
        Objective::MaxMin => rates.min_rate(),
    }
}

/// Shares the design's common rate on `channel` according to `objective` and evaluates.
pub fn score(channel: &ChannelMatrix, design: &DownlinkDesign, objective: Objective) -> Result<(DownlinkDesign, DownlinkRates)> {
    let bare = downlink::evaluate(channel, &design.with_shares(vec![0.0; design.n_users()])?)?;
    let private: Vec<f64> = bare.users.iter().map(|u| u.rate_private).collect();
    let shaped = design.with_shares(assign_shares(&private, bare.rate_common, objective))?;
    let rates = downlink::evaluate(channel, &shaped)?;
    Ok((shaped, rates))
}

fn grid(grid_size: usize) -> Result<impl Iterator<Item = f64>> {
    if grid_size < 2 {
        return Err(Error::invalid(format!("grid size must be >= 2, got {grid_size}")));
    }
    let last = (grid_size - 1) as f64;
    Ok((0..grid_size).map(move |i| i as f64 / last))
}

/// Uniform grid over the common fraction `t` of the ZF + multicast design
/// with equal private fractions. Ties keep the smallest `t`.
pub fn split_search(
    channel: &ChannelMatrix,
    power_budget: f64,
    objective: Objective,
    grid_size: usize,
) -> Result<(DownlinkDesign, DownlinkRates)> {
    split_search_with(channel, power_budget, objective, grid_size, PrivateBeams::ZeroForcing)
}

pub fn split_search_with(
    channel: &ChannelMatrix,
    power_budget: f64,
    objective: Objective,
    grid_size: usize,
    beams: PrivateBeams,
) -> Result<(DownlinkDesign, DownlinkRates)> {
    let mut best: Option<(f64, DownlinkDesign, DownlinkRates)> = None;
    for t in grid(grid_size)? {
        let design = split_design(channel, &PowerSplit::equal(t, channel.n_users())?, power_budget, beams)?;
        let (design, rates) = score(channel, &design, objective)?;
        let value = objective_value(&rates, objective);
        if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
            best = Some((value, design, rates));
        }
    }
    let (_, design, rates) = best.expect("grid is nonempty");
    Ok((design, rates))
}

/// Draws from the channel posterior given the estimate: with unit-variance
/// Rayleigh truth and estimate `h + e`, `h | estimate` is complex Gaussian
/// with mean `estimate / (1 + s)` and per-entry variance `s / (1 + s)`.
pub fn posterior_samples(estimate: &ChannelMatrix, csit: &CsitModel, samples: usize, seed: u64) -> Result<Vec<ChannelMatrix>> {
    if csit.perfect {
        return Ok(vec![estimate.clone()]);
    }
    let s = csit.error_var;
    let shrink = 1.0 / (1.0 + s);
    let std = (s / (1.0 + s) / 2.0).sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..samples.max(1))
        .map(|_| {
            let vectors = estimate
                .vectors()
                .iter()
                .map(|h| {
                    DVector::from_fn(h.len(), |i, _| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        h[i] * shrink + Complex64::new(std * re, std * im)
                    })
                })
                .collect();
            ChannelMatrix::new(vectors, estimate.noise_var())
        })
        .collect()
}

/// Power-split grid search scored by the average objective over posterior
/// channel samples (sample-average approximation). With perfect CSIT this is
/// [`split_search_with`]. Returned shares are fractions of the common rate
/// fitted to the estimate; callers re-fit them with
/// [`downlink::rescale_shares`] on the channel they score against.
#[allow(clippy::too_many_arguments)]
pub fn robust_split_search(
    estimate: &ChannelMatrix,
    csit: &CsitModel,
    power_budget: f64,
    objective: Objective,
    grid_size: usize,
    beams: PrivateBeams,
    samples: usize,
    seed: u64,
) -> Result<DownlinkDesign> {
    if csit.perfect {
        return split_search_with(estimate, power_budget, objective, grid_size, beams).map(|(d, _)| d);
    }
    let candidates = grid(grid_size)?
        .map(|t| split_design(estimate, &PowerSplit::equal(t, estimate.n_users())?, power_budget, beams))
        .collect::<Result<Vec<_>>>()?;
    robust_select(estimate, csit, &candidates, objective, samples, seed)
}

/// The candidate with the best average objective over posterior channel
/// samples (first wins ties), with shares fitted to the estimate.
pub fn robust_select(
    estimate: &ChannelMatrix,
    csit: &CsitModel,
    candidates: &[DownlinkDesign],
    objective: Objective,
    samples: usize,
    seed: u64,
) -> Result<DownlinkDesign> {
    let draws = posterior_samples(estimate, csit, samples, seed)?;
    let mut best: Option<(f64, &DownlinkDesign)> = None;
    for design in candidates {
        let mut total = 0.0;
        for h in &draws {
            let (_, rates) = score(h, design, objective)?;
            total += objective_value(&rates, objective);
        }
        let value = total / draws.len() as f64;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, design));
        }
    }
    let (_, design) = best.ok_or_else(|| Error::EmptyInput("no candidate designs".into()))?;
    Ok(score(estimate, design, objective)?.0)
}

/// RSMA design for imperfect CSIT: [`robust_select`] over the power-split
/// grids with ZF (when feasible) and MRT private beams, the single-user
/// corners and, for two users, the NOMA corner.
#[allow(clippy::too_many_arguments)]
pub fn robust_rsma_design(
    estimate: &ChannelMatrix,
    csit: &CsitModel,
    power_budget: f64,
    weights: &[f64],
    grid_size: usize,
    samples: usize,
    seed: u64,
) -> Result<DownlinkDesign> {
    let k = estimate.n_users();
    let mut candidates = Vec::new();
    for beams in [PrivateBeams::ZeroForcing, PrivateBeams::MatchedFilter] {
        for t in grid(grid_size)? {
            match split_design(estimate, &PowerSplit::equal(t, k)?, power_budget, beams) {
                Ok(d) => candidates.push(d),
                Err(Error::ZfInfeasible(_)) => break,
                Err(e) => return Err(e),
            }
        }
    }
    for user in 0..k {
        candidates.push(single_user_design(estimate, power_budget, user)?);
    }
    if k == 2 {
        candidates.push(noma_design(estimate, power_budget, weights, grid_size)?);
    }
    robust_select(estimate, csit, &candidates, Objective::SumRate, samples, seed)
}

/// SDMA corner: ZF (or MRT) with equal private powers, no common stream.
pub fn sdma_design(channel_estimate: &ChannelMatrix, power_budget: f64, beams: PrivateBeams) -> Result<DownlinkDesign> {
    split_design(channel_estimate, &PowerSplit::equal(0.0, channel_estimate.n_users())?, power_budget, beams)
}

/// Full power to user `k` along its matched filter; everyone else silent.
pub fn single_user_design(channel_estimate: &ChannelMatrix, power_budget: f64, k: usize) -> Result<DownlinkDesign> {
    let mut fractions = vec![0.0; channel_estimate.n_users()];
    fractions[k] = 1.0;
    split_design(channel_estimate, &PowerSplit::new(0.0, fractions)?, power_budget, PrivateBeams::MatchedFilter)
}

/// The weaker user by estimated channel norm (lowest index on ties).
pub fn weak_user(channel_estimate: &ChannelMatrix) -> usize {
    let norms: Vec<f64> = channel_estimate.vectors().iter().map(norm_sqr).collect();
    (0..norms.len()).fold(0, |w, k| if norms[k] < norms[w] { k } else { w })
}

/// Component of `v` orthogonal to `u`.
fn project_out(v: &CVector, u: &CVector) -> CVector {
    let n = norm_sqr(u);
    if n == 0.0 {
        return v.clone();
    }
    v - u * (u.dotc(v) / Complex64::new(n, 0.0))
}

/// Two-user NOMA designs as RSMA corners: the weak user's message rides the
/// common stream (`C_weak = R_c`) and its private precoder is zero. Searches
/// the common fraction over `grid_size` points, two common directions
/// (multicast, weak-user MRT) and two strong-user beams (MRT, nulling the weak
/// user), maximizing the weighted sum rate.
pub fn noma_design(channel_estimate: &ChannelMatrix, power_budget: f64, weights: &[f64], grid_size: usize) -> Result<DownlinkDesign> {
    if channel_estimate.n_users() != 2 {
        return Err(Error::Unsupported(format!(
            "downlink NOMA is two-user only (got K = {})",
            channel_estimate.n_users()
        )));
    }
    let weak = weak_user(channel_estimate);
    let strong = 1 - weak;
    let hw = channel_estimate.user(weak);
    let hs = channel_estimate.user(strong);
    let common_dirs = [dominant_left_singular_vector(&channel_estimate.stacked()), hw.clone()];
    let mut strong_dirs = vec![hs.clone()];
    let nulled = project_out(hs, hw);
    if norm_sqr(&nulled) > 1e-12 * norm_sqr(hs) {
        strong_dirs.push(nulled);
    }
    let structure = Structure::Noma { weak };
    let mut best: Option<(f64, DownlinkDesign)> = None;
    for t in grid(grid_size)? {
        for c in &common_dirs {
            for s in &strong_dirs {
                let mut private = vec![CVector::zeros(channel_estimate.n_tx()); 2];
                private[strong] = with_power(s, (1.0 - t) * power_budget);
                let design = DownlinkDesign::new(with_power(c, t * power_budget), private, vec![0.0; 2], power_budget)?;
                let (design, value) = structure.score(channel_estimate, &design, weights)?;
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    best = Some((value, design));
                }
            }
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

/// Which precoders the optimizer may move and how the common rate is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    /// Everything free; the common rate goes to the highest-weight user.
    Rsma,
    /// Common precoder pinned at zero.
    Sdma,
    /// Weak user's private precoder pinned at zero; the common rate is its message.
    Noma { weak: usize },
}

impl Structure {
    fn share_user(&self, weights: &[f64]) -> usize {
        match *self {
            Structure::Noma { weak } => weak,
            _ => (0..weights.len()).fold(0, |b, k| if weights[k] > weights[b] { k } else { b }),
        }
    }

    fn admits(&self, design: &DownlinkDesign) -> bool {
        match *self {
            Structure::Rsma => true,
            Structure::Sdma => norm_sqr(design.common_precoder()) == 0.0,
            Structure::Noma { weak } => weak < design.n_users() && norm_sqr(&design.private_precoders()[weak]) == 0.0,
        }
    }

    /// Design with structure-consistent shares and its weighted sum rate.
    pub fn score(&self, channel: &ChannelMatrix, design: &DownlinkDesign, weights: &[f64]) -> Result<(DownlinkDesign, f64)> {
        let rate_common = downlink::common_rate(channel, design)?;
        let mut shares = vec![0.0; design.n_users()];
        shares[self.share_user(weights)] = rate_common;
        let design = design.with_shares(shares)?;
        let value = downlink::evaluate(channel, &design)?.weighted_sum(weights);
        Ok((design, value))
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerReport {
    /// Weighted sum rate of the accepted iterates, starting with the initial design.
    pub objective_trace: Vec<f64>,
    /// Accepted ascent steps.
    pub iterations: usize,
    pub converged: bool,
    pub best_design: DownlinkDesign,
    /// Index of the initial design the winning run started from.
    pub start_index: usize,
}

impl OptimizerReport {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial value")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    pub tol: f64,
    /// Soft-min temperature (bits) at the first iteration.
    pub initial_temperature: f64,
    /// Per-iteration temperature factor.
    pub temperature_decay: f64,
    pub min_temperature: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            initial_temperature: 0.5,
            temperature_decay: 0.95,
            min_temperature: 1e-3,
        }
    }
}

/// Precoders as a flat list: index 0 is the common precoder, `1 + k` the private of user `k`.
type Beams = Vec<CVector>;

fn beams_of(design: &DownlinkDesign) -> Beams {
    std::iter::once(design.common_precoder().clone())
        .chain(design.private_precoders().iter().cloned())
        .collect()
}

fn design_of(beams: &Beams, power_budget: f64) -> Result<DownlinkDesign> {
    let k = beams.len() - 1;
    DownlinkDesign::new(beams[0].clone(), beams[1..].to_vec(), vec![0.0; k], power_budget)
}

fn frozen(structure: Structure, index: usize) -> bool {
    match structure {
        Structure::Rsma => false,
        Structure::Sdma => index == 0,
        Structure::Noma { weak } => index == weak + 1,
    }
}

/// Ascent direction of the smoothed weighted sum rate with respect to the
/// conjugate precoders (Wirtinger gradient), using a soft-min of the users'
/// common rates at the given temperature.
fn surrogate_gradient(channel: &ChannelMatrix, beams: &Beams, weights: &[f64], structure: Structure, temperature: f64) -> Beams {
    let k_users = channel.n_users();
    let noise = channel.noise_var();
    let ln2 = std::f64::consts::LN_2;
    let mut grad: Beams = beams.iter().map(|b| CVector::zeros(b.len())).collect();

    let mut common_rates = Vec::with_capacity(k_users);
    let mut terms = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let h = channel.user(k);
        let gains: Vec<f64> = beams.iter().map(|b| gain(h, b)).collect();
        let t_priv: f64 = gains[1..].iter().sum::<f64>() + noise;
        let t_common = t_priv + gains[0];
        let i_priv = t_priv - gains[1 + k];
        common_rates.push(capacity(gains[0] / t_priv));
        terms.push((t_priv, t_common, i_priv.max(noise)));
    }

    // Soft-min weights over the common rates.
    let share_weight = match structure {
        Structure::Sdma => 0.0,
        _ => weights[structure.share_user(weights)],
    };
    let lo = common_rates.iter().copied().fold(f64::INFINITY, f64::min);
    let soft: Vec<f64> = common_rates.iter().map(|r| (-(r - lo) / temperature).exp()).collect();
    let soft_total: f64 = soft.iter().sum();

    for k in 0..k_users {
        let h = channel.user(k);
        let (t_priv, t_common, i_priv) = terms[k];
        let wc = share_weight * soft[k] / soft_total;
        for (j, b) in beams.iter().enumerate() {
            let hb = h * h.dotc(b);
            let coeff = if j == 0 {
                wc / t_common
            } else {
                let private = weights[k] * (1.0 / t_priv - if j == 1 + k { 0.0 } else { 1.0 / i_priv });
                private + wc * (1.0 / t_common - 1.0 / t_priv)
            };
            grad[j] += hb * Complex64::new(coeff / ln2, 0.0);
        }
    }
    for (j, g) in grad.iter_mut().enumerate() {
        if frozen(structure, j) {
            g.fill(Complex64::new(0.0, 0.0));
        }
    }
    grad
}

/// Scales all beams together to use the full budget. Uniform scaling never
/// lowers any SINR, so this is safe for every objective.
fn project_to_budget(beams: &mut Beams, power_budget: f64) {
    let total: f64 = beams.iter().map(norm_sqr).sum();
    if total > 0.0 {
        let s = Complex64::new((power_budget / total).sqrt(), 0.0);
        beams.iter_mut().for_each(|b| *b *= s);
        // Guard the power constraint against rounding.
        let after: f64 = beams.iter().map(norm_sqr).sum();
        if after > power_budget {
            let s = Complex64::new((power_budget / after).sqrt() * (1.0 - 1e-15), 0.0);
            beams.iter_mut().for_each(|b| *b *= s);
        }
    }
}

struct Run {
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    design: DownlinkDesign,
}

fn ascend(channel: &ChannelMatrix, start: &DownlinkDesign, weights: &[f64], structure: Structure, settings: &OptimizerSettings) -> Result<Run> {
    let power_budget = start.power_budget();
    let (mut design, mut value) = structure.score(channel, start, weights)?;
    let mut beams = beams_of(&design);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut converged = false;
    let mut step = 0.1;
    let mut temperature = settings.initial_temperature;

    while iterations < settings.max_iters {
        let grad = surrogate_gradient(channel, &beams, weights, structure, temperature);
        let gnorm = grad.iter().map(norm_sqr).sum::<f64>().sqrt();
        if !(gnorm > 0.0) {
            converged = true;
            break;
        }
        let scale = power_budget.sqrt() / gnorm;
        let mut accepted = None;
        let mut trial_step = step;
        while trial_step > 1e-9 {
            let mut candidate: Beams = beams
                .iter()
                .zip(&grad)
                .map(|(b, g)| b + g * Complex64::new(trial_step * scale, 0.0))
                .collect();
            project_to_budget(&mut candidate, power_budget);
            let (cand_design, cand_value) = structure.score(channel, &design_of(&candidate, power_budget)?, weights)?;
            if cand_value > value {
                accepted = Some((candidate, cand_design, cand_value));
                break;
            }
            trial_step *= 0.5;
        }
        match accepted {
            Some((b, d, v)) => {
                let gain = v - value;
                beams = b;
                design = d;
                value = v;
                trace.push(v);
                iterations += 1;
                step = (trial_step * 2.0).min(1.0);
                if gain < settings.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                if temperature > settings.min_temperature {
                    // Sharpen the surrogate and retry before giving up.
                    temperature = (temperature * 0.1).max(settings.min_temperature);
                    continue;
                }
                converged = true;
                break;
            }
        }
        temperature = (temperature * settings.temperature_decay).max(settings.min_temperature);
    }
    Ok(Run {
        trace,
        iterations,
        converged,
        design,
    })
}

/// Multi-start monotone ascent of `sum_k w_k R_k` restricted to `structure`.
/// Initial designs that are dimensionally inconsistent, over budget or
/// outside the structure are skipped; the best run wins, ties going to the
/// lowest start index.
pub fn optimize_structured(
    channel_estimate: &ChannelMatrix,
    weights: &[f64],
    initial_designs: &[DownlinkDesign],
    structure: Structure,
    settings: &OptimizerSettings,
) -> Result<OptimizerReport> {
    if weights.len() != channel_estimate.n_users() || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::invalid(format!("need {} positive weights", channel_estimate.n_users())));
    }
    if !(settings.tol > 0.0) {
        return Err(Error::invalid("optimizer tolerance must be positive"));
    }
    let mut best: Option<(usize, Run)> = None;
    for (idx, start) in initial_designs.iter().enumerate() {
        let usable = start.n_tx() == channel_estimate.n_tx()
            && start.n_users() == channel_estimate.n_users()
            && downlink::total_power(start) <= start.power_budget() + FEASIBILITY_TOL
            && structure.admits(start);
        if !usable {
            continue;
        }
        let run = ascend(channel_estimate, start, weights, structure, settings)?;
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| run.trace.last() > b.trace.last());
        if better {
            best = Some((idx, run));
        }
    }
    let (start_index, run) = best.ok_or(Error::OptimizerInit)?;
    Ok(OptimizerReport {
        objective_trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        best_design: run.design,
        start_index,
    })
}

/// Weighted-sum-rate RSMA optimizer.
pub fn optimize_wsr(
    channel_estimate: &ChannelMatrix,
    weights: &[f64],
    initial_designs: &[DownlinkDesign],
    max_iters: usize,
    tol: f64,
) -> Result<OptimizerReport> {
    let settings = OptimizerSettings {
        max_iters,
        tol,
        ..OptimizerSettings::default()
    };
    optimize_structured(channel_estimate, weights, initial_designs, Structure::Rsma, &settings)
}

/// SDMA starting points: equal-power ZF (when feasible), equal-power MRT and
/// the best single-user design.
pub fn sdma_starts(channel_estimate: &ChannelMatrix, power_budget: f64) -> Result<Vec<DownlinkDesign>> {
    let mut starts = Vec::new();
    if let Ok(d) = sdma_design(channel_estimate, power_budget, PrivateBeams::ZeroForcing) {
        starts.push(d);
    }
    starts.push(sdma_design(channel_estimate, power_budget, PrivateBeams::MatchedFilter)?);
    let strong = (0..channel_estimate.n_users()).fold(0, |b, k| {
        if norm_sqr(channel_estimate.user(k)) > norm_sqr(channel_estimate.user(b)) {
            k
        } else {
            b
        }
    });
    starts.push(single_user_design(channel_estimate, power_budget, strong)?);
    Ok(starts)
}

/// Optimized SDMA (common stream pinned at zero).
pub fn optimize_sdma(channel_estimate: &ChannelMatrix, power_budget: f64, weights: &[f64], settings: &OptimizerSettings) -> Result<OptimizerReport> {
    let starts = sdma_starts(channel_estimate, power_budget)?;
    optimize_structured(channel_estimate, weights, &starts, Structure::Sdma, settings)
}

/// Optimized two-user NOMA, started from [`noma_design`].
pub fn optimize_noma(
    channel_estimate: &ChannelMatrix,
    power_budget: f64,
    weights: &[f64],
    grid_size: usize,
    settings: &OptimizerSettings,
) -> Result<OptimizerReport> {
    let start = noma_design(channel_estimate, power_budget, weights, grid_size)?;
    let weak = weak_user(channel_estimate);
    optimize_structured(channel_estimate, weights, &[start], Structure::Noma { weak }, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{real_channel, sample_rayleigh};
    use crate::linalg::inner;

    #[test]
    fn power_split_validation() {
        assert!(PowerSplit::new(1.2, vec![1.0]).is_err());
        assert!(PowerSplit::new(0.5, vec![0.5, 0.6]).is_err());
        assert!(PowerSplit::new(0.5, vec![-0.5, 1.5]).is_err());
        assert!(PowerSplit::equal(0.25, 4).is_ok());
    }

    #[test]
    fn zf_on_identity_channel() {
        let h = real_channel(&[&[1.0, 0.0], &[0.0, 1.0]], 1.0).unwrap();
        let p = zf_private(&h, &PowerSplit::equal(0.0, 2).unwrap(), 2.0).unwrap();
        assert!((p[0][0] - Complex64::new(1.0, 0.0)).norm() < 1e-12 && p[0][1].norm() < 1e-12);
        assert!((p[1][1] - Complex64::new(1.0, 0.0)).norm() < 1e-12 && p[1][0].norm() < 1e-12);
    }

    #[test]
    fn zf_rejects_rank_deficiency_and_overload() {
        let aligned = real_channel(&[&[1.0, 0.0], &[1.0, 0.0]], 1.0).unwrap();
        assert!(matches!(
            zf_private(&aligned, &PowerSplit::equal(0.0, 2).unwrap(), 1.0),
            Err(Error::ZfInfeasible(_))
        ));
        let overloaded = real_channel(&[&[1.0], &[1.0]], 1.0).unwrap();
        assert!(matches!(zf_directions(&overloaded), Err(Error::ZfInfeasible(_))));
    }

    #[test]
    fn zf_nulls_cross_terms_with_requested_powers() {
        let h = sample_rayleigh(4, 3, 1.0, 11).unwrap();
        let split = PowerSplit::new(0.3, vec![0.2, 0.5, 0.3]).unwrap();
        let p = zf_private(&h, &split, 10.0).unwrap();
        for (k, pk) in p.iter().enumerate() {
            assert!((norm_sqr(pk) - 0.7 * 10.0 * split.private_fractions()[k]).abs() < 1e-12);
            for j in 0..3 {
                if j != k {
                    let bound = 1e-10 * norm_sqr(h.user(j)).sqrt() * norm_sqr(pk).sqrt();
                    assert!(inner(h.user(j), pk).norm() <= bound);
                }
            }
        }
    }

    #[test]
    fn multicast_directions() {
        let single = real_channel(&[&[3.0, 4.0]], 1.0).unwrap();
        let split = PowerSplit::equal(1.0, 1).unwrap();
        let pc = multicast_common(&single, &split, 2.0);
        assert!((norm_sqr(&pc) - 2.0).abs() < 1e-12);
        assert!((gain(single.user(0), &pc) - 2.0 * 25.0).abs() < 1e-9);

        let ortho = real_channel(&[&[2.0, 0.0], &[0.0, 1.0]], 1.0).unwrap();
        let pc = multicast_common(&ortho, &PowerSplit::equal(1.0, 2).unwrap(), 1.0);
        assert!((pc[0].norm() - 1.0).abs() < 1e-12 && pc[1].norm() < 1e-12);

        let aligned = real_channel(&[&[1.0, 1.0], &[1.0, 1.0]], 1.0).unwrap();
        let split = PowerSplit::equal(1.0, 2).unwrap();
        let pc = multicast_common(&aligned, &split, 1.0);
        assert!((gain(aligned.user(0), &pc) - 2.0).abs() < 1e-12);
        let d = DownlinkDesign::new(pc, vec![CVector::zeros(2); 2], vec![0.0; 2], 1.0).unwrap();
        let g1 = downlink::sinr_common(&aligned, &d, 0).unwrap();
        let g2 = downlink::sinr_common(&aligned, &d, 1).unwrap();
        assert!((g1 - g2).abs() < 1e-12);

        assert_eq!(multicast_common(&aligned, &PowerSplit::equal(0.0, 2).unwrap(), 1.0), CVector::zeros(2));
    }

    #[test]
    fn water_filling_equalizes() {
        let s = water_fill_shares(&[1.0, 3.0, 2.0], 1.5);
        assert!((s.iter().sum::<f64>() - 1.5).abs() < 1e-12);
        // Level 2.25: users 0 and 2 lifted, user 1 untouched.
        assert!((s[0] - 1.25).abs() < 1e-12 && (s[2] - 0.25).abs() < 1e-12 && s[1] == 0.0);
        let s = water_fill_shares(&[1.0, 1.0], 0.0);
        assert_eq!(s, vec![0.0, 0.0]);
        let s = water_fill_shares(&[0.0, 1.0], 5.0);
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn split_search_orthogonal_prefers_no_common() {
        let h = real_channel(&[&[1.0, 0.0], &[0.0, 1.0]], 1.0).unwrap();
        for p in [1.0, 10.0, 1000.0] {
            let (d, r) = split_search(&h, p, Objective::SumRate, DEFAULT_GRID_SIZE).unwrap();
            assert_eq!(norm_sqr(d.common_precoder()), 0.0);
            assert!((r.sum_rate() - 2.0 * (1.0 + p / 2.0).log2()).abs() < 1e-9);
        }
    }

    #[test]
    fn split_search_single_user() {
        let h = real_channel(&[&[1.0, 2.0]], 0.5).unwrap();
        let (_, r) = split_search(&h, 3.0, Objective::SumRate, 9).unwrap();
        assert!((r.sum_rate() - (1.0 + 3.0 * 5.0 / 0.5f64).log2()).abs() < 1e-9);
    }

    #[test]
    fn split_search_near_aligned_uses_common_stream() {
        let h = real_channel(&[&[1.0, 0.0], &[1.0, 0.1]], 1.0).unwrap();
        let (d, _) = split_search(&h, 100.0, Objective::SumRate, DEFAULT_GRID_SIZE).unwrap();
        assert!(norm_sqr(d.common_precoder()) > 0.0);
    }

    #[test]
    fn split_search_max_min_equalizes_totals() {
        let h = real_channel(&[&[1.0, 0.0], &[0.8, 0.5]], 1.0).unwrap();
        let (_, r) = split_search(&h, 100.0, Objective::MaxMin, DEFAULT_GRID_SIZE).unwrap();
        let (_, r0) = split_search(&h, 100.0, Objective::SumRate, 2).unwrap();
        assert!(r.min_rate() >= r0.min_rate() - 1e-12);
    }

    #[test]
    fn optimizer_keeps_single_user_optimum() {
        let h = real_channel(&[&[1.0, -1.0]], 1.0).unwrap();
        let start = single_user_design(&h, 4.0, 0).unwrap();
        let report = optimize_wsr(&h, &[1.0], std::slice::from_ref(&start), DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
        assert!(report.iterations <= 1);
        assert!((report.objective() - 9f64.log2()).abs() < 1e-12);
        for (a, b) in report.best_design.private_precoders()[0].iter().zip(start.private_precoders()[0].iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn optimizer_orthogonal_reaches_zf_value() {
        let h = real_channel(&[&[1.0, 0.0], &[0.0, 1.0]], 1.0).unwrap();
        let p = 10.0;
        let starts = vec![sdma_design(&h, p, PrivateBeams::MatchedFilter).unwrap()];
        let report = optimize_wsr(&h, &[1.0, 1.0], &starts, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
        assert!(report.objective() >= 2.0 * (1.0 + p / 2.0).log2() - 1e-6);
    }

    #[test]
    fn optimizer_trace_is_monotone_and_feasible() {
        for seed in 0..10 {
            let h = sample_rayleigh(3, 3, 1.0, seed).unwrap();
            let p = 50.0;
            let mut starts = sdma_starts(&h, p).unwrap();
            starts.push(split_search(&h, p, Objective::SumRate, 9).unwrap().0);
            let init: f64 = starts
                .iter()
                .map(|d| Structure::Rsma.score(&h, d, &[1.0, 2.0, 1.0]).unwrap().1)
                .fold(f64::MIN, f64::max);
            let report = optimize_wsr(&h, &[1.0, 2.0, 1.0], &starts, 200, 1e-6).unwrap();
            assert!(report.objective() >= init);
            assert!(report.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
            assert!(downlink::total_power(&report.best_design) <= p + FEASIBILITY_TOL);
            let r = downlink::evaluate(&h, &report.best_design).unwrap();
            assert!((r.weighted_sum(&[1.0, 2.0, 1.0]) - report.objective()).abs() < 1e-12);
        }
    }

    #[test]
    fn optimizer_requires_a_feasible_start() {
        let h = real_channel(&[&[1.0, 0.0], &[0.0, 1.0]], 1.0).unwrap();
        assert!(matches!(optimize_wsr(&h, &[1.0, 1.0], &[], 10, 1e-5), Err(Error::OptimizerInit)));
        let wrong = sample_rayleigh(3, 2, 1.0, 0).unwrap();
        let d = sdma_design(&wrong, 1.0, PrivateBeams::ZeroForcing).unwrap();
        assert!(matches!(optimize_wsr(&h, &[1.0, 1.0], &[d], 10, 1e-5), Err(Error::OptimizerInit)));
    }

    #[test]
    fn structured_optimizers_respect_their_pins() {
        let h = real_channel(&[&[1.0, 0.2], &[0.5, 0.1]], 1.0).unwrap();
        let s = optimize_sdma(&h, 100.0, &[1.0, 1.0], &OptimizerSettings::default()).unwrap();
        assert_eq!(norm_sqr(s.best_design.common_precoder()), 0.0);
        let n = optimize_noma(&h, 100.0, &[1.0, 1.0], 17, &OptimizerSettings::default()).unwrap();
        assert_eq!(weak_user(&h), 1);
        assert_eq!(norm_sqr(&n.best_design.private_precoders()[1]), 0.0);
        assert_eq!(n.best_design.common_shares()[0], 0.0);
    }

    #[test]
    fn posterior_samples_shrink_toward_estimate() {
        let est = sample_rayleigh(2, 2, 1.0, 5).unwrap();
        let csit = CsitModel::imperfect(0.5, 100.0).unwrap();
        let draws = posterior_samples(&est, &csit, 4000, 9).unwrap();
        let mean00: Complex64 = draws.iter().map(|h| h.user(0)[0]).sum::<Complex64>() / 4000.0;
        let expected = est.user(0)[0] / 1.1;
        assert!((mean00 - expected).norm() < 0.03);
        assert_eq!(posterior_samples(&est, &CsitModel::perfect(), 10, 0).unwrap().len(), 1);
    }
}
