//! One-layer rate-splitting evaluation for the MISO broadcast channel.
//!
//! Every user first decodes the common stream treating all private streams
//! as noise, removes it by (ideal) SIC, then decodes its own private stream
//! treating the other private streams as noise. The common rate is the
//! worst user's common capacity and is divided among users by the
//! `common_shares` of the design.

use crate::capacity;
use crate::channel::ChannelMatrix;
use crate::linalg::{gain, norm_sqr, CVector};
use crate::{Error, Result};

/// Absolute tolerance on power and share constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkDesign {
    common_precoder: CVector,
    private_precoders: Vec<CVector>,
    common_shares: Vec<f64>,
    power_budget: f64,
}

impl DownlinkDesign {
    pub fn new(
        common_precoder: CVector,
        private_precoders: Vec<CVector>,
        common_shares: Vec<f64>,
        power_budget: f64,
    ) -> Result<Self> {
        if !(power_budget > 0.0 && power_budget.is_finite()) {
            return Err(Error::invalid(format!("power budget must be positive, got {power_budget}")));
        }
        if private_precoders.is_empty() {
            return Err(Error::invalid("design needs at least one private precoder"));
        }
        if private_precoders.len() != common_shares.len() {
            return Err(Error::invalid(format!(
                "{} private precoders but {} common shares",
                private_precoders.len(),
                common_shares.len()
            )));
        }
        let m = common_precoder.len();
        if private_precoders.iter().any(|p| p.len() != m) {
            return Err(Error::invalid("precoders must all have the same length"));
        }
        if let Some(k) = common_shares.iter().position(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::invalid(format!(
                "common share of user {k} must be finite and >= 0, got {}",
                common_shares[k]
            )));
        }
        let design = Self {
            common_precoder,
            private_precoders,
            common_shares,
            power_budget,
        };
        let excess = total_power(&design) - power_budget;
        if excess > FEASIBILITY_TOL {
            return Err(Error::Feasibility {
                constraint: "total transmit power <= P".into(),
                slack: excess,
            });
        }
        Ok(design)
    }

    pub fn common_precoder(&self) -> &CVector {
        &self.common_precoder
    }

    pub fn private_precoders(&self) -> &[CVector] {
        &self.private_precoders
    }

    pub fn common_shares(&self) -> &[f64] {
        &self.common_shares
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    pub fn n_users(&self) -> usize {
        self.private_precoders.len()
    }

    pub fn n_tx(&self) -> usize {
        self.common_precoder.len()
    }

    /// Same precoders, new shares.
    pub fn with_shares(&self, shares: Vec<f64>) -> Result<Self> {
        Self::new(
            self.common_precoder.clone(),
            self.private_precoders.clone(),
            shares,
            self.power_budget,
        )
    }
}

/// Outcome for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserRates {
    pub gamma_c: f64,
    pub gamma_p: f64,
    pub rate_private: f64,
    pub share: f64,
    pub rate_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkRates {
    pub users: Vec<UserRates>,
    pub rate_common: f64,
}

impl DownlinkRates {
    pub fn totals(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.rate_total).collect()
    }

    pub fn sum_rate(&self) -> f64 {
        self.users.iter().map(|u| u.rate_total).sum()
    }

    pub fn min_rate(&self) -> f64 {
        self.users.iter().map(|u| u.rate_total).fold(f64::INFINITY, f64::min)
    }

    pub fn weighted_sum(&self, weights: &[f64]) -> f64 {
        self.users.iter().zip(weights).map(|(u, w)| w * u.rate_total).sum()
    }
}

fn check_dims(channel: &ChannelMatrix, design: &DownlinkDesign, user: usize) -> Result<()> {
    if design.n_tx() != channel.n_tx() || design.n_users() != channel.n_users() {
        return Err(Error::invalid(format!(
            "design is {}x{} (M x K) but channel is {}x{}",
            design.n_tx(),
            design.n_users(),
            channel.n_tx(),
            channel.n_users()
        )));
    }
    if user >= channel.n_users() {
        return Err(Error::invalid(format!(
            "user index {user} out of range for K = {}",
            channel.n_users()
        )));
    }
    Ok(())
}

/// (own private gain, interference from the other private streams)
fn private_terms(channel: &ChannelMatrix, design: &DownlinkDesign, user: usize) -> (f64, f64) {
    let h = channel.user(user);
    let own = gain(h, &design.private_precoders[user]);
    let others: f64 = design
        .private_precoders
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != user)
        .map(|(_, p)| gain(h, p))
        .sum();
    (own, others)
}

/// Common-stream SINR at `user`; every private stream counts as interference.
pub fn sinr_common(channel: &ChannelMatrix, design: &DownlinkDesign, user: usize) -> Result<f64> {
    check_dims(channel, design, user)?;
    let (own, others) = private_terms(channel, design, user);
    Ok(gain(channel.user(user), &design.common_precoder) / (own + others + channel.noise_var()))
}

/// Private-stream SINR at `user` after the common stream has been removed.
pub fn sinr_private(channel: &ChannelMatrix, design: &DownlinkDesign, user: usize) -> Result<f64> {
    check_dims(channel, design, user)?;
    let (own, others) = private_terms(channel, design, user);
    Ok(own / (others + channel.noise_var()))
}

/// `log2(1 + min_k gamma_c,k)`.
pub fn common_rate(channel: &ChannelMatrix, design: &DownlinkDesign) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for k in 0..channel.n_users() {
        worst = worst.min(sinr_common(channel, design, k)?);
    }
    Ok(capacity(worst))
}

/// Full evaluation. Fails when the shares exceed the common rate.
pub fn evaluate(channel: &ChannelMatrix, design: &DownlinkDesign) -> Result<DownlinkRates> {
    let k = channel.n_users();
    let mut gammas = Vec::with_capacity(k);
    for user in 0..k {
        gammas.push((sinr_common(channel, design, user)?, sinr_private(channel, design, user)?));
    }
    let rate_common = capacity(gammas.iter().map(|g| g.0).fold(f64::INFINITY, f64::min));
    let shares_total: f64 = design.common_shares.iter().sum();
    let slack = shares_total - rate_common;
    if slack > FEASIBILITY_TOL {
        return Err(Error::Feasibility {
            constraint: "sum of common shares <= common rate".into(),
            slack,
        });
    }
    let users = gammas
        .into_iter()
        .zip(&design.common_shares)
        .map(|((gamma_c, gamma_p), &share)| {
            let rate_private = capacity(gamma_p);
            UserRates {
                gamma_c,
                gamma_p,
                rate_private,
                share,
                rate_total: rate_private + share,
            }
        })
        .collect();
    Ok(DownlinkRates { users, rate_common })
}

/// `||p_c||^2 + sum_k ||p_p,k||^2`.
pub fn total_power(design: &DownlinkDesign) -> f64 {
    norm_sqr(&design.common_precoder) + design.private_precoders.iter().map(norm_sqr).sum::<f64>()
}

/// Re-targets the design's shares to the common rate actually supported by
/// `channel`, keeping each user's fraction of the common stream. Used when a
/// design built on an estimate is scored on the true channel.
pub fn rescale_shares(channel: &ChannelMatrix, design: &DownlinkDesign) -> Result<DownlinkDesign> {
    let rate_common = common_rate(channel, design)?;
    let total: f64 = design.common_shares.iter().sum();
    let shares = if total > 0.0 {
        design.common_shares.iter().map(|c| c / total * rate_common).collect()
    } else {
        vec![0.0; design.n_users()]
    };
    design.with_shares(shares)
}
