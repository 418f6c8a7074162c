//! Reference multiple-access schemes and analytic oracles.
//!
//! These are written directly from their textbook definitions and do not
//! call into [`crate::downlink`] or [`crate::uplink`], so the special-case
//! identities between RSMA and the baselines are genuine cross-checks.

use crate::capacity;
use crate::channel::ChannelMatrix;
use crate::linalg::{gain, identity_plus_outer, log2_det_hpd, norm_sqr, CMatrix, CVector};
use crate::{Error, Result};
use num_complex::Complex64;

fn check_precoders(channel: &ChannelMatrix, precoders: &[CVector]) -> Result<()> {
    if precoders.len() != channel.n_users() || precoders.iter().any(|p| p.len() != channel.n_tx()) {
        return Err(Error::invalid(format!(
            "expected {} precoders of length {}",
            channel.n_users(),
            channel.n_tx()
        )));
    }
    Ok(())
}

/// Linear precoding with all multi-user interference treated as noise.
pub fn sdma_rates(channel: &ChannelMatrix, private_precoders: &[CVector]) -> Result<Vec<f64>> {
    check_precoders(channel, private_precoders)?;
    Ok((0..channel.n_users())
        .map(|k| {
            let h = channel.user(k);
            let mut interference = 0.0;
            for (i, p) in private_precoders.iter().enumerate() {
                if i != k {
                    interference += gain(h, p);
                }
            }
            capacity(gain(h, &private_precoders[k]) / (interference + channel.noise_var()))
        })
        .collect())
}

/// Two-user power-domain NOMA. `precoders[weak_user]` carries the weak user's
/// message, which both users decode first; the strong user then decodes its
/// own stream `precoders[1 - weak_user]` interference-free.
pub fn noma_rates_2user(channel: &ChannelMatrix, precoders: &[CVector], weak_user: usize) -> Result<Vec<f64>> {
    if channel.n_users() != 2 {
        return Err(Error::Unsupported(format!(
            "downlink NOMA baseline is two-user only (got K = {})",
            channel.n_users()
        )));
    }
    check_precoders(channel, precoders)?;
    if weak_user > 1 {
        return Err(Error::invalid(format!("weak user index {weak_user} out of range")));
    }
    let strong = 1 - weak_user;
    let noise = channel.noise_var();
    let pw = &precoders[weak_user];
    let ps = &precoders[strong];
    let decode_weak = |at: usize| {
        let h = channel.user(at);
        capacity(gain(h, pw) / (gain(h, ps) + noise))
    };
    let weak_rate = decode_weak(weak_user).min(decode_weak(strong));
    let strong_rate = capacity(gain(channel.user(strong), ps) / noise);
    let mut rates = vec![0.0; 2];
    rates[weak_user] = weak_rate;
    rates[strong] = strong_rate;
    Ok(rates)
}

/// Equal-slot TDMA with full power and matched-filter beamforming.
pub fn oma_tdma_rates(channel: &ChannelMatrix, power_budget: f64) -> Vec<f64> {
    let k = channel.n_users() as f64;
    channel
        .vectors()
        .iter()
        .map(|h| capacity(power_budget * norm_sqr(h) / channel.noise_var()) / k)
        .collect()
}

/// TDMA when the transmitter only knows an estimate: user `k` is served in its
/// slot with full power along `estimate_k / ||estimate_k||`.
pub fn oma_tdma_rates_with_estimate(channel: &ChannelMatrix, estimate: &ChannelMatrix, power_budget: f64) -> Vec<f64> {
    let k = channel.n_users() as f64;
    channel
        .vectors()
        .iter()
        .zip(estimate.vectors())
        .map(|(h, e)| {
            let n = norm_sqr(e);
            let g = if n > 0.0 { gain(h, e) / n } else { 0.0 };
            capacity(power_budget * g / channel.noise_var()) / k
        })
        .collect()
}

/// `log2 det(I + sigma^-2 sum_k P_k h_k h_k^H)`: the MAC sum capacity.
pub fn mac_sum_capacity(channel: &ChannelMatrix, powers: &[f64]) -> Result<f64> {
    if powers.len() != channel.n_users() {
        return Err(Error::invalid(format!(
            "{} powers for {} users",
            powers.len(),
            channel.n_users()
        )));
    }
    let terms: Vec<(f64, &CVector)> = powers.iter().copied().zip(channel.vectors()).collect();
    let m = identity_plus_outer(channel.n_tx(), &terms, 1.0 / channel.noise_var());
    log2_det_hpd(m).ok_or_else(|| Error::invalid("MAC covariance is not positive definite"))
}

/// Capacity region of the two-user Gaussian MAC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PentagonRegion {
    pub r1_max: f64,
    pub r2_max: f64,
    pub sum_max: f64,
}

impl PentagonRegion {
    /// The two corners of the dominant face: user 1 decoded last, user 2 decoded last.
    pub fn corners(&self) -> [(f64, f64); 2] {
        [
            (self.r1_max, self.sum_max - self.r1_max),
            (self.sum_max - self.r2_max, self.r2_max),
        ]
    }

    /// All five vertices, counter-clockwise from the origin.
    pub fn vertices(&self) -> [(f64, f64); 5] {
        let [a, b] = self.corners();
        [(0.0, 0.0), (self.r1_max, 0.0), a, b, (0.0, self.r2_max)]
    }

    pub fn contains(&self, r1: f64, r2: f64, tol: f64) -> bool {
        r1 >= -tol && r2 >= -tol && r1 <= self.r1_max + tol && r2 <= self.r2_max + tol && r1 + r2 <= self.sum_max + tol
    }

    /// Point on the dominant face at parameter `lambda` in [0, 1], from the
    /// user-1-last corner to the user-2-last corner.
    pub fn dominant_face_point(&self, lambda: f64) -> (f64, f64) {
        let [a, b] = self.corners();
        (a.0 + lambda * (b.0 - a.0), a.1 + lambda * (b.1 - a.1))
    }
}

pub fn mac_pentagon(channel: &ChannelMatrix, budgets: [f64; 2]) -> Result<PentagonRegion> {
    if channel.n_users() != 2 {
        return Err(Error::Unsupported(format!(
            "MAC pentagon is two-user only (got K = {})",
            channel.n_users()
        )));
    }
    if budgets.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid("power budgets must be >= 0"));
    }
    let single = |k: usize| {
        let mut p = [0.0; 2];
        p[k] = budgets[k];
        mac_sum_capacity(channel, &p)
    };
    Ok(PentagonRegion {
        r1_max: single(0)?,
        r2_max: single(1)?,
        sum_max: mac_sum_capacity(channel, &budgets)?,
    })
}

fn mmse_sinr(channel: &ChannelMatrix, powers: &[f64], target: usize, interferers: &[usize]) -> f64 {
    let m = channel.n_tx();
    let mut cov = CMatrix::identity(m, m) * Complex64::new(channel.noise_var(), 0.0);
    for &j in interferers {
        let h = channel.user(j);
        cov += (h * h.adjoint()) * Complex64::new(powers[j], 0.0);
    }
    let h = channel.user(target);
    let x = cov.cholesky().expect("noise-loaded covariance is positive definite").solve(h);
    powers[target] * h.dotc(&x).re
}

/// Unsplit MMSE-SIC uplink: users decoded in `order`, each against the users
/// not yet decoded.
pub fn uplink_sic_rates(channel: &ChannelMatrix, powers: &[f64], order: &[usize]) -> Result<Vec<f64>> {
    let k = channel.n_users();
    let mut seen = vec![false; k];
    if order.len() != k || powers.len() != k || order.iter().any(|&u| u >= k || std::mem::replace(&mut seen[u], true)) {
        return Err(Error::invalid("order must be a permutation of the users and powers must have length K"));
    }
    let mut rates = vec![0.0; k];
    for (pos, &u) in order.iter().enumerate() {
        rates[u] = capacity(mmse_sinr(channel, powers, u, &order[pos + 1..]));
    }
    Ok(rates)
}

/// Uplink linear MMSE without SIC: every user treats all others as noise.
pub fn uplink_tin_rates(channel: &ChannelMatrix, powers: &[f64]) -> Result<Vec<f64>> {
    let k = channel.n_users();
    if powers.len() != k {
        return Err(Error::invalid("powers must have length K"));
    }
    Ok((0..k)
        .map(|u| {
            let others: Vec<usize> = (0..k).filter(|&j| j != u).collect();
            capacity(mmse_sinr(channel, powers, u, &others))
        })
        .collect())
}

/// Rate pair of the time-sharing combination `(1 - theta) * a + theta * b`.
pub fn time_share(a: (f64, f64), b: (f64, f64), theta: f64) -> (f64, f64) {
    ((1.0 - theta) * a.0 + theta * b.0, (1.0 - theta) * a.1 + theta * b.1)
}
