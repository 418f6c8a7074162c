//! Independent reference computations for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rsma::channel::ChannelMatrix;

pub type CVec = DVector<Complex64>;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Entries CN(0, var).
pub fn cn_vector(rng: &mut ChaCha20Rng, n: usize, var: f64) -> CVec {
    let s = (var / 2.0).sqrt();
    DVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

pub fn channel(vectors: Vec<CVec>, noise: f64) -> ChannelMatrix {
    ChannelMatrix::new(vectors, noise).expect("valid test channel")
}

pub fn random_channel(rng: &mut ChaCha20Rng, n_tx: usize, n_users: usize, noise: f64) -> ChannelMatrix {
    channel((0..n_users).map(|_| cn_vector(rng, n_tx, 1.0)).collect(), noise)
}

/// `|a^H b|^2` written out elementwise.
pub fn gain(a: &CVec, b: &CVec) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr()
}

pub fn log2_1p(x: f64) -> f64 {
    (1.0 + x).log2()
}

/// `log2 det(I + sigma^-2 sum_k p_k h_k h_k^H)` through an LU determinant.
pub fn log2_det_sum(channel: &ChannelMatrix, powers: &[f64]) -> f64 {
    let m = channel.n_tx();
    let mut a = DMatrix::<Complex64>::identity(m, m);
    for (k, &p) in powers.iter().enumerate() {
        let h = channel.user(k);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] += h[i] * h[j].conj() * (p / channel.noise_var());
            }
        }
    }
    a.determinant().re.log2()
}

/// Unsplit MMSE-SIC rates by the chain rule of log-determinants: the user
/// decoded at position `i` gets `log det(I + S_i) - log det(I + S_{i+1})`
/// with `S_i` the covariance of itself and everything decoded after it.
pub fn sic_chain_rule_rates(channel: &ChannelMatrix, powers: &[f64], order: &[usize]) -> Vec<f64> {
    let k = channel.n_users();
    let mut rates = vec![0.0; k];
    for (pos, &u) in order.iter().enumerate() {
        let mut with = vec![0.0; k];
        let mut without = vec![0.0; k];
        for &v in &order[pos..] {
            with[v] = powers[v];
            if v != u {
                without[v] = powers[v];
            }
        }
        rates[u] = log2_det_sum(channel, &with) - log2_det_sum(channel, &without);
    }
    rates
}

/// Random permutation of `0..n` (Fisher-Yates).
pub fn permutation(rng: &mut ChaCha20Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    v
}
