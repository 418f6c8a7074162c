//! Channel realizations shared by both link directions.
//!
//! A [`ChannelMatrix`] holds one complex vector per single-antenna user
//! (length `n_tx`, the base-station antenna count) and the receiver noise
//! variance. Entries are unit-average-power; SNR is set through the power
//! budget, never by scaling the channel.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{stack_columns, CMatrix, CVector};
use crate::{Error, Result};

/// Identifier of the generator behind every seeded draw, written to CSV metadata.
pub const RNG_ID: &str = "chacha20-rand_chacha-0.9/seed_from_u64";

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    vectors: Vec<CVector>,
    noise_var: f64,
}

impl ChannelMatrix {
    /// Builds a channel from per-user vectors.
    pub fn new(vectors: Vec<CVector>, noise_var: f64) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("channel needs at least one user"));
        }
        let n_tx = vectors[0].len();
        if n_tx == 0 {
            return Err(Error::invalid("channel vectors must be nonempty"));
        }
        if let Some(k) = vectors.iter().position(|v| v.len() != n_tx) {
            return Err(Error::invalid(format!(
                "ragged channel: user {} has {} entries, expected {}",
                k,
                vectors[k].len(),
                n_tx
            )));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be positive, got {noise_var}")));
        }
        if vectors.iter().flat_map(|v| v.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("channel entries must be finite"));
        }
        Ok(Self { vectors, noise_var })
    }

    pub fn n_tx(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn n_users(&self) -> usize {
        self.vectors.len()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.vectors
    }

    /// Channel vector of user `k`.
    pub fn user(&self, k: usize) -> &CVector {
        &self.vectors[k]
    }

    /// The M x K matrix with the user channels as columns.
    pub fn stacked(&self) -> CMatrix {
        stack_columns(&self.vectors)
    }

    /// Same vectors, different noise variance.
    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self> {
        Self::new(self.vectors.clone(), noise_var)
    }
}

/// Transmitter-side channel knowledge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsitModel {
    pub alpha: f64,
    pub error_var: f64,
    pub perfect: bool,
}

impl CsitModel {
    pub fn perfect() -> Self {
        Self {
            alpha: f64::INFINITY,
            error_var: 0.0,
            perfect: true,
        }
    }

    /// Error variance `power_budget^(-alpha)`.
    pub fn imperfect(alpha: f64, power_budget: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("CSIT exponent alpha must be finite and >= 0, got {alpha}")));
        }
        if !(power_budget > 0.0 && power_budget.is_finite()) {
            return Err(Error::invalid(format!("power budget must be positive, got {power_budget}")));
        }
        let error_var = power_budget.powf(-alpha);
        Ok(Self {
            alpha,
            error_var,
            perfect: error_var == 0.0,
        })
    }
}

fn cn_sample(rng: &mut ChaCha20Rng, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(scale * re, scale * im)
}

fn cn_vectors(rng: &mut ChaCha20Rng, n_tx: usize, n_users: usize, variance: f64) -> Vec<CVector> {
    (0..n_users)
        .map(|_| DVector::from_fn(n_tx, |_, _| cn_sample(rng, variance)))
        .collect()
}

/// I.i.d. CN(0, 1) entries. Draw order is user-major, real part before imaginary.
pub fn sample_rayleigh(n_tx: usize, n_users: usize, noise_var: f64, seed: u64) -> Result<ChannelMatrix> {
    if n_tx == 0 || n_users == 0 {
        return Err(Error::invalid(format!(
            "channel dimensions must be positive (n_tx = {n_tx}, n_users = {n_users})"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ChannelMatrix::new(cn_vectors(&mut rng, n_tx, n_users, 1.0), noise_var)
}

/// Transmitter estimate `truth + e`, `e` i.i.d. CN(0, `power_budget^(-alpha)`).
pub fn apply_csit_error(
    truth: &ChannelMatrix,
    alpha: f64,
    power_budget: f64,
    seed: u64,
) -> Result<(ChannelMatrix, CsitModel)> {
    let model = CsitModel::imperfect(alpha, power_budget)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let errors = cn_vectors(&mut rng, truth.n_tx(), truth.n_users(), model.error_var);
    let vectors = truth.vectors.iter().zip(errors).map(|(h, e)| h + e).collect();
    Ok((ChannelMatrix::new(vectors, truth.noise_var)?, model))
}

/// Channel built from explicit rows, one per user.
pub fn deterministic_channel(rows: Vec<Vec<Complex64>>, noise_var: f64) -> Result<ChannelMatrix> {
    ChannelMatrix::new(rows.into_iter().map(DVector::from_vec).collect(), noise_var)
}

/// Convenience for real-valued fixtures.
pub fn real_channel(rows: &[&[f64]], noise_var: f64) -> Result<ChannelMatrix> {
    deterministic_channel(
        rows.iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect(),
        noise_var,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_rayleigh(2, 2, 1.0, 7).unwrap();
        let b = sample_rayleigh(2, 2, 1.0, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_rayleigh(2, 2, 1.0, 8).unwrap());
    }

    #[test]
    fn sampled_shape() {
        let h = sample_rayleigh(4, 3, 1.0, 99).unwrap();
        assert_eq!(h.n_users(), 3);
        assert!(h.vectors().iter().all(|v| v.len() == 4));
        assert_eq!(h.stacked().shape(), (4, 3));
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(matches!(sample_rayleigh(0, 2, 1.0, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_rayleigh(2, 0, 1.0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unit_average_entry_power() {
        let trials = 10_000;
        let total: f64 = (0..trials)
            .map(|s| {
                let h = sample_rayleigh(2, 2, 1.0, s).unwrap();
                h.vectors().iter().flat_map(|v| v.iter()).map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum();
        let mean = total / (trials as f64 * 4.0);
        assert!((mean - 1.0).abs() < 0.05, "mean entry power {mean}");
    }

    #[test]
    fn csit_error_variance_law() {
        assert_eq!(CsitModel::imperfect(0.0, 100.0).unwrap().error_var, 1.0);
        assert!((CsitModel::imperfect(0.5, 100.0).unwrap().error_var - 0.1).abs() < 1e-15);
        assert!(!CsitModel::imperfect(0.0, 100.0).unwrap().perfect);
        assert!(CsitModel::perfect().perfect);
        assert!(matches!(
            CsitModel::imperfect(-0.1, 10.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn csit_error_empirical_variance() {
        // alpha = 1, P = 10 -> variance 0.1; each entry |e|^2 ~ Exp(mean 0.1), std 0.1.
        let truth = real_channel(&[&[1.0, 0.0], &[0.0, 1.0]], 1.0).unwrap();
        let trials = 10_000u64;
        let mut sum = 0.0;
        for seed in 0..trials {
            let (est, model) = apply_csit_error(&truth, 1.0, 10.0, seed).unwrap();
            assert!((model.error_var - 0.1).abs() < 1e-15);
            for (h, e) in truth.vectors().iter().zip(est.vectors()) {
                sum += (e - h).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        let n = (trials * 4) as f64;
        let mean = sum / n;
        assert!((mean - 0.1).abs() < 0.01, "mean error power {mean}");
        let std_err = 0.1 / n.sqrt();
        assert!((mean - 0.1).abs() < 3.0 * std_err, "mean {mean} outside 3 s.e.");
    }

    #[test]
    fn csit_error_keeps_noise_and_truth() {
        let truth = sample_rayleigh(3, 2, 0.5, 3).unwrap();
        let copy = truth.clone();
        let (est, _) = apply_csit_error(&truth, 0.5, 100.0, 4).unwrap();
        assert_eq!(est.noise_var(), 0.5);
        assert_eq!(truth, copy);
    }

    #[test]
    fn deterministic_fixtures() {
        let ortho = real_channel(&[&[1.0, 0.0], &[0.0, 1.0]], 1.0).unwrap();
        assert_eq!((ortho.n_tx(), ortho.n_users()), (2, 2));
        let siso = real_channel(&[&[1.0], &[1.0]], 1.0).unwrap();
        assert_eq!((siso.n_tx(), siso.n_users()), (1, 2));
        assert!(matches!(
            real_channel(&[&[1.0, 0.0], &[1.0]], 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(real_channel(&[&[1.0]], 0.0).is_err());
        assert!(real_channel(&[&[f64::NAN]], 1.0).is_err());
    }
}
