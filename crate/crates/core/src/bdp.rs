//! Baseline discovery procedure: a Dirichlet-process mixture on the means of
//! the z-scores whose base measure puts mass `p0` on exactly zero and the rest
//! on a N(0, slab_var) slab.
//!
//! ```text
//! z_i | μ_i, σ² ~ N(μ_i, σ²)
//! μ_i | G ~ G,  G ~ DP(γ, p0 δ₀ + (1 − p0) N(0, slab_var))
//! σ² ~ Inv-Gamma(a, b),  γ ~ Log-N(l, L²)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{drive, Progress};
use crate::data::{ChainConfig, DataError, Hyperparameters, Partition, ZScoreDataset};
use crate::dpm::{neal8_sweep, update_gamma, BaseMeasure, ClusterLikelihood, LogNormal, ScanOrder};
use crate::model::ModelError;
use crate::rng::{stream_rng, ChainRng};
use crate::stats::{normal_logpdf, sample_inverse_gamma, std_normal, LN_2PI, VARIANCE_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BdpError {
    #[error("chain has no retained states")]
    EmptyChain,
}

/// Settings of the baseline model beyond the shared [`Hyperparameters`]
/// (of which only the γ prior, the auxiliary count and the γ step are used).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdpParams {
    /// Prior weight of the point mass at zero.
    pub p0: f64,
    /// Variance of the continuous slab.
    pub slab_var: f64,
    /// Inverse-gamma shape of the prior on the shared variance.
    pub sigma_shape: f64,
    /// Inverse-gamma scale of the prior on the shared variance.
    pub sigma_scale: f64,
}

impl Default for BdpParams {
    fn default() -> Self {
        Self {
            p0: 0.5,
            slab_var: 10.0,
            sigma_shape: 1.0,
            sigma_scale: 1.0,
        }
    }
}

impl BdpParams {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(DataError::InvalidHyperparameter(format!(
                "p0 must lie in (0, 1), got {}",
                self.p0
            )));
        }
        for (name, v) in [
            ("slab_var", self.slab_var),
            ("sigma_shape", self.sigma_shape),
            ("sigma_scale", self.sigma_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DataError::InvalidHyperparameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BdpModel {
    pub dataset: ZScoreDataset,
    pub params: BdpParams,
    pub hp: Hyperparameters,
}

/// Latent state; `partition.params` holds the cluster means μ_c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdpState {
    pub partition: Partition,
    pub sigma2: f64,
    pub gamma: f64,
    pub iteration: u64,
}

impl BdpState {
    pub fn k(&self) -> usize {
        self.partition.k()
    }

    /// Whether `gene` sits in a cluster with mean exactly zero.
    pub fn is_null(&self, gene: usize) -> bool {
        self.partition.param_of(gene) == 0.0
    }
}

/// p0 δ₀ + (1 − p0) N(0, slab_var).
#[derive(Debug, Clone, Copy)]
pub struct PointMassSlab {
    pub p0: f64,
    pub slab_var: f64,
}

impl BaseMeasure for PointMassSlab {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.p0 {
            0.0
        } else {
            self.slab_var.sqrt() * std_normal(rng)
        }
    }
}

/// N(z_i; μ, σ²) with σ² fixed for the duration of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct MeanLik<'a> {
    pub z: &'a [f64],
    pub sigma2: f64,
}

impl ClusterLikelihood for MeanLik<'_> {
    /// (count, Σz, Σz²)
    type Stats = (usize, f64, f64);

    fn n_items(&self) -> usize {
        self.z.len()
    }

    #[inline]
    fn log_lik(&self, item: usize, mu: f64) -> f64 {
        normal_logpdf(self.z[item], mu, self.sigma2)
    }

    fn sufficient_stats(&self, members: &[usize]) -> (usize, f64, f64) {
        members.iter().fold((0, 0.0, 0.0), |(n, s, ss), &i| {
            (n + 1, s + self.z[i], ss + self.z[i] * self.z[i])
        })
    }

    fn stats_log_lik(&self, &(n, s, ss): &(usize, f64, f64), mu: f64) -> f64 {
        let v = self.sigma2.max(VARIANCE_FLOOR);
        let n = n as f64;
        -0.5 * n * (LN_2PI + v.ln()) - (ss - 2.0 * mu * s + n * mu * mu) / (2.0 * v)
    }
}

/// Posterior of one cluster mean given its members: probability of the
/// slab, and the slab's conditional normal mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanPosterior {
    pub slab_prob: f64,
    pub slab_mean: f64,
    pub slab_var: f64,
}

/// Exact posterior of μ for a cluster with `n` members summing to `sum`.
pub fn mean_posterior(n: usize, sum: f64, sigma2: f64, params: &BdpParams) -> MeanPosterior {
    let n = n as f64;
    let tau2 = params.slab_var;
    let precision = n / sigma2 + 1.0 / tau2;
    let slab_mean = (sum / sigma2) / precision;
    let slab_var = 1.0 / precision;
    // log Bayes factor of slab against the point mass
    let log_bf = 0.5 * (sigma2 / (sigma2 + n * tau2)).ln() + sum * sum * tau2 / (2.0 * sigma2 * (sigma2 + n * tau2));
    let log_odds = (1.0 - params.p0).ln() - params.p0.ln() + log_bf;
    let slab_prob = 1.0 / (1.0 + (-log_odds).exp());
    MeanPosterior {
        slab_prob,
        slab_mean,
        slab_var,
    }
}

impl BdpModel {
    pub fn new(dataset: ZScoreDataset, params: BdpParams, hp: Hyperparameters) -> Result<Self, ModelError> {
        params.validate()?;
        hp.validate()?;
        Ok(Self { dataset, params, hp })
    }

    fn base(&self) -> PointMassSlab {
        PointMassSlab {
            p0: self.params.p0,
            slab_var: self.params.slab_var,
        }
    }

    /// Every gene in one null cluster, σ² at the mean of z².
    pub fn initial_state(&self) -> BdpState {
        let z = self.dataset.z();
        let s2 = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
        BdpState {
            partition: Partition::single(z.len(), 0.0),
            sigma2: s2.max(1e-6),
            gamma: self.hp.gamma_location.exp(),
            iteration: 0,
        }
    }

    pub fn update_means<R: Rng + ?Sized>(&self, state: &mut BdpState, rng: &mut R) {
        let z = self.dataset.z();
        for (c, members) in state.partition.members().iter().enumerate() {
            let sum: f64 = members.iter().map(|&i| z[i]).sum();
            let post = mean_posterior(members.len(), sum, state.sigma2, &self.params);
            state.partition.params[c] = if rng.random::<f64>() < post.slab_prob {
                post.slab_mean + post.slab_var.sqrt() * std_normal(rng)
            } else {
                0.0
            };
        }
    }

    pub fn update_sigma2<R: Rng + ?Sized>(&self, state: &mut BdpState, rng: &mut R) {
        let z = self.dataset.z();
        let ss: f64 = z
            .iter()
            .enumerate()
            .map(|(i, v)| (v - state.partition.param_of(i)).powi(2))
            .sum();
        let shape = self.params.sigma_shape + z.len() as f64 / 2.0;
        let scale = self.params.sigma_scale + ss / 2.0;
        state.sigma2 = sample_inverse_gamma(shape, scale, rng).max(VARIANCE_FLOOR);
    }

    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut BdpState,
        order: ScanOrder,
        rng: &mut R,
    ) -> Result<(), ModelError> {
        let lik = MeanLik {
            z: self.dataset.z(),
            sigma2: state.sigma2,
        };
        neal8_sweep(
            &mut state.partition,
            state.gamma,
            &lik,
            &self.base(),
            self.hp.aux_components,
            order,
            rng,
        )?;
        self.update_means(state, rng);
        self.update_sigma2(state, rng);
        state.gamma = update_gamma(
            state.gamma,
            state.partition.k(),
            state.partition.len(),
            &LogNormal {
                location: self.hp.gamma_location,
                scale: self.hp.gamma_scale,
            },
            self.hp.gamma_step,
            rng,
        );
        state.partition.check()?;
        state.iteration += 1;
        Ok(())
    }

    pub fn sample(
        &self,
        cfg: &ChainConfig,
        rng: &mut ChainRng,
        keep: impl FnMut(&BdpState),
        progress: Option<Progress<'_>>,
    ) -> Result<(), ModelError> {
        cfg.validate()?;
        let order = if cfg.random_scan {
            ScanOrder::Random
        } else {
            ScanOrder::Fixed
        };
        let mut state = self.initial_state();
        drive(cfg, &mut state, |s, _| self.sweep(s, order, rng), keep, progress)
    }
}

pub fn run_bdp(model: &BdpModel, cfg: &ChainConfig) -> Result<Vec<BdpState>, ModelError> {
    let mut chain = Vec::with_capacity(cfg.retained_count() as usize);
    let mut rng = stream_rng(cfg.seed, 0);
    model.sample(cfg, &mut rng, |s| chain.push(s.clone()), None)?;
    Ok(chain)
}

/// v_i = 1 − (fraction of retained states with gene i in a zero-mean cluster).
pub fn bdp_v(chain: &[BdpState]) -> Result<Vec<f64>, BdpError> {
    let first = chain.first().ok_or(BdpError::EmptyChain)?;
    let n = first.partition.len();
    let mut null_count = vec![0u64; n];
    for state in chain {
        for (g, count) in null_count.iter_mut().enumerate() {
            if state.is_null(g) {
                *count += 1;
            }
        }
    }
    let b = chain.len() as f64;
    Ok(null_count.iter().map(|&c| 1.0 - c as f64 / b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with(params: Vec<f64>, assignments: Vec<usize>) -> BdpState {
        BdpState {
            partition: Partition { assignments, params },
            sigma2: 1.0,
            gamma: 1.0,
            iteration: 0,
        }
    }

    #[test]
    fn v_from_null_indicators() {
        // gene 0 null in iterations 1, 2, 4
        let chain = vec![
            state_with(vec![0.0, 2.0], vec![0, 1]),
            state_with(vec![0.0, 2.0], vec![0, 1]),
            state_with(vec![1.5, 2.0], vec![0, 1]),
            state_with(vec![0.0, 2.0], vec![0, 1]),
        ];
        let v = bdp_v(&chain).unwrap();
        assert_eq!(v, vec![0.25, 1.0]);
        assert_eq!(bdp_v(&[]), Err(BdpError::EmptyChain));
    }

    #[test]
    fn v_is_label_invariant() {
        let a = vec![state_with(vec![0.0, 2.0], vec![0, 1, 1])];
        let b = vec![state_with(vec![2.0, 0.0], vec![1, 0, 0])];
        assert_eq!(bdp_v(&a).unwrap(), bdp_v(&b).unwrap());
    }

    #[test]
    fn all_zero_data_stays_null() {
        let ds = ZScoreDataset::from_values(vec![0.0; 40]).unwrap();
        let m = BdpModel::new(ds, BdpParams::default(), Hyperparameters::default()).unwrap();
        let cfg = ChainConfig {
            iterations: 400,
            burn_in: 100,
            thin: 1,
            seed: 2,
            random_scan: false,
        };
        let chain = run_bdp(&m, &cfg).unwrap();
        let v = bdp_v(&chain).unwrap();
        assert!(v.iter().all(|&x| x < 0.05), "{v:?}");
    }

    #[test]
    fn strong_point_mass_absorbs_null_data() {
        let z: Vec<f64> = (0..60).map(|i| ((i * 37) % 23) as f64 / 11.0 - 1.0).collect();
        let ds = ZScoreDataset::from_values(z).unwrap();
        let params = BdpParams {
            p0: 0.999,
            ..Default::default()
        };
        let m = BdpModel::new(ds, params, Hyperparameters::default()).unwrap();
        let cfg = ChainConfig {
            iterations: 600,
            burn_in: 200,
            thin: 1,
            seed: 5,
            random_scan: false,
        };
        let v = bdp_v(&run_bdp(&m, &cfg).unwrap()).unwrap();
        let mean_v = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean_v < 0.05, "{mean_v}");
    }

    #[test]
    fn slab_probability_grows_with_signal() {
        let p = BdpParams::default();
        let weak = mean_posterior(5, 0.1, 1.0, &p);
        let strong = mean_posterior(5, 15.0, 1.0, &p);
        assert!(weak.slab_prob < 0.2);
        assert!(strong.slab_prob > 0.999);
        assert!((strong.slab_mean - 15.0 / (5.0 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_p0() {
        let ds = ZScoreDataset::from_values(vec![0.0, 1.0]).unwrap();
        let params = BdpParams {
            p0: 1.0,
            ..Default::default()
        };
        assert!(BdpModel::new(ds, params, Hyperparameters::default()).is_err());
    }
}
