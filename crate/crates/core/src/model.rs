//! Relevance-determination samplers.
//!
//! Each gene's effect has a zero-mean normal prior whose variance is shared
//! within a cluster; the cluster variances φ² are draws from a log-normal base
//! measure under a Dirichlet-process prior with concentration γ.
//!
//! * Full data: `y_ijk ~ N(α_i + β_i x_ijk, σ_i²)` with `β_i ~ N(0, φ²_{c_i})`,
//!   flat-in-log prior on σ_i² and `α_i ~ N(0, κ²)`. The clustering layer
//!   sees β_i as its datum.
//! * Reduced data: `z_i ~ N(0, φ²_{c_i})`.
//!
//! One sweep of the full-data sampler updates α, β, σ², then the assignments,
//! the cluster variances and γ. The reduced sampler skips the gene-level steps.

use rand::Rng;
use thiserror::Error;

use crate::chain::{drive, Progress};
use crate::data::{ChainConfig, ChainState, DataError, ExpressionDataset, Hyperparameters, Partition, ZScoreDataset};
use crate::dpm::{neal8_sweep, update_cluster_params, update_gamma, ClusterLikelihood, DpmError, LogNormal, ScanOrder};
use crate::rng::{stream_rng, ChainRng};
use crate::stats::{sample_inverse_gamma, std_normal, zero_mean_normal_logpdf, LN_2PI, VARIANCE_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dpm(#[from] DpmError),
    #[error("all residuals of gene {0} are exactly zero")]
    DegenerateResiduals(usize),
}

/// Zero-mean normal likelihood of one value per item, parameterized by variance.
#[derive(Debug, Clone, Copy)]
pub struct NormalVarianceLik<'a> {
    pub values: &'a [f64],
}

impl ClusterLikelihood for NormalVarianceLik<'_> {
    /// (member count, sum of squares)
    type Stats = (usize, f64);

    fn n_items(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn log_lik(&self, item: usize, phi2: f64) -> f64 {
        zero_mean_normal_logpdf(self.values[item], phi2)
    }

    fn sufficient_stats(&self, members: &[usize]) -> (usize, f64) {
        let ss = members.iter().map(|&i| self.values[i] * self.values[i]).sum();
        (members.len(), ss)
    }

    fn stats_log_lik(&self, &(n, ss): &(usize, f64), phi2: f64) -> f64 {
        let phi2 = phi2.max(VARIANCE_FLOOR);
        -0.5 * n as f64 * (LN_2PI + phi2.ln()) - ss / (2.0 * phi2)
    }
}

fn base_measure(hp: &Hyperparameters) -> LogNormal {
    LogNormal {
        location: hp.g0_location,
        scale: hp.g0_scale,
    }
}

fn gamma_prior(hp: &Hyperparameters) -> LogNormal {
    LogNormal {
        location: hp.gamma_location,
        scale: hp.gamma_scale,
    }
}

fn scan_order(cfg: &ChainConfig) -> ScanOrder {
    if cfg.random_scan {
        ScanOrder::Random
    } else {
        ScanOrder::Fixed
    }
}

/// Clustering steps shared by both data modes: assignments given the values
/// the clusters explain, then cluster variances, then γ.
fn cluster_steps<R: Rng + ?Sized>(
    state: &mut ChainState,
    values: &[f64],
    hp: &Hyperparameters,
    order: ScanOrder,
    rng: &mut R,
) -> Result<(), ModelError> {
    let lik = NormalVarianceLik { values };
    let base = base_measure(hp);
    neal8_sweep(
        &mut state.partition,
        state.gamma,
        &lik,
        &base,
        hp.aux_components,
        order,
        rng,
    )?;
    update_cluster_params(&mut state.partition, &lik, &base, hp.mh_step, hp.mh_repeats, rng)?;
    for p in state.partition.params.iter_mut() {
        *p = p.max(VARIANCE_FLOOR);
    }
    state.gamma = update_gamma(
        state.gamma,
        state.partition.k(),
        state.partition.len(),
        &gamma_prior(hp),
        hp.gamma_step,
        rng,
    );
    state.check()?;
    Ok(())
}

/// Summary-statistic model: `z_i ~ N(0, φ²_{c_i})`.
#[derive(Debug, Clone)]
pub struct ReducedDataModel {
    pub dataset: ZScoreDataset,
    pub hp: Hyperparameters,
}

impl ReducedDataModel {
    pub fn new(dataset: ZScoreDataset, hp: Hyperparameters) -> Result<Self, ModelError> {
        hp.validate()?;
        Ok(Self { dataset, hp })
    }

    pub fn cluster_loglik(&self, gene: usize, phi2: f64) -> f64 {
        zero_mean_normal_logpdf(self.dataset.z()[gene], phi2)
    }

    /// One cluster holding every gene, with φ² at the mean of z².
    pub fn initial_state(&self) -> ChainState {
        let z = self.dataset.z();
        let phi2 = (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).max(VARIANCE_FLOOR);
        ChainState {
            partition: Partition::single(z.len(), phi2),
            alpha: Vec::new(),
            beta: Vec::new(),
            sigma2: Vec::new(),
            gamma: self.hp.gamma_location.exp(),
            iteration: 0,
        }
    }

    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        order: ScanOrder,
        rng: &mut R,
    ) -> Result<(), ModelError> {
        cluster_steps(state, self.dataset.z(), &self.hp, order, rng)?;
        state.iteration += 1;
        Ok(())
    }

    /// Run a chain, passing each retained state to `keep`.
    pub fn sample(
        &self,
        cfg: &ChainConfig,
        rng: &mut ChainRng,
        keep: impl FnMut(&ChainState),
        progress: Option<Progress<'_>>,
    ) -> Result<(), ModelError> {
        cfg.validate()?;
        let order = scan_order(cfg);
        let mut state = self.initial_state();
        drive(cfg, &mut state, |s, _| self.sweep(s, order, rng), keep, progress)
    }
}

/// Run the summary-statistic sampler and collect the retained states.
pub fn run_brd_reduced(model: &ReducedDataModel, cfg: &ChainConfig) -> Result<Vec<ChainState>, ModelError> {
    let mut chain = Vec::with_capacity(cfg.retained_count() as usize);
    let mut rng = stream_rng(cfg.seed, 0);
    model.sample(cfg, &mut rng, |s| chain.push(s.clone()), None)?;
    Ok(chain)
}

/// Full case/control model.
#[derive(Debug, Clone)]
pub struct FullDataModel {
    pub dataset: ExpressionDataset,
    pub hp: Hyperparameters,
}

impl FullDataModel {
    pub fn new(dataset: ExpressionDataset, hp: Hyperparameters) -> Result<Self, ModelError> {
        hp.validate()?;
        Ok(Self { dataset, hp })
    }

    /// log N(β_gene; 0, φ²) at the state's current β.
    pub fn cluster_loglik(&self, gene: usize, phi2: f64, state: &ChainState) -> f64 {
        zero_mean_normal_logpdf(state.beta[gene], phi2)
    }

    /// Least-squares start: α at the control mean, β at the mean difference,
    /// σ² at the pooled residual variance, one cluster with φ² at the
    /// geometric mean of β².
    pub fn initial_state(&self) -> ChainState {
        let ds = &self.dataset;
        let n = ds.n_genes();
        let n0 = ds.n_control() as f64;
        let n1 = ds.n_case() as f64;
        let mut alpha = Vec::with_capacity(n);
        let mut beta = Vec::with_capacity(n);
        let mut sigma2 = Vec::with_capacity(n);
        for g in 0..n {
            let m0 = ds.control(g).sum::<f64>() / n0;
            let m1 = ds.case(g).sum::<f64>() / n1;
            let ss: f64 = ds.control(g).map(|y| (y - m0).powi(2)).sum::<f64>()
                + ds.case(g).map(|y| (y - m1).powi(2)).sum::<f64>();
            let dof = if n0 + n1 > 2.0 { n0 + n1 - 2.0 } else { n0 + n1 };
            alpha.push(m0);
            beta.push(m1 - m0);
            sigma2.push((ss / dof).max(VARIANCE_FLOOR));
        }
        let log_mean = beta.iter().map(|b| (b * b).max(VARIANCE_FLOOR).ln()).sum::<f64>() / n as f64;
        ChainState {
            partition: Partition::single(n, log_mean.exp().max(VARIANCE_FLOOR)),
            alpha,
            beta,
            sigma2,
            gamma: self.hp.gamma_location.exp(),
            iteration: 0,
        }
    }

    /// Draw every α_i from its normal full conditional.
    pub fn update_alpha<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let ds = &self.dataset;
        let n = ds.n_samples() as f64;
        let prior_prec = 1.0 / (self.hp.kappa * self.hp.kappa);
        for g in 0..ds.n_genes() {
            let (mean, var) = alpha_conditional(
                ds.control(g).sum::<f64>() + ds.case(g).map(|y| y - state.beta[g]).sum::<f64>(),
                n,
                state.sigma2[g],
                prior_prec,
            );
            state.alpha[g] = mean + var.sqrt() * std_normal(rng);
        }
    }

    /// Draw every β_i from its normal full conditional given its cluster variance.
    pub fn update_beta<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let ds = &self.dataset;
        let n1 = ds.n_case() as f64;
        for g in 0..ds.n_genes() {
            let phi2 = state.partition.param_of(g);
            let resid: f64 = ds.case(g).map(|y| y - state.alpha[g]).sum();
            let (mean, var) = beta_conditional(resid, n1, state.sigma2[g], phi2);
            state.beta[g] = mean + var.sqrt() * std_normal(rng);
        }
    }

    /// Draw every σ_i² from inverse-gamma(n/2, S/2).
    pub fn update_sigma2<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<(), ModelError> {
        let ds = &self.dataset;
        let n = ds.n_samples() as f64;
        for g in 0..ds.n_genes() {
            let a = state.alpha[g];
            let ab = a + state.beta[g];
            let ss: f64 =
                ds.control(g).map(|y| (y - a).powi(2)).sum::<f64>() + ds.case(g).map(|y| (y - ab).powi(2)).sum::<f64>();
            if ss == 0.0 {
                return Err(ModelError::DegenerateResiduals(g));
            }
            let (shape, scale) = sigma2_conditional(ss, n);
            state.sigma2[g] = sample_inverse_gamma(shape, scale, rng).max(VARIANCE_FLOOR);
        }
        Ok(())
    }

    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        order: ScanOrder,
        rng: &mut R,
    ) -> Result<(), ModelError> {
        self.update_alpha(state, rng);
        self.update_beta(state, rng);
        self.update_sigma2(state, rng)?;
        // β is moved out so the clustering layer can borrow it while mutating the state.
        let beta = std::mem::take(&mut state.beta);
        let res = cluster_steps(state, &beta, &self.hp, order, rng);
        state.beta = beta;
        res?;
        state.iteration += 1;
        Ok(())
    }

    pub fn sample(
        &self,
        cfg: &ChainConfig,
        rng: &mut ChainRng,
        keep: impl FnMut(&ChainState),
        progress: Option<Progress<'_>>,
    ) -> Result<(), ModelError> {
        cfg.validate()?;
        let order = scan_order(cfg);
        let mut state = self.initial_state();
        drive(cfg, &mut state, |s, _| self.sweep(s, order, rng), keep, progress)
    }
}

/// Run the full-data sampler and collect the retained states.
pub fn run_brd_full(model: &FullDataModel, cfg: &ChainConfig) -> Result<Vec<ChainState>, ModelError> {
    let mut chain = Vec::with_capacity(cfg.retained_count() as usize);
    let mut rng = stream_rng(cfg.seed, 0);
    model.sample(cfg, &mut rng, |s| chain.push(s.clone()), None)?;
    Ok(chain)
}

/// Mean and variance of α given the summed β-adjusted observations.
pub fn alpha_conditional(adjusted_sum: f64, n: f64, sigma2: f64, prior_precision: f64) -> (f64, f64) {
    let precision = n / sigma2 + prior_precision;
    ((adjusted_sum / sigma2) / precision, 1.0 / precision)
}

/// Inverse-gamma shape and scale of σ² under p(σ²) ∝ 1/σ², given the
/// residual sum of squares over `n` observations.
pub fn sigma2_conditional(residual_ss: f64, n: f64) -> (f64, f64) {
    (n / 2.0, residual_ss / 2.0)
}

/// Mean and variance of β given the summed case residuals y − α.
pub fn beta_conditional(case_resid_sum: f64, n_case: f64, sigma2: f64, phi2: f64) -> (f64, f64) {
    let phi2 = phi2.max(VARIANCE_FLOOR);
    let precision = n_case / sigma2 + 1.0 / phi2;
    ((case_resid_sum / sigma2) / precision, 1.0 / precision)
}
