//! Dirichlet-process mixture machinery that does not depend on the data
//! model: Chinese-restaurant predictive weights, the auxiliary-component
//! assignment sweep for non-conjugate base measures, random-walk updates of
//! cluster parameters, and the concentration update.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::data::Partition;
use crate::stats::{acceptance_probability, ln_gamma, normal_logpdf, sample_log_categorical, std_normal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpmError {
    #[error("concentration must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("log-likelihood of item {item} is not finite at parameter {param}")]
    LikelihoodNonFinite { item: usize, param: f64 },
}

/// Per-item likelihood as a function of a scalar cluster parameter.
pub trait ClusterLikelihood {
    /// Summary of a cluster's members sufficient to evaluate their joint likelihood.
    type Stats;

    fn n_items(&self) -> usize;

    fn log_lik(&self, item: usize, param: f64) -> f64;

    fn sufficient_stats(&self, members: &[usize]) -> Self::Stats;

    /// Joint log-likelihood of the members summarized by `stats`.
    fn stats_log_lik(&self, stats: &Self::Stats, param: f64) -> f64;
}

/// Base measure of the Dirichlet process.
pub trait BaseMeasure {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

/// Log-normal distribution over positive cluster parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormal {
    pub location: f64,
    pub scale: f64,
}

impl LogNormal {
    /// Density of log x, i.e. the log-normal density times the Jacobian x.
    pub fn log_density_of_log(&self, log_x: f64) -> f64 {
        normal_logpdf(log_x, self.location, self.scale * self.scale)
    }
}

impl BaseMeasure for LogNormal {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        (self.location + self.scale * std_normal(rng)).exp()
    }
}

/// Likelihood that ignores the data.
#[derive(Debug, Clone, Copy)]
pub struct FlatLikelihood(pub usize);

impl ClusterLikelihood for FlatLikelihood {
    type Stats = ();

    fn n_items(&self) -> usize {
        self.0
    }

    fn log_lik(&self, _item: usize, _param: f64) -> f64 {
        0.0
    }

    fn sufficient_stats(&self, _members: &[usize]) {}

    fn stats_log_lik(&self, _stats: &(), _param: f64) -> f64 {
        0.0
    }
}

/// Normalized predictive assignment probabilities for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpWeights {
    /// One weight per existing cluster, proportional to its size.
    pub existing: Vec<f64>,
    /// Total weight of opening a new cluster, proportional to γ.
    pub new: f64,
}

/// Predictive weights of the Chinese restaurant process given the sizes of
/// the existing clusters (the item being assigned excluded).
pub fn crp_weights(sizes: &[usize], gamma: f64) -> Result<CrpWeights, DpmError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(DpmError::NonPositiveGamma(gamma));
    }
    let total = sizes.iter().sum::<usize>() as f64 + gamma;
    Ok(CrpWeights {
        existing: sizes.iter().map(|&n| n as f64 / total).collect(),
        new: gamma / total,
    })
}

/// Log probability of a partition with the given cluster sizes under the CRP:
/// γ^K ∏(N_c − 1)! Γ(γ) / Γ(γ + N).
pub fn crp_log_partition_prob(sizes: &[usize], gamma: f64) -> f64 {
    let n: usize = sizes.iter().sum();
    let k = sizes.len() as f64;
    let fact: f64 = sizes.iter().map(|&s| ln_gamma(s as f64)).sum();
    k * gamma.ln() + fact + ln_gamma(gamma) - ln_gamma(gamma + n as f64)
}

/// Visiting order for the assignment sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanOrder {
    #[default]
    Fixed,
    Random,
}

/// Reassign every item once with the auxiliary-component Gibbs update for
/// non-conjugate Dirichlet-process mixtures.
///
/// For each item the current cluster loses the item. If that leaves it empty
/// the cluster is deleted (the highest label moves into the gap) and its
/// parameter becomes the first auxiliary value; the remaining auxiliary values
/// are fresh draws from `base`. The new label is drawn with weight
/// `N_c · L(param_c)` for an existing cluster and `(γ / aux) · L(aux_a)` for
/// each auxiliary value.
#[allow(clippy::too_many_arguments)]
pub fn neal8_sweep<L, B, R>(
    partition: &mut Partition,
    gamma: f64,
    lik: &L,
    base: &B,
    aux: usize,
    order: ScanOrder,
    rng: &mut R,
) -> Result<(), DpmError>
where
    L: ClusterLikelihood + ?Sized,
    B: BaseMeasure + ?Sized,
    R: Rng + ?Sized,
{
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(DpmError::NonPositiveGamma(gamma));
    }
    let aux = aux.max(1);
    let n = partition.len();
    let mut visit: Vec<usize> = (0..n).collect();
    if order == ScanOrder::Random {
        visit.shuffle(rng);
    }
    let mut sizes = partition.sizes();
    let mut aux_params = vec![0.0; aux];
    let mut log_w = Vec::with_capacity(partition.k() + aux);
    let log_new = (gamma / aux as f64).ln();

    for &j in &visit {
        let c = partition.assignments[j];
        sizes[c] -= 1;
        if sizes[c] == 0 {
            aux_params[0] = partition.params[c];
            for a in aux_params.iter_mut().skip(1) {
                *a = base.sample(rng);
            }
            remove_cluster(partition, &mut sizes, c);
        } else {
            for a in aux_params.iter_mut() {
                *a = base.sample(rng);
            }
        }

        log_w.clear();
        for (&size, &param) in sizes.iter().zip(&partition.params) {
            let ll = checked_log_lik(lik, j, param)?;
            log_w.push((size as f64).ln() + ll);
        }
        for &param in &aux_params {
            let ll = checked_log_lik(lik, j, param)?;
            log_w.push(log_new + ll);
        }

        let k = partition.k();
        let pick = sample_log_categorical(&log_w, rng);
        if pick < k {
            partition.assignments[j] = pick;
            sizes[pick] += 1;
        } else {
            partition.params.push(aux_params[pick - k]);
            sizes.push(1);
            partition.assignments[j] = k;
        }
    }
    Ok(())
}

fn checked_log_lik<L: ClusterLikelihood + ?Sized>(lik: &L, item: usize, param: f64) -> Result<f64, DpmError> {
    let ll = lik.log_lik(item, param);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(DpmError::LikelihoodNonFinite { item, param })
    }
}

/// Delete empty cluster `c`, moving the highest label into its place.
fn remove_cluster(partition: &mut Partition, sizes: &mut Vec<usize>, c: usize) {
    let last = partition.params.len() - 1;
    if c != last {
        partition.params[c] = partition.params[last];
        sizes[c] = sizes[last];
        for a in partition.assignments.iter_mut() {
            if *a == last {
                *a = c;
            }
        }
    }
    partition.params.pop();
    sizes.pop();
}

/// Random-walk Metropolis on the log of every cluster parameter, targeting
/// `prior(param) · ∏_{members} L(param)`.
///
/// Returns the number of accepted proposals.
pub fn update_cluster_params<L, R>(
    partition: &mut Partition,
    lik: &L,
    prior: &LogNormal,
    step: f64,
    repeats: usize,
    rng: &mut R,
) -> Result<usize, DpmError>
where
    L: ClusterLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let mut accepted = 0;
    for (c, members) in partition.members().iter().enumerate() {
        let stats = lik.sufficient_stats(members);
        let target = |log_p: f64| prior.log_density_of_log(log_p) + lik.stats_log_lik(&stats, log_p.exp());
        let mut log_p = partition.params[c].ln();
        let mut current = target(log_p);
        if !current.is_finite() {
            return Err(DpmError::LikelihoodNonFinite {
                item: members[0],
                param: partition.params[c],
            });
        }
        for _ in 0..repeats {
            let proposal = log_p + step * std_normal(rng);
            let proposed = target(proposal);
            if rng.random::<f64>() < acceptance_probability(current, proposed) {
                log_p = proposal;
                current = proposed;
                accepted += 1;
            }
        }
        partition.params[c] = log_p.exp();
    }
    Ok(accepted)
}

/// Log target of log γ: log-normal prior (on the log scale) plus the CRP
/// partition likelihood γ^K Γ(γ)/Γ(γ+N). With `n == 0` only the prior remains.
pub fn gamma_log_target(log_gamma: f64, k: usize, n: usize, prior: &LogNormal) -> f64 {
    let g = log_gamma.exp();
    let partition = if n == 0 {
        0.0
    } else {
        k as f64 * log_gamma + ln_gamma(g) - ln_gamma(g + n as f64)
    };
    prior.log_density_of_log(log_gamma) + partition
}

/// One random-walk Metropolis step on log γ given K clusters over N items.
pub fn update_gamma<R: Rng + ?Sized>(gamma: f64, k: usize, n: usize, prior: &LogNormal, step: f64, rng: &mut R) -> f64 {
    let log_g = gamma.ln();
    let proposal = log_g + step * std_normal(rng);
    let a = acceptance_probability(
        gamma_log_target(log_g, k, n, prior),
        gamma_log_target(proposal, k, n, prior),
    );
    if rng.random::<f64>() < a {
        proposal.exp()
    } else {
        gamma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::stats::zero_mean_normal_logpdf;

    struct ScaleLik(Vec<f64>);

    impl ClusterLikelihood for ScaleLik {
        type Stats = Vec<usize>;
        fn n_items(&self) -> usize {
            self.0.len()
        }
        fn log_lik(&self, item: usize, param: f64) -> f64 {
            zero_mean_normal_logpdf(self.0[item], param)
        }
        fn sufficient_stats(&self, members: &[usize]) -> Vec<usize> {
            members.to_vec()
        }
        fn stats_log_lik(&self, stats: &Vec<usize>, param: f64) -> f64 {
            stats.iter().map(|&i| self.log_lik(i, param)).sum()
        }
    }

    struct Fixed(f64);
    impl BaseMeasure for Fixed {
        fn sample<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
            self.0
        }
    }

    struct Broken;
    impl ClusterLikelihood for Broken {
        type Stats = ();
        fn n_items(&self) -> usize {
            2
        }
        fn log_lik(&self, _: usize, _: f64) -> f64 {
            f64::NAN
        }
        fn sufficient_stats(&self, _: &[usize]) {}
        fn stats_log_lik(&self, _: &(), _: f64) -> f64 {
            f64::NAN
        }
    }

    #[test]
    fn crp_weight_examples() {
        let w = crp_weights(&[2, 1], 1.0).unwrap();
        assert_eq!(w.existing, vec![0.5, 0.25]);
        assert_eq!(w.new, 0.25);
        let w = crp_weights(&[], 2.0).unwrap();
        assert_eq!(w.new, 1.0);
        let w = crp_weights(&[5], 0.5).unwrap();
        assert!((w.existing[0] - 5.0 / 5.5).abs() < 1e-15);
        assert!((w.new - 0.5 / 5.5).abs() < 1e-15);
        assert_eq!(crp_weights(&[1], 0.0), Err(DpmError::NonPositiveGamma(0.0)));
    }

    #[test]
    fn two_item_partition_likelihoods() {
        for g in [0.1, 1.0, 7.5] {
            let together = crp_log_partition_prob(&[2], g).exp();
            let apart = crp_log_partition_prob(&[1, 1], g).exp();
            assert!((together - 1.0 / (g + 1.0)).abs() < 1e-12);
            assert!((apart - g / (g + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_item_stays_alone() {
        let mut p = Partition::single(1, 1.0);
        let mut rng = stream_rng(1, 0);
        let lik = ScaleLik(vec![0.3]);
        let base = LogNormal {
            location: -3.0,
            scale: 4.0,
        };
        for _ in 0..50 {
            neal8_sweep(&mut p, 0.7, &lik, &base, 3, ScanOrder::Fixed, &mut rng).unwrap();
            assert_eq!(p.assignments, vec![0]);
            assert_eq!(p.k(), 1);
        }
    }

    #[test]
    fn sweep_preserves_invariants() {
        let z: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) / 4.0).collect();
        let lik = ScaleLik(z);
        let base = LogNormal {
            location: -1.0,
            scale: 2.0,
        };
        let mut p = Partition::single(40, 1.0);
        let mut rng = stream_rng(5, 0);
        for s in 0..200 {
            let order = if s % 2 == 0 {
                ScanOrder::Fixed
            } else {
                ScanOrder::Random
            };
            neal8_sweep(&mut p, 2.0, &lik, &base, 2, order, &mut rng).unwrap();
            p.check().unwrap();
        }
    }

    #[test]
    fn non_finite_likelihood_is_reported() {
        let mut p = Partition::single(2, 1.0);
        let mut rng = stream_rng(1, 0);
        let err = neal8_sweep(&mut p, 1.0, &Broken, &Fixed(1.0), 1, ScanOrder::Fixed, &mut rng);
        assert!(matches!(err, Err(DpmError::LikelihoodNonFinite { .. })));
    }

    #[test]
    fn removing_middle_cluster_relabels_last() {
        let mut p = Partition {
            assignments: vec![0, 1, 2, 2],
            params: vec![1.0, 2.0, 3.0],
        };
        let mut sizes = vec![1, 0, 2];
        p.assignments[1] = usize::MAX;
        remove_cluster(&mut p, &mut sizes, 1);
        assert_eq!(p.params, vec![1.0, 3.0]);
        assert_eq!(p.assignments, vec![0, usize::MAX, 1, 1]);
        assert_eq!(sizes, vec![1, 2]);
    }

    #[test]
    fn metropolis_self_proposal_always_accepted() {
        assert_eq!(acceptance_probability(-3.2, -3.2), 1.0);
    }

    #[test]
    fn flat_likelihood_phi_matches_prior() {
        let prior = LogNormal {
            location: -3.0,
            scale: 4.0,
        };
        let mut p = Partition::single(3, 1.0);
        let mut rng = stream_rng(9, 0);
        let n = 200_000;
        let mut logs = Vec::with_capacity(n);
        for _ in 0..n {
            update_cluster_params(&mut p, &FlatLikelihood(3), &prior, 2.0, 1, &mut rng).unwrap();
            logs.push(p.params[0].ln());
        }
        let mean = logs.iter().sum::<f64>() / n as f64;
        let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean + 3.0).abs() < 0.15, "mean {mean}");
        assert!((sd - 4.0).abs() < 0.15, "sd {sd}");
    }

    #[test]
    fn prior_only_gamma_matches_prior_moments() {
        let prior = LogNormal {
            location: -3.0,
            scale: 2.0,
        };
        let mut rng = stream_rng(21, 0);
        let mut g = 0.05;
        let n = 300_000;
        let mut logs = Vec::with_capacity(n);
        for _ in 0..n {
            g = update_gamma(g, 0, 0, &prior, 1.5, &mut rng);
            logs.push(g.ln());
        }
        let mean = logs.iter().sum::<f64>() / n as f64;
        let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean + 3.0).abs() < 0.06, "mean {mean}");
        assert!((sd - 2.0).abs() < 0.06, "sd {sd}");
    }
}
