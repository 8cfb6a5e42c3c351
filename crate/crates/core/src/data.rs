//! Domain types shared by every sampler: datasets, hyperparameters, chain
//! configuration and the chain state itself.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::stats::std_normal_quantile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("non-finite value for gene '{gene}' at sample {sample}")]
    NonFiniteValue { gene: String, sample: usize },
    #[error("gene '{gene}' has no observations in the {group} group")]
    DegenerateGroup { gene: String, group: &'static str },
    #[error("duplicate gene id '{0}'")]
    DuplicateGeneId(String),
    #[error("row for gene '{gene}' has {found} values, expected {expected}")]
    RaggedRow {
        gene: String,
        found: usize,
        expected: usize,
    },
    #[error("{found} labels given for {expected} samples")]
    LabelCount { found: usize, expected: usize },
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(i64),
    #[error("dataset needs at least {min} genes, found {found}")]
    TooFewGenes { min: usize, found: usize },
    #[error("{0} gene ids given for {1} values")]
    IdCount(usize, usize),
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid chain state: {0}")]
    InvalidState(String),
}

fn check_unique(ids: &[String]) -> Result<(), DataError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(DataError::DuplicateGeneId(id.clone()));
        }
    }
    Ok(())
}

/// Case/control expression values, one row per gene.
///
/// All genes share the sample layout given by `labels` (`false` = control,
/// `true` = case).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionDataset {
    gene_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl ExpressionDataset {
    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// Number of control observations per gene.
    pub fn n_control(&self) -> usize {
        self.labels.iter().filter(|l| !**l).count()
    }

    /// Number of case observations per gene.
    pub fn n_case(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    pub fn row(&self, gene: usize) -> &[f64] {
        &self.values[gene]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn control(&self, gene: usize) -> impl Iterator<Item = f64> + '_ {
        self.values[gene]
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| !**l)
            .map(|(v, _)| *v)
    }

    pub fn case(&self, gene: usize) -> impl Iterator<Item = f64> + '_ {
        self.values[gene]
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l)
            .map(|(v, _)| *v)
    }
}

impl ExpressionDataset {
    /// Per-gene two-sample pooled-variance t statistic (case minus control)
    /// mapped to the standard-normal scale through its t distribution.
    pub fn z_scores(&self) -> Result<ZScoreDataset, DataError> {
        let n0 = self.n_control() as f64;
        let n1 = self.n_case() as f64;
        let dof = n0 + n1 - 2.0;
        if dof < 1.0 {
            return Err(DataError::InvalidConfig("z-scores need at least three samples".into()));
        }
        let t_dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
        let z = (0..self.n_genes())
            .map(|g| {
                let m0 = self.control(g).sum::<f64>() / n0;
                let m1 = self.case(g).sum::<f64>() / n1;
                let ss = self.control(g).map(|y| (y - m0).powi(2)).sum::<f64>()
                    + self.case(g).map(|y| (y - m1).powi(2)).sum::<f64>();
                let se = (ss / dof * (1.0 / n0 + 1.0 / n1)).sqrt();
                let diff = m1 - m0;
                let t = if se > 0.0 {
                    diff / se
                } else if diff == 0.0 {
                    0.0
                } else {
                    diff.signum() * f64::INFINITY
                };
                // upper tail keeps precision for large positive t
                let upper = t_dist.sf(t);
                if upper < 0.5 {
                    -std_normal_quantile(upper.max(f64::MIN_POSITIVE))
                } else {
                    std_normal_quantile(t_dist.cdf(t).max(f64::MIN_POSITIVE))
                }
            })
            .collect();
        ZScoreDataset::with_min_len(self.gene_ids.clone(), z, 1)
    }
}

/// Build an [`ExpressionDataset`] from a gene × sample table and per-sample
/// 0/1 labels.
pub fn validate_expression(
    gene_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    labels: &[u8],
) -> Result<ExpressionDataset, DataError> {
    if gene_ids.len() != values.len() {
        return Err(DataError::IdCount(gene_ids.len(), values.len()));
    }
    let labels = labels
        .iter()
        .map(|&l| match l {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(DataError::InvalidLabel(other as i64)),
        })
        .collect::<Result<Vec<bool>, _>>()?;
    for (id, row) in gene_ids.iter().zip(&values) {
        if row.len() != labels.len() {
            return Err(DataError::RaggedRow {
                gene: id.clone(),
                found: row.len(),
                expected: labels.len(),
            });
        }
    }
    if gene_ids.is_empty() {
        return Err(DataError::TooFewGenes { min: 1, found: 0 });
    }
    check_unique(&gene_ids)?;
    for (id, row) in gene_ids.iter().zip(&values) {
        if let Some(sample) = row.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue {
                gene: id.clone(),
                sample,
            });
        }
    }
    // Shared layout: a missing group is missing for every gene.
    let first = &gene_ids[0];
    if !labels.iter().any(|l| !*l) {
        return Err(DataError::DegenerateGroup {
            gene: first.clone(),
            group: "control",
        });
    }
    if !labels.iter().any(|l| *l) {
        return Err(DataError::DegenerateGroup {
            gene: first.clone(),
            group: "case",
        });
    }
    Ok(ExpressionDataset {
        gene_ids,
        values,
        labels,
    })
}

/// One summary statistic per gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreDataset {
    gene_ids: Vec<String>,
    z: Vec<f64>,
}

impl ZScoreDataset {
    pub fn new(gene_ids: Vec<String>, z: Vec<f64>) -> Result<Self, DataError> {
        Self::with_min_len(gene_ids, z, 2)
    }

    /// Like [`ZScoreDataset::new`] but with a custom minimum length; the
    /// samplers themselves accept a single gene.
    pub fn with_min_len(gene_ids: Vec<String>, z: Vec<f64>, min: usize) -> Result<Self, DataError> {
        if gene_ids.len() != z.len() {
            return Err(DataError::IdCount(gene_ids.len(), z.len()));
        }
        if z.len() < min {
            return Err(DataError::TooFewGenes { min, found: z.len() });
        }
        check_unique(&gene_ids)?;
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue {
                gene: gene_ids[i].clone(),
                sample: 0,
            });
        }
        Ok(Self { gene_ids, z })
    }

    /// Dataset with generated ids `g1`, `g2`, ...
    pub fn from_values(z: Vec<f64>) -> Result<Self, DataError> {
        let ids = default_gene_ids(z.len());
        Self::new(ids, z)
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

pub fn default_gene_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("g{i}")).collect()
}

/// Prior and kernel settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Location of the log-normal base measure over cluster variances.
    pub g0_location: f64,
    /// Scale (sd of the log) of the base measure.
    pub g0_scale: f64,
    /// Location of the log-normal prior on the concentration γ.
    pub gamma_location: f64,
    /// Scale of the log-normal prior on γ.
    pub gamma_scale: f64,
    /// Prior sd of the per-gene intercepts α.
    pub kappa: f64,
    /// Number of auxiliary components offered to each gene per sweep.
    pub aux_components: usize,
    /// Random-walk step on log φ².
    pub mh_step: f64,
    /// Metropolis repetitions per cluster variance per sweep.
    pub mh_repeats: usize,
    /// Random-walk step on log γ.
    pub gamma_step: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            g0_location: -3.0,
            g0_scale: 4.0,
            gamma_location: -3.0,
            gamma_scale: 2.0,
            kappa: 1e3,
            aux_components: 3,
            mh_step: 0.5,
            mh_repeats: 3,
            gamma_step: 0.5,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), DataError> {
        let positive = [
            ("g0_scale", self.g0_scale),
            ("gamma_scale", self.gamma_scale),
            ("kappa", self.kappa),
            ("mh_step", self.mh_step),
            ("gamma_step", self.gamma_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(DataError::InvalidHyperparameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("g0_location", self.g0_location),
            ("gamma_location", self.gamma_location),
        ] {
            if !v.is_finite() {
                return Err(DataError::InvalidHyperparameter(format!("{name} must be finite")));
            }
        }
        if self.aux_components == 0 {
            return Err(DataError::InvalidHyperparameter(
                "aux_components must be at least 1".into(),
            ));
        }
        if self.mh_repeats == 0 {
            return Err(DataError::InvalidHyperparameter("mh_repeats must be at least 1".into()));
        }
        Ok(())
    }
}

/// Length, retention and seed of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    /// Visit genes in a fresh random order each sweep instead of index order.
    #[serde(default)]
    pub random_scan: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burn_in: 1000,
            thin: 1,
            seed: 1,
            random_scan: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.burn_in >= self.iterations {
            return Err(DataError::InvalidConfig(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(DataError::InvalidConfig("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether 1-based iteration `it` is kept.
    pub fn retains(&self, it: u64) -> bool {
        it > self.burn_in && (it - self.burn_in - 1).is_multiple_of(self.thin)
    }

    pub fn retained_count(&self) -> u64 {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Cluster labels plus one parameter per cluster.
///
/// Labels are 0-based and gap-free: every label in `0..k()` has at least one
/// member and `params.len() == k()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<usize>,
    pub params: Vec<f64>,
}

impl Partition {
    /// Everything in one cluster with parameter `param`.
    pub fn single(n: usize, param: f64) -> Self {
        Self {
            assignments: vec![0; n],
            params: vec![param],
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Number of clusters.
    pub fn k(&self) -> usize {
        self.params.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignments.iter().enumerate() {
            members[c].push(i);
        }
        members
    }

    /// Parameter of the cluster holding `item`.
    pub fn param_of(&self, item: usize) -> f64 {
        self.params[self.assignments[item]]
    }

    pub fn check(&self) -> Result<(), DataError> {
        let k = self.k();
        if self.assignments.is_empty() {
            return if k == 0 {
                Ok(())
            } else {
                Err(DataError::InvalidState("clusters without members".into()))
            };
        }
        let mut seen = vec![false; k];
        for &c in &self.assignments {
            if c >= k {
                return Err(DataError::InvalidState(format!(
                    "label {c} out of range for {k} clusters"
                )));
            }
            seen[c] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(DataError::InvalidState(format!("cluster {c} is empty")));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(DataError::InvalidState("non-finite cluster parameter".into()));
        }
        Ok(())
    }
}

/// All latent variables of one sampler iteration.
///
/// `partition.params` holds the cluster variances φ². The gene-level vectors
/// `alpha`, `beta` and `sigma2` are empty when the chain runs on summary
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub partition: Partition,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub gamma: f64,
    pub iteration: u64,
}

impl ChainState {
    pub fn phi2(&self) -> &[f64] {
        &self.partition.params
    }

    pub fn k(&self) -> usize {
        self.partition.k()
    }

    pub fn check(&self) -> Result<(), DataError> {
        self.partition.check()?;
        if self.phi2().iter().any(|p| *p <= 0.0) {
            return Err(DataError::InvalidState("non-positive cluster variance".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(DataError::InvalidState(format!("gamma = {}", self.gamma)));
        }
        if self.sigma2.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(DataError::InvalidState("non-positive gene variance".into()));
        }
        Ok(())
    }
}

/// Quantile of Log-N(location, scale²): exp(location + scale·Φ⁻¹(p)).
pub fn lognormal_quantile(location: f64, scale: f64, p: f64) -> Result<f64, DataError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DataError::InvalidProbability(p));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DataError::InvalidHyperparameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    Ok((location + scale * std_normal_quantile(p)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        default_gene_ids(n)
    }

    #[test]
    fn expression_group_counts() {
        let ds = validate_expression(
            ids(2),
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![0.5, 0.1, 0.2, 0.3]],
            &[0, 0, 1, 1],
        )
        .unwrap();
        assert_eq!(ds.n_control(), 2);
        assert_eq!(ds.n_case(), 2);
        assert_eq!(ds.case(0).collect::<Vec<_>>(), vec![3.0, 4.0]);
    }

    #[test]
    fn expression_rejects_single_group() {
        let err = validate_expression(ids(1), vec![vec![1.0, 2.0, 3.0, 4.0]], &[0, 0, 0, 0]);
        assert!(matches!(err, Err(DataError::DegenerateGroup { .. })));
    }

    #[test]
    fn expression_rejects_nan() {
        let err = validate_expression(ids(1), vec![vec![1.0, f64::NAN, 3.0, 4.0]], &[0, 0, 1, 1]);
        assert!(matches!(err, Err(DataError::NonFiniteValue { sample: 1, .. })));
    }

    #[test]
    fn expression_rejects_duplicates_and_ragged() {
        let dup = validate_expression(
            vec!["a".into(), "a".into()],
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            &[0, 1],
        );
        assert_eq!(dup, Err(DataError::DuplicateGeneId("a".into())));
        let ragged = validate_expression(ids(1), vec![vec![1.0]], &[0, 1]);
        assert!(matches!(ragged, Err(DataError::RaggedRow { .. })));
    }

    #[test]
    fn t_statistic_to_z() {
        let ds = validate_expression(
            ids(3),
            vec![
                vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0],
                vec![1.0, 2.0, 3.0, 11.0, 12.0, 13.0],
                vec![11.0, 12.0, 13.0, 1.0, 2.0, 3.0],
            ],
            &[0, 0, 0, 1, 1, 1],
        )
        .unwrap();
        let z = ds.z_scores().unwrap();
        assert_eq!(z.z()[0], 0.0);
        // t = 10 / sqrt(2/3) on 4 degrees of freedom
        assert!(z.z()[1] > 3.0);
        assert!((z.z()[1] + z.z()[2]).abs() < 1e-9);
    }

    #[test]
    fn zscores_need_two_genes() {
        assert!(ZScoreDataset::from_values(vec![1.0]).is_err());
        assert!(ZScoreDataset::from_values(vec![1.0, f64::INFINITY]).is_err());
        assert!(ZScoreDataset::from_values(vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn quantiles_of_default_base_measure() {
        let lo = lognormal_quantile(-3.0, 4.0, 0.025).unwrap();
        let hi = lognormal_quantile(-3.0, 4.0, 0.975).unwrap();
        assert!((lo / 1.96e-5 - 1.0).abs() < 0.01, "{lo}");
        assert!((hi / 1.26e2 - 1.0).abs() < 0.01, "{hi}");
        assert_eq!(lognormal_quantile(0.0, 1.0, 0.5).unwrap(), 1.0);
        assert_eq!(
            lognormal_quantile(0.0, 1.0, 1.0),
            Err(DataError::InvalidProbability(1.0))
        );
    }

    #[test]
    fn config_retention() {
        let cfg = ChainConfig {
            iterations: 10,
            burn_in: 4,
            thin: 2,
            ..Default::default()
        };
        let kept: Vec<u64> = (1..=10).filter(|&i| cfg.retains(i)).collect();
        assert_eq!(kept, vec![5, 7, 9]);
        assert_eq!(cfg.retained_count(), 3);
        assert!(ChainConfig { burn_in: 10, ..cfg }.validate().is_err());
    }

    #[test]
    fn partition_gap_detected() {
        let p = Partition {
            assignments: vec![0, 2],
            params: vec![1.0, 2.0, 3.0],
        };
        assert!(p.check().is_err());
    }

    fn arb_state() -> impl Strategy<Value = ChainState> {
        (1usize..6, 1usize..12).prop_flat_map(|(k, extra)| {
            let n = k + extra;
            (
                proptest::collection::vec(1e-12f64..1e6, k),
                proptest::collection::vec(0..k, n),
                proptest::collection::vec(-1e3f64..1e3, n),
                1e-6f64..1e3,
            )
                .prop_map(move |(params, mut assignments, beta, gamma)| {
                    for (c, a) in assignments.iter_mut().take(k).enumerate() {
                        *a = c;
                    }
                    ChainState {
                        partition: Partition { assignments, params },
                        alpha: beta.iter().map(|b| b * 0.37).collect(),
                        sigma2: beta.iter().map(|b| b.abs() + 1e-3).collect(),
                        beta,
                        gamma,
                        iteration: 17,
                    }
                })
        })
    }

    proptest! {
        #[test]
        fn chain_state_json_round_trip(state in arb_state()) {
            prop_assert!(state.check().is_ok());
            let text = serde_json::to_string(&state).unwrap();
            let back: ChainState = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, state);
        }

        #[test]
        fn lognormal_quantile_increasing(loc in -10f64..10.0, scale in 0.01f64..5.0,
                                         p in 0.001f64..0.99, dp in 1e-4f64..0.009) {
            let a = lognormal_quantile(loc, scale, p).unwrap();
            let b = lognormal_quantile(loc, scale, p + dp).unwrap();
            prop_assert!(b > a);
        }
    }
}
