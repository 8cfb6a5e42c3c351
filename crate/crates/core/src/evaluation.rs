//! Scoring relevance measures against simulated ground truth and
//! aggregating replicate studies.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::bdp::{BdpModel, BdpParams};
use crate::data::{ChainConfig, Hyperparameters, ZScoreDataset};
use crate::model::{FullDataModel, ModelError, ReducedDataModel};
use crate::relevance::{Measure, PosteriorSummary, RelevanceError, SummaryAccumulator};
use crate::rng::{replicate_rng, ChainRng, StreamRole};
use crate::simulation::{Design, SimData, SimulationError, SimulationSpec};
use crate::stats::mean_and_se;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("truth needs at least one positive and one negative gene")]
    DegenerateTruth,
    #[error("{scores} scores for {truth} truth labels")]
    LengthMismatch { scores: usize, truth: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("unknown method '{0}' (expected brd or bdp)")]
    UnknownMethod(String),
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
}

fn check_inputs(scores: &[f64], truth: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            truth: truth.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(*s));
    }
    let pos = truth.iter().filter(|t| **t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateTruth);
    }
    Ok((pos, neg))
}

/// Positions sorted by descending score, grouped into runs of equal score.
fn descending_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Area under the ROC curve in Mann–Whitney form: the probability that a
/// random positive scores above a random negative, ties counting one half.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64, EvalError> {
    let (pos, neg) = check_inputs(scores, truth)?;
    // twice the Mann-Whitney U, kept integral so the result is exact
    let mut twice_u: u128 = 0;
    let mut neg_below = neg as u128;
    for group in descending_groups(scores) {
        let gp = group.iter().filter(|&&i| truth[i]).count() as u128;
        let gn = group.len() as u128 - gp;
        neg_below -= gn;
        twice_u += 2 * gp * neg_below + gp * gn;
    }
    Ok(twice_u as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// ROC points (false positive rate, true positive rate) over all distinct
/// thresholds, from (0, 0) to (1, 1).
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<Vec<(f64, f64)>, EvalError> {
    let (pos, neg) = check_inputs(scores, truth)?;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for group in descending_groups(scores) {
        for &i in &group {
            if truth[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Relevance determination (full data when available, else z-scores).
    Brd,
    /// Point-mass baseline on z-scores.
    Bdp,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Brd => "brd",
            Method::Bdp => "bdp",
        }
    }

    fn role(&self) -> StreamRole {
        match self {
            Method::Brd => StreamRole::Brd,
            Method::Bdp => StreamRole::Bdp,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s.trim() {
            "brd" => Ok(Method::Brd),
            "bdp" => Ok(Method::Bdp),
            other => Err(EvalError::UnknownMethod(other.to_string())),
        }
    }
}

/// Everything needed to fit either model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub chain: ChainConfig,
    pub hp: Hyperparameters,
    pub bdp: BdpParams,
}

/// Fit `method` to `data` and summarize the chain without storing it.
///
/// The baseline only models z-scores; expression data are converted with
/// per-gene two-sample t statistics first.
pub fn fit_summary(
    data: &SimData,
    method: Method,
    settings: &FitSettings,
    rng: &mut ChainRng,
) -> Result<PosteriorSummary, EvalError> {
    let mut acc = SummaryAccumulator::new(data.n_genes());
    let mut failure = None;
    match (method, data) {
        (Method::Brd, SimData::Z(z)) => {
            let model = ReducedDataModel::new(z.clone(), settings.hp)?;
            model.sample(&settings.chain, rng, |s| record(&mut failure, acc.push_state(s)), None)?;
        }
        (Method::Brd, SimData::Expression(e)) => {
            let model = FullDataModel::new(e.clone(), settings.hp)?;
            model.sample(&settings.chain, rng, |s| record(&mut failure, acc.push_state(s)), None)?;
        }
        (Method::Bdp, data) => {
            let z = match data {
                SimData::Z(z) => z.clone(),
                SimData::Expression(e) => e.z_scores().map_err(ModelError::from)?,
            };
            let model = BdpModel::new(z, settings.bdp, settings.hp)?;
            model.sample(
                &settings.chain,
                rng,
                |s| record(&mut failure, acc.push_bdp_state(s)),
                None,
            )?;
        }
    }
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(acc.finish()?)
}

fn record(slot: &mut Option<RelevanceError>, r: Result<(), RelevanceError>) {
    if let (None, Err(e)) = (slot.as_ref(), r) {
        *slot = Some(e);
    }
}

/// Fit summary-statistic data with `method` (shorthand used by the C_m studies).
pub fn fit_z(
    z: &ZScoreDataset,
    method: Method,
    settings: &FitSettings,
    rng: &mut ChainRng,
) -> Result<PosteriorSummary, EvalError> {
    fit_summary(&SimData::Z(z.clone()), method, settings, rng)
}

/// Identifies one AUC column of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnKey {
    pub method: Method,
    pub measure: Measure,
}

impl std::fmt::Display for ColumnKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.method, self.measure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub key: ColumnKey,
    /// Mean AUC over replicates, in [0, 1].
    pub mean: f64,
    pub se: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub first: ColumnKey,
    pub second: ColumnKey,
    /// Mean of first − second.
    pub mean_difference: f64,
    pub t_statistic: f64,
    /// Two-sided, t distribution with replicates − 1 degrees of freedom.
    pub p_value: f64,
}

/// Mean and standard error of the modal cluster count across datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmStats {
    pub mean: f64,
    pub se: f64,
    pub values: Vec<usize>,
}

impl CmStats {
    pub fn from_values(values: Vec<usize>) -> Self {
        let as_f: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let (mean, se) = mean_and_se(&as_f);
        Self { mean, se, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCm {
    pub method: Method,
    pub c_m: CmStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    /// AUC per column, aligned with [`EvalReport::columns`].
    pub auc: Vec<f64>,
    /// Modal K per method, aligned with [`EvalReport::c_m`].
    pub c_m: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub design: String,
    pub replicates: usize,
    pub columns: Vec<ColumnSummary>,
    pub comparisons: Vec<PairedComparison>,
    pub c_m: Vec<MethodCm>,
    pub per_replicate: Vec<ReplicateRecord>,
}

impl EvalReport {
    pub fn column(&self, method: Method, measure: Measure) -> Option<&ColumnSummary> {
        self.columns
            .iter()
            .find(|c| c.key.method == method && c.key.measure == measure)
    }

    pub fn cm(&self, method: Method) -> Option<&CmStats> {
        self.c_m.iter().find(|c| c.method == method).map(|c| &c.c_m)
    }
}

/// Paired t comparison of two equally long samples.
pub fn paired_t(first: &[f64], second: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = first.iter().zip(second).map(|(a, b)| a - b).collect();
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0, 1.0);
    }
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd == 0.0 {
        return if mean == 0.0 {
            (0.0, 0.0, 1.0)
        } else {
            (mean, mean.signum() * f64::INFINITY, 0.0)
        };
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let p = 2.0 * dist.sf(t.abs());
    (mean, t, p.min(1.0))
}

/// Methods, measures, replicate count and fit settings of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub methods: Vec<Method>,
    pub measures: Vec<Measure>,
    pub replicates: usize,
    pub fit: FitSettings,
}

/// Generate `replicates` datasets from `spec`, fit every method to each, and
/// aggregate AUCs and modal cluster counts.
///
/// Data for replicate r come from stream (spec.seed, r); each method's chain
/// uses its own stream of `fit.chain.seed`. Replicates run in parallel and
/// are reduced in replicate order. Designs without positive genes report
/// cluster counts only.
pub fn replicate_study(spec: &SimulationSpec, study: &StudyConfig) -> Result<EvalReport, EvalError> {
    if study.replicates < 2 {
        return Err(EvalError::InvalidStudy("at least two replicates are needed".into()));
    }
    if study.methods.is_empty() {
        return Err(EvalError::InvalidStudy("no methods given".into()));
    }
    study.fit.chain.validate().map_err(ModelError::from)?;
    let scored = !matches!(spec.design, Design::Null { .. });
    let columns: Vec<ColumnKey> = if scored {
        study
            .methods
            .iter()
            .flat_map(|&method| study.measures.iter().map(move |&measure| ColumnKey { method, measure }))
            .collect()
    } else {
        Vec::new()
    };
    let sim = spec.prepare()?;

    let records = (0..study.replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<ReplicateRecord, EvalError> {
            let data = sim.generate(r)?;
            let truth = data.positives();
            let mut auc_row = Vec::with_capacity(columns.len());
            let mut cm_row = Vec::with_capacity(study.methods.len());
            for &method in &study.methods {
                let mut rng = replicate_rng(study.fit.chain.seed, r, method.role());
                let summary = fit_summary(&data.data, method, &study.fit, &mut rng)?;
                cm_row.push(summary.c_m);
                for col in columns.iter().filter(|c| c.method == method) {
                    auc_row.push((col, auc(&summary.measure(col.measure), &truth)?));
                }
            }
            // columns are method-major, so the pushes above are already in column order
            Ok(ReplicateRecord {
                replicate: r,
                auc: auc_row.into_iter().map(|(_, a)| a).collect(),
                c_m: cm_row,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let column_values = |i: usize| -> Vec<f64> { records.iter().map(|r| r.auc[i]).collect() };
    let column_summaries = columns
        .iter()
        .enumerate()
        .map(|(i, &key)| {
            let (mean, se) = mean_and_se(&column_values(i));
            ColumnSummary {
                key,
                mean,
                se,
                replicates: records.len(),
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            let (mean_difference, t_statistic, p_value) = paired_t(&column_values(i), &column_values(j));
            comparisons.push(PairedComparison {
                first: columns[i],
                second: columns[j],
                mean_difference,
                t_statistic,
                p_value,
            });
        }
    }
    let c_m = study
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| MethodCm {
            method,
            c_m: CmStats::from_values(records.iter().map(|r| r.c_m[m]).collect()),
        })
        .collect();
    Ok(EvalReport {
        design: spec.design.name().to_string(),
        replicates: records.len(),
        columns: column_summaries,
        comparisons,
        c_m,
        per_replicate: records,
    })
}

/// Fit `method` to `n_datasets` null datasets of `n_genes` N(0,1) z-scores
/// and aggregate the modal cluster counts. Dataset d is generated from
/// stream (data_seed, d), so different methods see identical data.
pub fn cm_study(
    n_datasets: usize,
    n_genes: usize,
    method: Method,
    data_seed: u64,
    settings: &FitSettings,
) -> Result<CmStats, EvalError> {
    if n_datasets < 2 {
        return Err(EvalError::InvalidStudy("at least two datasets are needed".into()));
    }
    let sim = SimulationSpec::new(Design::Null { n: n_genes }, data_seed).prepare()?;
    let values = (0..n_datasets as u64)
        .into_par_iter()
        .map(|d| -> Result<usize, EvalError> {
            let data = sim.generate(d)?;
            let mut rng = replicate_rng(settings.chain.seed, d, method.role());
            Ok(fit_summary(&data.data, method, settings, &mut rng)?.c_m)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CmStats::from_values(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    /// Location of the log-normal prior on γ.
    pub a: f64,
    /// Scale of the log-normal prior on γ.
    pub b: f64,
    pub mean: f64,
    pub se: f64,
    /// Half-width of the 95% t interval for the mean.
    pub half_width: f64,
    pub values: Vec<usize>,
}

/// Modal cluster counts of the relevance model on null data for each prior
/// location `a` with scale `b`. Every `a` sees the same datasets.
pub fn sensitivity_sweep(
    a_values: &[f64],
    b: f64,
    n_datasets: usize,
    n_genes: usize,
    data_seed: u64,
    settings: &FitSettings,
) -> Result<Vec<SensitivityPoint>, EvalError> {
    if a_values.is_empty() {
        return Err(EvalError::InvalidStudy("no prior locations given".into()));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(EvalError::InvalidStudy(format!("scale b = {b} must be positive")));
    }
    a_values
        .iter()
        .map(|&a| {
            let mut s = *settings;
            s.hp.gamma_location = a;
            s.hp.gamma_scale = b;
            let cm = cm_study(n_datasets, n_genes, Method::Brd, data_seed, &s)?;
            let t = StudentsT::new(0.0, 1.0, (n_datasets - 1) as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.975);
            Ok(SensitivityPoint {
                a,
                b,
                mean: cm.mean,
                se: cm.se,
                half_width: t * cm.se,
                values: cm.values,
            })
        })
        .collect()
}

/// Least-squares slope of `y` on `x`.
pub fn trend_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_examples() {
        let t = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &t).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &t).unwrap(), 0.5);
        assert_eq!(auc(&[0.8, 0.3, 0.5, 0.1], &t).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(EvalError::DegenerateTruth));
        assert!(matches!(
            auc(&[f64::NAN, 0.2], &[true, false]),
            Err(EvalError::NonFiniteScore(_))
        ));
    }

    #[test]
    fn roc_examples() {
        let pts = roc_curve(&[0.9, 0.1], &[true, false]).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let pts = roc_curve(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
        assert!(pts.contains(&(0.0, 1.0)));
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn self_comparison_is_zero() {
        let a = [0.7, 0.8, 0.75, 0.9];
        assert_eq!(paired_t(&a, &a), (0.0, 0.0, 1.0));
    }

    #[test]
    fn paired_t_known_value() {
        // differences 1, 2, 3: mean 2, sd 1, t = 2 / (1 / sqrt 3)
        let (m, t, p) = paired_t(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!(p > 0.05 && p < 0.1, "{p}");
    }

    #[test]
    fn slope_of_line() {
        assert!((trend_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..50)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec((0i32..8).prop_map(|v| v as f64 / 2.0), n),
                    proptest::collection::vec(any::<bool>(), n),
                )
            })
            .prop_filter("both classes", |(_, t)| t.iter().any(|x| *x) && t.iter().any(|x| !*x))
    }

    proptest! {
        #[test]
        fn auc_complement((scores, truth) in arb_instance()) {
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert_eq!(auc(&scores, &truth).unwrap() + auc(&neg, &truth).unwrap(), 1.0);
        }

        #[test]
        fn auc_monotone_invariant((scores, truth) in arb_instance()) {
            let transformed: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp() - 7.0).collect();
            prop_assert_eq!(auc(&scores, &truth).unwrap(), auc(&transformed, &truth).unwrap());
        }

        #[test]
        fn roc_area_matches_auc((scores, truth) in arb_instance()) {
            let area = trapezoid_area(&roc_curve(&scores, &truth).unwrap());
            prop_assert!((area - auc(&scores, &truth).unwrap()).abs() < 1e-10);
        }
    }
}
