//! Data generators for the comparison studies.
//!
//! | design                 | alias | data                                             |
//! |------------------------|-------|--------------------------------------------------|
//! | `sim1`                 |       | 40 shifted z-scores among 460 N(0,1)             |
//! | `sim2`                 |       | probit of Beta p-values, 5–10 relevant           |
//! | `empirical_z_onegroup` | sim3  | 40–80 from the top of a z pool, 460 from the rest |
//! | `empirical_z_twogroup` | sim4  | strong and moderate tiers from a z pool          |
//! | `fulldata_shift`       | sim5  | permuted expression data, 5 genes shifted        |
//! | `fulldata_noise`       | sim6  | permuted expression data, 5 genes with noise     |
//! | `null`                 |       | N(0,1) z-scores only                             |
//!
//! Pool-based designs use a synthetic surrogate pool unless a real pool is
//! supplied.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{default_gene_ids, validate_expression, DataError, ExpressionDataset, ZScoreDataset};
use crate::rng::{replicate_rng, stream_rng, StreamRole};
use crate::stats::{std_normal, std_normal_quantile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("pool of {found} z-scores is too small, need at least {needed}")]
    PoolTooSmall { needed: usize, found: usize },
    #[error("base dataset too small: {0}")]
    InsufficientData(String),
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown design '{0}'")]
    UnknownDesign(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Ground-truth class of a simulated gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneClass {
    Irrelevant,
    Moderate,
    Relevant,
}

impl GeneClass {
    pub fn is_positive(self) -> bool {
        self != GeneClass::Irrelevant
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GeneClass::Irrelevant => "irrelevant",
            GeneClass::Moderate => "moderate",
            GeneClass::Relevant => "relevant",
        }
    }
}

impl FromStr for GeneClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "irrelevant" | "0" => Ok(GeneClass::Irrelevant),
            "moderate" => Ok(GeneClass::Moderate),
            "relevant" | "1" => Ok(GeneClass::Relevant),
            other => Err(format!("unknown truth class '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimData {
    Z(ZScoreDataset),
    Expression(ExpressionDataset),
}

impl SimData {
    pub fn n_genes(&self) -> usize {
        match self {
            SimData::Z(d) => d.len(),
            SimData::Expression(d) => d.n_genes(),
        }
    }

    pub fn gene_ids(&self) -> &[String] {
        match self {
            SimData::Z(d) => d.gene_ids(),
            SimData::Expression(d) => d.gene_ids(),
        }
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub data: SimData,
    pub truth: Vec<GeneClass>,
}

impl LabeledData {
    /// Relevant or moderately relevant.
    pub fn positives(&self) -> Vec<bool> {
        self.truth.iter().map(|t| t.is_positive()).collect()
    }

    pub fn z(&self) -> Option<&ZScoreDataset> {
        match &self.data {
            SimData::Z(d) => Some(d),
            SimData::Expression(_) => None,
        }
    }
}

fn labeled_z(z: Vec<f64>, truth: Vec<GeneClass>) -> Result<LabeledData, SimulationError> {
    Ok(LabeledData {
        data: SimData::Z(ZScoreDataset::from_values(z)?),
        truth,
    })
}

/// Means of the four shifted groups; ten z-scores each.
pub const SIM1_MEANS: [f64; 4] = [-1.0, 1.0, 2.0, 3.0];
pub const SIM1_PER_MEAN: usize = 10;
pub const IRRELEVANT_COUNT: usize = 460;

/// 40 relevant z-scores from N(μ_k, σ²), μ_k ∈ {−1, 1, 2, 3} (ten each),
/// followed by 460 from N(0, 1).
pub fn gen_sim1<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Result<LabeledData, SimulationError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SimulationError::InvalidParameter(format!("sigma = {sigma}")));
    }
    let n_rel = SIM1_MEANS.len() * SIM1_PER_MEAN;
    let mut z = Vec::with_capacity(n_rel + IRRELEVANT_COUNT);
    for mu in SIM1_MEANS {
        for _ in 0..SIM1_PER_MEAN {
            z.push(mu + sigma * std_normal(rng));
        }
    }
    for _ in 0..IRRELEVANT_COUNT {
        z.push(std_normal(rng));
    }
    let mut truth = vec![GeneClass::Relevant; n_rel];
    truth.resize(n_rel + IRRELEVANT_COUNT, GeneClass::Irrelevant);
    labeled_z(z, truth)
}

/// z = Φ⁻¹(p) for p-values from Beta(6, 40) (5 to 10 relevant genes) and
/// Beta(6, 4) (460 irrelevant genes).
pub fn gen_sim2<R: Rng + ?Sized>(rng: &mut R) -> Result<LabeledData, SimulationError> {
    let n_rel = rng.random_range(5..=10usize);
    let relevant = Beta::new(6.0, 40.0).expect("valid beta");
    let irrelevant = Beta::new(6.0, 4.0).expect("valid beta");
    let mut z = Vec::with_capacity(n_rel + IRRELEVANT_COUNT);
    for _ in 0..n_rel {
        z.push(p_to_z(relevant.sample(rng)));
    }
    for _ in 0..IRRELEVANT_COUNT {
        z.push(p_to_z(irrelevant.sample(rng)));
    }
    let mut truth = vec![GeneClass::Relevant; n_rel];
    truth.resize(n_rel + IRRELEVANT_COUNT, GeneClass::Irrelevant);
    labeled_z(z, truth)
}

/// Φ⁻¹(p), clamped away from 0 and 1.
pub fn p_to_z(p: f64) -> f64 {
    std_normal_quantile(p.clamp(1e-300, 1.0 - 1e-16))
}

/// Sampling scheme for the pool-based designs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalZDesign {
    /// Size of the top |z| stratum relevant genes are drawn from.
    pub top_n: usize,
    pub relevant_range: RangeInclusive<usize>,
    pub irrelevant_count: usize,
    pub two_tier: Option<TwoTier>,
}

/// Moderate tier: after discarding the `removed_top` highest |z|, the next
/// `moderate_range` genes (count drawn uniformly) are moderately relevant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoTier {
    pub removed_top: usize,
    pub moderate_range: RangeInclusive<usize>,
}

impl EmpiricalZDesign {
    pub fn one_group() -> Self {
        Self {
            top_n: 400,
            relevant_range: 40..=80,
            irrelevant_count: IRRELEVANT_COUNT,
            two_tier: None,
        }
    }

    pub fn two_group() -> Self {
        Self {
            top_n: 100,
            relevant_range: 5..=10,
            irrelevant_count: IRRELEVANT_COUNT,
            two_tier: Some(TwoTier {
                removed_top: 200,
                moderate_range: 20..=30,
            }),
        }
    }

    fn low_stratum_start(&self) -> usize {
        match &self.two_tier {
            None => self.top_n,
            Some(t) => t.removed_top + *t.moderate_range.end(),
        }
    }

    fn needed(&self) -> usize {
        self.low_stratum_start() + self.irrelevant_count
    }
}

/// Positions of `pool` sorted by decreasing |z| (ties by position).
fn by_abs_desc(pool: &ZScoreDataset) -> Vec<usize> {
    let z = pool.z();
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    order
}

fn sample_from<R: Rng + ?Sized>(items: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    index::sample(rng, items.len(), count)
        .into_iter()
        .map(|i| items[i])
        .collect()
}

/// Draw relevant genes from the top of a z pool and irrelevant genes from its
/// low-|z| remainder. Gene ids are carried over from the pool.
pub fn gen_empirical_z<R: Rng + ?Sized>(
    pool: &ZScoreDataset,
    design: &EmpiricalZDesign,
    rng: &mut R,
) -> Result<LabeledData, SimulationError> {
    if design.relevant_range.is_empty() || *design.relevant_range.end() > design.top_n {
        return Err(SimulationError::InvalidParameter(format!(
            "relevant range {:?} must fit in the top {}",
            design.relevant_range, design.top_n
        )));
    }
    if let Some(t) = &design.two_tier {
        if t.removed_top < design.top_n || t.moderate_range.is_empty() {
            return Err(SimulationError::InvalidParameter(
                "moderate tier must start below the relevant stratum".into(),
            ));
        }
    }
    if pool.len() < design.needed() {
        return Err(SimulationError::PoolTooSmall {
            needed: design.needed(),
            found: pool.len(),
        });
    }
    let order = by_abs_desc(pool);
    let n_rel = rng.random_range(design.relevant_range.clone());
    let mut picked = sample_from(&order[..design.top_n], n_rel, rng);
    let mut truth = vec![GeneClass::Relevant; n_rel];
    let low_start = match &design.two_tier {
        None => design.top_n,
        Some(t) => {
            let m = rng.random_range(t.moderate_range.clone());
            picked.extend_from_slice(&order[t.removed_top..t.removed_top + m]);
            truth.resize(truth.len() + m, GeneClass::Moderate);
            t.removed_top + m
        }
    };
    picked.extend(sample_from(&order[low_start..], design.irrelevant_count, rng));
    truth.resize(picked.len(), GeneClass::Irrelevant);
    let ids = picked.iter().map(|&i| pool.gene_ids()[i].clone()).collect();
    let z = picked.iter().map(|&i| pool.z()[i]).collect();
    Ok(LabeledData {
        data: SimData::Z(ZScoreDataset::new(ids, z)?),
        truth,
    })
}

/// Synthetic stand-in for an empirical z pool: 0.95·N(0,1) + 0.05·N(0,3²).
pub fn surrogate_z_pool<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ZScoreDataset, SimulationError> {
    let z = (0..n)
        .map(|_| {
            let sd = if rng.random::<f64>() < 0.05 { 3.0 } else { 1.0 };
            sd * std_normal(rng)
        })
        .collect();
    let ids = (1..=n).map(|i| format!("p{i}")).collect();
    Ok(ZScoreDataset::new(ids, z)?)
}

/// Synthetic stand-in for an expression base: per-gene means from N(0,1),
/// per-gene variances from Log-N(0, 0.5²), half the samples labeled case.
pub fn surrogate_expression_base<R: Rng + ?Sized>(
    n_genes: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<ExpressionDataset, SimulationError> {
    let rows = (0..n_genes)
        .map(|_| {
            let mean = std_normal(rng);
            let sd = (0.5 * std_normal(rng)).exp().sqrt();
            (0..n_samples).map(|_| mean + sd * std_normal(rng)).collect()
        })
        .collect();
    let labels: Vec<u8> = (0..n_samples).map(|j| (j >= n_samples / 2) as u8).collect();
    Ok(validate_expression(default_gene_ids(n_genes), rows, &labels)?)
}

/// How the designated genes' case values are perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// One constant per gene: −1 with probability 0.7, otherwise +2.
    Shift,
    /// Independent N(0,1) per case observation.
    Noise,
}

pub const SHIFT_LOW: f64 = -1.0;
pub const SHIFT_HIGH: f64 = 2.0;
pub const SHIFT_LOW_PROB: f64 = 0.7;

/// Sample genes and samples from `base`, permute the group labels, then
/// perturb the case values of the first `perturbed` genes.
pub fn gen_fulldata<R: Rng + ?Sized>(
    base: &ExpressionDataset,
    n_genes: usize,
    n_per_group: usize,
    perturbed: usize,
    mode: Perturbation,
    rng: &mut R,
) -> Result<LabeledData, SimulationError> {
    if n_per_group == 0 || perturbed > n_genes || n_genes == 0 {
        return Err(SimulationError::InvalidParameter(format!(
            "n_genes = {n_genes}, n_per_group = {n_per_group}, perturbed = {perturbed}"
        )));
    }
    if base.n_genes() < n_genes {
        return Err(SimulationError::InsufficientData(format!(
            "{} genes available, {n_genes} requested",
            base.n_genes()
        )));
    }
    if base.n_samples() < 2 * n_per_group {
        return Err(SimulationError::InsufficientData(format!(
            "{} samples available, {} requested",
            base.n_samples(),
            2 * n_per_group
        )));
    }
    let genes = index::sample(rng, base.n_genes(), n_genes).into_vec();
    let mut samples = index::sample(rng, base.n_samples(), 2 * n_per_group).into_vec();
    // new labels: the first half of a random permutation is the control group
    samples.shuffle(rng);
    let labels: Vec<u8> = (0..2 * n_per_group).map(|j| (j >= n_per_group) as u8).collect();

    let mut rows = Vec::with_capacity(n_genes);
    let mut ids = Vec::with_capacity(n_genes);
    for (pos, &g) in genes.iter().enumerate() {
        let src = base.row(g);
        let mut row: Vec<f64> = samples.iter().map(|&s| src[s]).collect();
        if pos < perturbed {
            match mode {
                Perturbation::Shift => {
                    let shift = if rng.random::<f64>() < SHIFT_LOW_PROB {
                        SHIFT_LOW
                    } else {
                        SHIFT_HIGH
                    };
                    for v in &mut row[n_per_group..] {
                        *v += shift;
                    }
                }
                Perturbation::Noise => {
                    for v in &mut row[n_per_group..] {
                        *v += std_normal(rng);
                    }
                }
            }
        }
        rows.push(row);
        ids.push(base.gene_ids()[g].clone());
    }
    let mut truth = vec![GeneClass::Relevant; perturbed];
    truth.resize(n_genes, GeneClass::Irrelevant);
    Ok(LabeledData {
        data: SimData::Expression(validate_expression(ids, rows, &labels)?),
        truth,
    })
}

/// `n` iid N(0,1) z-scores, all irrelevant.
pub fn gen_null<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<LabeledData, SimulationError> {
    if n < 2 {
        return Err(SimulationError::InvalidParameter(format!("n = {n} < 2")));
    }
    let z = (0..n).map(|_| std_normal(rng)).collect();
    labeled_z(z, vec![GeneClass::Irrelevant; n])
}

/// A simulation design and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "design")]
pub enum Design {
    Sim1 {
        sigma: f64,
    },
    Sim2,
    EmpiricalZOnegroup {
        pool_size: usize,
    },
    EmpiricalZTwogroup {
        pool_size: usize,
    },
    FulldataShift {
        n_genes: usize,
        n_per_group: usize,
        perturbed: usize,
    },
    FulldataNoise {
        n_genes: usize,
        n_per_group: usize,
        perturbed: usize,
    },
    Null {
        n: usize,
    },
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Sim1 { .. } => "sim1",
            Design::Sim2 => "sim2",
            Design::EmpiricalZOnegroup { .. } => "empirical_z_onegroup",
            Design::EmpiricalZTwogroup { .. } => "empirical_z_twogroup",
            Design::FulldataShift { .. } => "fulldata_shift",
            Design::FulldataNoise { .. } => "fulldata_noise",
            Design::Null { .. } => "null",
        }
    }

    /// Design with its default parameters, by name or `simN` alias.
    pub fn from_name(name: &str) -> Result<Self, SimulationError> {
        Ok(match name.trim() {
            "sim1" => Design::Sim1 { sigma: 1.0 },
            "sim2" => Design::Sim2,
            "sim3" | "empirical_z_onegroup" => Design::EmpiricalZOnegroup { pool_size: 8000 },
            "sim4" | "empirical_z_twogroup" => Design::EmpiricalZTwogroup { pool_size: 8000 },
            "sim5" | "fulldata_shift" => Design::FulldataShift {
                n_genes: 250,
                n_per_group: 5,
                perturbed: 5,
            },
            "sim6" | "fulldata_noise" => Design::FulldataNoise {
                n_genes: 250,
                n_per_group: 10,
                perturbed: 5,
            },
            "null" => Design::Null { n: 500 },
            other => return Err(SimulationError::UnknownDesign(other.to_string())),
        })
    }

    /// Apply `key = value` overrides (`sigma`, `pool_size`, `n_genes`,
    /// `n_per_group`, `perturbed`, `n`).
    pub fn with_overrides(mut self, kv: &BTreeMap<String, String>) -> Result<Self, SimulationError> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, SimulationError> {
            v.trim()
                .parse()
                .map_err(|_| SimulationError::InvalidParameter(format!("{key} = '{v}'")))
        }
        for (key, v) in kv {
            match (&mut self, key.as_str()) {
                (Design::Sim1 { sigma }, "sigma") => *sigma = parse(key, v)?,
                (Design::EmpiricalZOnegroup { pool_size }, "pool_size")
                | (Design::EmpiricalZTwogroup { pool_size }, "pool_size") => *pool_size = parse(key, v)?,
                (Design::FulldataShift { n_genes, .. }, "n_genes")
                | (Design::FulldataNoise { n_genes, .. }, "n_genes") => *n_genes = parse(key, v)?,
                (Design::FulldataShift { n_per_group, .. }, "n_per_group")
                | (Design::FulldataNoise { n_per_group, .. }, "n_per_group") => *n_per_group = parse(key, v)?,
                (Design::FulldataShift { perturbed, .. }, "perturbed")
                | (Design::FulldataNoise { perturbed, .. }, "perturbed") => *perturbed = parse(key, v)?,
                (Design::Null { n }, "n") => *n = parse(key, v)?,
                _ => {
                    return Err(SimulationError::InvalidParameter(format!(
                        "'{key}' does not apply to design {}",
                        self.name()
                    )))
                }
            }
        }
        Ok(self)
    }

    pub fn is_full_data(&self) -> bool {
        matches!(self, Design::FulldataShift { .. } | Design::FulldataNoise { .. })
    }
}

/// A design, its master seed and optional real data replacing the surrogates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub design: Design,
    pub seed: u64,
    pub z_pool: Option<ZScoreDataset>,
    pub expression_base: Option<ExpressionDataset>,
}

impl SimulationSpec {
    pub fn new(design: Design, seed: u64) -> Self {
        Self {
            design,
            seed,
            z_pool: None,
            expression_base: None,
        }
    }

    /// Materialize the pool or base shared by every replicate.
    pub fn prepare(&self) -> Result<Simulator, SimulationError> {
        let mut rng = stream_rng(self.seed, u64::MAX);
        let source = match &self.design {
            Design::EmpiricalZOnegroup { pool_size } | Design::EmpiricalZTwogroup { pool_size } => {
                Source::Pool(match &self.z_pool {
                    Some(p) => p.clone(),
                    None => surrogate_z_pool(*pool_size, &mut rng)?,
                })
            }
            Design::FulldataShift {
                n_genes, n_per_group, ..
            }
            | Design::FulldataNoise {
                n_genes, n_per_group, ..
            } => Source::Base(match &self.expression_base {
                Some(b) => b.clone(),
                None => surrogate_expression_base(*n_genes, 2 * n_per_group, &mut rng)?,
            }),
            _ => Source::None,
        };
        Ok(Simulator {
            design: self.design.clone(),
            seed: self.seed,
            source,
        })
    }
}

#[derive(Debug, Clone)]
enum Source {
    None,
    Pool(ZScoreDataset),
    Base(ExpressionDataset),
}

/// Generates replicate datasets for one [`SimulationSpec`].
#[derive(Debug, Clone)]
pub struct Simulator {
    design: Design,
    seed: u64,
    source: Source,
}

impl Simulator {
    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Dataset for replicate `r`, from its own data stream.
    pub fn generate(&self, replicate: u64) -> Result<LabeledData, SimulationError> {
        let mut rng = replicate_rng(self.seed, replicate, StreamRole::Data);
        match (&self.design, &self.source) {
            (Design::Sim1 { sigma }, _) => gen_sim1(*sigma, &mut rng),
            (Design::Sim2, _) => gen_sim2(&mut rng),
            (Design::EmpiricalZOnegroup { .. }, Source::Pool(p)) => {
                gen_empirical_z(p, &EmpiricalZDesign::one_group(), &mut rng)
            }
            (Design::EmpiricalZTwogroup { .. }, Source::Pool(p)) => {
                gen_empirical_z(p, &EmpiricalZDesign::two_group(), &mut rng)
            }
            (
                Design::FulldataShift {
                    n_genes,
                    n_per_group,
                    perturbed,
                },
                Source::Base(b),
            ) => gen_fulldata(b, *n_genes, *n_per_group, *perturbed, Perturbation::Shift, &mut rng),
            (
                Design::FulldataNoise {
                    n_genes,
                    n_per_group,
                    perturbed,
                },
                Source::Base(b),
            ) => gen_fulldata(b, *n_genes, *n_per_group, *perturbed, Perturbation::Noise, &mut rng),
            (Design::Null { n }, _) => gen_null(*n, &mut rng),
            _ => unreachable!("simulator source matches its design"),
        }
    }
}
