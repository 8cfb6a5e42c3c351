//! Relevance measures computed from retained chain states.
//!
//! In every iteration clusters are ordered by their key (φ² for the
//! relevance model, |μ| for the baseline); a gene's rank is the position of
//! its cluster in that order, so rank 1 is the least relevant group. Over
//! the chain we report the mean rank, the modal rank and
//! `v = 1 − P(gene in the least-relevant cluster)`.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bdp::BdpState;
use crate::data::ChainState;
use crate::stats::zero_mean_normal_logpdf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelevanceError {
    #[error("chain has no retained states")]
    EmptyChain,
    #[error("unknown relevance measure '{0}' (expected mean_rank, mode_rank or v)")]
    UnknownMeasure(String),
    #[error("cutoff must be finite")]
    NonFiniteCutoff,
    #[error("state has {found} genes, expected {expected}")]
    GeneCountMismatch { found: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    MeanRank,
    ModeRank,
    V,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::MeanRank, Measure::ModeRank, Measure::V];

    pub fn as_str(&self) -> &'static str {
        match self {
            Measure::MeanRank => "mean_rank",
            Measure::ModeRank => "mode_rank",
            Measure::V => "v",
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = RelevanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mean_rank" | "rbar" => Ok(Measure::MeanRank),
            "mode_rank" | "rhat" => Ok(Measure::ModeRank),
            "v" => Ok(Measure::V),
            other => Err(RelevanceError::UnknownMeasure(other.to_string())),
        }
    }
}

/// Per-gene ranks in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRanks {
    pub ranks: Vec<u32>,
    /// Clusters whose key exactly equals the preceding cluster's key.
    pub ties: usize,
}

/// Rank of each cluster when sorted ascending by key. Exact ties keep label
/// order and are counted. With `dense`, equal keys share a rank.
pub fn rank_clusters(keys: &[f64], dense: bool) -> (Vec<u32>, usize) {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    let mut ranks = vec![0u32; keys.len()];
    let mut ties = 0;
    let mut rank = 0u32;
    for (pos, &c) in order.iter().enumerate() {
        let tied = pos > 0 && keys[order[pos - 1]] == keys[c];
        if tied {
            ties += 1;
        }
        if !(dense && tied) {
            rank += 1;
        }
        ranks[c] = rank;
    }
    (ranks, ties)
}

/// Ranks of every gene in a relevance-model state (ordered by φ²).
pub fn ranks_of_state(state: &ChainState) -> IterationRanks {
    let (cluster_ranks, ties) = rank_clusters(state.phi2(), false);
    IterationRanks {
        ranks: state.partition.assignments.iter().map(|&c| cluster_ranks[c]).collect(),
        ties,
    }
}

/// Ranks of every gene in a baseline state (distinct |μ| values, dense).
pub fn ranks_of_bdp_state(state: &BdpState) -> IterationRanks {
    let keys: Vec<f64> = state.partition.params.iter().map(|m| m.abs()).collect();
    let (cluster_ranks, _) = rank_clusters(&keys, true);
    IterationRanks {
        ranks: state.partition.assignments.iter().map(|&c| cluster_ranks[c]).collect(),
        ties: 0,
    }
}

/// Posterior relevance of every gene plus chain-level cluster counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean_rank: Vec<f64>,
    pub mode_rank: Vec<u32>,
    pub v: Vec<f64>,
    /// Retained-iteration counts of each observed number of clusters.
    pub k_distribution: BTreeMap<usize, u64>,
    /// Modal number of clusters (ties toward fewer clusters).
    pub c_m: usize,
    pub iterations: u64,
    pub tie_events: u64,
}

impl PosteriorSummary {
    pub fn n_genes(&self) -> usize {
        self.v.len()
    }

    pub fn measure(&self, m: Measure) -> Vec<f64> {
        match m {
            Measure::MeanRank => self.mean_rank.clone(),
            Measure::ModeRank => self.mode_rank.iter().map(|&r| r as f64).collect(),
            Measure::V => self.v.clone(),
        }
    }

    pub fn max_k(&self) -> usize {
        self.k_distribution.keys().next_back().copied().unwrap_or(0)
    }
}

/// Streaming accumulation of a [`PosteriorSummary`].
#[derive(Debug, Clone)]
pub struct SummaryAccumulator {
    rank_sum: Vec<u64>,
    rank_counts: Vec<Vec<u64>>,
    least_count: Vec<u64>,
    k_hist: BTreeMap<usize, u64>,
    iterations: u64,
    tie_events: u64,
}

impl SummaryAccumulator {
    pub fn new(n_genes: usize) -> Self {
        Self {
            rank_sum: vec![0; n_genes],
            rank_counts: vec![Vec::new(); n_genes],
            least_count: vec![0; n_genes],
            k_hist: BTreeMap::new(),
            iterations: 0,
            tie_events: 0,
        }
    }

    /// Record one iteration: per-gene ranks, per-gene membership of the
    /// least-relevant cluster, and the number of clusters.
    pub fn push(
        &mut self,
        ranks: &IterationRanks,
        in_least: impl Fn(usize) -> bool,
        k: usize,
    ) -> Result<(), RelevanceError> {
        if ranks.ranks.len() != self.rank_sum.len() {
            return Err(RelevanceError::GeneCountMismatch {
                found: ranks.ranks.len(),
                expected: self.rank_sum.len(),
            });
        }
        for (g, &r) in ranks.ranks.iter().enumerate() {
            self.rank_sum[g] += r as u64;
            let counts = &mut self.rank_counts[g];
            let idx = r as usize - 1;
            if counts.len() <= idx {
                counts.resize(idx + 1, 0);
            }
            counts[idx] += 1;
            if in_least(g) {
                self.least_count[g] += 1;
            }
        }
        *self.k_hist.entry(k).or_insert(0) += 1;
        self.iterations += 1;
        self.tie_events += ranks.ties as u64;
        Ok(())
    }

    pub fn push_state(&mut self, state: &ChainState) -> Result<(), RelevanceError> {
        let ranks = ranks_of_state(state);
        let phi0 = state.phi2().iter().copied().fold(f64::INFINITY, f64::min);
        self.push(&ranks, |g| state.partition.param_of(g) == phi0, state.k())
    }

    pub fn push_bdp_state(&mut self, state: &BdpState) -> Result<(), RelevanceError> {
        let ranks = ranks_of_bdp_state(state);
        self.push(&ranks, |g| state.is_null(g), state.k())
    }

    pub fn finish(self) -> Result<PosteriorSummary, RelevanceError> {
        if self.iterations == 0 {
            return Err(RelevanceError::EmptyChain);
        }
        let b = self.iterations as f64;
        let mode_rank = self
            .rank_counts
            .iter()
            .map(|counts| {
                // first maximum, i.e. the smaller rank on ties
                let mut best = 0;
                for (i, &c) in counts.iter().enumerate() {
                    if c > counts[best] {
                        best = i;
                    }
                }
                best as u32 + 1
            })
            .collect();
        let c_m = self
            .k_hist
            .iter()
            .fold(
                (0usize, 0u64),
                |(bk, bc), (&k, &c)| if c > bc { (k, c) } else { (bk, bc) },
            )
            .0;
        Ok(PosteriorSummary {
            mean_rank: self.rank_sum.iter().map(|&s| s as f64 / b).collect(),
            mode_rank,
            v: self.least_count.iter().map(|&c| 1.0 - c as f64 / b).collect(),
            k_distribution: self.k_hist,
            c_m,
            iterations: self.iterations,
            tie_events: self.tie_events,
        })
    }
}

/// Summarize a relevance-model chain.
pub fn summarize(chain: &[ChainState]) -> Result<PosteriorSummary, RelevanceError> {
    let first = chain.first().ok_or(RelevanceError::EmptyChain)?;
    let mut acc = SummaryAccumulator::new(first.partition.len());
    for s in chain {
        acc.push_state(s)?;
    }
    acc.finish()
}

/// Summarize a baseline chain (ranks over distinct |μ|, v from zero-mean membership).
pub fn summarize_bdp(chain: &[BdpState]) -> Result<PosteriorSummary, RelevanceError> {
    let first = chain.first().ok_or(RelevanceError::EmptyChain)?;
    let mut acc = SummaryAccumulator::new(first.partition.len());
    for s in chain {
        acc.push_bdp_state(s)?;
    }
    acc.finish()
}

/// Indices of genes whose measure is strictly above `cutoff`, most relevant first.
pub fn select(summary: &PosteriorSummary, measure: Measure, cutoff: f64) -> Result<Vec<usize>, RelevanceError> {
    if !cutoff.is_finite() {
        return Err(RelevanceError::NonFiniteCutoff);
    }
    let values = summary.measure(measure);
    let mut picked: Vec<usize> = (0..values.len()).filter(|&g| values[g] > cutoff).collect();
    picked.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    Ok(picked)
}

/// Smallest cluster variance of each retained state.
pub fn min_phi2_trace(chain: &[ChainState]) -> Vec<f64> {
    chain
        .iter()
        .map(|s| s.phi2().iter().copied().fold(f64::INFINITY, f64::min))
        .collect()
}

/// Average over iterations of N(x; 0, φ₀²), φ₀² the smallest cluster variance.
pub fn predictive_null_density(chain: &[ChainState], grid: &[f64]) -> Result<Vec<f64>, RelevanceError> {
    if chain.is_empty() {
        return Err(RelevanceError::EmptyChain);
    }
    Ok(null_density_from_trace(&min_phi2_trace(chain), grid))
}

pub fn null_density_from_trace(phi0: &[f64], grid: &[f64]) -> Vec<f64> {
    let b = phi0.len() as f64;
    grid.iter()
        .map(|&x| phi0.iter().map(|&v| zero_mean_normal_logpdf(x, v).exp()).sum::<f64>() / b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Partition;
    use proptest::prelude::*;

    fn state(params: Vec<f64>, assignments: Vec<usize>) -> ChainState {
        ChainState {
            partition: Partition { assignments, params },
            alpha: vec![],
            beta: vec![],
            sigma2: vec![],
            gamma: 1.0,
            iteration: 0,
        }
    }

    #[test]
    fn ranks_follow_variance_order() {
        // A = 0.4, B = 0.01, C = 5.0; genes in A, B, C
        let s = state(vec![0.4, 0.01, 5.0], vec![0, 1, 2]);
        assert_eq!(ranks_of_state(&s).ranks, vec![2, 1, 3]);
        let one = state(vec![3.0], vec![0, 0, 0]);
        assert_eq!(ranks_of_state(&one).ranks, vec![1, 1, 1]);
    }

    #[test]
    fn exact_ties_fall_back_to_label() {
        let s = state(vec![1.0, 1.0], vec![1, 0]);
        let r = ranks_of_state(&s);
        assert_eq!(r.ranks, vec![2, 1]);
        assert_eq!(r.ties, 1);
        let (dense, _) = rank_clusters(&[0.0, 2.0, 0.0], true);
        assert_eq!(dense, vec![1, 2, 1]);
    }

    #[test]
    fn summary_examples() {
        // gene 0 ranks [1, 1, 2, 2]; gene 1 in the minimum cluster 3 of 4 times
        let chain = vec![
            state(vec![0.1], vec![0, 0]),
            state(vec![0.1, 2.0], vec![0, 1]),
            state(vec![0.1, 2.0], vec![1, 0]),
            state(vec![2.0, 0.1], vec![0, 1]),
        ];
        let s = summarize(&chain).unwrap();
        assert_eq!(s.mean_rank[0], 1.5);
        assert_eq!(s.mode_rank[0], 1);
        assert_eq!(s.v[1], 0.25);
        assert_eq!(s.c_m, 2);
        assert_eq!(summarize(&[]), Err(RelevanceError::EmptyChain));
    }

    #[test]
    fn modal_k_example() {
        let chain = vec![
            state(vec![0.1], vec![0, 0]),
            state(vec![0.1], vec![0, 0]),
            state(vec![0.1, 2.0], vec![0, 1]),
            state(vec![0.1], vec![0, 0]),
        ];
        assert_eq!(summarize(&chain).unwrap().c_m, 1);
    }

    #[test]
    fn select_examples() {
        let summary = PosteriorSummary {
            mean_rank: vec![3.5, 1.0],
            mode_rank: vec![4, 1],
            v: vec![0.9, 1.0],
            k_distribution: BTreeMap::new(),
            c_m: 4,
            iterations: 1,
            tie_events: 0,
        };
        assert_eq!(select(&summary, Measure::ModeRank, 3.0).unwrap(), vec![0]);
        assert!(select(&summary, Measure::V, 1.0).unwrap().is_empty());
        assert_eq!(select(&summary, Measure::V, 0.5).unwrap(), vec![1, 0]);
        assert_eq!(
            "bogus".parse::<Measure>(),
            Err(RelevanceError::UnknownMeasure("bogus".into()))
        );
        assert_eq!(
            select(&summary, Measure::V, f64::NAN),
            Err(RelevanceError::NonFiniteCutoff)
        );
    }

    #[test]
    fn five_rank_two_genes_selected() {
        let mut mode_rank = vec![1u32; 20];
        for r in mode_rank.iter_mut().skip(3).take(5) {
            *r = 2;
        }
        let summary = PosteriorSummary {
            mean_rank: mode_rank.iter().map(|&r| r as f64).collect(),
            mode_rank,
            v: vec![0.0; 20],
            k_distribution: BTreeMap::new(),
            c_m: 2,
            iterations: 1,
            tie_events: 0,
        };
        assert_eq!(select(&summary, Measure::ModeRank, 1.0).unwrap(), vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn standard_normal_null_density() {
        let chain = vec![state(vec![1.0], vec![0])];
        let f = predictive_null_density(&chain, &[0.0]).unwrap();
        assert!((f[0] - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn null_density_integrates_to_one() {
        let chain = vec![
            state(vec![0.5, 3.0], vec![0, 1]),
            state(vec![1.7], vec![0, 0]),
            state(vec![0.2, 1.0], vec![1, 0]),
        ];
        let grid: Vec<f64> = (0..=40_000).map(|i| -20.0 + i as f64 * 0.001).collect();
        let f = predictive_null_density(&chain, &grid).unwrap();
        let area: f64 = grid
            .windows(2)
            .zip(f.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum();
        assert!((area - 1.0).abs() < 1e-3, "{area}");
        for i in 0..f.len() {
            assert!((f[i] - f[f.len() - 1 - i]).abs() <= 1e-12 * f[i].max(1e-300));
        }
    }

    fn arb_chain() -> impl Strategy<Value = Vec<ChainState>> {
        let one = (1usize..5).prop_flat_map(|k| {
            (
                proptest::collection::vec(0.001f64..10.0, k),
                proptest::collection::vec(0..k, 8),
            )
                .prop_map(move |(params, mut a)| {
                    for (c, x) in a.iter_mut().take(k).enumerate() {
                        *x = c;
                    }
                    state(params, a)
                })
        });
        proptest::collection::vec(one, 1..12)
    }

    fn relabel(s: &ChainState, perm_seed: usize) -> ChainState {
        let k = s.k();
        let perm: Vec<usize> = (0..k).map(|c| (c + perm_seed) % k).collect();
        let mut params = vec![0.0; k];
        for c in 0..k {
            params[perm[c]] = s.phi2()[c];
        }
        state(params, s.partition.assignments.iter().map(|&c| perm[c]).collect())
    }

    proptest! {
        #[test]
        fn measures_invariant_under_relabeling(chain in arb_chain(), shift in 0usize..4) {
            let relabeled: Vec<ChainState> = chain.iter().map(|s| relabel(s, shift)).collect();
            prop_assert_eq!(summarize(&chain).unwrap(), summarize(&relabeled).unwrap());
        }

        #[test]
        fn mean_rank_and_v_ignore_order(chain in arb_chain()) {
            let mut rev = chain.clone();
            rev.reverse();
            let a = summarize(&chain).unwrap();
            let b = summarize(&rev).unwrap();
            for g in 0..a.n_genes() {
                prop_assert!((a.mean_rank[g] - b.mean_rank[g]).abs() < 1e-12);
                prop_assert_eq!(a.v[g], b.v[g]);
            }
        }

        #[test]
        fn ranks_follow_cluster_variances(chain in arb_chain()) {
            for s in &chain {
                let r = ranks_of_state(s).ranks;
                for i in 0..r.len() {
                    for j in 0..r.len() {
                        let (ci, cj) = (s.partition.assignments[i], s.partition.assignments[j]);
                        if ci == cj { prop_assert_eq!(r[i], r[j]); }
                        if s.phi2()[ci] < s.phi2()[cj] { prop_assert!(r[i] < r[j]); }
                    }
                }
            }
        }

        #[test]
        fn v_zero_implies_rank_one(chain in arb_chain()) {
            let s = summarize(&chain).unwrap();
            for g in 0..s.n_genes() {
                prop_assert!((0.0..=1.0).contains(&s.v[g]));
                prop_assert!(s.mode_rank[g] as usize <= s.max_k());
                if s.v[g] == 0.0 {
                    prop_assert_eq!(s.mean_rank[g], 1.0);
                }
            }
        }
    }
}
