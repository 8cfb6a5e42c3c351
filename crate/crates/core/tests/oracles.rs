//! Sampler output against exact posteriors on datasets small enough to
//! enumerate every partition.

use std::collections::HashMap;

use brd::bdp::{BdpModel, BdpParams};
use brd::model::ReducedDataModel;
use brd::rng::stream_rng;
use brd::{ChainConfig, Hyperparameters, ZScoreDataset};

/// All set partitions of `n` items as restricted growth strings.
fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().copied().max().map_or(0, |m| m + 1);
        for label in 0..=next {
            prefix.push(label);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, &mut out);
    out
}

/// Relabel clusters in order of first appearance.
fn canonical(assignments: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    assignments
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect()
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Posterior probability of every partition: CRP prior with fixed γ times
/// the product of per-cluster marginal likelihoods.
fn exact_posterior(n: usize, gamma: f64, marginal: impl Fn(&[usize]) -> f64) -> HashMap<Vec<usize>, f64> {
    let mut weights = HashMap::new();
    let mut total = 0.0;
    for p in set_partitions(n) {
        let k = p.iter().max().unwrap() + 1;
        let mut w = gamma.powi(k as i32);
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| p[i] == c).collect();
            w *= ln_factorial(members.len() - 1).exp() * marginal(&members);
        }
        total += w;
        weights.insert(p, w);
    }
    weights.values_mut().for_each(|w| *w /= total);
    weights
}

fn empirical(chain: impl Iterator<Item = Vec<usize>>) -> HashMap<Vec<usize>, f64> {
    let mut counts: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut n = 0.0;
    for a in chain {
        *counts.entry(canonical(&a)).or_insert(0.0) += 1.0;
        n += 1.0;
    }
    counts.values_mut().for_each(|c| *c /= n);
    counts
}

fn max_abs_difference(exact: &HashMap<Vec<usize>, f64>, observed: &HashMap<Vec<usize>, f64>) -> f64 {
    exact
        .iter()
        .map(|(p, e)| (e - observed.get(p).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// A γ prior so concentrated that every proposal is rejected and γ stays
/// at its starting value e^location.
fn pinned_gamma(hp: &mut Hyperparameters, gamma: f64) {
    hp.gamma_location = gamma.ln();
    hp.gamma_scale = 1e-9;
}

#[test]
fn reduced_sampler_matches_enumerated_posterior() {
    let z = vec![0.2, -0.5, 2.2, 3.1];
    let gamma = 0.7;
    let mut hp = Hyperparameters {
        g0_location: 0.0,
        g0_scale: 1.5,
        ..Hyperparameters::default()
    };
    pinned_gamma(&mut hp, gamma);
    let prior = |u: f64| normal_pdf(u, hp.g0_location, hp.g0_scale * hp.g0_scale);
    let marginal = |members: &[usize]| {
        let f = |u: f64| members.iter().map(|&i| normal_pdf(z[i], 0.0, u.exp())).product::<f64>() * prior(u);
        let (lo, hi) = (hp.g0_location - 12.0 * hp.g0_scale, hp.g0_location + 12.0 * hp.g0_scale);
        simpson(f, lo, hi, 20_000)
    };
    let exact = exact_posterior(z.len(), gamma, marginal);

    let model = ReducedDataModel::new(ZScoreDataset::from_values(z.clone()).unwrap(), hp).unwrap();
    let cfg = ChainConfig {
        iterations: 200_000,
        burn_in: 1_000,
        thin: 1,
        seed: 11,
        random_scan: false,
    };
    let mut rng = stream_rng(cfg.seed, 0);
    let mut seen = Vec::new();
    model
        .sample(&cfg, &mut rng, |s| seen.push(s.partition.assignments.clone()), None)
        .unwrap();
    let observed = empirical(seen.into_iter());
    let diff = max_abs_difference(&exact, &observed);
    assert!(diff < 0.01, "largest partition-probability error {diff}");
}

#[test]
fn baseline_sampler_matches_enumerated_posterior() {
    let z = vec![0.1, -0.4, 2.5, 2.9];
    let gamma = 0.9;
    let mut hp = Hyperparameters::default();
    pinned_gamma(&mut hp, gamma);
    // σ² held at 1 by an extremely concentrated inverse-gamma prior
    let params = BdpParams {
        p0: 0.5,
        slab_var: 4.0,
        sigma_shape: 1e9,
        sigma_scale: 1e9,
    };
    let marginal = |members: &[usize]| {
        let null: f64 = members.iter().map(|&i| normal_pdf(z[i], 0.0, 1.0)).product();
        let slab = simpson(
            |mu| {
                members.iter().map(|&i| normal_pdf(z[i], mu, 1.0)).product::<f64>()
                    * normal_pdf(mu, 0.0, params.slab_var)
            },
            -20.0,
            20.0,
            20_000,
        );
        params.p0 * null + (1.0 - params.p0) * slab
    };
    let exact = exact_posterior(z.len(), gamma, marginal);

    let model = BdpModel::new(ZScoreDataset::from_values(z.clone()).unwrap(), params, hp).unwrap();
    let cfg = ChainConfig {
        iterations: 200_000,
        burn_in: 1_000,
        thin: 1,
        seed: 12,
        random_scan: false,
    };
    let mut rng = stream_rng(cfg.seed, 0);
    let mut seen = Vec::new();
    let mut null_hits = vec![0.0; z.len()];
    model
        .sample(
            &cfg,
            &mut rng,
            |s| {
                seen.push(s.partition.assignments.clone());
                for (g, hit) in null_hits.iter_mut().enumerate() {
                    if s.is_null(g) {
                        *hit += 1.0;
                    }
                }
            },
            None,
        )
        .unwrap();
    let n = seen.len() as f64;
    let observed = empirical(seen.into_iter());
    let diff = max_abs_difference(&exact, &observed);
    assert!(diff < 0.01, "largest partition-probability error {diff}");

    // P(μ_g = 0): sum over partitions of P(partition) · P(g's cluster is null | members)
    for g in 0..z.len() {
        let mut p_null = 0.0;
        for (p, w) in &exact {
            let members: Vec<usize> = (0..z.len()).filter(|&i| p[i] == p[g]).collect();
            let null: f64 = members.iter().map(|&i| normal_pdf(z[i], 0.0, 1.0)).product();
            p_null += w * params.p0 * null / marginal(&members);
        }
        let seen_null = null_hits[g] / n;
        assert!(
            (p_null - seen_null).abs() < 0.01,
            "gene {g}: exact {p_null}, sampled {seen_null}"
        );
    }
}

#[test]
fn partition_enumeration_counts_are_bell_numbers() {
    let bell = [1, 1, 2, 5, 15, 52, 203];
    for (n, b) in bell.iter().enumerate().skip(1) {
        assert_eq!(set_partitions(n).len(), *b);
    }
}
