//! Small numeric helpers shared by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

/// ln(2π).
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Smallest variance the samplers will evaluate a density at.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Log density of N(x; mean, var). The variance is floored at [`VARIANCE_FLOOR`].
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let var = var.max(VARIANCE_FLOOR);
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var)
}

/// Log density of N(x; 0, var).
#[inline]
pub fn zero_mean_normal_logpdf(x: f64, var: f64) -> f64 {
    normal_logpdf(x, 0.0, var)
}

/// Φ⁻¹(p) for the standard normal.
pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Φ(x) for the standard normal.
pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Draw from the inverse-gamma distribution with density ∝ x^{-shape-1} e^{-scale/x}.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("inverse-gamma parameters must be positive");
    1.0 / g.sample(rng)
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Index drawn from a categorical distribution given unnormalized log weights.
///
/// All weights must be finite or `-inf`, with at least one finite.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in log_weights.iter().enumerate() {
        u -= (w - max).exp();
        if u < 0.0 {
            return i;
        }
    }
    // u landed on the upper edge through rounding; take the last positive weight.
    log_weights
        .iter()
        .rposition(|w| w.is_finite())
        .unwrap_or(log_weights.len() - 1)
}

/// Metropolis acceptance probability for a symmetric proposal.
#[inline]
pub fn acceptance_probability(current_log_target: f64, proposed_log_target: f64) -> f64 {
    let r = proposed_log_target - current_log_target;
    if r >= 0.0 {
        1.0
    } else if r.is_nan() {
        0.0
    } else {
        r.exp()
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_logpdf_at_zero() {
        assert!((zero_mean_normal_logpdf(0.0, 1.0) - (-0.918_938_533_204_672_7)).abs() < 1e-14);
    }

    #[test]
    fn log_categorical_respects_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = [0.0_f64.ln(), 1.0_f64.ln(), 3.0_f64.ln()];
        let mut counts = [0usize; 3];
        for _ in 0..40_000 {
            counts[sample_log_categorical(&w, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        let frac = counts[2] as f64 / 40_000.0;
        assert!((frac - 0.75).abs() < 0.01, "{frac}");
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mean = (0..n).map(|_| sample_inverse_gamma(3.0, 4.0, &mut rng)).sum::<f64>() / n as f64;
        // mean = scale / (shape - 1)
        assert!((mean - 2.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn mean_se_of_constant() {
        assert_eq!(mean_and_se(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
