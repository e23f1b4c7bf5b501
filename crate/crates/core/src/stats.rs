//! Goodness-of-fit tests and interval estimates used by the verification suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Pearson chi-square test of equal cell probabilities.
pub fn chi_square_uniform(counts: &[u64]) -> TestOutcome {
    let k = counts.len();
    assert!(k >= 2, "need at least two cells");
    let n: u64 = counts.iter().sum();
    let expected = n as f64 / k as f64;
    let statistic: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    TestOutcome { statistic, p_value: dist.sf(statistic) }
}

/// Histogram of angles in `[−π, π)` (any real input is wrapped) into `bins` equal cells.
pub fn angle_histogram(angles: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let tau = std::f64::consts::TAU;
    for &a in angles {
        let u = (a + std::f64::consts::PI).rem_euclid(tau) / tau;
        let idx = ((u * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
}

/// Asymptotic Kolmogorov distribution survival function `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> TestOutcome {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    // Stephens' small-sample correction.
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    TestOutcome { statistic: d, p_value: kolmogorov_sf(lambda) }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestOutcome {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    TestOutcome { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Standard error read off the one-sigma Wilson interval (never zero for finite n).
pub fn wilson_se(successes: u64, trials: u64) -> f64 {
    let (lo, hi) = wilson_interval(successes, trials, 1.0);
    0.5 * (hi - lo)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanVar {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanVar::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chi_square_of_exact_uniform_counts() {
        let out = chi_square_uniform(&[100, 100, 100, 100]);
        assert_eq!(out.statistic, 0.0);
        assert!((out.p_value - 1.0).abs() < 1e-12);
        let skewed = chi_square_uniform(&[400, 0, 0, 0]);
        assert!(skewed.p_value < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Tabulated critical values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.9495) - 0.001).abs() < 1e-4);
    }

    #[test]
    fn ks_accepts_uniform_and_rejects_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_test(&xs, |x| x.clamp(0.0, 1.0)).p_value > 1e-3);
        assert!(ks_test(&xs, |x| (x * 1.2).clamp(0.0, 1.0)).p_value < 1e-6);
        let ys: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_two_sample(&xs, &ys).p_value > 1e-3);
        let zs: Vec<f64> = ys.iter().map(|y| y * 0.8).collect();
        assert!(ks_two_sample(&xs, &zs).p_value < 1e-6);
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        assert!(wilson_se(0, 100) > 0.0);
        assert_eq!(wilson_interval(0, 0, 1.0), (0.0, 1.0));
    }

    #[test]
    fn mean_var_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let acc: MeanVar = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((acc.mean - mean).abs() < 1e-14);
        assert!((acc.variance() - var).abs() < 1e-12);
    }
}
