//! Hypothesis tests and bootstrap resampling.
//!
//! All tests are two-sided. Student-t tail probabilities come from the
//! regularized incomplete beta function evaluated by its continued fraction
//! (modified Lentz); the bootstrap draws from [`SeededRng`].

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl BootstrapResult {
    pub fn excludes(&self, value: f64) -> bool {
        value < self.ci_low || value > self.ci_high
    }
}

const CF_EPS: f64 = 1e-16;
const CF_MAX_ITER: usize = 100_000;

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// `P(T <= t)` for Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided tail probability `P(|T| >= |t|)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn one_sample_t(sample: &[f64], mu0: f64) -> Result<TestResult, StatsError> {
    let n = sample.len();
    if n < 2 {
        return Err(StatsError::DegenerateSample(format!("n = {n} < 2")));
    }
    let var = variance(sample);
    if var <= 0.0 {
        return Err(StatsError::DegenerateSample("zero variance".into()));
    }
    let t = (mean(sample) - mu0) / (var / n as f64).sqrt();
    let df = (n - 1) as f64;
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_sided(t, df),
        df: Some(df),
        n: vec![n],
    })
}

/// Welch's unequal-variance t-test.
pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::DegenerateSample(format!(
            "sample sizes {} and {} (need 2 each)",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    if va + vb <= 0.0 {
        return Err(StatsError::DegenerateSample("both samples have zero variance".into()));
    }
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_sided(t, df),
        df: Some(df),
        n: vec![a.len(), b.len()],
    })
}

/// Largest pooled sample for which the exact null distribution is used.
pub const MANN_WHITNEY_EXACT_MAX: usize = 12;

/// Mann-Whitney U for `a` (midranks for ties). Exact two-sided p-value by
/// enumeration for small tie-free samples, otherwise the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::InvalidInput("both samples need at least one value".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|v| (*v, true))
        .chain(b.iter().map(|v| (*v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += midrank * pooled[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let ties = tie_term > 0.0;

    let p_value = if n <= MANN_WHITNEY_EXACT_MAX && !ties {
        exact_mann_whitney_p(u, na, nb)
    } else {
        let mu = (na * nb) as f64 / 2.0;
        let nf = n as f64;
        let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
            (2.0 * (1.0 - normal_cdf(z))).min(1.0)
        }
    };
    Ok(TestResult {
        statistic: u,
        p_value,
        df: None,
        n: vec![na, nb],
    })
}

fn exact_mann_whitney_p(u: f64, na: usize, nb: usize) -> f64 {
    let n = na + nb;
    let offset = (na * (na + 1)) as f64 / 2.0;
    let (mut total, mut le, mut ge) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let rank_sum: usize = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| k + 1).sum();
        let candidate = rank_sum as f64 - offset;
        total += 1;
        if candidate <= u {
            le += 1;
        }
        if candidate >= u {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

pub const MIN_BOOTSTRAP_REPLICATES: usize = 100;

/// Percentile bootstrap of `statistic` over `sample`.
///
/// Replicate `r` resamples with [`SeededRng::substream`]`(seed, r)`, so any
/// replicate can be recomputed in isolation. The standard error is the
/// sample standard deviation of the replicate statistics; the interval
/// takes the lower-nearest and upper-nearest order statistics at
/// `(1 - level) / 2` and `(1 + level) / 2`.
pub fn bootstrap<T, F>(
    sample: &[T],
    statistic: F,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult, StatsError>
where
    T: Clone,
    F: Fn(&[T]) -> f64,
{
    if sample.is_empty() {
        return Err(StatsError::InvalidInput("empty sample".into()));
    }
    if replicates < MIN_BOOTSTRAP_REPLICATES {
        return Err(StatsError::InvalidInput(format!(
            "{replicates} replicates (need at least {MIN_BOOTSTRAP_REPLICATES})"
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(StatsError::InvalidInput(format!("level {level} outside (0, 1)")));
    }
    let n = sample.len();
    let mut resample: Vec<T> = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let mut rng = SeededRng::substream(seed, r as u64);
        resample.clear();
        resample.extend((0..n).map(|_| sample[rng.index(n)].clone()));
        stats.push(statistic(&resample));
    }
    let se = variance(&stats).max(0.0).sqrt();
    stats.sort_by(f64::total_cmp);
    let last = (replicates - 1) as f64;
    let lo = ((1.0 - level) / 2.0 * last).floor() as usize;
    let hi = ((1.0 + level) / 2.0 * last).ceil() as usize;
    Ok(BootstrapResult {
        point: statistic(sample),
        se,
        ci_low: stats[lo],
        ci_high: stats[hi.min(replicates - 1)],
        level,
        replicates,
        seed,
    })
}
