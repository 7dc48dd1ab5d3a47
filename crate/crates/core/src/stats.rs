//! Logistic distribution, Kolmogorov-Smirnov distance and the tempering relation
//! between latent-noise scale and ensemble confidence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

/// Asymptotic 5% two-sided Kolmogorov-Smirnov coefficient.
pub const KS_CRITICAL_COEFF_5PCT: f64 = 1.36;
pub const MIN_FIT_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("logistic scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("confidence {0} implies an infinite latent gap")]
    InfiniteGap(f64),
    #[error("no samples")]
    EmptySamples,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("noise scales must not both be zero")]
    ZeroNoise,
    #[error("noise scales must be non-negative")]
    NegativeNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams<F> {
    pub mu: F,
    pub s: F,
}

impl<F: Real> LogisticParams<F> {
    pub fn new(mu: F, s: F) -> Result<Self, StatsError> {
        if s > F::zero() {
            Ok(LogisticParams { mu, s })
        } else {
            Err(StatsError::NonPositiveScale(s.to_f64().unwrap_or(f64::NAN)))
        }
    }

    pub fn standard() -> Self {
        LogisticParams {
            mu: F::zero(),
            s: F::one(),
        }
    }

    pub fn cdf(&self, x: F) -> F {
        logistic_cdf(x, *self)
    }

    pub fn quantile(&self, p: F) -> Result<F, StatsError> {
        logistic_quantile(p, *self)
    }
}

/// The standard logistic function `1 / (1 + e^{-x})`.
pub fn sigmoid<F: Real>(x: F) -> F {
    // Evaluate on the side where the exponent is non-positive.
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn logistic_cdf<F: Real>(x: F, p: LogisticParams<F>) -> F {
    sigmoid((x - p.mu) / p.s)
}

pub fn logistic_quantile<F: Real>(p: F, params: LogisticParams<F>) -> Result<F, StatsError> {
    if !(p > F::zero() && p < F::one()) {
        return Err(StatsError::ProbabilityOutOfRange(p.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(params.mu + params.s * (p / (F::one() - p)).ln())
}

/// Draws from a logistic distribution by inverting its CDF.
pub fn sample_logistic<F: Real, R: rand::Rng + ?Sized>(rng: &mut R, params: LogisticParams<F>) -> F {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            let x = params.mu.to_f64().unwrap_or(0.0) + params.s.to_f64().unwrap_or(1.0) * (u / (1.0 - u)).ln();
            return F::of(x);
        }
    }
}

/// Sorted sample with its step CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf<F> {
    sorted: Vec<F>,
}

impl<F: Real> EmpiricalCdf<F> {
    pub fn new(samples: &[F]) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::EmptySamples);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples must not be NaN"));
        Ok(EmpiricalCdf { sorted })
    }

    pub fn samples(&self) -> &[F] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: F) -> F {
        let k = self.sorted.partition_point(|&v| v <= x);
        F::of_usize(k) / F::of_usize(self.sorted.len())
    }

    /// Supremum of `|F_n(x) - cdf(x)|`, taking both one-sided gaps at each step.
    pub fn ks_distance(&self, cdf: impl Fn(F) -> F) -> F {
        let n = F::of_usize(self.sorted.len());
        self.sorted.iter().enumerate().fold(F::zero(), |d, (i, &x)| {
            let f = cdf(x);
            let above = F::of_usize(i + 1) / n - f;
            let below = f - F::of_usize(i) / n;
            d.max(above).max(below)
        })
    }
}

/// KS distance between a sample and an arbitrary continuous CDF.
pub fn ks_statistic_with<F: Real>(samples: &[F], cdf: impl Fn(F) -> F) -> Result<F, StatsError> {
    Ok(EmpiricalCdf::new(samples)?.ks_distance(cdf))
}

pub fn ks_statistic<F: Real>(samples: &[F], params: LogisticParams<F>) -> Result<F, StatsError> {
    ks_statistic_with(samples, |x| logistic_cdf(x, params))
}

/// Asymptotic 5% critical value `1.36 / sqrt(n)`.
pub fn ks_critical_value<F: Real>(n: usize) -> F {
    F::of(KS_CRITICAL_COEFF_5PCT) / F::of_usize(n).sqrt()
}

/// Latent margin `w·z_mean + b` implied by an observed ensemble confidence when
/// the projected noise is standard logistic.
pub fn recover_latent_gap<F: Real>(p_a: F) -> Result<F, StatsError> {
    if p_a == F::zero() || p_a == F::one() {
        return Err(StatsError::InfiniteGap(p_a.to_f64().unwrap_or(f64::NAN)));
    }
    logistic_quantile(p_a, LogisticParams::standard())
}

/// Combined latent noise scale `sqrt(s_topk^2 + s_rephrase^2)`.
pub fn total_scale<F: Real>(s_topk: F, s_rephrase: F) -> Result<F, StatsError> {
    if s_topk < F::zero() || s_rephrase < F::zero() {
        return Err(StatsError::NegativeNoise);
    }
    let s = s_topk.hypot(s_rephrase);
    if s == F::zero() {
        Err(StatsError::ZeroNoise)
    } else {
        Ok(s)
    }
}

fn clip_unit<F: Real>(x: F) -> F {
    x.max(F::zero()).min(F::one())
}

/// First-order tempered confidence: `0.5 + (p - 0.5) / s`, clipped to `[0, 1]`.
pub fn temper_forward<F: Real>(p: F, s_topk: F, s_rephrase: F) -> Result<F, StatsError> {
    let s = total_scale(s_topk, s_rephrase)?;
    Ok(clip_unit(F::half() + (p - F::half()) / s))
}

/// Inverse of [`temper_forward`]: `0.5 + s (p_a - 0.5)`, clipped to `[0, 1]`.
pub fn temper_inverse<F: Real>(p_a: F, s_topk: F, s_rephrase: F) -> Result<F, StatsError> {
    let s = total_scale(s_topk, s_rephrase)?;
    Ok(clip_unit(F::half() + s * (p_a - F::half())))
}

/// Exact tempered confidence `F(gap / s)` for a latent gap and total noise scale.
pub fn tempered_exact<F: Real>(p: F, s_topk: F, s_rephrase: F) -> Result<F, StatsError> {
    let s = total_scale(s_topk, s_rephrase)?;
    let gap = logistic_quantile(p, LogisticParams::standard())?;
    Ok(sigmoid(gap / s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<F> {
    #[serde(rename = "D")]
    pub d: F,
    pub critical: F,
    #[serde(rename = "pass@0.05")]
    pub pass: bool,
    pub n: usize,
}

/// KS check of projected latent noise against the standard logistic at the 5%
/// level, using the asymptotic critical value.
pub fn logistic_fit_check<F: Real>(projections: &[F]) -> Result<LogisticFit<F>, StatsError> {
    if projections.len() < MIN_FIT_SAMPLES {
        return Err(StatsError::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: projections.len(),
        });
    }
    let d = ks_statistic(projections, LogisticParams::standard())?;
    let critical = ks_critical_value(projections.len());
    Ok(LogisticFit {
        d,
        critical,
        pass: d < critical,
        n: projections.len(),
    })
}
