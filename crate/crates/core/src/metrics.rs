//! Dataset-level calibration and discrimination metrics.
//!
//! All metrics consume [`ScoredItem`]s: the confidence of the predicted answer,
//! whether it was right, and the full categorical distribution over the labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ChoiceLabel;
use crate::Real;

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_TACE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no items to score")]
    Empty,
    #[error("number of bins must be at least 1")]
    NoBins,
    #[error("no item has confidence above the threshold")]
    AllBelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem<F> {
    pub confidence: F,
    pub correct: bool,
    /// Probability per label, indexed by label position.
    pub distribution: Vec<F>,
    pub gold: ChoiceLabel,
}

impl<F: Real> ScoredItem<F> {
    /// One-hot item for a deterministic prediction.
    pub fn one_hot(predicted: ChoiceLabel, gold: ChoiceLabel, num_choices: usize) -> Self {
        let mut distribution = vec![F::zero(); num_choices];
        distribution[predicted.index()] = F::one();
        ScoredItem {
            confidence: F::one(),
            correct: predicted == gold,
            distribution,
            gold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin<F> {
    pub lower: F,
    pub upper: F,
    pub mean_confidence: F,
    pub mean_accuracy: F,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport<F> {
    pub accuracy: F,
    pub ece: F,
    pub tace: F,
    pub brier: F,
    /// Absent when every item is correct or every item is wrong.
    pub auroc: Option<F>,
    pub bins: Vec<ReliabilityBin<F>>,
}

fn correct_value<F: Real>(item: &ScoredItem<F>) -> F {
    if item.correct {
        F::one()
    } else {
        F::zero()
    }
}

pub fn accuracy<F: Real>(items: &[ScoredItem<F>]) -> Result<F, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = items.iter().filter(|i| i.correct).count();
    Ok(F::of_usize(correct) / F::of_usize(items.len()))
}

/// Equal-width bin index on `[0, 1]` with right-inclusive edges: bin 0 is
/// `[0, 1/n]`, bin `i > 0` is `(i/n, (i+1)/n]`.
fn bin_index<F: Real>(confidence: F, num_bins: usize) -> usize {
    let n = F::of_usize(num_bins);
    let edge = |i: usize| F::of_usize(i) / n;
    let raw = (confidence * n).ceil().to_usize().unwrap_or(0);
    let mut idx = raw.saturating_sub(1).min(num_bins - 1);
    while idx > 0 && confidence <= edge(idx) {
        idx -= 1;
    }
    while idx + 1 < num_bins && confidence > edge(idx + 1) {
        idx += 1;
    }
    idx
}

/// Equal-width reliability table. Every bin is returned, empty ones with count 0
/// and zero means.
pub fn reliability_bins<F: Real>(
    items: &[ScoredItem<F>],
    num_bins: usize,
) -> Result<Vec<ReliabilityBin<F>>, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    if num_bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let mut conf_sum = vec![F::zero(); num_bins];
    let mut acc_sum = vec![F::zero(); num_bins];
    let mut counts = vec![0usize; num_bins];
    for item in items {
        let b = bin_index(item.confidence, num_bins);
        conf_sum[b] = conf_sum[b] + item.confidence;
        acc_sum[b] = acc_sum[b] + correct_value(item);
        counts[b] += 1;
    }
    let n = F::of_usize(num_bins);
    Ok((0..num_bins)
        .map(|b| {
            let count = counts[b];
            let (mean_confidence, mean_accuracy) = if count == 0 {
                (F::zero(), F::zero())
            } else {
                let c = F::of_usize(count);
                (conf_sum[b] / c, acc_sum[b] / c)
            };
            ReliabilityBin {
                lower: F::of_usize(b) / n,
                upper: F::of_usize(b + 1) / n,
                mean_confidence,
                mean_accuracy,
                count,
            }
        })
        .collect())
}

/// ECE recomputed from a reliability table; `ece` is defined through this so the
/// persisted bins reproduce it exactly.
pub fn ece_from_bins<F: Real>(bins: &[ReliabilityBin<F>]) -> F {
    let total: usize = bins.iter().map(|b| b.count).sum();
    if total == 0 {
        return F::zero();
    }
    let total = F::of_usize(total);
    bins.iter().filter(|b| b.count > 0).fold(F::zero(), |acc, b| {
        acc + F::of_usize(b.count) / total * (b.mean_confidence - b.mean_accuracy).abs()
    })
}

/// Expected calibration error over `num_bins` equal-width bins.
pub fn ece<F: Real>(items: &[ScoredItem<F>], num_bins: usize) -> Result<F, MetricsError> {
    Ok(ece_from_bins(&reliability_bins(items, num_bins)?))
}

/// Thresholded adaptive calibration error.
///
/// Items with confidence above `threshold` are sorted by confidence and cut into
/// `num_bins` equal-mass groups (the first `N mod B` groups take one extra item).
/// Items sharing a confidence value are never split across groups: a tie run
/// stays in the group of its first member. The result is the unweighted mean of
/// `|mean confidence - mean accuracy|` over the non-empty groups.
pub fn tace<F: Real>(items: &[ScoredItem<F>], num_bins: usize, threshold: F) -> Result<F, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    if num_bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let mut kept: Vec<&ScoredItem<F>> = items.iter().filter(|i| i.confidence > threshold).collect();
    if kept.is_empty() {
        return Err(MetricsError::AllBelowThreshold);
    }
    kept.sort_by(|a, b| a.confidence.partial_cmp(&b.confidence).expect("confidence is not NaN"));

    let n = kept.len();
    let base = n / num_bins;
    let extra = n % num_bins;
    let chunk_of = |pos: usize| {
        // positions [0, (base+1)*extra) belong to the larger chunks
        let big = (base + 1) * extra;
        if pos < big {
            pos / (base + 1)
        } else {
            extra + (pos - big) / base.max(1)
        }
    };

    let mut conf_sum = vec![F::zero(); num_bins];
    let mut acc_sum = vec![F::zero(); num_bins];
    let mut counts = vec![0usize; num_bins];
    let mut current = 0;
    for (pos, item) in kept.iter().enumerate() {
        let starts_new_value = pos == 0 || item.confidence != kept[pos - 1].confidence;
        if starts_new_value {
            current = chunk_of(pos);
        }
        conf_sum[current] = conf_sum[current] + item.confidence;
        acc_sum[current] = acc_sum[current] + correct_value(item);
        counts[current] += 1;
    }

    let (total, occupied) =
        (0..num_bins)
            .filter(|&b| counts[b] > 0)
            .fold((F::zero(), 0usize), |(total, occupied), b| {
                let c = F::of_usize(counts[b]);
                (total + (conf_sum[b] / c - acc_sum[b] / c).abs(), occupied + 1)
            });
    Ok(total / F::of_usize(occupied))
}

/// Multi-class Brier score: mean squared distance between the predicted
/// distribution and the one-hot gold label. Ranges over `[0, 2]`.
pub fn brier<F: Real>(items: &[ScoredItem<F>]) -> Result<F, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total = items.iter().fold(F::zero(), |acc, item| {
        let width = item.distribution.len().max(item.gold.index() + 1);
        let score = (0..width).fold(F::zero(), |s, l| {
            let p = item.distribution.get(l).copied().unwrap_or_else(F::zero);
            let target = if l == item.gold.index() { F::one() } else { F::zero() };
            s + (p - target) * (p - target)
        });
        acc + score
    });
    Ok(total / F::of_usize(items.len()))
}

/// Probability that a random correct item outranks a random incorrect one on
/// confidence, ties counting one half (Mann-Whitney U with mid-ranks).
///
/// Returns `None` when either class is empty.
pub fn auroc<F: Real>(items: &[ScoredItem<F>]) -> Option<F> {
    let n_pos = items.iter().filter(|i| i.correct).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<&ScoredItem<F>> = items.iter().collect();
    order.sort_by(|a, b| a.confidence.partial_cmp(&b.confidence).expect("confidence is not NaN"));

    // Twice the rank sum of the positives, kept integral: a tie run occupying
    // 1-based ranks i+1..=j has mid-rank (i+1+j)/2.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && order[j].confidence == order[i].confidence {
            j += 1;
        }
        let positives = order[i..j].iter().filter(|x| x.correct).count() as u128;
        twice_rank_sum += positives * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n_pos_wide = n_pos as u128;
    let twice_u = twice_rank_sum - n_pos_wide * (n_pos_wide + 1);
    Some(F::from_u128(twice_u).expect("finite") / F::from_u128(2 * n_pos_wide * n_neg as u128).expect("finite"))
}

/// All metrics with the given binning.
pub fn calibration_report<F: Real>(
    items: &[ScoredItem<F>],
    num_bins: usize,
    tace_bins: usize,
    tace_threshold: F,
) -> Result<CalibrationReport<F>, MetricsError> {
    let bins = reliability_bins(items, num_bins)?;
    Ok(CalibrationReport {
        accuracy: accuracy(items)?,
        ece: ece_from_bins(&bins),
        tace: tace(items, tace_bins, tace_threshold)?,
        brier: brier(items)?,
        auroc: auroc(items),
        bins,
    })
}

/// [`calibration_report`] with 10 ECE bins, 10 TACE bins and TACE threshold 0.01.
pub fn default_report<F: Real>(items: &[ScoredItem<F>]) -> Result<CalibrationReport<F>, MetricsError> {
    calibration_report(items, DEFAULT_BINS, DEFAULT_BINS, F::of(DEFAULT_TACE_THRESHOLD))
}
