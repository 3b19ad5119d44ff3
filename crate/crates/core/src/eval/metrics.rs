//! Threshold-sweep detection metrics. In-distribution is the positive class
//! and a sample is accepted as in-distribution when its confidence exceeds
//! the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub confidence: f64,
    pub is_in_distribution: bool,
    pub predicted: usize,
    /// `None` for out-of-distribution samples.
    pub label: Option<usize>,
}

impl ScoredSample {
    pub fn id(confidence: f64, predicted: usize, label: usize) -> Self {
        Self {
            confidence,
            is_in_distribution: true,
            predicted,
            label: Some(label),
        }
    }

    pub fn ood(confidence: f64, predicted: usize) -> Self {
        Self {
            confidence,
            is_in_distribution: false,
            predicted,
            label: None,
        }
    }
}

/// Acceptance counts at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    /// In-distribution samples accepted.
    pub tp: usize,
    /// Out-of-distribution samples accepted.
    pub fp: usize,
}

/// Counts at every threshold, in ascending threshold order: `-inf`, the
/// midpoints between consecutive distinct confidences, then `+inf`.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    pub thresholds: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
}

impl Sweep {
    pub fn new(samples: &[ScoredSample]) -> Result<Self> {
        let positives = samples.iter().filter(|s| s.is_in_distribution).count();
        let negatives = samples.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(Error::OneSided);
        }
        let mut sorted: Vec<(f64, bool)> = samples.iter().map(|s| (s.confidence, s.is_in_distribution)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut points = vec![SweepPoint {
            tp: positives,
            fp: negatives,
        }];
        let mut thresholds = vec![f64::NEG_INFINITY];
        let (mut tp, mut fp) = (positives, negatives);
        let mut i = 0;
        while i < sorted.len() {
            let score = sorted[i].0;
            while i < sorted.len() && sorted[i].0 == score {
                if sorted[i].1 {
                    tp -= 1;
                } else {
                    fp -= 1;
                }
                i += 1;
            }
            thresholds.push(match sorted.get(i) {
                Some(next) => score + (next.0 - score) / 2.0,
                None => f64::INFINITY,
            });
            points.push(SweepPoint { tp, fp });
        }
        Ok(Self {
            points,
            thresholds,
            positives,
            negatives,
        })
    }

    pub fn tpr(&self, j: usize) -> f64 {
        self.points[j].tp as f64 / self.positives as f64
    }

    pub fn fpr(&self, j: usize) -> f64 {
        self.points[j].fp as f64 / self.negatives as f64
    }

    pub fn tnr(&self, j: usize) -> f64 {
        (self.negatives - self.points[j].fp) as f64 / self.negatives as f64
    }
}

/// Area under the ROC curve; equal to `P(conf_id > conf_ood) + P(tie) / 2`.
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let sweep = Sweep::new(samples)?;
    // Trapezoids between consecutive ROC points, kept in integers: twice the
    // area times P * N.
    let twice: u128 = sweep
        .points
        .windows(2)
        .map(|w| ((w[0].fp - w[1].fp) * (w[0].tp + w[1].tp)) as u128)
        .sum();
    Ok(twice as f64 / (2 * sweep.positives * sweep.negatives) as f64)
}

/// Mean of FPR and FNR at the threshold where they are closest (ties to the
/// lower threshold).
pub fn eer(samples: &[ScoredSample]) -> Result<f64> {
    let sweep = Sweep::new(samples)?;
    let mut best = (f64::INFINITY, 0.0);
    for j in 0..sweep.points.len() {
        let (fpr, fnr) = (sweep.fpr(j), 1.0 - sweep.tpr(j));
        let gap = (fpr - fnr).abs();
        if gap < best.0 {
            best = (gap, (fpr + fnr) / 2.0);
        }
    }
    Ok(best.1)
}

/// Best balanced accuracy `(TPR + TNR) / 2` over all thresholds.
pub fn detection_accuracy(samples: &[ScoredSample]) -> Result<f64> {
    let sweep = Sweep::new(samples)?;
    Ok((0..sweep.points.len())
        .map(|j| 0.5 * (sweep.tpr(j) + sweep.tnr(j)))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// TNR at the largest threshold whose TPR reaches `target`.
pub fn tnr_at_tpr(samples: &[ScoredSample], target: f64) -> Result<f64> {
    let sweep = Sweep::new(samples)?;
    let j = (0..sweep.points.len())
        .rev()
        .find(|&j| sweep.tpr(j) >= target)
        .unwrap_or(0);
    Ok(sweep.tnr(j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub auroc: f64,
    pub eer: f64,
    pub detection_accuracy: f64,
    pub tnr_at_tpr80: f64,
}

pub fn detection_metrics(samples: &[ScoredSample]) -> Result<DetectionMetrics> {
    Ok(DetectionMetrics {
        auroc: auroc(samples)?,
        eer: eer(samples)?,
        detection_accuracy: detection_accuracy(samples)?,
        tnr_at_tpr80: tnr_at_tpr(samples, 0.8)?,
    })
}
