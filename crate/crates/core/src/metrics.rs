//! Segmentation metrics: the GRES triple (gIoU, cIoU, N-acc) and set
//! matching for grounded caption generation (precision/recall at an IoU
//! threshold, mean matched IoU).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{iou, Mask};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_acc: Option<f64>,
    /// Precision at the IoU threshold under uniform confidence; stands in for
    /// AP50 since predicted mask sets carry no ranking.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_50: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_50: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_matched_iou: Option<f64>,
    pub sample_count: usize,
}

fn nonempty(m: Option<&Mask>) -> Option<&Mask> {
    m.filter(|m| !m.is_empty())
}

/// GRES-style metrics over `(prediction, truth)` pairs, where `None` or an
/// all-zero mask means "no target".
///
/// cIoU only accumulates samples whose truth is non-empty; N-acc only looks
/// at samples whose truth is empty.
pub fn gres_metrics(pairs: &[(Option<Mask>, Option<Mask>)]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("gres_metrics needs at least one pair"));
    }
    let mut acc = GresAccumulator::default();
    for (pred, truth) in pairs {
        acc.add(pred.as_ref(), truth.as_ref())?;
    }
    Ok(acc.report())
}

/// Running sums behind [`gres_metrics`], for scoring a stream of pairs in
/// constant memory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GresAccumulator {
    giou_sum: f64,
    inter_sum: usize,
    union_sum: usize,
    targeted: usize,
    no_target: usize,
    no_target_hits: usize,
    samples: usize,
}

impl GresAccumulator {
    /// Adds one sample and returns its IoU.
    pub fn add(&mut self, pred: Option<&Mask>, truth: Option<&Mask>) -> Result<f64> {
        let pred_ne = nonempty(pred);
        let truth_ne = nonempty(truth);
        if let (Some(p), Some(t)) = (pred, truth) {
            if p.dims() != t.dims() {
                return Err(Error::dims(p.dims(), t.dims()));
            }
        }
        let sample_iou = match (pred_ne, truth_ne) {
            (None, None) => 1.0,
            (Some(_), None) | (None, Some(_)) => 0.0,
            (Some(p), Some(t)) => iou(p, t)?,
        };
        self.giou_sum += sample_iou;
        self.samples += 1;

        match truth_ne {
            Some(t) => {
                self.targeted += 1;
                if let Some(p) = pred_ne {
                    let (i, u) = p.intersection_union(t)?;
                    self.inter_sum += i;
                    self.union_sum += u;
                } else {
                    self.union_sum += t.area();
                }
            }
            None => {
                self.no_target += 1;
                self.no_target_hits += pred_ne.is_none() as usize;
            }
        }
        Ok(sample_iou)
    }

    /// Metrics over everything added so far; all fields are absent when
    /// nothing was added.
    pub fn report(&self) -> MetricReport {
        MetricReport {
            g_iou: (self.samples > 0).then(|| self.giou_sum / self.samples as f64),
            c_iou: (self.targeted > 0).then(|| self.inter_sum as f64 / self.union_sum as f64),
            n_acc: (self.no_target > 0).then(|| self.no_target_hits as f64 / self.no_target as f64),
            sample_count: self.samples,
            ..MetricReport::default()
        }
    }
}

/// One-to-one matching of predicted to ground-truth masks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchSummary {
    /// `(pred index, truth index, iou)` in the order they were matched.
    pub pairs: Vec<(usize, usize, f64)>,
    pub n_pred: usize,
    pub n_truth: usize,
    /// Matched pairs with IoU at or above the threshold.
    pub hits: usize,
}

impl MatchSummary {
    pub fn report(&self) -> MetricReport {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let mean = if self.pairs.is_empty() {
            0.0
        } else {
            self.pairs.iter().map(|p| p.2).sum::<f64>() / self.pairs.len() as f64
        };
        MetricReport {
            precision_50: Some(ratio(self.hits, self.n_pred)),
            recall_50: Some(ratio(self.hits, self.n_truth)),
            mean_matched_iou: Some(mean),
            sample_count: 1,
            ..MetricReport::default()
        }
    }
}

/// Greedy one-to-one matching over an IoU matrix (`matrix[pred][truth]`) by
/// descending IoU. Pairs with zero overlap are never matched. Ties go to the
/// lower prediction index, then the lower truth index.
pub fn greedy_match(matrix: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n_truth = matrix.first().map_or(0, Vec::len);
    let mut candidates: Vec<(usize, usize, f64)> = matrix
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v)))
        .filter(|c| c.2 > 0.0)
        .collect();
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut pred_used = vec![false; matrix.len()];
    let mut truth_used = vec![false; n_truth];
    let mut pairs = Vec::new();
    for (i, j, v) in candidates {
        if pred_used[i] || truth_used[j] {
            continue;
        }
        pred_used[i] = true;
        truth_used[j] = true;
        pairs.push((i, j, v));
    }
    pairs
}

pub fn match_sets(pred: &[Mask], truth: &[Mask], iou_threshold: f64) -> Result<MatchSummary> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::InvalidMask(format!("IoU threshold {iou_threshold} outside (0, 1)")));
    }
    let matrix = pred
        .iter()
        .map(|p| truth.iter().map(|t| iou(p, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let pairs = greedy_match(&matrix);
    let hits = pairs.iter().filter(|p| p.2 >= iou_threshold).count();
    Ok(MatchSummary {
        pairs,
        n_pred: pred.len(),
        n_truth: truth.len(),
        hits,
    })
}

pub fn matchset_metrics(pred: &[Mask], truth: &[Mask], iou_threshold: f64) -> Result<MetricReport> {
    Ok(match_sets(pred, truth, iou_threshold)?.report())
}

/// Pools several per-sample matchings: precision and recall from summed
/// counts, mean IoU over every matched pair.
pub fn pool_matches(summaries: &[MatchSummary]) -> MetricReport {
    let mut pool = MatchPool::default();
    for s in summaries {
        pool.add(s);
    }
    pool.report()
}

/// Running pooled counts behind [`pool_matches`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchPool {
    iou_sum: f64,
    pairs: usize,
    n_pred: usize,
    n_truth: usize,
    hits: usize,
    samples: usize,
}

impl MatchPool {
    pub fn add(&mut self, s: &MatchSummary) {
        self.iou_sum += s.pairs.iter().map(|p| p.2).sum::<f64>();
        self.pairs += s.pairs.len();
        self.n_pred += s.n_pred;
        self.n_truth += s.n_truth;
        self.hits += s.hits;
        self.samples += 1;
    }

    pub fn report(&self) -> MetricReport {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        MetricReport {
            precision_50: Some(ratio(self.hits, self.n_pred)),
            recall_50: Some(ratio(self.hits, self.n_truth)),
            mean_matched_iou: Some(if self.pairs == 0 { 0.0 } else { self.iou_sum / self.pairs as f64 }),
            sample_count: self.samples,
            ..MetricReport::default()
        }
    }
}
