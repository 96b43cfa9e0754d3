//! Evaluation metrics.

use crate::error::{Result, SinfError};

/// Score used for out-of-distribution ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    LogDensity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodReport {
    pub auroc: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub score: ScoreKind,
}

/// Probability that a random in-distribution score exceeds a random
/// out-of-distribution score, ties counting one half.
///
/// Computed from average ranks of the pooled scores (Mann-Whitney U).
pub fn auroc(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    if scores_in.is_empty() || scores_out.is_empty() {
        return Err(SinfError::InvalidArgument(
            "AUROC needs nonempty score sets".into(),
        ));
    }
    if scores_in.iter().chain(scores_out).any(|v| v.is_nan()) {
        return Err(SinfError::InvalidData("NaN score".into()));
    }
    let mut pooled: Vec<(f64, bool)> = scores_in
        .iter()
        .map(|&s| (s, true))
        .chain(scores_out.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of 1-based average ranks of the in-distribution scores.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let in_count = pooled[i..=j].iter().filter(|p| p.1).count();
        rank_sum += avg_rank * in_count as f64;
        i = j + 1;
    }
    let n_in = scores_in.len() as f64;
    let n_out = scores_out.len() as f64;
    let u = rank_sum - n_in * (n_in + 1.0) / 2.0;
    Ok((u / (n_in * n_out)).clamp(0.0, 1.0))
}

pub fn ood_report(scores_in: &[f64], scores_out: &[f64]) -> Result<OodReport> {
    Ok(OodReport {
        auroc: auroc(scores_in, scores_out)?,
        n_in: scores_in.len(),
        n_out: scores_out.len(),
        score: ScoreKind::LogDensity,
    })
}
