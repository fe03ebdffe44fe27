use serde::{Deserialize, Serialize};

use super::TrajectorySummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStatistics {
    /// Indexed by original label.
    pub counts: Vec<usize>,
    /// Converged trajectories; the denominator of the frequencies.
    pub total: usize,
    pub non_converged: usize,
    pub frequencies: Vec<f64>,
    pub reference: Vec<f64>,
    /// `sqrt(p (1 - p) / T)` with `p` the reference probability.
    pub standard_errors: Vec<f64>,
    pub mean_steps: f64,
    pub max_steps: usize,
    /// Mean of `|<0|psi_N>|^2`.
    pub mean_fidelity: f64,
}

impl OutcomeStatistics {
    pub fn from_rows(rows: &[TrajectorySummary], reference: Vec<f64>) -> Self {
        let span = reference.len();
        let mut counts = vec![0usize; span];
        let mut total = 0;
        let mut steps = 0usize;
        let mut max_steps = 0;
        let mut fidelity = 0.0;
        for row in rows {
            steps += row.steps;
            max_steps = max_steps.max(row.steps);
            if let Some(label) = row.output {
                counts[label] += 1;
                total += 1;
                fidelity += 1.0 - row.final_infidelity;
            }
        }
        let denom = total.max(1) as f64;
        OutcomeStatistics {
            frequencies: counts.iter().map(|&c| c as f64 / denom).collect(),
            standard_errors: reference
                .iter()
                .map(|&p| (p * (1.0 - p) / denom).max(0.0).sqrt())
                .collect(),
            counts,
            total,
            non_converged: rows.len() - total,
            reference,
            mean_steps: steps as f64 / rows.len().max(1) as f64,
            max_steps,
            mean_fidelity: fidelity / denom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub z_scores: Vec<f64>,
    pub z_limit: f64,
    pub pass: bool,
}

/// Per-label z-scores of the frequencies against the reference; passes iff
/// every `|z| <= z_limit`. A label with zero standard error passes only on
/// an exact match.
pub fn compare_statistics(stats: &OutcomeStatistics, z_limit: f64) -> Verdict {
    let z_scores: Vec<f64> = stats
        .frequencies
        .iter()
        .zip(&stats.reference)
        .zip(&stats.standard_errors)
        .map(|((f, p), se)| {
            let diff = f - p;
            if *se > 0.0 {
                diff / se
            } else if diff.abs() <= 1e-12 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            }
        })
        .collect();
    let pass = z_scores.iter().all(|z| z.abs() <= z_limit);
    Verdict {
        z_scores,
        z_limit,
        pass,
    }
}
