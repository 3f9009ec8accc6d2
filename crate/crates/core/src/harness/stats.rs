//! Per-step replicate aggregates.

use crate::estimators::mean_and_se;

/// Quantile levels reported for every statistic.
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Aggregate of one statistic at one step over the replicates that report it.
#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub step: usize,
    pub statistic: String,
    pub count: usize,
    pub mean: f64,
    /// `sd / sqrt(R)`.
    pub se: f64,
    pub quantiles: [f64; 5],
    pub exact: Option<f64>,
}

/// Fraction of replicates with `|value - exact| >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceRow {
    pub step: usize,
    pub statistic: String,
    pub threshold: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicateStats {
    pub rows: Vec<StatRow>,
    pub exceedances: Vec<ExceedanceRow>,
}

impl ReplicateStats {
    pub fn get(&self, step: usize, statistic: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.step == step && r.statistic == statistic)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary of one sample in replicate order.
pub fn summarize(step: usize, statistic: &str, values: &[f64], exact: Option<f64>) -> StatRow {
    let (mean, se) = mean_and_se(values);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    StatRow {
        step,
        statistic: statistic.to_string(),
        count: values.len(),
        mean,
        se,
        quantiles: QUANTILE_LEVELS.map(|q| quantile(&sorted, q)),
        exact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_values() {
        let r = summarize(2, "x", &[4.0, 1.0, 3.0, 2.0, 5.0], Some(3.0));
        assert_eq!(r.mean, 3.0);
        assert!((r.se - (2.5f64 / 5.0).sqrt()).abs() < 1e-15);
        assert_eq!(r.quantiles[2], 3.0);
        assert!((r.quantiles[0] - 1.2).abs() < 1e-15);
        assert_eq!(r.count, 5);
    }
}
