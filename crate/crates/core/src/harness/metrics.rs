//! Per-evaluation records and the metrics that fill them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::RawDataset;
use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;
use crate::model::logits;

/// Column order of every per-run CSV.
pub const METRICS_COLUMNS: [&str; 6] = [
    "t",
    "test_error",
    "avg_noise_magnitude",
    "consensus_residual",
    "global_objective",
    "cumulative_epsilon",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: usize,
    pub test_error: f64,
    pub avg_noise_magnitude: f64,
    pub consensus_residual: f64,
    pub global_objective: f64,
    /// `t * E * eps_bar` under linear composition.
    pub cumulative_epsilon: f64,
}

/// One seed's evaluation rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    /// Smallest test error over all rows.
    pub fn best_test_error(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.test_error).reduce(f64::min)
    }

    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.rows.is_empty() {
            w.write_record(METRICS_COLUMNS)?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != METRICS_COLUMNS {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: 0,
                reason: format!("unexpected columns {header:?}"),
            });
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
        Ok(Self { seed, rows })
    }
}

/// `t * E * eps_bar`; zero at `t = 0` even for an infinite budget.
pub fn cumulative_epsilon(t: usize, local_updates: usize, eps_bar: f64) -> f64 {
    if t == 0 {
        0.0
    } else {
        (t * local_updates) as f64 * eps_bar
    }
}

/// Fraction of `test` misclassified by `argmax_k x^T w_{:,k}`, ties going to
/// the lowest class.
pub fn evaluate_test_error(w: &ParamMatrix, test: &RawDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::usage("empty test set"));
    }
    let expected = (test.num_features(), test.num_classes());
    if w.shape() != expected {
        return Err(Error::DimensionMismatch {
            context: "test evaluation",
            expected,
            actual: w.shape(),
        });
    }
    let mut wrong = 0usize;
    for (x, &y) in test.features().iter().zip(test.labels()) {
        let scores = logits(w, x)?;
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = k;
            }
        }
        if best != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}

/// `(1 / (P J K)) sum_p sum_jk |xi_pjk|` over one record per agent.
pub fn avg_noise_magnitude(noise: &[ParamMatrix]) -> f64 {
    let entries: usize = noise.iter().map(ParamMatrix::len).sum();
    if entries == 0 {
        return 0.0;
    }
    noise.iter().map(ParamMatrix::norm_l1).sum::<f64>() / entries as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_pick_class_zero() {
        let test = RawDataset::new(vec![vec![1.0]; 4], vec![0, 1, 0, 1], 2).unwrap();
        let err = evaluate_test_error(&ParamMatrix::zeros(1, 2), &test).unwrap();
        assert_eq!(err, 0.5);
    }

    #[test]
    fn noise_magnitude_examples() {
        assert_eq!(avg_noise_magnitude(&[ParamMatrix::zeros(2, 3)]), 0.0);
        assert_eq!(avg_noise_magnitude(&[ParamMatrix::filled(1, 1, -3.0)]), 3.0);
    }

    #[test]
    fn cumulative_epsilon_is_linear() {
        assert_eq!(cumulative_epsilon(100, 10, 0.05), 1000.0 * 0.05);
        assert_eq!(cumulative_epsilon(0, 1, f64::INFINITY), 0.0);
    }
}
