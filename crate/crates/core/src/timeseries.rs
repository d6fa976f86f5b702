//! Monthly embedding-distance series and weighted pooling across seed terms.

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{bucket_by_month, DocumentSet, GroupLabels, YearMonth};
use crate::embedreg::{self, DistanceEstimate, EmbedConfig, EmbedError, EmbeddingTable};
use crate::seed::{derive_seed, stream};

pub const DEFAULT_MIN_USERS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum SeriesError {
    #[error("estimates and weights differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("nothing to average")]
    Empty,
    #[error("weights must be positive and finite")]
    BadWeight,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyEstimate {
    pub month: YearMonth,
    pub target: String,
    /// Absent for skipped months.
    pub estimate: Option<DistanceEstimate>,
    pub n_group0: usize,
    pub n_group1: usize,
    pub dropped_docs: usize,
    /// Seed the month's analysis ran with.
    pub seed: u64,
    pub skipped_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesConfig {
    /// `seed` here is the master seed; each month derives its own.
    pub embed: EmbedConfig,
    pub min_users: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            embed: EmbedConfig::default(),
            min_users: DEFAULT_MIN_USERS,
        }
    }
}

/// Seed used for `month` under `master`. Depends only on the month, so data
/// in other months cannot affect it.
pub fn month_seed(master: u64, month: YearMonth) -> u64 {
    derive_seed(derive_seed(master, stream::MONTH), month.ordinal() as u64)
}

/// One record per calendar month present in `docs`. Each month is analysed
/// independently (sampling included) with [`month_seed`]; months where either
/// group has fewer than `min_users` usable authors are emitted as skipped.
pub fn monthly_distance_series(
    docs: &DocumentSet,
    groups: &GroupLabels,
    target: &str,
    table: &EmbeddingTable,
    config: &SeriesConfig,
) -> Result<Vec<MonthlyEstimate>, SeriesError> {
    let buckets: Vec<(YearMonth, DocumentSet)> = bucket_by_month(docs).into_iter().collect();
    buckets
        .par_iter()
        .map(|(month, month_docs)| {
            let seed = month_seed(config.embed.seed, *month);
            let cfg = EmbedConfig {
                seed,
                ..config.embed.clone()
            };
            let prepared = embedreg::prepare_observations(month_docs, groups, target, table, &cfg)?;
            let mut record = MonthlyEstimate {
                month: *month,
                target: prepared.target.clone(),
                estimate: None,
                n_group0: prepared.n_group0,
                n_group1: prepared.n_group1,
                dropped_docs: prepared.dropped_docs,
                seed,
                skipped_reason: None,
            };
            let floor = config.min_users.max(2);
            if prepared.n_group0 < floor || prepared.n_group1 < floor {
                record.skipped_reason = Some(format!(
                    "fewer than {floor} users in a group (group0={}, group1={})",
                    prepared.n_group0, prepared.n_group1
                ));
            } else {
                record.estimate = Some(embedreg::analyze(&prepared, &cfg)?.estimate);
            }
            Ok(record)
        })
        .collect()
}

/// `Σ wᵢ vᵢ / Σ wᵢ`.
pub fn weighted_average_estimate(values: &[f64], weights: &[f64]) -> Result<f64, SeriesError> {
    if values.len() != weights.len() {
        return Err(SeriesError::LengthMismatch(values.len(), weights.len()));
    }
    if values.is_empty() {
        return Err(SeriesError::Empty);
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(SeriesError::BadWeight);
    }
    let total: f64 = weights.iter().sum();
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total)
}

/// Pools the corrected distances of several estimates.
pub fn weighted_average_distance(estimates: &[DistanceEstimate], weights: &[f64]) -> Result<f64, SeriesError> {
    let values: Vec<f64> = estimates.iter().map(|e| e.corrected_sq).collect();
    weighted_average_estimate(&values, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn averages() {
        assert_eq!(weighted_average_estimate(&[1.0, 3.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(weighted_average_estimate(&[1.0, 3.0], &[3.0, 1.0]).unwrap(), 1.5);
        assert!((weighted_average_estimate(&[-0.7], &[12.0]).unwrap() + 0.7).abs() < 1e-15);
        assert!(matches!(
            weighted_average_estimate(&[1.0], &[1.0, 2.0]),
            Err(SeriesError::LengthMismatch(1, 2))
        ));
        assert!(weighted_average_estimate(&[1.0], &[0.0]).is_err());
        assert!(weighted_average_estimate(&[], &[]).is_err());
    }

    #[test]
    fn month_seeds_differ() {
        let a = month_seed(1, YearMonth { year: 2020, month: 3 });
        let b = month_seed(1, YearMonth { year: 2020, month: 4 });
        assert_ne!(a, b);
    }

    proptest! {
        #[test]
        fn scale_invariant(
            pairs in prop::collection::vec((-10.0f64..10.0, 0.1f64..100.0), 1..10),
            c in 0.01f64..100.0,
        ) {
            let (v, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let a = weighted_average_estimate(&v, &w).unwrap();
            let b = weighted_average_estimate(&v, &scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }
}
