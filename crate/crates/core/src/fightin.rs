//! Weighted log-odds ratios with an informative Dirichlet prior.
//!
//! For term `w` with group counts `y_Aw`, `y_Bw`, group totals `n_A`, `n_B`,
//! prior mass `α_w` and prior scale `a0 = Σ α_w`:
//!
//! ```text
//! δ_w   = ln[(y_Aw + α_w) / (n_A + a0 − y_Aw − α_w)] − ln[(y_Bw + α_w) / (n_B + a0 − y_Bw − α_w)]
//! σ²_w  = 1/(y_Aw + α_w) + 1/(y_Bw + α_w)
//! z_w   = δ_w / σ_w
//! ```
//!
//! Positive `z` favors group A.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{DocumentSet, GroupLabels};
use crate::lexicon::MoralDictionary;

pub const DEFAULT_PRIOR_SCALE: f64 = 500.0;
pub const BIGRAM_JOINER: char = '_';

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FightinError {
    #[error("ngram_max must be 1 or 2, got {0}")]
    BadNgramMax(usize),
    #[error("author {0:?} has no group label")]
    UnlabeledAuthor(String),
    #[error("group {0} has no tokens after filtering")]
    EmptyGroup(Side),
    #[error("prior has no weight for term {0:?}")]
    MissingPrior(String),
    #[error("prior scale must be positive and finite, got {0}")]
    BadPriorScale(f64),
    #[error("k must be positive")]
    BadK,
    #[error("no results to rank")]
    NoResults,
}

/// Which side of the comparison a term favors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    A,
    B,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermCounts {
    pub counts_a: HashMap<String, u64>,
    pub counts_b: HashMap<String, u64>,
    pub total_a: u64,
    pub total_b: u64,
    /// Sorted union of terms.
    pub vocabulary: Vec<String>,
    pub ngram_max: usize,
}

impl TermCounts {
    /// Builds counts from explicit tables; totals are the column sums. Zero
    /// entries are dropped, so every vocabulary term has a positive pooled count.
    pub fn from_maps(mut counts_a: HashMap<String, u64>, mut counts_b: HashMap<String, u64>, ngram_max: usize) -> Self {
        counts_a.retain(|_, v| *v > 0);
        counts_b.retain(|_, v| *v > 0);
        let mut vocabulary: Vec<String> = counts_a.keys().chain(counts_b.keys()).cloned().collect();
        vocabulary.sort_unstable();
        vocabulary.dedup();
        Self {
            total_a: counts_a.values().sum(),
            total_b: counts_b.values().sum(),
            counts_a,
            counts_b,
            vocabulary,
            ngram_max,
        }
    }

    pub fn count(&self, side: Side, term: &str) -> u64 {
        let m = match side {
            Side::A => &self.counts_a,
            Side::B => &self.counts_b,
        };
        m.get(term).copied().unwrap_or(0)
    }

    pub fn pooled(&self, term: &str) -> u64 {
        self.count(Side::A, term) + self.count(Side::B, term)
    }

    /// The same table with A and B exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            counts_a: self.counts_b.clone(),
            counts_b: self.counts_a.clone(),
            total_a: self.total_b,
            total_b: self.total_a,
            vocabulary: self.vocabulary.clone(),
            ngram_max: self.ngram_max,
        }
    }
}

#[derive(Default)]
struct Partial {
    a: HashMap<String, u64>,
    b: HashMap<String, u64>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        for (k, v) in other.a {
            *self.a.entry(k).or_default() += v;
        }
        for (k, v) in other.b {
            *self.b.entry(k).or_default() += v;
        }
        self
    }
}

/// Counts unigrams (and bigrams when `ngram_max == 2`) per group. Group A is
/// label `false`. Excluded tokens are removed before bigram formation and
/// break adjacency. `dict_filter` restricts unigrams to dictionary matches.
pub fn count_terms(
    docs: &DocumentSet,
    groups: &GroupLabels,
    ngram_max: usize,
    min_count: u64,
    exclude: &HashSet<String>,
    dict_filter: Option<&MoralDictionary>,
) -> Result<TermCounts, FightinError> {
    if !(1..=2).contains(&ngram_max) {
        return Err(FightinError::BadNgramMax(ngram_max));
    }
    if let Some(d) = docs.iter().find(|d| groups.get(&d.author_id).is_none()) {
        return Err(FightinError::UnlabeledAuthor(d.author_id.clone()));
    }
    let partial = docs
        .docs()
        .par_iter()
        .fold(Partial::default, |mut acc, d| {
            let side_b = groups.get(&d.author_id).unwrap_or(false);
            let map = if side_b { &mut acc.b } else { &mut acc.a };
            for segment in d.tokens.split(|t| exclude.contains(t)) {
                for t in segment {
                    if dict_filter.is_none_or(|dict| dict.matches_any(t)) {
                        *map.entry(t.clone()).or_default() += 1;
                    }
                }
                if ngram_max == 2 {
                    for pair in segment.windows(2) {
                        let bigram = format!("{}{BIGRAM_JOINER}{}", pair[0], pair[1]);
                        *map.entry(bigram).or_default() += 1;
                    }
                }
            }
            acc
        })
        .reduce(Partial::default, Partial::merge);

    let Partial { mut a, mut b } = partial;
    if min_count > 1 {
        let pooled: HashMap<String, u64> = a.iter().chain(b.iter()).fold(HashMap::new(), |mut m, (k, v)| {
            *m.entry(k.clone()).or_default() += v;
            m
        });
        a.retain(|k, _| pooled[k] >= min_count);
        b.retain(|k, _| pooled[k] >= min_count);
    }
    let counts = TermCounts::from_maps(a, b, ngram_max);
    if counts.total_a == 0 {
        return Err(FightinError::EmptyGroup(Side::A));
    }
    if counts.total_b == 0 {
        return Err(FightinError::EmptyGroup(Side::B));
    }
    Ok(counts)
}

/// Dirichlet prior: scale `a0` and per-term mass `α_w` summing to `a0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub scale: f64,
    pub weights: HashMap<String, f64>,
}

impl PriorSpec {
    /// `α_w = a0 · pooled_w / Σ pooled`.
    pub fn informative(counts: &TermCounts, scale: f64) -> Result<Self, FightinError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(FightinError::BadPriorScale(scale));
        }
        let total = (counts.total_a + counts.total_b) as f64;
        let weights = counts
            .vocabulary
            .iter()
            .map(|w| (w.clone(), scale * counts.pooled(w) as f64 / total))
            .collect();
        Ok(Self { scale, weights })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogOddsResult {
    pub term: String,
    pub delta: f64,
    pub variance: f64,
    pub z: f64,
    pub count_a: u64,
    pub count_b: u64,
    pub bigrams: Vec<String>,
}

impl LogOddsResult {
    pub fn pooled(&self) -> u64 {
        self.count_a + self.count_b
    }

    pub fn side(&self) -> Side {
        if self.z >= 0.0 {
            Side::A
        } else {
            Side::B
        }
    }

    pub fn is_bigram(&self) -> bool {
        self.term.contains(BIGRAM_JOINER)
    }
}

/// Log-odds, variance and z-score of a single term.
pub fn log_odds_term(y_a: f64, y_b: f64, n_a: f64, n_b: f64, alpha: f64, a0: f64) -> (f64, f64) {
    let num_a = y_a + alpha;
    let num_b = y_b + alpha;
    let delta = (num_a / (n_a + a0 - num_a)).ln() - (num_b / (n_b + a0 - num_b)).ln();
    let variance = 1.0 / num_a + 1.0 / num_b;
    (delta, variance)
}

/// Scores every vocabulary term, in vocabulary order.
pub fn weighted_log_odds(counts: &TermCounts, prior: &PriorSpec) -> Result<Vec<LogOddsResult>, FightinError> {
    if counts.total_a == 0 {
        return Err(FightinError::EmptyGroup(Side::A));
    }
    if counts.total_b == 0 {
        return Err(FightinError::EmptyGroup(Side::B));
    }
    if let Some(w) = counts.vocabulary.iter().find(|w| !prior.weights.contains_key(*w)) {
        return Err(FightinError::MissingPrior(w.clone()));
    }
    let n_a = counts.total_a as f64;
    let n_b = counts.total_b as f64;
    Ok(counts
        .vocabulary
        .par_iter()
        .map(|w| {
            let count_a = counts.count(Side::A, w);
            let count_b = counts.count(Side::B, w);
            let (delta, variance) =
                log_odds_term(count_a as f64, count_b as f64, n_a, n_b, prior.weights[w], prior.scale);
            LogOddsResult {
                term: w.clone(),
                delta,
                variance,
                z: delta / variance.sqrt(),
                count_a,
                count_b,
                bigrams: Vec::new(),
            }
        })
        .collect())
}

fn rank_for(side: Side) -> impl Fn(&LogOddsResult, &LogOddsResult) -> Ordering {
    move |x, y| {
        let by_z = match side {
            Side::A => y.z.total_cmp(&x.z),
            Side::B => x.z.total_cmp(&y.z),
        };
        by_z.then_with(|| y.pooled().cmp(&x.pooled()))
            .then_with(|| x.term.cmp(&y.term))
    }
}

/// The `k` terms most characteristic of `side`: descending `z` for A,
/// ascending for B. Ties go to the higher pooled count, then the term.
pub fn top_polarized(results: &[LogOddsResult], k: usize, side: Side) -> Result<Vec<LogOddsResult>, FightinError> {
    if k == 0 {
        return Err(FightinError::BadK);
    }
    if results.is_empty() {
        return Err(FightinError::NoResults);
    }
    let mut sorted = results.to_vec();
    sorted.sort_by(rank_for(side));
    sorted.truncate(k);
    Ok(sorted)
}

/// Annotates each unigram with up to `per_term` bigrams containing it that
/// lean the same way, strongest `|z|` first.
pub fn attach_bigram_context(
    unigrams: &[LogOddsResult],
    bigrams: &[LogOddsResult],
    per_term: usize,
) -> Vec<LogOddsResult> {
    unigrams
        .iter()
        .map(|u| {
            let side = u.side();
            let mut matches: Vec<&LogOddsResult> = bigrams
                .iter()
                .filter(|b| b.is_bigram() && b.side() == side && b.z != 0.0)
                .filter(|b| b.term.split(BIGRAM_JOINER).any(|part| part == u.term))
                .collect();
            matches.sort_by(|x, y| {
                y.z.abs()
                    .total_cmp(&x.z.abs())
                    .then_with(|| y.pooled().cmp(&x.pooled()))
                    .then_with(|| x.term.cmp(&y.term))
            });
            let mut out = u.clone();
            out.bigrams = matches.into_iter().take(per_term).map(|b| b.term.clone()).collect();
            out
        })
        .collect()
}
