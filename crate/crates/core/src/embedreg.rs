//! Context-window embedding regression between two groups.
//!
//! Each document mentioning a target term contributes one observation: the
//! average pre-trained embedding of the tokens around the target. Regressing
//! every embedding dimension on a group indicator gives a coefficient vector
//! `β̂` whose squared norm overstates the true squared distance between group
//! means by `Σ_d V̂[β̂_d]` in expectation. [`corrected_squared_distance`]
//! subtracts that sum and never truncates the result, so negative values are
//! legitimate estimates. Inference is by label permutation with group sizes
//! held fixed.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{self, Document, DocumentSet, GroupLabels};
use crate::seed::{derive_seed, stream};
use crate::stats::{self, Design, HcFlavor, StatsError};

pub const DEFAULT_WINDOW: usize = 6;
pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const DEFAULT_MIN_COUNT: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file is empty")]
    Empty,
    #[error("line {line}: expected {expected} values, found {found}")]
    InconsistentDimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: invalid number {value:?}")]
    BadNumber { line: usize, value: String },
    #[error("line {line}: term without vector")]
    MissingVector { line: usize },
    #[error("vector for {term:?} has dimension {found}, table has {expected}")]
    WrongDimension {
        term: String,
        expected: usize,
        found: usize,
    },
    #[error("group {group} has {n} observation(s); at least 2 are required")]
    SmallGroup { group: u8, n: usize },
    #[error("author {0:?} contributes more than one observation")]
    DuplicateAuthor(String),
    #[error("observations disagree on dimension")]
    MixedDimensions,
    #[error("non-finite value in observation vector for {0:?}")]
    NonFinite(String),
    #[error("window must be at least 1")]
    BadWindow,
    #[error("permutation count must be at least 1")]
    BadPermutations,
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Term → dense vector, stored contiguously as `f32`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    terms: Vec<String>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Adds a vector. Returns `false` (and keeps the existing vector) when the
    /// term is already present.
    pub fn insert(&mut self, term: impl Into<String>, vector: &[f32]) -> Result<bool, EmbedError> {
        let term = term.into();
        if vector.len() != self.dim {
            return Err(EmbedError::WrongDimension {
                term,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.index.contains_key(&term) {
            return Ok(false);
        }
        self.index.insert(term.clone(), self.terms.len());
        self.terms.push(term);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn get(&self, term: &str) -> Option<&[f32]> {
        self.index
            .get(term)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Writes the whitespace-delimited text format, one term per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, term) in self.terms.iter().enumerate() {
            w.write_all(term.as_bytes())?;
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {v}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads `term v1 v2 ... vd` lines. The dimension comes from the first line;
/// duplicate terms keep their first vector.
pub fn read_embeddings<R: Read>(reader: R) -> Result<EmbeddingTable, EmbedError> {
    let mut table: Option<EmbeddingTable> = None;
    let mut buf = Vec::new();
    let mut duplicates = 0usize;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| EmbedError::Io {
            path: "<embeddings>".into(),
            source,
        })?;
        let mut fields = line.split_whitespace();
        let Some(term) = fields.next() else { continue };
        buf.clear();
        for f in fields {
            let v: f32 = f.parse().map_err(|_| EmbedError::BadNumber {
                line: line_no,
                value: f.to_owned(),
            })?;
            buf.push(v);
        }
        if buf.is_empty() {
            return Err(EmbedError::MissingVector { line: line_no });
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(buf.len()));
        if buf.len() != t.dim {
            return Err(EmbedError::InconsistentDimension {
                line: line_no,
                expected: t.dim,
                found: buf.len(),
            });
        }
        if !t.insert(term, &buf)? {
            duplicates += 1;
            log::warn!("line {line_no}: duplicate term {term:?} ignored");
        }
    }
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate term(s) skipped");
    }
    table.ok_or(EmbedError::Empty)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbedError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_embeddings(f)
}

/// Token windows around each occurrence of `target`: up to `window` tokens on
/// each side, clipped at the document edges, with every occurrence of the
/// target itself left out.
pub fn extract_contexts<'a>(doc: &'a Document, target: &str, window: usize) -> Vec<Vec<&'a str>> {
    let tokens = &doc.tokens;
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| *t == target)
        .map(|(i, _)| {
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(tokens.len());
            tokens[lo..hi]
                .iter()
                .filter(|t| *t != target)
                .map(String::as_str)
                .collect()
        })
        .collect()
}

/// Mean embedding over all in-vocabulary tokens of all windows, or `None`
/// when no token has a vector.
pub fn context_vector(windows: &[Vec<&str>], table: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut sum = vec![0.0f64; table.dim()];
    let mut n = 0usize;
    for v in windows.iter().flatten().filter_map(|t| table.get(t)) {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += f64::from(*x);
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    Some(sum)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextObservation {
    pub author_id: String,
    /// `false` is group 0, `true` is group 1.
    pub group: bool,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingRegressionFit {
    /// Group-1 minus group-0 slope per dimension.
    pub coefficients: Vec<f64>,
    pub coefficient_variances: Vec<f64>,
    pub n_obs: usize,
    pub n_group0: usize,
    pub n_group1: usize,
}

impl EmbeddingRegressionFit {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }
}

/// How coefficient variances are estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum VarianceKind {
    /// `σ̂² (1/n0 + 1/n1)` with `σ̂² = SSR/(n−2)`.
    #[default]
    Homoskedastic,
    Robust(HcFlavor),
}

fn validate(obs: &[ContextObservation]) -> Result<(usize, usize, usize), EmbedError> {
    let n1 = obs.iter().filter(|o| o.group).count();
    let n0 = obs.len() - n1;
    if n0 < 2 {
        return Err(EmbedError::SmallGroup { group: 0, n: n0 });
    }
    if n1 < 2 {
        return Err(EmbedError::SmallGroup { group: 1, n: n1 });
    }
    let d = obs[0].vector.len();
    let mut seen = HashSet::with_capacity(obs.len());
    for o in obs {
        if o.vector.len() != d {
            return Err(EmbedError::MixedDimensions);
        }
        if o.vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(o.author_id.clone()));
        }
        if !seen.insert(o.author_id.as_str()) {
            return Err(EmbedError::DuplicateAuthor(o.author_id.clone()));
        }
    }
    Ok((n0, n1, d))
}

/// Per-dimension OLS of the context vector on intercept + group indicator,
/// with homoskedastic slope variances.
pub fn embedding_regression(obs: &[ContextObservation]) -> Result<EmbeddingRegressionFit, EmbedError> {
    embedding_regression_with(obs, VarianceKind::Homoskedastic)
}

pub fn embedding_regression_with(
    obs: &[ContextObservation],
    kind: VarianceKind,
) -> Result<EmbeddingRegressionFit, EmbedError> {
    let (n0, n1, d) = validate(obs)?;
    match kind {
        VarianceKind::Homoskedastic => Ok(indicator_regression(obs, n0, n1, d)),
        VarianceKind::Robust(flavor) => {
            let x: Vec<f64> = obs.iter().map(|o| if o.group { 1.0 } else { 0.0 }).collect();
            let design = Design::new().intercept(obs.len()).column("group", x);
            let mut coefficients = Vec::with_capacity(d);
            let mut coefficient_variances = Vec::with_capacity(d);
            for k in 0..d {
                let y: Vec<f64> = obs.iter().map(|o| o.vector[k]).collect();
                let fit = stats::ols_fit(&design, &y, flavor)?;
                coefficients.push(fit.coefficients[1]);
                coefficient_variances.push(fit.vcov_robust[(1, 1)]);
            }
            Ok(EmbeddingRegressionFit {
                coefficients,
                coefficient_variances,
                n_obs: obs.len(),
                n_group0: n0,
                n_group1: n1,
            })
        }
    }
}

/// Closed form of the intercept + indicator regression: the slope is the
/// difference of group means and its variance is `SSR/(n−2) · (1/n0 + 1/n1)`.
fn indicator_regression(obs: &[ContextObservation], n0: usize, n1: usize, d: usize) -> EmbeddingRegressionFit {
    let mut mean = [vec![0.0; d], vec![0.0; d]];
    for o in obs {
        let m = &mut mean[usize::from(o.group)];
        for (s, v) in m.iter_mut().zip(&o.vector) {
            *s += v;
        }
    }
    for (m, n) in mean.iter_mut().zip([n0, n1]) {
        m.iter_mut().for_each(|s| *s /= n as f64);
    }
    let mut ssr = vec![0.0; d];
    for o in obs {
        let m = &mean[usize::from(o.group)];
        for ((s, v), mu) in ssr.iter_mut().zip(&o.vector).zip(m) {
            let e = v - mu;
            *s += e * e;
        }
    }
    let n = (n0 + n1) as f64;
    let scale = (1.0 / n0 as f64 + 1.0 / n1 as f64) / (n - 2.0);
    EmbeddingRegressionFit {
        coefficients: mean[1].iter().zip(&mean[0]).map(|(a, b)| a - b).collect(),
        coefficient_variances: ssr.iter().map(|s| s * scale).collect(),
        n_obs: obs.len(),
        n_group0: n0,
        n_group1: n1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEstimate {
    /// `Σ β̂_d²`
    pub raw_sq: f64,
    /// `Σ V̂[β̂_d]`
    pub correction: f64,
    /// `raw_sq − correction`; may be negative.
    pub corrected_sq: f64,
    pub p_value: Option<f64>,
    pub null_ci: Option<(f64, f64)>,
}

pub fn corrected_squared_distance(fit: &EmbeddingRegressionFit) -> DistanceEstimate {
    let raw_sq: f64 = fit.coefficients.iter().map(|b| b * b).sum();
    let correction: f64 = fit.coefficient_variances.iter().sum();
    DistanceEstimate {
        raw_sq,
        correction,
        corrected_sq: raw_sq - correction,
        p_value: None,
        null_ci: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullDistribution {
    pub estimates: Vec<f64>,
    pub seed: u64,
    pub permutations: usize,
}

/// Evaluates the corrected distance for arbitrary relabelings in
/// `O(k·d)` per relabeling, where `k` is the smaller group size.
///
/// Observations are centered once; for a labeling with group-1 sum `s1`,
/// group-0 sum is `total − s1`, and the pooled residual sum of squares is
/// `Σ‖c_i‖² − n1‖m1‖² − n0‖m0‖²`.
struct PermutationEngine {
    centered: Vec<f64>,
    d: usize,
    n: usize,
    n0: usize,
    n1: usize,
    total: Vec<f64>,
    sumsq: f64,
}

impl PermutationEngine {
    fn new(obs: &[ContextObservation], n0: usize, n1: usize, d: usize) -> Self {
        let n = obs.len();
        let mut grand = vec![0.0; d];
        for o in obs {
            for (g, v) in grand.iter_mut().zip(&o.vector) {
                *g += v;
            }
        }
        grand.iter_mut().for_each(|g| *g /= n as f64);
        let mut centered = Vec::with_capacity(n * d);
        for o in obs {
            centered.extend(o.vector.iter().zip(&grand).map(|(v, g)| v - g));
        }
        let mut total = vec![0.0; d];
        for row in centered.chunks_exact(d) {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        let sumsq = centered.iter().map(|v| v * v).sum();
        Self {
            centered,
            d,
            n,
            n0,
            n1,
            total,
            sumsq,
        }
    }

    fn smaller_is_group1(&self) -> bool {
        self.n1 <= self.n0
    }

    fn smaller_size(&self) -> usize {
        self.n0.min(self.n1)
    }

    /// Corrected distance when `members` (of size `smaller_size()`) form the
    /// smaller group.
    fn corrected(&self, members: impl Iterator<Item = usize>) -> f64 {
        let d = self.d;
        let mut s = vec![0.0; d];
        for i in members {
            let row = &self.centered[i * d..(i + 1) * d];
            for (a, v) in s.iter_mut().zip(row) {
                *a += v;
            }
        }
        let (s1, s0): (Vec<f64>, Vec<f64>) = if self.smaller_is_group1() {
            let rest = self.total.iter().zip(&s).map(|(t, a)| t - a).collect();
            (s, rest)
        } else {
            let rest = self.total.iter().zip(&s).map(|(t, a)| t - a).collect();
            (rest, s)
        };
        let (n0, n1) = (self.n0 as f64, self.n1 as f64);
        let mut raw = 0.0;
        let mut norm0 = 0.0;
        let mut norm1 = 0.0;
        for (a, b) in s1.iter().zip(&s0) {
            let m1 = a / n1;
            let m0 = b / n0;
            raw += (m1 - m0) * (m1 - m0);
            norm1 += m1 * m1;
            norm0 += m0 * m0;
        }
        let ssr = (self.sumsq - n1 * norm1 - n0 * norm0).max(0.0);
        let correction = ssr / (self.n as f64 - 2.0) * (1.0 / n0 + 1.0 / n1);
        raw - correction
    }
}

/// Linear-interpolation empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(1 + #{null ≥ observed}) / (1 + P)`.
pub fn permutation_p_value(observed: f64, null: &[f64]) -> f64 {
    let exceed = null.iter().filter(|v| **v >= observed).count();
    (1 + exceed) as f64 / (1 + null.len()) as f64
}

/// 2.5 % and 97.5 % empirical quantiles.
pub fn null_interval(null: &[f64]) -> (f64, f64) {
    let mut sorted = null.to_vec();
    sorted.sort_by(f64::total_cmp);
    (quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975))
}

/// Observed corrected distance plus `permutations` label permutations with
/// group sizes preserved. Replicate `r` draws from its own stream seeded by
/// `derive_seed(seed, r)`, so results do not depend on the thread count.
pub fn permutation_null(
    obs: &[ContextObservation],
    permutations: usize,
    seed: u64,
) -> Result<(NullDistribution, DistanceEstimate), EmbedError> {
    if permutations == 0 {
        return Err(EmbedError::BadPermutations);
    }
    let (n0, n1, d) = validate(obs)?;
    let mut estimate = corrected_squared_distance(&indicator_regression(obs, n0, n1, d));

    let engine = PermutationEngine::new(obs, n0, n1, d);
    let want = engine.smaller_is_group1();
    let observed = engine.corrected(obs.iter().enumerate().filter(|(_, o)| o.group == want).map(|(i, _)| i));
    let k = engine.smaller_size();
    let estimates: Vec<f64> = (0..permutations as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r));
            let members = rand::seq::index::sample(&mut rng, engine.n, k);
            engine.corrected(members.into_iter())
        })
        .collect();

    estimate.p_value = Some(permutation_p_value(observed, &estimates));
    estimate.null_ci = Some(null_interval(&estimates));
    Ok((
        NullDistribution {
            estimates,
            seed,
            permutations,
        },
        estimate,
    ))
}

/// Settings for the document-to-estimate pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedConfig {
    /// Tokens on each side of the target.
    pub window: usize,
    pub permutations: usize,
    pub seed: u64,
    /// Per-subset token frequency floor applied after sampling.
    pub min_count: usize,
    /// Optional co-occurrence terms a document must also contain.
    pub co_terms: Option<Vec<String>>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            min_count: DEFAULT_MIN_COUNT,
            co_terms: None,
        }
    }
}

/// Observations ready for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedObservations {
    pub target: String,
    pub observations: Vec<ContextObservation>,
    /// Sampled documents with no in-vocabulary context token.
    pub dropped_docs: usize,
    pub n_group0: usize,
    pub n_group1: usize,
}

/// Subset to documents mentioning `target` (and a co-term when configured)
/// written by labeled authors, sample one per author, apply the frequency
/// floor, then average context embeddings per document.
pub fn prepare_observations(
    docs: &DocumentSet,
    groups: &GroupLabels,
    target: &str,
    table: &EmbeddingTable,
    config: &EmbedConfig,
) -> Result<PreparedObservations, EmbedError> {
    if config.window == 0 {
        return Err(EmbedError::BadWindow);
    }
    let target = target.to_lowercase();
    let labeled = docs.filter("labeled authors", |d| groups.get(&d.author_id).is_some());
    let co: Option<Vec<&str>> = config.co_terms.as_ref().map(|v| v.iter().map(String::as_str).collect());
    let subset = corpus::subset_by_keywords(&labeled, &[target.as_str()], co.as_deref())?;
    let sampled = corpus::sample_one_per_author(&subset, derive_seed(config.seed, stream::SAMPLING));
    let trimmed = corpus::apply_min_count(&sampled, config.min_count.max(1))?;

    let vectors: Vec<Option<Vec<f64>>> = trimmed
        .docs()
        .par_iter()
        .map(|d| context_vector(&extract_contexts(d, &target, config.window), table))
        .collect();
    let mut observations = Vec::with_capacity(vectors.len());
    let mut dropped_docs = 0;
    for (d, v) in trimmed.iter().zip(vectors) {
        match v {
            Some(vector) => observations.push(ContextObservation {
                author_id: d.author_id.clone(),
                group: groups.get(&d.author_id).unwrap_or(false),
                vector,
            }),
            None => dropped_docs += 1,
        }
    }
    let n_group1 = observations.iter().filter(|o| o.group).count();
    Ok(PreparedObservations {
        n_group0: observations.len() - n_group1,
        n_group1,
        target,
        observations,
        dropped_docs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedAnalysis {
    pub target: String,
    pub n_group0: usize,
    pub n_group1: usize,
    pub dim: usize,
    pub estimate: DistanceEstimate,
    pub null: NullDistribution,
    pub dropped_docs: usize,
}

/// Output record for a single estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedReport {
    pub target: String,
    pub n_users_per_group: [usize; 2],
    pub d: usize,
    pub raw_sq: f64,
    pub correction: f64,
    pub corrected_sq: f64,
    pub p_value: f64,
    pub null_ci: [f64; 2],
    #[serde(rename = "P")]
    pub permutations: usize,
    pub seed: u64,
    pub dropped_docs: usize,
}

impl EmbedAnalysis {
    pub fn report(&self) -> EmbedReport {
        let (lo, hi) = self.estimate.null_ci.unwrap_or((f64::NAN, f64::NAN));
        EmbedReport {
            target: self.target.clone(),
            n_users_per_group: [self.n_group0, self.n_group1],
            d: self.dim,
            raw_sq: self.estimate.raw_sq,
            correction: self.estimate.correction,
            corrected_sq: self.estimate.corrected_sq,
            p_value: self.estimate.p_value.unwrap_or(f64::NAN),
            null_ci: [lo, hi],
            permutations: self.null.permutations,
            seed: self.null.seed,
            dropped_docs: self.dropped_docs,
        }
    }
}

/// Runs estimation and the permutation null on prepared observations.
pub fn analyze(prepared: &PreparedObservations, config: &EmbedConfig) -> Result<EmbedAnalysis, EmbedError> {
    let (null, estimate) = permutation_null(
        &prepared.observations,
        config.permutations,
        derive_seed(config.seed, stream::PERMUTATION),
    )?;
    Ok(EmbedAnalysis {
        target: prepared.target.clone(),
        n_group0: prepared.n_group0,
        n_group1: prepared.n_group1,
        dim: prepared.observations[0].vector.len(),
        estimate,
        null,
        dropped_docs: prepared.dropped_docs,
    })
}

/// Full pipeline: [`prepare_observations`] followed by [`analyze`].
pub fn embed_distance(
    docs: &DocumentSet,
    groups: &GroupLabels,
    target: &str,
    table: &EmbeddingTable,
    config: &EmbedConfig,
) -> Result<EmbedAnalysis, EmbedError> {
    let prepared = prepare_observations(docs, groups, target, table, config)?;
    analyze(&prepared, config)
}
