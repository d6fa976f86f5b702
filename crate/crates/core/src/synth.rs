//! Synthetic two-group corpora with planted lexical divergence.
//!
//! Every document holds the target term once, surrounded by context tokens
//! drawn i.i.d.: with probability `divergence` from the author's group
//! lexicon, otherwise from the shared base lexicon. Paired with
//! [`generate_embeddings`], the population distance between the two groups'
//! mean context vectors is known in closed form, which makes the generator a
//! ground truth for the estimators.

use std::collections::HashSet;

use chrono::{DateTime, Duration, Months, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::corpus::{AuthorTable, Document, DocumentSet};
use crate::embedreg::EmbeddingTable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("{0} lexicon is empty")]
    EmptyLexicon(&'static str),
    #[error("target {0:?} appears in a lexicon")]
    TargetInLexicon(String),
    #[error("divergence must lie in [0, 1], got {0}")]
    BadDivergence(f64),
    #[error("invalid range for {0}")]
    BadRange(&'static str),
    #[error("offset for lexicon {index} has dimension {found}, expected {expected}")]
    OffsetDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("dimension must be at least 1")]
    ZeroDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub n_authors_per_group: usize,
    /// Inclusive range of documents per author.
    pub docs_per_author: (usize, usize),
    /// Inclusive range of context tokens per document (target excluded).
    pub context_len: (usize, usize),
    pub base_lexicon: Vec<String>,
    pub group_lexicons: [Vec<String>; 2],
    /// Probability that a context token comes from the group lexicon.
    pub divergence: f64,
    pub target: String,
    pub group_attr: String,
    pub group_values: [String; 2],
    /// First month of the timestamp range.
    pub start: DateTime<Utc>,
    pub months: u32,
    pub seed: u64,
}

fn lexicon(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:04}")).collect()
}

impl SynthSpec {
    /// Base lexicon of 200 tokens, group lexicons of 50 tokens each, target
    /// `kids`, groups `dem`/`rep` under `party`.
    pub fn new(n_authors_per_group: usize, divergence: f64, seed: u64) -> Self {
        Self {
            n_authors_per_group,
            docs_per_author: (1, 1),
            context_len: (8, 12),
            base_lexicon: lexicon("base", 200),
            group_lexicons: [lexicon("grpa", 50), lexicon("grpb", 50)],
            divergence,
            target: "kids".into(),
            group_attr: "party".into(),
            group_values: ["dem".into(), "rep".into()],
            start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).single().expect("valid date"),
            months: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.base_lexicon.is_empty() {
            return Err(SynthError::EmptyLexicon("base"));
        }
        if self.group_lexicons.iter().any(Vec::is_empty) {
            return Err(SynthError::EmptyLexicon("group"));
        }
        if !(0.0..=1.0).contains(&self.divergence) {
            return Err(SynthError::BadDivergence(self.divergence));
        }
        let all = self.base_lexicon.iter().chain(self.group_lexicons.iter().flatten());
        if all.into_iter().any(|t| *t == self.target) {
            return Err(SynthError::TargetInLexicon(self.target.clone()));
        }
        let (a, b) = self.docs_per_author;
        if a == 0 || a > b {
            return Err(SynthError::BadRange("docs_per_author"));
        }
        let (a, b) = self.context_len;
        if a == 0 || a > b {
            return Err(SynthError::BadRange("context_len"));
        }
        if self.months == 0 {
            return Err(SynthError::BadRange("months"));
        }
        Ok(())
    }
}

/// Generates documents and the author table. Documents come back with
/// `tokens` already filled; they equal the tokenizer's output on `text`.
pub fn generate_corpus(spec: &SynthSpec) -> Result<(DocumentSet, AuthorTable), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut authors = AuthorTable::new();
    let mut docs = Vec::new();
    for (g, value) in spec.group_values.iter().enumerate() {
        let own = &spec.group_lexicons[g];
        for a in 0..spec.n_authors_per_group {
            let author_id = format!("g{g}u{a:06}");
            authors
                .insert(author_id.clone(), [(spec.group_attr.clone(), value.clone())])
                .expect("generated author ids are unique");
            let n_docs = rng.random_range(spec.docs_per_author.0..=spec.docs_per_author.1);
            for _ in 0..n_docs {
                let len = rng.random_range(spec.context_len.0..=spec.context_len.1);
                let mut tokens: Vec<String> = (0..len)
                    .map(|_| {
                        let from_group = rng.random::<f64>() < spec.divergence;
                        let pool = if from_group { own } else { &spec.base_lexicon };
                        pool[rng.random_range(0..pool.len())].clone()
                    })
                    .collect();
                let at = rng.random_range(0..=len);
                tokens.insert(at, spec.target.clone());
                let month = rng.random_range(0..spec.months);
                let offset = Duration::seconds(rng.random_range(0..28 * 86_400));
                let timestamp = spec.start + Months::new(month) + offset;
                let mut d = Document::new(
                    format!("d{:08}", docs.len()),
                    author_id.as_str(),
                    timestamp,
                    tokens.join(" "),
                );
                d.tokens = tokens;
                docs.push(d);
            }
        }
    }
    let set = DocumentSet::new(docs).expect("generated doc ids are unique");
    Ok((set, authors))
}

/// One lexicon and the mean offset its token vectors scatter around.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconOffset<'a> {
    pub tokens: &'a [String],
    pub offset: Vec<f64>,
}

/// Each token's vector is its lexicon's offset plus standard normal noise.
/// A token listed in several lexicons keeps its first vector.
pub fn generate_embeddings(
    lexicons: &[LexiconOffset<'_>],
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable, SynthError> {
    if dim == 0 {
        return Err(SynthError::ZeroDimension);
    }
    for (index, l) in lexicons.iter().enumerate() {
        if l.offset.len() != dim {
            return Err(SynthError::OffsetDimension {
                index,
                expected: dim,
                found: l.offset.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(dim);
    let mut v = vec![0f32; dim];
    for l in lexicons {
        for t in l.tokens {
            for (x, o) in v.iter_mut().zip(&l.offset) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = (o + z) as f32;
            }
            table.insert(t.as_str(), &v).expect("dimension checked");
        }
    }
    Ok(table)
}

/// Embeddings for the lexicons of a [`SynthSpec`]: base at the origin, group A at
/// `+separation`, group B at `−separation` (per dimension).
pub fn spec_embeddings(spec: &SynthSpec, dim: usize, separation: f64, seed: u64) -> Result<EmbeddingTable, SynthError> {
    generate_embeddings(
        &[
            LexiconOffset {
                tokens: &spec.base_lexicon,
                offset: vec![0.0; dim],
            },
            LexiconOffset {
                tokens: &spec.group_lexicons[0],
                offset: vec![separation; dim],
            },
            LexiconOffset {
                tokens: &spec.group_lexicons[1],
                offset: vec![-separation; dim],
            },
        ],
        dim,
        seed,
    )
}

fn lexicon_mean(tokens: &[String], table: &EmbeddingTable) -> Vec<f64> {
    let mut m = vec![0.0; table.dim()];
    let mut n = 0usize;
    let mut seen = HashSet::new();
    for t in tokens {
        if let Some(v) = table.get(t) {
            if seen.insert(t) {
                n += 1;
            }
            for (a, x) in m.iter_mut().zip(v) {
                *a += f64::from(*x);
            }
        }
    }
    m.iter_mut().for_each(|a| *a /= tokens.len().max(n).max(1) as f64);
    m
}

/// Squared distance between the two groups' expected context vectors for the
/// realized embedding table: `λ² ‖μ_A − μ_B‖²`, where `μ_g` is the mean vector
/// of group lexicon `g` (the base lexicon's contribution cancels).
pub fn population_sq_distance(spec: &SynthSpec, table: &EmbeddingTable) -> f64 {
    let a = lexicon_mean(&spec.group_lexicons[0], table);
    let b = lexicon_mean(&spec.group_lexicons[1], table);
    let lambda2 = spec.divergence * spec.divergence;
    lambda2 * a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// Expectation of [`population_sq_distance`] over the embedding noise when
/// lexicon offsets differ by `offset_gap` (a vector).
pub fn expected_population_sq_distance(spec: &SynthSpec, offset_gap: &[f64]) -> f64 {
    let d = offset_gap.len() as f64;
    let gap: f64 = offset_gap.iter().map(|g| g * g).sum();
    let noise = d * (1.0 / spec.group_lexicons[0].len() as f64 + 1.0 / spec.group_lexicons[1].len() as f64);
    spec.divergence * spec.divergence * (gap + noise)
}
