//! Moral-foundations dictionary scoring.
//!
//! A dictionary maps exact terms and `stem*` wildcards to foundation × valence
//! categories. Users are profiled by the fraction of their documents that
//! contain at least one term of each category, and group gaps are estimated by
//! OLS with robust standard errors, controlling for `ln(1 + mean tokens)`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, DocumentSet, GroupLabels};
use crate::stats::{self, Design, HcFlavor, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("dictionary header must contain pattern, foundation, valence")]
    BadHeader,
    #[error("row {row}: unknown foundation {value:?}")]
    UnknownFoundation { row: usize, value: String },
    #[error("row {row}: unknown valence {value:?}")]
    UnknownValence { row: usize, value: String },
    #[error("row {row}: empty pattern")]
    EmptyPattern { row: usize },
    #[error("user profile needs at least one document")]
    NoDocuments,
    #[error("documents from more than one author passed to a single user profile")]
    MixedAuthors,
    #[error("author {0:?} has no group label")]
    UnlabeledAuthor(String),
    #[error("group {group} has {n} user(s); at least 2 are required")]
    SmallGroup { group: u8, n: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foundation {
    Care,
    Fairness,
    Loyalty,
    Authority,
    Sanctity,
}

impl Foundation {
    pub const ALL: [Foundation; 5] = [
        Foundation::Care,
        Foundation::Fairness,
        Foundation::Loyalty,
        Foundation::Authority,
        Foundation::Sanctity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Foundation::Care => "care",
            Foundation::Fairness => "fairness",
            Foundation::Loyalty => "loyalty",
            Foundation::Authority => "authority",
            Foundation::Sanctity => "sanctity",
        }
    }
}

impl FromStr for Foundation {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Foundation::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or(())
    }
}

impl fmt::Display for Foundation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Vice,
    Virtue,
}

impl Valence {
    pub const ALL: [Valence; 2] = [Valence::Vice, Valence::Virtue];

    pub fn name(self) -> &'static str {
        match self {
            Valence::Vice => "vice",
            Valence::Virtue => "virtue",
        }
    }
}

impl FromStr for Valence {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Valence::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or(())
    }
}

impl fmt::Display for Valence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A foundation × valence cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MoralCategory {
    pub foundation: Foundation,
    pub valence: Valence,
}

impl MoralCategory {
    pub const COUNT: usize = 10;

    pub fn new(foundation: Foundation, valence: Valence) -> Self {
        Self { foundation, valence }
    }

    pub fn all() -> impl Iterator<Item = MoralCategory> {
        Foundation::ALL
            .into_iter()
            .flat_map(|f| Valence::ALL.into_iter().map(move |v| MoralCategory::new(f, v)))
    }

    pub fn index(self) -> usize {
        self.foundation as usize * 2 + self.valence as usize
    }

    fn from_index(i: usize) -> Self {
        MoralCategory::new(Foundation::ALL[i / 2], Valence::ALL[i % 2])
    }
}

impl fmt::Display for MoralCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.foundation, self.valence)
    }
}

/// Set of categories, one bit per cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CategorySet(u16);

impl CategorySet {
    pub fn insert(&mut self, c: MoralCategory) {
        self.0 |= 1 << c.index();
    }

    pub fn contains(&self, c: MoralCategory) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: CategorySet) -> CategorySet {
        CategorySet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = MoralCategory> {
        (0..MoralCategory::COUNT)
            .filter(move |i| self.0 & (1 << i) != 0)
            .map(MoralCategory::from_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictEntry {
    /// Pattern without the trailing `*`.
    pub stem: String,
    pub wildcard: bool,
    pub category: MoralCategory,
}

impl DictEntry {
    pub fn pattern(&self) -> String {
        if self.wildcard {
            format!("{}*", self.stem)
        } else {
            self.stem.clone()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MoralDictionary {
    entries: Vec<DictEntry>,
    exact: HashMap<String, CategorySet>,
    stems: HashMap<String, CategorySet>,
    exact_only: bool,
}

impl MoralDictionary {
    /// Builds a dictionary; repeated `(pattern, category)` entries are kept once.
    pub fn from_entries(entries: impl IntoIterator<Item = DictEntry>) -> Self {
        let mut dict = Self::default();
        let mut seen = HashSet::new();
        for mut e in entries {
            e.stem = e.stem.to_lowercase();
            if !seen.insert((e.stem.clone(), e.wildcard, e.category)) {
                log::warn!("duplicate dictionary entry {} ({})", e.pattern(), e.category);
                continue;
            }
            let map = if e.wildcard { &mut dict.stems } else { &mut dict.exact };
            map.entry(e.stem.clone()).or_default().insert(e.category);
            dict.entries.push(e);
        }
        dict
    }

    /// Ignore wildcard entries when matching.
    pub fn exact_only(mut self, on: bool) -> Self {
        self.exact_only = on;
        self
    }

    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Categories matched by a lowercase token.
    pub fn match_token(&self, token: &str) -> CategorySet {
        let mut set = self.exact.get(token).copied().unwrap_or_default();
        if !self.exact_only && !self.stems.is_empty() {
            for (i, c) in token.char_indices() {
                let end = i + c.len_utf8();
                if let Some(s) = self.stems.get(&token[..end]) {
                    set = set.union(*s);
                }
            }
            if let Some(s) = self.stems.get("") {
                set = set.union(*s);
            }
        }
        set
    }

    pub fn matches_any(&self, token: &str) -> bool {
        !self.match_token(token).is_empty()
    }
}

pub fn read_moral_dictionary<R: Read>(reader: R) -> Result<MoralDictionary, LexiconError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
    };
    let (Some(pc), Some(fc), Some(vc)) = (col("pattern"), col("foundation"), col("valence")) else {
        return Err(LexiconError::BadHeader);
    };
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let pattern = rec.get(pc).unwrap_or("");
        let foundation_raw = rec.get(fc).unwrap_or("");
        let valence_raw = rec.get(vc).unwrap_or("");
        let foundation: Foundation = foundation_raw.parse().map_err(|_| LexiconError::UnknownFoundation {
            row,
            value: foundation_raw.to_owned(),
        })?;
        let valence: Valence = valence_raw.parse().map_err(|_| LexiconError::UnknownValence {
            row,
            value: valence_raw.to_owned(),
        })?;
        let (stem, wildcard) = match pattern.strip_suffix('*') {
            Some(s) => (s, true),
            None => (pattern, false),
        };
        if stem.is_empty() {
            return Err(LexiconError::EmptyPattern { row });
        }
        entries.push(DictEntry {
            stem: stem.to_owned(),
            wildcard,
            category: MoralCategory::new(foundation, valence),
        });
    }
    Ok(MoralDictionary::from_entries(entries))
}

/// Loads a `pattern,foundation,valence` CSV.
pub fn load_moral_dictionary(path: impl AsRef<Path>) -> Result<MoralDictionary, LexiconError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_moral_dictionary(f)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserMoralProfile {
    pub author_id: String,
    pub n_docs: usize,
    /// Documents with at least one match, per category index.
    pub matched_docs: [usize; MoralCategory::COUNT],
    pub log_mean_tokens: f64,
}

impl UserMoralProfile {
    pub fn fraction(&self, c: MoralCategory) -> f64 {
        self.matched_docs[c.index()] as f64 / self.n_docs as f64
    }
}

/// Profiles one user from their documents (already tokenized).
pub fn user_moral_profile(docs: &[&Document], dict: &MoralDictionary) -> Result<UserMoralProfile, LexiconError> {
    let first = docs.first().ok_or(LexiconError::NoDocuments)?;
    if docs.iter().any(|d| d.author_id != first.author_id) {
        return Err(LexiconError::MixedAuthors);
    }
    let mut matched_docs = [0usize; MoralCategory::COUNT];
    let mut total_tokens = 0usize;
    for d in docs {
        total_tokens += d.tokens.len();
        let hits = d
            .tokens
            .iter()
            .fold(CategorySet::default(), |acc, t| acc.union(dict.match_token(t)));
        for c in hits.iter() {
            matched_docs[c.index()] += 1;
        }
    }
    let mean_tokens = total_tokens as f64 / docs.len() as f64;
    Ok(UserMoralProfile {
        author_id: first.author_id.clone(),
        n_docs: docs.len(),
        matched_docs,
        log_mean_tokens: mean_tokens.ln_1p(),
    })
}

/// One profile per author, in sorted author order.
pub fn profiles_by_author(docs: &DocumentSet, dict: &MoralDictionary) -> Vec<UserMoralProfile> {
    let grouped: Vec<Vec<&Document>> = docs.by_author().into_values().collect();
    grouped
        .par_iter()
        .map(|d| user_moral_profile(d, dict).expect("non-empty single-author group"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapEstimate {
    pub foundation: Foundation,
    pub valence: Valence,
    /// Group-1 minus group-0 difference in fraction, adjusted for length.
    pub coefficient: f64,
    pub robust_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_users: usize,
    pub covariate_dropped: bool,
}

pub const GROUP_COLUMN: &str = "group";
pub const LENGTH_COLUMN: &str = "log_mean_tokens";

/// Regresses the category fraction on the group indicator and the
/// log-length covariate.
pub fn moral_gap_regression(
    profiles: &[UserMoralProfile],
    groups: &GroupLabels,
    category: MoralCategory,
    flavor: HcFlavor,
) -> Result<GapEstimate, LexiconError> {
    let mut indicator = Vec::with_capacity(profiles.len());
    for p in profiles {
        let g = groups
            .get(&p.author_id)
            .ok_or_else(|| LexiconError::UnlabeledAuthor(p.author_id.clone()))?;
        indicator.push(if g { 1.0 } else { 0.0 });
    }
    let n1 = indicator.iter().filter(|v| **v == 1.0).count();
    let n0 = indicator.len() - n1;
    if n0 < 2 {
        return Err(LexiconError::SmallGroup { group: 0, n: n0 });
    }
    if n1 < 2 {
        return Err(LexiconError::SmallGroup { group: 1, n: n1 });
    }
    let y: Vec<f64> = profiles.iter().map(|p| p.fraction(category)).collect();
    let design = Design::new()
        .intercept(profiles.len())
        .column(GROUP_COLUMN, indicator)
        .column(LENGTH_COLUMN, profiles.iter().map(|p| p.log_mean_tokens).collect());
    let fit = stats::ols_fit(&design, &y, flavor)?;
    let k = fit.index_of(GROUP_COLUMN).expect("group column always varies");
    let robust_se = fit.vcov_robust[(k, k)].max(0.0).sqrt();
    let (ci_low, ci_high) = stats::confidence_interval(&fit, k, 0.95)?;
    Ok(GapEstimate {
        foundation: category.foundation,
        valence: category.valence,
        coefficient: fit.coefficients[k],
        robust_se,
        ci_low,
        ci_high,
        n_users: profiles.len(),
        covariate_dropped: fit.dropped_columns.iter().any(|c| c == LENGTH_COLUMN),
    })
}
