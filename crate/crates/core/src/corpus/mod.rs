//! Documents, author attributes and analysis subsets.

mod io;
mod keywords;
mod tokenize;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, Datelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{
    load_authors, load_corpus, parse_timestamp, read_authors, read_corpus, write_authors, write_jsonl, CorpusFormat,
    RecordError,
};
pub use keywords::KeywordCategory;
pub use tokenize::{tokenize, TokenRules};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{} invalid record(s); first: {}", .0.len(), .0[0])]
    Records(Vec<RecordError>),
    #[error("duplicate doc_id {doc_id:?} (line {line})")]
    DuplicateDoc { doc_id: String, line: usize },
    #[error("duplicate author_id {0:?}")]
    DuplicateAuthor(String),
    #[error("authors file has no attribute columns")]
    NoAttributes,
    #[error("authors file must start with an author_id column, found {0:?}")]
    MissingAuthorColumn(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("seed term set is empty")]
    EmptySeedTerms,
    #[error("min count must be at least 1")]
    InvalidMinCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub author_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    /// Filled by [`DocumentSet::tokenize`].
    #[serde(default)]
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        author_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            author_id: author_id.into(),
            timestamp,
            text: text.into(),
            tokens: Vec::new(),
        }
    }

    pub fn contains_any(&self, terms: &HashSet<String>) -> bool {
        self.tokens.iter().any(|t| terms.contains(t))
    }
}

/// An ordered collection of documents plus a note of how it was produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentSet {
    docs: Vec<Document>,
    provenance: Vec<String>,
}

impl DocumentSet {
    /// Builds a set, rejecting duplicate `doc_id`s.
    pub fn new(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDoc {
                    doc_id: d.doc_id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self {
            docs,
            provenance: Vec::new(),
        })
    }

    fn derived(&self, docs: Vec<Document>, step: String) -> Self {
        let mut provenance = self.provenance.clone();
        provenance.push(step);
        Self { docs, provenance }
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn into_docs(self) -> Vec<Document> {
        self.docs
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn n_authors(&self) -> usize {
        self.docs
            .iter()
            .map(|d| d.author_id.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    /// Fills every document's token list (parallel over documents).
    pub fn tokenize(mut self, rules: &TokenRules) -> Self {
        self.docs
            .par_iter_mut()
            .for_each(|d| d.tokens = tokenize(&d.text, rules));
        self.provenance.push("tokenize".to_owned());
        self
    }

    /// Keeps documents matching `keep`.
    pub fn filter(&self, note: impl Into<String>, keep: impl Fn(&Document) -> bool) -> Self {
        let docs = self.docs.iter().filter(|d| keep(d)).cloned().collect();
        self.derived(docs, note.into())
    }

    /// Keeps documents whose author is in `authors`.
    pub fn restrict_authors(&self, authors: &HashSet<String>) -> Self {
        self.filter(format!("restrict_authors(n={})", authors.len()), |d| {
            authors.contains(&d.author_id)
        })
    }

    /// Groups documents by author in sorted author order.
    pub fn by_author(&self) -> BTreeMap<&str, Vec<&Document>> {
        let mut out: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
        for d in &self.docs {
            out.entry(d.author_id.as_str()).or_default().push(d);
        }
        out
    }
}

impl<'a> IntoIterator for &'a DocumentSet {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;
    fn into_iter(self) -> Self::IntoIter {
        self.docs.iter()
    }
}

/// Author id → lowercase attribute map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuthorTable {
    authors: BTreeMap<String, BTreeMap<String, String>>,
}

impl AuthorTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an author; empty attribute values are skipped.
    pub fn insert(
        &mut self,
        author_id: impl Into<String>,
        attributes: impl IntoIterator<Item = (String, String)>,
    ) -> Result<(), CorpusError> {
        let author_id = author_id.into();
        if self.authors.contains_key(&author_id) {
            return Err(CorpusError::DuplicateAuthor(author_id));
        }
        let attrs = attributes
            .into_iter()
            .filter(|(_, v)| !v.trim().is_empty())
            .map(|(k, v)| (k.trim().to_lowercase(), v.trim().to_lowercase()))
            .collect();
        self.authors.insert(author_id, attrs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.authors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.authors.is_empty()
    }

    pub fn get(&self, author_id: &str, attribute: &str) -> Option<&str> {
        self.authors
            .get(author_id)
            .and_then(|m| m.get(attribute))
            .map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, String>)> {
        self.authors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Labels authors holding `values[0]` as group 0 and `values[1]` as group 1
    /// for `attribute`. Authors without the attribute, or with another value,
    /// are left out.
    pub fn binary_groups(&self, attribute: &str, values: [&str; 2]) -> GroupLabels {
        let attribute = attribute.to_lowercase();
        let values = values.map(str::to_lowercase);
        let labels = self
            .authors
            .iter()
            .filter_map(|(id, attrs)| {
                let v = attrs.get(&attribute)?;
                let g = values.iter().position(|x| x == v)?;
                Some((id.clone(), g == 1))
            })
            .collect();
        GroupLabels { labels }
    }
}

/// Two-group assignment: `false` is group 0 (reference), `true` is group 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupLabels {
    labels: HashMap<String, bool>,
}

impl GroupLabels {
    pub fn get(&self, author_id: &str) -> Option<bool> {
        self.labels.get(author_id).copied()
    }

    pub fn authors(&self) -> HashSet<String> {
        self.labels.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Labels with group 0 and group 1 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|(k, v)| (k.clone(), !v)).collect(),
        }
    }
}

impl FromIterator<(String, bool)> for GroupLabels {
    fn from_iter<I: IntoIterator<Item = (String, bool)>>(iter: I) -> Self {
        Self {
            labels: iter.into_iter().collect(),
        }
    }
}

/// Documents containing at least one seed term and, when given, at least one
/// co-occurring term. Matching is exact and case-insensitive on tokens.
pub fn subset_by_keywords(
    docs: &DocumentSet,
    seed_terms: &[&str],
    co_terms: Option<&[&str]>,
) -> Result<DocumentSet, CorpusError> {
    if seed_terms.is_empty() {
        return Err(CorpusError::EmptySeedTerms);
    }
    let lower = |s: &[&str]| s.iter().map(|t| t.to_lowercase()).collect::<HashSet<_>>();
    let seeds = lower(seed_terms);
    let co = co_terms.map(lower);
    let mut note = format!("subset_by_keywords(seed={})", sorted_join(&seeds));
    if let Some(co) = &co {
        note.push_str(&format!(", co={}", sorted_join(co)));
    }
    Ok(docs.filter(note, |d| {
        d.contains_any(&seeds) && co.as_ref().is_none_or(|c| d.contains_any(c))
    }))
}

fn sorted_join(set: &HashSet<String>) -> String {
    let mut v: Vec<&str> = set.iter().map(String::as_str).collect();
    v.sort_unstable();
    v.join("|")
}

/// Picks one document per author uniformly at random. Authors are visited in
/// sorted order from a single seeded stream; output keeps input order.
pub fn sample_one_per_author(docs: &DocumentSet, seed: u64) -> DocumentSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_author: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.docs.iter().enumerate() {
        by_author.entry(d.author_id.as_str()).or_default().push(i);
    }
    let mut keep: Vec<usize> = by_author
        .values()
        .map(|idx| idx[rng.random_range(0..idx.len())])
        .collect();
    keep.sort_unstable();
    let picked = keep.into_iter().map(|i| docs.docs[i].clone()).collect();
    docs.derived(picked, format!("sample_one_per_author(seed={seed})"))
}

/// Removes tokens whose frequency over the whole set is below `k`.
/// Documents left without tokens are kept.
pub fn apply_min_count(docs: &DocumentSet, k: usize) -> Result<DocumentSet, CorpusError> {
    if k == 0 {
        return Err(CorpusError::InvalidMinCount);
    }
    let note = format!("apply_min_count(k={k})");
    if k == 1 {
        return Ok(docs.derived(docs.docs.clone(), note));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for t in docs.docs.iter().flat_map(|d| &d.tokens) {
        *freq.entry(t.as_str()).or_default() += 1;
    }
    let out = docs
        .docs
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.tokens.retain(|t| freq[t.as_str()] >= k);
            d
        })
        .collect();
    Ok(docs.derived(out, note))
}

/// UTC calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn of(ts: &DateTime<Utc>) -> Self {
        Self {
            year: ts.year(),
            month: ts.month(),
        }
    }

    /// Months since year 0, used for seed derivation.
    pub fn ordinal(&self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl std::str::FromStr for YearMonth {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s.split_once('-').ok_or_else(|| format!("bad month {s:?}"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month out of range in {s:?}"));
        }
        Ok(Self { year, month })
    }
}

/// Splits documents by UTC calendar month. Months without documents are absent.
pub fn bucket_by_month(docs: &DocumentSet) -> BTreeMap<YearMonth, DocumentSet> {
    let mut buckets: BTreeMap<YearMonth, Vec<Document>> = BTreeMap::new();
    for d in &docs.docs {
        buckets.entry(YearMonth::of(&d.timestamp)).or_default().push(d.clone());
    }
    buckets
        .into_iter()
        .map(|(ym, v)| (ym, docs.derived(v, format!("month={ym}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn doc(id: &str, author: &str, tokens: &[&str]) -> Document {
        let mut d = Document::new(id, author, ts("2020-01-01T00:00:00Z"), tokens.join(" "));
        d.tokens = tokens.iter().map(|s| s.to_string()).collect();
        d
    }

    fn set(docs: Vec<Document>) -> DocumentSet {
        DocumentSet::new(docs).unwrap()
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let err = DocumentSet::new(vec![doc("d1", "a", &[]), doc("d1", "b", &[])]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateDoc { ref doc_id, .. } if doc_id == "d1"));
    }

    #[test]
    fn keyword_subsets() {
        let pandemic = KeywordCategory::Pandemic.terms();
        let docs = set(vec![
            doc("1", "a", &["my", "kids", "got", "the", "vaccine"]),
            doc("2", "b", &["my", "kids", "play"]),
            doc("3", "c", &["children"]),
        ]);
        let seeds = ["children", "kids"];
        let with_co = subset_by_keywords(&docs, &seeds, Some(pandemic)).unwrap();
        let ids: Vec<_> = with_co.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["1"]);
        let seed_only = subset_by_keywords(&docs, &seeds, None).unwrap();
        assert_eq!(seed_only.len(), 3);
        assert!(seed_only.iter().any(|d| d.doc_id == "3"));
        assert!(matches!(
            subset_by_keywords(&docs, &[], None),
            Err(CorpusError::EmptySeedTerms)
        ));
        // case-insensitive on the query side
        assert_eq!(subset_by_keywords(&docs, &["KIDS"], None).unwrap().len(), 2);
    }

    #[test]
    fn one_per_author() {
        let docs = set(vec![
            doc("1", "a1", &[]),
            doc("2", "a1", &[]),
            doc("3", "a2", &[]),
            doc("4", "a1", &[]),
        ]);
        let s = sample_one_per_author(&docs, 7);
        assert_eq!(s.len(), 2);
        assert_eq!(s.n_authors(), 2);
        assert_eq!(s, sample_one_per_author(&docs, 7));
    }

    #[test]
    fn one_per_author_is_uniform() {
        let docs = set((0..10).map(|i| doc(&i.to_string(), "a", &[])).collect());
        let mut hits = [0usize; 10];
        let runs = 10_000;
        for seed in 0..runs {
            let s = sample_one_per_author(&docs, seed);
            hits[s.docs()[0].doc_id.parse::<usize>().unwrap()] += 1;
        }
        for h in hits {
            let f = h as f64 / runs as f64;
            assert!((f - 0.1).abs() <= 0.01, "frequency {f}");
        }
    }

    #[test]
    fn min_count_threshold() {
        let mut docs: Vec<Document> = (0..4).map(|i| doc(&i.to_string(), "a", &["zyx", "k"])).collect();
        docs.push(doc("x", "b", &["k"]));
        let docs = set(docs);
        let trimmed = apply_min_count(&docs, 5).unwrap();
        assert!(trimmed.iter().all(|d| !d.tokens.iter().any(|t| t == "zyx")));
        assert!(trimmed.iter().all(|d| d.tokens == ["k"]));
        assert_eq!(apply_min_count(&docs, 1).unwrap().docs(), docs.docs());

        let two = set(vec![doc("1", "a", &["a", "b"]), doc("2", "b", &["a", "b"])]);
        assert_eq!(apply_min_count(&two, 2).unwrap().docs(), two.docs());
        assert!(apply_min_count(&two, 0).is_err());
    }

    #[test]
    fn min_count_keeps_empty_docs() {
        let docs = set(vec![doc("1", "a", &["rare"]), doc("2", "b", &["x", "x"])]);
        let out = apply_min_count(&docs, 2).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.docs()[0].tokens.is_empty());
    }

    #[test]
    fn months() {
        let mk = |id: &str, t: &str| Document::new(id, "a", ts(t), "");
        let docs = set(vec![
            mk("1", "2020-03-01T00:00:00Z"),
            mk("2", "2020-03-31T23:59:59Z"),
            mk("3", "2020-05-10T00:00:00Z"),
        ]);
        let b = bucket_by_month(&docs);
        let keys: Vec<String> = b.keys().map(|k| k.to_string()).collect();
        assert_eq!(keys, ["2020-03", "2020-05"]);
        assert_eq!(b[&YearMonth { year: 2020, month: 3 }].len(), 2);
        // A local time just past midnight on April 1 in UTC+2 is still March in UTC.
        let offset = ts("2020-04-01T01:30:00+02:00");
        assert_eq!(YearMonth::of(&offset).to_string(), "2020-03");
        assert_eq!(Utc.with_ymd_and_hms(2020, 3, 31, 23, 30, 0).unwrap(), offset);
    }

    #[test]
    fn group_labels() {
        let mut t = AuthorTable::new();
        t.insert("a1", [("party".into(), "Dem".into())]).unwrap();
        t.insert("a2", [("party".into(), "rep".into())]).unwrap();
        t.insert("a3", [("party".into(), "ind".into())]).unwrap();
        t.insert("a4", [("party".into(), "".into())]).unwrap();
        let g = t.binary_groups("party", ["dem", "rep"]);
        assert_eq!(g.len(), 2);
        assert_eq!(g.get("a1"), Some(false));
        assert_eq!(g.get("a2"), Some(true));
        assert_eq!(g.get("a4"), None);
        assert_eq!(t.get("a4", "party"), None);
    }

    fn arb_docs() -> impl Strategy<Value = DocumentSet> {
        let tokens = prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "kids", "vaccine"]), 0..8);
        prop::collection::vec((0u8..5, tokens, 0i64..120), 0..30).prop_map(|rows| {
            let docs = rows
                .into_iter()
                .enumerate()
                .map(|(i, (a, toks, day))| {
                    let mut d = doc(&i.to_string(), &format!("u{a}"), &toks);
                    d.timestamp = ts("2020-01-01T00:00:00Z") + chrono::Duration::days(day);
                    d
                })
                .collect();
            set(docs)
        })
    }

    proptest! {
        #[test]
        fn sampling_cardinality(docs in arb_docs(), seed in any::<u64>()) {
            let s = sample_one_per_author(&docs, seed);
            prop_assert_eq!(s.len(), docs.n_authors());
            prop_assert_eq!(s.n_authors(), docs.n_authors());
            prop_assert_eq!(&s, &sample_one_per_author(&docs, seed));
        }

        #[test]
        fn keyword_subset_idempotent(docs in arb_docs()) {
            let co = ["vaccine", "c"];
            let once = subset_by_keywords(&docs, &["kids"], Some(&co)).unwrap();
            let twice = subset_by_keywords(&once, &["kids"], Some(&co)).unwrap();
            prop_assert_eq!(once.docs(), twice.docs());
        }

        #[test]
        fn min_count_survivors_meet_threshold(docs in arb_docs(), k in 1usize..6) {
            let out = apply_min_count(&docs, k).unwrap();
            let count = |s: &DocumentSet| {
                let mut m: HashMap<String, usize> = HashMap::new();
                for t in s.iter().flat_map(|d| &d.tokens) { *m.entry(t.clone()).or_default() += 1; }
                m
            };
            let before = count(&docs);
            for (t, n) in count(&out) {
                prop_assert!(n >= k);
                prop_assert_eq!(n, before[&t]);
            }
        }

        #[test]
        fn months_partition(docs in arb_docs()) {
            let buckets = bucket_by_month(&docs);
            let mut ids: Vec<String> = buckets.values().flat_map(|s| s.iter().map(|d| d.doc_id.clone())).collect();
            prop_assert_eq!(ids.len(), docs.len());
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), docs.len());
            for (ym, s) in &buckets {
                prop_assert!(!s.is_empty());
                prop_assert!(s.iter().all(|d| YearMonth::of(&d.timestamp) == *ym));
            }
        }
    }
}
