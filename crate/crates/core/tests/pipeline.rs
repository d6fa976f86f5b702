use chrono::{Months, TimeZone, Utc};
use textgap::corpus::{self, CorpusFormat, DocumentSet, TokenRules, YearMonth};
use textgap::embedreg::{self, EmbedConfig, EmbeddingTable};
use textgap::synth::{self, SynthSpec};
use textgap::timeseries::{self, month_seed, SeriesConfig};
use textgap::GroupLabels;

fn fixture(n: usize, divergence: f64, months: u32, seed: u64) -> (DocumentSet, GroupLabels, EmbeddingTable) {
    let mut spec = SynthSpec::new(n, divergence, seed);
    spec.months = months;
    let (docs, authors) = synth::generate_corpus(&spec).unwrap();
    let table = synth::spec_embeddings(&spec, 8, 0.3, seed ^ 0xABCD).unwrap();
    (docs, authors.binary_groups("party", ["dem", "rep"]), table)
}

fn cfg(permutations: usize, seed: u64) -> EmbedConfig {
    EmbedConfig {
        permutations,
        seed,
        ..EmbedConfig::default()
    }
}

#[test]
fn file_round_trip_matches_in_memory_pipeline() {
    let mut spec = SynthSpec::new(60, 0.4, 17);
    spec.docs_per_author = (1, 3);
    let (docs, authors) = synth::generate_corpus(&spec).unwrap();
    let table = synth::spec_embeddings(&spec, 6, 0.25, 5).unwrap();

    let mut jsonl = Vec::new();
    corpus::write_jsonl(&docs, &mut jsonl).unwrap();
    let mut authors_csv = Vec::new();
    corpus::write_authors(&authors, &mut authors_csv).unwrap();
    let mut emb = Vec::new();
    table.write_text(&mut emb).unwrap();

    let loaded = corpus::read_corpus(jsonl.as_slice(), CorpusFormat::Jsonl)
        .unwrap()
        .tokenize(&TokenRules::default());
    let loaded_authors = corpus::read_authors(authors_csv.as_slice()).unwrap();
    let loaded_table = embedreg::read_embeddings(emb.as_slice()).unwrap();
    assert_eq!(loaded.len(), docs.len());
    for (a, b) in loaded.iter().zip(&docs) {
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.timestamp, b.timestamp);
    }
    assert_eq!(loaded_authors, authors);

    let groups = authors.binary_groups("party", ["dem", "rep"]);
    let c = cfg(50, 3);
    let direct = embedreg::embed_distance(&docs, &groups, "kids", &table, &c).unwrap();
    let via_files = embedreg::embed_distance(&loaded, &groups, "kids", &loaded_table, &c).unwrap();
    // the text format stores f32 exactly, so nothing is lost
    assert_eq!(direct.estimate, via_files.estimate);
    assert_eq!(direct.null, via_files.null);
}

#[test]
fn single_month_series_equals_standalone_run() {
    let (docs, groups, table) = fixture(40, 0.3, 1, 2);
    let config = SeriesConfig {
        embed: cfg(100, 11),
        min_users: 20,
    };
    let series = timeseries::monthly_distance_series(&docs, &groups, "kids", &table, &config).unwrap();
    assert_eq!(series.len(), 1);
    let m = &series[0];
    let month = YearMonth { year: 2020, month: 1 };
    assert_eq!(m.month, month);
    let standalone =
        embedreg::embed_distance(&docs, &groups, "kids", &table, &cfg(100, month_seed(11, month))).unwrap();
    assert_eq!(m.estimate.as_ref().unwrap(), &standalone.estimate);
    assert_eq!(m.seed, month_seed(11, month));
}

#[test]
fn months_are_independent() {
    let (docs, groups, table) = fixture(80, 0.3, 3, 4);
    let config = SeriesConfig {
        embed: cfg(60, 5),
        min_users: 5,
    };
    let before = timeseries::monthly_distance_series(&docs, &groups, "kids", &table, &config).unwrap();
    assert_eq!(before.len(), 3);

    // Extra documents land in the second month only.
    let (extra, _, _) = fixture(30, 0.0, 1, 99);
    let shifted: Vec<_> = extra
        .into_docs()
        .into_iter()
        .map(|mut d| {
            d.doc_id = format!("x{}", d.doc_id);
            d.timestamp = d.timestamp + Months::new(1);
            d
        })
        .collect();
    let mut all = docs.into_docs();
    all.extend(shifted);
    let after =
        timeseries::monthly_distance_series(&DocumentSet::new(all).unwrap(), &groups, "kids", &table, &config).unwrap();
    assert_eq!(after.len(), 3);
    assert_eq!(before[0], after[0]);
    assert_eq!(before[2], after[2]);
    assert_ne!(before[1], after[1]);
}

#[test]
fn sparse_month_is_skipped_with_counts() {
    let (docs, groups, table) = fixture(30, 0.2, 1, 6);
    // One group-B author posts a month later.
    let mut all = docs.into_docs();
    let lone = all.iter().position(|d| groups.get(&d.author_id) == Some(true)).unwrap();
    all[lone].timestamp = Utc.with_ymd_and_hms(2020, 2, 10, 0, 0, 0).unwrap();
    let docs = DocumentSet::new(all).unwrap();
    let config = SeriesConfig {
        embed: EmbedConfig {
            min_count: 1,
            ..cfg(20, 1)
        },
        min_users: 20,
    };
    let series = timeseries::monthly_distance_series(&docs, &groups, "kids", &table, &config).unwrap();
    assert_eq!(series.len(), 2);
    assert!(series[0].estimate.is_some());
    let feb = &series[1];
    assert!(feb.estimate.is_none());
    assert_eq!((feb.n_group0, feb.n_group1), (0, 1));
    assert!(feb.skipped_reason.as_deref().unwrap().contains("fewer than 20"));
}

#[test]
fn series_is_thread_count_independent() {
    let (docs, groups, table) = fixture(60, 0.3, 2, 8);
    let config = SeriesConfig {
        embed: cfg(100, 21),
        min_users: 5,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| timeseries::monthly_distance_series(&docs, &groups, "kids", &table, &config).unwrap())
    };
    assert_eq!(run(1), run(4));
}
