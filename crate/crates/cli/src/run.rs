use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use textgap::corpus::{self, CorpusFormat, DocumentSet, GroupLabels, KeywordCategory, TokenRules};
use textgap::embedreg::{self, EmbedConfig, EmbedReport, EmbeddingTable};
use textgap::fightin::{self, PriorSpec, Side};
use textgap::lexicon::{self, LexiconError, MoralCategory, MoralDictionary};
use textgap::seed::{derive_seed, stream};
use textgap::synth::{self, SynthSpec};
use textgap::timeseries::{self, SeriesConfig};
use textgap::HcFlavor;

use crate::args::{
    Cli, Command, EmbedArgs, EmbeddingArgs, FightinArgs, InputArgs, MoralGapsArgs, SeriesArgs, SynthArgs,
};
use crate::error::{Classify, Failure, Kind};

const PEOPLE: &str = "people";

pub fn run(cli: Cli) -> Result<(), Failure> {
    let pool = rayon::ThreadPoolBuilder::new();
    let pool = match cli.threads {
        Some(0) => return Err(Failure::config("--threads must be at least 1")),
        Some(n) => pool.num_threads(n),
        None => pool,
    };
    let pool = pool
        .build()
        .or_fail(Kind::Config, || "building the thread pool".into())?;
    let echo = config_echo(&cli.command)?;
    pool.install(|| match &cli.command {
        Command::MoralGaps(a) => moral_gaps(a, &echo),
        Command::FightinWords(a) => fightin_words(a, &echo),
        Command::EmbedDistance(a) => embed_distance(a, &echo),
        Command::DistanceSeries(a) => distance_series(a, &echo),
        Command::Synth(a) => synth_corpus(a, &echo),
    })
}

/// Single-line JSON of the parsed command. `--threads` is left out so
/// reruns at any thread count echo the same configuration.
fn config_echo(command: &Command) -> Result<String, Failure> {
    let mut v = serde_json::to_value(command).or_fail(Kind::Config, || "serializing configuration".into())?;
    v["version"] = json!(env!("CARGO_PKG_VERSION"));
    Ok(v.to_string())
}

fn require_file(path: &Path, flag: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::config(format!("{flag}: {} does not exist", path.display())))
    }
}

fn terms(list: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in list.iter().map(|t| t.trim().to_lowercase()).filter(|t| !t.is_empty()) {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

struct Inputs {
    docs: DocumentSet,
    groups: GroupLabels,
    group_values: [String; 2],
    seed_terms: Vec<String>,
}

fn load_inputs(input: &InputArgs) -> Result<Inputs, Failure> {
    let values = terms(&input.groups);
    let group_values: [String; 2] = values
        .try_into()
        .map_err(|_| Failure::config("--groups takes exactly two distinct values, e.g. dem,rep"))?;
    let seed_terms = terms(&input.seed_terms);
    if seed_terms.is_empty() {
        return Err(Failure::config("--seed-terms is empty"));
    }
    require_file(&input.corpus, "--corpus")?;
    require_file(&input.authors, "--authors")?;
    let format = match &input.format {
        Some(f) => f.parse::<CorpusFormat>().map_err(Failure::config)?,
        None => CorpusFormat::from_path(&input.corpus),
    };
    let attr = input.group_attr.trim().to_lowercase();
    let docs = corpus::load_corpus(&input.corpus, format)
        .or_fail(Kind::Data, || format!("reading {}", input.corpus.display()))?;
    let authors =
        corpus::load_authors(&input.authors).or_fail(Kind::Data, || format!("reading {}", input.authors.display()))?;
    let groups = authors.binary_groups(&attr, [&group_values[0], &group_values[1]]);
    if groups.is_empty() {
        return Err(Failure {
            kind: Kind::Data,
            error: anyhow::anyhow!(
                "no author has {attr} equal to {} or {}",
                group_values[0],
                group_values[1]
            ),
        });
    }
    let docs = docs
        .restrict_authors(&groups.authors())
        .tokenize(&TokenRules::default());
    log::info!("{} documents from {} labeled authors", docs.len(), docs.n_authors());
    Ok(Inputs {
        docs,
        groups,
        group_values,
        seed_terms,
    })
}

fn load_dictionary(path: &Path, exact_only: bool) -> Result<MoralDictionary, Failure> {
    require_file(path, "dictionary")?;
    let dict = lexicon::load_moral_dictionary(path).or_fail(Kind::Data, || format!("reading {}", path.display()))?;
    Ok(dict.exact_only(exact_only))
}

fn parse_categories(raw: &[String]) -> Result<Vec<KeywordCategory>, Failure> {
    let mut out = Vec::new();
    for name in terms(raw) {
        let add: Vec<KeywordCategory> = if name == "all" {
            KeywordCategory::ALL.to_vec()
        } else {
            vec![name.parse().map_err(Failure::config)?]
        };
        for c in add {
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Buffers output so a failed run never leaves a partial file behind.
fn emit(path: Option<&PathBuf>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).or_fail(Kind::Data, || format!("writing {}", p.display())),
        None => std::io::stdout()
            .write_all(bytes)
            .or_fail(Kind::Data, || "writing to stdout".into()),
    }
}

fn csv_with_echo<S: Serialize>(echo: &str, extra_comments: &[String], rows: &[S]) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    writeln!(buf, "# config: {echo}").expect("in-memory write");
    for c in extra_comments {
        writeln!(buf, "# {c}").expect("in-memory write");
    }
    let mut w = csv::Writer::from_writer(buf);
    for r in rows {
        w.serialize(r).or_fail(Kind::Data, || "formatting CSV".into())?;
    }
    w.into_inner().map_err(|e| Failure {
        kind: Kind::Data,
        error: anyhow::anyhow!("{}", e.error()),
    })
}

#[derive(Serialize)]
struct GapRow<'a> {
    seed_terms: String,
    subset: &'a str,
    foundation: &'static str,
    valence: &'static str,
    coefficient: Option<f64>,
    robust_se: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    n_users: usize,
    covariate_dropped: Option<bool>,
    skipped_reason: String,
}

fn moral_gaps(a: &MoralGapsArgs, echo: &str) -> Result<(), Failure> {
    let flavor: HcFlavor = a.hc.parse().map_err(Failure::config)?;
    let categories = parse_categories(&a.category)?;
    let dict = load_dictionary(&a.dictionary, a.exact_only)?;
    let inputs = load_inputs(&a.input)?;

    let mut seed_sets = vec![inputs.seed_terms.clone()];
    if a.people_baseline {
        seed_sets.push(vec![PEOPLE.to_string()]);
    }
    let mut subsets: Vec<(&str, Option<&[&str]>)> = vec![("all", None)];
    subsets.extend(categories.iter().map(|c| (c.name(), Some(c.terms()))));

    let mut rows = Vec::new();
    for seeds in &seed_sets {
        for (subset, co) in &subsets {
            let docs = corpus::subset_by_keywords(&inputs.docs, &as_strs(seeds), *co)
                .or_fail(Kind::Analysis, || format!("subset {subset}"))?;
            let profiles = lexicon::profiles_by_author(&docs, &dict);
            for category in MoralCategory::all() {
                let mut row = GapRow {
                    seed_terms: seeds.join(";"),
                    subset,
                    foundation: category.foundation.name(),
                    valence: category.valence.name(),
                    coefficient: None,
                    robust_se: None,
                    ci_low: None,
                    ci_high: None,
                    n_users: profiles.len(),
                    covariate_dropped: None,
                    skipped_reason: String::new(),
                };
                match lexicon::moral_gap_regression(&profiles, &inputs.groups, category, flavor) {
                    Ok(est) => {
                        row.coefficient = Some(est.coefficient);
                        row.robust_se = Some(est.robust_se);
                        row.ci_low = Some(est.ci_low);
                        row.ci_high = Some(est.ci_high);
                        row.covariate_dropped = Some(est.covariate_dropped);
                    }
                    Err(e @ LexiconError::SmallGroup { .. }) => row.skipped_reason = e.to_string(),
                    Err(e) => {
                        return Err(e).or_fail(Kind::Analysis, || {
                            format!("seed terms {}, subset {subset}, {category}", seeds.join(";"))
                        })
                    }
                }
                rows.push(row);
            }
        }
    }
    let note = format!(
        "coefficient = {} minus {}",
        inputs.group_values[1], inputs.group_values[0]
    );
    emit(a.input.output.as_ref(), &csv_with_echo(echo, &[note], &rows)?)
}

#[derive(Serialize)]
struct TermRow<'a> {
    group: &'a str,
    rank: usize,
    term: String,
    group_a_count: u64,
    group_b_count: u64,
    delta: f64,
    variance: f64,
    z: f64,
    bigram_annotations: String,
}

fn fightin_words(a: &FightinArgs, echo: &str) -> Result<(), Failure> {
    if !(a.prior_scale > 0.0 && a.prior_scale.is_finite()) {
        return Err(Failure::config("--prior-scale must be positive"));
    }
    if !(1..=2).contains(&a.ngram_max) {
        return Err(Failure::config("--ngram-max must be 1 or 2"));
    }
    if a.top == 0 {
        return Err(Failure::config("--top must be at least 1"));
    }
    let dict = match &a.dict_filter {
        Some(p) => Some(load_dictionary(p, a.exact_only)?),
        None => None,
    };
    let inputs = load_inputs(&a.input)?;
    let subset = corpus::subset_by_keywords(&inputs.docs, &as_strs(&inputs.seed_terms), None)
        .or_fail(Kind::Analysis, || "seed-term subset".into())?;
    let docs = if a.all_docs {
        subset
    } else {
        corpus::sample_one_per_author(&subset, derive_seed(a.input.seed, stream::SAMPLING))
    };
    let exclude: HashSet<String> = inputs.seed_terms.iter().cloned().chain(terms(&a.exclude)).collect();

    let counts = fightin::count_terms(&docs, &inputs.groups, a.ngram_max, a.min_count, &exclude, dict.as_ref())
        .or_fail(Kind::Analysis, || "counting terms".into())?;
    let prior = PriorSpec::informative(&counts, a.prior_scale).or_fail(Kind::Analysis, || "building prior".into())?;
    let results = fightin::weighted_log_odds(&counts, &prior).or_fail(Kind::Analysis, || "log-odds".into())?;
    let (bigrams, unigrams): (Vec<_>, Vec<_>) = results.into_iter().partition(|r| r.is_bigram());

    let mut rows = Vec::new();
    for (side, name) in [(Side::A, &inputs.group_values[0]), (Side::B, &inputs.group_values[1])] {
        let top =
            fightin::top_polarized(&unigrams, a.top, side).or_fail(Kind::Analysis, || format!("ranking {name}"))?;
        let annotated = fightin::attach_bigram_context(&top, &bigrams, a.bigrams_per_term);
        for (i, r) in annotated.into_iter().enumerate() {
            rows.push(TermRow {
                group: name,
                rank: i + 1,
                group_a_count: r.count_a,
                group_b_count: r.count_b,
                delta: r.delta,
                variance: r.variance,
                z: r.z,
                bigram_annotations: r.bigrams.join(";"),
                term: r.term,
            });
        }
    }
    let note = format!(
        "group A = {}, group B = {}; positive z leans A; a0 = {}; n_A = {}, n_B = {}",
        inputs.group_values[0], inputs.group_values[1], prior.scale, counts.total_a, counts.total_b
    );
    emit(a.input.output.as_ref(), &csv_with_echo(echo, &[note], &rows)?)
}

fn embed_config(e: &EmbeddingArgs, seed: u64) -> Result<EmbedConfig, Failure> {
    if e.window == 0 {
        return Err(Failure::config("--window must be at least 1"));
    }
    if e.permutations == 0 {
        return Err(Failure::config("--permutations must be at least 1"));
    }
    let co_terms = match &e.category {
        Some(c) => {
            let c: KeywordCategory = c.parse().map_err(Failure::config)?;
            Some(c.terms().iter().map(|t| t.to_string()).collect())
        }
        None if !e.co_terms.is_empty() => Some(terms(&e.co_terms)),
        None => None,
    };
    Ok(EmbedConfig {
        window: e.window,
        permutations: e.permutations,
        seed,
        min_count: e.min_count,
        co_terms,
    })
}

fn load_table(path: &Path) -> Result<EmbeddingTable, Failure> {
    require_file(path, "--embeddings")?;
    embedreg::load_embeddings(path).or_fail(Kind::Data, || format!("reading {}", path.display()))
}

#[derive(Serialize)]
#[serde(untagged)]
enum TermAnalysis {
    Estimated(EmbedReport),
    Skipped {
        target: String,
        n_users_per_group: [usize; 2],
        dropped_docs: usize,
        skipped_reason: String,
    },
}

fn analyse_term(
    inputs: &Inputs,
    target: &str,
    table: &EmbeddingTable,
    cfg: &EmbedConfig,
) -> Result<TermAnalysis, Failure> {
    let prepared = embedreg::prepare_observations(&inputs.docs, &inputs.groups, target, table, cfg)
        .or_fail(Kind::Analysis, || format!("preparing {target}"))?;
    if prepared.n_group0 < 2 || prepared.n_group1 < 2 {
        return Ok(TermAnalysis::Skipped {
            target: prepared.target,
            n_users_per_group: [prepared.n_group0, prepared.n_group1],
            dropped_docs: prepared.dropped_docs,
            skipped_reason: "fewer than 2 users in a group".into(),
        });
    }
    let analysis = embedreg::analyze(&prepared, cfg).or_fail(Kind::Analysis, || format!("estimating {target}"))?;
    Ok(TermAnalysis::Estimated(analysis.report()))
}

fn embed_distance(a: &EmbedArgs, echo: &str) -> Result<(), Failure> {
    let cfg = embed_config(&a.embed, a.input.seed)?;
    let table = load_table(&a.embed.embeddings)?;
    let inputs = load_inputs(&a.input)?;

    let analyses = inputs
        .seed_terms
        .iter()
        .map(|t| analyse_term(&inputs, t, &table, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let estimated: Vec<&EmbedReport> = analyses
        .iter()
        .filter_map(|x| match x {
            TermAnalysis::Estimated(r) => Some(r),
            TermAnalysis::Skipped { .. } => None,
        })
        .collect();
    let pooled = if estimated.is_empty() {
        serde_json::Value::Null
    } else {
        let values: Vec<f64> = estimated.iter().map(|r| r.corrected_sq).collect();
        let weights: Vec<f64> = estimated
            .iter()
            .map(|r| (r.n_users_per_group[0] + r.n_users_per_group[1]) as f64)
            .collect();
        let v = timeseries::weighted_average_estimate(&values, &weights)
            .or_fail(Kind::Analysis, || "pooling estimates".into())?;
        json!({
            "targets": estimated.iter().map(|r| r.target.as_str()).collect::<Vec<_>>(),
            "weights": weights,
            "corrected_sq": v,
        })
    };
    let baseline = if a.embed.people_baseline {
        Some(analyse_term(&inputs, PEOPLE, &table, &cfg)?)
    } else {
        None
    };
    let out = json!({
        "config": serde_json::from_str::<serde_json::Value>(echo).expect("echo is JSON"),
        "groups": inputs.group_values,
        "analyses": analyses,
        "pooled": pooled,
        "baseline": baseline,
    });
    let mut bytes = serde_json::to_vec_pretty(&out).or_fail(Kind::Data, || "formatting JSON".into())?;
    bytes.push(b'\n');
    emit(a.input.output.as_ref(), &bytes)
}

#[derive(Serialize)]
struct SeriesRow {
    month: String,
    target: String,
    corrected_sq: Option<f64>,
    p_value: Option<f64>,
    null_ci_low: Option<f64>,
    null_ci_high: Option<f64>,
    n_group0: usize,
    n_group1: usize,
    skipped_reason: String,
}

#[derive(serde::Deserialize)]
struct EventRecord {
    date: String,
    label: String,
}

fn read_events(path: &Path) -> Result<Vec<String>, Failure> {
    require_file(path, "--events")?;
    let mut reader = csv::Reader::from_path(path).or_fail(Kind::Data, || format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<EventRecord>().enumerate() {
        let line = i + 2;
        let rec = rec.or_fail(Kind::Data, || format!("{} line {line}", path.display()))?;
        let ts = corpus::parse_timestamp(&rec.date).ok_or_else(|| Failure {
            kind: Kind::Data,
            error: anyhow::anyhow!("{} line {line}: unparsable date {:?}", path.display(), rec.date),
        })?;
        out.push(format!("event: {},{}", ts.format("%Y-%m-%d"), rec.label.trim()));
    }
    Ok(out)
}

fn distance_series(a: &SeriesArgs, echo: &str) -> Result<(), Failure> {
    let cfg = embed_config(&a.embed, a.input.seed)?;
    let events = match &a.events {
        Some(p) => read_events(p)?,
        None => Vec::new(),
    };
    let table = load_table(&a.embed.embeddings)?;
    let inputs = load_inputs(&a.input)?;
    let series_cfg = SeriesConfig {
        embed: cfg.clone(),
        min_users: a.min_users,
    };

    let mut rows = Vec::new();
    for target in &inputs.seed_terms {
        let series = timeseries::monthly_distance_series(&inputs.docs, &inputs.groups, target, &table, &series_cfg)
            .or_fail(Kind::Analysis, || format!("series for {target}"))?;
        for m in series {
            let est = m.estimate.as_ref();
            rows.push(SeriesRow {
                month: m.month.to_string(),
                target: m.target,
                corrected_sq: est.map(|e| e.corrected_sq),
                p_value: est.and_then(|e| e.p_value),
                null_ci_low: est.and_then(|e| e.null_ci).map(|c| c.0),
                null_ci_high: est.and_then(|e| e.null_ci).map(|c| c.1),
                n_group0: m.n_group0,
                n_group1: m.n_group1,
                skipped_reason: m.skipped_reason.unwrap_or_default(),
            });
        }
    }
    if a.embed.people_baseline {
        // Whole-period reference level, reported with month "all".
        let row = match analyse_term(&inputs, PEOPLE, &table, &cfg)? {
            TermAnalysis::Estimated(r) => SeriesRow {
                month: "all".into(),
                target: r.target,
                corrected_sq: Some(r.corrected_sq),
                p_value: Some(r.p_value),
                null_ci_low: Some(r.null_ci[0]),
                null_ci_high: Some(r.null_ci[1]),
                n_group0: r.n_users_per_group[0],
                n_group1: r.n_users_per_group[1],
                skipped_reason: String::new(),
            },
            TermAnalysis::Skipped {
                target,
                n_users_per_group,
                skipped_reason,
                ..
            } => SeriesRow {
                month: "all".into(),
                target,
                corrected_sq: None,
                p_value: None,
                null_ci_low: None,
                null_ci_high: None,
                n_group0: n_users_per_group[0],
                n_group1: n_users_per_group[1],
                skipped_reason,
            },
        };
        rows.push(row);
    }
    emit(a.input.output.as_ref(), &csv_with_echo(echo, &events, &rows)?)
}

fn synth_corpus(a: &SynthArgs, echo: &str) -> Result<(), Failure> {
    let pair = |v: &[usize], flag: &str| -> Result<(usize, usize), Failure> {
        match v {
            [lo, hi] => Ok((*lo, *hi)),
            [n] => Ok((*n, *n)),
            _ => Err(Failure::config(format!("{flag} takes min,max"))),
        }
    };
    if a.dim == 0 {
        return Err(Failure::config("--dim must be at least 1"));
    }
    let mut spec = SynthSpec::new(a.authors_per_group, a.divergence, a.seed);
    spec.docs_per_author = pair(&a.docs_per_author, "--docs-per-author")?;
    spec.context_len = pair(&a.context_len, "--context-len")?;
    spec.target = a.target.trim().to_lowercase();
    spec.months = a.months;
    let (docs, authors) = synth::generate_corpus(&spec).map_err(Failure::config)?;
    let table = synth::spec_embeddings(
        &spec,
        a.dim,
        a.separation,
        derive_seed(a.seed, stream::SYNTH_EMBEDDINGS),
    )
    .map_err(Failure::config)?;

    fs::create_dir_all(&a.out_dir).or_fail(Kind::Data, || format!("creating {}", a.out_dir.display()))?;
    let write = |name: &str, bytes: Vec<u8>| -> Result<(), Failure> {
        let p = a.out_dir.join(name);
        fs::write(&p, bytes).or_fail(Kind::Data, || format!("writing {}", p.display()))
    };
    let mut buf = Vec::new();
    corpus::write_jsonl(&docs, &mut buf).or_fail(Kind::Data, || "formatting corpus".into())?;
    write("corpus.jsonl", buf)?;
    let mut buf = Vec::new();
    corpus::write_authors(&authors, &mut buf).or_fail(Kind::Data, || "formatting authors".into())?;
    write("authors.csv", buf)?;
    let mut buf = Vec::new();
    table
        .write_text(&mut buf)
        .or_fail(Kind::Data, || "formatting embeddings".into())?;
    write("embeddings.txt", buf)?;

    let gap = vec![2.0 * a.separation; a.dim];
    let meta = json!({
        "config": serde_json::from_str::<serde_json::Value>(echo).expect("echo is JSON"),
        "n_documents": docs.len(),
        "n_authors": authors.len(),
        "population_sq_distance": synth::population_sq_distance(&spec, &table),
        "expected_population_sq_distance": synth::expected_population_sq_distance(&spec, &gap),
    });
    let mut bytes = serde_json::to_vec_pretty(&meta).or_fail(Kind::Data, || "formatting JSON".into())?;
    bytes.push(b'\n');
    write("synth.json", bytes)
}
