use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn textgap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textgap"))
        .current_dir(dir)
        .args(args)
        .env_remove("TEXTGAP_CORPUS")
        .env_remove("TEXTGAP_AUTHORS")
        .env_remove("TEXTGAP_EMBEDDINGS")
        .env_remove("TEXTGAP_DICTIONARY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Six authors per party; every author posts one document about kids, half
/// of them mentioning masks.
fn small_corpus(dir: &Path) {
    let mut jsonl = String::new();
    let mut authors = String::from("author_id,party\n");
    for i in 0..12 {
        let party = if i % 2 == 0 { "dem" } else { "rep" };
        authors.push_str(&format!("u{i},{party}\n"));
        let extra = if i < 6 { "masks at school" } else { "a sunny park" };
        let moral = if party == "rep" { "kill" } else { "protect" };
        jsonl.push_str(&format!(
            "{{\"doc_id\":\"d{i}\",\"author_id\":\"u{i}\",\"timestamp\":\"2021-0{}-03T10:00:00Z\",\"text\":\"Our kids {extra} {moral} today\"}}\n",
            1 + i % 3
        ));
    }
    fs::write(dir.join("corpus.jsonl"), jsonl).unwrap();
    fs::write(dir.join("authors.csv"), authors).unwrap();
    fs::write(
        dir.join("dict.csv"),
        "pattern,foundation,valence\nkill,care,vice\nprotect*,care,virtue\n",
    )
    .unwrap();
    let mut emb = String::new();
    for (k, t) in [
        "our", "masks", "at", "school", "a", "sunny", "park", "kill", "protect", "today",
    ]
    .iter()
    .enumerate()
    {
        emb.push_str(&format!("{t} {} {}\n", k as f64 * 0.1, 1.0 - k as f64 * 0.05));
    }
    fs::write(dir.join("emb.txt"), emb).unwrap();
}

const INPUTS: [&str; 4] = ["--corpus", "corpus.jsonl", "--authors", "authors.csv"];

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = textgap(dir.path(), &["--help"]);
    assert!(o.status.success());
    for sub in [
        "moral-gaps",
        "fightin-words",
        "embed-distance",
        "distance-series",
        "synth",
    ] {
        assert!(stdout(&o).contains(sub));
        assert!(textgap(dir.path(), &[sub, "--help"]).status.success());
    }
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let cases: [&[&str]; 5] = [
        &["fightin-words", "--corpus", "missing.jsonl", "--authors", "authors.csv"],
        &[
            "fightin-words",
            "--corpus",
            "corpus.jsonl",
            "--authors",
            "authors.csv",
            "--groups",
            "dem",
        ],
        &[
            "moral-gaps",
            "--corpus",
            "corpus.jsonl",
            "--authors",
            "authors.csv",
            "--dictionary",
            "dict.csv",
            "--hc",
            "hc9",
        ],
        &[
            "embed-distance",
            "--corpus",
            "corpus.jsonl",
            "--authors",
            "authors.csv",
            "--embeddings",
            "emb.txt",
            "--category",
            "sports",
        ],
        &["no-such-command"],
    ];
    for args in cases {
        let o = textgap(dir.path(), args);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    fs::write(
        dir.path().join("bad.jsonl"),
        "{\"doc_id\":\"x\",\"timestamp\":\"2020-01-01\",\"text\":\"hi\"}\n",
    )
    .unwrap();
    let o = textgap(
        dir.path(),
        &["fightin-words", "--corpus", "bad.jsonl", "--authors", "authors.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 1") && err.contains("author_id"), "{err}");

    fs::write(
        dir.path().join("bad_dict.csv"),
        "pattern,foundation,valence\nkill,caring,vice\n",
    )
    .unwrap();
    let mut args = vec!["moral-gaps", "--dictionary", "bad_dict.csv"];
    args.extend(INPUTS);
    assert_eq!(textgap(dir.path(), &args).status.code(), Some(2));
}

#[test]
fn analysis_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    // no document mentions the seed term
    let mut args = vec!["fightin-words", "--seed-terms", "zebra"];
    args.extend(INPUTS);
    let o = textgap(dir.path(), &args);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn csv_outputs_carry_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let mut args = vec![
        "moral-gaps",
        "--dictionary",
        "dict.csv",
        "--seed-terms",
        "kids",
        "--seed",
        "42",
        "--category",
        "pandemic",
    ];
    args.extend(INPUTS);
    let o = textgap(dir.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    let echo: serde_json::Value = serde_json::from_str(first.strip_prefix("# config: ").unwrap()).unwrap();
    assert_eq!(echo["seed"], 42);
    assert_eq!(echo["command"], "moral-gaps");
    assert!(echo.get("threads").is_none());

    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 20);
    let care_vice_all = rows
        .iter()
        .find(|r| &r[1] == "all" && &r[2] == "care" && &r[3] == "vice")
        .unwrap();
    // every rep author uses "kill", no dem author does
    assert_eq!(&care_vice_all[4], "1.0");
    assert_eq!(&care_vice_all[8], "12");
    let pandemic = rows.iter().find(|r| &r[1] == "pandemic").unwrap();
    assert_eq!(&pandemic[8], "6");
}

#[test]
fn pandemic_category_restricts_embedding_subset() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let run = |extra: &[&str]| {
        let mut args = vec![
            "embed-distance",
            "--embeddings",
            "emb.txt",
            "--seed-terms",
            "kids",
            "--min-count",
            "1",
            "--permutations",
            "20",
        ];
        args.extend(INPUTS);
        args.extend(extra);
        let o = textgap(dir.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()
    };
    let all = run(&[]);
    assert_eq!(all["analyses"][0]["n_users_per_group"], serde_json::json!([6, 6]));
    let pandemic = run(&["--category", "pandemic"]);
    assert_eq!(pandemic["analyses"][0]["n_users_per_group"], serde_json::json!([3, 3]));
    let explicit = run(&["--co-terms", "vaccine,remote,masks,distancing"]);
    assert_eq!(explicit["analyses"], pandemic["analyses"]);
}

#[test]
fn env_overrides_default_paths() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let o = Command::new(env!("CARGO_BIN_EXE_textgap"))
        .current_dir(dir.path())
        .args(["fightin-words", "--min-count", "1", "--top", "2"])
        .env("TEXTGAP_CORPUS", "corpus.jsonl")
        .env("TEXTGAP_AUTHORS", "authors.csv")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("\"corpus\":\"corpus.jsonl\""));
    assert!(text.contains("group,rank,term,group_a_count,group_b_count,delta,variance,z,bigram_annotations"));
    assert!(text.contains("rep,1,kill,0,6,"));
    assert!(text.contains("dem,1,protect,6,0,"));
}

#[test]
fn series_writes_events_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    fs::write(
        dir.path().join("events.csv"),
        "date,label\n2021-02-14,something happened\n",
    )
    .unwrap();
    let mut args = vec![
        "distance-series",
        "--embeddings",
        "emb.txt",
        "--min-users",
        "2",
        "--min-count",
        "1",
        "--permutations",
        "10",
        "--events",
        "events.csv",
        "--people-baseline",
    ];
    args.extend(INPUTS);
    let o = textgap(dir.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("# event: 2021-02-14,something happened"));
    assert!(
        text.contains("month,target,corrected_sq,p_value,null_ci_low,null_ci_high,n_group0,n_group1,skipped_reason")
    );
    // children has no documents, kids spans three months, people is the baseline row
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(
        data.iter()
            .filter(|l| l.starts_with("2021-0") && l.contains(",kids,"))
            .count(),
        3
    );
    assert!(data.iter().any(|l| l.starts_with("all,people,")));
}

#[test]
fn synthetic_null_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut above = 0;
    let mut sum = 0.0;
    let seeds = 40;
    for seed in 0..seeds {
        let s = seed.to_string();
        let o = textgap(
            d,
            &[
                "synth",
                "--out-dir",
                "null",
                "--authors-per-group",
                "40",
                "--divergence",
                "0",
                "--dim",
                "10",
                "--seed",
                &s,
            ],
        );
        assert!(o.status.success());
        let o = textgap(
            d,
            &[
                "embed-distance",
                "--corpus",
                "null/corpus.jsonl",
                "--authors",
                "null/authors.csv",
                "--embeddings",
                "null/embeddings.txt",
                "--groups",
                "dem,rep",
                "--seed-terms",
                "children,kids",
                "--window",
                "6",
                "--permutations",
                "1000",
                "--seed",
                &s,
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        let kids = &v["analyses"][1];
        assert_eq!(kids["target"], "kids");
        assert!(v["analyses"][0]["skipped_reason"].is_string());
        above += usize::from(kids["p_value"].as_f64().unwrap() > 0.05);
        sum += kids["corrected_sq"].as_f64().unwrap();
    }
    // about 95% expected; 34 of 40 is 2.4 binomial sd below
    assert!(above >= 34, "{above}/{seeds}");
    assert!((sum / seeds as f64).abs() < 0.02, "{}", sum / seeds as f64);
}
