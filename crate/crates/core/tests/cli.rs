mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("BIOPORTAL_API_KEY").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn audit_sample_args<'a>(dict: &'a str, doid: &'a str, pato: &'a str, corpus: &'a str) -> Vec<&'a str> {
    vec!["audit", "--dictionary", dict, "--terms", doid, "--terms", pato, "--corpus", corpus, "--quiet"]
}

struct Paths {
    dict: String,
    doid: String,
    pato: String,
}

fn paths() -> Paths {
    Paths {
        dict: p(&fixture("dictionary.sample.json")).to_string(),
        doid: p(&fixture("doid.terms.tsv")).to_string(),
        pato: p(&fixture("pato.terms.tsv")).to_string(),
    }
}

#[test]
fn golden_report_and_anomaly_log() {
    let ps = paths();
    let corpus = p(&fixture("sample.xml")).to_string();
    let golden = std::fs::read_to_string(fixture("golden.sample.json")).unwrap();
    let golden_log = std::fs::read_to_string(fixture("golden.sample.anomalies.tsv")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for workers in ["1", "3"] {
        let report = dir.path().join(format!("report-{workers}.json"));
        let log = dir.path().join(format!("anomalies-{workers}.tsv"));
        let mut args = audit_sample_args(&ps.dict, &ps.doid, &ps.pato, &corpus);
        args.extend(["--workers", workers, "--output", p(&report), "--anomaly-log", p(&log)]);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(o.stdout.is_empty());
        assert_eq!(std::fs::read_to_string(&report).unwrap(), golden);
        assert_eq!(std::fs::read_to_string(&log).unwrap(), golden_log);
    }
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn report_goes_to_stdout_without_output_path() {
    let ps = paths();
    let corpus = p(&fixture("sample.xml")).to_string();
    let o = run(&audit_sample_args(&ps.dict, &ps.doid, &ps.pato, &corpus));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), std::fs::read_to_string(fixture("golden.sample.json")).unwrap());
}

#[test]
fn csv_and_table_formats() {
    let ps = paths();
    let corpus = p(&fixture("sample.xml")).to_string();
    let mut args = audit_sample_args(&ps.dict, &ps.doid, &ps.pato, &corpus);
    args.extend(["--format", "csv"]);
    let csv = stdout(&run(&args));
    assert_eq!(
        csv.lines().collect::<Vec<_>>(),
        [
            "group,filled_in,well_specified,invalid,not_assessed,percent,records_containing,records_all_valid,record_percent",
            "ontology_term,3,2,1,0,67,3,2,67",
            "value_set,3,2,1,0,67,3,2,67",
            "boolean,2,1,1,0,50,2,1,50",
            "integer,2,1,1,0,50,2,1,50",
        ]
    );
    let mut args = audit_sample_args(&ps.dict, &ps.doid, &ps.pato, &corpus);
    args.extend(["--format", "table"]);
    let table = stdout(&run(&args));
    assert!(table.starts_with("Attribute type"));
    assert!(table.contains("Custom attribute names: 2 in 2 occurrences"));
}

#[test]
fn config_file_with_flag_overrides() {
    let ps = paths();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("audit.json");
    let out = dir.path().join("report.csv");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "dictionary_path": ps.dict,
            "corpus_path": p(&fixture("sample.jsonl")),
            "corpus_format": "jsonl",
            "resolver": {"mode": "local", "term_files": [ps.doid, ps.pato]},
            "workers": 2,
            "output_format": "json",
            "progress_every": 0
        })
        .to_string(),
    )
    .unwrap();
    let o = run(&["audit", "--config", p(&cfg), "--format", "csv", "--output", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("group,"));
    // sample.jsonl: two DOID values, one valid
    assert!(csv.contains("\nontology_term,2,1,1,0,50,2,1,50\n"), "{csv}");

    std::fs::write(&cfg, r#"{"dictionary_path": "x", "no_such_field": 1}"#).unwrap();
    let o = run(&["audit", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error kind=config "), "{}", stderr(&o));
}

#[test]
fn fatal_errors_exit_two_with_one_line() {
    let ps = paths();
    let corpus = p(&fixture("sample.xml")).to_string();
    let invalid_dict = p(&fixture("dictionary.invalid.json")).to_string();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (
            vec!["audit", "--dictionary", "/nonexistent/dict.json", "--corpus", &corpus],
            "dictionary",
        ),
        (
            vec!["audit", "--dictionary", &invalid_dict, "--corpus", &corpus],
            "dictionary",
        ),
        (
            vec!["audit", "--dictionary", &ps.dict, "--corpus", "/nonexistent/corpus.xml"],
            "ingest",
        ),
        (
            vec!["audit", "--dictionary", &ps.dict, "--corpus", &corpus, "--terms", "/nonexistent/t.tsv"],
            "resolver",
        ),
        (
            vec!["audit", "--dictionary", &ps.dict, "--corpus", &corpus, "--resolver-mode", "remote"],
            "resolver",
        ),
        (
            vec![
                "audit",
                "--dictionary",
                &ps.dict,
                "--corpus",
                &corpus,
                "--api-key-env",
                "BIOSAMPLE_AUDIT_TEST_UNSET_VAR",
            ],
            "config",
        ),
    ];
    for (args, kind) in cases {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        let err = stderr(&o);
        let line = err.lines().find(|l| l.starts_with("error ")).expect("error line");
        assert!(line.starts_with(&format!("error kind={kind} msg=\"")), "{args:?}: {line}");
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn failed_audit_leaves_no_output() {
    let ps = paths();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let log = dir.path().join("anomalies.tsv");
    let o = run(&[
        "audit",
        "--dictionary",
        &ps.dict,
        "--corpus",
        p(&fixture("sample.xml")),
        "--corpus-format",
        "jsonl",
        "--output",
        p(&out),
        "--anomaly-log",
        p(&log),
        "--quiet",
    ]);
    // XML read as JSON lines is a per-line parse failure, not fatal
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["corpus"]["total_records"], 0);
    assert!(report["corpus"]["parse_errors"].as_u64().unwrap() > 0);

    std::fs::remove_file(&out).unwrap();
    std::fs::remove_file(&log).unwrap();
    let o = run(&[
        "audit",
        "--dictionary",
        &ps.dict,
        "--corpus",
        "/nonexistent/corpus.xml",
        "--output",
        p(&out),
        "--anomaly-log",
        p(&log),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn remote_rejections_exit_three_after_writing_report() {
    let server = StubServer::start(read_term_rows(&term_files()));
    server.script(&[401; 64]);
    let ps = paths();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = Command::new(bin())
        .args([
            "audit",
            "--dictionary",
            &ps.dict,
            "--corpus",
            p(&fixture("sample.xml")),
            "--resolver-mode",
            "remote",
            "--endpoint",
            &server.url,
            "--api-key-env",
            "STUB_SEARCH_KEY",
            "--max-retries",
            "0",
            "--output",
            p(&out),
            "--quiet",
        ])
        .env("STUB_SEARCH_KEY", "not-a-real-key")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("error kind=resolver"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let ot = &report["groups"][0];
    assert_eq!(ot["group"], "ontology_term");
    assert_eq!(ot["filled_in"], 3);
    assert_eq!(ot["not_assessed"], 3);
    assert_eq!(ot["well_specified"], 0);
    assert!(ot["percent"].is_null());
    assert!(server.requests().iter().all(|r| r.authorization.as_deref() == Some("apikey token=not-a-real-key")));
    // the same failures are tolerated when a local fallback exists
    server.script(&[401; 64]);
    let o = Command::new(bin())
        .args([
            "audit",
            "--dictionary",
            &ps.dict,
            "--corpus",
            p(&fixture("sample.xml")),
            "--resolver-mode",
            "remote-with-fallback",
            "--endpoint",
            &server.url,
            "--terms",
            &ps.doid,
            "--terms",
            &ps.pato,
            "--max-retries",
            "0",
            "--output",
            p(&out),
            "--quiet",
        ])
        .env_remove("BIOPORTAL_API_KEY")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["groups"][0]["well_specified"], 2);
}

#[test]
fn progress_lines_and_quiet() {
    let ps = paths();
    let corpus = p(&fixture("sample.jsonl")).to_string();
    let base = ["audit", "--dictionary", &ps.dict, "--corpus", &corpus, "--corpus-format", "jsonl"];
    let mut args = base.to_vec();
    args.extend(["--progress-every", "2"]);
    let o = run(&args);
    let progress: Vec<String> = stderr(&o).lines().filter(|l| l.starts_with("progress ")).map(String::from).collect();
    assert_eq!(progress, ["progress records=2", "progress records=4"]);
    args.push("--quiet");
    let o = run(&args);
    assert!(!stderr(&o).contains("progress"));
}

#[test]
fn dict_lint_exit_codes() {
    let o = run(&["dict", "lint", p(&fixture("dictionary.sample.json"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0 findings (0 errors, 0 warnings)\n");

    let o = run(&["dict", "lint", p(&fixture("dictionary.collision.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 2, "{out}");
    assert!(out.starts_with("warning: attributes[0]"));
    assert!(out.ends_with("1 finding (0 errors, 1 warning)\n"));

    let o = run(&["dict", "lint", p(&fixture("dictionary.invalid.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).ends_with("3 findings (3 errors, 0 warnings)\n"));

    let o = run(&["dict", "lint", p(&fixture("dictionary.malformed.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error kind=dictionary msg="));
}

#[test]
fn validate_lists_verdicts() {
    let ps = paths();
    let corpus = p(&fixture("sample.jsonl")).to_string();
    let base = ["validate", "--dictionary", &ps.dict, "--terms", &ps.doid, "--corpus", &corpus];
    let mut args = base.to_vec();
    args.extend(["--accession", "SAMEA0000001"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "# SAMEA0000001 (Human.1.0)\n\
         sex\tValue set\tfilled\tvalid\tvalue_set_member\n\
         smoker\tBoolean\tfilled\tinvalid\tnot_boolean\n\
         age\tUnit\tfilled\tnot_assessed\tcounted_only\n\
         disease\tOntology term\tfilled\tvalid\tontology_match\tDOID http://purl.obolibrary.org/obo/DOID_9253\n"
    );

    let mut args = base.to_vec();
    args.extend(["--accession", "SAMEA0000003"]);
    assert_eq!(stdout(&run(&args)), "# SAMEA0000003 (Generic)\nno attributes\n");

    let mut args = base.to_vec();
    args.extend(["--accession", "NOPE"]);
    assert_eq!(run(&args).status.code(), Some(1));

    let mut args = base.to_vec();
    args.extend(["--policy-value-set", "strict", "--accession", "SAMEA0000004"]);
    let out = stdout(&run(&args));
    assert!(out.contains("Sex\tValue set\tfilled\tinvalid\tnull_like;not_in_value_set\n"), "{out}");
    assert!(out.contains("lab code\tCustom\tfilled\tnot_assessed\tcustom_name\n"));
}

#[test]
fn synth_then_audit_matches_manifest() {
    let ps = paths();
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("synth.xml");
    let o = run(&[
        "synth",
        "--dictionary",
        &ps.dict,
        "--terms",
        &ps.doid,
        "--terms",
        &ps.pato,
        "--out",
        p(&corpus),
        "--records",
        "500",
        "--seed",
        "7",
        "--randomized",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("synth.xml.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["total_records"], 500);

    let mut args = audit_sample_args(&ps.dict, &ps.doid, &ps.pato, p(&corpus));
    args.extend(["--workers", "4"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&run(&args))).unwrap();
    assert_eq!(report["corpus"]["total_records"], manifest["total_records"]);
    assert_eq!(report["corpus"]["total_attributes"], manifest["total_attributes"]);
    for g in report["groups"].as_array().unwrap() {
        let planted = &manifest["groups"][g["group"].as_str().unwrap()];
        for k in ["filled_in", "well_specified", "invalid", "records_containing", "records_all_valid"] {
            assert_eq!(g[k], planted[k], "{} {k}", g["group"]);
        }
    }
    assert_eq!(report["census"]["unique_custom_names"], manifest["custom"]["unique_names"]);

    let o = run(&[
        "synth",
        "--dictionary",
        &ps.dict,
        "--out",
        p(&dir.path().join("bad.xml")),
        "--spec",
        p(&fixture("dictionary.sample.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error kind=config"));
}
