use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use biosample_audit_ffi::*;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn path_cs(p: &Path) -> CString {
    cs(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = bsa_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

/// Take ownership of a library string.
fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { bsa_string_free(s) };
    out
}

struct Handles {
    dict: *mut BsaDictionary,
    index: *mut BsaTermIndex,
}

impl Handles {
    fn load() -> Self {
        let mut dict = ptr::null_mut();
        let path = path_cs(&fixture("dictionary.sample.json"));
        assert_eq!(unsafe { bsa_dictionary_load(path.as_ptr(), &mut dict) }, BsaStatus::Ok);
        let files = [path_cs(&fixture("doid.terms.tsv")), path_cs(&fixture("pato.terms.tsv"))];
        let ptrs: Vec<*const c_char> = files.iter().map(|f| f.as_ptr()).collect();
        let mut index = ptr::null_mut();
        assert_eq!(unsafe { bsa_term_index_load(ptrs.as_ptr(), ptrs.len(), &mut index) }, BsaStatus::Ok);
        Handles { dict, index }
    }

    fn verdict(&self, index: bool, name: &str, value: &str) -> BsaVerdict {
        let mut v = std::mem::MaybeUninit::<BsaVerdict>::uninit();
        let (n, val) = (cs(name), cs(value));
        let idx = if index { self.index.cast_const() } else { ptr::null() };
        let st = unsafe { bsa_validate_value(self.dict, idx, n.as_ptr(), val.as_ptr(), v.as_mut_ptr()) };
        assert_eq!(st, BsaStatus::Ok);
        unsafe { v.assume_init() }
    }
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            bsa_term_index_free(self.index);
            bsa_dictionary_free(self.dict);
        }
    }
}

fn reason(v: &BsaVerdict) -> &'static str {
    unsafe { CStr::from_ptr(bsa_reason_name(v.reason)) }.to_str().unwrap()
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(bsa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn normalization() {
    let cases = [
        ("  Host_Disease ", "host disease", true),
        ("Collection\t Date", "collection date", true),
        (" Never   Smoker ", "never smoker", false),
        ("GIST_4", "gist_4", false),
    ];
    for (raw, want, is_name) in cases {
        let mut out = ptr::null_mut();
        let raw = cs(raw);
        let st = unsafe {
            if is_name {
                bsa_normalize_attribute_name(raw.as_ptr(), &mut out)
            } else {
                bsa_normalize_value(raw.as_ptr(), &mut out)
            }
        };
        assert_eq!(st, BsaStatus::Ok);
        assert_eq!(take(out), want);
    }
}

#[test]
fn verdicts_for_known_values() {
    let h = Handles::load();

    let v = h.verdict(true, "host_disease", "HIV");
    assert_eq!((v.group, v.well_specified, reason(&v)), (BsaGroup::OntologyTerm, BsaWellSpecified::Valid, "ontology_match"));
    assert!(v.filled_in && v.in_dictionary && !v.null_like);

    // without an index no ontology term can match
    let v = h.verdict(false, "host_disease", "HIV");
    assert_eq!((v.well_specified, reason(&v)), (BsaWellSpecified::Invalid, "no_ontology_match"));

    let v = h.verdict(false, "Sex", "Female");
    assert_eq!((v.group, v.well_specified, reason(&v)), (BsaGroup::ValueSet, BsaWellSpecified::Valid, "value_set_member"));

    let v = h.verdict(false, "sex", "n/a");
    assert!(v.null_like);
    assert_eq!(v.well_specified, BsaWellSpecified::Invalid);

    let v = h.verdict(false, "smoker", "never smoker");
    assert_eq!((v.group, reason(&v)), (BsaGroup::Boolean, "not_boolean"));

    let v = h.verdict(false, "host_taxid", "9606");
    assert_eq!((v.group, v.well_specified), (BsaGroup::Integer, BsaWellSpecified::Valid));

    let v = h.verdict(false, "tumor", "");
    assert!(!v.filled_in);
    assert_eq!(v.reason, BsaReason::Empty);

    let v = h.verdict(false, "patient_cohort", "A");
    assert!(!v.in_dictionary);
    assert_eq!((v.well_specified, reason(&v)), (BsaWellSpecified::NotAssessed, "custom_name"));
}

#[test]
fn errors_set_status_and_message() {
    let mut dict = ptr::null_mut();
    let bad = cs("{\"version\": ");
    assert_eq!(unsafe { bsa_dictionary_from_json(bad.as_ptr(), &mut dict) }, BsaStatus::Dictionary);
    assert!(dict.is_null());
    assert!(!last_error().is_empty());

    let missing = cs("/nonexistent/dictionary.json");
    assert_eq!(unsafe { bsa_dictionary_load(missing.as_ptr(), &mut dict) }, BsaStatus::Dictionary);
    assert!(last_error().contains("/nonexistent/dictionary.json"));

    assert_eq!(unsafe { bsa_dictionary_load(ptr::null(), &mut dict) }, BsaStatus::NullArgument);
    assert_eq!(last_error(), "path is null");

    let not_utf8 = CString::new(vec![0xff, 0xfe]).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { bsa_normalize_value(not_utf8.as_ptr(), &mut out) }, BsaStatus::InvalidUtf8);

    let mut index = ptr::null_mut();
    let missing = [cs("/nonexistent/terms.tsv")];
    let ptrs = [missing[0].as_ptr()];
    assert_eq!(unsafe { bsa_term_index_load(ptrs.as_ptr(), 1, &mut index) }, BsaStatus::Terms);
    assert!(index.is_null());

    // a successful call clears the message
    let ok = cs("x");
    assert_eq!(unsafe { bsa_normalize_value(ok.as_ptr(), &mut out) }, BsaStatus::Ok);
    take(out);
    assert!(bsa_last_error_message().is_null());
}

#[test]
fn errors_are_per_thread() {
    let mut dict = ptr::null_mut();
    assert_eq!(unsafe { bsa_dictionary_load(ptr::null(), &mut dict) }, BsaStatus::NullArgument);
    std::thread::spawn(|| assert!(bsa_last_error_message().is_null())).join().unwrap();
    assert_eq!(last_error(), "path is null");
}

fn audit(config: &Value) -> (BsaStatus, Option<Value>, i32) {
    let text = cs(&config.to_string());
    let mut out = ptr::null_mut();
    let mut code = -1;
    let st = unsafe { bsa_audit(text.as_ptr(), ptr::null(), &mut out, &mut code) };
    let summary = (st == BsaStatus::Ok).then(|| serde_json::from_str(&take(out)).unwrap());
    (st, summary, code)
}

fn local_config(corpus: &str, format: &str) -> Value {
    serde_json::json!({
        "dictionary_path": fixture("dictionary.sample.json"),
        "corpus_path": fixture(corpus),
        "corpus_format": format,
        "resolver": {"mode": "local", "term_files": [fixture("doid.terms.tsv"), fixture("pato.terms.tsv")]},
    })
}

#[test]
fn audit_reproduces_golden_report() {
    let golden_text = std::fs::read_to_string(fixture("golden.sample.json")).unwrap();
    let golden: Value = serde_json::from_str(&golden_text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let mut config = local_config("sample.xml", "biosample-xml");
    config["output_path"] = serde_json::json!(out);
    config["workers"] = 2.into();
    let (st, summary, code) = audit(&config);
    assert_eq!(st, BsaStatus::Ok, "{}", last_error());
    assert_eq!(code, 0);
    assert_eq!(summary.unwrap(), golden);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden_text);
}

#[test]
fn audit_failures_map_to_status() {
    let (st, _, _) = audit(&serde_json::json!({"dictionary_path": "x", "bogus": true}));
    assert_eq!(st, BsaStatus::Config);
    let mut config = local_config("sample.xml", "biosample-xml");
    config["dictionary_path"] = "/nonexistent/dict.json".into();
    assert_eq!(audit(&config).0, BsaStatus::Dictionary);
    let mut config = local_config("sample.xml", "biosample-xml");
    config["corpus_path"] = "/nonexistent/corpus.xml".into();
    assert_eq!(audit(&config).0, BsaStatus::Audit);
    assert!(last_error().contains("/nonexistent/corpus.xml"));

    let text = cs(&local_config("sample.xml", "biosample-xml").to_string());
    let var = cs("BIOSAMPLE_AUDIT_FFI_TEST_UNSET_VAR");
    let mut out = ptr::null_mut();
    let st = unsafe { bsa_audit(text.as_ptr(), var.as_ptr(), &mut out, ptr::null_mut()) };
    assert_eq!(st, BsaStatus::Config);
    assert!(out.is_null());
}

fn new_tally(dict: *const BsaDictionary) -> *mut BsaTally {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { bsa_tally_new(dict, &mut t) }, BsaStatus::Ok);
    t
}

fn summary_of(t: *const BsaTally) -> Value {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { bsa_tally_summary_json(t, &mut out) }, BsaStatus::Ok);
    serde_json::from_str(&take(out)).unwrap()
}

#[test]
fn sharded_tallies_merge_to_the_whole_corpus_audit() {
    let h = Handles::load();
    let lines: Vec<String> = std::fs::read_to_string(fixture("sample.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(String::from)
        .collect();
    let (_, whole, _) = audit(&local_config("sample.jsonl", "jsonl"));
    let whole = whole.unwrap();

    for split in 0..=lines.len() {
        let (a, b) = (new_tally(h.dict), new_tally(h.dict));
        for (i, line) in lines.iter().enumerate() {
            let t = if i < split { a } else { b };
            let l = cs(line);
            assert_eq!(unsafe { bsa_tally_accumulate_json(t, h.dict, h.index, l.as_ptr()) }, BsaStatus::Ok);
        }
        assert_eq!(unsafe { bsa_tally_merge(a, b) }, BsaStatus::Ok);
        let merged = summary_of(a);
        for key in ["groups", "census", "packages"] {
            assert_eq!(merged[key], whole[key], "split {split} {key}");
        }
        assert_eq!(merged["corpus"]["total_records"], whole["corpus"]["total_records"]);
        assert_eq!(merged["corpus"]["total_attributes"], whole["corpus"]["total_attributes"]);
        unsafe {
            bsa_tally_free(a);
            bsa_tally_free(b);
        }
    }
}

#[test]
fn tally_rejects_bad_records_and_foreign_versions() {
    let h = Handles::load();
    let t = new_tally(h.dict);
    for bad in ["not json", "{\"attributes\":[]}", "{\"accession\":\"A\",\"attributes\":[{\"name\":\"\",\"value\":\"x\"}]}"] {
        let l = cs(bad);
        assert_eq!(unsafe { bsa_tally_accumulate_json(t, h.dict, h.index, l.as_ptr()) }, BsaStatus::Parse, "{bad}");
    }
    assert_eq!(summary_of(t)["corpus"]["total_records"], 0);

    let mut other_dict = ptr::null_mut();
    let mut doc: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("dictionary.sample.json")).unwrap()).unwrap();
    doc["version"] = "another-release".into();
    let text = cs(&doc.to_string());
    assert_eq!(unsafe { bsa_dictionary_from_json(text.as_ptr(), &mut other_dict) }, BsaStatus::Ok);
    let foreign = new_tally(other_dict);
    let l = cs(r#"{"accession":"B","attributes":[{"name":"sex","value":"male"}]}"#);
    assert_eq!(unsafe { bsa_tally_accumulate_json(foreign, other_dict, ptr::null(), l.as_ptr()) }, BsaStatus::Ok);
    let before = summary_of(t);
    assert_eq!(unsafe { bsa_tally_merge(t, foreign) }, BsaStatus::VersionMismatch);
    assert_eq!(summary_of(t), before);
    assert_eq!(unsafe { bsa_tally_merge(t, t) }, BsaStatus::Config);

    // an untagged tally merges with anything
    let blank = new_tally(ptr::null());
    assert_eq!(unsafe { bsa_tally_merge(blank, foreign) }, BsaStatus::Ok);
    unsafe {
        bsa_tally_free(t);
        bsa_tally_free(foreign);
        bsa_tally_free(blank);
        bsa_dictionary_free(other_dict);
    }
}

#[test]
fn free_functions_accept_null() {
    unsafe {
        bsa_string_free(ptr::null_mut());
        bsa_dictionary_free(ptr::null_mut());
        bsa_term_index_free(ptr::null_mut());
        bsa_tally_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/biosample_audit.h")).unwrap();
    let source = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 19);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Compile the C smoke program against the generated header and the static
/// library, then run it.
#[test]
fn c_program_links_against_static_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let target_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target_dir.join("libbiosample_audit_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let o = Command::new(cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(&exe)
        .arg(fixture("dictionary.sample.json"))
        .arg(fixture("doid.terms.tsv"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout), format!("ok {}\n", env!("CARGO_PKG_VERSION")));
}
