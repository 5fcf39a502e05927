//! C ABI for the auditing toolkit.
//!
//! Objects are opaque handles created by `bsa_*_new`/`_load` functions and
//! released by the matching `_free`. Every fallible call returns a
//! [`BsaStatus`]; on failure a description is available from
//! [`bsa_last_error_message`] on the same thread. Strings handed out by the
//! library are NUL-terminated UTF-8 and must be released with
//! [`bsa_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use biosample_audit::audit::{execute_audit, AuditConfig};
use biosample_audit::dictionary::{load_dictionary, Dictionary, ValidationGroup};
use biosample_audit::ingest::{Attribute, SampleRecord};
use biosample_audit::normalize::{normalize_attribute_name, normalize_value};
use biosample_audit::resolve::{build_term_index, TermIndex};
use biosample_audit::stats::{AuditSummary, AuditTally, ReportSettings};
use biosample_audit::validate::{classify_attribute, validate_attribute, validate_record, MatchPolicy, Reason, WellSpecified};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Dictionary = 3,
    Terms = 4,
    Parse = 5,
    VersionMismatch = 6,
    Config = 7,
    Audit = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsaGroup {
    OntologyTerm = 0,
    Term = 1,
    ValueSet = 2,
    Boolean = 3,
    Integer = 4,
    Unit = 5,
    PubmedId = 6,
    FreeText = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsaWellSpecified {
    Valid = 0,
    Invalid = 1,
    NotAssessed = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsaReason {
    Empty = 0,
    BooleanLiteral,
    NotBoolean,
    IntegerLiteral,
    NotInteger,
    IntegerOutOfRange,
    ValueSetMember,
    NotInValueSet,
    OntologyMatch,
    NoOntologyMatch,
    ResolverUnavailable,
    TermCandidates,
    NoTermCandidates,
    CountedOnly,
    CustomName,
}

/// Verdict for one attribute value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BsaVerdict {
    pub group: BsaGroup,
    pub well_specified: BsaWellSpecified,
    pub reason: BsaReason,
    pub filled_in: bool,
    pub null_like: bool,
    /// False for custom (non-dictionary) attribute names.
    pub in_dictionary: bool,
}

/// Loaded attribute dictionary.
pub struct BsaDictionary(Dictionary);

/// Local ontology term index.
pub struct BsaTermIndex(TermIndex);

/// Mergeable audit counters.
pub struct BsaTally(AuditTally);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', "\\0");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(BsaStatus, String);

impl Failure {
    fn new(status: BsaStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

/// Run `f`, translating errors and panics into a status and a last-error
/// message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BsaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BsaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            BsaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(BsaStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(BsaStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(BsaStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(BsaStatus::NullArgument, format!("{name} is null")))
}

fn c_string(s: String) -> *mut c_char {
    // interior NULs cannot come from JSON or normalized text, but be safe
    CString::new(s.replace('\0', "")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

static EMPTY_INDEX: std::sync::OnceLock<TermIndex> = std::sync::OnceLock::new();

unsafe fn index_or_empty<'a>(p: *const BsaTermIndex) -> &'a TermIndex {
    match p.as_ref() {
        Some(i) => &i.0,
        None => EMPTY_INDEX.get_or_init(TermIndex::default),
    }
}

fn group_code(g: ValidationGroup) -> BsaGroup {
    match g {
        ValidationGroup::OntologyTerm => BsaGroup::OntologyTerm,
        ValidationGroup::Term => BsaGroup::Term,
        ValidationGroup::ValueSet => BsaGroup::ValueSet,
        ValidationGroup::Boolean => BsaGroup::Boolean,
        ValidationGroup::Integer => BsaGroup::Integer,
        ValidationGroup::Unit => BsaGroup::Unit,
        ValidationGroup::PubmedId => BsaGroup::PubmedId,
        ValidationGroup::FreeText => BsaGroup::FreeText,
    }
}

fn reason_code(r: Reason) -> BsaReason {
    match r {
        Reason::Empty => BsaReason::Empty,
        Reason::BooleanLiteral => BsaReason::BooleanLiteral,
        Reason::NotBoolean => BsaReason::NotBoolean,
        Reason::IntegerLiteral => BsaReason::IntegerLiteral,
        Reason::NotInteger => BsaReason::NotInteger,
        Reason::IntegerOutOfRange => BsaReason::IntegerOutOfRange,
        Reason::ValueSetMember => BsaReason::ValueSetMember,
        Reason::NotInValueSet => BsaReason::NotInValueSet,
        Reason::OntologyMatch => BsaReason::OntologyMatch,
        Reason::NoOntologyMatch => BsaReason::NoOntologyMatch,
        Reason::ResolverUnavailable => BsaReason::ResolverUnavailable,
        Reason::TermCandidates => BsaReason::TermCandidates,
        Reason::NoTermCandidates => BsaReason::NoTermCandidates,
        Reason::CountedOnly => BsaReason::CountedOnly,
        Reason::CustomName => BsaReason::CustomName,
    }
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn bsa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn bsa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn bsa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Snake-case name of a reason code, a static string.
#[no_mangle]
pub extern "C" fn bsa_reason_name(reason: BsaReason) -> *const c_char {
    let s: &'static CStr = match reason {
        BsaReason::Empty => c"empty",
        BsaReason::BooleanLiteral => c"boolean_literal",
        BsaReason::NotBoolean => c"not_boolean",
        BsaReason::IntegerLiteral => c"integer_literal",
        BsaReason::NotInteger => c"not_integer",
        BsaReason::IntegerOutOfRange => c"integer_out_of_range",
        BsaReason::ValueSetMember => c"value_set_member",
        BsaReason::NotInValueSet => c"not_in_value_set",
        BsaReason::OntologyMatch => c"ontology_match",
        BsaReason::NoOntologyMatch => c"no_ontology_match",
        BsaReason::ResolverUnavailable => c"resolver_unavailable",
        BsaReason::TermCandidates => c"term_candidates",
        BsaReason::NoTermCandidates => c"no_term_candidates",
        BsaReason::CountedOnly => c"counted_only",
        BsaReason::CustomName => c"custom_name",
    };
    s.as_ptr()
}

/// Normalize an attribute name (`Host_Age` -> `host age`).
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsa_normalize_attribute_name(raw: *const c_char, out: *mut *mut c_char) -> BsaStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        *out_arg(out, "out")? = c_string(normalize_attribute_name(raw));
        Ok(())
    })
}

/// Normalize a value for lenient matching. Underscores are kept.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsa_normalize_value(raw: *const c_char, out: *mut *mut c_char) -> BsaStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        *out_arg(out, "out")? = c_string(normalize_value(raw));
        Ok(())
    })
}

/// Load a dictionary document from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsa_dictionary_load(path: *const c_char, out: *mut *mut BsaDictionary) -> BsaStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let d = load_dictionary(path).map_err(|e| Failure::new(BsaStatus::Dictionary, e))?;
        *out = Box::into_raw(Box::new(BsaDictionary(d)));
        Ok(())
    })
}

/// Parse a dictionary document from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsa_dictionary_from_json(json: *const c_char, out: *mut *mut BsaDictionary) -> BsaStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        let d = Dictionary::from_json(json).map_err(|e| Failure::new(BsaStatus::Dictionary, e))?;
        *out = Box::into_raw(Box::new(BsaDictionary(d)));
        Ok(())
    })
}

/// # Safety
/// `dict` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsa_dictionary_free(dict: *mut BsaDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// Build a term index from `count` TSV files.
///
/// # Safety
/// `paths` must point to `count` NUL-terminated strings; `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn bsa_term_index_load(
    paths: *const *const c_char,
    count: usize,
    out: *mut *mut BsaTermIndex,
) -> BsaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if paths.is_null() && count > 0 {
            return Err(Failure::new(BsaStatus::NullArgument, "paths is null"));
        }
        let mut files = Vec::with_capacity(count);
        for i in 0..count {
            files.push(PathBuf::from(str_arg(*paths.add(i), "paths[i]")?));
        }
        let index = build_term_index(&files).map_err(|e| Failure::new(BsaStatus::Terms, e))?;
        *out = Box::into_raw(Box::new(BsaTermIndex(index)));
        Ok(())
    })
}

/// Build a term index from TSV text.
///
/// # Safety
/// `tsv` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsa_term_index_from_tsv(tsv: *const c_char, out: *mut *mut BsaTermIndex) -> BsaStatus {
    guard(|| {
        let tsv = str_arg(tsv, "tsv")?;
        let out = out_arg(out, "out")?;
        let index = TermIndex::from_tsv(tsv).map_err(|e| Failure::new(BsaStatus::Terms, e))?;
        *out = Box::into_raw(Box::new(BsaTermIndex(index)));
        Ok(())
    })
}

/// # Safety
/// `index` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsa_term_index_free(index: *mut BsaTermIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Judge one attribute value with the default policy. `index` may be NULL,
/// in which case no ontology term matches.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bsa_validate_value(
    dict: *const BsaDictionary,
    index: *const BsaTermIndex,
    attribute_name: *const c_char,
    value: *const c_char,
    out: *mut BsaVerdict,
) -> BsaStatus {
    guard(|| {
        let dict = &ref_arg(dict, "dict")?.0;
        let name = str_arg(attribute_name, "attribute_name")?;
        let value = str_arg(value, "value")?;
        let out = out_arg(out, "out")?;
        let attr = Attribute::new(name, value);
        let class = classify_attribute(dict, &attr);
        let v = validate_attribute(&attr, &class, index_or_empty(index), &MatchPolicy::default());
        *out = BsaVerdict {
            group: group_code(v.group),
            well_specified: match v.well_specified {
                WellSpecified::Valid => BsaWellSpecified::Valid,
                WellSpecified::Invalid => BsaWellSpecified::Invalid,
                WellSpecified::NotAssessed => BsaWellSpecified::NotAssessed,
            },
            reason: reason_code(v.reason),
            filled_in: v.filled_in,
            null_like: v.null_like,
            in_dictionary: class.in_dictionary,
        };
        Ok(())
    })
}

/// A new, empty tally. With a dictionary, the tally is tagged with its
/// version and refuses to merge with tallies from other versions.
///
/// # Safety
/// `dict` may be NULL; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bsa_tally_new(dict: *const BsaDictionary, out: *mut *mut BsaTally) -> BsaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = match dict.as_ref() {
            Some(d) => AuditTally::for_dictionary(&d.0),
            None => AuditTally::default(),
        };
        *out = Box::into_raw(Box::new(BsaTally(t)));
        Ok(())
    })
}

/// # Safety
/// `tally` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsa_tally_free(tally: *mut BsaTally) {
    if !tally.is_null() {
        drop(Box::from_raw(tally));
    }
}

/// Validate one record, given as a JSON-lines object, and count it.
///
/// # Safety
/// Pointers must be valid (`index` may be NULL); strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bsa_tally_accumulate_json(
    tally: *mut BsaTally,
    dict: *const BsaDictionary,
    index: *const BsaTermIndex,
    record_json: *const c_char,
) -> BsaStatus {
    guard(|| {
        let tally = &mut out_arg(tally, "tally")?.0;
        let dict = &ref_arg(dict, "dict")?.0;
        let json = str_arg(record_json, "record_json")?;
        let record = serde_json::from_str::<SampleRecord>(json)
            .map_err(|e| e.to_string())
            .and_then(SampleRecord::check)
            .map_err(|e| Failure::new(BsaStatus::Parse, format!("record: {e}")))?;
        let report = validate_record(&record, dict, index_or_empty(index), &MatchPolicy::default());
        tally.accumulate(&report);
        Ok(())
    })
}

/// Merge `other` into `into`. Fails, leaving `into` unchanged, if the two
/// come from different dictionary versions.
///
/// # Safety
/// Both must be valid tallies; they may not alias.
#[no_mangle]
pub unsafe extern "C" fn bsa_tally_merge(into: *mut BsaTally, other: *const BsaTally) -> BsaStatus {
    guard(|| {
        if ptr::eq(into.cast_const(), other) {
            return Err(Failure::new(BsaStatus::Config, "cannot merge a tally into itself"));
        }
        let into = &mut out_arg(into, "into")?.0;
        let other = &ref_arg(other, "other")?.0;
        let mut merged = into.clone();
        merged
            .merge_from(other)
            .map_err(|e| Failure::new(BsaStatus::VersionMismatch, e))?;
        *into = merged;
        Ok(())
    })
}

/// The finalized report for a tally, as JSON, with default settings.
///
/// # Safety
/// `tally` must be valid; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsa_tally_summary_json(tally: *const BsaTally, out: *mut *mut c_char) -> BsaStatus {
    guard(|| {
        let tally = &ref_arg(tally, "tally")?.0;
        let out = out_arg(out, "out")?;
        let summary = AuditSummary::from_tally(tally, &ReportSettings::default());
        let json = serde_json::to_string(&summary).map_err(|e| Failure::new(BsaStatus::Audit, e))?;
        *out = c_string(json);
        Ok(())
    })
}

/// Audit a corpus described by a JSON configuration (the same document the
/// command line accepts). The report is written to `output_path` when the
/// configuration names one; the JSON summary is always returned in
/// `out_summary`. `out_exit_code`, if not NULL, receives the command-line
/// exit status the run would have produced. API keys for remote resolution
/// are read from the environment variable named by `api_key_env` (NULL
/// means none).
///
/// # Safety
/// Pointers must be valid (`api_key_env` and `out_exit_code` may be NULL).
#[no_mangle]
pub unsafe extern "C" fn bsa_audit(
    config_json: *const c_char,
    api_key_env: *const c_char,
    out_summary: *mut *mut c_char,
    out_exit_code: *mut i32,
) -> BsaStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let out = out_arg(out_summary, "out_summary")?;
        let mut config: AuditConfig =
            serde_json::from_str(text).map_err(|e| Failure::new(BsaStatus::Config, format!("config: {e}")))?;
        config.progress_every = 0;
        if !api_key_env.is_null() {
            let var = str_arg(api_key_env, "api_key_env")?;
            config.resolver.api_key = Some(
                std::env::var(var)
                    .map_err(|_| Failure::new(BsaStatus::Config, format!("environment variable {var} is not set")))?,
            );
        }
        let outcome = execute_audit(&config).map_err(|e| {
            let status = match e.kind() {
                "config" => BsaStatus::Config,
                "dictionary" => BsaStatus::Dictionary,
                "resolver" => BsaStatus::Terms,
                _ => BsaStatus::Audit,
            };
            Failure::new(status, e)
        })?;
        if let Some(path) = &config.output_path {
            let rendered = biosample_audit::stats::render_summary(&outcome.summary, config.output_format);
            biosample_audit::audit::write_atomically(path, rendered.as_bytes())
                .map_err(|e| Failure::new(BsaStatus::Audit, e))?;
        }
        let json = serde_json::to_string(&outcome.summary).map_err(|e| Failure::new(BsaStatus::Audit, e))?;
        if let Some(code) = out_exit_code.as_mut() {
            *code = outcome.exit_code(config.resolver.mode);
        }
        *out = c_string(json);
        Ok(())
    })
}
