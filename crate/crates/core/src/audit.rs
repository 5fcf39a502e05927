//! Batch audit: stream a corpus, validate in parallel, merge, report.
//!
//! One ingest thread feeds a bounded queue; each worker validates records
//! into its own [`AuditTally`]; the tallies are merged at the end. The
//! report carries no run-specific data, so any worker count yields the same
//! bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crossbeam_channel::bounded;
use serde::{Deserialize, Serialize};

use crate::dictionary::{load_dictionary, Dictionary, DictionaryError};
use crate::ingest::{open_corpus, CorpusFormat, CorpusStats, IngestError, RecordStream, SampleRecord};
use crate::resolve::{build_resolver, ResolverConfig, ResolverConfigError, ResolverMode, TermResolver};
use crate::stats::{
    merge, render_summary, AuditSummary, AuditTally, RecordRule, ReportFormat, ReportSettings, TallyError,
    DEFAULT_CENSUS_CAP,
};
use crate::validate::{validate_record, MatchPolicy, RecordReport, WellSpecified};

/// Records per queue slot per worker.
const QUEUE_PER_WORKER: usize = 64;

pub const ANOMALY_HEADER: &str = "accession\traw_name\tnormalized_name\tgroup\tvalue\treason";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub dictionary_path: PathBuf,
    pub corpus_path: PathBuf,
    pub corpus_format: CorpusFormat,
    pub resolver: ResolverConfig,
    pub policy: MatchPolicy,
    pub workers: usize,
    /// Standard output when absent.
    pub output_path: Option<PathBuf>,
    pub output_format: ReportFormat,
    pub anomaly_log_path: Option<PathBuf>,
    pub record_rule: RecordRule,
    pub census_cap: usize,
    /// Progress line to standard error every N records; 0 disables.
    pub progress_every: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            dictionary_path: PathBuf::new(),
            corpus_path: PathBuf::new(),
            corpus_format: CorpusFormat::BiosampleXml,
            resolver: ResolverConfig::default(),
            policy: MatchPolicy::default(),
            workers: 1,
            output_path: None,
            output_format: ReportFormat::Json,
            anomaly_log_path: None,
            record_rule: RecordRule::AllValid,
            census_cap: DEFAULT_CENSUS_CAP,
            progress_every: 100_000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Resolver(#[from] ResolverConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Tally(#[from] TallyError),
}

impl AuditError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            AuditError::Config(_) => "config",
            AuditError::Dictionary(_) => "dictionary",
            AuditError::Resolver(_) => "resolver",
            AuditError::Ingest(_) => "ingest",
            AuditError::Output { .. } => "output",
            AuditError::Tally(_) => "tally",
        }
    }
}

impl AuditConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, AuditError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuditError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AuditError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), AuditError> {
        if self.workers == 0 {
            return Err(AuditError::Config("workers must be at least 1".into()));
        }
        if self.dictionary_path.as_os_str().is_empty() {
            return Err(AuditError::Config("no dictionary given".into()));
        }
        if self.corpus_path.as_os_str().is_empty() {
            return Err(AuditError::Config("no corpus given".into()));
        }
        if self.census_cap == 0 {
            return Err(AuditError::Config("census cap must be at least 1".into()));
        }
        self.resolver.validate()?;
        Ok(())
    }

    pub fn report_settings(&self) -> ReportSettings {
        ReportSettings {
            policy: self.policy.clone(),
            resolver_mode: self.resolver.mode,
            record_rule: self.record_rule,
        }
    }
}

/// Result of a completed audit.
#[derive(Debug)]
pub struct AuditOutcome {
    pub tally: AuditTally,
    pub summary: AuditSummary,
    pub corpus: CorpusStats,
    /// Permanent resolver failures (rejected requests).
    pub resolver_hard_failures: u64,
}

impl AuditOutcome {
    /// Process exit status for this outcome.
    pub fn exit_code(&self, mode: ResolverMode) -> i32 {
        if mode == ResolverMode::Remote && self.resolver_hard_failures > 0 {
            3
        } else {
            0
        }
    }
}

/// Options for [`audit_stream`].
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub workers: usize,
    pub policy: MatchPolicy,
    pub census_cap: usize,
    pub progress_every: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            workers: 1,
            policy: MatchPolicy::default(),
            census_cap: DEFAULT_CENSUS_CAP,
            progress_every: 0,
        }
    }
}

/// Escape tabs, newlines and backslashes for one TSV field.
fn tsv_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// Anomaly-log lines for every invalid value in a record.
pub fn anomaly_lines(report: &RecordReport<'_>) -> String {
    let mut out = String::new();
    for a in &report.per_attribute {
        if a.verdict.well_specified != WellSpecified::Invalid {
            continue;
        }
        let fields = [
            tsv_field(&report.accession),
            tsv_field(&a.attribute.raw_name),
            tsv_field(&a.classification.normalized_name),
            a.verdict.group.as_str().to_string(),
            tsv_field(&a.attribute.value),
            a.verdict.reason_text(),
        ];
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

/// Validate a record stream in parallel and return the merged tally.
///
/// Anomaly lines, when a sink is given, are written in corpus order.
pub fn audit_stream(
    stream: RecordStream,
    dict: &Dictionary,
    resolver: &dyn TermResolver,
    opts: &PipelineOptions,
    anomalies: Option<&mut (dyn Write + Send)>,
) -> Result<(AuditTally, CorpusStats), AuditError> {
    let workers = opts.workers.max(1);
    let (work_tx, work_rx) = bounded::<(u64, SampleRecord)>(workers * QUEUE_PER_WORKER);
    let want_anomalies = anomalies.is_some();
    let (log_tx, log_rx) = bounded::<(u64, String)>(workers * QUEUE_PER_WORKER);

    std::thread::scope(|s| {
        let ingest = s.spawn(move || {
            let mut stream = stream;
            let mut seq = 0u64;
            let mut failure = None;
            for item in stream.by_ref() {
                match item {
                    Ok(record) => {
                        if work_tx.send((seq, record)).is_err() {
                            break;
                        }
                        seq += 1;
                        if opts.progress_every > 0 && seq.is_multiple_of(opts.progress_every) {
                            eprintln!("progress records={seq}");
                        }
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            (stream.stats(), failure)
        });

        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let rx = work_rx.clone();
                let log_tx = log_tx.clone();
                s.spawn(move || {
                    let mut tally = AuditTally::for_dictionary(dict).with_census_cap(opts.census_cap);
                    for (seq, record) in rx {
                        let report = validate_record(&record, dict, resolver, &opts.policy);
                        tally.accumulate(&report);
                        if want_anomalies {
                            let _ = log_tx.send((seq, anomaly_lines(&report)));
                        }
                    }
                    tally
                })
            })
            .collect();
        drop(work_rx);
        drop(log_tx);

        // Reorder worker output by sequence number before writing.
        let mut write_error = None;
        if let Some(out) = anomalies {
            let mut pending = BTreeMap::new();
            let mut next = 0u64;
            let mut emit = |text: String, out: &mut (dyn Write + Send)| {
                if write_error.is_none() && !text.is_empty() {
                    if let Err(e) = out.write_all(text.as_bytes()) {
                        write_error = Some(e);
                    }
                }
            };
            for (seq, text) in log_rx {
                pending.insert(seq, text);
                while let Some(text) = pending.remove(&next) {
                    emit(text, out);
                    next += 1;
                }
            }
            for (_, text) in pending {
                emit(text, out);
            }
            if let Err(e) = out.flush() {
                write_error.get_or_insert(e);
            }
        }

        let mut tally = AuditTally::for_dictionary(dict).with_census_cap(opts.census_cap);
        for h in handles {
            let t = h.join().expect("validation worker panicked");
            tally = merge(tally, t)?;
        }
        let (stats, failure) = ingest.join().expect("ingest thread panicked");
        if let Some(e) = failure {
            return Err(e.into());
        }
        if let Some(source) = write_error {
            return Err(AuditError::Output {
                path: PathBuf::from("<anomaly log>"),
                source,
            });
        }
        tally.parse_errors = stats.parse_errors;
        Ok((tally, stats))
    })
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Write `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomically(path: &Path, contents: &[u8]) -> Result<(), AuditError> {
    let tmp = partial_path(path);
    let out = |source| AuditError::Output {
        path: path.to_path_buf(),
        source,
    };
    std::fs::write(&tmp, contents).map_err(out)?;
    std::fs::rename(&tmp, path).map_err(out)
}

/// Run a full audit as configured: load, stream, validate, write outputs.
///
/// Nothing is written unless the whole corpus was processed.
pub fn run_audit(config: &AuditConfig) -> Result<AuditOutcome, AuditError> {
    let outcome = execute_audit(config)?;
    let rendered = render_summary(&outcome.summary, config.output_format);
    match &config.output_path {
        Some(path) => write_atomically(path, rendered.as_bytes())?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(rendered.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| AuditError::Output {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?;
        }
    }
    Ok(outcome)
}

/// Everything [`run_audit`] does except writing the report. The anomaly log,
/// when configured, is still written.
pub fn execute_audit(config: &AuditConfig) -> Result<AuditOutcome, AuditError> {
    config.validate()?;
    let dict = load_dictionary(&config.dictionary_path)?;
    let resolver = build_resolver(&config.resolver)?;
    let stream = open_corpus(&config.corpus_path, config.corpus_format)?;
    let opts = PipelineOptions {
        workers: config.workers,
        policy: config.policy.clone(),
        census_cap: config.census_cap,
        progress_every: config.progress_every,
    };

    let (tally, corpus) = match &config.anomaly_log_path {
        Some(path) => {
            let tmp = partial_path(path);
            let out_err = |source| AuditError::Output {
                path: path.clone(),
                source,
            };
            let file = File::create(&tmp).map_err(out_err)?;
            let mut w = BufWriter::new(file);
            let result = writeln!(w, "{ANOMALY_HEADER}")
                .map_err(out_err)
                .and_then(|_| audit_stream(stream, &dict, resolver.as_ref(), &opts, Some(&mut w)));
            drop(w);
            match result {
                Ok(r) => {
                    std::fs::rename(&tmp, path).map_err(out_err)?;
                    r
                }
                Err(e) => {
                    let _ = std::fs::remove_file(&tmp);
                    return Err(e);
                }
            }
        }
        None => audit_stream(stream, &dict, resolver.as_ref(), &opts, None)?,
    };

    let summary = AuditSummary::from_tally(&tally, &config.report_settings());
    Ok(AuditOutcome {
        resolver_hard_failures: resolver.hard_failures(),
        tally,
        summary,
        corpus,
    })
}
