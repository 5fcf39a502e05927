use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biosample_audit::audit::{run_audit, AuditConfig, AuditError};
use biosample_audit::dictionary::{lint_dictionary, load_dictionary, Dictionary, Severity};
use biosample_audit::ingest::{open_corpus, CorpusFormat};
use biosample_audit::resolve::{build_resolver, build_term_index, ResolverMode, ResponseCache};
use biosample_audit::stats::{RecordRule, ReportFormat};
use biosample_audit::synth::{manifest_path, write_corpus, SynthSpec};
use biosample_audit::validate::{validate_record, MatchMode};

const DEFAULT_API_KEY_ENV: &str = "BIOPORTAL_API_KEY";

#[derive(Parser)]
#[command(name = "biosample-audit", version, about = "Audit sample-metadata corpora against a data dictionary")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a whole corpus and write a quality report.
    Audit(AuditArgs),
    /// Print per-attribute verdicts for the records of a small corpus.
    Validate(ValidateArgs),
    /// Dictionary maintenance.
    Dict {
        #[command(subcommand)]
        command: DictCommand,
    },
    /// Generate a synthetic corpus with a ground-truth manifest.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum DictCommand {
    /// Check a dictionary for structural problems.
    Lint { path: PathBuf },
}

#[derive(Args, Default)]
struct ResolverArgs {
    #[arg(long, value_enum)]
    resolver_mode: Option<ResolverMode>,
    /// Term file (ontology, iri, label, synonyms TSV). Repeatable.
    #[arg(long = "terms")]
    terms: Vec<PathBuf>,
    /// Base URL of a BioPortal-compatible search service.
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Requests per second.
    #[arg(long)]
    rate_limit: Option<u32>,
    /// Retries after a 5xx or transport failure.
    #[arg(long)]
    max_retries: Option<u32>,
    /// Persistent JSON-lines response cache.
    #[arg(long)]
    cache_path: Option<PathBuf>,
    /// Delete the response cache before starting.
    #[arg(long)]
    clear_cache: bool,
}

#[derive(Args, Default)]
struct PolicyArgs {
    /// Value-set matching.
    #[arg(long, value_enum)]
    policy_value_set: Option<MatchMode>,
    /// Ontology-term matching.
    #[arg(long, value_enum)]
    policy_ontology: Option<MatchMode>,
    /// Comma-separated values flagged as null-like.
    #[arg(long, value_delimiter = ',')]
    null_tokens: Option<Vec<String>>,
}

#[derive(Args)]
struct AuditArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Attribute dictionary (JSON).
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Record source; gzip is detected.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    corpus_format: Option<CorpusFormat>,
    #[command(flatten)]
    resolver: ResolverArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Validation threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Report path; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
    /// TSV listing every invalid value.
    #[arg(long)]
    anomaly_log: Option<PathBuf>,
    #[arg(long, value_enum)]
    record_rule: Option<RecordRule>,
    /// Distinct custom names counted exactly before switching to an estimate.
    #[arg(long)]
    census_cap: Option<usize>,
    /// Progress line every N records; 0 disables.
    #[arg(long)]
    progress_every: Option<u64>,
    /// No progress output.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Attribute dictionary (JSON).
    #[arg(long)]
    dictionary: PathBuf,
    /// Record source (one or more records).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Jsonl)]
    corpus_format: CorpusFormat,
    /// Only show the record with this accession.
    #[arg(long)]
    accession: Option<String>,
    #[command(flatten)]
    resolver: ResolverArgs,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Attribute dictionary (JSON).
    #[arg(long)]
    dictionary: PathBuf,
    /// Term files supplying valid ontology values. Repeatable.
    #[arg(long = "terms")]
    terms: Vec<PathBuf>,
    /// Output corpus path; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::BiosampleXml)]
    format: CorpusFormat,
    /// JSON synthesis spec; flags override its values.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of records to generate.
    #[arg(long)]
    records: Option<u64>,
    /// Seed for the generator; equal seeds give equal corpora.
    #[arg(long)]
    seed: Option<u64>,
    /// Draw every spec parameter at random from the seed.
    #[arg(long)]
    randomized: bool,
}

/// A fatal error: one machine-parseable line on standard error.
struct Fatal {
    kind: &'static str,
    msg: String,
    code: u8,
}

impl Fatal {
    fn new(kind: &'static str, msg: impl ToString) -> Self {
        Fatal {
            kind,
            msg: msg.to_string(),
            code: 2,
        }
    }
}

impl From<AuditError> for Fatal {
    fn from(e: AuditError) -> Self {
        Fatal::new(e.kind(), e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Audit(args) => cmd_audit(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Dict {
            command: DictCommand::Lint { path },
        } => cmd_dict_lint(&path),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error kind={} msg={:?}", f.kind, f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn apply_resolver_args(cfg: &mut biosample_audit::resolve::ResolverConfig, a: &ResolverArgs) -> Result<(), Fatal> {
    if let Some(m) = a.resolver_mode {
        cfg.mode = m;
    }
    if !a.terms.is_empty() {
        cfg.term_files = a.terms.clone();
    }
    if let Some(e) = &a.endpoint {
        cfg.endpoint_url = Some(e.clone());
    }
    if let Some(r) = a.rate_limit {
        cfg.rate_limit = r;
    }
    if let Some(r) = a.max_retries {
        cfg.max_retries = r;
    }
    if let Some(p) = &a.cache_path {
        cfg.cache_path = Some(p.clone());
    }
    let var = a.api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV);
    cfg.api_key = std::env::var(var).ok().filter(|k| !k.is_empty());
    if a.api_key_env.is_some() && cfg.api_key.is_none() {
        return Err(Fatal::new("config", format!("environment variable {var} is not set")));
    }
    if a.clear_cache {
        if let Some(p) = &cfg.cache_path {
            ResponseCache::clear(p).map_err(|e| Fatal::new("config", format!("cannot clear cache: {e}")))?;
        }
    }
    Ok(())
}

fn apply_policy_args(p: &mut biosample_audit::validate::MatchPolicy, a: &PolicyArgs) {
    if let Some(m) = a.policy_value_set {
        p.value_set = m;
    }
    if let Some(m) = a.policy_ontology {
        p.ontology = m;
    }
    if let Some(t) = &a.null_tokens {
        p.null_tokens = t.clone();
    }
}

fn cmd_audit(a: AuditArgs) -> Result<u8, Fatal> {
    let mut cfg = match &a.config {
        Some(p) => AuditConfig::from_json_file(p)?,
        None => AuditConfig::default(),
    };
    if let Some(p) = a.dictionary {
        cfg.dictionary_path = p;
    }
    if let Some(p) = a.corpus {
        cfg.corpus_path = p;
    }
    if let Some(f) = a.corpus_format {
        cfg.corpus_format = f;
    }
    apply_resolver_args(&mut cfg.resolver, &a.resolver)?;
    apply_policy_args(&mut cfg.policy, &a.policy);
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(o) = a.output {
        cfg.output_path = Some(o);
    }
    if let Some(f) = a.format {
        cfg.output_format = f;
    }
    if let Some(p) = a.anomaly_log {
        cfg.anomaly_log_path = Some(p);
    }
    if let Some(r) = a.record_rule {
        cfg.record_rule = r;
    }
    if let Some(c) = a.census_cap {
        cfg.census_cap = c;
    }
    if let Some(n) = a.progress_every {
        cfg.progress_every = n;
    }
    if a.quiet {
        cfg.progress_every = 0;
    }

    let outcome = run_audit(&cfg)?;
    if outcome.corpus.parse_errors > 0 {
        log::warn!("{} records could not be parsed and were skipped", outcome.corpus.parse_errors);
    }
    let code = outcome.exit_code(cfg.resolver.mode);
    if code != 0 {
        return Err(Fatal {
            kind: "resolver",
            msg: format!(
                "{} resolver requests were rejected; affected values are reported as not assessed",
                outcome.resolver_hard_failures
            ),
            code: code as u8,
        });
    }
    Ok(0)
}

fn cmd_validate(a: ValidateArgs) -> Result<u8, Fatal> {
    let dict = load_dictionary(&a.dictionary).map_err(|e| Fatal::new("dictionary", e))?;
    let mut rcfg = biosample_audit::resolve::ResolverConfig::default();
    apply_resolver_args(&mut rcfg, &a.resolver)?;
    let mut policy = biosample_audit::validate::MatchPolicy::default();
    apply_policy_args(&mut policy, &a.policy);
    let resolver = build_resolver(&rcfg).map_err(|e| Fatal::new("resolver", e))?;
    let stream = open_corpus(&a.corpus, a.corpus_format).map_err(|e| Fatal::new("ingest", e))?;

    let mut out = io::stdout().lock();
    let mut shown = 0usize;
    let mut write = |s: String| -> Result<(), Fatal> { writeln!(out, "{s}").map_err(|e| Fatal::new("output", e)) };
    let mut stream = stream;
    for item in stream.by_ref() {
        let record = item.map_err(|e| Fatal::new("ingest", e))?;
        if a.accession.as_deref().is_some_and(|acc| acc != record.accession) {
            continue;
        }
        shown += 1;
        write(format!("# {} ({})", record.accession, record.package_name))?;
        if record.attributes.is_empty() {
            write("no attributes".into())?;
            continue;
        }
        let report = validate_record(&record, &dict, resolver.as_ref(), &policy);
        for r in &report.per_attribute {
            let group = if r.classification.in_dictionary {
                r.verdict.group.display_label()
            } else {
                "Custom"
            };
            let mut line = format!(
                "{}\t{}\t{}\t{}\t{}",
                r.attribute.raw_name,
                group,
                if r.verdict.filled_in { "filled" } else { "empty" },
                r.verdict.well_specified,
                r.verdict.reason_text()
            );
            if let Some(hit) = &r.verdict.matched_term {
                line.push_str(&format!("\t{} {}", hit.ontology_acronym, hit.term_iri));
            }
            write(line)?;
        }
    }
    let parse_errors = stream.stats().parse_errors;
    if parse_errors > 0 {
        return Err(Fatal::new("ingest", format!("{parse_errors} records could not be parsed")));
    }
    if shown == 0 {
        if let Some(acc) = a.accession {
            return Err(Fatal {
                code: 1,
                ..Fatal::new("not_found", format!("no record with accession {acc}"))
            });
        }
        write("no records".into())?;
    }
    Ok(0)
}

fn cmd_dict_lint(path: &Path) -> Result<u8, Fatal> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Fatal::new("dictionary", format!("cannot read {}: {e}", path.display())))?;
    let dict = Dictionary::from_json_lenient(&text).map_err(|e| Fatal::new("dictionary", e))?;
    let findings = lint_dictionary(&dict);
    let mut out = io::stdout().lock();
    let io = |e: io::Error| Fatal::new("output", e);
    for f in &findings {
        writeln!(out, "{f}").map_err(io)?;
    }
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    writeln!(
        out,
        "{} finding{} ({} error{}, {} warning{})",
        findings.len(),
        if findings.len() == 1 { "" } else { "s" },
        errors,
        if errors == 1 { "" } else { "s" },
        findings.len() - errors,
        if findings.len() - errors == 1 { "" } else { "s" },
    )
    .map_err(io)?;
    Ok(if findings.is_empty() { 0 } else { 1 })
}

fn cmd_synth(a: SynthArgs) -> Result<u8, Fatal> {
    let dict = load_dictionary(&a.dictionary).map_err(|e| Fatal::new("dictionary", e))?;
    let index = build_term_index(&a.terms).map_err(|e| Fatal::new("resolver", e))?;
    let seed = a.seed.unwrap_or(0);
    let mut spec = match (&a.spec, a.randomized) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Fatal::new("config", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Fatal::new("config", format!("{}: {e}", p.display())))?
        }
        (None, true) => SynthSpec::randomized(seed, a.records.unwrap_or(1000)),
        (None, false) => SynthSpec::default(),
    };
    if let Some(n) = a.records {
        spec.record_count = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let m = write_corpus(&spec, &dict, &index, a.format, &a.out).map_err(|e| match e {
        biosample_audit::synth::SynthError::InvalidSpec(_) => Fatal::new("config", e),
        _ => Fatal::new("output", e),
    })?;
    log::info!(
        "wrote {} records ({} attributes) to {}; manifest {}",
        m.total_records,
        m.total_attributes,
        a.out.display(),
        manifest_path(&a.out).display()
    );
    Ok(0)
}
