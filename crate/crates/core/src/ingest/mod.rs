//! Streaming ingestion of sample-metadata corpora.
//!
//! Two formats are supported: BioSample XML (a `BioSampleSet` root holding
//! `BioSample` records) and a line-delimited JSON mirror of [`SampleRecord`].
//! Either may be gzip-compressed; compression is detected from magic bytes.
//!
//! Per-record problems are skipped and counted in [`CorpusStats`]; only
//! container-level problems end the stream with an error.

mod jsonl;
mod xml;

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use flate2::bufread::MultiGzDecoder;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use crate::normalize::normalize_attribute_name;
pub use xml::{parse_record, write_xml_record, XML_FOOTER, XML_HEADER};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const READ_BUFFER: usize = 256 * 1024;

/// One name/value pair inside a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    #[serde(rename = "name")]
    pub raw_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonized_name: Option<String>,
    /// Raw, untrimmed value. Empty is meaningful (not filled in).
    #[serde(default)]
    pub value: String,
}

impl Attribute {
    pub fn new(raw_name: impl Into<String>, value: impl Into<String>) -> Self {
        Attribute {
            raw_name: raw_name.into(),
            harmonized_name: None,
            value: value.into(),
        }
    }

    pub fn harmonized(mut self, name: impl Into<String>) -> Self {
        self.harmonized_name = Some(name.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Public,
    Controlled,
    #[default]
    Unknown,
}

impl Access {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "public" => Access::Public,
            "controlled" => Access::Controlled,
            _ => Access::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RecordStatus {
    Live,
    Suppressed,
    Other(String),
    #[default]
    Absent,
}

impl RecordStatus {
    pub fn parse(s: &str) -> Self {
        match s {
            "live" => RecordStatus::Live,
            "suppressed" => RecordStatus::Suppressed,
            "" => RecordStatus::Absent,
            other => RecordStatus::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            RecordStatus::Live => "live",
            RecordStatus::Suppressed => "suppressed",
            RecordStatus::Other(s) => s,
            RecordStatus::Absent => "",
        }
    }
}

impl Serialize for RecordStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RecordStatus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(RecordStatus::parse(&s))
    }
}

fn generic_package() -> String {
    "Generic".to_string()
}

fn is_absent(s: &RecordStatus) -> bool {
    *s == RecordStatus::Absent
}

/// A sample metadata record with its provenance fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    #[serde(default)]
    pub sample_id: String,
    pub accession: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub publication_date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_update_date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submission_date: Option<String>,
    #[serde(default)]
    pub access: Access,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organism_taxid: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organism_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_name: Option<String>,
    #[serde(default = "generic_package")]
    pub package_name: String,
    #[serde(default, skip_serializing_if = "is_absent")]
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status_date: Option<String>,
    #[serde(default)]
    pub attributes: Vec<Attribute>,
}

impl SampleRecord {
    pub fn new(accession: impl Into<String>) -> Self {
        SampleRecord {
            sample_id: String::new(),
            accession: accession.into(),
            publication_date: None,
            last_update_date: None,
            submission_date: None,
            access: Access::Unknown,
            organism_taxid: None,
            organism_name: None,
            owner_name: None,
            package_name: generic_package(),
            status: RecordStatus::Absent,
            status_date: None,
            attributes: Vec::new(),
        }
    }

    /// Checks the record-level invariants shared by both formats.
    pub fn check(mut self) -> Result<Self, String> {
        if self.accession.trim().is_empty() {
            return Err("missing accession".into());
        }
        if self.package_name.trim().is_empty() {
            self.package_name = generic_package();
        }
        if let Some(i) = self.attributes.iter().position(|a| a.raw_name.is_empty()) {
            return Err(format!("attribute #{i} has an empty name"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum CorpusFormat {
    #[serde(rename = "biosample-xml")]
    #[value(name = "biosample-xml")]
    BiosampleXml,
    #[serde(rename = "jsonl")]
    #[value(name = "jsonl")]
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "biosample-xml" | "xml" => Ok(CorpusFormat::BiosampleXml),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::BiosampleXml => "biosample-xml",
            CorpusFormat::Jsonl => "jsonl",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot open corpus {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("unknown corpus format {0:?}")]
    UnknownFormat(String),
    #[error("malformed corpus container: {0}")]
    Container(String),
    #[error("read error at byte {offset}: {source}")]
    Read {
        offset: u64,
        #[source]
        source: io::Error,
    },
}

/// Ingest-side counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records_read: u64,
    pub parse_errors: u64,
    pub bytes_read: u64,
}

enum Source {
    Xml(xml::XmlRecords<Box<dyn BufRead + Send>>),
    Jsonl(jsonl::JsonlRecords<Box<dyn BufRead + Send>>),
}

/// Single-consumer stream of parsed records.
///
/// Yields `Err` at most once, for a fatal container or I/O error, and then
/// ends.
pub struct RecordStream {
    source: Source,
    failed: bool,
}

/// Open a corpus file. Gzip input is accepted for either format.
pub fn open_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<RecordStream, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Open {
        path: path.display().to_string(),
        source,
    })?;
    RecordStream::from_reader(BufReader::with_capacity(READ_BUFFER, file), format)
}

impl RecordStream {
    pub fn from_reader<R: BufRead + Send + 'static>(
        mut reader: R,
        format: CorpusFormat,
    ) -> Result<Self, IngestError> {
        let head = reader
            .fill_buf()
            .map_err(|source| IngestError::Read { offset: 0, source })?;
        let inner: Box<dyn BufRead + Send> = if head.starts_with(&GZIP_MAGIC) {
            Box::new(BufReader::with_capacity(READ_BUFFER, MultiGzDecoder::new(reader)))
        } else {
            Box::new(reader)
        };
        let source = match format {
            CorpusFormat::BiosampleXml => Source::Xml(xml::XmlRecords::new(inner)),
            CorpusFormat::Jsonl => Source::Jsonl(jsonl::JsonlRecords::new(inner)),
        };
        Ok(RecordStream {
            source,
            failed: false,
        })
    }

    pub fn stats(&self) -> CorpusStats {
        match &self.source {
            Source::Xml(x) => x.stats,
            Source::Jsonl(j) => j.stats,
        }
    }
}

impl Iterator for RecordStream {
    type Item = Result<SampleRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let next = match &mut self.source {
            Source::Xml(x) => x.next_record(),
            Source::Jsonl(j) => j.next_record(),
        };
        match next {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Serialize one record as a single jsonl line.
pub fn write_jsonl_record<W: Write>(out: &mut W, record: &SampleRecord) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}
