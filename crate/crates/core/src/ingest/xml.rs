//! BioSample XML.
//!
//! Record boundaries are found by a lightweight markup scanner so that a
//! corrupt or truncated record only costs that record: each `BioSample`
//! element is copied into a reusable fragment buffer and parsed on its own
//! with quick-xml. Memory is bounded by the largest single record.

use std::io::{self, BufRead};

use quick_xml::escape::{escape, resolve_predefined_entity};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{Access, Attribute, CorpusStats, IngestError, RecordStatus, SampleRecord};

const SET_TAG: &[u8] = b"BioSampleSet";
const RECORD_TAG: &[u8] = b"BioSample";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TagKind {
    Start,
    End,
    Empty,
    /// Comment, CDATA, processing instruction, or declaration.
    Other,
    /// A tag cut short by a new `<` before its `>`.
    Broken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Prolog,
    InSet,
    InRecord,
    Done,
}

enum Split {
    Complete,
    Truncated,
}

pub(super) struct XmlRecords<R> {
    reader: R,
    state: State,
    pos: u64,
    fragment: Vec<u8>,
    fragment_offset: u64,
    /// Start tag of a record that began while the previous one was unclosed.
    pending: Option<(Vec<u8>, u64, TagKind)>,
    markup: Vec<u8>,
    /// Bytes after an unquoted `<` inside a broken tag; the next markup.
    carry: Option<Vec<u8>>,
    scratch: Vec<u8>,
    pub(super) stats: CorpusStats,
}

impl<R: BufRead> XmlRecords<R> {
    pub(super) fn new(reader: R) -> Self {
        XmlRecords {
            reader,
            state: State::Prolog,
            pos: 0,
            fragment: Vec::new(),
            fragment_offset: 0,
            pending: None,
            markup: Vec::new(),
            carry: None,
            scratch: Vec::new(),
            stats: CorpusStats::default(),
        }
    }

    pub(super) fn next_record(&mut self) -> Result<Option<SampleRecord>, IngestError> {
        loop {
            let split = match self.next_fragment()? {
                None => return Ok(None),
                Some(s) => s,
            };
            let offset = self.fragment_offset;
            let parsed = match split {
                Split::Truncated => Err("record element is truncated".to_string()),
                Split::Complete => parse_record(&self.fragment),
            };
            match parsed {
                Ok(record) => {
                    self.stats.records_read += 1;
                    return Ok(Some(record));
                }
                Err(msg) => {
                    self.stats.parse_errors += 1;
                    log::warn!("skipping record at byte {offset}: {msg}");
                }
            }
        }
    }

    fn read_err(&self, source: io::Error) -> IngestError {
        IngestError::Read {
            offset: self.pos,
            source,
        }
    }

    /// Read text up to the next `<`, appending to the fragment when inside a
    /// record. Returns false at end of input.
    fn skip_text(&mut self) -> Result<bool, IngestError> {
        let target = if self.state == State::InRecord {
            &mut self.fragment
        } else {
            self.scratch.clear();
            &mut self.scratch
        };
        let n = self.reader.read_until(b'<', target).map_err(|e| IngestError::Read {
            offset: self.pos,
            source: e,
        })?;
        self.pos += n as u64;
        self.stats.bytes_read += n as u64;
        let found = n > 0 && target.last() == Some(&b'<');
        if found && self.state == State::InRecord {
            // The '<' belongs to the markup that follows.
            target.pop();
        }
        Ok(found)
    }

    fn read_more(&mut self, delim: u8) -> Result<bool, IngestError> {
        let n = self
            .reader
            .read_until(delim, &mut self.markup)
            .map_err(|e| self.read_err(e))?;
        self.pos += n as u64;
        self.stats.bytes_read += n as u64;
        Ok(n > 0 && self.markup.last() == Some(&delim))
    }

    fn read_until_suffix(&mut self, suffix: &[u8]) -> Result<bool, IngestError> {
        let last = *suffix.last().expect("non-empty suffix");
        loop {
            if self.markup.len() > suffix.len() && self.markup.ends_with(suffix) {
                return Ok(true);
            }
            if !self.read_more(last)? {
                return Ok(false);
            }
        }
    }

    /// Read one markup construct after a `<` into `self.markup` (excluding
    /// the leading `<`). Returns None on end of input mid-markup.
    fn read_markup(&mut self) -> Result<Option<TagKind>, IngestError> {
        self.markup.clear();
        if let Some(carry) = self.carry.take() {
            self.markup = carry;
        }
        // Enough bytes to tell comments/CDATA apart from tags.
        while self.markup.len() < 8 && self.markup.last() != Some(&b'>') {
            let buf = self.reader.fill_buf().map_err(|e| IngestError::Read {
                offset: self.pos,
                source: e,
            })?;
            if buf.is_empty() {
                break;
            }
            let b = buf[0];
            self.reader.consume(1);
            self.pos += 1;
            self.stats.bytes_read += 1;
            self.markup.push(b);
            if b == b'>' {
                break;
            }
        }
        let m = &self.markup;
        let kind = if m.starts_with(b"!--") {
            if !self.read_until_suffix(b"-->")? {
                return Ok(None);
            }
            TagKind::Other
        } else if m.starts_with(b"![CDATA[") {
            if !self.read_until_suffix(b"]]>")? {
                return Ok(None);
            }
            TagKind::Other
        } else if m.starts_with(b"?") {
            if !self.read_until_suffix(b"?>")? {
                return Ok(None);
            }
            TagKind::Other
        } else if m.starts_with(b"!") {
            // DOCTYPE, possibly with an internal subset.
            loop {
                if self.markup.last() == Some(&b'>') && bracket_balance(&self.markup) <= 0 {
                    break;
                }
                if !self.read_more(b'>')? {
                    return Ok(None);
                }
            }
            TagKind::Other
        } else {
            loop {
                if self.markup.last() == Some(&b'>') && !ends_in_quote(&self.markup) {
                    break;
                }
                if !self.read_more(b'>')? {
                    return Ok(None);
                }
            }
            if let Some(k) = unquoted_lt(&self.markup) {
                self.carry = Some(self.markup[k + 1..].to_vec());
                self.markup.truncate(k);
                TagKind::Broken
            } else if self.markup.first() == Some(&b'/') {
                TagKind::End
            } else if self.markup.ends_with(b"/>") {
                TagKind::Empty
            } else {
                TagKind::Start
            }
        };
        Ok(Some(kind))
    }

    fn tag_name(&self) -> &[u8] {
        let m = self.markup.strip_prefix(b"/").unwrap_or(&self.markup);
        let end = m
            .iter()
            .position(|&b| b.is_ascii_whitespace() || b == b'>' || b == b'/')
            .unwrap_or(m.len());
        &m[..end]
    }

    fn begin_record(&mut self, markup: &[u8], offset: u64) {
        self.fragment.clear();
        self.fragment.push(b'<');
        self.fragment.extend_from_slice(markup);
        self.fragment_offset = offset;
    }

    fn next_fragment(&mut self) -> Result<Option<Split>, IngestError> {
        if let Some((markup, offset, kind)) = self.pending.take() {
            self.begin_record(&markup, offset);
            if kind == TagKind::Empty {
                self.state = State::InSet;
                return Ok(Some(Split::Complete));
            }
            self.state = State::InRecord;
        }
        loop {
            if self.state == State::Done {
                return Ok(None);
            }
            let tag_offset = match &self.carry {
                Some(c) => self.pos - c.len() as u64 - 1,
                None => {
                    if !self.skip_text()? {
                        return self.at_eof();
                    }
                    self.pos - 1
                }
            };
            let kind = match self.read_markup()? {
                Some(k) => k,
                None => return self.at_eof(),
            };
            let is_set = self.tag_name() == SET_TAG;
            let is_record = self.tag_name() == RECORD_TAG;
            match self.state {
                State::Prolog => match kind {
                    TagKind::Other => {}
                    TagKind::Start | TagKind::Empty if is_set => {
                        self.state = if kind == TagKind::Empty {
                            State::Done
                        } else {
                            State::InSet
                        };
                    }
                    _ => {
                        return Err(IngestError::Container(format!(
                            "expected root element <BioSampleSet>, found <{}>",
                            String::from_utf8_lossy(&self.markup)
                                .chars()
                                .take(60)
                                .collect::<String>()
                        )))
                    }
                },
                State::InSet => match kind {
                    TagKind::Start | TagKind::Empty if is_record => {
                        let markup = std::mem::take(&mut self.markup);
                        self.begin_record(&markup, tag_offset);
                        self.markup = markup;
                        if kind == TagKind::Empty {
                            return Ok(Some(Split::Complete));
                        }
                        self.state = State::InRecord;
                    }
                    TagKind::End if is_set => self.state = State::Done,
                    _ => {}
                },
                State::InRecord => match kind {
                    TagKind::Start | TagKind::Empty if is_record => {
                        self.pending = Some((self.markup.clone(), tag_offset, kind));
                        self.state = State::InSet;
                        return Ok(Some(Split::Truncated));
                    }
                    TagKind::End if is_set => {
                        self.state = State::Done;
                        return Ok(Some(Split::Truncated));
                    }
                    _ => {
                        self.fragment.push(b'<');
                        self.fragment.extend_from_slice(&self.markup);
                        if kind == TagKind::Broken {
                            // Unparseable; make sure the fragment cannot close cleanly.
                            self.fragment.push(b'<');
                        }
                        if kind == TagKind::End && is_record {
                            self.state = State::InSet;
                            return Ok(Some(Split::Complete));
                        }
                    }
                },
                State::Done => return Ok(None),
            }
        }
    }

    fn at_eof(&mut self) -> Result<Option<Split>, IngestError> {
        let prev = std::mem::replace(&mut self.state, State::Done);
        match prev {
            State::Prolog => Err(IngestError::Container(
                "no <BioSampleSet> root element".to_string(),
            )),
            State::InRecord => Ok(Some(Split::Truncated)),
            State::InSet => {
                log::warn!("corpus ended without closing </BioSampleSet>");
                Ok(None)
            }
            State::Done => Ok(None),
        }
    }
}

/// True if the tag text ends while a quoted attribute value is still open.
fn ends_in_quote(markup: &[u8]) -> bool {
    let mut quote: Option<u8> = None;
    for &b in markup {
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if b == b'"' || b == b'\'' => quote = Some(b),
            None => {}
        }
    }
    quote.is_some()
}

fn unquoted_lt(markup: &[u8]) -> Option<usize> {
    let mut quote: Option<u8> = None;
    for (i, &b) in markup.iter().enumerate() {
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if b == b'"' || b == b'\'' => quote = Some(b),
            None if b == b'<' => return Some(i),
            None => {}
        }
    }
    None
}

fn bracket_balance(markup: &[u8]) -> i32 {
    markup.iter().fold(0, |acc, &b| match b {
        b'[' => acc + 1,
        b']' => acc - 1,
        _ => acc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Capture {
    OwnerName,
    Model,
    Package,
    OrganismName,
    AttributeValue,
}

fn attr_value(e: &BytesStart<'_>, name: &[u8]) -> Result<Option<String>, String> {
    match e.try_get_attribute(name) {
        Ok(Some(a)) => a
            .unescape_value()
            .map(|v| Some(v.into_owned()))
            .map_err(|err| format!("bad attribute value: {err}")),
        Ok(None) => Ok(None),
        Err(err) => Err(format!("bad attribute: {err}")),
    }
}

fn non_empty(v: Option<String>) -> Option<String> {
    v.filter(|s| !s.is_empty())
}

/// Parse one `<BioSample>` element into a record.
///
/// Absent optional fields stay absent, dates are kept verbatim, and the
/// first `Models/Model` supplies the package unless a `Package` element is
/// present.
pub fn parse_record(fragment: &[u8]) -> Result<SampleRecord, String> {
    let mut reader = Reader::from_reader(fragment);
    reader.config_mut().check_end_names = true;
    let mut buf = Vec::new();
    let mut path: Vec<Vec<u8>> = Vec::new();
    let mut record: Option<SampleRecord> = None;
    let mut model: Option<String> = None;
    let mut package: Option<String> = None;
    let mut organism_name_child: Option<String> = None;
    let mut capture: Option<(Capture, usize)> = None;
    let mut text = String::new();
    let mut pending_attr: Option<Attribute> = None;
    let mut closed = false;

    loop {
        buf.clear();
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| format!("XML error at fragment byte {}: {e}", reader.buffer_position()))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let name = e.local_name().as_ref().to_vec();
                let parent = path.last().map(Vec::as_slice);
                let grandparent = path.len().checked_sub(2).map(|i| path[i].as_slice());
                if closed {
                    return Err("content after </BioSample>".into());
                }
                if path.is_empty() {
                    if name != RECORD_TAG {
                        return Err("fragment is not a <BioSample> element".into());
                    }
                    let mut r = SampleRecord::new(attr_value(e, b"accession")?.unwrap_or_default());
                    r.sample_id = attr_value(e, b"id")?.unwrap_or_default();
                    r.publication_date = non_empty(attr_value(e, b"publication_date")?);
                    r.last_update_date = non_empty(attr_value(e, b"last_update")?);
                    r.submission_date = non_empty(attr_value(e, b"submission_date")?);
                    r.access = attr_value(e, b"access")?
                        .map(|a| Access::parse(&a))
                        .unwrap_or_default();
                    record = Some(r);
                } else if let Some(r) = record.as_mut() {
                    let depth = path.len() + 1;
                    match (name.as_slice(), parent, grandparent) {
                        (b"Organism", Some(b"Description"), _) => {
                            if let Some(id) = attr_value(e, b"taxonomy_id")? {
                                r.organism_taxid = id.trim().parse().ok();
                            }
                            r.organism_name = non_empty(attr_value(e, b"taxonomy_name")?);
                        }
                        (b"OrganismName", Some(b"Organism"), _) => {
                            capture = Some((Capture::OrganismName, depth));
                        }
                        (b"Name", Some(b"Owner"), Some(b"BioSample")) if r.owner_name.is_none() => {
                            capture = Some((Capture::OwnerName, depth));
                        }
                        (b"Model", Some(b"Models"), _) if model.is_none() => {
                            capture = Some((Capture::Model, depth));
                        }
                        (b"Package", Some(b"BioSample"), _) => {
                            capture = Some((Capture::Package, depth));
                        }
                        (b"Status", Some(b"BioSample"), _) => {
                            r.status = RecordStatus::parse(&attr_value(e, b"status")?.unwrap_or_default());
                            r.status_date = non_empty(attr_value(e, b"when")?);
                        }
                        (b"Attribute", Some(b"Attributes"), _) => {
                            let raw = match attr_value(e, b"attribute_name")? {
                                Some(n) if !n.is_empty() => Some(n),
                                _ => non_empty(attr_value(e, b"display_name")?),
                            };
                            let harmonized = non_empty(attr_value(e, b"harmonized_name")?);
                            let raw_name = raw
                                .or_else(|| harmonized.clone())
                                .ok_or_else(|| "attribute without a name".to_string())?;
                            pending_attr = Some(Attribute {
                                raw_name,
                                harmonized_name: harmonized,
                                value: String::new(),
                            });
                            capture = Some((Capture::AttributeValue, depth));
                        }
                        _ => {}
                    }
                    if capture.is_some_and(|(_, d)| d == depth) {
                        text.clear();
                    }
                }
                if is_empty {
                    if path.is_empty() {
                        closed = true;
                    } else {
                        finish_capture(
                            &mut capture,
                            path.len() + 1,
                            &mut text,
                            record.as_mut(),
                            &mut pending_attr,
                            &mut model,
                            &mut package,
                            &mut organism_name_child,
                        );
                    }
                } else {
                    path.push(name);
                }
            }
            Event::End(_) => {
                let depth = path.len();
                finish_capture(
                    &mut capture,
                    depth,
                    &mut text,
                    record.as_mut(),
                    &mut pending_attr,
                    &mut model,
                    &mut package,
                    &mut organism_name_child,
                );
                path.pop();
                if path.is_empty() {
                    closed = true;
                }
            }
            Event::Text(ref t) => {
                if capture.is_some() {
                    let s = t.xml_content().map_err(|e| format!("bad text: {e}"))?;
                    text.push_str(&s);
                }
            }
            Event::CData(ref t) => {
                if capture.is_some() {
                    let s = t.decode().map_err(|e| format!("bad CDATA: {e}"))?;
                    text.push_str(&s);
                }
            }
            Event::GeneralRef(ref r) => {
                if capture.is_some() {
                    if r.is_char_ref() {
                        match r.resolve_char_ref() {
                            Ok(Some(c)) => text.push(c),
                            _ => return Err("bad character reference".into()),
                        }
                    } else {
                        let name = r.decode().map_err(|e| format!("bad entity: {e}"))?;
                        match resolve_predefined_entity(&name) {
                            Some(s) => text.push_str(s),
                            None => return Err(format!("unknown entity &{name};")),
                        }
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !closed {
        return Err("record element is not closed".into());
    }
    let mut record = record.ok_or_else(|| "empty fragment".to_string())?;
    if organism_name_child.is_some() && record.organism_name.is_none() {
        record.organism_name = organism_name_child;
    }
    if let Some(p) = package.filter(|p| !p.trim().is_empty()) {
        record.package_name = p.trim().to_string();
    } else if let Some(m) = model.filter(|m| !m.trim().is_empty()) {
        record.package_name = m.trim().to_string();
    }
    record.check()
}

#[allow(clippy::too_many_arguments)]
fn finish_capture(
    capture: &mut Option<(Capture, usize)>,
    depth: usize,
    text: &mut String,
    record: Option<&mut SampleRecord>,
    pending_attr: &mut Option<Attribute>,
    model: &mut Option<String>,
    package: &mut Option<String>,
    organism_name: &mut Option<String>,
) {
    let Some((kind, d)) = *capture else { return };
    if d != depth {
        return;
    }
    *capture = None;
    let value = std::mem::take(text);
    match kind {
        Capture::AttributeValue => {
            if let (Some(r), Some(mut a)) = (record, pending_attr.take()) {
                a.value = value;
                r.attributes.push(a);
            }
        }
        Capture::OwnerName => {
            if let Some(r) = record {
                r.owner_name = non_empty(Some(value.trim().to_string()));
            }
        }
        Capture::Model => *model = Some(value),
        Capture::Package => *package = Some(value),
        Capture::OrganismName => *organism_name = non_empty(Some(value.trim().to_string())),
    }
}

/// Opening of a `<BioSampleSet>` document, for [`write_xml_record`].
pub const XML_HEADER: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<BioSampleSet>\n";
pub const XML_FOOTER: &str = "</BioSampleSet>\n";

/// Write one record as a `<BioSample>` element that [`parse_record`] reads
/// back unchanged.
pub fn write_xml_record<W: io::Write>(out: &mut W, r: &SampleRecord) -> io::Result<()> {
    let mut s = String::with_capacity(256 + 96 * r.attributes.len());
    s.push_str("<BioSample");
    let attr = |s: &mut String, name: &str, value: &str| {
        s.push_str(&format!(" {name}=\"{}\"", escape(value)));
    };
    match r.access {
        Access::Public => attr(&mut s, "access", "public"),
        Access::Controlled => attr(&mut s, "access", "controlled"),
        Access::Unknown => {}
    }
    for (name, v) in [
        ("publication_date", &r.publication_date),
        ("last_update", &r.last_update_date),
        ("submission_date", &r.submission_date),
    ] {
        if let Some(v) = v {
            attr(&mut s, name, v);
        }
    }
    if !r.sample_id.is_empty() {
        attr(&mut s, "id", &r.sample_id);
    }
    attr(&mut s, "accession", &r.accession);
    s.push_str(">\n");
    if r.organism_taxid.is_some() || r.organism_name.is_some() {
        s.push_str("  <Description><Organism");
        if let Some(id) = r.organism_taxid {
            attr(&mut s, "taxonomy_id", &id.to_string());
        }
        if let Some(n) = &r.organism_name {
            attr(&mut s, "taxonomy_name", n);
        }
        s.push_str("/></Description>\n");
    }
    if let Some(owner) = &r.owner_name {
        s.push_str(&format!("  <Owner><Name>{}</Name></Owner>\n", escape(owner)));
    }
    s.push_str(&format!("  <Package>{}</Package>\n", escape(&r.package_name)));
    s.push_str("  <Attributes>\n");
    for a in &r.attributes {
        s.push_str("    <Attribute");
        attr(&mut s, "attribute_name", &a.raw_name);
        if let Some(h) = &a.harmonized_name {
            attr(&mut s, "harmonized_name", h);
        }
        s.push_str(&format!(">{}</Attribute>\n", escape(&a.value)));
    }
    s.push_str("  </Attributes>\n");
    if r.status != RecordStatus::Absent {
        s.push_str("  <Status");
        attr(&mut s, "status", r.status.as_str());
        if let Some(when) = &r.status_date {
            attr(&mut s, "when", when);
        }
        s.push_str("/>\n");
    }
    s.push_str("</BioSample>\n");
    out.write_all(s.as_bytes())
}
