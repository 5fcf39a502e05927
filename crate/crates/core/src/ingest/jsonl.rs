use std::io::BufRead;

use super::{CorpusStats, IngestError, SampleRecord};

pub(super) struct JsonlRecords<R> {
    reader: R,
    line: Vec<u8>,
    pos: u64,
    line_no: u64,
    pub(super) stats: CorpusStats,
}

impl<R: BufRead> JsonlRecords<R> {
    pub(super) fn new(reader: R) -> Self {
        JsonlRecords {
            reader,
            line: Vec::new(),
            pos: 0,
            line_no: 0,
            stats: CorpusStats::default(),
        }
    }

    pub(super) fn next_record(&mut self) -> Result<Option<SampleRecord>, IngestError> {
        loop {
            self.line.clear();
            let offset = self.pos;
            let n = self
                .reader
                .read_until(b'\n', &mut self.line)
                .map_err(|source| IngestError::Read { offset, source })?;
            if n == 0 {
                return Ok(None);
            }
            self.pos += n as u64;
            self.stats.bytes_read += n as u64;
            self.line_no += 1;
            if self.line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let parsed = std::str::from_utf8(&self.line)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<SampleRecord>(s).map_err(|e| e.to_string()))
                .and_then(SampleRecord::check);
            match parsed {
                Ok(r) => {
                    self.stats.records_read += 1;
                    return Ok(Some(r));
                }
                Err(msg) => {
                    self.stats.parse_errors += 1;
                    log::warn!("skipping record at byte {offset} (line {}): {msg}", self.line_no);
                }
            }
        }
    }
}
