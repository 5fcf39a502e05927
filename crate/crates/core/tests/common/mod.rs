#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use biosample_audit::dictionary::{load_dictionary, Dictionary};
use biosample_audit::resolve::{build_term_index, TermIndex};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn sample_dictionary() -> Dictionary {
    load_dictionary(fixture("dictionary.sample.json")).expect("sample dictionary loads")
}

pub fn term_files() -> Vec<PathBuf> {
    vec![fixture("doid.terms.tsv"), fixture("pato.terms.tsv")]
}

pub fn sample_index() -> TermIndex {
    build_term_index(&term_files()).expect("term fixtures load")
}

/// Lowercase, trim, collapse whitespace. Written out again here so tests do
/// not lean on the crate's own normalizer.
pub fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// One row of a term TSV file.
#[derive(Debug, Clone)]
pub struct TermRow {
    pub ontology: String,
    pub iri: String,
    pub label: String,
    pub synonyms: Vec<String>,
}

pub fn read_term_rows(paths: &[PathBuf]) -> Vec<TermRow> {
    let mut rows = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).unwrap();
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split('\t').collect();
            rows.push(TermRow {
                ontology: cols[0].to_string(),
                iri: cols[1].to_string(),
                label: cols[2].to_string(),
                synonyms: cols
                    .get(3)
                    .map(|s| s.split('|').filter(|x| !x.is_empty()).map(String::from).collect())
                    .unwrap_or_default(),
            });
        }
    }
    rows
}

#[derive(Debug, Clone)]
pub struct Request {
    pub at: Instant,
    pub path: String,
    pub params: Vec<(String, String)>,
    pub authorization: Option<String>,
}

impl Request {
    pub fn param(&self, k: &str) -> Option<&str> {
        self.params.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str())
    }
}

/// Minimal search service over a fixed term table. Answers
/// `GET /search?q=..&ontologies=..&require_exact_match=..` with a
/// BioPortal-shaped JSON body listing every term whose label or synonym
/// equals, starts with, or shares a token with the query. Scripted statuses
/// are served first, one per request.
pub struct StubServer {
    pub url: String,
    log: Arc<Mutex<Vec<Request>>>,
    script: Arc<Mutex<VecDeque<u16>>>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
}

impl StubServer {
    pub fn start(rows: Vec<TermRow>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let log = Arc::new(Mutex::new(Vec::new()));
        let script = Arc::new(Mutex::new(VecDeque::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let rows = Arc::new(rows);
        {
            let (log, script, stop) = (log.clone(), script.clone(), stop.clone());
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let at = Instant::now();
                    let (log, script, rows) = (log.clone(), script.clone(), rows.clone());
                    std::thread::spawn(move || {
                        let _ = handle(conn, at, &log, &script, &rows);
                    });
                }
            });
        }
        StubServer {
            url: format!("http://{addr}"),
            log,
            script,
            stop,
            addr,
        }
    }

    /// Queue statuses to return instead of a normal answer.
    pub fn script(&self, statuses: &[u16]) {
        self.script.lock().unwrap().extend(statuses);
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn reset_log(&self) {
        self.log.lock().unwrap().clear();
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
    }
}

fn handle(
    conn: TcpStream,
    at: Instant,
    log: &Mutex<Vec<Request>>,
    script: &Mutex<VecDeque<u16>>,
    rows: &[TermRow],
) -> std::io::Result<()> {
    conn.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let target = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut authorization = None;
    let mut content_length = 0usize;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h == "\r\n" || h == "\n" {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "authorization" => authorization = Some(v.trim().to_string()),
                "content-length" => content_length = v.trim().parse().unwrap_or(0),
                _ => {}
            }
        }
    }
    if content_length > 0 {
        let mut sink = vec![0; content_length];
        reader.read_exact(&mut sink)?;
    }
    let parsed = url::Url::parse(&format!("http://stub{target}")).unwrap();
    let req = Request {
        at,
        path: parsed.path().to_string(),
        params: parsed.query_pairs().map(|(k, v)| (k.into_owned(), v.into_owned())).collect(),
        authorization,
    };
    let scripted = script.lock().unwrap().pop_front();
    let (status, body) = match scripted {
        Some(s) => (s, format!("{{\"error\":\"scripted {s}\"}}")),
        None if req.path == "/search" => (200, search_body(&req, rows)),
        None => (404, "{}".to_string()),
    };
    log.lock().unwrap().push(req);
    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let mut conn = conn;
    write!(
        conn,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    conn.flush()
}

fn search_body(req: &Request, rows: &[TermRow]) -> String {
    let q = fold(req.param("q").unwrap_or(""));
    let exact = req.param("require_exact_match") == Some("true");
    let scope: Option<Vec<String>> = req
        .param("ontologies")
        .map(|o| o.split(',').map(|s| s.trim().to_uppercase()).collect());
    let q_tokens: Vec<&str> = q.split(' ').filter(|t| !t.is_empty()).collect();
    let mut items = Vec::new();
    for r in rows {
        if let Some(scope) = &scope {
            if !scope.contains(&r.ontology) {
                continue;
            }
        }
        let texts: Vec<String> = std::iter::once(&r.label).chain(&r.synonyms).map(|t| fold(t)).collect();
        let matched = if exact {
            texts.contains(&q)
        } else {
            texts
                .iter()
                .any(|t| t.starts_with(&q) || t.split(' ').any(|w| q_tokens.contains(&w)))
        };
        if matched {
            items.push(serde_json::json!({
                "@id": r.iri,
                "prefLabel": r.label,
                "synonym": r.synonyms,
                "links": {"ontology": format!("http://data.bioontology.org/ontologies/{}", r.ontology)},
            }));
        }
    }
    serde_json::json!({"page": 1, "pageCount": 1, "totalCount": items.len(), "collection": items}).to_string()
}

/// Largest number of requests falling inside any window of `width`.
pub fn max_in_window(times: &[Instant], width: Duration) -> usize {
    let mut ts = times.to_vec();
    ts.sort();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..ts.len() {
        while ts[hi].duration_since(ts[lo]) >= width {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_biosample-audit")
}
