//! Deterministic synthetic corpora with exactly known quality figures.
//!
//! Generation runs in two passes. The first lays out the corpus shape
//! (packages, which attributes each record carries, which values are empty,
//! valid or invalid) as compact index arrays and derives the manifest from
//! it. The second renders values and streams records to the output, so
//! memory stays proportional to the attribute count, not the text size.
//!
//! Valid and invalid exemplars are chosen with checks written here, not by
//! calling the validators, so the manifest is an independent oracle.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{AttributeSpec, Dictionary, ValidationGroup};
use crate::ingest::{
    write_jsonl_record, write_xml_record, Access, Attribute, CorpusFormat, RecordStatus, SampleRecord, XML_FOOTER,
    XML_HEADER,
};
use crate::resolve::TermIndex;

/// Known-bad values, most of them seen in real submissions.
const BAD_ONTOLOGY: &[&str] = &[
    "lung_squamous_carcinoma",
    "gastrointestinal stromal tumor_4",
    "HIV_Positive",
    "colon_adenocarcinoma",
    "breast cancer stage II",
    "healthy control",
    "unknown disease",
    "tumour",
];
const BAD_VALUE_SET: &[&str] = &[
    "castrated horse",
    "gynoparae",
    "mal e",
    "makle",
    "femLE",
    "Department I of Internal Medicine",
    "1",
    "2",
    "0",
    "m",
    "f",
    "M/F",
];
const BAD_BOOLEAN: &[&str] = &[
    "yes",
    "no",
    "Y",
    "N",
    "0",
    "1",
    "--",
    "never",
    "never smoker",
    "Former",
    "ex-smoker",
    "Non-smoker",
    "current smoker",
];
const BAD_INTEGER: &[&str] = &[
    "Mus musculus",
    "3.5",
    "1,000",
    "12 years",
    "N/A",
    "e;N/A",
    "NO",
    "+",
    "-",
    "0x1F",
    "9223372036854775808",
    "-9223372036854775809",
    "1e6",
    "about 40",
];
const WORDS: &[&str] = &[
    "biopsy", "frozen", "left", "lobe", "A&B", "<pooled>", "sample", "collected", "at", "site", "\"north\"", "day",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupFractions {
    pub ontology_term: f64,
    pub value_set: f64,
    pub boolean: f64,
    pub integer: f64,
}

impl Default for GroupFractions {
    fn default() -> Self {
        GroupFractions {
            ontology_term: 0.32,
            value_set: 0.92,
            boolean: 0.27,
            integer: 0.74,
        }
    }
}

impl GroupFractions {
    pub fn get(&self, g: ValidationGroup) -> Option<f64> {
        match g {
            ValidationGroup::OntologyTerm => Some(self.ontology_term),
            ValidationGroup::ValueSet => Some(self.value_set),
            ValidationGroup::Boolean => Some(self.boolean),
            ValidationGroup::Integer => Some(self.integer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageWeight {
    pub name: String,
    pub weight: f64,
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub record_count: u64,
    pub seed: u64,
    /// Share of filled values planted valid, per validated group.
    pub valid_fraction: GroupFractions,
    /// Share of non-empty records carrying custom attributes.
    pub custom_name_fraction: f64,
    pub zero_attribute_fraction: f64,
    /// Share of dictionary-attribute values left empty.
    pub empty_value_fraction: f64,
    /// Chance that a non-empty record carries a given group.
    pub group_presence: f64,
    /// Chance that a carried group appears twice in the record.
    pub repeat_fraction: f64,
    pub package_mix: Vec<PackageWeight>,
    pub owner_count: u32,
    pub custom_name_pool: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            record_count: 1000,
            seed: 0,
            valid_fraction: GroupFractions::default(),
            custom_name_fraction: 0.3,
            zero_attribute_fraction: 0.03,
            empty_value_fraction: 0.05,
            group_presence: 0.55,
            repeat_fraction: 0.15,
            package_mix: vec![
                PackageWeight {
                    name: "Generic".into(),
                    weight: 0.85,
                },
                PackageWeight {
                    name: "Human.1.0".into(),
                    weight: 0.10,
                },
                PackageWeight {
                    name: "Microbe.1.0".into(),
                    weight: 0.05,
                },
            ],
            owner_count: 50,
            custom_name_pool: 200,
        }
    }
}

const PACKAGE_NAMES: &[&str] = &["Generic", "Human.1.0", "Microbe.1.0", "Model.organism.animal.1.0", "Plant.1.0"];

impl SynthSpec {
    /// A spec with every knob drawn at random from `seed`.
    pub fn randomized(seed: u64, record_count: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
        let k = rng.gen_range(1..=PACKAGE_NAMES.len());
        let mut names = PACKAGE_NAMES.to_vec();
        names.shuffle(&mut rng);
        SynthSpec {
            record_count,
            seed,
            valid_fraction: GroupFractions {
                ontology_term: rng.gen(),
                value_set: rng.gen(),
                boolean: rng.gen(),
                integer: rng.gen(),
            },
            custom_name_fraction: rng.gen_range(0.0..0.6),
            zero_attribute_fraction: rng.gen_range(0.0..0.1),
            empty_value_fraction: rng.gen_range(0.0..0.2),
            group_presence: rng.gen_range(0.3..0.9),
            repeat_fraction: rng.gen_range(0.0..0.3),
            package_mix: names[..k]
                .iter()
                .map(|n| PackageWeight {
                    name: n.to_string(),
                    weight: rng.gen_range(0.05..1.0),
                })
                .collect(),
            owner_count: rng.gen_range(1..200),
            custom_name_pool: rng.gen_range(1..500),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |what: &str| Err(SynthError::InvalidSpec(what.to_string()));
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        let f = &self.valid_fraction;
        for (name, x) in [
            ("valid_fraction.ontology_term", f.ontology_term),
            ("valid_fraction.value_set", f.value_set),
            ("valid_fraction.boolean", f.boolean),
            ("valid_fraction.integer", f.integer),
            ("custom_name_fraction", self.custom_name_fraction),
            ("zero_attribute_fraction", self.zero_attribute_fraction),
            ("empty_value_fraction", self.empty_value_fraction),
            ("group_presence", self.group_presence),
            ("repeat_fraction", self.repeat_fraction),
        ] {
            if !unit(x) {
                return bad(&format!("{name} must be within [0, 1], got {x}"));
            }
        }
        if self.record_count > u32::MAX as u64 {
            return bad("record_count is too large");
        }
        if self.package_mix.is_empty() {
            return bad("package_mix is empty");
        }
        if self
            .package_mix
            .iter()
            .any(|p| !p.weight.is_finite() || p.weight < 0.0 || p.name.trim().is_empty())
        {
            return bad("package weights must be non-negative and names non-empty");
        }
        if self.package_mix.iter().map(|p| p.weight).sum::<f64>() <= 0.0 {
            return bad("package weights sum to zero");
        }
        if self.owner_count == 0 || self.custom_name_pool == 0 {
            return bad("owner_count and custom_name_pool must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedGroup {
    pub filled_in: u64,
    pub well_specified: u64,
    pub invalid: u64,
    pub records_containing: u64,
    pub records_all_valid: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedCustom {
    pub occurrences: u64,
    pub records_with_custom: u64,
    pub unique_names: u64,
    pub owners_with_custom: u64,
}

/// Ground truth for a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: SynthSpec,
    pub format: CorpusFormat,
    pub dictionary_version: String,
    pub total_records: u64,
    pub total_attributes: u64,
    pub records_with_zero_attributes: u64,
    pub records_with_any_attribute: u64,
    pub groups: BTreeMap<ValidationGroup, PlantedGroup>,
    pub term_values_filled: u64,
    pub unit_values_filled: u64,
    pub pubmed_id_values_filled: u64,
    pub free_text_values_filled: u64,
    pub custom: PlantedCustom,
    pub packages: BTreeMap<String, u64>,
}

/// `<corpus>.manifest.json` next to the corpus.
pub fn manifest_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    corpus.with_file_name(name)
}

fn round_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Split `n` across weights by largest remainder; ties go to the earlier entry.
fn apportion(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Lowercase, trimmed, inner whitespace collapsed.
fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn is_boolean_literal(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "true" | "false")
}

fn is_integer_literal(s: &str) -> bool {
    let t = s.trim();
    let digits = t.strip_prefix(['+', '-']).unwrap_or(t);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && t.parse::<i64>().is_ok()
}

fn case_variant(rng: &mut ChaCha8Rng, s: &str) -> String {
    if !s.is_ascii() {
        return s.to_string();
    }
    match rng.gen_range(0..6) {
        0 => s.to_ascii_uppercase(),
        1 => s.to_ascii_lowercase(),
        2 => s
            .chars()
            .map(|c| if rng.gen() { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
            .collect(),
        _ => s.to_string(),
    }
}

/// A differently written form of an attribute name that still refers to it.
fn name_variant(rng: &mut ChaCha8Rng, s: &str) -> String {
    let s = if rng.gen_bool(0.3) {
        s.replace(' ', "_")
    } else {
        s.to_string()
    };
    case_variant(rng, &s)
}

const EMPTY: u8 = 0;
const VALID: u8 = 1;
const INVALID: u8 = 2;
const UNJUDGED: u8 = 3;

struct Exemplars {
    /// Per spec index: (valid pool, invalid pool). Ontology valid pools hold
    /// label and synonym texts of the bound ontology.
    valid: Vec<Vec<String>>,
    invalid: Vec<Vec<String>>,
    term_texts: Vec<String>,
}

fn build_exemplars(dict: &Dictionary, index: &TermIndex) -> Exemplars {
    let mut valid = Vec::new();
    let mut invalid = Vec::new();
    for spec in dict.specs() {
        let (v, i): (Vec<String>, Vec<String>) = match spec.group {
            ValidationGroup::OntologyTerm => match &spec.binding {
                Some(b) => {
                    let terms: Vec<String> = index
                        .terms(&b.ontology_acronym)
                        .iter()
                        .map(|t| t.0.to_string())
                        .filter(|t| !t.trim().is_empty())
                        .collect();
                    let known: HashSet<String> = terms.iter().map(|t| fold(t)).collect();
                    let mut bad: Vec<String> = BAD_ONTOLOGY.iter().map(|s| s.to_string()).collect();
                    for (k, t) in terms.iter().take(50).enumerate() {
                        bad.push(format!("{t}_{}", k % 10));
                        bad.push(t.replace(' ', "_"));
                    }
                    bad.retain(|s| !s.trim().is_empty() && !known.contains(&fold(s)));
                    bad.sort();
                    bad.dedup();
                    (terms, bad)
                }
                None => (Vec::new(), Vec::new()),
            },
            ValidationGroup::ValueSet => {
                let vs = spec.value_set.as_deref().unwrap_or_default();
                let members: HashSet<String> = vs.iter().map(|m| fold(m)).collect();
                let mut bad: Vec<String> = BAD_VALUE_SET.iter().map(|s| s.to_string()).collect();
                bad.push(format!("not a member of {}", spec.canonical_name));
                bad.retain(|s| !members.contains(&fold(s)));
                (vs.iter().filter(|m| !m.trim().is_empty()).cloned().collect(), bad)
            }
            ValidationGroup::Boolean => (
                vec!["true".into(), "false".into()],
                BAD_BOOLEAN.iter().filter(|s| !is_boolean_literal(s)).map(|s| s.to_string()).collect(),
            ),
            ValidationGroup::Integer => (
                Vec::new(),
                BAD_INTEGER.iter().filter(|s| !is_integer_literal(s)).map(|s| s.to_string()).collect(),
            ),
            _ => (Vec::new(), Vec::new()),
        };
        valid.push(v);
        invalid.push(i);
    }
    let mut term_texts: Vec<String> = index
        .ontologies()
        .flat_map(|o| index.terms(o).into_iter().map(|t| t.3.to_string()))
        .collect();
    term_texts.sort();
    term_texts.dedup();
    Exemplars {
        valid,
        invalid,
        term_texts,
    }
}

/// Whether planted values for this attribute can be judged both ways.
fn usable(spec: &AttributeSpec, idx: usize, ex: &Exemplars) -> bool {
    match spec.group {
        ValidationGroup::OntologyTerm | ValidationGroup::ValueSet => {
            !ex.valid[idx].is_empty() && !ex.invalid[idx].is_empty()
        }
        _ => true,
    }
}

struct Layout {
    package: Vec<u16>,
    owner: Vec<u32>,
    /// Record r owns occurrences `occ_start[r]..occ_start[r + 1]`.
    occ_start: Vec<u32>,
    occ_spec: Vec<u32>,
    occ_state: Vec<u8>,
    custom_start: Vec<u32>,
    custom_ids: Vec<u32>,
}

fn lay_out(
    spec: &SynthSpec,
    dict: &Dictionary,
    ex: &Exemplars,
    rng: &mut ChaCha8Rng,
) -> (Layout, SynthManifestCounts) {
    let n = spec.record_count as usize;
    let specs = dict.specs();
    let by_group: Vec<(ValidationGroup, Vec<u32>)> = ValidationGroup::ALL
        .iter()
        .map(|&g| {
            let ids = specs
                .iter()
                .enumerate()
                .filter(|(i, s)| s.group == g && usable(s, *i, ex))
                .map(|(i, _)| i as u32)
                .collect::<Vec<_>>();
            (g, ids)
        })
        .filter(|(_, ids)| !ids.is_empty())
        .collect();
    let all_usable: Vec<u32> = by_group.iter().flat_map(|(_, ids)| ids.iter().copied()).collect();

    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    let mut zero = vec![false; n];
    for &r in &order[..round_count(spec.zero_attribute_fraction, n)] {
        zero[r as usize] = true;
    }
    if all_usable.is_empty() {
        // Nothing but custom attributes can be planted.
        zero.iter_mut().for_each(|z| *z = true);
    }

    let weights: Vec<f64> = spec.package_mix.iter().map(|p| p.weight).collect();
    let mut package: Vec<u16> = apportion(&weights, n)
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i as u16, c))
        .collect();
    package.shuffle(rng);
    let owner: Vec<u32> = (0..n).map(|_| rng.gen_range(0..spec.owner_count)).collect();

    let mut nonzero: Vec<u32> = (0..n as u32).filter(|&r| !zero[r as usize]).collect();
    if all_usable.is_empty() {
        nonzero.clear();
    }
    nonzero.shuffle(rng);
    let mut custom = vec![false; n];
    for &r in &nonzero[..round_count(spec.custom_name_fraction, nonzero.len())] {
        custom[r as usize] = true;
    }

    let mut occ_start = Vec::with_capacity(n + 1);
    let mut occ_spec = Vec::new();
    let mut custom_start = Vec::with_capacity(n + 1);
    let mut custom_ids = Vec::new();
    for r in 0..n {
        occ_start.push(occ_spec.len() as u32);
        custom_start.push(custom_ids.len() as u32);
        if zero[r] {
            continue;
        }
        let before = occ_spec.len();
        for (_, ids) in &by_group {
            if rng.gen_bool(spec.group_presence) {
                let times = if rng.gen_bool(spec.repeat_fraction) { 2 } else { 1 };
                for _ in 0..times {
                    occ_spec.push(*ids.choose(rng).expect("non-empty group"));
                }
            }
        }
        if custom[r] {
            for _ in 0..rng.gen_range(1..=3) {
                // Skewed toward low ids so some names repeat often.
                let u: f64 = rng.gen();
                custom_ids.push(((u * u) * spec.custom_name_pool as f64) as u32);
            }
        } else if occ_spec.len() == before {
            occ_spec.push(*all_usable.choose(rng).expect("usable attributes"));
        }
    }
    occ_start.push(occ_spec.len() as u32);
    custom_start.push(custom_ids.len() as u32);

    let mut occ_state = vec![UNJUDGED; occ_spec.len()];
    let mut ids: Vec<u32> = (0..occ_spec.len() as u32).collect();
    ids.shuffle(rng);
    for &o in &ids[..round_count(spec.empty_value_fraction, ids.len())] {
        occ_state[o as usize] = EMPTY;
    }
    for g in ValidationGroup::VALIDATED {
        let fraction = spec.valid_fraction.get(g).expect("validated group");
        let mut filled: Vec<u32> = (0..occ_spec.len() as u32)
            .filter(|&o| occ_state[o as usize] != EMPTY && specs[occ_spec[o as usize] as usize].group == g)
            .collect();
        filled.shuffle(rng);
        let k = round_count(fraction, filled.len());
        for (i, &o) in filled.iter().enumerate() {
            occ_state[o as usize] = if i < k { VALID } else { INVALID };
        }
    }

    let layout = Layout {
        package,
        owner,
        occ_start,
        occ_spec,
        occ_state,
        custom_start,
        custom_ids,
    };
    let counts = count_layout(&layout, dict);
    (layout, counts)
}

struct SynthManifestCounts {
    total_attributes: u64,
    zero: u64,
    groups: BTreeMap<ValidationGroup, PlantedGroup>,
    unjudged: BTreeMap<ValidationGroup, u64>,
    custom: PlantedCustom,
    packages: Vec<u64>,
}

fn count_layout(l: &Layout, dict: &Dictionary) -> SynthManifestCounts {
    let specs = dict.specs();
    let n = l.package.len();
    let mut groups: BTreeMap<ValidationGroup, PlantedGroup> =
        ValidationGroup::VALIDATED.iter().map(|&g| (g, PlantedGroup::default())).collect();
    let mut unjudged: BTreeMap<ValidationGroup, u64> = BTreeMap::new();
    let mut custom = PlantedCustom::default();
    let mut names = BTreeSet::new();
    let mut owners = BTreeSet::new();
    let mut zero = 0;
    let mut total_attributes = 0;
    let mut packages = vec![0u64; l.package.iter().map(|&p| p as usize + 1).max().unwrap_or(0)];
    for r in 0..n {
        packages[l.package[r] as usize] += 1;
        let occs = l.occ_start[r] as usize..l.occ_start[r + 1] as usize;
        let customs = &l.custom_ids[l.custom_start[r] as usize..l.custom_start[r + 1] as usize];
        let attrs = occs.len() + customs.len();
        total_attributes += attrs as u64;
        zero += (attrs == 0) as u64;
        if !customs.is_empty() {
            custom.records_with_custom += 1;
            custom.occurrences += customs.len() as u64;
            names.extend(customs.iter().copied());
            owners.insert(l.owner[r]);
        }
        let mut rec: BTreeMap<ValidationGroup, bool> = BTreeMap::new();
        for o in occs {
            let g = specs[l.occ_spec[o] as usize].group;
            match l.occ_state[o] {
                EMPTY => {}
                UNJUDGED => *unjudged.entry(g).or_insert(0) += 1,
                state => {
                    let p = groups.get_mut(&g).expect("validated");
                    p.filled_in += 1;
                    if state == VALID {
                        p.well_specified += 1;
                    } else {
                        p.invalid += 1;
                    }
                    let all = rec.entry(g).or_insert(true);
                    *all &= state == VALID;
                }
            }
        }
        for (g, all) in rec {
            let p = groups.get_mut(&g).expect("validated");
            p.records_containing += 1;
            p.records_all_valid += all as u64;
        }
    }
    custom.unique_names = names.len() as u64;
    custom.owners_with_custom = owners.len() as u64;
    SynthManifestCounts {
        total_attributes,
        zero,
        groups,
        unjudged,
        custom,
        packages,
    }
}

fn render_value(rng: &mut ChaCha8Rng, spec: &AttributeSpec, idx: usize, state: u8, ex: &Exemplars) -> String {
    if state == EMPTY {
        return if rng.gen_bool(0.5) { String::new() } else { " ".repeat(rng.gen_range(1..4)) };
    }
    if state == INVALID {
        return ex.invalid[idx].choose(rng).expect("invalid exemplars").clone();
    }
    match spec.group {
        ValidationGroup::OntologyTerm | ValidationGroup::ValueSet | ValidationGroup::Boolean => {
            let v = ex.valid[idx].choose(rng).expect("valid exemplars");
            let v = case_variant(rng, v);
            if rng.gen_bool(0.1) {
                format!(" {v} ")
            } else {
                v
            }
        }
        ValidationGroup::Integer => {
            let v: i64 = match rng.gen_range(0..4) {
                0 => rng.gen_range(-1000..0),
                1 => rng.gen(),
                _ => rng.gen_range(0..150),
            };
            match rng.gen_range(0..5) {
                0 if v >= 0 => format!("+{v}"),
                1 => format!(" {v} "),
                _ => v.to_string(),
            }
        }
        ValidationGroup::Term => match ex.term_texts.choose(rng) {
            Some(t) => t.clone(),
            None => "unclassified specimen".into(),
        },
        ValidationGroup::Unit => format!("{} {}", rng.gen_range(1..500), ["mg", "years", "cm", "ml"].choose(rng).unwrap()),
        ValidationGroup::PubmedId => rng.gen_range(10_000_000..40_000_000u32).to_string(),
        ValidationGroup::FreeText => {
            let k = rng.gen_range(1..5);
            (0..k).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
        }
    }
}

/// Generate a corpus into `out` and return its manifest.
pub fn generate<W: Write>(
    spec: &SynthSpec,
    dict: &Dictionary,
    index: &TermIndex,
    format: CorpusFormat,
    out: &mut W,
) -> Result<SynthManifest, io::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ex = build_exemplars(dict, index);
    let (layout, counts) = lay_out(spec, dict, &ex, &mut rng);
    let specs = dict.specs();

    // Custom names that cannot be mistaken for dictionary names.
    let custom_name = |id: u32| -> String {
        let mut k = id as u64;
        loop {
            let name = format!("lab_field_{k}");
            if dict.lookup(&name).is_none() {
                return name;
            }
            k += u32::MAX as u64;
        }
    };

    if format == CorpusFormat::BiosampleXml {
        out.write_all(XML_HEADER.as_bytes())?;
    }
    let n = layout.package.len();
    for r in 0..n {
        let mut record = SampleRecord::new(format!("SAMS{:09}", r + 1));
        record.sample_id = (r + 1).to_string();
        record.access = Access::Public;
        record.publication_date = Some("2017-06-01T00:00:00.000".into());
        record.organism_taxid = Some(9606);
        record.organism_name = Some("Homo sapiens".into());
        record.owner_name = Some(format!("Synthetic Lab {}", layout.owner[r]));
        record.package_name = spec.package_mix[layout.package[r] as usize].name.clone();
        record.status = RecordStatus::Live;
        record.status_date = Some("2017-06-01".into());
        for o in layout.occ_start[r] as usize..layout.occ_start[r + 1] as usize {
            let idx = layout.occ_spec[o] as usize;
            let s = &specs[idx];
            let value = render_value(&mut rng, s, idx, layout.occ_state[o], &ex);
            let base = if !s.synonyms.is_empty() && rng.gen_bool(0.3) {
                s.synonyms.choose(&mut rng).unwrap().clone()
            } else {
                s.canonical_name.clone()
            };
            let mut attr = Attribute::new(name_variant(&mut rng, &base), value);
            if rng.gen_bool(0.2) {
                attr = Attribute::new(format!("{} (as submitted)", base), attr.value).harmonized(s.canonical_name.clone());
            }
            record.attributes.push(attr);
        }
        for &id in &layout.custom_ids[layout.custom_start[r] as usize..layout.custom_start[r + 1] as usize] {
            let name = name_variant(&mut rng, &custom_name(id));
            let value = if rng.gen_bool(0.9) { format!("v{}", rng.gen_range(0..1000)) } else { String::new() };
            record.attributes.push(Attribute::new(name, value));
        }
        record.attributes.shuffle(&mut rng);
        match format {
            CorpusFormat::BiosampleXml => write_xml_record(out, &record)?,
            CorpusFormat::Jsonl => write_jsonl_record(out, &record)?,
        }
    }
    if format == CorpusFormat::BiosampleXml {
        out.write_all(XML_FOOTER.as_bytes())?;
    }
    out.flush()?;

    let unjudged = |g| counts.unjudged.get(&g).copied().unwrap_or(0);
    let mut packages = BTreeMap::new();
    for (i, c) in counts.packages.iter().enumerate() {
        if *c > 0 {
            *packages.entry(spec.package_mix[i].name.clone()).or_insert(0) += c;
        }
    }
    Ok(SynthManifest {
        spec: spec.clone(),
        format,
        dictionary_version: dict.version_label().to_string(),
        total_records: n as u64,
        total_attributes: counts.total_attributes,
        records_with_zero_attributes: counts.zero,
        records_with_any_attribute: n as u64 - counts.zero,
        groups: counts.groups,
        term_values_filled: unjudged(ValidationGroup::Term),
        unit_values_filled: unjudged(ValidationGroup::Unit),
        pubmed_id_values_filled: unjudged(ValidationGroup::PubmedId),
        free_text_values_filled: unjudged(ValidationGroup::FreeText),
        custom: counts.custom,
        packages,
    })
}

/// Generate a corpus file plus its manifest (see [`manifest_path`]).
pub fn write_corpus(
    spec: &SynthSpec,
    dict: &Dictionary,
    index: &TermIndex,
    format: CorpusFormat,
    path: &Path,
) -> Result<SynthManifest, SynthError> {
    spec.validate()?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::with_capacity(1 << 16, file);
    let manifest = generate(spec, dict, index, format, &mut out).map_err(io_err(path))?;
    let mpath = manifest_path(path);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&mpath, text).map_err(io_err(&mpath))?;
    Ok(manifest)
}
