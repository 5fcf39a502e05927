//! Per-attribute classification and validity verdicts.
//!
//! Each attribute is classified against the dictionary (dictionary name vs
//! custom name) and then judged by the rule of its validation group:
//!
//! - ontology term: the value is an exact term (label or synonym) in the
//!   bound ontology;
//! - value set: the value is a member of the attribute's value set;
//! - boolean: `true` or `false`, any capitalization;
//! - integer: an optionally signed run of decimal digits within `i64`.
//!
//! Term-group values get ranked candidate matches but no verdict; unit,
//! PubMed-ID and free-text attributes are only counted.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dictionary::{AttributeSpec, Dictionary, ValidationGroup};
use crate::ingest::{Attribute, SampleRecord};
use crate::normalize::{normalize_attribute_name, normalize_value};
use crate::resolve::{ResolveError, TermHit, TermResolver};

/// Maximum candidates kept for term-group values.
pub const TERM_CANDIDATE_LIMIT: usize = 5;

pub const DEFAULT_NULL_TOKENS: [&str; 7] = ["", "-", "--", "n/a", "na", "null", "none"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Case-insensitive, whitespace-collapsed.
    #[default]
    Lenient,
    /// Byte-exact.
    Strict,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Lenient => "lenient",
            MatchMode::Strict => "strict",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchPolicy {
    pub value_set: MatchMode,
    pub ontology: MatchMode,
    pub null_tokens: Vec<String>,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy {
            value_set: MatchMode::Lenient,
            ontology: MatchMode::Lenient,
            null_tokens: DEFAULT_NULL_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl MatchPolicy {
    fn is_null_token(&self, value: &str) -> bool {
        let v = value.trim().to_lowercase();
        self.null_tokens.iter().any(|t| t.trim().to_lowercase() == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellSpecified {
    Valid,
    Invalid,
    NotAssessed,
}

impl fmt::Display for WellSpecified {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WellSpecified::Valid => "valid",
            WellSpecified::Invalid => "invalid",
            WellSpecified::NotAssessed => "not_assessed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Empty,
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

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Empty => "empty",
            Reason::BooleanLiteral => "boolean_literal",
            Reason::NotBoolean => "not_boolean",
            Reason::IntegerLiteral => "integer_literal",
            Reason::NotInteger => "not_integer",
            Reason::IntegerOutOfRange => "integer_out_of_range",
            Reason::ValueSetMember => "value_set_member",
            Reason::NotInValueSet => "not_in_value_set",
            Reason::OntologyMatch => "ontology_match",
            Reason::NoOntologyMatch => "no_ontology_match",
            Reason::ResolverUnavailable => "resolver_unavailable",
            Reason::TermCandidates => "term_candidates",
            Reason::NoTermCandidates => "no_term_candidates",
            Reason::CountedOnly => "counted_only",
            Reason::CustomName => "custom_name",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub group: ValidationGroup,
    pub filled_in: bool,
    pub well_specified: WellSpecified,
    pub reason: Reason,
    /// The value is a null-like token such as `n/a` or `--`.
    pub null_like: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_term: Option<TermHit>,
}

impl Verdict {
    fn new(group: ValidationGroup, filled_in: bool, well_specified: WellSpecified, reason: Reason) -> Self {
        Verdict {
            group,
            filled_in,
            well_specified,
            reason,
            null_like: false,
            matched_term: None,
        }
    }

    fn empty(group: ValidationGroup) -> Self {
        Self::new(group, false, WellSpecified::NotAssessed, Reason::Empty)
    }

    fn judged(group: ValidationGroup, ok: bool, yes: Reason, no: Reason) -> Self {
        if ok {
            Self::new(group, true, WellSpecified::Valid, yes)
        } else {
            Self::new(group, true, WellSpecified::Invalid, no)
        }
    }

    /// Reason text including the null-like flag, e.g. `null_like;not_boolean`.
    pub fn reason_text(&self) -> String {
        if self.null_like {
            format!("null_like;{}", self.reason)
        } else {
            self.reason.to_string()
        }
    }

    pub fn is_resolver_unavailable(&self) -> bool {
        self.reason == Reason::ResolverUnavailable
    }

    /// Structural invariants every verdict must satisfy.
    pub fn is_well_formed(&self) -> bool {
        let judged = self.well_specified != WellSpecified::NotAssessed;
        (!judged || (self.filled_in && self.group.is_validated()))
            && (self.group.is_validated() || !judged)
            && (self.matched_term.is_none()
                || matches!(self.group, ValidationGroup::OntologyTerm | ValidationGroup::Term))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification<'d> {
    pub in_dictionary: bool,
    pub spec: Option<&'d AttributeSpec>,
    pub normalized_name: String,
}

#[derive(Debug, Clone)]
pub struct AttributeReport<'d> {
    pub attribute: Attribute,
    pub classification: Classification<'d>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct RecordReport<'d> {
    pub accession: String,
    pub package_name: String,
    pub owner_name: Option<String>,
    pub per_attribute: Vec<AttributeReport<'d>>,
    pub custom_names: Vec<String>,
}

/// Non-empty after trimming.
pub fn is_filled_in(value: &str) -> bool {
    !value.trim().is_empty()
}

/// Filled in, but one of the policy's null-like tokens. Members of the
/// attribute's own value set are never null-like.
pub fn is_null_like(value: &str, policy: &MatchPolicy, spec: Option<&AttributeSpec>) -> bool {
    if !is_filled_in(value) || !policy.is_null_token(value) {
        return false;
    }
    !spec.is_some_and(|s| s.value_set_contains_normalized(&normalize_value(value)))
}

/// Harmonized name when present, otherwise the raw name.
pub fn classify_attribute<'d>(dict: &'d Dictionary, attr: &Attribute) -> Classification<'d> {
    let name = attr.harmonized_name.as_deref().unwrap_or(&attr.raw_name);
    let normalized_name = normalize_attribute_name(name);
    let spec = dict.lookup_normalized(&normalized_name);
    Classification {
        in_dictionary: spec.is_some(),
        spec,
        normalized_name,
    }
}

pub fn validate_boolean(value: &str) -> Verdict {
    let v = value.trim();
    if v.is_empty() {
        return Verdict::empty(ValidationGroup::Boolean);
    }
    let ok = v.eq_ignore_ascii_case("true") || v.eq_ignore_ascii_case("false");
    Verdict::judged(ValidationGroup::Boolean, ok, Reason::BooleanLiteral, Reason::NotBoolean)
}

pub fn validate_integer(value: &str) -> Verdict {
    let v = value.trim();
    if v.is_empty() {
        return Verdict::empty(ValidationGroup::Integer);
    }
    let digits = v.strip_prefix(['+', '-']).unwrap_or(v);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Verdict::judged(ValidationGroup::Integer, false, Reason::IntegerLiteral, Reason::NotInteger);
    }
    let fits = v.parse::<i64>().is_ok();
    Verdict::judged(ValidationGroup::Integer, fits, Reason::IntegerLiteral, Reason::IntegerOutOfRange)
}

pub fn validate_value_set(value: &str, spec: &AttributeSpec, mode: MatchMode) -> Verdict {
    if !is_filled_in(value) {
        return Verdict::empty(ValidationGroup::ValueSet);
    }
    let ok = match mode {
        MatchMode::Lenient => spec.value_set_contains_normalized(&normalize_value(value)),
        MatchMode::Strict => spec.value_set_contains_exact(value),
    };
    Verdict::judged(ValidationGroup::ValueSet, ok, Reason::ValueSetMember, Reason::NotInValueSet)
}

pub fn validate_ontology_term(
    value: &str,
    spec: &AttributeSpec,
    resolver: &dyn TermResolver,
    mode: MatchMode,
) -> Verdict {
    let group = ValidationGroup::OntologyTerm;
    if !is_filled_in(value) {
        return Verdict::empty(group);
    }
    let Some(binding) = &spec.binding else {
        return Verdict::judged(group, false, Reason::OntologyMatch, Reason::NoOntologyMatch);
    };
    match resolver.resolve_exact(value, &binding.ontology_acronym) {
        Ok(Some(hit)) if mode == MatchMode::Lenient || hit.matched_text == value => {
            let mut v = Verdict::judged(group, true, Reason::OntologyMatch, Reason::NoOntologyMatch);
            v.matched_term = Some(hit);
            v
        }
        Ok(_) => Verdict::judged(group, false, Reason::OntologyMatch, Reason::NoOntologyMatch),
        Err(e) => {
            log::debug!("ontology lookup for {value:?} not assessed: {e}");
            Verdict::new(group, true, WellSpecified::NotAssessed, Reason::ResolverUnavailable)
        }
    }
}

/// Ranked candidates for a term-group value; never a verdict.
pub fn match_term_any(value: &str, resolver: &dyn TermResolver) -> Result<Vec<TermHit>, ResolveError> {
    if !is_filled_in(value) {
        return Ok(Vec::new());
    }
    resolver.search_any(value, TERM_CANDIDATE_LIMIT)
}

fn validate_term(value: &str, resolver: &dyn TermResolver) -> Verdict {
    let group = ValidationGroup::Term;
    if !is_filled_in(value) {
        return Verdict::empty(group);
    }
    match match_term_any(value, resolver) {
        Ok(hits) => {
            let reason = if hits.is_empty() {
                Reason::NoTermCandidates
            } else {
                Reason::TermCandidates
            };
            let mut v = Verdict::new(group, true, WellSpecified::NotAssessed, reason);
            v.matched_term = hits.into_iter().next();
            v
        }
        Err(_) => Verdict::new(group, true, WellSpecified::NotAssessed, Reason::ResolverUnavailable),
    }
}

/// Verdict for one attribute given its classification.
pub fn validate_attribute(
    attr: &Attribute,
    classification: &Classification<'_>,
    resolver: &dyn TermResolver,
    policy: &MatchPolicy,
) -> Verdict {
    let value = attr.value.as_str();
    let mut verdict = match classification.spec {
        None => {
            let filled = is_filled_in(value);
            let reason = if filled { Reason::CustomName } else { Reason::Empty };
            Verdict::new(ValidationGroup::FreeText, filled, WellSpecified::NotAssessed, reason)
        }
        Some(spec) => match spec.group {
            ValidationGroup::Boolean => validate_boolean(value),
            ValidationGroup::Integer => validate_integer(value),
            ValidationGroup::ValueSet => validate_value_set(value, spec, policy.value_set),
            ValidationGroup::OntologyTerm => validate_ontology_term(value, spec, resolver, policy.ontology),
            ValidationGroup::Term => validate_term(value, resolver),
            g @ (ValidationGroup::Unit | ValidationGroup::PubmedId | ValidationGroup::FreeText) => {
                if is_filled_in(value) {
                    Verdict::new(g, true, WellSpecified::NotAssessed, Reason::CountedOnly)
                } else {
                    Verdict::empty(g)
                }
            }
        },
    };
    verdict.null_like = is_null_like(value, policy, classification.spec);
    verdict
}

/// Classify and judge every attribute occurrence of a record.
pub fn validate_record<'d>(
    record: &SampleRecord,
    dict: &'d Dictionary,
    resolver: &dyn TermResolver,
    policy: &MatchPolicy,
) -> RecordReport<'d> {
    let mut custom_names = Vec::new();
    let per_attribute = record
        .attributes
        .iter()
        .map(|attr| {
            let classification = classify_attribute(dict, attr);
            if !classification.in_dictionary {
                custom_names.push(classification.normalized_name.clone());
            }
            let verdict = validate_attribute(attr, &classification, resolver, policy);
            AttributeReport {
                attribute: attr.clone(),
                classification,
                verdict,
            }
        })
        .collect();
    RecordReport {
        accession: record.accession.clone(),
        package_name: record.package_name.clone(),
        owner_name: record.owner_name.clone(),
        per_attribute,
        custom_names,
    }
}
