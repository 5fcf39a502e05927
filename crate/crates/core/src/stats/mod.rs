//! Mergeable audit counters and the finalized report.
//!
//! An [`AuditTally`] is built per worker with [`accumulate`], combined with
//! [`merge`] (a commutative monoid with [`new_tally`] as identity) and turned
//! into an [`AuditSummary`] by [`finalize`].

mod render;
mod sketch;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, ValidationGroup};
use crate::resolve::ResolverMode;
use crate::validate::{MatchMode, MatchPolicy, Reason, RecordReport, WellSpecified};

pub use render::{render_summary, ReportFormat};
pub use sketch::HyperLogLog;

pub const REPORT_VERSION: u32 = 1;

/// Distinct custom names tracked exactly before switching to a sketch.
pub const DEFAULT_CENSUS_CAP: usize = 1_000_000;

const TOP_CUSTOM_NAMES: usize = 10;

/// Round-half-away-from-zero of `100 * num / den`; `None` when `den == 0`.
pub fn percent_rounded(num: u64, den: u64) -> Option<u64> {
    scaled_ratio(num, den, 100)
}

/// `100 * num / den` rounded half away from zero to one decimal.
pub fn percent_one_decimal(num: u64, den: u64) -> Option<f64> {
    scaled_ratio(num, den, 1000).map(|tenths| tenths as f64 / 10.0)
}

fn scaled_ratio(num: u64, den: u64, scale: u128) -> Option<u64> {
    if den == 0 {
        return None;
    }
    let (n, d) = (num as u128, den as u128);
    Some(((2 * scale * n + d) / (2 * d)) as u64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupTally {
    pub filled_in: u64,
    pub well_specified: u64,
    pub invalid: u64,
    /// Filled values the resolver could not assess.
    pub not_assessed_resolver: u64,
    pub records_containing: u64,
    pub records_all_valid: u64,
    pub records_any_valid: u64,
}

impl GroupTally {
    /// Denominator of the well-specified percent.
    pub fn assessed(&self) -> u64 {
        self.filled_in - self.not_assessed_resolver
    }

    pub fn is_conserved(&self) -> bool {
        self.well_specified + self.invalid + self.not_assessed_resolver == self.filled_in
            && self.records_all_valid <= self.records_any_valid
            && self.records_any_valid <= self.records_containing
    }

    fn add(&mut self, o: &GroupTally) {
        self.filled_in += o.filled_in;
        self.well_specified += o.well_specified;
        self.invalid += o.invalid;
        self.not_assessed_resolver += o.not_assessed_resolver;
        self.records_containing += o.records_containing;
        self.records_all_valid += o.records_all_valid;
        self.records_any_valid += o.records_any_valid;
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CensusState {
    Exact(HashMap<String, u64>),
    Approximate(HyperLogLog),
}

/// Multiset of custom attribute names, exact up to a distinct-name cap.
#[derive(Debug, Clone, PartialEq)]
pub struct NameCensus {
    /// `None` leaves the cap to whichever tally this one is merged with,
    /// and means [`DEFAULT_CENSUS_CAP`] while accumulating.
    cap: Option<usize>,
    state: CensusState,
}

impl Default for NameCensus {
    fn default() -> Self {
        NameCensus {
            cap: None,
            state: CensusState::Exact(HashMap::new()),
        }
    }
}

impl NameCensus {
    pub fn with_cap(cap: usize) -> Self {
        NameCensus {
            cap: Some(cap),
            ..Self::default()
        }
    }

    pub fn cap(&self) -> usize {
        self.cap.unwrap_or(DEFAULT_CENSUS_CAP)
    }

    pub fn is_approximate(&self) -> bool {
        matches!(self.state, CensusState::Approximate(_))
    }

    /// Distinct names; an estimate once approximate.
    pub fn distinct(&self) -> u64 {
        match &self.state {
            CensusState::Exact(m) => m.len() as u64,
            CensusState::Approximate(h) => h.estimate(),
        }
    }

    /// Occurrences of one name, when still exact.
    pub fn count(&self, name: &str) -> Option<u64> {
        match &self.state {
            CensusState::Exact(m) => Some(m.get(name).copied().unwrap_or(0)),
            CensusState::Approximate(_) => None,
        }
    }

    /// Most frequent names, by count then name. Empty once approximate.
    pub fn top(&self, n: usize) -> Vec<(String, u64)> {
        let CensusState::Exact(m) = &self.state else {
            return Vec::new();
        };
        let mut v: Vec<_> = m.iter().map(|(k, &c)| (k.clone(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(n);
        v
    }

    pub fn insert(&mut self, name: &str) {
        match &mut self.state {
            CensusState::Exact(m) => {
                *m.entry(name.to_string()).or_insert(0) += 1;
                self.spill_if_needed();
            }
            CensusState::Approximate(h) => h.insert(name),
        }
    }

    fn spill_if_needed(&mut self) {
        let cap = self.cap();
        if let CensusState::Exact(m) = &self.state {
            if m.len() > cap {
                log::warn!("custom-name census exceeded {cap} distinct names; switching to an estimate");
                let mut h = HyperLogLog::new();
                m.keys().for_each(|k| h.insert(k));
                self.state = CensusState::Approximate(h);
            }
        }
    }

    pub fn merge(&mut self, other: &NameCensus) {
        self.cap = match (self.cap, other.cap) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let state = std::mem::replace(&mut self.state, CensusState::Exact(HashMap::new()));
        self.state = match (state, &other.state) {
            (CensusState::Exact(mut a), CensusState::Exact(b)) => {
                for (k, c) in b {
                    *a.entry(k.clone()).or_insert(0) += c;
                }
                CensusState::Exact(a)
            }
            (CensusState::Approximate(mut h), CensusState::Exact(b)) => {
                b.keys().for_each(|k| h.insert(k));
                CensusState::Approximate(h)
            }
            (CensusState::Exact(a), CensusState::Approximate(h)) => {
                let mut h = h.clone();
                a.keys().for_each(|k| h.insert(k));
                CensusState::Approximate(h)
            }
            (CensusState::Approximate(mut h), CensusState::Approximate(o)) => {
                h.merge(o);
                CensusState::Approximate(h)
            }
        };
        self.spill_if_needed();
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TallyError {
    #[error("cannot merge tallies from dictionary versions {left:?} and {right:?}")]
    VersionMismatch { left: String, right: String },
}

/// Counters accumulated over record reports.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditTally {
    /// `None` merges with any version.
    pub dictionary_version: Option<String>,
    pub total_records: u64,
    pub total_attributes: u64,
    pub records_with_zero_attributes: u64,
    pub records_with_any_attribute: u64,
    /// Records skipped because they could not be parsed.
    pub parse_errors: u64,
    /// Indexed like [`ValidationGroup::VALIDATED`].
    pub groups: [GroupTally; 4],
    pub term_group_attempted: u64,
    pub term_group_with_candidates: u64,
    pub unit_filled: u64,
    pub pubmed_id_filled: u64,
    pub free_text_filled: u64,
    pub null_like_values: u64,
    pub custom_attribute_occurrences: u64,
    pub records_with_custom: u64,
    pub custom_names: NameCensus,
    /// Owners that contributed at least one custom attribute.
    pub owner_census: BTreeSet<String>,
    pub package_histogram: BTreeMap<String, u64>,
}

/// All-zero tally with no dictionary version; the identity for [`merge`].
pub fn new_tally() -> AuditTally {
    AuditTally::default()
}

/// Fold one record report into a tally.
pub fn accumulate(tally: &mut AuditTally, report: &RecordReport<'_>) {
    tally.accumulate(report)
}

/// Combine two tallies. Fails if they come from different dictionary versions.
pub fn merge(a: AuditTally, b: AuditTally) -> Result<AuditTally, TallyError> {
    let mut a = a;
    a.merge_from(&b)?;
    Ok(a)
}

/// Finalize with default settings.
pub fn finalize(tally: &AuditTally) -> AuditSummary {
    AuditSummary::from_tally(tally, &ReportSettings::default())
}

fn group_index(g: ValidationGroup) -> Option<usize> {
    ValidationGroup::VALIDATED.iter().position(|&v| v == g)
}

impl AuditTally {
    pub fn for_dictionary(dict: &Dictionary) -> Self {
        AuditTally {
            dictionary_version: Some(dict.version_label().to_string()),
            ..Self::default()
        }
    }

    pub fn with_census_cap(mut self, cap: usize) -> Self {
        self.custom_names = NameCensus::with_cap(cap);
        self
    }

    pub fn group(&self, g: ValidationGroup) -> Option<&GroupTally> {
        group_index(g).map(|i| &self.groups[i])
    }

    pub fn group_mut(&mut self, g: ValidationGroup) -> Option<&mut GroupTally> {
        group_index(g).map(|i| &mut self.groups[i])
    }

    pub fn is_conserved(&self) -> bool {
        self.groups.iter().all(GroupTally::is_conserved)
            && self.records_with_zero_attributes + self.records_with_any_attribute == self.total_records
            && self.package_histogram.values().sum::<u64>() == self.total_records
    }

    pub fn accumulate(&mut self, report: &RecordReport<'_>) {
        self.total_records += 1;
        *self.package_histogram.entry(report.package_name.clone()).or_insert(0) += 1;
        let n = report.per_attribute.len() as u64;
        self.total_attributes += n;
        if n == 0 {
            self.records_with_zero_attributes += 1;
        } else {
            self.records_with_any_attribute += 1;
        }

        // Per validated group: (seen, all valid, any valid) over assessed values.
        let mut record = [(false, true, false); 4];
        let mut has_custom = false;
        for a in &report.per_attribute {
            let v = &a.verdict;
            self.null_like_values += v.null_like as u64;
            if !a.classification.in_dictionary {
                has_custom = true;
                self.custom_attribute_occurrences += 1;
                self.custom_names.insert(&a.classification.normalized_name);
                continue;
            }
            if !v.filled_in {
                continue;
            }
            match v.group {
                ValidationGroup::Term => {
                    self.term_group_attempted += 1;
                    self.term_group_with_candidates += (v.reason == Reason::TermCandidates) as u64;
                }
                ValidationGroup::Unit => self.unit_filled += 1,
                ValidationGroup::PubmedId => self.pubmed_id_filled += 1,
                ValidationGroup::FreeText => self.free_text_filled += 1,
                g => {
                    let i = group_index(g).expect("validated group");
                    let t = &mut self.groups[i];
                    t.filled_in += 1;
                    match v.well_specified {
                        WellSpecified::Valid => t.well_specified += 1,
                        WellSpecified::Invalid => t.invalid += 1,
                        WellSpecified::NotAssessed => {
                            t.not_assessed_resolver += 1;
                            continue;
                        }
                    }
                    let valid = v.well_specified == WellSpecified::Valid;
                    let r = &mut record[i];
                    r.0 = true;
                    r.1 &= valid;
                    r.2 |= valid;
                }
            }
        }
        for (t, (seen, all, any)) in self.groups.iter_mut().zip(record) {
            if seen {
                t.records_containing += 1;
                t.records_all_valid += all as u64;
                t.records_any_valid += any as u64;
            }
        }
        if has_custom {
            self.records_with_custom += 1;
            if let Some(owner) = report.owner_name.as_deref().map(str::trim).filter(|o| !o.is_empty()) {
                self.owner_census.insert(owner.to_string());
            }
        }
    }

    pub fn merge_from(&mut self, o: &AuditTally) -> Result<(), TallyError> {
        self.dictionary_version = match (self.dictionary_version.take(), &o.dictionary_version) {
            (Some(a), Some(b)) if a != *b => {
                let err = TallyError::VersionMismatch {
                    left: a.clone(),
                    right: b.clone(),
                };
                self.dictionary_version = Some(a);
                return Err(err);
            }
            (a, b) => a.or_else(|| b.clone()),
        };
        self.total_records += o.total_records;
        self.total_attributes += o.total_attributes;
        self.records_with_zero_attributes += o.records_with_zero_attributes;
        self.records_with_any_attribute += o.records_with_any_attribute;
        self.parse_errors += o.parse_errors;
        for (a, b) in self.groups.iter_mut().zip(&o.groups) {
            a.add(b);
        }
        self.term_group_attempted += o.term_group_attempted;
        self.term_group_with_candidates += o.term_group_with_candidates;
        self.unit_filled += o.unit_filled;
        self.pubmed_id_filled += o.pubmed_id_filled;
        self.free_text_filled += o.free_text_filled;
        self.null_like_values += o.null_like_values;
        self.custom_attribute_occurrences += o.custom_attribute_occurrences;
        self.records_with_custom += o.records_with_custom;
        self.custom_names.merge(&o.custom_names);
        self.owner_census.extend(o.owner_census.iter().cloned());
        for (k, v) in &o.package_histogram {
            *self.package_histogram.entry(k.clone()).or_insert(0) += v;
        }
        Ok(())
    }
}

/// How record-level validity is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RecordRule {
    /// A record is valid for a group iff every filled value is valid.
    #[default]
    AllValid,
    /// Also report records with at least one valid value.
    AllAndAny,
}

/// Run settings echoed into the report's provenance block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportSettings {
    pub policy: MatchPolicy,
    pub resolver_mode: ResolverMode,
    pub record_rule: RecordRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub total_records: u64,
    pub total_attributes: u64,
    pub records_with_zero_attributes: u64,
    pub zero_attribute_percent: Option<f64>,
    pub records_with_any_attribute: u64,
    pub any_attribute_percent: Option<f64>,
    pub parse_errors: u64,
    pub mean_attributes_per_record: Option<f64>,
    pub mean_attributes_per_record_rounded: Option<u64>,
    pub null_like_values: u64,
    pub term_values_filled: u64,
    pub term_values_with_candidates: u64,
    pub unit_values_filled: u64,
    pub pubmed_id_values_filled: u64,
    pub free_text_values_filled: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: ValidationGroup,
    pub filled_in: u64,
    pub well_specified: u64,
    pub invalid: u64,
    pub not_assessed: u64,
    pub percent: Option<f64>,
    pub percent_rounded: Option<u64>,
    pub records_containing: u64,
    pub records_all_valid: u64,
    pub record_percent: Option<f64>,
    pub record_percent_rounded: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records_any_valid: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_any_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameCount {
    pub name: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusSummary {
    pub unique_custom_names: u64,
    /// Set when the distinct count is an estimate.
    pub approximate: bool,
    pub custom_attribute_occurrences: u64,
    pub custom_occurrence_percent: Option<f64>,
    pub records_with_custom: u64,
    pub records_with_custom_percent: Option<f64>,
    pub owners_with_custom: u64,
    pub top_custom_names: Vec<NameCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageShare {
    pub name: String,
    pub count: u64,
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dictionary_version: Option<String>,
    pub attribute_name_normalization: String,
    pub value_normalization: String,
    pub value_set_policy: MatchMode,
    pub ontology_policy: MatchMode,
    pub null_tokens: Vec<String>,
    pub resolver_mode: ResolverMode,
    pub record_rule: RecordRule,
    pub census_cap: u64,
}

/// The finalized audit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub report_version: u32,
    pub corpus: CorpusSummary,
    pub groups: Vec<GroupSummary>,
    pub census: CensusSummary,
    pub packages: Vec<PackageShare>,
    pub provenance: Provenance,
}

impl AuditSummary {
    pub fn from_tally(t: &AuditTally, settings: &ReportSettings) -> Self {
        let any = settings.record_rule == RecordRule::AllAndAny;
        let groups = ValidationGroup::VALIDATED
            .iter()
            .zip(&t.groups)
            .map(|(&group, g)| GroupSummary {
                group,
                filled_in: g.filled_in,
                well_specified: g.well_specified,
                invalid: g.invalid,
                not_assessed: g.not_assessed_resolver,
                percent: percent_one_decimal(g.well_specified, g.assessed()),
                percent_rounded: percent_rounded(g.well_specified, g.assessed()),
                records_containing: g.records_containing,
                records_all_valid: g.records_all_valid,
                record_percent: percent_one_decimal(g.records_all_valid, g.records_containing),
                record_percent_rounded: percent_rounded(g.records_all_valid, g.records_containing),
                records_any_valid: any.then_some(g.records_any_valid),
                record_any_percent: if any {
                    percent_one_decimal(g.records_any_valid, g.records_containing)
                } else {
                    None
                },
            })
            .collect();

        let mut packages: Vec<PackageShare> = t
            .package_histogram
            .iter()
            .map(|(name, &count)| PackageShare {
                name: name.clone(),
                count,
                percent: percent_one_decimal(count, t.total_records),
            })
            .collect();
        packages.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));

        AuditSummary {
            report_version: REPORT_VERSION,
            corpus: CorpusSummary {
                total_records: t.total_records,
                total_attributes: t.total_attributes,
                records_with_zero_attributes: t.records_with_zero_attributes,
                zero_attribute_percent: percent_one_decimal(t.records_with_zero_attributes, t.total_records),
                records_with_any_attribute: t.records_with_any_attribute,
                any_attribute_percent: percent_one_decimal(t.records_with_any_attribute, t.total_records),
                parse_errors: t.parse_errors,
                mean_attributes_per_record: scaled_ratio(t.total_attributes, t.total_records, 10)
                    .map(|tenths| tenths as f64 / 10.0),
                mean_attributes_per_record_rounded: scaled_ratio(t.total_attributes, t.total_records, 1),
                null_like_values: t.null_like_values,
                term_values_filled: t.term_group_attempted,
                term_values_with_candidates: t.term_group_with_candidates,
                unit_values_filled: t.unit_filled,
                pubmed_id_values_filled: t.pubmed_id_filled,
                free_text_values_filled: t.free_text_filled,
            },
            groups,
            census: CensusSummary {
                unique_custom_names: t.custom_names.distinct(),
                approximate: t.custom_names.is_approximate(),
                custom_attribute_occurrences: t.custom_attribute_occurrences,
                custom_occurrence_percent: percent_one_decimal(t.custom_attribute_occurrences, t.total_attributes),
                records_with_custom: t.records_with_custom,
                records_with_custom_percent: percent_one_decimal(t.records_with_custom, t.total_records),
                owners_with_custom: t.owner_census.len() as u64,
                top_custom_names: t
                    .custom_names
                    .top(TOP_CUSTOM_NAMES)
                    .into_iter()
                    .map(|(name, count)| NameCount { name, count })
                    .collect(),
            },
            packages,
            provenance: Provenance {
                dictionary_version: t.dictionary_version.clone(),
                attribute_name_normalization: "trim; lowercase; underscores as spaces; collapse whitespace".into(),
                value_normalization: "trim; case-fold; collapse whitespace; underscores kept".into(),
                value_set_policy: settings.policy.value_set,
                ontology_policy: settings.policy.ontology,
                null_tokens: settings.policy.null_tokens.clone(),
                resolver_mode: settings.resolver_mode,
                record_rule: settings.record_rule,
                census_cap: t.custom_names.cap() as u64,
            },
        }
    }

    pub fn group(&self, g: ValidationGroup) -> Option<&GroupSummary> {
        self.groups.iter().find(|s| s.group == g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Dictionary;
    use crate::ingest::{Attribute, SampleRecord};
    use crate::resolve::TermIndex;
    use crate::validate::validate_record;
    use proptest::prelude::*;

    fn dict() -> Dictionary {
        Dictionary::from_json(
            r#"{"version":"t1","attributes":[
            {"name":"sex","group":"value_set","value_set":["male","female"]},
            {"name":"smoker","group":"boolean"},
            {"name":"age","group":"integer"},
            {"name":"disease","group":"ontology_term","ontology":"DOID"}]}"#,
        )
        .unwrap()
    }

    fn record(attrs: &[(&str, &str)]) -> SampleRecord {
        let mut r = SampleRecord::new("SAMN1");
        r.attributes = attrs.iter().map(|(n, v)| Attribute::new(*n, *v)).collect();
        r
    }

    fn tally_of(records: &[SampleRecord]) -> AuditTally {
        let d = dict();
        let idx = TermIndex::default();
        let mut t = AuditTally::for_dictionary(&d);
        for r in records {
            t.accumulate(&validate_record(r, &d, &idx, &MatchPolicy::default()));
        }
        t
    }

    fn gt(filled: u64, ws: u64, containing: u64, all: u64) -> (u64, u64, u64, u64) {
        (filled, ws, containing, all)
    }

    fn view(t: &AuditTally, g: ValidationGroup) -> (u64, u64, u64, u64) {
        let g = t.group(g).unwrap();
        (g.filled_in, g.well_specified, g.records_containing, g.records_all_valid)
    }

    #[test]
    fn rounding() {
        assert_eq!(percent_rounded(1, 2), Some(50));
        assert_eq!(percent_rounded(1, 200), Some(1));
        assert_eq!(percent_rounded(1, 201), Some(0));
        assert_eq!(percent_rounded(0, 0), None);
        assert_eq!(percent_one_decimal(1, 3), Some(33.3));
        assert_eq!(percent_one_decimal(2, 3), Some(66.7));
        assert_eq!(percent_one_decimal(u64::MAX, u64::MAX), Some(100.0));
        assert_eq!(percent_one_decimal(197_123, 6_615_347), Some(3.0));
    }

    #[test]
    fn single_report_counts() {
        let t = tally_of(&[record(&[("sex", "castrated horse"), ("smoker", "never"), ("age", "40")])]);
        assert_eq!(view(&t, ValidationGroup::ValueSet), gt(1, 0, 1, 0));
        assert_eq!(view(&t, ValidationGroup::Boolean), gt(1, 0, 1, 0));
        assert_eq!(view(&t, ValidationGroup::Integer), gt(1, 1, 1, 1));
        assert_eq!(view(&t, ValidationGroup::OntologyTerm), gt(0, 0, 0, 0));
    }

    #[test]
    fn repeated_attribute_counts_each_occurrence() {
        let t = tally_of(&[record(&[("smoker", "true"), ("smoker", "never smoker")])]);
        assert_eq!(view(&t, ValidationGroup::Boolean), gt(2, 1, 1, 0));
        assert_eq!(t.group(ValidationGroup::Boolean).unwrap().records_any_valid, 1);
        assert_eq!(t.total_attributes, 2);
    }

    #[test]
    fn empty_record() {
        let t = tally_of(&[record(&[])]);
        let mut expected = AuditTally::for_dictionary(&dict());
        expected.total_records = 1;
        expected.records_with_zero_attributes = 1;
        expected.package_histogram.insert("Generic".into(), 1);
        assert_eq!(t, expected);
    }

    #[test]
    fn custom_census_and_owners() {
        let mut a = record(&[("my_lab_batch_id", "1"), ("My Lab Batch ID", "2"), ("sex", "male")]);
        a.owner_name = Some("Lab A".into());
        let mut b = record(&[("extraction kit", "")]);
        b.owner_name = Some("Lab B".into());
        let t = tally_of(&[a, b, record(&[("sex", "")])]);
        assert_eq!(t.custom_attribute_occurrences, 3);
        assert_eq!(t.records_with_custom, 2);
        assert_eq!(t.custom_names.distinct(), 2);
        assert_eq!(t.custom_names.count("my lab batch id"), Some(2));
        assert_eq!(t.owner_census.len(), 2);
        let s = finalize(&t);
        assert_eq!(s.census.top_custom_names[0], NameCount { name: "my lab batch id".into(), count: 2 });
        assert_eq!(view(&t, ValidationGroup::ValueSet), gt(1, 1, 1, 1));
    }

    #[test]
    fn empty_summary_has_absent_percents() {
        let s = finalize(&new_tally());
        assert!(s.groups.iter().all(|g| g.percent.is_none() && g.record_percent.is_none()));
        assert_eq!(s.corpus.mean_attributes_per_record, None);
        assert!(s.packages.is_empty());
        assert_eq!(s.groups.len(), 4);
    }

    #[test]
    fn version_mismatch() {
        let mut a = new_tally();
        a.dictionary_version = Some("1".into());
        let mut b = new_tally();
        b.dictionary_version = Some("2".into());
        assert!(matches!(merge(a.clone(), b), Err(TallyError::VersionMismatch { .. })));
        assert_eq!(merge(a.clone(), new_tally()).unwrap(), a);
    }

    #[test]
    fn census_spills_to_sketch_past_cap() {
        let mut c = NameCensus::with_cap(100);
        for i in 0..100 {
            c.insert(&format!("n{i}"));
        }
        assert!(!c.is_approximate());
        c.insert("n100");
        assert!(c.is_approximate());
        assert!(c.distinct().abs_diff(101) <= 3);

        let mut a = NameCensus::with_cap(10);
        let mut b = NameCensus::default();
        (0..8).for_each(|i| a.insert(&i.to_string()));
        (4..12).for_each(|i| b.insert(&i.to_string()));
        let mut ab = a.clone();
        ab.merge(&b);
        assert!(ab.is_approximate());
        assert_eq!(ab.cap(), 10);
    }

    #[test]
    fn summary_json_round_trip() {
        let mut a = record(&[("sex", "male"), ("smoker", "no"), ("x", "1")]);
        a.package_name = "Human.1.0".into();
        let t = tally_of(&[a, record(&[])]);
        let s = AuditSummary::from_tally(
            &t,
            &ReportSettings {
                record_rule: RecordRule::AllAndAny,
                ..Default::default()
            },
        );
        let json = serde_json::to_string(&s).unwrap();
        let back: AuditSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(s.group(ValidationGroup::Boolean).unwrap().records_any_valid, Some(0));
    }

    fn arb_census() -> impl Strategy<Value = NameCensus> {
        (
            proptest::option::of(2usize..12),
            proptest::collection::vec(0u8..16, 0..12),
        )
            .prop_map(|(cap, names)| {
                let mut c = cap.map(NameCensus::with_cap).unwrap_or_default();
                names.iter().for_each(|n| c.insert(&format!("name {n}")));
                c
            })
    }

    fn arb_group() -> impl Strategy<Value = GroupTally> {
        (0u64..1000, 0u64..1000, 0u64..100, 0u64..500, 0u64..500, 0u64..500).prop_map(
            |(ws, inv, na, c, any, all)| {
                let any = any.min(c);
                GroupTally {
                    filled_in: ws + inv + na,
                    well_specified: ws,
                    invalid: inv,
                    not_assessed_resolver: na,
                    records_containing: c,
                    records_any_valid: any,
                    records_all_valid: all.min(any),
                }
            },
        )
    }

    fn arb_tally() -> impl Strategy<Value = AuditTally> {
        (
            proptest::option::of(Just("v1".to_string())),
            (0u64..1000, 0u64..1000, 0u64..100),
            proptest::array::uniform4(arb_group()),
            proptest::collection::vec(0u64..1000, 8),
            arb_census(),
            proptest::collection::btree_set("[a-c]{1,2}", 0..4),
            proptest::collection::btree_map("[A-Z][a-z]{0,3}", 1u64..50, 0..4),
        )
            .prop_map(|(version, (zero, attrs, na), groups, misc, census, owners, packages)| {
                let total = packages.values().sum::<u64>();
                let zero = zero.min(total);
                AuditTally {
                    dictionary_version: version,
                    total_records: total,
                    total_attributes: attrs,
                    records_with_zero_attributes: zero,
                    records_with_any_attribute: total - zero,
                    parse_errors: na / 2,
                    groups,
                    term_group_attempted: misc[0],
                    term_group_with_candidates: misc[1],
                    unit_filled: misc[2],
                    pubmed_id_filled: misc[3],
                    free_text_filled: misc[4],
                    null_like_values: na,
                    custom_attribute_occurrences: misc[5],
                    records_with_custom: misc[6],
                    custom_names: census,
                    owner_census: owners,
                    package_histogram: packages,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn merge_identity(t in arb_tally()) {
            prop_assert_eq!(merge(t.clone(), new_tally()).unwrap(), t.clone());
            prop_assert_eq!(merge(new_tally(), t.clone()).unwrap(), t);
        }

        #[test]
        fn merge_commutative(a in arb_tally(), b in arb_tally()) {
            prop_assert_eq!(merge(a.clone(), b.clone()).unwrap(), merge(b, a).unwrap());
        }

        #[test]
        fn merge_associative(a in arb_tally(), b in arb_tally(), c in arb_tally()) {
            let left = merge(merge(a.clone(), b.clone()).unwrap(), c.clone()).unwrap();
            let right = merge(a, merge(b, c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn merge_conserves(a in arb_tally(), b in arb_tally()) {
            prop_assert!(a.is_conserved() && b.is_conserved());
            prop_assert!(merge(a, b).unwrap().is_conserved());
        }
    }
}
