//! Attribute data dictionary and package definitions.
//!
//! A [`Dictionary`] is loaded from a JSON document and is immutable afterwards.
//! Every attribute belongs to exactly one [`ValidationGroup`]; names are
//! matched after [`normalize_attribute_name`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::normalize::{normalize_attribute_name, normalize_value};

/// Kind of value an attribute expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationGroup {
    OntologyTerm,
    Term,
    ValueSet,
    Boolean,
    Integer,
    Unit,
    PubmedId,
    FreeText,
}

impl ValidationGroup {
    pub const ALL: [ValidationGroup; 8] = [
        ValidationGroup::OntologyTerm,
        ValidationGroup::Term,
        ValidationGroup::ValueSet,
        ValidationGroup::Boolean,
        ValidationGroup::Integer,
        ValidationGroup::Unit,
        ValidationGroup::PubmedId,
        ValidationGroup::FreeText,
    ];

    /// Groups that receive a valid/invalid verdict, in report order.
    pub const VALIDATED: [ValidationGroup; 4] = [
        ValidationGroup::OntologyTerm,
        ValidationGroup::ValueSet,
        ValidationGroup::Boolean,
        ValidationGroup::Integer,
    ];

    pub fn is_validated(self) -> bool {
        Self::VALIDATED.contains(&self)
    }

    /// The lower-snake tag used in dictionary documents and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            ValidationGroup::OntologyTerm => "ontology_term",
            ValidationGroup::Term => "term",
            ValidationGroup::ValueSet => "value_set",
            ValidationGroup::Boolean => "boolean",
            ValidationGroup::Integer => "integer",
            ValidationGroup::Unit => "unit",
            ValidationGroup::PubmedId => "pubmed_id",
            ValidationGroup::FreeText => "free_text",
        }
    }

    /// Row label used in the human-readable table.
    pub fn display_label(self) -> &'static str {
        match self {
            ValidationGroup::OntologyTerm => "Ontology term",
            ValidationGroup::Term => "Term",
            ValidationGroup::ValueSet => "Value set",
            ValidationGroup::Boolean => "Boolean",
            ValidationGroup::Integer => "Integer",
            ValidationGroup::Unit => "Unit",
            ValidationGroup::PubmedId => "PubMed ID",
            ValidationGroup::FreeText => "Free text",
        }
    }
}

impl fmt::Display for ValidationGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyBinding {
    pub ontology_acronym: String,
    pub human_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSpec {
    pub canonical_name: String,
    pub synonyms: Vec<String>,
    pub group: ValidationGroup,
    pub binding: Option<OntologyBinding>,
    pub value_set: Option<Vec<String>>,
    pub description: String,
    normalized_values: HashSet<String>,
}

impl AttributeSpec {
    /// True if `normalized` (already passed through `normalize_value`) is a
    /// member of this spec's value set.
    pub fn value_set_contains_normalized(&self, normalized: &str) -> bool {
        self.normalized_values.contains(normalized)
    }

    /// Byte-exact value-set membership.
    pub fn value_set_contains_exact(&self, value: &str) -> bool {
        self.value_set
            .as_deref()
            .is_some_and(|vs| vs.iter().any(|v| v == value))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageDef {
    pub name: String,
    pub required: Vec<String>,
    pub optional: Vec<String>,
}

impl PackageDef {
    pub fn generic() -> Self {
        PackageDef {
            name: "Generic".to_string(),
            required: Vec::new(),
            optional: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LintRule {
    EmptyName,
    DuplicateName,
    MissingBinding,
    InvalidAcronym,
    EmptyValueSet,
    UnexpectedPayload,
    ValueSetCollision,
    DuplicatePackage,
    UnresolvedReference,
    RequiredOptionalOverlap,
    UnguidedTermRequirement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintFinding {
    pub severity: Severity,
    pub rule: LintRule,
    /// Path-like location inside the dictionary document, e.g. `attributes[3]`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.location, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DictionaryError {
    #[error("cannot read dictionary {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dictionary document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("invalid dictionary: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<LintFinding>),
}

#[derive(Debug, Clone, Deserialize)]
struct DictionaryDocument {
    version: String,
    attributes: Vec<AttributeEntry>,
    #[serde(default)]
    packages: Vec<PackageEntry>,
}

#[derive(Debug, Clone, Deserialize)]
struct AttributeEntry {
    name: String,
    #[serde(default)]
    synonyms: Vec<String>,
    group: ValidationGroup,
    #[serde(default)]
    ontology: Option<OntologyRef>,
    #[serde(default)]
    value_set: Option<Vec<String>>,
    #[serde(default)]
    description: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OntologyRef {
    Acronym(String),
    Full {
        acronym: String,
        #[serde(default)]
        label: String,
    },
}

#[derive(Debug, Clone, Deserialize)]
struct PackageEntry {
    name: String,
    #[serde(default)]
    required: Vec<String>,
    #[serde(default)]
    optional: Vec<String>,
}

/// The loaded attribute dictionary.
#[derive(Debug, Clone)]
pub struct Dictionary {
    version_label: String,
    specs: Vec<AttributeSpec>,
    /// Normalized canonical name or synonym -> index into `specs`. First wins.
    by_name: HashMap<String, usize>,
    packages: Vec<PackageDef>,
    package_index: HashMap<String, usize>,
    generic: PackageDef,
}

/// Parse and validate a dictionary document from a file.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<Dictionary, DictionaryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DictionaryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dictionary::from_json(&text)
}

/// Dictionary lookup; `None` means a custom (submitter-defined) name.
pub fn lookup_attribute<'d>(dict: &'d Dictionary, raw_name: &str) -> Option<&'d AttributeSpec> {
    dict.lookup(raw_name)
}

/// Requirements for a package; unknown or empty names get the Generic
/// definition.
pub fn package_requirements<'d>(dict: &'d Dictionary, package_name: &str) -> &'d PackageDef {
    dict.package(package_name)
}

/// All load-time and advisory findings for a dictionary. Empty means clean.
pub fn lint_dictionary(dict: &Dictionary) -> Vec<LintFinding> {
    dict.lint()
}

fn package_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// `Human.1.0` -> `Human`.
fn strip_package_version(name: &str) -> &str {
    let mut s = name.trim();
    while let Some((head, tail)) = s.rsplit_once('.') {
        if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) {
            s = head;
        } else {
            break;
        }
    }
    s
}

impl Dictionary {
    /// Strict load from JSON text: any error-severity finding rejects the
    /// document.
    pub fn from_json(text: &str) -> Result<Self, DictionaryError> {
        let dict = Self::from_json_lenient(text)?;
        let errors: Vec<_> = dict
            .lint()
            .into_iter()
            .filter(|f| f.severity == Severity::Error)
            .collect();
        if errors.is_empty() {
            Ok(dict)
        } else {
            Err(DictionaryError::Invalid(errors))
        }
    }

    /// Build without rejecting semantic problems, so they can be linted.
    /// Only syntactic/schema errors fail.
    pub fn from_json_lenient(text: &str) -> Result<Self, DictionaryError> {
        let doc: DictionaryDocument = serde_json::from_str(text)?;
        Ok(Self::from_document(doc))
    }

    fn from_document(doc: DictionaryDocument) -> Self {
        let specs: Vec<AttributeSpec> = doc
            .attributes
            .into_iter()
            .map(|e| {
                let binding = e.ontology.map(|o| match o {
                    OntologyRef::Acronym(a) => OntologyBinding {
                        ontology_acronym: a.trim().to_uppercase(),
                        human_label: String::new(),
                    },
                    OntologyRef::Full { acronym, label } => OntologyBinding {
                        ontology_acronym: acronym.trim().to_uppercase(),
                        human_label: label,
                    },
                });
                let normalized_values = e
                    .value_set
                    .iter()
                    .flatten()
                    .map(|v| normalize_value(v))
                    .collect();
                AttributeSpec {
                    canonical_name: e.name,
                    synonyms: e.synonyms,
                    group: e.group,
                    binding,
                    value_set: e.value_set,
                    description: e.description.unwrap_or_default(),
                    normalized_values,
                }
            })
            .collect();

        let mut by_name = HashMap::new();
        for (i, spec) in specs.iter().enumerate() {
            for name in std::iter::once(&spec.canonical_name).chain(&spec.synonyms) {
                let key = normalize_attribute_name(name);
                if !key.is_empty() {
                    by_name.entry(key).or_insert(i);
                }
            }
        }

        let packages: Vec<PackageDef> = doc
            .packages
            .into_iter()
            .map(|p| PackageDef {
                name: p.name,
                required: p.required,
                optional: p.optional,
            })
            .collect();
        let mut package_index = HashMap::new();
        for (i, p) in packages.iter().enumerate() {
            package_index.entry(package_key(&p.name)).or_insert(i);
        }

        Dictionary {
            version_label: doc.version,
            specs,
            by_name,
            packages,
            package_index,
            generic: PackageDef::generic(),
        }
    }

    pub fn version_label(&self) -> &str {
        &self.version_label
    }

    pub fn specs(&self) -> &[AttributeSpec] {
        &self.specs
    }

    pub fn packages(&self) -> &[PackageDef] {
        &self.packages
    }

    /// Normalized keys (canonical names and synonyms) known to the dictionary.
    pub fn normalized_keys(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    pub fn lookup(&self, raw_name: &str) -> Option<&AttributeSpec> {
        self.lookup_normalized(&normalize_attribute_name(raw_name))
    }

    pub fn lookup_normalized(&self, normalized: &str) -> Option<&AttributeSpec> {
        self.by_name.get(normalized).map(|&i| &self.specs[i])
    }

    pub fn package(&self, name: &str) -> &PackageDef {
        if name.trim().is_empty() {
            return self.generic_package();
        }
        let found = self
            .package_index
            .get(&package_key(name))
            .or_else(|| self.package_index.get(&package_key(strip_package_version(name))));
        match found {
            Some(&i) => &self.packages[i],
            None => self.generic_package(),
        }
    }

    fn generic_package(&self) -> &PackageDef {
        match self.package_index.get("generic") {
            Some(&i) => &self.packages[i],
            None => &self.generic,
        }
    }

    fn lint(&self) -> Vec<LintFinding> {
        let mut out = Vec::new();
        let mut push = |severity, rule, location: String, message: String| {
            out.push(LintFinding {
                severity,
                rule,
                location,
                message,
            })
        };

        let mut owner: HashMap<String, usize> = HashMap::new();
        for (i, spec) in self.specs.iter().enumerate() {
            let loc = format!("attributes[{i}] ({:?})", spec.canonical_name);
            if normalize_attribute_name(&spec.canonical_name).is_empty() {
                push(
                    Severity::Error,
                    LintRule::EmptyName,
                    loc.clone(),
                    "attribute name is empty".into(),
                );
            }
            let mut seen_here = HashSet::new();
            for name in std::iter::once(&spec.canonical_name).chain(&spec.synonyms) {
                let key = normalize_attribute_name(name);
                if key.is_empty() || !seen_here.insert(key.clone()) {
                    continue;
                }
                match owner.get(&key) {
                    Some(&j) if j != i => push(
                        Severity::Error,
                        LintRule::DuplicateName,
                        loc.clone(),
                        format!(
                            "name {name:?} normalizes to {key:?}, already used by attributes[{j}] ({:?})",
                            self.specs[j].canonical_name
                        ),
                    ),
                    _ => {
                        owner.insert(key, i);
                    }
                }
            }

            match spec.group {
                ValidationGroup::OntologyTerm => match &spec.binding {
                    None => push(
                        Severity::Error,
                        LintRule::MissingBinding,
                        loc.clone(),
                        "ontology_term attribute has no ontology binding".into(),
                    ),
                    Some(b)
                        if b.ontology_acronym.is_empty()
                            || b.ontology_acronym.chars().any(char::is_whitespace) =>
                    {
                        push(
                            Severity::Error,
                            LintRule::InvalidAcronym,
                            loc.clone(),
                            format!(
                                "ontology acronym {:?} is empty or contains whitespace",
                                b.ontology_acronym
                            ),
                        )
                    }
                    Some(_) => {}
                },
                _ if spec.binding.is_some() => push(
                    Severity::Error,
                    LintRule::UnexpectedPayload,
                    loc.clone(),
                    format!("{} attribute carries an ontology binding", spec.group),
                ),
                _ => {}
            }

            match (spec.group, &spec.value_set) {
                (ValidationGroup::ValueSet, None) => push(
                    Severity::Error,
                    LintRule::EmptyValueSet,
                    loc.clone(),
                    "value_set attribute has no value set".into(),
                ),
                (ValidationGroup::ValueSet, Some(vs)) if vs.is_empty() => push(
                    Severity::Error,
                    LintRule::EmptyValueSet,
                    loc.clone(),
                    "value_set attribute has an empty value set".into(),
                ),
                (ValidationGroup::ValueSet, Some(vs)) => {
                    let mut seen: HashMap<String, &str> = HashMap::new();
                    for v in vs {
                        let key = normalize_value(v);
                        if let Some(prev) = seen.get(&key) {
                            push(
                                Severity::Warning,
                                LintRule::ValueSetCollision,
                                loc.clone(),
                                format!("value-set entries {prev:?} and {v:?} collide under normalization"),
                            );
                        } else {
                            seen.insert(key, v);
                        }
                    }
                }
                (g, Some(_)) => push(
                    Severity::Error,
                    LintRule::UnexpectedPayload,
                    loc.clone(),
                    format!("{g} attribute carries a value set"),
                ),
                _ => {}
            }
        }

        let mut seen_packages: HashMap<String, usize> = HashMap::new();
        for (i, pkg) in self.packages.iter().enumerate() {
            let loc = format!("packages[{i}] ({:?})", pkg.name);
            if let Some(j) = seen_packages.insert(package_key(&pkg.name), i) {
                push(
                    Severity::Error,
                    LintRule::DuplicatePackage,
                    loc.clone(),
                    format!("package name duplicates packages[{j}]"),
                );
            }
            let required: HashSet<String> =
                pkg.required.iter().map(|n| normalize_attribute_name(n)).collect();
            for (list, names) in [("required", &pkg.required), ("optional", &pkg.optional)] {
                for (k, name) in names.iter().enumerate() {
                    let entry_loc = format!("{loc}.{list}[{k}]");
                    match self.lookup(name) {
                        None => push(
                            Severity::Error,
                            LintRule::UnresolvedReference,
                            entry_loc,
                            format!("unresolved attribute reference {name:?}"),
                        ),
                        Some(spec) => {
                            if list == "optional" && required.contains(&normalize_attribute_name(name)) {
                                push(
                                    Severity::Error,
                                    LintRule::RequiredOptionalOverlap,
                                    entry_loc,
                                    format!("{name:?} is both required and optional"),
                                );
                            } else if list == "required"
                                && spec.group == ValidationGroup::Term
                                && spec.description.trim().is_empty()
                            {
                                push(
                                    Severity::Warning,
                                    LintRule::UnguidedTermRequirement,
                                    entry_loc,
                                    format!("required term attribute {name:?} has no description to guide values"),
                                );
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
