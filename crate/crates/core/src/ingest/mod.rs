//! Trial records: parsing, inclusion filters, text normalization and graph
//! assembly.

mod build;
mod normalize;
pub mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{is_registry_id, NodeType};

pub use build::{build_graph, collect_entity_texts, read_strata, training_texts, trial_strata, write_strata, STRATA_FILE};
pub use normalize::{normalize_entity_texts, NormEntry, NormalizationTable, DEFAULT_THRESHOLD};
pub use synth::{generate_synthetic_corpus, generate_with, SynthConfig, DISEASE_AREAS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum StudyType {
    Interventional,
    Observational,
    Other,
}

impl From<String> for StudyType {
    fn from(s: String) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "interventional" => StudyType::Interventional,
            "observational" => StudyType::Observational,
            _ => StudyType::Other,
        }
    }
}

impl From<StudyType> for String {
    fn from(s: StudyType) -> String {
        s.to_string()
    }
}

impl fmt::Display for StudyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyType::Interventional => "interventional",
            StudyType::Observational => "observational",
            StudyType::Other => "other",
        })
    }
}

/// A named concept with an optional pre-linked concept identifier. Accepts a
/// bare string or `{"name": .., "concept_id": ..}` on input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ConceptRepr")]
pub struct ConceptRef {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concept_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConceptRepr {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        concept_id: Option<String>,
    },
}

impl From<ConceptRepr> for ConceptRef {
    fn from(r: ConceptRepr) -> Self {
        match r {
            ConceptRepr::Name(name) => ConceptRef { name, concept_id: None },
            ConceptRepr::Full { name, concept_id } => ConceptRef { name, concept_id },
        }
    }
}

impl ConceptRef {
    pub fn new(name: impl Into<String>, concept_id: Option<&str>) -> Self {
        ConceptRef {
            name: name.into(),
            concept_id: concept_id.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept_id: Option<String>,
    #[serde(default)]
    pub targets: Vec<ConceptRef>,
    #[serde(default)]
    pub moas: Vec<ConceptRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub nct_id: String,
    pub brief_title: String,
    pub study_type: StudyType,
    pub intervention_types: BTreeSet<String>,
    pub phase: String,
    pub overall_status: String,
    pub gender: String,
    pub age_groups: Vec<String>,
    pub countries: Vec<String>,
    pub conditions: Vec<ConceptRef>,
    pub interventions: Vec<Intervention>,
    pub inclusion_criteria: Vec<String>,
    pub exclusion_criteria: Vec<String>,
    pub primary_endpoints: Vec<String>,
    pub secondary_endpoints: Vec<String>,
    pub other_endpoints: Vec<String>,
    pub disease_area: String,
}

impl TrialRecord {
    /// The record's raw element texts of one node type, in record order.
    /// Categorical types yield their raw values; NCT yields the title.
    pub fn elements(&self, node_type: NodeType) -> Vec<&str> {
        fn names(v: &[ConceptRef]) -> Vec<&str> {
            v.iter().map(|c| c.name.as_str()).collect()
        }
        fn strs(v: &[String]) -> Vec<&str> {
            v.iter().map(String::as_str).collect()
        }
        match node_type {
            NodeType::Nct => vec![self.brief_title.as_str()],
            NodeType::Icr => strs(&self.inclusion_criteria),
            NodeType::Ecr => strs(&self.exclusion_criteria),
            NodeType::Pep => strs(&self.primary_endpoints),
            NodeType::Sep => strs(&self.secondary_endpoints),
            NodeType::Oep => strs(&self.other_endpoints),
            NodeType::Ind => names(&self.conditions),
            NodeType::Int => self.interventions.iter().map(|i| i.name.as_str()).collect(),
            NodeType::Tgt => self.interventions.iter().flat_map(|i| names(&i.targets)).collect(),
            NodeType::Moa => self.interventions.iter().flat_map(|i| names(&i.moas)).collect(),
            NodeType::Ph => vec![self.phase.as_str()],
            NodeType::Sta => vec![self.overall_status.as_str()],
            NodeType::Gen => vec![self.gender.as_str()],
            NodeType::Age => strs(&self.age_groups),
            NodeType::Cnt => strs(&self.countries),
        }
    }
}

/// Criteria arrive either pre-split or as one block of text.
#[derive(Deserialize)]
#[serde(untagged)]
enum CriteriaRepr {
    List(Vec<String>),
    Block(String),
}

impl Default for CriteriaRepr {
    fn default() -> Self {
        CriteriaRepr::List(Vec::new())
    }
}

impl CriteriaRepr {
    fn into_list(self) -> Vec<String> {
        match self {
            CriteriaRepr::List(v) => v,
            CriteriaRepr::Block(b) => split_criteria_block(&b),
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    nct_id: Option<String>,
    brief_title: Option<String>,
    #[serde(default = "other_study")]
    study_type: StudyType,
    #[serde(default)]
    intervention_types: BTreeSet<String>,
    #[serde(default)]
    phase: String,
    #[serde(default)]
    overall_status: String,
    #[serde(default)]
    gender: String,
    #[serde(default)]
    age_groups: Vec<String>,
    #[serde(default)]
    countries: Vec<String>,
    #[serde(default)]
    conditions: Vec<ConceptRef>,
    #[serde(default)]
    interventions: Vec<Intervention>,
    #[serde(default)]
    inclusion_criteria: CriteriaRepr,
    #[serde(default)]
    exclusion_criteria: CriteriaRepr,
    #[serde(default)]
    primary_endpoints: Vec<String>,
    #[serde(default)]
    secondary_endpoints: Vec<String>,
    #[serde(default)]
    other_endpoints: Vec<String>,
    #[serde(default)]
    disease_area: String,
}

fn other_study() -> StudyType {
    StudyType::Other
}

/// Splits an eligibility block on line and bullet boundaries, dropping
/// section headers and list markers.
pub fn split_criteria_block(block: &str) -> Vec<String> {
    block
        .split(['\n', '\r', '•'])
        .map(|line| {
            let line = line.trim();
            let line = line.trim_start_matches(['-', '*', '·']).trim_start();
            // "1." / "12)" style numbering
            let digits = line.bytes().take_while(u8::is_ascii_digit).count();
            if digits > 0 && matches!(line.as_bytes().get(digits), Some(b'.' | b')')) {
                line[digits + 1..].trim()
            } else {
                line
            }
        })
        .filter(|line| {
            let lower = line.trim_end_matches(':').to_ascii_lowercase();
            !line.is_empty() && lower != "inclusion criteria" && lower != "exclusion criteria"
        })
        .map(str::to_string)
        .collect()
}

fn byte_offset(payload: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in payload.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    payload.len()
}

/// Parses one JSON trial record. Unknown fields are ignored and missing list
/// fields default to empty.
pub fn parse_trial_record(payload: &[u8]) -> Result<TrialRecord> {
    let raw: RawRecord = serde_json::from_slice(payload).map_err(|e| Error::Json {
        offset: byte_offset(payload, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let nct_id = raw
        .nct_id
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or(Error::Field {
            field: "nct_id",
            message: "missing".into(),
        })?;
    if !is_registry_id(&nct_id) {
        return Err(Error::Field {
            field: "nct_id",
            message: format!("{nct_id:?} is not `NCT` followed by 8 digits"),
        });
    }
    let brief_title = raw
        .brief_title
        .filter(|s| !s.trim().is_empty())
        .ok_or(Error::Field {
            field: "brief_title",
            message: "missing or empty".into(),
        })?;
    Ok(TrialRecord {
        nct_id,
        brief_title,
        study_type: raw.study_type,
        intervention_types: raw.intervention_types,
        phase: raw.phase,
        overall_status: raw.overall_status,
        gender: raw.gender,
        age_groups: raw.age_groups,
        countries: raw.countries,
        conditions: raw.conditions,
        interventions: raw.interventions,
        inclusion_criteria: raw.inclusion_criteria.into_list(),
        exclusion_criteria: raw.exclusion_criteria.into_list(),
        primary_endpoints: raw.primary_endpoints,
        secondary_endpoints: raw.secondary_endpoints,
        other_endpoints: raw.other_endpoints,
        disease_area: raw.disease_area,
    })
}

/// Interventional drug trials only.
pub fn passes_filters(record: &TrialRecord) -> bool {
    record.study_type == StudyType::Interventional
        && record
            .intervention_types
            .iter()
            .any(|t| t.trim().eq_ignore_ascii_case("drug"))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_trial_record(l.as_bytes()).map_err(|e| Error::format(path, i + 1, e.to_string())))
        .collect()
}

pub fn to_jsonl(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, records: &[TrialRecord]) -> Result<()> {
    std::fs::write(path, to_jsonl(records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_record_defaults_lists() {
        let r = parse_trial_record(
            br#"{"nct_id":"NCT00000001","brief_title":"A study","study_type":"Interventional"}"#,
        )
        .unwrap();
        assert_eq!(r.study_type, StudyType::Interventional);
        assert!(r.inclusion_criteria.is_empty());
        assert!(r.interventions.is_empty());
        assert!(r.primary_endpoints.is_empty());
        assert!(r.intervention_types.is_empty());
    }

    #[test]
    fn criteria_lists_and_unknown_fields() {
        let r = parse_trial_record(
            br#"{"nct_id":"NCT00000001","brief_title":"t","study_type":"interventional",
                "inclusion_criteria":["a","b","c","d"],"extra_field":{"x":1}}"#,
        )
        .unwrap();
        assert_eq!(r.inclusion_criteria.len(), 4);
    }

    #[test]
    fn criteria_block_is_split() {
        let r = parse_trial_record(
            br#"{"nct_id":"NCT00000001","brief_title":"t",
                "exclusion_criteria":"Exclusion Criteria:\n\n- pregnancy\n* active infection\n2. prior surgery"}"#,
        )
        .unwrap();
        assert_eq!(r.exclusion_criteria, ["pregnancy", "active infection", "prior surgery"]);
    }

    #[test]
    fn missing_fields_are_named() {
        let err = parse_trial_record(br#"{"brief_title":"t","study_type":"interventional"}"#).unwrap_err();
        assert!(matches!(err, Error::Field { field: "nct_id", .. }), "{err}");
        assert!(err.to_string().contains("nct_id"));
        let err = parse_trial_record(br#"{"nct_id":"NCT00000001","brief_title":"  "}"#).unwrap_err();
        assert!(matches!(err, Error::Field { field: "brief_title", .. }));
        let err = parse_trial_record(br#"{"nct_id":"NCT1","brief_title":"x"}"#).unwrap_err();
        assert!(matches!(err, Error::Field { field: "nct_id", .. }));
    }

    #[test]
    fn malformed_json_reports_offset() {
        let payload = b"{\"nct_id\": \"NCT00000001\",\n \"brief_title\": }";
        match parse_trial_record(payload).unwrap_err() {
            Error::Json { offset, .. } => assert_eq!(payload[offset], b'}'),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn concepts_accept_string_or_object() {
        let r = parse_trial_record(
            br#"{"nct_id":"NCT00000001","brief_title":"t",
                "conditions":["asthma",{"name":"copd","concept_id":"C0024117"}]}"#,
        )
        .unwrap();
        assert_eq!(r.conditions[0], ConceptRef::new("asthma", None));
        assert_eq!(r.conditions[1], ConceptRef::new("copd", Some("C0024117")));
    }

    fn record(study: StudyType, types: &[&str]) -> TrialRecord {
        TrialRecord {
            nct_id: "NCT00000001".into(),
            brief_title: "t".into(),
            study_type: study,
            intervention_types: types.iter().map(|s| s.to_string()).collect(),
            phase: String::new(),
            overall_status: String::new(),
            gender: String::new(),
            age_groups: vec![],
            countries: vec![],
            conditions: vec![],
            interventions: vec![],
            inclusion_criteria: vec![],
            exclusion_criteria: vec![],
            primary_endpoints: vec![],
            secondary_endpoints: vec![],
            other_endpoints: vec![],
            disease_area: String::new(),
        }
    }

    #[test]
    fn filter_definition() {
        assert!(passes_filters(&record(StudyType::Interventional, &["Drug"])));
        assert!(passes_filters(&record(StudyType::Interventional, &["device", "DRUG"])));
        assert!(!passes_filters(&record(StudyType::Observational, &["Drug"])));
        assert!(!passes_filters(&record(StudyType::Interventional, &["Device"])));
        assert!(!passes_filters(&record(StudyType::Other, &["Drug"])));
    }

    proptest::proptest! {
        #[test]
        fn removing_drug_fails_filter(extra in proptest::collection::btree_set("[a-z]{3,8}", 0..4)) {
            let mut r = record(StudyType::Interventional, &["drug"]);
            r.intervention_types.extend(extra.into_iter().filter(|s| s != "drug"));
            proptest::prop_assert!(passes_filters(&r));
            r.intervention_types.remove("drug");
            proptest::prop_assert!(!passes_filters(&r));
        }
    }
}
