use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{passes_filters, NormalizationTable, TrialRecord};
use crate::kg::{read_lines, write_lines, assign_node_id, clean_title, content_hash, is_content_hash, NodeCategory, normalize_text, KnowledgeGraph, Node, NodeId, NodeType, RelationType, Triple};

fn textual_fields(r: &TrialRecord) -> [(NodeType, &[String]); 5] {
    [
        (NodeType::Icr, &r.inclusion_criteria),
        (NodeType::Ecr, &r.exclusion_criteria),
        (NodeType::Pep, &r.primary_endpoints),
        (NodeType::Sep, &r.secondary_endpoints),
        (NodeType::Oep, &r.other_endpoints),
    ]
}

/// All criterion and endpoint texts, grouped by node type.
pub fn collect_entity_texts(records: &[TrialRecord]) -> BTreeMap<NodeType, Vec<String>> {
    let mut out: BTreeMap<NodeType, Vec<String>> = BTreeMap::new();
    for r in records {
        for (t, texts) in textual_fields(r) {
            out.entry(t).or_default().extend(texts.iter().cloned());
        }
    }
    out
}

/// Sentences for training a text space: every title, criterion, endpoint
/// and concept name, in record order.
pub fn training_texts(records: &[TrialRecord]) -> Vec<String> {
    let types = [
        NodeType::Nct,
        NodeType::Ind,
        NodeType::Int,
        NodeType::Tgt,
        NodeType::Moa,
        NodeType::Icr,
        NodeType::Ecr,
        NodeType::Pep,
        NodeType::Sep,
        NodeType::Oep,
    ];
    records
        .iter()
        .flat_map(|r| types.iter().flat_map(move |&t| r.elements(t)))
        .map(str::to_string)
        .collect()
}

/// Trial id → disease area.
pub fn trial_strata(records: &[TrialRecord]) -> BTreeMap<NodeId, String> {
    records
        .iter()
        .map(|r| (NodeId::new(r.nct_id.clone()), r.disease_area.clone()))
        .collect()
}

pub const STRATA_FILE: &str = "strata.tsv";

/// Writes `nct_id<TAB>stratum` lines, sorted by id.
pub fn write_strata(path: &Path, strata: &BTreeMap<NodeId, String>) -> Result<()> {
    write_lines(path, strata.iter().map(|(id, s)| format!("{id}\t{s}")))
}

pub fn read_strata(path: &Path) -> Result<BTreeMap<NodeId, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, s) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, i + 1, "expected `nct_id<TAB>stratum`"))?;
        out.insert(NodeId::new(id), s.to_string());
    }
    Ok(out)
}

/// Ids shared by several node types are rewritten per type: digests become
/// the digest of `"<tag>:<text>"`, supplied concept ids get a `<tag>:` prefix.
fn scope_id(node_type: NodeType, id: NodeId, raw: &str) -> NodeId {
    let tag = node_type.tag().to_lowercase();
    if is_content_hash(id.as_str()) {
        NodeId::new(content_hash(&format!("{tag}:{}", normalize_text(raw))))
    } else {
        NodeId::new(format!("{tag}:{id}"))
    }
}

struct Builder {
    graph: KnowledgeGraph,
    /// Collecting pass: every id with the types that claim it.
    claims: Option<BTreeMap<NodeId, BTreeSet<NodeType>>>,
    shared: BTreeSet<NodeId>,
}

impl Builder {
    fn node(&mut self, node_type: NodeType, raw: &str, concept_id: Option<&str>, text: Option<String>) -> Result<NodeId> {
        let mut id = assign_node_id(node_type, raw, concept_id)?;
        if let Some(claims) = &mut self.claims {
            if matches!(node_type.category(), NodeCategory::Concept | NodeCategory::Textual) {
                claims.entry(id.clone()).or_default().insert(node_type);
            }
            return Ok(id);
        }
        if self.shared.contains(&id) {
            id = scope_id(node_type, id, raw);
        }
        self.graph.add_node(Node {
            id: id.clone(),
            node_type,
            attribute_text: text,
        })?;
        Ok(id)
    }

    fn edge(&mut self, head: &NodeId, relation: RelationType, tail: NodeId) -> Result<()> {
        if self.claims.is_some() {
            return Ok(());
        }
        self.graph.upsert_triple(Triple {
            head: head.clone(),
            relation,
            tail,
        })?;
        Ok(())
    }

    fn categorical(&mut self, trial: &NodeId, node_type: NodeType, raw: &str) -> Result<()> {
        if normalize_text(raw).chars().any(char::is_alphanumeric) {
            let id = self.node(node_type, raw, None, None)?;
            let rel = RelationType::from_trial_to(node_type).expect("trial relation");
            self.edge(trial, rel, id)?;
        }
        Ok(())
    }

    fn concept(&mut self, node_type: NodeType, name: &str, concept_id: Option<&str>) -> Result<Option<NodeId>> {
        let text = clean_title(name);
        if text.is_empty() && concept_id.is_none() {
            return Ok(None);
        }
        let text = (!text.is_empty()).then_some(text);
        self.node(node_type, name, concept_id, text).map(Some)
    }
}

/// Assembles the knowledge graph. Every record must pass the inclusion
/// filters; textual elements are mapped through `table`. An id that would be
/// claimed by two node types is scoped per type (see `scope_id`).
pub fn build_graph(records: &[TrialRecord], table: &NormalizationTable) -> Result<KnowledgeGraph> {
    let rejected: Vec<&str> = records
        .iter()
        .filter(|r| !passes_filters(r))
        .map(|r| r.nct_id.as_str())
        .collect();
    if !rejected.is_empty() {
        return Err(Error::RejectedRecord(rejected.join(", ")));
    }
    let mut b = Builder {
        graph: KnowledgeGraph::new(),
        claims: Some(BTreeMap::new()),
        shared: BTreeSet::new(),
    };
    add_records(&mut b, records, table)?;
    b.shared = b
        .claims
        .take()
        .unwrap_or_default()
        .into_iter()
        .filter(|(_, types)| types.len() > 1)
        .map(|(id, _)| id)
        .collect();
    add_records(&mut b, records, table)?;
    Ok(b.graph)
}

fn add_records(b: &mut Builder, records: &[TrialRecord], table: &NormalizationTable) -> Result<()> {
    for r in records {
        let trial = b.node(NodeType::Nct, &r.nct_id, None, Some(clean_title(&r.brief_title)))?;

        b.categorical(&trial, NodeType::Ph, &r.phase)?;
        b.categorical(&trial, NodeType::Sta, &r.overall_status)?;
        b.categorical(&trial, NodeType::Gen, &r.gender)?;
        // One AGE node per distinct combination of age groups.
        b.categorical(&trial, NodeType::Age, &r.age_groups.join(", "))?;
        for c in &r.countries {
            b.categorical(&trial, NodeType::Cnt, c)?;
        }

        for c in &r.conditions {
            if let Some(id) = b.concept(NodeType::Ind, &c.name, c.concept_id.as_deref())? {
                b.edge(&trial, RelationType::NctInd, id)?;
            }
        }
        for iv in &r.interventions {
            let Some(int) = b.concept(NodeType::Int, &iv.name, iv.concept_id.as_deref())? else {
                continue;
            };
            b.edge(&trial, RelationType::NctInt, int.clone())?;
            let mut targets = Vec::new();
            for t in &iv.targets {
                if let Some(id) = b.concept(NodeType::Tgt, &t.name, t.concept_id.as_deref())? {
                    b.edge(&int, RelationType::IntTgt, id.clone())?;
                    targets.push(id);
                }
            }
            for m in &iv.moas {
                if let Some(moa) = b.concept(NodeType::Moa, &m.name, m.concept_id.as_deref())? {
                    b.edge(&int, RelationType::IntMoa, moa.clone())?;
                    for t in &targets {
                        b.edge(&moa, RelationType::MoaTgt, t.clone())?;
                    }
                }
            }
        }

        for (t, texts) in textual_fields(r) {
            let rel = RelationType::from_trial_to(t).expect("trial relation");
            for raw in texts {
                let normalized = table.normalize(t, raw);
                if normalized.is_empty() {
                    continue;
                }
                let id = b.node(t, &normalized, None, Some(normalized.clone()))?;
                b.edge(&trial, rel, id)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ConceptRef, Intervention, StudyType};
    use crate::kg::content_hash;

    fn base(id: &str) -> TrialRecord {
        TrialRecord {
            nct_id: id.into(),
            brief_title: format!("Study {id}"),
            study_type: StudyType::Interventional,
            intervention_types: ["Drug".to_string()].into(),
            phase: "Phase 2".into(),
            overall_status: "Completed".into(),
            gender: "All".into(),
            age_groups: vec!["Adult".into(), "Older Adult".into()],
            countries: vec!["United States".into()],
            conditions: vec![ConceptRef::new("Asthma", Some("C0004096"))],
            interventions: vec![],
            inclusion_criteria: vec![],
            exclusion_criteria: vec![],
            primary_endpoints: vec![],
            secondary_endpoints: vec![],
            other_endpoints: vec![],
            disease_area: "Asthma".into(),
        }
    }

    fn exact(records: &[TrialRecord]) -> NormalizationTable {
        NormalizationTable::exact(&collect_entity_texts(records))
    }

    #[test]
    fn duplicate_criteria_dedup_within_a_trial() {
        let mut r = base("NCT00000001");
        r.inclusion_criteria = vec!["Age 18 or older".into(), "age 18  or older".into()];
        let recs = vec![r];
        let g = build_graph(&recs, &exact(&recs)).unwrap();
        let s = g.stats();
        assert_eq!(s.node_count_by_type[&NodeType::Icr], 1);
        assert_eq!(s.edge_count_by_type[&RelationType::NctIcr], 1);
    }

    #[test]
    fn shared_endpoint_has_degree_two() {
        let mut a = base("NCT00000001");
        let mut b = base("NCT00000002");
        a.primary_endpoints = vec!["Change in FEV1 at week 12".into()];
        b.primary_endpoints = vec!["change in fev1 at week 12".into()];
        let recs = vec![a, b];
        let g = build_graph(&recs, &exact(&recs)).unwrap();
        let pep = content_hash("change in fev1 at week 12");
        let degree = g.triples().filter(|t| t.tail.as_str() == pep).count();
        assert_eq!(degree, 2);
        assert_eq!(g.node(&pep).unwrap().attribute_text.as_deref(), Some("change in fev1 at week 12"));
    }

    #[test]
    fn rejects_records_failing_filters() {
        let mut r = base("NCT00000003");
        r.study_type = StudyType::Observational;
        let recs = vec![base("NCT00000001"), r];
        match build_graph(&recs, &exact(&recs)) {
            Err(Error::RejectedRecord(ids)) => assert_eq!(ids, "NCT00000003"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn five_record_fixture_stats() {
        // Hand-built expectation, counted per type below.
        let mut recs: Vec<TrialRecord> = (1..=5).map(|i| base(&format!("NCT0000000{i}"))).collect();
        recs[0].inclusion_criteria = vec!["a1".into(), "shared".into()];
        recs[1].inclusion_criteria = vec!["shared".into()];
        recs[2].exclusion_criteria = vec!["pregnancy".into()];
        recs[3].exclusion_criteria = vec!["pregnancy".into(), "smoker".into()];
        recs[4].primary_endpoints = vec!["overall survival".into()];
        recs[4].secondary_endpoints = vec!["adverse events".into()];
        recs[4].other_endpoints = vec!["pk".into()];
        recs[4].phase = "Phase 3".into();
        recs[4].gender = "Female".into();
        recs[3].countries = vec!["Canada".into(), "United States".into()];
        recs[0].interventions = vec![Intervention {
            name: "Drug A".into(),
            concept_id: None,
            targets: vec![ConceptRef::new("IL-5", None), ConceptRef::new("IL-13", None)],
            moas: vec![ConceptRef::new("interleukin antagonist", None)],
        }];
        recs[1].interventions = recs[0].interventions.clone();
        let g = build_graph(&recs, &exact(&recs)).unwrap();
        let s = g.stats();
        let n = |t| s.node_count_by_type[&t];
        let e = |r| s.edge_count_by_type[&r];
        assert_eq!(n(NodeType::Nct), 5);
        assert_eq!(n(NodeType::Icr), 2);
        assert_eq!(n(NodeType::Ecr), 2);
        assert_eq!(n(NodeType::Pep), 1);
        assert_eq!(n(NodeType::Sep), 1);
        assert_eq!(n(NodeType::Oep), 1);
        assert_eq!(n(NodeType::Ph), 2);
        assert_eq!(n(NodeType::Sta), 1);
        assert_eq!(n(NodeType::Gen), 2);
        assert_eq!(n(NodeType::Age), 1);
        assert_eq!(n(NodeType::Cnt), 2);
        assert_eq!(n(NodeType::Ind), 1);
        assert_eq!(n(NodeType::Int), 1);
        assert_eq!(n(NodeType::Tgt), 2);
        assert_eq!(n(NodeType::Moa), 1);
        assert_eq!(s.total_nodes, 25);
        assert_eq!(e(RelationType::NctIcr), 3);
        assert_eq!(e(RelationType::NctEcr), 3);
        assert_eq!(e(RelationType::NctPep), 1);
        assert_eq!(e(RelationType::NctSep), 1);
        assert_eq!(e(RelationType::NctOep), 1);
        assert_eq!(e(RelationType::NctPh), 5);
        assert_eq!(e(RelationType::NctSta), 5);
        assert_eq!(e(RelationType::NctGen), 5);
        assert_eq!(e(RelationType::NctAge), 5);
        assert_eq!(e(RelationType::NctCnt), 6);
        assert_eq!(e(RelationType::NctInd), 5);
        assert_eq!(e(RelationType::NctInt), 2);
        assert_eq!(e(RelationType::IntTgt), 2);
        assert_eq!(e(RelationType::IntMoa), 1);
        assert_eq!(e(RelationType::MoaTgt), 2);
        assert_eq!(s.total_edges, 47);
        assert!(g.schema_violations().is_empty());
        assert!(g.triples().all(|t| !(t.relation.signature() == (NodeType::Nct, NodeType::Nct))));
    }

    #[test]
    fn text_shared_across_types_is_scoped() {
        let mut a = base("NCT00000001");
        let mut b = base("NCT00000002");
        a.primary_endpoints = vec!["Overall survival".into()];
        b.secondary_endpoints = vec!["overall survival".into()];
        b.inclusion_criteria = vec!["unique criterion".into()];
        let recs = vec![a, b];
        let g = build_graph(&recs, &exact(&recs)).unwrap();
        let pep = content_hash("pep:overall survival");
        let sep = content_hash("sep:overall survival");
        assert_eq!(g.node(&pep).unwrap().node_type, NodeType::Pep);
        assert_eq!(g.node(&sep).unwrap().node_type, NodeType::Sep);
        assert!(g.node(&content_hash("overall survival")).is_none());
        assert!(g.node(&content_hash("unique criterion")).is_some());
    }

    #[test]
    fn categorical_nodes_have_no_text() {
        let recs = vec![base("NCT00000001")];
        let g = build_graph(&recs, &exact(&recs)).unwrap();
        for n in g.nodes() {
            match n.node_type.category() {
                crate::kg::NodeCategory::Categorical => assert!(n.attribute_text.is_none()),
                _ => assert!(n.attribute_text.is_some()),
            }
        }
        assert!(g.node("age:adult_older_adult").is_some());
    }
}
