//! Typed knowledge graph of clinical trials.
//!
//! Nodes carry one of fifteen type tags and a deterministic id; triples are
//! typed by one of fifteen relation tags whose (head, tail) signature is fixed.
//! The graph has set semantics for both nodes and triples.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Node type tags.
///
/// ECR/ICR are exclusion/inclusion criteria, CNT is country, STA is overall
/// status and OEP/PEP/SEP are other/primary/secondary endpoints. These
/// expansions are inferred from usage; the source schema figure is not
/// available in text form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NodeType {
    Age,
    Cnt,
    Ecr,
    Gen,
    Icr,
    Ind,
    Int,
    Moa,
    Nct,
    Ph,
    Sta,
    Tgt,
    Oep,
    Pep,
    Sep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeCategory {
    Categorical,
    Registry,
    Concept,
    Textual,
}

impl NodeType {
    pub const ALL: [NodeType; 15] = [
        NodeType::Age,
        NodeType::Cnt,
        NodeType::Ecr,
        NodeType::Gen,
        NodeType::Icr,
        NodeType::Ind,
        NodeType::Int,
        NodeType::Moa,
        NodeType::Nct,
        NodeType::Ph,
        NodeType::Sta,
        NodeType::Tgt,
        NodeType::Oep,
        NodeType::Pep,
        NodeType::Sep,
    ];

    pub const TEXTUAL: [NodeType; 5] = [
        NodeType::Ecr,
        NodeType::Icr,
        NodeType::Oep,
        NodeType::Pep,
        NodeType::Sep,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            NodeType::Age => "AGE",
            NodeType::Cnt => "CNT",
            NodeType::Ecr => "ECR",
            NodeType::Gen => "GEN",
            NodeType::Icr => "ICR",
            NodeType::Ind => "IND",
            NodeType::Int => "INT",
            NodeType::Moa => "MOA",
            NodeType::Nct => "NCT",
            NodeType::Ph => "PH",
            NodeType::Sta => "STA",
            NodeType::Tgt => "TGT",
            NodeType::Oep => "OEP",
            NodeType::Pep => "PEP",
            NodeType::Sep => "SEP",
        }
    }

    pub fn category(self) -> NodeCategory {
        match self {
            NodeType::Age | NodeType::Gen | NodeType::Ph | NodeType::Sta | NodeType::Cnt => {
                NodeCategory::Categorical
            }
            NodeType::Nct => NodeCategory::Registry,
            NodeType::Ind | NodeType::Int | NodeType::Moa | NodeType::Tgt => NodeCategory::Concept,
            NodeType::Ecr | NodeType::Icr | NodeType::Oep | NodeType::Pep | NodeType::Sep => {
                NodeCategory::Textual
            }
        }
    }

    pub fn is_textual(self) -> bool {
        self.category() == NodeCategory::Textual
    }

    /// Types that can be requested as recommendations.
    pub fn is_recommendable(self) -> bool {
        !matches!(self.category(), NodeCategory::Categorical)
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for NodeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NodeType::ALL
            .into_iter()
            .find(|t| t.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownNodeType(s.to_string()))
    }
}

impl From<NodeType> for String {
    fn from(t: NodeType) -> String {
        t.tag().to_string()
    }
}

impl TryFrom<String> for NodeType {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RelationType {
    IntMoa,
    IntTgt,
    MoaTgt,
    NctAge,
    NctCnt,
    NctEcr,
    NctGen,
    NctIcr,
    NctInd,
    NctInt,
    NctPh,
    NctSta,
    NctOep,
    NctPep,
    NctSep,
}

impl RelationType {
    pub const ALL: [RelationType; 15] = [
        RelationType::IntMoa,
        RelationType::IntTgt,
        RelationType::MoaTgt,
        RelationType::NctAge,
        RelationType::NctCnt,
        RelationType::NctEcr,
        RelationType::NctGen,
        RelationType::NctIcr,
        RelationType::NctInd,
        RelationType::NctInt,
        RelationType::NctPh,
        RelationType::NctSta,
        RelationType::NctOep,
        RelationType::NctPep,
        RelationType::NctSep,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            RelationType::IntMoa => "INT:MOA",
            RelationType::IntTgt => "INT:TGT",
            RelationType::MoaTgt => "MOA:TGT",
            RelationType::NctAge => "NCT:AGE",
            RelationType::NctCnt => "NCT:CNT",
            RelationType::NctEcr => "NCT:ECR",
            RelationType::NctGen => "NCT:GEN",
            RelationType::NctIcr => "NCT:ICR",
            RelationType::NctInd => "NCT:IND",
            RelationType::NctInt => "NCT:INT",
            RelationType::NctPh => "NCT:PH",
            RelationType::NctSta => "NCT:ST",
            RelationType::NctOep => "NCT:oep",
            RelationType::NctPep => "NCT:pep",
            RelationType::NctSep => "NCT:sep",
        }
    }

    /// `(head type, tail type)`.
    pub fn signature(self) -> (NodeType, NodeType) {
        use NodeType::*;
        match self {
            RelationType::IntMoa => (Int, Moa),
            RelationType::IntTgt => (Int, Tgt),
            RelationType::MoaTgt => (Moa, Tgt),
            RelationType::NctAge => (Nct, Age),
            RelationType::NctCnt => (Nct, Cnt),
            RelationType::NctEcr => (Nct, Ecr),
            RelationType::NctGen => (Nct, Gen),
            RelationType::NctIcr => (Nct, Icr),
            RelationType::NctInd => (Nct, Ind),
            RelationType::NctInt => (Nct, Int),
            RelationType::NctPh => (Nct, Ph),
            RelationType::NctSta => (Nct, Sta),
            RelationType::NctOep => (Nct, Oep),
            RelationType::NctPep => (Nct, Pep),
            RelationType::NctSep => (Nct, Sep),
        }
    }

    /// The trial-level relation whose tail has type `tail`.
    pub fn from_trial_to(tail: NodeType) -> Option<RelationType> {
        RelationType::ALL
            .into_iter()
            .find(|r| r.signature() == (NodeType::Nct, tail))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RelationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        RelationType::ALL
            .into_iter()
            .find(|r| r.tag().eq_ignore_ascii_case(s))
            .or_else(|| {
                // NCT:STA is accepted as a spelling of NCT:ST.
                s.eq_ignore_ascii_case("NCT:STA").then_some(RelationType::NctSta)
            })
            .ok_or_else(|| Error::UnknownRelation(s.to_string()))
    }
}

impl From<RelationType> for String {
    fn from(r: RelationType) -> String {
        r.tag().to_string()
    }
}

impl TryFrom<String> for RelationType {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub node_type: NodeType,
    pub attribute_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: NodeId,
    pub relation: RelationType,
    pub tail: NodeId,
}

impl Triple {
    pub fn new(head: impl Into<NodeId>, relation: RelationType, tail: impl Into<NodeId>) -> Self {
        Triple {
            head: head.into(),
            relation,
            tail: tail.into(),
        }
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// NFC, lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize_text(raw: &str) -> String {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Collapse whitespace runs (tabs and newlines included) without changing case.
pub fn clean_title(raw: &str) -> String {
    raw.nfc().collect::<String>().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase hex MD5 of the UTF-8 bytes of `text`.
pub fn content_hash(text: &str) -> String {
    hex::encode(Md5::digest(text.as_bytes()))
}

/// True for a 32-character lowercase hex digest.
pub fn is_content_hash(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

pub fn is_registry_id(s: &str) -> bool {
    s.len() == 11 && s.starts_with("NCT") && s[3..].bytes().all(|b| b.is_ascii_digit())
}

fn categorical_token(node_type: NodeType, raw: &str) -> String {
    let mut token = String::new();
    for c in normalize_text(raw).chars() {
        if c.is_alphanumeric() {
            token.push(c);
        } else if !token.is_empty() && !token.ends_with('_') {
            token.push('_');
        }
    }
    while token.ends_with('_') {
        token.pop();
    }
    format!("{}:{}", node_type.tag().to_ascii_lowercase(), token)
}

/// Deterministic node id for a raw entity value.
pub fn assign_node_id(node_type: NodeType, raw_value: &str, concept_id: Option<&str>) -> Result<NodeId> {
    let normalized = normalize_text(raw_value);
    match node_type.category() {
        NodeCategory::Registry => {
            let id = raw_value.trim();
            if id.is_empty() {
                return Err(Error::EmptyValue(node_type));
            }
            if !is_registry_id(id) {
                return Err(Error::MalformedRegistryId(id.to_string()));
            }
            Ok(NodeId::new(id))
        }
        NodeCategory::Concept => {
            if let Some(cid) = concept_id.map(str::trim).filter(|c| !c.is_empty()) {
                return Ok(NodeId::new(cid));
            }
            if normalized.is_empty() {
                return Err(Error::EmptyValue(node_type));
            }
            Ok(NodeId::new(content_hash(&normalized)))
        }
        NodeCategory::Textual => {
            if normalized.is_empty() {
                return Err(Error::EmptyValue(node_type));
            }
            Ok(NodeId::new(content_hash(&normalized)))
        }
        NodeCategory::Categorical => {
            let token = categorical_token(node_type, raw_value);
            if token.ends_with(':') {
                return Err(Error::EmptyValue(node_type));
            }
            Ok(NodeId::new(token))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count_by_type: BTreeMap<NodeType, usize>,
    pub edge_count_by_type: BTreeMap<RelationType, usize>,
    pub total_nodes: usize,
    pub total_edges: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<NodeId, Node>,
    triples: BTreeSet<Triple>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a node if its id is new. An existing node keeps its attribute
    /// text; a type conflict is a schema violation.
    pub fn add_node(&mut self, node: Node) -> Result<&Node> {
        use std::collections::btree_map::Entry;
        match self.nodes.entry(node.id.clone()) {
            Entry::Occupied(e) => {
                if e.get().node_type != node.node_type {
                    return Err(Error::SchemaViolation(format!(
                        "node {} already exists with type {}, not {}",
                        node.id,
                        e.get().node_type,
                        node.node_type
                    )));
                }
                Ok(e.into_mut())
            }
            Entry::Vacant(e) => Ok(e.insert(node)),
        }
    }

    /// Inserts a triple. Returns `true` if the graph changed.
    pub fn upsert_triple(&mut self, triple: Triple) -> Result<bool> {
        let (head_type, tail_type) = triple.relation.signature();
        for (id, expected) in [(&triple.head, head_type), (&triple.tail, tail_type)] {
            let node = self
                .nodes
                .get(id)
                .ok_or_else(|| Error::UnknownNode(id.to_string()))?;
            if node.node_type != expected {
                return Err(Error::SchemaViolation(format!(
                    "{} expects {} at {}, found {} node {}",
                    triple.relation,
                    expected,
                    if expected == head_type && id == &triple.head { "head" } else { "tail" },
                    node.node_type,
                    id
                )));
            }
        }
        Ok(self.triples.insert(triple))
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains_triple(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    /// Nodes in bytewise id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Triples in (head, relation, tail) order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn nodes_of_type(&self, node_type: NodeType) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(move |n| n.node_type == node_type)
    }

    /// Every triple whose endpoint types do not match its relation signature.
    pub fn schema_violations(&self) -> Vec<&Triple> {
        self.triples
            .iter()
            .filter(|t| {
                let (h, tl) = t.relation.signature();
                self.nodes.get(&t.head).map(|n| n.node_type) != Some(h)
                    || self.nodes.get(&t.tail).map(|n| n.node_type) != Some(tl)
            })
            .collect()
    }

    pub fn stats(&self) -> GraphStats {
        graph_stats(self)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let nodes_path = dir.join(NODES_FILE);
        write_lines(&nodes_path, self.nodes.values().map(|n| {
            format!(
                "{}\t{}\t{}",
                n.id,
                n.node_type.tag(),
                n.attribute_text.as_deref().unwrap_or("")
            )
        }))?;
        write_triples(&dir.join(TRIPLES_FILE), self.triples.iter())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut graph = KnowledgeGraph::new();
        for node in read_node_manifest(&dir.join(NODES_FILE))? {
            graph.add_node(node)?;
        }
        let triples_path = dir.join(TRIPLES_FILE);
        for (line, triple) in read_triples(&triples_path)? {
            graph
                .upsert_triple(triple)
                .map_err(|e| Error::format(&triples_path, line, e.to_string()))?;
        }
        Ok(graph)
    }
}

pub const NODES_FILE: &str = "nodes.tsv";
pub const TRIPLES_FILE: &str = "triples.tsv";

pub fn graph_stats(graph: &KnowledgeGraph) -> GraphStats {
    let mut node_count_by_type: BTreeMap<NodeType, usize> =
        NodeType::ALL.into_iter().map(|t| (t, 0)).collect();
    let mut edge_count_by_type: BTreeMap<RelationType, usize> =
        RelationType::ALL.into_iter().map(|r| (r, 0)).collect();
    for n in graph.nodes() {
        *node_count_by_type.entry(n.node_type).or_default() += 1;
    }
    for t in graph.triples() {
        *edge_count_by_type.entry(t.relation).or_default() += 1;
    }
    GraphStats {
        total_nodes: node_count_by_type.values().sum(),
        total_edges: edge_count_by_type.values().sum(),
        node_count_by_type,
        edge_count_by_type,
    }
}

pub(crate) fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        let line = line.as_ref();
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

pub fn write_triples<'a>(path: &Path, triples: impl IntoIterator<Item = &'a Triple>) -> Result<()> {
    write_lines(
        path,
        triples
            .into_iter()
            .map(|t| format!("{}\t{}\t{}", t.head, t.relation.tag(), t.tail)),
    )
}

/// Triples with their 1-based line numbers.
pub fn read_triples(path: &Path) -> Result<Vec<(usize, Triple)>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(h), Some(r), Some(t), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::format(path, i + 1, "expected 3 tab-separated fields"));
        };
        let relation = r
            .parse()
            .map_err(|e: Error| Error::format(path, i + 1, e.to_string()))?;
        out.push((i + 1, Triple::new(h, relation, t)));
    }
    Ok(out)
}

pub fn read_node_manifest(path: &Path) -> Result<Vec<Node>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(tag), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::format(path, i + 1, "expected 3 tab-separated fields"));
        };
        let node_type: NodeType = tag
            .parse()
            .map_err(|e: Error| Error::format(path, i + 1, e.to_string()))?;
        out.push(Node {
            id: NodeId::new(id),
            node_type,
            attribute_text: (!text.is_empty()).then(|| text.to_string()),
        });
    }
    Ok(out)
}

/// Dense integer view of a graph's entities, in bytewise id order.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityTable {
    ids: Vec<NodeId>,
    types: Vec<NodeType>,
    index: std::collections::HashMap<NodeId, usize>,
    by_type: BTreeMap<NodeType, Vec<usize>>,
}

impl EntityTable {
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        Self::from_nodes(graph.nodes().map(|n| (n.id.clone(), n.node_type)))
    }

    pub fn from_nodes(nodes: impl IntoIterator<Item = (NodeId, NodeType)>) -> Self {
        let mut pairs: Vec<(NodeId, NodeType)> = nodes.into_iter().collect();
        pairs.sort();
        pairs.dedup_by(|a, b| a.0 == b.0);
        let mut by_type: BTreeMap<NodeType, Vec<usize>> = BTreeMap::new();
        let mut index = std::collections::HashMap::with_capacity(pairs.len());
        for (i, (id, t)) in pairs.iter().enumerate() {
            by_type.entry(*t).or_default().push(i);
            index.insert(id.clone(), i);
        }
        let (ids, types) = pairs.into_iter().unzip();
        EntityTable {
            ids,
            types,
            index,
            by_type,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &NodeId {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn node_type(&self, i: usize) -> NodeType {
        self.types[i]
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn lookup(&self, id: &str) -> Result<usize> {
        self.get(id).ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Entity indices of one type, ascending.
    pub fn of_type(&self, node_type: NodeType) -> &[usize] {
        self.by_type.get(&node_type).map(Vec::as_slice).unwrap_or(&[])
    }
}
