//! Loading a servable model snapshot from files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inductive::{Recommender, TextIndexScope};
use crate::kg::{read_node_manifest, NodeType};
use crate::kge::KgeModel;
use crate::text::TextSpace;

const BUNDLE_FILES: [&str; 4] = ["header.json", "entities.vec", "relations.vec", "projections.bin"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotPaths {
    pub model_bundle: PathBuf,
    pub node_manifest: PathBuf,
    pub text_space: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotInfo {
    pub snapshot_id: String,
    pub kind: String,
    pub dim: usize,
    pub text_dim: usize,
    pub entities: usize,
    pub text_index_scope: TextIndexScope,
    /// Trial and textual nodes indexed in the text space, per type.
    pub text_index_sizes: Vec<(NodeType, usize)>,
    /// Nodes per type in the KGE index.
    pub kg_index_sizes: Vec<(NodeType, usize)>,
    /// Seconds since the Unix epoch.
    pub loaded_at: u64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub snapshot_id: String,
    pub recommender: Recommender,
    pub paths: SnapshotPaths,
    pub loaded_at: u64,
}

impl Snapshot {
    pub fn info(&self) -> SnapshotInfo {
        let model = self.recommender.model();
        SnapshotInfo {
            snapshot_id: self.snapshot_id.clone(),
            kind: model.kind().name().to_string(),
            dim: model.dim(),
            text_dim: self.recommender.text_space().dim(),
            entities: model.entities().len(),
            text_index_scope: self.recommender.text_index().scope(),
            text_index_sizes: self.recommender.text_index().bucket_sizes(),
            kg_index_sizes: self.recommender.kg_index().bucket_sizes(),
            loaded_at: self.loaded_at,
        }
    }
}

fn hash_file(h: &mut Sha256, label: &str, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    h.update(label.as_bytes());
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(&bytes);
    Ok(())
}

/// Content hash of the snapshot's input files.
pub fn snapshot_id(paths: &SnapshotPaths) -> Result<String> {
    let mut h = Sha256::new();
    for name in BUNDLE_FILES {
        let p = paths.model_bundle.join(name);
        if p.exists() {
            hash_file(&mut h, name, &p)?;
        }
    }
    hash_file(&mut h, "nodes", &paths.node_manifest)?;
    hash_file(&mut h, "text_space", &paths.text_space)?;
    Ok(hex::encode(h.finalize()))
}

/// Loads the model bundle, node manifest and text space, checks that they
/// agree, and builds the indexes.
pub fn load_snapshot(paths: &SnapshotPaths, scope: TextIndexScope) -> Result<Snapshot> {
    let snapshot_id = snapshot_id(paths)?;
    let nodes = read_node_manifest(&paths.node_manifest)?;
    let model = KgeModel::load(&paths.model_bundle, nodes.iter().map(|n| (n.id.clone(), n.node_type)))?;
    let text_space = TextSpace::load(&paths.text_space)?;
    let recommender = Recommender::new(text_space, model, &nodes, scope)?;
    let loaded_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(Snapshot {
        snapshot_id,
        recommender,
        paths: paths.clone(),
        loaded_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{KnowledgeGraph, Node, NodeId, RelationType, Triple, NODES_FILE};
    use crate::kge::{train_kge, ModelKind, TrainConfig};
    use crate::text::{train_text_space, TextSpaceParams};

    fn write_fixture(dir: &Path) -> SnapshotPaths {
        let mut g = KnowledgeGraph::new();
        let titles = ["aspirin in stroke", "warfarin in atrial fibrillation", "aspirin after stroke"];
        for (i, t) in titles.iter().enumerate() {
            g.add_node(Node {
                id: NodeId::new(format!("NCT{:08}", i + 1)),
                node_type: NodeType::Nct,
                attribute_text: Some(t.to_string()),
            })
            .unwrap();
        }
        g.add_node(Node {
            id: NodeId::new(format!("{:032x}", 1)),
            node_type: NodeType::Pep,
            attribute_text: Some("recurrent stroke".into()),
        })
        .unwrap();
        for i in 0..3 {
            g.upsert_triple(Triple::new(format!("NCT{:08}", i + 1), RelationType::NctPep, format!("{:032x}", 1))).unwrap();
        }
        let gdir = dir.join("graph");
        g.write_dir(&gdir).unwrap();
        let cfg = TrainConfig {
            dim: 4,
            epochs: 3,
            ..TrainConfig::new(ModelKind::Transe)
        };
        let m = train_kge(&g, None, &cfg).unwrap();
        m.save(&dir.join("model")).unwrap();
        let params = TextSpaceParams {
            dim: 8,
            buckets: 512,
            ..Default::default()
        };
        let ts = train_text_space(&titles, &params).unwrap();
        ts.save(&dir.join("text.vec")).unwrap();
        SnapshotPaths {
            model_bundle: dir.join("model"),
            node_manifest: gdir.join(NODES_FILE),
            text_space: dir.join("text.vec"),
        }
    }

    #[test]
    fn loads_and_hashes_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path());
        let a = load_snapshot(&paths, TextIndexScope::SameType).unwrap();
        let b = load_snapshot(&paths, TextIndexScope::SameType).unwrap();
        assert_eq!(a.snapshot_id, b.snapshot_id);
        assert_eq!(a.snapshot_id.len(), 64);
        let info = a.info();
        assert_eq!(info.entities, 4);
        assert_eq!(info.text_index_sizes, vec![(NodeType::Nct, 3), (NodeType::Pep, 1)]);
        assert!(!info.kg_index_sizes.is_empty());
    }

    #[test]
    fn manifest_missing_an_entity_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path());
        let text = fs::read_to_string(&paths.node_manifest).unwrap();
        let kept: Vec<&str> = text.lines().filter(|l| !l.contains("NCT00000002")).collect();
        fs::write(&paths.node_manifest, kept.join("\n") + "\n").unwrap();
        let err = load_snapshot(&paths, TextIndexScope::SameType).unwrap_err().to_string();
        assert!(err.contains("NCT00000002"), "{err}");
    }
}
