//! Name-centric semantic memory: a graph of named entities carrying
//! timestamped facts, linked by open-vocabulary relations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{cosine, Feature};
use crate::providers::{EmbedError, EmbeddingProvider};
use crate::scene_graph::{ObjectId, SceneGraphSnapshot};

/// Facts included in a node's text embedding, most recent first.
pub const FEATURE_FACT_WINDOW: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum SemanticError {
    #[error("node name must not be empty")]
    EmptyName,
    #[error("{name} is already a {existing:?}, not a {requested:?}")]
    KindConflict {
        name: String,
        existing: KnowledgeKind,
        requested: KnowledgeKind,
    },
    #[error("no node named {0}")]
    NotFound(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeKind {
    Agent,
    Place,
    Object,
    Group,
    Fact,
}

impl KnowledgeKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "agent" | "person" => Some(Self::Agent),
            "place" | "building" | "location" => Some(Self::Place),
            "object" | "item" => Some(Self::Object),
            "group" => Some(Self::Group),
            "fact" => Some(Self::Fact),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "layer", content = "id", rename_all = "snake_case")]
pub enum SpatialRef {
    Building(String),
    Region(usize),
    Object(ObjectId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub fact: String,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeNode {
    pub name: String,
    pub kind: KnowledgeKind,
    pub attributes: Vec<Attribute>,
    pub text_feature: Feature,
    pub image_feature: Option<Feature>,
    pub spatial_ref: Option<SpatialRef>,
}

impl KnowledgeNode {
    pub fn facts(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.fact.as_str())
    }

    fn embedding_text(&self) -> String {
        let mut text = self.name.clone();
        for a in self.attributes.iter().rev().take(FEATURE_FACT_WINDOW) {
            text.push_str(". ");
            text.push_str(&a.fact);
        }
        text
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KnowledgeEdge {
    pub from: String,
    pub relation: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeHit {
    pub name: String,
    pub kind: KnowledgeKind,
    pub score: f64,
    pub facts: Vec<String>,
    pub neighbors: Vec<String>,
}

impl KnowledgeHit {
    pub fn render(&self) -> String {
        let mut s = format!("{} ({:?})", self.name, self.kind);
        if !self.facts.is_empty() {
            s.push_str(": ");
            s.push_str(&self.facts.join("; "));
        }
        if !self.neighbors.is_empty() {
            s.push_str(&format!(" [related: {}]", self.neighbors.join(", ")));
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegisterReport {
    pub upserts: usize,
    pub new_nodes: usize,
    pub redirected: usize,
}

/// Table-form export of the graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<KnowledgeNode>,
    pub edges: Vec<(KnowledgeEdge, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "GraphSnapshot", into = "GraphSnapshot")]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, KnowledgeNode>,
    edges: BTreeMap<KnowledgeEdge, f64>,
}

impl From<GraphSnapshot> for KnowledgeGraph {
    fn from(s: GraphSnapshot) -> Self {
        Self {
            nodes: s.nodes.into_iter().map(|n| (n.name.clone(), n)).collect(),
            edges: s.edges.into_iter().collect(),
        }
    }
}

impl From<KnowledgeGraph> for GraphSnapshot {
    fn from(g: KnowledgeGraph) -> Self {
        Self {
            nodes: g.nodes.into_values().collect(),
            edges: g.edges.into_iter().collect(),
        }
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, name: &str) -> Option<&KnowledgeNode> {
        self.nodes.get(name)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &KnowledgeNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &KnowledgeEdge> {
        self.edges.keys()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, name: &str) -> usize {
        self.edges.keys().filter(|e| e.from == name || e.to == name).count()
    }

    pub fn neighbors(&self, name: &str) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .edges
            .keys()
            .filter_map(|e| {
                if e.from == name {
                    Some(e.to.as_str())
                } else if e.to == name {
                    Some(e.from.as_str())
                } else {
                    None
                }
            })
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Create the node if absent and append facts it does not already hold.
    /// Returns true when the graph changed.
    pub fn upsert(
        &mut self,
        embedder: &dyn EmbeddingProvider,
        name: &str,
        kind: KnowledgeKind,
        facts: &[String],
        time: f64,
    ) -> Result<bool, SemanticError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(SemanticError::EmptyName);
        }
        let mut changed = false;
        if let Some(existing) = self.nodes.get(name) {
            if existing.kind != kind {
                return Err(SemanticError::KindConflict {
                    name: name.into(),
                    existing: existing.kind,
                    requested: kind,
                });
            }
        } else {
            self.nodes.insert(
                name.into(),
                KnowledgeNode {
                    name: name.into(),
                    kind,
                    attributes: Vec::new(),
                    text_feature: Vec::new(),
                    image_feature: None,
                    spatial_ref: None,
                },
            );
            changed = true;
        }
        let node = self.nodes.get_mut(name).expect("just ensured");
        for f in facts {
            let f = f.trim();
            if f.is_empty() || node.attributes.iter().any(|a| a.fact == f) {
                continue;
            }
            node.attributes.push(Attribute { fact: f.into(), time });
            changed = true;
        }
        if changed {
            node.text_feature = embedder.embed_text(&node.embedding_text())?;
        }
        Ok(changed)
    }

    pub fn set_image_feature(&mut self, name: &str, feature: Feature) -> Result<(), SemanticError> {
        let node = self
            .nodes
            .get_mut(name)
            .ok_or_else(|| SemanticError::NotFound(name.into()))?;
        node.image_feature = Some(feature);
        Ok(())
    }

    pub fn set_spatial_ref(&mut self, name: &str, r: SpatialRef) -> Result<(), SemanticError> {
        let node = self
            .nodes
            .get_mut(name)
            .ok_or_else(|| SemanticError::NotFound(name.into()))?;
        node.spatial_ref = Some(r);
        Ok(())
    }

    /// Add `(from, relation, to)` if absent. Returns true when added.
    pub fn link(&mut self, from: &str, relation: &str, to: &str, time: f64) -> Result<bool, SemanticError> {
        for n in [from, to] {
            if !self.nodes.contains_key(n) {
                return Err(SemanticError::NotFound(n.into()));
            }
        }
        let edge = KnowledgeEdge {
            from: from.into(),
            relation: relation.into(),
            to: to.into(),
        };
        if self.edges.contains_key(&edge) {
            return Ok(false);
        }
        self.edges.insert(edge, time);
        Ok(true)
    }

    /// Rank nodes by mean of text cosine and, when both sides carry one,
    /// image cosine. Ties break by name.
    pub fn retrieve_knowledge(&self, text: &[f64], image: Option<&[f64]>, k: usize) -> Vec<KnowledgeHit> {
        let mut scored: Vec<(f64, &KnowledgeNode)> = self
            .nodes
            .values()
            .map(|n| {
                let t = cosine(&n.text_feature, text);
                let s = match (&n.image_feature, image) {
                    (Some(a), Some(b)) => (t + cosine(a, b)) / 2.0,
                    _ => t,
                };
                (s, n)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.name.cmp(&b.1.name)));
        scored
            .into_iter()
            .take(k)
            .map(|(score, n)| KnowledgeHit {
                name: n.name.clone(),
                kind: n.kind,
                score,
                facts: n.facts().map(str::to_owned).collect(),
                neighbors: self.neighbors(&n.name),
            })
            .collect()
    }

    /// Upsert buildings, regions and static objects from a scene-graph
    /// snapshot, and point nodes of merged-away objects at the survivor.
    pub fn register_scene_entities(
        &mut self,
        embedder: &dyn EmbeddingProvider,
        snapshot: &SceneGraphSnapshot,
        time: f64,
    ) -> Result<RegisterReport, SemanticError> {
        let mut report = RegisterReport::default();
        let before = self.nodes.len();
        for b in &snapshot.buildings {
            self.upsert(
                embedder,
                &b.name,
                KnowledgeKind::Place,
                &[format!("a {} building", b.kind)],
                time,
            )?;
            self.set_spatial_ref(&b.name, SpatialRef::Building(b.name.clone()))?;
            report.upserts += 1;
        }
        for r in &snapshot.regions {
            let name = region_name(r.id);
            self.upsert(
                embedder,
                &name,
                KnowledgeKind::Place,
                &["a region of the town".to_string()],
                time,
            )?;
            self.set_spatial_ref(&name, SpatialRef::Region(r.id))?;
            report.upserts += 1;
            for m in &r.members {
                if self.nodes.contains_key(m) {
                    self.link(m, "located-in", &name, time)?;
                }
            }
        }
        let parents: BTreeMap<&str, &str> = snapshot
            .containment
            .iter()
            .map(|e| (e.child.as_str(), e.parent.as_str()))
            .collect();
        for o in snapshot.objects.iter().filter(|o| !o.dynamic) {
            let name = object_name(&o.tag, o.id);
            self.upsert(embedder, &name, KnowledgeKind::Object, &[format!("a {}", o.tag)], time)?;
            self.set_spatial_ref(&name, SpatialRef::Object(o.id))?;
            report.upserts += 1;
            let parent = parents
                .get(format!("object:{}", o.id).as_str())
                .and_then(|p| match p.split_once(':') {
                    Some(("building", b)) => Some(b.to_string()),
                    Some(("region", r)) => r.parse().ok().map(region_name),
                    _ => None,
                });
            if let Some(parent) = parent {
                if self.nodes.contains_key(&parent) {
                    self.link(&name, "located-in", &parent, time)?;
                }
            }
        }
        let redirects: BTreeMap<ObjectId, ObjectId> = snapshot.redirects.iter().copied().collect();
        let resolve = |mut id: ObjectId| {
            while let Some(&n) = redirects.get(&id) {
                id = n;
            }
            id
        };
        for node in self.nodes.values_mut() {
            if let Some(SpatialRef::Object(id)) = node.spatial_ref {
                let live = resolve(id);
                if live != id {
                    node.spatial_ref = Some(SpatialRef::Object(live));
                    report.redirected += 1;
                }
            }
        }
        report.new_nodes = self.nodes.len() - before;
        Ok(report)
    }

    /// Up to `n` facts sampled deterministically from the graph.
    pub fn sample_items(&self, n: usize, seed: u64) -> Vec<(String, KnowledgeKind, String)> {
        use rand::seq::IndexedRandom;
        use rand::SeedableRng;
        let all: Vec<(String, KnowledgeKind, String)> = self
            .nodes
            .values()
            .flat_map(|node| {
                node.attributes
                    .iter()
                    .map(move |a| (node.name.clone(), node.kind, a.fact.clone()))
            })
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        all.choose_multiple(&mut rng, n).cloned().collect()
    }
}

pub fn region_name(id: usize) -> String {
    format!("region {id}")
}

pub fn object_name(tag: &str, id: ObjectId) -> String {
    format!("{tag} #{id}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::HashEmbedder;

    fn facts(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn upsert_is_idempotent() {
        let e = HashEmbedder::default();
        let mut g = KnowledgeGraph::new();
        assert!(g
            .upsert(
                &e,
                "Elizabeth Mensah",
                KnowledgeKind::Agent,
                &facts(&["works as a nurse"]),
                1.0
            )
            .unwrap());
        let snap = g.clone();
        assert!(!g
            .upsert(
                &e,
                "Elizabeth Mensah",
                KnowledgeKind::Agent,
                &facts(&["works as a nurse"]),
                2.0
            )
            .unwrap());
        assert_eq!(g, snap);
        assert_eq!(g.len(), 1);
        assert_eq!(g.node("Elizabeth Mensah").unwrap().attributes.len(), 1);
    }

    #[test]
    fn kind_conflict_rejected() {
        let e = HashEmbedder::default();
        let mut g = KnowledgeGraph::new();
        g.upsert(&e, "Cafe", KnowledgeKind::Place, &[], 0.0).unwrap();
        assert!(matches!(
            g.upsert(&e, "Cafe", KnowledgeKind::Agent, &[], 0.0),
            Err(SemanticError::KindConflict { .. })
        ));
        assert_eq!(
            g.upsert(&e, " ", KnowledgeKind::Agent, &[], 0.0),
            Err(SemanticError::EmptyName)
        );
    }

    #[test]
    fn link_adds_once_and_requires_endpoints() {
        let e = HashEmbedder::default();
        let mut g = KnowledgeGraph::new();
        g.upsert(&e, "Ann", KnowledgeKind::Agent, &[], 0.0).unwrap();
        g.upsert(&e, "Hosts", KnowledgeKind::Group, &[], 0.0).unwrap();
        assert!(g.link("Ann", "member-of", "Hosts", 0.0).unwrap());
        assert_eq!((g.degree("Ann"), g.degree("Hosts")), (1, 1));
        assert!(!g.link("Ann", "member-of", "Hosts", 5.0).unwrap());
        assert_eq!(g.edge_count(), 1);
        assert_eq!(
            g.link("Ann", "friend-of", "Zed", 0.0),
            Err(SemanticError::NotFound("Zed".into()))
        );
    }

    #[test]
    fn retrieval_puts_own_feature_first_and_caps_k() {
        let e = HashEmbedder::default();
        let mut g = KnowledgeGraph::new();
        g.upsert(&e, "Cafe", KnowledgeKind::Place, &facts(&["serves coffee"]), 0.0)
            .unwrap();
        g.upsert(&e, "Library", KnowledgeKind::Place, &facts(&["quiet reading"]), 0.0)
            .unwrap();
        g.upsert(&e, "Bob", KnowledgeKind::Agent, &facts(&["likes books"]), 0.0)
            .unwrap();
        g.link("Bob", "visits", "Library", 0.0).unwrap();
        let q = g.node("Library").unwrap().text_feature.clone();
        let hits = g.retrieve_knowledge(&q, None, 10);
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].name, "Library");
        assert_eq!(hits[0].neighbors, vec!["Bob".to_string()]);
        assert!(KnowledgeGraph::new().retrieve_knowledge(&q, None, 3).is_empty());
    }

    #[test]
    fn feature_tracks_recent_facts() {
        let e = HashEmbedder::default();
        let mut g = KnowledgeGraph::new();
        g.upsert(&e, "Cafe", KnowledgeKind::Place, &[], 0.0).unwrap();
        let before = g.node("Cafe").unwrap().text_feature.clone();
        g.upsert(&e, "Cafe", KnowledgeKind::Place, &facts(&["party tonight"]), 1.0)
            .unwrap();
        assert_ne!(g.node("Cafe").unwrap().text_feature, before);
    }

    #[test]
    fn snapshot_round_trip() {
        let e = HashEmbedder::new(16);
        let mut g = KnowledgeGraph::new();
        g.upsert(&e, "Ann", KnowledgeKind::Agent, &facts(&["a baker"]), 0.5)
            .unwrap();
        g.upsert(&e, "Hosts", KnowledgeKind::Group, &[], 0.0).unwrap();
        g.link("Ann", "member-of", "Hosts", 0.25).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        assert!(json.contains("\"nodes\"") && json.contains("\"edges\""));
        let back: KnowledgeGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
