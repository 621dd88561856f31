//! Concept graph model.
//!
//! A [`ConceptGraph`] holds concepts keyed by their normalized label and typed
//! relationships between them. Graphs are only produced by [`ConceptGraph::build`]
//! and [`ConceptGraph::merge`], both of which validate every invariant, so a
//! graph value is always well formed and can be shared freely between readers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowercases and collapses runs of whitespace.
pub fn normalize_label(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Identity of a concept: its normalized label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(String);

impl ConceptId {
    pub fn new(raw: &str) -> Result<Self, GraphError> {
        let label = normalize_label(raw);
        if label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        Ok(Self(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    BroaderContext,
    Detailing,
    Alternative,
    Causal,
    Negation,
    Connected,
    Goal,
}

impl RelationKind {
    pub const ALL: [RelationKind; 7] = [
        RelationKind::BroaderContext,
        RelationKind::Detailing,
        RelationKind::Alternative,
        RelationKind::Causal,
        RelationKind::Negation,
        RelationKind::Connected,
        RelationKind::Goal,
    ];

    /// Directed kinds; together they must form a DAG.
    pub const HIERARCHY: [RelationKind; 4] = [
        RelationKind::Detailing,
        RelationKind::Goal,
        RelationKind::Causal,
        RelationKind::BroaderContext,
    ];

    pub fn is_directed(self) -> bool {
        Self::HIERARCHY.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::BroaderContext => "broader_context",
            RelationKind::Detailing => "detailing",
            RelationKind::Alternative => "alternative",
            RelationKind::Causal => "causal",
            RelationKind::Negation => "negation",
            RelationKind::Connected => "connected",
            RelationKind::Goal => "goal",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GraphError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Explicitness {
    #[default]
    Explicit,
    Implied,
}

impl Explicitness {
    pub fn as_str(self) -> &'static str {
        match self {
            Explicitness::Explicit => "explicit",
            Explicitness::Implied => "implied",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub fn opposes(self, other: Polarity) -> bool {
        matches!(
            (self, other),
            (Polarity::Positive, Polarity::Negative) | (Polarity::Negative, Polarity::Positive)
        )
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
            Polarity::Neutral => "0",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "+" | "positive" => Some(Polarity::Positive),
            "-" | "negative" => Some(Polarity::Negative),
            "0" | "neutral" => Some(Polarity::Neutral),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
}

impl Attribute {
    pub fn new(text: &str) -> Self {
        Self {
            text: normalize_label(text),
            polarity: None,
        }
    }
}

/// Who introduced a concept: the write-up author or an LLM response.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    #[default]
    Author,
    Llm(String),
}

impl Origin {
    pub fn is_llm(&self) -> bool {
        matches!(self, Origin::Llm(_))
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Author => f.write_str("author"),
            Origin::Llm(response) => write!(f, "llm:{response}"),
        }
    }
}

impl FromStr for Origin {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "author" => Ok(Origin::Author),
            _ => match s.strip_prefix("llm:") {
                Some(id) if !id.is_empty() && !id.contains(char::is_whitespace) => {
                    Ok(Origin::Llm(id.to_string()))
                }
                _ => Err(GraphError::UnknownOrigin(s.to_string())),
            },
        }
    }
}

impl Serialize for Origin {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Origin {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    id: ConceptId,
    #[serde(default)]
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstraction_note: Option<String>,
    /// Sentence ids of annotation frames that mention this concept.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub frames: BTreeSet<String>,
}

impl Concept {
    pub fn new(label: &str) -> Result<Self, GraphError> {
        Ok(Self {
            id: ConceptId::new(label)?,
            attributes: Vec::new(),
            origin: Origin::Author,
            cluster: None,
            abstraction_note: None,
            frames: BTreeSet::new(),
        })
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_cluster(mut self, cluster: &str) -> Self {
        self.cluster = Some(cluster.to_string());
        self
    }

    pub fn with_attribute(mut self, text: &str) -> Self {
        self.attributes.push(Attribute::new(text));
        self
    }

    pub fn id(&self) -> &ConceptId {
        &self.id
    }

    pub fn label(&self) -> &str {
        self.id.as_str()
    }

    pub fn has_attribute(&self, text: &str) -> bool {
        let text = normalize_label(text);
        self.attributes.iter().any(|a| a.text == text)
    }

    fn absorb(&mut self, other: &Concept) {
        for attr in &other.attributes {
            match self.attributes.iter_mut().find(|a| a.text == attr.text) {
                Some(existing) => {
                    if existing.polarity.is_none() {
                        existing.polarity = attr.polarity;
                    }
                }
                None => self.attributes.push(attr.clone()),
            }
        }
        if self.cluster.is_none() {
            self.cluster = other.cluster.clone();
        }
        if self.abstraction_note.is_none() {
            self.abstraction_note = other.abstraction_note.clone();
        }
        self.frames.extend(other.frames.iter().cloned());
    }
}

/// A relationship as supplied by a caller, endpoints named by label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationshipDescriptor {
    pub from: String,
    pub to: String,
    pub kind: RelationKind,
    pub explicitness: Explicitness,
}

impl RelationshipDescriptor {
    pub fn new(from: &str, kind: RelationKind, to: &str) -> Self {
        Self {
            from: from.to_string(),
            to: to.to_string(),
            kind,
            explicitness: Explicitness::Explicit,
        }
    }

    pub fn implied(mut self) -> Self {
        self.explicitness = Explicitness::Implied;
        self
    }
}

/// A validated relationship. Undirected kinds are stored with `from < to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relationship {
    pub from: ConceptId,
    pub to: ConceptId,
    pub kind: RelationKind,
    pub explicitness: Explicitness,
}

impl Relationship {
    pub fn touches(&self, id: &ConceptId) -> bool {
        &self.from == id || &self.to == id
    }

    pub fn other_end(&self, id: &ConceptId) -> Option<&ConceptId> {
        if &self.from == id {
            Some(&self.to)
        } else if &self.to == id {
            Some(&self.from)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("empty-label: concept label is empty after normalization")]
    EmptyLabel,
    #[error("duplicate-label: concept `{0}` is declared more than once")]
    DuplicateLabel(String),
    #[error("dangling-endpoint: {from} -{kind}-> {to} references undeclared concept `{missing}`")]
    DanglingEndpoint {
        from: String,
        to: String,
        kind: RelationKind,
        missing: String,
    },
    #[error("self-loop: `{label}` -{kind}-> itself")]
    SelfLoop { label: String, kind: RelationKind },
    #[error("duplicate-relationship: {from} -{kind}-> {to} is declared more than once")]
    DuplicateRelationship {
        from: String,
        to: String,
        kind: RelationKind,
    },
    #[error("cycle-in-hierarchy: {}", .0.join(" -> "))]
    CycleInHierarchy(Vec<String>),
    #[error("merged-cycle: merge creates hierarchy cycle {}", .0.join(" -> "))]
    MergedCycle(Vec<String>),
    #[error("unknown-concept: `{0}`")]
    UnknownConcept(String),
    #[error("unknown-kind: `{0}` is not a relationship kind")]
    UnknownKind(String),
    #[error("unknown-origin: `{0}` (expected `author` or `llm:<response-id>`)")]
    UnknownOrigin(String),
    #[error("dangling-origin: concept `{label}` cites response `{response}` which is not in the session")]
    DanglingOrigin { label: String, response: String },
}

impl GraphError {
    pub fn name(&self) -> &'static str {
        match self {
            GraphError::EmptyLabel => "empty-label",
            GraphError::DuplicateLabel(_) => "duplicate-label",
            GraphError::DanglingEndpoint { .. } => "dangling-endpoint",
            GraphError::SelfLoop { .. } => "self-loop",
            GraphError::DuplicateRelationship { .. } => "duplicate-relationship",
            GraphError::CycleInHierarchy(_) => "cycle-in-hierarchy",
            GraphError::MergedCycle(_) => "merged-cycle",
            GraphError::UnknownConcept(_) => "unknown-concept",
            GraphError::UnknownKind(_) => "unknown-kind",
            GraphError::UnknownOrigin(_) => "unknown-origin",
            GraphError::DanglingOrigin { .. } => "dangling-origin",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptGraph {
    concepts: BTreeMap<ConceptId, Concept>,
    relationships: BTreeSet<Relationship>,
    pub provenance_note: String,
}

impl ConceptGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a validated graph. The result does not depend on input order.
    pub fn build(
        concepts: Vec<Concept>,
        relationships: Vec<RelationshipDescriptor>,
    ) -> Result<Self, GraphError> {
        let mut concepts = concepts;
        concepts.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = BTreeMap::new();
        for concept in concepts {
            if by_id.contains_key(&concept.id) {
                return Err(GraphError::DuplicateLabel(concept.id.0));
            }
            by_id.insert(concept.id.clone(), concept);
        }

        let mut resolved = Vec::with_capacity(relationships.len());
        for desc in &relationships {
            resolved.push(resolve(&by_id, desc)?);
        }
        resolved.sort();
        let mut edges = BTreeSet::new();
        let mut triples = BTreeSet::new();
        for rel in resolved {
            if !triples.insert((rel.from.clone(), rel.to.clone(), rel.kind)) {
                return Err(GraphError::DuplicateRelationship {
                    from: rel.from.0,
                    to: rel.to.0,
                    kind: rel.kind,
                });
            }
            edges.insert(rel);
        }

        let graph = Self {
            concepts: by_id,
            relationships: edges,
            provenance_note: String::new(),
        };
        if let Some(cycle) = graph.find_hierarchy_cycle() {
            return Err(GraphError::CycleInHierarchy(cycle));
        }
        Ok(graph)
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.provenance_note = note.to_string();
        self
    }

    /// Union by normalized label. Base concepts keep their origin; attributes
    /// are unioned. An implied relationship that the other side states
    /// explicitly becomes explicit.
    pub fn merge(&self, delta: &ConceptGraph) -> Result<ConceptGraph, GraphError> {
        let mut concepts = self.concepts.clone();
        for (id, concept) in &delta.concepts {
            match concepts.get_mut(id) {
                Some(existing) => existing.absorb(concept),
                None => {
                    concepts.insert(id.clone(), concept.clone());
                }
            }
        }

        let mut by_triple: BTreeMap<(ConceptId, ConceptId, RelationKind), Explicitness> =
            BTreeMap::new();
        for rel in self.relationships.iter().chain(delta.relationships.iter()) {
            let key = (rel.from.clone(), rel.to.clone(), rel.kind);
            let slot = by_triple.entry(key).or_insert(rel.explicitness);
            if rel.explicitness == Explicitness::Explicit {
                *slot = Explicitness::Explicit;
            }
        }
        let relationships = by_triple
            .into_iter()
            .map(|((from, to, kind), explicitness)| Relationship {
                from,
                to,
                kind,
                explicitness,
            })
            .collect();

        let provenance_note = match (self.provenance_note.as_str(), delta.provenance_note.as_str()) {
            (base, "") => base.to_string(),
            ("", other) => other.to_string(),
            (base, other) if base == other => base.to_string(),
            (base, other) => format!("{base} + {other}"),
        };

        let merged = ConceptGraph {
            concepts,
            relationships,
            provenance_note,
        };
        if let Some(cycle) = merged.find_hierarchy_cycle() {
            return Err(GraphError::MergedCycle(cycle));
        }
        Ok(merged)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn concept(&self, label: &str) -> Option<&Concept> {
        self.concepts.get(&ConceptId(normalize_label(label)))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.concept(label).is_some()
    }

    pub fn relationships(&self) -> impl Iterator<Item = &Relationship> {
        self.relationships.iter()
    }

    pub fn relationship_count(&self) -> usize {
        self.relationships.len()
    }

    fn require(&self, label: &str) -> Result<&ConceptId, GraphError> {
        self.concept(label)
            .map(|c| &c.id)
            .ok_or_else(|| GraphError::UnknownConcept(normalize_label(label)))
    }

    /// Distinct neighbors over the selected kinds, in both directions.
    pub fn neighbors(
        &self,
        label: &str,
        kinds: Option<&[RelationKind]>,
    ) -> Result<BTreeSet<&ConceptId>, GraphError> {
        let id = self.require(label)?;
        Ok(self
            .relationships
            .iter()
            .filter(|r| kinds.is_none_or(|k| k.contains(&r.kind)))
            .filter_map(|r| r.other_end(id))
            .collect())
    }

    pub fn degree(&self, label: &str, kinds: Option<&[RelationKind]>) -> Result<usize, GraphError> {
        self.neighbors(label, kinds).map(|n| n.len())
    }

    /// Connected components of the undirected view restricted to `kinds`,
    /// ordered by their smallest member label.
    pub fn components(&self, kinds: &[RelationKind]) -> Vec<BTreeSet<ConceptId>> {
        let ids: Vec<&ConceptId> = self.concepts.keys().collect();
        let index: BTreeMap<&ConceptId, usize> =
            ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut adjacency = vec![Vec::new(); ids.len()];
        for rel in self.relationships.iter().filter(|r| kinds.contains(&r.kind)) {
            let (a, b) = (index[&rel.from], index[&rel.to]);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }

        let mut seen = vec![false; ids.len()];
        let mut out = Vec::new();
        // ids are sorted, so the first unseen id is the smallest member of its component
        for start in 0..ids.len() {
            if seen[start] {
                continue;
            }
            let mut component = BTreeSet::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(n) = stack.pop() {
                component.insert(ids[n].clone());
                for &m in &adjacency[n] {
                    if !seen[m] {
                        seen[m] = true;
                        stack.push(m);
                    }
                }
            }
            out.push(component);
        }
        out
    }

    /// Annotated clusters: tag → members.
    pub fn clusters(&self) -> BTreeMap<String, BTreeSet<ConceptId>> {
        let mut out: BTreeMap<String, BTreeSet<ConceptId>> = BTreeMap::new();
        for concept in self.concepts.values() {
            if let Some(tag) = &concept.cluster {
                out.entry(tag.clone()).or_default().insert(concept.id.clone());
            }
        }
        out
    }

    /// Checks that every LLM-origin concept cites a response in `responses`.
    pub fn check_origins(&self, responses: &BTreeSet<String>) -> Result<(), GraphError> {
        for concept in self.concepts.values() {
            if let Origin::Llm(response) = &concept.origin {
                if !responses.contains(response) {
                    return Err(GraphError::DanglingOrigin {
                        label: concept.id.0.clone(),
                        response: response.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Outgoing hierarchy adjacency, targets sorted.
    pub fn hierarchy_successors(&self, kinds: &[RelationKind]) -> BTreeMap<&ConceptId, BTreeSet<&ConceptId>> {
        let mut out: BTreeMap<&ConceptId, BTreeSet<&ConceptId>> =
            self.concepts.keys().map(|id| (id, BTreeSet::new())).collect();
        for rel in self
            .relationships
            .iter()
            .filter(|r| r.kind.is_directed() && kinds.contains(&r.kind))
        {
            out.entry(&rel.from).or_default().insert(&rel.to);
        }
        out
    }

    /// Equality of everything the annotation format carries; ignores frame
    /// provenance, which is derived.
    pub fn same_structure(&self, other: &ConceptGraph) -> bool {
        let strip = |g: &ConceptGraph| -> Vec<Concept> {
            g.concepts
                .values()
                .map(|c| Concept {
                    frames: BTreeSet::new(),
                    ..c.clone()
                })
                .collect()
        };
        strip(self) == strip(other) && self.relationships == other.relationships
    }

    fn find_hierarchy_cycle(&self) -> Option<Vec<String>> {
        let successors = self.hierarchy_successors(&RelationKind::HIERARCHY);
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: BTreeMap<&ConceptId, u8> = BTreeMap::new();
        for &root in successors.keys() {
            if state.get(root).copied().unwrap_or(0) != 0 {
                continue;
            }
            let mut path: Vec<&ConceptId> = vec![root];
            let mut iters = vec![successors[root].iter()];
            state.insert(root, 1);
            while let Some(it) = iters.last_mut() {
                match it.next() {
                    Some(&next) => match state.get(next).copied().unwrap_or(0) {
                        0 => {
                            state.insert(next, 1);
                            path.push(next);
                            iters.push(successors[next].iter());
                        }
                        1 => {
                            let start = path.iter().position(|id| *id == next).unwrap_or(0);
                            let mut cycle: Vec<String> =
                                path[start..].iter().map(|id| id.0.clone()).collect();
                            cycle.push(next.0.clone());
                            return Some(cycle);
                        }
                        _ => {}
                    },
                    None => {
                        if let Some(done) = path.pop() {
                            state.insert(done, 2);
                        }
                        iters.pop();
                    }
                }
            }
        }
        None
    }
}

fn resolve(
    concepts: &BTreeMap<ConceptId, Concept>,
    desc: &RelationshipDescriptor,
) -> Result<Relationship, GraphError> {
    let lookup = |label: &str| {
        let id = ConceptId::new(label)?;
        if concepts.contains_key(&id) {
            Ok(id)
        } else {
            Err(GraphError::DanglingEndpoint {
                from: normalize_label(&desc.from),
                to: normalize_label(&desc.to),
                kind: desc.kind,
                missing: id.0,
            })
        }
    };
    let mut from = lookup(&desc.from)?;
    let mut to = lookup(&desc.to)?;
    if from == to {
        return Err(GraphError::SelfLoop {
            label: from.0,
            kind: desc.kind,
        });
    }
    if !desc.kind.is_directed() && to < from {
        std::mem::swap(&mut from, &mut to);
    }
    Ok(Relationship {
        from,
        to,
        kind: desc.kind,
        explicitness: desc.explicitness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(label: &str) -> Concept {
        Concept::new(label).unwrap()
    }

    fn rel(a: &str, kind: RelationKind, b: &str) -> RelationshipDescriptor {
        RelationshipDescriptor::new(a, kind, b)
    }

    #[test]
    fn empty_lists_give_empty_graph() {
        let g = ConceptGraph::build(vec![], vec![]).unwrap();
        assert_eq!(g.len(), 0);
        assert_eq!(g.relationship_count(), 0);
    }

    #[test]
    fn labels_are_normalized() {
        let g = ConceptGraph::build(vec![c("  Central   Idea ")], vec![]).unwrap();
        assert!(g.contains("central idea"));
        assert_eq!(Concept::new("   ").unwrap_err(), GraphError::EmptyLabel);
    }

    #[test]
    fn two_node_detailing_cycle_is_rejected() {
        let err = ConceptGraph::build(
            vec![c("a"), c("b")],
            vec![
                rel("a", RelationKind::Detailing, "b"),
                rel("b", RelationKind::Detailing, "a"),
            ],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::CycleInHierarchy(vec!["a".into(), "b".into(), "a".into()]));
    }

    #[test]
    fn cycle_across_mixed_hierarchy_kinds() {
        let err = ConceptGraph::build(
            vec![c("a"), c("b"), c("c")],
            vec![
                rel("a", RelationKind::Goal, "b"),
                rel("b", RelationKind::Causal, "c"),
                rel("c", RelationKind::BroaderContext, "a"),
            ],
        )
        .unwrap_err();
        assert_eq!(err.name(), "cycle-in-hierarchy");
    }

    #[test]
    fn undirected_pairs_do_not_count_as_cycles() {
        let g = ConceptGraph::build(
            vec![c("a"), c("b")],
            vec![
                rel("a", RelationKind::Detailing, "b"),
                rel("b", RelationKind::Connected, "a"),
            ],
        )
        .unwrap();
        let connected = g.relationships().find(|r| r.kind == RelationKind::Connected).unwrap();
        assert_eq!(connected.from.as_str(), "a");
    }

    #[test]
    fn construction_errors_name_the_offender() {
        let dup = ConceptGraph::build(vec![c("x"), c("X")], vec![]).unwrap_err();
        assert_eq!(dup, GraphError::DuplicateLabel("x".into()));

        let dangling =
            ConceptGraph::build(vec![c("x")], vec![rel("x", RelationKind::Goal, "y")]).unwrap_err();
        assert!(matches!(dangling, GraphError::DanglingEndpoint { ref missing, .. } if missing == "y"));

        let looped =
            ConceptGraph::build(vec![c("x")], vec![rel("x", RelationKind::Connected, "x")]).unwrap_err();
        assert_eq!(
            looped,
            GraphError::SelfLoop {
                label: "x".into(),
                kind: RelationKind::Connected
            }
        );

        let twice = ConceptGraph::build(
            vec![c("x"), c("y")],
            vec![
                rel("x", RelationKind::Alternative, "y"),
                rel("y", RelationKind::Alternative, "x"),
            ],
        )
        .unwrap_err();
        assert_eq!(twice.name(), "duplicate-relationship");
    }

    #[test]
    fn unknown_kind_rejected() {
        assert_eq!(
            "flies".parse::<RelationKind>().unwrap_err(),
            GraphError::UnknownKind("flies".into())
        );
        for kind in RelationKind::ALL {
            assert_eq!(kind.as_str().parse::<RelationKind>().unwrap(), kind);
        }
    }

    #[test]
    fn star_degree_matches_leaf_count() {
        for n in 1..=10 {
            let mut concepts = vec![c("hub")];
            let mut rels = Vec::new();
            for i in 0..n {
                let leaf = format!("leaf {i}");
                concepts.push(c(&leaf));
                rels.push(rel("hub", RelationKind::Detailing, &leaf));
            }
            let g = ConceptGraph::build(concepts, rels.clone()).unwrap();
            // brute force: count relationship descriptors touching the hub
            let expected = rels
                .iter()
                .filter(|r| r.from == "hub" || r.to == "hub")
                .map(|r| if r.from == "hub" { r.to.clone() } else { r.from.clone() })
                .collect::<BTreeSet<_>>()
                .len();
            assert_eq!(g.degree("hub", None).unwrap(), expected);
            assert_eq!(g.degree("leaf 0", None).unwrap(), 1);
        }
    }

    #[test]
    fn degree_of_isolated_and_missing() {
        let g = ConceptGraph::build(vec![c("alone")], vec![]).unwrap();
        assert_eq!(g.degree("alone", None).unwrap(), 0);
        assert_eq!(
            g.degree("ghost", None).unwrap_err(),
            GraphError::UnknownConcept("ghost".into())
        );
    }

    #[test]
    fn degree_counts_distinct_neighbors_with_kind_filter() {
        let g = ConceptGraph::build(
            vec![c("a"), c("b"), c("c")],
            vec![
                rel("a", RelationKind::Detailing, "b"),
                rel("a", RelationKind::Goal, "b"),
                rel("c", RelationKind::Connected, "a"),
            ],
        )
        .unwrap();
        assert_eq!(g.degree("a", None).unwrap(), 2);
        assert_eq!(g.degree("a", Some(&[RelationKind::Connected])).unwrap(), 1);
        assert_eq!(g.degree("b", Some(&[RelationKind::Negation])).unwrap(), 0);
    }

    #[test]
    fn disjoint_pairs_form_two_components() {
        let g = ConceptGraph::build(
            vec![c("a"), c("b"), c("c"), c("d")],
            vec![
                rel("a", RelationKind::Connected, "b"),
                rel("c", RelationKind::Connected, "d"),
            ],
        )
        .unwrap();
        let comps = g.components(&RelationKind::ALL);
        let labels: Vec<Vec<&str>> = comps
            .iter()
            .map(|s| s.iter().map(ConceptId::as_str).collect())
            .collect();
        assert_eq!(labels, vec![vec!["a", "b"], vec!["c", "d"]]);
    }

    #[test]
    fn merge_identity_and_idempotence() {
        let g = ConceptGraph::build(
            vec![c("a"), c("b").with_attribute("bright")],
            vec![rel("a", RelationKind::Detailing, "b")],
        )
        .unwrap()
        .with_note("rev 0");
        let empty = ConceptGraph::empty();
        assert_eq!(g.merge(&empty).unwrap(), g);
        assert_eq!(empty.merge(&g).unwrap(), g);
        assert_eq!(g.merge(&g).unwrap(), g);
    }

    #[test]
    fn merge_fuses_by_label_and_keeps_base_origin() {
        let base = ConceptGraph::build(vec![c("a").with_attribute("x")], vec![]).unwrap();
        let delta = ConceptGraph::build(
            vec![
                c("A").with_origin(Origin::Llm("R1".into())).with_attribute("y"),
                c("b").with_origin(Origin::Llm("R1".into())),
            ],
            vec![rel("a", RelationKind::Goal, "b")],
        )
        .unwrap();
        let merged = base.merge(&delta).unwrap();
        let a = merged.concept("a").unwrap();
        assert_eq!(a.origin, Origin::Author);
        assert!(a.has_attribute("x") && a.has_attribute("y"));
        assert_eq!(merged.concept("b").unwrap().origin, Origin::Llm("R1".into()));
        assert_eq!(merged.relationship_count(), 1);
    }

    #[test]
    fn merge_reports_cycle_labels() {
        let base = ConceptGraph::build(
            vec![c("a"), c("b")],
            vec![rel("a", RelationKind::Detailing, "b")],
        )
        .unwrap();
        let delta = ConceptGraph::build(
            vec![c("a"), c("b")],
            vec![rel("b", RelationKind::Causal, "a")],
        )
        .unwrap();
        let err = base.merge(&delta).unwrap_err();
        assert_eq!(err, GraphError::MergedCycle(vec!["a".into(), "b".into(), "a".into()]));
    }

    #[test]
    fn merge_promotes_implied_to_explicit() {
        let base = ConceptGraph::build(
            vec![c("a"), c("b")],
            vec![rel("a", RelationKind::Connected, "b").implied()],
        )
        .unwrap();
        let delta = ConceptGraph::build(
            vec![c("a"), c("b")],
            vec![rel("b", RelationKind::Connected, "a")],
        )
        .unwrap();
        let merged = base.merge(&delta).unwrap();
        let only = merged.relationships().next().unwrap();
        assert_eq!(only.explicitness, Explicitness::Explicit);
    }

    #[test]
    fn origin_round_trips_and_session_check() {
        assert_eq!("llm:R3".parse::<Origin>().unwrap(), Origin::Llm("R3".into()));
        assert!("llm:".parse::<Origin>().is_err());
        assert!("robot".parse::<Origin>().is_err());
        let g = ConceptGraph::build(vec![c("a").with_origin(Origin::Llm("R9".into()))], vec![]).unwrap();
        let known: BTreeSet<String> = ["R1".to_string()].into();
        assert_eq!(g.check_origins(&known).unwrap_err().name(), "dangling-origin");
    }
}
