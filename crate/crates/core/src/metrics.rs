//! Structural reports over concept graphs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{normalize_label, ConceptGraph, ConceptId, Explicitness, Polarity, RelationKind};

pub const DEFAULT_FLOW_THRESHOLD: usize = 3;

const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("not-a-superset: base concept `{0}` is missing from the merged graph")]
    NotASuperset(String),
    #[error("invalid-threshold: {0} (must be at least 1)")]
    InvalidThreshold(usize),
    #[error("invalid-map: {0}")]
    InvalidMap(String),
    #[error("lexicon-syntax: line {line}: {message}")]
    LexiconSyntax { line: usize, message: String },
}

impl MetricsError {
    pub fn name(&self) -> &'static str {
        match self {
            MetricsError::NotASuperset(_) => "not-a-superset",
            MetricsError::InvalidThreshold(_) => "invalid-threshold",
            MetricsError::InvalidMap(_) => "invalid-map",
            MetricsError::LexiconSyntax { .. } => "lexicon-syntax",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub count: usize,
    pub length_histogram: BTreeMap<usize, usize>,
    pub max_depth: usize,
    /// Number of distinct starting concepts.
    pub breadth: usize,
    pub paths: Vec<Vec<String>>,
}

impl PathReport {
    fn from_paths(mut paths: Vec<Vec<String>>) -> Self {
        paths.sort();
        paths.dedup();
        let mut length_histogram = BTreeMap::new();
        for p in &paths {
            *length_histogram.entry(p.len() - 1).or_insert(0) += 1;
        }
        let starts: BTreeSet<&String> = paths.iter().map(|p| &p[0]).collect();
        Self {
            count: paths.len(),
            max_depth: length_histogram.keys().next_back().copied().unwrap_or(0),
            breadth: starts.len(),
            length_histogram,
            paths,
        }
    }
}

/// Maximal simple chains from sources to sinks over the given directed kinds.
/// Concepts untouched by those kinds contribute no path.
fn maximal_chains(graph: &ConceptGraph, kinds: &[RelationKind]) -> Vec<Vec<String>> {
    let successors = graph.hierarchy_successors(kinds);
    let has_incoming: BTreeSet<&ConceptId> = successors.values().flatten().copied().collect();

    fn walk<'a>(
        node: &'a ConceptId,
        successors: &BTreeMap<&'a ConceptId, BTreeSet<&'a ConceptId>>,
        stack: &mut Vec<&'a ConceptId>,
        out: &mut Vec<Vec<String>>,
    ) {
        stack.push(node);
        let next = &successors[node];
        if next.is_empty() {
            out.push(stack.iter().map(|c| c.to_string()).collect());
        } else {
            for &n in next {
                walk(n, successors, stack, out);
            }
        }
        stack.pop();
    }

    let mut out = Vec::new();
    for (&source, next) in &successors {
        if !next.is_empty() && !has_incoming.contains(source) {
            walk(source, &successors, &mut Vec::new(), &mut out);
        }
    }
    out
}

pub fn enumerate_paths(graph: &ConceptGraph) -> PathReport {
    PathReport::from_paths(maximal_chains(graph, &RelationKind::HIERARCHY))
}

/// Paths of `merged` that do not occur in `base`.
pub fn delta_paths(base: &ConceptGraph, merged: &ConceptGraph) -> Result<PathReport, MetricsError> {
    if let Some(missing) = base.concepts().find(|c| !merged.contains(c.label())) {
        return Err(MetricsError::NotASuperset(missing.label().to_string()));
    }
    let old: BTreeSet<Vec<String>> = enumerate_paths(base).paths.into_iter().collect();
    let fresh = enumerate_paths(merged)
        .paths
        .into_iter()
        .filter(|p| !old.contains(p))
        .collect();
    Ok(PathReport::from_paths(fresh))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CentralityEntry {
    pub concept: String,
    pub degree: usize,
}

/// Every concept by degree descending, then label.
pub fn centrality_report(graph: &ConceptGraph) -> Vec<CentralityEntry> {
    let mut neighbors: BTreeMap<&ConceptId, BTreeSet<&ConceptId>> =
        graph.concepts().map(|c| (c.id(), BTreeSet::new())).collect();
    for rel in graph.relationships() {
        neighbors.get_mut(&rel.from).unwrap().insert(&rel.to);
        neighbors.get_mut(&rel.to).unwrap().insert(&rel.from);
    }
    let mut out: Vec<CentralityEntry> = neighbors
        .into_iter()
        .map(|(id, n)| CentralityEntry {
            concept: id.to_string(),
            degree: n.len(),
        })
        .collect();
    out.sort_by(|a, b| b.degree.cmp(&a.degree).then_with(|| a.concept.cmp(&b.concept)));
    out
}

/// Graph together with the cue labels the author actually explored.
#[derive(Debug, Clone, Copy)]
pub struct SessionView<'a> {
    pub graph: &'a ConceptGraph,
    pub explored_cues: &'a BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnexploredReport {
    /// LLM concepts neither picked up by an explored cue nor tied to an author concept.
    pub llm_unexplored: Vec<String>,
    /// Author concepts that no LLM concept touches.
    pub author_unlinked: Vec<String>,
}

pub fn unexplored_report(view: SessionView<'_>) -> UnexploredReport {
    let graph = view.graph;
    let explored: BTreeSet<String> = view.explored_cues.iter().map(|c| normalize_label(c)).collect();
    let origin_of = |id: &ConceptId| graph.concept(id.as_str()).map(|c| c.origin.is_llm());
    let mut report = UnexploredReport::default();
    for concept in graph.concepts() {
        let neighbors = graph.neighbors(concept.label(), None).unwrap_or_default();
        if concept.origin.is_llm() {
            let referenced = explored.contains(concept.label());
            let tied = neighbors.iter().any(|n| origin_of(n) == Some(false));
            if !referenced && !tied {
                report.llm_unexplored.push(concept.label().to_string());
            }
        } else if !neighbors.iter().any(|n| origin_of(n) == Some(true)) {
            report.author_unlinked.push(concept.label().to_string());
        }
    }
    report
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnconnectedReport {
    pub isolated: Vec<String>,
    /// Pairs whose only links are implied ones.
    pub implied_only: Vec<(String, String)>,
}

pub fn unconnected_report(graph: &ConceptGraph) -> UnconnectedReport {
    let mut pairs: BTreeMap<(&ConceptId, &ConceptId), bool> = BTreeMap::new();
    let mut touched = BTreeSet::new();
    for rel in graph.relationships() {
        touched.insert(&rel.from);
        touched.insert(&rel.to);
        let key = if rel.from <= rel.to { (&rel.from, &rel.to) } else { (&rel.to, &rel.from) };
        let implied = rel.explicitness == Explicitness::Implied;
        pairs
            .entry(key)
            .and_modify(|all| *all &= implied)
            .or_insert(implied);
    }
    UnconnectedReport {
        isolated: graph
            .concepts()
            .filter(|c| !touched.contains(c.id()))
            .map(|c| c.label().to_string())
            .collect(),
        implied_only: pairs
            .into_iter()
            .filter(|(_, all_implied)| *all_implied)
            .map(|((a, b), _)| (a.to_string(), b.to_string()))
            .collect(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityLexicon {
    entries: BTreeMap<String, Polarity>,
}

impl PolarityLexicon {
    /// Reads `attribute<TAB>polarity` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| MetricsError::LexiconSyntax {
                line: i + 1,
                message: message.to_string(),
            };
            let (attr, pol) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `attribute<TAB>polarity`"))?;
            let attr = normalize_label(attr);
            if attr.is_empty() {
                return Err(err("empty attribute"));
            }
            let pol = Polarity::from_symbol(pol.trim().to_lowercase().as_str())
                .ok_or_else(|| err("polarity must be positive, negative or neutral"))?;
            entries.insert(attr, pol);
        }
        Ok(Self { entries })
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }

    pub fn insert(&mut self, attribute: &str, polarity: Polarity) {
        self.entries.insert(normalize_label(attribute), polarity);
    }

    pub fn polarity(&self, attribute: &str) -> Polarity {
        self.entries
            .get(&normalize_label(attribute))
            .copied()
            .unwrap_or(Polarity::Neutral)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyPair {
    pub source: String,
    pub target: String,
    /// Matched (source attribute, target attribute) pairs.
    pub attributes: Vec<(String, String)>,
}

/// Explicit pairing of concepts and attributes across two analogy domains.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyMap {
    pub pairs: Vec<AnalogyPair>,
}

impl AnalogyMap {
    pub fn validate(&self, graph: &ConceptGraph) -> Result<(), MetricsError> {
        for pair in &self.pairs {
            for (label, attrs) in [
                (&pair.source, pair.attributes.iter().map(|a| &a.0).collect::<Vec<_>>()),
                (&pair.target, pair.attributes.iter().map(|a| &a.1).collect()),
            ] {
                let concept = graph
                    .concept(label)
                    .ok_or_else(|| MetricsError::InvalidMap(format!("unknown concept `{label}`")))?;
                if let Some(missing) = attrs.into_iter().find(|a| !concept.has_attribute(a)) {
                    return Err(MetricsError::InvalidMap(format!(
                        "`{label}` has no attribute `{missing}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeConflict {
    pub source_attribute: String,
    pub source_polarity: Polarity,
    pub target_attribute: String,
    pub target_polarity: Polarity,
}

/// All opposing attribute pairs of one mapped concept pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InconsistencyFinding {
    pub source: String,
    pub target: String,
    pub conflicts: Vec<AttributeConflict>,
    pub severity: Severity,
}

pub fn inconsistency_report(
    graph: &ConceptGraph,
    map: &AnalogyMap,
    lexicon: &PolarityLexicon,
) -> Result<Vec<InconsistencyFinding>, MetricsError> {
    map.validate(graph)?;
    Ok(map
        .pairs
        .iter()
        .filter_map(|pair| {
            let conflicts: Vec<AttributeConflict> = pair
                .attributes
                .iter()
                .filter_map(|(s, t)| {
                    let (sp, tp) = (lexicon.polarity(s), lexicon.polarity(t));
                    sp.opposes(tp).then(|| AttributeConflict {
                        source_attribute: normalize_label(s),
                        source_polarity: sp,
                        target_attribute: normalize_label(t),
                        target_polarity: tp,
                    })
                })
                .collect();
            (!conflicts.is_empty()).then(|| InconsistencyFinding {
                source: normalize_label(&pair.source),
                target: normalize_label(&pair.target),
                conflicts,
                severity: Severity::Mismatch,
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalChain {
    pub concepts: Vec<String>,
    pub length: usize,
    /// Longer than the threshold.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaFlowReport {
    pub threshold: usize,
    pub chains: Vec<CausalChain>,
}

impl IdeaFlowReport {
    pub fn flagged(&self) -> impl Iterator<Item = &CausalChain> {
        self.chains.iter().filter(|c| c.flagged)
    }
}

/// Maximal causal chains; those longer than `threshold` edges are flagged.
pub fn idea_flow_report(graph: &ConceptGraph, threshold: usize) -> Result<IdeaFlowReport, MetricsError> {
    if threshold < 1 {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    let mut chains = maximal_chains(graph, &[RelationKind::Causal]);
    chains.sort();
    Ok(IdeaFlowReport {
        threshold,
        chains: chains
            .into_iter()
            .map(|concepts| {
                let length = concepts.len() - 1;
                CausalChain {
                    concepts,
                    length,
                    flagged: length > threshold,
                }
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCount {
    pub explicit: usize,
    pub implied: usize,
}

/// Relationship counts per kind, split by explicitness.
pub fn relationship_counts(graph: &ConceptGraph) -> BTreeMap<RelationKind, KindCount> {
    let mut out = BTreeMap::new();
    for rel in graph.relationships() {
        let entry: &mut KindCount = out.entry(rel.kind).or_default();
        match rel.explicitness {
            Explicitness::Explicit => entry.explicit += 1,
            Explicitness::Implied => entry.implied += 1,
        }
    }
    out
}

/// Options for [`analyze`].
#[derive(Debug, Clone)]
pub struct AnalysisOptions<'a> {
    pub flow_threshold: usize,
    pub analogy: Option<(&'a AnalogyMap, &'a PolarityLexicon)>,
    pub explored_cues: Option<&'a BTreeSet<String>>,
}

impl Default for AnalysisOptions<'_> {
    fn default() -> Self {
        Self {
            flow_threshold: DEFAULT_FLOW_THRESHOLD,
            analogy: None,
            explored_cues: None,
        }
    }
}

/// Every report for one graph, in a stable serialized order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub concepts: usize,
    pub relationships: usize,
    pub paths: PathReport,
    pub centrality: Vec<CentralityEntry>,
    pub relationship_counts: BTreeMap<RelationKind, KindCount>,
    pub clusters: BTreeMap<String, Vec<String>>,
    /// Non-singleton components over `connected` edges, as cluster hints.
    pub suggested_clusters: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unexplored: Option<UnexploredReport>,
    pub unconnected: UnconnectedReport,
    pub idea_flow: IdeaFlowReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconsistencies: Option<Vec<InconsistencyFinding>>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn analyze(graph: &ConceptGraph, options: &AnalysisOptions<'_>) -> Result<MetricsReport, MetricsError> {
    let inconsistencies = match options.analogy {
        Some((map, lexicon)) => Some(inconsistency_report(graph, map, lexicon)?),
        None => None,
    };
    Ok(MetricsReport {
        concepts: graph.len(),
        relationships: graph.relationship_count(),
        paths: enumerate_paths(graph),
        centrality: centrality_report(graph),
        relationship_counts: relationship_counts(graph),
        clusters: graph
            .clusters()
            .into_iter()
            .map(|(tag, members)| (tag, members.iter().map(|m| m.to_string()).collect()))
            .collect(),
        suggested_clusters: graph
            .components(&[RelationKind::Connected])
            .into_iter()
            .filter(|c| c.len() > 1)
            .map(|c| c.iter().map(|m| m.to_string()).collect())
            .collect(),
        unexplored: options.explored_cues.map(|explored_cues| {
            unexplored_report(SessionView {
                graph,
                explored_cues,
            })
        }),
        unconnected: unconnected_report(graph),
        idea_flow: idea_flow_report(graph, options.flow_threshold)?,
        inconsistencies,
    })
}
