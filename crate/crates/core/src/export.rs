//! Graph documents for clients: JSON for programs, DOT for Graphviz.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::graph::{Concept, ConceptGraph, Explicitness, Relationship};

#[derive(Debug, Serialize)]
struct GraphDocument<'a> {
    note: &'a str,
    concepts: Vec<&'a Concept>,
    relationships: Vec<&'a Relationship>,
}

/// Pretty JSON with concepts and relationships in canonical order.
pub fn graph_json(graph: &ConceptGraph) -> String {
    let doc = GraphDocument {
        note: &graph.provenance_note,
        concepts: graph.concepts().collect(),
        relationships: graph.relationships().collect(),
    };
    serde_json::to_string_pretty(&doc).expect("graph serializes") + "\n"
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn node_line(out: &mut String, indent: &str, concept: &Concept) {
    let mut attrs = Vec::new();
    if concept.origin.is_llm() {
        attrs.push("color=red".to_string());
        attrs.push("penwidth=2".to_string());
        attrs.push(format!("tooltip={}", quote(&concept.origin.to_string())));
    }
    if !concept.attributes.is_empty() {
        let list: Vec<String> = concept
            .attributes
            .iter()
            .map(|a| match a.polarity {
                Some(p) => format!("{} ({})", a.text, p.symbol()),
                None => a.text.clone(),
            })
            .collect();
        attrs.push(format!("xlabel={}", quote(&list.join(", "))));
    }
    let _ = write!(out, "{indent}{}", quote(concept.label()));
    if !attrs.is_empty() {
        let _ = write!(out, " [{}]", attrs.join(", "));
    }
    out.push_str(";\n");
}

/// Graphviz rendering: clusters become subgraphs, LLM-introduced concepts
/// get a red border and implied relationships are dashed.
pub fn graph_dot(graph: &ConceptGraph) -> String {
    let mut out = String::from("digraph concepts {\n");
    if !graph.provenance_note.is_empty() {
        let _ = writeln!(out, "  label={};", quote(&graph.provenance_note));
    }
    out.push_str("  node [shape=box, style=rounded];\n");

    let mut by_cluster: BTreeMap<Option<&str>, Vec<&Concept>> = BTreeMap::new();
    for c in graph.concepts() {
        by_cluster.entry(c.cluster.as_deref()).or_default().push(c);
    }
    for (cluster, members) in &by_cluster {
        match cluster {
            None => members.iter().for_each(|c| node_line(&mut out, "  ", c)),
            Some(name) => {
                let _ = writeln!(out, "  subgraph {} {{", quote(&format!("cluster_{name}")));
                let _ = writeln!(out, "    label={};", quote(name));
                members.iter().for_each(|c| node_line(&mut out, "    ", c));
                out.push_str("  }\n");
            }
        }
    }

    for r in graph.relationships() {
        let mut attrs = vec![format!("label={}", quote(r.kind.as_str()))];
        if !r.kind.is_directed() {
            attrs.push("dir=none".into());
        }
        if r.explicitness == Explicitness::Implied {
            attrs.push("style=dashed".into());
        }
        let _ = writeln!(
            out,
            "  {} -> {} [{}];",
            quote(r.from.as_str()),
            quote(r.to.as_str()),
            attrs.join(", ")
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Origin, RelationKind, RelationshipDescriptor};

    fn sample() -> ConceptGraph {
        let concepts = vec![
            Concept::new("poetry").unwrap().with_cluster("art"),
            Concept::new("say \"hi\"").unwrap().with_origin(Origin::Llm("R2".into())),
            Concept::new("dance").unwrap(),
        ];
        let edges = vec![
            RelationshipDescriptor::new("poetry", RelationKind::Detailing, "say \"hi\""),
            RelationshipDescriptor::new("poetry", RelationKind::Alternative, "dance").implied(),
        ];
        ConceptGraph::build(concepts, edges).unwrap().with_note("paragraph r0")
    }

    #[test]
    fn dot_styles_provenance_and_explicitness() {
        let dot = graph_dot(&sample());
        assert!(dot.starts_with("digraph concepts {\n"));
        assert!(dot.contains("\"say \\\"hi\\\"\" [color=red, penwidth=2, tooltip=\"llm:R2\"];"));
        assert!(dot.contains("subgraph \"cluster_art\""));
        assert!(dot.contains("[label=\"alternative\", dir=none, style=dashed]"));
        assert!(dot.contains("\"poetry\" -> \"say \\\"hi\\\"\" [label=\"detailing\"];"));
        assert_eq!(dot, graph_dot(&sample()));
    }

    #[test]
    fn json_lists_everything() {
        let v: serde_json::Value = serde_json::from_str(&graph_json(&sample())).unwrap();
        assert_eq!(v["note"], "paragraph r0");
        assert_eq!(v["concepts"].as_array().unwrap().len(), 3);
        assert_eq!(v["relationships"].as_array().unwrap().len(), 2);
        assert_eq!(v["relationships"][0]["explicitness"], "implied");
    }
}
