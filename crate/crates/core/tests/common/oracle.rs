//! Brute-force reference implementations and a seeded random graph generator.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cuegraph_core::graph::{Concept, ConceptGraph, Origin, RelationKind, RelationshipDescriptor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Edge = (String, RelationKind, String);

/// A random valid graph with at most `max_nodes` concepts. Directed edges only
/// go forward in a shuffled order, so the hierarchy stays acyclic.
pub fn random_graph(seed: u64, max_nodes: usize) -> (Vec<String>, Vec<Edge>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_nodes);
    let mut labels: Vec<String> = (0..n).map(|i| format!("c{i:02}")).collect();
    labels.shuffle(&mut rng);
    let mut edges = BTreeSet::new();
    let density = rng.random_range(0.05..0.5);
    for i in 0..n {
        for j in 0..n {
            if i == j || !rng.random_bool(density) {
                continue;
            }
            let kind = RelationKind::ALL[rng.random_range(0..RelationKind::ALL.len())];
            if kind.is_directed() && i > j {
                continue;
            }
            let (a, b) = if !kind.is_directed() && labels[i] > labels[j] { (j, i) } else { (i, j) };
            edges.insert((labels[a].clone(), kind, labels[b].clone()));
        }
    }
    (labels, edges.into_iter().collect())
}

pub fn build(labels: &[String], edges: &[Edge]) -> ConceptGraph {
    ConceptGraph::build(
        labels.iter().map(|l| Concept::new(l).unwrap()).collect(),
        edges
            .iter()
            .map(|(a, k, b)| RelationshipDescriptor::new(a, *k, b))
            .collect(),
    )
    .unwrap()
}

/// Like `build`, with the listed concepts attributed to an LLM response.
pub fn build_with_origins(labels: &[String], edges: &[Edge], llm: &BTreeSet<String>) -> ConceptGraph {
    ConceptGraph::build(
        labels
            .iter()
            .map(|l| {
                let c = Concept::new(l).unwrap();
                if llm.contains(l) { c.with_origin(Origin::Llm("R1".into())) } else { c }
            })
            .collect(),
        edges
            .iter()
            .map(|(a, k, b)| RelationshipDescriptor::new(a, *k, b))
            .collect(),
    )
    .unwrap()
}

/// Every simple path over `kinds` that can be extended at neither end.
pub fn maximal_paths(labels: &[String], edges: &[Edge], kinds: &[RelationKind]) -> BTreeSet<Vec<String>> {
    let directed: Vec<(&String, &String)> = edges
        .iter()
        .filter(|(_, k, _)| kinds.contains(k))
        .map(|(a, _, b)| (a, b))
        .collect();
    let has_edge_from = |x: &String| directed.iter().any(|(a, _)| *a == x);
    let has_edge_to = |x: &String| directed.iter().any(|(_, b)| *b == x);

    let mut all = Vec::new();
    fn extend(path: &mut Vec<String>, directed: &[(&String, &String)], all: &mut Vec<Vec<String>>) {
        all.push(path.clone());
        let last = path.last().unwrap().clone();
        for (a, b) in directed {
            if **a == last && !path.contains(b) {
                path.push((*b).clone());
                extend(path, directed, all);
                path.pop();
            }
        }
    }
    for l in labels {
        extend(&mut vec![l.clone()], &directed, &mut all);
    }
    all.into_iter()
        .filter(|p| p.len() > 1 && !has_edge_to(&p[0]) && !has_edge_from(p.last().unwrap()))
        .collect()
}

pub fn histogram(paths: &BTreeSet<Vec<String>>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for p in paths {
        *h.entry(p.len() - 1).or_insert(0) += 1;
    }
    h
}

pub fn degree(edges: &[Edge], label: &str) -> usize {
    edges
        .iter()
        .filter_map(|(a, _, b)| {
            if a == label {
                Some(b)
            } else if b == label {
                Some(a)
            } else {
                None
            }
        })
        .collect::<BTreeSet<_>>()
        .len()
}

/// Union-find over the edges of the selected kinds.
pub fn components(labels: &[String], edges: &[Edge], kinds: &[RelationKind]) -> BTreeSet<BTreeSet<String>> {
    let index: BTreeMap<&String, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let mut parent: Vec<usize> = (0..labels.len()).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for (a, k, b) in edges {
        if kinds.contains(k) {
            let (ra, rb) = (find(&mut parent, index[a]), find(&mut parent, index[b]));
            parent[ra] = rb;
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().insert(l.clone());
    }
    groups.into_values().collect()
}
