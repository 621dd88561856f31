#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use cuegraph_core::annotation::{parse_annotation, to_graph};
use cuegraph_core::graph::ConceptGraph;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn fixture_graph(name: &str) -> ConceptGraph {
    to_graph(&parse_annotation(&fixture_text(name)).unwrap()).unwrap()
}
