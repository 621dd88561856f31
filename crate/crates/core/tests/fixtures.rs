mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{fixture_graph, fixture_text};
use cuegraph_core::annotation::{
    extract_concept_suggestions, parse_annotation, serialize, serialize_graph, to_graph,
};
use cuegraph_core::graph::{ConceptGraph, RelationKind};
use cuegraph_core::metrics::{
    centrality_report, delta_paths, enumerate_paths, inconsistency_report, unconnected_report,
    unexplored_report, AnalogyMap, PolarityLexicon, SessionView,
};

const ALL_FIXTURES: [&str; 4] = [
    "analogy_initial.cga",
    "analogy_llm_delta.cga",
    "metaphor_initial.cga",
    "metaphor_llm_fragment.cga",
];

fn hist(pairs: &[(usize, usize)]) -> BTreeMap<usize, usize> {
    pairs.iter().copied().collect()
}

fn merged_analogy() -> (ConceptGraph, ConceptGraph) {
    let base = fixture_graph("analogy_initial.cga");
    let merged = base.merge(&fixture_graph("analogy_llm_delta.cga")).unwrap();
    (base, merged)
}

#[test]
fn analogy_initial_statistics() {
    let g = fixture_graph("analogy_initial.cga");
    assert_eq!(g.len(), 24);
    let paths = enumerate_paths(&g);
    assert_eq!(paths.length_histogram, hist(&[(2, 1), (3, 5), (4, 3), (5, 4)]));
    assert_eq!(paths.max_depth, 5);
}

/// The prose count of twelve paths disagrees with its own per-length
/// breakdown, which sums to thirteen. The fixture follows the breakdown.
#[test]
fn analogy_path_count_follows_the_breakdown_not_the_total() {
    let paths = enumerate_paths(&fixture_graph("analogy_initial.cga"));
    let stated_total = 12;
    let breakdown_total = 1 + 5 + 3 + 4;
    assert_eq!(paths.count, breakdown_total);
    assert_ne!(paths.count, stated_total);
}

#[test]
fn analogy_merge_delta() {
    let (base, merged) = merged_analogy();
    assert_eq!(merged.len() - base.len(), 30);
    let delta = delta_paths(&base, &merged).unwrap();
    assert_eq!(delta.count, 19);
    assert_eq!(delta.length_histogram, hist(&[(4, 2), (5, 5), (6, 2), (7, 4), (8, 6)]));

    // every base path survives, so merged paths are exactly base plus delta
    let base_paths = enumerate_paths(&base);
    let merged_paths = enumerate_paths(&merged);
    assert_eq!(merged_paths.count, base_paths.count + delta.count);
    let union: BTreeSet<_> = base_paths.paths.iter().chain(&delta.paths).cloned().collect();
    assert!(merged_paths.paths.iter().all(|p| union.contains(p)));
}

#[test]
fn merge_keeps_author_origin_for_redeclared_concepts() {
    let (_, merged) = merged_analogy();
    assert!(!merged.concept("story").unwrap().origin.is_llm());
    assert!(merged.concept("swan lake").unwrap().origin.is_llm());
}

#[test]
fn central_idea_is_most_connected() {
    let (_, merged) = merged_analogy();
    let ranking = centrality_report(&merged);
    assert_eq!(ranking[0].concept, "central idea");
    assert_eq!(ranking[0].degree, 13);
    assert!(ranking[1].degree < 13);
    for entry in &ranking {
        assert_eq!(merged.degree(&entry.concept, None).unwrap(), entry.degree);
    }
}

#[test]
fn metaphor_statistics() {
    let g = fixture_graph("metaphor_initial.cga");
    assert_eq!(g.len(), 39);
    let paths = enumerate_paths(&g);
    assert_eq!(paths.count, 23);
    assert_eq!(
        paths.length_histogram,
        hist(&[(1, 2), (2, 6), (3, 8), (4, 4), (5, 1), (6, 2)])
    );

    let fragment = fixture_graph("metaphor_llm_fragment.cga");
    let fp = enumerate_paths(&fragment);
    assert_eq!(fp.count, 20);
    assert_eq!(fp.length_histogram, hist(&[(1, 2), (2, 1), (3, 9), (4, 8)]));
    let merged = g.merge(&fragment).unwrap();
    assert_eq!(delta_paths(&g, &merged).unwrap().length_histogram, fp.length_histogram);
}

#[test]
fn annotated_cluster_sizes() {
    let (_, merged) = merged_analogy();
    let sizes: BTreeMap<String, usize> =
        merged.clusters().into_iter().map(|(k, v)| (k, v.len())).collect();
    assert_eq!(
        sizes,
        BTreeMap::from([("dance".into(), 6), ("emotion".into(), 12), ("poetry".into(), 5)])
    );

    let metaphor = fixture_graph("metaphor_initial.cga");
    let sizes: BTreeMap<String, usize> =
        metaphor.clusters().into_iter().map(|(k, v)| (k, v.len())).collect();
    assert_eq!(
        sizes,
        BTreeMap::from([("challenge".into(), 5), ("confidence".into(), 6), ("experience".into(), 6)])
    );
}

#[test]
fn connected_components_recover_metaphor_clusters() {
    let g = fixture_graph("metaphor_initial.cga");
    let clusters = g.clusters();
    let groups: Vec<_> = g
        .components(&[RelationKind::Connected])
        .into_iter()
        .filter(|c| c.len() > 1)
        .collect();
    let mut sizes: Vec<usize> = groups.iter().map(|c| c.len()).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![5, 6, 6]);
    for group in groups {
        assert!(clusters.values().any(|members| *members == group));
    }
}

#[test]
fn icarus_is_isolated() {
    let report = unconnected_report(&fixture_graph("metaphor_initial.cga"));
    assert_eq!(report.isolated, vec!["icarus"]);
}

#[test]
fn implied_only_links_in_analogy() {
    let report = unconnected_report(&fixture_graph("analogy_initial.cga"));
    assert!(report.isolated.is_empty());
    assert!(report
        .implied_only
        .contains(&("choreography".to_string(), "movement".to_string())));
    assert!(report
        .implied_only
        .contains(&("central idea".to_string(), "narrative".to_string())));
}

#[test]
fn swan_lake_mismatches() {
    let (_, merged) = merged_analogy();
    let map: AnalogyMap = serde_json::from_str(&fixture_text("swan_lake.map.json")).unwrap();
    let findings = inconsistency_report(&merged, &map, &PolarityLexicon::builtin()).unwrap();
    let pairs: Vec<(&str, &str)> = findings
        .iter()
        .map(|f| (f.source.as_str(), f.target.as_str()))
        .collect();
    assert_eq!(pairs, vec![("princess odette", "white swan"), ("princess odile", "black swan")]);
    for f in &findings {
        for c in &f.conflicts {
            assert!(merged.concept(&f.source).unwrap().has_attribute(&c.source_attribute));
            assert!(merged.concept(&f.target).unwrap().has_attribute(&c.target_attribute));
        }
    }
}

#[test]
fn unexplored_twist_and_the_rewrite_idea() {
    let (_, merged) = merged_analogy();
    let explored = BTreeSet::new();
    let before = unexplored_report(SessionView { graph: &merged, explored_cues: &explored });
    assert!(before.llm_unexplored.contains(&"unexplored twist".to_string()));
    assert!(before.llm_unexplored.contains(&"love transcends adversity".to_string()));

    // the rewrite ties the idea to the paragraph's central idea
    let rewrite = parse_annotation(
        "C: central idea\nC: love transcends adversity [origin=llm:R5]\n\
         E: central idea -connected-> love transcends adversity\n",
    )
    .unwrap();
    let after_graph = merged.merge(&to_graph(&rewrite).unwrap()).unwrap();
    let after = unexplored_report(SessionView { graph: &after_graph, explored_cues: &explored });
    assert!(!after.llm_unexplored.contains(&"love transcends adversity".to_string()));
    assert!(after.llm_unexplored.contains(&"unexplored twist".to_string()));
}

#[test]
fn documents_round_trip() {
    for name in ALL_FIXTURES {
        let doc = parse_annotation(&fixture_text(name)).unwrap();
        assert_eq!(parse_annotation(&serialize(&doc)).unwrap(), doc, "{name}");
    }
}

#[test]
fn graphs_round_trip_through_the_text_format() {
    let (_, merged) = merged_analogy();
    let mut graphs: Vec<ConceptGraph> = ALL_FIXTURES.iter().map(|n| fixture_graph(n)).collect();
    graphs.push(merged);
    for g in graphs {
        let back = to_graph(&parse_annotation(&serialize_graph(&g)).unwrap()).unwrap();
        assert!(back.same_structure(&g));
    }
}

#[test]
fn suggestions_stay_within_frame_tokens() {
    for name in ALL_FIXTURES {
        let doc = parse_annotation(&fixture_text(name)).unwrap();
        for frame in &doc.frames {
            let tokens: BTreeSet<String> = frame.tokens().map(|t| t.to_lowercase()).collect();
            for s in extract_concept_suggestions(frame) {
                assert!(tokens.contains(&s.label), "{name} {}: {}", frame.sentence_id, s.label);
                assert!(!s.confirmed);
            }
        }
    }
}

#[test]
fn fixture_frames_name_concepts() {
    let g = fixture_graph("metaphor_initial.cga");
    assert!(g.concept("high self-confidence").unwrap().frames.contains("S2"));
    assert!(g.concept("every tear").unwrap().frames.contains("S3"));
    assert!(g.concept("regular classes").unwrap().frames.contains("S1"));
}
