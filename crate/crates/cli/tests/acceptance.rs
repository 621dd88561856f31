//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion failed. Everything runs offline against the bundled
//! fixtures with the replay provider.
//!
//! Tolerances: every quantity checked here is a count, a histogram or a byte
//! comparison, so all comparisons are exact (tolerance 0).

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use cuegraph_core::annotation::{parse_annotation, serialize, to_graph};
use cuegraph_core::engine::ExplorationSession;
use cuegraph_core::graph::{ConceptGraph, RelationKind};
use cuegraph_core::metrics::{
    centrality_report, delta_paths, enumerate_paths, idea_flow_report, inconsistency_report, unconnected_report,
    AnalogyMap, PolarityLexicon,
};
use cuegraph_core::policy::{explore, Policy};
use cuegraph_core::prompt::extract_cues;
use cuegraph_core::provider::{network_attempts, ReplayProvider};
use serde_json::Value;

const TIME_LIMIT: Duration = Duration::from_secs(10);
const ORACLE_SEEDS: u64 = 200;
const ORACLE_MAX_CONCEPTS: usize = 12;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn graph(name: &str) -> ConceptGraph {
    to_graph(&parse_annotation(&text(name)).map_err(|d| d.to_string()).unwrap()).unwrap()
}

fn hist(pairs: &[(usize, usize)]) -> BTreeMap<usize, usize> {
    pairs.iter().copied().collect()
}

fn expect<T: PartialEq + std::fmt::Debug>(what: &str, got: T, want: T) -> Check {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, want {want:?}"))
    }
}

fn expect_count(what: &str, got: usize, want: usize) -> Check {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want}"))
    }
}

/// Runs the CLI in-process and returns (exit code, stdout, stderr).
fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("cuegraph").chain(args.iter().copied());
    let code = cuegraph_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn analyze_json(args: &[&str]) -> Result<Value, String> {
    let (code, out, err) = cli(args);
    if code != 0 {
        return Err(format!("analyze exited {code}: {err}"));
    }
    serde_json::from_str(&out).map_err(|e| e.to_string())
}

fn json_hist(report: &Value) -> BTreeMap<usize, usize> {
    report["paths"]["length_histogram"]
        .as_object()
        .expect("histogram object")
        .iter()
        .map(|(k, v)| (k.parse().unwrap(), v.as_u64().unwrap() as usize))
        .collect()
}

fn analogy_statistics() -> Check {
    let path = fixture("analogy_initial.cga");
    let report = analyze_json(&["analyze", path.to_str().unwrap()])?;
    expect_count("concepts", report["concepts"].as_u64().unwrap_or(0) as usize, 24)?;
    expect("histogram", json_hist(&report), hist(&[(2, 1), (3, 5), (4, 3), (5, 4)]))?;
    // the stated total of twelve disagrees with its own breakdown; the breakdown wins
    expect_count("path count", report["paths"]["count"].as_u64().unwrap_or(0) as usize, 13)
}

fn merge_delta() -> Check {
    let base = graph("analogy_initial.cga");
    let merged = base.merge(&graph("analogy_llm_delta.cga")).map_err(|e| e.to_string())?;
    expect_count("added concepts", merged.len() - base.len(), 30)?;
    let delta = delta_paths(&base, &merged).map_err(|e| e.to_string())?;
    expect_count("new paths", delta.count, 19)?;
    expect("new path histogram", delta.length_histogram, hist(&[(4, 2), (5, 5), (6, 2), (7, 4), (8, 6)]))
}

fn metaphor_statistics() -> Check {
    let g = graph("metaphor_initial.cga");
    expect_count("concepts", g.len(), 39)?;
    let paths = enumerate_paths(&g);
    expect_count("paths", paths.count, 23)?;
    expect(
        "histogram",
        paths.length_histogram,
        hist(&[(1, 2), (2, 6), (3, 8), (4, 4), (5, 1), (6, 2)]),
    )?;
    let fragment = enumerate_paths(&graph("metaphor_llm_fragment.cga"));
    expect_count("fragment paths", fragment.count, 20)?;
    expect("fragment histogram", fragment.length_histogram, hist(&[(1, 2), (2, 1), (3, 9), (4, 8)]))
}

fn centrality() -> Check {
    let initial = fixture("analogy_initial.cga");
    let delta = fixture("analogy_llm_delta.cga");
    let report = analyze_json(&["analyze", initial.to_str().unwrap(), "--merge", delta.to_str().unwrap()])?;
    let top = &report["centrality"][0];
    expect("top concept", top["concept"].as_str(), Some("central idea"))?;
    expect_count("top degree", top["degree"].as_u64().unwrap_or(0) as usize, 13)?;
    let runner_up = report["centrality"][1]["degree"].as_u64().unwrap_or(0);
    if runner_up >= 13 {
        return Err(format!("runner-up ties the top degree ({runner_up})"));
    }
    Ok(())
}

fn cluster_sizes(g: &ConceptGraph) -> Vec<usize> {
    let mut sizes: Vec<usize> = g.clusters().values().map(BTreeSet::len).collect();
    sizes.sort_unstable();
    sizes
}

fn clusters() -> Check {
    let merged = graph("analogy_initial.cga").merge(&graph("analogy_llm_delta.cga")).map_err(|e| e.to_string())?;
    expect("analogy cluster sizes", cluster_sizes(&merged), vec![5, 6, 12])?;
    expect("metaphor cluster sizes", cluster_sizes(&graph("metaphor_initial.cga")), vec![5, 6, 6])
}

fn findings() -> Check {
    let report = unconnected_report(&graph("metaphor_initial.cga"));
    expect("isolated", report.isolated, vec!["icarus".to_string()])?;

    let merged = graph("analogy_initial.cga").merge(&graph("analogy_llm_delta.cga")).map_err(|e| e.to_string())?;
    let map: AnalogyMap = serde_json::from_str(&text("swan_lake.map.json")).map_err(|e| e.to_string())?;
    let found = inconsistency_report(&merged, &map, &PolarityLexicon::builtin()).map_err(|e| e.to_string())?;
    let pairs: BTreeSet<(String, String)> = found.iter().map(|f| (f.source.clone(), f.target.clone())).collect();
    expect_count("mismatch findings", found.len(), 2)?;
    expect(
        "mismatch pairs",
        pairs,
        BTreeSet::from([
            ("princess odette".to_string(), "white swan".to_string()),
            ("princess odile".to_string(), "black swan".to_string()),
        ]),
    )
}

fn replay(name: &str) -> Result<ExplorationSession, String> {
    let paragraph = text(&format!("paragraphs/{name}.txt"));
    let policy = Policy::replay_from_json(&text(&format!("traces/{name}.trace.json"))).map_err(|e| e.to_string())?;
    let provider = ReplayProvider::load(&fixture(&format!("replay/{name}.replay.json"))).map_err(|e| e.to_string())?;
    explore(paragraph.trim_end(), &policy, &provider).map_err(|e| e.to_string())
}

fn trace_replay() -> Check {
    let expected = [
        ("analogy", vec!["PROMPT2.2", "PROMPT3.2", "PROMPT3.4", "PROMPT4.4", "PROMPT4.7", "PROMPT7.6", "PROMPT7.7"]),
        ("metaphor", vec!["PROMPT2.6", "PROMPT3.1", "PROMPT3.7", "PROMPT3.8"]),
    ];
    for (name, selections) in expected {
        let first = replay(name)?;
        let got: BTreeSet<&str> = first.selected_cues().into_iter().collect();
        expect(&format!("{name} selections"), got, selections.into_iter().collect())?;
        if first.export() != replay(name)?.export() {
            return Err(format!("{name}: session documents differ between runs"));
        }
    }
    Ok(())
}

fn oracle_equivalence() -> Check {
    let mut mismatches = Vec::new();
    for seed in 0..ORACLE_SEEDS {
        let (labels, edges) = oracle::random_graph(seed, ORACLE_MAX_CONCEPTS);
        let g = oracle::build(&labels, &edges);

        let got: BTreeSet<Vec<String>> = enumerate_paths(&g).paths.into_iter().collect();
        if got != oracle::maximal_paths(&labels, &edges, &RelationKind::HIERARCHY) {
            mismatches.push(format!("paths@{seed}"));
        }
        let comps: BTreeSet<BTreeSet<String>> = g
            .components(&RelationKind::ALL)
            .into_iter()
            .map(|c| c.iter().map(|id| id.to_string()).collect())
            .collect();
        if comps != oracle::components(&labels, &edges, &RelationKind::ALL) {
            mismatches.push(format!("components@{seed}"));
        }
        if centrality_report(&g).iter().any(|e| e.degree != oracle::degree(&edges, &e.concept)) {
            mismatches.push(format!("degree@{seed}"));
        }
        let chains: BTreeSet<Vec<String>> = idea_flow_report(&g, 2)
            .map_err(|e| e.to_string())?
            .chains
            .into_iter()
            .map(|c| c.concepts)
            .collect();
        if chains != oracle::maximal_paths(&labels, &edges, &[RelationKind::Causal]) {
            mismatches.push(format!("causal@{seed}"));
        }
    }
    expect("mismatches", mismatches, Vec::<String>::new())
}

fn round_trips() -> Check {
    for name in ["analogy_initial.cga", "analogy_llm_delta.cga", "metaphor_initial.cga", "metaphor_llm_fragment.cga"] {
        let doc = parse_annotation(&text(name)).map_err(|d| d.to_string())?;
        let again = parse_annotation(&serialize(&doc)).map_err(|d| d.to_string())?;
        if again != doc {
            return Err(format!("{name}: annotation changed after serialize and parse"));
        }
    }
    for name in ["analogy", "metaphor"] {
        let original = text(&format!("sessions/{name}.session.json"));
        let session = ExplorationSession::import(&original).map_err(|e| e.to_string())?;
        if session.export() != original {
            return Err(format!("{name}: session document changed after import and export"));
        }
    }
    let parsed = extract_cues(&text("responses/analogy/PROMPT1.txt"));
    let labels: Vec<&str> = parsed.items.iter().map(|i| i.label.as_str()).collect();
    expect(
        "critique cue labels",
        labels,
        vec![
            "clarity of analogies",
            "structural flow",
            "supporting examples",
            "conciseness",
            "grammar and language",
            "formatting",
        ],
    )
}

fn determinism() -> Check {
    let before = network_attempts();
    let paragraph = fixture("paragraphs/analogy.txt");
    let provider = format!("replay:{}", fixture("replay/analogy.replay.json").display());
    let policy = format!("replay:{}", fixture("traces/analogy.trace.json").display());
    let args = [
        "explore",
        "--paragraph",
        paragraph.to_str().unwrap(),
        "--provider",
        &provider,
        "--policy",
        &policy,
    ];
    let (code_a, out_a, err_a) = cli(&args);
    let (code_b, out_b, _) = cli(&args);
    if code_a != 0 || code_b != 0 {
        return Err(format!("explore exited {code_a}/{code_b}: {err_a}"));
    }
    if out_a.is_empty() || out_a != out_b {
        return Err("explore output differs between runs".into());
    }
    expect_count("network attempts", network_attempts() - before, 0)
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("analogy metrics", analogy_statistics),
        ("merge delta", merge_delta),
        ("metaphor metrics", metaphor_statistics),
        ("centrality", centrality),
        ("clusters", clusters),
        ("unconnected and inconsistency findings", findings),
        ("trace replay", trace_replay),
        ("oracle equivalence", oracle_equivalence),
        ("round trips", round_trips),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = check().and_then(|()| {
            let took = started.elapsed();
            if took < TIME_LIMIT {
                Ok(())
            } else {
                Err(format!("took {took:?}"))
            }
        });
        match result {
            Ok(()) => println!("criterion {:>2} PASS  {name} ({:?})", i + 1, started.elapsed()),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
