//! Regenerates the replay fixtures and session documents for the bundled
//! traces from the response texts under `fixtures/responses`.
//!
//! cargo run -p cuegraph-core --example record_traces

use std::fs;
use std::path::{Path, PathBuf};

use cuegraph_core::annotation::{parse_annotation, serialize_graph, to_graph};
use cuegraph_core::policy::{explore, Policy};
use cuegraph_core::provider::{RecordingProvider, ReplayProvider, ScriptedProvider};

const RECORDED_AT: &str = "2023-06-01T00:00:00Z";

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn graph_text(fixtures: &Path, files: &[&str]) -> String {
    let mut graphs = files.iter().map(|f| {
        let doc = parse_annotation(&read(&fixtures.join(f))).expect("fixture parses");
        to_graph(&doc).expect("fixture builds")
    });
    let first = graphs.next().expect("at least one file");
    if files.len() == 1 {
        return read(&fixtures.join(files[0]));
    }
    let merged = graphs.fold(first, |acc, g| acc.merge(&g).expect("fixtures merge"));
    serialize_graph(&merged)
}

fn main() {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let scenarios: [(&str, &[&[&str]]); 2] = [
        (
            "analogy",
            &[&["analogy_initial.cga"], &["analogy_initial.cga", "analogy_llm_delta.cga"]],
        ),
        ("metaphor", &[&["metaphor_initial.cga"]]),
    ];

    for (name, annotations) in scenarios {
        let paragraph = read(&fixtures.join(format!("paragraphs/{name}.txt")));
        let paragraph = paragraph.trim_end();
        let trace = Policy::replay_from_json(&read(&fixtures.join(format!("traces/{name}.trace.json"))))
            .expect("trace parses");

        let mut responses = Vec::new();
        for n in 1.. {
            let path = fixtures.join(format!("responses/{name}/PROMPT{n}.txt"));
            if !path.exists() {
                break;
            }
            responses.push(read(&path));
        }
        let recorder = RecordingProvider::with_timestamp(ScriptedProvider::new(responses), RECORDED_AT);
        explore(paragraph, &trace, &recorder).expect("trace runs against scripted responses");
        let replay_path = fixtures.join(format!("replay/{name}.replay.json"));
        recorder.write_fixture(&replay_path).expect("fixture written");

        let replay = ReplayProvider::load(&replay_path).expect("fixture loads");
        let mut session = explore(paragraph, &trace, &replay).expect("trace replays");
        for (revision, files) in annotations.iter().enumerate() {
            session
                .attach_annotation(revision, &graph_text(&fixtures, files))
                .expect("annotation attaches");
        }
        fs::write(fixtures.join(format!("sessions/{name}.session.json")), session.export()).expect("session written");
        eprintln!("{name}: {} prompts, selections {:?}", session.prompts().len(), session.selected_cues());
    }
}
