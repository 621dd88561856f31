//! Session invariants over randomly driven explorations.

use std::collections::BTreeSet;

use cuegraph_core::engine::{DecisionEvent, ExplorationSession};
use cuegraph_core::policy::{run_policy, Policy};
use cuegraph_core::prompt::{Category, TemplateKind};
use cuegraph_core::provider::{prompt_key, GenerationRequest, Provider, ProviderError};
use proptest::prelude::*;

const WORDS: [&str; 12] = [
    "rhythm", "verse", "stanza", "movement", "emotion", "audience", "story", "song", "tempo", "image", "meter", "gesture",
];

/// Deterministic stand-in for a model: list length and wording follow the
/// prompt hash, and some answers carry no list at all.
struct HashedLists;

impl Provider for HashedLists {
    fn id(&self) -> String {
        "hashed".into()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let key = prompt_key(&request.prompt);
        let bytes: Vec<usize> = key.as_bytes().iter().map(|b| *b as usize).collect();
        let count = bytes[0] % 6;
        let mut text = String::from("Here are some thoughts.\n\n");
        for i in 0..count {
            let a = WORDS[bytes[i + 1] % WORDS.len()];
            let b = WORDS[bytes[i + 7] % WORDS.len()];
            text.push_str(&format!("{}. {a} and {b}: connect the {a} with the {b}.\n", i + 1));
        }
        Ok(text)
    }
}

fn start(seed: u64) -> ExplorationSession {
    ExplorationSession::start_with_id("s-prop", &format!("A paragraph about rhythm and verse number {seed}.")).unwrap()
}

fn check_invariants(session: &ExplorationSession) {
    let counts = [Category::Explore, Category::Evaluate, Category::Ignore, Category::Unassigned]
        .iter()
        .map(|cat| session.cues().iter().filter(|c| c.category == *cat).count())
        .sum::<usize>();
    assert_eq!(counts, session.cues().len());

    for (i, e) in session.events().iter().enumerate() {
        assert_eq!(e.seq, i as u64);
    }
    for (i, r) in session.paragraphs().iter().enumerate() {
        assert_eq!(r.index, i);
    }
    for r in session.responses() {
        assert!(session.prompt(&r.prompt_id).is_some());
    }
    let response_ids: BTreeSet<&str> = session.responses().iter().map(|r| r.id.as_str()).collect();
    for c in session.cues() {
        assert!(response_ids.contains(c.source_response.as_str()));
    }

    for t in session.threads() {
        assert_eq!(session.cue(&t.root_cue).unwrap().category, Category::Explore);
        let mut allowed: BTreeSet<&str> = t.selected_cues.iter().map(String::as_str).collect();
        allowed.insert(&t.root_cue);
        for p in session.prompts().iter().filter(|p| p.thread.as_deref() == Some(t.id.as_str())) {
            assert!(p.kind.is_detailing());
            assert!(p.about.iter().all(|c| allowed.contains(c.as_str())), "{} strays from {}", p.id, t.id);
        }
        for cue in &t.selected_cues {
            let prompt_id = cue.split_once('.').unwrap().0;
            let p = session.prompt(prompt_id).unwrap();
            let from_thread = p.thread.as_deref() == Some(t.id.as_str());
            assert!(from_thread || p.kind.combination_slots().is_some());
        }
    }
    for p in session.prompts().iter().filter(|p| p.thread.is_none()) {
        assert!(p.kind == TemplateKind::Critique || p.kind.combination_slots().is_some());
    }
}

fn prefix(session: &ExplorationSession, n: usize) -> ExplorationSession {
    let events: Vec<DecisionEvent> = session.events()[..n].to_vec();
    let paragraph = &session.paragraphs()[0].text;
    let fresh = ExplorationSession::start_with_id(session.id(), paragraph).unwrap();
    run_policy(fresh, &Policy::Replay(events), &HashedLists).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_sessions_keep_their_invariants(seed in 0u64..100_000, budget in 1usize..4) {
        let session = run_policy(start(seed), &Policy::Random { seed, budget }, &HashedLists).unwrap();
        check_invariants(&session);
        prop_assert_eq!(&session.rebuild().unwrap(), &session);
        let doc = session.export();
        prop_assert_eq!(ExplorationSession::import(&doc).unwrap().export(), doc);
    }

    #[test]
    fn replaying_the_log_reproduces_the_session(seed in 0u64..100_000) {
        let session = run_policy(start(seed), &Policy::random(seed), &HashedLists).unwrap();
        let trace = Policy::replay_from_json(&session.export_trace()).unwrap();
        let again = run_policy(start(seed), &trace, &HashedLists).unwrap();
        prop_assert_eq!(again.export(), session.export());
    }

    #[test]
    fn revisions_only_grow(seed in 0u64..100_000, cut in 0.0f64..1.0) {
        let session = run_policy(start(seed), &Policy::random(seed), &HashedLists).unwrap();
        let n = (session.events().len() as f64 * cut) as usize;
        let partial = prefix(&session, n);
        check_invariants(&partial);
        prop_assert!(partial.paragraphs().len() <= session.paragraphs().len());
        prop_assert_eq!(partial.paragraphs(), &session.paragraphs()[..partial.paragraphs().len()]);
        prop_assert_eq!(partial.events(), &session.events()[..n]);
    }

    #[test]
    fn auto_overlap_terminates_within_budget(seed in 0u64..100_000, k in 1usize..4, budget in 1usize..6) {
        let session = run_policy(start(seed), &Policy::AutoOverlap { k, budget }, &HashedLists).unwrap();
        check_invariants(&session);
        prop_assert!(session.paragraphs().len() <= budget + 1);
        prop_assert_eq!(session.state(), cuegraph_core::engine::SessionState::Done);
    }
}

#[test]
fn random_policy_is_seed_deterministic() {
    for seed in [0, 1, 42] {
        let a = run_policy(start(seed), &Policy::random(seed), &HashedLists).unwrap();
        let b = run_policy(start(seed), &Policy::random(seed), &HashedLists).unwrap();
        assert_eq!(a.export_trace(), b.export_trace());
    }
}
