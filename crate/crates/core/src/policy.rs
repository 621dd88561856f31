//! Headless drivers that play the author's role in a session.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{session_id_for, Action, Actor, DecisionEvent, EngineError, ExplorationSession, Operand, SessionState, ThreadState};
use crate::prompt::{self, Category, TemplateKind};
use crate::provider::Provider;

pub const DEFAULT_K: usize = 2;
pub const DEFAULT_BUDGET: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Applies a recorded event trace verbatim.
    Replay(Vec<DecisionEvent>),
    /// Triages by overlap with the current paragraph: the top `k` cues are
    /// explored, the next `k` evaluate, the rest are ignored.
    AutoOverlap { k: usize, budget: usize },
    Random { seed: u64, budget: usize },
}

impl Policy {
    pub fn auto_overlap() -> Self {
        Policy::AutoOverlap {
            k: DEFAULT_K,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn random(seed: u64) -> Self {
        Policy::Random {
            seed,
            budget: DEFAULT_BUDGET,
        }
    }

    /// Parses a trace file: a JSON array of events.
    pub fn replay_from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text).map(Policy::Replay)
    }
}

/// Opens a session on `paragraph` with its deterministic id and runs the
/// policy to completion.
pub fn explore(paragraph: &str, policy: &Policy, provider: &dyn Provider) -> Result<ExplorationSession, EngineError> {
    let session = ExplorationSession::start_with_id(&session_id_for(paragraph), paragraph)?;
    run_policy(session, policy, provider)
}

/// Drives the session until it is done or the policy runs out of decisions.
/// Every prompt the policy causes is answered by `provider`.
pub fn run_policy(
    mut session: ExplorationSession,
    policy: &Policy,
    provider: &dyn Provider,
) -> Result<ExplorationSession, EngineError> {
    session.fulfill(provider)?;
    match policy {
        Policy::Replay(trace) => replay(&mut session, trace, provider)?,
        Policy::AutoOverlap { k, budget } => {
            if *k == 0 {
                return Err(EngineError::InvalidK(*k));
            }
            auto_overlap(&mut session, *k, *budget, provider)?;
        }
        Policy::Random { seed, budget } => random(&mut session, *seed, *budget, provider)?,
    }
    Ok(session)
}

fn replay(session: &mut ExplorationSession, trace: &[DecisionEvent], provider: &dyn Provider) -> Result<(), EngineError> {
    for event in trace {
        let seq = event.seq;
        if seq != session.events().len() as u64 {
            return Err(EngineError::TraceMismatch {
                seq,
                detail: format!("expected sequence number {}", session.events().len()),
            });
        }
        if let Some(missing) = event.action.cue_refs().into_iter().find(|c| session.cue(c).is_none()) {
            return Err(EngineError::TraceMismatch {
                seq,
                detail: format!("cue `{missing}` is not in the pool"),
            });
        }
        let outcome = session.apply(event.actor.clone(), event.action.clone())?;
        if !event.outcome.is_empty() && outcome != event.outcome {
            return Err(EngineError::TraceMismatch {
                seq,
                detail: format!("engine produced {outcome:?}, trace recorded {:?}", event.outcome),
            });
        }
        if session.state() != SessionState::Done {
            session.fulfill(provider)?;
        }
    }
    Ok(())
}

fn unassigned(session: &ExplorationSession) -> Vec<String> {
    session
        .cues()
        .iter()
        .filter(|c| c.category == Category::Unassigned)
        .map(|c| c.id.clone())
        .collect()
}

fn open_threads(session: &ExplorationSession) -> Vec<String> {
    session
        .threads()
        .iter()
        .filter(|t| t.state == ThreadState::Open)
        .map(|t| t.id.clone())
        .collect()
}

/// Cue ids produced by a prompt's response.
fn cues_from(session: &ExplorationSession, prompt_id: &str) -> Vec<String> {
    let prefix = format!("{prompt_id}.");
    session
        .cues()
        .iter()
        .filter(|c| c.id.starts_with(&prefix))
        .map(|c| c.id.clone())
        .collect()
}

fn auto_overlap(session: &mut ExplorationSession, k: usize, budget: usize, provider: &dyn Provider) -> Result<(), EngineError> {
    let actor = || Actor::policy("auto_overlap");
    for _ in 0..budget {
        let paragraph = session.current_revision().text.clone();
        if session.state() == SessionState::RewritePending {
            session.apply(actor(), Action::Rewrite { text: paragraph })?;
            session.fulfill(provider)?;
            continue;
        }

        let mut ranked: Vec<(f64, String)> = unassigned(session)
            .into_iter()
            .map(|id| {
                let text = session.cue(&id).expect("cue from pool").text();
                (prompt::overlap_score(&text, [paragraph.as_str()]), id)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
        for (i, (_, id)) in ranked.iter().enumerate() {
            let category = match i {
                i if i < k => Category::Explore,
                i if i < 2 * k => Category::Evaluate,
                _ => Category::Ignore,
            };
            session.apply(actor(), Action::Triage { cue: id.clone(), category })?;
        }

        let mut roots = Vec::new();
        loop {
            match session.apply(actor(), Action::SelectThread { root: None }) {
                Ok(outcome) => roots.push(outcome.thread.expect("thread id")),
                Err(EngineError::NoExplorableCues) => break,
                Err(e) => return Err(e),
            }
        }
        if session.state() != SessionState::ThreadOpen {
            break;
        }

        for thread in open_threads(session) {
            let out = session.apply(
                actor(),
                Action::RequestDetailing {
                    thread: thread.clone(),
                    kind: TemplateKind::ElaborateOn,
                    about: None,
                    text: None,
                },
            )?;
            session.fulfill(provider)?;
            let produced = cues_from(session, out.prompt.as_deref().expect("prompt id"));
            let best = produced
                .iter()
                .map(|id| {
                    let text = session.cue(id).expect("cue from pool").text();
                    (prompt::overlap_score(&text, [paragraph.as_str()]), id.clone())
                })
                .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores").then_with(|| b.1.cmp(&a.1)));
            if let Some((_, cue)) = best {
                session.apply(actor(), Action::SelectCues { thread, cues: vec![cue] })?;
            }
        }

        if let [a, b, ..] = roots.as_slice() {
            let root_a = session.thread(a).expect("opened").root_cue.clone();
            let root_b = session.thread(b).expect("opened").root_cue.clone();
            session.apply(
                actor(),
                Action::Combine {
                    first: Operand::cue(&root_a),
                    second: Operand::cue(&root_b),
                    kind: TemplateKind::InfluencedBy,
                },
            )?;
            session.fulfill(provider)?;
        }

        session.apply(actor(), Action::Rewrite { text: paragraph })?;
        session.fulfill(provider)?;
    }
    if session.state() != SessionState::Done {
        session.apply(actor(), Action::Terminate)?;
    }
    Ok(())
}

fn random(session: &mut ExplorationSession, seed: u64, budget: usize, provider: &dyn Provider) -> Result<(), EngineError> {
    let actor = || Actor::policy("random");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget {
        let paragraph = session.current_revision().text.clone();
        if session.state() == SessionState::RewritePending {
            session.apply(actor(), Action::Rewrite { text: paragraph })?;
            session.fulfill(provider)?;
            continue;
        }

        let pool = unassigned(session);
        let mut categories: Vec<Category> = pool
            .iter()
            .map(|_| *[Category::Explore, Category::Evaluate, Category::Ignore].choose(&mut rng).expect("non-empty"))
            .collect();
        if !categories.is_empty() && !categories.contains(&Category::Explore) {
            let i = rng.random_range(0..categories.len());
            categories[i] = Category::Explore;
        }
        for (cue, category) in pool.iter().zip(categories) {
            session.apply(actor(), Action::Triage { cue: cue.clone(), category })?;
        }

        let threads = rng.random_range(1..=2);
        for _ in 0..threads {
            match session.apply(actor(), Action::SelectThread { root: None }) {
                Ok(_) | Err(EngineError::NoExplorableCues) => {}
                Err(e) => return Err(e),
            }
        }
        if session.state() != SessionState::ThreadOpen {
            break;
        }

        let detailing: Vec<TemplateKind> = TemplateKind::ALL.into_iter().filter(|k| k.is_detailing()).collect();
        for thread in open_threads(session) {
            let kind = *detailing.choose(&mut rng).expect("detailing kinds exist");
            let out = session.apply(
                actor(),
                Action::RequestDetailing {
                    thread: thread.clone(),
                    kind,
                    about: None,
                    text: None,
                },
            )?;
            session.fulfill(provider)?;
            let mut produced = cues_from(session, out.prompt.as_deref().expect("prompt id"));
            produced.shuffle(&mut rng);
            produced.truncate(rng.random_range(0..=produced.len()));
            produced.sort();
            if !produced.is_empty() {
                session.apply(actor(), Action::SelectCues { thread, cues: produced })?;
            }
        }

        let explored: Vec<String> = session
            .threads()
            .iter()
            .map(|t| t.root_cue.clone())
            .chain(session.selected_cues().into_iter().map(String::from))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if explored.len() >= 2 && rng.random_bool(0.5) {
            let pair: Vec<&String> = explored.choose_multiple(&mut rng, 2).collect();
            let combos: Vec<TemplateKind> = TemplateKind::ALL
                .into_iter()
                .filter(|k| k.combination_slots().is_some())
                .collect();
            let kind = *combos.choose(&mut rng).expect("combination kinds exist");
            let out = session.apply(
                actor(),
                Action::Combine {
                    first: Operand::cue(pair[0]),
                    second: Operand::cue(pair[1]),
                    kind,
                },
            )?;
            session.fulfill(provider)?;
            let produced = cues_from(session, out.prompt.as_deref().expect("prompt id"));
            let targets = open_threads(session);
            if let (Some(cue), Some(thread)) = (produced.choose(&mut rng), targets.choose(&mut rng)) {
                session.apply(
                    actor(),
                    Action::SelectCues {
                        thread: thread.clone(),
                        cues: vec![cue.clone()],
                    },
                )?;
            }
        }

        session.apply(actor(), Action::Rewrite { text: paragraph })?;
        session.fulfill(provider)?;
    }
    if session.state() != SessionState::Done {
        session.apply(actor(), Action::Terminate)?;
    }
    Ok(())
}
