//! Prompt templates, cue extraction from responses, and cue scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN_CATALOG: &str = include_str!("../data/templates.txt");
const STOP_WORDS: &str = include_str!("../data/stopwords.txt");

/// Longest label kept for a cue, in words.
pub const MAX_LABEL_WORDS: usize = 8;

pub const SLOT_NAMES: [&str; 7] = [
    "Selected_Cue",
    "Broader_Cue",
    "Detailed_Cue",
    "Goal_Cue",
    "Paragraph",
    "Cue1",
    "Cue2",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unknown-kind: `{0}` is not a template kind")]
    UnknownKind(String),
    #[error("missing-slot: `{slot}` is required by the {kind} template")]
    MissingSlot { kind: TemplateKind, slot: String },
    #[error("catalog-syntax: line {line}: {message}")]
    CatalogSyntax { line: usize, message: String },
    #[error("empty-evaluation-set: at least one evaluation cue is required")]
    EmptyEvaluationSet,
}

impl PromptError {
    pub fn name(&self) -> &'static str {
        match self {
            PromptError::UnknownKind(_) => "unknown-kind",
            PromptError::MissingSlot { .. } => "missing-slot",
            PromptError::CatalogSyntax { .. } => "catalog-syntax",
            PromptError::EmptyEvaluationSet => "empty-evaluation-set",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Critique,
    Expand,
    ElaborateOn,
    HighlightInParagraph,
    FamousIndividuals,
    FamousCharacters,
    InfluencedBy,
    Convey,
    ExpressIn,
    Balance,
    ContemporaryExample,
    ExampleRequest,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 12] = [
        TemplateKind::Critique,
        TemplateKind::Expand,
        TemplateKind::ElaborateOn,
        TemplateKind::HighlightInParagraph,
        TemplateKind::FamousIndividuals,
        TemplateKind::FamousCharacters,
        TemplateKind::InfluencedBy,
        TemplateKind::Convey,
        TemplateKind::ExpressIn,
        TemplateKind::Balance,
        TemplateKind::ContemporaryExample,
        TemplateKind::ExampleRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::Critique => "critique",
            TemplateKind::Expand => "expand",
            TemplateKind::ElaborateOn => "elaborate_on",
            TemplateKind::HighlightInParagraph => "highlight_in_paragraph",
            TemplateKind::FamousIndividuals => "famous_individuals",
            TemplateKind::FamousCharacters => "famous_characters",
            TemplateKind::InfluencedBy => "influenced_by",
            TemplateKind::Convey => "convey",
            TemplateKind::ExpressIn => "express_in",
            TemplateKind::Balance => "balance",
            TemplateKind::ContemporaryExample => "contemporary_example",
            TemplateKind::ExampleRequest => "example_request",
        }
    }

    /// Kinds a thread may use to dig into one cue.
    pub fn is_detailing(self) -> bool {
        matches!(
            self,
            TemplateKind::ElaborateOn
                | TemplateKind::HighlightInParagraph
                | TemplateKind::FamousIndividuals
                | TemplateKind::FamousCharacters
                | TemplateKind::ContemporaryExample
                | TemplateKind::ExampleRequest
        )
    }

    /// Slots filled by the first and second operand of a combination.
    pub fn combination_slots(self) -> Option<(&'static str, &'static str)> {
        match self {
            TemplateKind::InfluencedBy => Some(("Broader_Cue", "Detailed_Cue")),
            TemplateKind::Convey => Some(("Detailed_Cue", "Goal_Cue")),
            TemplateKind::ExpressIn => Some(("Detailed_Cue", "Broader_Cue")),
            TemplateKind::Balance => Some(("Cue1", "Cue2")),
            _ => None,
        }
    }

    /// The single cue slot of a detailing template.
    pub fn cue_slot(self) -> Option<&'static str> {
        self.is_detailing().then_some("Selected_Cue")
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PromptError::UnknownKind(s.to_string()))
    }
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([A-Za-z0-9_]+)\}").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub body: String,
    pub slots: Vec<String>,
}

impl PromptTemplate {
    fn new(kind: TemplateKind, body: &str) -> Result<Self, String> {
        let mut slots = Vec::new();
        for caps in PLACEHOLDER.captures_iter(body) {
            let name = &caps[1];
            if !SLOT_NAMES.contains(&name) {
                return Err(format!("undeclared slot `{name}`"));
            }
            if !slots.iter().any(|s| s == name) {
                slots.push(name.to_string());
            }
        }
        Ok(Self {
            kind,
            body: body.to_string(),
            slots,
        })
    }

    pub fn instantiate(&self, values: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
        for slot in &self.slots {
            if values.get(slot.as_str()).is_none_or(|v| v.trim().is_empty()) {
                return Err(PromptError::MissingSlot {
                    kind: self.kind,
                    slot: slot.clone(),
                });
            }
        }
        // single pass, so slot text containing braces is never re-expanded
        Ok(PLACEHOLDER
            .replace_all(&self.body, |caps: &regex::Captures<'_>| values[&caps[1]].to_string())
            .into_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateCatalog {
    templates: BTreeMap<TemplateKind, PromptTemplate>,
}

impl TemplateCatalog {
    /// Reads `kind = body` lines. Kinds missing from `text` keep their
    /// built-in body.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut catalog = Self::builtin();
        catalog.overlay(text)?;
        Ok(catalog)
    }

    pub fn builtin() -> Self {
        let mut catalog = Self {
            templates: BTreeMap::new(),
        };
        catalog.overlay(BUILTIN_CATALOG).expect("bundled catalog parses");
        assert_eq!(catalog.templates.len(), TemplateKind::ALL.len());
        catalog
    }

    fn overlay(&mut self, text: &str) -> Result<(), PromptError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| PromptError::CatalogSyntax {
                line: i + 1,
                message,
            };
            let (kind, body) = line
                .split_once('=')
                .ok_or_else(|| err("expected `kind = body`".into()))?;
            let kind: TemplateKind = kind
                .trim()
                .parse()
                .map_err(|_| err(format!("unknown kind `{}`", kind.trim())))?;
            let body = body.trim();
            if body.is_empty() {
                return Err(err("empty template body".into()));
            }
            let template = PromptTemplate::new(kind, body).map_err(err)?;
            self.templates.insert(kind, template);
        }
        Ok(())
    }

    pub fn get(&self, kind: TemplateKind) -> &PromptTemplate {
        &self.templates[&kind]
    }

    pub fn instantiate(&self, kind: TemplateKind, values: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
        self.get(kind).instantiate(values)
    }
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Fills a built-in template.
pub fn instantiate(kind: TemplateKind, values: &[(&str, &str)]) -> Result<String, PromptError> {
    static CATALOG: LazyLock<TemplateCatalog> = LazyLock::new(TemplateCatalog::builtin);
    CATALOG.instantiate(kind, &values.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Explore,
    Evaluate,
    Ignore,
    #[default]
    Unassigned,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Explore => "explore",
            Category::Evaluate => "evaluate",
            Category::Ignore => "ignore",
            Category::Unassigned => "unassigned",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "explore" => Ok(Category::Explore),
            "evaluate" => Ok(Category::Evaluate),
            "ignore" => Ok(Category::Ignore),
            "unassigned" => Ok(Category::Unassigned),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueStatus {
    #[default]
    Pending,
    Detailing,
    Combined,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub id: String,
    pub label: String,
    pub body: String,
    pub source_response: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub status: CueStatus,
}

impl Cue {
    pub fn new(id: &str, label: &str, body: &str, source_response: &str) -> Self {
        Self {
            id: id.to_string(),
            label: label.to_string(),
            body: body.to_string(),
            source_response: source_response.to_string(),
            category: Category::Unassigned,
            score: None,
            status: CueStatus::Pending,
        }
    }

    pub fn text(&self) -> String {
        format!("{} {}", self.label, self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseItem {
    pub label: String,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub broad_statement: Option<String>,
    pub items: Vec<ResponseItem>,
    pub summary: Option<String>,
}

static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{1,3}[.)]\s+(\S.*)$").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[-•*]\s+(\S.*)$").unwrap());
static BOLD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\*\*[^*]+\*\*.*)$").unwrap());
static PLAIN_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Z][^:.!?]{0,60}):\s+(\S.*)$").unwrap());
static LABEL_SPLIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r":| [-–—] ").unwrap());

fn indent_width(line: &str) -> usize {
    line.chars()
        .take_while(|c| c.is_whitespace())
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum()
}

/// Marker-stripped content when `line` opens a top-level list item.
fn item_content(line: &str) -> Option<&str> {
    if indent_width(line) > 1 {
        return None;
    }
    let line = line.trim();
    if let Some(c) = NUMBERED.captures(line).or_else(|| BULLET.captures(line)) {
        return Some(c.get(1).unwrap().as_str());
    }
    if let Some(c) = BOLD.captures(line) {
        return Some(c.get(1).unwrap().as_str());
    }
    let c = PLAIN_LABEL.captures(line)?;
    let head = c.get(1).unwrap().as_str();
    (head.split_whitespace().count() <= MAX_LABEL_WORDS / 2 + 2).then_some(line)
}

fn item_label(content: &str) -> String {
    let plain = content.replace("**", "");
    let head = match LABEL_SPLIT.find(&plain) {
        Some(m) if m.start() > 0 => &plain[..m.start()],
        _ => plain.as_str(),
    };
    let words: Vec<String> = head
        .split_whitespace()
        .take(MAX_LABEL_WORDS)
        .map(str::to_lowercase)
        .collect();
    words
        .join(" ")
        .trim_matches(|c: char| !c.is_alphanumeric() && c != ')' && c != '\'')
        .to_string()
}

fn join_prose(lines: &[&str]) -> Option<String> {
    let text = lines
        .iter()
        .map(|l| l.trim())
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string();
    (!text.is_empty()).then_some(text)
}

/// Splits a response into its opening statement, list items and closing
/// summary. Total: text without a list is all opening statement.
pub fn extract_cues(text: &str) -> ParsedResponse {
    let mut before: Vec<&str> = Vec::new();
    let mut items: Vec<(String, Vec<String>)> = Vec::new();
    // prose seen after the latest item, separated from it by a blank line
    let mut trailing: Vec<&str> = Vec::new();
    let mut blank_since_item = false;

    for line in text.lines() {
        if line.trim().is_empty() {
            blank_since_item = true;
            if !trailing.is_empty() {
                trailing.push("");
            }
            continue;
        }
        if let Some(content) = item_content(line) {
            if let Some((_, body)) = items.last_mut() {
                body.extend(trailing.drain(..).filter(|l| !l.is_empty()).map(str::to_string));
            }
            items.push((item_label(content), vec![content.replace("**", "")]));
            blank_since_item = false;
            continue;
        }
        match items.last_mut() {
            None => before.push(line),
            Some((_, body)) => {
                if indent_width(line) > 1 || !blank_since_item {
                    body.extend(trailing.drain(..).filter(|l| !l.is_empty()).map(str::to_string));
                    body.push(line.trim().replace("**", ""));
                } else {
                    trailing.push(line);
                }
            }
        }
    }

    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let items = items
        .into_iter()
        .enumerate()
        .map(|(i, (label, body))| {
            let base = if label.is_empty() { format!("item {}", i + 1) } else { label };
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            let label = if *n == 1 { base } else { format!("{base} ({n})") };
            ResponseItem {
                label,
                body: body.join("\n"),
            }
        })
        .collect::<Vec<_>>();

    if items.is_empty() {
        return ParsedResponse {
            broad_statement: join_prose(&text.lines().collect::<Vec<_>>()),
            items,
            summary: None,
        };
    }
    ParsedResponse {
        broad_statement: join_prose(&before),
        items,
        summary: join_prose(&trailing),
    }
}

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{L}\p{N}]+(?:'[\p{L}]+)?").unwrap());
static STOP_SET: LazyLock<BTreeSet<&'static str>> = LazyLock::new(|| {
    STOP_WORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
});

pub fn is_stop_word(word: &str) -> bool {
    STOP_SET.contains(word)
}

/// Lowercased words of `text` minus stop words, as a set.
pub fn content_words(text: &str) -> BTreeSet<String> {
    WORD.find_iter(&text.to_lowercase())
        .map(|m| m.as_str().to_string())
        .filter(|w| !is_stop_word(w))
        .collect()
}

/// Jaccard index of two word sets; two empty sets score 0.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Best overlap of `text` with any of the reference texts.
pub fn overlap_score<'a>(text: &str, references: impl IntoIterator<Item = &'a str>) -> f64 {
    let words = content_words(text);
    references
        .into_iter()
        .map(|r| jaccard(&words, &content_words(r)))
        .fold(0.0, f64::max)
}

/// Scores every candidate against the evaluation cues and returns them by
/// score descending, then label.
pub fn score_against(candidates: &[Cue], evaluation: &[Cue]) -> Result<Vec<Cue>, PromptError> {
    if evaluation.is_empty() {
        return Err(PromptError::EmptyEvaluationSet);
    }
    let refs: Vec<String> = evaluation.iter().map(Cue::text).collect();
    let mut scored: Vec<Cue> = candidates
        .iter()
        .map(|c| Cue {
            score: Some(overlap_score(&c.text(), refs.iter().map(String::as_str))),
            ..c.clone()
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(scored)
}
