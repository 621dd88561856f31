//! Line-oriented annotation format for write-ups.
//!
//! ```text
//! #paragraph r0
//! S1: I walked into my regular classes
//!   verb: walked
//!   who: I
//!   where: classes
//!   attr: classes <- regular
//! R: S1 -detailing-> S2
//! C: central idea [origin=author] [cluster=core] [attrs=bold,clear]
//! E: central idea -goal-> audience [implied]
//! ```
//!
//! Sentence relations (`R:`) and concept relationships (`E:`) live in separate
//! declaration spaces: `R:` endpoints are sentence ids, `E:` endpoints are
//! concept labels.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;
use thiserror::Error;

use crate::graph::{
    normalize_label, Attribute, Concept, ConceptGraph, Explicitness, GraphError, Origin, Polarity,
    RelationKind, RelationshipDescriptor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Verb,
    What,
    Who,
    Where,
    When,
    OnWho,
    Outputs,
    ForWho,
    Why,
}

impl Role {
    pub const ALL: [Role; 9] = [
        Role::Verb,
        Role::What,
        Role::Who,
        Role::Where,
        Role::When,
        Role::OnWho,
        Role::Outputs,
        Role::ForWho,
        Role::Why,
    ];

    /// Bins whose tokens are treated as candidate nouns.
    pub const NOUN_BINS: [Role; 5] = [Role::What, Role::Who, Role::OnWho, Role::Outputs, Role::ForWho];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Verb => "verb",
            Role::What => "what",
            Role::Who => "who",
            Role::Where => "where",
            Role::When => "when",
            Role::OnWho => "on_who",
            Role::Outputs => "outputs",
            Role::ForWho => "for_who",
            Role::Why => "why",
        }
    }
}

impl FromStr for Role {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.iter().copied().find(|r| r.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualifierKind {
    Attribute,
    Adverb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qualifier {
    pub head: String,
    pub qualifier: String,
    pub kind: QualifierKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceFrame {
    pub sentence_id: String,
    pub raw: String,
    pub bins: BTreeMap<Role, Vec<String>>,
    pub qualifiers: Vec<Qualifier>,
}

impl SentenceFrame {
    pub fn new(sentence_id: &str, raw: &str) -> Self {
        Self {
            sentence_id: sentence_id.to_string(),
            raw: raw.to_string(),
            bins: BTreeMap::new(),
            qualifiers: Vec::new(),
        }
    }

    pub fn with_bin(mut self, role: Role, tokens: &[&str]) -> Self {
        self.bins
            .entry(role)
            .or_default()
            .extend(tokens.iter().map(|t| t.to_string()));
        self
    }

    pub fn with_qualifier(mut self, head: &str, qualifier: &str, kind: QualifierKind) -> Self {
        self.qualifiers.push(Qualifier {
            head: head.to_string(),
            qualifier: qualifier.to_string(),
            kind,
        });
        self
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.bins.values().flatten().map(String::as_str)
    }

    fn mentions(&self, label: &str) -> bool {
        let norm = |s: &str| normalize_label(s);
        self.bins.values().any(|tokens| {
            tokens.iter().any(|t| norm(t) == label) || norm(&tokens.join(" ")) == label
        }) || self
            .qualifiers
            .iter()
            .any(|q| norm(&format!("{} {}", q.qualifier, q.head)) == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRelation {
    pub from: String,
    pub to: String,
    pub kind: RelationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationDocument {
    pub paragraph_revision: Option<String>,
    pub frames: Vec<SentenceFrame>,
    pub frame_relations: Vec<FrameRelation>,
    pub concept_decls: Vec<Concept>,
    pub edge_decls: Vec<RelationshipDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnosticKind {
    #[error("syntax-error: expected {expected}")]
    Syntax { expected: String },
    #[error("unknown-role: `{0}`")]
    UnknownRole(String),
    #[error("unknown-kind: `{0}`")]
    UnknownKind(String),
    #[error("duplicate-sentence-id: `{0}`")]
    DuplicateSentenceId(String),
    #[error("undeclared-endpoint: `{0}`")]
    UndeclaredEndpoint(String),
    #[error("unknown-qualifier-head: `{0}` is not in any bin of the sentence")]
    UnknownQualifierHead(String),
}

impl DiagnosticKind {
    pub fn name(&self) -> &'static str {
        match self {
            DiagnosticKind::Syntax { .. } => "syntax-error",
            DiagnosticKind::UnknownRole(_) => "unknown-role",
            DiagnosticKind::UnknownKind(_) => "unknown-kind",
            DiagnosticKind::DuplicateSentenceId(_) => "duplicate-sentence-id",
            DiagnosticKind::UndeclaredEndpoint(_) => "undeclared-endpoint",
            DiagnosticKind::UnknownQualifierHead(_) => "unknown-qualifier-head",
        }
    }
}

/// A positioned parse diagnostic. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub kind: DiagnosticKind,
}

/// Every diagnostic found in a document, in line order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl Diagnostics {
    pub fn first(&self) -> &Diagnostic {
        &self.0[0]
    }
}

static SENTENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^S([A-Za-z0-9_.-]+):(?:\s+(.*))?$").unwrap());
static LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(.+?) -([A-Za-z0-9_]+)-> (.+?)(?: \[([a-z]+)\])?$").unwrap());
static SENTENCE_LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^S(\S+) -([A-Za-z0-9_]+)-> S(\S+)$").unwrap());

struct Parser {
    doc: AnnotationDocument,
    diagnostics: Vec<Diagnostic>,
    sentence_lines: HashMap<String, usize>,
    pending_relations: Vec<(usize, FrameRelation)>,
    pending_edges: Vec<(usize, RelationshipDescriptor)>,
    current_frame: Option<usize>,
    qualifier_lines: Vec<(usize, usize, usize, String)>,
}

fn col(line: &str, part: &str) -> usize {
    // part is always a subslice of line
    let offset = part.as_ptr() as usize - line.as_ptr() as usize;
    line[..offset].chars().count() + 1
}

impl Parser {
    fn error(&mut self, line: usize, column: usize, kind: DiagnosticKind) {
        self.diagnostics.push(Diagnostic { line, column, kind });
    }

    fn syntax(&mut self, line: usize, column: usize, expected: &str) {
        self.error(
            line,
            column,
            DiagnosticKind::Syntax {
                expected: expected.to_string(),
            },
        );
    }

    fn line(&mut self, n: usize, raw: &str) {
        let line = raw.trim_end();
        if line.trim().is_empty() {
            return;
        }
        if line.starts_with([' ', '\t']) {
            self.frame_line(n, line);
            return;
        }
        self.current_frame = None;
        if let Some(rest) = line.strip_prefix("#paragraph") {
            if !(rest.is_empty() || rest.starts_with([' ', '\t'])) {
                return; // a comment that merely starts with the word
            }
            let id = rest.trim();
            if id.is_empty() || id.contains(char::is_whitespace) {
                self.syntax(n, 11, "a single revision id after `#paragraph`");
            } else if self.doc.paragraph_revision.is_some() {
                self.syntax(n, 1, "at most one `#paragraph` directive");
            } else {
                self.doc.paragraph_revision = Some(id.to_string());
            }
        } else if line.starts_with('#') {
        } else if let Some(rest) = line.strip_prefix("R:") {
            self.relation_line(n, line, rest.trim());
        } else if let Some(rest) = line.strip_prefix("C:") {
            self.concept_line(n, line, rest.trim());
        } else if let Some(rest) = line.strip_prefix("E:") {
            self.edge_line(n, line, rest.trim());
        } else if let Some(caps) = SENTENCE.captures(line) {
            let id = format!("S{}", &caps[1]);
            let text = caps.get(2).map(|m| m.as_str().trim()).unwrap_or("");
            if text.is_empty() {
                self.syntax(n, line.len() + 1, "sentence text");
                return;
            }
            if self.sentence_lines.contains_key(&id) {
                self.error(n, 1, DiagnosticKind::DuplicateSentenceId(id));
                return;
            }
            self.sentence_lines.insert(id.clone(), n);
            self.doc.frames.push(SentenceFrame::new(&id, text));
            self.current_frame = Some(self.doc.frames.len() - 1);
        } else {
            self.syntax(n, 1, "one of `#paragraph`, `S<id>:`, `R:`, `C:`, `E:`");
        }
    }

    fn frame_line(&mut self, n: usize, line: &str) {
        let Some(frame_idx) = self.current_frame else {
            self.syntax(n, 1, "an `S<id>:` sentence before indented role lines");
            return;
        };
        let body = line.trim_start();
        let Some((key, value)) = body.split_once(':') else {
            self.syntax(n, col(line, body), "`<role>: <tokens>` or `attr:`/`adv:` qualifier");
            return;
        };
        let key_col = col(line, body);
        let value = value.trim();
        match key {
            "attr" | "adv" => {
                let kind = if key == "attr" {
                    QualifierKind::Attribute
                } else {
                    QualifierKind::Adverb
                };
                match value.split_once("<-") {
                    Some((head, qual))
                        if is_token(head.trim()) && is_token(qual.trim()) =>
                    {
                        let head = head.trim().to_string();
                        let q = Qualifier {
                            head: head.clone(),
                            qualifier: qual.trim().to_string(),
                            kind,
                        };
                        let frame = &mut self.doc.frames[frame_idx];
                        frame.qualifiers.push(q);
                        self.qualifier_lines
                            .push((n, col(line, value), frame_idx, head));
                    }
                    _ => {
                        let c = if value.is_empty() { line.len() + 1 } else { col(line, value) };
                        self.syntax(n, c, "`<head> <- <qualifier>`")
                    }
                }
            }
            _ => match key.parse::<Role>() {
                Ok(role) => {
                    let tokens: Vec<String> = value.split_whitespace().map(str::to_string).collect();
                    if tokens.is_empty() {
                        self.syntax(n, line.len() + 1, "at least one token");
                        return;
                    }
                    self.doc.frames[frame_idx]
                        .bins
                        .entry(role)
                        .or_default()
                        .extend(tokens);
                }
                Err(()) => self.error(n, key_col, DiagnosticKind::UnknownRole(key.to_string())),
            },
        }
    }

    fn relation_line(&mut self, n: usize, line: &str, rest: &str) {
        let Some(caps) = SENTENCE_LINK.captures(rest) else {
            let c = if rest.is_empty() { line.len() + 1 } else { col(line, rest) };
            self.syntax(n, c, "`S<id> -<kind>-> S<id>`");
            return;
        };
        let kind_match = caps.get(2).unwrap();
        let kind = match kind_match.as_str().parse::<RelationKind>() {
            Ok(k) => k,
            Err(_) => {
                self.error(
                    n,
                    col(line, kind_match.as_str()),
                    DiagnosticKind::UnknownKind(kind_match.as_str().to_string()),
                );
                return;
            }
        };
        self.pending_relations.push((
            n,
            FrameRelation {
                from: format!("S{}", &caps[1]),
                to: format!("S{}", &caps[3]),
                kind,
            },
        ));
    }

    fn concept_line(&mut self, n: usize, line: &str, rest: &str) {
        let (label, mut options) = match rest.find(" [") {
            Some(i) => (&rest[..i], &rest[i + 1..]),
            None => (rest, ""),
        };
        if label.contains(['[', ']']) || normalize_label(label).is_empty() {
            let c = if rest.is_empty() { line.len() + 1 } else { col(line, rest) };
            self.syntax(n, c, "a concept label");
            return;
        }
        let mut concept = Concept::new(label).expect("label checked non-empty");
        while !options.trim().is_empty() {
            let opt = options.trim_start();
            let Some(close) = opt.find(']').filter(|_| opt.starts_with('[')) else {
                self.syntax(n, col(line, opt), "`[key=value]`");
                return;
            };
            let inner = &opt[1..close];
            let Some((key, value)) = inner.split_once('=') else {
                self.syntax(n, col(line, opt), "`[key=value]`");
                return;
            };
            match key {
                "origin" => match value.parse::<Origin>() {
                    Ok(o) => concept.origin = o,
                    Err(_) => {
                        self.syntax(n, col(line, value), "`author` or `llm:<response-id>`");
                        return;
                    }
                },
                "cluster" if !value.trim().is_empty() => concept.cluster = Some(value.trim().to_string()),
                "note" if !value.trim().is_empty() => concept.abstraction_note = Some(value.trim().to_string()),
                "attrs" => {
                    for raw in value.split(',') {
                        let raw = raw.trim();
                        let (text, polarity) = match raw.rsplit_once(':') {
                            Some((t, p)) => match Polarity::from_symbol(p) {
                                Some(p) => (t, Some(p)),
                                None => (raw, None),
                            },
                            None => (raw, None),
                        };
                        if normalize_label(text).is_empty() {
                            self.syntax(n, col(line, value), "comma-separated attribute names");
                            return;
                        }
                        let mut attr = Attribute::new(text);
                        attr.polarity = polarity;
                        concept.attributes.push(attr);
                    }
                }
                _ => {
                    self.syntax(n, col(line, opt), "one of origin=, cluster=, attrs=, note=");
                    return;
                }
            }
            options = &opt[close + 1..];
        }
        self.doc.concept_decls.push(concept);
    }

    fn edge_line(&mut self, n: usize, line: &str, rest: &str) {
        let Some(caps) = LINK.captures(rest) else {
            let c = if rest.is_empty() { line.len() + 1 } else { col(line, rest) };
            self.syntax(n, c, "`<label> -<kind>-> <label> [explicit|implied]`");
            return;
        };
        let kind_match = caps.get(2).unwrap();
        let kind = match kind_match.as_str().parse::<RelationKind>() {
            Ok(k) => k,
            Err(_) => {
                self.error(
                    n,
                    col(line, kind_match.as_str()),
                    DiagnosticKind::UnknownKind(kind_match.as_str().to_string()),
                );
                return;
            }
        };
        let explicitness = match caps.get(4).map(|m| m.as_str()) {
            None | Some("explicit") => Explicitness::Explicit,
            Some("implied") => Explicitness::Implied,
            Some(other) => {
                self.syntax(n, col(line, caps.get(4).unwrap().as_str()) - 1, "`[explicit]` or `[implied]`");
                let _ = other;
                return;
            }
        };
        let to = caps.get(3).unwrap().as_str();
        if to.contains(['[', ']']) || caps[1].contains(['[', ']']) {
            self.syntax(n, col(line, to), "`[explicit]` or `[implied]`");
            return;
        }
        self.pending_edges.push((
            n,
            RelationshipDescriptor {
                from: normalize_label(&caps[1]),
                to: normalize_label(to),
                kind,
                explicitness,
            },
        ));
    }

    fn finish(mut self) -> Result<AnnotationDocument, Diagnostics> {
        let qualifier_lines = std::mem::take(&mut self.qualifier_lines);
        for (n, c, frame_idx, head) in qualifier_lines {
            let present = self.doc.frames[frame_idx].tokens().any(|t| t == head);
            if !present {
                self.error(n, c, DiagnosticKind::UnknownQualifierHead(head));
            }
        }
        for (n, rel) in std::mem::take(&mut self.pending_relations) {
            for end in [&rel.from, &rel.to] {
                if !self.sentence_lines.contains_key(end) {
                    self.error(n, 4, DiagnosticKind::UndeclaredEndpoint(end.clone()));
                }
            }
            self.doc.frame_relations.push(rel);
        }
        let labels: BTreeSet<String> = self
            .doc
            .concept_decls
            .iter()
            .map(|c| c.label().to_string())
            .collect();
        for (n, edge) in std::mem::take(&mut self.pending_edges) {
            for end in [&edge.from, &edge.to] {
                if !labels.contains(end) {
                    self.error(n, 4, DiagnosticKind::UndeclaredEndpoint(end.clone()));
                }
            }
            self.doc.edge_decls.push(edge);
        }
        if self.diagnostics.is_empty() {
            Ok(self.doc)
        } else {
            self.diagnostics.sort_by_key(|d| (d.line, d.column));
            Err(Diagnostics(self.diagnostics))
        }
    }
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.contains(char::is_whitespace)
}

/// Parses an annotation document, collecting every diagnostic.
pub fn parse_annotation(text: &str) -> Result<AnnotationDocument, Diagnostics> {
    let mut parser = Parser {
        doc: AnnotationDocument::default(),
        diagnostics: Vec::new(),
        sentence_lines: HashMap::new(),
        pending_relations: Vec::new(),
        pending_edges: Vec::new(),
        current_frame: None,
        qualifier_lines: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        parser.line(i + 1, line);
    }
    parser.finish()
}

/// Canonical text form. `parse_annotation(&serialize(&doc))` reproduces `doc`.
pub fn serialize(doc: &AnnotationDocument) -> String {
    let mut out = String::new();
    if let Some(rev) = &doc.paragraph_revision {
        let _ = writeln!(out, "#paragraph {rev}");
    }
    for frame in &doc.frames {
        let _ = writeln!(out, "{}: {}", frame.sentence_id, frame.raw);
        for (role, tokens) in &frame.bins {
            if !tokens.is_empty() {
                let _ = writeln!(out, "  {}: {}", role.as_str(), tokens.join(" "));
            }
        }
        for q in &frame.qualifiers {
            let key = match q.kind {
                QualifierKind::Attribute => "attr",
                QualifierKind::Adverb => "adv",
            };
            let _ = writeln!(out, "  {key}: {} <- {}", q.head, q.qualifier);
        }
    }
    for rel in &doc.frame_relations {
        let _ = writeln!(out, "R: {} -{}-> {}", rel.from, rel.kind, rel.to);
    }
    for concept in &doc.concept_decls {
        out.push_str(&concept_line(concept));
        out.push('\n');
    }
    for edge in &doc.edge_decls {
        let _ = write!(out, "E: {} -{}-> {}", edge.from, edge.kind, edge.to);
        if edge.explicitness == Explicitness::Implied {
            out.push_str(" [implied]");
        }
        out.push('\n');
    }
    out
}

fn concept_line(concept: &Concept) -> String {
    let mut line = format!("C: {}", concept.label());
    if concept.origin != Origin::Author {
        let _ = write!(line, " [origin={}]", concept.origin);
    }
    if let Some(cluster) = &concept.cluster {
        let _ = write!(line, " [cluster={cluster}]");
    }
    if !concept.attributes.is_empty() {
        let attrs: Vec<String> = concept
            .attributes
            .iter()
            .map(|a| match a.polarity {
                Some(p) => format!("{}:{}", a.text, p.symbol()),
                None => a.text.clone(),
            })
            .collect();
        let _ = write!(line, " [attrs={}]", attrs.join(","));
    }
    if let Some(note) = &concept.abstraction_note {
        let _ = write!(line, " [note={note}]");
    }
    line
}

/// Writes a graph as `C:`/`E:` declarations.
pub fn serialize_graph(graph: &ConceptGraph) -> String {
    let mut out = String::new();
    if !graph.provenance_note.is_empty() {
        let _ = writeln!(out, "# {}", graph.provenance_note);
    }
    for concept in graph.concepts() {
        out.push_str(&concept_line(concept));
        out.push('\n');
    }
    for rel in graph.relationships() {
        let _ = write!(out, "E: {} -{}-> {}", rel.from, rel.kind, rel.to);
        if rel.explicitness == Explicitness::Implied {
            out.push_str(" [implied]");
        }
        out.push('\n');
    }
    out
}

/// Materializes the concept declarations. Frames that mention a concept are
/// recorded on it as provenance.
pub fn to_graph(doc: &AnnotationDocument) -> Result<ConceptGraph, GraphError> {
    let concepts = doc
        .concept_decls
        .iter()
        .map(|c| {
            let mut c = c.clone();
            for frame in &doc.frames {
                if frame.mentions(c.label()) {
                    c.frames.insert(frame.sentence_id.clone());
                }
            }
            c
        })
        .collect();
    let graph = ConceptGraph::build(concepts, doc.edge_decls.clone())?;
    Ok(match &doc.paragraph_revision {
        Some(rev) => graph.with_note(&format!("paragraph {rev}")),
        None => graph,
    })
}

/// An unconfirmed concept proposed from a sentence frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSuggestion {
    pub label: String,
    pub attributes: Vec<String>,
    pub sentence_id: String,
    pub confirmed: bool,
}

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "you", "your", "yours", "he",
    "him", "his", "she", "her", "hers", "it", "its", "they", "them", "their", "theirs", "this",
    "that", "these", "those", "everyone", "someone", "anyone", "nothing", "everything",
];

/// One suggestion per distinct token in the noun bins, carrying the token's
/// attribute qualifiers. Suggestions are never added to a graph here.
pub fn extract_concept_suggestions(frame: &SentenceFrame) -> Vec<ConceptSuggestion> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for role in Role::NOUN_BINS {
        for token in frame.bins.get(&role).into_iter().flatten() {
            let label = normalize_label(token);
            if label.is_empty() || PRONOUNS.contains(&label.as_str()) || !seen.insert(label.clone()) {
                continue;
            }
            let attributes = frame
                .qualifiers
                .iter()
                .filter(|q| q.kind == QualifierKind::Attribute && q.head == *token)
                .map(|q| normalize_label(&q.qualifier))
                .collect();
            out.push(ConceptSuggestion {
                label,
                attributes,
                sentence_id: frame.sentence_id.clone(),
                confirmed: false,
            });
        }
    }
    out
}
