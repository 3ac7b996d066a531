//! Corpus ingestion: annotated XML, entity-pair instances, token features and
//! the before/between/after partition.

mod io;
mod partition;
mod pos;
mod synth;
mod tokenize;
mod xml;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_instances, write_instances, InstanceRecord};
pub use partition::{partition, PartitionedInstance};
pub use pos::{fallback_tag, PosSidecar, PosSource};
pub use synth::{generate_synthetic_corpus, SynthConfig};
pub use tokenize::{distance_to_span, extract_instances, tokenize, tokenize_and_distance, CharToken};
pub use xml::{parse_corpus, parse_document};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed XML at byte {position}: {message}")]
    Xml {
        path: PathBuf,
        position: u64,
        message: String,
    },
    #[error("{path}: pair {pair_id} has unknown interaction type {value:?} (expected advise, effect, mechanism or int)")]
    UnknownInteraction {
        path: PathBuf,
        pair_id: String,
        value: String,
    },
    #[error("{path}: <{element}> has invalid {attribute}={value:?}")]
    InvalidAttribute {
        path: PathBuf,
        element: String,
        attribute: String,
        value: String,
    },
    #[error("sentence {sentence_id}: pair references unknown entity {entity_id}")]
    UnknownEntity {
        sentence_id: String,
        entity_id: String,
    },
    #[error("sentence {sentence_id}: entity {entity_id} offsets {start}..{end} exceed text length {len}")]
    OffsetOutOfBounds {
        sentence_id: String,
        entity_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("sentence {sentence_id}: entity {entity_id} boundary splits token {token:?}")]
    Alignment {
        sentence_id: String,
        entity_id: String,
        token: String,
    },
    #[error("sentence {sentence_id}: entities {e1} and {e2} overlap")]
    OverlappingEntities {
        sentence_id: String,
        e1: String,
        e2: String,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// The five relation classes. The discriminant is the class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Advice,
    Effect,
    Mechanism,
    Int,
    Other,
}

impl Label {
    pub const COUNT: usize = 5;
    pub const ALL: [Label; 5] = [
        Label::Advice,
        Label::Effect,
        Label::Mechanism,
        Label::Int,
        Label::Other,
    ];
    pub const POSITIVE: [Label; 4] = [Label::Advice, Label::Effect, Label::Mechanism, Label::Int];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Advice => "Advice",
            Label::Effect => "Effect",
            Label::Mechanism => "Mechanism",
            Label::Int => "Int",
            Label::Other => "Other",
        }
    }

    pub fn is_positive(self) -> bool {
        self != Label::Other
    }

    /// Maps a corpus `type` attribute of a positive pair. The corpus spells the
    /// advice class "advise".
    pub fn from_interaction_type(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "advise" | "advice" => Some(Label::Advice),
            "effect" => Some(Label::Effect),
            "mechanism" => Some(Label::Mechanism),
            "int" => Some(Label::Int),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .or_else(|| Label::from_interaction_type(s))
            .or_else(|| s.eq_ignore_ascii_case("negative").then_some(Label::Other))
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

/// An annotated entity. Offsets count characters, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairAnnotation {
    pub id: String,
    pub e1: String,
    pub e2: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub entities: Vec<EntityMention>,
    pub pairs: Vec<PairAnnotation>,
}

impl Sentence {
    pub fn entity(&self, id: &str) -> Option<&EntityMention> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Substring by character offsets.
    pub fn slice_chars(&self, start: usize, end: usize) -> String {
        self.text.chars().skip(start).take(end.saturating_sub(start)).collect()
    }
}

/// Inclusive token index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..=self.end).contains(&i)
    }
}

pub const PAD_SURFACE: &str = "<pad>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub pos_tag: String,
    /// Signed offset to the nearest token of the first entity; 0 inside it.
    pub dist_e1: i64,
    pub dist_e2: i64,
    pub pad: bool,
}

impl Token {
    pub fn pad() -> Self {
        Self {
            surface: PAD_SURFACE.to_string(),
            pos_tag: PAD_SURFACE.to_string(),
            dist_e1: 0,
            dist_e2: 0,
            pad: true,
        }
    }
}

/// One classification example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairInstance {
    pub sentence_id: String,
    pub tokens: Vec<Token>,
    pub e1_span: TokenSpan,
    pub e2_span: TokenSpan,
    pub label: Label,
}

impl PairInstance {
    /// Checks span ordering, bounds and the zero-distance convention.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        if self.e1_span.start > self.e1_span.end || self.e2_span.start > self.e2_span.end {
            return Err("span start after end".into());
        }
        if self.e2_span.end >= n {
            return Err(format!("span end {} beyond {} tokens", self.e2_span.end, n));
        }
        if self.e1_span.end >= self.e2_span.start {
            return Err("entity spans overlap or are out of order".into());
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if t.dist_e1 != distance_to_span(i, self.e1_span)
                || t.dist_e2 != distance_to_span(i, self.e2_span)
            {
                return Err(format!("token {i} has inconsistent distances"));
            }
        }
        Ok(())
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }
}

/// Per-label instance counts in [`Label::ALL`] order.
pub fn label_histogram<'a>(labels: impl IntoIterator<Item = &'a Label>) -> [usize; Label::COUNT] {
    let mut h = [0; Label::COUNT];
    for l in labels {
        h[l.index()] += 1;
    }
    h
}
