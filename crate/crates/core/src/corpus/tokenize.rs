use std::collections::BTreeSet;

use super::{
    CorpusError, EntityMention, PairAnnotation, PairInstance, PosSource, Result, Sentence, Token,
    TokenSpan,
};

/// A token as a character range `[start, end)` of the sentence text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharToken {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Splits on whitespace, emits each punctuation character as its own token and
/// force-splits at every offset in `boundaries`.
pub fn tokenize(text: &str, boundaries: &BTreeSet<usize>) -> Vec<CharToken> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0;
    let flush = |cur: &mut String, start: usize, end: usize, out: &mut Vec<CharToken>| {
        if !cur.is_empty() {
            out.push(CharToken {
                start,
                end,
                text: std::mem::take(cur),
            });
        }
    };
    for (i, c) in text.chars().enumerate() {
        if boundaries.contains(&i) {
            flush(&mut cur, cur_start, i, &mut out);
        }
        if c.is_whitespace() {
            flush(&mut cur, cur_start, i, &mut out);
        } else if c.is_alphanumeric() {
            if cur.is_empty() {
                cur_start = i;
            }
            cur.push(c);
        } else {
            flush(&mut cur, cur_start, i, &mut out);
            out.push(CharToken {
                start: i,
                end: i + 1,
                text: c.to_string(),
            });
        }
    }
    let n = text.chars().count();
    flush(&mut cur, cur_start, n, &mut out);
    out
}

/// Signed token offset from `i` to the nearest token of `span`, positive to the right.
pub fn distance_to_span(i: usize, span: TokenSpan) -> i64 {
    if i < span.start {
        i as i64 - span.start as i64
    } else if i > span.end {
        i as i64 - span.end as i64
    } else {
        0
    }
}

fn entity_span(tokens: &[CharToken], sentence: &Sentence, e: &EntityMention) -> Result<TokenSpan> {
    let mut first = None;
    let mut last = None;
    for (i, t) in tokens.iter().enumerate() {
        let inside = t.start >= e.char_start && t.end <= e.char_end;
        let overlaps = t.start < e.char_end && t.end > e.char_start;
        if inside {
            first.get_or_insert(i);
            last = Some(i);
        } else if overlaps {
            return Err(CorpusError::Alignment {
                sentence_id: sentence.id.clone(),
                entity_id: e.id.clone(),
                token: t.text.clone(),
            });
        }
    }
    match (first, last) {
        (Some(a), Some(b)) => Ok(TokenSpan::new(a, b)),
        _ => Err(CorpusError::Alignment {
            sentence_id: sentence.id.clone(),
            entity_id: e.id.clone(),
            token: e.surface.clone(),
        }),
    }
}

/// Builds the token-level instance for one annotated pair. Entities are
/// reordered so that `e1` is the one mentioned first.
pub fn tokenize_and_distance(
    sentence: &Sentence,
    pair: &PairAnnotation,
    pos: &PosSource,
) -> Result<PairInstance> {
    let lookup = |id: &str| {
        sentence.entity(id).ok_or_else(|| CorpusError::UnknownEntity {
            sentence_id: sentence.id.clone(),
            entity_id: id.to_string(),
        })
    };
    let mut a = lookup(&pair.e1)?;
    let mut b = lookup(&pair.e2)?;
    if (b.char_start, b.char_end) < (a.char_start, a.char_end) {
        std::mem::swap(&mut a, &mut b);
    }
    let boundaries: BTreeSet<usize> = sentence
        .entities
        .iter()
        .flat_map(|e| [e.char_start, e.char_end])
        .collect();
    let char_tokens = tokenize(&sentence.text, &boundaries);
    let s1 = entity_span(&char_tokens, sentence, a)?;
    let s2 = entity_span(&char_tokens, sentence, b)?;
    if s1.end >= s2.start {
        return Err(CorpusError::OverlappingEntities {
            sentence_id: sentence.id.clone(),
            e1: a.id.clone(),
            e2: b.id.clone(),
        });
    }
    let surfaces: Vec<&str> = char_tokens.iter().map(|t| t.text.as_str()).collect();
    let tags = pos.tags(&sentence.id, &surfaces);
    let tokens = char_tokens
        .iter()
        .zip(tags)
        .enumerate()
        .map(|(i, (t, tag))| Token {
            surface: t.text.clone(),
            pos_tag: tag,
            dist_e1: distance_to_span(i, s1),
            dist_e2: distance_to_span(i, s2),
            pad: false,
        })
        .collect();
    Ok(PairInstance {
        sentence_id: sentence.id.clone(),
        tokens,
        e1_span: s1,
        e2_span: s2,
        label: pair.label,
    })
}

/// Instances for every annotated pair, in corpus order. Pairs that cannot be
/// aligned are returned separately instead of aborting the whole corpus.
pub fn extract_instances(
    sentences: &[Sentence],
    pos: &PosSource,
) -> (Vec<PairInstance>, Vec<CorpusError>) {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for s in sentences {
        if s.entities.len() < 2 {
            continue;
        }
        for p in &s.pairs {
            match tokenize_and_distance(s, p, pos) {
                Ok(i) => ok.push(i),
                Err(e) => skipped.push(e),
            }
        }
    }
    (ok, skipped)
}
