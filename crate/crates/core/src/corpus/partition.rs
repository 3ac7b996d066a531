use super::{Label, PairInstance, Token, TokenSpan};

/// Before / between / after view of an instance. Empty parts hold one PAD token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionedInstance {
    pub sentence_id: String,
    pub before: Vec<Token>,
    pub between: Vec<Token>,
    pub after: Vec<Token>,
    /// Entity spans as indices into `between`.
    pub e1_span: TokenSpan,
    pub e2_span: TokenSpan,
    pub label: Label,
}

impl PartitionedInstance {
    pub fn parts(&self) -> [&[Token]; 3] {
        [&self.before, &self.between, &self.after]
    }

    /// Original token sequence with padding dropped.
    pub fn reconstruct(&self) -> Vec<Token> {
        self.parts()
            .into_iter()
            .flatten()
            .filter(|t| !t.pad)
            .cloned()
            .collect()
    }
}

fn or_pad(tokens: &[Token]) -> Vec<Token> {
    if tokens.is_empty() {
        vec![Token::pad()]
    } else {
        tokens.to_vec()
    }
}

/// Splits at the first token of `e1` and after the last token of `e2`; both
/// entities stay in the between part.
pub fn partition(instance: &PairInstance) -> PartitionedInstance {
    let s1 = instance.e1_span;
    let s2 = instance.e2_span;
    let toks = &instance.tokens;
    PartitionedInstance {
        sentence_id: instance.sentence_id.clone(),
        before: or_pad(&toks[..s1.start]),
        between: toks[s1.start..=s2.end].to_vec(),
        after: or_pad(&toks[s2.end + 1..]),
        e1_span: TokenSpan::new(0, s1.end - s1.start),
        e2_span: TokenSpan::new(s2.start - s1.start, s2.end - s1.start),
        label: instance.label,
    }
}
