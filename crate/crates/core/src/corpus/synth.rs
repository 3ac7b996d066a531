//! Deterministic synthetic relation corpus with one trigger phrase per instance.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{fallback_tag, distance_to_span, CorpusError, Label, PairInstance, Result, Token, TokenSpan};
use crate::rng::{stream, substream};

const DRUGS: &[&str] = &[
    "aspirin", "warfarin", "digoxin", "ketoconazole", "rifampin", "cimetidine", "phenytoin",
    "lithium", "methotrexate", "cyclosporine", "fluoxetine", "clarithromycin", "verapamil",
    "theophylline", "carbamazepine", "simvastatin", "omeprazole", "amiodarone", "probenecid",
    "tacrolimus", "sertraline", "diltiazem", "metformin", "naproxen",
];

const FILLER: &[&str] = &[
    "the", "patients", "dose", "clinical", "therapy", "of", "in", "with", "treatment", "study",
    "daily", "oral", "subjects", "during", "trial", "healthy", "single", "concomitant", "observed",
    "data", "group", "weeks", "mg", "regimen", "use", "both", "when", "given", "after", "serum",
];

const ADVICE: &[&[&str]] = &[
    &["should", "avoid"],
    &["caution", "advised"],
    &["contraindicated"],
    &["recommend", "against"],
];
const EFFECT: &[&[&str]] = &[
    &["potentiates"],
    &["enhanced", "toxicity"],
    &["increased", "sedation"],
    &["augments", "response"],
];
const MECHANISM: &[&[&str]] = &[
    &["inhibits", "metabolism"],
    &["reduced", "clearance"],
    &["raises", "plasma", "levels"],
    &["absorption", "decreased"],
];
const INT: &[&[&str]] = &[&["interacts"], &["interaction", "reported"], &["may", "interact"]];
const OTHER: &[&[&str]] = &[
    &["compared", "alongside"],
    &["administered", "separately"],
    &["were", "studied"],
    &["versus"],
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub train_size: usize,
    pub test_size: usize,
    /// Exact per-class counts (up to one instance) instead of i.i.d. labels.
    pub balanced: bool,
    pub max_outer_filler: usize,
    pub max_between_filler: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_size: 2000,
            test_size: 500,
            balanced: true,
            max_outer_filler: 3,
            max_between_filler: 4,
        }
    }
}

impl SynthConfig {
    pub fn with_sizes(train_size: usize, test_size: usize) -> Self {
        Self {
            train_size,
            test_size,
            ..Self::default()
        }
    }

    /// Trigger phrases of a class. Lexicons are pairwise disjoint.
    pub fn triggers(label: Label) -> &'static [&'static [&'static str]] {
        match label {
            Label::Advice => ADVICE,
            Label::Effect => EFFECT,
            Label::Mechanism => MECHANISM,
            Label::Int => INT,
            Label::Other => OTHER,
        }
    }

    pub fn filler() -> &'static [&'static str] {
        FILLER
    }

    pub fn drugs() -> &'static [&'static str] {
        DRUGS
    }

    fn validate(&self) -> Result<()> {
        if self.train_size == 0 || self.test_size == 0 {
            return Err(CorpusError::InvalidConfig(
                "synthetic corpus sizes must be positive".into(),
            ));
        }
        let mut seen = HashSet::new();
        for w in FILLER.iter().chain(DRUGS) {
            seen.insert(*w);
        }
        for l in Label::ALL {
            for w in Self::triggers(l).iter().flat_map(|p| p.iter()) {
                if !seen.insert(*w) {
                    return Err(CorpusError::InvalidConfig(format!(
                        "trigger word {w:?} is not unique to one class"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn labels_for<R: Rng>(n: usize, balanced: bool, rng: &mut R) -> Vec<Label> {
    if balanced {
        let mut v: Vec<Label> = (0..n).map(|i| Label::ALL[i % Label::COUNT]).collect();
        v.shuffle(rng);
        v
    } else {
        (0..n).map(|_| Label::ALL[rng.gen_range(0..Label::COUNT)]).collect()
    }
}

fn sentence<R: Rng>(cfg: &SynthConfig, label: Label, rng: &mut R) -> (Vec<&'static str>, TokenSpan, TokenSpan) {
    let pick = |rng: &mut R, n: usize| -> Vec<&'static str> {
        (0..n).map(|_| *FILLER.choose(rng).unwrap()).collect()
    };
    let before_n = rng.gen_range(0..=cfg.max_outer_filler);
    let after_n = rng.gen_range(0..=cfg.max_outer_filler);
    let mid_n = rng.gen_range(0..=cfg.max_between_filler);

    let d1 = *DRUGS.choose(rng).unwrap();
    let d2 = loop {
        let d = *DRUGS.choose(rng).unwrap();
        if d != d1 {
            break d;
        }
    };
    let phrase = *SynthConfig::triggers(label).choose(rng).unwrap();
    let mut between = pick(rng, mid_n);
    let at = rng.gen_range(0..=between.len());
    between.splice(at..at, phrase.iter().copied());

    let mut words = pick(rng, before_n);
    let e1 = words.len();
    words.push(d1);
    words.extend(between);
    let e2 = words.len();
    words.push(d2);
    words.extend(pick(rng, after_n));
    words.push(".");
    (words, TokenSpan::new(e1, e1), TokenSpan::new(e2, e2))
}

fn instance(id: String, words: &[&str], e1: TokenSpan, e2: TokenSpan, label: Label) -> PairInstance {
    let tokens = words
        .iter()
        .enumerate()
        .map(|(i, w)| Token {
            surface: w.to_string(),
            pos_tag: fallback_tag(w, i == 0),
            dist_e1: distance_to_span(i, e1),
            dist_e2: distance_to_span(i, e2),
            pad: false,
        })
        .collect();
    PairInstance {
        sentence_id: id,
        tokens,
        e1_span: e1,
        e2_span: e2,
        label,
    }
}

/// Draws `(train, test)` from one generative process. No sentence appears twice
/// across both sets. Output depends only on `config` and `seed`.
pub fn generate_synthetic_corpus(
    config: &SynthConfig,
    seed: u64,
) -> Result<(Vec<PairInstance>, Vec<PairInstance>)> {
    config.validate()?;
    let mut rng = substream(seed, stream::SYNTH);
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut draw = |split: &str, n: usize, rng: &mut _| {
        let labels = labels_for(n, config.balanced, rng);
        let mut out = Vec::with_capacity(n);
        for (i, label) in labels.into_iter().enumerate() {
            let (words, e1, e2) = loop {
                let s = sentence(config, label, rng);
                if seen.insert(s.0.clone()) {
                    break s;
                }
            };
            out.push(instance(format!("synth.{split}.{i:05}"), &words, e1, e2, label));
        }
        out
    };
    let train = draw("train", config.train_size, &mut rng);
    let test = draw("test", config.test_size, &mut rng);
    Ok((train, test))
}
