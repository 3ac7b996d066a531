//! Vocabularies, embedding tables and the token vector `[word, pos, dist_e1, dist_e2]`.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Var};
use crate::config::{AttentionScope, ModelConfig};
use crate::corpus::{Label, PairInstance, PartitionedInstance, Token};
use crate::tensor::{self, Tensor};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_KEY: &str = "<pad>";
const UNK_KEY: &str = "<unk>";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("embedding configuration mismatch: {0}")]
    Config(String),
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    words: Vec<String>,
    pos_tags: Vec<String>,
    min_freq: usize,
}

/// Word and POS index tables. Index 0 is PAD and index 1 is UNK in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    words: Vec<String>,
    pos_tags: Vec<String>,
    min_freq: usize,
    word_index: HashMap<String, usize>,
    pos_index: HashMap<String, usize>,
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = EmbeddingError;

    fn try_from(f: VocabularyFile) -> Result<Self, Self::Error> {
        Self::from_lists(f.words, f.pos_tags, f.min_freq)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        Self {
            words: v.words,
            pos_tags: v.pos_tags,
            min_freq: v.min_freq,
        }
    }
}

fn index_of(list: &[String]) -> Result<HashMap<String, usize>, EmbeddingError> {
    if list.len() < 2 || list[PAD] != PAD_KEY || list[UNK] != UNK_KEY {
        return Err(EmbeddingError::Vocabulary(
            "lists must start with <pad>, <unk>".into(),
        ));
    }
    let mut map = HashMap::with_capacity(list.len());
    for (i, w) in list.iter().enumerate() {
        if map.insert(w.clone(), i).is_some() {
            return Err(EmbeddingError::Vocabulary(format!("duplicate entry {w:?}")));
        }
    }
    Ok(map)
}

impl Vocabulary {
    pub fn from_lists(words: Vec<String>, pos_tags: Vec<String>, min_freq: usize) -> Result<Self, EmbeddingError> {
        let word_index = index_of(&words)?;
        let pos_index = index_of(&pos_tags)?;
        Ok(Self {
            words,
            pos_tags,
            min_freq,
            word_index,
            pos_index,
        })
    }

    /// Words with frequency `>= min_freq`, most frequent first, ties
    /// lexicographic. Words are lowercased.
    pub fn build<'a>(instances: impl IntoIterator<Item = &'a PairInstance>, min_freq: usize) -> Self {
        let mut wc: HashMap<String, usize> = HashMap::new();
        let mut pc: HashMap<String, usize> = HashMap::new();
        for inst in instances {
            for t in &inst.tokens {
                *wc.entry(normalize(&t.surface)).or_default() += 1;
                *pc.entry(t.pos_tag.clone()).or_default() += 1;
            }
        }
        let ordered = |counts: HashMap<String, usize>, cutoff: usize| {
            let mut v: Vec<(String, usize)> = counts
                .into_iter()
                .filter(|(k, c)| *c >= cutoff && k != PAD_KEY && k != UNK_KEY)
                .collect();
            v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let mut list = vec![PAD_KEY.to_string(), UNK_KEY.to_string()];
            list.extend(v.into_iter().map(|(k, _)| k));
            list
        };
        Self::from_lists(ordered(wc, min_freq.max(1)), ordered(pc, 1), min_freq)
            .expect("freshly built lists are well formed")
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn pos_count(&self) -> usize {
        self.pos_tags.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_id(&self, surface: &str) -> usize {
        self.word_index.get(&normalize(surface)).copied().unwrap_or(UNK)
    }

    pub fn pos_id(&self, tag: &str) -> usize {
        self.pos_index.get(tag).copied().unwrap_or(UNK)
    }

    pub fn token_ids(&self, t: &Token) -> (usize, usize) {
        if t.pad {
            (PAD, PAD)
        } else {
            (self.word_id(&t.surface), self.pos_id(&t.pos_tag))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EmbeddingError> {
        serde_json::from_str(s).map_err(|e| EmbeddingError::Vocabulary(e.to_string()))
    }
}

fn normalize(s: &str) -> String {
    s.to_lowercase()
}

/// Distance row for a signed offset, clipped to `[-clip, clip]`. Row 0 is PAD.
pub fn dist_bucket(d: i64, clip: usize) -> usize {
    let c = clip as i64;
    (d.clamp(-c, c) + c + 1) as usize
}

/// The three lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables<T = Tensor> {
    pub word: T,
    pub pos: T,
    pub dist: T,
}

impl<T> EmbeddingTables<T> {
    pub fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> EmbeddingTables<U> {
        EmbeddingTables {
            word: f(&format!("{prefix}.word"), &self.word),
            pos: f(&format!("{prefix}.pos"), &self.pos),
            dist: f(&format!("{prefix}.dist"), &self.dist),
        }
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{prefix}.word"), &mut self.word);
        f(&format!("{prefix}.pos"), &mut self.pos);
        f(&format!("{prefix}.dist"), &mut self.dist);
    }
}

fn normal_table<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let mut data: Vec<f64> = (0..rows * cols)
        .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    data[..cols].fill(0.0);
    Tensor::matrix(rows, cols, data).expect("shape matches")
}

impl EmbeddingTables {
    /// Scaled standard-normal tables with all-zero PAD rows.
    pub fn init<R: Rng>(vocab: &Vocabulary, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            word: normal_table(vocab.word_count(), cfg.word_dim, rng),
            pos: normal_table(vocab.pos_count(), cfg.pos_dim, rng),
            dist: normal_table(cfg.dist_buckets(), cfg.dist_dim, rng),
        }
    }
}

/// Vocabulary coverage of a pretrained-vector load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub matched: usize,
    pub vocab_size: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.matched as f64 / self.vocab_size as f64
    }
}

/// Overwrites rows of `table` for vocabulary words found in a text-format
/// vector file (`V d` header, then `token v1 .. vd` per line). The PAD row and
/// unmatched rows are left alone.
pub fn load_pretrained_word_vectors(
    path: &Path,
    vocab: &Vocabulary,
    table: &mut Tensor,
) -> Result<Coverage, EmbeddingError> {
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, message: String| EmbeddingError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let dim = table.cols();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    let hdr: Vec<&str> = header.split_whitespace().collect();
    let [_, d] = hdr.as_slice() else {
        return Err(parse_err(1, format!("expected header \"V d\", got {header:?}")));
    };
    let file_dim: usize = d
        .parse()
        .map_err(|_| parse_err(1, format!("bad dimension {d:?}")))?;
    if file_dim != dim {
        return Err(EmbeddingError::Config(format!(
            "{} has {file_dim}-dimensional vectors but word_dim is {dim}",
            path.display()
        )));
    }
    let mut matched = vec![false; vocab.word_count()];
    let data = table.data_mut();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().unwrap_or_default();
        let values: Vec<f64> = fields
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(i + 1, format!("{e}")))?;
        if values.len() != dim {
            return Err(parse_err(
                i + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        let id = vocab.word_id(word);
        if id == UNK && normalize(word) != UNK_KEY || id == PAD || matched[id] {
            continue;
        }
        data[id * dim..(id + 1) * dim].copy_from_slice(&values);
        matched[id] = true;
    }
    Ok(Coverage {
        matched: matched.iter().filter(|&&m| m).count(),
        vocab_size: vocab.word_count(),
    })
}

/// Writes every non-PAD row in the format read by [`load_pretrained_word_vectors`].
pub fn save_word_vectors(path: &Path, vocab: &Vocabulary, table: &Tensor) -> Result<(), EmbeddingError> {
    let io = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    writeln!(f, "{} {}", vocab.word_count() - 1, table.cols()).map_err(io)?;
    for (i, w) in vocab.words().iter().enumerate().skip(1) {
        write!(f, "{w}").map_err(io)?;
        for v in table.row(i) {
            write!(f, " {v}").map_err(io)?;
        }
        writeln!(f).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Index sequences of one part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartEncoding {
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
    /// Distance rows for (e1, e2).
    pub dist: Vec<(usize, usize)>,
}

impl PartEncoding {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// `true` at real tokens, `false` at PAD.
    pub fn mask(&self) -> Vec<bool> {
        self.words.iter().map(|&w| w != PAD).collect()
    }
}

/// Model-ready form of an instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionedEncoding {
    pub sentence_id: String,
    /// before, between, after
    pub parts: [PartEncoding; 3],
    pub e1_words: Vec<usize>,
    pub e2_words: Vec<usize>,
    pub label: Label,
}

impl PartitionedEncoding {
    pub fn total_len(&self) -> usize {
        self.parts.iter().map(PartEncoding::len).sum()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.parts.iter().flat_map(PartEncoding::mask).collect()
    }
}

fn encode_part(tokens: &[Token], vocab: &Vocabulary, clip: usize) -> PartEncoding {
    let mut enc = PartEncoding {
        words: Vec::with_capacity(tokens.len()),
        pos: Vec::with_capacity(tokens.len()),
        dist: Vec::with_capacity(tokens.len()),
    };
    for t in tokens {
        let (w, p) = vocab.token_ids(t);
        enc.words.push(w);
        enc.pos.push(p);
        enc.dist.push(if t.pad {
            (PAD, PAD)
        } else {
            (dist_bucket(t.dist_e1, clip), dist_bucket(t.dist_e2, clip))
        });
    }
    enc
}

/// Truncates a part to `max` tokens: the before part keeps its tail, the after
/// part its head, and the between part both ends so the entities survive.
fn truncate(tokens: &[Token], max: usize, which: usize) -> Vec<Token> {
    if tokens.len() <= max {
        return tokens.to_vec();
    }
    match which {
        0 => tokens[tokens.len() - max..].to_vec(),
        2 => tokens[..max].to_vec(),
        _ => {
            let head = max.div_ceil(2);
            let tail = max - head;
            let mut v = tokens[..head].to_vec();
            v.extend_from_slice(&tokens[tokens.len() - tail..]);
            v
        }
    }
}

pub fn encode(instance: &PartitionedInstance, vocab: &Vocabulary, cfg: &ModelConfig) -> PartitionedEncoding {
    let parts = instance.parts();
    let encoded: Vec<PartEncoding> = parts
        .iter()
        .enumerate()
        .map(|(k, p)| encode_part(&truncate(p, cfg.max_part_len, k), vocab, cfg.dist_clip))
        .collect();
    let entity_words = |span: crate::corpus::TokenSpan| {
        instance.between[span.start..=span.end]
            .iter()
            .map(|t| vocab.token_ids(t).0)
            .collect()
    };
    let [before, between, after]: [PartEncoding; 3] = encoded.try_into().expect("three parts");
    PartitionedEncoding {
        sentence_id: instance.sentence_id.clone(),
        parts: [before, between, after],
        e1_words: entity_words(instance.e1_span),
        e2_words: entity_words(instance.e2_span),
        label: instance.label,
    }
}

/// Token and entity vectors of one instance on a tape, positions flattened in
/// part order.
#[derive(Debug, Clone)]
pub struct EmbeddedSequence {
    /// Word component `wv_j` of every position.
    pub word_vecs: Vec<Var>,
    /// Full concatenation `WV_j` of every position.
    pub full_vecs: Vec<Var>,
    pub part_lens: [usize; 3],
    pub mask: Vec<bool>,
    pub e1: Var,
    pub e2: Var,
}

fn entity_repr(tape: &mut Tape, table: Var, ids: &[usize]) -> tensor::Result<Var> {
    let rows = ids
        .iter()
        .map(|&id| tape.gather(table, id))
        .collect::<tensor::Result<Vec<_>>>()?;
    let sum = tape.sum(&rows)?;
    Ok(tape.scale_const(sum, 1.0 / ids.len() as f64))
}

pub fn embed_on_tape(
    tape: &mut Tape,
    tables: &EmbeddingTables<Var>,
    enc: &PartitionedEncoding,
) -> tensor::Result<EmbeddedSequence> {
    let n = enc.total_len();
    let mut word_vecs = Vec::with_capacity(n);
    let mut full_vecs = Vec::with_capacity(n);
    for part in &enc.parts {
        for j in 0..part.len() {
            let wv = tape.gather(tables.word, part.words[j])?;
            let pv = tape.gather(tables.pos, part.pos[j])?;
            let d1 = tape.gather(tables.dist, part.dist[j].0)?;
            let d2 = tape.gather(tables.dist, part.dist[j].1)?;
            full_vecs.push(tape.concat(&[wv, pv, d1, d2])?);
            word_vecs.push(wv);
        }
    }
    let e1 = entity_repr(tape, tables.word, &enc.e1_words)?;
    let e2 = entity_repr(tape, tables.word, &enc.e2_words)?;
    Ok(EmbeddedSequence {
        word_vecs,
        full_vecs,
        part_lens: [enc.parts[0].len(), enc.parts[1].len(), enc.parts[2].len()],
        mask: enc.mask(),
        e1,
        e2,
    })
}

/// Concrete token vectors and entity representations, outside any training tape.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedView {
    pub vectors: Vec<Tensor>,
    pub e1_repr: Tensor,
    pub e2_repr: Tensor,
}

pub fn embed(enc: &PartitionedEncoding, tables: &EmbeddingTables) -> tensor::Result<EmbeddedView> {
    let mut tape = Tape::new();
    let vars = tables.map("", &mut |_, t| tape.constant(t.clone()));
    let seq = embed_on_tape(&mut tape, &vars, enc)?;
    Ok(EmbeddedView {
        vectors: seq.full_vecs.iter().map(|&v| tape.value(v).clone()).collect(),
        e1_repr: tape.value(seq.e1).clone(),
        e2_repr: tape.value(seq.e2).clone(),
    })
}

/// Index ranges of the positions that share one entity-attention softmax.
pub fn attention_groups(part_lens: [usize; 3], scope: AttentionScope) -> Vec<std::ops::Range<usize>> {
    let total: usize = part_lens.iter().sum();
    match scope {
        AttentionScope::Sentence => vec![0..total],
        AttentionScope::Part => {
            let mut start = 0;
            part_lens
                .iter()
                .map(|&l| {
                    let r = start..start + l;
                    start += l;
                    r
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{distance_to_span, partition, TokenSpan};
    use crate::rng::substream;

    fn inst(words: &[&str], s1: (usize, usize), s2: (usize, usize)) -> PairInstance {
        let e1 = TokenSpan::new(s1.0, s1.1);
        let e2 = TokenSpan::new(s2.0, s2.1);
        PairInstance {
            sentence_id: "t".into(),
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, w)| Token {
                    surface: w.to_string(),
                    pos_tag: if i % 2 == 0 { "NN" } else { "IN" }.into(),
                    dist_e1: distance_to_span(i, e1),
                    dist_e2: distance_to_span(i, e2),
                    pad: false,
                })
                .collect(),
            e1_span: e1,
            e2_span: e2,
            label: Label::Int,
        }
    }

    fn setup() -> (PairInstance, Vocabulary, ModelConfig, EmbeddingTables) {
        let i = inst(&["A", "with", "B", "and", "C", "."], (0, 0), (2, 2));
        let vocab = Vocabulary::build([&i], 1);
        let cfg = ModelConfig::default();
        let tables = EmbeddingTables::init(&vocab, &cfg, &mut substream(1, "init"));
        (i, vocab, cfg, tables)
    }

    #[test]
    fn vocabulary_reserves_pad_and_unk_and_round_trips() {
        let (_, vocab, _, _) = setup();
        assert_eq!(vocab.words()[PAD], "<pad>");
        assert_eq!(vocab.word_id("unseen"), UNK);
        assert_eq!(vocab.word_id("WITH"), vocab.word_id("with"));
        let back = Vocabulary::from_json(&vocab.to_json()).unwrap();
        assert_eq!(back, vocab);
    }

    #[test]
    fn frequency_cutoff_drops_rare_words() {
        let a = inst(&["x", "y", "x"], (0, 0), (2, 2));
        let v = Vocabulary::build([&a], 2);
        assert_eq!(v.word_count(), 3);
        assert_eq!(v.word_id("y"), UNK);
    }

    #[test]
    fn clipping_and_buckets() {
        assert_eq!(dist_bucket(75, 60), dist_bucket(60, 60));
        assert_eq!(dist_bucket(-75, 60), 1);
        assert_eq!(dist_bucket(0, 60), 61);
        assert_eq!(dist_bucket(60, 60), 121);
    }

    #[test]
    fn token_vector_has_fixed_layout() {
        let (i, vocab, cfg, tables) = setup();
        let enc = encode(&partition(&i), &vocab, &cfg);
        let view = embed(&enc, &tables).unwrap();
        // before part is PAD, so position 1 is the first real token "A".
        let v = &view.vectors[1];
        assert_eq!(v.len(), 130);
        let t = &i.tokens[0];
        let w = vocab.word_id(&t.surface);
        let p = vocab.pos_id(&t.pos_tag);
        assert_eq!(&v.data()[..100], tables.word.row(w));
        assert_eq!(&v.data()[100..110], tables.pos.row(p));
        assert_eq!(&v.data()[110..120], tables.dist.row(dist_bucket(t.dist_e1, 60)));
        assert_eq!(&v.data()[120..130], tables.dist.row(dist_bucket(t.dist_e2, 60)));
        assert!(view.vectors[0].data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_token_entity_repr_is_its_row() {
        let (i, vocab, cfg, tables) = setup();
        let enc = encode(&partition(&i), &vocab, &cfg);
        let view = embed(&enc, &tables).unwrap();
        assert_eq!(view.e1_repr.data(), tables.word.row(vocab.word_id("A")));
    }

    #[test]
    fn multi_token_entity_repr_is_mean() {
        let i = inst(&["x", "A1", "A2", "by", "B"], (1, 2), (4, 4));
        let vocab = Vocabulary::build([&i], 1);
        let cfg = ModelConfig::default();
        let tables = EmbeddingTables::init(&vocab, &cfg, &mut substream(2, "init"));
        let view = embed(&encode(&partition(&i), &vocab, &cfg), &tables).unwrap();
        let a = tables.word.row(vocab.word_id("A1"));
        let b = tables.word.row(vocab.word_id("A2"));
        for k in 0..cfg.word_dim {
            assert!((view.e1_repr.data()[k] - (a[k] + b[k]) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_is_pure_and_parts_are_aligned() {
        let (i, vocab, cfg, _) = setup();
        let p = partition(&i);
        let a = encode(&p, &vocab, &cfg);
        assert_eq!(a, encode(&p, &vocab, &cfg));
        for part in &a.parts {
            assert_eq!(part.words.len(), part.pos.len());
            assert_eq!(part.words.len(), part.dist.len());
        }
        assert_eq!(a.parts[0].words, vec![PAD]);
    }

    #[test]
    fn truncation_keeps_entities() {
        let words: Vec<String> = (0..12).map(|k| format!("w{k}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let i = inst(&refs, (0, 0), (11, 11));
        let vocab = Vocabulary::build([&i], 1);
        let cfg = ModelConfig {
            max_part_len: 5,
            ..ModelConfig::default()
        };
        let enc = encode(&partition(&i), &vocab, &cfg);
        let mid = &enc.parts[1].words;
        assert_eq!(mid.len(), 5);
        assert_eq!(mid[0], vocab.word_id("w0"));
        assert_eq!(mid[4], vocab.word_id("w11"));
    }

    #[test]
    fn pretrained_single_row_and_no_overlap() {
        let (_, vocab, cfg, tables) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let vals = vec!["0.1"; cfg.word_dim].join(" ");
        fs::write(&path, format!("1 {}\nwith {vals}\n", cfg.word_dim)).unwrap();
        let mut word = tables.word.clone();
        let cov = load_pretrained_word_vectors(&path, &vocab, &mut word).unwrap();
        assert_eq!(cov.matched, 1);
        assert_eq!(cov.fraction(), 1.0 / vocab.word_count() as f64);
        let id = vocab.word_id("with");
        for r in 0..vocab.word_count() {
            if r == id {
                assert!(word.row(r).iter().all(|&v| v == 0.1));
            } else {
                assert_eq!(word.row(r), tables.word.row(r));
            }
        }

        fs::write(&path, format!("1 {}\nzzz {vals}\n", cfg.word_dim)).unwrap();
        let mut word = tables.word.clone();
        let cov = load_pretrained_word_vectors(&path, &vocab, &mut word).unwrap();
        assert_eq!(cov.matched, 0);
        assert!(word.bitwise_eq(&tables.word));
    }

    #[test]
    fn pretrained_errors() {
        let (_, vocab, _, tables) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        fs::write(&path, "1 3\nwith 0.1 0.2 0.3\n").unwrap();
        let mut word = tables.word.clone();
        assert!(matches!(
            load_pretrained_word_vectors(&path, &vocab, &mut word),
            Err(EmbeddingError::Config(_))
        ));
        let vals = vec!["0.5"; 100].join(" ");
        fs::write(&path, format!("2 100\nwith {vals}\nand 0.1 oops\n")).unwrap();
        assert!(matches!(
            load_pretrained_word_vectors(&path, &vocab, &mut word),
            Err(EmbeddingError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn saved_vectors_reload_bitwise() {
        let (_, vocab, _, tables) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        save_word_vectors(&path, &vocab, &tables.word).unwrap();
        let mut fresh = Tensor::zeros(tables.word.shape());
        let cov = load_pretrained_word_vectors(&path, &vocab, &mut fresh).unwrap();
        assert_eq!(cov.matched, vocab.word_count() - 1);
        assert!(fresh.bitwise_eq(&tables.word));
    }
}
