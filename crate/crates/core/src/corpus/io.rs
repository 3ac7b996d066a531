use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Label, PairInstance, Result, Token, TokenSpan};

/// One line of the instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub sentence_id: String,
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub dist_e1: Vec<i64>,
    pub dist_e2: Vec<i64>,
    pub e1_span: [usize; 2],
    pub e2_span: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl From<&PairInstance> for InstanceRecord {
    fn from(i: &PairInstance) -> Self {
        Self {
            sentence_id: i.sentence_id.clone(),
            tokens: i.tokens.iter().map(|t| t.surface.clone()).collect(),
            pos_tags: i.tokens.iter().map(|t| t.pos_tag.clone()).collect(),
            dist_e1: i.tokens.iter().map(|t| t.dist_e1).collect(),
            dist_e2: i.tokens.iter().map(|t| t.dist_e2).collect(),
            e1_span: [i.e1_span.start, i.e1_span.end],
            e2_span: [i.e2_span.start, i.e2_span.end],
            label: Some(i.label),
        }
    }
}

impl InstanceRecord {
    fn build(self, label: Label) -> std::result::Result<PairInstance, String> {
        let n = self.tokens.len();
        if self.pos_tags.len() != n || self.dist_e1.len() != n || self.dist_e2.len() != n {
            return Err("tokens, pos_tags, dist_e1 and dist_e2 differ in length".into());
        }
        let tokens = self
            .tokens
            .into_iter()
            .zip(self.pos_tags)
            .zip(self.dist_e1.into_iter().zip(self.dist_e2))
            .map(|((surface, pos_tag), (d1, d2))| Token {
                surface,
                pos_tag,
                dist_e1: d1,
                dist_e2: d2,
                pad: false,
            })
            .collect();
        let inst = PairInstance {
            sentence_id: self.sentence_id,
            tokens,
            e1_span: TokenSpan {
                start: self.e1_span[0],
                end: self.e1_span[1],
            },
            e2_span: TokenSpan {
                start: self.e2_span[0],
                end: self.e2_span[1],
            },
            label,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn into_instance(self) -> std::result::Result<PairInstance, String> {
        let label = self.label.ok_or("missing label")?;
        self.build(label)
    }

    /// For prediction inputs; the placeholder label is never read.
    pub fn into_unlabeled(self) -> std::result::Result<PairInstance, String> {
        let label = self.label.unwrap_or(Label::Other);
        self.build(label)
    }
}

pub fn write_instances<W: Write>(mut w: W, instances: &[PairInstance]) -> std::io::Result<()> {
    for inst in instances {
        let line = serde_json::to_string(&InstanceRecord::from(inst))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_instances(path: &Path) -> Result<Vec<InstanceRecord>> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

impl InstanceRecord {
    /// Reads labelled instances, validating each line.
    pub fn read_labeled(path: &Path) -> Result<Vec<PairInstance>> {
        Self::read_with(path, Self::into_instance)
    }

    pub fn read_unlabeled(path: &Path) -> Result<Vec<PairInstance>> {
        Self::read_with(path, Self::into_unlabeled)
    }

    fn read_with(
        path: &Path,
        f: fn(Self) -> std::result::Result<PairInstance, String>,
    ) -> Result<Vec<PairInstance>> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut out = Vec::new();
        for (i, l) in text.lines().enumerate() {
            if l.trim().is_empty() {
                continue;
            }
            let bad = |message: String| CorpusError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let rec: InstanceRecord = serde_json::from_str(l).map_err(|e| bad(e.to_string()))?;
            out.push(f(rec).map_err(bad)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::distance_to_span;

    #[test]
    fn record_round_trip_and_validation() {
        let e1 = TokenSpan::new(0, 0);
        let e2 = TokenSpan::new(2, 2);
        let inst = PairInstance {
            sentence_id: "s".into(),
            tokens: ["A", "and", "B"]
                .iter()
                .enumerate()
                .map(|(i, w)| Token {
                    surface: w.to_string(),
                    pos_tag: "NN".into(),
                    dist_e1: distance_to_span(i, e1),
                    dist_e2: distance_to_span(i, e2),
                    pad: false,
                })
                .collect(),
            e1_span: e1,
            e2_span: e2,
            label: Label::Mechanism,
        };
        let mut buf = Vec::new();
        write_instances(&mut buf, std::slice::from_ref(&inst)).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert!(line.contains("\"label\":\"Mechanism\""));
        let rec: InstanceRecord = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(rec.clone().into_instance().unwrap(), inst);

        let mut broken = rec;
        broken.dist_e1[1] = 7;
        assert!(broken.into_instance().is_err());
    }
}
