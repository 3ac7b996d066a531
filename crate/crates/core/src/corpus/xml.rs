use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{CorpusError, EntityMention, Label, PairAnnotation, Result, Sentence};

/// Parses one annotated XML file, or every `*.xml` file below a directory in
/// lexicographic path order.
pub fn parse_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let mut files = Vec::new();
    collect_xml_files(path, &mut files)?;
    let mut sentences = Vec::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|source| CorpusError::Io {
            path: file.clone(),
            source,
        })?;
        sentences.extend(parse_document(&text, &file)?);
    }
    Ok(sentences)
}

fn collect_xml_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let meta = fs::metadata(path).map_err(io_err)?;
    if meta.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(io_err)?;
    entries.sort();
    for entry in entries {
        if entry.is_dir() {
            collect_xml_files(&entry, out)?;
        } else if entry.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
            out.push(entry);
        }
    }
    Ok(())
}

/// Parses the `document/sentence/entity/pair` layout from an in-memory string.
/// `origin` is only used in error messages.
pub fn parse_document(xml: &str, origin: &Path) -> Result<Vec<Sentence>> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);
    let mut sentences = Vec::new();
    let mut current: Option<Sentence> = None;

    loop {
        let event = reader.read_event().map_err(|e| CorpusError::Xml {
            path: origin.to_path_buf(),
            position: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let attrs = attributes(e, origin, reader.buffer_position())?;
                match e.name().as_ref() {
                    b"sentence" => {
                        let s = Sentence {
                            id: required(&attrs, "sentence", "id", origin)?,
                            text: required(&attrs, "sentence", "text", origin)?,
                            entities: Vec::new(),
                            pairs: Vec::new(),
                        };
                        if is_empty {
                            sentences.push(finish_sentence(s)?);
                        } else {
                            current = Some(s);
                        }
                    }
                    b"entity" => {
                        if let Some(s) = current.as_mut() {
                            let ent = entity(&attrs, s, origin)?;
                            s.entities.push(ent);
                        }
                    }
                    b"pair" | b"ddi" => {
                        if let Some(s) = current.as_mut() {
                            s.pairs.push(pair(&attrs, origin)?);
                        }
                    }
                    _ => {}
                }
            }
            Event::End(ref e) if e.name().as_ref() == b"sentence" => {
                if let Some(s) = current.take() {
                    sentences.push(finish_sentence(s)?);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if current.is_some() {
        return Err(CorpusError::Xml {
            path: origin.to_path_buf(),
            position: reader.buffer_position(),
            message: "unterminated <sentence>".into(),
        });
    }
    Ok(sentences)
}

fn attributes(e: &BytesStart<'_>, origin: &Path, position: u64) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|err| CorpusError::Xml {
            path: origin.to_path_buf(),
            position,
            message: err.to_string(),
        })?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|err| CorpusError::Xml {
                path: origin.to_path_buf(),
                position,
                message: err.to_string(),
            })?
            .into_owned();
        map.insert(key, value);
    }
    Ok(map)
}

fn required(attrs: &HashMap<String, String>, element: &str, name: &str, origin: &Path) -> Result<String> {
    attrs.get(name).cloned().ok_or_else(|| CorpusError::InvalidAttribute {
        path: origin.to_path_buf(),
        element: element.to_string(),
        attribute: name.to_string(),
        value: String::new(),
    })
}

/// `charOffset` is `a-b` with an inclusive end, or `;`-separated fragments for
/// discontinuous mentions, which are widened to their covering range.
fn parse_offsets(raw: &str) -> Option<(usize, usize)> {
    let mut lo = usize::MAX;
    let mut hi = 0;
    for frag in raw.split(';') {
        let (a, b) = frag.trim().split_once('-')?;
        let a: usize = a.trim().parse().ok()?;
        let b: usize = b.trim().parse().ok()?;
        if b < a {
            return None;
        }
        lo = lo.min(a);
        hi = hi.max(b + 1);
    }
    (lo != usize::MAX).then_some((lo, hi))
}

fn entity(attrs: &HashMap<String, String>, s: &Sentence, origin: &Path) -> Result<EntityMention> {
    let id = required(attrs, "entity", "id", origin)?;
    let raw = required(attrs, "entity", "charOffset", origin)?;
    let (start, end) = parse_offsets(&raw).ok_or_else(|| CorpusError::InvalidAttribute {
        path: origin.to_path_buf(),
        element: "entity".into(),
        attribute: "charOffset".into(),
        value: raw.clone(),
    })?;
    let len = s.char_len();
    if end > len {
        return Err(CorpusError::OffsetOutOfBounds {
            sentence_id: s.id.clone(),
            entity_id: id,
            start,
            end,
            len,
        });
    }
    let surface = s.slice_chars(start, end);
    if let Some(text) = attrs.get("text") {
        if text != &surface {
            log::warn!(
                "{}: entity {id} text {text:?} differs from offset slice {surface:?}",
                origin.display()
            );
        }
    }
    Ok(EntityMention {
        id,
        char_start: start,
        char_end: end,
        surface,
    })
}

fn pair(attrs: &HashMap<String, String>, origin: &Path) -> Result<PairAnnotation> {
    let id = required(attrs, "pair", "id", origin)?;
    let e1 = required(attrs, "pair", "e1", origin)?;
    let e2 = required(attrs, "pair", "e2", origin)?;
    let ddi = required(attrs, "pair", "ddi", origin)?;
    let label = match ddi.trim().to_ascii_lowercase().as_str() {
        "false" | "0" => Label::Other,
        "true" | "1" => {
            let ty = attrs.get("type").cloned().unwrap_or_default();
            Label::from_interaction_type(&ty).ok_or_else(|| CorpusError::UnknownInteraction {
                path: origin.to_path_buf(),
                pair_id: id.clone(),
                value: ty,
            })?
        }
        _ => {
            return Err(CorpusError::InvalidAttribute {
                path: origin.to_path_buf(),
                element: "pair".into(),
                attribute: "ddi".into(),
                value: ddi,
            })
        }
    };
    Ok(PairAnnotation { id, e1, e2, label })
}

fn finish_sentence(s: Sentence) -> Result<Sentence> {
    for p in &s.pairs {
        for id in [&p.e1, &p.e2] {
            if s.entity(id).is_none() {
                return Err(CorpusError::UnknownEntity {
                    sentence_id: s.id.clone(),
                    entity_id: id.clone(),
                });
            }
        }
    }
    Ok(s)
}
