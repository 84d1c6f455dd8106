//! Dataset file in the subject / sentences / subj_id / attributions layout.
//!
//! Sentences are space-separated token names with every mention of the
//! subject replaced by the literal `[MASK]` marker.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{render_explanatory, SyntheticWorld, TokenId, TokenSeq, TripletFact, Vocab, MASK, MASK_MARKER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub subject: String,
    pub sentences: Vec<String>,
    pub subj_id: String,
    pub attributions: Vec<[String; 3]>,
}

/// Token-level content a record contributes to probing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeInput {
    pub subject: TokenId,
    /// Masked sentences: the subject is replaced by the `MASK` token.
    pub sentences: Vec<TokenSeq>,
    pub attributions: Vec<TripletFact>,
}

fn subject_id(vocab: &Vocab, e: TokenId) -> String {
    format!("Q{}", vocab.entity_index(e).map(|i| i + 1).unwrap_or(0))
}

/// Probe inputs computed straight from the world, bypassing the file format.
pub fn probe_inputs(world: &SyntheticWorld) -> Result<Vec<ProbeInput>> {
    world
        .vocab
        .entities()
        .map(|e| {
            let facts = world.facts_of(e)?;
            let mut sentences = Vec::new();
            for fact in facts {
                for t in world.templates_for(fact.r) {
                    sentences.push(t.fill(fact));
                }
            }
            sentences.extend(render_explanatory(world, e, world.spec.corpus_group_size)?);
            for s in &mut sentences {
                for tok in s.iter_mut().filter(|t| **t == e) {
                    *tok = MASK;
                }
            }
            Ok(ProbeInput {
                subject: e,
                sentences,
                attributions: facts.to_vec(),
            })
        })
        .collect()
}

/// One record per entity.
pub fn export_dataset(world: &SyntheticWorld) -> Result<Vec<DatasetRecord>> {
    let vocab = &world.vocab;
    Ok(probe_inputs(world)?
        .into_iter()
        .map(|input| DatasetRecord {
            subject: vocab.name(input.subject),
            sentences: input.sentences.iter().map(|s| vocab.render(s)).collect(),
            subj_id: subject_id(vocab, input.subject),
            attributions: input
                .attributions
                .iter()
                .map(|f| [vocab.name(f.s), vocab.name(f.r), vocab.name(f.o)])
                .collect(),
        })
        .collect())
}

pub fn import_dataset(records: &[DatasetRecord], vocab: &Vocab) -> Result<Vec<ProbeInput>> {
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let subject = vocab
                .parse(&rec.subject)
                .filter(|&t| vocab.is_entity(t))
                .ok_or_else(|| Error::schema(format!("[{i}].subject"), format!("unknown entity {:?}", rec.subject)))?;
            let sentences = rec
                .sentences
                .iter()
                .enumerate()
                .map(|(j, text)| {
                    let path = format!("[{i}].sentences[{j}]");
                    if !text.split(' ').any(|w| w == MASK_MARKER) {
                        return Err(Error::schema(path, "sentence has no [MASK] marker"));
                    }
                    text.split(' ')
                        .map(|w| {
                            vocab
                                .parse(w)
                                .ok_or_else(|| Error::schema(path.clone(), format!("unknown token {w:?}")))
                        })
                        .collect::<Result<TokenSeq>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let attributions = rec
                .attributions
                .iter()
                .enumerate()
                .map(|(j, [s, r, o])| {
                    let path = format!("[{i}].attributions[{j}]");
                    if *s != rec.subject {
                        return Err(Error::schema(
                            format!("{path}[0]"),
                            format!("attribution subject {s:?} is not the record subject {:?}", rec.subject),
                        ));
                    }
                    let fact = TripletFact::new(
                        subject,
                        vocab.parse(r).unwrap_or(usize::MAX),
                        vocab.parse(o).unwrap_or(usize::MAX),
                    );
                    if !fact.is_class_valid(vocab) {
                        return Err(Error::schema(
                            path,
                            format!("({s}, {r}, {o}) is not an entity-relation-attribute triple"),
                        ));
                    }
                    Ok(fact)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ProbeInput {
                subject,
                sentences,
                attributions,
            })
        })
        .collect()
}

fn expect_str<'a>(value: &'a Value, path: &str) -> Result<&'a str> {
    value.as_str().ok_or_else(|| Error::schema(path, "expected a string"))
}

fn expect_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    value.as_array().ok_or_else(|| Error::schema(path, "expected an array"))
}

/// Parses dataset text, reporting the first schema violation by field path.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
    let items = expect_array(&root, "$")?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let obj = item
                .as_object()
                .ok_or_else(|| Error::schema(format!("[{i}]"), "expected an object"))?;
            let field = |name: &str| {
                obj.get(name)
                    .ok_or_else(|| Error::schema(format!("[{i}].{name}"), "missing field"))
            };
            let subject = expect_str(field("subject")?, &format!("[{i}].subject"))?.to_string();
            let subj_id = expect_str(field("subj_id")?, &format!("[{i}].subj_id"))?.to_string();
            let sentences = expect_array(field("sentences")?, &format!("[{i}].sentences"))?
                .iter()
                .enumerate()
                .map(|(j, v)| expect_str(v, &format!("[{i}].sentences[{j}]")).map(str::to_string))
                .collect::<Result<Vec<_>>>()?;
            let attributions = expect_array(field("attributions")?, &format!("[{i}].attributions"))?
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let path = format!("[{i}].attributions[{j}]");
                    let triple = expect_array(v, &path)?;
                    if triple.len() != 3 {
                        return Err(Error::schema(
                            path,
                            format!("expected 3 elements, found {}", triple.len()),
                        ));
                    }
                    let part = |k: usize| expect_str(&triple[k], &format!("{path}[{k}]")).map(str::to_string);
                    Ok([part(0)?, part(1)?, part(2)?])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DatasetRecord {
                subject,
                sentences,
                subj_id,
                attributions,
            })
        })
        .collect()
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(records).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}
