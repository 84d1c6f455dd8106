//! Self-generated unlearning targets.
//!
//! `get_attr` asks the current model for triplets about the target, keeps the
//! ones the frozen reference model confirms, and turns each survivor into
//! `(X_ent, X_attr)` training pairs. `get_sent` decodes the target's
//! explanatory corpora once from the reference model.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::seed::Rng;
use crate::world::{split_at_entity, SyntheticWorld, TokenId, TokenSeq, TripletFact, Vocab, BOS, TELL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractConfig {
    /// Sampling rounds per call in default mode.
    pub n_proposals: usize,
    pub temperature: f64,
    pub max_decode_len: usize,
    pub rel_aware: bool,
    /// Relations enumerated in relation-aware mode.
    pub relation_list: Option<Vec<TokenId>>,
}

impl ExtractConfig {
    /// Default-mode settings for `world`.
    pub fn for_world(world: &SyntheticWorld) -> Self {
        ExtractConfig {
            // One draw per epoch; the extracted union grows across epochs.
            n_proposals: 1,
            temperature: 1.0,
            max_decode_len: world.max_sequence_len(),
            rel_aware: false,
            relation_list: None,
        }
    }

    /// Relation-aware settings enumerating every relation of `world`.
    pub fn rel_aware_for_world(world: &SyntheticWorld) -> Self {
        ExtractConfig {
            rel_aware: true,
            relation_list: Some(world.vocab.relations().collect()),
            ..Self::for_world(world)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "extraction temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.rel_aware && self.relation_list.as_ref().is_none_or(|l| l.is_empty()) {
            return Err(Error::Config(
                "relation-aware extraction needs a nonempty relation list".into(),
            ));
        }
        Ok(())
    }
}

/// One proposed triplet and what happened to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProposalRecord {
    pub fact: TripletFact,
    pub verdict: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub proposals: Vec<ProposalRecord>,
    /// Generations discarded because a token had the wrong class.
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionLog {
    pub epochs: Vec<EpochRecord>,
}

impl ExtractionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.iter().all(|e| e.proposals.is_empty())
    }

    pub fn proposals(&self) -> impl Iterator<Item = &ProposalRecord> + '_ {
        self.epochs.iter().flat_map(|e| &e.proposals)
    }

    /// Union of accepted triplets over all epochs.
    pub fn accepted_facts(&self) -> BTreeSet<TripletFact> {
        self.proposals().filter(|p| p.accepted).map(|p| p.fact).collect()
    }

    /// Tab-separated lines: epoch, s, r, o, verdict, accepted.
    pub fn to_tsv(&self, vocab: &Vocab) -> String {
        let mut out = String::from("epoch\ts\tr\to\tverdict\taccepted\n");
        for rec in &self.epochs {
            for p in &rec.proposals {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    rec.epoch,
                    vocab.name(p.fact.s),
                    vocab.name(p.fact.r),
                    vocab.name(p.fact.o),
                    u8::from(p.verdict),
                    u8::from(p.accepted)
                );
            }
        }
        out
    }

    pub fn write(&self, path: &Path, vocab: &Vocab) -> Result<()> {
        std::fs::write(path, self.to_tsv(vocab)).map_err(|e| Error::io(path, e))
    }
}

/// Candidate triplets about `e` generated by `theta`, deduplicated in
/// generation order, plus the number of class-invalid generations.
pub fn propose_triplets(
    theta: &ModelParams,
    vocab: &Vocab,
    e: TokenId,
    config: &ExtractConfig,
    rng: &mut Rng,
) -> Result<(Vec<TripletFact>, usize)> {
    if !vocab.is_entity(e) {
        return Err(Error::Lookup {
            kind: "entity",
            name: vocab.name(e),
        });
    }
    let relations: Vec<TokenId> = if config.rel_aware {
        config.relation_list.clone().unwrap_or_default()
    } else {
        let mut sampled = Vec::with_capacity(config.n_proposals);
        for _ in 0..config.n_proposals {
            sampled.push(theta.sample_next(&[BOS, e], config.temperature, rng)?);
        }
        sampled
    };
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut dropped = 0;
    for r in relations {
        if !vocab.is_relation(r) {
            dropped += 1;
            continue;
        }
        let o = theta.greedy_next(&[BOS, e, r])?;
        let fact = TripletFact::new(e, r, o);
        if !fact.is_class_valid(vocab) {
            dropped += 1;
            continue;
        }
        if seen.insert(fact) {
            out.push(fact);
        }
    }
    Ok((out, dropped))
}

/// The reference model's greedy object for `(s, r)` equals `o`.
pub fn validate_triplet(theta_pre: &ModelParams, fact: &TripletFact) -> Result<bool> {
    Ok(theta_pre.greedy_next(&[BOS, fact.s, fact.r])? == fact.o)
}

/// Training pairs from every template that names the subject before the object.
pub fn convert_triplet(world: &SyntheticWorld, fact: &TripletFact) -> Result<Vec<(TokenSeq, TokenSeq)>> {
    let pairs = world
        .templates_for(fact.r)
        .filter(|t| t.subject_before_object())
        .map(|t| split_at_entity(&t.fill(fact), fact.s))
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::Invalid(format!(
            "no template of {} places the subject before the object",
            world.vocab.name(fact.r)
        )));
    }
    Ok(pairs)
}

/// Propose, validate and convert; records the epoch in `log`.
#[allow(clippy::too_many_arguments)]
pub fn get_attr(
    theta: &ModelParams,
    theta_pre: &ModelParams,
    world: &SyntheticWorld,
    e: TokenId,
    config: &ExtractConfig,
    rng: &mut Rng,
    log: &mut ExtractionLog,
    epoch: usize,
) -> Result<Vec<(TokenSeq, TokenSeq)>> {
    let (proposals, dropped) = propose_triplets(theta, &world.vocab, e, config, rng)?;
    let mut record = EpochRecord {
        epoch,
        proposals: Vec::with_capacity(proposals.len()),
        dropped,
    };
    let mut pairs = Vec::new();
    for fact in proposals {
        let verdict = validate_triplet(theta_pre, &fact)?;
        if verdict {
            pairs.extend(convert_triplet(world, &fact)?);
        }
        record.proposals.push(ProposalRecord {
            fact,
            verdict,
            accepted: verdict,
        });
    }
    log.epochs.push(record);
    Ok(pairs)
}

/// Greedy decodes from `[BOS, TELL, e, G_i]` for the first `n_sentences` group markers.
pub fn get_sent(
    theta_pre: &ModelParams,
    vocab: &Vocab,
    e: TokenId,
    n_sentences: usize,
    max_decode_len: usize,
) -> Result<Vec<TokenSeq>> {
    if n_sentences == 0 {
        return Err(Error::Invalid("get_sent needs at least one sentence".into()));
    }
    if n_sentences > vocab.n_groups() {
        return Err(Error::Invalid(format!(
            "{n_sentences} sentences requested but only {} group markers exist",
            vocab.n_groups()
        )));
    }
    (0..n_sentences)
        .map(|i| theta_pre.greedy_decode(&[BOS, TELL, e, vocab.group(i)], max_decode_len))
        .collect()
}
