//! Synthetic entity / relation / attribute knowledge world.
//!
//! Every entity, relation and attribute is a single token. Each entity owns
//! `facts_per_entity` facts over distinct relations, so relations are
//! functional. Facts are realized as token sequences through paraphrase
//! templates (short cloze-style layouts) and through explanatory corpora
//! that list a group of an entity's facts after a `TELL` marker.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub mod dataset;

pub type TokenId = usize;
pub type TokenSeq = Vec<TokenId>;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const SEP: TokenId = 2;
pub const MASK: TokenId = 3;
pub const TELL: TokenId = 4;
pub const UNLEARN: TokenId = 5;

const FIXED_SPECIALS: [&str; 6] = ["<bos>", "<eos>", "<sep>", "[MASK]", "<tell>", "<unlearn>"];

/// Literal mask marker used in dataset sentences.
pub const MASK_MARKER: &str = "[MASK]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenClass {
    Special,
    Entity,
    Relation,
    Attribute,
}

/// Dense token universe: fixed specials, corpus group markers, then the
/// entity, relation and attribute blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    n_groups: usize,
    n_entities: usize,
    n_relations: usize,
    n_attributes: usize,
}

impl Vocab {
    pub fn new(n_groups: usize, n_entities: usize, n_relations: usize, n_attributes: usize) -> Self {
        Vocab {
            n_groups,
            n_entities,
            n_relations,
            n_attributes,
        }
    }

    pub fn size(&self) -> usize {
        self.entity_base() + self.n_entities + self.n_relations + self.n_attributes
    }

    pub fn n_specials(&self) -> usize {
        FIXED_SPECIALS.len() + self.n_groups
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }

    fn entity_base(&self) -> usize {
        self.n_specials()
    }

    fn relation_base(&self) -> usize {
        self.entity_base() + self.n_entities
    }

    fn attribute_base(&self) -> usize {
        self.relation_base() + self.n_relations
    }

    /// Group marker `i` (0-based), distinguishing an entity's corpora.
    pub fn group(&self, i: usize) -> TokenId {
        assert!(i < self.n_groups, "group marker {i} out of range");
        FIXED_SPECIALS.len() + i
    }

    pub fn is_group(&self, id: TokenId) -> bool {
        (FIXED_SPECIALS.len()..self.n_specials()).contains(&id)
    }

    pub fn entity(&self, i: usize) -> TokenId {
        assert!(i < self.n_entities, "entity {i} out of range");
        self.entity_base() + i
    }

    pub fn relation(&self, i: usize) -> TokenId {
        assert!(i < self.n_relations, "relation {i} out of range");
        self.relation_base() + i
    }

    pub fn attribute(&self, i: usize) -> TokenId {
        assert!(i < self.n_attributes, "attribute {i} out of range");
        self.attribute_base() + i
    }

    pub fn entities(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.n_entities).map(|i| self.entity(i))
    }

    pub fn relations(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.n_relations).map(|i| self.relation(i))
    }

    pub fn attributes(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.n_attributes).map(|i| self.attribute(i))
    }

    pub fn class_of(&self, id: TokenId) -> Option<TokenClass> {
        if id < self.entity_base() {
            Some(TokenClass::Special)
        } else if id < self.relation_base() {
            Some(TokenClass::Entity)
        } else if id < self.attribute_base() {
            Some(TokenClass::Relation)
        } else if id < self.size() {
            Some(TokenClass::Attribute)
        } else {
            None
        }
    }

    pub fn is_entity(&self, id: TokenId) -> bool {
        self.class_of(id) == Some(TokenClass::Entity)
    }

    pub fn is_relation(&self, id: TokenId) -> bool {
        self.class_of(id) == Some(TokenClass::Relation)
    }

    pub fn is_attribute(&self, id: TokenId) -> bool {
        self.class_of(id) == Some(TokenClass::Attribute)
    }

    /// Zero-based index of an entity token within the entity block.
    pub fn entity_index(&self, id: TokenId) -> Option<usize> {
        self.is_entity(id).then(|| id - self.entity_base())
    }

    pub fn name(&self, id: TokenId) -> String {
        match self.class_of(id) {
            Some(TokenClass::Special) if id < FIXED_SPECIALS.len() => FIXED_SPECIALS[id].to_string(),
            Some(TokenClass::Special) => format!("<g{}>", id - FIXED_SPECIALS.len() + 1),
            Some(TokenClass::Entity) => format!("E_{}", id - self.entity_base() + 1),
            Some(TokenClass::Relation) => format!("R_{}", id - self.relation_base() + 1),
            Some(TokenClass::Attribute) => format!("A_{}", id - self.attribute_base() + 1),
            None => format!("<unk:{id}>"),
        }
    }

    pub fn parse(&self, name: &str) -> Option<TokenId> {
        if let Some(pos) = FIXED_SPECIALS.iter().position(|s| *s == name) {
            return Some(pos);
        }
        let numbered = |prefix: &str, suffix: &str, count: usize| -> Option<usize> {
            let body = name.strip_prefix(prefix)?.strip_suffix(suffix)?;
            if body.starts_with('0') || body.starts_with('+') {
                return None;
            }
            let n: usize = body.parse().ok()?;
            (1..=count).contains(&n).then(|| n - 1)
        };
        if let Some(i) = numbered("<g", ">", self.n_groups) {
            return Some(self.group(i));
        }
        if let Some(i) = numbered("E_", "", self.n_entities) {
            return Some(self.entity(i));
        }
        if let Some(i) = numbered("R_", "", self.n_relations) {
            return Some(self.relation(i));
        }
        numbered("A_", "", self.n_attributes).map(|i| self.attribute(i))
    }

    pub fn render(&self, seq: &[TokenId]) -> String {
        seq.iter().map(|&t| self.name(t)).collect::<Vec<_>>().join(" ")
    }
}

/// One unit of knowledge: subject entity, relation, object attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripletFact {
    pub s: TokenId,
    pub r: TokenId,
    pub o: TokenId,
}

impl TripletFact {
    pub fn new(s: TokenId, r: TokenId, o: TokenId) -> Self {
        TripletFact { s, r, o }
    }

    pub fn is_class_valid(&self, vocab: &Vocab) -> bool {
        vocab.is_entity(self.s) && vocab.is_relation(self.r) && vocab.is_attribute(self.o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Bos,
    Eos,
    Sep,
    Subj,
    Rel,
    Obj,
}

/// Layouts available to a relation, in the order they are assigned. The
/// first two guarantee one object-final and one subject-final surface form.
pub const LAYOUT_CATALOG: [&[Slot]; 6] = {
    use Slot::*;
    [
        &[Bos, Subj, Rel, Obj, Eos],
        &[Bos, Rel, Obj, Sep, Subj, Eos],
        &[Bos, Rel, Subj, Sep, Obj, Eos],
        &[Bos, Obj, Rel, Sep, Subj, Eos],
        &[Bos, Subj, Sep, Rel, Obj, Eos],
        &[Bos, Obj, Sep, Rel, Subj, Eos],
    ]
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseTemplate {
    pub relation: TokenId,
    /// Global index into `SyntheticWorld::templates`.
    pub id: usize,
    pub layout: Vec<Slot>,
}

impl ParaphraseTemplate {
    fn position(&self, slot: Slot) -> usize {
        self.layout
            .iter()
            .position(|&s| s == slot)
            .expect("layout carries every content slot")
    }

    /// Last content slot before EOS is the subject (node probes).
    pub fn subject_last(&self) -> bool {
        self.layout.len() >= 2 && self.layout[self.layout.len() - 2] == Slot::Subj
    }

    /// Last content slot before EOS is the object (edge probes).
    pub fn object_last(&self) -> bool {
        self.layout.len() >= 2 && self.layout[self.layout.len() - 2] == Slot::Obj
    }

    pub fn subject_before_object(&self) -> bool {
        self.position(Slot::Subj) < self.position(Slot::Obj)
    }

    pub fn fill(&self, fact: &TripletFact) -> TokenSeq {
        self.layout
            .iter()
            .map(|slot| match slot {
                Slot::Bos => BOS,
                Slot::Eos => EOS,
                Slot::Sep => SEP,
                Slot::Subj => fact.s,
                Slot::Rel => fact.r,
                Slot::Obj => fact.o,
            })
            .collect()
    }

    /// Rendering truncated just before `slot`.
    pub fn prefix_before(&self, fact: &TripletFact, slot: Slot) -> TokenSeq {
        let mut seq = self.fill(fact);
        seq.truncate(self.position(slot));
        seq
    }
}

/// Generation parameters for a world; doubles as the key-value config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_attributes: usize,
    pub facts_per_entity: usize,
    pub templates_per_relation: usize,
    pub n_utility_entities: usize,
    /// Facts per explanatory corpus.
    pub corpus_group_size: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            n_entities: 30,
            n_relations: 12,
            n_attributes: 8,
            facts_per_entity: 8,
            templates_per_relation: 3,
            n_utility_entities: 10,
            corpus_group_size: 4,
            seed: 7,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_entities", self.n_entities),
            ("n_relations", self.n_relations),
            ("n_attributes", self.n_attributes),
            ("facts_per_entity", self.facts_per_entity),
            ("templates_per_relation", self.templates_per_relation),
            ("n_utility_entities", self.n_utility_entities),
            ("corpus_group_size", self.corpus_group_size),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.facts_per_entity > self.n_relations {
            return Err(Error::Config(format!(
                "facts_per_entity ({}) exceeds n_relations ({})",
                self.facts_per_entity, self.n_relations
            )));
        }
        if self.templates_per_relation < 2 || self.templates_per_relation > LAYOUT_CATALOG.len() {
            return Err(Error::Config(format!(
                "templates_per_relation must be in 2..={} (one subject-final and one object-final layout are required)",
                LAYOUT_CATALOG.len()
            )));
        }
        if self.n_utility_entities >= self.n_entities {
            return Err(Error::Config(
                "n_utility_entities must leave at least one candidate target".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub spec: WorldSpec,
    pub vocab: Vocab,
    /// Per-entity facts in entity order, each list sorted by relation.
    entity_facts: Vec<Vec<TripletFact>>,
    pub templates: Vec<ParaphraseTemplate>,
    pub utility_entities: Vec<TokenId>,
    pub seed: u64,
}

/// Builds the world described by `spec`. A pure function of the spec.
pub fn generate_world(spec: &WorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    // One group marker per possible corpus: group_size can be as small as 1.
    let vocab = Vocab::new(
        spec.facts_per_entity,
        spec.n_entities,
        spec.n_relations,
        spec.n_attributes,
    );
    let mut rng = rng_from_seed(spec.seed);

    let mut entity_facts = Vec::with_capacity(spec.n_entities);
    for e in 0..spec.n_entities {
        let mut rels = index::sample(&mut rng, spec.n_relations, spec.facts_per_entity).into_vec();
        rels.sort_unstable();
        let facts = rels
            .into_iter()
            .map(|r| {
                let o = rng.random_range(0..spec.n_attributes);
                TripletFact::new(vocab.entity(e), vocab.relation(r), vocab.attribute(o))
            })
            .collect();
        entity_facts.push(facts);
    }

    let mut utility: Vec<TokenId> = index::sample(&mut rng, spec.n_entities, spec.n_utility_entities)
        .into_iter()
        .map(|i| vocab.entity(i))
        .collect();
    utility.sort_unstable();

    let mut templates = Vec::with_capacity(spec.n_relations * spec.templates_per_relation);
    for r in vocab.relations() {
        for layout in LAYOUT_CATALOG.iter().take(spec.templates_per_relation) {
            templates.push(ParaphraseTemplate {
                relation: r,
                id: templates.len(),
                layout: layout.to_vec(),
            });
        }
    }

    Ok(SyntheticWorld {
        spec: spec.clone(),
        vocab,
        entity_facts,
        templates,
        utility_entities: utility,
        seed: spec.seed,
    })
}

impl SyntheticWorld {
    pub fn facts(&self) -> impl Iterator<Item = &TripletFact> + '_ {
        self.entity_facts.iter().flatten()
    }

    pub fn n_facts(&self) -> usize {
        self.entity_facts.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, fact: &TripletFact) -> bool {
        self.vocab
            .entity_index(fact.s)
            .map(|i| self.entity_facts[i].contains(fact))
            .unwrap_or(false)
    }

    /// Facts of entity `e`, sorted by relation.
    pub fn facts_of(&self, e: TokenId) -> Result<&[TripletFact]> {
        let i = self.vocab.entity_index(e).ok_or_else(|| Error::Lookup {
            kind: "entity",
            name: self.vocab.name(e),
        })?;
        Ok(&self.entity_facts[i])
    }

    /// Ground-truth object for `(s, r)`, if assigned.
    pub fn object_of(&self, s: TokenId, r: TokenId) -> Option<TokenId> {
        let i = self.vocab.entity_index(s)?;
        self.entity_facts[i].iter().find(|f| f.r == r).map(|f| f.o)
    }

    pub fn is_utility(&self, e: TokenId) -> bool {
        self.utility_entities.contains(&e)
    }

    /// Entities eligible as forgetting targets (everything outside the utility sub-world).
    pub fn candidate_targets(&self) -> Vec<TokenId> {
        self.vocab.entities().filter(|e| !self.is_utility(*e)).collect()
    }

    pub fn templates_for(&self, r: TokenId) -> impl Iterator<Item = &ParaphraseTemplate> + '_ {
        self.templates.iter().filter(move |t| t.relation == r)
    }

    pub fn entity_by_name(&self, name: &str) -> Result<TokenId> {
        self.vocab
            .parse(name)
            .filter(|&t| self.vocab.is_entity(t))
            .ok_or_else(|| Error::Lookup {
                kind: "entity",
                name: name.to_string(),
            })
    }

    /// Number of explanatory corpora per entity at the world's group size.
    pub fn corpora_per_entity(&self) -> usize {
        self.spec.facts_per_entity.div_ceil(self.spec.corpus_group_size)
    }

    /// Every sequence the pre-unlearned model is trained to memorize: all
    /// template renderings, the explanatory corpora and their masked cloze drills.
    pub fn training_corpus(&self) -> Result<Vec<TokenSeq>> {
        let mut corpus = Vec::new();
        for e in self.vocab.entities() {
            for fact in self.facts_of(e)? {
                for t in self.templates_for(fact.r) {
                    corpus.push(t.fill(fact));
                }
            }
            corpus.extend(render_explanatory(self, e, self.spec.corpus_group_size)?);
            corpus.extend(render_cloze(self, e, self.spec.corpus_group_size)?);
        }
        Ok(corpus)
    }

    /// Longest sequence in the training corpus.
    pub fn max_sequence_len(&self) -> usize {
        let group = self.spec.corpus_group_size.min(self.spec.facts_per_entity);
        // cloze drill: BOS TELL MASK G (r o SEP)*group e EOS
        let cloze = 4 + 3 * group + 2;
        cloze.max(LAYOUT_CATALOG[0].len())
    }
}

/// The target slice U(t): every fact naming `e` as subject. Objects are
/// always attributes here, so the object-position clause never fires.
pub fn target_slice(world: &SyntheticWorld, e: TokenId) -> Result<BTreeSet<TripletFact>> {
    Ok(world.facts_of(e)?.iter().copied().collect())
}

pub fn render_triplet(world: &SyntheticWorld, fact: &TripletFact, template_id: usize) -> Result<TokenSeq> {
    let template = world.templates.get(template_id).ok_or_else(|| Error::Lookup {
        kind: "template",
        name: template_id.to_string(),
    })?;
    if template.relation != fact.r {
        return Err(Error::Invalid(format!(
            "template {template_id} belongs to {}, fact uses {}",
            world.vocab.name(template.relation),
            world.vocab.name(fact.r)
        )));
    }
    Ok(template.fill(fact))
}

/// Explanatory corpora of `e`: its facts split into consecutive groups of
/// `group_size`, each rendered as `BOS TELL e G_i r1 o1 SEP r2 o2 ... EOS`.
pub fn render_explanatory(world: &SyntheticWorld, e: TokenId, group_size: usize) -> Result<Vec<TokenSeq>> {
    if group_size == 0 {
        return Err(Error::Invalid("group_size must be at least 1".into()));
    }
    let facts = world.facts_of(e)?;
    if facts.is_empty() {
        return Err(Error::Invalid(format!("{} has no facts", world.vocab.name(e))));
    }
    let n_groups = facts.len().div_ceil(group_size);
    if n_groups > world.vocab.n_groups() {
        return Err(Error::Invalid(format!(
            "{n_groups} corpora exceed the {} group markers",
            world.vocab.n_groups()
        )));
    }
    Ok(facts
        .chunks(group_size)
        .enumerate()
        .map(|(i, group)| {
            let mut seq = vec![BOS, TELL, e, world.vocab.group(i)];
            for (k, fact) in group.iter().enumerate() {
                if k > 0 {
                    seq.push(SEP);
                }
                seq.push(fact.r);
                seq.push(fact.o);
            }
            seq.push(EOS);
            seq
        })
        .collect())
}

/// Masked cloze drills for the explanatory corpora: the entity is replaced
/// by `MASK` and restated after a closing `SEP`.
pub fn render_cloze(world: &SyntheticWorld, e: TokenId, group_size: usize) -> Result<Vec<TokenSeq>> {
    Ok(render_explanatory(world, e, group_size)?
        .into_iter()
        .map(|corpus| cloze_from_corpus(&corpus, e))
        .collect())
}

pub(crate) fn cloze_from_corpus(corpus: &[TokenId], e: TokenId) -> TokenSeq {
    let mut seq: TokenSeq = corpus[..corpus.len() - 1]
        .iter()
        .map(|&t| if t == e { MASK } else { t })
        .collect();
    seq.extend([SEP, e, EOS]);
    seq
}

/// Splits at the first occurrence of `e`: the prefix keeps the entity.
pub fn split_at_entity(seq: &[TokenId], e: TokenId) -> Result<(TokenSeq, TokenSeq)> {
    let k = seq
        .iter()
        .position(|&t| t == e)
        .ok_or_else(|| Error::Invalid(format!("token {e} does not occur in sequence")))?;
    Ok((seq[..=k].to_vec(), seq[k + 1..].to_vec()))
}
