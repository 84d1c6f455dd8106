//! Measurements: masked Node/Edge accuracy, non-target preservation, the
//! utility proxy, the regeneration checker, extraction coverage/precision and
//! token-level loss statistics.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{validate_triplet, ExtractionLog};
use crate::model::ModelParams;
use crate::unlearn::baseline_icu;
use crate::world::{
    render_cloze, ParaphraseTemplate, Slot, SyntheticWorld, TokenId, TokenSeq, TripletFact, BOS, MASK, SEP, TELL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeSource {
    /// Rendering of a fact with the template of this global index.
    Template { fact: TripletFact, template: usize },
    /// Masked explanatory corpus number `index` of `entity`.
    Corpus { entity: TokenId, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub prefix: TokenSeq,
    pub gold: TokenId,
    pub source: ProbeSource,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProbeSet {
    pub node: Vec<Probe>,
    pub edge: Vec<Probe>,
}

impl ProbeSet {
    pub fn extend(&mut self, other: ProbeSet) {
        self.node.extend(other.node);
        self.edge.extend(other.edge);
    }
}

/// Node probes end just before the entity; edge probes end just before the attribute.
pub fn build_probes(world: &SyntheticWorld, e: TokenId) -> Result<ProbeSet> {
    let mut set = ProbeSet::default();
    let from_template = |t: &ParaphraseTemplate, fact: &TripletFact, slot: Slot, gold: TokenId| Probe {
        prefix: t.prefix_before(fact, slot),
        gold,
        source: ProbeSource::Template {
            fact: *fact,
            template: t.id,
        },
    };
    for fact in world.facts_of(e)? {
        for t in world.templates_for(fact.r) {
            if t.subject_last() {
                set.node.push(from_template(t, fact, Slot::Subj, e));
            }
            if t.object_last() {
                set.edge.push(from_template(t, fact, Slot::Obj, fact.o));
            }
        }
    }
    for (index, drill) in render_cloze(world, e, world.spec.corpus_group_size)?
        .into_iter()
        .enumerate()
    {
        // drill ends with SEP e EOS
        set.node.push(Probe {
            prefix: drill[..drill.len() - 2].to_vec(),
            gold: e,
            source: ProbeSource::Corpus { entity: e, index },
        });
    }
    Ok(set)
}

/// Keeps the probes the reference model answers correctly.
pub fn restrict_to_answerable(theta_pre: &ModelParams, probes: &ProbeSet) -> Result<ProbeSet> {
    let keep = |list: &[Probe]| -> Result<Vec<Probe>> {
        let prefixes: Vec<TokenSeq> = list.iter().map(|p| p.prefix.clone()).collect();
        let answers = theta_pre.greedy_batch(&prefixes)?;
        Ok(list
            .iter()
            .zip(answers)
            .filter(|(p, a)| p.gold == *a)
            .map(|(p, _)| p.clone())
            .collect())
    };
    Ok(ProbeSet {
        node: keep(&probes.node)?,
        edge: keep(&probes.edge)?,
    })
}

/// A fraction with its denominator. `flagged` marks an empty denominator,
/// in which case `value` holds the documented fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub value: f64,
    pub hits: usize,
    pub total: usize,
    pub flagged: bool,
}

impl Fraction {
    pub fn new(hits: usize, total: usize, fallback: f64) -> Self {
        if total == 0 {
            Fraction {
                value: fallback,
                hits,
                total,
                flagged: true,
            }
        } else {
            Fraction {
                value: hits as f64 / total as f64,
                hits,
                total,
                flagged: false,
            }
        }
    }
}

fn accuracy(theta: &ModelParams, probes: &[Probe], icu: Option<TokenId>) -> Result<Fraction> {
    let prefixes: Vec<TokenSeq> = probes
        .iter()
        .map(|p| match icu {
            Some(e) => baseline_icu(&p.prefix, e),
            None => Ok(p.prefix.clone()),
        })
        .collect::<Result<_>>()?;
    let answers = theta.greedy_batch(&prefixes)?;
    let hits = probes.iter().zip(&answers).filter(|(p, a)| p.gold == **a).count();
    Ok(Fraction::new(hits, probes.len(), 1.0))
}

/// Share of node probes whose greedy answer is still the entity. An empty
/// probe list yields a flagged 1.0.
pub fn node_acc(theta: &ModelParams, restricted: &ProbeSet) -> Result<Fraction> {
    accuracy(theta, &restricted.node, None)
}

pub fn edge_acc(theta: &ModelParams, restricted: &ProbeSet) -> Result<Fraction> {
    accuracy(theta, &restricted.edge, None)
}

/// Restricted edge probes over the utility sub-world.
pub fn utility_probes(theta_pre: &ModelParams, world: &SyntheticWorld) -> Result<Vec<Probe>> {
    if world.utility_entities.is_empty() {
        return Err(Error::Invalid("world has no utility entities".into()));
    }
    let mut all = ProbeSet::default();
    for &e in &world.utility_entities {
        all.extend(build_probes(world, e)?);
    }
    all.node.clear();
    Ok(restrict_to_answerable(theta_pre, &all)?.edge)
}

/// Edge accuracy on the utility entities, restricted by `theta_pre`.
pub fn general_utility(theta: &ModelParams, theta_pre: &ModelParams, world: &SyntheticWorld) -> Result<Fraction> {
    accuracy(theta, &utility_probes(theta_pre, world)?, None)
}

/// Flat record of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub node_acc: f64,
    pub edge_acc: f64,
    pub node_acc_others: f64,
    pub edge_acc_others: f64,
    pub general_utility: f64,
    pub kg_coverage: Option<f64>,
    pub kg_precision: Option<f64>,
    pub n_node: usize,
    pub n_edge: usize,
    pub n_node_others: usize,
    pub n_edge_others: usize,
    pub n_utility: usize,
    pub n_node_unrestricted: usize,
    pub n_edge_unrestricted: usize,
}

pub const REPORT_COLUMNS: [&str; 7] = [
    "node_acc",
    "edge_acc",
    "node_acc_others",
    "edge_acc_others",
    "general_utility",
    "kg_coverage",
    "kg_precision",
];

/// Fixed-precision rendering shared by every report file.
pub fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

pub fn fmt_optional(v: Option<f64>) -> String {
    v.map(fmt_metric).unwrap_or_else(|| "NA".into())
}

impl EvalReport {
    pub fn fields(&self) -> [String; 7] {
        [
            fmt_metric(self.node_acc),
            fmt_metric(self.edge_acc),
            fmt_metric(self.node_acc_others),
            fmt_metric(self.edge_acc_others),
            fmt_metric(self.general_utility),
            fmt_optional(self.kg_coverage),
            fmt_optional(self.kg_precision),
        ]
    }

    /// Header line plus one value line, tab separated, followed by probe counts.
    pub fn to_tsv(&self) -> String {
        let mut out = REPORT_COLUMNS.join("\t");
        out.push_str("\tn_node\tn_edge\tn_node_others\tn_edge_others\tn_utility\n");
        out.push_str(&self.fields().join("\t"));
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}",
            self.n_node, self.n_edge, self.n_node_others, self.n_edge_others, self.n_utility
        );
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Restricted probe sets for one target, built once from the reference model.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub target: TokenId,
    pub target_probes: ProbeSet,
    pub other_probes: ProbeSet,
    pub utility: Vec<Probe>,
    unrestricted_node: usize,
    unrestricted_edge: usize,
}

impl Evaluator {
    /// `others` are the non-target entities whose knowledge should survive.
    pub fn new(world: &SyntheticWorld, theta_pre: &ModelParams, target: TokenId, others: &[TokenId]) -> Result<Self> {
        if others.contains(&target) {
            return Err(Error::Invalid(format!(
                "{} is both the target and a non-target",
                world.vocab.name(target)
            )));
        }
        let full = build_probes(world, target)?;
        let mut other = ProbeSet::default();
        for &e in others {
            other.extend(build_probes(world, e)?);
        }
        Ok(Evaluator {
            target,
            target_probes: restrict_to_answerable(theta_pre, &full)?,
            other_probes: restrict_to_answerable(theta_pre, &other)?,
            utility: utility_probes(theta_pre, world)?,
            unrestricted_node: full.node.len(),
            unrestricted_edge: full.edge.len(),
        })
    }

    /// Target (node, edge) accuracy; `icu` prefixes every prompt.
    pub fn target_scores(&self, theta: &ModelParams, icu: Option<TokenId>) -> Result<(Fraction, Fraction)> {
        Ok((
            accuracy(theta, &self.target_probes.node, icu)?,
            accuracy(theta, &self.target_probes.edge, icu)?,
        ))
    }

    pub fn report(&self, theta: &ModelParams, icu: Option<TokenId>) -> Result<EvalReport> {
        let (node, edge) = self.target_scores(theta, icu)?;
        let node_o = accuracy(theta, &self.other_probes.node, icu)?;
        let edge_o = accuracy(theta, &self.other_probes.edge, icu)?;
        let util = accuracy(theta, &self.utility, icu)?;
        Ok(EvalReport {
            node_acc: node.value,
            edge_acc: edge.value,
            node_acc_others: node_o.value,
            edge_acc_others: edge_o.value,
            general_utility: util.value,
            kg_coverage: None,
            kg_precision: None,
            n_node: node.total,
            n_edge: edge.total,
            n_node_others: node_o.total,
            n_edge_others: edge_o.total,
            n_utility: util.total,
            n_node_unrestricted: self.unrestricted_node,
            n_edge_unrestricted: self.unrestricted_edge,
        })
    }
}

/// Triplets of `world` realized in `seq`: contiguous `s r o`, any template
/// layout, and the explanatory corpus and cloze forms.
pub fn extract_triplets(world: &SyntheticWorld, seq: &[TokenId]) -> BTreeSet<TripletFact> {
    let vocab = &world.vocab;
    let mut found = BTreeSet::new();
    let mut keep = |fact: TripletFact| {
        if world.contains(&fact) {
            found.insert(fact);
        }
    };
    for w in seq.windows(3) {
        keep(TripletFact::new(w[0], w[1], w[2]));
    }
    for t in &world.templates {
        let body: Vec<Slot> = t
            .layout
            .iter()
            .copied()
            .filter(|s| !matches!(s, Slot::Bos | Slot::Eos))
            .collect();
        for w in seq.windows(body.len()) {
            let (mut s, mut r, mut o) = (None, None, None);
            let fits = body.iter().zip(w).all(|(slot, &tok)| match slot {
                Slot::Sep => tok == SEP,
                Slot::Subj => s.replace(tok).is_none(),
                Slot::Rel => r.replace(tok).is_none(),
                Slot::Obj => o.replace(tok).is_none(),
                Slot::Bos | Slot::Eos => false,
            });
            if let (true, Some(s), Some(r), Some(o)) = (fits, s, r, o) {
                if r == t.relation {
                    keep(TripletFact::new(s, r, o));
                }
            }
        }
    }
    // TELL subject [group] r o (SEP r o)* [SEP entity]
    for start in seq.iter().enumerate().filter(|(_, &t)| t == TELL).map(|(i, _)| i) {
        let Some(&head) = seq.get(start + 1) else { continue };
        let mut i = start + 2;
        if seq.get(i).is_some_and(|&g| vocab.is_group(g)) {
            i += 1;
        }
        let mut pairs = Vec::new();
        let mut closing = None;
        loop {
            match (seq.get(i), seq.get(i + 1)) {
                (Some(&r), Some(&o)) if vocab.is_relation(r) && vocab.is_attribute(o) => {
                    pairs.push((r, o));
                    i += 2;
                    if seq.get(i) == Some(&SEP) {
                        i += 1;
                        continue;
                    }
                    break;
                }
                (Some(&e), _) if vocab.is_entity(e) && seq.get(i - 1) == Some(&SEP) => {
                    closing = Some(e);
                    break;
                }
                _ => break,
            }
        }
        let subject = if head == MASK { closing } else { Some(head) };
        if let Some(s) = subject.filter(|&s| vocab.is_entity(s)) {
            for (r, o) in pairs {
                keep(TripletFact::new(s, r, o));
            }
        }
    }
    found
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub prompt: TokenSeq,
    pub output: TokenSeq,
    pub fact: TripletFact,
}

/// Prompts that try to elicit `e` or its attributes in every trained form.
pub fn standard_prompt_suite(world: &SyntheticWorld, e: TokenId) -> Result<Vec<TokenSeq>> {
    let mut suite = vec![vec![BOS, e], vec![BOS, e, SEP]];
    for r in world.vocab.relations() {
        suite.push(vec![BOS, e, r]);
        suite.push(vec![BOS, r, e]);
    }
    for i in 0..world.corpora_per_entity() {
        suite.push(vec![BOS, TELL, e, world.vocab.group(i)]);
    }
    let probes = build_probes(world, e)?;
    suite.extend(probes.node.into_iter().chain(probes.edge).map(|p| p.prefix));
    Ok(suite)
}

/// Greedy continuations that reveal a target fact absent from their prompt.
pub fn cu_check(
    theta: &ModelParams,
    world: &SyntheticWorld,
    e: TokenId,
    prompts: &[TokenSeq],
    max_len: usize,
) -> Result<Vec<Violation>> {
    let slice: BTreeSet<TripletFact> = world.facts_of(e)?.iter().copied().collect();
    let mut out = Vec::new();
    for prompt in prompts {
        let full = theta.greedy_decode(prompt, max_len)?;
        let before = extract_triplets(world, prompt);
        for fact in extract_triplets(world, &full) {
            if slice.contains(&fact) && !before.contains(&fact) {
                out.push(Violation {
                    prompt: prompt.clone(),
                    output: full[prompt.len()..].to_vec(),
                    fact,
                });
            }
        }
    }
    Ok(out)
}

/// Tab-separated lines: prompt, output, triplet.
pub fn violations_to_tsv(world: &SyntheticWorld, violations: &[Violation]) -> String {
    let v = &world.vocab;
    let mut out = String::from("prompt\toutput\ttriplet\n");
    for x in violations {
        let _ = writeln!(
            out,
            "{}\t{}\t{} {} {}",
            v.render(&x.prompt),
            v.render(&x.output),
            v.name(x.fact.s),
            v.name(x.fact.r),
            v.name(x.fact.o)
        );
    }
    out
}

/// Facts of `e` that the reference model reproduces.
pub fn memorized_facts(theta_pre: &ModelParams, world: &SyntheticWorld, e: TokenId) -> Result<Vec<TripletFact>> {
    let mut out = Vec::new();
    for fact in world.facts_of(e)? {
        if validate_triplet(theta_pre, fact)? {
            out.push(*fact);
        }
    }
    Ok(out)
}

/// Share of the memorized target facts ever accepted. Flagged 0.0 when
/// nothing is memorized.
pub fn kg_coverage(
    log: &ExtractionLog,
    theta_pre: &ModelParams,
    world: &SyntheticWorld,
    e: TokenId,
) -> Result<Fraction> {
    let memorized = memorized_facts(theta_pre, world, e)?;
    let accepted = log.accepted_facts();
    let hits = memorized.iter().filter(|f| accepted.contains(f)).count();
    Ok(Fraction::new(hits, memorized.len(), 0.0))
}

/// Share of proposal events naming a true fact. Flagged 0.0 on an empty log.
pub fn kg_precision(log: &ExtractionLog, world: &SyntheticWorld) -> Fraction {
    let (hits, total) = log
        .proposals()
        .fold((0, 0), |(h, t), p| (h + usize::from(world.contains(&p.fact)), t + 1));
    Fraction::new(hits, total, 0.0)
}

/// Precision over accepted proposals only.
pub fn kg_precision_accepted(log: &ExtractionLog, world: &SyntheticWorld) -> Fraction {
    let (hits, total) = log
        .proposals()
        .filter(|p| p.accepted)
        .fold((0, 0), |(h, t), p| (h + usize::from(world.contains(&p.fact)), t + 1));
    Fraction::new(hits, total, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// `None` when a sample has fewer than two values or zero variance.
    pub t_value: Option<f64>,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() < 2 {
        f64::NAN
    } else {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    };
    (m, v)
}

/// Welch's t statistic with sample variances.
pub fn welch(a: &[f64], b: &[f64]) -> WelchResult {
    let (mean_a, var_a) = mean_var(a);
    let (mean_b, var_b) = mean_var(b);
    let degenerate = a.len() < 2 || b.len() < 2 || var_a.is_nan() || var_b.is_nan() || (var_a == 0.0 && var_b == 0.0);
    let t_value = (!degenerate).then(|| {
        let se = (var_a / a.len() as f64 + var_b / b.len() as f64).sqrt();
        (mean_a - mean_b) / se
    });
    WelchResult {
        mean_a,
        mean_b,
        var_a,
        var_b,
        n_a: a.len(),
        n_b: b.len(),
        t_value,
    }
}

/// Increase in per-token NLL from `before` to `after`, entity tokens (A)
/// against attribute tokens (B). Only tokens occurring once in their
/// sentence count.
pub fn token_loss_delta_stats(
    before: &ModelParams,
    after: &ModelParams,
    sentences: &[TokenSeq],
    world: &SyntheticWorld,
) -> Result<WelchResult> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in sentences {
        let lp0 = before.token_logprobs(s)?;
        let lp1 = after.token_logprobs(s)?;
        for (i, &tok) in s.iter().enumerate().skip(1) {
            if s.iter().filter(|&&t| t == tok).count() != 1 {
                continue;
            }
            let delta = lp0[i - 1] - lp1[i - 1];
            if world.vocab.is_entity(tok) {
                a.push(delta);
            } else if world.vocab.is_attribute(tok) {
                b.push(delta);
            }
        }
    }
    Ok(welch(&a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{EpochRecord, ProposalRecord};
    use crate::model::{init_model, ModelConfig};
    use crate::world::{generate_world, WorldSpec, EOS};
    use approx::assert_abs_diff_eq;

    fn world() -> SyntheticWorld {
        generate_world(&WorldSpec::default()).unwrap()
    }

    #[test]
    fn probe_counts_and_prefixes() {
        let w = world();
        let e = w.vocab.entity(5);
        let set = build_probes(&w, e).unwrap();
        let templated = set
            .node
            .iter()
            .filter(|p| matches!(p.source, ProbeSource::Template { .. }))
            .count();
        assert_eq!(templated, 8);
        assert_eq!(set.node.len(), 8 + w.corpora_per_entity());
        assert_eq!(set.edge.len(), 16);
        let fact = w.facts_of(e).unwrap()[0];
        assert!(set.node.iter().any(|p| p.prefix == vec![BOS, fact.r, fact.o, SEP]));
        for p in set.node.iter().chain(&set.edge) {
            assert!(!p.prefix.contains(&p.gold));
        }
        assert!(set.node.iter().all(|p| w.vocab.is_entity(p.gold)));
        assert!(set.edge.iter().all(|p| w.vocab.is_attribute(p.gold)));
    }

    #[test]
    fn restriction_is_idempotent_and_exact() {
        let w = world();
        let m = init_model(&ModelConfig::for_world(&w, 4)).unwrap();
        let e = w.vocab.entity(0);
        let r1 = restrict_to_answerable(&m, &build_probes(&w, e).unwrap()).unwrap();
        let r2 = restrict_to_answerable(&m, &r1).unwrap();
        assert_eq!(r1, r2);
        for acc in [node_acc(&m, &r1).unwrap(), edge_acc(&m, &r1).unwrap()] {
            assert!(acc.flagged || acc.value == 1.0);
        }
    }

    #[test]
    fn empty_probe_set_is_flagged() {
        let w = world();
        let m = init_model(&ModelConfig::for_world(&w, 4)).unwrap();
        let f = node_acc(&m, &ProbeSet::default()).unwrap();
        assert!(f.flagged);
        assert_eq!(f.total, 0);
    }

    #[test]
    fn extractor_recovers_every_rendering() {
        let w = world();
        for fact in w.facts() {
            for t in w.templates_for(fact.r) {
                let found = extract_triplets(&w, &t.fill(fact));
                assert_eq!(found, BTreeSet::from([*fact]), "template {}", t.id);
            }
        }
    }

    #[test]
    fn extractor_reads_corpus_and_cloze_forms() {
        let w = world();
        let e = w.vocab.entity(2);
        let facts: BTreeSet<_> = w.facts_of(e).unwrap()[..4].iter().copied().collect();
        let corpus = crate::world::render_explanatory(&w, e, 4).unwrap();
        assert_eq!(extract_triplets(&w, &corpus[0]), facts);
        let cloze = render_cloze(&w, e, 4).unwrap();
        assert_eq!(extract_triplets(&w, &cloze[0]), facts);
        let truncated = &cloze[0][..cloze[0].len() - 2];
        assert!(extract_triplets(&w, truncated).is_empty());
    }

    #[test]
    fn prompt_with_the_triplet_is_never_a_violation() {
        let w = world();
        let e = w.vocab.entity(0);
        let fact = w.facts_of(e).unwrap()[0];
        let m = init_model(&ModelConfig::for_world(&w, 4)).unwrap();
        let prompt = vec![BOS, e, fact.r, fact.o, EOS];
        let v = cu_check(&m, &w, e, &[prompt], 4).unwrap();
        assert!(v.iter().all(|x| x.fact != fact));
    }

    #[test]
    fn coverage_and_precision_arithmetic() {
        let w = world();
        let e = w.vocab.entity(0);
        let facts = w.facts_of(e).unwrap();
        let fake = TripletFact::new(e, facts[0].r, w.vocab.attributes().find(|&a| a != facts[0].o).unwrap());
        let record = |fact, ok| ProposalRecord {
            fact,
            verdict: ok,
            accepted: ok,
        };
        let log = ExtractionLog {
            epochs: vec![EpochRecord {
                epoch: 1,
                proposals: vec![
                    record(facts[0], true),
                    record(facts[1], true),
                    record(facts[2], true),
                    record(fake, false),
                ],
                dropped: 0,
            }],
        };
        assert_abs_diff_eq!(kg_precision(&log, &w).value, 0.75);
        assert_abs_diff_eq!(kg_precision_accepted(&log, &w).value, 1.0);
        assert!(kg_precision(&ExtractionLog::new(), &w).flagged);
        let m = init_model(&ModelConfig::for_world(&w, 4)).unwrap();
        let cov = kg_coverage(&ExtractionLog::new(), &m, &w, e).unwrap();
        assert_eq!(cov.hits, 0);
        assert_eq!(cov.value, 0.0);
    }

    #[test]
    fn welch_fixture() {
        let r = welch(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        let oracle = -2.0 / (1.0f64 / 3.0 + 4.0 / 3.0).sqrt();
        assert_abs_diff_eq!(r.t_value.unwrap(), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(r.var_b, 4.0, epsilon = 1e-12);
        assert_eq!(welch(&[1.0, 2.0], &[1.0, 2.0]).t_value, Some(0.0));
        assert_eq!(welch(&[1.0], &[1.0, 2.0]).t_value, None);
        assert_eq!(welch(&[1.0, 1.0], &[2.0, 2.0]).t_value, None);
    }

    #[test]
    fn report_file_layout() {
        let r = EvalReport {
            node_acc: 0.0,
            edge_acc: 0.5,
            node_acc_others: 1.0,
            edge_acc_others: 0.25,
            general_utility: 0.75,
            kg_coverage: Some(1.0),
            kg_precision: None,
            n_node: 1,
            n_edge: 2,
            n_node_others: 3,
            n_edge_others: 4,
            n_utility: 5,
            n_node_unrestricted: 6,
            n_edge_unrestricted: 7,
        };
        let text = r.to_tsv();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("node_acc\tedge_acc\tnode_acc_others\tedge_acc_others\tgeneral_utility"));
        assert_eq!(
            lines[1],
            "0.000000\t0.500000\t1.000000\t0.250000\t0.750000\t1.000000\tNA\t1\t2\t3\t4\t5"
        );
    }
}
