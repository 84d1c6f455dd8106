//! The unlearning loop, its learning-rate schedule and the baselines.
//!
//! Each epoch of the full method takes one descent step on the triplet loss
//! over freshly extracted pairs, then one on the sentence loss over the
//! reference model's own explanatory text, both at the same rate. Every
//! `grid_step` epochs the target probes are scored and the run stops at the
//! first checkpoint where both accuracies are zero.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{fmt_metric, fmt_optional, EvalReport, Evaluator};
use crate::extract::{get_attr, get_sent, ExtractConfig, ExtractionLog};
use crate::losses::{loss_eval, LossInput, Objective};
use crate::model::ModelParams;
use crate::seed::Rng;
use crate::world::{render_explanatory, SyntheticWorld, TokenId, TokenSeq, BOS, UNLEARN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub t_sched: usize,
    /// Applied to both bounds; rescales rates tuned for large models.
    pub multiplier: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            lambda_min: 4e-7,
            lambda_max: 4e-5,
            t_sched: 200,
            multiplier: DEFAULT_LR_MULTIPLIER,
        }
    }
}

pub const DEFAULT_LR_MULTIPLIER: f64 = 2e4;

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(positive(self.lambda_min) && positive(self.lambda_max) && positive(self.multiplier)) {
            return Err(Error::Config("schedule rates and multiplier must be positive".into()));
        }
        if self.lambda_min > self.lambda_max {
            return Err(Error::Config(format!(
                "lambda_min {} exceeds lambda_max {}",
                self.lambda_min, self.lambda_max
            )));
        }
        if self.t_sched == 0 {
            return Err(Error::Config("t_sched must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reverse cosine rate: `min + (max - min) * (1 - cos(t pi / T)) / 2`, times the multiplier.
pub fn lr_at(t: usize, sched: &ScheduleSpec) -> Result<f64> {
    if t > sched.t_sched {
        return Err(Error::Invalid(format!(
            "step {t} is past the schedule horizon {}",
            sched.t_sched
        )));
    }
    let phase = t as f64 * std::f64::consts::PI / sched.t_sched as f64;
    let base = sched.lambda_min + 0.5 * (sched.lambda_max - sched.lambda_min) * (1.0 - phase.cos());
    Ok(base * sched.multiplier)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Ga,
    Npo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    L1Only,
    L2Only,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnConfig {
    pub variant: Variant,
    pub mode: Mode,
    pub beta: f64,
    pub schedule: ScheduleSpec,
    pub max_epochs: usize,
    pub grid_step: usize,
    pub extract: ExtractConfig,
    pub n_sentences: usize,
}

impl UnlearnConfig {
    pub fn for_world(world: &SyntheticWorld) -> Self {
        UnlearnConfig {
            variant: Variant::Ga,
            mode: Mode::Full,
            beta: 0.1,
            schedule: ScheduleSpec::default(),
            max_epochs: 50,
            grid_step: 5,
            extract: ExtractConfig::for_world(world),
            n_sentences: world.corpora_per_entity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.extract.validate()?;
        if self.grid_step == 0 {
            return Err(Error::Config("grid_step must be at least 1".into()));
        }
        if self.max_epochs < self.grid_step {
            return Err(Error::Config(format!(
                "max_epochs {} is below grid_step {}",
                self.max_epochs, self.grid_step
            )));
        }
        if self.max_epochs > self.schedule.t_sched + 1 {
            return Err(Error::Config(format!(
                "max_epochs {} runs past the schedule horizon {}",
                self.max_epochs, self.schedule.t_sched
            )));
        }
        if self.n_sentences == 0 {
            return Err(Error::Config("n_sentences must be at least 1".into()));
        }
        self.objective().map(|_| ())
    }

    fn objective(&self) -> Result<Objective> {
        match self.variant {
            Variant::Ga => Ok(Objective::Ga),
            Variant::Npo if self.beta > 0.0 && self.beta.is_finite() => Ok(Objective::Npo { beta: self.beta }),
            Variant::Npo => Err(Error::Config(format!("beta must be positive, got {}", self.beta))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Triplet,
    Sentence,
}

/// What one epoch did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub lambda: f64,
    /// Triplet loss before its step; `None` when no step was taken.
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    /// Triplets accepted by extraction this epoch.
    pub accepted: usize,
}

fn descend(theta: &mut ModelParams, theta_pre: &ModelParams, input: &LossInput, lambda: f64, t: usize) -> Result<f64> {
    let eval = loss_eval(theta, theta_pre, input).map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("epoch {t}: {m}")),
        other => other,
    })?;
    theta
        .axpy(-lambda, &eval.grad)
        .map_err(|_| Error::Numerical(format!("unlearning diverged at epoch {t}")))?;
    Ok(eval.value)
}

/// One epoch of the alternating loop at schedule step `t - 1`.
/// `observer` sees every descent step in the order it is applied.
#[allow(clippy::too_many_arguments)]
pub fn unlearn_epoch(
    theta: &mut ModelParams,
    theta_pre: &ModelParams,
    world: &SyntheticWorld,
    e: TokenId,
    sentences: &[TokenSeq],
    config: &UnlearnConfig,
    t: usize,
    rng: &mut Rng,
    log: &mut ExtractionLog,
    observer: &mut dyn FnMut(StepKind, f64),
) -> Result<EpochStats> {
    if t == 0 {
        return Err(Error::Invalid("epochs are numbered from 1".into()));
    }
    let lambda = lr_at(t - 1, &config.schedule)?;
    let objective = config.objective()?;
    let mut stats = EpochStats {
        lambda,
        l1: None,
        l2: None,
        accepted: 0,
    };
    if config.mode != Mode::L2Only {
        let pairs = get_attr(theta, theta_pre, world, e, &config.extract, rng, log, t)?;
        stats.accepted = log
            .epochs
            .last()
            .map_or(0, |r| r.proposals.iter().filter(|p| p.accepted).count());
        if !pairs.is_empty() {
            let input = LossInput::Triplet { objective, pairs };
            let value = descend(theta, theta_pre, &input, lambda, t)?;
            observer(StepKind::Triplet, value);
            stats.l1 = Some(value);
        }
    }
    if config.mode != Mode::L1Only {
        if sentences.is_empty() {
            return Err(Error::Invalid("sentence step needs at least one sentence".into()));
        }
        let input = LossInput::Sentence {
            objective,
            sentences: sentences.to_vec(),
        };
        let value = descend(theta, theta_pre, &input, lambda, t)?;
        observer(StepKind::Sentence, value);
        stats.l2 = Some(value);
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub stats: EpochStats,
    /// Present at multiples of `grid_step`.
    pub snapshot: Option<EvalReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Target node and edge accuracy both reached zero at a checkpoint.
    Forgotten,
    /// Extraction found nothing left to unlearn.
    ExtractionExhausted,
    MaxEpochs,
    /// No parameter updates (prompt-level baseline).
    NoUpdate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
    /// Evaluation of the returned parameters.
    pub final_report: EvalReport,
    pub reference_checksum: String,
}

pub const TRACE_COLUMNS: [&str; 10] = [
    "epoch",
    "lambda",
    "l1",
    "l2",
    "accepted",
    "node_acc",
    "edge_acc",
    "node_others",
    "edge_others",
    "utility",
];

impl RunTrace {
    pub fn to_tsv(&self) -> String {
        let mut out = TRACE_COLUMNS.join("\t");
        out.push('\n');
        for row in &self.rows {
            let snap = row.snapshot;
            let cols = [
                row.epoch.to_string(),
                format!("{:.6e}", row.stats.lambda),
                fmt_optional(row.stats.l1),
                fmt_optional(row.stats.l2),
                row.stats.accepted.to_string(),
                fmt_optional(snap.map(|s| s.node_acc)),
                fmt_optional(snap.map(|s| s.edge_acc)),
                fmt_optional(snap.map(|s| s.node_acc_others)),
                fmt_optional(snap.map(|s| s.edge_acc_others)),
                fmt_optional(snap.map(|s| s.general_utility)),
            ];
            let _ = writeln!(out, "{}", cols.join("\t"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// `stop_epoch`, reason and final metrics as key-value lines.
    pub fn stop_record(&self) -> String {
        let r = &self.final_report;
        format!(
            "stop_epoch\t{}\nstop_reason\t{}\nnode_acc\t{}\nedge_acc\t{}\n",
            self.stop_epoch,
            serde_json::to_value(self.stop_reason)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            fmt_metric(r.node_acc),
            fmt_metric(r.edge_acc)
        )
    }
}

fn check_memorized(evaluator: &Evaluator, world: &SyntheticWorld) -> Result<()> {
    let p = &evaluator.target_probes;
    if p.node.is_empty() || p.edge.is_empty() {
        return Err(Error::Precondition(format!(
            "reference model has not memorized {}: {} node and {} edge probes answerable",
            world.vocab.name(evaluator.target),
            p.node.len(),
            p.edge.len()
        )));
    }
    Ok(())
}

/// Shared loop shell: epochs, checkpoints and stopping.
fn run_loop(
    theta_pre: &ModelParams,
    world: &SyntheticWorld,
    config: &UnlearnConfig,
    evaluator: &Evaluator,
    mut epoch: impl FnMut(&mut ModelParams, usize) -> Result<(EpochStats, bool)>,
) -> Result<(ModelParams, RunTrace)> {
    config.validate()?;
    check_memorized(evaluator, world)?;
    let reference_checksum = theta_pre.checksum();
    let mut theta = theta_pre.clone();
    let mut rows = Vec::new();
    let mut stop = (config.max_epochs, StopReason::MaxEpochs);
    for t in 1..=config.max_epochs {
        let (stats, exhausted) = epoch(&mut theta, t)?;
        let mut row = TraceRow {
            epoch: t,
            stats,
            snapshot: None,
        };
        let mut forgotten = false;
        if t % config.grid_step == 0 {
            let report = evaluator.report(&theta, None)?;
            forgotten = report.node_acc == 0.0 && report.edge_acc == 0.0;
            row.snapshot = Some(report);
        }
        rows.push(row);
        if forgotten {
            stop = (t, StopReason::Forgotten);
            break;
        }
        if exhausted {
            stop = (t, StopReason::ExtractionExhausted);
            break;
        }
    }
    if theta_pre.checksum() != reference_checksum {
        return Err(Error::Precondition(
            "reference parameters changed during the run".into(),
        ));
    }
    let final_report = match rows.last().and_then(|r| r.snapshot) {
        Some(r) => r,
        None => evaluator.report(&theta, None)?,
    };
    Ok((
        theta,
        RunTrace {
            rows,
            stop_epoch: stop.0,
            stop_reason: stop.1,
            final_report,
            reference_checksum,
        },
    ))
}

/// The full method and its ablations, starting from a copy of `theta_pre`.
pub fn run_unlearning(
    theta_pre: &ModelParams,
    world: &SyntheticWorld,
    e: TokenId,
    config: &UnlearnConfig,
    evaluator: &Evaluator,
    rng: &mut Rng,
) -> Result<(ModelParams, RunTrace, ExtractionLog)> {
    if evaluator.target != e {
        return Err(Error::Invalid("evaluator was built for a different target".into()));
    }
    config.validate()?;
    let sentences = if config.mode == Mode::L1Only {
        Vec::new()
    } else {
        get_sent(
            theta_pre,
            &world.vocab,
            e,
            config.n_sentences,
            config.extract.max_decode_len,
        )?
    };
    let mut log = ExtractionLog::new();
    let (theta, trace) = run_loop(theta_pre, world, config, evaluator, |theta, t| {
        let stats = unlearn_epoch(
            theta,
            theta_pre,
            world,
            e,
            &sentences,
            config,
            t,
            rng,
            &mut log,
            &mut |_, _| {},
        )?;
        let exhausted = config.mode == Mode::L1Only && stats.l1.is_none();
        Ok((stats, exhausted))
    })?;
    Ok((theta, trace, log))
}

/// Sentence-loss unlearning on the target's ground-truth explanatory corpus.
pub fn baseline_corpus(
    theta_pre: &ModelParams,
    world: &SyntheticWorld,
    e: TokenId,
    config: &UnlearnConfig,
    evaluator: &Evaluator,
) -> Result<(ModelParams, RunTrace)> {
    let corpus = render_explanatory(world, e, world.spec.corpus_group_size)?;
    let objective = config.objective()?;
    run_loop(theta_pre, world, config, evaluator, |theta, t| {
        let lambda = lr_at(t - 1, &config.schedule)?;
        let input = LossInput::Sentence {
            objective,
            sentences: corpus.clone(),
        };
        let value = descend(theta, theta_pre, &input, lambda, t)?;
        Ok((
            EpochStats {
                lambda,
                l1: None,
                l2: Some(value),
                accepted: 0,
            },
            false,
        ))
    })
}

/// Prefixes `prompt` with the unlearning instruction for `e`.
pub fn baseline_icu(prompt: &[TokenId], e: TokenId) -> Result<TokenSeq> {
    match prompt {
        [BOS, UNLEARN, ..] => Err(Error::Invalid("prompt already carries the unlearning prefix".into())),
        [BOS, rest @ ..] => Ok([&[BOS, UNLEARN, e], rest].concat()),
        _ => Err(Error::Invalid("prompt must begin with BOS".into())),
    }
}

/// Evaluation of the unchanged reference model under the prompt prefix.
pub fn run_icu(theta_pre: &ModelParams, world: &SyntheticWorld, evaluator: &Evaluator) -> Result<RunTrace> {
    check_memorized(evaluator, world)?;
    Ok(RunTrace {
        rows: Vec::new(),
        stop_epoch: 0,
        stop_reason: StopReason::NoUpdate,
        final_report: evaluator.report(theta_pre, Some(evaluator.target))?,
        reference_checksum: theta_pre.checksum(),
    })
}
