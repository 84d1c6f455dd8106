//! Experiment plumbing behind the `cu-lab` binary.
//!
//! One TOML file describes an experiment. A master seed fans out into the
//! world, model and extraction streams so that every method sees the same
//! world, the same reference model and the same probes. Each subcommand
//! writes into its own corner of the output directory and refuses to
//! overwrite existing files unless forced.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    build_probes, cu_check, fmt_metric, fmt_optional, kg_coverage, kg_precision, restrict_to_answerable,
    standard_prompt_suite, violations_to_tsv, EvalReport, Evaluator, Violation, REPORT_COLUMNS,
};
use crate::extract::{ExtractConfig, ExtractionLog};
use crate::model::{finetune, init_model, ModelConfig, ModelParams};
use crate::seed::{derive_seed, stream};
use crate::unlearn::{
    baseline_corpus, run_icu, run_unlearning, Mode, RunTrace, ScheduleSpec, StopReason, UnlearnConfig, Variant,
};
use crate::world::dataset::{export_dataset, write_dataset};
use crate::world::{generate_world, SyntheticWorld, TokenId, WorldSpec};

/// Targets used when the config names none.
pub const DEFAULT_TARGET_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    OursGa,
    OursNpo,
    L1Only,
    L2Only,
    CorpusGa,
    CorpusNpo,
    Icu,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::OursGa,
        Method::OursNpo,
        Method::L1Only,
        Method::L2Only,
        Method::CorpusGa,
        Method::CorpusNpo,
        Method::Icu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::OursGa => "ours_ga",
            Method::OursNpo => "ours_npo",
            Method::L1Only => "l1_only",
            Method::L2Only => "l2_only",
            Method::CorpusGa => "corpus_ga",
            Method::CorpusNpo => "corpus_npo",
            Method::Icu => "icu",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Lookup {
                kind: "method",
                name: name.to_string(),
            })
    }

    fn variant(self) -> Variant {
        match self {
            Method::OursNpo | Method::CorpusNpo => Variant::Npo,
            _ => Variant::Ga,
        }
    }

    fn mode(self) -> Mode {
        match self {
            Method::L1Only => Mode::L1Only,
            Method::L2Only => Mode::L2Only,
            _ => Mode::Full,
        }
    }
}

/// World counts; the seed comes from the master seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSettings {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_attributes: usize,
    pub facts_per_entity: usize,
    pub templates_per_relation: usize,
    pub n_utility_entities: usize,
    pub corpus_group_size: usize,
}

impl Default for WorldSettings {
    fn default() -> Self {
        let s = WorldSpec::default();
        WorldSettings {
            n_entities: s.n_entities,
            n_relations: s.n_relations,
            n_attributes: s.n_attributes,
            facts_per_entity: s.facts_per_entity,
            templates_per_relation: s.templates_per_relation,
            n_utility_entities: s.n_utility_entities,
            corpus_group_size: s.corpus_group_size,
        }
    }
}

/// Architecture and memorization run for the reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Training fails when the final mean NLL is above this.
    pub max_final_nll: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            embed_dim: 16,
            hidden_dim: 128,
            n_layers: 1,
            epochs: 300,
            lr: 4.0,
            max_final_nll: 1.5,
        }
    }
}

/// Unlearning knobs shared by all methods; the method picks variant and mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnlearnSettings {
    pub beta: f64,
    pub schedule: ScheduleSpec,
    pub max_epochs: usize,
    pub grid_step: usize,
    /// Defaults to the world-sized value when absent.
    pub n_proposals: Option<usize>,
    pub temperature: f64,
    pub rel_aware: bool,
    pub n_sentences: Option<usize>,
}

impl Default for UnlearnSettings {
    fn default() -> Self {
        UnlearnSettings {
            beta: 0.1,
            schedule: ScheduleSpec::default(),
            max_epochs: 50,
            grid_step: 5,
            n_proposals: None,
            temperature: 1.0,
            rel_aware: false,
            n_sentences: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub methods: Vec<Method>,
    /// Entity names; empty means the first candidate targets of the world.
    pub targets: Vec<String>,
    /// Non-target entity names; empty means every other candidate.
    pub others: Vec<String>,
    pub world: WorldSettings,
    pub train: TrainSettings,
    pub unlearn: UnlearnSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out_dir: PathBuf::from("cu-out"),
            methods: Method::ALL.to_vec(),
            targets: Vec::new(),
            others: Vec::new(),
            world: WorldSettings::default(),
            train: TrainSettings::default(),
            unlearn: UnlearnSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn world_spec(&self) -> WorldSpec {
        let w = &self.world;
        WorldSpec {
            n_entities: w.n_entities,
            n_relations: w.n_relations,
            n_attributes: w.n_attributes,
            facts_per_entity: w.facts_per_entity,
            templates_per_relation: w.templates_per_relation,
            n_utility_entities: w.n_utility_entities,
            corpus_group_size: w.corpus_group_size,
            seed: derive_seed(self.seed, "world"),
        }
    }

    pub fn model_config(&self, world: &SyntheticWorld) -> ModelConfig {
        let mut config = ModelConfig::for_world(world, derive_seed(self.seed, "model"));
        config.embed_dim = self.train.embed_dim;
        config.hidden_dim = self.train.hidden_dim;
        config.n_layers = self.train.n_layers;
        config
    }

    pub fn unlearn_config(&self, world: &SyntheticWorld, method: Method) -> UnlearnConfig {
        let u = &self.unlearn;
        let mut extract = if u.rel_aware {
            ExtractConfig::rel_aware_for_world(world)
        } else {
            ExtractConfig::for_world(world)
        };
        if let Some(n) = u.n_proposals {
            extract.n_proposals = n;
        }
        extract.temperature = u.temperature;
        UnlearnConfig {
            variant: method.variant(),
            mode: method.mode(),
            beta: u.beta,
            schedule: u.schedule.clone(),
            max_epochs: u.max_epochs,
            grid_step: u.grid_step,
            extract,
            n_sentences: u.n_sentences.unwrap_or_else(|| world.corpora_per_entity()),
        }
    }

    /// Configured targets, or the first candidates when none are named.
    pub fn resolve_targets(&self, world: &SyntheticWorld) -> Result<Vec<TokenId>> {
        if self.targets.is_empty() {
            return Ok(world
                .candidate_targets()
                .into_iter()
                .take(DEFAULT_TARGET_COUNT)
                .collect());
        }
        self.targets.iter().map(|n| candidate(world, n)).collect()
    }

    pub fn resolve_others(&self, world: &SyntheticWorld, target: TokenId) -> Result<Vec<TokenId>> {
        if self.others.is_empty() {
            return Ok(world.candidate_targets().into_iter().filter(|&e| e != target).collect());
        }
        Ok(self
            .others
            .iter()
            .map(|n| candidate(world, n))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|&e| e != target)
            .collect())
    }

    /// Checks that need the generated world.
    pub fn validate(&self, world: &SyntheticWorld) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        self.resolve_targets(world)?;
        self.resolve_others(world, usize::MAX)?;
        self.model_config(world).validate()?;
        for m in &self.methods {
            self.unlearn_config(world, *m).validate()?;
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::Config(format!(
                "train.lr must be positive, got {}",
                self.train.lr
            )));
        }
        Ok(())
    }
}

fn candidate(world: &SyntheticWorld, name: &str) -> Result<TokenId> {
    let e = world.entity_by_name(name)?;
    if world.is_utility(e) {
        return Err(Error::Config(format!("{name} is reserved for the utility metric")));
    }
    Ok(e)
}

pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::schema(origin, e.to_string()))?;
    serde_path_to_error::deserialize(table).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(format!("{origin}: {path}"), e.into_inner().to_string())
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

/// File layout under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn world(&self) -> PathBuf {
        self.root.join("world.json")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.json")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.bin")
    }

    pub fn train_report(&self) -> PathBuf {
        self.root.join("train.tsv")
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, method: Method, target: &str) -> PathBuf {
        self.runs().join(format!("{}__{target}", method.name()))
    }

    pub fn eval_dir(&self, method: Option<Method>, target: &str) -> PathBuf {
        let label = method.map_or("reference", Method::name);
        self.root.join("eval").join(format!("{label}__{target}"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.tsv")
    }

    pub fn report_means(&self) -> PathBuf {
        self.root.join("report_means.tsv")
    }
}

fn guard(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Invalid(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Generates the world and writes its spec and the dataset file.
pub fn cmd_gen_world(config: &ExperimentConfig, force: bool) -> Result<SyntheticWorld> {
    let layout = Layout::new(&config.out_dir);
    let world = generate_world(&config.world_spec())?;
    config.validate(&world)?;
    guard(&layout.world(), force)?;
    guard(&layout.dataset(), force)?;
    ensure_dir(&layout.root)?;
    write_json(&layout.world(), &world.spec)?;
    write_dataset(&layout.dataset(), &export_dataset(&world)?)?;
    Ok(world)
}

/// Regenerates the world from its stored spec.
pub fn load_world(config: &ExperimentConfig) -> Result<SyntheticWorld> {
    let path = Layout::new(&config.out_dir).world();
    if !path.exists() {
        return Err(Error::Precondition(format!(
            "{} is missing; run gen-world first",
            path.display()
        )));
    }
    let spec: WorldSpec = read_json(&path)?;
    if spec != config.world_spec() {
        return Err(Error::Precondition(format!(
            "{} was generated from a different config; rerun gen-world with --force",
            path.display()
        )));
    }
    generate_world(&spec)
}

/// Memorization summary of the reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub final_nll: f64,
    /// (entity, answerable node, node total, answerable edge, edge total).
    pub probes: Vec<(TokenId, usize, usize, usize, usize)>,
}

impl TrainSummary {
    pub fn to_tsv(&self, world: &SyntheticWorld) -> String {
        let mut out = format!("final_nll\t{}\n", fmt_metric(self.final_nll));
        out.push_str("entity\tnode_answerable\tnode_total\tedge_answerable\tedge_total\n");
        for (e, na, nt, ea, et) in &self.probes {
            let _ = writeln!(out, "{}\t{na}\t{nt}\t{ea}\t{et}", world.vocab.name(*e));
        }
        out
    }
}

/// Fine-tunes the reference model on the world corpus.
pub fn cmd_train(config: &ExperimentConfig, force: bool) -> Result<(ModelParams, TrainSummary)> {
    let layout = Layout::new(&config.out_dir);
    let world = load_world(config)?;
    config.validate(&world)?;
    guard(&layout.model(), force)?;
    guard(&layout.train_report(), force)?;
    let corpus = world.training_corpus()?;
    let init = init_model(&config.model_config(&world))?;
    let (theta, report) = finetune(&init, &corpus, config.train.epochs, config.train.lr)?;
    let mut probes = Vec::new();
    for e in world.candidate_targets() {
        let full = build_probes(&world, e)?;
        let kept = restrict_to_answerable(&theta, &full)?;
        probes.push((e, kept.node.len(), full.node.len(), kept.edge.len(), full.edge.len()));
    }
    let summary = TrainSummary {
        final_nll: report.final_loss,
        probes,
    };
    write_text(&layout.train_report(), &summary.to_tsv(&world))?;
    if report.final_loss > config.train.max_final_nll {
        let (hit, total) = summary.probes.iter().fold((0, 0), |(h, t), p| (h + p.3, t + p.4));
        return Err(Error::Numerical(format!(
            "memorization did not converge: final NLL {:.4} above {}, edge probes answerable {hit}/{total}",
            report.final_loss, config.train.max_final_nll
        )));
    }
    theta.save(&layout.model())?;
    Ok((theta, summary))
}

pub fn load_reference(config: &ExperimentConfig, world: &SyntheticWorld) -> Result<ModelParams> {
    let path = Layout::new(&config.out_dir).model();
    if !path.exists() {
        return Err(Error::Precondition(format!(
            "{} is missing; run train first",
            path.display()
        )));
    }
    let theta = ModelParams::load(&path)?;
    if theta.config() != &config.model_config(world) {
        return Err(Error::Precondition(format!(
            "{} was trained with a different model config; rerun train with --force",
            path.display()
        )));
    }
    Ok(theta)
}

/// What `run.json` records for one (method, target) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub target: String,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
    pub report: EvalReport,
    pub reference_checksum: String,
}

/// Everything a run produced, for callers that want more than the files.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub theta: ModelParams,
    pub trace: RunTrace,
    pub log: ExtractionLog,
}

/// Runs one method on one target from an already loaded reference model.
pub fn run_method(
    config: &ExperimentConfig,
    world: &SyntheticWorld,
    theta_pre: &ModelParams,
    method: Method,
    target: TokenId,
) -> Result<RunOutcome> {
    let others = config.resolve_others(world, target)?;
    let evaluator = Evaluator::new(world, theta_pre, target, &others)?;
    let ucfg = config.unlearn_config(world, method);
    let name = world.vocab.name(target);
    let (theta, trace, log) = match method {
        Method::OursGa | Method::OursNpo | Method::L1Only | Method::L2Only => {
            let mut rng = stream(config.seed, &format!("extraction/{name}"));
            run_unlearning(theta_pre, world, target, &ucfg, &evaluator, &mut rng)?
        }
        Method::CorpusGa | Method::CorpusNpo => {
            let (theta, trace) = baseline_corpus(theta_pre, world, target, &ucfg, &evaluator)?;
            (theta, trace, ExtractionLog::new())
        }
        Method::Icu => {
            let trace = run_icu(theta_pre, world, &evaluator)?;
            (theta_pre.clone(), trace, ExtractionLog::new())
        }
    };
    let mut report = trace.final_report;
    if !log.is_empty() {
        report.kg_coverage = Some(kg_coverage(&log, theta_pre, world, target)?.value);
        let precision = kg_precision(&log, world);
        report.kg_precision = (!precision.flagged).then_some(precision.value);
    }
    let summary = RunSummary {
        method,
        target: name,
        stop_epoch: trace.stop_epoch,
        stop_reason: trace.stop_reason,
        report,
        reference_checksum: trace.reference_checksum.clone(),
    };
    Ok(RunOutcome {
        summary,
        theta,
        trace,
        log,
    })
}

/// Runs one method on one target and writes its run directory.
pub fn cmd_unlearn(config: &ExperimentConfig, method: Method, target: &str, force: bool) -> Result<RunOutcome> {
    let layout = Layout::new(&config.out_dir);
    let world = load_world(config)?;
    config.validate(&world)?;
    let e = candidate(&world, target)?;
    let dir = layout.run_dir(method, target);
    guard(&dir.join("run.json"), force)?;
    let theta_pre = load_reference(config, &world)?;
    let outcome = run_method(config, &world, &theta_pre, method, e)?;
    ensure_dir(&dir)?;
    outcome.trace.write(&dir.join("trace.tsv"))?;
    write_text(&dir.join("stop.tsv"), &outcome.trace.stop_record())?;
    outcome.summary.report.write(&dir.join("final.tsv"))?;
    if !outcome.log.is_empty() {
        outcome.log.write(&dir.join("extraction.tsv"), &world.vocab)?;
    }
    // The prompt baseline changes no parameters, so it leaves no checkpoint.
    let ckpt = dir.join("model.bin");
    if method == Method::Icu {
        if ckpt.exists() {
            fs::remove_file(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        }
    } else {
        outcome.theta.save(&ckpt)?;
    }
    write_json(&dir.join("run.json"), &outcome.summary)?;
    Ok(outcome)
}

/// Scores a run's final parameters (or the reference model) on one target
/// and runs the regeneration check over the standard prompt suite.
pub fn cmd_eval(
    config: &ExperimentConfig,
    method: Option<Method>,
    target: &str,
    force: bool,
) -> Result<(EvalReport, Vec<Violation>)> {
    let layout = Layout::new(&config.out_dir);
    let world = load_world(config)?;
    let e = candidate(&world, target)?;
    let theta_pre = load_reference(config, &world)?;
    let dir = layout.eval_dir(method, target);
    guard(&dir.join("report.tsv"), force)?;
    let theta = match method {
        None | Some(Method::Icu) => theta_pre.clone(),
        Some(m) => {
            let path = layout.run_dir(m, target).join("model.bin");
            if !path.exists() {
                return Err(Error::Precondition(format!(
                    "{} is missing; run unlearn first",
                    path.display()
                )));
            }
            ModelParams::load(&path)?
        }
    };
    let icu = (method == Some(Method::Icu)).then_some(e);
    let evaluator = Evaluator::new(&world, &theta_pre, e, &config.resolve_others(&world, e)?)?;
    let report = evaluator.report(&theta, icu)?;
    let mut prompts = standard_prompt_suite(&world, e)?;
    if let Some(e) = icu {
        prompts = prompts
            .iter()
            .map(|p| crate::unlearn::baseline_icu(p, e))
            .collect::<Result<_>>()?;
    }
    let violations = cu_check(&theta, &world, e, &prompts, world.max_sequence_len())?;
    ensure_dir(&dir)?;
    report.write(&dir.join("report.tsv"))?;
    write_text(&dir.join("violations.tsv"), &violations_to_tsv(&world, &violations))?;
    Ok((report, violations))
}

/// Header of the aggregate report.
pub fn report_header() -> String {
    format!("method\ttarget\t{}\tstop_epoch", REPORT_COLUMNS.join("\t"))
}

/// Per-run rows sorted by (method, target), one line each.
pub fn report_table(runs: &[RunSummary]) -> String {
    let mut sorted: Vec<&RunSummary> = runs.iter().collect();
    sorted.sort_by(|a, b| (a.method, &a.target).cmp(&(b.method, &b.target)));
    let mut out = report_header();
    out.push('\n');
    for r in sorted {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.method.name(),
            r.target,
            r.report.fields().join("\t"),
            r.stop_epoch
        );
    }
    out
}

/// Per-method means; optional columns average over runs that have them.
pub fn report_means(runs: &[RunSummary]) -> String {
    let mut out = format!("method\tn_runs\t{}\tstop_epoch\n", REPORT_COLUMNS.join("\t"));
    for method in Method::ALL {
        let rows: Vec<&RunSummary> = runs.iter().filter(|r| r.method == method).collect();
        if rows.is_empty() {
            continue;
        }
        let mean = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let cols = [
            mean(&|r| Some(r.report.node_acc)),
            mean(&|r| Some(r.report.edge_acc)),
            mean(&|r| Some(r.report.node_acc_others)),
            mean(&|r| Some(r.report.edge_acc_others)),
            mean(&|r| Some(r.report.general_utility)),
            mean(&|r| r.report.kg_coverage),
            mean(&|r| r.report.kg_precision),
            mean(&|r| Some(r.stop_epoch as f64)),
        ];
        let cols: Vec<String> = cols.into_iter().map(fmt_optional).collect();
        let _ = writeln!(out, "{}\t{}\t{}", method.name(), rows.len(), cols.join("\t"));
    }
    out
}

pub fn read_run(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("run.json");
    if !path.exists() {
        return Err(Error::Precondition(format!("run record {} is missing", path.display())));
    }
    read_json(&path)
}

/// Every run directory under `runs/`, in name order.
pub fn list_runs(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let runs = Layout::new(&config.out_dir).runs();
    if !runs.exists() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&runs)
        .map_err(|e| Error::io(&runs, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(&runs, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Aggregates run directories into `report.tsv` and `report_means.tsv`.
pub fn cmd_report(config: &ExperimentConfig, run_dirs: &[PathBuf], force: bool) -> Result<Vec<RunSummary>> {
    let layout = Layout::new(&config.out_dir);
    let dirs = if run_dirs.is_empty() {
        list_runs(config)?
    } else {
        run_dirs.to_vec()
    };
    if dirs.is_empty() {
        return Err(Error::Precondition("no completed runs to report".into()));
    }
    guard(&layout.report(), force)?;
    guard(&layout.report_means(), force)?;
    let runs = dirs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>>>()?;
    ensure_dir(&layout.root)?;
    write_text(&layout.report(), &report_table(&runs))?;
    write_text(&layout.report_means(), &report_means(&runs))?;
    Ok(runs)
}

#[derive(Debug, Parser)]
#[command(
    name = "cu-lab",
    version,
    about = "Concept unlearning on a synthetic knowledge world"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the world and its dataset file.
    GenWorld(#[command(flatten)] Common),
    /// Train the reference model to memorize the world.
    Train(#[command(flatten)] Common),
    /// Unlearn targets; every configured method and target by default.
    Unlearn {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        target: Option<String>,
    },
    /// Score a run (or the reference model) and check for regenerated facts.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        target: Option<String>,
    },
    /// Aggregate run directories into report tables.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories; all under the output directory when omitted.
        runs: Vec<PathBuf>,
    },
}

impl Common {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(p) => load_config(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(o) = &self.out {
            config.out_dir = o.clone();
        }
        Ok(config)
    }
}

fn target_names(config: &ExperimentConfig, target: &Option<String>) -> Result<Vec<String>> {
    match target {
        Some(t) => Ok(vec![t.clone()]),
        None => {
            let world = load_world(config)?;
            Ok(config
                .resolve_targets(&world)?
                .into_iter()
                .map(|e| world.vocab.name(e))
                .collect())
        }
    }
}

/// Executes a parsed command line, printing a short summary per step.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenWorld(common) => {
            let config = common.resolve()?;
            let world = cmd_gen_world(&config, common.force)?;
            println!(
                "world: {} entities, {} facts, {} templates -> {}",
                world.vocab.n_entities(),
                world.n_facts(),
                world.templates.len(),
                config.out_dir.display()
            );
        }
        Command::Train(common) => {
            let config = common.resolve()?;
            let (_, summary) = cmd_train(&config, common.force)?;
            println!("trained: final NLL {}", fmt_metric(summary.final_nll));
        }
        Command::Unlearn { common, method, target } => {
            let config = common.resolve()?;
            let methods = method.map_or_else(|| config.methods.clone(), |m| vec![m]);
            for t in target_names(&config, &target)? {
                for &m in &methods {
                    let out = cmd_unlearn(&config, m, &t, common.force)?;
                    let r = &out.summary.report;
                    println!(
                        "{} {t}: stop {} node {} edge {} edge_others {} utility {}",
                        m.name(),
                        out.summary.stop_epoch,
                        fmt_metric(r.node_acc),
                        fmt_metric(r.edge_acc),
                        fmt_metric(r.edge_acc_others),
                        fmt_metric(r.general_utility)
                    );
                }
            }
        }
        Command::Eval { common, method, target } => {
            let config = common.resolve()?;
            for t in target_names(&config, &target)? {
                let (r, violations) = cmd_eval(&config, method, &t, common.force)?;
                println!(
                    "{} {t}: node {} edge {} violations {}",
                    method.map_or("reference", Method::name),
                    fmt_metric(r.node_acc),
                    fmt_metric(r.edge_acc),
                    violations.len()
                );
            }
        }
        Command::Report { common, runs } => {
            let config = common.resolve()?;
            let rows = cmd_report(&config, &runs, common.force)?;
            println!(
                "report: {} runs -> {}",
                rows.len(),
                Layout::new(&config.out_dir).report().display()
            );
        }
    }
    Ok(())
}
