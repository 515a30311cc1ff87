//! Staged, resumable experiment orchestration.
//!
//! A run executes `split → pretrain → train-head → continual → eval`, writing
//! a checkpoint artifact after each stage into the run's output directory.
//! Every stage's randomness derives from the single run seed through fixed
//! labels, so any stage is individually reproducible and a resumed run
//! produces the same numbers as an uninterrupted one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::contrastive::{pretrain, ContrastiveModel, PretrainConfig};
use crate::continual::{
    build_replay_from_pools, compute_fisher, continual_train, AnchorState, ContinualConfig,
    FisherConfig, ReplaySets,
};
use crate::data::{load_csv, Dataset, KindHint, NormKind, SchemaHint, Targets, TaskHint};
use crate::error::{Error, Result};
use crate::oodsplit::{
    read_manifest, split_dataset, write_manifest, ActivationSource, DetectorKind, OodSplit,
    ProxyConfig, SplitConfig,
};
use crate::predictor::{
    evaluate, predict, train_head, EvalResult, Head, HeadConfig, ModelTag, SplitSide,
};
use crate::report::{
    render_summary, FailureRecord, FisherSummary, ReplaySummary, RunReport, SplitSummary,
    StageRecord, StageStatus, REPORT_SCHEMA_VERSION,
};
use crate::{data, io, seed};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Split,
    Pretrain,
    Head,
    Continual,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Split, Stage::Pretrain, Stage::Head, Stage::Continual, Stage::Eval];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::Pretrain => "pretrain",
            Stage::Head => "train-head",
            Stage::Continual => "continual",
            Stage::Eval => "eval",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split" => Ok(Stage::Split),
            "pretrain" => Ok(Stage::Pretrain),
            "train-head" | "head" => Ok(Stage::Head),
            "continual" => Ok(Stage::Continual),
            "eval" => Ok(Stage::Eval),
            other => Err(Error::Config(format!("unknown stage `{other}`"))),
        }
    }
}

// ───────────────────────── configuration ─────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSection,
    pub split: SplitSection,
    pub pretrain: PretrainSection,
    pub continual: ContinualSection,
    pub head: HeadSection,
    pub baseline: BaselineSection,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSection::default(),
            split: SplitSection::default(),
            pretrain: PretrainSection::default(),
            continual: ContinualSection::default(),
            head: HeadSection::default(),
            baseline: BaselineSection::default(),
            seed: 0,
            out_dir: PathBuf::from("tabshift-out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub path: PathBuf,
    /// Target column name.
    pub target: String,
    pub task: Option<TaskHint>,
    /// Per-row normalization applied right after loading.
    pub norm: Option<NormKind>,
    /// Per-column kind overrides.
    pub columns: BTreeMap<String, KindHint>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: PathBuf::new(),
            target: String::new(),
            task: None,
            norm: None,
            columns: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub detector: DetectorKind,
    pub tail_size: usize,
    pub alpha: usize,
    pub epsilon: f64,
    pub delta_percentile: f64,
    pub source: ActivationSource,
    pub proxy_hidden: Vec<usize>,
    pub proxy_epochs: usize,
    pub proxy_batch_size: usize,
    pub proxy_lr: f64,
    pub val_fraction: f64,
    pub quantile_bins: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        let proxy = ProxyConfig::default();
        SplitSection {
            detector: DetectorKind::OpenMax,
            tail_size: 20,
            alpha: 3,
            epsilon: 0.0,
            delta_percentile: 5.0,
            source: ActivationSource::Logits,
            proxy_hidden: proxy.hidden,
            proxy_epochs: proxy.epochs,
            proxy_batch_size: proxy.batch_size,
            proxy_lr: proxy.lr,
            val_fraction: proxy.val_fraction,
            quantile_bins: proxy.quantile_bins,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainSection {
    pub hidden: usize,
    pub latent: usize,
    pub projection: usize,
    pub temperature: f64,
    pub corruption_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub reconstruction: bool,
    pub recon_weight: f64,
    /// Fraction of the in-distribution rows held out for evaluation.
    pub holdout_fraction: f64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let cfg = PretrainConfig::default();
        PretrainSection {
            hidden: cfg.hidden,
            latent: cfg.latent,
            projection: cfg.projection,
            temperature: cfg.temperature,
            corruption_rate: cfg.corruption_rate,
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
            lr: cfg.lr,
            reconstruction: cfg.reconstruction,
            recon_weight: cfg.recon_weight,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinualSection {
    pub lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Defaults to the pretraining corruption rate.
    pub corruption_rate: Option<f64>,
    pub fisher_batch_size: usize,
    pub fisher_max_samples: usize,
    /// `|S_in| = min(pool, replay_in_factor · |S_ood|)`.
    pub replay_in_factor: f64,
    /// OOD replay rows; defaults to the whole detected pool.
    pub ood_replay_size: Option<usize>,
}

impl Default for ContinualSection {
    fn default() -> Self {
        let cfg = ContinualConfig::default();
        ContinualSection {
            lambda: cfg.lambda,
            gamma: cfg.gamma,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            corruption_rate: None,
            fisher_batch_size: 64,
            fisher_max_samples: 2000,
            replay_in_factor: 4.0,
            ood_replay_size: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for HeadSection {
    fn default() -> Self {
        let cfg = HeadConfig::default();
        HeadSection {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSection {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            hidden: vec![256, 128],
            epochs: 100,
            batch_size: 256,
            lr: 1e-3,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        let cfg: RunConfig = toml::from_str(&text)?;
        Ok(cfg)
    }

    /// Checks referenced files and value ranges before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.data.path.as_os_str().is_empty() {
            return Err(Error::Config("data.path is required".into()));
        }
        if !self.data.path.exists() {
            return Err(Error::Config(format!(
                "data file `{}` does not exist",
                self.data.path.display()
            )));
        }
        if self.data.target.is_empty() {
            return Err(Error::Config("data.target is required".into()));
        }
        if !(0.0..1.0).contains(&self.pretrain.holdout_fraction) || self.pretrain.holdout_fraction <= 0.0 {
            return Err(Error::Config("pretrain.holdout_fraction must lie in (0, 1)".into()));
        }
        if self.continual.lambda < 0.0 || self.continual.gamma < 0.0 {
            return Err(Error::Config("continual.lambda and continual.gamma must be nonnegative".into()));
        }
        if self.continual.replay_in_factor < 0.0 {
            return Err(Error::Config("continual.replay_in_factor must be nonnegative".into()));
        }
        Ok(())
    }

    fn schema_hint(&self) -> SchemaHint {
        SchemaHint {
            target: self.data.target.clone(),
            task: self.data.task,
            overrides: self.data.columns.clone(),
        }
    }

    fn split_config(&self) -> SplitConfig {
        SplitConfig {
            detector: self.split.detector,
            proxy: ProxyConfig {
                hidden: self.split.proxy_hidden.clone(),
                epochs: self.split.proxy_epochs,
                batch_size: self.split.proxy_batch_size,
                lr: self.split.proxy_lr,
                val_fraction: self.split.val_fraction,
                quantile_bins: self.split.quantile_bins,
            },
            tail_size: self.split.tail_size,
            alpha: self.split.alpha,
            epsilon: self.split.epsilon,
            delta_percentile: self.split.delta_percentile,
            source: self.split.source,
            seed: seed::derive(self.seed, "split"),
        }
    }

    fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            hidden: self.pretrain.hidden,
            latent: self.pretrain.latent,
            projection: self.pretrain.projection,
            temperature: self.pretrain.temperature,
            corruption_rate: self.pretrain.corruption_rate,
            batch_size: self.pretrain.batch_size,
            epochs: self.pretrain.epochs,
            lr: self.pretrain.lr,
            reconstruction: self.pretrain.reconstruction,
            recon_weight: self.pretrain.recon_weight,
            seed: seed::derive(self.seed, "pretrain"),
        }
    }

    fn head_config(&self, label: &str) -> HeadConfig {
        HeadConfig {
            hidden: Vec::new(),
            epochs: self.head.epochs,
            batch_size: self.head.batch_size,
            lr: self.head.lr,
            seed: seed::derive(self.seed, label),
        }
    }

    fn baseline_config(&self) -> HeadConfig {
        HeadConfig {
            hidden: self.baseline.hidden.clone(),
            epochs: self.baseline.epochs,
            batch_size: self.baseline.batch_size,
            lr: self.baseline.lr,
            seed: seed::derive(self.seed, "baseline"),
        }
    }

    fn continual_config(&self) -> ContinualConfig {
        ContinualConfig {
            lambda: self.continual.lambda,
            gamma: self.continual.gamma,
            epochs: self.continual.epochs,
            batch_size: self.continual.batch_size,
            lr: self.continual.lr,
            corruption_rate: self
                .continual
                .corruption_rate
                .unwrap_or(self.pretrain.corruption_rate),
            recon_weight: self.pretrain.recon_weight,
            seed: seed::derive(self.seed, "continual"),
        }
    }

    fn fisher_config(&self) -> FisherConfig {
        FisherConfig {
            batch_size: self.continual.fisher_batch_size,
            max_samples: self.continual.fisher_max_samples,
            corruption_rate: None,
            recon_weight: self.pretrain.recon_weight,
            seed: seed::derive(self.seed, "fisher"),
        }
    }
}

// ───────────────────────── artifacts ─────────────────────────

struct Paths {
    out: PathBuf,
}

impl Paths {
    fn split_manifest(&self) -> PathBuf {
        self.out.join("split.manifest")
    }
    fn model_a(&self) -> PathBuf {
        self.out.join("model_a.json")
    }
    fn trace_a(&self) -> PathBuf {
        self.out.join("trace_a.json")
    }
    fn head_a(&self) -> PathBuf {
        self.out.join("head_a.json")
    }
    fn baseline(&self) -> PathBuf {
        self.out.join("baseline.json")
    }
    fn anchor(&self) -> PathBuf {
        self.out.join("anchor.json")
    }
    fn replay_manifest(&self) -> PathBuf {
        self.out.join("replay.manifest")
    }
    fn model_b(&self) -> PathBuf {
        self.out.join("model_b.json")
    }
    fn trace_b(&self) -> PathBuf {
        self.out.join("trace_b.json")
    }
    fn head_b(&self) -> PathBuf {
        self.out.join("head_b.json")
    }
    fn evals(&self) -> PathBuf {
        self.out.join("evals.json")
    }
    fn report(&self) -> PathBuf {
        self.out.join("report.json")
    }
    fn summary(&self) -> PathBuf {
        self.out.join("summary.txt")
    }

    fn for_stage(&self, stage: Stage) -> Vec<PathBuf> {
        match stage {
            Stage::Split => vec![self.split_manifest()],
            Stage::Pretrain => vec![self.model_a(), self.trace_a()],
            Stage::Head => vec![self.head_a(), self.baseline()],
            Stage::Continual => vec![
                self.anchor(),
                self.replay_manifest(),
                self.model_b(),
                self.trace_b(),
                self.head_b(),
            ],
            Stage::Eval => vec![self.evals()],
        }
    }
}

/// Replay manifest in the same line-oriented index format as split
/// manifests.
fn write_replay_manifest(replay: &ReplaySets, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from("tabshift-replay-manifest v1\n");
    text.push_str(&format!("seed {}\n", replay.seed));
    text.push_str(&format!("n_in {}\n", replay.in_rows.len()));
    text.push_str(&format!("n_ood {}\n", replay.ood_rows.len()));
    text.push_str("[in]\n");
    for i in &replay.in_rows {
        text.push_str(&format!("{i}\n"));
    }
    text.push_str("[ood]\n");
    for i in &replay.ood_rows {
        text.push_str(&format!("{i}\n"));
    }
    io::save_text(path, &text)
}

fn read_replay_manifest(path: impl AsRef<Path>) -> Result<ReplaySets> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    if lines.next() != Some("tabshift-replay-manifest v1") {
        return Err(Error::Data("not a replay manifest".into()));
    }
    let mut replay = ReplaySets {
        in_rows: Vec::new(),
        ood_rows: Vec::new(),
        seed: 0,
    };
    let mut section: Option<bool> = None;
    for line in lines {
        match line {
            "[in]" => section = Some(true),
            "[ood]" => section = Some(false),
            _ => match section {
                Some(is_in) => {
                    let idx: usize = line
                        .parse()
                        .map_err(|_| Error::Data(format!("bad replay index `{line}`")))?;
                    if is_in {
                        replay.in_rows.push(idx);
                    } else {
                        replay.ood_rows.push(idx);
                    }
                }
                None => {
                    if let Some(("seed", v)) = line.split_once(' ') {
                        replay.seed = v
                            .parse()
                            .map_err(|_| Error::Data(format!("bad replay seed `{v}`")))?;
                    }
                }
            },
        }
    }
    Ok(replay)
}

// ───────────────────────── pipeline ─────────────────────────

/// In-memory state of a staged run.
pub struct Pipeline {
    cfg: RunConfig,
    paths: Paths,
    ds: Dataset,
    statuses: BTreeMap<&'static str, StageStatus>,
    split: Option<OodSplit>,
    model_a: Option<ContrastiveModel>,
    trace_a: Option<Vec<f64>>,
    head_a: Option<Head>,
    baseline: Option<Head>,
    anchor: Option<AnchorState>,
    replay: Option<ReplaySets>,
    model_b: Option<ContrastiveModel>,
    trace_b: Option<Vec<f64>>,
    head_b: Option<Head>,
    evals: Option<Vec<EvalResult>>,
}

impl Pipeline {
    /// Validates the config and loads + preprocesses the dataset.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let raw = load_csv(&cfg.data.path, &cfg.schema_hint())?;
        let ds = match cfg.data.norm {
            Some(kind) => raw.normalize(kind)?,
            None => raw,
        };
        if ds.n() == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        std::fs::create_dir_all(&cfg.out_dir)?;
        let paths = Paths {
            out: cfg.out_dir.clone(),
        };
        let statuses = Stage::ALL
            .iter()
            .map(|s| (s.name(), StageStatus::NotRun))
            .collect();
        Ok(Pipeline {
            cfg,
            paths,
            ds,
            statuses,
            split: None,
            model_a: None,
            trace_a: None,
            head_a: None,
            baseline: None,
            anchor: None,
            replay: None,
            model_b: None,
            trace_b: None,
            head_b: None,
            evals: None,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    /// Runs stages in order through `upto`. With `resume`, stages whose
    /// artifacts already exist are loaded instead of re-executed.
    ///
    /// The report is written (atomically) whether the run succeeds or fails;
    /// a failed stage is recorded and the error returned.
    pub fn run(&mut self, upto: Stage, resume: bool) -> Result<RunReport> {
        for stage in Stage::ALL {
            if stage > upto {
                break;
            }
            if resume && self.artifacts_exist(stage) {
                self.load_stage(stage)?;
                self.statuses.insert(stage.name(), StageStatus::Resumed);
                continue;
            }
            let start = Instant::now();
            match self.exec(stage) {
                Ok(()) => {
                    self.statuses.insert(
                        stage.name(),
                        StageStatus::Completed {
                            wall_secs: start.elapsed().as_secs_f64(),
                        },
                    );
                }
                Err(e) => {
                    let message = e.to_string();
                    self.statuses.insert(stage.name(), StageStatus::Failed { message: message.clone() });
                    let report = self.assemble_report(Some(FailureRecord {
                        stage: stage.name().into(),
                        message,
                    }));
                    self.write_report(&report)?;
                    return Err(e.in_stage(stage.name()));
                }
            }
        }
        let report = self.assemble_report(None);
        self.write_report(&report)?;
        Ok(report)
    }

    /// Runs exactly one stage, loading its prerequisites from disk.
    pub fn run_single(&mut self, stage: Stage) -> Result<RunReport> {
        for prereq in Stage::ALL {
            if prereq >= stage {
                break;
            }
            if !self.artifacts_exist(prereq) {
                return Err(Error::Precondition(format!(
                    "stage `{}` needs `{}` artifacts in {}; run that stage first",
                    stage.name(),
                    prereq.name(),
                    self.paths.out.display()
                )));
            }
            self.load_stage(prereq)?;
            self.statuses.insert(prereq.name(), StageStatus::Resumed);
        }
        let start = Instant::now();
        match self.exec(stage) {
            Ok(()) => {
                self.statuses.insert(
                    stage.name(),
                    StageStatus::Completed {
                        wall_secs: start.elapsed().as_secs_f64(),
                    },
                );
                let report = self.assemble_report(None);
                self.write_report(&report)?;
                Ok(report)
            }
            Err(e) => {
                let message = e.to_string();
                self.statuses.insert(stage.name(), StageStatus::Failed { message: message.clone() });
                let report = self.assemble_report(Some(FailureRecord {
                    stage: stage.name().into(),
                    message,
                }));
                self.write_report(&report)?;
                Err(e.in_stage(stage.name()))
            }
        }
    }

    fn artifacts_exist(&self, stage: Stage) -> bool {
        self.paths.for_stage(stage).iter().all(|p| p.exists())
    }

    fn load_stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Split => {
                let (split, _) = read_manifest(self.paths.split_manifest())?;
                if split.n() != self.ds.n() {
                    return Err(Error::Precondition(format!(
                        "split manifest covers {} rows but the dataset has {}",
                        split.n(),
                        self.ds.n()
                    )));
                }
                self.split = Some(split);
            }
            Stage::Pretrain => {
                self.model_a = Some(ContrastiveModel::load_checked(self.paths.model_a(), &self.ds)?);
                self.trace_a = Some(io::load_json(self.paths.trace_a())?);
            }
            Stage::Head => {
                self.head_a = Some(Head::load(self.paths.head_a())?);
                self.baseline = Some(Head::load(self.paths.baseline())?);
            }
            Stage::Continual => {
                self.anchor = Some(AnchorState::load(self.paths.anchor())?);
                self.replay = Some(read_replay_manifest(self.paths.replay_manifest())?);
                self.model_b = Some(ContrastiveModel::load_checked(self.paths.model_b(), &self.ds)?);
                self.trace_b = Some(io::load_json(self.paths.trace_b())?);
                self.head_b = Some(Head::load(self.paths.head_b())?);
            }
            Stage::Eval => {
                self.evals = Some(io::load_json(self.paths.evals())?);
            }
        }
        Ok(())
    }

    fn exec(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Split => self.exec_split(),
            Stage::Pretrain => self.exec_pretrain(),
            Stage::Head => self.exec_head(),
            Stage::Continual => self.exec_continual(),
            Stage::Eval => self.exec_eval(),
        }
    }

    /// In-distribution rows split into (train, holdout); a pure function of
    /// the run seed and the detector split, so every stage recomputes it
    /// identically.
    fn in_partition(&self, split: &OodSplit) -> (Vec<usize>, Vec<usize>) {
        let mut rng = seed::rng(self.cfg.seed, "holdout");
        let (train_pos, hold_pos) =
            data::split_indices(split.in_indices.len(), self.cfg.pretrain.holdout_fraction, &mut rng);
        let train = train_pos.iter().map(|&p| split.in_indices[p]).collect();
        let hold = hold_pos.iter().map(|&p| split.in_indices[p]).collect();
        (train, hold)
    }

    fn require<'a, T>(field: &'a Option<T>, what: &str) -> Result<&'a T> {
        field
            .as_ref()
            .ok_or_else(|| Error::Precondition(format!("{what} not available; run earlier stages")))
    }

    fn targets_for(&self, rows: &[usize]) -> Targets {
        match self.ds.targets() {
            Targets::Classes(l) => Targets::Classes(rows.iter().map(|&i| l[i]).collect()),
            Targets::Values(v) => Targets::Values(rows.iter().map(|&i| v[i]).collect()),
        }
    }

    fn exec_split(&mut self) -> Result<()> {
        log::info!("split: detector {:?} over {} rows", self.cfg.split.detector, self.ds.n());
        let split_cfg = self.cfg.split_config();
        let split = split_dataset(&self.ds, &split_cfg)?;
        let echo = vec![
            ("tail_size".to_string(), split_cfg.tail_size.to_string()),
            ("alpha".to_string(), split_cfg.alpha.to_string()),
            ("epsilon".to_string(), split_cfg.epsilon.to_string()),
            ("delta_percentile".to_string(), split_cfg.delta_percentile.to_string()),
            ("seed".to_string(), split_cfg.seed.to_string()),
        ];
        write_manifest(&split, &echo, self.paths.split_manifest())?;
        self.split = Some(split);
        Ok(())
    }

    fn exec_pretrain(&mut self) -> Result<()> {
        let split = Self::require(&self.split, "split")?;
        let (in_train, _) = self.in_partition(split);
        let train_ds = self.ds.take(&in_train)?;
        log::info!("pretrain: {} rows, {} epochs", train_ds.n(), self.cfg.pretrain.epochs);
        let cfg = self.cfg.pretrain_config();
        let mut model = ContrastiveModel::init(self.ds.dim(), &cfg)?;
        let trace = pretrain(&mut model, &train_ds, &cfg)?;
        model.save(self.paths.model_a(), &self.ds)?;
        io::save_json(self.paths.trace_a(), &trace)?;
        self.model_a = Some(model);
        self.trace_a = Some(trace);
        Ok(())
    }

    fn exec_head(&mut self) -> Result<()> {
        let split = Self::require(&self.split, "split")?;
        let model_a = Self::require(&self.model_a, "pretrained model")?;
        let (in_train, _) = self.in_partition(split);
        let features = self.ds.features().select(Axis(0), &in_train);
        let targets = self.targets_for(&in_train);
        log::info!("train-head: probe + baseline on {} rows", in_train.len());

        let reps = model_a.encode(&features)?;
        let head_a = train_head(&reps.view(), &targets, self.ds.task(), &self.cfg.head_config("head-a"))?;
        head_a.save(self.paths.head_a())?;

        let baseline = train_head(&features.view(), &targets, self.ds.task(), &self.cfg.baseline_config())?;
        baseline.save(self.paths.baseline())?;

        self.head_a = Some(head_a);
        self.baseline = Some(baseline);
        Ok(())
    }

    fn exec_continual(&mut self) -> Result<()> {
        let split = Self::require(&self.split, "split")?.clone();
        let model_a = Self::require(&self.model_a, "pretrained model")?.clone();
        let (in_train, _) = self.in_partition(&split);

        let ood_size = match self.cfg.continual.ood_replay_size {
            Some(requested) => requested,
            None => split.ood_indices.len(),
        };
        let in_size = ((self.cfg.continual.replay_in_factor * ood_size as f64).ceil() as usize)
            .min(in_train.len());
        let replay = build_replay_from_pools(
            &in_train,
            &split.ood_indices,
            in_size,
            ood_size,
            seed::derive(self.cfg.seed, "replay"),
        )?;
        write_replay_manifest(&replay, self.paths.replay_manifest())?;
        log::info!(
            "continual: replay {} in / {} ood, lambda {} gamma {}",
            replay.in_rows.len(),
            replay.ood_rows.len(),
            self.cfg.continual.lambda,
            self.cfg.continual.gamma
        );

        let fisher_ds = self.ds.take(&replay.in_rows)?;
        let fisher = compute_fisher(&model_a, &fisher_ds, &self.cfg.fisher_config())?;
        let anchor = AnchorState::new(
            model_a.clone(),
            fisher,
            self.cfg.continual.lambda,
            self.cfg.continual.gamma,
        )?;
        anchor.save(self.paths.anchor())?;

        let (model_b, trace_b) =
            continual_train(&model_a, &anchor, &replay, &self.ds, &self.cfg.continual_config())?;
        model_b.save(self.paths.model_b(), &self.ds)?;
        io::save_json(self.paths.trace_b(), &trace_b)?;

        // The probe for the adapted model retrains on the in-distribution
        // replay rows under the new encoder.
        let s_in_features = self.ds.features().select(Axis(0), &replay.in_rows);
        let s_in_targets = self.targets_for(&replay.in_rows);
        let reps_b = model_b.encode(&s_in_features)?;
        let head_b = train_head(&reps_b.view(), &s_in_targets, self.ds.task(), &self.cfg.head_config("head-b"))?;
        head_b.save(self.paths.head_b())?;

        self.anchor = Some(anchor);
        self.replay = Some(replay);
        self.model_b = Some(model_b);
        self.trace_b = Some(trace_b);
        self.head_b = Some(head_b);
        Ok(())
    }

    fn exec_eval(&mut self) -> Result<()> {
        let split = Self::require(&self.split, "split")?;
        let model_a = Self::require(&self.model_a, "pretrained model")?;
        let head_a = Self::require(&self.head_a, "probe head")?;
        let baseline = Self::require(&self.baseline, "baseline")?;
        let model_b = Self::require(&self.model_b, "adapted model")?;
        let head_b = Self::require(&self.head_b, "adapted head")?;
        let (_, in_holdout) = self.in_partition(split);
        log::info!(
            "eval: {} holdout rows, {} ood rows",
            in_holdout.len(),
            split.ood_indices.len()
        );

        let task = self.ds.task();
        let mut evals = Vec::with_capacity(6);
        for (rows, side) in [(&in_holdout, SplitSide::InHoldout), (&split.ood_indices, SplitSide::Ood)] {
            let features = self.ds.features().select(Axis(0), rows);
            let targets = self.targets_for(rows);

            let preds = predict(baseline, &features.view())?;
            evals.push(evaluate(&preds, &targets, task, side, ModelTag::BaselineMlp)?);

            let reps_a = model_a.encode(&features)?;
            let preds = predict(head_a, &reps_a.view())?;
            evals.push(evaluate(&preds, &targets, task, side, ModelTag::Pretrained)?);

            let reps_b = model_b.encode(&features)?;
            let preds = predict(head_b, &reps_b.view())?;
            evals.push(evaluate(&preds, &targets, task, side, ModelTag::Adapted)?);
        }
        io::save_json(self.paths.evals(), &evals)?;
        self.evals = Some(evals);
        Ok(())
    }

    fn assemble_report(&self, failure: Option<FailureRecord>) -> RunReport {
        let split = self.split.as_ref().map(|s| SplitSummary {
            detector: s.detector,
            threshold: s.threshold,
            n_in: s.in_indices.len(),
            n_ood: s.ood_indices.len(),
        });
        let fisher = self.anchor.as_ref().map(|a| FisherSummary {
            min: a.fisher.min(),
            mean: a.fisher.mean(),
            max: a.fisher.max(),
            parameters: a.fisher.len(),
        });
        let replay = self.replay.as_ref().map(|r| ReplaySummary {
            n_in: r.in_rows.len(),
            n_ood: r.ood_rows.len(),
        });
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            stages: Stage::ALL
                .iter()
                .map(|s| StageRecord {
                    stage: s.name().into(),
                    status: self.statuses[s.name()].clone(),
                })
                .collect(),
            split,
            pretrain_trace: self.trace_a.clone(),
            continual_trace: self.trace_b.clone(),
            fisher,
            replay,
            evals: self.evals.clone().unwrap_or_default(),
            failure,
        }
    }

    fn write_report(&self, report: &RunReport) -> Result<()> {
        report.save(self.paths.report())?;
        io::save_text(self.paths.summary(), &render_summary(report))
    }
}

/// Loads the config, runs every stage, and returns the report.
pub fn run_pipeline(cfg: RunConfig, resume: bool) -> Result<RunReport> {
    Pipeline::new(cfg)?.run(Stage::Eval, resume)
}
