//! Run configuration, run directories and the command implementations
//! behind the CLI: data generation, training, evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{evaluate, MeanStd, RbslAgent, RunMetrics};
use crate::approx::Checkpoint;
use crate::data::{self, Dataset, DatasetStats, ExpertPlanner, DEFAULT_GAMMA};
use crate::env::{EnvConfig, Variant};
use crate::error::{Error, Result};
use crate::features::Actor;
use crate::goal::{train_goal_policy, GoalEpochMetrics, GoalTrainConfig};
use crate::recovery::{train_recovery, RecoveryEpochMetrics, RecoveryTrainConfig};
use crate::rng::derive_seed;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GOAL_METRICS_FILE: &str = "goal_metrics.csv";
pub const RECOVERY_METRICS_FILE: &str = "recovery_metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Names of the final network checkpoints inside a run directory.
pub const GOAL_POLICY: &str = "goal_policy";
pub const GOAL_Q: &str = "goal_q";
pub const RECOVERY_POLICY: &str = "recovery_policy";
pub const RECOVERY_Q: &str = "recovery_q";
pub const COST_Q: &str = "cost_q";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Expert (or pre-mixed) dataset.
    pub expert: Option<PathBuf>,
    /// Random dataset; when present the two files are mixed.
    pub random: Option<PathBuf>,
    pub expert_fraction: f64,
    /// Trajectories in the mixture; defaults to the smaller input size.
    pub total_trajectories: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            expert: None,
            random: None,
            expert_fraction: 0.5,
            total_trajectories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Episodes evaluated after every training epoch; 0 disables.
    pub epoch_episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 100,
            seeds: (0..5).collect(),
            epoch_episodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed; it replaces the trainer seeds and seeds the mixture shuffle.
    pub seed: u64,
    /// Expected environment; must match the dataset header when given.
    pub env: Option<EnvConfig>,
    pub data: DataConfig,
    pub goal: GoalTrainConfig,
    pub recovery: RecoveryTrainConfig,
    pub eval: EvalConfig,
    pub output_dir: Option<PathBuf>,
    /// Network checkpoints are written every this many epochs (0 disables).
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            env: None,
            data: DataConfig::default(),
            goal: GoalTrainConfig::default(),
            recovery: RecoveryTrainConfig::default(),
            eval: EvalConfig::default(),
            output_dir: None,
            checkpoint_every: 10,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.inner().line(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let cfg = Self::from_json(&read_text(path)?, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Numeric ranges of every section, plus existence of referenced files.
    pub fn validate(&self) -> Result<()> {
        if let Some(env) = &self.env {
            env.validate()?;
        }
        self.goal.validate()?;
        self.recovery.validate()?;
        if !(0.0..=1.0).contains(&self.data.expert_fraction) {
            return Err(Error::Config(format!("data.expert_fraction must be in [0,1], got {}", self.data.expert_fraction)));
        }
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be >= 1".into()));
        }
        for p in self.data.expert.iter().chain(&self.data.random) {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactVersions {
    pub rbsl: String,
    pub dataset_format: u32,
}

impl Default for ArtifactVersions {
    fn default() -> Self {
        ArtifactVersions {
            rbsl: env!("CARGO_PKG_VERSION").to_string(),
            dataset_format: data::FORMAT_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub full: DatasetStats,
    pub expert_filtered_trajectories: usize,
    pub recovery_trajectories: usize,
}

/// Written once before training starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub seed: u64,
    pub env: EnvConfig,
    pub versions: ArtifactVersions,
    pub ablation: Option<String>,
    pub recovery_trained: bool,
    pub switching: bool,
    /// Final checkpoint files, relative to the run directory.
    pub checkpoints: BTreeMap<String, PathBuf>,
    pub datasets: DatasetSummary,
}

impl RunManifest {
    pub fn load(run_dir: impl AsRef<Path>) -> Result<Self> {
        let path = run_dir.as_ref().join(MANIFEST_FILE);
        let text = read_text(&path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.inner().line(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOptions {
    pub data: Option<PathBuf>,
    pub data_random: Option<PathBuf>,
    pub expert_fraction: Option<f64>,
    pub out: PathBuf,
    pub wgcsl_only: bool,
}

/// Goal-policy training set: either a single dataset file or the mixture of
/// an expert and a random file.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let expert_path = cfg
        .data
        .expert
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given (--data or data.expert)".into()))?;
    let expert = data::load(expert_path)?;
    let dataset = match &cfg.data.random {
        None => expert,
        Some(random_path) => {
            let random = data::load(random_path)?;
            let total = cfg.data.total_trajectories.unwrap_or(expert.len().min(random.len()));
            data::mix(&expert, &random, cfg.data.expert_fraction, total, derive_seed(cfg.seed, 0x313))?
        }
    };
    if let Some(env) = &cfg.env {
        if *env != dataset.env_config {
            return Err(Error::Config("config env differs from the dataset's env_config".into()));
        }
    }
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    Ok(dataset)
}

/// Config with command-line overrides and the run seed applied.
pub fn resolve_config(cfg: &RunConfig, opts: &TrainOptions) -> Result<RunConfig> {
    let mut cfg = cfg.clone();
    if let Some(p) = &opts.data {
        cfg.data.expert = Some(p.clone());
    }
    if let Some(p) = &opts.data_random {
        cfg.data.random = Some(p.clone());
    }
    if let Some(f) = opts.expert_fraction {
        cfg.data.expert_fraction = f;
    }
    cfg.output_dir = Some(opts.out.clone());
    cfg.goal.seed = cfg.seed;
    cfg.recovery.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn checkpoint_file(name: &str, epoch: Option<usize>) -> PathBuf {
    match epoch {
        None => PathBuf::from(format!("{name}.json")),
        Some(e) => Path::new(CHECKPOINT_DIR).join(format!("{name}_e{e:04}.json")),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.display().to_string(),
        line,
        field: String::new(),
        message: e.to_string(),
    }
}

fn epoch_eval(agent: &RbslAgent, env: &EnvConfig, cfg: &RunConfig, epoch: usize) -> Result<Option<RunMetrics>> {
    if cfg.eval.epoch_episodes == 0 {
        return Ok(None);
    }
    let seed = derive_seed(cfg.seed, 0xE7A1);
    let (m, _) = evaluate(agent, env, cfg.eval.epoch_episodes, seed, cfg.goal.gamma)?;
    log::debug!("epoch {epoch}: success {:.3} cost {:.3}", m.success_rate, m.cost_return);
    Ok(Some(m))
}

/// Output of [`train_run`], for callers that keep going in-process.
pub struct TrainedRun {
    pub manifest: RunManifest,
    pub agent: RbslAgent,
    pub goal_metrics: Vec<GoalEpochMetrics>,
    pub recovery_metrics: Vec<RecoveryEpochMetrics>,
}

/// Full training pipeline: mixture, filters, goal policy, then (unless the
/// ablation is requested or the recovery set is empty) the recovery side.
pub fn train_run(cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainedRun> {
    let cfg = resolve_config(cfg, opts)?;
    let dataset = prepare_dataset(&cfg)?;
    let gamma = cfg.goal.gamma;
    let d_e = data::filter_expert(&dataset, gamma);
    let d_rec = data::filter_recovery(&d_e, gamma);
    let env = dataset.env_config.clone();
    let out = &opts.out;
    fs::create_dir_all(out.join(CHECKPOINT_DIR)).map_err(|e| Error::io(out, e))?;

    let recovery_trained = !opts.wgcsl_only && !d_rec.is_empty();
    if !opts.wgcsl_only && d_rec.is_empty() {
        log::warn!("recovery set is empty: switching disabled for this run");
    }
    let mut checkpoints = BTreeMap::new();
    let mut names = vec![GOAL_POLICY, GOAL_Q];
    if recovery_trained {
        names.extend([RECOVERY_POLICY, RECOVERY_Q, COST_Q]);
    }
    for n in names {
        checkpoints.insert(n.to_string(), checkpoint_file(n, None));
    }
    let manifest = RunManifest {
        config: cfg.clone(),
        seed: cfg.seed,
        env: env.clone(),
        versions: ArtifactVersions::default(),
        ablation: opts.wgcsl_only.then(|| "wgcsl-only".to_string()),
        recovery_trained,
        switching: recovery_trained,
        checkpoints,
        datasets: DatasetSummary {
            full: dataset.stats(gamma),
            expert_filtered_trajectories: d_e.len(),
            recovery_trajectories: d_rec.len(),
        },
    };
    write_text(&out.join(MANIFEST_FILE), &serde_json::to_string_pretty(&manifest)?)?;

    let save = |name: &str, epoch: Option<usize>, ck: Checkpoint| ck.save(out.join(checkpoint_file(name, epoch)));
    let every = cfg.checkpoint_every;
    let (goal, goal_metrics) = train_goal_policy(&dataset, &cfg.goal, |l, epoch| {
        if every > 0 && epoch % every == 0 {
            save(GOAL_POLICY, Some(epoch), Checkpoint::new(l.policy.network.clone(), Some(l.policy_opt.clone())))?;
            save(GOAL_Q, Some(epoch), Checkpoint::new(l.q.clone(), Some(l.q_opt.clone())))?;
        }
        epoch_eval(&RbslAgent::goal_only(l.policy.clone()), &env, &cfg, epoch)
    })?;
    save(GOAL_POLICY, None, Checkpoint::new(goal.policy.network.clone(), Some(goal.policy_opt.clone())))?;
    save(GOAL_Q, None, Checkpoint::new(goal.q.clone(), Some(goal.q_opt.clone())))?;
    if !goal_metrics.is_empty() {
        write_csv(&out.join(GOAL_METRICS_FILE), &goal_metrics)?;
    }

    let mut agent = RbslAgent::goal_only(goal.policy.clone());
    let mut recovery_metrics = Vec::new();
    if recovery_trained {
        let limit = cfg.recovery.limit;
        let (rec, metrics) = train_recovery(&d_rec, &goal.policy, &cfg.recovery, |l, epoch| {
            if every > 0 && epoch % every == 0 {
                save(RECOVERY_POLICY, Some(epoch), Checkpoint::new(l.policy.network.clone(), Some(l.policy_opt.clone())))?;
                save(RECOVERY_Q, Some(epoch), Checkpoint::new(l.qr.clone(), Some(l.qr_opt.clone())))?;
                save(COST_Q, Some(epoch), Checkpoint::new(l.qc.clone(), Some(l.qc_opt.clone())))?;
            }
            let a = RbslAgent::with_recovery(goal.policy.clone(), l.policy.clone(), l.qc.clone(), limit)?;
            epoch_eval(&a, &env, &cfg, epoch)
        })?;
        save(RECOVERY_POLICY, None, Checkpoint::new(rec.policy.network.clone(), Some(rec.policy_opt.clone())))?;
        save(RECOVERY_Q, None, Checkpoint::new(rec.qr.clone(), Some(rec.qr_opt.clone())))?;
        save(COST_Q, None, Checkpoint::new(rec.qc.clone(), Some(rec.qc_opt.clone())))?;
        if !metrics.is_empty() {
            write_csv(&out.join(RECOVERY_METRICS_FILE), &metrics)?;
        }
        agent = RbslAgent::with_recovery(goal.policy, rec.policy, rec.qc, limit)?;
        recovery_metrics = metrics;
    }
    Ok(TrainedRun {
        manifest,
        agent,
        goal_metrics,
        recovery_metrics,
    })
}

/// Rebuilds the agent of a run directory from its manifest and checkpoints.
pub fn load_agent(run_dir: impl AsRef<Path>, switching: bool, limit: Option<f64>) -> Result<(RunManifest, RbslAgent)> {
    let dir = run_dir.as_ref();
    let manifest = RunManifest::load(dir)?;
    let net = |name: &str| -> Result<_> {
        let rel = manifest
            .checkpoints
            .get(name)
            .ok_or_else(|| Error::MissingFile(dir.join(checkpoint_file(name, None))))?;
        Ok(Checkpoint::load(dir.join(rel))?.network)
    };
    let action_max = manifest.env.action_max;
    let goal = Actor {
        network: net(GOAL_POLICY)?,
        action_max,
    };
    let agent = if manifest.switching && switching {
        let rec = Actor {
            network: net(RECOVERY_POLICY)?,
            action_max,
        };
        RbslAgent::with_recovery(goal, rec, net(COST_Q)?, limit.unwrap_or(manifest.config.recovery.limit))?
    } else {
        RbslAgent::goal_only(goal)
    };
    Ok((manifest, agent))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub success_rate: MeanStd,
    pub discounted_return: MeanStd,
    pub cost_return: MeanStd,
    pub cost_return_discounted: MeanStd,
    pub recovery_activation_rate: MeanStd,
}

impl EvalAggregate {
    pub fn of(rows: &[RunMetrics]) -> Self {
        let col = |f: fn(&RunMetrics) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
        EvalAggregate {
            success_rate: col(|m| m.success_rate),
            discounted_return: col(|m| m.discounted_return),
            cost_return: col(|m| m.cost_return),
            cost_return_discounted: col(|m| m.cost_return_discounted),
            recovery_activation_rate: col(|m| m.recovery_activation_rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<RunMetrics>,
    pub aggregate: EvalAggregate,
    pub csv_path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOptions {
    pub run: PathBuf,
    /// Defaults to the manifest's evaluation settings.
    pub episodes: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub no_switching: bool,
    /// Overrides the switching limit recorded in the manifest.
    pub limit: Option<f64>,
    pub out: Option<PathBuf>,
    /// Optional JSON Lines dump of every episode.
    pub records: Option<PathBuf>,
}

fn fmt_ms(m: MeanStd) -> String {
    format!("{}±{}", m.mean, m.std)
}

/// Evaluates a run directory on every seed; writes per-seed rows plus one
/// aggregate row (`mean±std`) to a CSV file.
pub fn eval_run(opts: &EvalOptions) -> Result<EvalReport> {
    let (manifest, agent) = load_agent(&opts.run, !opts.no_switching, opts.limit)?;
    let episodes = opts.episodes.unwrap_or(manifest.config.eval.episodes);
    let seeds = opts.seeds.clone().unwrap_or_else(|| manifest.config.eval.seeds.clone());
    if seeds.is_empty() {
        return Err(Error::Config("at least one evaluation seed is required".into()));
    }
    let mut rows = Vec::with_capacity(seeds.len());
    let mut records = Vec::new();
    for &seed in &seeds {
        let (m, recs) = evaluate(&agent, &manifest.env, episodes, seed, manifest.config.goal.gamma)?;
        rows.push(m);
        if opts.records.is_some() {
            records.extend(recs);
        }
    }
    let aggregate = EvalAggregate::of(&rows);
    let default_name = if opts.no_switching { "eval_metrics_no_switching.csv" } else { "eval_metrics.csv" };
    let csv_path = opts.out.clone().unwrap_or_else(|| opts.run.join(default_name));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| csv_error(&csv_path, e))?;
    }
    let a = &aggregate;
    w.write_record([
        "aggregate".to_string(),
        episodes.to_string(),
        fmt_ms(a.success_rate),
        fmt_ms(a.discounted_return),
        fmt_ms(a.cost_return),
        fmt_ms(a.cost_return_discounted),
        fmt_ms(a.recovery_activation_rate),
    ])
    .map_err(|e| csv_error(&csv_path, e))?;
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    if let Some(path) = &opts.records {
        let mut text = String::new();
        for r in &records {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        write_text(path, &text)?;
    }
    Ok(EvalReport {
        rows,
        aggregate,
        csv_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataPolicy {
    Expert,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataOptions {
    pub env: Variant,
    pub policy: DataPolicy,
    pub episodes: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub noise_std: Option<f64>,
    pub p_block: Option<f64>,
    pub margin: Option<f64>,
    pub margin_max: Option<f64>,
}

/// Generates and saves a dataset; returns its statistics.
pub fn gen_data(opts: &GenDataOptions) -> Result<DatasetStats> {
    let mut env = EnvConfig::for_variant(opts.env);
    if let Some(p) = opts.p_block {
        env.p_block = p;
    }
    env.seed = opts.seed;
    env.validate()?;
    let trajectories = match opts.policy {
        DataPolicy::Random => data::rollout_random(&env, opts.episodes, opts.seed)?,
        DataPolicy::Expert => {
            let mut planner = ExpertPlanner::default();
            if let Some(n) = opts.noise_std {
                planner.noise_std = n;
            }
            if let Some(m) = opts.margin {
                planner.margin = m;
            }
            planner.margin_max = opts.margin_max;
            data::rollout_expert(&env, opts.episodes, planner, opts.seed)?
        }
    };
    let dataset = Dataset {
        env_config: env,
        trajectories,
    };
    data::save(&dataset, &opts.out)?;
    Ok(dataset.stats(DEFAULT_GAMMA))
}
