//! Command-line surface: configuration layering, the five subcommands and
//! their exit codes.
//!
//! Layout of a run directory:
//!
//! ```text
//! <out>/dataset/problems.jsonl        augment
//! <out>/dataset/human_solutions.jsonl augment
//! <out>/traces/<problem>.json         augment
//! <out>/failures.json                 augment
//! <out>/records.jsonl                 evaluate
//! <out>/human_profiles.jsonl          evaluate
//! <out>/score.{csv,json,md}           score
//! <out>/human_baseline.csv            score
//! ```

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::client::{AuditLog, ChatClient, DecodingParams, ModelError, OpenAiBackend, ReplayBackend, RetryPolicy, ScriptedBackend};
use crate::dataset::{self, Dataset, DatasetError};
use crate::denial::{augment_problem, problem_seed, render_problem, AugmentationTrace};
use crate::detect::{detect_static, detect_with_model, DetectError};
use crate::metrics::{index_profiles, HumanTechniqueProfile, MetricsError, Scorer};
use crate::model::{ConstraintState, EvaluationRecord, Problem, Solution, SolutionError, Technique, TechniqueSet};
use crate::prompts::SOLVING_PROMPT;
use crate::report::{human_baseline, score_records, validate_report, Provenance, ReportError, ScoreReport};
use crate::sandbox::{extract_code, Judge, LimitsError, ResourceLimits, SandboxSetupError};
use crate::toy::ToyBenchmark;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_MODEL: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

pub const DATASET_DIR: &str = "dataset";
pub const TRACES_DIR: &str = "traces";
pub const FAILURES_FILE: &str = "failures.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const PROFILES_FILE: &str = "human_profiles.jsonl";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Model(_) => EXIT_MODEL,
            CliError::Invariant(_) => EXIT_INVARIANT,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<SandboxSetupError> for CliError {
    fn from(e: SandboxSetupError) -> Self {
        CliError::Data(format!("sandbox: {e}"))
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LimitsError> for CliError {
    fn from(e: LimitsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// OpenAI-compatible chat completions endpoint.
    Openai,
    /// Replies read in order from a JSON array of strings.
    Script,
    /// Replies looked up in a recorded audit log.
    Replay,
    /// Bundled simulated model for the toy benchmark.
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DetectorBackend {
    Static,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub script: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub requests_per_minute: Option<u32>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Toy,
            model: "toy-solver".into(),
            temperature: 0.0,
            max_tokens: 2048,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            script: None,
            replay: None,
            audit_log: None,
            requests_per_minute: None,
            max_attempts: 3,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    pub wall_time_secs: f64,
    pub memory_mib: u64,
    pub stdout_cap_kib: u64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        LimitsConfig {
            wall_time_secs: 10.0,
            memory_mib: 512,
            stdout_cap_kib: 1024,
        }
    }
}

impl LimitsConfig {
    pub fn to_limits(&self) -> Result<ResourceLimits, CliError> {
        if !(self.wall_time_secs.is_finite() && self.wall_time_secs > 0.0) {
            return Err(CliError::Usage("limits.wall_time_secs must be positive".into()));
        }
        let limits = ResourceLimits {
            wall_time_per_test: Duration::from_secs_f64(self.wall_time_secs),
            memory_bytes: self.memory_mib * 1024 * 1024,
            stdout_cap_bytes: (self.stdout_cap_kib * 1024) as usize,
        };
        limits.validate()?;
        Ok(limits)
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory holding `problems.jsonl` and optionally
    /// `human_solutions.jsonl`.
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub max_t: usize,
    pub state_min: usize,
    /// Defaults to `max_t`.
    pub state_max: Option<usize>,
    pub workers: usize,
    pub seed: u64,
    pub detector: DetectorBackend,
    pub k: usize,
    /// Leave the `misc` catch-all out of divergence scores.
    pub exclude_misc: bool,
    pub python: PathBuf,
    pub limits: LimitsConfig,
    pub provider: ProviderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            output_dir: PathBuf::from("out"),
            max_t: 5,
            state_min: 0,
            state_max: None,
            workers: 4,
            seed: 0,
            detector: DetectorBackend::Static,
            k: 5,
            exclude_misc: false,
            python: PathBuf::from("python3"),
            limits: LimitsConfig::default(),
            provider: ProviderConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.max_t == 0 {
            return bad("max_t must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        let max = self.state_max();
        if self.state_min > max || max > self.max_t {
            return bad(format!("state range {}..={max} must lie within 0..={}", self.state_min, self.max_t));
        }
        self.limits.to_limits()?;
        Ok(())
    }

    pub fn state_max(&self) -> usize {
        self.state_max.unwrap_or(self.max_t)
    }

    pub fn states(&self) -> std::ops::RangeInclusive<usize> {
        self.state_min..=self.state_max()
    }

    pub fn dataset_dir(&self) -> Result<&Path, CliError> {
        self.dataset.as_deref().ok_or_else(|| CliError::Usage("no dataset given (--dataset)".into()))
    }

    pub fn ignored_techniques(&self) -> TechniqueSet {
        let mut set = TechniqueSet::empty();
        if self.exclude_misc {
            set.insert(Technique::MISC);
        }
        set
    }

    fn workers_for_provider(&self) -> usize {
        // A script answers in call order, so concurrent callers would race.
        if self.provider.kind == ProviderKind::Script {
            1
        } else {
            self.workers
        }
    }
}

/// Settings shared by every subcommand. Unset flags fall back to the
/// defaults; a `--config` file overrides both.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// TOML file with RunConfig fields; its values take precedence over flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long = "out")]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_t: Option<usize>,
    #[arg(long)]
    pub state_min: Option<usize>,
    #[arg(long)]
    pub state_max: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub detector: Option<DetectorBackend>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub exclude_misc: bool,
    #[arg(long)]
    pub python: Option<PathBuf>,
    #[arg(long)]
    pub wall_time_secs: Option<f64>,
    #[arg(long)]
    pub memory_mib: Option<u64>,
    #[arg(long)]
    pub stdout_cap_kib: Option<u64>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
    #[arg(long)]
    pub requests_per_minute: Option<u32>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

fn put<T: Serialize>(map: &mut Map<String, Value>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), serde_json::to_value(v).expect("flag values serialise"));
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(base), Value::Object(overlay)) => {
            for (key, value) in overlay {
                merge(base.entry(key).or_insert(Value::Null), value);
            }
        }
        (slot, value) => *slot = value,
    }
}

impl RunFlags {
    fn layer(&self) -> Value {
        let mut root = Map::new();
        put(&mut root, "dataset", &self.dataset);
        put(&mut root, "output_dir", &self.output_dir);
        put(&mut root, "max_t", &self.max_t);
        put(&mut root, "state_min", &self.state_min);
        put(&mut root, "state_max", &self.state_max);
        put(&mut root, "workers", &self.workers);
        put(&mut root, "seed", &self.seed);
        put(&mut root, "detector", &self.detector);
        put(&mut root, "k", &self.k);
        put(&mut root, "exclude_misc", &self.exclude_misc.then_some(true));
        put(&mut root, "python", &self.python);
        let mut limits = Map::new();
        put(&mut limits, "wall_time_secs", &self.wall_time_secs);
        put(&mut limits, "memory_mib", &self.memory_mib);
        put(&mut limits, "stdout_cap_kib", &self.stdout_cap_kib);
        root.insert("limits".into(), Value::Object(limits));
        let mut provider = Map::new();
        put(&mut provider, "kind", &self.provider);
        put(&mut provider, "model", &self.model);
        put(&mut provider, "temperature", &self.temperature);
        put(&mut provider, "max_tokens", &self.max_tokens);
        put(&mut provider, "endpoint", &self.endpoint);
        put(&mut provider, "api_key_env", &self.api_key_env);
        put(&mut provider, "script", &self.script);
        put(&mut provider, "replay", &self.replay);
        put(&mut provider, "audit_log", &self.audit_log);
        put(&mut provider, "requests_per_minute", &self.requests_per_minute);
        put(&mut provider, "max_attempts", &self.max_attempts);
        put(&mut provider, "timeout_secs", &self.timeout_secs);
        root.insert("provider".into(), Value::Object(provider));
        Value::Object(root)
    }

    /// Defaults, then flags, then the config file.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut merged = serde_json::to_value(RunConfig::default()).expect("defaults serialise");
        merge(&mut merged, self.layer());
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let file: toml::Value = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            merge(&mut merged, serde_json::to_value(file).expect("toml values convert"));
        }
        let config: RunConfig = serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Parser)]
#[command(name = "neogauge", version, about = "Creativity evaluation for code-generating language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build constrained problem states by repeatedly denying a used technique.
    Augment(RunFlags),
    /// Solve every instance with the testing model, judge and analyse the answers.
    Evaluate(RunFlags),
    /// Compute per-state score tables from stored records.
    Score(RunFlags),
    /// List the techniques used in one Python file.
    Detect {
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Check a dataset directory for schema and state-chain problems.
    Validate(RunFlags),
}

/// Parses `args` and runs the chosen subcommand, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Augment(flags) => cmd_augment(&flags.resolve()?, out),
        Command::Evaluate(flags) => cmd_evaluate(&flags.resolve()?, out),
        Command::Score(flags) => cmd_score(&flags.resolve()?, out).map(|_| ()),
        Command::Detect { file, flags } => cmd_detect(&file, &flags.resolve()?, out),
        Command::Validate(flags) => cmd_validate(&flags.resolve()?, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Data(format!("stdout: {e}")))
}

pub fn build_client(provider: &ProviderConfig) -> Result<ChatClient, CliError> {
    let client = match provider.kind {
        ProviderKind::Toy => ChatClient::new(ToyBenchmark::load().backend()),
        ProviderKind::Script => {
            let path = provider.script.as_ref().ok_or_else(|| CliError::Usage("script provider needs --script".into()))?;
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let replies: Vec<String> =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: expected a JSON array of strings: {e}", path.display())))?;
            ChatClient::new(ScriptedBackend::new(replies))
        }
        ProviderKind::Replay => {
            let path = provider.replay.as_ref().ok_or_else(|| CliError::Usage("replay provider needs --replay".into()))?;
            let entries = AuditLog::read(path).map_err(|e| io_error(path, e))?;
            ChatClient::new(ReplayBackend::from_entries(&entries))
        }
        ProviderKind::Openai => ChatClient::new(OpenAiBackend::new(
            provider.endpoint.clone(),
            provider.api_key_env.as_deref(),
            Duration::from_secs(provider.timeout_secs),
        )?),
    };
    let mut client = client
        .with_params(DecodingParams {
            model: provider.model.clone(),
            temperature: provider.temperature,
            max_tokens: provider.max_tokens,
        })
        .with_retry(RetryPolicy {
            max_attempts: provider.max_attempts.max(1),
            ..RetryPolicy::default()
        });
    if let Some(rpm) = provider.requests_per_minute {
        client = client.with_rate_limit(rpm);
    }
    if let Some(path) = &provider.audit_log {
        client = client.with_audit_log(AuditLog::open(path).map_err(|e| io_error(path, e))?);
    }
    Ok(client)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
}

fn file_stem(problem_id: &str) -> String {
    problem_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Instance counts per state, as a two-line table.
pub fn state_count_table(counts: &[usize]) -> String {
    let width = counts.iter().map(|c| c.to_string().len()).max().unwrap_or(1).max(2);
    let mut states = String::from("state    ");
    let mut values = String::from("instances");
    for (t, c) in counts.iter().enumerate() {
        states.push_str(&format!(" {t:>width$}"));
        values.push_str(&format!(" {c:>width$}"));
    }
    format!("{states}\n{values}\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentFailure {
    pub problem_id: String,
    pub error: String,
    pub completed_iterations: usize,
}

/// Runs denial augmentation over every problem and writes the derived
/// dataset, one trace per problem and a failure manifest.
pub fn cmd_augment(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let source = dataset::load_dataset_dir(config.dataset_dir()?)?;
    let client = build_client(&config.provider)?;
    let results: Vec<_> = pool(config.workers_for_provider())?.install(|| {
        source
            .problems
            .par_iter()
            .map(|p| augment_problem(p, &client, config.max_t, problem_seed(config.seed, &p.id)))
            .collect()
    });

    let out_dir = &config.output_dir;
    let mut states = Vec::new();
    let mut failures = Vec::new();
    for (problem, result) in source.problems.iter().zip(results) {
        let trace: AugmentationTrace = match result {
            Ok(trace) => trace,
            Err(e) => {
                tracing::warn!(target: "neogauge::cli", problem = %problem.id, error = %e.source, "augmentation failed");
                failures.push(AugmentFailure {
                    problem_id: problem.id.clone(),
                    error: e.source.to_string(),
                    completed_iterations: e.trace.iterations.len(),
                });
                e.trace
            }
        };
        dataset::save_trace(&out_dir.join(TRACES_DIR).join(format!("{}.json", file_stem(&problem.id))), &trace)?;
        states.extend(trace.valid_states());
    }
    let derived = Dataset {
        problems: source.problems.clone(),
        states,
    };
    let dataset_dir = out_dir.join(DATASET_DIR);
    dataset::write_dataset(&dataset_dir.join(dataset::PROBLEMS_FILE), &derived)?;
    dataset::write_human_solutions(&dataset_dir.join(dataset::HUMAN_SOLUTIONS_FILE), &dataset::human_solutions_of(&derived.problems))?;
    let manifest = out_dir.join(FAILURES_FILE);
    let mut text = serde_json::to_string_pretty(&failures).expect("manifest serialises");
    text.push('\n');
    std::fs::write(&manifest, text).map_err(|e| io_error(&manifest, e))?;

    emit(out, &state_count_table(&derived.state_counts(config.max_t)))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Model(format!(
            "{} of {} problems failed; see {}",
            failures.len(),
            source.problems.len(),
            manifest.display()
        )))
    }
}

/// How techniques are found in a solution.
pub enum Detector<'c> {
    Static,
    Model(&'c ChatClient),
}

impl Detector<'_> {
    /// Detected techniques; an unparseable source or an empty model answer
    /// counts as no techniques.
    pub fn detect(&self, source: &str) -> Result<TechniqueSet, ModelError> {
        match self {
            Detector::Static => Ok(detect_static(source).unwrap_or_else(|e| {
                tracing::warn!(target: "neogauge::cli", error = %e, "source does not parse; no techniques detected");
                TechniqueSet::empty()
            })),
            Detector::Model(client) => match detect_with_model(source, client) {
                Ok(found) => Ok(found.techniques),
                Err(DetectError::Model(e)) => Err(e),
                Err(DetectError::EmptyDetection { .. } | DetectError::Parse(_)) => Ok(TechniqueSet::empty()),
            },
        }
    }
}

pub fn human_profile(problem: &Problem, detector: &Detector<'_>) -> Result<HumanTechniqueProfile, ModelError> {
    let solutions = problem.human_solutions.iter().map(|s| detector.detect(s)).collect::<Result<_, _>>()?;
    Ok(HumanTechniqueProfile::new(problem.id.clone(), solutions))
}

/// Solves one instance in a fresh session, then judges and analyses the
/// answer. Model failures become failed records.
pub fn evaluate_instance(
    problem: &Problem,
    state: &ConstraintState,
    client: &ChatClient,
    judge: &Judge,
    detector: &Detector<'_>,
) -> Result<EvaluationRecord, SandboxSetupError> {
    let producer = client.params().model.clone();
    let failed = |raw: String, error| EvaluationRecord::new(state.clone(), Solution::failed(raw, producer.clone(), error), TechniqueSet::empty(), false);
    let raw = match client.one_shot(SOLVING_PROMPT, &render_problem(problem, &state.constraints)) {
        Ok(raw) => raw,
        Err(e) => {
            tracing::warn!(target: "neogauge::cli", problem = %problem.id, t = state.t, error = %e, "model call failed");
            return Ok(failed(String::new(), SolutionError::ModelError));
        }
    };
    let Ok(source) = extract_code(&raw) else {
        return Ok(failed(raw, SolutionError::NoCodeFound));
    };
    let detected = match detector.detect(&source) {
        Ok(found) => found,
        Err(e) => {
            tracing::warn!(target: "neogauge::cli", problem = %problem.id, t = state.t, error = %e, "detection failed");
            return Ok(failed(raw, SolutionError::ModelError));
        }
    };
    let verdict = judge.judge(&source, &problem.tests)?;
    Ok(EvaluationRecord::new(state.clone(), Solution::extracted(raw, source, producer), detected, verdict.correct))
}

/// Evaluates every instance in the configured state range, `k` samples
/// each, and stores records plus human technique profiles.
pub fn cmd_evaluate(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let data = dataset::load_dataset_dir(config.dataset_dir()?)?;
    let client = build_client(&config.provider)?;
    let judge = Judge::new(config.limits.to_limits()?)?.interpreter(&config.python);
    let detector = match config.detector {
        DetectorBackend::Static => Detector::Static,
        DetectorBackend::Model => Detector::Model(&client),
    };
    let pool = pool(config.workers_for_provider())?;

    let profiles: Vec<HumanTechniqueProfile> = pool
        .install(|| data.problems.par_iter().map(|p| human_profile(p, &detector)).collect::<Result<_, _>>())
        .map_err(|e| CliError::Model(format!("human solution detection: {e}")))?;

    let order: std::collections::BTreeMap<&str, usize> = data.problems.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let mut jobs: Vec<(usize, &ConstraintState, usize)> = Vec::new();
    for state in data.states.iter().filter(|s| config.states().contains(&s.constraints.len())) {
        let Some(&at) = order.get(state.problem_id.as_str()) else {
            return Err(CliError::Data(format!("state refers to unknown problem {}", state.problem_id)));
        };
        jobs.extend((0..config.k).map(|sample| (at, state, sample)));
    }
    jobs.sort_by_key(|(at, state, sample)| (*at, state.t, *sample));

    let results: Vec<Result<EvaluationRecord, SandboxSetupError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(at, state, sample)| {
                let record = evaluate_instance(&data.problems[*at], state, &client, &judge, &detector)?;
                Ok(if config.k > 1 {
                    record.with_sample(format!("{}@{}", state.problem_id, state.t), *sample)
                } else {
                    record
                })
            })
            .collect()
    });
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    dataset::write_records(&config.output_dir.join(RECORDS_FILE), &records)?;
    dataset::write_profiles(&config.output_dir.join(PROFILES_FILE), &profiles)?;
    let correct = records.iter().filter(|r| r.correct).count();
    let model_failures = records.iter().filter(|r| r.solution.error == Some(SolutionError::ModelError)).count();
    emit(out, &format!("{} records, {} correct, {} model failures\n", records.len(), correct, model_failures))?;
    if model_failures > 0 {
        return Err(CliError::Model(format!("{model_failures} instances failed with model errors")));
    }
    Ok(())
}

/// Scores stored records, writes CSV, JSON and markdown tables, and checks
/// the report invariants.
pub fn cmd_score(config: &RunConfig, out: &mut dyn Write) -> Result<ScoreReport, CliError> {
    let records = dataset::load_records(&config.output_dir.join(RECORDS_FILE))?;
    let profiles = index_profiles(dataset::load_profiles(&config.output_dir.join(PROFILES_FILE))?);
    let instances = dataset::load_dataset_dir(config.dataset_dir()?)?.states;
    let scorer = Scorer::new(&profiles).ignoring(config.ignored_techniques());

    let selected = if records.iter().any(|r| r.sample.is_some()) {
        scorer.select_best_of_k(&records)?
    } else {
        records
    };
    let rows = score_records(&selected, &scorer, config.states())?;
    let human = if rows.is_empty() {
        Vec::new()
    } else {
        human_baseline(&scorer, &instances, config.states())?
    };
    let report = ScoreReport { rows, human };

    let write = |name: &str, text: &str| {
        let path = config.output_dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))
    };
    std::fs::create_dir_all(&config.output_dir).map_err(|e| io_error(&config.output_dir, e))?;
    write("score.csv", &report.to_csv()?)?;
    write("score.json", &report.to_json())?;
    write("score.md", &report.to_markdown())?;
    write("human_baseline.csv", &report.human_csv()?)?;
    emit(out, &report.to_markdown())?;

    let violations = validate_report(&report.rows, Provenance::SelfProduced);
    if !violations.is_empty() {
        let listed: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(CliError::Invariant(format!("report invariants violated: {}", listed.join("; "))));
    }
    Ok(report)
}

pub fn cmd_detect(file: &Path, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let source = std::fs::read_to_string(file).map_err(|e| io_error(file, e))?;
    let found = match config.detector {
        DetectorBackend::Static => detect_static(&source).map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?,
        DetectorBackend::Model => {
            let client = build_client(&config.provider)?;
            match detect_with_model(&source, &client) {
                Ok(found) => found.techniques,
                Err(DetectError::EmptyDetection { .. }) => TechniqueSet::empty(),
                Err(DetectError::Model(e)) => return Err(e.into()),
                Err(DetectError::Parse(e)) => return Err(CliError::Data(e.to_string())),
            }
        }
    };
    let text: String = found.iter().map(|t| format!("{}\n", t.canonical_name())).collect();
    emit(out, &text)
}

/// Problems whose states do not form a chain `C_0 ⊂ C_1 ⊂ …` of
/// consecutive prefixes.
pub fn broken_chains(data: &Dataset) -> Vec<String> {
    let mut problems = Vec::new();
    for problem in &data.problems {
        let mut chain: Vec<&ConstraintState> = data.states.iter().filter(|s| s.problem_id == problem.id).collect();
        chain.sort_by_key(|s| s.t);
        let contiguous = chain.iter().enumerate().all(|(i, s)| s.t == i);
        let prefixes = chain.windows(2).all(|w| w[1].constraints.starts_with(&w[0].constraints));
        if !(contiguous && prefixes) {
            problems.push(problem.id.clone());
        }
    }
    problems
}

pub fn cmd_validate(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let data = dataset::load_dataset_dir(config.dataset_dir()?)?;
    let top = data.states.iter().map(|s| s.t).max().unwrap_or(0);
    let mut text = format!("{} problems, {} instances\n", data.problems.len(), data.states.len());
    text.push_str(&state_count_table(&data.state_counts(top)));
    for p in data.problems.iter().filter(|p| p.human_solutions.len() < 2) {
        text.push_str(&format!("note: {} has {} human solutions; divergence baselines need 2\n", p.id, p.human_solutions.len()));
    }
    emit(out, &text)?;
    let broken = broken_chains(&data);
    if !broken.is_empty() {
        return Err(CliError::Data(format!("states are not consecutive prefixes for: {}", broken.join(", "))));
    }
    Ok(())
}

/// Writes a dataset directory for the bundled toy benchmark.
pub fn write_toy_dataset(dir: &Path) -> Result<(), DatasetError> {
    let toy = ToyBenchmark::load();
    let mut data = toy.dataset();
    data.states = data.problems.iter().map(|p| ConstraintState::new(p.id.clone(), Vec::new()).expect("empty list")).collect();
    dataset::write_dataset(&dir.join(dataset::PROBLEMS_FILE), &data)?;
    dataset::write_human_solutions(&dir.join(dataset::HUMAN_SOLUTIONS_FILE), &dataset::human_solutions_of(&data.problems))
}
