//! Runnable commands: corpus evaluation, single-case assessment, fusion,
//! schema checks, exports, case intake and the offline demo workspace.
//!
//! Every command checks for existing outputs before it touches a backend;
//! without `force` nothing is overwritten.

use serde::Serialize;
use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

use crate::case::{parse_case_id, CaseIdError, CaseRecord, DrawingArtifact, MediaType};
use crate::config::{AppConfig, BackendMode, ConfigError};
use crate::eval::stats::{group_statistics, threshold_share, StatsError, StatsRow, OVERALL};
use crate::eval::{build_plot_data, evaluate_corpus, EvalError, SimilarityRecord};
use crate::eval::plot::PlotError;
use crate::export::{export_table, ExportError, ExportFormat};
use crate::fixtures;
use crate::fusion::{
    render_report_text, run_fusion, FusionBackends, FusionConfig, FusionError, Principle,
};
use crate::gateway::{
    Backend, BackendKind, Fallback, HttpTransport, RecordingBackend, RemoteBackend, ScriptEntry,
    ScriptError, ScriptedMock, Transport,
};
use crate::pipeline::schema::{validate_observation, ObservationSchema, Violation};
use crate::pipeline::{
    radar_chart, render_report, run_pipeline, PipelineConfig, PipelineError, PipelineFailure,
    StageBackends,
};
use crate::prompts::{self, PromptError, PromptLibrary};
use crate::store::{self, CaseStore, StoreError, StoredRef};

pub const EVAL_DIR: &str = "eval";
pub const CONFIG_FILE: &str = "htp.toml";

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("schema {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("observation violates the schema:\n  - {}", join(.0))]
    Observation(Vec<Violation>),
    #[error("{0}")]
    Usage(String),
    #[error("no backend is assigned to role {0}")]
    MissingRole(&'static str),
    #[error("backend {0} is not in the pool")]
    UnknownBackend(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("{path}: fingerprint {fingerprint} was recorded with a different response; pass --force to replace it")]
    ScriptConflict { path: PathBuf, fingerprint: String },
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
    #[error("plot data: {0}")]
    Plot(#[from] PlotError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no case produced a similarity record; first failure: {0}")]
    NoRecords(String),
    #[error(transparent)]
    Pipeline(Box<PipelineFailure>),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("principle check failed: {}", .0.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join(", "))]
    Principles(Vec<Principle>),
    #[error("case id: {0}")]
    CaseId(#[from] CaseIdError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  - ")
}

impl From<Box<PipelineFailure>> for WorkflowError {
    fn from(f: Box<PipelineFailure>) -> Self {
        WorkflowError::Pipeline(f)
    }
}

impl WorkflowError {
    /// 0 success, 1 validation or config, 2 backend failure, 3 principle
    /// check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            WorkflowError::NoRecords(_) => 2,
            WorkflowError::Pipeline(f) => match f.error {
                PipelineError::Prompt(_) => 1,
                _ => 2,
            },
            WorkflowError::Fusion(e) => match e {
                FusionError::Prompt(_)
                | FusionError::TooFewBackends(_)
                | FusionError::DuplicateBackend(_)
                | FusionError::TauOutOfRange(_) => 1,
                _ => 2,
            },
            WorkflowError::Principles(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorkflowError + '_ {
    move |source| WorkflowError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Live,
    Replay,
    /// Live backends whose answers are captured into mock scripts.
    Record,
}

impl From<BackendMode> for PoolMode {
    fn from(m: BackendMode) -> Self {
        match m {
            BackendMode::Live => PoolMode::Live,
            BackendMode::Replay => PoolMode::Replay,
        }
    }
}

/// Named backends available to a command.
#[derive(Default)]
pub struct BackendPool {
    backends: BTreeMap<String, Arc<dyn Backend>>,
    recorders: BTreeMap<String, Arc<RecordingBackend>>,
}

impl BackendPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, backend: Arc<dyn Backend>) {
        self.backends.insert(backend.name().to_string(), backend);
    }

    /// Wraps every backend in a recorder.
    pub fn recording(backends: Vec<Arc<dyn Backend>>) -> Self {
        let mut pool = Self::new();
        for b in backends {
            pool.insert_recorded(b);
        }
        pool
    }

    fn insert_recorded(&mut self, backend: Arc<dyn Backend>) {
        let name = backend.name().to_string();
        let recorder = Arc::new(RecordingBackend::new(backend));
        self.backends.insert(name.clone(), recorder.clone());
        self.recorders.insert(name, recorder);
    }

    /// Builds the named backends. Replay loads `<mocks.dir>/<name>.json`.
    pub fn from_config(cfg: &AppConfig, names: &[String], mode: PoolMode) -> Result<Self, WorkflowError> {
        let mut pool = Self::new();
        let transport: Arc<dyn Transport> = Arc::new(HttpTransport::new());
        for name in names {
            match mode {
                PoolMode::Replay => {
                    let dir = mock_dir(cfg)?;
                    let mock = ScriptedMock::load(name.clone(), &script_path(dir, name), Fallback::Error)?;
                    pool.insert(Arc::new(mock));
                }
                PoolMode::Live | PoolMode::Record => {
                    let spec = cfg
                        .backend(name)
                        .ok_or_else(|| WorkflowError::UnknownBackend(name.clone()))?;
                    let live: Arc<dyn Backend> = Arc::new(RemoteBackend::new(spec.clone(), transport.clone()));
                    if mode == PoolMode::Record {
                        mock_dir(cfg)?;
                        pool.insert_recorded(live);
                    } else {
                        pool.insert(live);
                    }
                }
            }
        }
        Ok(pool)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Backend>, WorkflowError> {
        self.backends
            .get(name)
            .cloned()
            .ok_or_else(|| WorkflowError::UnknownBackend(name.to_string()))
    }

    /// Merges captured answers into `<dir>/<backend>.json`. An entry that
    /// contradicts an existing one needs `force`.
    pub fn save_recordings(&self, dir: &Path, force: bool) -> Result<Vec<PathBuf>, WorkflowError> {
        let mut written = Vec::new();
        for (name, recorder) in &self.recorders {
            let captured = recorder.to_mock().entries();
            if captured.is_empty() {
                continue;
            }
            let path = script_path(dir, name);
            let mut merged: BTreeMap<String, ScriptEntry> = BTreeMap::new();
            if path.exists() {
                for e in ScriptedMock::load(name.clone(), &path, Fallback::Error)?.entries() {
                    merged.insert(e.fingerprint.clone(), e);
                }
            }
            for e in captured {
                if let Some(old) = merged.get(&e.fingerprint) {
                    if !force && !same_entry(old, &e) {
                        return Err(WorkflowError::ScriptConflict {
                            path,
                            fingerprint: e.fingerprint,
                        });
                    }
                }
                merged.insert(e.fingerprint.clone(), e);
            }
            let mock = ScriptedMock::from_entries(name.clone(), merged.into_values().collect(), Fallback::Error)?;
            store::write_atomic(&path, mock.to_script_json().as_bytes(), true)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn same_entry(a: &ScriptEntry, b: &ScriptEntry) -> bool {
    // compare as persisted, so vectors rounded on disk still match
    crate::canonical::to_sorted_json(a).ok() == crate::canonical::to_sorted_json(b).ok()
}

pub fn script_path(dir: &Path, backend: &str) -> PathBuf {
    dir.join(format!("{backend}.json"))
}

fn mock_dir(cfg: &AppConfig) -> Result<&Path, WorkflowError> {
    cfg.mocks
        .dir
        .as_deref()
        .ok_or_else(|| WorkflowError::Usage("mocks.dir is not set in the config".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    EvalRun,
    Assess,
    Fuse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub cases: usize,
    /// Stored cases without expert text; not part of the corpus.
    pub skipped: usize,
    pub evaluated: usize,
    pub failed: usize,
    pub threshold: f64,
    pub share_at_or_above_threshold: f64,
    pub rows: Vec<StatsRow>,
}

impl EvalSummary {
    pub fn overall(&self) -> Option<&StatsRow> {
        self.rows.iter().find(|r| r.group == OVERALL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessSummary {
    pub case_id: String,
    pub files: Vec<PathBuf>,
    pub critique_entries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseSummary {
    pub case_id: String,
    pub files: Vec<PathBuf>,
    pub consensus: usize,
    pub to_be_verified: usize,
    pub conflicts: usize,
    pub principles_passed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaSummary {
    pub version: String,
    pub leaves: usize,
    pub reconstructed: bool,
}

pub const EVAL_FILES: [&str; 9] = [
    "records.json",
    "errors.json",
    "interpretations.json",
    "stats.csv",
    "stats.json",
    "histogram.json",
    "box.json",
    "violin.json",
    "summary.json",
];

pub const ASSESS_FILES: [&str; 8] = [
    "outputs/observer.json",
    "outputs/interpreter.json",
    "outputs/zeitgeist.json",
    "outputs/listener.json",
    "bundle.json",
    "radar.json",
    "report.md",
    "partial.json",
];

pub const FUSION_FILES: [&str; 7] = [
    "fusion/interpretations.json",
    "fusion/viewpoints.json",
    "fusion/classified.json",
    "fusion/risk.json",
    "fusion/report.json",
    "fusion/compliance.json",
    "fusion/report.txt",
];

/// A loaded config with its store, prompts and schema.
pub struct Workspace {
    pub config: AppConfig,
    pub store: CaseStore,
    pub prompts: PromptLibrary,
    pub schema: ObservationSchema,
    pub parallelism: NonZeroUsize,
    pub force: bool,
}

pub fn load_schema(path: &Path) -> Result<ObservationSchema, WorkflowError> {
    let schema_err = |message: String| WorkflowError::Schema {
        path: path.to_path_buf(),
        message,
    };
    let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
    let schema = ObservationSchema::from_json(&raw).map_err(|e| schema_err(e.to_string()))?;
    schema.check_coverage().map_err(|e| schema_err(e.to_string()))?;
    Ok(schema)
}

impl Workspace {
    pub fn load(config_path: &Path, parallelism: NonZeroUsize, force: bool) -> Result<Self, WorkflowError> {
        Self::new(AppConfig::load(config_path)?, parallelism, force)
    }

    pub fn new(config: AppConfig, parallelism: NonZeroUsize, force: bool) -> Result<Self, WorkflowError> {
        let prompts = PromptLibrary::with_dir(&config.prompts)?;
        let schema = load_schema(&config.schema)?;
        let store = CaseStore::open(&config.store_root)?;
        Ok(Self {
            config,
            store,
            prompts,
            schema,
            parallelism,
            force,
        })
    }

    fn role(&self, role: &'static str, value: &Option<String>) -> Result<String, WorkflowError> {
        value.clone().ok_or(WorkflowError::MissingRole(role))
    }

    /// Backend names `command` needs, in role order.
    pub fn required_backends(&self, command: Command) -> Result<Vec<String>, WorkflowError> {
        let r = &self.config.roles;
        Ok(match command {
            Command::EvalRun => vec![
                self.role("eval_generator", &r.eval_generator)?,
                self.role("eval_embedder", &r.eval_embedder)?,
            ],
            Command::Assess => vec![
                self.role("observer", &r.observer)?,
                self.role("interpreter", &r.interpreter)?,
                self.role("zeitgeist", &r.zeitgeist)?,
                self.role("listener", &r.listener)?,
            ],
            Command::Fuse => {
                if r.fusion_interpreters.is_empty() {
                    return Err(WorkflowError::MissingRole("fusion_interpreters"));
                }
                let mut names = r.fusion_interpreters.clone();
                names.push(self.role("fusion_extractor", &r.fusion_extractor)?);
                names.push(self.role("fusion_embedder", &r.fusion_embedder)?);
                names.push(self.role("fusion_merger", &r.fusion_merger)?);
                names.dedup();
                names
            }
        })
    }

    /// Pool for `command` in the configured mode, or `mode` when given.
    pub fn pool(&self, command: Command, mode: Option<PoolMode>) -> Result<BackendPool, WorkflowError> {
        let names = self.required_backends(command)?;
        BackendPool::from_config(&self.config, &names, mode.unwrap_or(self.config.mocks.mode.into()))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.config.store_root.join(EVAL_DIR)
    }

    fn refuse_existing(&self, paths: &[PathBuf]) -> Result<(), WorkflowError> {
        if self.force {
            return Ok(());
        }
        match paths.iter().find(|p| p.exists()) {
            Some(p) => Err(StoreError::Exists(p.clone()).into()),
            None => Ok(()),
        }
    }

    /// Evaluates every stored case that carries expert text.
    pub fn eval_run(&self, pool: &BackendPool) -> Result<EvalSummary, WorkflowError> {
        let dir = self.eval_dir();
        let targets: Vec<PathBuf> = EVAL_FILES.iter().map(|f| dir.join(f)).collect();
        self.refuse_existing(&targets)?;
        let r = &self.config.roles;
        let generator = pool.get(&self.role("eval_generator", &r.eval_generator)?)?;
        let embedder = pool.get(&self.role("eval_embedder", &r.eval_embedder)?)?;

        let all = self.store.load_all()?;
        let total = all.len();
        let cases: Vec<CaseRecord> = all
            .into_iter()
            .filter(|c| c.expert_interpretation.as_deref().is_some_and(|t| !t.trim().is_empty()))
            .collect();
        let skipped = total - cases.len();
        if skipped > 0 {
            log::info!("skipping {skipped} stored case(s) without expert text");
        }
        if cases.is_empty() {
            return Err(WorkflowError::Usage("no stored case carries expert interpretation text".into()));
        }
        let result = evaluate_corpus(
            &cases,
            generator.as_ref(),
            embedder.as_ref(),
            &self.prompts,
            prompts::EVAL_INTERPRET,
            self.parallelism,
        )?;
        let write = |name: &str, value: &dyn erased::Json| -> Result<(), WorkflowError> {
            store::write_atomic(&dir.join(name), value.canonical()?.as_bytes(), self.force)?;
            Ok(())
        };
        for f in &result.failures {
            log::warn!("{}: {:?} failed: {}", f.case_id, f.stage, f.message);
        }
        write("errors.json", &result.failures)?;
        if result.records.is_empty() {
            let first = result
                .failures
                .first()
                .map(|f| format!("{}: {}", f.case_id, f.message))
                .unwrap_or_default();
            return Err(WorkflowError::NoRecords(first));
        }
        // statistics come from the records as persisted, so `eval stats`
        // on records.json reproduces them exactly
        let persisted = erased::Json::canonical(&result.records)?;
        let records: Vec<SimilarityRecord> = serde_json::from_str(&persisted)
            .map_err(|e| WorkflowError::Usage(format!("re-reading records: {e}")))?;
        let rows = group_statistics(&records)?;
        let plot = build_plot_data(
            &records,
            self.config.eval.bin_width,
            self.config.eval.anchor,
            self.config.eval.grid_points,
        )?;
        let values: Vec<f64> = records.iter().map(|r| r.similarity).collect();
        let summary = EvalSummary {
            cases: cases.len(),
            skipped,
            evaluated: records.len(),
            failed: result.failures.len(),
            threshold: self.config.eval.threshold,
            share_at_or_above_threshold: threshold_share(&values, self.config.eval.threshold)?,
            rows: rows.clone(),
        };
        store::write_atomic(&dir.join("records.json"), persisted.as_bytes(), self.force)?;
        write("interpretations.json", &result.ai_texts)?;
        export_table(&rows, ExportFormat::Csv, &dir.join("stats.csv"), self.force)?;
        export_table(&rows, ExportFormat::Json, &dir.join("stats.json"), self.force)?;
        write("histogram.json", &plot.histogram)?;
        write("box.json", &plot.five_number)?;
        write("violin.json", &plot.density)?;
        write("summary.json", &summary)?;
        Ok(summary)
    }

    fn records(&self, path: Option<&Path>) -> Result<Vec<SimilarityRecord>, WorkflowError> {
        let default = self.eval_dir().join("records.json");
        Ok(store::read_json(path.unwrap_or(&default))?)
    }

    /// Statistics recomputed from stored similarity records.
    pub fn eval_stats(&self, records: Option<&Path>) -> Result<Vec<StatsRow>, WorkflowError> {
        Ok(group_statistics(&self.records(records)?)?)
    }

    pub fn export(&self, records: Option<&Path>, format: ExportFormat, out: &Path) -> Result<(), WorkflowError> {
        let rows = self.eval_stats(records)?;
        export_table(&rows, format, out, self.force)?;
        Ok(())
    }

    fn case_targets(&self, id: &str, files: &[&str]) -> Result<Vec<PathBuf>, WorkflowError> {
        files
            .iter()
            .map(|f| self.store.output_path(id, f).map_err(Into::into))
            .collect()
    }

    /// Runs the four-stage pipeline on a stored case.
    pub fn assess(&self, pool: &BackendPool, id: &str) -> Result<AssessSummary, WorkflowError> {
        parse_case_id(id)?;
        let case = self.store.load_case(id)?;
        self.refuse_existing(&self.case_targets(id, &ASSESS_FILES)?)?;
        let r = &self.config.roles;
        let observer = pool.get(&self.role("observer", &r.observer)?)?;
        let interpreter = pool.get(&self.role("interpreter", &r.interpreter)?)?;
        let zeitgeist = pool.get(&self.role("zeitgeist", &r.zeitgeist)?)?;
        let listener = pool.get(&self.role("listener", &r.listener)?)?;
        let lock = self.store.lock(id)?;
        let config = PipelineConfig {
            max_critique_rounds: self.config.pipeline.max_critique_rounds,
        };
        let stages = StageBackends {
            observer: observer.as_ref(),
            interpreter: interpreter.as_ref(),
            zeitgeist: zeitgeist.as_ref(),
            listener: listener.as_ref(),
        };
        let bundle = match run_pipeline(&case, stages, &config, &self.schema, &self.prompts) {
            Ok(b) => b,
            Err(failure) => {
                self.store
                    .write_output_json(&lock, id, "partial.json", &failure.partial, self.force)?;
                return Err(failure.into());
            }
        };
        let mut files = vec![
            self.store
                .write_output_json(&lock, id, "outputs/observer.json", &bundle.observation, self.force)?,
            self.store
                .write_output_json(&lock, id, "outputs/interpreter.json", &bundle.dossier, self.force)?,
            self.store
                .write_output_json(&lock, id, "outputs/zeitgeist.json", &bundle.context, self.force)?,
            self.store
                .write_output_json(&lock, id, "outputs/listener.json", &bundle.report, self.force)?,
        ];
        files.push(self.store.write_output_json(&lock, id, "bundle.json", &bundle, self.force)?);
        let chart = radar_chart(&bundle.case_id, &bundle.dossier.radar);
        files.push(self.store.write_output_json(&lock, id, "radar.json", &chart, self.force)?);
        files.push(self.store.write_output(
            &lock,
            id,
            "report.md",
            render_report(&bundle).as_bytes(),
            self.force,
        )?);
        // a successful re-run supersedes an earlier failure record
        let partial = self.store.output_path(id, "partial.json")?;
        if partial.exists() {
            std::fs::remove_file(&partial).map_err(io_err(&partial))?;
        }
        self.store.set_stage_outputs(
            &lock,
            id,
            &[
                ("observer", "outputs/observer.json"),
                ("interpreter", "outputs/interpreter.json"),
                ("zeitgeist", "outputs/zeitgeist.json"),
                ("listener", "outputs/listener.json"),
                ("bundle", "bundle.json"),
            ],
        )?;
        Ok(AssessSummary {
            case_id: id.to_string(),
            files,
            critique_entries: bundle.critique_transcript.len(),
        })
    }

    /// Multi-model fusion on a stored case. Outputs are written even when
    /// a principle fails; the failure is then reported as the error.
    pub fn fuse(&self, pool: &BackendPool, id: &str) -> Result<FuseSummary, WorkflowError> {
        parse_case_id(id)?;
        let case = self.store.load_case(id)?;
        self.refuse_existing(&self.case_targets(id, &FUSION_FILES)?)?;
        let r = &self.config.roles;
        let interpreters = r
            .fusion_interpreters
            .iter()
            .map(|n| pool.get(n))
            .collect::<Result<Vec<_>, _>>()?;
        let extractor = pool.get(&self.role("fusion_extractor", &r.fusion_extractor)?)?;
        let embedder = pool.get(&self.role("fusion_embedder", &r.fusion_embedder)?)?;
        let merger = pool.get(&self.role("fusion_merger", &r.fusion_merger)?)?;
        let lock = self.store.lock(id)?;
        let backends = FusionBackends {
            interpreters: interpreters.iter().map(|b| b.as_ref()).collect(),
            extractor: extractor.as_ref(),
            embedder: embedder.as_ref(),
            merger: merger.as_ref(),
        };
        let config = FusionConfig {
            tau: self.config.fusion.tau,
            parallelism: self.parallelism,
            min_survivors: self.config.fusion.min_survivors,
            rules: self.config.risk_rules(),
        };
        let out = run_fusion(&case, &backends, &config, &self.prompts)?;
        let f = self.force;
        let files = vec![
            self.store.write_output_json(&lock, id, FUSION_FILES[0], &out.interpretations, f)?,
            self.store.write_output_json(&lock, id, FUSION_FILES[1], &out.viewpoints, f)?,
            self.store.write_output_json(&lock, id, FUSION_FILES[2], &out.classified, f)?,
            self.store.write_output_json(&lock, id, FUSION_FILES[3], &out.risk, f)?,
            self.store.write_output_json(&lock, id, FUSION_FILES[4], &out.report, f)?,
            self.store.write_output_json(&lock, id, FUSION_FILES[5], &out.compliance, f)?,
            self.store.write_output(
                &lock,
                id,
                FUSION_FILES[6],
                render_report_text(&out.report).as_bytes(),
                f,
            )?,
        ];
        self.store
            .set_stage_outputs(&lock, id, &[("fusion", "fusion/report.json")])?;
        if !out.compliance.all_passed() {
            return Err(WorkflowError::Principles(out.compliance.failed()));
        }
        Ok(FuseSummary {
            case_id: id.to_string(),
            files,
            consensus: out.classified.consensus.len(),
            to_be_verified: out.classified.to_be_verified.len(),
            conflicts: out.classified.conflicts.len(),
            principles_passed: out.compliance.passed_count(),
        })
    }

    /// Checks the configured schema and, optionally, one observation file.
    pub fn schema_check(&self, observation: Option<&Path>) -> Result<SchemaSummary, WorkflowError> {
        if let Some(path) = observation {
            let record: crate::pipeline::ObservationRecord = store::read_json(path)?;
            validate_observation(&record, &self.schema).map_err(WorkflowError::Observation)?;
        }
        Ok(SchemaSummary {
            version: self.schema.version().to_string(),
            leaves: self.schema.leaf_count(),
            reconstructed: self.schema.is_reconstructed(),
        })
    }

    pub fn add_case(&mut self, new: NewCase<'_>) -> Result<StoredRef, WorkflowError> {
        let id = parse_case_id(new.id)?;
        let ext = new
            .image
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        let media = MediaType::from_extension(ext).ok_or_else(|| {
            WorkflowError::Usage(format!("{}: images must be .png, .jpg or .jpeg", new.image.display()))
        })?;
        let bytes = std::fs::read(new.image).map_err(io_err(new.image))?;
        let mut record = CaseRecord::new(id, DrawingArtifact::new(bytes, media), new.note);
        record.expert_label = new.expert_label.map(str::to_string);
        if let Some(path) = new.expert_text {
            record.expert_interpretation = Some(std::fs::read_to_string(path).map_err(io_err(path))?);
        }
        Ok(self.store.store_case(&record, self.force)?)
    }
}

/// Input to [`Workspace::add_case`].
#[derive(Debug, Clone, Copy)]
pub struct NewCase<'a> {
    pub id: &'a str,
    pub image: &'a Path,
    pub note: &'a str,
    pub expert_label: Option<&'a str>,
    pub expert_text: Option<&'a Path>,
}

mod erased {
    use serde::Serialize;

    /// Object-safe canonical serialization.
    pub trait Json {
        fn canonical(&self) -> Result<String, super::WorkflowError>;
    }

    impl<T: Serialize> Json for T {
        fn canonical(&self) -> Result<String, super::WorkflowError> {
            crate::canonical::to_canonical_json(self)
                .map_err(|e| super::WorkflowError::Usage(format!("serializing output: {e}")))
        }
    }
}

/// Seed of the synthetic corpus written by [`demo_init`].
pub const DEMO_SEED: u64 = 307;

const DEMO_HEADER: &str = r#"# Offline demo workspace. Every backend is replayed from mocks/<name>.json;
# set mocks.mode = "live" and point the endpoints at real services to go live.
store_root = "store"
prompts = "prompts"
schema = "schema/observation.v1.json"

[mocks]
dir = "mocks"
mode = "replay"

[eval]
threshold = 0.70
bin_width = 0.02
anchor = 0.0
grid_points = 128

[fusion]
tau = 0.8
min_survivors = 2

[pipeline]
max_critique_rounds = 1

[roles]
eval_generator = "eval-vlm"
eval_embedder = "eval-embed"
observer = "observer-vlm"
interpreter = "interpreter-llm"
zeitgeist = "zeitgeist-llm"
listener = "listener-llm"
fusion_interpreters = ["vlm-alpha", "vlm-beta", "vlm-gamma"]
fusion_extractor = "extractor-llm"
fusion_embedder = "embedder"
fusion_merger = "merger-llm"
"#;

const DEMO_BACKENDS: [(&str, BackendKind, Option<usize>); 12] = [
    ("eval-vlm", BackendKind::Generate, None),
    ("eval-embed", BackendKind::Embed, Some(fixtures::SYNTHETIC_EMBED_DIM)),
    ("observer-vlm", BackendKind::Generate, None),
    ("interpreter-llm", BackendKind::Generate, None),
    ("zeitgeist-llm", BackendKind::Generate, None),
    ("listener-llm", BackendKind::Generate, None),
    ("vlm-alpha", BackendKind::Generate, None),
    ("vlm-beta", BackendKind::Generate, None),
    ("vlm-gamma", BackendKind::Generate, None),
    ("extractor-llm", BackendKind::Generate, None),
    ("embedder", BackendKind::Embed, Some(8)),
    ("merger-llm", BackendKind::Generate, None),
];

pub fn demo_config() -> String {
    let mut out = DEMO_HEADER.to_string();
    for (name, kind, dim) in DEMO_BACKENDS {
        let endpoint = match kind {
            BackendKind::Generate => "http://127.0.0.1:8080/v1/chat/completions",
            BackendKind::Embed => "http://127.0.0.1:8080/v1/embeddings",
        };
        out.push_str(&format!(
            "\n[[backends]]\nname = \"{name}\"\nkind = \"{kind}\"\nendpoint = \"{endpoint}\"\nmodel_id = \"{name}\"\napi_key_env = \"HTP_API_KEY\"\n"
        ));
        if let Some(d) = dim {
            out.push_str(&format!("dim = {d}\n"));
        }
    }
    out
}

/// Cases stored by [`demo_init`]: HTR-38, the 45M fusion case and the
/// synthetic 307-case corpus.
pub fn demo_cases() -> Vec<CaseRecord> {
    let mut cases = vec![fixtures::htr38_case(), fixtures::case_45m()];
    cases.extend(fixtures::synthetic_corpus(DEMO_SEED).cases);
    cases
}

/// Fixture backends under their demo names.
pub fn demo_backends() -> Vec<Arc<dyn Backend>> {
    let mut out: Vec<Arc<dyn Backend>> = Vec::new();
    for b in fixtures::htr38_backends() {
        out.push(Arc::new(b));
    }
    let fx = fixtures::fusion_45m();
    for b in fx.interpreters {
        out.push(Arc::new(b));
    }
    out.push(Arc::new(fx.extractor));
    out.push(Arc::new(fx.embedder));
    out.push(Arc::new(fx.merger));
    let corpus = fixtures::synthetic_corpus(DEMO_SEED);
    out.push(Arc::new(corpus.generator));
    out.push(Arc::new(corpus.embedder));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSummary {
    pub config: PathBuf,
    pub cases: usize,
    pub scripts: Vec<PathBuf>,
}

/// Writes a self-contained offline workspace under `dir`: config, prompt
/// templates, schema, a store with the demo cases and mock scripts
/// recorded from the fixture backends.
pub fn demo_init(dir: &Path, force: bool) -> Result<DemoSummary, WorkflowError> {
    let config_path = dir.join(CONFIG_FILE);
    if config_path.exists() && !force {
        return Err(StoreError::Exists(config_path).into());
    }
    for sub in ["store", "mocks", "schema"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let prompt_dir = dir.join("prompts");
    PromptLibrary::builtin()
        .write_to(&prompt_dir)
        .map_err(io_err(&prompt_dir))?;
    store::write_atomic(
        &dir.join("schema/observation.v1.json"),
        ObservationSchema::default_json().as_bytes(),
        force,
    )?;
    store::write_atomic(&config_path, demo_config().as_bytes(), force)?;

    let config = AppConfig::load(&config_path)?;
    let cases = demo_cases();
    let mut store = CaseStore::open(&config.store_root)?;
    for c in &cases {
        store.store_case(c, force)?;
    }

    // record against a scratch copy so the real store stays output-free
    let scratch = tempfile::tempdir().map_err(io_err(dir))?;
    let mut scratch_config = config.clone();
    scratch_config.store_root = scratch.path().to_path_buf();
    let mut ws = Workspace::new(scratch_config, NonZeroUsize::new(4).expect("non-zero"), true)?;
    for c in &cases {
        ws.store.store_case(c, true)?;
    }
    let pool = BackendPool::recording(demo_backends());
    ws.eval_run(&pool)?;
    ws.assess(&pool, fixtures::HTR38_ID)?;
    ws.fuse(&pool, fixtures::CASE_45M_ID)?;
    let scripts = pool.save_recordings(mock_dir(&config)?, force)?;
    Ok(DemoSummary {
        config: config_path,
        cases: cases.len(),
        scripts,
    })
}
