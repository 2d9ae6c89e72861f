//! Single-case assessment: Observer, Interpreter, Zeitgeist and Listener
//! stages run in that order, each consuming only earlier stage outputs and
//! case metadata. Optional critique rounds let the next stage's backend
//! review an output before it is handed on.

pub mod critique;
pub mod format;
pub mod schema;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::canonical;
use crate::case::{validate_radar, CaseId, CaseRecord, RadarError, RadarScores};
use crate::gateway::{Backend, GatewayError, GenerateRequest};
use crate::prompts::{self, PromptError, PromptLibrary};

pub use critique::{critique_round, CritiqueEntry, CritiqueOutcome};
pub use format::{radar_chart, render_report, RadarAxis, RadarChart};
pub use schema::{
    validate_observation, LeafType, ObservationSchema, ObservationValue, SchemaError, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Observer,
    Interpreter,
    Zeitgeist,
    Listener,
}

impl Stage {
    pub const ORDER: [Stage; 4] = [
        Stage::Observer,
        Stage::Interpreter,
        Stage::Zeitgeist,
        Stage::Listener,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Observer => "observer",
            Stage::Interpreter => "interpreter",
            Stage::Zeitgeist => "zeitgeist",
            Stage::Listener => "listener",
        }
    }

    pub fn prompt_id(self) -> &'static str {
        match self {
            Stage::Observer => prompts::OBSERVER,
            Stage::Interpreter => prompts::INTERPRETER,
            Stage::Zeitgeist => prompts::ZEITGEIST,
            Stage::Listener => prompts::LISTENER,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} backend failed: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{stage} response is not the expected JSON: {message}")]
    Malformed { stage: Stage, message: String },
    #[error("observation fails the schema: {}", join_violations(.0))]
    InvalidObservation(Vec<Violation>),
    #[error("evidence chain {claim:?} cites no observations")]
    EmptyEvidence { claim: String },
    #[error("evidence chain {claim:?} cites {path}, which the observation does not contain")]
    DanglingEvidence { claim: String, path: String },
    #[error("evidence chain has an empty claim")]
    EmptyClaim,
    #[error("dossier has neither strengths nor growth areas")]
    NoFindings,
    #[error("invalid radar: {0}")]
    Radar(#[from] RadarError),
    #[error("contextual finding {index} has no source note")]
    MissingSourceNote { index: usize },
    #[error("context brief has an empty destigmatising note")]
    EmptyDestigmatisingNote,
    #[error("report structure: {0}")]
    Structure(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Case metadata visible to the text-only stages. It carries no image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseContext {
    pub case_id: CaseId,
    pub subject_note: String,
}

impl From<&CaseRecord> for CaseContext {
    fn from(case: &CaseRecord) -> Self {
        Self {
            case_id: case.id.clone(),
            subject_note: case.subject_note.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub case_id: CaseId,
    pub schema_version: String,
    pub values: BTreeMap<String, ObservationValue>,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceChain {
    pub claim: String,
    pub observations: Vec<String>,
    pub theory_basis: String,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefenceMechanism {
    pub name: String,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpretationDossier {
    pub case_id: CaseId,
    pub strengths: Vec<EvidenceChain>,
    pub growth_areas: Vec<EvidenceChain>,
    pub defence_mechanisms: Vec<DefenceMechanism>,
    pub radar: RadarScores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualFinding {
    pub observation: String,
    pub societal_frame: String,
    pub source_note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBrief {
    pub case_id: CaseId,
    pub contextual_findings: Vec<ContextualFinding>,
    pub destigmatising_note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goals {
    pub short_term: Vec<String>,
    pub medium_term: Vec<String>,
    pub long_term: Vec<String>,
    /// Horizons deliberately left empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged_empty: Vec<String>,
}

/// Field order is the serialized order: the narrative precedes the actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpathicReport {
    pub case_id: CaseId,
    pub strengths_first_narrative: String,
    pub actions: Vec<String>,
    pub goals: Goals,
    pub support_network_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentBundle {
    pub case_id: CaseId,
    pub schema_version: String,
    /// Stage name to the prompt template id it used.
    pub prompt_ids: BTreeMap<String, String>,
    pub observation: ObservationRecord,
    pub dossier: InterpretationDossier,
    pub context: ContextBrief,
    pub report: EmpathicReport,
    pub critique_transcript: Vec<CritiqueEntry>,
}

/// What survived a failed run, labeled with the stage that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialRecord {
    pub case_id: CaseId,
    pub failed_at: Stage,
    pub error: String,
    pub observation: Option<ObservationRecord>,
    pub dossier: Option<InterpretationDossier>,
    pub context: Option<ContextBrief>,
    pub critique_transcript: Vec<CritiqueEntry>,
}

#[derive(Debug, Error)]
#[error("pipeline failed at {failed_at}: {error}")]
pub struct PipelineFailure {
    pub failed_at: Stage,
    #[source]
    pub error: PipelineError,
    pub partial: PartialRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub max_critique_rounds: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_critique_rounds: 1,
        }
    }
}

/// One backend per stage.
#[derive(Clone, Copy)]
pub struct StageBackends<'a> {
    pub observer: &'a dyn Backend,
    pub interpreter: &'a dyn Backend,
    pub zeitgeist: &'a dyn Backend,
    pub listener: &'a dyn Backend,
}

/// Parses a model answer as one JSON object, tolerating a surrounding code
/// fence or leading prose.
pub fn json_object(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed)
        .trim();
    if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(unfenced) {
        return Ok(v);
    }
    let sliced = match (unfenced.find('{'), unfenced.rfind('}')) {
        (Some(a), Some(b)) if a < b => &unfenced[a..=b],
        _ => unfenced,
    };
    match serde_json::from_str::<Value>(sliced) {
        Ok(v @ Value::Object(_)) => Ok(v),
        Ok(_) => Err("expected a JSON object".into()),
        Err(e) => Err(e.to_string()),
    }
}

pub fn extract_json(stage: Stage, text: &str) -> Result<Value, PipelineError> {
    json_object(text).map_err(|message| PipelineError::Malformed { stage, message })
}

fn malformed(stage: Stage, e: impl fmt::Display) -> PipelineError {
    PipelineError::Malformed {
        stage,
        message: e.to_string(),
    }
}

fn ask(
    stage: Stage,
    backend: &dyn Backend,
    req: &GenerateRequest,
) -> Result<Value, PipelineError> {
    let reply = backend
        .generate(req)
        .map_err(|source| PipelineError::Backend { stage, source })?;
    extract_json(stage, &reply.value)
}

fn request(
    stage: Stage,
    image: Option<crate::case::DrawingArtifact>,
    prompt: String,
) -> Result<GenerateRequest, PipelineError> {
    GenerateRequest::new(image, prompt, stage.prompt_id())
        .map_err(|source| PipelineError::Backend { stage, source })
}

fn pretty<T: Serialize>(value: &T) -> String {
    canonical::to_canonical_json(value).expect("stage outputs serialize")
}

/// Builds an observation record from an observer answer of the form
/// `{"values": {...}}`. Every key and value is checked; nothing is dropped.
pub fn parse_observation(
    ctx: &CaseContext,
    schema: &ObservationSchema,
    source: &str,
    answer: &Value,
) -> Result<ObservationRecord, PipelineError> {
    let values = answer
        .get("values")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed(Stage::Observer, "missing \"values\" object"))?;
    let mut record = ObservationRecord {
        case_id: ctx.case_id.clone(),
        schema_version: schema.version().to_string(),
        values: BTreeMap::new(),
        source: source.to_string(),
    };
    let mut violations = Vec::new();
    for (path, raw) in values {
        let value = match raw {
            Value::Bool(b) => ObservationValue::Bool(*b),
            Value::Number(n) => ObservationValue::Number(n.as_f64().unwrap_or(f64::NAN)),
            Value::String(s) => ObservationValue::Text(s.clone()),
            other => {
                let found = match other {
                    Value::Null => "null",
                    Value::Array(_) => "array",
                    _ => "object",
                };
                match schema.leaf(path) {
                    None => violations.push(Violation::UnknownPath { path: path.clone() }),
                    Some(leaf) => violations.push(Violation::TypeMismatch {
                        path: path.clone(),
                        expected: leaf.describe(),
                        found: found.into(),
                    }),
                }
                continue;
            }
        };
        record.values.insert(path.clone(), value);
    }
    if let Err(more) = validate_observation(&record, schema) {
        violations.extend(more);
    }
    if violations.is_empty() {
        Ok(record)
    } else {
        Err(PipelineError::InvalidObservation(violations))
    }
}

pub fn run_observer(
    case: &CaseRecord,
    backend: &dyn Backend,
    schema: &ObservationSchema,
    prompts: &PromptLibrary,
) -> Result<ObservationRecord, PipelineError> {
    let ctx = CaseContext::from(case);
    let catalog = schema.catalog();
    let prompt = prompts.render(
        prompts::OBSERVER,
        &[
            ("case_id", ctx.case_id.as_str()),
            ("subject_note", &ctx.subject_note),
            ("schema_version", schema.version()),
            ("leaf_catalog", &catalog),
        ],
    )?;
    let req = request(Stage::Observer, Some(case.image.clone()), prompt)?;
    let answer = ask(Stage::Observer, backend, &req)?;
    parse_observation(&ctx, schema, backend.name(), &answer)
}

#[derive(Deserialize)]
struct DossierDraft {
    #[serde(default)]
    strengths: Vec<EvidenceChain>,
    #[serde(default)]
    growth_areas: Vec<EvidenceChain>,
    #[serde(default)]
    defence_mechanisms: Vec<DefenceMechanism>,
    radar: BTreeMap<String, i64>,
}

/// Referential integrity of a dossier against its observation record.
pub fn check_dossier(
    dossier: &InterpretationDossier,
    observation: &ObservationRecord,
) -> Result<(), PipelineError> {
    if dossier.strengths.is_empty() && dossier.growth_areas.is_empty() {
        return Err(PipelineError::NoFindings);
    }
    for chain in dossier.strengths.iter().chain(&dossier.growth_areas) {
        if chain.claim.trim().is_empty() {
            return Err(PipelineError::EmptyClaim);
        }
        if chain.observations.is_empty() {
            return Err(PipelineError::EmptyEvidence {
                claim: chain.claim.clone(),
            });
        }
        if let Some(path) = chain
            .observations
            .iter()
            .find(|p| !observation.values.contains_key(*p))
        {
            return Err(PipelineError::DanglingEvidence {
                claim: chain.claim.clone(),
                path: path.clone(),
            });
        }
    }
    Ok(())
}

pub fn parse_dossier(
    ctx: &CaseContext,
    observation: &ObservationRecord,
    answer: &Value,
) -> Result<InterpretationDossier, PipelineError> {
    let draft: DossierDraft =
        serde_json::from_value(answer.clone()).map_err(|e| malformed(Stage::Interpreter, e))?;
    let radar = validate_radar(&draft.radar)?;
    let dossier = InterpretationDossier {
        case_id: ctx.case_id.clone(),
        strengths: draft.strengths,
        growth_areas: draft.growth_areas,
        defence_mechanisms: draft.defence_mechanisms,
        radar,
    };
    check_dossier(&dossier, observation)?;
    Ok(dossier)
}

/// The request carries the observation record and case metadata only.
pub fn interpreter_request(
    ctx: &CaseContext,
    observation: &ObservationRecord,
    prompts: &PromptLibrary,
) -> Result<GenerateRequest, PipelineError> {
    let prompt = prompts.render(
        prompts::INTERPRETER,
        &[
            ("case_id", ctx.case_id.as_str()),
            ("subject_note", &ctx.subject_note),
            ("observation_json", &pretty(observation)),
        ],
    )?;
    request(Stage::Interpreter, None, prompt)
}

pub fn run_interpreter(
    ctx: &CaseContext,
    observation: &ObservationRecord,
    backend: &dyn Backend,
    prompts: &PromptLibrary,
) -> Result<InterpretationDossier, PipelineError> {
    let req = interpreter_request(ctx, observation, prompts)?;
    let answer = ask(Stage::Interpreter, backend, &req)?;
    parse_dossier(ctx, observation, &answer)
}

#[derive(Deserialize)]
struct BriefDraft {
    #[serde(default)]
    contextual_findings: Vec<ContextualFinding>,
    destigmatising_note: String,
}

pub fn check_brief(brief: &ContextBrief) -> Result<(), PipelineError> {
    if let Some(index) = brief
        .contextual_findings
        .iter()
        .position(|f| f.source_note.trim().is_empty())
    {
        return Err(PipelineError::MissingSourceNote { index });
    }
    if brief.destigmatising_note.trim().is_empty() {
        return Err(PipelineError::EmptyDestigmatisingNote);
    }
    Ok(())
}

pub fn parse_brief(ctx: &CaseContext, answer: &Value) -> Result<ContextBrief, PipelineError> {
    let draft: BriefDraft =
        serde_json::from_value(answer.clone()).map_err(|e| malformed(Stage::Zeitgeist, e))?;
    let brief = ContextBrief {
        case_id: ctx.case_id.clone(),
        contextual_findings: draft.contextual_findings,
        destigmatising_note: draft.destigmatising_note,
    };
    check_brief(&brief)?;
    Ok(brief)
}

pub fn run_zeitgeist(
    ctx: &CaseContext,
    dossier: &InterpretationDossier,
    backend: &dyn Backend,
    prompts: &PromptLibrary,
) -> Result<ContextBrief, PipelineError> {
    let prompt = prompts.render(
        prompts::ZEITGEIST,
        &[
            ("case_id", ctx.case_id.as_str()),
            ("subject_note", &ctx.subject_note),
            ("dossier_json", &pretty(dossier)),
        ],
    )?;
    let req = request(Stage::Zeitgeist, None, prompt)?;
    let answer = ask(Stage::Zeitgeist, backend, &req)?;
    parse_brief(ctx, &answer)
}

#[derive(Deserialize)]
struct GoalsDraft {
    short_term: Option<Vec<String>>,
    medium_term: Option<Vec<String>>,
    long_term: Option<Vec<String>>,
    #[serde(default)]
    flagged_empty: Vec<String>,
}

#[derive(Deserialize)]
struct ReportDraft {
    strengths_first_narrative: String,
    #[serde(default)]
    actions: Vec<String>,
    goals: Option<GoalsDraft>,
    #[serde(default)]
    support_network_note: String,
}

const HORIZONS: [&str; 3] = ["short_term", "medium_term", "long_term"];

pub fn check_report(report: &EmpathicReport) -> Result<(), PipelineError> {
    if report.strengths_first_narrative.trim().is_empty() {
        return Err(PipelineError::Structure(
            "strengths_first_narrative is empty".into(),
        ));
    }
    let g = &report.goals;
    if let Some(flag) = g.flagged_empty.iter().find(|f| !HORIZONS.contains(&f.as_str())) {
        return Err(PipelineError::Structure(format!(
            "flagged_empty names unknown horizon {flag}"
        )));
    }
    for (name, list) in HORIZONS
        .iter()
        .zip([&g.short_term, &g.medium_term, &g.long_term])
    {
        if list.is_empty() && !g.flagged_empty.iter().any(|f| f == name) {
            return Err(PipelineError::Structure(format!(
                "goals.{name} is empty and not flagged"
            )));
        }
    }
    Ok(())
}

pub fn parse_report(ctx: &CaseContext, answer: &Value) -> Result<EmpathicReport, PipelineError> {
    let draft: ReportDraft =
        serde_json::from_value(answer.clone()).map_err(|e| malformed(Stage::Listener, e))?;
    let goals = draft
        .goals
        .ok_or_else(|| PipelineError::Structure("goals are missing".into()))?;
    let missing: Vec<&str> = HORIZONS
        .iter()
        .zip([&goals.short_term, &goals.medium_term, &goals.long_term])
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::Structure(format!(
            "goal horizon(s) missing: {}",
            missing.join(", ")
        )));
    }
    let flagged: BTreeSet<String> = goals.flagged_empty.into_iter().collect();
    let report = EmpathicReport {
        case_id: ctx.case_id.clone(),
        strengths_first_narrative: draft.strengths_first_narrative,
        actions: draft.actions,
        goals: Goals {
            short_term: goals.short_term.unwrap_or_default(),
            medium_term: goals.medium_term.unwrap_or_default(),
            long_term: goals.long_term.unwrap_or_default(),
            flagged_empty: flagged.into_iter().collect(),
        },
        support_network_note: draft.support_network_note,
    };
    check_report(&report)?;
    Ok(report)
}

pub fn run_listener(
    ctx: &CaseContext,
    dossier: &InterpretationDossier,
    context: &ContextBrief,
    backend: &dyn Backend,
    prompts: &PromptLibrary,
) -> Result<EmpathicReport, PipelineError> {
    let prompt = prompts.render(
        prompts::LISTENER,
        &[
            ("case_id", ctx.case_id.as_str()),
            ("dossier_json", &pretty(dossier)),
            ("context_json", &pretty(context)),
        ],
    )?;
    let req = request(Stage::Listener, None, prompt)?;
    let answer = ask(Stage::Listener, backend, &req)?;
    parse_report(ctx, &answer)
}

/// Runs the four stages in order. After the observer, interpreter and
/// zeitgeist stages the next stage's backend reviews the output for up to
/// `config.max_critique_rounds` rounds.
pub fn run_pipeline(
    case: &CaseRecord,
    backends: StageBackends<'_>,
    config: &PipelineConfig,
    schema: &ObservationSchema,
    prompts: &PromptLibrary,
) -> Result<AssessmentBundle, Box<PipelineFailure>> {
    let ctx = CaseContext::from(case);
    let rounds = config.max_critique_rounds;
    let mut partial = PartialRecord {
        case_id: ctx.case_id.clone(),
        failed_at: Stage::Observer,
        error: String::new(),
        observation: None,
        dossier: None,
        context: None,
        critique_transcript: Vec::new(),
    };
    let fail = |stage: Stage, error: PipelineError, mut partial: PartialRecord| {
        log::warn!("case {}: {stage} failed: {error}", partial.case_id.as_str());
        partial.failed_at = stage;
        partial.error = error.to_string();
        Box::new(PipelineFailure {
            failed_at: stage,
            error,
            partial,
        })
    };

    let observation = match run_observer(case, backends.observer, schema, prompts) {
        Ok(o) => o,
        Err(e) => return Err(fail(Stage::Observer, e, partial)),
    };
    let (observation, mut log) = critique_round(
        Stage::Observer,
        observation,
        backends.interpreter,
        rounds,
        prompts,
        |v| parse_observation(&ctx, schema, backends.observer.name(), v),
    );
    partial.critique_transcript.append(&mut log);
    partial.observation = Some(observation.clone());

    let dossier = match run_interpreter(&ctx, &observation, backends.interpreter, prompts) {
        Ok(d) => d,
        Err(e) => return Err(fail(Stage::Interpreter, e, partial)),
    };
    let (dossier, mut log) = critique_round(
        Stage::Interpreter,
        dossier,
        backends.zeitgeist,
        rounds,
        prompts,
        |v| parse_dossier(&ctx, &observation, v),
    );
    partial.critique_transcript.append(&mut log);
    partial.dossier = Some(dossier.clone());

    let context = match run_zeitgeist(&ctx, &dossier, backends.zeitgeist, prompts) {
        Ok(c) => c,
        Err(e) => return Err(fail(Stage::Zeitgeist, e, partial)),
    };
    let (context, mut log) = critique_round(
        Stage::Zeitgeist,
        context,
        backends.listener,
        rounds,
        prompts,
        |v| parse_brief(&ctx, v),
    );
    partial.critique_transcript.append(&mut log);
    partial.context = Some(context.clone());

    let report = match run_listener(&ctx, &dossier, &context, backends.listener, prompts) {
        Ok(r) => r,
        Err(e) => return Err(fail(Stage::Listener, e, partial)),
    };

    Ok(AssessmentBundle {
        case_id: ctx.case_id,
        schema_version: schema.version().to_string(),
        prompt_ids: Stage::ORDER
            .iter()
            .map(|s| (s.as_str().to_string(), s.prompt_id().to_string()))
            .collect(),
        observation,
        dossier,
        context,
        report,
        critique_transcript: partial.critique_transcript,
    })
}
