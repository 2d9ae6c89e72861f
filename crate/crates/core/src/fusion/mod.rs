//! Multi-model fusion: several backends interpret the same drawing, their
//! viewpoints are extracted, clustered into consensus, single-source and
//! conflicting findings, routed to risk focuses, and merged into a report
//! with a fixed section layout.

pub mod classify;
pub mod report;
pub mod risk;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeSet;
use std::fmt;
use std::num::NonZeroUsize;
use thiserror::Error;

use crate::case::{CaseRecord, InterpretationText};
use crate::eval::SimilarityError;
use crate::gateway::{for_each_ordered, generate_interpretation, Backend, GatewayError, GenerateRequest};
use crate::pipeline::json_object;
use crate::prompts::{self, PromptError, PromptLibrary};

pub use classify::{
    classify_viewpoints, ClassifiedViewpoints, ConflictFinding, ConflictSide, ConsensusFinding,
    FindingSummary, SupportTier, UnverifiedFinding, DEFAULT_TAU,
};
pub use report::{
    check_principles, render_report_text, synthesize_report, Compliance, FindingRef, Horizon,
    IntegratedReport, Principle, PrincipleResult, Recommendation, ReportSection, SectionKind,
};
pub use risk::{assess_risk, Focus, RiskAssessment, RiskEntry, RiskRule, RiskRules, Severity};

/// Fewest distinct interpretation backends a fusion run accepts.
pub const MIN_BACKENDS: usize = 3;
/// Fewest successful interpretations needed to continue; configurable
/// upwards.
pub const MIN_SURVIVORS: usize = 2;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("fusion needs at least {MIN_BACKENDS} distinct backends, got {0}")]
    TooFewBackends(usize),
    #[error("backend {0} is listed twice")]
    DuplicateBackend(String),
    #[error("only {succeeded} interpretation(s) succeeded, {required} required")]
    InsufficientInterpretations { succeeded: usize, required: usize },
    #[error("backend {backend} failed: {source}")]
    Gateway {
        backend: String,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{what} is not the expected JSON: {message}")]
    Malformed { what: String, message: String },
    #[error("interpretation text is empty")]
    EmptyInterpretation,
    #[error("unknown viewpoint dimension {0:?}")]
    UnknownDimension(String),
    #[error("unknown stance {0:?}")]
    UnknownStance(String),
    #[error("viewpoint {0} has an empty statement")]
    EmptyStatement(String),
    #[error("viewpoint id {0} appears more than once")]
    DuplicateViewpoint(String),
    #[error("viewpoints come from {0} source model(s); at least 2 are required")]
    TooFewSources(usize),
    #[error("tau must lie strictly between 0 and 1, got {0}")]
    TauOutOfRange(f64),
    #[error("embedding viewpoint {id}: {source}")]
    Embedding {
        id: String,
        #[source]
        source: GatewayError,
    },
    #[error("comparing viewpoints {a} and {b}: {source}")]
    Similarity {
        a: String,
        b: String,
        #[source]
        source: SimilarityError,
    },
    #[error("merger referenced unknown finding {0}")]
    UnknownFinding(String),
    #[error("merger draft has no {0} section")]
    MissingSection(String),
    #[error("merger draft has an unexpected section {0}")]
    UnexpectedSection(String),
    #[error("section {0} has empty text")]
    EmptySection(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    House,
    Tree,
    Person,
    OverallLayout,
    StrokeFeatures,
    SpecialSymbolsOmissions,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::House,
        Dimension::Tree,
        Dimension::Person,
        Dimension::OverallLayout,
        Dimension::StrokeFeatures,
        Dimension::SpecialSymbolsOmissions,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Dimension::House => "house",
            Dimension::Tree => "tree",
            Dimension::Person => "person",
            Dimension::OverallLayout => "overall_layout",
            Dimension::StrokeFeatures => "stroke_features",
            Dimension::SpecialSymbolsOmissions => "special_symbols_omissions",
        }
    }

    pub fn parse(raw: &str) -> Result<Self, FusionError> {
        let norm = raw.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|d| d.key() == norm)
            .ok_or_else(|| FusionError::UnknownDimension(raw.to_string()))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Positive,
    Concern,
    Neutral,
}

impl Stance {
    pub fn parse(raw: &str) -> Result<Self, FusionError> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Stance::Positive),
            "concern" => Ok(Stance::Concern),
            "neutral" => Ok(Stance::Neutral),
            _ => Err(FusionError::UnknownStance(raw.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: String,
    pub source_model: String,
    pub dimension: Dimension,
    pub statement: String,
    pub stance: Stance,
}

impl Viewpoint {
    pub fn new(
        id: impl Into<String>,
        source_model: impl Into<String>,
        dimension: Dimension,
        statement: impl Into<String>,
        stance: Stance,
    ) -> Result<Self, FusionError> {
        let id = id.into();
        let statement = statement.into();
        if statement.trim().is_empty() {
            return Err(FusionError::EmptyStatement(id));
        }
        Ok(Self {
            id,
            source_model: source_model.into(),
            dimension,
            statement,
            stance,
        })
    }
}

/// One backend's interpretation, or the labeled reason it is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpretationSlot {
    pub source_model: String,
    pub interpretation: Option<InterpretationText>,
    pub gap: Option<String>,
}

/// Asks every backend for an independent interpretation of the drawing.
/// Slots follow backend order. Fewer than `min_survivors` successes (never
/// below [`MIN_SURVIVORS`]) is an error.
pub fn parallel_interpret(
    case: &CaseRecord,
    backends: &[&dyn Backend],
    prompts: &PromptLibrary,
    prompt_id: &str,
    parallelism: NonZeroUsize,
    min_survivors: usize,
) -> Result<Vec<InterpretationSlot>, FusionError> {
    let required = min_survivors.max(MIN_SURVIVORS);
    let mut names = BTreeSet::new();
    for b in backends {
        if !names.insert(b.name()) {
            return Err(FusionError::DuplicateBackend(b.name().to_string()));
        }
    }
    if names.len() < MIN_BACKENDS {
        return Err(FusionError::TooFewBackends(names.len()));
    }
    let prompt = prompts.render(
        prompt_id,
        &[
            ("case_id", case.id.as_str()),
            ("subject_note", &case.subject_note),
        ],
    )?;
    let req = GenerateRequest::new(Some(case.image.clone()), prompt, prompt_id).map_err(|source| {
        FusionError::Gateway {
            backend: "request".into(),
            source,
        }
    })?;
    let slots = for_each_ordered(backends, parallelism, |_, backend| {
        match generate_interpretation(*backend, &req) {
            Ok(g) => InterpretationSlot {
                source_model: backend.name().to_string(),
                interpretation: Some(g.text),
                gap: None,
            },
            Err(e) => {
                log::warn!("interpretation by {} failed: {e}", backend.name());
                InterpretationSlot {
                    source_model: backend.name().to_string(),
                    interpretation: None,
                    gap: Some(e.to_string()),
                }
            }
        }
    });
    let succeeded = slots.iter().filter(|s| s.interpretation.is_some()).count();
    if succeeded < required {
        return Err(FusionError::InsufficientInterpretations { succeeded, required });
    }
    Ok(slots)
}

#[derive(Deserialize)]
struct ExtractedDraft {
    viewpoints: Vec<ViewpointDraft>,
}

#[derive(Deserialize)]
struct ViewpointDraft {
    dimension: String,
    statement: String,
    stance: String,
}

/// Extracts tagged viewpoints from one interpretation. Ids are
/// `<source_model>#<n>` in extraction order.
pub fn extract_viewpoints(
    interpretation: &InterpretationText,
    extractor: &dyn Backend,
    prompts: &PromptLibrary,
) -> Result<Vec<Viewpoint>, FusionError> {
    if interpretation.text.trim().is_empty() {
        return Err(FusionError::EmptyInterpretation);
    }
    let prompt = prompts.render(
        prompts::FUSION_EXTRACT,
        &[
            ("source_model", &interpretation.source),
            ("interpretation", &interpretation.text),
        ],
    )?;
    let gateway = |source| FusionError::Gateway {
        backend: extractor.name().to_string(),
        source,
    };
    let req = GenerateRequest::new(None, prompt, prompts::FUSION_EXTRACT).map_err(gateway)?;
    let reply = extractor.generate(&req).map_err(gateway)?;
    let value = parse_object("viewpoint extraction", &reply.value)?;
    let draft: ExtractedDraft = serde_json::from_value(value).map_err(|e| FusionError::Malformed {
        what: "viewpoint extraction".into(),
        message: e.to_string(),
    })?;
    draft
        .viewpoints
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            Viewpoint::new(
                format!("{}#{}", interpretation.source, i + 1),
                interpretation.source.clone(),
                Dimension::parse(&d.dimension)?,
                d.statement,
                Stance::parse(&d.stance)?,
            )
        })
        .collect()
}

pub(crate) fn parse_object(what: &str, text: &str) -> Result<Value, FusionError> {
    json_object(text).map_err(|message| FusionError::Malformed {
        what: what.to_string(),
        message,
    })
}

/// Backends and settings for one fusion run.
pub struct FusionBackends<'a> {
    pub interpreters: Vec<&'a dyn Backend>,
    pub extractor: &'a dyn Backend,
    pub embedder: &'a dyn Backend,
    pub merger: &'a dyn Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub tau: f64,
    pub parallelism: NonZeroUsize,
    pub min_survivors: usize,
    pub rules: RiskRules,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            parallelism: NonZeroUsize::new(crate::gateway::batch::DEFAULT_PARALLELISM)
                .expect("non-zero"),
            min_survivors: MIN_SURVIVORS,
            rules: RiskRules::default(),
        }
    }
}

/// Every artifact of a fusion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionOutputs {
    pub interpretations: Vec<InterpretationSlot>,
    pub viewpoints: Vec<Viewpoint>,
    pub classified: ClassifiedViewpoints,
    pub risk: RiskAssessment,
    pub report: IntegratedReport,
    pub compliance: Compliance,
}

pub fn run_fusion(
    case: &CaseRecord,
    backends: &FusionBackends<'_>,
    config: &FusionConfig,
    prompts: &PromptLibrary,
) -> Result<FusionOutputs, FusionError> {
    let interpretations = parallel_interpret(
        case,
        &backends.interpreters,
        prompts,
        prompts::FUSION_INTERPRET,
        config.parallelism,
        config.min_survivors,
    )?;
    let mut viewpoints = Vec::new();
    for slot in &interpretations {
        if let Some(text) = &slot.interpretation {
            viewpoints.extend(extract_viewpoints(text, backends.extractor, prompts)?);
        }
    }
    let classified = classify_viewpoints(&viewpoints, backends.embedder, config.tau)?;
    let risk = assess_risk(&classified, &config.rules);
    let report = synthesize_report(case.id.as_str(), &classified, &risk, backends.merger, prompts)?;
    let compliance = check_principles(&report, &classified);
    Ok(FusionOutputs {
        interpretations,
        viewpoints,
        classified,
        risk,
        report,
        compliance,
    })
}
