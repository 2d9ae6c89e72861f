//! AI-expert alignment evaluation.
//!
//! For every case the drawing is interpreted by a generation backend with one
//! standard prompt, both the generated and the expert text are embedded, and
//! the cosine similarity of the two vectors is recorded. Statistics and plot
//! data are computed over the resulting records.

pub mod plot;
pub mod stats;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use thiserror::Error;

use crate::canonical::sha256_hex;
use crate::case::{CaseId, CaseRecord, InterpretationText};
use crate::gateway::{
    embed_text, for_each_ordered, run_batch, Backend, EmbeddingVector, GatewayError,
    GenerateRequest,
};
use crate::prompts::{PromptError, PromptLibrary};

pub use plot::{build_plot_data, density_estimate, histogram, Bin, CurvePoint, PlotData};
pub use stats::{
    aggregate_rows, describe, group_statistics, threshold_share, Aggregate, StatsError, StatsRow,
    OVERALL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot compare a zero-norm vector")]
    ZeroNorm,
}

/// Cosine of the angle between `u` and `v`, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SimilarityError> {
    cosine(u.values(), v.values())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub case_id: CaseId,
    pub expert_label: Option<String>,
    pub similarity: f64,
    /// `sha256:<hex>` of the generated text.
    pub ai_text_ref: String,
    /// `sha256:<hex>` of the expert text.
    pub expert_text_ref: String,
}

pub fn text_ref(text: &str) -> String {
    format!("sha256:{}", sha256_hex(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStage {
    Input,
    Generate,
    Embed,
    Similarity,
}

/// A case that produced no record, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: CaseId,
    pub stage: EvalStage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub records: Vec<SimilarityRecord>,
    pub failures: Vec<CaseFailure>,
    /// Generated interpretations keyed by case id.
    pub ai_texts: BTreeMap<String, InterpretationText>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Runs generation, embedding and similarity over `cases`. Per-case
/// failures land in [`CorpusEvaluation::failures`]; records keep case order.
pub fn evaluate_corpus(
    cases: &[CaseRecord],
    generator: &dyn Backend,
    embedder: &dyn Backend,
    prompts: &PromptLibrary,
    prompt_id: &str,
    parallelism: NonZeroUsize,
) -> Result<CorpusEvaluation, EvalError> {
    let prompt = prompts.render(prompt_id, &[])?;
    let mut failures = Vec::new();
    let mut pending: Vec<(&CaseRecord, &str, GenerateRequest)> = Vec::new();
    for case in cases {
        let expert = case
            .expert_interpretation
            .as_deref()
            .filter(|t| !t.trim().is_empty());
        let Some(expert) = expert else {
            failures.push(CaseFailure {
                case_id: case.id.clone(),
                stage: EvalStage::Input,
                message: "case has no expert interpretation text".into(),
            });
            continue;
        };
        match GenerateRequest::new(Some(case.image.clone()), prompt.clone(), prompt_id) {
            Ok(req) => pending.push((case, expert, req)),
            Err(e) => failures.push(CaseFailure {
                case_id: case.id.clone(),
                stage: EvalStage::Generate,
                message: e.to_string(),
            }),
        }
    }

    let requests: Vec<GenerateRequest> = pending.iter().map(|(_, _, r)| r.clone()).collect();
    let generated = run_batch(generator, &requests, parallelism);

    let mut ai_texts = BTreeMap::new();
    let mut to_embed: Vec<(&CaseRecord, &str, InterpretationText)> = Vec::new();
    for ((case, expert, _), outcome) in pending.into_iter().zip(generated) {
        match outcome {
            Ok(g) => to_embed.push((case, expert, g.text)),
            Err(e) => failures.push(CaseFailure {
                case_id: case.id.clone(),
                stage: EvalStage::Generate,
                message: e.to_string(),
            }),
        }
    }

    let embedded: Vec<Result<(EmbeddingVector, EmbeddingVector), GatewayError>> =
        for_each_ordered(&to_embed, parallelism, |_, (_, expert, ai)| {
            Ok((embed_text(embedder, &ai.text)?, embed_text(embedder, expert)?))
        });

    let mut records = Vec::new();
    for ((case, expert, ai), vectors) in to_embed.into_iter().zip(embedded) {
        let fail = |stage, message: String| CaseFailure {
            case_id: case.id.clone(),
            stage,
            message,
        };
        let (ai_vec, expert_vec) = match vectors {
            Ok(v) => v,
            Err(e) => {
                failures.push(fail(EvalStage::Embed, e.to_string()));
                continue;
            }
        };
        match cosine_similarity(&ai_vec, &expert_vec) {
            Ok(similarity) => {
                records.push(SimilarityRecord {
                    case_id: case.id.clone(),
                    expert_label: case.expert_label.clone(),
                    similarity,
                    ai_text_ref: text_ref(&ai.text),
                    expert_text_ref: text_ref(expert),
                });
                ai_texts.insert(case.id.to_string(), ai);
            }
            Err(e) => failures.push(fail(EvalStage::Similarity, e.to_string())),
        }
    }

    // failures were collected stage by stage; report them in case order
    let order: BTreeMap<&CaseId, usize> = cases.iter().enumerate().map(|(i, c)| (&c.id, i)).collect();
    failures.sort_by_key(|f| order.get(&f.case_id).copied().unwrap_or(usize::MAX));

    Ok(CorpusEvaluation {
        records,
        failures,
        ai_texts,
    })
}
