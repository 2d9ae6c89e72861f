//! Bounded review/revise cycles between adjacent stages.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{extract_json, pretty, PipelineError, Stage};
use crate::canonical;
use crate::gateway::{Backend, GenerateRequest};
use crate::prompts::{self, PromptLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CritiqueOutcome {
    Approved,
    Revised,
    /// The revision broke the stage's invariants; the prior version was kept.
    Rejected,
    /// The reviewer failed or answered unusably; the prior version was kept.
    ReviewerError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueEntry {
    pub round: u32,
    pub stage: Stage,
    pub reviewer: String,
    pub outcome: CritiqueOutcome,
    pub critique: String,
    /// `sha256:<hex>` of the accepted revision's canonical serialization.
    pub revision_ref: Option<String>,
}

#[derive(Deserialize)]
struct Review {
    verdict: String,
    #[serde(default)]
    critique: String,
    revision: Option<Value>,
}

/// Lets `reviewer` critique `output` for at most `max_rounds` rounds. A
/// revision replaces the output only when `accept` validates it. Reviewer
/// failures end the loop and keep the current version.
pub fn critique_round<T, F>(
    stage: Stage,
    output: T,
    reviewer: &dyn Backend,
    max_rounds: u32,
    prompts: &PromptLibrary,
    accept: F,
) -> (T, Vec<CritiqueEntry>)
where
    T: Serialize,
    F: Fn(&Value) -> Result<T, PipelineError>,
{
    let mut current = output;
    let mut transcript = Vec::new();
    for round in 1..=max_rounds {
        let entry = |outcome, critique: String, revision_ref| CritiqueEntry {
            round,
            stage,
            reviewer: reviewer.name().to_string(),
            outcome,
            critique,
            revision_ref,
        };
        let review = prompts
            .render(
                prompts::CRITIQUE,
                &[("stage", stage.as_str()), ("output_json", &pretty(&current))],
            )
            .map_err(PipelineError::from)
            .and_then(|prompt| {
                GenerateRequest::new(None, prompt, prompts::CRITIQUE)
                    .map_err(|source| PipelineError::Backend { stage, source })
            })
            .and_then(|req| {
                reviewer
                    .generate(&req)
                    .map_err(|source| PipelineError::Backend { stage, source })
            })
            .and_then(|reply| extract_json(stage, &reply.value))
            .and_then(|v| {
                serde_json::from_value::<Review>(v).map_err(|e| PipelineError::Malformed {
                    stage,
                    message: e.to_string(),
                })
            });
        let review = match review {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{stage} critique round {round}: reviewer failed: {e}");
                transcript.push(entry(CritiqueOutcome::ReviewerError, e.to_string(), None));
                break;
            }
        };
        match (review.verdict.as_str(), review.revision) {
            ("approve", _) => {
                transcript.push(entry(CritiqueOutcome::Approved, review.critique, None));
                break;
            }
            ("revise", Some(revision)) => match accept(&revision) {
                Ok(revised) => {
                    let body = canonical::to_canonical_json(&revised)
                        .expect("stage outputs serialize");
                    let digest = format!("sha256:{}", canonical::sha256_hex(body.as_bytes()));
                    current = revised;
                    transcript.push(entry(CritiqueOutcome::Revised, review.critique, Some(digest)));
                }
                Err(e) => {
                    log::warn!("{stage} critique round {round}: revision rejected: {e}");
                    transcript.push(entry(
                        CritiqueOutcome::Rejected,
                        format!("{} [revision rejected: {e}]", review.critique),
                        None,
                    ));
                }
            },
            ("revise", None) => {
                transcript.push(entry(
                    CritiqueOutcome::Rejected,
                    format!("{} [revision rejected: no revision supplied]", review.critique),
                    None,
                ));
            }
            (other, _) => {
                log::warn!("{stage} critique round {round}: unknown verdict {other:?}");
                transcript.push(entry(
                    CritiqueOutcome::ReviewerError,
                    format!("unknown verdict {other:?}"),
                    None,
                ));
                break;
            }
        }
    }
    (current, transcript)
}
