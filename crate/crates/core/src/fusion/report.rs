//! Integrated report synthesis and the four principle checks.
//!
//! The merger backend only drafts prose. Finding references, tiers and
//! source citations are attached from the classification, and any finding
//! id the draft mentions must exist there.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::OnceLock;

use super::classify::{ClassifiedViewpoints, SupportTier};
use super::risk::{RiskAssessment, ALL_FOCUSES};
use super::{parse_object, FusionError};
use crate::canonical;
use crate::gateway::{Backend, GenerateRequest};
use crate::prompts::{self, PromptLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    ExecutiveSummary,
    DetailedAnalysis,
    PriorityConcernsAndWarnings,
    SupportRecommendations,
    Limitations,
}

impl SectionKind {
    pub const ORDER: [SectionKind; 5] = [
        SectionKind::ExecutiveSummary,
        SectionKind::DetailedAnalysis,
        SectionKind::PriorityConcernsAndWarnings,
        SectionKind::SupportRecommendations,
        SectionKind::Limitations,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SectionKind::ExecutiveSummary => "executive_summary",
            SectionKind::DetailedAnalysis => "detailed_analysis",
            SectionKind::PriorityConcernsAndWarnings => "priority_concerns_and_warnings",
            SectionKind::SupportRecommendations => "support_recommendations",
            SectionKind::Limitations => "limitations",
        }
    }

    pub fn heading(self) -> &'static str {
        match self {
            SectionKind::ExecutiveSummary => "Executive Summary",
            SectionKind::DetailedAnalysis => "Detailed Analysis",
            SectionKind::PriorityConcernsAndWarnings => "Priority Concerns and Warnings",
            SectionKind::SupportRecommendations => "Support Recommendations",
            SectionKind::Limitations => "Limitations",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Immediate,
    ShortTerm,
    LongTerm,
}

impl Horizon {
    pub fn label(self) -> &'static str {
        match self {
            Horizon::Immediate => "Immediate",
            Horizon::ShortTerm => "Short term",
            Horizon::LongTerm => "Long term",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub horizon: Horizon,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingRef {
    pub id: String,
    pub tier: SupportTier,
    pub statement: String,
    /// Source interpretations (model names) the finding rests on.
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub kind: SectionKind,
    pub text: String,
    pub findings: Vec<FindingRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recommendations: Vec<Recommendation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratedReport {
    pub case_id: String,
    pub sections: Vec<ReportSection>,
    /// Finding ids flagged as red flags by the risk assessment.
    pub red_flags: Vec<String>,
}

impl IntegratedReport {
    pub fn section(&self, kind: SectionKind) -> Option<&ReportSection> {
        self.sections.iter().find(|s| s.kind == kind)
    }

    pub fn section_mut(&mut self, kind: SectionKind) -> Option<&mut ReportSection> {
        self.sections.iter_mut().find(|s| s.kind == kind)
    }

    /// Exactly the five sections, in order, each with text.
    pub fn check_structure(&self) -> Vec<String> {
        let kinds: Vec<SectionKind> = self.sections.iter().map(|s| s.kind).collect();
        let mut problems = Vec::new();
        if kinds != SectionKind::ORDER {
            problems.push(format!("sections are {kinds:?}, expected the fixed five-section order"));
        }
        for s in &self.sections {
            if s.text.trim().is_empty() {
                problems.push(format!("{} has no text", s.kind.heading()));
            }
        }
        problems
    }
}

#[derive(Deserialize)]
struct SectionDraft {
    text: String,
    #[serde(default)]
    cites: Vec<String>,
}

#[derive(Deserialize)]
struct RecommendationDraft {
    horizon: Horizon,
    text: String,
}

#[derive(Deserialize)]
struct MergeDraft {
    sections: BTreeMap<String, SectionDraft>,
    #[serde(default)]
    recommendations: Vec<RecommendationDraft>,
}

fn id_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([CDU][0-9]+)\]").expect("static regex"))
}

/// Drafts the report with `merger` and attaches finding references.
pub fn synthesize_report(
    case_id: &str,
    classified: &ClassifiedViewpoints,
    risk: &RiskAssessment,
    merger: &dyn Backend,
    prompts: &PromptLibrary,
) -> Result<IntegratedReport, FusionError> {
    let findings = classified.findings();
    let findings_json = canonical::to_canonical_json(&findings).expect("findings serialize");
    let risk_json = canonical::to_canonical_json(risk).expect("risk serializes");
    let prompt = prompts.render(
        prompts::FUSION_MERGE,
        &[
            ("case_id", case_id),
            ("findings_json", &findings_json),
            ("risk_json", &risk_json),
        ],
    )?;
    let gateway = |source| FusionError::Gateway {
        backend: merger.name().to_string(),
        source,
    };
    let req = GenerateRequest::new(None, prompt, prompts::FUSION_MERGE).map_err(gateway)?;
    let reply = merger.generate(&req).map_err(gateway)?;
    let value = parse_object("merger draft", &reply.value)?;
    let mut draft: MergeDraft =
        serde_json::from_value(value).map_err(|e| FusionError::Malformed {
            what: "merger draft".into(),
            message: e.to_string(),
        })?;

    if let Some(extra) = draft
        .sections
        .keys()
        .find(|k| !SectionKind::ORDER.iter().any(|s| s.key() == k.as_str()))
    {
        return Err(FusionError::UnexpectedSection(extra.clone()));
    }

    let known: BTreeMap<&str, usize> = findings
        .iter()
        .enumerate()
        .map(|(i, f)| (f.id.as_str(), i))
        .collect();
    let flagged: BTreeSet<&str> = risk.red_flags.iter().map(|e| e.finding_ref.as_str()).collect();
    let at_risk: BTreeSet<&str> = ALL_FOCUSES
        .iter()
        .flat_map(|f| risk.entries(*f))
        .map(|e| e.finding_ref.as_str())
        .collect();

    let mut sections = Vec::new();
    for kind in SectionKind::ORDER {
        let s = draft
            .sections
            .remove(kind.key())
            .ok_or_else(|| FusionError::MissingSection(kind.key().to_string()))?;
        if s.text.trim().is_empty() {
            return Err(FusionError::EmptySection(kind.key().to_string()));
        }
        let mut refs: BTreeSet<usize> = BTreeSet::new();
        let mentioned = id_token()
            .captures_iter(&s.text)
            .map(|c| c[1].to_string())
            .chain(s.cites.iter().map(|c| c.trim().to_string()));
        for id in mentioned {
            let idx = known
                .get(id.as_str())
                .ok_or_else(|| FusionError::UnknownFinding(id.clone()))?;
            refs.insert(*idx);
        }
        match kind {
            SectionKind::DetailedAnalysis => refs.extend(0..findings.len()),
            SectionKind::PriorityConcernsAndWarnings => {
                refs.extend(at_risk.iter().chain(&flagged).map(|id| known[id]));
            }
            _ => {}
        }
        let recommendations = if kind == SectionKind::SupportRecommendations {
            draft
                .recommendations
                .drain(..)
                .map(|r| Recommendation {
                    horizon: r.horizon,
                    text: r.text,
                })
                .collect()
        } else {
            Vec::new()
        };
        sections.push(ReportSection {
            kind,
            text: s.text,
            findings: refs
                .into_iter()
                .map(|i| {
                    let f = &findings[i];
                    FindingRef {
                        id: f.id.clone(),
                        tier: f.tier,
                        statement: f.statement.clone(),
                        sources: f.sources.clone(),
                    }
                })
                .collect(),
            recommendations,
        });
    }
    Ok(IntegratedReport {
        case_id: case_id.to_string(),
        sections,
        red_flags: flagged.into_iter().map(str::to_string).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Principle {
    Directness,
    Evidence,
    Caution,
    Practicality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrincipleResult {
    pub principle: Principle,
    pub passed: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compliance {
    pub results: Vec<PrincipleResult>,
}

impl Compliance {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn passed_count(&self) -> usize {
        self.results.iter().filter(|r| r.passed).count()
    }

    pub fn result(&self, p: Principle) -> &PrincipleResult {
        self.results
            .iter()
            .find(|r| r.principle == p)
            .expect("every principle is checked")
    }

    pub fn failed(&self) -> Vec<Principle> {
        self.results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.principle)
            .collect()
    }
}

fn result(principle: Principle, violations: Vec<String>) -> PrincipleResult {
    PrincipleResult {
        principle,
        passed: violations.is_empty(),
        violations,
    }
}

/// Directness, Evidence, Caution and Practicality, each with the
/// violations found.
pub fn check_principles(report: &IntegratedReport, classified: &ClassifiedViewpoints) -> Compliance {
    let priority = report.section(SectionKind::PriorityConcernsAndWarnings);
    let directness = report
        .red_flags
        .iter()
        .filter(|id| !priority.is_some_and(|s| s.findings.iter().any(|f| &f.id == *id)))
        .map(|id| format!("red flag {id} is not referenced in Priority Concerns and Warnings"))
        .collect();

    let all_refs = || report.sections.iter().flat_map(|s| s.findings.iter().map(move |f| (s, f)));
    let evidence = all_refs()
        .filter(|(_, f)| f.sources.iter().all(|s| s.trim().is_empty()))
        .map(|(s, f)| format!("{} cites no source for {}", s.kind.heading(), f.id))
        .collect();

    let caution = all_refs()
        .filter_map(|(s, f)| match classified.tier_of(&f.id) {
            None => Some(format!("{} references unclassified finding {}", s.kind.heading(), f.id)),
            Some(t) if t != f.tier => Some(format!(
                "{} labels {} {} but it is classified {}",
                s.kind.heading(),
                f.id,
                f.tier.label(),
                t.label()
            )),
            _ => None,
        })
        .collect();

    let actionable = report
        .section(SectionKind::SupportRecommendations)
        .is_some_and(|s| s.recommendations.iter().any(|r| !r.text.trim().is_empty()));
    let practicality = if actionable {
        Vec::new()
    } else {
        vec!["Support Recommendations has no actionable item".to_string()]
    };

    Compliance {
        results: vec![
            result(Principle::Directness, directness),
            result(Principle::Evidence, evidence),
            result(Principle::Caution, caution),
            result(Principle::Practicality, practicality),
        ],
    }
}

/// Plain-text rendering with the five section headings.
pub fn render_report_text(report: &IntegratedReport) -> String {
    let mut out = String::new();
    let title = format!("Integrated HTP Report: {}", report.case_id);
    let _ = writeln!(out, "{title}\n{}\n", "=".repeat(title.len()));
    for s in &report.sections {
        let heading = s.kind.heading();
        let _ = writeln!(out, "{heading}\n{}\n", "-".repeat(heading.len()));
        let _ = writeln!(out, "{}\n", s.text.trim());
        if !s.findings.is_empty() {
            out.push_str("Findings:\n");
            for f in &s.findings {
                let flag = if report.red_flags.contains(&f.id) {
                    " [requires professional attention]"
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    "- [{}] {} ({}; sources: {}){flag}",
                    f.id,
                    f.statement,
                    f.tier.label(),
                    f.sources.join(", ")
                );
            }
            out.push('\n');
        }
        if !s.recommendations.is_empty() {
            out.push_str("Recommendations:\n");
            for r in &s.recommendations {
                let _ = writeln!(out, "- {}: {}", r.horizon.label(), r.text);
            }
            out.push('\n');
        }
    }
    out
}
