//! Routing of concern findings to the five risk focuses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::classify::{ClassifiedViewpoints, FindingSummary, SupportTier};
use super::{Dimension, Stance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    EmotionalDistress,
    SelfPerception,
    InterpersonalDifficulties,
    DevelopmentalConcerns,
    RedFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Watch,
    Elevated,
    Urgent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskEntry {
    pub finding_ref: String,
    pub severity: Severity,
    pub support_tier: SupportTier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub emotional_distress: Vec<RiskEntry>,
    pub self_perception: Vec<RiskEntry>,
    pub interpersonal_difficulties: Vec<RiskEntry>,
    pub developmental_concerns: Vec<RiskEntry>,
    pub red_flags: Vec<RiskEntry>,
}

impl RiskAssessment {
    pub fn entries(&self, focus: Focus) -> &[RiskEntry] {
        match focus {
            Focus::EmotionalDistress => &self.emotional_distress,
            Focus::SelfPerception => &self.self_perception,
            Focus::InterpersonalDifficulties => &self.interpersonal_difficulties,
            Focus::DevelopmentalConcerns => &self.developmental_concerns,
            Focus::RedFlags => &self.red_flags,
        }
    }

    fn entries_mut(&mut self, focus: Focus) -> &mut Vec<RiskEntry> {
        match focus {
            Focus::EmotionalDistress => &mut self.emotional_distress,
            Focus::SelfPerception => &mut self.self_perception,
            Focus::InterpersonalDifficulties => &mut self.interpersonal_difficulties,
            Focus::DevelopmentalConcerns => &mut self.developmental_concerns,
            Focus::RedFlags => &mut self.red_flags,
        }
    }

    pub fn is_empty(&self) -> bool {
        ALL_FOCUSES.iter().all(|f| self.entries(*f).is_empty())
    }

    /// Every entry must reference a classified finding with the matching
    /// tier; red flags need the highly consistent tier or an urgent
    /// severity with a justification.
    pub fn check(&self, classified: &ClassifiedViewpoints) -> Vec<String> {
        let mut problems = Vec::new();
        for focus in ALL_FOCUSES {
            for e in self.entries(focus) {
                match classified.tier_of(&e.finding_ref) {
                    None => problems.push(format!("{focus:?}: unknown finding {}", e.finding_ref)),
                    Some(t) if t != e.support_tier => problems.push(format!(
                        "{focus:?}: {} carries tier {} but is classified {}",
                        e.finding_ref,
                        e.support_tier.label(),
                        t.label()
                    )),
                    _ => {}
                }
            }
        }
        for e in &self.red_flags {
            let justified = e.severity == Severity::Urgent
                && e.justification.as_deref().is_some_and(|j| !j.trim().is_empty());
            if e.support_tier != SupportTier::HighlyConsistent && !justified {
                problems.push(format!(
                    "red flag {} is neither highly consistent nor a justified urgent entry",
                    e.finding_ref
                ));
            }
        }
        problems
    }
}

pub const ALL_FOCUSES: [Focus; 5] = [
    Focus::EmotionalDistress,
    Focus::SelfPerception,
    Focus::InterpersonalDifficulties,
    Focus::DevelopmentalConcerns,
    Focus::RedFlags,
];

/// Routes a concern to `focus` when its text contains any keyword
/// (case-insensitive) or its dimension is listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskRule {
    pub focus: Focus,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub dimensions: Vec<Dimension>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RiskRulesError {
    #[error("red flags cannot be a routing target; use red_flag_keywords")]
    RedFlagRoute,
    #[error("rule for {0:?} has neither keywords nor dimensions")]
    EmptyRule(Focus),
    #[error("blank keyword in rule for {0:?}")]
    BlankKeyword(Focus),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskRules {
    pub rules: Vec<RiskRule>,
    /// Consensus concerns containing one of these are also red flags.
    pub red_flag_keywords: Vec<String>,
    /// Focus for concerns no rule matches.
    pub fallback: Focus,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for RiskRules {
    fn default() -> Self {
        Self {
            rules: vec![
                RiskRule {
                    focus: Focus::EmotionalDistress,
                    keywords: words(&[
                        "emotion", "anxi", "depress", "sad", "stress", "distress", "fear",
                        "avoid", "tension", "lonel", "energy", "exhaust",
                    ]),
                    dimensions: vec![],
                },
                RiskRule {
                    focus: Focus::SelfPerception,
                    keywords: words(&[
                        "self-worth", "self worth", "self-esteem", "self-efficacy", "inferior",
                        "insecur", "inadequa", "self-image", "identity",
                    ]),
                    dimensions: vec![],
                },
                RiskRule {
                    focus: Focus::InterpersonalDifficulties,
                    keywords: words(&[
                        "social", "interpersonal", "withdraw", "isolat", "relationship",
                        "intimacy", "distance", "detach", "separate",
                    ]),
                    dimensions: vec![],
                },
                RiskRule {
                    focus: Focus::DevelopmentalConcerns,
                    keywords: words(&[
                        "development", "immatur", "regress", "trauma", "scar", "stick-figure",
                        "stick figure",
                    ]),
                    dimensions: vec![],
                },
            ],
            red_flag_keywords: words(&[
                "self-harm", "suicid", "violen", "abuse", "hopeless", "danger",
            ]),
            fallback: Focus::EmotionalDistress,
        }
    }
}

impl RiskRules {
    pub fn validate(&self) -> Result<(), RiskRulesError> {
        if self.fallback == Focus::RedFlags {
            return Err(RiskRulesError::RedFlagRoute);
        }
        for r in &self.rules {
            if r.focus == Focus::RedFlags {
                return Err(RiskRulesError::RedFlagRoute);
            }
            if r.keywords.is_empty() && r.dimensions.is_empty() {
                return Err(RiskRulesError::EmptyRule(r.focus));
            }
            if r.keywords.iter().any(|k| k.trim().is_empty()) {
                return Err(RiskRulesError::BlankKeyword(r.focus));
            }
        }
        Ok(())
    }

    fn route(&self, finding: &FindingSummary, text: &str) -> Vec<Focus> {
        let mut foci: Vec<Focus> = self
            .rules
            .iter()
            .filter(|r| {
                r.dimensions.contains(&finding.dimension)
                    || r.keywords.iter().any(|k| text.contains(&k.to_lowercase()))
            })
            .map(|r| r.focus)
            .collect();
        foci.sort();
        foci.dedup();
        if foci.is_empty() {
            foci.push(self.fallback);
        }
        foci
    }

    fn red_flag(&self, text: &str) -> Option<&str> {
        self.red_flag_keywords
            .iter()
            .find(|k| text.contains(&k.to_lowercase()))
            .map(String::as_str)
    }
}

/// Deterministic risk routing. Consensus concerns are elevated, other
/// concerns are watched; only consensus concerns can become red flags.
pub fn assess_risk(classified: &ClassifiedViewpoints, rules: &RiskRules) -> RiskAssessment {
    let mut out = RiskAssessment::default();
    for finding in classified.findings() {
        if finding.stance != Stance::Concern {
            continue;
        }
        let text = classified
            .viewpoints
            .iter()
            .filter(|v| finding.members.contains(&v.id))
            .map(|v| v.statement.as_str())
            .chain(std::iter::once(finding.statement.as_str()))
            .collect::<Vec<_>>()
            .join("\n")
            .to_lowercase();
        let severity = if finding.tier == SupportTier::HighlyConsistent {
            Severity::Elevated
        } else {
            Severity::Watch
        };
        for focus in rules.route(&finding, &text) {
            out.entries_mut(focus).push(RiskEntry {
                finding_ref: finding.id.clone(),
                severity,
                support_tier: finding.tier,
                justification: None,
            });
        }
        if finding.tier == SupportTier::HighlyConsistent {
            if let Some(keyword) = rules.red_flag(&text) {
                out.red_flags.push(RiskEntry {
                    finding_ref: finding.id.clone(),
                    severity: Severity::Urgent,
                    support_tier: finding.tier,
                    justification: Some(format!(
                        "consensus concern mentions \"{keyword}\"; requires professional attention"
                    )),
                });
            }
        }
    }
    out
}
