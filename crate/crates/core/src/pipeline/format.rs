//! Deterministic formatters for the radar data file and the report layout.
//! Neither calls a model.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::{AssessmentBundle, CritiqueOutcome};
use crate::case::{CaseId, RadarDimension, RadarScores};

pub const RADAR_SCALE_MAX: u8 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarAxis {
    pub dimension: RadarDimension,
    pub label: String,
    pub score: u8,
    /// Degrees counter-clockwise from the positive x axis; the first axis points up.
    pub angle_deg: f64,
    /// Polygon vertex on the unit circle scaled by `score / 100`.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarChart {
    pub case_id: CaseId,
    pub scale_max: u8,
    pub axes: Vec<RadarAxis>,
}

/// Axes in canonical dimension order, spaced evenly clockwise from the top.
pub fn radar_chart(case_id: &CaseId, radar: &RadarScores) -> RadarChart {
    let n = RadarDimension::ALL.len() as f64;
    let axes = radar
        .iter()
        .enumerate()
        .map(|(i, (dimension, score))| {
            let angle_deg = 90.0 - 360.0 * i as f64 / n;
            let r = f64::from(score) / f64::from(RADAR_SCALE_MAX);
            let theta = angle_deg.to_radians();
            RadarAxis {
                dimension,
                label: dimension.label().to_string(),
                score,
                angle_deg,
                x: clean(r * theta.cos()),
                y: clean(r * theta.sin()),
            }
        })
        .collect();
    RadarChart {
        case_id: case_id.clone(),
        scale_max: RADAR_SCALE_MAX,
        axes,
    }
}

// cos(90°) is 6e-17, not 0
fn clean(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

fn bullets(out: &mut String, items: &[String]) {
    if items.is_empty() {
        out.push_str("- (none)\n");
    }
    for item in items {
        let _ = writeln!(out, "- {item}");
    }
}

/// Markdown layout of a finished assessment.
pub fn render_report(bundle: &AssessmentBundle) -> String {
    let mut out = String::new();
    let r = &bundle.report;
    let _ = writeln!(out, "# Assessment report: {}\n", bundle.case_id.as_str());

    out.push_str("## Your strengths\n\n");
    let _ = writeln!(out, "{}\n", r.strengths_first_narrative.trim());

    out.push_str("## Actions\n\n");
    bullets(&mut out, &r.actions);
    out.push('\n');

    out.push_str("## Goals\n\n");
    for (title, list) in [
        ("Short term", &r.goals.short_term),
        ("Medium term", &r.goals.medium_term),
        ("Long term", &r.goals.long_term),
    ] {
        let _ = writeln!(out, "### {title}\n");
        bullets(&mut out, list);
        out.push('\n');
    }

    if !r.support_network_note.trim().is_empty() {
        out.push_str("## Support network\n\n");
        let _ = writeln!(out, "{}\n", r.support_network_note.trim());
    }

    out.push_str("## Psychological profile\n\n");
    out.push_str("| Dimension | Score |\n|---|---|\n");
    for (d, score) in bundle.dossier.radar.iter() {
        let _ = writeln!(out, "| {} | {score} |", d.label());
    }
    out.push('\n');

    let d = &bundle.dossier;
    for (title, chains) in [("Strengths", &d.strengths), ("Growth areas", &d.growth_areas)] {
        let _ = writeln!(out, "### {title}\n");
        if chains.is_empty() {
            out.push_str("- (none)\n");
        }
        for c in chains {
            let _ = writeln!(
                out,
                "- {} ({:?} confidence; {}; evidence: {})",
                c.claim,
                c.confidence,
                c.theory_basis,
                c.observations.join(", ")
            );
        }
        out.push('\n');
    }

    if !bundle.context.contextual_findings.is_empty() {
        out.push_str("## Social context\n\n");
        for f in &bundle.context.contextual_findings {
            let _ = writeln!(
                out,
                "- {}: {} (source: {})",
                f.observation, f.societal_frame, f.source_note
            );
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{}\n", bundle.context.destigmatising_note.trim());

    if !bundle.critique_transcript.is_empty() {
        out.push_str("## Review log\n\n");
        for e in &bundle.critique_transcript {
            let outcome = match e.outcome {
                CritiqueOutcome::Approved => "approved",
                CritiqueOutcome::Revised => "revised",
                CritiqueOutcome::Rejected => "revision rejected",
                CritiqueOutcome::ReviewerError => "reviewer error",
            };
            let _ = writeln!(out, "- {} round {} by {}: {outcome}", e.stage, e.round, e.reviewer);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case_id;

    #[test]
    fn radar_vertices_follow_scores() {
        let id = parse_case_id("HTR-30-F-20240601").unwrap();
        let radar = RadarScores {
            emotional_stability: 68,
            self_worth: 52,
            social_openness: 60,
            vitality: 70,
            resilience: 65,
            creativity: 62,
        };
        let chart = radar_chart(&id, &radar);
        assert_eq!(chart.axes.len(), 6);
        let first = &chart.axes[0];
        assert_eq!(first.dimension, RadarDimension::EmotionalStability);
        assert_eq!((first.x, first.y), (0.0, 0.68));
        for a in &chart.axes {
            let r = (a.x * a.x + a.y * a.y).sqrt();
            assert!((r - f64::from(a.score) / 100.0).abs() < 1e-12);
        }
        // fourth axis points straight down
        assert!((chart.axes[3].y + 0.70).abs() < 1e-12);
        assert_eq!(chart.axes[3].x, 0.0);
    }
}
