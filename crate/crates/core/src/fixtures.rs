//! Worked cases for tests, the acceptance suite and `htp demo init`.
//!
//! The HTR-38 single-case assessment, the Case A and Case B radar profiles,
//! and the 45M fusion case. Stage answers are canned JSON served by
//! [`ClosureBackend`]s that switch on the request's prompt id; wrap them in a
//! [`RecordingBackend`] to produce fingerprint-keyed mock scripts.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde_json::{json, Value};
use std::collections::BTreeMap;

use crate::case::{parse_case_id, CaseRecord, DrawingArtifact, MediaType};
use crate::gateway::{ClosureBackend, GenerateRequest};
use crate::prompts;

pub const HTR38_ID: &str = "HTR-38-M-20240520";

/// A 1x1 PNG.
const TINY_PNG: &str =
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNkYPhfDwAChwGA60e6kgAAAABJRU5ErkJggg==";

pub fn tiny_png() -> Vec<u8> {
    BASE64.decode(TINY_PNG).expect("valid base64")
}

/// Placeholder drawing bytes unique to `tag`.
pub fn placeholder_drawing(tag: &str) -> DrawingArtifact {
    let mut bytes = tiny_png();
    bytes.extend_from_slice(tag.as_bytes());
    DrawingArtifact::new(bytes, MediaType::Png)
}

pub fn htr38_case() -> CaseRecord {
    CaseRecord::new(
        parse_case_id(HTR38_ID).expect("fixture id"),
        DrawingArtifact::new(tiny_png(), MediaType::Png),
        "38-year-old male IT worker",
    )
}

/// Radar values reported for HTR-38. Social openness is not among them.
pub fn htr38_reported_radar() -> BTreeMap<String, i64> {
    [
        ("emotional_stability", 65),
        ("self_worth", 35),
        ("vitality", 45),
        ("resilience", 42),
        ("creativity", 38),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Placeholder used for the unreported social openness score so the
/// end-to-end fixture can produce a complete radar.
pub const HTR38_SOCIAL_OPENNESS_PLACEHOLDER: i64 = 50;

pub fn case_a_radar() -> BTreeMap<String, i64> {
    radar_map([68, 52, 60, 70, 65, 62])
}

pub fn case_b_radar() -> BTreeMap<String, i64> {
    radar_map([82, 78, 75, 85, 80, 76])
}

fn radar_map(v: [i64; 6]) -> BTreeMap<String, i64> {
    crate::case::RadarDimension::ALL
        .iter()
        .zip(v)
        .map(|(d, s)| (d.key().to_string(), s))
        .collect()
}

pub fn htr38_observation_answer() -> Value {
    json!({"values": {
        "house.structure_completeness": "complete",
        "house.note": "a structurally complete house",
        "house.door.present": true,
        "house.windows.present": true,
        "tree.monochrome": true,
        "tree.season": "winter",
        "tree.crown.shape": "bare_branches",
        "tree.note": "a monochrome winter tree",
        "person.rendering": "stick_figure",
        "person.note": "a stick-figure person",
        "person.overall_size": "small",
        "line_quality.thickness": 0.5,
        "line_quality.pressure": "moderate",
        "line_quality.continuity": "continuous",
        "spatial_layout.horizontal_position": "center",
        "spatial_layout.vertical_position": "middle",
        "spatial_layout.page_utilization": 40
    }})
}

pub fn htr38_dossier_answer() -> Value {
    let mut radar = htr38_reported_radar();
    radar.insert("social_openness".into(), HTR38_SOCIAL_OPENNESS_PLACEHOLDER);
    json!({
        "strengths": [
            {"claim": "good emotion regulation",
             "observations": ["line_quality.pressure", "line_quality.continuity"],
             "theory_basis": "buck_hammer", "confidence": "medium"},
            {"claim": "sense of responsibility",
             "observations": ["house.structure_completeness", "house.door.present"],
             "theory_basis": "buck_hammer", "confidence": "medium"}
        ],
        "growth_areas": [
            {"claim": "low self-efficacy",
             "observations": ["person.rendering", "person.overall_size"],
             "theory_basis": "buck_hammer", "confidence": "medium"},
            {"claim": "depleted life energy",
             "observations": ["tree.season", "tree.monochrome", "tree.crown.shape"],
             "theory_basis": "developmental", "confidence": "low"}
        ],
        "defence_mechanisms": [
            {"name": "intellectualisation", "note": "stick-figure person keeps feeling at a distance"}
        ],
        "radar": radar
    })
}

pub fn htr38_brief_answer() -> Value {
    json!({
        "contextual_findings": [
            {"observation": "anxiety about financial freedom",
             "societal_frame": "widely shared among post-1985 male IT workers facing stagnant pay and long hours",
             "source_note": "2025 Chinese Workplace Wealth Report"},
            {"observation": "worry about child-rearing",
             "societal_frame": "education pressure is a common concern of parents in this cohort",
             "source_note": "Education Anxiety White Paper"}
        ],
        "destigmatising_note": "These worries are common in your situation and are not a sign of personal failure."
    })
}

pub fn htr38_report_answer() -> Value {
    json!({
        "strengths_first_narrative": "You manage your emotions steadily and carry your responsibilities with care. Those strengths are a solid base to build on.",
        "actions": [
            "small success accumulation",
            "sensory awakening exercises",
            "emotional demonstration practice"
        ],
        "goals": {
            "short_term": ["note one small success every day for two weeks"],
            "medium_term": ["test a side project idea with a small group of users"],
            "long_term": ["decide on starting a business from evidence rather than worry"]
        },
        "support_network_note": "Share the load with peers in similar roles; many face the same pressures."
    })
}

fn approve() -> String {
    json!({"verdict": "approve", "critique": "coherent and supported by the evidence"}).to_string()
}

fn stage_backend(name: &str, prompt_id: &'static str, answer: Value) -> ClosureBackend {
    let answer = answer.to_string();
    ClosureBackend::new(name).on_generate(move |req: &GenerateRequest| {
        if req.prompt_id == prompt_id {
            Ok(answer.clone())
        } else if req.prompt_id == prompts::CRITIQUE {
            Ok(approve())
        } else {
            Err(format!("no fixture for {}", req.prompt_id))
        }
    })
}

/// Observer, interpreter, zeitgeist and listener backends for HTR-38.
/// Reviewers approve on the first round.
pub fn htr38_backends() -> [ClosureBackend; 4] {
    [
        stage_backend("observer-vlm", prompts::OBSERVER, htr38_observation_answer()),
        stage_backend("interpreter-llm", prompts::INTERPRETER, htr38_dossier_answer()),
        stage_backend("zeitgeist-llm", prompts::ZEITGEIST, htr38_brief_answer()),
        stage_backend("listener-llm", prompts::LISTENER, htr38_report_answer()),
    ]
}

/// One scripted viewpoint: model, dimension, stance, statement and the
/// topic index its embedding points along.
type ScriptedView = (&'static str, &'static str, &'static str, &'static str, usize);

const TOPIC_DIM: usize = 8;

fn topic_vector(topic: usize) -> Vec<f64> {
    let mut v = vec![0.0; TOPIC_DIM];
    v[topic] = 1.0;
    v
}

/// Embedder mapping each scripted statement to the unit vector of its topic.
pub fn topic_embedder(name: &str, views: &[(&str, usize)]) -> ClosureBackend {
    let table: BTreeMap<String, usize> = views.iter().map(|(s, t)| (s.to_string(), *t)).collect();
    ClosureBackend::new(name).on_embed(move |text| {
        table
            .get(text)
            .map(|t| topic_vector(*t))
            .ok_or_else(|| format!("no fixture embedding for {text:?}"))
    })
}

/// Backends for a complete offline fusion run on one case.
pub struct FusionFixture {
    pub case: CaseRecord,
    pub interpreters: Vec<ClosureBackend>,
    pub extractor: ClosureBackend,
    pub embedder: ClosureBackend,
    pub merger: ClosureBackend,
}

impl FusionFixture {
    pub fn backends(&self) -> crate::fusion::FusionBackends<'_> {
        crate::fusion::FusionBackends {
            interpreters: self
                .interpreters
                .iter()
                .map(|b| b as &dyn crate::gateway::Backend)
                .collect(),
            extractor: &self.extractor,
            embedder: &self.embedder,
            merger: &self.merger,
        }
    }
}

fn interpretation_text(model: &str, views: &[ScriptedView]) -> String {
    let lines: Vec<&str> = views
        .iter()
        .filter(|v| v.0 == model)
        .map(|v| v.3)
        .collect();
    format!("Interpretation by {model}. {}.", lines.join(". "))
}

fn fusion_fixture(case: CaseRecord, models: &[&str], views: &'static [ScriptedView], merge: Value) -> FusionFixture {
    let interpreters = models
        .iter()
        .map(|m| {
            let text = interpretation_text(m, views);
            ClosureBackend::new(*m).on_generate(move |req| {
                if req.prompt_id == prompts::FUSION_INTERPRET {
                    Ok(text.clone())
                } else {
                    Err(format!("no fixture for {}", req.prompt_id))
                }
            })
        })
        .collect();
    let by_text: Vec<(String, String)> = models
        .iter()
        .map(|m| {
            let answer = json!({"viewpoints": views
                .iter()
                .filter(|v| v.0 == *m)
                .map(|v| json!({"dimension": v.1, "stance": v.2, "statement": v.3}))
                .collect::<Vec<_>>()});
            (interpretation_text(m, views), answer.to_string())
        })
        .collect();
    let extractor = ClosureBackend::new("extractor-llm").on_generate(move |req| {
        by_text
            .iter()
            .find(|(text, _)| req.prompt.contains(text.as_str()))
            .map(|(_, answer)| answer.clone())
            .ok_or_else(|| "no fixture interpretation in extraction prompt".to_string())
    });
    let topics: Vec<(&str, usize)> = views.iter().map(|v| (v.3, v.4)).collect();
    let embedder = topic_embedder("embedder", &topics);
    let merge = merge.to_string();
    let merger = ClosureBackend::new("merger-llm").on_generate(move |req| {
        if req.prompt_id == prompts::FUSION_MERGE {
            Ok(merge.clone())
        } else {
            Err(format!("no fixture for {}", req.prompt_id))
        }
    });
    FusionFixture {
        case,
        interpreters,
        extractor,
        embedder,
        merger,
    }
}

pub const FUSION_MODELS: [&str; 3] = ["vlm-alpha", "vlm-beta", "vlm-gamma"];

pub const CASE_45M_ID: &str = "HTR-45-M-20240601";

const VIEWS_45M: &[ScriptedView] = &[
    ("vlm-alpha", "house", "positive", "complete house with smoke suggests a sense of safety", 0),
    ("vlm-alpha", "tree", "concern", "scar on the trunk suggests an integrated past trauma", 1),
    ("vlm-alpha", "person", "concern", "stick-figure representation and the swing indicate emotional avoidance and regression", 2),
    ("vlm-beta", "house", "positive", "complete house with smoke from the chimney symbolises safety", 0),
    ("vlm-beta", "person", "concern", "stick-figure person and swing point to emotional avoidance and regression", 2),
    ("vlm-beta", "special_symbols_omissions", "positive", "roller shoes suggest constant readiness to move outward", 3),
    ("vlm-gamma", "house", "positive", "the complete house with rising smoke conveys warmth and safety", 0),
    ("vlm-gamma", "overall_layout", "positive", "the winding stone path shows planning ability", 4),
];

pub fn case_45m() -> CaseRecord {
    CaseRecord::new(
        parse_case_id(CASE_45M_ID).expect("fixture id"),
        placeholder_drawing(CASE_45M_ID),
        "45-year-old male mental-health practitioner",
    )
}

/// Fusion fixture for the 45-year-old practitioner. Expected findings:
/// C1 house safety (3 models), C2 stick-figure and swing concern (2 models),
/// U1 trunk scar, U2 stone path, U3 roller shoes.
pub fn fusion_45m() -> FusionFixture {
    let merge = json!({
        "sections": {
            "executive_summary": {"text": "All models read the complete house with smoke as a sign of safety [C1]. Two agree that the stick-figure representation and the swing indicate emotional avoidance and regression [C2].", "cites": ["C1", "C2"]},
            "detailed_analysis": {"text": "House: [C1] is highly consistent. Person: [C2] is supported by two models. The scar on the trunk [U1] appears in only one interpretation and needs verification.", "cites": []},
            "priority_concerns_and_warnings": {"text": "Emotional avoidance and regression [C2] is the main concern. The trunk scar [U1] is a unique observation requiring verification.", "cites": ["C2"]},
            "support_recommendations": {"text": "Support should make room for rest and shared responsibility.", "cites": ["C2"]},
            "limitations": {"text": "Findings [U1], [U2] and [U3] rest on a single interpretation each, and the drawing was read without an interview.", "cites": []}
        },
        "recommendations": [
            {"horizon": "immediate", "text": "schedule non-goal-oriented parent-child time and institutionalise swing time"},
            {"horizon": "short_term", "text": "build a teacher mutual-aid group to share responsibilities"},
            {"horizon": "long_term", "text": "incorporate narrative perspectives in research to avoid over-intellectualisation"}
        ]
    });
    fusion_fixture(case_45m(), &FUSION_MODELS, VIEWS_45M, merge)
}

const VIEWS_HTR38: &[ScriptedView] = &[
    ("vlm-alpha", "house", "positive", "a structurally complete house suggests a sense of responsibility", 0),
    ("vlm-alpha", "tree", "concern", "a monochrome winter tree suggests depleted life energy", 1),
    ("vlm-beta", "house", "positive", "the complete house structure reflects responsibility and stability", 0),
    ("vlm-beta", "tree", "concern", "the bare monochrome winter tree points to low energy and emotional exhaustion", 1),
    ("vlm-gamma", "person", "concern", "a stick-figure person suggests low self-efficacy", 2),
    ("vlm-gamma", "stroke_features", "neutral", "line thickness is moderate and continuous", 3),
];

/// Fusion fixture for HTR-38. Expected findings: C1 house, C2 winter tree
/// concern, U1 stick-figure concern, U2 stroke note.
pub fn fusion_htr38() -> FusionFixture {
    let merge = json!({
        "sections": {
            "executive_summary": {"text": "The models agree on a structurally complete house [C1] and read the monochrome winter tree as depleted energy [C2].", "cites": ["C1", "C2"]},
            "detailed_analysis": {"text": "House and tree findings are highly consistent; the stick-figure reading [U1] comes from one model.", "cites": []},
            "priority_concerns_and_warnings": {"text": "Depleted life energy [C2] deserves attention; low self-efficacy [U1] is partially supported.", "cites": ["C2", "U1"]},
            "support_recommendations": {"text": "Rebuild energy through small, visible successes.", "cites": ["C2"]},
            "limitations": {"text": "Single-model findings [U1] and [U2] need confirmation in an interview.", "cites": []}
        },
        "recommendations": [
            {"horizon": "immediate", "text": "start small success accumulation with one daily task"},
            {"horizon": "long_term", "text": "build a peer support network around career decisions"}
        ]
    });
    fusion_fixture(htr38_case(), &FUSION_MODELS, VIEWS_HTR38, merge)
}

/// Two agreeing "smoke = warmth" viewpoints from different models and one
/// "trunk scar" viewpoint, with an embedder mapping the smoke statements to
/// identical vectors and the scar to an orthogonal one.
pub fn smoke_scar_viewpoints() -> (Vec<crate::fusion::Viewpoint>, ClosureBackend) {
    use crate::fusion::{Dimension, Stance, Viewpoint};
    let smoke_a = "smoke from the chimney signals warmth";
    let smoke_b = "chimney smoke conveys warmth at home";
    let scar = "scar on the trunk";
    let views = vec![
        Viewpoint::new("model-a#1", "model-a", Dimension::House, smoke_a, Stance::Positive),
        Viewpoint::new("model-b#1", "model-b", Dimension::House, smoke_b, Stance::Positive),
        Viewpoint::new("model-a#2", "model-a", Dimension::Tree, scar, Stance::Concern),
    ]
    .into_iter()
    .map(|v| v.expect("fixture viewpoint"))
    .collect();
    let embedder = topic_embedder("embedder", &[(smoke_a, 0), (smoke_b, 0), (scar, 1)]);
    (views, embedder)
}

/// Per-expert summary rows of the 307-case corpus, without the overall row.
pub fn expert_rows() -> Vec<crate::eval::stats::StatsRow> {
    const ROWS: [(&str, usize, [f64; 7]); 6] = [
        ("Wang Long", 178, [0.7735, 0.7754, 0.7469, 0.7991, 0.6367, 0.8574, 0.0369]),
        ("Min Baoquan", 52, [0.7310, 0.7376, 0.6953, 0.7702, 0.5566, 0.8179, 0.0498]),
        ("Song Xingchuan", 6, [0.7257, 0.7175, 0.7131, 0.7455, 0.6922, 0.7602, 0.0264]),
        ("Yan Hu", 35, [0.6978, 0.6929, 0.6643, 0.7272, 0.6182, 0.7870, 0.0425]),
        ("Zhang Tongyan", 32, [0.6744, 0.6722, 0.6299, 0.6936, 0.5678, 0.8409, 0.0641]),
        ("Li Hongwei", 4, [0.6040, 0.5899, 0.5807, 0.6132, 0.5579, 0.6781, 0.0517]),
    ];
    ROWS.iter()
        .map(|(group, cases, [mean, median, q1, q3, min, max, sd])| crate::eval::stats::StatsRow {
            group: group.to_string(),
            cases: *cases,
            mean: *mean,
            median: *median,
            q1: *q1,
            q3: *q3,
            min: *min,
            max: *max,
            sd: *sd,
        })
        .collect()
}

/// Stand-in for the unavailable 307-drawing corpus: one case per row of
/// [`expert_rows`] case count, with backends that reproduce a chosen
/// similarity for every case.
pub struct SyntheticCorpus {
    pub cases: Vec<CaseRecord>,
    /// Similarity each case is built to produce, in case order.
    pub targets: Vec<f64>,
    pub generator: ClosureBackend,
    pub embedder: ClosureBackend,
}

pub const SYNTHETIC_EMBED_DIM: usize = 8;

/// Deterministic for a given `seed`. Targets are drawn uniformly with each
/// expert's mean and sd, clamped to the expert's range, with the range
/// endpoints pinned on the first two cases of each group.
pub fn synthetic_corpus(seed: u64) -> SyntheticCorpus {
    use crate::case::{CaseId, Sex};
    use rand::{Rng, SeedableRng};

    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let start = chrono::NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date");
    let mut cases = Vec::new();
    let mut targets = Vec::new();
    let mut ai_by_image: BTreeMap<String, String> = BTreeMap::new();
    let mut vectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut n = 0u64;
    for row in expert_rows() {
        let half_width = row.sd * 3f64.sqrt();
        for k in 0..row.cases {
            let target = match k {
                0 => row.min,
                1 => row.max,
                _ => (row.mean + half_width * rng.gen_range(-1.0..=1.0)).clamp(row.min, row.max),
            };
            let age = 6 + (n % 60) as u32;
            let sex = if n.is_multiple_of(2) { Sex::F } else { Sex::M };
            let id = CaseId::new(age, sex, start + chrono::Days::new(n)).expect("valid synthetic id");
            let image = placeholder_drawing(id.as_str());
            let expert = format!("{}: expert reading of drawing {}", row.group, id);
            let ai = format!("model reading of drawing {id}");
            let mut e = vec![0.0; SYNTHETIC_EMBED_DIM];
            e[0] = 1.0;
            let mut a = vec![0.0; SYNTHETIC_EMBED_DIM];
            a[0] = target;
            a[1] = (1.0 - target * target).sqrt();
            vectors.insert(expert.clone(), e);
            vectors.insert(ai.clone(), a);
            ai_by_image.insert(image.sha256().to_string(), ai);

            let mut case = CaseRecord::new(id, image, format!("synthetic subject, age {age}"));
            case.expert_label = Some(row.group.clone());
            case.expert_interpretation = Some(expert);
            cases.push(case);
            targets.push(target);
            n += 1;
        }
    }
    let generator = ClosureBackend::new("eval-vlm").on_generate(move |req: &GenerateRequest| {
        let image = req.image.as_ref().ok_or("request has no image")?;
        ai_by_image
            .get(image.sha256())
            .cloned()
            .ok_or_else(|| format!("no synthetic reading for image {}", image.sha256()))
    });
    let embedder = ClosureBackend::new("eval-embed").on_embed(move |text| {
        vectors
            .get(text)
            .cloned()
            .ok_or_else(|| format!("no synthetic embedding for {text:?}"))
    });
    SyntheticCorpus {
        cases,
        targets,
        generator,
        embedder,
    }
}
