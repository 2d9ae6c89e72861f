//! Shared domain types: case identifiers, drawings, radar scores and
//! interpretation texts.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::canonical::sha256_hex;

pub const MIN_AGE: u32 = 3;
pub const MAX_AGE: u32 = 120;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CaseIdError {
    #[error("malformed case id {0:?}: expected HTR-<age>-<M|F|U>-<YYYYMMDD>")]
    Malformed(String),
    #[error("case id {raw:?} has an invalid calendar date {date}")]
    InvalidDate { raw: String, date: String },
    #[error("case id {raw:?} has age {age} outside [{MIN_AGE}, {MAX_AGE}]")]
    AgeOutOfRange { raw: String, age: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
    /// Unspecified.
    U,
}

impl Sex {
    pub fn as_char(self) -> char {
        match self {
            Sex::M => 'M',
            Sex::F => 'F',
            Sex::U => 'U',
        }
    }
}

/// Case identifier of the form `HTR-<age>-<sex>-<YYYYMMDD>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CaseId {
    raw: String,
    age: u32,
    sex: Sex,
    date: NaiveDate,
}

impl CaseId {
    pub fn new(age: u32, sex: Sex, date: NaiveDate) -> Result<Self, CaseIdError> {
        let raw = format!(
            "HTR-{}-{}-{:04}{:02}{:02}",
            age,
            sex.as_char(),
            date.year(),
            date.month(),
            date.day()
        );
        if !(MIN_AGE..=MAX_AGE).contains(&age) {
            return Err(CaseIdError::AgeOutOfRange { raw, age });
        }
        if !(0..=9999).contains(&date.year()) {
            return Err(CaseIdError::Malformed(raw));
        }
        Ok(Self { raw, age, sex, date })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn age(&self) -> u32 {
        self.age
    }

    pub fn sex(&self) -> Sex {
        self.sex
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }
}

/// Parses a raw case identifier; the result re-serializes to exactly `raw`.
pub fn parse_case_id(raw: &str) -> Result<CaseId, CaseIdError> {
    let malformed = || CaseIdError::Malformed(raw.to_string());
    let mut parts = raw.split('-');
    let (Some("HTR"), Some(age), Some(sex), Some(date), None) = (
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
    ) else {
        return Err(malformed());
    };

    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    // leading zeros would not round-trip
    if !digits(age) || (age.len() > 1 && age.starts_with('0')) || age.len() > 3 {
        return Err(malformed());
    }
    let sex = match sex {
        "M" => Sex::M,
        "F" => Sex::F,
        "U" => Sex::U,
        _ => return Err(malformed()),
    };
    if date.len() != 8 || !digits(date) {
        return Err(malformed());
    }

    let age: u32 = age.parse().map_err(|_| malformed())?;
    if !(MIN_AGE..=MAX_AGE).contains(&age) {
        return Err(CaseIdError::AgeOutOfRange {
            raw: raw.to_string(),
            age,
        });
    }
    let (y, m, d) = (&date[0..4], &date[4..6], &date[6..8]);
    let parsed = NaiveDate::from_ymd_opt(
        y.parse().map_err(|_| malformed())?,
        m.parse().map_err(|_| malformed())?,
        d.parse().map_err(|_| malformed())?,
    )
    .ok_or_else(|| CaseIdError::InvalidDate {
        raw: raw.to_string(),
        date: date.to_string(),
    })?;

    Ok(CaseId {
        raw: raw.to_string(),
        age,
        sex,
        date: parsed,
    })
}

impl FromStr for CaseId {
    type Err = CaseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_case_id(s)
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for CaseId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for CaseId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse_case_id(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Png,
    Jpeg,
}

impl MediaType {
    pub fn extension(self) -> &'static str {
        match self {
            MediaType::Png => "png",
            MediaType::Jpeg => "jpg",
        }
    }

    pub fn mime(self) -> &'static str {
        match self {
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "png" => Some(MediaType::Png),
            "jpg" | "jpeg" => Some(MediaType::Jpeg),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("drawing digest mismatch: expected {expected}, computed {actual}")]
pub struct DigestMismatch {
    pub expected: String,
    pub actual: String,
}

/// Opaque drawing payload. The digest always matches the bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawingArtifact {
    bytes: Vec<u8>,
    media_type: MediaType,
    sha256: String,
}

impl DrawingArtifact {
    pub fn new(bytes: Vec<u8>, media_type: MediaType) -> Self {
        let sha256 = sha256_hex(&bytes);
        Self {
            bytes,
            media_type,
            sha256,
        }
    }

    /// Rebuilds an artifact from stored parts, recomputing the digest.
    pub fn from_parts(
        bytes: Vec<u8>,
        media_type: MediaType,
        expected_sha256: &str,
    ) -> Result<Self, DigestMismatch> {
        let actual = sha256_hex(&bytes);
        if actual != expected_sha256.to_ascii_lowercase() {
            return Err(DigestMismatch {
                expected: expected_sha256.to_string(),
                actual,
            });
        }
        Ok(Self {
            bytes,
            media_type,
            sha256: actual,
        })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn media_type(&self) -> MediaType {
        self.media_type
    }

    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(&self.bytes)
    }

    pub fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.media_type.mime(), self.to_base64())
    }
}

#[derive(Serialize, Deserialize)]
struct DrawingArtifactRepr {
    media_type: MediaType,
    sha256: String,
    bytes: String,
}

impl Serialize for DrawingArtifact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DrawingArtifactRepr {
            media_type: self.media_type,
            sha256: self.sha256.clone(),
            bytes: self.to_base64(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DrawingArtifact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = DrawingArtifactRepr::deserialize(deserializer)?;
        let bytes = BASE64.decode(repr.bytes).map_err(D::Error::custom)?;
        DrawingArtifact::from_parts(bytes, repr.media_type, &repr.sha256).map_err(D::Error::custom)
    }
}

/// One subject's drawing, metadata and stage output references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: CaseId,
    pub image: DrawingArtifact,
    pub subject_note: String,
    #[serde(default)]
    pub expert_label: Option<String>,
    /// Expert interpretation text used by the alignment evaluation.
    #[serde(default)]
    pub expert_interpretation: Option<String>,
    /// Stage name to a store-relative output path.
    #[serde(default)]
    pub stage_outputs: BTreeMap<String, String>,
}

impl CaseRecord {
    pub fn new(id: CaseId, image: DrawingArtifact, subject_note: impl Into<String>) -> Self {
        Self {
            id,
            image,
            subject_note: subject_note.into(),
            expert_label: None,
            expert_interpretation: None,
            stage_outputs: BTreeMap::new(),
        }
    }
}

/// The six radar dimensions in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadarDimension {
    EmotionalStability,
    SelfWorth,
    SocialOpenness,
    Vitality,
    Resilience,
    Creativity,
}

impl RadarDimension {
    pub const ALL: [RadarDimension; 6] = [
        RadarDimension::EmotionalStability,
        RadarDimension::SelfWorth,
        RadarDimension::SocialOpenness,
        RadarDimension::Vitality,
        RadarDimension::Resilience,
        RadarDimension::Creativity,
    ];

    pub fn key(self) -> &'static str {
        match self {
            RadarDimension::EmotionalStability => "emotional_stability",
            RadarDimension::SelfWorth => "self_worth",
            RadarDimension::SocialOpenness => "social_openness",
            RadarDimension::Vitality => "vitality",
            RadarDimension::Resilience => "resilience",
            RadarDimension::Creativity => "creativity",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RadarDimension::EmotionalStability => "Emotional stability",
            RadarDimension::SelfWorth => "Self-worth",
            RadarDimension::SocialOpenness => "Social openness",
            RadarDimension::Vitality => "Vitality",
            RadarDimension::Resilience => "Resilience",
            RadarDimension::Creativity => "Creativity",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.key() == key)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RadarError {
    #[error("radar is missing dimension(s): {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("radar has unknown dimension(s): {}", .0.join(", "))]
    Unknown(Vec<String>),
    #[error("radar dimension {dimension} = {value} is outside [0, 100]")]
    OutOfRange { dimension: String, value: i64 },
}

/// Six-dimensional radar profile, every score in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, i64>")]
pub struct RadarScores {
    pub emotional_stability: u8,
    pub self_worth: u8,
    pub social_openness: u8,
    pub vitality: u8,
    pub resilience: u8,
    pub creativity: u8,
}

impl RadarScores {
    pub fn get(&self, dimension: RadarDimension) -> u8 {
        match dimension {
            RadarDimension::EmotionalStability => self.emotional_stability,
            RadarDimension::SelfWorth => self.self_worth,
            RadarDimension::SocialOpenness => self.social_openness,
            RadarDimension::Vitality => self.vitality,
            RadarDimension::Resilience => self.resilience,
            RadarDimension::Creativity => self.creativity,
        }
    }

    /// `(dimension, score)` pairs in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (RadarDimension, u8)> + '_ {
        RadarDimension::ALL.into_iter().map(|d| (d, self.get(d)))
    }
}

impl TryFrom<BTreeMap<String, i64>> for RadarScores {
    type Error = RadarError;

    fn try_from(map: BTreeMap<String, i64>) -> Result<Self, Self::Error> {
        validate_radar(&map)
    }
}

/// Accepts `candidate` iff its keys are exactly the six canonical dimensions
/// and every value lies in `[0, 100]`.
pub fn validate_radar(candidate: &BTreeMap<String, i64>) -> Result<RadarScores, RadarError> {
    let unknown: Vec<String> = candidate
        .keys()
        .filter(|k| RadarDimension::from_key(k).is_none())
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(RadarError::Unknown(unknown));
    }
    let missing: Vec<String> = RadarDimension::ALL
        .iter()
        .filter(|d| !candidate.contains_key(d.key()))
        .map(|d| d.key().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(RadarError::Missing(missing));
    }

    let score = |d: RadarDimension| -> Result<u8, RadarError> {
        let value = candidate[d.key()];
        u8::try_from(value)
            .ok()
            .filter(|v| *v <= 100)
            .ok_or(RadarError::OutOfRange {
                dimension: d.key().to_string(),
                value,
            })
    };
    Ok(RadarScores {
        emotional_stability: score(RadarDimension::EmotionalStability)?,
        self_worth: score(RadarDimension::SelfWorth)?,
        social_openness: score(RadarDimension::SocialOpenness)?,
        vitality: score(RadarDimension::Vitality)?,
        resilience: score(RadarDimension::Resilience)?,
        creativity: score(RadarDimension::Creativity)?,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("interpretation text from {source_name} is empty")]
pub struct EmptyText {
    pub source_name: String,
}

/// A generated or expert interpretation with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpretationText {
    pub text: String,
    pub source: String,
    pub prompt_id: String,
}

impl InterpretationText {
    pub fn new(
        text: impl Into<String>,
        source: impl Into<String>,
        prompt_id: impl Into<String>,
    ) -> Result<Self, EmptyText> {
        let text = text.into();
        let source = source.into();
        if text.trim().is_empty() {
            return Err(EmptyText { source_name: source });
        }
        Ok(Self {
            text,
            source,
            prompt_id: prompt_id.into(),
        })
    }
}
