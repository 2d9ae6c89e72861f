//! Versioned observation schema: a tree of named groups whose leaves are
//! typed observation points addressed by dotted paths such as
//! `house.roof.style`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

use super::ObservationRecord;

/// Minimum number of observation points a usable schema must declare.
pub const MIN_LEAVES: usize = 150;

const DEFAULT_SCHEMA: &str = include_str!("../../assets/schema/observation.v1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LeafType {
    Enum {
        options: Vec<String>,
    },
    Boolean,
    Number {
        unit: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
    Note,
}

impl LeafType {
    pub fn describe(&self) -> String {
        match self {
            LeafType::Enum { options } => format!("enum({})", options.join("|")),
            LeafType::Boolean => "boolean".into(),
            LeafType::Number { unit, min, max } => {
                let range = match (min, max) {
                    (Some(lo), Some(hi)) => format!(" in [{lo}, {hi}]"),
                    (Some(lo), None) => format!(" >= {lo}"),
                    (None, Some(hi)) => format!(" <= {hi}"),
                    (None, None) => String::new(),
                };
                format!("number[{unit}]{range}")
            }
            LeafType::Note => "note".into(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            LeafType::Enum { .. } => "enum",
            LeafType::Boolean => "boolean",
            LeafType::Number { .. } => "number",
            LeafType::Note => "note",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafSpec {
    pub name: String,
    #[serde(flatten)]
    pub value_type: LeafType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaGroup {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<SchemaGroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub leaves: Vec<LeafSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SchemaDocument {
    version: String,
    #[serde(default)]
    reconstructed: bool,
    #[serde(default)]
    description: String,
    categories: Vec<SchemaGroup>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("schema is not valid JSON: {0}")]
    Parse(String),
    #[error("schema version is empty")]
    EmptyVersion,
    #[error("duplicate leaf path {0}")]
    DuplicatePath(String),
    #[error("invalid name {0:?}: names must be non-empty and contain no '.'")]
    BadName(String),
    #[error("enum leaf {0} declares no options")]
    EmptyOptions(String),
    #[error("schema declares {found} leaves, fewer than {required}")]
    TooFewLeaves { found: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSchema {
    doc: SchemaDocument,
    leaves: BTreeMap<String, LeafType>,
}

impl ObservationSchema {
    /// The schema shipped with the crate.
    pub fn default_schema() -> Self {
        Self::from_json(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }

    pub fn default_json() -> &'static str {
        DEFAULT_SCHEMA
    }

    /// Parses and indexes a schema. Leaf paths must be unique; the minimum
    /// leaf count is checked separately by [`ObservationSchema::check_coverage`].
    pub fn from_json(raw: &str) -> Result<Self, SchemaError> {
        let doc: SchemaDocument =
            serde_json::from_str(raw).map_err(|e| SchemaError::Parse(e.to_string()))?;
        if doc.version.trim().is_empty() {
            return Err(SchemaError::EmptyVersion);
        }
        let mut leaves = BTreeMap::new();
        for group in &doc.categories {
            index_group(group, "", &mut leaves)?;
        }
        Ok(Self { doc, leaves })
    }

    pub fn version(&self) -> &str {
        &self.doc.version
    }

    /// True when the point set is a reconstruction rather than a published instrument.
    pub fn is_reconstructed(&self) -> bool {
        self.doc.reconstructed
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf(&self, path: &str) -> Option<&LeafType> {
        self.leaves.get(path)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&str, &LeafType)> {
        self.leaves.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn categories(&self) -> &[SchemaGroup] {
        &self.doc.categories
    }

    pub fn check_coverage(&self) -> Result<(), SchemaError> {
        if self.leaves.len() < MIN_LEAVES {
            return Err(SchemaError::TooFewLeaves {
                found: self.leaves.len(),
                required: MIN_LEAVES,
            });
        }
        Ok(())
    }

    /// `path : type` lines for prompts.
    pub fn catalog(&self) -> String {
        self.leaves
            .iter()
            .map(|(path, t)| format!("{path} : {}", t.describe()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn index_group(
    group: &SchemaGroup,
    prefix: &str,
    out: &mut BTreeMap<String, LeafType>,
) -> Result<(), SchemaError> {
    check_name(&group.name)?;
    let base = if prefix.is_empty() {
        group.name.clone()
    } else {
        format!("{prefix}.{}", group.name)
    };
    for leaf in &group.leaves {
        check_name(&leaf.name)?;
        let path = format!("{base}.{}", leaf.name);
        if let LeafType::Enum { options } = &leaf.value_type {
            if options.is_empty() {
                return Err(SchemaError::EmptyOptions(path));
            }
        }
        if out.insert(path.clone(), leaf.value_type.clone()).is_some() {
            return Err(SchemaError::DuplicatePath(path));
        }
    }
    for child in &group.groups {
        index_group(child, &base, out)?;
    }
    Ok(())
}

fn check_name(name: &str) -> Result<(), SchemaError> {
    if name.trim().is_empty() || name.contains('.') {
        return Err(SchemaError::BadName(name.to_string()));
    }
    Ok(())
}

/// A recorded observation value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservationValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl ObservationValue {
    fn kind(&self) -> &'static str {
        match self {
            ObservationValue::Bool(_) => "boolean",
            ObservationValue::Number(_) => "number",
            ObservationValue::Text(_) => "string",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    SchemaVersion { expected: String, found: String },
    UnknownPath { path: String },
    TypeMismatch { path: String, expected: String, found: String },
    NotAnOption { path: String, value: String },
    OutOfRange { path: String, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SchemaVersion { expected, found } => {
                write!(f, "record uses schema {found}, expected {expected}")
            }
            Violation::UnknownPath { path } => write!(f, "{path}: unknown observation path"),
            Violation::TypeMismatch {
                path,
                expected,
                found,
            } => write!(f, "{path}: expected {expected}, found {found}"),
            Violation::NotAnOption { path, value } => {
                write!(f, "{path}: {value:?} is not a declared option")
            }
            Violation::OutOfRange { path, value } => {
                write!(f, "{path}: {value} is outside the declared range")
            }
        }
    }
}

/// Checks one value against its leaf declaration.
pub fn check_value(path: &str, leaf: &LeafType, value: &ObservationValue) -> Option<Violation> {
    let mismatch = || {
        Some(Violation::TypeMismatch {
            path: path.to_string(),
            expected: leaf.kind().to_string(),
            found: value.kind().to_string(),
        })
    };
    match (leaf, value) {
        (LeafType::Boolean, ObservationValue::Bool(_)) => None,
        (LeafType::Note, ObservationValue::Text(_)) => None,
        (LeafType::Enum { options }, ObservationValue::Text(v)) => {
            if options.iter().any(|o| o == v) {
                None
            } else {
                Some(Violation::NotAnOption {
                    path: path.to_string(),
                    value: v.clone(),
                })
            }
        }
        (LeafType::Number { min, max, .. }, ObservationValue::Number(v)) => {
            let below = min.is_some_and(|lo| *v < lo);
            let above = max.is_some_and(|hi| *v > hi);
            if !v.is_finite() || below || above {
                Some(Violation::OutOfRange {
                    path: path.to_string(),
                    value: *v,
                })
            } else {
                None
            }
        }
        _ => mismatch(),
    }
}

/// Every violation of `record` against `schema`; `Ok` when there are none.
/// Sparse records are valid.
pub fn validate_observation(
    record: &ObservationRecord,
    schema: &ObservationSchema,
) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if record.schema_version != schema.version() {
        violations.push(Violation::SchemaVersion {
            expected: schema.version().to_string(),
            found: record.schema_version.clone(),
        });
    }
    for (path, value) in &record.values {
        match schema.leaf(path) {
            None => violations.push(Violation::UnknownPath { path: path.clone() }),
            Some(leaf) => violations.extend(check_value(path, leaf, value)),
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case_id;
    use std::collections::BTreeSet;

    fn record(values: &[(&str, ObservationValue)]) -> ObservationRecord {
        ObservationRecord {
            case_id: parse_case_id("HTR-38-M-20240520").unwrap(),
            schema_version: ObservationSchema::default_schema().version().to_string(),
            values: values.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            source: "observer".into(),
        }
    }

    /// Walks the raw JSON independently of the indexer.
    fn raw_paths(v: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
        let name = v["name"].as_str().unwrap();
        let base = if prefix.is_empty() { name.to_string() } else { format!("{prefix}.{name}") };
        for leaf in v["leaves"].as_array().into_iter().flatten() {
            assert!(leaf["type"].is_string(), "leaf without type under {base}");
            out.push(format!("{base}.{}", leaf["name"].as_str().unwrap()));
        }
        for g in v["groups"].as_array().into_iter().flatten() {
            raw_paths(g, &base, out);
        }
    }

    #[test]
    fn default_schema_has_at_least_150_unique_typed_leaves() {
        let schema = ObservationSchema::default_schema();
        assert!(schema.leaf_count() >= MIN_LEAVES, "{}", schema.leaf_count());
        schema.check_coverage().unwrap();
        assert!(schema.is_reconstructed());

        let raw: serde_json::Value = serde_json::from_str(ObservationSchema::default_json()).unwrap();
        let mut paths = Vec::new();
        for c in raw["categories"].as_array().unwrap() {
            raw_paths(c, "", &mut paths);
        }
        let unique: BTreeSet<&String> = paths.iter().collect();
        assert_eq!(unique.len(), paths.len(), "duplicate leaf paths");
        assert_eq!(paths.len(), schema.leaf_count());
    }

    #[test]
    fn default_schema_covers_named_feature_groups() {
        let schema = ObservationSchema::default_schema();
        for path in [
            "line_quality.pressure",
            "spatial_layout.page_utilization",
            "proportions.person_size",
            "house.structure_completeness",
            "house.roof.style",
            "house.chimney.smoke",
            "house.path.shape",
            "tree.trunk.scars",
            "tree.crown.shape",
            "tree.roots.visible",
            "tree.fruit.present",
            "person.rendering",
            "person.neck.present",
            "person.hands.form",
            "person.fingers.present",
            "person.feet.roller_shoes",
            "special_symbols.sun",
            "special_symbols.swing",
            "omissions.fingers_missing",
        ] {
            assert!(schema.leaf(path).is_some(), "{path}");
        }
    }

    #[test]
    fn duplicate_leaf_paths_are_detected() {
        let raw = r#"{"version":"t","categories":[{"name":"a","leaves":[
            {"name":"x","type":"boolean"},{"name":"x","type":"note"}]}]}"#;
        assert_eq!(
            ObservationSchema::from_json(raw),
            Err(SchemaError::DuplicatePath("a.x".into()))
        );
        let nested = r#"{"version":"t","categories":[
            {"name":"a","groups":[{"name":"b","leaves":[{"name":"c","type":"boolean"}]}]},
            {"name":"a","groups":[{"name":"b","leaves":[{"name":"c","type":"boolean"}]}]}]}"#;
        assert_eq!(
            ObservationSchema::from_json(nested),
            Err(SchemaError::DuplicatePath("a.b.c".into()))
        );
    }

    #[test]
    fn malformed_schemas() {
        assert!(matches!(
            ObservationSchema::from_json(r#"{"version":"t","categories":[{"name":"a","leaves":[{"name":"x"}]}]}"#),
            Err(SchemaError::Parse(_))
        ));
        assert_eq!(
            ObservationSchema::from_json(r#"{"version":"t","categories":[{"name":"a.b"}]}"#),
            Err(SchemaError::BadName("a.b".into()))
        );
        assert_eq!(
            ObservationSchema::from_json(r#"{"version":" ","categories":[]}"#),
            Err(SchemaError::EmptyVersion)
        );
        let small = ObservationSchema::from_json(r#"{"version":"t","categories":[]}"#).unwrap();
        assert!(matches!(small.check_coverage(), Err(SchemaError::TooFewLeaves { found: 0, .. })));
    }

    #[test]
    fn empty_record_is_valid() {
        let schema = ObservationSchema::default_schema();
        assert_eq!(validate_observation(&record(&[]), &schema), Ok(()));
    }

    #[test]
    fn boolean_leaf_given_number_is_one_violation() {
        let schema = ObservationSchema::default_schema();
        let errs = validate_observation(
            &record(&[("house.chimney.smoke", ObservationValue::Number(1.0))]),
            &schema,
        )
        .unwrap_err();
        assert_eq!(
            errs,
            vec![Violation::TypeMismatch {
                path: "house.chimney.smoke".into(),
                expected: "boolean".into(),
                found: "number".into()
            }]
        );
    }

    #[test]
    fn every_violation_is_listed() {
        let schema = ObservationSchema::default_schema();
        let mut r = record(&[
            ("house.rooff.style", ObservationValue::Text("pitched".into())),
            ("house.roof.style", ObservationValue::Text("spiral".into())),
            ("spatial_layout.page_utilization", ObservationValue::Number(140.0)),
            ("tree.monochrome", ObservationValue::Bool(true)),
        ]);
        r.schema_version = "other".into();
        let errs = validate_observation(&r, &schema).unwrap_err();
        assert_eq!(errs.len(), 4);
        let text: Vec<String> = errs.iter().map(ToString::to_string).collect();
        assert!(text.iter().any(|t| t.contains("house.rooff.style")));
        assert!(text.iter().any(|t| t.contains("spiral")));
        assert!(text.iter().any(|t| t.contains("page_utilization")));
    }
}
