//! Viewpoint formularies: user-defined feature schemas and the filled-in
//! instances that qualify a segment description.
//!
//! Schemas are versioned copy-on-write: revising one produces a new
//! [`SchemaId`] whose `previous` points at the old version, and existing
//! instances keep pointing at the version they were validated against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{SchemaId, UserId};
use crate::workspace::Visibility;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Enumeration { values: Vec<String> },
    Ordinal { min: i64, max: i64 },
    FreeText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointSchema {
    pub id: SchemaId,
    pub name: String,
    pub features: Vec<FeatureDef>,
    pub owner: UserId,
    pub visibility: Visibility,
    pub version: u32,
    pub previous: Option<SchemaId>,
    pub created_at: DateTime<Utc>,
}

impl ViewpointSchema {
    pub fn feature(&self, name: &str) -> Option<&FeatureDef> {
        self.features.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Int(i64),
    Text(String),
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Int(i) => write!(f, "{i}"),
            FeatureValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointInstance {
    pub schema_id: SchemaId,
    pub values: BTreeMap<String, FeatureValue>,
    pub author: UserId,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum InstanceViolation {
    MissingRequired { feature: String },
    UnknownFeature { feature: String },
    ExpectedInteger { feature: String },
    ExpectedText { feature: String },
    OutOfRange { feature: String, value: i64, min: i64, max: i64 },
    NotAnOption { feature: String, value: String },
}

impl fmt::Display for InstanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceViolation::MissingRequired { feature } => write!(f, "required feature `{feature}` missing"),
            InstanceViolation::UnknownFeature { feature } => write!(f, "`{feature}` is not a feature of this schema"),
            InstanceViolation::ExpectedInteger { feature } => write!(f, "`{feature}` takes an integer"),
            InstanceViolation::ExpectedText { feature } => write!(f, "`{feature}` takes text"),
            InstanceViolation::OutOfRange { feature, value, min, max } => {
                write!(f, "`{feature}` = {value} outside [{min}, {max}]")
            }
            InstanceViolation::NotAnOption { feature, value } => {
                write!(f, "`{value}` is not an option of `{feature}`")
            }
        }
    }
}

pub fn validate_features(features: &[FeatureDef]) -> Result<()> {
    if features.is_empty() {
        return Err(Error::Validation("a viewpoint schema needs at least one feature".into()));
    }
    let mut names = BTreeSet::new();
    for f in features {
        if f.name.trim().is_empty() {
            return Err(Error::Validation("feature name is empty".into()));
        }
        if !names.insert(f.name.as_str()) {
            return Err(Error::DuplicateName(f.name.clone()));
        }
        match &f.kind {
            FeatureKind::Enumeration { values } => {
                if values.is_empty() {
                    return Err(Error::Validation(format!("enumeration `{}` has no values", f.name)));
                }
                let distinct: BTreeSet<_> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(Error::Validation(format!("enumeration `{}` repeats a value", f.name)));
                }
            }
            FeatureKind::Ordinal { min, max } if min >= max => {
                return Err(Error::Validation(format!(
                    "ordinal `{}` needs min < max, got [{min}, {max}]",
                    f.name
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn validate_instance(
    schema: &ViewpointSchema,
    values: &BTreeMap<String, FeatureValue>,
) -> Vec<InstanceViolation> {
    let mut out = Vec::new();
    for f in &schema.features {
        let Some(value) = values.get(&f.name) else {
            if f.required {
                out.push(InstanceViolation::MissingRequired { feature: f.name.clone() });
            }
            continue;
        };
        let feature = f.name.clone();
        match (&f.kind, value) {
            (FeatureKind::Ordinal { min, max }, FeatureValue::Int(v)) => {
                if v < min || v > max {
                    out.push(InstanceViolation::OutOfRange {
                        feature,
                        value: *v,
                        min: *min,
                        max: *max,
                    });
                }
            }
            (FeatureKind::Ordinal { .. }, FeatureValue::Text(_)) => {
                out.push(InstanceViolation::ExpectedInteger { feature })
            }
            (FeatureKind::Enumeration { values }, FeatureValue::Text(v)) => {
                if !values.contains(v) {
                    out.push(InstanceViolation::NotAnOption { feature, value: v.clone() });
                }
            }
            (FeatureKind::FreeText, FeatureValue::Text(_)) => {}
            (_, FeatureValue::Int(_)) => out.push(InstanceViolation::ExpectedText { feature }),
        }
    }
    for name in values.keys() {
        if schema.feature(name).is_none() {
            out.push(InstanceViolation::UnknownFeature { feature: name.clone() });
        }
    }
    out
}

/// Free-text values of an instance, for keyword search.
pub fn free_text_values<'a>(
    schema: &'a ViewpointSchema,
    values: &'a BTreeMap<String, FeatureValue>,
) -> impl Iterator<Item = &'a str> {
    schema.features.iter().filter_map(move |f| match (&f.kind, values.get(&f.name)) {
        (FeatureKind::FreeText, Some(FeatureValue::Text(s))) => Some(s.as_str()),
        _ => None,
    })
}

/// A shipped starter formulary.
#[derive(Debug, Clone, Copy)]
pub struct SchemaTemplate {
    pub name: &'static str,
    pub schema_name: &'static str,
    pub features: fn() -> Vec<FeatureDef>,
}

fn ordinal(name: &str, required: bool, definition: &str) -> FeatureDef {
    FeatureDef {
        name: name.into(),
        kind: FeatureKind::Ordinal { min: 1, max: 5 },
        required,
        definition: definition.into(),
    }
}

/// The five-feature segment analysis formulary.
pub fn segment_analysis_features() -> Vec<FeatureDef> {
    vec![
        FeatureDef {
            name: "rhetorical_nature".into(),
            kind: FeatureKind::Enumeration {
                values: ["argumentation", "description", "narration", "refutation"]
                    .map(String::from)
                    .to_vec(),
            },
            required: true,
            definition: "Dominant discourse activity of the segment.".into(),
        },
        ordinal("importance", true, "Relative importance of the theme developed in the segment or part."),
        ordinal("credibility", false, "Credibility of the information communicated."),
        FeatureDef {
            name: "added_value".into(),
            kind: FeatureKind::FreeText,
            required: false,
            definition: "What the communicated information adds.".into(),
        },
        ordinal("specialization_degree", false, "How specialized the communicated information is."),
    ]
}

pub const SCHEMA_TEMPLATES: &[SchemaTemplate] = &[SchemaTemplate {
    name: "segment-analysis",
    schema_name: "Segment analysis",
    features: segment_analysis_features,
}];

pub fn schema_template(name: &str) -> Result<&'static SchemaTemplate> {
    SCHEMA_TEMPLATES
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::not_found("viewpoint template", name))
}
