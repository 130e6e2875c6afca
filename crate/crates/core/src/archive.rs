//! Events, media assets, segments and frame zones.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AssetId, EventId, SegmentId, UserId, ZoneId};
use crate::workspace::Visibility;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Interview,
    Seminar,
    Symposium,
    Workshop,
    RoundTable,
    Presentation,
    Demonstration,
    LabLife,
    Other,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::Interview,
        EventKind::Seminar,
        EventKind::Symposium,
        EventKind::Workshop,
        EventKind::RoundTable,
        EventKind::Presentation,
        EventKind::Demonstration,
        EventKind::LabLife,
        EventKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Interview => "interview",
            EventKind::Seminar => "seminar",
            EventKind::Symposium => "symposium",
            EventKind::Workshop => "workshop",
            EventKind::RoundTable => "round_table",
            EventKind::Presentation => "presentation",
            EventKind::Demonstration => "demonstration",
            EventKind::LabLife => "lab_life",
            EventKind::Other => "other",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown event kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataField {
    pub name: String,
    pub value: String,
}

/// A profile-driven, ordered description record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub profile: String,
    pub entries: Vec<MetadataField>,
}

impl MetadataRecord {
    pub fn new(profile: impl Into<String>) -> Self {
        Self {
            profile: profile.into(),
            entries: Vec::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.entries.push(MetadataField {
            name: name.into(),
            value: value.into(),
        });
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.value.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for field in &self.entries {
            if field.name.is_empty() {
                return Err(Error::Validation("metadata field name is empty".into()));
            }
            if !seen.insert(field.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate metadata field `{}`",
                    field.name
                )));
            }
        }
        Ok(())
    }

    /// Reads `Name: value` lines. A field named `Profil` or `Profile` sets
    /// the profile; blank lines are skipped. Exactly one space after the
    /// colon is consumed, so values keep any further leading characters.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut record = MetadataRecord::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, value) = line.split_once(':').ok_or_else(|| {
                Error::Validation(format!("line {}: expected `Name: value`", lineno + 1))
            })?;
            let value = value.strip_prefix(' ').unwrap_or(value);
            let name = name.trim();
            if name == "Profil" || name == "Profile" {
                record.profile = value.to_owned();
            } else {
                record.entries.push(MetadataField {
                    name: name.to_owned(),
                    value: value.to_owned(),
                });
            }
        }
        record.validate()?;
        Ok(record)
    }

    /// Inverse of [`MetadataRecord::parse_text`] for records whose profile is set.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.profile.is_empty() {
            out.push_str("Profil: ");
            out.push_str(&self.profile);
            out.push('\n');
        }
        for f in &self.entries {
            out.push_str(&f.name);
            out.push(':');
            if !f.value.is_empty() {
                out.push(' ');
                out.push_str(&f.value);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub kind: EventKind,
    pub metadata: MetadataRecord,
    pub asset_ids: Vec<AssetId>,
    pub registered_by: UserId,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaAsset {
    pub id: AssetId,
    pub event_id: EventId,
    pub uri: String,
    /// Zero means unknown.
    pub duration_ms: u64,
    pub format_label: String,
}

impl MediaAsset {
    pub fn known_duration(&self) -> Option<u64> {
        (self.duration_ms > 0).then_some(self.duration_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub asset_id: AssetId,
    pub event_id: EventId,
    pub start_ms: u64,
    pub end_ms: u64,
    pub label: Option<String>,
    pub owner: UserId,
    pub visibility: Visibility,
    pub created_at: DateTime<Utc>,
}

impl Segment {
    pub fn contains(&self, ms: u64) -> bool {
        self.start_ms <= ms && ms <= self.end_ms
    }
}

/// Checks `0 <= start < end <= duration` (the upper bound only when the
/// duration is known).
pub fn check_interval(start_ms: u64, end_ms: u64, duration: Option<u64>) -> Result<()> {
    if start_ms >= end_ms {
        return Err(Error::InvalidInterval(format!(
            "start {start_ms} ms must be before end {end_ms} ms"
        )));
    }
    if let Some(d) = duration {
        if end_ms > d {
            return Err(Error::OutOfRange(format!(
                "end {end_ms} ms exceeds asset duration {d} ms"
            )));
        }
    }
    Ok(())
}

/// A rectangle in normalized frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn validate(&self) -> Result<()> {
        let Rect { x, y, w, h } = *self;
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !(unit(x) && unit(y) && unit(w) && unit(h)) {
            return Err(Error::Validation(format!(
                "zone rectangle components must lie in [0,1]: {self:?}"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::Validation("zone rectangle needs positive width and height".into()));
        }
        if x + w > 1.0 || y + h > 1.0 {
            return Err(Error::Validation(format!(
                "zone rectangle leaves the unit square: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub segment_id: SegmentId,
    pub at_ms: u64,
    pub rect: Rect,
    pub created_by: UserId,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveStats {
    pub event_count: u64,
    pub total_known_duration_ms: u64,
    pub segment_count: u64,
}
