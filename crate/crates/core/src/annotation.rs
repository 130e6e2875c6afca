//! Annotations attach themes, graphs, viewpoint instances or notes to a
//! segment, a part of a segment, or a frame zone.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{AnnotationId, BookmarkId, EventId, GraphId, OntologyId, SchemaId, SegmentId, ThemeId, UserId, ZoneId};
use crate::viewpoint::ViewpointInstance;
use crate::workspace::Visibility;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnnotationTarget {
    Segment { segment_id: SegmentId },
    Part { segment_id: SegmentId, from_ms: u64, to_ms: u64 },
    Zone { zone_id: ZoneId },
}

impl AnnotationTarget {
    pub fn segment(id: impl Into<SegmentId>) -> Self {
        AnnotationTarget::Segment { segment_id: id.into() }
    }

    pub fn part(id: impl Into<SegmentId>, from_ms: u64, to_ms: u64) -> Self {
        AnnotationTarget::Part {
            segment_id: id.into(),
            from_ms,
            to_ms,
        }
    }

    pub fn zone(id: impl Into<ZoneId>) -> Self {
        AnnotationTarget::Zone { zone_id: id.into() }
    }

    pub fn part_range(&self) -> Option<(u64, u64)> {
        match self {
            AnnotationTarget::Part { from_ms, to_ms, .. } => Some((*from_ms, *to_ms)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnnotationBody {
    Theme { theme_id: ThemeId, ontology_id: OntologyId },
    Graph { graph_id: GraphId },
    Viewpoint(ViewpointInstance),
    Note { text: String },
}

impl AnnotationBody {
    pub fn kind(&self) -> &'static str {
        match self {
            AnnotationBody::Theme { .. } => "theme",
            AnnotationBody::Graph { .. } => "graph",
            AnnotationBody::Viewpoint(_) => "viewpoint",
            AnnotationBody::Note { .. } => "note",
        }
    }

    pub fn schema_id(&self) -> Option<&SchemaId> {
        match self {
            AnnotationBody::Viewpoint(v) => Some(&v.schema_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: AnnotationId,
    pub target: AnnotationTarget,
    pub body: AnnotationBody,
    pub author: UserId,
    pub created_at: DateTime<Utc>,
    pub visibility: Visibility,
    /// Tombstone: hidden from every listing and search, kept for provenance.
    #[serde(default)]
    pub deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bookmark {
    pub id: BookmarkId,
    pub event_id: EventId,
    pub note: String,
    pub owner: UserId,
    pub visibility: Visibility,
    pub created_at: DateTime<Utc>,
}
