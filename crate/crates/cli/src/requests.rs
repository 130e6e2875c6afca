//! Request documents shared by the HTTP service and the CLI. Both surfaces
//! turn a request into the same [`Op`], so a scripted scenario leaves the
//! same store state whichever surface drives it.

use std::collections::BTreeMap;

use archivist_core::annotation::AnnotationTarget;
use archivist_core::archive::{EventKind, MetadataRecord, Rect};
use archivist_core::ontology::{NewRelation, NewTheme};
use archivist_core::state::AttachBody;
use archivist_core::viewpoint::FeatureDef;
use archivist_core::workspace::{ResourceRef, Visibility};
use archivist_core::{timecode, AssetId, Error, EventId, GraphId, OntologyId, Op, PathId, Result, SchemaId, SegmentId, UserId, WorkspaceId, ZoneId};
use serde::{Deserialize, Serialize};

/// A time given as integer milliseconds or as an `HH:MM:SS.mmm` string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeInput {
    Ms(u64),
    Text(String),
}

impl TimeInput {
    pub fn ms(&self) -> Result<u64> {
        match self {
            TimeInput::Ms(ms) => Ok(*ms),
            TimeInput::Text(t) => timecode::parse(t),
        }
    }
}

impl From<&str> for TimeInput {
    fn from(s: &str) -> Self {
        TimeInput::Text(s.to_owned())
    }
}

fn default_visibility() -> Visibility {
    Visibility::Private
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserRequest {
    pub id: UserId,
    #[serde(default)]
    pub display_name: Option<String>,
}

impl UserRequest {
    pub fn into_op(self) -> Op {
        Op::RegisterUser {
            display_name: self.display_name.unwrap_or_else(|| self.id.to_string()),
            user: self.id,
        }
    }
}

/// Metadata may come structured or as `Name: value` text lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRequest {
    pub kind: EventKind,
    #[serde(default)]
    pub metadata: Option<MetadataRecord>,
    #[serde(default)]
    pub metadata_text: Option<String>,
}

impl EventRequest {
    pub fn into_op(self, by: &UserId) -> Result<Op> {
        let metadata = match (self.metadata, self.metadata_text) {
            (Some(_), Some(_)) => {
                return Err(Error::Validation("give either metadata or metadata_text, not both".into()))
            }
            (Some(m), None) => m,
            (None, Some(text)) => MetadataRecord::parse_text(&text)?,
            (None, None) => MetadataRecord::default(),
        };
        Ok(Op::RegisterEvent {
            kind: self.kind,
            metadata,
            by: by.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetRequest {
    pub event_id: EventId,
    pub uri: String,
    /// Absent or zero means unknown.
    #[serde(default)]
    pub duration: Option<TimeInput>,
    #[serde(default)]
    pub format_label: String,
}

impl AssetRequest {
    pub fn into_op(self, by: &UserId) -> Result<Op> {
        Ok(Op::AddMediaAsset {
            event_id: self.event_id,
            uri: self.uri,
            duration_ms: self.duration.map(|d| d.ms()).transpose()?.unwrap_or(0),
            format_label: self.format_label,
            by: by.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub asset_id: AssetId,
    pub start: TimeInput,
    pub end: TimeInput,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_visibility")]
    pub visibility: Visibility,
}

impl SegmentRequest {
    pub fn into_op(self, owner: &UserId) -> Result<Op> {
        Ok(Op::CreateSegment {
            asset_id: self.asset_id,
            start_ms: self.start.ms()?,
            end_ms: self.end.ms()?,
            label: self.label,
            owner: owner.clone(),
            visibility: self.visibility,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoneRequest {
    pub segment_id: SegmentId,
    pub at: TimeInput,
    pub rect: Rect,
}

impl ZoneRequest {
    pub fn into_op(self, by: &UserId) -> Result<Op> {
        Ok(Op::CreateZone {
            segment_id: self.segment_id,
            at_ms: self.at.ms()?,
            rect: self.rect,
            by: by.clone(),
        })
    }
}

/// Either a fresh named ontology or a shipped template.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OntologyRequest {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub template: Option<String>,
}

impl OntologyRequest {
    pub fn into_op(self, owner: &UserId) -> Result<Op> {
        match (self.name, self.template) {
            (Some(name), None) => Ok(Op::CreateOntology {
                name,
                owner: owner.clone(),
            }),
            (None, Some(template)) => Ok(Op::LoadOntologyTemplate {
                template,
                owner: owner.clone(),
            }),
            _ => Err(Error::Validation("give exactly one of name or template".into())),
        }
    }
}

pub fn add_theme_op(ontology_id: OntologyId, theme: NewTheme, by: &UserId) -> Op {
    Op::AddTheme {
        ontology_id,
        theme,
        by: by.clone(),
    }
}

pub fn add_relation_op(ontology_id: OntologyId, relation: NewRelation, by: &UserId) -> Op {
    Op::AddRelationType {
        ontology_id,
        relation,
        by: by.clone(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParentRequest {
    pub parent: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRequest {
    pub ontology_id: OntologyId,
    pub text: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub free_text: Option<String>,
    #[serde(default = "default_visibility")]
    pub visibility: Visibility,
}

impl GraphRequest {
    pub fn into_op(self, owner: &UserId) -> Op {
        Op::CreateGraph {
            ontology_id: self.ontology_id,
            text: self.text,
            name: self.name,
            free_text: self.free_text,
            owner: owner.clone(),
            visibility: self.visibility,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseRequest {
    pub ontology_id: OntologyId,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectRequest {
    pub ontology_id: OntologyId,
    pub query: String,
    pub target: String,
}

/// Either a fresh schema or a shipped template.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaRequest {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub features: Option<Vec<FeatureDef>>,
    #[serde(default)]
    pub template: Option<String>,
}

impl SchemaRequest {
    pub fn into_op(self, owner: &UserId) -> Result<Op> {
        match (self.name, self.features, self.template) {
            (Some(name), Some(features), None) => Ok(Op::DefineSchema {
                name,
                features,
                owner: owner.clone(),
            }),
            (None, None, Some(template)) => Ok(Op::LoadSchemaTemplate {
                template,
                owner: owner.clone(),
            }),
            _ => Err(Error::Validation("give name and features, or a template".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviseRequest {
    pub features: Vec<FeatureDef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub target: AnnotationTarget,
    pub body: AttachBody,
    #[serde(default = "default_visibility")]
    pub visibility: Visibility,
}

impl AnnotationRequest {
    pub fn into_op(self, author: &UserId) -> Op {
        Op::Attach {
            target: self.target,
            body: self.body,
            author: author.clone(),
            visibility: self.visibility,
        }
    }
}

/// Target given as loose fields, as on the CLI and in query strings.
pub fn target_from_parts(
    segment: Option<SegmentId>,
    from: Option<TimeInput>,
    to: Option<TimeInput>,
    zone: Option<ZoneId>,
) -> Result<AnnotationTarget> {
    match (segment, from, to, zone) {
        (Some(s), None, None, None) => Ok(AnnotationTarget::segment(s)),
        (Some(s), Some(f), Some(t), None) => Ok(AnnotationTarget::part(s, f.ms()?, t.ms()?)),
        (None, None, None, Some(z)) => Ok(AnnotationTarget::zone(z)),
        _ => Err(Error::Validation(
            "target is a segment, a segment with both from and to, or a zone".into(),
        )),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BookmarkRequest {
    pub event_id: EventId,
    #[serde(default)]
    pub note: String,
    #[serde(default = "default_visibility")]
    pub visibility: Visibility,
}

impl BookmarkRequest {
    pub fn into_op(self, owner: &UserId) -> Op {
        Op::BookmarkEvent {
            event_id: self.event_id,
            note: self.note,
            owner: owner.clone(),
            visibility: self.visibility,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NameRequest {
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberRequest {
    pub user: UserId,
}

pub fn add_member_op(workspace_id: WorkspaceId, user: UserId, by: &UserId) -> Op {
    Op::AddMember {
        workspace_id,
        user,
        by: by.clone(),
    }
}

pub fn share_op(workspace_id: WorkspaceId, resource: ResourceRef, by: &UserId) -> Op {
    Op::ShareResource {
        workspace_id,
        resource,
        by: by.clone(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisibilityRequest {
    pub visibility: Visibility,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathNodeRequest {
    pub segment_id: SegmentId,
    #[serde(default)]
    pub caption: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionRequest {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryRequest {
    pub node: String,
}

pub fn path_node_op(path_id: PathId, r: PathNodeRequest, by: &UserId) -> Op {
    Op::AddPathNode {
        path_id,
        segment_id: r.segment_id,
        caption: r.caption,
        by: by.clone(),
    }
}

pub fn transition_op(path_id: PathId, r: TransitionRequest, by: &UserId) -> Op {
    Op::AddTransition {
        path_id,
        from: r.from,
        to: r.to,
        label: r.label,
        by: by.clone(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSearchRequest {
    pub ontology_id: OntologyId,
    pub query: String,
}

/// `k=v` pairs; values that parse as integers become integers.
pub fn feature_values(pairs: &[String]) -> Result<BTreeMap<String, archivist_core::viewpoint::FeatureValue>> {
    use archivist_core::viewpoint::FeatureValue;
    let mut out = BTreeMap::new();
    for p in pairs {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("expected name=value, got `{p}`")))?;
        let value = match v.parse::<i64>() {
            Ok(i) => FeatureValue::Int(i),
            Err(_) => FeatureValue::Text(v.to_owned()),
        };
        out.insert(k.trim().to_owned(), value);
    }
    Ok(out)
}

pub fn graph_ref(id: &GraphId) -> ResourceRef {
    ResourceRef::new(archivist_core::workspace::ResourceKind::Graph, id)
}

pub fn schema_ref(id: &SchemaId) -> ResourceRef {
    ResourceRef::new(archivist_core::workspace::ResourceKind::Schema, id)
}
