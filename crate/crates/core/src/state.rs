//! The materialized archive state and the operations that change it.
//!
//! Every mutation is an [`Op`]. [`State::apply`] is deterministic given the
//! op and its timestamp, which is what makes journal replay reproduce the
//! state exactly. On error the state may be partially modified; callers
//! apply batches to a scratch copy and publish it only on success.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::annotation::{Annotation, AnnotationBody, AnnotationTarget, Bookmark};
use crate::archive::{check_interval, ArchiveStats, Event, EventKind, MediaAsset, MetadataRecord, Rect, Segment, Zone};
use crate::congraph::{parse_graph, validate_graph, GraphRecord};
use crate::error::{Error, Result};
use crate::ids::*;
use crate::montage::{NavigationPath, PathNode, Transition};
use crate::ontology::{ontology_template, NewRelation, NewTheme, ThemeOntology};
use crate::viewpoint::{
    schema_template, validate_features, validate_instance, FeatureDef, FeatureValue, ViewpointInstance,
    ViewpointSchema,
};
use crate::workspace::{self, Guard, ResourceKind, ResourceRef, User, Visibility, Workspace};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub next_id: u64,
    pub users: BTreeMap<UserId, User>,
    pub events: BTreeMap<EventId, Event>,
    pub assets: BTreeMap<AssetId, MediaAsset>,
    pub segments: BTreeMap<SegmentId, Segment>,
    pub zones: BTreeMap<ZoneId, Zone>,
    pub ontologies: BTreeMap<OntologyId, ThemeOntology>,
    pub graphs: BTreeMap<GraphId, GraphRecord>,
    pub schemas: BTreeMap<SchemaId, ViewpointSchema>,
    pub annotations: BTreeMap<AnnotationId, Annotation>,
    pub bookmarks: BTreeMap<BookmarkId, Bookmark>,
    pub workspaces: BTreeMap<WorkspaceId, Workspace>,
    pub paths: BTreeMap<PathId, NavigationPath>,
}

/// Body of an attach request. Themes are named by id or name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttachBody {
    Theme { ontology_id: OntologyId, theme: String },
    Graph { graph_id: GraphId },
    Viewpoint { schema_id: SchemaId, values: BTreeMap<String, FeatureValue> },
    Note { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    RegisterUser {
        user: UserId,
        display_name: String,
    },
    RegisterEvent {
        kind: EventKind,
        metadata: MetadataRecord,
        by: UserId,
    },
    AddMediaAsset {
        event_id: EventId,
        uri: String,
        duration_ms: u64,
        format_label: String,
        by: UserId,
    },
    CreateSegment {
        asset_id: AssetId,
        start_ms: u64,
        end_ms: u64,
        label: Option<String>,
        owner: UserId,
        visibility: Visibility,
    },
    CreateZone {
        segment_id: SegmentId,
        at_ms: u64,
        rect: Rect,
        by: UserId,
    },
    CreateOntology {
        name: String,
        owner: UserId,
    },
    AddTheme {
        ontology_id: OntologyId,
        theme: NewTheme,
        by: UserId,
    },
    AddThemeParent {
        ontology_id: OntologyId,
        theme: String,
        parent: String,
        by: UserId,
    },
    AddRelationType {
        ontology_id: OntologyId,
        relation: NewRelation,
        by: UserId,
    },
    LoadOntologyTemplate {
        template: String,
        owner: UserId,
    },
    CreateGraph {
        ontology_id: OntologyId,
        text: String,
        name: Option<String>,
        free_text: Option<String>,
        owner: UserId,
        visibility: Visibility,
    },
    DefineSchema {
        name: String,
        features: Vec<FeatureDef>,
        owner: UserId,
    },
    ReviseSchema {
        schema_id: SchemaId,
        features: Vec<FeatureDef>,
        by: UserId,
    },
    LoadSchemaTemplate {
        template: String,
        owner: UserId,
    },
    Attach {
        target: AnnotationTarget,
        body: AttachBody,
        author: UserId,
        visibility: Visibility,
    },
    DeleteAnnotation {
        annotation_id: AnnotationId,
        by: UserId,
    },
    BookmarkEvent {
        event_id: EventId,
        note: String,
        owner: UserId,
        visibility: Visibility,
    },
    CreateWorkspace {
        name: String,
        owner: UserId,
    },
    AddMember {
        workspace_id: WorkspaceId,
        user: UserId,
        by: UserId,
    },
    ShareResource {
        workspace_id: WorkspaceId,
        resource: ResourceRef,
        by: UserId,
    },
    SetVisibility {
        resource: ResourceRef,
        visibility: Visibility,
        by: UserId,
    },
    CreatePath {
        name: String,
        owner: UserId,
    },
    AddPathNode {
        path_id: PathId,
        segment_id: SegmentId,
        caption: String,
        by: UserId,
    },
    AddTransition {
        path_id: PathId,
        from: String,
        to: String,
        label: String,
        by: UserId,
    },
    SetEntry {
        path_id: PathId,
        node: String,
        by: UserId,
    },
}

impl Op {
    /// The journal `kind` of this op.
    pub fn kind(&self) -> &'static str {
        match self {
            Op::RegisterUser { .. } => "register_user",
            Op::RegisterEvent { .. } => "register_event",
            Op::AddMediaAsset { .. } => "add_media_asset",
            Op::CreateSegment { .. } => "create_segment",
            Op::CreateZone { .. } => "create_zone",
            Op::CreateOntology { .. } => "create_ontology",
            Op::AddTheme { .. } => "add_theme",
            Op::AddThemeParent { .. } => "add_theme_parent",
            Op::AddRelationType { .. } => "add_relation_type",
            Op::LoadOntologyTemplate { .. } => "load_ontology_template",
            Op::CreateGraph { .. } => "create_graph",
            Op::DefineSchema { .. } => "define_schema",
            Op::ReviseSchema { .. } => "revise_schema",
            Op::LoadSchemaTemplate { .. } => "load_schema_template",
            Op::Attach { .. } => "attach",
            Op::DeleteAnnotation { .. } => "delete_annotation",
            Op::BookmarkEvent { .. } => "bookmark_event",
            Op::CreateWorkspace { .. } => "create_workspace",
            Op::AddMember { .. } => "add_member",
            Op::ShareResource { .. } => "share_resource",
            Op::SetVisibility { .. } => "set_visibility",
            Op::CreatePath { .. } => "create_path",
            Op::AddPathNode { .. } => "add_path_node",
            Op::AddTransition { .. } => "add_transition",
            Op::SetEntry { .. } => "set_entry",
        }
    }
}

/// What an applied op produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "created", content = "id", rename_all = "snake_case")]
pub enum Applied {
    User(UserId),
    Event(EventId),
    Asset(AssetId),
    Segment(SegmentId),
    Zone(ZoneId),
    Ontology(OntologyId),
    Theme(ThemeId),
    Relation(RelationTypeId),
    Graph(GraphId),
    Schema(SchemaId),
    Annotation(AnnotationId),
    Bookmark(BookmarkId),
    Workspace(WorkspaceId),
    Path(PathId),
    PathNode(String),
    Nothing,
}

impl Applied {
    pub fn id(&self) -> Option<&str> {
        Some(match self {
            Applied::User(i) => i.as_str(),
            Applied::Event(i) => i.as_str(),
            Applied::Asset(i) => i.as_str(),
            Applied::Segment(i) => i.as_str(),
            Applied::Zone(i) => i.as_str(),
            Applied::Ontology(i) => i.as_str(),
            Applied::Theme(i) => i.as_str(),
            Applied::Relation(i) => i.as_str(),
            Applied::Graph(i) => i.as_str(),
            Applied::Schema(i) => i.as_str(),
            Applied::Annotation(i) => i.as_str(),
            Applied::Bookmark(i) => i.as_str(),
            Applied::Workspace(i) => i.as_str(),
            Applied::Path(i) => i.as_str(),
            Applied::PathNode(i) => i.as_str(),
            Applied::Nothing => return None,
        })
    }
}

fn non_empty(what: &str, text: &str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::Validation(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

impl State {
    fn fresh<T>(&mut self, make: fn(u64) -> T) -> T {
        self.next_id += 1;
        make(self.next_id)
    }

    // ---- lookups -------------------------------------------------------

    pub fn user(&self, id: &UserId) -> Result<&User> {
        self.users.get(id).ok_or_else(|| Error::not_found("user", id))
    }

    pub fn event(&self, id: &EventId) -> Result<&Event> {
        self.events.get(id).ok_or_else(|| Error::not_found("event", id))
    }

    pub fn asset(&self, id: &AssetId) -> Result<&MediaAsset> {
        self.assets.get(id).ok_or_else(|| Error::not_found("asset", id))
    }

    pub fn segment(&self, id: &SegmentId) -> Result<&Segment> {
        self.segments.get(id).ok_or_else(|| Error::not_found("segment", id))
    }

    pub fn zone(&self, id: &ZoneId) -> Result<&Zone> {
        self.zones.get(id).ok_or_else(|| Error::not_found("zone", id))
    }

    pub fn ontology(&self, id: &OntologyId) -> Result<&ThemeOntology> {
        self.ontologies.get(id).ok_or_else(|| Error::not_found("ontology", id))
    }

    pub fn graph(&self, id: &GraphId) -> Result<&GraphRecord> {
        self.graphs.get(id).ok_or_else(|| Error::not_found("graph", id))
    }

    pub fn schema(&self, id: &SchemaId) -> Result<&ViewpointSchema> {
        self.schemas.get(id).ok_or_else(|| Error::not_found("viewpoint schema", id))
    }

    pub fn annotation(&self, id: &AnnotationId) -> Result<&Annotation> {
        self.annotations
            .get(id)
            .filter(|a| !a.deleted)
            .ok_or_else(|| Error::not_found("annotation", id))
    }

    pub fn workspace(&self, id: &WorkspaceId) -> Result<&Workspace> {
        self.workspaces.get(id).ok_or_else(|| Error::not_found("workspace", id))
    }

    pub fn path(&self, id: &PathId) -> Result<&NavigationPath> {
        self.paths.get(id).ok_or_else(|| Error::not_found("path", id))
    }

    /// Owner and visibility of a shareable resource.
    pub fn guard(&self, r: &ResourceRef) -> Result<Guard<'_>> {
        let id = r.id.as_str();
        Ok(match r.kind {
            ResourceKind::Ontology => {
                let o = self.ontology(&id.into())?;
                Guard { owner: &o.owner, visibility: &o.visibility }
            }
            ResourceKind::Schema => {
                let s = self.schema(&id.into())?;
                Guard { owner: &s.owner, visibility: &s.visibility }
            }
            ResourceKind::Graph => {
                let g = self.graph(&id.into())?;
                Guard { owner: &g.owner, visibility: &g.visibility }
            }
            ResourceKind::Segment => {
                let s = self.segment(&id.into())?;
                Guard { owner: &s.owner, visibility: &s.visibility }
            }
            ResourceKind::Bookmark => {
                let b = self
                    .bookmarks
                    .get(&BookmarkId::new(id))
                    .ok_or_else(|| Error::not_found("bookmark", id))?;
                Guard { owner: &b.owner, visibility: &b.visibility }
            }
            ResourceKind::Path => {
                let p = self.path(&id.into())?;
                Guard { owner: &p.owner, visibility: &p.visibility }
            }
            ResourceKind::Annotation => {
                let a = self.annotation(&id.into())?;
                Guard { owner: &a.author, visibility: &a.visibility }
            }
        })
    }

    /// The single viewing rule every listing and search goes through.
    /// Missing resources are not viewable.
    pub fn can_view(&self, user: &UserId, r: &ResourceRef) -> bool {
        match self.guard(r) {
            Ok(g) => workspace::can_view(user, g, r, &self.workspaces),
            Err(_) => false,
        }
    }

    pub fn can_view_segment(&self, user: &UserId, id: &SegmentId) -> bool {
        self.can_view(user, &ResourceRef::new(ResourceKind::Segment, id))
    }

    /// An annotation is visible when it is live, its own visibility admits
    /// the user, and both the segment it hangs on and the ontology, graph or
    /// schema its body refers to are visible too.
    pub fn can_view_annotation(&self, user: &UserId, a: &Annotation) -> bool {
        let body_ref = match &a.body {
            AnnotationBody::Theme { ontology_id, .. } => ResourceRef::new(ResourceKind::Ontology, ontology_id),
            AnnotationBody::Graph { graph_id } => ResourceRef::new(ResourceKind::Graph, graph_id),
            AnnotationBody::Viewpoint(v) => ResourceRef::new(ResourceKind::Schema, &v.schema_id),
            AnnotationBody::Note { .. } => ResourceRef::new(ResourceKind::Annotation, &a.id),
        };
        !a.deleted
            && self.can_view(user, &ResourceRef::new(ResourceKind::Annotation, &a.id))
            && self.can_view(user, &body_ref)
            && self
                .target_segment(&a.target)
                .is_ok_and(|s| self.can_view_segment(user, &s.id))
    }

    /// Owners, and anyone who can see a group resource (collective update).
    pub fn can_edit(&self, user: &UserId, r: &ResourceRef) -> Result<()> {
        let g = self.guard(r)?;
        let allowed = user == g.owner
            || (matches!(g.visibility, Visibility::Group(_)) && workspace::can_view(user, g, r, &self.workspaces));
        if allowed {
            Ok(())
        } else {
            Err(Error::Access(format!("{user} may not modify {r}")))
        }
    }

    fn require_owner(&self, user: &UserId, r: &ResourceRef) -> Result<()> {
        if self.guard(r)?.owner == user {
            Ok(())
        } else {
            Err(Error::Access(format!("{user} does not own {r}")))
        }
    }

    fn require_view(&self, user: &UserId, r: &ResourceRef) -> Result<()> {
        self.guard(r)?;
        if self.can_view(user, r) {
            Ok(())
        } else {
            Err(Error::Access(format!("{r} is not visible to {user}")))
        }
    }

    /// `group(w)` requires `w` to exist with `user` as a member.
    fn check_visibility(&self, user: &UserId, v: &Visibility) -> Result<()> {
        if let Visibility::Group(w) = v {
            if !self.workspace(w)?.members.contains(user) {
                return Err(Error::Access(format!("{user} is not a member of {w}")));
            }
        }
        Ok(())
    }

    pub fn target_segment(&self, t: &AnnotationTarget) -> Result<&Segment> {
        match t {
            AnnotationTarget::Segment { segment_id } | AnnotationTarget::Part { segment_id, .. } => {
                self.segment(segment_id)
            }
            AnnotationTarget::Zone { zone_id } => self.segment(&self.zone(zone_id)?.segment_id),
        }
    }

    fn check_target(&self, t: &AnnotationTarget) -> Result<&Segment> {
        let seg = self.target_segment(t)?;
        if let AnnotationTarget::Part { from_ms, to_ms, .. } = t {
            if from_ms >= to_ms {
                return Err(Error::InvalidInterval(format!("part [{from_ms}, {to_ms}] is empty or reversed")));
            }
            if *from_ms < seg.start_ms || *to_ms > seg.end_ms {
                return Err(Error::InvalidInterval(format!(
                    "part [{from_ms}, {to_ms}] leaves segment [{}, {}]",
                    seg.start_ms, seg.end_ms
                )));
            }
        }
        Ok(seg)
    }

    // ---- apply ---------------------------------------------------------

    pub fn apply(&mut self, at: DateTime<Utc>, op: &Op) -> Result<Applied> {
        match op {
            Op::RegisterUser { user, display_name } => {
                if !is_url_safe(user.as_str()) {
                    return Err(Error::Validation(format!("user id `{user}` must be URL-safe")));
                }
                if self.users.contains_key(user) {
                    return Err(Error::Conflict(format!("user `{user}` already exists")));
                }
                self.users.insert(
                    user.clone(),
                    User {
                        id: user.clone(),
                        display_name: display_name.clone(),
                        created_at: at,
                    },
                );
                Ok(Applied::User(user.clone()))
            }

            Op::RegisterEvent { kind, metadata, by } => {
                self.user(by)?;
                metadata.validate()?;
                let id = self.fresh(EventId::from_counter);
                self.events.insert(
                    id.clone(),
                    Event {
                        id: id.clone(),
                        kind: *kind,
                        metadata: metadata.clone(),
                        asset_ids: Vec::new(),
                        registered_by: by.clone(),
                        created_at: at,
                    },
                );
                Ok(Applied::Event(id))
            }

            Op::AddMediaAsset {
                event_id,
                uri,
                duration_ms,
                format_label,
                by,
            } => {
                self.user(by)?;
                self.event(event_id)?;
                non_empty("asset uri", uri)?;
                let id = self.fresh(AssetId::from_counter);
                self.assets.insert(
                    id.clone(),
                    MediaAsset {
                        id: id.clone(),
                        event_id: event_id.clone(),
                        uri: uri.clone(),
                        duration_ms: *duration_ms,
                        format_label: format_label.clone(),
                    },
                );
                self.events.get_mut(event_id).expect("checked").asset_ids.push(id.clone());
                Ok(Applied::Asset(id))
            }

            Op::CreateSegment {
                asset_id,
                start_ms,
                end_ms,
                label,
                owner,
                visibility,
            } => {
                self.user(owner)?;
                let asset = self.asset(asset_id)?;
                check_interval(*start_ms, *end_ms, asset.known_duration())?;
                let event_id = asset.event_id.clone();
                self.check_visibility(owner, visibility)?;
                let id = self.fresh(SegmentId::from_counter);
                self.segments.insert(
                    id.clone(),
                    Segment {
                        id: id.clone(),
                        asset_id: asset_id.clone(),
                        event_id,
                        start_ms: *start_ms,
                        end_ms: *end_ms,
                        label: label.clone().filter(|l| !l.is_empty()),
                        owner: owner.clone(),
                        visibility: visibility.clone(),
                        created_at: at,
                    },
                );
                Ok(Applied::Segment(id))
            }

            Op::CreateZone {
                segment_id,
                at_ms,
                rect,
                by,
            } => {
                self.user(by)?;
                self.require_view(by, &ResourceRef::new(ResourceKind::Segment, segment_id))?;
                let seg = self.segment(segment_id)?;
                if !seg.contains(*at_ms) {
                    return Err(Error::Validation(format!(
                        "zone time {at_ms} ms lies outside segment [{}, {}]",
                        seg.start_ms, seg.end_ms
                    )));
                }
                rect.validate()?;
                let id = self.fresh(ZoneId::from_counter);
                self.zones.insert(
                    id.clone(),
                    Zone {
                        id: id.clone(),
                        segment_id: segment_id.clone(),
                        at_ms: *at_ms,
                        rect: *rect,
                        created_by: by.clone(),
                        created_at: at,
                    },
                );
                Ok(Applied::Zone(id))
            }

            Op::CreateOntology { name, owner } => {
                self.user(owner)?;
                non_empty("ontology name", name)?;
                let id = self.fresh(OntologyId::from_counter);
                let root = self.fresh(ThemeId::from_counter);
                let o = ThemeOntology::new(id.clone(), name.clone(), root, owner.clone(), at)?;
                self.ontologies.insert(id.clone(), o);
                Ok(Applied::Ontology(id))
            }

            Op::AddTheme { ontology_id, theme, by } => {
                self.can_edit(by, &ResourceRef::new(ResourceKind::Ontology, ontology_id))?;
                let id = self.fresh(ThemeId::from_counter);
                let o = self.ontologies.get_mut(ontology_id).expect("guarded");
                Ok(Applied::Theme(o.add_theme(id, theme.clone())?))
            }

            Op::AddThemeParent {
                ontology_id,
                theme,
                parent,
                by,
            } => {
                self.can_edit(by, &ResourceRef::new(ResourceKind::Ontology, ontology_id))?;
                self.ontologies
                    .get_mut(ontology_id)
                    .expect("guarded")
                    .add_parent(theme, parent)?;
                Ok(Applied::Nothing)
            }

            Op::AddRelationType {
                ontology_id,
                relation,
                by,
            } => {
                self.can_edit(by, &ResourceRef::new(ResourceKind::Ontology, ontology_id))?;
                let id = self.fresh(RelationTypeId::from_counter);
                let o = self.ontologies.get_mut(ontology_id).expect("guarded");
                Ok(Applied::Relation(o.add_relation_type(id, relation.clone())?))
            }

            Op::LoadOntologyTemplate { template, owner } => {
                self.user(owner)?;
                let t = ontology_template(template)?;
                let id = self.fresh(OntologyId::from_counter);
                let root = self.fresh(ThemeId::from_counter);
                let mut o = ThemeOntology::new(id.clone(), t.ontology_name, root, owner.clone(), at)?;
                for spec in t.theme_specs() {
                    let tid = self.fresh(ThemeId::from_counter);
                    o.add_theme(tid, spec)?;
                }
                for spec in t.relation_specs() {
                    let rid = self.fresh(RelationTypeId::from_counter);
                    o.add_relation_type(rid, spec)?;
                }
                self.ontologies.insert(id.clone(), o);
                Ok(Applied::Ontology(id))
            }

            Op::CreateGraph {
                ontology_id,
                text,
                name,
                free_text,
                owner,
                visibility,
            } => {
                self.user(owner)?;
                self.require_view(owner, &ResourceRef::new(ResourceKind::Ontology, ontology_id))?;
                self.check_visibility(owner, visibility)?;
                let mut graph = parse_graph(text, self.ontology(ontology_id)?)?;
                graph.name = name.clone().filter(|s| !s.is_empty());
                graph.free_text = free_text.clone().filter(|s| !s.is_empty());
                let id = self.fresh(GraphId::from_counter);
                self.graphs.insert(
                    id.clone(),
                    GraphRecord {
                        id: id.clone(),
                        graph,
                        owner: owner.clone(),
                        visibility: visibility.clone(),
                        created_at: at,
                    },
                );
                Ok(Applied::Graph(id))
            }

            Op::DefineSchema { name, features, owner } => {
                self.user(owner)?;
                non_empty("schema name", name)?;
                validate_features(features)?;
                Ok(Applied::Schema(self.insert_schema(name.clone(), features.clone(), owner.clone(), None, at)))
            }

            Op::ReviseSchema { schema_id, features, by } => {
                self.can_edit(by, &ResourceRef::new(ResourceKind::Schema, schema_id))?;
                validate_features(features)?;
                let old = self.schema(schema_id)?.clone();
                let id = self.insert_schema(old.name, features.clone(), old.owner, Some((old.id, old.version)), at);
                self.schemas.get_mut(&id).expect("inserted").visibility = old.visibility;
                Ok(Applied::Schema(id))
            }

            Op::LoadSchemaTemplate { template, owner } => {
                self.user(owner)?;
                let t = schema_template(template)?;
                Ok(Applied::Schema(self.insert_schema(
                    t.schema_name.into(),
                    (t.features)(),
                    owner.clone(),
                    None,
                    at,
                )))
            }

            Op::Attach {
                target,
                body,
                author,
                visibility,
            } => {
                self.user(author)?;
                let seg = self.check_target(target)?;
                self.require_view(author, &ResourceRef::new(ResourceKind::Segment, &seg.id))?;
                self.check_visibility(author, visibility)?;
                let body = self.resolve_body(body, author, at)?;
                let id = self.fresh(AnnotationId::from_counter);
                self.annotations.insert(
                    id.clone(),
                    Annotation {
                        id: id.clone(),
                        target: target.clone(),
                        body,
                        author: author.clone(),
                        created_at: at,
                        visibility: visibility.clone(),
                        deleted: false,
                    },
                );
                Ok(Applied::Annotation(id))
            }

            Op::DeleteAnnotation { annotation_id, by } => {
                self.require_owner(by, &ResourceRef::new(ResourceKind::Annotation, annotation_id))?;
                self.annotations.get_mut(annotation_id).expect("guarded").deleted = true;
                Ok(Applied::Nothing)
            }

            Op::BookmarkEvent {
                event_id,
                note,
                owner,
                visibility,
            } => {
                self.user(owner)?;
                self.event(event_id)?;
                self.check_visibility(owner, visibility)?;
                let id = self.fresh(BookmarkId::from_counter);
                self.bookmarks.insert(
                    id.clone(),
                    Bookmark {
                        id: id.clone(),
                        event_id: event_id.clone(),
                        note: note.clone(),
                        owner: owner.clone(),
                        visibility: visibility.clone(),
                        created_at: at,
                    },
                );
                Ok(Applied::Bookmark(id))
            }

            Op::CreateWorkspace { name, owner } => {
                self.user(owner)?;
                non_empty("workspace name", name)?;
                let id = self.fresh(WorkspaceId::from_counter);
                self.workspaces.insert(
                    id.clone(),
                    Workspace {
                        id: id.clone(),
                        name: name.clone(),
                        owner: owner.clone(),
                        members: BTreeSet::from([owner.clone()]),
                        resource_refs: BTreeSet::new(),
                        created_at: at,
                    },
                );
                Ok(Applied::Workspace(id))
            }

            Op::AddMember { workspace_id, user, by } => {
                let ws = self.workspace(workspace_id)?;
                if &ws.owner != by {
                    return Err(Error::Access(format!("only the owner may add members to {workspace_id}")));
                }
                self.user(user)?;
                self.workspaces
                    .get_mut(workspace_id)
                    .expect("checked")
                    .members
                    .insert(user.clone());
                Ok(Applied::Nothing)
            }

            Op::ShareResource {
                workspace_id,
                resource,
                by,
            } => {
                if !self.workspace(workspace_id)?.members.contains(by) {
                    return Err(Error::Access(format!("{by} is not a member of {workspace_id}")));
                }
                self.require_owner(by, resource)?;
                if *self.guard(resource)?.visibility == Visibility::Private {
                    *self.visibility_mut(resource)? = Visibility::Group(workspace_id.clone());
                }
                self.workspaces
                    .get_mut(workspace_id)
                    .expect("checked")
                    .resource_refs
                    .insert(resource.clone());
                Ok(Applied::Nothing)
            }

            Op::SetVisibility {
                resource,
                visibility,
                by,
            } => {
                self.require_owner(by, resource)?;
                self.check_visibility(by, visibility)?;
                *self.visibility_mut(resource)? = visibility.clone();
                Ok(Applied::Nothing)
            }

            Op::CreatePath { name, owner } => {
                self.user(owner)?;
                non_empty("path name", name)?;
                let id = self.fresh(PathId::from_counter);
                self.paths.insert(id.clone(), NavigationPath::new(id.clone(), name.clone(), owner.clone(), at));
                Ok(Applied::Path(id))
            }

            Op::AddPathNode {
                path_id,
                segment_id,
                caption,
                by,
            } => {
                self.require_owner(by, &ResourceRef::new(ResourceKind::Path, path_id))?;
                self.require_view(by, &ResourceRef::new(ResourceKind::Segment, segment_id))?;
                let path = self.paths.get_mut(path_id).expect("guarded");
                path.next_node += 1;
                let node = format!("n{}", path.next_node);
                path.nodes.push(PathNode {
                    id: node.clone(),
                    segment_id: segment_id.clone(),
                    caption: caption.clone(),
                });
                // the first node becomes the entry until one is set explicitly
                if path.entry.is_none() {
                    path.entry = Some(node.clone());
                }
                Ok(Applied::PathNode(node))
            }

            Op::AddTransition {
                path_id,
                from,
                to,
                label,
                by,
            } => {
                self.require_owner(by, &ResourceRef::new(ResourceKind::Path, path_id))?;
                let path = self.paths.get_mut(path_id).expect("guarded");
                for n in [from, to] {
                    if path.node(n).is_none() {
                        return Err(Error::not_found("path node", n));
                    }
                }
                let t = Transition {
                    from: from.clone(),
                    to: to.clone(),
                    label: label.clone(),
                };
                if path.transitions.contains(&t) {
                    return Err(Error::Conflict(format!("transition {from} -> {to} `{label}` already exists")));
                }
                path.transitions.push(t);
                Ok(Applied::Nothing)
            }

            Op::SetEntry { path_id, node, by } => {
                self.require_owner(by, &ResourceRef::new(ResourceKind::Path, path_id))?;
                let path = self.paths.get_mut(path_id).expect("guarded");
                if path.node(node).is_none() {
                    return Err(Error::not_found("path node", node));
                }
                path.entry = Some(node.clone());
                Ok(Applied::Nothing)
            }
        }
    }

    fn insert_schema(
        &mut self,
        name: String,
        features: Vec<FeatureDef>,
        owner: UserId,
        previous: Option<(SchemaId, u32)>,
        at: DateTime<Utc>,
    ) -> SchemaId {
        let id = self.fresh(SchemaId::from_counter);
        let (previous, version) = match previous {
            Some((p, v)) => (Some(p), v + 1),
            None => (None, 1),
        };
        self.schemas.insert(
            id.clone(),
            ViewpointSchema {
                id: id.clone(),
                name,
                features,
                owner,
                visibility: Visibility::Private,
                version,
                previous,
                created_at: at,
            },
        );
        id
    }

    fn resolve_body(&self, body: &AttachBody, author: &UserId, at: DateTime<Utc>) -> Result<AnnotationBody> {
        Ok(match body {
            AttachBody::Theme { ontology_id, theme } => {
                self.require_view(author, &ResourceRef::new(ResourceKind::Ontology, ontology_id))?;
                let theme = self.ontology(ontology_id)?.resolve_theme(theme)?;
                AnnotationBody::Theme {
                    theme_id: theme.id.clone(),
                    ontology_id: ontology_id.clone(),
                }
            }
            AttachBody::Graph { graph_id } => {
                self.require_view(author, &ResourceRef::new(ResourceKind::Graph, graph_id))?;
                AnnotationBody::Graph {
                    graph_id: graph_id.clone(),
                }
            }
            AttachBody::Viewpoint { schema_id, values } => {
                self.require_view(author, &ResourceRef::new(ResourceKind::Schema, schema_id))?;
                let violations = validate_instance(self.schema(schema_id)?, values);
                if !violations.is_empty() {
                    let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
                    return Err(Error::Validation(msgs.join("; ")));
                }
                AnnotationBody::Viewpoint(ViewpointInstance {
                    schema_id: schema_id.clone(),
                    values: values.clone(),
                    author: author.clone(),
                    created_at: at,
                })
            }
            AttachBody::Note { text } => {
                non_empty("note", text)?;
                AnnotationBody::Note { text: text.clone() }
            }
        })
    }

    fn visibility_mut(&mut self, r: &ResourceRef) -> Result<&mut Visibility> {
        let id = r.id.as_str();
        let missing = || Error::not_found("resource", r);
        Ok(match r.kind {
            ResourceKind::Ontology => &mut self.ontologies.get_mut(&OntologyId::new(id)).ok_or_else(missing)?.visibility,
            ResourceKind::Schema => &mut self.schemas.get_mut(&SchemaId::new(id)).ok_or_else(missing)?.visibility,
            ResourceKind::Graph => &mut self.graphs.get_mut(&GraphId::new(id)).ok_or_else(missing)?.visibility,
            ResourceKind::Segment => &mut self.segments.get_mut(&SegmentId::new(id)).ok_or_else(missing)?.visibility,
            ResourceKind::Bookmark => &mut self.bookmarks.get_mut(&BookmarkId::new(id)).ok_or_else(missing)?.visibility,
            ResourceKind::Path => &mut self.paths.get_mut(&PathId::new(id)).ok_or_else(missing)?.visibility,
            ResourceKind::Annotation => {
                &mut self
                    .annotations
                    .get_mut(&AnnotationId::new(id))
                    .filter(|a| !a.deleted)
                    .ok_or_else(missing)?
                    .visibility
            }
        })
    }

    // ---- read side -----------------------------------------------------

    /// Ordered by (created_at, id).
    pub fn list_events(&self, kind: Option<EventKind>) -> Vec<&Event> {
        let mut out: Vec<&Event> = self
            .events
            .values()
            .filter(|e| kind.is_none_or(|k| e.kind == k))
            .collect();
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        out
    }

    pub fn archive_stats(&self) -> ArchiveStats {
        ArchiveStats {
            event_count: self.events.len() as u64,
            total_known_duration_ms: self.assets.values().filter_map(MediaAsset::known_duration).sum(),
            segment_count: self.segments.len() as u64,
        }
    }

    /// Segments visible to `user`, ordered by (created_at, id).
    pub fn list_segments(&self, user: &UserId) -> Vec<&Segment> {
        let mut out: Vec<&Segment> = self
            .segments
            .values()
            .filter(|s| self.can_view_segment(user, &s.id))
            .collect();
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        out
    }

    /// Live annotations anchored at `target` that `user` may see.
    ///
    /// A whole-segment target lists everything anchored in the segment
    /// (whole, parts and zones); a part lists overlapping parts; a zone
    /// lists that zone's annotations.
    pub fn list_annotations(&self, target: &AnnotationTarget, user: &UserId) -> Result<Vec<&Annotation>> {
        self.target_segment(target)?;
        let matches = |a: &Annotation| match (target, &a.target) {
            (AnnotationTarget::Segment { segment_id }, t) => {
                self.target_segment(t).is_ok_and(|s| &s.id == segment_id)
            }
            (
                AnnotationTarget::Part { segment_id, from_ms, to_ms },
                AnnotationTarget::Part {
                    segment_id: s2,
                    from_ms: f2,
                    to_ms: t2,
                },
            ) => segment_id == s2 && from_ms < t2 && f2 < to_ms,
            (AnnotationTarget::Zone { zone_id }, AnnotationTarget::Zone { zone_id: z2 }) => zone_id == z2,
            _ => false,
        };
        let mut out: Vec<&Annotation> = self
            .annotations
            .values()
            .filter(|a| matches(a) && self.can_view_annotation(user, a))
            .collect();
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(out)
    }

    pub fn list_bookmarks(&self, user: &UserId) -> Vec<&Bookmark> {
        self.bookmarks
            .values()
            .filter(|b| self.can_view(user, &ResourceRef::new(ResourceKind::Bookmark, &b.id)))
            .collect()
    }

    pub fn list_ontologies(&self, user: &UserId) -> Vec<&ThemeOntology> {
        self.ontologies
            .values()
            .filter(|o| self.can_view(user, &ResourceRef::new(ResourceKind::Ontology, &o.id)))
            .collect()
    }

    pub fn list_graphs(&self, user: &UserId) -> Vec<&GraphRecord> {
        self.graphs
            .values()
            .filter(|g| self.can_view(user, &ResourceRef::new(ResourceKind::Graph, &g.id)))
            .collect()
    }

    pub fn list_schemas(&self, user: &UserId) -> Vec<&ViewpointSchema> {
        self.schemas
            .values()
            .filter(|s| self.can_view(user, &ResourceRef::new(ResourceKind::Schema, &s.id)))
            .collect()
    }

    pub fn list_paths(&self, user: &UserId) -> Vec<&NavigationPath> {
        self.paths
            .values()
            .filter(|p| self.can_view(user, &ResourceRef::new(ResourceKind::Path, &p.id)))
            .collect()
    }

    pub fn list_workspaces(&self, user: &UserId) -> Vec<&Workspace> {
        self.workspaces.values().filter(|w| w.members.contains(user)).collect()
    }

    /// Every resource id the state knows, with its kind.
    pub fn all_resources(&self) -> Vec<ResourceRef> {
        let mut out = Vec::new();
        out.extend(self.ontologies.keys().map(|k| ResourceRef::new(ResourceKind::Ontology, k)));
        out.extend(self.schemas.keys().map(|k| ResourceRef::new(ResourceKind::Schema, k)));
        out.extend(self.graphs.keys().map(|k| ResourceRef::new(ResourceKind::Graph, k)));
        out.extend(self.segments.keys().map(|k| ResourceRef::new(ResourceKind::Segment, k)));
        out.extend(self.bookmarks.keys().map(|k| ResourceRef::new(ResourceKind::Bookmark, k)));
        out.extend(self.paths.keys().map(|k| ResourceRef::new(ResourceKind::Path, k)));
        out.extend(
            self.annotations
                .values()
                .filter(|a| !a.deleted)
                .map(|a| ResourceRef::new(ResourceKind::Annotation, &a.id)),
        );
        out
    }

    /// Sweeps every cross-module invariant; empty means consistent.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bad = |msg: String| out.push(msg);
        let user_known = |u: &UserId| self.users.contains_key(u);

        for e in self.events.values() {
            if e.metadata.validate().is_err() {
                bad(format!("event {}: invalid metadata", e.id));
            }
            for a in &e.asset_ids {
                if self.assets.get(a).is_none_or(|x| x.event_id != e.id) {
                    bad(format!("event {}: asset {a} dangles", e.id));
                }
            }
        }
        for a in self.assets.values() {
            if a.uri.is_empty() {
                bad(format!("asset {}: empty uri", a.id));
            }
            if !self.events.get(&a.event_id).is_some_and(|e| e.asset_ids.contains(&a.id)) {
                bad(format!("asset {}: not listed by its event", a.id));
            }
        }
        for s in self.segments.values() {
            match self.assets.get(&s.asset_id) {
                None => bad(format!("segment {}: asset dangles", s.id)),
                Some(a) => {
                    if check_interval(s.start_ms, s.end_ms, a.known_duration()).is_err() {
                        bad(format!("segment {}: interval [{}, {}] invalid", s.id, s.start_ms, s.end_ms));
                    }
                    if a.event_id != s.event_id {
                        bad(format!("segment {}: event mismatch", s.id));
                    }
                }
            }
            if !user_known(&s.owner) {
                bad(format!("segment {}: unknown owner", s.id));
            }
        }
        for z in self.zones.values() {
            match self.segments.get(&z.segment_id) {
                None => bad(format!("zone {}: segment dangles", z.id)),
                Some(s) if !s.contains(z.at_ms) => bad(format!("zone {}: time outside segment", z.id)),
                Some(_) => {}
            }
            if z.rect.validate().is_err() {
                bad(format!("zone {}: rectangle invalid", z.id));
            }
        }
        for o in self.ontologies.values() {
            for v in o.validate() {
                bad(format!("ontology {}: {v}", o.id));
            }
        }
        for g in self.graphs.values() {
            match self.ontologies.get(&g.graph.ontology_id) {
                None => bad(format!("graph {}: ontology dangles", g.id)),
                Some(o) => {
                    for v in validate_graph(&g.graph, o) {
                        bad(format!("graph {}: {v}", g.id));
                    }
                }
            }
        }
        for s in self.schemas.values() {
            if validate_features(&s.features).is_err() {
                bad(format!("schema {}: invalid features", s.id));
            }
            if let Some(p) = &s.previous {
                if !self.schemas.contains_key(p) {
                    bad(format!("schema {}: previous version dangles", s.id));
                }
            }
        }
        for a in self.annotations.values() {
            if self.check_target(&a.target).is_err() {
                bad(format!("annotation {}: target invalid", a.id));
            }
            match &a.body {
                AnnotationBody::Theme { theme_id, ontology_id } => {
                    if self.ontologies.get(ontology_id).and_then(|o| o.theme(theme_id)).is_none() {
                        bad(format!("annotation {}: theme dangles", a.id));
                    }
                }
                AnnotationBody::Graph { graph_id } => {
                    if !self.graphs.contains_key(graph_id) {
                        bad(format!("annotation {}: graph dangles", a.id));
                    }
                }
                AnnotationBody::Viewpoint(v) => match self.schemas.get(&v.schema_id) {
                    None => bad(format!("annotation {}: schema dangles", a.id)),
                    Some(s) if !validate_instance(s, &v.values).is_empty() => {
                        bad(format!("annotation {}: viewpoint values no longer valid", a.id))
                    }
                    Some(_) => {}
                },
                AnnotationBody::Note { text } => {
                    if text.trim().is_empty() {
                        bad(format!("annotation {}: empty note", a.id));
                    }
                }
            }
        }
        for b in self.bookmarks.values() {
            if !self.events.contains_key(&b.event_id) {
                bad(format!("bookmark {}: event dangles", b.id));
            }
        }
        for w in self.workspaces.values() {
            if !w.members.contains(&w.owner) {
                bad(format!("workspace {}: owner not a member", w.id));
            }
            for m in &w.members {
                if !user_known(m) {
                    bad(format!("workspace {}: unknown member {m}", w.id));
                }
            }
            for r in &w.resource_refs {
                if r.kind != ResourceKind::Annotation && self.guard(r).is_err() {
                    bad(format!("workspace {}: reference {r} dangles", w.id));
                }
            }
        }
        let visibilities = self.all_resources();
        for r in &visibilities {
            if let Ok(g) = self.guard(r) {
                if let Visibility::Group(w) = g.visibility {
                    if !self.workspaces.contains_key(w) {
                        bad(format!("{r}: group workspace {w} dangles"));
                    }
                }
            }
        }
        for p in self.paths.values() {
            for n in &p.nodes {
                if !self.segments.contains_key(&n.segment_id) {
                    bad(format!("path {}: node {} segment dangles", p.id, n.id));
                }
            }
            for t in &p.transitions {
                if p.node(&t.from).is_none() || p.node(&t.to).is_none() {
                    bad(format!("path {}: transition {} -> {} dangles", p.id, t.from, t.to));
                }
            }
            if let Some(e) = &p.entry {
                if p.node(e).is_none() {
                    bad(format!("path {}: entry dangles", p.id));
                }
            }
        }
        out
    }
}
