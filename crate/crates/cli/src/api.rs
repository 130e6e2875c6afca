//! HTTP service under `/api/v1`, JSON only, static bearer tokens.
//!
//! Each read handler works on one engine snapshot. Writes go through
//! [`Engine::commit`] on a blocking thread, since commits fsync.

use std::collections::BTreeMap;
use std::sync::Arc;

use archivist_core::annotation::AnnotationTarget;
use archivist_core::archive::{Segment, Zone};
use archivist_core::congraph::{print_graph, project};
use archivist_core::ontology::{NewRelation, NewTheme};
use archivist_core::state::Op;
use archivist_core::workspace::{ResourceKind, ResourceRef};
use archivist_core::{
    timecode, Applied, AssetId, Engine, Error, ErrorClass, EventId, GraphId, OntologyId, PathId, SchemaId, SegmentId,
    Snapshot, UserId, WorkspaceId, ZoneId,
};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::token_hash;
use crate::requests::*;

/// Error document: `{"http_status", "code", "message", "detail"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub http_status: u16,
    pub code: String,
    pub message: String,
    pub detail: Value,
}

/// Codes produced by the service layer itself, on top of [`Error::CODES`].
pub const SERVICE_CODES: &[&str] = &["auth.missing", "auth.invalid", "request.malformed"];

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            http_status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn status_for(e: &Error) -> StatusCode {
        match e.class() {
            ErrorClass::Validation | ErrorClass::Resource => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Access => StatusCode::FORBIDDEN,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let detail = match &e {
            Error::Syntax {
                offset, line, column, ..
            } => json!({ "offset": offset, "line": line, "column": column }),
            Error::NotFound { kind, id } => json!({ "kind": kind, "id": id }),
            Error::GraphInvalid(v) => json!({ "violations": v }),
            Error::Unreachable { orphans } => json!({ "orphans": orphans }),
            Error::Budget { budget } => json!({ "budget": budget }),
            _ => Value::Null,
        };
        Self {
            http_status: Self::status_for(&e).as_u16(),
            code: e.code().into(),
            message: e.to_string(),
            detail,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok<T: Serialize>(value: T) -> ApiResult {
    Ok(Json(value).into_response())
}

fn created<T: Serialize>(value: T) -> ApiResult {
    Ok((StatusCode::CREATED, Json(value)).into_response())
}

/// JSON body whose rejection is an [`ApiError`].
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(malformed_json(e)),
        }
    }
}

fn malformed_json(e: JsonRejection) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "request.malformed", e.body_text())
}

/// Query string whose rejection is an [`ApiError`].
pub struct Query<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Query<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        match axum::extract::Query::<T>::from_request_parts(parts, state).await {
            Ok(axum::extract::Query(v)) => Ok(Query(v)),
            Err(e) => Err(malformed_query(e)),
        }
    }
}

fn malformed_query(e: QueryRejection) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "request.malformed", e.body_text())
}

pub struct AppState {
    pub engine: Arc<Engine>,
    /// Token hash → user.
    pub tokens: BTreeMap<String, UserId>,
}

type Shared = Arc<AppState>;

/// The authenticated caller.
pub struct Caller(pub UserId);

impl FromRequestParts<Shared> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        let Some(value) = parts.headers.get(header::AUTHORIZATION) else {
            return Err(ApiError::new(
                StatusCode::UNAUTHORIZED,
                "auth.missing",
                "missing bearer token",
            ));
        };
        let invalid = || ApiError::new(StatusCode::UNAUTHORIZED, "auth.invalid", "invalid bearer token");
        let token = value
            .to_str()
            .ok()
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(invalid)?;
        state
            .tokens
            .get(&token_hash(token))
            .map(|u| Caller(u.clone()))
            .ok_or_else(invalid)
    }
}

async fn commit(state: &Shared, ops: Vec<Op>) -> Result<(Vec<Applied>, Arc<Snapshot>), ApiError> {
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || {
        let c = engine.commit(ops)?;
        Ok((c.applied, engine.snapshot()))
    })
    .await
    .map_err(|e| ApiError::from(Error::Internal(e.to_string())))?
}

async fn commit_one(state: &Shared, op: Op) -> Result<(Applied, Arc<Snapshot>), ApiError> {
    let (mut applied, snap) = commit(state, vec![op]).await?;
    Ok((applied.remove(0), snap))
}

fn require_view(snap: &Snapshot, user: &UserId, r: &ResourceRef) -> Result<(), ApiError> {
    snap.state.guard(r)?;
    if snap.state.can_view(user, r) {
        Ok(())
    } else {
        Err(Error::Access(format!("{r} is not visible to {user}")).into())
    }
}

/// Segment document plus its timecodes.
#[derive(Serialize)]
pub struct SegmentView<'a> {
    #[serde(flatten)]
    pub segment: &'a Segment,
    pub start_tc: String,
    pub end_tc: String,
}

impl<'a> From<&'a Segment> for SegmentView<'a> {
    fn from(segment: &'a Segment) -> Self {
        Self {
            start_tc: timecode::format(segment.start_ms),
            end_tc: timecode::format(segment.end_ms),
            segment,
        }
    }
}

#[derive(Serialize)]
pub struct ZoneView<'a> {
    #[serde(flatten)]
    pub zone: &'a Zone,
    pub at_tc: String,
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/stats", get(stats))
        .route("/events", get(list_events).post(create_event))
        .route("/events/{id}", get(get_event))
        .route("/assets", post(create_asset))
        .route("/assets/{id}", get(get_asset))
        .route("/segments", get(list_segments).post(create_segment))
        .route("/segments/{id}", get(get_segment))
        .route("/zones", post(create_zone))
        .route("/zones/{id}", get(get_zone))
        .route("/ontologies", get(list_ontologies).post(create_ontology))
        .route("/ontologies/{id}", get(get_ontology))
        .route("/ontologies/{id}/themes", post(add_theme))
        .route("/ontologies/{id}/themes/{theme}/parents", post(add_parent))
        .route("/ontologies/{id}/relations", post(add_relation))
        .route("/ontologies/{id}/subsumes", get(subsumes))
        .route("/ontologies/{id}/descendants", get(descendants))
        .route("/ontologies/{id}/validate", get(validate_ontology))
        .route("/graphs", get(list_graphs).post(create_graph))
        .route("/graphs/parse", post(parse_graph))
        .route("/graphs/project", post(project_graphs))
        .route("/graphs/{id}", get(get_graph))
        .route("/schemas", get(list_schemas).post(create_schema))
        .route("/schemas/{id}", get(get_schema))
        .route("/schemas/{id}/revisions", post(revise_schema))
        .route("/annotations", get(list_annotations).post(create_annotation))
        .route("/annotations/{id}", get(get_annotation).delete(delete_annotation))
        .route("/bookmarks", get(list_bookmarks).post(create_bookmark))
        .route("/workspaces", get(list_workspaces).post(create_workspace))
        .route("/workspaces/{id}", get(get_workspace))
        .route("/workspaces/{id}/members", post(add_member))
        .route("/workspaces/{id}/share", post(share))
        .route("/visibility/{kind}/{id}", put(set_visibility))
        .route("/search/keyword", get(search_keyword))
        .route("/search/theme", get(search_theme))
        .route("/search/graph", post(search_graph))
        .route("/paths", get(list_paths).post(create_path))
        .route("/paths/{id}", get(get_path))
        .route("/paths/{id}/nodes", post(add_path_node))
        .route("/paths/{id}/transitions", post(add_transition))
        .route("/paths/{id}/entry", put(set_entry))
        .route("/paths/{id}/compile", post(compile_path))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state);
    Router::new().nest("/api/v1", api)
}

async fn stats(State(s): State<Shared>, _c: Caller) -> ApiResult {
    ok(s.engine.snapshot().state.archive_stats())
}

// ---- archive ---------------------------------------------------------------

#[derive(Deserialize)]
struct KindFilter {
    kind: Option<String>,
}

async fn list_events(State(s): State<Shared>, _c: Caller, Query(q): Query<KindFilter>) -> ApiResult {
    let kind = q.kind.map(|k| k.parse()).transpose()?;
    ok(s.engine.snapshot().state.list_events(kind))
}

async fn create_event(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<EventRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)?).await?;
    let Applied::Event(id) = a else { unreachable!("register_event creates an event") };
    created(snap.state.event(&id)?)
}

async fn get_event(State(s): State<Shared>, _c: Caller, Path(id): Path<EventId>) -> ApiResult {
    ok(s.engine.snapshot().state.event(&id)?)
}

async fn create_asset(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<AssetRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)?).await?;
    let Applied::Asset(id) = a else { unreachable!("add_media_asset creates an asset") };
    created(snap.state.asset(&id)?)
}

async fn get_asset(State(s): State<Shared>, _c: Caller, Path(id): Path<AssetId>) -> ApiResult {
    ok(s.engine.snapshot().state.asset(&id)?)
}

async fn list_segments(State(s): State<Shared>, Caller(u): Caller) -> ApiResult {
    let snap = s.engine.snapshot();
    ok(snap.state.list_segments(&u).into_iter().map(SegmentView::from).collect::<Vec<_>>())
}

async fn create_segment(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<SegmentRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)?).await?;
    let Applied::Segment(id) = a else { unreachable!("create_segment creates a segment") };
    created(SegmentView::from(snap.state.segment(&id)?))
}

async fn get_segment(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<SegmentId>) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &ResourceRef::new(ResourceKind::Segment, &id))?;
    ok(SegmentView::from(snap.state.segment(&id)?))
}

async fn create_zone(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<ZoneRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)?).await?;
    let Applied::Zone(id) = a else { unreachable!("create_zone creates a zone") };
    let zone = snap.state.zone(&id)?;
    created(ZoneView {
        zone,
        at_tc: timecode::format(zone.at_ms),
    })
}

async fn get_zone(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<ZoneId>) -> ApiResult {
    let snap = s.engine.snapshot();
    let zone = snap.state.zone(&id)?;
    require_view(&snap, &u, &ResourceRef::new(ResourceKind::Segment, &zone.segment_id))?;
    ok(ZoneView {
        zone,
        at_tc: timecode::format(zone.at_ms),
    })
}

// ---- ontologies ------------------------------------------------------------

fn ontology_ref(id: &OntologyId) -> ResourceRef {
    ResourceRef::new(ResourceKind::Ontology, id)
}

async fn list_ontologies(State(s): State<Shared>, Caller(u): Caller) -> ApiResult {
    ok(s.engine.snapshot().state.list_ontologies(&u))
}

async fn create_ontology(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<OntologyRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)?).await?;
    let Applied::Ontology(id) = a else { unreachable!("ontology ops create an ontology") };
    created(snap.state.ontology(&id)?)
}

async fn get_ontology(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<OntologyId>) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &ontology_ref(&id))?;
    ok(snap.state.ontology(&id)?)
}

async fn add_theme(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<OntologyId>,
    Body(r): Body<NewTheme>,
) -> ApiResult {
    let (a, snap) = commit_one(&s, add_theme_op(id.clone(), r, &u)).await?;
    let Applied::Theme(t) = a else { unreachable!("add_theme creates a theme") };
    created(snap.state.ontology(&id)?.theme(&t))
}

async fn add_parent(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path((id, theme)): Path<(OntologyId, String)>,
    Body(r): Body<ParentRequest>,
) -> ApiResult {
    let op = Op::AddThemeParent {
        ontology_id: id.clone(),
        theme: theme.clone(),
        parent: r.parent,
        by: u,
    };
    let (_, snap) = commit_one(&s, op).await?;
    ok(snap.state.ontology(&id)?.resolve_theme(&theme)?)
}

async fn add_relation(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<OntologyId>,
    Body(r): Body<NewRelation>,
) -> ApiResult {
    let (a, snap) = commit_one(&s, add_relation_op(id.clone(), r, &u)).await?;
    let Applied::Relation(rel) = a else { unreachable!("add_relation_type creates a relation") };
    created(snap.state.ontology(&id)?.relation(&rel))
}

#[derive(Deserialize)]
struct SubsumesQuery {
    ancestor: String,
    descendant: String,
}

async fn subsumes(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<OntologyId>,
    Query(q): Query<SubsumesQuery>,
) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &ontology_ref(&id))?;
    let o = snap.state.ontology(&id)?;
    let a = o.resolve_theme(&q.ancestor)?;
    let d = o.resolve_theme(&q.descendant)?;
    ok(json!({ "ancestor": a.id, "descendant": d.id, "subsumes": o.subsumes(&a.id, &d.id) }))
}

#[derive(Deserialize)]
struct ThemeQuery {
    theme: String,
}

async fn descendants(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<OntologyId>,
    Query(q): Query<ThemeQuery>,
) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &ontology_ref(&id))?;
    let o = snap.state.ontology(&id)?;
    let t = o.resolve_theme(&q.theme)?;
    let themes: Vec<_> = o.descendants(&t.id).iter().filter_map(|d| o.theme(d)).collect();
    ok(themes)
}

async fn validate_ontology(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<OntologyId>) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &ontology_ref(&id))?;
    let v = snap.state.ontology(&id)?.validate();
    ok(json!({ "valid": v.is_empty(), "violations": v }))
}

// ---- graphs ----------------------------------------------------------------

async fn list_graphs(State(s): State<Shared>, Caller(u): Caller) -> ApiResult {
    ok(s.engine.snapshot().state.list_graphs(&u))
}

fn graph_doc(snap: &Snapshot, id: &GraphId) -> Result<Value, ApiError> {
    let g = snap.state.graph(id)?;
    let canonical = print_graph(&g.graph, snap.state.ontology(&g.graph.ontology_id)?)?;
    let mut doc = serde_json::to_value(g).map_err(|e| Error::Internal(e.to_string()))?;
    doc["canonical"] = Value::String(canonical);
    Ok(doc)
}

async fn create_graph(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<GraphRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)).await?;
    let Applied::Graph(id) = a else { unreachable!("create_graph creates a graph") };
    created(graph_doc(&snap, &id)?)
}

async fn get_graph(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<GraphId>) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &graph_ref(&id))?;
    ok(graph_doc(&snap, &id)?)
}

async fn parse_graph(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<ParseRequest>) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &ontology_ref(&r.ontology_id))?;
    let g = snap.parse_graph(&r.ontology_id, &r.text)?;
    let canonical = print_graph(&g, snap.state.ontology(&r.ontology_id)?)?;
    ok(json!({ "canonical": canonical, "graph": g }))
}

async fn project_graphs(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<ProjectRequest>) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &ontology_ref(&r.ontology_id))?;
    let q = snap.parse_graph(&r.ontology_id, &r.query)?;
    let t = snap.parse_graph(&r.ontology_id, &r.target)?;
    let maps = project(&q, &t, snap.state.ontology(&r.ontology_id)?, s.engine.budget())?;
    ok(json!({ "count": maps.len(), "mappings": maps }))
}

// ---- viewpoints ------------------------------------------------------------

async fn list_schemas(State(s): State<Shared>, Caller(u): Caller) -> ApiResult {
    ok(s.engine.snapshot().state.list_schemas(&u))
}

async fn create_schema(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<SchemaRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)?).await?;
    let Applied::Schema(id) = a else { unreachable!("schema ops create a schema") };
    created(snap.state.schema(&id)?)
}

async fn get_schema(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<SchemaId>) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &schema_ref(&id))?;
    ok(snap.state.schema(&id)?)
}

async fn revise_schema(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<SchemaId>,
    Body(r): Body<ReviseRequest>,
) -> ApiResult {
    let op = Op::ReviseSchema {
        schema_id: id,
        features: r.features,
        by: u,
    };
    let (a, snap) = commit_one(&s, op).await?;
    let Applied::Schema(new) = a else { unreachable!("revise_schema creates a schema") };
    created(snap.state.schema(&new)?)
}

// ---- annotations and bookmarks ---------------------------------------------

#[derive(Deserialize)]
struct TargetQuery {
    segment: Option<SegmentId>,
    from: Option<String>,
    to: Option<String>,
    zone: Option<ZoneId>,
}

impl TargetQuery {
    fn target(self) -> Result<AnnotationTarget, Error> {
        target_from_parts(
            self.segment,
            self.from.as_deref().map(TimeInput::from),
            self.to.as_deref().map(TimeInput::from),
            self.zone,
        )
    }
}

async fn list_annotations(State(s): State<Shared>, Caller(u): Caller, Query(q): Query<TargetQuery>) -> ApiResult {
    let snap = s.engine.snapshot();
    ok(snap.state.list_annotations(&q.target()?, &u)?)
}

async fn create_annotation(
    State(s): State<Shared>,
    Caller(u): Caller,
    Body(r): Body<AnnotationRequest>,
) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)).await?;
    let Applied::Annotation(id) = a else { unreachable!("attach creates an annotation") };
    created(snap.state.annotation(&id)?)
}

async fn get_annotation(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<String>) -> ApiResult {
    let snap = s.engine.snapshot();
    let a = snap.state.annotation(&id.as_str().into())?;
    if !snap.state.can_view_annotation(&u, a) {
        return Err(Error::Access(format!("annotation {id} is not visible to {u}")).into());
    }
    ok(a)
}

async fn delete_annotation(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<String>) -> ApiResult {
    let op = Op::DeleteAnnotation {
        annotation_id: id.as_str().into(),
        by: u,
    };
    commit_one(&s, op).await?;
    ok(json!({ "deleted": id }))
}

async fn list_bookmarks(State(s): State<Shared>, Caller(u): Caller) -> ApiResult {
    ok(s.engine.snapshot().state.list_bookmarks(&u))
}

async fn create_bookmark(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<BookmarkRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, r.into_op(&u)).await?;
    let Applied::Bookmark(id) = a else { unreachable!("bookmark_event creates a bookmark") };
    created(&snap.state.bookmarks[&id])
}

// ---- workspaces ------------------------------------------------------------

async fn list_workspaces(State(s): State<Shared>, Caller(u): Caller) -> ApiResult {
    ok(s.engine.snapshot().state.list_workspaces(&u))
}

async fn create_workspace(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<NameRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, Op::CreateWorkspace { name: r.name, owner: u }).await?;
    let Applied::Workspace(id) = a else { unreachable!("create_workspace creates a workspace") };
    created(snap.state.workspace(&id)?)
}

async fn get_workspace(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<WorkspaceId>) -> ApiResult {
    let snap = s.engine.snapshot();
    let w = snap.state.workspace(&id)?;
    if !w.members.contains(&u) {
        return Err(Error::Access(format!("{u} is not a member of {id}")).into());
    }
    ok(w)
}

async fn add_member(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<WorkspaceId>,
    Body(r): Body<MemberRequest>,
) -> ApiResult {
    let (_, snap) = commit_one(&s, add_member_op(id.clone(), r.user, &u)).await?;
    ok(snap.state.workspace(&id)?)
}

async fn share(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<WorkspaceId>,
    Body(r): Body<ResourceRef>,
) -> ApiResult {
    let (_, snap) = commit_one(&s, share_op(id.clone(), r, &u)).await?;
    ok(snap.state.workspace(&id)?)
}

async fn set_visibility(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path((kind, id)): Path<(String, String)>,
    Body(r): Body<VisibilityRequest>,
) -> ApiResult {
    let resource = ResourceRef::new(kind.parse::<ResourceKind>()?, id);
    let op = Op::SetVisibility {
        resource: resource.clone(),
        visibility: r.visibility.clone(),
        by: u,
    };
    commit_one(&s, op).await?;
    ok(json!({ "resource": resource, "visibility": r.visibility }))
}

// ---- search ----------------------------------------------------------------

#[derive(Deserialize)]
struct KeywordQuery {
    q: String,
    scope: Option<WorkspaceId>,
}

async fn search_keyword(State(s): State<Shared>, Caller(u): Caller, Query(q): Query<KeywordQuery>) -> ApiResult {
    ok(s.engine.snapshot().keyword_search(&q.q, &u, q.scope.as_ref())?)
}

#[derive(Deserialize)]
struct ThemeSearchQuery {
    ontology: OntologyId,
    theme: String,
    #[serde(default)]
    expand: bool,
}

async fn search_theme(State(s): State<Shared>, Caller(u): Caller, Query(q): Query<ThemeSearchQuery>) -> ApiResult {
    ok(s.engine.snapshot().theme_search(&q.ontology, &q.theme, q.expand, &u)?)
}

async fn search_graph(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<GraphSearchRequest>) -> ApiResult {
    ok(s.engine.snapshot().graph_search(&r.ontology_id, &r.query, &u, s.engine.budget())?)
}

// ---- montage ---------------------------------------------------------------

async fn list_paths(State(s): State<Shared>, Caller(u): Caller) -> ApiResult {
    ok(s.engine.snapshot().montage_search(&u))
}

async fn create_path(State(s): State<Shared>, Caller(u): Caller, Body(r): Body<NameRequest>) -> ApiResult {
    let (a, snap) = commit_one(&s, Op::CreatePath { name: r.name, owner: u }).await?;
    let Applied::Path(id) = a else { unreachable!("create_path creates a path") };
    created(snap.state.path(&id)?)
}

async fn get_path(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<PathId>) -> ApiResult {
    let snap = s.engine.snapshot();
    require_view(&snap, &u, &ResourceRef::new(ResourceKind::Path, &id))?;
    ok(snap.state.path(&id)?)
}

async fn add_path_node(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<PathId>,
    Body(r): Body<PathNodeRequest>,
) -> ApiResult {
    let (_, snap) = commit_one(&s, path_node_op(id.clone(), r, &u)).await?;
    created(snap.state.path(&id)?)
}

async fn add_transition(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<PathId>,
    Body(r): Body<TransitionRequest>,
) -> ApiResult {
    let (_, snap) = commit_one(&s, transition_op(id.clone(), r, &u)).await?;
    created(snap.state.path(&id)?)
}

async fn set_entry(
    State(s): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<PathId>,
    Body(r): Body<EntryRequest>,
) -> ApiResult {
    let op = Op::SetEntry {
        path_id: id.clone(),
        node: r.node,
        by: u,
    };
    let (_, snap) = commit_one(&s, op).await?;
    ok(snap.state.path(&id)?)
}

async fn compile_path(State(s): State<Shared>, Caller(u): Caller, Path(id): Path<PathId>) -> ApiResult {
    ok(s.engine.snapshot().compile_manifest(&id, &u)?)
}

/// Binds `listen` and serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, tokens: BTreeMap<String, UserId>, listen: &str) -> std::io::Result<()> {
    let app = router(Arc::new(AppState { engine, tokens }));
    let listener = tokio::net::TcpListener::bind(listen).await?;
    eprintln!("listening on http://{}/api/v1", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
