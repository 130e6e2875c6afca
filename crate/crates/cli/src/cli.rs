//! The `archivist` command line.
//!
//! Every command opens the store, runs, and exits. Exit codes: 0 success,
//! 1 validation (including usage errors and conflicts), 2 not found or
//! access denied, 3 internal.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use archivist_core::archive::{EventKind, Rect};
use archivist_core::congraph::{parse_graph, print_graph, project};
use archivist_core::montage::export_site;
use archivist_core::ontology::{NewRelation, NewTheme, ThemeCategory, ThemeOntology, RelationCategory};
use archivist_core::search::SearchHit;
use archivist_core::state::{AttachBody, Op};
use archivist_core::viewpoint::FeatureDef;
use archivist_core::workspace::{ResourceKind, ResourceRef, Visibility};
use archivist_core::{
    timecode, Applied, Engine, Error, ErrorClass, EventId, GraphId, OntologyId, PathId, SchemaId, SegmentId,
    SystemClock, ThemeId, UserId, WorkspaceId, ZoneId,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{token_hash, ServerConfig};
use crate::render::table;
use crate::requests::*;

#[derive(Debug, Parser)]
#[command(name = "archivist", version, about = "Annotate, search and assemble audiovisual archives")]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "ARCHIVIST_STORE", default_value = "archive")]
    pub store: PathBuf,
    /// Acting user.
    #[arg(long, global = true, env = "ARCHIVIST_USER")]
    pub user: Option<String>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the store and optionally register the acting user.
    Init {
        #[arg(long)]
        display_name: Option<String>,
    },
    #[command(subcommand)]
    User(UserCmd),
    /// Print the SHA-256 hex digest of a bearer token, for the server config.
    TokenHash { token: String },
    #[command(subcommand)]
    Event(EventCmd),
    #[command(subcommand)]
    Asset(AssetCmd),
    #[command(subcommand)]
    Segment(SegmentCmd),
    #[command(subcommand)]
    Zone(ZoneCmd),
    #[command(subcommand)]
    Ontology(OntologyCmd),
    /// Conceptual graphs in linear form.
    #[command(subcommand)]
    Cg(CgCmd),
    #[command(subcommand)]
    Viewpoint(ViewpointCmd),
    #[command(subcommand)]
    Annotate(AnnotateCmd),
    #[command(subcommand)]
    Annotation(AnnotationCmd),
    /// Bookmark an event.
    Bookmark {
        event: String,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long, default_value = "private")]
        visibility: String,
    },
    /// List visible bookmarks.
    Bookmarks,
    #[command(subcommand)]
    Search(SearchCmd),
    #[command(subcommand)]
    Montage(MontageCmd),
    #[command(subcommand)]
    Workspace(WorkspaceCmd),
    #[command(subcommand)]
    Visibility(VisibilityCmd),
    /// Write a snapshot of the current state.
    Snapshot,
    /// Archive statistics.
    Stats,
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum UserCmd {
    Add {
        id: String,
        #[arg(long)]
        display_name: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EventCmd {
    /// Register an event; metadata is `Name: value` lines.
    Register {
        #[arg(long)]
        kind: String,
        #[arg(long, conflicts_with = "metadata_file")]
        metadata: Option<String>,
        #[arg(long)]
        metadata_file: Option<PathBuf>,
    },
    List {
        #[arg(long)]
        kind: Option<String>,
    },
    Show { id: String },
}

#[derive(Debug, Subcommand)]
pub enum AssetCmd {
    Add {
        #[arg(long)]
        event: String,
        #[arg(long)]
        uri: String,
        /// Milliseconds or HH:MM:SS.mmm; omitted means unknown.
        #[arg(long)]
        duration: Option<String>,
        #[arg(long, default_value = "")]
        format: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum SegmentCmd {
    Create {
        #[arg(long)]
        asset: String,
        #[arg(long)]
        start: String,
        #[arg(long)]
        end: String,
        #[arg(long)]
        label: Option<String>,
        #[arg(long, default_value = "private")]
        visibility: String,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum ZoneCmd {
    Create {
        #[arg(long)]
        segment: String,
        #[arg(long)]
        at: String,
        /// `x,y,w,h` in the unit square.
        #[arg(long)]
        rect: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum OntologyCmd {
    Create { name: String },
    LoadTemplate { template: String },
    AddTheme {
        #[arg(long)]
        ontology: String,
        name: String,
        #[arg(long, default_value = "notional")]
        category: String,
        #[arg(long = "parent")]
        parents: Vec<String>,
        #[arg(long, default_value = "")]
        definition: String,
    },
    AddParent {
        #[arg(long)]
        ontology: String,
        theme: String,
        parent: String,
    },
    AddRel {
        #[arg(long)]
        ontology: String,
        name: String,
        #[arg(long)]
        category: String,
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        range: Option<String>,
        #[arg(long, default_value = "")]
        definition: String,
    },
    Validate { ontology: String },
    List,
    Show { ontology: String },
    Subsumes {
        #[arg(long)]
        ontology: String,
        ancestor: String,
        descendant: String,
    },
    Descendants {
        #[arg(long)]
        ontology: String,
        theme: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum CgCmd {
    /// Parse and print canonically; without an ontology only `Thing` is known.
    Parse {
        #[arg(long)]
        ontology: Option<String>,
        text: String,
    },
    /// Print a stored graph canonically.
    Print { graph: String },
    /// Project a query into a target graph, or search stored graphs.
    Query {
        #[arg(long)]
        ontology: String,
        query: String,
        #[arg(long)]
        target: Option<String>,
    },
    /// Store a graph.
    Create {
        #[arg(long)]
        ontology: String,
        text: String,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        free_text: Option<String>,
        #[arg(long, default_value = "private")]
        visibility: String,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum ViewpointCmd {
    /// Define a schema; features are a JSON array of feature definitions.
    Define {
        name: String,
        #[arg(long, conflicts_with = "features_file")]
        features: Option<String>,
        #[arg(long)]
        features_file: Option<PathBuf>,
    },
    LoadTemplate { template: String },
    Revise {
        schema: String,
        #[arg(long, conflicts_with = "features_file")]
        features: Option<String>,
        #[arg(long)]
        features_file: Option<PathBuf>,
    },
    List,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    #[arg(long)]
    pub segment: Option<String>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub zone: Option<String>,
}

impl TargetArgs {
    fn target(&self) -> archivist_core::Result<archivist_core::annotation::AnnotationTarget> {
        target_from_parts(
            self.segment.as_deref().map(SegmentId::new),
            self.from.as_deref().map(TimeInput::from),
            self.to.as_deref().map(TimeInput::from),
            self.zone.as_deref().map(ZoneId::new),
        )
    }
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCmd {
    Theme {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        ontology: String,
        theme: String,
        #[arg(long, default_value = "private")]
        visibility: String,
    },
    Graph {
        #[command(flatten)]
        target: TargetArgs,
        graph: String,
        #[arg(long, default_value = "private")]
        visibility: String,
    },
    /// Values are `name=value`; integers are read as ordinal values.
    Viewpoint {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        schema: String,
        values: Vec<String>,
        #[arg(long, default_value = "private")]
        visibility: String,
    },
    Note {
        #[command(flatten)]
        target: TargetArgs,
        text: String,
        #[arg(long, default_value = "private")]
        visibility: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum AnnotationCmd {
    List {
        #[command(flatten)]
        target: TargetArgs,
    },
    Delete { id: String },
}

#[derive(Debug, Subcommand)]
pub enum SearchCmd {
    Keyword {
        text: String,
        #[arg(long)]
        scope: Option<String>,
    },
    Theme {
        #[arg(long)]
        ontology: String,
        theme: String,
        #[arg(long)]
        expand: bool,
    },
    Graph {
        #[arg(long)]
        ontology: String,
        query: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum MontageCmd {
    Create { name: String },
    AddNode {
        path: String,
        #[arg(long)]
        segment: String,
        #[arg(long, default_value = "")]
        caption: String,
    },
    AddEdge {
        path: String,
        from: String,
        to: String,
        #[arg(long, default_value = "")]
        label: String,
    },
    SetEntry { path: String, node: String },
    /// Compile to a manifest, printed or written to `--out`.
    Compile {
        path: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile and write the manifest plus static pages into a directory.
    Export {
        path: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    List,
    Show { path: String },
}

#[derive(Debug, Subcommand)]
pub enum WorkspaceCmd {
    Create { name: String },
    AddMember { workspace: String, member: String },
    Share { workspace: String, kind: String, id: String },
    List,
}

#[derive(Debug, Subcommand)]
pub enum VisibilityCmd {
    Set { kind: String, id: String, visibility: String },
}

/// Exit code for an engine error.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Validation | ErrorClass::Conflict | ErrorClass::Resource => 1,
        ErrorClass::NotFound | ErrorClass::Access => 2,
        ErrorClass::Internal => 3,
    }
}

/// Parses `args` (program name first) and runs the command, writing to
/// `out` and `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let json = cli.json;
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            if json {
                let doc = crate::api::ApiError::from(e.clone());
                let _ = writeln!(err, "{}", serde_json::to_string(&doc).unwrap_or_default());
            } else {
                let _ = writeln!(err, "error[{}]: {e}", e.code());
            }
            exit_code(&e)
        }
    }
}

struct Ctx<'a> {
    store: PathBuf,
    user: Option<UserId>,
    json: bool,
    out: &'a mut dyn Write,
}

type Res = archivist_core::Result<()>;

impl Ctx<'_> {
    fn user(&self) -> archivist_core::Result<&UserId> {
        self.user
            .as_ref()
            .ok_or_else(|| Error::Validation("no acting user: pass --user or set ARCHIVIST_USER".into()))
    }

    fn engine(&self) -> archivist_core::Result<Engine> {
        if !self.store.join(archivist_core::store::JOURNAL_FILE).exists() {
            return Err(Error::Validation(format!(
                "no store at {}; run `archivist init` first",
                self.store.display()
            )));
        }
        let engine = Engine::open(&self.store, SystemClock)?;
        self.warn(engine.open_report().warnings.iter())?;
        Ok(engine)
    }

    fn warn<'w>(&self, warnings: impl Iterator<Item = &'w String>) -> Res {
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(())
    }

    fn emit<T: Serialize + ?Sized>(&mut self, value: &T, human: impl FnOnce() -> String) -> Res {
        let text = if self.json {
            serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))? + "\n"
        } else {
            human()
        };
        self.out.write_all(text.as_bytes())?;
        Ok(())
    }

    /// Commits one op and reports what it created.
    fn commit(&mut self, op: Op) -> archivist_core::Result<Applied> {
        let engine = self.engine()?;
        let applied = engine.commit_one(op)?;
        self.emit(&applied, || match &applied {
            Applied::Nothing => "ok\n".into(),
            a => format!("created {} {}\n", created_kind(a), a.id().unwrap_or_default()),
        })?;
        Ok(applied)
    }
}

fn created_kind(a: &Applied) -> &'static str {
    match a {
        Applied::User(_) => "user",
        Applied::Event(_) => "event",
        Applied::Asset(_) => "asset",
        Applied::Segment(_) => "segment",
        Applied::Zone(_) => "zone",
        Applied::Ontology(_) => "ontology",
        Applied::Theme(_) => "theme",
        Applied::Relation(_) => "relation",
        Applied::Graph(_) => "graph",
        Applied::Schema(_) => "schema",
        Applied::Annotation(_) => "annotation",
        Applied::Bookmark(_) => "bookmark",
        Applied::Workspace(_) => "workspace",
        Applied::Path(_) => "path",
        Applied::PathNode(_) => "node",
        Applied::Nothing => "nothing",
    }
}

fn vis(s: &str) -> archivist_core::Result<Visibility> {
    s.parse()
}

fn read_text(path: &Path) -> archivist_core::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))
}

fn features_arg(inline: Option<String>, file: Option<PathBuf>) -> archivist_core::Result<Vec<FeatureDef>> {
    let text = match (inline, file) {
        (Some(t), None) => t,
        (None, Some(p)) => read_text(&p)?,
        _ => return Err(Error::Validation("give --features or --features-file".into())),
    };
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("features: {e}")))
}

fn parse_rect(s: &str) -> archivist_core::Result<Rect> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Validation(format!("rect must be x,y,w,h numbers, got `{s}`")))?;
    match v[..] {
        [x, y, w, h] => Ok(Rect::new(x, y, w, h)),
        _ => Err(Error::Validation(format!("rect must have four components, got `{s}`"))),
    }
}

fn hits_table(hits: &[SearchHit]) -> String {
    let rows: Vec<Vec<String>> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| {
            vec![
                (i + 1).to_string(),
                h.event_id.to_string(),
                h.segment_id.as_ref().map(ToString::to_string).unwrap_or_else(|| "-".into()),
                h.part
                    .map(|p| format!("{}-{}", timecode::format(p.from_ms), timecode::format(p.to_ms)))
                    .unwrap_or_else(|| "-".into()),
                timecode::format(h.start_ms),
                h.score.match_count.to_string(),
                h.score.specificity.to_string(),
                h.matched_annotation_ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
            ]
        })
        .collect();
    table(
        &["rank", "event", "segment", "part", "start", "matches", "specificity", "annotations"],
        &rows,
    )
}

fn execute(cli: Cli, out: &mut dyn Write) -> Res {
    let mut cx = Ctx {
        store: cli.store,
        user: cli.user.map(UserId::new),
        json: cli.json,
        out,
    };
    match cli.command {
        Command::Init { display_name } => {
            let engine = Engine::open(&cx.store, SystemClock)?;
            let mut registered = None;
            if let Some(u) = cx.user.clone() {
                if engine.snapshot().state.user(&u).is_err() {
                    engine.commit_one(UserRequest { id: u.clone(), display_name }.into_op())?;
                    registered = Some(u);
                }
            }
            let store = cx.store.display().to_string();
            cx.emit(&serde_json::json!({ "store": store, "registered_user": registered }), || {
                let mut s = format!("initialized store at {store}\n");
                if let Some(u) = &registered {
                    s += &format!("registered user {u}\n");
                }
                s
            })
        }
        Command::User(UserCmd::Add { id, display_name }) => {
            cx.commit(UserRequest { id: UserId::new(id), display_name }.into_op())?;
            Ok(())
        }
        Command::TokenHash { token } => {
            let h = token_hash(&token);
            cx.emit(&h, || format!("{h}\n"))
        }
        Command::Event(cmd) => event_cmd(&mut cx, cmd),
        Command::Asset(AssetCmd::Add {
            event,
            uri,
            duration,
            format,
        }) => {
            let op = AssetRequest {
                event_id: EventId::new(event),
                uri,
                duration: duration.as_deref().map(TimeInput::from),
                format_label: format,
            }
            .into_op(cx.user()?)?;
            cx.commit(op)?;
            Ok(())
        }
        Command::Segment(SegmentCmd::Create {
            asset,
            start,
            end,
            label,
            visibility,
        }) => {
            let op = SegmentRequest {
                asset_id: asset.as_str().into(),
                start: start.as_str().into(),
                end: end.as_str().into(),
                label,
                visibility: vis(&visibility)?,
            }
            .into_op(cx.user()?)?;
            cx.commit(op)?;
            Ok(())
        }
        Command::Segment(SegmentCmd::List) => {
            let snap = cx.engine()?.snapshot();
            let user = cx.user()?.clone();
            let segs = snap.state.list_segments(&user);
            let views: Vec<_> = segs.iter().map(|s| crate::api::SegmentView::from(*s)).collect();
            cx.emit(&views, || {
                let rows: Vec<Vec<String>> = segs
                    .iter()
                    .map(|s| {
                        vec![
                            s.id.to_string(),
                            s.event_id.to_string(),
                            s.asset_id.to_string(),
                            timecode::format(s.start_ms),
                            timecode::format(s.end_ms),
                            s.label.clone().unwrap_or_default(),
                            s.visibility.to_string(),
                        ]
                    })
                    .collect();
                table(&["id", "event", "asset", "start", "end", "label", "visibility"], &rows)
            })
        }
        Command::Zone(ZoneCmd::Create { segment, at, rect }) => {
            let op = ZoneRequest {
                segment_id: SegmentId::new(segment),
                at: at.as_str().into(),
                rect: parse_rect(&rect)?,
            }
            .into_op(cx.user()?)?;
            cx.commit(op)?;
            Ok(())
        }
        Command::Ontology(cmd) => ontology_cmd(&mut cx, cmd),
        Command::Cg(cmd) => cg_cmd(&mut cx, cmd),
        Command::Viewpoint(cmd) => viewpoint_cmd(&mut cx, cmd),
        Command::Annotate(cmd) => annotate_cmd(&mut cx, cmd),
        Command::Annotation(AnnotationCmd::List { target }) => {
            let snap = cx.engine()?.snapshot();
            let user = cx.user()?.clone();
            let list = snap.state.list_annotations(&target.target()?, &user)?;
            cx.emit(&list, || {
                let rows: Vec<Vec<String>> = list
                    .iter()
                    .map(|a| {
                        vec![
                            a.id.to_string(),
                            a.body.kind().into(),
                            serde_json::to_string(&a.target).unwrap_or_default(),
                            a.author.to_string(),
                            a.visibility.to_string(),
                        ]
                    })
                    .collect();
                table(&["id", "kind", "target", "author", "visibility"], &rows)
            })
        }
        Command::Annotation(AnnotationCmd::Delete { id }) => {
            let by = cx.user()?.clone();
            cx.commit(Op::DeleteAnnotation {
                annotation_id: id.as_str().into(),
                by,
            })?;
            Ok(())
        }
        Command::Bookmark {
            event,
            note,
            visibility,
        } => {
            let op = BookmarkRequest {
                event_id: EventId::new(event),
                note,
                visibility: vis(&visibility)?,
            }
            .into_op(cx.user()?);
            cx.commit(op)?;
            Ok(())
        }
        Command::Bookmarks => {
            let snap = cx.engine()?.snapshot();
            let user = cx.user()?.clone();
            let list = snap.state.list_bookmarks(&user);
            cx.emit(&list, || {
                let rows: Vec<Vec<String>> = list
                    .iter()
                    .map(|b| vec![b.id.to_string(), b.event_id.to_string(), b.note.clone(), b.visibility.to_string()])
                    .collect();
                table(&["id", "event", "note", "visibility"], &rows)
            })
        }
        Command::Search(cmd) => search_cmd(&mut cx, cmd),
        Command::Montage(cmd) => montage_cmd(&mut cx, cmd),
        Command::Workspace(cmd) => workspace_cmd(&mut cx, cmd),
        Command::Visibility(VisibilityCmd::Set { kind, id, visibility }) => {
            let op = Op::SetVisibility {
                resource: ResourceRef::new(kind.parse::<ResourceKind>()?, id),
                visibility: vis(&visibility)?,
                by: cx.user()?.clone(),
            };
            cx.commit(op)?;
            Ok(())
        }
        Command::Snapshot => {
            let path = cx.engine()?.write_snapshot()?;
            let p = path.display().to_string();
            cx.emit(&serde_json::json!({ "snapshot": p }), || format!("wrote {p}\n"))
        }
        Command::Stats => {
            let stats = cx.engine()?.snapshot().state.archive_stats();
            cx.emit(&stats, || {
                format!(
                    "events          {}\nsegments        {}\nknown duration  {}\n",
                    stats.event_count,
                    stats.segment_count,
                    timecode::format(stats.total_known_duration_ms)
                )
            })
        }
        Command::Serve { config } => {
            let cfg = ServerConfig::load(&config)?;
            let engine = Arc::new(Engine::open(&cfg.store, SystemClock)?);
            cx.warn(engine.open_report().warnings.iter())?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::api::serve(engine, cfg.token_table(), &cfg.listen))?;
            Ok(())
        }
    }
}

fn event_cmd(cx: &mut Ctx, cmd: EventCmd) -> Res {
    match cmd {
        EventCmd::Register {
            kind,
            metadata,
            metadata_file,
        } => {
            let text = match (metadata, metadata_file) {
                (Some(t), _) => Some(t),
                (None, Some(p)) => Some(read_text(&p)?),
                (None, None) => None,
            };
            let op = EventRequest {
                kind: kind.parse()?,
                metadata: None,
                metadata_text: text,
            }
            .into_op(cx.user()?)?;
            cx.commit(op)?;
            Ok(())
        }
        EventCmd::List { kind } => {
            let kind: Option<EventKind> = kind.map(|k| k.parse()).transpose()?;
            let snap = cx.engine()?.snapshot();
            let events = snap.state.list_events(kind);
            cx.emit(&events, || {
                let rows: Vec<Vec<String>> = events
                    .iter()
                    .map(|e| {
                        vec![
                            e.id.to_string(),
                            e.kind.to_string(),
                            e.metadata.get("Titre").or(e.metadata.get("Title")).unwrap_or("").to_owned(),
                            e.asset_ids.len().to_string(),
                        ]
                    })
                    .collect();
                table(&["id", "kind", "title", "assets"], &rows)
            })
        }
        EventCmd::Show { id } => {
            let snap = cx.engine()?.snapshot();
            let e = snap.state.event(&EventId::new(id))?;
            cx.emit(e, || format!("{} ({})\n{}", e.id, e.kind, e.metadata.to_text()))
        }
    }
}

fn ontology_cmd(cx: &mut Ctx, cmd: OntologyCmd) -> Res {
    match cmd {
        OntologyCmd::Create { name } => {
            let op = OntologyRequest {
                name: Some(name),
                template: None,
            }
            .into_op(cx.user()?)?;
            cx.commit(op)?;
            Ok(())
        }
        OntologyCmd::LoadTemplate { template } => {
            let op = OntologyRequest {
                name: None,
                template: Some(template),
            }
            .into_op(cx.user()?)?;
            cx.commit(op)?;
            Ok(())
        }
        OntologyCmd::AddTheme {
            ontology,
            name,
            category,
            parents,
            definition,
        } => {
            let theme = NewTheme {
                name,
                category: category.parse::<ThemeCategory>()?,
                definition,
                parents,
            };
            let op = add_theme_op(OntologyId::new(ontology), theme, cx.user()?);
            cx.commit(op)?;
            Ok(())
        }
        OntologyCmd::AddParent { ontology, theme, parent } => {
            let op = Op::AddThemeParent {
                ontology_id: OntologyId::new(ontology),
                theme,
                parent,
                by: cx.user()?.clone(),
            };
            cx.commit(op)?;
            Ok(())
        }
        OntologyCmd::AddRel {
            ontology,
            name,
            category,
            domain,
            range,
            definition,
        } => {
            let rel = NewRelation {
                name,
                category: category.parse::<RelationCategory>()?,
                definition,
                domain,
                range,
            };
            let op = add_relation_op(OntologyId::new(ontology), rel, cx.user()?);
            cx.commit(op)?;
            Ok(())
        }
        OntologyCmd::Validate { ontology } => {
            let snap = cx.engine()?.snapshot();
            let id = OntologyId::new(ontology);
            require_view(&snap.state, cx.user()?, &ResourceRef::new(ResourceKind::Ontology, &id))?;
            let violations = snap.state.ontology(&id)?.validate();
            cx.emit(
                &serde_json::json!({ "valid": violations.is_empty(), "violations": violations }),
                || {
                    if violations.is_empty() {
                        "valid\n".into()
                    } else {
                        violations.iter().map(|v| format!("violation: {v}\n")).collect()
                    }
                },
            )?;
            if violations.is_empty() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{} violation(s)", violations.len())))
            }
        }
        OntologyCmd::List => {
            let snap = cx.engine()?.snapshot();
            let list = snap.state.list_ontologies(cx.user()?);
            cx.emit(&list, || {
                let rows: Vec<Vec<String>> = list
                    .iter()
                    .map(|o| {
                        vec![
                            o.id.to_string(),
                            o.name.clone(),
                            o.themes.len().to_string(),
                            o.relations.len().to_string(),
                            o.owner.to_string(),
                            o.visibility.to_string(),
                        ]
                    })
                    .collect();
                table(&["id", "name", "themes", "relations", "owner", "visibility"], &rows)
            })
        }
        OntologyCmd::Show { ontology } => {
            let snap = cx.engine()?.snapshot();
            let id = OntologyId::new(ontology);
            require_view(&snap.state, cx.user()?, &ResourceRef::new(ResourceKind::Ontology, &id))?;
            let o = snap.state.ontology(&id)?;
            cx.emit(o, || {
                let name = |t: &ThemeId| o.theme(t).map_or(t.to_string(), |t| t.name.clone());
                let rows: Vec<Vec<String>> = o
                    .themes
                    .values()
                    .map(|t| {
                        vec![
                            t.id.to_string(),
                            t.name.clone(),
                            t.category.to_string(),
                            t.parents.iter().map(name).collect::<Vec<_>>().join(","),
                            o.depth(&t.id).to_string(),
                        ]
                    })
                    .collect();
                let mut s = format!("{} {}\n", o.id, o.name);
                s += &table(&["id", "name", "category", "parents", "depth"], &rows);
                let rels: Vec<Vec<String>> = o
                    .relations
                    .values()
                    .map(|r| vec![r.id.to_string(), r.name.clone(), r.category.to_string(), name(&r.domain), name(&r.range)])
                    .collect();
                s += &table(&["id", "relation", "category", "domain", "range"], &rels);
                s
            })
        }
        OntologyCmd::Subsumes {
            ontology,
            ancestor,
            descendant,
        } => {
            let snap = cx.engine()?.snapshot();
            let id = OntologyId::new(ontology);
            require_view(&snap.state, cx.user()?, &ResourceRef::new(ResourceKind::Ontology, &id))?;
            let o = snap.state.ontology(&id)?;
            let a = o.resolve_theme(&ancestor)?;
            let d = o.resolve_theme(&descendant)?;
            let yes = o.subsumes(&a.id, &d.id);
            cx.emit(&serde_json::json!({ "subsumes": yes }), || format!("{yes}\n"))
        }
        OntologyCmd::Descendants { ontology, theme } => {
            let snap = cx.engine()?.snapshot();
            let id = OntologyId::new(ontology);
            require_view(&snap.state, cx.user()?, &ResourceRef::new(ResourceKind::Ontology, &id))?;
            let o = snap.state.ontology(&id)?;
            let t = o.resolve_theme(&theme)?;
            let ds: Vec<_> = o.descendants(&t.id).iter().filter_map(|d| o.theme(d)).collect();
            cx.emit(&ds, || ds.iter().map(|t| format!("{}  {}\n", t.id, t.name)).collect())
        }
    }
}

fn require_view(state: &archivist_core::State, user: &UserId, r: &ResourceRef) -> Res {
    state.guard(r)?;
    if state.can_view(user, r) {
        Ok(())
    } else {
        Err(Error::Access(format!("{r} is not visible to {user}")))
    }
}

fn cg_cmd(cx: &mut Ctx, cmd: CgCmd) -> Res {
    match cmd {
        CgCmd::Parse { ontology, text } => {
            let (graph, canonical) = match ontology {
                Some(o) => {
                    let snap = cx.engine()?.snapshot();
                    let id = OntologyId::new(o);
                    require_view(&snap.state, cx.user()?, &ResourceRef::new(ResourceKind::Ontology, &id))?;
                    let g = snap.parse_graph(&id, &text)?;
                    let c = print_graph(&g, snap.state.ontology(&id)?)?;
                    (g, c)
                }
                None => {
                    let o = ThemeOntology::new(
                        OntologyId::new("o_scratch"),
                        "scratch",
                        ThemeId::new("t_root"),
                        UserId::new("nobody"),
                        chrono_epoch(),
                    )?;
                    let g = parse_graph(&text, &o)?;
                    let c = print_graph(&g, &o)?;
                    (g, c)
                }
            };
            cx.emit(&serde_json::json!({ "canonical": canonical, "graph": graph }), || {
                format!("{canonical}\n")
            })
        }
        CgCmd::Print { graph } => {
            let snap = cx.engine()?.snapshot();
            let id = GraphId::new(graph);
            require_view(&snap.state, cx.user()?, &graph_ref(&id))?;
            let g = snap.state.graph(&id)?;
            let c = print_graph(&g.graph, snap.state.ontology(&g.graph.ontology_id)?)?;
            cx.emit(&c, || format!("{c}\n"))
        }
        CgCmd::Query {
            ontology,
            query,
            target,
        } => {
            let engine = cx.engine()?;
            let snap = engine.snapshot();
            let id = OntologyId::new(ontology);
            let user = cx.user()?.clone();
            require_view(&snap.state, &user, &ResourceRef::new(ResourceKind::Ontology, &id))?;
            match target {
                Some(t) => {
                    let q = snap.parse_graph(&id, &query)?;
                    let t = snap.parse_graph(&id, &t)?;
                    let maps = project(&q, &t, snap.state.ontology(&id)?, engine.budget())?;
                    cx.emit(&serde_json::json!({ "count": maps.len(), "mappings": maps }), || {
                        let mut s = format!("{} projection(s)\n", maps.len());
                        for m in &maps {
                            let pairs: Vec<String> = m.0.iter().map(|(k, v)| format!("{k}->{v}")).collect();
                            s += &format!("  {}\n", pairs.join(" "));
                        }
                        s
                    })
                }
                None => {
                    let hits = snap.graph_search(&id, &query, &user, engine.budget())?;
                    cx.emit(&hits, || hits_table(&hits))
                }
            }
        }
        CgCmd::Create {
            ontology,
            text,
            name,
            free_text,
            visibility,
        } => {
            let op = GraphRequest {
                ontology_id: OntologyId::new(ontology),
                text,
                name,
                free_text,
                visibility: vis(&visibility)?,
            }
            .into_op(cx.user()?);
            cx.commit(op)?;
            Ok(())
        }
        CgCmd::List => {
            let snap = cx.engine()?.snapshot();
            let list = snap.state.list_graphs(cx.user()?);
            cx.emit(&list, || {
                let rows: Vec<Vec<String>> = list
                    .iter()
                    .map(|g| {
                        let canonical = snap
                            .state
                            .ontology(&g.graph.ontology_id)
                            .and_then(|o| print_graph(&g.graph, o))
                            .unwrap_or_default();
                        vec![g.id.to_string(), g.graph.ontology_id.to_string(), canonical]
                    })
                    .collect();
                table(&["id", "ontology", "graph"], &rows)
            })
        }
    }
}

fn chrono_epoch() -> chrono::DateTime<chrono::Utc> {
    chrono::DateTime::UNIX_EPOCH
}

fn viewpoint_cmd(cx: &mut Ctx, cmd: ViewpointCmd) -> Res {
    match cmd {
        ViewpointCmd::Define {
            name,
            features,
            features_file,
        } => {
            let op = SchemaRequest {
                name: Some(name),
                features: Some(features_arg(features, features_file)?),
                template: None,
            }
            .into_op(cx.user()?)?;
            cx.commit(op)?;
            Ok(())
        }
        ViewpointCmd::LoadTemplate { template } => {
            let op = SchemaRequest {
                name: None,
                features: None,
                template: Some(template),
            }
            .into_op(cx.user()?)?;
            cx.commit(op)?;
            Ok(())
        }
        ViewpointCmd::Revise {
            schema,
            features,
            features_file,
        } => {
            let op = Op::ReviseSchema {
                schema_id: SchemaId::new(schema),
                features: features_arg(features, features_file)?,
                by: cx.user()?.clone(),
            };
            cx.commit(op)?;
            Ok(())
        }
        ViewpointCmd::List => {
            let snap = cx.engine()?.snapshot();
            let list = snap.state.list_schemas(cx.user()?);
            cx.emit(&list, || {
                let rows: Vec<Vec<String>> = list
                    .iter()
                    .map(|s| {
                        vec![
                            s.id.to_string(),
                            s.name.clone(),
                            s.version.to_string(),
                            s.features.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(","),
                        ]
                    })
                    .collect();
                table(&["id", "name", "version", "features"], &rows)
            })
        }
    }
}

fn annotate_cmd(cx: &mut Ctx, cmd: AnnotateCmd) -> Res {
    let (target, body, visibility) = match cmd {
        AnnotateCmd::Theme {
            target,
            ontology,
            theme,
            visibility,
        } => (
            target,
            AttachBody::Theme {
                ontology_id: OntologyId::new(ontology),
                theme,
            },
            visibility,
        ),
        AnnotateCmd::Graph {
            target,
            graph,
            visibility,
        } => (
            target,
            AttachBody::Graph {
                graph_id: GraphId::new(graph),
            },
            visibility,
        ),
        AnnotateCmd::Viewpoint {
            target,
            schema,
            values,
            visibility,
        } => (
            target,
            AttachBody::Viewpoint {
                schema_id: SchemaId::new(schema),
                values: feature_values(&values)?,
            },
            visibility,
        ),
        AnnotateCmd::Note {
            target,
            text,
            visibility,
        } => (target, AttachBody::Note { text }, visibility),
    };
    let op = AnnotationRequest {
        target: target.target()?,
        body,
        visibility: vis(&visibility)?,
    }
    .into_op(cx.user()?);
    cx.commit(op)?;
    Ok(())
}

fn search_cmd(cx: &mut Ctx, cmd: SearchCmd) -> Res {
    let engine = cx.engine()?;
    let snap = engine.snapshot();
    let user = cx.user()?.clone();
    let hits = match cmd {
        SearchCmd::Keyword { text, scope } => {
            snap.keyword_search(&text, &user, scope.map(WorkspaceId::new).as_ref())?
        }
        SearchCmd::Theme {
            ontology,
            theme,
            expand,
        } => snap.theme_search(&OntologyId::new(ontology), &theme, expand, &user)?,
        SearchCmd::Graph { ontology, query } => {
            snap.graph_search(&OntologyId::new(ontology), &query, &user, engine.budget())?
        }
    };
    cx.emit(&hits, || hits_table(&hits))
}

fn montage_cmd(cx: &mut Ctx, cmd: MontageCmd) -> Res {
    match cmd {
        MontageCmd::Create { name } => {
            let owner = cx.user()?.clone();
            cx.commit(Op::CreatePath { name, owner })?;
            Ok(())
        }
        MontageCmd::AddNode { path, segment, caption } => {
            let op = path_node_op(
                PathId::new(path),
                PathNodeRequest {
                    segment_id: SegmentId::new(segment),
                    caption,
                },
                cx.user()?,
            );
            cx.commit(op)?;
            Ok(())
        }
        MontageCmd::AddEdge { path, from, to, label } => {
            let op = transition_op(PathId::new(path), TransitionRequest { from, to, label }, cx.user()?);
            cx.commit(op)?;
            Ok(())
        }
        MontageCmd::SetEntry { path, node } => {
            let op = Op::SetEntry {
                path_id: PathId::new(path),
                node,
                by: cx.user()?.clone(),
            };
            cx.commit(op)?;
            Ok(())
        }
        MontageCmd::Compile { path, out } => {
            let snap = cx.engine()?.snapshot();
            let manifest = snap.compile_manifest(&PathId::new(path), cx.user()?)?;
            match out {
                Some(file) => {
                    archivist_core::store::write_atomic(&file, manifest.to_json().as_bytes())?;
                    let f = file.display().to_string();
                    cx.emit(&serde_json::json!({ "manifest": f }), || format!("wrote {f}\n"))
                }
                None => {
                    cx.out.write_all(manifest.to_json().as_bytes())?;
                    Ok(())
                }
            }
        }
        MontageCmd::Export { path, out, force } => {
            let snap = cx.engine()?.snapshot();
            let manifest = snap.compile_manifest(&PathId::new(path), cx.user()?)?;
            let files = export_site(&manifest, &out, force)?;
            let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            cx.emit(&names, || names.iter().map(|n| format!("wrote {n}\n")).collect())
        }
        MontageCmd::List => {
            let snap = cx.engine()?.snapshot();
            let list = snap.montage_search(cx.user()?);
            cx.emit(&list, || {
                let rows: Vec<Vec<String>> = list
                    .iter()
                    .map(|p| {
                        vec![
                            p.id.to_string(),
                            p.name.clone(),
                            p.node_count.to_string(),
                            p.transition_count.to_string(),
                            p.entry.clone().unwrap_or_else(|| "-".into()),
                        ]
                    })
                    .collect();
                table(&["id", "name", "nodes", "transitions", "entry"], &rows)
            })
        }
        MontageCmd::Show { path } => {
            let snap = cx.engine()?.snapshot();
            let id = PathId::new(path);
            require_view(&snap.state, cx.user()?, &ResourceRef::new(ResourceKind::Path, &id))?;
            let p = snap.state.path(&id)?;
            cx.emit(p, || {
                let nodes: Vec<Vec<String>> = p
                    .nodes
                    .iter()
                    .map(|n| {
                        let entry = if p.entry.as_deref() == Some(n.id.as_str()) { "*" } else { "" };
                        vec![n.id.clone(), entry.into(), n.segment_id.to_string(), n.caption.clone()]
                    })
                    .collect();
                let edges: Vec<Vec<String>> = p
                    .transitions
                    .iter()
                    .map(|t| vec![t.from.clone(), t.to.clone(), t.label.clone()])
                    .collect();
                format!(
                    "{} {}\n{}{}",
                    p.id,
                    p.name,
                    table(&["node", "entry", "segment", "caption"], &nodes),
                    table(&["from", "to", "label"], &edges)
                )
            })
        }
    }
}

fn workspace_cmd(cx: &mut Ctx, cmd: WorkspaceCmd) -> Res {
    match cmd {
        WorkspaceCmd::Create { name } => {
            let owner = cx.user()?.clone();
            cx.commit(Op::CreateWorkspace { name, owner })?;
            Ok(())
        }
        WorkspaceCmd::AddMember { workspace, member } => {
            let op = add_member_op(WorkspaceId::new(workspace), UserId::new(member), cx.user()?);
            cx.commit(op)?;
            Ok(())
        }
        WorkspaceCmd::Share { workspace, kind, id } => {
            let r = ResourceRef::new(kind.parse::<ResourceKind>()?, id);
            let op = share_op(WorkspaceId::new(workspace), r, cx.user()?);
            cx.commit(op)?;
            Ok(())
        }
        WorkspaceCmd::List => {
            let snap = cx.engine()?.snapshot();
            let list = snap.state.list_workspaces(cx.user()?);
            cx.emit(&list, || {
                let rows: Vec<Vec<String>> = list
                    .iter()
                    .map(|w| {
                        vec![
                            w.id.to_string(),
                            w.name.clone(),
                            w.owner.to_string(),
                            w.members.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
                            w.resource_refs.len().to_string(),
                        ]
                    })
                    .collect();
                table(&["id", "name", "owner", "members", "resources"], &rows)
            })
        }
    }
}
