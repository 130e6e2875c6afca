//! Navigation paths over described segments, compiled to a self-contained
//! manifest and exported as a static site.
//!
//! Paths may branch and loop. The only structural requirement, checked at
//! compile time, is that every node is reachable from the entry.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationBody, AnnotationTarget};
use crate::congraph::print_graph;
use crate::error::{Error, Result};
use crate::ids::{AnnotationId, PathId, SegmentId, UserId};
use crate::state::State;
use crate::store::write_atomic;
use crate::workspace::{ResourceKind, ResourceRef, Visibility};

pub const MANIFEST_FORMAT_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.html";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathNode {
    pub id: String,
    pub segment_id: SegmentId,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationPath {
    pub id: PathId,
    pub name: String,
    pub nodes: Vec<PathNode>,
    pub transitions: Vec<Transition>,
    pub entry: Option<String>,
    pub owner: UserId,
    pub visibility: Visibility,
    pub created_at: DateTime<Utc>,
    /// Counter behind the `n{k}` node ids; never reused.
    #[serde(default)]
    pub next_node: u64,
}

impl NavigationPath {
    pub fn new(id: PathId, name: String, owner: UserId, at: DateTime<Utc>) -> Self {
        Self {
            id,
            name,
            nodes: Vec::new(),
            transitions: Vec::new(),
            entry: None,
            owner,
            visibility: Visibility::Private,
            created_at: at,
            next_node: 0,
        }
    }

    pub fn node(&self, id: &str) -> Option<&PathNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Nodes in breadth-first order from the entry, following transitions
    /// in insertion order.
    pub fn reachable(&self) -> Vec<&str> {
        let Some(entry) = self.entry.as_deref().filter(|e| self.node(e).is_some()) else {
            return Vec::new();
        };
        let mut seen = BTreeSet::from([entry]);
        let mut order = vec![entry];
        let mut queue = VecDeque::from([entry]);
        while let Some(n) = queue.pop_front() {
            for t in self.transitions.iter().filter(|t| t.from == n) {
                if seen.insert(t.to.as_str()) {
                    order.push(t.to.as_str());
                    queue.push_back(t.to.as_str());
                }
            }
        }
        order
    }

    /// Nodes not reachable from the entry, in insertion order.
    pub fn orphans(&self) -> Vec<String> {
        let reached: BTreeSet<&str> = self.reachable().into_iter().collect();
        self.nodes
            .iter()
            .filter(|n| !reached.contains(n.id.as_str()))
            .map(|n| n.id.clone())
            .collect()
    }
}

/// Listing entry for montage search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSummary {
    pub id: PathId,
    pub name: String,
    pub owner: UserId,
    pub node_count: usize,
    pub transition_count: usize,
    pub entry: Option<String>,
}

impl From<&NavigationPath> for PathSummary {
    fn from(p: &NavigationPath) -> Self {
        Self {
            id: p.id.clone(),
            name: p.name.clone(),
            owner: p.owner.clone(),
            node_count: p.nodes.len(),
            transition_count: p.transitions.len(),
            entry: p.entry.clone(),
        }
    }
}

// Field order below is the manifest's wire order.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperDocManifest {
    pub format_version: String,
    pub path: ManifestPath,
    pub nodes: Vec<ManifestNode>,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPath {
    pub id: PathId,
    pub name: String,
    pub entry: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestNode {
    pub id: String,
    pub segment: ManifestSegment,
    pub caption: String,
    pub annotations: Vec<AnnotationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSegment {
    pub asset_uri: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub id: AnnotationId,
    pub kind: String,
    pub summary: String,
}

fn summarize(state: &State, body: &AnnotationBody) -> String {
    match body {
        AnnotationBody::Theme { theme_id, ontology_id } => state
            .ontologies
            .get(ontology_id)
            .and_then(|o| o.theme(theme_id))
            .map_or_else(|| theme_id.to_string(), |t| t.name.clone()),
        AnnotationBody::Graph { graph_id } => state
            .graphs
            .get(graph_id)
            .and_then(|g| {
                let o = state.ontologies.get(&g.graph.ontology_id)?;
                print_graph(&g.graph, o).ok()
            })
            .unwrap_or_else(|| graph_id.to_string()),
        AnnotationBody::Viewpoint(v) => v
            .values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(", "),
        AnnotationBody::Note { text } => text.clone(),
    }
}

/// Resolves a path into a manifest that names nothing outside itself.
pub fn compile_manifest(state: &State, path_id: &PathId, as_user: &UserId) -> Result<HyperDocManifest> {
    let path_ref = ResourceRef::new(ResourceKind::Path, path_id);
    let path = state.path(path_id)?;
    if !state.can_view(as_user, &path_ref) {
        return Err(Error::Access(format!("{path_ref} is not visible to {as_user}")));
    }
    if path.nodes.is_empty() {
        return Err(Error::Validation(format!("path {path_id} has no nodes")));
    }
    let entry = match &path.entry {
        Some(e) if path.node(e).is_some() => e.clone(),
        Some(e) => return Err(Error::not_found("path node", e)),
        None => return Err(Error::Validation(format!("path {path_id} has no entry node"))),
    };
    let orphans = path.orphans();
    if !orphans.is_empty() {
        return Err(Error::Unreachable { orphans });
    }

    let mut nodes = Vec::with_capacity(path.nodes.len());
    for id in path.reachable() {
        let node = path.node(id).expect("reachable nodes exist");
        let seg = state.segment(&node.segment_id)?;
        if !state.can_view_segment(as_user, &seg.id) {
            return Err(Error::Access(format!("segment {} is not visible to {as_user}", seg.id)));
        }
        let asset = state.asset(&seg.asset_id)?;
        let annotations = state
            .list_annotations(&AnnotationTarget::segment(seg.id.clone()), as_user)?
            .into_iter()
            .map(|a| AnnotationSummary {
                id: a.id.clone(),
                kind: a.body.kind().into(),
                summary: summarize(state, &a.body),
            })
            .collect();
        nodes.push(ManifestNode {
            id: node.id.clone(),
            segment: ManifestSegment {
                asset_uri: asset.uri.clone(),
                start_ms: seg.start_ms,
                end_ms: seg.end_ms,
            },
            caption: node.caption.clone(),
            annotations,
        });
    }

    Ok(HyperDocManifest {
        format_version: MANIFEST_FORMAT_VERSION.into(),
        path: ManifestPath {
            id: path.id.clone(),
            name: path.name.clone(),
            entry,
        },
        nodes,
        transitions: path.transitions.clone(),
    })
}

impl HyperDocManifest {
    /// Pretty JSON with a trailing newline; the byte form that gets exported.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn node_page(node_id: &str) -> String {
    format!("node-{node_id}.html")
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n</head>\n<body>\n{body}</body>\n</html>\n",
        escape(title)
    )
}

fn render_index(m: &HyperDocManifest) -> String {
    let mut body = format!("<h1>{}</h1>\n", escape(&m.path.name));
    let _ = writeln!(
        body,
        "<p><a class=\"entry\" href=\"{}\">Start</a></p>\n<ul>",
        node_page(&m.path.entry)
    );
    for n in &m.nodes {
        let _ = writeln!(
            body,
            "<li><a class=\"node\" href=\"{}\">{}</a></li>",
            node_page(&n.id),
            escape(&n.caption)
        );
    }
    body.push_str("</ul>\n");
    page(&m.path.name, &body)
}

fn render_node(m: &HyperDocManifest, n: &ManifestNode) -> String {
    let mut body = format!("<h1>{}</h1>\n", escape(&n.caption));
    let _ = writeln!(
        body,
        "<p class=\"segment\" data-uri=\"{}\" data-start-ms=\"{}\" data-end-ms=\"{}\">{} [{} - {}]</p>",
        escape(&n.segment.asset_uri),
        n.segment.start_ms,
        n.segment.end_ms,
        escape(&n.segment.asset_uri),
        crate::timecode::format(n.segment.start_ms),
        crate::timecode::format(n.segment.end_ms),
    );
    if !n.annotations.is_empty() {
        body.push_str("<ul class=\"annotations\">\n");
        for a in &n.annotations {
            let _ = writeln!(body, "<li class=\"{}\">{}</li>", escape(&a.kind), escape(&a.summary));
        }
        body.push_str("</ul>\n");
    }
    body.push_str("<nav>\n");
    for t in m.transitions.iter().filter(|t| t.from == n.id) {
        let _ = writeln!(
            body,
            "<a class=\"transition\" data-from=\"{}\" data-to=\"{}\" href=\"{}\">{}</a>",
            escape(&t.from),
            escape(&t.to),
            node_page(&t.to),
            escape(&t.label)
        );
    }
    let _ = writeln!(body, "<a class=\"home\" href=\"{INDEX_FILE}\">Index</a>\n</nav>");
    page(&n.caption, &body)
}

/// Writes `manifest.json`, `index.html` and one `node-<id>.html` per node.
/// Links are relative. A non-empty `out_dir` is refused unless `force`.
pub fn export_site(manifest: &HyperDocManifest, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    if out_dir.exists() {
        let non_empty = fs::read_dir(out_dir)?.next().is_some();
        if non_empty && !force {
            return Err(Error::Conflict(format!(
                "{} is not empty; pass force to overwrite",
                out_dir.display()
            )));
        }
    } else {
        fs::create_dir_all(out_dir)?;
    }
    let mut files = vec![
        (out_dir.join(MANIFEST_FILE), manifest.to_json()),
        (out_dir.join(INDEX_FILE), render_index(manifest)),
    ];
    for n in &manifest.nodes {
        files.push((out_dir.join(node_page(&n.id)), render_node(manifest, n)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (path, text) in files {
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
