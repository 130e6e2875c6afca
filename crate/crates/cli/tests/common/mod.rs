//! The end-to-end research scenario, driven through the command line and
//! through the HTTP API with identical steps.

#![allow(dead_code)]

use std::path::Path;

use archivist::api::{router, AppState};
use archivist::config::token_hash;
use archivist_core::{Engine, FixedStepClock, Op, UserId};
use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const FIXTURE: &str = include_str!("../../../core/tests/fixtures/interview.txt");

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the command line in-process.
pub fn run_in_process(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("archivist").chain(args.iter().copied());
    let code = archivist::cli::run(argv.map(std::ffi::OsString::from), &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// Runs the built binary.
pub fn run_binary(bin: &str, args: &[&str]) -> Output {
    let o = std::process::Command::new(bin)
        .args(args)
        .env_remove("ARCHIVIST_STORE")
        .env_remove("ARCHIVIST_USER")
        .output()
        .unwrap();
    Output {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

/// Ids created by the scenario, in creation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioIds {
    pub workspace: String,
    pub event: String,
    pub asset: String,
    pub segments: Vec<String>,
    pub ontology: String,
    pub graph: String,
    pub schema: String,
    pub path: String,
}

pub const GRAPH: &str = r#"[Actor: "Michael Werner"]-(takes_part_in)->[Historiography]"#;
pub const NEW_THEMES: &[(&str, &str)] =
    &[("CulturalTransfer", "Historiography"), ("HistoireCroisee", "CulturalTransfer"), ("Comparison", "Historiography")];

/// Drives the command line as `alice`. `run` gets the arguments after the
/// program name; `out` receives the compiled manifest and exported site.
pub fn cli_scenario(store: &Path, out: &Path, run: &mut dyn FnMut(&[&str]) -> Output) -> Result<ScenarioIds, String> {
    let store = store.to_str().unwrap().to_string();
    let mut step = |args: &[&str]| -> Result<String, String> {
        let mut full = vec!["--store", store.as_str(), "--user", "alice"];
        full.extend_from_slice(args);
        let o = run(&full);
        if o.code != 0 {
            return Err(format!("`{}` exited {}: {}{}", args.join(" "), o.code, o.stdout, o.stderr));
        }
        Ok(o.stdout)
    };
    // "created <kind> <id>"
    let id = |stdout: String| -> String {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix("created "))
            .and_then(|l| l.split_whitespace().nth(1))
            .unwrap_or_default()
            .to_string()
    };
    let mut ids = ScenarioIds::default();
    let fixture = out.join("interview.txt");
    std::fs::write(&fixture, FIXTURE).unwrap();

    step(&["init", "--display-name", "Alice"])?;
    step(&["user", "add", "bob", "--display-name", "Bob"])?;
    ids.workspace = id(step(&["workspace", "create", "Cultural transfers"])?);
    step(&["workspace", "add-member", &ids.workspace, "bob"])?;
    let group = format!("group:{}", ids.workspace);
    ids.event = id(step(&["event", "register", "--kind", "interview", "--metadata-file", fixture.to_str().unwrap()])?);
    step(&["bookmark", &ids.event, "--note", "guest interview", "--visibility", &group])?;
    ids.asset = id(step(&["asset", "add", "--event", &ids.event, "--uri", "media/werner.mp4", "--duration", "10:00:00", "--format", "mp4"])?);
    for (start, end, label) in [("00:05:00", "00:12:30", "histoire croisée"), ("00:20:00", "00:31:00", "transfer")] {
        let s = id(step(&["segment", "create", "--asset", &ids.asset, "--start", start, "--end", end, "--label", label, "--visibility", &group])?);
        ids.segments.push(s);
    }
    let s1 = ids.segments[0].clone();
    let s2 = ids.segments[1].clone();
    step(&["zone", "create", "--segment", &s1, "--at", "00:06:00", "--rect", "0.1,0.1,0.5,0.5"])?;
    ids.ontology = id(step(&["ontology", "load-template", "industrialization-history"])?);
    for (name, parent) in NEW_THEMES {
        step(&["ontology", "add-theme", "--ontology", &ids.ontology, name, "--parent", parent, "--category", "contextual"])?;
    }
    step(&["ontology", "validate", &ids.ontology])?;
    step(&["visibility", "set", "ontology", &ids.ontology, &group])?;
    step(&["annotate", "theme", "--segment", &s1, "--ontology", &ids.ontology, "HistoireCroisee", "--visibility", &group])?;
    ids.graph = id(step(&["cg", "create", "--ontology", &ids.ontology, GRAPH, "--visibility", &group])?);
    step(&["annotate", "graph", "--segment", &s1, &ids.graph, "--visibility", &group])?;
    ids.schema = id(step(&["viewpoint", "load-template", "segment-analysis"])?);
    step(&["visibility", "set", "schema", &ids.schema, &group])?;
    step(&[
        "annotate", "viewpoint", "--segment", &s1, "--schema", &ids.schema,
        "rhetorical_nature=argumentation", "importance=4", "added_value=crossed perspectives", "--visibility", &group,
    ])?;
    step(&["annotate", "note", "--segment", &s2, "--from", "00:21:00", "--to", "00:22:00", "mentions transfer studies"])?;
    ids.path = id(step(&["montage", "create", "Werner tour"])?);
    step(&["montage", "add-node", &ids.path, "--segment", &s1, "--caption", "Crossed history"])?;
    step(&["montage", "add-node", &ids.path, "--segment", &s2, "--caption", "Transfers"])?;
    step(&["montage", "add-edge", &ids.path, "n1", "n2", "--label", "next"])?;
    step(&["montage", "add-edge", &ids.path, "n2", "n1", "--label", "back"])?;
    step(&["workspace", "share", &ids.workspace, "path", &ids.path])?;
    step(&["visibility", "set", "path", &ids.path, &group])?;
    let manifest = out.join("manifest.json");
    step(&["montage", "compile", &ids.path, "--out", manifest.to_str().unwrap()])?;
    step(&["montage", "export", &ids.path, "--out", out.join("site").to_str().unwrap()])?;
    Ok(ids)
}

/// An in-memory app with `alice` and `bob` registered and bearer tokens
/// `alice-token` and `bob-token`.
pub fn test_app() -> (Router, std::sync::Arc<Engine>) {
    let engine = std::sync::Arc::new(Engine::in_memory(FixedStepClock::default()));
    for (u, name) in [("alice", "Alice"), ("bob", "Bob")] {
        engine.commit_one(Op::RegisterUser { user: UserId::new(u), display_name: name.into() }).unwrap();
    }
    let tokens = [("alice-token", "alice"), ("bob-token", "bob")]
        .into_iter()
        .map(|(t, u)| (token_hash(t), UserId::new(u)))
        .collect();
    (router(std::sync::Arc::new(AppState { engine: engine.clone(), tokens })), engine)
}

pub async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

/// The same scenario over HTTP as `alice`.
pub async fn http_scenario(app: &Router) -> Result<(ScenarioIds, Value), String> {
    let post = |uri: String, body: Value| async move {
        let method = if uri.starts_with("PUT ") { Method::PUT } else { Method::POST };
        let uri = uri.trim_start_matches("PUT ").to_string();
        let (status, v) = call(app, method, &format!("/api/v1{uri}"), Some("alice-token"), Some(body.clone())).await;
        if !status.is_success() {
            return Err(format!("{uri} {body} -> {status} {v}"));
        }
        Ok(v)
    };
    let id = |v: &Value| v["id"].as_str().unwrap_or_default().to_string();
    let mut ids = ScenarioIds {
        workspace: id(&post("/workspaces".into(), json!({ "name": "Cultural transfers" })).await?),
        ..ScenarioIds::default()
    };
    let ws = ids.workspace.clone();
    post(format!("/workspaces/{ws}/members"), json!({ "user": "bob" })).await?;
    let group = json!({ "group": ws });
    ids.event = id(&post("/events".into(), json!({ "kind": "interview", "metadata_text": FIXTURE })).await?);
    post("/bookmarks".into(), json!({ "event_id": ids.event, "note": "guest interview", "visibility": group })).await?;
    ids.asset = id(&post(
        "/assets".into(),
        json!({ "event_id": ids.event, "uri": "media/werner.mp4", "duration": "10:00:00", "format_label": "mp4" }),
    )
    .await?);
    for (start, end, label) in [("00:05:00", "00:12:30", "histoire croisée"), ("00:20:00", "00:31:00", "transfer")] {
        let s = post(
            "/segments".into(),
            json!({ "asset_id": ids.asset, "start": start, "end": end, "label": label, "visibility": group }),
        )
        .await?;
        ids.segments.push(id(&s));
    }
    let (s1, s2) = (ids.segments[0].clone(), ids.segments[1].clone());
    post("/zones".into(), json!({ "segment_id": s1, "at": "00:06:00", "rect": { "x": 0.1, "y": 0.1, "w": 0.5, "h": 0.5 } })).await?;
    ids.ontology = id(&post("/ontologies".into(), json!({ "template": "industrialization-history" })).await?);
    let ont = ids.ontology.clone();
    for (name, parent) in NEW_THEMES {
        post(format!("/ontologies/{ont}/themes"), json!({ "name": name, "category": "contextual", "parents": [parent] })).await?;
    }
    post(format!("PUT /visibility/ontology/{ont}"), json!({ "visibility": group })).await?;
    let seg_target = |s: &str| json!({ "type": "segment", "segment_id": s });
    post(
        "/annotations".into(),
        json!({ "target": seg_target(&s1), "body": { "type": "theme", "ontology_id": ont, "theme": "HistoireCroisee" }, "visibility": group }),
    )
    .await?;
    ids.graph = id(&post("/graphs".into(), json!({ "ontology_id": ont, "text": GRAPH, "visibility": group })).await?);
    post(
        "/annotations".into(),
        json!({ "target": seg_target(&s1), "body": { "type": "graph", "graph_id": ids.graph }, "visibility": group }),
    )
    .await?;
    ids.schema = id(&post("/schemas".into(), json!({ "template": "segment-analysis" })).await?);
    post(format!("PUT /visibility/schema/{}", ids.schema), json!({ "visibility": group })).await?;
    let values = json!({ "rhetorical_nature": "argumentation", "importance": 4, "added_value": "crossed perspectives" });
    post(
        "/annotations".into(),
        json!({ "target": seg_target(&s1), "body": { "type": "viewpoint", "schema_id": ids.schema, "values": values }, "visibility": group }),
    )
    .await?;
    post(
        "/annotations".into(),
        json!({
            "target": { "type": "part", "segment_id": s2, "from_ms": 1_260_000, "to_ms": 1_320_000 },
            "body": { "type": "note", "text": "mentions transfer studies" },
        }),
    )
    .await?;
    ids.path = id(&post("/paths".into(), json!({ "name": "Werner tour" })).await?);
    let p = ids.path.clone();
    post(format!("/paths/{p}/nodes"), json!({ "segment_id": s1, "caption": "Crossed history" })).await?;
    post(format!("/paths/{p}/nodes"), json!({ "segment_id": s2, "caption": "Transfers" })).await?;
    post(format!("/paths/{p}/transitions"), json!({ "from": "n1", "to": "n2", "label": "next" })).await?;
    post(format!("/paths/{p}/transitions"), json!({ "from": "n2", "to": "n1", "label": "back" })).await?;
    post(format!("/workspaces/{ws}/share"), json!({ "kind": "path", "id": p })).await?;
    post(format!("PUT /visibility/path/{p}"), json!({ "visibility": group })).await?;
    let manifest = post(format!("/paths/{p}/compile"), json!({})).await?;
    Ok((ids, manifest))
}

/// State as JSON with every timestamp removed, so stores written under
/// different clocks compare equal.
pub fn normalized(state: &archivist_core::State) -> Value {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                m.retain(|k, _| k != "at" && !k.ends_with("_at"));
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(state).unwrap();
    strip(&mut v);
    v
}
