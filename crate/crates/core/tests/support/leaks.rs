//! Visibility checks over a random store: every read surface against the
//! lattice oracle, and monotonicity when visibility is raised.

use std::collections::BTreeSet;

use archivist_core::annotation::{AnnotationBody, AnnotationTarget};
use archivist_core::workspace::{ResourceKind, ResourceRef, Visibility};
use archivist_core::{Op, UserId};

use super::*;

fn seg(id: &archivist_core::SegmentId) -> ResourceRef {
    ResourceRef::new(ResourceKind::Segment, id)
}

/// Checks every read surface for one store; returns the number of items inspected.
pub fn check_no_leaks(rs: &RandomStore) -> Result<usize, String> {
    let snap = rs.engine.snapshot();
    let s = &snap.state;
    let mut seen = 0;
    let fail = |what: &str, user: &UserId, id: &dyn std::fmt::Display| Err(format!("{what} {id} leaked to {user}"));
    for r in s.all_resources() {
        for u in &rs.users {
            if s.can_view(u, &r) != oracle_can_view(s, u, &r) {
                return Err(format!("can_view disagrees with the lattice rule on {r} for {u}"));
            }
        }
    }
    for u in &rs.users {
        for x in s.list_segments(u) {
            seen += 1;
            if !oracle_can_view(s, u, &seg(&x.id)) {
                return fail("segment", u, &x.id);
            }
        }
        for x in s.list_bookmarks(u) {
            seen += 1;
            if !oracle_can_view(s, u, &ResourceRef::new(ResourceKind::Bookmark, &x.id)) {
                return fail("bookmark", u, &x.id);
            }
        }
        for x in s.list_ontologies(u) {
            seen += 1;
            if !oracle_can_view(s, u, &ResourceRef::new(ResourceKind::Ontology, &x.id)) {
                return fail("ontology", u, &x.id);
            }
        }
        for x in s.list_graphs(u) {
            seen += 1;
            if !oracle_can_view(s, u, &ResourceRef::new(ResourceKind::Graph, &x.id)) {
                return fail("graph", u, &x.id);
            }
        }
        for x in s.list_schemas(u) {
            seen += 1;
            if !oracle_can_view(s, u, &ResourceRef::new(ResourceKind::Schema, &x.id)) {
                return fail("schema", u, &x.id);
            }
        }
        for x in s.list_paths(u) {
            seen += 1;
            if !oracle_can_view(s, u, &ResourceRef::new(ResourceKind::Path, &x.id)) {
                return fail("path", u, &x.id);
            }
        }
        let visible_annotation = |a: &archivist_core::annotation::Annotation| {
            let body = match &a.body {
                AnnotationBody::Theme { ontology_id, .. } => Some(ResourceRef::new(ResourceKind::Ontology, ontology_id)),
                AnnotationBody::Graph { graph_id } => Some(ResourceRef::new(ResourceKind::Graph, graph_id)),
                AnnotationBody::Viewpoint(v) => Some(ResourceRef::new(ResourceKind::Schema, &v.schema_id)),
                AnnotationBody::Note { .. } => None,
            };
            !a.deleted
                && body.is_none_or(|b| oracle_can_view(s, u, &b))
                && oracle_can_view(s, u, &ResourceRef::new(ResourceKind::Annotation, &a.id))
                && s.target_segment(&a.target).is_ok_and(|sg| oracle_can_view(s, u, &seg(&sg.id)))
        };
        for sg in s.segments.values() {
            if let Ok(list) = s.list_annotations(&AnnotationTarget::segment(sg.id.clone()), u) {
                for a in list {
                    seen += 1;
                    if !visible_annotation(a) {
                        return fail("annotation", u, &a.id);
                    }
                }
            }
        }
        let mut hits = Vec::new();
        for w in WORDS {
            hits.extend(snap.keyword_search(w, u, None).map_err(|e| e.to_string())?);
        }
        let o = s.ontology(&rs.ontology).map_err(|e| e.to_string())?;
        if oracle_can_view(s, u, &ResourceRef::new(ResourceKind::Ontology, &rs.ontology)) {
            for t in o.themes.values() {
                hits.extend(snap.theme_search(&rs.ontology, t.id.as_str(), true, u).map_err(|e| e.to_string())?);
            }
            hits.extend(
                snap.graph_search(&rs.ontology, "[Thing]", u, archivist_core::congraph::DEFAULT_BUDGET)
                    .map_err(|e| e.to_string())?,
            );
        } else if snap.theme_search(&rs.ontology, "Thing", false, u).is_ok() {
            return fail("ontology search", u, &rs.ontology);
        }
        for h in &hits {
            seen += 1;
            if let Some(sid) = &h.segment_id {
                if !oracle_can_view(s, u, &seg(sid)) {
                    return fail("segment hit", u, sid);
                }
            }
            for a in &h.matched_annotation_ids {
                if !visible_annotation(&s.annotations[a.as_str()]) {
                    return fail("annotation hit", u, a);
                }
            }
        }
        for p in snap.montage_search(u) {
            seen += 1;
            if !oracle_can_view(s, u, &ResourceRef::new(ResourceKind::Path, &p.id)) {
                return fail("path", u, &p.id);
            }
        }
    }
    Ok(seen)
}

fn viewers(rs: &RandomStore, r: &ResourceRef) -> BTreeSet<UserId> {
    let s = &rs.engine.snapshot().state;
    rs.users.iter().filter(|u| s.can_view(u, r)).cloned().collect()
}

/// Walks every resource up the lattice private → group → public and checks
/// that viewer sets only grow.
pub fn check_raising(rs: &RandomStore) -> Result<usize, String> {
    let mut steps = 0;
    let resources = rs.engine.snapshot().state.all_resources();
    for r in resources {
        let (owner, _) = raw_guard(&rs.engine.snapshot().state, &r).unwrap();
        let group = rs
            .engine
            .snapshot()
            .state
            .workspaces
            .values()
            .find(|w| w.members.contains(&owner))
            .map(|w| w.id.clone());
        let mut ladder = vec![Visibility::Private];
        ladder.extend(group.map(Visibility::Group));
        ladder.push(Visibility::Public);
        let mut prev: Option<BTreeSet<UserId>> = None;
        for v in ladder {
            rs.engine
                .commit_one(Op::SetVisibility { resource: r.clone(), visibility: v.clone(), by: owner.clone() })
                .map_err(|e| format!("set {r} to {v}: {e}"))?;
            let now = viewers(rs, &r);
            if let Some(p) = &prev {
                if !p.is_subset(&now) {
                    return Err(format!("raising {r} to {v} shrank viewers {p:?} -> {now:?}"));
                }
            }
            steps += 1;
            prev = Some(now);
        }
    }
    Ok(steps)
}
