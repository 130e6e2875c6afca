//! Seeded generators and independent oracles shared by the integration
//! tests. Oracles never call the engine code they check: subsumption is a
//! closure over `parents`, projection is exhaustive enumeration, viewing
//! is the lattice rule restated over raw state.

#![allow(dead_code)]

/// `assert!` that returns `Err(String)` so checks can run outside proptest.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub mod checks;
pub mod crash;
pub mod leaks;

use std::collections::{BTreeMap, BTreeSet};

use archivist_core::annotation::AnnotationTarget;
use archivist_core::archive::{EventKind, MetadataRecord};
use archivist_core::congraph::{ConceptNode, ConceptualGraph, RelationArc, Referent};
use archivist_core::ontology::{NewRelation, NewTheme, RelationCategory, ThemeCategory, ThemeOntology};
use archivist_core::state::AttachBody;
use archivist_core::viewpoint::FeatureValue;
use archivist_core::workspace::{ResourceKind, ResourceRef, Visibility};
use archivist_core::{
    Engine, FixedStepClock, OntologyId, Op, RelationTypeId, State, ThemeId, UserId, WorkspaceId,
};
use chrono::{DateTime, Utc};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn epoch() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

pub fn fixture_text() -> &'static str {
    include_str!("../fixtures/interview.txt")
}

// ---- ontologies ------------------------------------------------------------

/// Root plus `n` themes `T0..`; each theme takes 0 to 2 parents among
/// earlier themes, so the is-a graph is a DAG. Relations `r0..` have the
/// root as domain and range, so every generated graph is well formed.
pub fn random_ontology(rng: &mut impl Rng, n: usize, relations: usize) -> ThemeOntology {
    let mut o = ThemeOntology::new(
        OntologyId::new("ont_r"),
        "random",
        ThemeId::new("thm_root"),
        UserId::new("u0"),
        epoch(),
    )
    .unwrap();
    for i in 0..n {
        let k = if i == 0 { 0 } else { rng.random_range(0..=2.min(i)) };
        let mut parents = BTreeSet::new();
        for _ in 0..k {
            parents.insert(format!("T{}", rng.random_range(0..i)));
        }
        o.add_theme(
            ThemeId::new(format!("thm_{i}")),
            NewTheme {
                name: format!("T{i}"),
                category: ThemeCategory::Notional,
                definition: String::new(),
                parents: parents.into_iter().collect(),
            },
        )
        .unwrap();
    }
    for i in 0..relations {
        o.add_relation_type(
            RelationTypeId::new(format!("rel_{i}")),
            NewRelation {
                name: format!("r{i}"),
                category: RelationCategory::PracticalInference,
                definition: String::new(),
                domain: None,
                range: None,
            },
        )
        .unwrap();
    }
    o
}

/// Reflexive-transitive closure of the parent links: theme → its ancestors
/// including itself.
pub fn ancestor_closure(o: &ThemeOntology) -> BTreeMap<ThemeId, BTreeSet<ThemeId>> {
    let mut out = BTreeMap::new();
    for id in o.themes.keys() {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id.clone()];
        while let Some(t) = stack.pop() {
            if seen.insert(t.clone()) {
                stack.extend(o.themes[&t].parents.iter().cloned());
            }
        }
        out.insert(id.clone(), seen);
    }
    out
}

// ---- graphs ----------------------------------------------------------------

pub const REFERENTS: &[&str] = &[
    "urbanization",
    "Lyon",
    "histoire croisée",
    "say \"hi\"",
    "back\\slash",
    "a; b -(x)-> [c]",
];

/// `1..=max_nodes` nodes `n1..` with random themes and referents, and up to
/// `max_arcs` random arcs (duplicates collapse).
pub fn random_graph(rng: &mut impl Rng, o: &ThemeOntology, max_nodes: usize, max_arcs: usize) -> ConceptualGraph {
    random_graph_with(rng, o, max_nodes, max_arcs, REFERENTS)
}

pub fn random_graph_with(
    rng: &mut impl Rng,
    o: &ThemeOntology,
    max_nodes: usize,
    max_arcs: usize,
    referents: &[&str],
) -> ConceptualGraph {
    let themes: Vec<&ThemeId> = o.themes.keys().collect();
    let relations: Vec<&RelationTypeId> = o.relations.keys().collect();
    let mut g = ConceptualGraph::new(o.id.clone());
    let n = rng.random_range(1..=max_nodes);
    for i in 1..=n {
        let id = format!("n{i}");
        let referent = if rng.random_bool(0.5) || referents.is_empty() {
            Referent::Generic
        } else {
            Referent::Individual(referents.choose(rng).unwrap().to_string())
        };
        g.nodes.insert(
            id.clone(),
            ConceptNode {
                id,
                theme: (*themes.choose(rng).unwrap()).clone(),
                referent,
            },
        );
    }
    if !relations.is_empty() {
        for _ in 0..rng.random_range(0..=max_arcs) {
            g.arcs.insert(RelationArc {
                relation: (*relations.choose(rng).unwrap()).clone(),
                source: format!("n{}", rng.random_range(1..=n)),
                target: format!("n{}", rng.random_range(1..=n)),
            });
        }
    }
    g
}

/// A query that projects into `t` by construction: a random subset of its
/// nodes with themes replaced by ancestors, some referents made generic and
/// some arcs dropped. With probability 0.3 one random arc is added, which
/// may break the match.
pub fn generalized_query(
    rng: &mut impl Rng,
    o: &ThemeOntology,
    t: &ConceptualGraph,
    closure: &BTreeMap<ThemeId, BTreeSet<ThemeId>>,
) -> ConceptualGraph {
    let mut q = ConceptualGraph::new(o.id.clone());
    let mut renamed = BTreeMap::new();
    for node in t.nodes.values() {
        if !renamed.is_empty() && rng.random_bool(0.4) {
            continue;
        }
        let id = format!("m{}", renamed.len() + 1);
        renamed.insert(node.id.clone(), id.clone());
        let ancestors: Vec<&ThemeId> = closure[&node.theme].iter().collect();
        let referent = if rng.random_bool(0.5) { Referent::Generic } else { node.referent.clone() };
        q.nodes.insert(id.clone(), ConceptNode { id, theme: (*ancestors.choose(rng).unwrap()).clone(), referent });
    }
    for arc in &t.arcs {
        if let (Some(s), Some(d)) = (renamed.get(&arc.source), renamed.get(&arc.target)) {
            if rng.random_bool(0.7) {
                q.arcs.insert(RelationArc { relation: arc.relation.clone(), source: s.clone(), target: d.clone() });
            }
        }
    }
    let relations: Vec<&RelationTypeId> = o.relations.keys().collect();
    let ids: Vec<String> = q.nodes.keys().cloned().collect();
    if !relations.is_empty() && rng.random_bool(0.3) {
        q.arcs.insert(RelationArc {
            relation: (*relations.choose(rng).unwrap()).clone(),
            source: ids.choose(rng).unwrap().clone(),
            target: ids.choose(rng).unwrap().clone(),
        });
    }
    q
}

/// Every total map from query nodes to target nodes that satisfies the
/// projection conditions, by exhaustive enumeration.
pub fn brute_force_projections(
    q: &ConceptualGraph,
    t: &ConceptualGraph,
    closure: &BTreeMap<ThemeId, BTreeSet<ThemeId>>,
) -> BTreeSet<BTreeMap<String, String>> {
    let ql: Vec<&String> = q.nodes.keys().collect();
    let tl: Vec<&String> = t.nodes.keys().collect();
    let mut out = BTreeSet::new();
    if tl.is_empty() {
        return out;
    }
    let mut digits = vec![0usize; ql.len()];
    loop {
        let map: BTreeMap<String, String> = ql
            .iter()
            .zip(&digits)
            .map(|(q, &d)| ((*q).clone(), tl[d].clone()))
            .collect();
        let nodes_ok = q.nodes.values().all(|qn| {
            let tn = &t.nodes[&map[&qn.id]];
            let theme_ok = closure[&tn.theme].contains(&qn.theme);
            let ref_ok = match &qn.referent {
                Referent::Generic => true,
                r => r == &tn.referent,
            };
            theme_ok && ref_ok
        });
        let arcs_ok = q.arcs.iter().all(|a| {
            t.arcs.contains(&RelationArc {
                relation: a.relation.clone(),
                source: map[&a.source].clone(),
                target: map[&a.target].clone(),
            })
        });
        if nodes_ok && arcs_ok {
            out.insert(map);
        }
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == digits.len() {
                return out;
            }
            digits[i] += 1;
            if digits[i] < tl.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

// ---- viewing ---------------------------------------------------------------

/// Owner and visibility of a resource, read from raw state.
pub fn raw_guard(s: &State, r: &ResourceRef) -> Option<(UserId, Visibility)> {
    let id = r.id.as_str();
    match r.kind {
        ResourceKind::Ontology => s.ontologies.get(id).map(|x| (x.owner.clone(), x.visibility.clone())),
        ResourceKind::Schema => s.schemas.get(id).map(|x| (x.owner.clone(), x.visibility.clone())),
        ResourceKind::Graph => s.graphs.get(id).map(|x| (x.owner.clone(), x.visibility.clone())),
        ResourceKind::Segment => s.segments.get(id).map(|x| (x.owner.clone(), x.visibility.clone())),
        ResourceKind::Bookmark => s.bookmarks.get(id).map(|x| (x.owner.clone(), x.visibility.clone())),
        ResourceKind::Path => s.paths.get(id).map(|x| (x.owner.clone(), x.visibility.clone())),
        ResourceKind::Annotation => s.annotations.get(id).map(|x| (x.author.clone(), x.visibility.clone())),
    }
}

/// The lattice rule: owner, public, or group with the user in the group's
/// workspace or in any workspace that references the resource.
pub fn oracle_can_view(s: &State, user: &UserId, r: &ResourceRef) -> bool {
    let Some((owner, vis)) = raw_guard(s, r) else { return false };
    if &owner == user {
        return true;
    }
    match vis {
        Visibility::Public => true,
        Visibility::Private => false,
        Visibility::Group(w) => {
            s.workspaces.get(w.as_str()).is_some_and(|ws| ws.members.contains(user))
                || s
                    .workspaces
                    .values()
                    .any(|ws| ws.resource_refs.contains(r) && ws.members.contains(user))
        }
    }
}

// ---- random stores ---------------------------------------------------------

pub const WORDS: &[&str] = &[
    "transfert culturel",
    "histoire croisée",
    "nation",
    "urbanization",
    "Werner",
    "genealogy",
    "argument",
    "CROISÉE",
];

pub struct RandomStore {
    pub engine: Engine,
    pub users: Vec<UserId>,
    pub ontology: OntologyId,
}

pub fn in_memory() -> Engine {
    Engine::in_memory(FixedStepClock::default())
}

fn random_vis(rng: &mut impl Rng, workspaces: &[WorkspaceId]) -> Visibility {
    match rng.random_range(0..3) {
        0 => Visibility::Private,
        1 if !workspaces.is_empty() => Visibility::Group(workspaces.choose(rng).unwrap().clone()),
        _ => Visibility::Public,
    }
}

fn commit_id(engine: &Engine, op: Op) -> Option<String> {
    engine.commit_one(op).ok().and_then(|a| a.id().map(String::from))
}

/// A store built from random ops across 4 users, up to 2 workspaces, one
/// random ontology, one event with segments, and theme, graph, note and
/// viewpoint annotations at random visibilities. Ops that the engine
/// rejects are simply skipped.
pub fn random_store(rng: &mut impl Rng, ops: usize) -> RandomStore {
    random_store_in(in_memory(), rng, ops)
}

pub fn random_store_in(engine: Engine, rng: &mut impl Rng, ops: usize) -> RandomStore {
    let users: Vec<UserId> = (0..4).map(|i| UserId::new(format!("u{i}"))).collect();
    for u in &users {
        engine
            .commit_one(Op::RegisterUser {
                user: u.clone(),
                display_name: u.to_string(),
            })
            .unwrap();
    }
    let mut workspaces = Vec::new();
    for i in 0..rng.random_range(1..=2) {
        let owner = users.choose(rng).unwrap().clone();
        let w = commit_id(&engine, Op::CreateWorkspace { name: format!("w{i}"), owner: owner.clone() }).unwrap();
        let w = WorkspaceId::new(w);
        for u in &users {
            if u != &owner && rng.random_bool(0.5) {
                engine
                    .commit_one(Op::AddMember {
                        workspace_id: w.clone(),
                        user: u.clone(),
                        by: owner.clone(),
                    })
                    .unwrap();
            }
        }
        workspaces.push(w);
    }

    let o_owner = users[0].clone();
    let ontology = OntologyId::new(
        commit_id(&engine, Op::CreateOntology { name: "topics".into(), owner: o_owner.clone() }).unwrap(),
    );
    let n_themes = rng.random_range(3..=8);
    for i in 0..n_themes {
        let parents = if i > 0 && rng.random_bool(0.6) {
            vec![format!("T{}", rng.random_range(0..i))]
        } else {
            vec![]
        };
        engine
            .commit_one(Op::AddTheme {
                ontology_id: ontology.clone(),
                theme: NewTheme {
                    name: format!("T{i}"),
                    category: ThemeCategory::Notional,
                    definition: String::new(),
                    parents,
                },
                by: o_owner.clone(),
            })
            .unwrap();
    }
    for i in 0..2 {
        engine
            .commit_one(Op::AddRelationType {
                ontology_id: ontology.clone(),
                relation: NewRelation {
                    name: format!("r{i}"),
                    category: RelationCategory::Localization,
                    definition: String::new(),
                    domain: None,
                    range: None,
                },
                by: o_owner.clone(),
            })
            .unwrap();
    }
    let _ = engine.commit_one(Op::SetVisibility {
        resource: ResourceRef::new(ResourceKind::Ontology, &ontology),
        visibility: Visibility::Public,
        by: o_owner.clone(),
    });
    let schema = commit_id(
        &engine,
        Op::LoadSchemaTemplate {
            template: "segment-analysis".into(),
            owner: o_owner.clone(),
        },
    )
    .unwrap();

    let mut meta = MetadataRecord::new("Schema_Entretien");
    for (name, w) in ["Mots clés", "Lieu"].iter().zip(WORDS.choose_multiple(rng, 2)) {
        meta = meta.with(*name, *w);
    }
    let event = commit_id(
        &engine,
        Op::RegisterEvent {
            kind: EventKind::Interview,
            metadata: meta,
            by: users[0].clone(),
        },
    )
    .unwrap();
    let asset = commit_id(
        &engine,
        Op::AddMediaAsset {
            event_id: event.as_str().into(),
            uri: "file:///a.mp4".into(),
            duration_ms: 3_600_000,
            format_label: "mp4".into(),
            by: users[0].clone(),
        },
    )
    .unwrap();

    let mut segments: Vec<String> = Vec::new();
    let mut graphs: Vec<String> = Vec::new();
    let mut annotations: Vec<String> = Vec::new();
    let theme_names: Vec<String> = (0..n_themes).map(|i| format!("T{i}")).collect();
    let ont = engine.snapshot().state.ontology(&ontology).unwrap().clone();

    for _ in 0..ops {
        let user = users.choose(rng).unwrap().clone();
        match rng.random_range(0..10) {
            0 | 1 => {
                let start = rng.random_range(0..3_000_000u64);
                let label = if rng.random_bool(0.5) { Some(WORDS.choose(rng).unwrap().to_string()) } else { None };
                if let Some(id) = commit_id(
                    &engine,
                    Op::CreateSegment {
                        asset_id: asset.as_str().into(),
                        start_ms: start,
                        end_ms: start + rng.random_range(1_000..600_000),
                        label,
                        owner: user.clone(),
                        visibility: random_vis(rng, &workspaces),
                    },
                ) {
                    segments.push(id);
                }
            }
            2 => {
                let mut g = random_graph_with(rng, &ont, 3, 3, WORDS);
                g.free_text = rng.random_bool(0.5).then(|| WORDS.choose(rng).unwrap().to_string());
                let text = archivist_core::congraph::print_graph(&g, &ont).unwrap();
                if let Some(id) = commit_id(
                    &engine,
                    Op::CreateGraph {
                        ontology_id: ontology.clone(),
                        text,
                        name: None,
                        free_text: g.free_text.clone(),
                        owner: user.clone(),
                        visibility: random_vis(rng, &workspaces),
                    },
                ) {
                    graphs.push(id);
                }
            }
            3..=6 if !segments.is_empty() => {
                let seg = segments.choose(rng).unwrap().clone();
                let target = if rng.random_bool(0.3) {
                    let s = engine.snapshot().state.segments[seg.as_str()].clone();
                    let from = rng.random_range(s.start_ms..s.end_ms);
                    AnnotationTarget::part(seg.as_str(), from, rng.random_range(from + 1..=s.end_ms))
                } else {
                    AnnotationTarget::segment(seg.as_str())
                };
                let body = match rng.random_range(0..4) {
                    0 => AttachBody::Theme {
                        ontology_id: ontology.clone(),
                        theme: theme_names.choose(rng).unwrap().clone(),
                    },
                    1 if !graphs.is_empty() => AttachBody::Graph {
                        graph_id: graphs.choose(rng).unwrap().as_str().into(),
                    },
                    2 => {
                        let mut values = BTreeMap::new();
                        values.insert("rhetorical_nature".into(), FeatureValue::Text("narration".into()));
                        values.insert("importance".into(), FeatureValue::Int(rng.random_range(1..=5)));
                        values.insert("added_value".into(), FeatureValue::Text(WORDS.choose(rng).unwrap().to_string()));
                        AttachBody::Viewpoint {
                            schema_id: schema.as_str().into(),
                            values,
                        }
                    }
                    _ => AttachBody::Note {
                        text: WORDS.choose(rng).unwrap().to_string(),
                    },
                };
                if let Some(id) = commit_id(
                    &engine,
                    Op::Attach {
                        target,
                        body,
                        author: user.clone(),
                        visibility: random_vis(rng, &workspaces),
                    },
                ) {
                    annotations.push(id);
                }
            }
            7 => {
                let all = engine.snapshot().state.all_resources();
                if let (Some(r), Some(w)) = (all.choose(rng), workspaces.choose(rng)) {
                    let owner = raw_guard(&engine.snapshot().state, r).unwrap().0;
                    let _ = engine.commit_one(Op::ShareResource {
                        workspace_id: w.clone(),
                        resource: r.clone(),
                        by: owner,
                    });
                }
            }
            8 => {
                let all = engine.snapshot().state.all_resources();
                if let Some(r) = all.choose(rng) {
                    let owner = raw_guard(&engine.snapshot().state, r).unwrap().0;
                    let _ = engine.commit_one(Op::SetVisibility {
                        resource: r.clone(),
                        visibility: random_vis(rng, &workspaces),
                        by: owner,
                    });
                }
            }
            9 if !annotations.is_empty() && rng.random_bool(0.3) => {
                let a = annotations.choose(rng).unwrap().clone();
                let author = engine.snapshot().state.annotations[a.as_str()].author.clone();
                let _ = engine.commit_one(Op::DeleteAnnotation {
                    annotation_id: a.as_str().into(),
                    by: author,
                });
            }
            _ => {
                let _ = engine.commit_one(Op::BookmarkEvent {
                    event_id: event.as_str().into(),
                    note: WORDS.choose(rng).unwrap().to_string(),
                    owner: user.clone(),
                    visibility: random_vis(rng, &workspaces),
                });
            }
        }
    }
    RandomStore {
        engine,
        users,
        ontology,
    }
}
