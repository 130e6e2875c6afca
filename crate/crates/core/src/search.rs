//! The four access modes: keyword, theme, conceptual-graph projection and
//! montage listing.
//!
//! [`SearchIndex`] holds two derived structures, a trigram index over
//! lowercased keyword documents and a theme-to-annotation index. Both are
//! pure functions of the state: [`SearchIndex::build`] recomputes them and
//! [`SearchIndex::observe`] keeps them current op by op. Visibility is never
//! cached; it is checked against the state at query time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotation::{Annotation, AnnotationBody, AnnotationTarget};
use crate::congraph::{project, ConceptualGraph};
use crate::error::{Error, Result};
use crate::ids::{AnnotationId, EventId, OntologyId, SegmentId, ThemeId, UserId, WorkspaceId};
use crate::montage::PathSummary;
use crate::state::{Applied, Op, State};
use crate::viewpoint::free_text_values;
use crate::workspace::{ResourceKind, ResourceRef, Visibility, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub from_ms: u64,
    pub to_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Score {
    pub match_count: u64,
    /// Depth of the deepest matched theme; 0 when no theme matched.
    pub specificity: u32,
}

/// One result. Event-level hits (metadata matches) carry no segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchHit {
    pub event_id: EventId,
    pub segment_id: Option<SegmentId>,
    pub part: Option<Interval>,
    pub start_ms: u64,
    pub matched_annotation_ids: Vec<AnnotationId>,
    pub score: Score,
}

impl SearchHit {
    fn sort_key(&self) -> impl Ord + '_ {
        (
            std::cmp::Reverse(self.score.match_count),
            std::cmp::Reverse(self.score.specificity),
            self.start_ms,
            self.segment_id.as_ref().map_or(self.event_id.as_str(), SegmentId::as_str),
            self.part,
            &self.matched_annotation_ids,
        )
    }
}

/// Ranking: match count desc, specificity desc, start time asc, id asc.
pub fn rank(hits: &mut [SearchHit]) {
    hits.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DocKey {
    /// The n-th metadata value of an event.
    Event(EventId, usize),
    SegmentLabel(SegmentId),
    /// The n-th searchable text of an annotation.
    Annotation(AnnotationId, usize),
}

/// Searchable texts of an annotation: note text, attached theme name,
/// graph free text and individual referents, viewpoint free-text values.
pub fn annotation_texts(state: &State, a: &Annotation) -> Vec<String> {
    match &a.body {
        AnnotationBody::Note { text } => vec![text.clone()],
        AnnotationBody::Theme { theme_id, ontology_id } => state
            .ontologies
            .get(ontology_id)
            .and_then(|o| o.theme(theme_id))
            .map(|t| vec![t.name.clone()])
            .unwrap_or_default(),
        AnnotationBody::Graph { graph_id } => state
            .graphs
            .get(graph_id)
            .map(|g| {
                g.graph
                    .free_text
                    .iter()
                    .map(String::as_str)
                    .chain(g.graph.individual_referents())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default(),
        AnnotationBody::Viewpoint(v) => state
            .schemas
            .get(&v.schema_id)
            .map(|s| free_text_values(s, &v.values).map(String::from).collect())
            .unwrap_or_default(),
    }
}

fn trigrams(text: &str) -> BTreeSet<String> {
    let chars: Vec<char> = text.chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchIndex {
    docs: BTreeMap<DocKey, String>,
    grams: BTreeMap<String, BTreeSet<DocKey>>,
    by_theme: BTreeMap<(OntologyId, ThemeId), BTreeSet<AnnotationId>>,
}

impl SearchIndex {
    pub fn build(state: &State) -> Self {
        let mut index = Self::default();
        for id in state.events.keys() {
            index.add_event(state, id);
        }
        for id in state.segments.keys() {
            index.add_segment(state, id);
        }
        for a in state.annotations.values().filter(|a| !a.deleted) {
            index.add_annotation(state, a);
        }
        index
    }

    /// Folds one applied op into the index. `state` is the state after it.
    pub fn observe(&mut self, state: &State, op: &Op, applied: &Applied) {
        match (op, applied) {
            (_, Applied::Event(id)) => self.add_event(state, id),
            (_, Applied::Segment(id)) => self.add_segment(state, id),
            (_, Applied::Annotation(id)) => {
                if let Some(a) = state.annotations.get(id) {
                    self.add_annotation(state, a);
                }
            }
            (Op::DeleteAnnotation { annotation_id, .. }, _) => self.remove_annotation(annotation_id),
            _ => {}
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    fn add_doc(&mut self, key: DocKey, text: &str) {
        let lower = text.to_lowercase();
        for g in trigrams(&lower) {
            self.grams.entry(g).or_default().insert(key.clone());
        }
        self.docs.insert(key, lower);
    }

    fn remove_doc(&mut self, key: &DocKey) {
        if let Some(lower) = self.docs.remove(key) {
            for g in trigrams(&lower) {
                if let Some(set) = self.grams.get_mut(&g) {
                    set.remove(key);
                    if set.is_empty() {
                        self.grams.remove(&g);
                    }
                }
            }
        }
    }

    fn add_event(&mut self, state: &State, id: &EventId) {
        if let Some(e) = state.events.get(id) {
            for (i, f) in e.metadata.entries.iter().enumerate() {
                self.add_doc(DocKey::Event(id.clone(), i), &f.value);
            }
        }
    }

    fn add_segment(&mut self, state: &State, id: &SegmentId) {
        if let Some(label) = state.segments.get(id).and_then(|s| s.label.as_deref()) {
            self.add_doc(DocKey::SegmentLabel(id.clone()), label);
        }
    }

    fn add_annotation(&mut self, state: &State, a: &Annotation) {
        for (i, text) in annotation_texts(state, a).iter().enumerate() {
            self.add_doc(DocKey::Annotation(a.id.clone(), i), text);
        }
        if let AnnotationBody::Theme { theme_id, ontology_id } = &a.body {
            self.by_theme
                .entry((ontology_id.clone(), theme_id.clone()))
                .or_default()
                .insert(a.id.clone());
        }
    }

    fn remove_annotation(&mut self, id: &AnnotationId) {
        let keys: Vec<DocKey> = self
            .docs
            .range(DocKey::Annotation(id.clone(), 0)..=DocKey::Annotation(id.clone(), usize::MAX))
            .map(|(k, _)| k.clone())
            .collect();
        for k in &keys {
            self.remove_doc(k);
        }
        self.by_theme.retain(|_, set| {
            set.remove(id);
            !set.is_empty()
        });
    }

    /// Documents whose lowercased text contains `needle` (already lowercased).
    fn matching(&self, needle: &str) -> Vec<&DocKey> {
        let grams = trigrams(needle);
        if grams.is_empty() {
            return self.docs.iter().filter(|(_, t)| t.contains(needle)).map(|(k, _)| k).collect();
        }
        let mut postings: Vec<&BTreeSet<DocKey>> = Vec::with_capacity(grams.len());
        for g in &grams {
            match self.grams.get(g) {
                Some(p) => postings.push(p),
                None => return Vec::new(),
            }
        }
        postings.sort_by_key(|p| p.len());
        let (first, rest) = postings.split_first().expect("non-empty");
        first
            .iter()
            .filter(|k| rest.iter().all(|p| p.contains(*k)) && self.docs[*k].contains(needle))
            .collect()
    }

    fn annotations_with_theme(&self, ontology: &OntologyId, theme: &ThemeId) -> impl Iterator<Item = &AnnotationId> {
        self.by_theme
            .get(&(ontology.clone(), theme.clone()))
            .into_iter()
            .flatten()
    }
}

/// Whether `r` sits inside workspace `w`: group-visible to it or referenced by it.
fn in_workspace(state: &State, w: &Workspace, r: &ResourceRef) -> bool {
    w.resource_refs.contains(r)
        || state
            .guard(r)
            .is_ok_and(|g| matches!(g.visibility, Visibility::Group(id) if id == &w.id))
}

fn part_of(target: &AnnotationTarget) -> Option<Interval> {
    target.part_range().map(|(from_ms, to_ms)| Interval { from_ms, to_ms })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Unit {
    Event(EventId),
    Segment(SegmentId, Option<Interval>),
}

#[derive(Default)]
struct Group {
    count: u64,
    specificity: u32,
    annotations: BTreeSet<AnnotationId>,
}

/// Case-insensitive substring search over event metadata values, segment
/// labels and annotation texts. Hits group matches by event, or by segment
/// and part.
pub fn keyword_search(
    state: &State,
    index: &SearchIndex,
    text: &str,
    as_user: &UserId,
    scope: Option<&WorkspaceId>,
) -> Result<Vec<SearchHit>> {
    if text.trim().is_empty() {
        return Err(Error::Validation("keyword query is empty".into()));
    }
    let scope = match scope {
        Some(w) => {
            let ws = state.workspace(w)?;
            if !ws.members.contains(as_user) {
                return Err(Error::Access(format!("{as_user} is not a member of {w}")));
            }
            Some(ws)
        }
        None => None,
    };
    let needle = text.to_lowercase();
    let mut groups: BTreeMap<Unit, Group> = BTreeMap::new();

    for key in index.matching(&needle) {
        match key {
            DocKey::Event(event_id, _) => {
                if !state.events.contains_key(event_id) {
                    continue;
                }
                if let Some(ws) = scope {
                    let bookmarked = state.bookmarks.values().any(|b| {
                        &b.event_id == event_id
                            && in_workspace(state, ws, &ResourceRef::new(ResourceKind::Bookmark, &b.id))
                    });
                    if !bookmarked {
                        continue;
                    }
                }
                groups.entry(Unit::Event(event_id.clone())).or_default().count += 1;
            }
            DocKey::SegmentLabel(seg) => {
                if !state.can_view_segment(as_user, seg) {
                    continue;
                }
                if let Some(ws) = scope {
                    if !in_workspace(state, ws, &ResourceRef::new(ResourceKind::Segment, seg)) {
                        continue;
                    }
                }
                groups.entry(Unit::Segment(seg.clone(), None)).or_default().count += 1;
            }
            DocKey::Annotation(id, _) => {
                let Some(a) = state.annotations.get(id) else { continue };
                if !state.can_view_annotation(as_user, a) {
                    continue;
                }
                let Ok(seg) = state.target_segment(&a.target) else { continue };
                if let Some(ws) = scope {
                    let inside = in_workspace(state, ws, &ResourceRef::new(ResourceKind::Annotation, id))
                        || in_workspace(state, ws, &ResourceRef::new(ResourceKind::Segment, &seg.id));
                    if !inside {
                        continue;
                    }
                }
                let g = groups.entry(Unit::Segment(seg.id.clone(), part_of(&a.target))).or_default();
                g.count += 1;
                g.annotations.insert(id.clone());
                if let AnnotationBody::Theme { theme_id, ontology_id } = &a.body {
                    if let Some(o) = state.ontologies.get(ontology_id) {
                        g.specificity = g.specificity.max(o.depth(theme_id));
                    }
                }
            }
        }
    }

    let mut hits: Vec<SearchHit> = groups
        .into_iter()
        .filter_map(|(unit, g)| {
            let score = Score {
                match_count: g.count,
                specificity: g.specificity,
            };
            let matched_annotation_ids = g.annotations.into_iter().collect();
            Some(match unit {
                Unit::Event(event_id) => SearchHit {
                    event_id,
                    segment_id: None,
                    part: None,
                    start_ms: 0,
                    matched_annotation_ids,
                    score,
                },
                Unit::Segment(seg, part) => {
                    let s = state.segments.get(&seg)?;
                    SearchHit {
                        event_id: s.event_id.clone(),
                        start_ms: part.map_or(s.start_ms, |p| p.from_ms),
                        segment_id: Some(seg),
                        part,
                        matched_annotation_ids,
                        score,
                    }
                }
            })
        })
        .collect();
    rank(&mut hits);
    Ok(hits)
}

fn annotation_hit(state: &State, a: &Annotation, match_count: u64, specificity: u32) -> Option<SearchHit> {
    let seg = state.target_segment(&a.target).ok()?;
    let part = part_of(&a.target);
    Some(SearchHit {
        event_id: seg.event_id.clone(),
        segment_id: Some(seg.id.clone()),
        start_ms: part.map_or(seg.start_ms, |p| p.from_ms),
        part,
        matched_annotation_ids: vec![a.id.clone()],
        score: Score {
            match_count,
            specificity,
        },
    })
}

/// One hit per visible annotation attaching `theme`, or with `expand`,
/// any theme it subsumes.
pub fn theme_search(
    state: &State,
    index: &SearchIndex,
    theme: &ThemeId,
    ontology_id: &OntologyId,
    expand: bool,
    as_user: &UserId,
) -> Result<Vec<SearchHit>> {
    let ontology = state.ontology(ontology_id)?;
    if !state.can_view(as_user, &ResourceRef::new(ResourceKind::Ontology, ontology_id)) {
        return Err(Error::Access(format!("ontology {ontology_id} is not visible to {as_user}")));
    }
    if ontology.theme(theme).is_none() {
        return Err(Error::UnknownTheme(theme.to_string()));
    }
    let themes = if expand {
        ontology.descendants(theme)
    } else {
        BTreeSet::from([theme.clone()])
    };
    let mut hits = Vec::new();
    for t in &themes {
        let depth = ontology.depth(t);
        for id in index.annotations_with_theme(ontology_id, t) {
            let Some(a) = state.annotations.get(id) else { continue };
            if state.can_view_annotation(as_user, a) {
                hits.extend(annotation_hit(state, a, 1, depth));
            }
        }
    }
    rank(&mut hits);
    Ok(hits)
}

/// Graph annotations `as_user` may see, whose graph is visible too.
pub fn visible_graph_annotations<'a>(
    state: &'a State,
    as_user: &'a UserId,
) -> impl Iterator<Item = (&'a Annotation, &'a ConceptualGraph)> + 'a {
    state.annotations.values().filter_map(move |a| {
        let AnnotationBody::Graph { graph_id } = &a.body else { return None };
        let g = state.graphs.get(graph_id)?;
        state.can_view_annotation(as_user, a).then_some((a, &g.graph))
    })
}

/// One hit per visible graph annotation admitting at least one projection
/// of `query`; the match count is the number of projections. Graphs over
/// other ontologies never match.
pub fn graph_search(state: &State, query: &ConceptualGraph, as_user: &UserId, budget: u64) -> Result<Vec<SearchHit>> {
    let ontology = state.ontology(&query.ontology_id)?;
    if !state.can_view(as_user, &ResourceRef::new(ResourceKind::Ontology, &query.ontology_id)) {
        return Err(Error::Access(format!(
            "ontology {} is not visible to {as_user}",
            query.ontology_id
        )));
    }
    let mut hits = Vec::new();
    for (a, target) in visible_graph_annotations(state, as_user) {
        if target.ontology_id != query.ontology_id {
            continue;
        }
        let n = project(query, target, ontology, budget)?.len() as u64;
        if n > 0 {
            hits.extend(annotation_hit(state, a, n, 0));
        }
    }
    rank(&mut hits);
    Ok(hits)
}

/// Summaries of the navigation paths `as_user` may see, by id.
pub fn montage_search(state: &State, as_user: &UserId) -> Vec<PathSummary> {
    state.list_paths(as_user).into_iter().map(PathSummary::from).collect()
}
