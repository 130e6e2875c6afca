//! Projection of a query graph into a target graph.
//!
//! A projection sends every query node to a target node so that the query
//! theme subsumes the target theme, a generic query referent accepts any
//! target referent while an individual one demands the identical string,
//! and every query arc lands on a target arc with the same relation type.
//! Distinct query nodes may share a target node.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{validate_graph, ConceptualGraph, Referent};
use crate::error::{Error, Result};
use crate::ids::RelationTypeId;
use crate::ontology::ThemeOntology;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Query node label → target node label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mapping(pub BTreeMap<String, String>);

impl Mapping {
    pub fn get(&self, query_node: &str) -> Option<&str> {
        self.0.get(query_node).map(String::as_str)
    }

    /// Target labels in query-node order.
    pub fn targets(&self) -> Vec<&str> {
        self.0.values().map(String::as_str).collect()
    }
}

struct Problem<'a> {
    query_labels: Vec<&'a str>,
    target_labels: Vec<&'a str>,
    candidates: Vec<Vec<usize>>,
    /// Arcs to check once query node `i` is assigned: (relation, source idx, target idx).
    checks: Vec<Vec<(&'a RelationTypeId, usize, usize)>>,
    target_arcs: HashSet<(&'a RelationTypeId, usize, usize)>,
}

fn prepare<'a>(
    query: &'a ConceptualGraph,
    target: &'a ConceptualGraph,
    ontology: &ThemeOntology,
) -> Result<Problem<'a>> {
    if query.ontology_id != target.ontology_id || query.ontology_id != ontology.id {
        return Err(Error::OntologyMismatch);
    }
    for g in [query, target] {
        let v = validate_graph(g, ontology);
        if !v.is_empty() {
            return Err(Error::GraphInvalid(v.iter().map(ToString::to_string).collect()));
        }
    }

    let query_labels: Vec<&str> = query.nodes.keys().map(String::as_str).collect();
    let target_labels: Vec<&str> = target.nodes.keys().map(String::as_str).collect();
    let qidx = |l: &str| query_labels.binary_search(&l).expect("validated endpoint");
    let tidx = |l: &str| target_labels.binary_search(&l).expect("validated endpoint");

    let candidates = query
        .nodes
        .values()
        .map(|q| {
            target
                .nodes
                .values()
                .enumerate()
                .filter(|(_, t)| {
                    ontology.subsumes(&q.theme, &t.theme)
                        && match &q.referent {
                            Referent::Generic => true,
                            r @ Referent::Individual(_) => &t.referent == r,
                        }
                })
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let mut checks = vec![Vec::new(); query_labels.len()];
    for arc in &query.arcs {
        let (s, t) = (qidx(&arc.source), qidx(&arc.target));
        checks[s.max(t)].push((&arc.relation, s, t));
    }
    let target_arcs = target
        .arcs
        .iter()
        .map(|a| (&a.relation, tidx(&a.source), tidx(&a.target)))
        .collect();

    Ok(Problem {
        query_labels,
        target_labels,
        candidates,
        checks,
        target_arcs,
    })
}

impl Problem<'_> {
    /// Depth-first enumeration in lexicographic order of target indices.
    /// `visit` returns `false` to stop early.
    fn search(&self, budget: u64, mut visit: impl FnMut(&[usize]) -> bool) -> Result<()> {
        let n = self.query_labels.len();
        let mut assignment = vec![0usize; n];
        let mut cursor = vec![0usize; n];
        let mut spent = 0u64;
        let mut depth = 0usize;
        if n == 0 {
            visit(&assignment);
            return Ok(());
        }
        loop {
            if cursor[depth] == self.candidates[depth].len() {
                if depth == 0 {
                    return Ok(());
                }
                cursor[depth] = 0;
                depth -= 1;
                continue;
            }
            let candidate = self.candidates[depth][cursor[depth]];
            cursor[depth] += 1;
            spent += 1;
            if spent > budget {
                return Err(Error::Budget { budget });
            }
            assignment[depth] = candidate;
            let consistent = self.checks[depth]
                .iter()
                .all(|&(rel, s, t)| self.target_arcs.contains(&(rel, assignment[s], assignment[t])));
            if !consistent {
                continue;
            }
            if depth + 1 == n {
                if !visit(&assignment) {
                    return Ok(());
                }
            } else {
                depth += 1;
            }
        }
    }

    fn mapping(&self, assignment: &[usize]) -> Mapping {
        Mapping(
            self.query_labels
                .iter()
                .zip(assignment)
                .map(|(q, &t)| ((*q).to_owned(), self.target_labels[t].to_owned()))
                .collect(),
        )
    }
}

/// All projections of `query` into `target`, ordered by the sequence of
/// target labels taken in query-label order.
pub fn project(
    query: &ConceptualGraph,
    target: &ConceptualGraph,
    ontology: &ThemeOntology,
    budget: u64,
) -> Result<Vec<Mapping>> {
    let problem = prepare(query, target, ontology)?;
    let mut out = Vec::new();
    problem.search(budget, |a| {
        out.push(problem.mapping(a));
        true
    })?;
    Ok(out)
}

pub fn match_exists(
    query: &ConceptualGraph,
    target: &ConceptualGraph,
    ontology: &ThemeOntology,
    budget: u64,
) -> Result<bool> {
    let problem = prepare(query, target, ontology)?;
    let mut found = false;
    problem.search(budget, |_| {
        found = true;
        false
    })?;
    Ok(found)
}
