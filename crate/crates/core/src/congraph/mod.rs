//! Conceptual graphs: concept nodes `[Theme: referent]` joined by oriented,
//! named relation arcs. A graph without individual referents describes a
//! scene type; an instantiated one describes a particular scene. The same
//! structure serves as a query through [`project`].

mod parse;
mod print;
mod project;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{GraphId, OntologyId, RelationTypeId, ThemeId, UserId};
use crate::ontology::ThemeOntology;
use crate::workspace::Visibility;

pub use parse::{parse_graph, parse_statements, ConceptSyntax, StatementSyntax};
pub use print::print_graph;
pub use project::{match_exists, project, Mapping, DEFAULT_BUDGET};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Referent {
    Generic,
    Individual(String),
}

impl Referent {
    pub fn is_generic(&self) -> bool {
        matches!(self, Referent::Generic)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptNode {
    pub id: String,
    pub theme: ThemeId,
    pub referent: Referent,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationArc {
    pub relation: RelationTypeId,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptualGraph {
    pub ontology_id: OntologyId,
    pub nodes: BTreeMap<String, ConceptNode>,
    pub arcs: BTreeSet<RelationArc>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub free_text: Option<String>,
}

impl ConceptualGraph {
    pub fn new(ontology_id: OntologyId) -> Self {
        Self {
            ontology_id,
            nodes: BTreeMap::new(),
            arcs: BTreeSet::new(),
            name: None,
            free_text: None,
        }
    }

    /// Nodes and arcs only; name and free text are ignored.
    pub fn same_structure(&self, other: &ConceptualGraph) -> bool {
        self.ontology_id == other.ontology_id && self.nodes == other.nodes && self.arcs == other.arcs
    }

    pub fn individual_referents(&self) -> impl Iterator<Item = &str> {
        self.nodes.values().filter_map(|n| match &n.referent {
            Referent::Individual(s) => Some(s.as_str()),
            Referent::Generic => None,
        })
    }
}

/// A stored, owned graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub id: GraphId,
    pub graph: ConceptualGraph,
    pub owner: UserId,
    pub visibility: Visibility,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum GraphViolation {
    WrongOntology { expected: OntologyId, found: OntologyId },
    Empty,
    NodeKeyMismatch { key: String, id: String },
    BadNodeId { node: String },
    UnknownTheme { node: String, theme: ThemeId },
    EmptyReferent { node: String },
    MissingEndpoint { node: String },
    UnknownRelation { relation: RelationTypeId },
    Signature { relation: String, node: String, side: SignatureSide },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureSide {
    Domain,
    Range,
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphViolation::WrongOntology { expected, found } => {
                write!(f, "graph bound to {found}, expected {expected}")
            }
            GraphViolation::Empty => f.write_str("graph has no concept node"),
            GraphViolation::NodeKeyMismatch { key, id } => write!(f, "node stored under `{key}` has id `{id}`"),
            GraphViolation::BadNodeId { node } => write!(f, "`{node}` is not a valid node label"),
            GraphViolation::UnknownTheme { node, theme } => write!(f, "node {node} uses unknown theme {theme}"),
            GraphViolation::EmptyReferent { node } => write!(f, "node {node} has an empty individual referent"),
            GraphViolation::MissingEndpoint { node } => write!(f, "arc endpoint `{node}` is not a node"),
            GraphViolation::UnknownRelation { relation } => write!(f, "unknown relation type {relation}"),
            GraphViolation::Signature { relation, node, side } => {
                let side = match side {
                    SignatureSide::Domain => "domain",
                    SignatureSide::Range => "range",
                };
                write!(f, "node {node} is outside the {side} of `{relation}`")
            }
        }
    }
}

pub(crate) fn is_node_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

/// Checks a graph against an ontology: node themes and relation types
/// exist, arc endpoints exist, and every arc respects its relation's
/// domain/range signature under subsumption.
pub fn validate_graph(graph: &ConceptualGraph, ontology: &ThemeOntology) -> Vec<GraphViolation> {
    let mut out = Vec::new();
    if graph.ontology_id != ontology.id {
        out.push(GraphViolation::WrongOntology {
            expected: ontology.id.clone(),
            found: graph.ontology_id.clone(),
        });
    }
    if graph.nodes.is_empty() {
        out.push(GraphViolation::Empty);
    }
    for (key, node) in &graph.nodes {
        if key != &node.id {
            out.push(GraphViolation::NodeKeyMismatch {
                key: key.clone(),
                id: node.id.clone(),
            });
        }
        if !is_node_label(&node.id) {
            out.push(GraphViolation::BadNodeId { node: node.id.clone() });
        }
        if ontology.theme(&node.theme).is_none() {
            out.push(GraphViolation::UnknownTheme {
                node: node.id.clone(),
                theme: node.theme.clone(),
            });
        }
        if matches!(&node.referent, Referent::Individual(s) if s.is_empty()) {
            out.push(GraphViolation::EmptyReferent { node: node.id.clone() });
        }
    }
    for arc in &graph.arcs {
        for end in [&arc.source, &arc.target] {
            if !graph.nodes.contains_key(end) {
                out.push(GraphViolation::MissingEndpoint { node: end.clone() });
            }
        }
        let Some(rel) = ontology.relation(&arc.relation) else {
            out.push(GraphViolation::UnknownRelation {
                relation: arc.relation.clone(),
            });
            continue;
        };
        let sides = [
            (&arc.source, &rel.domain, SignatureSide::Domain),
            (&arc.target, &rel.range, SignatureSide::Range),
        ];
        for (end, bound, side) in sides {
            if let Some(node) = graph.nodes.get(end) {
                if ontology.theme(&node.theme).is_some() && !ontology.subsumes(bound, &node.theme) {
                    out.push(GraphViolation::Signature {
                        relation: rel.name.clone(),
                        node: end.clone(),
                        side,
                    });
                }
            }
        }
    }
    out
}
