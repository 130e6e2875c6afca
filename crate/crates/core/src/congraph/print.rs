//! Canonical linear form.
//!
//! One statement per arc, arcs sorted by (relation name, source, target),
//! followed by every node not touched by an arc, sorted by label. Every
//! mention carries its label and full referent, so the output parses back
//! to the same structure.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{ConceptNode, ConceptualGraph, Referent};
use crate::error::{Error, Result};
use crate::ontology::ThemeOntology;

fn write_concept(out: &mut String, node: &ConceptNode, ontology: &ThemeOntology) -> Result<()> {
    let theme = ontology
        .theme(&node.theme)
        .ok_or_else(|| Error::UnknownTheme(node.theme.to_string()))?;
    out.push('[');
    out.push_str(&theme.name);
    if let Referent::Individual(text) = &node.referent {
        out.push_str(": \"");
        for c in text.chars() {
            if matches!(c, '"' | '\\') {
                out.push('\\');
            }
            out.push(c);
        }
        out.push('"');
    }
    let _ = write!(out, " #{}]", node.id);
    Ok(())
}

pub fn print_graph(graph: &ConceptualGraph, ontology: &ThemeOntology) -> Result<String> {
    let node = |label: &str| {
        graph
            .nodes
            .get(label)
            .ok_or_else(|| Error::GraphInvalid(vec![format!("arc endpoint `{label}` is not a node")]))
    };

    let mut arcs = Vec::with_capacity(graph.arcs.len());
    for arc in &graph.arcs {
        let rel = ontology
            .relation(&arc.relation)
            .ok_or_else(|| Error::UnknownRelation(arc.relation.to_string()))?;
        arcs.push((rel.name.as_str(), arc.source.as_str(), arc.target.as_str()));
    }
    arcs.sort_unstable();

    let mut statements = Vec::new();
    let mut touched = BTreeSet::new();
    for (rel, source, target) in arcs {
        let mut s = String::new();
        write_concept(&mut s, node(source)?, ontology)?;
        let _ = write!(s, "-({rel})->");
        write_concept(&mut s, node(target)?, ontology)?;
        statements.push(s);
        touched.insert(source);
        touched.insert(target);
    }
    for (label, n) in &graph.nodes {
        if !touched.contains(label.as_str()) {
            let mut s = String::new();
            write_concept(&mut s, n, ontology)?;
            statements.push(s);
        }
    }
    Ok(statements.join("; "))
}
