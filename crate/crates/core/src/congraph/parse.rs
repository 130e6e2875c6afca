//! Linear form reader.
//!
//! ```text
//! graph    := stmt (";" stmt)*
//! stmt     := concept (arc)*
//! concept  := "[" NAME (":" referent)? ("#" NODEID)? "]"
//! referent := "*" | DQUOTED_STRING
//! arc      := "-(" NAME ")->" concept
//! ```
//!
//! Whitespace is insignificant outside quoted strings. Inside quotes `\"`
//! and `\\` are the only escapes. A `#label` names a node so later mentions
//! can refer to it; unlabelled concepts get fresh `n<k>` labels in textual
//! order, skipping labels used explicitly anywhere in the text.

use std::collections::BTreeSet;

use super::{is_node_label, validate_graph, ConceptNode, ConceptualGraph, Referent, RelationArc};
use crate::error::{Error, Result};
use crate::ontology::ThemeOntology;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptSyntax {
    pub theme: String,
    pub referent: Option<Referent>,
    pub label: Option<String>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementSyntax {
    pub head: ConceptSyntax,
    /// (relation name, offset of the name, target concept)
    pub arcs: Vec<(String, usize, ConceptSyntax)>,
}

struct Reader<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error_at(&self, offset: usize, message: impl Into<String>) -> Error {
        syntax_error(self.src, offset, message)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn describe_here(&self) -> String {
        match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".into(),
        }
    }

    fn expect(&mut self, want: char) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.bump();
            Ok(())
        } else {
            Err(self.error_at(self.pos, format!("expected `{want}`, found {}", self.describe_here())))
        }
    }

    fn eat(&mut self, want: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn name(&mut self) -> Result<(String, usize)> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_alphabetic() => {}
            _ => return Err(self.error_at(start, format!("expected a name, found {}", self.describe_here()))),
        }
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.bump();
        }
        Ok((self.src[start..self.pos].to_owned(), start))
    }

    fn label(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.bump();
        }
        if start == self.pos {
            return Err(self.error_at(start, format!("expected a node label, found {}", self.describe_here())));
        }
        Ok(self.src[start..self.pos].to_owned())
    }

    fn quoted(&mut self) -> Result<String> {
        let open = self.pos;
        self.bump(); // opening quote
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error_at(open, "unterminated string")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some(c @ ('"' | '\\')) => out.push(c),
                    _ => return Err(self.error_at(self.pos.saturating_sub(1), "invalid escape; only \\\" and \\\\ are allowed")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn referent(&mut self) -> Result<Referent> {
        self.skip_ws();
        match self.peek() {
            Some('*') => {
                self.bump();
                Ok(Referent::Generic)
            }
            Some('"') => {
                let at = self.pos;
                let text = self.quoted()?;
                if text.is_empty() {
                    return Err(self.error_at(at, "individual referent must not be empty"));
                }
                Ok(Referent::Individual(text))
            }
            _ => Err(self.error_at(self.pos, format!("expected `*` or a quoted referent, found {}", self.describe_here()))),
        }
    }

    fn concept(&mut self) -> Result<ConceptSyntax> {
        self.skip_ws();
        let offset = self.pos;
        self.expect('[')?;
        let (theme, _) = self.name()?;
        let referent = if self.eat(':') { Some(self.referent()?) } else { None };
        let label = if self.eat('#') { Some(self.label()?) } else { None };
        self.expect(']')?;
        Ok(ConceptSyntax {
            theme,
            referent,
            label,
            offset,
        })
    }

    fn statement(&mut self) -> Result<StatementSyntax> {
        let head = self.concept()?;
        let mut arcs = Vec::new();
        while self.eat('-') {
            self.expect('(')?;
            let (rel, at) = self.name()?;
            self.expect(')')?;
            self.expect('-')?;
            self.expect('>')?;
            let target = self.concept()?;
            arcs.push((rel, at, target));
        }
        Ok(StatementSyntax { head, arcs })
    }
}

pub(crate) fn syntax_error(src: &str, offset: usize, message: impl Into<String>) -> Error {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().unwrap_or("").chars().count() + 1;
    Error::Syntax {
        offset,
        line,
        column,
        message: message.into(),
    }
}

/// Syntax-only pass.
pub fn parse_statements(src: &str) -> Result<Vec<StatementSyntax>> {
    let mut r = Reader { src, pos: 0 };
    let mut stmts = vec![r.statement()?];
    while r.eat(';') {
        stmts.push(r.statement()?);
    }
    r.skip_ws();
    if r.pos != src.len() {
        return Err(r.error_at(r.pos, format!("expected `;`, `-(` or end of input, found {}", r.describe_here())));
    }
    Ok(stmts)
}

/// Parses the linear form and binds it to `ontology`.
pub fn parse_graph(src: &str, ontology: &ThemeOntology) -> Result<ConceptualGraph> {
    let stmts = parse_statements(src)?;

    let explicit: BTreeSet<&str> = stmts
        .iter()
        .flat_map(|s| std::iter::once(&s.head).chain(s.arcs.iter().map(|a| &a.2)))
        .filter_map(|c| c.label.as_deref())
        .collect();

    let mut graph = ConceptualGraph::new(ontology.id.clone());
    let mut counter = 0usize;

    let mut bind = |c: &ConceptSyntax, graph: &mut ConceptualGraph| -> Result<String> {
        let theme = ontology
            .resolve_theme(&c.theme)
            .map_err(|_| Error::UnknownTheme(c.theme.clone()))?
            .id
            .clone();
        let referent = c.referent.clone().unwrap_or(Referent::Generic);
        let label = match &c.label {
            Some(l) => {
                debug_assert!(is_node_label(l));
                l.clone()
            }
            None => loop {
                counter += 1;
                let candidate = format!("n{counter}");
                if !explicit.contains(candidate.as_str()) && !graph.nodes.contains_key(&candidate) {
                    break candidate;
                }
            },
        };
        match graph.nodes.get(&label) {
            Some(existing) if existing.theme != theme || existing.referent != referent => Err(syntax_error(
                src,
                c.offset,
                format!("node #{label} is mentioned with a different theme or referent"),
            )),
            Some(_) => Ok(label),
            None => {
                graph.nodes.insert(
                    label.clone(),
                    ConceptNode {
                        id: label.clone(),
                        theme,
                        referent,
                    },
                );
                Ok(label)
            }
        }
    };

    for stmt in &stmts {
        let mut current = bind(&stmt.head, &mut graph)?;
        for (rel_name, _, target) in &stmt.arcs {
            let next = bind(target, &mut graph)?;
            let rel = ontology
                .relation_named(rel_name)
                .or_else(|| ontology.relation(&rel_name.as_str().into()))
                .ok_or_else(|| Error::UnknownRelation(rel_name.clone()))?;
            for (node, bound, side) in [(&current, &rel.domain, "domain"), (&next, &rel.range, "range")] {
                let theme = &graph.nodes[node].theme;
                if !ontology.subsumes(bound, theme) {
                    return Err(Error::Signature(format!(
                        "`{}` is outside the {side} `{}` of relation `{}`",
                        ontology.themes[theme].name, ontology.themes[bound].name, rel.name
                    )));
                }
            }
            graph.arcs.insert(RelationArc {
                relation: rel.id.clone(),
                source: current,
                target: next.clone(),
            });
            current = next;
        }
    }

    let violations = validate_graph(&graph, ontology);
    if !violations.is_empty() {
        return Err(Error::GraphInvalid(violations.iter().map(ToString::to_string).collect()));
    }
    Ok(graph)
}
