//! Theme ontologies: an is-a DAG of categorized themes rooted at `Thing`,
//! plus typed binary relation types with domain/range signatures.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{OntologyId, RelationTypeId, ThemeId, UserId};
use crate::workspace::Visibility;

pub const ROOT_NAME: &str = "Thing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThemeCategory {
    Notional,
    Rhetorical,
    Contextual,
}

impl FromStr for ThemeCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "notional" => Ok(ThemeCategory::Notional),
            "rhetorical" => Ok(ThemeCategory::Rhetorical),
            "contextual" => Ok(ThemeCategory::Contextual),
            _ => Err(Error::Validation(format!("unknown theme category `{s}`"))),
        }
    }
}

impl fmt::Display for ThemeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThemeCategory::Notional => "notional",
            ThemeCategory::Rhetorical => "rhetorical",
            ThemeCategory::Contextual => "contextual",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationCategory {
    Classification,
    PracticalInference,
    EpistemicInference,
    ModalisationGrading,
    Localization,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 5] = [
        RelationCategory::Classification,
        RelationCategory::PracticalInference,
        RelationCategory::EpistemicInference,
        RelationCategory::ModalisationGrading,
        RelationCategory::Localization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationCategory::Classification => "classification",
            RelationCategory::PracticalInference => "practical_inference",
            RelationCategory::EpistemicInference => "epistemic_inference",
            RelationCategory::ModalisationGrading => "modalisation_grading",
            RelationCategory::Localization => "localization",
        }
    }
}

impl FromStr for RelationCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelationCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown relation category `{s}`")))
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub id: ThemeId,
    pub name: String,
    pub category: ThemeCategory,
    pub definition: String,
    pub parents: BTreeSet<ThemeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub id: RelationTypeId,
    pub name: String,
    pub category: RelationCategory,
    pub definition: String,
    pub domain: ThemeId,
    pub range: ThemeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeOntology {
    pub id: OntologyId,
    pub name: String,
    pub root: ThemeId,
    pub themes: BTreeMap<ThemeId, Theme>,
    pub relations: BTreeMap<RelationTypeId, RelationType>,
    pub owner: UserId,
    pub visibility: Visibility,
    pub created_at: DateTime<Utc>,
}

/// Input for [`ThemeOntology::add_theme`]. Parents are names or ids; an
/// empty list means "child of the root".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewTheme {
    pub name: String,
    pub category: ThemeCategory,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewRelation {
    pub name: String,
    pub category: RelationCategory,
    #[serde(default)]
    pub definition: String,
    /// Theme name or id; defaults to the root.
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default)]
    pub range: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum OntologyViolation {
    MissingRoot,
    RootHasParents,
    EmptyName { theme: ThemeId },
    DuplicateThemeName { name: String },
    DanglingParent { theme: ThemeId, parent: ThemeId },
    Orphan { theme: ThemeId },
    Cycle { themes: Vec<ThemeId> },
    DuplicateRelationName { name: String },
    DanglingSignature { relation: RelationTypeId, theme: ThemeId },
}

impl fmt::Display for OntologyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OntologyViolation::MissingRoot => f.write_str("root theme missing"),
            OntologyViolation::RootHasParents => f.write_str("root theme has parents"),
            OntologyViolation::EmptyName { theme } => write!(f, "theme {theme} has an empty name"),
            OntologyViolation::DuplicateThemeName { name } => write!(f, "theme name `{name}` used twice"),
            OntologyViolation::DanglingParent { theme, parent } => {
                write!(f, "theme {theme} references missing parent {parent}")
            }
            OntologyViolation::Orphan { theme } => write!(f, "theme {theme} has no parent"),
            OntologyViolation::Cycle { themes } => {
                let names: Vec<&str> = themes.iter().map(|t| t.as_str()).collect();
                write!(f, "is-a cycle through {}", names.join(", "))
            }
            OntologyViolation::DuplicateRelationName { name } => {
                write!(f, "relation name `{name}` used twice")
            }
            OntologyViolation::DanglingSignature { relation, theme } => {
                write!(f, "relation {relation} signature references missing theme {theme}")
            }
        }
    }
}

/// Names usable in the linear graph syntax: a letter followed by letters,
/// digits or underscores.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic())
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn check_name(name: &str) -> Result<()> {
    if is_valid_name(name) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "`{name}` is not a valid name (letter first, then letters, digits or `_`)"
        )))
    }
}

impl ThemeOntology {
    pub fn new(
        id: OntologyId,
        name: impl Into<String>,
        root: ThemeId,
        owner: UserId,
        created_at: DateTime<Utc>,
    ) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::Validation("ontology name is empty".into()));
        }
        let mut themes = BTreeMap::new();
        themes.insert(
            root.clone(),
            Theme {
                id: root.clone(),
                name: ROOT_NAME.into(),
                category: ThemeCategory::Notional,
                definition: "Top theme; subsumes every other theme.".into(),
                parents: BTreeSet::new(),
            },
        );
        Ok(Self {
            id,
            name,
            root,
            themes,
            relations: BTreeMap::new(),
            owner,
            visibility: Visibility::Private,
            created_at,
        })
    }

    pub fn theme(&self, id: &ThemeId) -> Option<&Theme> {
        self.themes.get(id)
    }

    pub fn theme_named(&self, name: &str) -> Option<&Theme> {
        self.themes.values().find(|t| t.name == name)
    }

    /// Looks a theme up by id first, then by name.
    pub fn resolve_theme(&self, key: &str) -> Result<&Theme> {
        self.themes
            .get(&ThemeId::new(key))
            .or_else(|| self.theme_named(key))
            .ok_or_else(|| Error::UnknownTheme(key.to_owned()))
    }

    pub fn relation(&self, id: &RelationTypeId) -> Option<&RelationType> {
        self.relations.get(id)
    }

    pub fn relation_named(&self, name: &str) -> Option<&RelationType> {
        self.relations.values().find(|r| r.name == name)
    }

    pub fn resolve_relation(&self, key: &str) -> Result<&RelationType> {
        self.relations
            .get(&RelationTypeId::new(key))
            .or_else(|| self.relation_named(key))
            .ok_or_else(|| Error::UnknownRelation(key.to_owned()))
    }

    pub fn add_theme(&mut self, id: ThemeId, spec: NewTheme) -> Result<ThemeId> {
        check_name(&spec.name)?;
        if self.theme_named(&spec.name).is_some() {
            return Err(Error::DuplicateName(spec.name));
        }
        let mut parents = BTreeSet::new();
        for key in &spec.parents {
            if key == &spec.name || key == id.as_str() {
                return Err(Error::Cycle(format!("theme `{}` cannot be its own parent", spec.name)));
            }
            parents.insert(self.resolve_theme(key)?.id.clone());
        }
        if parents.is_empty() {
            parents.insert(self.root.clone());
        }
        self.themes.insert(
            id.clone(),
            Theme {
                id: id.clone(),
                name: spec.name,
                category: spec.category,
                definition: spec.definition,
                parents,
            },
        );
        Ok(id)
    }

    /// Adds an extra is-a link `theme` → `parent`.
    pub fn add_parent(&mut self, theme: &str, parent: &str) -> Result<()> {
        let theme = self.resolve_theme(theme)?.id.clone();
        let parent = self.resolve_theme(parent)?.id.clone();
        if theme == self.root {
            return Err(Error::Validation("the root theme cannot have parents".into()));
        }
        if self.subsumes(&theme, &parent) {
            return Err(Error::Cycle(format!(
                "{} already subsumes {}",
                self.themes[&theme].name, self.themes[&parent].name
            )));
        }
        self.themes
            .get_mut(&theme)
            .expect("resolved above")
            .parents
            .insert(parent);
        Ok(())
    }

    pub fn add_relation_type(&mut self, id: RelationTypeId, spec: NewRelation) -> Result<RelationTypeId> {
        check_name(&spec.name)?;
        if self.relation_named(&spec.name).is_some() {
            return Err(Error::DuplicateName(spec.name));
        }
        let domain = match &spec.domain {
            Some(key) => self.resolve_theme(key)?.id.clone(),
            None => self.root.clone(),
        };
        let range = match &spec.range {
            Some(key) => self.resolve_theme(key)?.id.clone(),
            None => self.root.clone(),
        };
        self.relations.insert(
            id.clone(),
            RelationType {
                id: id.clone(),
                name: spec.name,
                category: spec.category,
                definition: spec.definition,
                domain,
                range,
            },
        );
        Ok(id)
    }

    /// Reflexive-transitive is-a closure: is `ancestor` reachable from
    /// `descendant` through parent links?
    pub fn subsumes(&self, ancestor: &ThemeId, descendant: &ThemeId) -> bool {
        if ancestor == descendant {
            return self.themes.contains_key(ancestor);
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([descendant]);
        while let Some(t) = queue.pop_front() {
            let Some(theme) = self.themes.get(t) else { continue };
            for p in &theme.parents {
                if p == ancestor {
                    return true;
                }
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        false
    }

    pub fn ancestors(&self, theme: &ThemeId) -> BTreeSet<ThemeId> {
        let mut out = BTreeSet::new();
        if !self.themes.contains_key(theme) {
            return out;
        }
        let mut queue = VecDeque::from([theme.clone()]);
        out.insert(theme.clone());
        while let Some(t) = queue.pop_front() {
            if let Some(th) = self.themes.get(&t) {
                for p in &th.parents {
                    if self.themes.contains_key(p) && out.insert(p.clone()) {
                        queue.push_back(p.clone());
                    }
                }
            }
        }
        out
    }

    pub fn children(&self) -> HashMap<&ThemeId, Vec<&ThemeId>> {
        let mut map: HashMap<&ThemeId, Vec<&ThemeId>> = HashMap::new();
        for t in self.themes.values() {
            for p in &t.parents {
                map.entry(p).or_default().push(&t.id);
            }
        }
        map
    }

    /// Every theme `theme` subsumes, itself included.
    pub fn descendants(&self, theme: &ThemeId) -> BTreeSet<ThemeId> {
        let mut out = BTreeSet::new();
        if !self.themes.contains_key(theme) {
            return out;
        }
        let children = self.children();
        let mut queue = VecDeque::from([theme]);
        out.insert(theme.clone());
        while let Some(t) = queue.pop_front() {
            for &c in children.get(t).map(Vec::as_slice).unwrap_or_default() {
                if out.insert(c.clone()) {
                    queue.push_back(c);
                }
            }
        }
        out
    }

    /// Length of the longest is-a chain from `theme` up to the root (root = 0).
    pub fn depth(&self, theme: &ThemeId) -> u32 {
        fn go<'a>(
            o: &'a ThemeOntology,
            t: &'a ThemeId,
            memo: &mut HashMap<&'a ThemeId, u32>,
            on_stack: &mut BTreeSet<&'a ThemeId>,
        ) -> u32 {
            if let Some(&d) = memo.get(t) {
                return d;
            }
            if !on_stack.insert(t) {
                return 0;
            }
            let d = o
                .themes
                .get(t)
                .map(|th| {
                    th.parents
                        .iter()
                        .filter(|p| o.themes.contains_key(*p))
                        .map(|p| go(o, p, memo, on_stack) + 1)
                        .max()
                        .unwrap_or(0)
                })
                .unwrap_or(0);
            on_stack.remove(t);
            memo.insert(t, d);
            d
        }
        go(self, theme, &mut HashMap::new(), &mut BTreeSet::new())
    }

    /// Kahn's algorithm over parent→child edges; `Err` carries the themes
    /// left on cycles.
    pub fn topological_order(&self) -> Result<Vec<ThemeId>, Vec<ThemeId>> {
        let mut indegree: BTreeMap<&ThemeId, usize> = self
            .themes
            .values()
            .map(|t| (&t.id, t.parents.iter().filter(|p| self.themes.contains_key(*p)).count()))
            .collect();
        let children = self.children();
        let mut ready: VecDeque<&ThemeId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&t, _)| t)
            .collect();
        let mut order = Vec::with_capacity(self.themes.len());
        while let Some(t) = ready.pop_front() {
            order.push(t.clone());
            let mut kids: Vec<&ThemeId> = children.get(t).cloned().unwrap_or_default();
            kids.sort();
            for c in kids {
                let d = indegree.get_mut(c).expect("child is a theme");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(c);
                }
            }
        }
        if order.len() == self.themes.len() {
            Ok(order)
        } else {
            Err(indegree
                .into_iter()
                .filter(|(_, d)| *d > 0)
                .map(|(t, _)| t.clone())
                .collect())
        }
    }

    pub fn validate(&self) -> Vec<OntologyViolation> {
        let mut out = Vec::new();
        match self.themes.get(&self.root) {
            None => out.push(OntologyViolation::MissingRoot),
            Some(r) if !r.parents.is_empty() => out.push(OntologyViolation::RootHasParents),
            Some(_) => {}
        }
        let mut names = BTreeSet::new();
        for t in self.themes.values() {
            if t.name.is_empty() {
                out.push(OntologyViolation::EmptyName { theme: t.id.clone() });
            } else if !names.insert(t.name.as_str()) {
                out.push(OntologyViolation::DuplicateThemeName { name: t.name.clone() });
            }
            if t.id != self.root && t.parents.is_empty() {
                out.push(OntologyViolation::Orphan { theme: t.id.clone() });
            }
            for p in &t.parents {
                if !self.themes.contains_key(p) {
                    out.push(OntologyViolation::DanglingParent {
                        theme: t.id.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }
        if let Err(themes) = self.topological_order() {
            out.push(OntologyViolation::Cycle { themes });
        }
        let mut rel_names = BTreeSet::new();
        for r in self.relations.values() {
            if !rel_names.insert(r.name.as_str()) {
                out.push(OntologyViolation::DuplicateRelationName { name: r.name.clone() });
            }
            for t in [&r.domain, &r.range] {
                if !self.themes.contains_key(t) {
                    out.push(OntologyViolation::DanglingSignature {
                        relation: r.id.clone(),
                        theme: t.clone(),
                    });
                }
            }
        }
        out
    }
}

/// A shipped starter ontology.
#[derive(Debug, Clone, Copy)]
pub struct OntologyTemplate {
    pub name: &'static str,
    pub ontology_name: &'static str,
    /// (name, category, definition, parent names)
    pub themes: &'static [(&'static str, ThemeCategory, &'static str, &'static [&'static str])],
    /// (name, category, definition, domain, range)
    pub relations: &'static [(&'static str, RelationCategory, &'static str, &'static str, &'static str)],
}

impl OntologyTemplate {
    pub fn theme_specs(&self) -> impl Iterator<Item = NewTheme> + '_ {
        self.themes.iter().map(|&(name, category, definition, parents)| NewTheme {
            name: name.into(),
            category,
            definition: definition.into(),
            parents: parents.iter().map(|p| p.to_string()).collect(),
        })
    }

    pub fn relation_specs(&self) -> impl Iterator<Item = NewRelation> + '_ {
        self.relations.iter().map(|&(name, category, definition, domain, range)| NewRelation {
            name: name.into(),
            category,
            definition: definition.into(),
            domain: Some(domain.into()),
            range: Some(range.into()),
        })
    }
}

use RelationCategory as R;
use ThemeCategory as T;

pub const ONTOLOGY_TEMPLATES: &[OntologyTemplate] = &[
    OntologyTemplate {
        name: "interview-rhetoric",
        ontology_name: "Interview scenes",
        themes: &[
            ("DiscourseActivity", T::Rhetorical, "What a speaker is doing while speaking.", &[]),
            ("Arguing", T::Rhetorical, "Supporting a claim with reasons.", &["DiscourseActivity"]),
            ("Describing", T::Rhetorical, "Depicting an object, state or situation.", &["DiscourseActivity"]),
            ("Narrating", T::Rhetorical, "Recounting a sequence of events.", &["DiscourseActivity"]),
            ("Refuting", T::Rhetorical, "Rejecting a claim with counter-reasons.", &["DiscourseActivity"]),
            ("Qualifying", T::Rhetorical, "Assessing existing or personal research.", &["DiscourseActivity"]),
            ("Confronting", T::Rhetorical, "Critically comparing research results.", &["DiscourseActivity"]),
            ("ResearchObject", T::Notional, "What the research is about.", &[]),
            ("Problem", T::Notional, "A question under discussion.", &["ResearchObject"]),
            ("Hypothesis", T::Notional, "A scientific affirmation put forward.", &["ResearchObject"]),
            ("ResearchResult", T::Notional, "An outcome of research.", &["ResearchObject"]),
            ("ResearchContext", T::Contextual, "History, tradition and resources of a research activity.", &[]),
            ("Genealogy", T::Contextual, "Historical filiation of a problem or object.", &["ResearchContext"]),
            ("Speaker", T::Contextual, "The person speaking in the recording.", &[]),
        ],
        relations: &[
            ("part_of", R::Classification, "Part-whole link.", "Thing", "Thing"),
            ("about", R::Classification, "Discourse activity bearing on an object.", "DiscourseActivity", "Thing"),
            ("performs", R::PracticalInference, "Agent carrying out an activity.", "Speaker", "DiscourseActivity"),
            ("supports", R::EpistemicInference, "Reasoning pattern backing a claim.", "Thing", "Thing"),
            ("prefers", R::ModalisationGrading, "Preferential pattern between items.", "Thing", "Thing"),
            ("precedes", R::Localization, "Temporal precedence.", "Thing", "Thing"),
        ],
    },
    OntologyTemplate {
        name: "industrialization-history",
        ontology_name: "Industrialization processes",
        themes: &[
            ("Industrialization", T::Notional, "Transition to industrial production.", &[]),
            ("WesternIndustrialization", T::Notional, "Industrialization in western Europe and North America.", &["Industrialization"]),
            ("SocialChange", T::Notional, "Transformation of social structures.", &[]),
            ("Actor", T::Notional, "Person or institution taking part in a process.", &[]),
            ("Historiography", T::Contextual, "How the history has been written.", &[]),
        ],
        relations: &[
            ("causes", R::PracticalInference, "Causal link.", "Thing", "Thing"),
            ("part_of", R::Classification, "Part-whole link.", "Thing", "Thing"),
            ("takes_part_in", R::PracticalInference, "Participation of an actor.", "Actor", "Thing"),
            ("analogous_to", R::EpistemicInference, "Analogical reasoning.", "Thing", "Thing"),
            ("during", R::Localization, "Temporal inclusion.", "Thing", "Thing"),
        ],
    },
];

pub fn ontology_template(name: &str) -> Result<&'static OntologyTemplate> {
    ONTOLOGY_TEMPLATES
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::not_found("ontology template", name))
}
