//! Users, work spaces and the private / group / public visibility lattice.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{UserId, WorkspaceId};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Private,
    Group(WorkspaceId),
    Public,
}

impl Visibility {
    /// Position in the lattice: private < group < public.
    pub fn level(&self) -> u8 {
        match self {
            Visibility::Private => 0,
            Visibility::Group(_) => 1,
            Visibility::Public => 2,
        }
    }
}

impl fmt::Display for Visibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Visibility::Private => f.write_str("private"),
            Visibility::Group(w) => write!(f, "group:{w}"),
            Visibility::Public => f.write_str("public"),
        }
    }
}

impl FromStr for Visibility {
    type Err = Error;

    /// `private`, `public` or `group:<workspace id>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "private" => Ok(Visibility::Private),
            "public" => Ok(Visibility::Public),
            _ => match s.strip_prefix("group:") {
                Some(w) if !w.is_empty() => Ok(Visibility::Group(WorkspaceId::new(w))),
                _ => Err(Error::Validation(format!(
                    "visibility must be private, public or group:<workspace>, got `{s}`"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub display_name: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Ontology,
    Schema,
    Graph,
    Segment,
    Bookmark,
    Path,
    Annotation,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 7] = [
        ResourceKind::Ontology,
        ResourceKind::Schema,
        ResourceKind::Graph,
        ResourceKind::Segment,
        ResourceKind::Bookmark,
        ResourceKind::Path,
        ResourceKind::Annotation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceKind::Ontology => "ontology",
            ResourceKind::Schema => "schema",
            ResourceKind::Graph => "graph",
            ResourceKind::Segment => "segment",
            ResourceKind::Bookmark => "bookmark",
            ResourceKind::Path => "path",
            ResourceKind::Annotation => "annotation",
        }
    }
}

impl FromStr for ResourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ResourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown resource kind `{s}`")))
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResourceRef {
    pub kind: ResourceKind,
    pub id: String,
}

impl ResourceRef {
    pub fn new(kind: ResourceKind, id: impl ToString) -> Self {
        Self {
            kind,
            id: id.to_string(),
        }
    }
}

impl fmt::Display for ResourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub id: WorkspaceId,
    pub name: String,
    pub owner: UserId,
    pub members: BTreeSet<UserId>,
    pub resource_refs: BTreeSet<ResourceRef>,
    pub created_at: DateTime<Utc>,
}

/// Owner and visibility of one shareable resource.
#[derive(Debug, Clone, Copy)]
pub struct Guard<'a> {
    pub owner: &'a UserId,
    pub visibility: &'a Visibility,
}

/// The viewing rule. Owners always see their own resources. A group
/// resource is also visible to members of every work space it has been
/// shared into.
pub fn can_view(
    user: &UserId,
    guard: Guard<'_>,
    resource: &ResourceRef,
    workspaces: &BTreeMap<WorkspaceId, Workspace>,
) -> bool {
    if user == guard.owner {
        return true;
    }
    match guard.visibility {
        Visibility::Public => true,
        Visibility::Private => false,
        Visibility::Group(w) => {
            workspaces.get(w).is_some_and(|ws| ws.members.contains(user))
                || workspaces
                    .values()
                    .any(|ws| ws.members.contains(user) && ws.resource_refs.contains(resource))
        }
    }
}
