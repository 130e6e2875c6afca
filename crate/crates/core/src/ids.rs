//! Identifier newtypes.
//!
//! Engine-generated identifiers are `<prefix>_<10-digit counter>`: URL-safe
//! and lexicographically sortable by creation order. [`UserId`] is chosen by
//! whoever registers the user.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn new(raw: impl Into<String>) -> Self {
                Self(raw.into())
            }

            #[allow(dead_code)]
            pub(crate) fn from_counter(n: u64) -> Self {
                Self(format!("{}_{:010}", $prefix, n))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        // Sound: Eq, Ord and Hash are those of the inner string.
        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

id_type!(EventId, "evt");
id_type!(AssetId, "ast");
id_type!(SegmentId, "seg");
id_type!(ZoneId, "zon");
id_type!(OntologyId, "ont");
id_type!(ThemeId, "thm");
id_type!(RelationTypeId, "rel");
id_type!(GraphId, "cg");
id_type!(SchemaId, "vps");
id_type!(AnnotationId, "ann");
id_type!(BookmarkId, "bmk");
id_type!(WorkspaceId, "wsp");
id_type!(PathId, "pth");
id_type!(
    /// A principal. Not engine-generated.
    UserId,
    "usr"
);

/// Checks that a user-chosen identifier is non-empty and URL-safe.
pub fn is_url_safe(raw: &str) -> bool {
    !raw.is_empty()
        && raw.len() <= 128
        && raw
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}
