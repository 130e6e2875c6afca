//! Annotation engine for time-coded audiovisual archives.
//!
//! Events and their media assets are the base units. Users carve segments
//! and frame zones out of assets, build theme ontologies, describe scenes
//! with conceptual graphs, qualify segments with viewpoint formularies, and
//! compile described segments into navigable hyper-document manifests.
//!
//! All mutations are expressed as [`Op`] values and go through a single
//! writer ([`Engine::commit`]); the durable form is an append-only journal
//! plus optional snapshots ([`store`]). Readers work on immutable
//! [`Snapshot`]s.

pub mod annotation;
pub mod archive;
pub mod congraph;
pub mod engine;
pub mod error;
pub mod ids;
pub mod montage;
pub mod ontology;
pub mod search;
pub mod state;
pub mod store;
pub mod timecode;
pub mod viewpoint;
pub mod workspace;

pub use engine::{Clock, Engine, FixedStepClock, Snapshot, SystemClock};
pub use error::{Error, ErrorClass, Result};
pub use ids::*;
pub use state::{Applied, Op, State};
