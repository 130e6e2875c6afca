//! Command line and HTTP surfaces over the archivist engine.
//!
//! Both surfaces build the same [`archivist_core::Op`] values from the
//! request types in [`requests`], so a workload driven through either one
//! reaches the same state.

pub mod api;
pub mod config;
pub mod requests;
pub mod cli;
pub mod render;
