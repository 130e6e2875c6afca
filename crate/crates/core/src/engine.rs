//! The single-writer engine.
//!
//! Readers take an [`Arc<Snapshot>`] and never block on writers. A commit
//! clones the current state, applies the whole batch, appends it to the
//! journal with fsync, and only then publishes the new snapshot. A failing
//! op leaves both the journal and the published state untouched.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, TimeDelta, Utc};

use crate::congraph::{parse_graph, ConceptualGraph, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::ids::{OntologyId, PathId, UserId, WorkspaceId};
use crate::montage::{compile_manifest, HyperDocManifest, PathSummary};
use crate::search::{self, SearchHit, SearchIndex};
use crate::state::{Applied, Op, State};
use crate::store::{FailPoint, OpenReport, Store};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: `start`, then one `step` later on every call.
#[derive(Debug)]
pub struct FixedStepClock {
    start: DateTime<Utc>,
    step: TimeDelta,
    ticks: AtomicU64,
}

impl FixedStepClock {
    pub fn new(start: DateTime<Utc>, step: TimeDelta) -> Self {
        Self {
            start,
            step,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Default for FixedStepClock {
    fn default() -> Self {
        Self::new(DateTime::<Utc>::UNIX_EPOCH, TimeDelta::seconds(1))
    }
}

impl Clock for FixedStepClock {
    fn now(&self) -> DateTime<Utc> {
        let n = self.ticks.fetch_add(1, Ordering::Relaxed);
        self.start + self.step * n as i32
    }
}

/// One immutable published view: the state, its search index, and the
/// journal seq it reflects.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub state: State,
    pub index: SearchIndex,
    pub seq: u64,
}

/// What one commit produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Committed {
    /// First seq of the batch; 0 for in-memory engines.
    pub first_seq: u64,
    pub applied: Vec<Applied>,
}

struct Writer {
    store: Option<Store>,
    last_at: Option<DateTime<Utc>>,
}

pub struct Engine {
    writer: Mutex<Writer>,
    current: RwLock<Arc<Snapshot>>,
    clock: Box<dyn Clock>,
    budget: AtomicU64,
    report: OpenReport,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("seq", &self.snapshot().seq).finish_non_exhaustive()
    }
}

impl Engine {
    /// A volatile engine with no journal.
    pub fn in_memory(clock: impl Clock + 'static) -> Self {
        Self::from_parts(None, State::default(), OpenReport::default(), Box::new(clock))
    }

    pub fn open(dir: &Path, clock: impl Clock + 'static) -> Result<Self> {
        Self::open_with(dir, clock, FailPoint::None)
    }

    pub fn open_with(dir: &Path, clock: impl Clock + 'static, fail: FailPoint) -> Result<Self> {
        let (store, state, report) = Store::open_with(dir, fail)?;
        Ok(Self::from_parts(Some(store), state, report, Box::new(clock)))
    }

    fn from_parts(store: Option<Store>, state: State, report: OpenReport, clock: Box<dyn Clock>) -> Self {
        let seq = store.as_ref().map_or(0, Store::seq);
        let index = SearchIndex::build(&state);
        Self {
            writer: Mutex::new(Writer {
                store,
                last_at: report.last_at,
            }),
            current: RwLock::new(Arc::new(Snapshot { state, index, seq })),
            clock,
            budget: AtomicU64::new(DEFAULT_BUDGET),
            report,
        }
    }

    pub fn open_report(&self) -> &OpenReport {
        &self.report
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Candidate-assignment budget for graph projection.
    pub fn budget(&self) -> u64 {
        self.budget.load(Ordering::Relaxed)
    }

    pub fn set_budget(&self, budget: u64) {
        self.budget.store(budget, Ordering::Relaxed);
    }

    fn lock_writer(&self) -> std::sync::MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn publish(&self, snap: Snapshot) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snap);
    }

    /// Applies `ops` all-or-nothing. Every op of the batch gets the same
    /// timestamp, never earlier than any previous commit's.
    pub fn commit(&self, ops: Vec<Op>) -> Result<Committed> {
        let mut w = self.lock_writer();
        let base = self.snapshot();
        let now = self.clock.now();
        let at = w.last_at.map_or(now, |last| now.max(last));

        let mut state = base.state.clone();
        let mut index = base.index.clone();
        let mut applied = Vec::with_capacity(ops.len());
        for op in &ops {
            let a = state.apply(at, op)?;
            index.observe(&state, op, &a);
            applied.push(a);
        }

        let (first_seq, seq) = match w.store.as_mut() {
            Some(store) => {
                let first = store.append(at, &ops)?;
                (first, store.seq())
            }
            None => (0, 0),
        };
        w.last_at = Some(at);
        self.publish(Snapshot { state, index, seq });
        Ok(Committed { first_seq, applied })
    }

    pub fn commit_one(&self, op: Op) -> Result<Applied> {
        Ok(self.commit(vec![op])?.applied.remove(0))
    }

    /// Writes a snapshot of the published state. In-memory engines have
    /// nowhere to write and report a validation error.
    pub fn write_snapshot(&self) -> Result<PathBuf> {
        let w = self.lock_writer();
        let store = w
            .store
            .as_ref()
            .ok_or_else(|| Error::Validation("an in-memory engine has no store to snapshot".into()))?;
        store.write_snapshot(&self.snapshot().state)
    }

    /// Recomputes the search index from the state.
    pub fn rebuild_indexes(&self) {
        let _w = self.lock_writer();
        let base = self.snapshot();
        self.publish(Snapshot {
            index: SearchIndex::build(&base.state),
            state: base.state.clone(),
            seq: base.seq,
        });
    }
}

impl Snapshot {
    pub fn keyword_search(&self, text: &str, as_user: &UserId, scope: Option<&WorkspaceId>) -> Result<Vec<SearchHit>> {
        search::keyword_search(&self.state, &self.index, text, as_user, scope)
    }

    /// `theme` is a theme id or name.
    pub fn theme_search(
        &self,
        ontology_id: &OntologyId,
        theme: &str,
        expand: bool,
        as_user: &UserId,
    ) -> Result<Vec<SearchHit>> {
        let theme = self.state.ontology(ontology_id)?.resolve_theme(theme)?.id.clone();
        search::theme_search(&self.state, &self.index, &theme, ontology_id, expand, as_user)
    }

    pub fn parse_graph(&self, ontology_id: &OntologyId, text: &str) -> Result<ConceptualGraph> {
        parse_graph(text, self.state.ontology(ontology_id)?)
    }

    pub fn graph_search(
        &self,
        ontology_id: &OntologyId,
        query: &str,
        as_user: &UserId,
        budget: u64,
    ) -> Result<Vec<SearchHit>> {
        let q = self.parse_graph(ontology_id, query)?;
        search::graph_search(&self.state, &q, as_user, budget)
    }

    pub fn montage_search(&self, as_user: &UserId) -> Vec<PathSummary> {
        search::montage_search(&self.state, as_user)
    }

    pub fn compile_manifest(&self, path_id: &PathId, as_user: &UserId) -> Result<HyperDocManifest> {
        compile_manifest(&self.state, path_id, as_user)
    }
}
