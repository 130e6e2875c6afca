//! Crash-safety checks: a journal workload with multi-op batches, every
//! prefix of it reopened, and snapshots aborted before their rename.

use std::fs;
use std::path::Path;

use archivist_core::search::SearchIndex;
use archivist_core::store::{read_journal, FailPoint, JournalRecord, JOURNAL_FILE, SNAPSHOT_DIR};
use archivist_core::workspace::Visibility;
use archivist_core::{Engine, FixedStepClock, Op, State, UserId};
use rand::seq::IndexedRandom;

use super::*;

/// Builds a journal of at least `min_ops` records with single and
/// multi-op batches. Returns the final live state.
pub fn build_workload(dir: &Path, seed: u64, min_ops: u64) -> State {
    let engine = Engine::open(dir, FixedStepClock::default()).unwrap();
    let mut r = rng(seed);
    let rs = random_store_in(engine, &mut r, 0);
    let mut round = 0;
    while rs.engine.snapshot().seq < min_ops {
        round += 1;
        let u = rs.users[round % rs.users.len()].clone();
        rs.engine
            .commit(vec![
                Op::CreateWorkspace { name: format!("batch{round}"), owner: u.clone() },
                Op::CreatePath { name: format!("tour{round}"), owner: u.clone() },
                Op::CreateOntology { name: format!("o{round}"), owner: u },
            ])
            .unwrap();
        random_store_ops(&rs, &mut r, 15);
    }
    rs.engine.snapshot().state.clone()
}

/// More random single-op commits on an existing store; returns how many applied.
fn random_store_ops(rs: &RandomStore, r: &mut impl rand::Rng, n: usize) -> usize {
    let mut ok = 0;
    for i in 0..n {
        let u = rs.users.choose(r).unwrap().clone();
        let snap = rs.engine.snapshot();
        let op = match i % 3 {
            0 => Op::BookmarkEvent {
                event_id: snap.state.events.keys().next().unwrap().clone(),
                note: WORDS.choose(r).unwrap().to_string(),
                owner: u,
                visibility: Visibility::Public,
            },
            1 => Op::CreateSegment {
                asset_id: snap.state.assets.keys().next().unwrap().clone(),
                start_ms: r.random_range(0..1_000_000),
                end_ms: r.random_range(1_000_000..2_000_000),
                label: Some(WORDS.choose(r).unwrap().to_string()),
                owner: u,
                visibility: Visibility::Private,
            },
            _ => match snap.state.segments.keys().last() {
                Some(seg) => Op::Attach {
                    target: archivist_core::annotation::AnnotationTarget::segment(seg.clone()),
                    body: archivist_core::state::AttachBody::Note { text: WORDS.choose(r).unwrap().to_string() },
                    author: snap.state.segments[seg].owner.clone(),
                    visibility: Visibility::Public,
                },
                None => continue,
            },
        };
        ok += rs.engine.commit_one(op).is_ok() as usize;
    }
    ok
}

/// Folds records batch by batch; returns the state after each complete
/// batch keyed by its last seq.
pub fn states_by_batch(records: &[JournalRecord]) -> Vec<(u64, State)> {
    let mut out = vec![(0, State::default())];
    let mut state = State::default();
    for rec in records {
        state.apply(rec.payload.at, &rec.payload.op).unwrap();
        let (first, len) = rec.payload.batch;
        if rec.seq == first + len - 1 {
            out.push((rec.seq, state.clone()));
        }
    }
    out
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to.join(SNAPSHOT_DIR)).unwrap();
    for entry in fs::read_dir(from.join(SNAPSHOT_DIR)).unwrap() {
        let e = entry.unwrap();
        fs::copy(e.path(), to.join(SNAPSHOT_DIR).join(e.file_name())).unwrap();
    }
}

/// Opens `journal` (plus any snapshots in `base`) in a fresh directory and
/// checks it against the expected per-batch states.
fn check_prefix(base: &Path, journal: &[u8], expected: &[(u64, State)], complete_records: u64) -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(base, dir.path());
    fs::write(dir.path().join(JOURNAL_FILE), journal).unwrap();
    let engine = Engine::open(dir.path(), FixedStepClock::default()).map_err(|e| format!("open failed: {e}"))?;
    let snap = engine.snapshot();
    let (seq, want) = expected.iter().rev().find(|(s, _)| *s <= complete_records).unwrap();
    if snap.seq != *seq {
        return Err(format!("reopened at seq {} but last complete batch ends at {seq}", snap.seq));
    }
    if &snap.state != want {
        return Err(format!("state after reopen differs from batch state at seq {seq}"));
    }
    let broken = snap.state.check_invariants();
    if !broken.is_empty() {
        return Err(format!("invariants broken: {broken:?}"));
    }
    if snap.index != SearchIndex::build(&snap.state) {
        return Err("index differs from rebuild".into());
    }
    // The store stays writable after truncation, and the write survives.
    engine
        .commit_one(Op::RegisterUser { user: UserId::new("late"), display_name: "late".into() })
        .map_err(|e| format!("append after reopen: {e}"))?;
    drop(engine);
    let again = Engine::open(dir.path(), FixedStepClock::default()).map_err(|e| e.to_string())?;
    if again.snapshot().state.user(&UserId::new("late")).is_err() {
        return Err("append after reopen was lost".into());
    }
    Ok(())
}

/// Every whole-line prefix and every half-written last line. Returns the
/// number of prefixes checked.
pub fn check_every_prefix(dir: &Path) -> Result<usize, String> {
    let bytes = fs::read(dir.join(JOURNAL_FILE)).unwrap();
    let records = read_journal(dir).unwrap();
    let expected = states_by_batch(&records);
    let mut ends = vec![0usize];
    ends.extend(bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1));
    let mut checked = 0;
    for (k, &end) in ends.iter().enumerate() {
        check_prefix(dir, &bytes[..end], &expected, k as u64).map_err(|e| format!("prefix of {k} lines: {e}"))?;
        checked += 1;
        if let Some(&next) = ends.get(k + 1) {
            let torn = end + (next - end) / 2;
            check_prefix(dir, &bytes[..torn], &expected, k as u64)
                .map_err(|e| format!("prefix of {k} lines plus a torn line: {e}"))?;
            checked += 1;
        }
    }
    Ok(checked)
}

/// Snapshot, more commits, then a snapshot that dies before its rename.
/// Reopening must give the latest committed state from the old snapshot
/// plus the journal, with no temp file left behind.
pub fn check_snapshot_abort(seed: u64) -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    build_workload(dir.path(), seed, 60);
    {
        let engine = Engine::open(dir.path(), FixedStepClock::default()).unwrap();
        engine.write_snapshot().map_err(|e| e.to_string())?;
    }
    let engine = Engine::open_with(dir.path(), FixedStepClock::default(), FailPoint::BeforeSnapshotRename).unwrap();
    let rs_user = engine.snapshot().state.users.keys().next().unwrap().clone();
    engine.commit_one(Op::CreateWorkspace { name: "after".into(), owner: rs_user }).unwrap();
    let before = engine.snapshot().state.clone();
    let snaps_before: Vec<_> = fs::read_dir(dir.path().join(SNAPSHOT_DIR)).unwrap().map(|e| e.unwrap().file_name()).collect();
    if engine.write_snapshot().is_ok() {
        return Err("failpoint did not abort the snapshot".into());
    }
    drop(engine);
    let reopened = Engine::open(dir.path(), FixedStepClock::default()).map_err(|e| e.to_string())?;
    if reopened.snapshot().state != before {
        return Err("state after aborted snapshot differs".into());
    }
    if reopened.open_report().snapshot_seq.is_none() {
        return Err("previous snapshot was not used".into());
    }
    let snaps_after: Vec<_> = fs::read_dir(dir.path().join(SNAPSHOT_DIR)).unwrap().map(|e| e.unwrap().file_name()).collect();
    if snaps_after != snaps_before {
        return Err(format!("snapshot dir changed: {snaps_before:?} -> {snaps_after:?}"));
    }
    if !reopened.snapshot().state.check_invariants().is_empty() {
        return Err("invariants broken".into());
    }
    Ok(())
}
