//! Durable form: an append-only line-delimited JSON journal plus optional
//! snapshots.
//!
//! Directory layout:
//!
//! ```text
//! <dir>/journal.jsonl
//! <dir>/snapshots/snapshot-<as_of_seq, 12 digits>.json
//! ```
//!
//! A journal line is `{"seq":N,"kind":"...","payload":{...},"crc32":"hex"}`
//! with the checksum taken over `{"seq":N,"kind":"...","payload":{...}}`.
//! Sequence numbers are dense from 1. Every op of a committed batch carries
//! `[first_seq, len]`; a batch missing its tail is discarded on open, so
//! commits are all-or-nothing across crashes.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::state::{Op, State};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Crash injection for tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FailPoint {
    #[default]
    None,
    /// Stop after the snapshot temp file is written, before the rename.
    BeforeSnapshotRename,
    /// Write only part of the next journal append, then stop.
    TornJournalAppend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalPayload {
    /// `[first seq of the batch, number of ops in it]`.
    pub batch: (u64, u64),
    pub at: DateTime<Utc>,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JournalRecord {
    pub seq: u64,
    pub kind: String,
    pub payload: JournalPayload,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OpenReport {
    pub snapshot_seq: Option<u64>,
    /// Records applied on top of the snapshot (or from scratch).
    pub replayed: u64,
    pub last_seq: u64,
    pub last_at: Option<DateTime<Utc>>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct SnapshotOut<'a> {
    as_of_seq: u64,
    state: &'a State,
}

#[derive(Deserialize)]
struct SnapshotIn {
    as_of_seq: u64,
    state: State,
}

#[derive(Deserialize)]
struct RawRecord<'a> {
    seq: u64,
    kind: String,
    #[serde(borrow)]
    payload: &'a RawValue,
    crc32: String,
}

fn checksummed_body(seq: u64, kind_json: &str, payload_json: &str) -> String {
    format!(r#"{{"seq":{seq},"kind":{kind_json},"payload":{payload_json}}}"#)
}

/// One journal line, newline included.
pub fn encode_record(seq: u64, payload: &JournalPayload) -> Result<String> {
    let kind_json = serde_json::to_string(payload.op.kind())?;
    let payload_json = serde_json::to_string(payload)?;
    let crc = crc32fast::hash(checksummed_body(seq, &kind_json, &payload_json).as_bytes());
    Ok(format!(
        "{{\"seq\":{seq},\"kind\":{kind_json},\"payload\":{payload_json},\"crc32\":\"{crc:08x}\"}}\n"
    ))
}

/// Parses and verifies one line (without its newline).
pub fn decode_record(line: &str) -> std::result::Result<JournalRecord, String> {
    let raw: RawRecord<'_> = serde_json::from_str(line).map_err(|e| format!("unparseable record: {e}"))?;
    let kind_json = serde_json::to_string(&raw.kind).map_err(|e| e.to_string())?;
    let crc = crc32fast::hash(checksummed_body(raw.seq, &kind_json, raw.payload.get()).as_bytes());
    if format!("{crc:08x}") != raw.crc32 {
        return Err(format!("checksum mismatch at seq {}", raw.seq));
    }
    let payload: JournalPayload =
        serde_json::from_str(raw.payload.get()).map_err(|e| format!("bad payload at seq {}: {e}", raw.seq))?;
    if payload.op.kind() != raw.kind {
        return Err(format!("kind `{}` disagrees with its op at seq {}", raw.kind, raw.seq));
    }
    Ok(JournalRecord {
        seq: raw.seq,
        kind: raw.kind,
        payload,
    })
}

fn sync_dir(dir: &Path) {
    // Directory fsync is unsupported on some platforms; durability of the
    // file contents themselves does not depend on it.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

/// Writes through a sibling temp file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    sync_dir(dir);
    Ok(())
}

pub fn snapshot_name(seq: u64) -> String {
    format!("snapshot-{seq:012}.json")
}

fn snapshot_seq(name: &str) -> Option<u64> {
    name.strip_prefix("snapshot-")?.strip_suffix(".json")?.parse().ok()
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    journal: File,
    journal_len: u64,
    seq: u64,
    fail: FailPoint,
    poisoned: bool,
}

impl Store {
    pub fn open(dir: &Path) -> Result<(Store, State, OpenReport)> {
        Self::open_with(dir, FailPoint::None)
    }

    /// Opens or creates a store, replaying the journal on top of the newest
    /// usable snapshot. Damaged journal tails are cut off and reported.
    pub fn open_with(dir: &Path, fail: FailPoint) -> Result<(Store, State, OpenReport)> {
        fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
        let journal_path = dir.join(JOURNAL_FILE);
        let mut report = OpenReport::default();

        let bytes = match fs::read(&journal_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let (records, valid_len) = scan_journal(&bytes, &mut report.warnings);

        let journal = OpenOptions::new().create(true).read(true).append(true).open(&journal_path)?;
        if valid_len < bytes.len() as u64 {
            journal.set_len(valid_len)?;
            journal.sync_all()?;
        }
        sync_dir(dir);

        let last_seq = records.last().map_or(0, |r| r.seq);
        let (mut state, from_seq) = match load_snapshot(dir, last_seq, &mut report.warnings) {
            Some((seq, state)) => {
                report.snapshot_seq = Some(seq);
                (state, seq)
            }
            None => (State::default(), 0),
        };
        for r in records.iter().filter(|r| r.seq > from_seq) {
            state
                .apply(r.payload.at, &r.payload.op)
                .map_err(|e| Error::Corrupt(format!("journal seq {} no longer applies: {e}", r.seq)))?;
            report.replayed += 1;
        }
        report.last_seq = last_seq;
        report.last_at = records.last().map(|r| r.payload.at);

        let store = Store {
            dir: dir.to_path_buf(),
            journal,
            journal_len: valid_len,
            seq: last_seq,
            fail,
            poisoned: false,
        };
        Ok((store, state, report))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Last durable sequence number.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Appends one batch and fsyncs before returning its first seq.
    pub fn append(&mut self, at: DateTime<Utc>, ops: &[Op]) -> Result<u64> {
        if self.poisoned {
            return Err(Error::Io("store is unusable after a failed append; reopen it".into()));
        }
        if ops.is_empty() {
            return Ok(self.seq + 1);
        }
        let first = self.seq + 1;
        let mut buf = String::new();
        for (i, op) in ops.iter().enumerate() {
            let payload = JournalPayload {
                batch: (first, ops.len() as u64),
                at,
                op: op.clone(),
            };
            buf.push_str(&encode_record(first + i as u64, &payload)?);
        }
        let bytes = buf.as_bytes();
        if self.fail == FailPoint::TornJournalAppend {
            self.poisoned = true;
            let _ = self.journal.write_all(&bytes[..bytes.len() / 2]);
            let _ = self.journal.sync_data();
            return Err(Error::Io("injected crash during journal append".into()));
        }
        let written = self.journal.write_all(bytes).and_then(|_| self.journal.sync_data());
        if let Err(e) = written {
            // Roll back to the last acknowledged length; if even that fails
            // the reopen path will discard the torn tail.
            if self.journal.set_len(self.journal_len).is_err() {
                self.poisoned = true;
            }
            return Err(e.into());
        }
        self.journal_len += bytes.len() as u64;
        self.seq += ops.len() as u64;
        Ok(first)
    }

    /// Writes `state` as the snapshot for the current seq.
    pub fn write_snapshot(&self, state: &State) -> Result<PathBuf> {
        let json = serde_json::to_vec(&SnapshotOut {
            as_of_seq: self.seq,
            state,
        })?;
        let dir = self.dir.join(SNAPSHOT_DIR);
        let path = dir.join(snapshot_name(self.seq));
        if self.fail == FailPoint::BeforeSnapshotRename {
            let tmp = dir.join(format!(".{}.tmp", snapshot_name(self.seq)));
            let mut f = File::create(&tmp)?;
            f.write_all(&json)?;
            f.sync_all()?;
            return Err(Error::Io("injected crash before snapshot rename".into()));
        }
        write_atomic(&path, &json)?;
        Ok(path)
    }
}

/// Valid records and the byte length they occupy. Stops at the first bad
/// line and drops a trailing incomplete batch.
fn scan_journal(bytes: &[u8], warnings: &mut Vec<String>) -> (Vec<JournalRecord>, u64) {
    let mut records: Vec<JournalRecord> = Vec::new();
    // byte offset at which each record starts
    let mut starts: Vec<usize> = Vec::new();
    let mut offset = 0usize;
    let mut valid_end = 0usize;

    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            warnings.push(format!(
                "journal ends in a partial record after seq {}; truncated {} bytes",
                records.last().map_or(0, |r| r.seq),
                bytes.len() - offset
            ));
            break;
        };
        let line = &bytes[offset..offset + nl];
        let expected = records.last().map_or(1, |r| r.seq + 1);
        let decoded = std::str::from_utf8(line)
            .map_err(|_| "record is not UTF-8".to_string())
            .and_then(decode_record)
            .and_then(|r| {
                if r.seq == expected {
                    Ok(r)
                } else {
                    Err(format!("expected seq {expected}, found {}", r.seq))
                }
            });
        match decoded {
            Ok(r) => {
                starts.push(offset);
                records.push(r);
                offset += nl + 1;
                valid_end = offset;
            }
            Err(why) => {
                warnings.push(format!(
                    "journal record {expected} is damaged ({why}); truncated to seq {}",
                    expected - 1
                ));
                break;
            }
        }
    }

    // Batch atomicity: the last batch must be complete.
    if let Some(last) = records.last() {
        let (first, len) = last.payload.batch;
        let start = (first.clamp(1, last.seq) - 1) as usize;
        let complete = first >= 1
            && len >= 1
            && last.seq == first + len - 1
            && records[start..].iter().all(|r| r.payload.batch == (first, len));
        if !complete {
            warnings.push(format!(
                "journal ends inside the batch starting at seq {first}; truncated to seq {start}"
            ));
            valid_end = starts[start];
            records.truncate(start);
        }
    }
    (records, valid_end as u64)
}

/// Newest snapshot not ahead of the journal that parses cleanly.
fn load_snapshot(dir: &Path, last_seq: u64, warnings: &mut Vec<String>) -> Option<(u64, State)> {
    let snap_dir = dir.join(SNAPSHOT_DIR);
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(&snap_dir).ok()?.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".tmp") {
            let _ = fs::remove_file(entry.path());
            continue;
        }
        if let Some(seq) = snapshot_seq(&name) {
            found.push((seq, entry.path()));
        }
    }
    found.sort();
    for (seq, path) in found.into_iter().rev() {
        if seq > last_seq {
            // Its history is gone from the journal. Set it aside so later
            // appends reaching its seq never load a divergent state.
            let stale = path.with_extension("json.stale");
            let moved = fs::rename(&path, &stale).is_ok();
            warnings.push(format!(
                "snapshot {} is ahead of the journal (seq {last_seq}); {}",
                path.display(),
                if moved { format!("moved to {}", stale.display()) } else { "ignored".into() }
            ));
            continue;
        }
        let parsed = fs::read(&path)
            .map_err(|e| e.to_string())
            .and_then(|b| serde_json::from_slice::<SnapshotIn>(&b).map_err(|e| e.to_string()));
        match parsed {
            Ok(s) if s.as_of_seq == seq => return Some((seq, s.state)),
            Ok(s) => warnings.push(format!(
                "snapshot {} claims seq {}; ignored",
                path.display(),
                s.as_of_seq
            )),
            Err(e) => warnings.push(format!("snapshot {} unreadable ({e}); ignored", path.display())),
        }
    }
    None
}

/// All valid records of a store directory, for inspection and tests.
pub fn read_journal(dir: &Path) -> Result<Vec<JournalRecord>> {
    let bytes = match fs::read(dir.join(JOURNAL_FILE)) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    Ok(scan_journal(&bytes, &mut Vec::new()).0)
}
