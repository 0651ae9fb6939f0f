//! Append-only, hash-chained event journal.
//!
//! File layout: one header line, then one canonical record per line. A
//! record's canonical form is compact JSON with keys sorted and every integer
//! written as a decimal string. Its `hash` is SHA-256 over the canonical form
//! of the record without the `hash` key; `prev_hash` links to the previous
//! record, or to 32 zero bytes for the first one.
//!
//! Readers accept only byte-exact canonical lines, so any single changed
//! byte either breaks parsing, breaks canonical form, or breaks the chain.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::event::{LedgerEvent, Op};
use crate::ledger::{Ledger, LedgerError};
use crate::types::Seq;

pub const FORMAT: &str = "credito-journal";
pub const VERSION: u32 = 1;
pub const HASH_ALG: &str = "sha256";
pub const HEADER: &str = r#"{"format":"credito-journal","version":1,"hash_alg":"sha256"}"#;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("sequence conflict: {0}")]
    SequenceConflict(String),
    #[error("bad journal header: {0}")]
    BadHeader(String),
    #[error("corrupt chain at seq {seq}: {reason}")]
    CorruptChain { seq: u64, reason: String },
    #[error("journal truncated inside record {seq}")]
    TruncatedFile { seq: u64 },
    #[error("record {seq} verifies but is rejected by the ledger: {source}")]
    Rejected { seq: u64, source: LedgerError },
}

impl JournalError {
    pub fn code(&self) -> &'static str {
        match self {
            JournalError::StorageFailure(_) => "STORAGE_FAILURE",
            JournalError::SequenceConflict(_) => "SEQUENCE_CONFLICT",
            JournalError::BadHeader(_) => "BAD_HEADER",
            JournalError::CorruptChain { .. } => "CORRUPT_CHAIN",
            JournalError::TruncatedFile { .. } => "TRUNCATED_FILE",
            JournalError::Rejected { .. } => "REJECTED_RECORD",
        }
    }
}

/// 32-byte SHA-256 digest, written as lowercase hex.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const GENESIS: Digest = Digest([0; 32]);

    pub fn of(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Digest(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalRecord {
    #[serde(flatten)]
    pub event: LedgerEvent,
    pub prev_hash: Digest,
    pub hash: Digest,
}

/// Writes `value` as compact JSON with object keys sorted bytewise.
pub fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn canonical_string<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("journal types serialize to JSON");
    let mut out = String::new();
    write_canonical(&v, &mut out);
    out
}

fn seal_digest(event: &LedgerEvent, prev_hash: Digest) -> Digest {
    let mut v = serde_json::to_value(event).expect("events serialize to JSON");
    v.as_object_mut()
        .expect("event is an object")
        .insert("prev_hash".into(), Value::String(prev_hash.to_string()));
    let mut bytes = String::new();
    write_canonical(&v, &mut bytes);
    Digest::of(bytes.as_bytes())
}

impl JournalRecord {
    pub fn seal(event: LedgerEvent, prev_hash: Digest) -> Self {
        let hash = seal_digest(&event, prev_hash);
        JournalRecord { event, prev_hash, hash }
    }

    /// Canonical line, without the trailing newline.
    pub fn to_line(&self) -> String {
        canonical_string(self)
    }
}

/// The journal plus the ledger state it folds to.
#[derive(Debug)]
pub struct Replayed {
    pub journal: Journal,
    pub ledger: Ledger,
}

#[derive(Debug)]
pub struct Journal {
    records: Vec<JournalRecord>,
    head_hash: Digest,
    closed: bool,
    sink: Option<File>,
    path: Option<PathBuf>,
}

impl Default for Journal {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Journal {
    pub fn in_memory() -> Self {
        Journal { records: Vec::new(), head_hash: Digest::GENESIS, closed: false, sink: None, path: None }
    }

    /// Opens (creating if absent) a journal file and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Replayed, JournalError> {
        let path = path.as_ref();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut replayed = replay(&bytes)?;
        if bytes.is_empty() {
            file.write_all(HEADER.as_bytes())?;
            file.write_all(b"\n")?;
            file.sync_data()?;
        }
        replayed.journal.sink = Some(file);
        replayed.journal.path = Some(path.to_path_buf());
        Ok(replayed)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn head(&self) -> Seq {
        self.records.last().map_or(Seq(0), |r| r.event.seq)
    }

    pub fn head_hash(&self) -> Digest {
        self.head_hash
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[JournalRecord] {
        &self.records
    }

    pub fn events(&self) -> impl Iterator<Item = &LedgerEvent> {
        self.records.iter().map(|r| &r.event)
    }

    /// Records with seq strictly greater than `seq`.
    pub fn after(&self, seq: Seq) -> &[JournalRecord] {
        let start = usize::try_from(seq.0).unwrap_or(usize::MAX).min(self.records.len());
        &self.records[start..]
    }

    /// Seals and persists `event`; durable on success.
    pub fn append(&mut self, event: LedgerEvent) -> Result<&JournalRecord, JournalError> {
        if self.closed {
            return Err(JournalError::SequenceConflict("journal is closed by a fund close".into()));
        }
        let expected = Seq(self.head().0 + 1);
        if event.seq != expected {
            return Err(JournalError::SequenceConflict(format!("expected seq {expected}, got {}", event.seq)));
        }
        let record = JournalRecord::seal(event, self.head_hash);
        if let Some(file) = self.sink.as_mut() {
            let mut line = record.to_line();
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        self.push_verified(record);
        Ok(self.records.last().expect("just pushed"))
    }

    fn push_verified(&mut self, record: JournalRecord) {
        self.head_hash = record.hash;
        self.closed = matches!(record.event.op, Op::FundClose { .. });
        self.records.push(record);
    }

    /// Full file contents: header plus one line per record.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::with_capacity(64 + self.records.len() * 256);
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out.into_bytes()
    }
}

fn verify_line(line: &str, seq: u64, prev: Digest) -> Result<JournalRecord, JournalError> {
    let corrupt = |reason: String| JournalError::CorruptChain { seq, reason };
    let record: JournalRecord = serde_json::from_str(line).map_err(|e| corrupt(format!("unparseable record: {e}")))?;
    if record.to_line() != line {
        return Err(corrupt("record is not in canonical form".into()));
    }
    if record.event.seq != Seq(seq) {
        return Err(corrupt(format!("record carries seq {}", record.event.seq)));
    }
    if record.prev_hash != prev {
        return Err(corrupt("prev_hash does not link to the previous record".into()));
    }
    if seal_digest(&record.event, record.prev_hash) != record.hash {
        return Err(corrupt("hash does not match record contents".into()));
    }
    Ok(record)
}

/// Verifies and folds a journal file. Each record is applied only after its
/// own bytes and its link to the previous record check out.
pub fn replay(bytes: &[u8]) -> Result<Replayed, JournalError> {
    let mut journal = Journal::in_memory();
    let mut ledger = Ledger::new();
    if bytes.is_empty() {
        return Ok(Replayed { journal, ledger });
    }
    let text = std::str::from_utf8(bytes).map_err(|e| {
        // Locate the record holding the bad byte.
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() as u64;
        if line == 0 {
            JournalError::BadHeader("not UTF-8".into())
        } else {
            JournalError::CorruptChain { seq: line, reason: "invalid UTF-8".into() }
        }
    })?;
    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        Some(h) if h.strip_suffix('\n') == Some(HEADER) => {}
        Some(h) => return Err(JournalError::BadHeader(h.trim_end().chars().take(120).collect())),
        None => unreachable!("non-empty input has a first line"),
    }
    for (i, raw) in lines.enumerate() {
        let seq = i as u64 + 1;
        let line = raw.strip_suffix('\n').ok_or(JournalError::TruncatedFile { seq })?;
        let record = verify_line(line, seq, journal.head_hash)?;
        ledger.apply(&record.event).map_err(|source| JournalError::Rejected { seq, source })?;
        journal.push_verified(record);
    }
    Ok(Replayed { journal, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Command, Role};
    use crate::types::{ActorId, Money, Timestamp};

    fn event(l: &mut Ledger, cmd: Command) -> LedgerEvent {
        let ts = Timestamp(l.last_timestamp().0 + 1);
        l.execute(cmd, ts, None).unwrap()
    }

    fn sample() -> (Journal, Ledger) {
        let mut l = Ledger::new();
        let mut j = Journal::in_memory();
        let cmds = [
            Command::RegisterActor { id: ActorId::new("bank1").unwrap(), roles: [Role::FinancialInstitution].into() },
            Command::RegisterActor { id: ActorId::new("inv1").unwrap(), roles: [Role::Investor].into() },
            Command::MintInvestor {
                fi: ActorId::new("bank1").unwrap(),
                beneficiary: ActorId::new("inv1").unwrap(),
                amount: Money::from_cents(100_000),
            },
        ];
        for c in cmds {
            let ev = event(&mut l, c);
            j.append(ev).unwrap();
        }
        (j, l)
    }

    #[test]
    fn first_and_second_append_link() {
        let (j, _) = sample();
        let r = j.records();
        assert_eq!(r[0].event.seq, Seq(1));
        assert_eq!(r[0].prev_hash, Digest::GENESIS);
        assert_eq!(r[1].event.seq, Seq(2));
        assert_eq!(r[1].prev_hash, r[0].hash);
    }

    #[test]
    fn canonical_line_shape() {
        let (j, _) = sample();
        let line = j.records()[0].to_line();
        assert!(line.starts_with(r#"{"actor":"bank1","hash":""#), "{line}");
        assert!(line.contains(r#""op":{"actor":"bank1","kind":"Register","roles":["FinancialInstitution"]}"#));
        assert!(line.contains(r#""seq":"1","timestamp":"1"}"#));
        assert!(!line.contains(' '));
    }

    #[test]
    fn header_is_exact() {
        let (j, _) = sample();
        let bytes = j.to_bytes();
        assert!(bytes.starts_with(b"{\"format\":\"credito-journal\",\"version\":1,\"hash_alg\":\"sha256\"}\n"));
        let v: Value = serde_json::from_str(HEADER).unwrap();
        assert_eq!(v["format"], FORMAT);
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["hash_alg"], HASH_ALG);
    }

    #[test]
    fn replay_matches_live_state() {
        let (j, live) = sample();
        let replayed = replay(&j.to_bytes()).unwrap();
        assert_eq!(replayed.ledger, live);
        assert_eq!(replayed.journal.records(), j.records());
        assert_eq!(replayed.journal.to_bytes(), j.to_bytes());
    }

    #[test]
    fn empty_file_is_genesis() {
        let r = replay(b"").unwrap();
        assert_eq!(r.ledger, Ledger::new());
        assert!(r.journal.is_empty());
        let header_only = format!("{HEADER}\n");
        assert_eq!(replay(header_only.as_bytes()).unwrap().ledger, Ledger::new());
    }

    #[test]
    fn flipped_byte_reports_record() {
        let (j, _) = sample();
        let bytes = j.to_bytes();
        let second_line_start = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).unwrap().0 + 1;
        let mut bad = bytes.clone();
        bad[second_line_start + 20] ^= 0x01;
        match replay(&bad) {
            Err(JournalError::CorruptChain { seq, .. }) => assert_eq!(seq, 2),
            other => panic!("expected corrupt chain, got {other:?}"),
        }
    }

    #[test]
    fn truncated_tail_detected() {
        let (j, _) = sample();
        let bytes = j.to_bytes();
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(replay(cut), Err(JournalError::TruncatedFile { seq: 3 })));
    }

    #[test]
    fn uppercase_hex_is_not_canonical() {
        let (j, _) = sample();
        let text = String::from_utf8(j.to_bytes()).unwrap();
        let line = text.lines().nth(1).unwrap();
        let hash = j.records()[0].hash.to_string();
        let Some(pos) = hash.find(|c: char| c.is_ascii_alphabetic()) else { return };
        let mut upper = hash.clone();
        upper.replace_range(pos..pos + 1, &hash[pos..pos + 1].to_ascii_uppercase());
        let tampered = text.replacen(line, &line.replace(&hash, &upper), 1);
        assert!(matches!(replay(tampered.as_bytes()), Err(JournalError::CorruptChain { seq: 1, .. })));
    }

    #[test]
    fn append_rejects_out_of_order_and_after_close() {
        let (mut j, mut l) = sample();
        let ev = event(&mut l, Command::CloseFund { fi: ActorId::new("bank1").unwrap(), reward_rate: Default::default() });
        let mut skipped = ev.clone();
        skipped.seq = Seq(9);
        assert!(matches!(j.append(skipped), Err(JournalError::SequenceConflict(_))));
        j.append(ev).unwrap();
        let late = LedgerEvent {
            seq: Seq(5),
            timestamp: Timestamp(9),
            actor: ActorId::new("bank1").unwrap(),
            op: Op::Register { actor: ActorId::new("bank1").unwrap(), roles: [Role::Investor].into() },
        };
        assert!(matches!(j.append(late), Err(JournalError::SequenceConflict(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.log");
        let (mem, live) = sample();
        {
            let mut opened = Journal::open(&path).unwrap();
            assert!(opened.journal.is_empty());
            for r in mem.records() {
                opened.ledger.apply(&r.event).unwrap();
                opened.journal.append(r.event.clone()).unwrap();
            }
        }
        assert_eq!(std::fs::read(&path).unwrap(), mem.to_bytes());
        let reopened = Journal::open(&path).unwrap();
        assert_eq!(reopened.ledger, live);
    }
}
