//! Append-only event store shared by all sessions.
//!
//! Each session sits behind its own lock so events within a session are
//! applied strictly in order while sessions proceed independently. With a
//! directory attached, session configs go to `sessions.jsonl` and events
//! to `events.jsonl`; both are replayed on open.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::event::{EventInput, GameEvent};
use super::protocol::{ExperimentProtocol, ProtocolId};
use super::session::Session;
use super::summary::{summarize, SessionSummary};
use crate::error::{Error, Result};

const SESSIONS_FILE: &str = "sessions.jsonl";
const EVENTS_FILE: &str = "events.jsonl";

/// Everything a client needs to run a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub seed: u64,
    /// Queue lengths are drawn uniformly from `protocol.queue_lengths`
    /// with a generator seeded by `seed`.
    pub tau_sampler: String,
    pub protocol: ExperimentProtocol,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: usize,
    /// `(index in batch, rule)` for events stored with a violation flag.
    pub violations: Vec<(usize, String)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum ExportFilter {
    #[default]
    All,
    Session(String),
    Protocol(ProtocolId),
}

impl FromStr for ExportFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "all" {
            return Ok(ExportFilter::All);
        }
        match s.split_once(':') {
            Some(("session", id)) => Ok(ExportFilter::Session(id.to_string())),
            Some(("protocol", p)) => Ok(ExportFilter::Protocol(p.parse()?)),
            _ => Err(Error::InvalidParams(format!(
                "filter `{s}`: expected session:<id> or protocol:<EXPn>"
            ))),
        }
    }
}

pub struct EventStore {
    dir: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    files: Mutex<Option<(File, File)>>,
    next_id: AtomicU64,
}

impl EventStore {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            sessions: RwLock::new(BTreeMap::new()),
            files: Mutex::new(None),
            next_id: AtomicU64::new(1),
        }
    }

    /// Open or create a store in `dir`, replaying what is already there.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut store = Self::in_memory();
        let sessions_path = dir.join(SESSIONS_FILE);
        let events_path = dir.join(EVENTS_FILE);
        let mut max_id = 0u64;
        {
            let map = store.sessions.get_mut().expect("fresh lock");
            for line in read_lines(&sessions_path)? {
                let cfg: SessionConfig = serde_json::from_str(&line)?;
                if let Some(n) = cfg.session_id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                    max_id = max_id.max(n);
                }
                let session = Session::new(cfg.session_id.clone(), cfg.protocol, cfg.seed);
                map.insert(cfg.session_id, Arc::new(Mutex::new(session)));
            }
            for line in read_lines(&events_path)? {
                let event: GameEvent = serde_json::from_str(&line)?;
                let session = map
                    .get(&event.session)
                    .ok_or_else(|| Error::UnknownSession(event.session.clone()))?;
                session.lock().expect("session lock").commit(event);
            }
        }
        store.next_id = AtomicU64::new(max_id + 1);
        let append = |p: &Path| OpenOptions::new().create(true).append(true).open(p);
        store.files = Mutex::new(Some((append(&sessions_path)?, append(&events_path)?)));
        store.dir = Some(dir.to_path_buf());
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn create_session(&self, id: ProtocolId, rho: Option<f64>, seed: u64) -> Result<SessionConfig> {
        let mut protocol = ExperimentProtocol::builtin(id, rho)?;
        // Counterbalance condition order within each phase.
        for phase in &mut protocol.phases {
            let n = phase.conditions.len();
            phase.conditions.rotate_left((seed % n as u64) as usize);
        }
        let session_id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let cfg = SessionConfig {
            session_id: session_id.clone(),
            seed,
            tau_sampler: "uniform".into(),
            protocol: protocol.clone(),
        };
        if let Some((sessions, _)) = self.files.lock().expect("file lock").as_mut() {
            writeln!(sessions, "{}", serde_json::to_string(&cfg)?)?;
            sessions.flush()?;
        }
        self.sessions.write().expect("sessions lock").insert(
            session_id.clone(),
            Arc::new(Mutex::new(Session::new(session_id, protocol, seed))),
        );
        Ok(cfg)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    /// Record a batch. Ordering errors reject the whole batch; game-rule
    /// violations are stored with a flag.
    pub fn record_events(&self, id: &str, inputs: &[EventInput]) -> Result<Ack> {
        let session = self.session(id)?;
        let mut live = session.lock().expect("session lock");
        let mut scratch = live.clone();
        let mut stored = Vec::with_capacity(inputs.len());
        for input in inputs {
            let event = scratch.check(input)?;
            scratch.commit(event.clone());
            stored.push(event);
        }
        if let Some((_, events)) = self.files.lock().expect("file lock").as_mut() {
            let mut buf = String::new();
            for e in &stored {
                buf.push_str(&e.to_line());
                buf.push('\n');
            }
            events.write_all(buf.as_bytes())?;
            events.flush()?;
        }
        let violations = stored
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.violation.clone().map(|v| (i, v)))
            .collect();
        *live = scratch;
        Ok(Ack {
            accepted: stored.len(),
            violations,
        })
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary> {
        let session = self.session(id)?;
        let s = session.lock().expect("session lock");
        Ok(summarize(s.protocol(), &s.id, s.events()))
    }

    pub fn protocol_of(&self, id: &str) -> Result<ExperimentProtocol> {
        Ok(self.session(id)?.lock().expect("session lock").protocol().clone())
    }

    /// Matching events as JSONL, sessions in id order.
    pub fn export(&self, filter: &ExportFilter) -> String {
        let sessions = self.sessions.read().expect("sessions lock");
        let mut out = String::new();
        for (id, session) in sessions.iter() {
            let s = session.lock().expect("session lock");
            let keep = match filter {
                ExportFilter::All => true,
                ExportFilter::Session(want) => want == id,
                ExportFilter::Protocol(p) => s.protocol().id == *p,
            };
            if keep {
                for e in s.events() {
                    out.push_str(&e.to_line());
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().expect("sessions lock").keys().cloned().collect()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}
