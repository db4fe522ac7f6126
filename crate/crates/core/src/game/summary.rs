//! Session summaries: trimmed episodes, hazards and reward rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::event::GameEvent;
use super::protocol::{ExperimentProtocol, ProtocolId, TRIM_MS};
use super::session::{replay, EpisodeRecord};
use crate::fitting::empirical::{empirical_hazard, EmpiricalHazard, EpisodeFilter, Subject};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session: String,
    pub protocol: ProtocolId,
    pub rejected: bool,
    /// False when trimming left no episodes.
    pub usable: bool,
    pub episodes: Vec<EpisodeRecord>,
    /// Episodes dropped by the head/tail trim.
    pub trimmed: usize,
    pub hazard: EmpiricalHazard,
    /// Points per action over the kept episodes.
    pub reward_rate: Option<f64>,
}

/// Keep episodes that lie entirely inside each phase's window, excluding
/// the first and last `TRIM_MS` of play in that phase.
pub fn trim_episodes(protocol: &ExperimentProtocol, events: &[GameEvent], episodes: &[EpisodeRecord]) -> Vec<EpisodeRecord> {
    let Some(start) = events.first().map(|e| e.ms) else {
        return Vec::new();
    };
    let mut bounds: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for e in events {
        let phase = protocol.phase_at(e.ms.saturating_sub(start));
        let b = bounds.entry(phase).or_insert((e.ms, e.ms));
        b.0 = b.0.min(e.ms);
        b.1 = b.1.max(e.ms);
    }
    episodes
        .iter()
        .filter(|ep| {
            bounds
                .get(&ep.phase)
                .is_some_and(|&(lo, hi)| ep.start_ms >= lo + TRIM_MS && ep.end_ms + TRIM_MS <= hi)
        })
        .cloned()
        .collect()
}

pub fn reward_rate(episodes: &[EpisodeRecord]) -> Option<f64> {
    let actions: usize = episodes.iter().map(EpisodeRecord::actions).sum();
    (actions > 0).then(|| episodes.iter().map(|e| e.points).sum::<f64>() / actions as f64)
}

/// Trimmed episodes of one session's log.
pub fn session_subject(protocol: &ExperimentProtocol, session: &str, events: &[GameEvent]) -> Subject {
    let tracker = replay(protocol, events);
    Subject {
        id: session.to_string(),
        episodes: trim_episodes(protocol, events, tracker.episodes()),
    }
}

pub fn summarize(protocol: &ExperimentProtocol, session: &str, events: &[GameEvent]) -> SessionSummary {
    let tracker = replay(protocol, events);
    let episodes = trim_episodes(protocol, events, tracker.episodes());
    let subject = Subject {
        id: session.to_string(),
        episodes,
    };
    let hazard = empirical_hazard(std::slice::from_ref(&subject), &EpisodeFilter::default());
    SessionSummary {
        session: session.to_string(),
        protocol: protocol.id,
        rejected: tracker.rejected(),
        usable: !subject.episodes.is_empty(),
        trimmed: tracker.episodes().len() - subject.episodes.len(),
        reward_rate: reward_rate(&subject.episodes),
        hazard,
        episodes: subject.episodes,
    }
}

/// Group a mixed log by session, keeping file order within each session.
pub fn split_sessions(events: &[GameEvent]) -> BTreeMap<String, Vec<GameEvent>> {
    let mut out: BTreeMap<String, Vec<GameEvent>> = BTreeMap::new();
    for e in events {
        out.entry(e.session.clone()).or_default().push(e.clone());
    }
    out
}

/// One subject per non-rejected session in a log where every session ran
/// `protocol`.
pub fn subjects_from_log(protocol: &ExperimentProtocol, events: &[GameEvent]) -> Vec<Subject> {
    split_sessions(events)
        .iter()
        .filter(|(_, evs)| !replay(protocol, evs).rejected())
        .map(|(id, evs)| session_subject(protocol, id, evs))
        .collect()
}
