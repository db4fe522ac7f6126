//! Per-session state machine and episode reconstruction.

use serde::{Deserialize, Serialize};

use super::event::{EventInput, EventKind, GameEvent, Queue};
use super::protocol::{BonusCondition, ExperimentProtocol, SS_POINTS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Outcome {
    Defected { step: usize },
    Completed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub tau: usize,
    pub condition: BonusCondition,
    pub phase: usize,
    pub outcome: Outcome,
    /// Served reward plus bonuses collected on the way.
    pub points: f64,
    pub bonuses: f64,
    pub start_tick: u64,
    pub end_tick: u64,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl EpisodeRecord {
    /// Decision step at which the episode ended; `tau + 1` for completion.
    pub fn defection_step(&self) -> usize {
        match self.outcome {
            Outcome::Defected { step } => step,
            Outcome::Completed => self.tau + 1,
        }
    }

    /// Actions taken: one per decision step.
    pub fn actions(&self) -> usize {
        match self.outcome {
            Outcome::Defected { step } => step,
            Outcome::Completed => self.tau,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Location {
    Idle,
    Vestibule,
    /// Chose the short queue at `step`; waiting to be served.
    Short {
        step: usize,
    },
    Long {
        position: usize,
    },
}

#[derive(Clone, Debug)]
struct OpenEpisode {
    tau: usize,
    condition: BonusCondition,
    phase: usize,
    bonuses: Vec<f64>,
    awarded: Vec<bool>,
    collected: f64,
    start_tick: u64,
    start_ms: u64,
}

/// Replays events against the game rules and collects finished episodes.
/// Rejected events leave the state untouched.
#[derive(Clone, Debug)]
pub struct Tracker {
    protocol: ExperimentProtocol,
    start_ms: Option<u64>,
    location: Location,
    open: Option<OpenEpisode>,
    defocus: u32,
    rejected: bool,
    episodes: Vec<EpisodeRecord>,
}

impl Tracker {
    pub fn new(protocol: ExperimentProtocol) -> Self {
        Self {
            protocol,
            start_ms: None,
            location: Location::Idle,
            open: None,
            defocus: 0,
            rejected: false,
            episodes: Vec::new(),
        }
    }

    pub fn protocol(&self) -> &ExperimentProtocol {
        &self.protocol
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn rejected(&self) -> bool {
        self.rejected
    }

    pub fn start_ms(&self) -> Option<u64> {
        self.start_ms
    }

    /// Apply one event. `Err` carries the violated rule.
    pub fn apply(&mut self, e: &EventInput) -> std::result::Result<(), String> {
        if self.rejected {
            return Err("session already rejected".into());
        }
        let start = *self.start_ms.get_or_insert(e.ms);
        let p = &e.payload;
        match (e.kind, self.location) {
            (EventKind::EpisodeStart, Location::Idle) => {
                let tau = p.tau.ok_or("EPISODE_START without tau")?;
                if !self.protocol.queue_lengths.contains(&tau) {
                    return Err(format!("queue length {tau} not in protocol"));
                }
                let phase = self.protocol.phase_at(e.ms.saturating_sub(start));
                let allowed = &self.protocol.phases[phase].conditions;
                let condition = p.condition.unwrap_or(allowed[0]);
                if !allowed.contains(&condition) {
                    return Err(format!("condition {condition:?} not active in phase {phase}"));
                }
                let bonuses = self.protocol.bonuses(condition, tau);
                self.open = Some(OpenEpisode {
                    tau,
                    condition,
                    phase,
                    awarded: vec![false; bonuses.len()],
                    bonuses,
                    collected: 0.0,
                    start_tick: e.tick,
                    start_ms: e.ms,
                });
                self.location = Location::Vestibule;
            }
            (EventKind::EpisodeStart, _) => return Err("episode already running".into()),
            (EventKind::QueueSelect, Location::Vestibule) => {
                self.location = match p.queue.ok_or("QUEUE_SELECT without queue")? {
                    Queue::Up => Location::Short { step: 1 },
                    Queue::Down => Location::Long { position: 2 },
                };
            }
            (EventKind::QueueSelect, _) => return Err("queue selection outside the vestibule".into()),
            (EventKind::AdvanceKey, Location::Long { position }) => {
                let tau = self.open_episode()?.tau;
                if let Some(to) = p.position {
                    if to != position && to != position + 1 {
                        return Err(format!("advance from {position} to {to}"));
                    }
                    if to > tau {
                        return Err(format!("advance past the front (position {to} > {tau})"));
                    }
                    self.location = Location::Long { position: to };
                }
            }
            (EventKind::AdvanceKey, _) => return Err("advance outside the long queue".into()),
            (EventKind::Defect, Location::Long { position }) => {
                if p.position.is_some_and(|q| q != position) {
                    return Err(format!("defect reported at {:?}, player at {position}", p.position));
                }
                self.location = Location::Short { step: position };
            }
            (EventKind::Defect, _) => return Err("defect outside the long queue".into()),
            (EventKind::BonusAwarded, Location::Long { position }) => {
                let at = p.position.ok_or("BONUS_AWARDED without position")?;
                let ep = self.open_episode()?;
                if at + 1 != position || at > ep.bonuses.len() || ep.bonuses[at - 1] == 0.0 {
                    return Err(format!("no bonus scheduled for step {at} at position {position}"));
                }
                if ep.awarded[at - 1] {
                    return Err(format!("bonus for step {at} already paid"));
                }
                let amount = ep.bonuses[at - 1];
                if p.points.is_some_and(|x| x != amount) {
                    return Err(format!("bonus of {:?}, schedule pays {amount}", p.points));
                }
                let ep = self.open.as_mut().expect("open episode");
                ep.awarded[at - 1] = true;
                ep.collected += amount;
            }
            (EventKind::BonusAwarded, _) => return Err("bonus outside the long queue".into()),
            (EventKind::Served, loc) => {
                let ep = self.open_episode()?;
                let (outcome, served) = match (p.queue, loc) {
                    (Some(Queue::Up), Location::Short { step }) => (Outcome::Defected { step }, SS_POINTS),
                    (Some(Queue::Down), Location::Long { position }) if position == ep.tau => {
                        (Outcome::Completed, self.protocol.ll_points(ep.condition, ep.tau))
                    }
                    _ => return Err(format!("SERVED {:?} not possible at {loc:?}", p.queue)),
                };
                if p.points.is_some_and(|x| x != served) {
                    return Err(format!("served {:?} points, expected {served}", p.points));
                }
                let ep = self.open.take().expect("open episode");
                self.episodes.push(EpisodeRecord {
                    tau: ep.tau,
                    condition: ep.condition,
                    phase: ep.phase,
                    outcome,
                    points: served + ep.collected,
                    bonuses: ep.collected,
                    start_tick: ep.start_tick,
                    end_tick: e.tick,
                    start_ms: ep.start_ms,
                    end_ms: e.ms,
                });
                self.location = Location::Idle;
            }
            (EventKind::IdleWarning, _) => {}
            (EventKind::Defocus, _) => {
                self.defocus += 1;
                if self.defocus >= 2 {
                    self.rejected = true;
                }
            }
            (EventKind::Rejected, _) => self.rejected = true,
        }
        Ok(())
    }

    fn open_episode(&self) -> std::result::Result<&OpenEpisode, String> {
        self.open.as_ref().ok_or_else(|| "no episode running".to_string())
    }
}

/// Episodes reconstructed from a stored log, ignoring flagged events.
pub fn replay(protocol: &ExperimentProtocol, events: &[GameEvent]) -> Tracker {
    let mut tracker = Tracker::new(protocol.clone());
    for e in events.iter().filter(|e| e.violation.is_none()) {
        let input = EventInput {
            tick: e.tick,
            ms: e.ms,
            kind: e.kind,
            payload: e.payload.clone(),
        };
        // Stored events already passed validation.
        let _ = tracker.apply(&input);
    }
    tracker
}

/// Live session: ordering checks on top of the game rules.
#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub seed: u64,
    tracker: Tracker,
    events: Vec<GameEvent>,
}

impl Session {
    pub fn new(id: String, protocol: ExperimentProtocol, seed: u64) -> Self {
        Self {
            id,
            seed,
            tracker: Tracker::new(protocol),
            events: Vec::new(),
        }
    }

    pub fn protocol(&self) -> &ExperimentProtocol {
        self.tracker.protocol()
    }

    pub fn events(&self) -> &[GameEvent] {
        &self.events
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn closed(&self) -> bool {
        self.tracker.rejected()
    }

    /// Check ordering and build the stored form of `input` without
    /// committing it. Game-rule violations are flagged, not refused.
    pub fn check(&self, input: &EventInput) -> Result<GameEvent> {
        if self.closed() {
            return Err(Error::SessionClosed(self.id.clone()));
        }
        if let Some(last) = self.events.last() {
            if input.tick < last.tick {
                return Err(Error::OutOfOrderTick {
                    tick: input.tick,
                    last: last.tick,
                });
            }
            let duplicate = self
                .events
                .iter()
                .rev()
                .take_while(|e| e.tick == input.tick)
                .any(|e| e.kind == input.kind && e.ms == input.ms && e.payload == input.payload);
            if duplicate {
                return Err(Error::DuplicateEvent(input.tick));
            }
        }
        let mut event = GameEvent::new(&self.id, input.clone());
        let mut probe = self.tracker.clone();
        event.violation = probe.apply(input).err();
        Ok(event)
    }

    /// Append an event produced by [`Session::check`].
    pub fn commit(&mut self, event: GameEvent) {
        if event.violation.is_none() {
            let input = EventInput {
                tick: event.tick,
                ms: event.ms,
                kind: event.kind,
                payload: event.payload.clone(),
            };
            self.tracker.apply(&input).expect("checked event applies");
        }
        self.events.push(event);
    }

    pub fn record(&mut self, input: &EventInput) -> Result<GameEvent> {
        let event = self.check(input)?;
        self.commit(event.clone());
        Ok(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::protocol::ProtocolId;

    fn session(id: ProtocolId) -> Session {
        Session::new("s".into(), ExperimentProtocol::builtin(id, None).unwrap(), 0)
    }

    fn ev(tick: u64, kind: EventKind) -> EventInput {
        EventInput::new(tick, tick * 1000, kind)
    }

    #[test]
    fn nominal_long_queue_episode() {
        let mut s = session(ProtocolId::Exp2);
        s.record(&ev(0, EventKind::EpisodeStart).tau(4)).unwrap();
        s.record(&ev(1, EventKind::QueueSelect).queue(Queue::Down)).unwrap();
        for (tick, pos) in [(2, 3), (3, 4)] {
            s.record(&ev(tick, EventKind::AdvanceKey)).unwrap();
            s.record(&ev(tick, EventKind::AdvanceKey).position(pos)).unwrap();
        }
        let served = s.record(&ev(4, EventKind::Served).queue(Queue::Down).points(600.0)).unwrap();
        assert_eq!(served.violation, None);
        let eps = s.tracker().episodes();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].outcome, Outcome::Completed);
        assert_eq!(eps[0].points, 600.0);
        assert_eq!(eps[0].actions(), 4);
    }

    #[test]
    fn defect_then_served_short() {
        let mut s = session(ProtocolId::Exp1);
        s.record(&ev(0, EventKind::EpisodeStart).tau(6)).unwrap();
        s.record(&ev(1, EventKind::QueueSelect).queue(Queue::Down)).unwrap();
        s.record(&ev(2, EventKind::AdvanceKey).position(3)).unwrap();
        s.record(&ev(3, EventKind::Defect).position(3)).unwrap();
        s.record(&ev(3, EventKind::Served).queue(Queue::Up).points(100.0)).unwrap();
        let ep = &s.tracker().episodes()[0];
        assert_eq!(ep.outcome, Outcome::Defected { step: 3 });
        assert_eq!(ep.defection_step(), 3);
    }

    #[test]
    fn advance_in_vestibule_is_flagged_not_dropped() {
        let mut s = session(ProtocolId::Exp1);
        s.record(&ev(0, EventKind::EpisodeStart).tau(6)).unwrap();
        let e = s.record(&ev(1, EventKind::AdvanceKey)).unwrap();
        assert!(e.violation.is_some());
        assert_eq!(s.events().len(), 2);
        // State unchanged: selecting a queue is still allowed.
        let e = s.record(&ev(2, EventKind::QueueSelect).queue(Queue::Up)).unwrap();
        assert!(e.violation.is_none());
    }

    #[test]
    fn second_defocus_rejects_session() {
        let mut s = session(ProtocolId::Exp1);
        s.record(&ev(0, EventKind::Defocus)).unwrap();
        assert!(!s.closed());
        s.record(&ev(1, EventKind::Defocus)).unwrap();
        assert!(s.closed());
        assert!(matches!(
            s.record(&ev(2, EventKind::IdleWarning)),
            Err(Error::SessionClosed(_))
        ));
    }

    #[test]
    fn ordering_rules() {
        let mut s = session(ProtocolId::Exp1);
        s.record(&ev(5, EventKind::IdleWarning)).unwrap();
        assert!(matches!(
            s.record(&ev(4, EventKind::IdleWarning)),
            Err(Error::OutOfOrderTick { tick: 4, last: 5 })
        ));
        assert!(matches!(
            s.record(&ev(5, EventKind::IdleWarning)),
            Err(Error::DuplicateEvent(5))
        ));
        s.record(&ev(5, EventKind::EpisodeStart).tau(4)).unwrap();
    }

    #[test]
    fn bonus_must_match_schedule() {
        let mut s = session(ProtocolId::Exp4);
        s.record(&ev(0, EventKind::EpisodeStart).tau(6).condition(BonusCondition::Early))
            .unwrap();
        s.record(&ev(1, EventKind::QueueSelect).queue(Queue::Down)).unwrap();
        let ok = s.record(&ev(1, EventKind::BonusAwarded).position(1).points(100.0)).unwrap();
        assert_eq!(ok.violation, None);
        let again = s.record(&ev(2, EventKind::BonusAwarded).position(1).points(100.0)).unwrap();
        assert!(again.violation.is_some());
        let wrong = s.record(&ev(2, EventKind::BonusAwarded).position(4)).unwrap();
        assert!(wrong.violation.is_some());
    }

    #[test]
    fn replay_matches_live_state() {
        let mut s = session(ProtocolId::Exp1);
        s.record(&ev(0, EventKind::EpisodeStart).tau(4)).unwrap();
        s.record(&ev(1, EventKind::AdvanceKey)).unwrap();
        s.record(&ev(1, EventKind::QueueSelect).queue(Queue::Up)).unwrap();
        s.record(&ev(1, EventKind::Served).queue(Queue::Up)).unwrap();
        let r = replay(s.protocol(), s.events());
        assert_eq!(r.episodes(), s.tracker().episodes());
    }
}
