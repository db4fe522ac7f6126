//! Game events and their JSONL encoding.

use serde::{Deserialize, Serialize};

use super::protocol::BonusCondition;

/// Log schema version written with every event.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    EpisodeStart,
    QueueSelect,
    AdvanceKey,
    Defect,
    Served,
    BonusAwarded,
    IdleWarning,
    Defocus,
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Queue {
    /// Short queue, selected with the up arrow.
    Up,
    /// Long queue, selected with the down arrow.
    Down,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue: Option<Queue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<BonusCondition>,
}

/// An event as submitted by a client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventInput {
    pub tick: u64,
    pub ms: u64,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: Payload,
}

/// An event as stored: one JSONL line per record, fields in this order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameEvent {
    pub v: u32,
    pub session: String,
    pub tick: u64,
    pub ms: u64,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: Payload,
    /// State-machine rule the event broke; such events are kept but ignored
    /// by the episode reconstruction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

impl GameEvent {
    pub fn new(session: &str, input: EventInput) -> Self {
        Self {
            v: SCHEMA_VERSION,
            session: session.to_string(),
            tick: input.tick,
            ms: input.ms,
            kind: input.kind,
            payload: input.payload,
            violation: None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

impl EventInput {
    pub fn new(tick: u64, ms: u64, kind: EventKind) -> Self {
        Self {
            tick,
            ms,
            kind,
            payload: Payload::default(),
        }
    }

    pub fn tau(mut self, tau: usize) -> Self {
        self.payload.tau = Some(tau);
        self
    }

    pub fn position(mut self, position: usize) -> Self {
        self.payload.position = Some(position);
        self
    }

    pub fn points(mut self, points: f64) -> Self {
        self.payload.points = Some(points);
        self
    }

    pub fn queue(mut self, queue: Queue) -> Self {
        self.payload.queue = Some(queue);
        self
    }

    pub fn condition(mut self, condition: BonusCondition) -> Self {
        self.payload.condition = Some(condition);
        self
    }
}

/// Parse a JSONL stream, skipping blank lines.
pub fn parse_jsonl(text: &str) -> crate::Result<Vec<GameEvent>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_has_fixed_field_order() {
        let e = GameEvent::new(
            "s1",
            EventInput::new(3, 6000, EventKind::EpisodeStart)
                .tau(6)
                .condition(BonusCondition::None),
        );
        assert_eq!(
            e.to_line(),
            r#"{"v":1,"session":"s1","tick":3,"ms":6000,"kind":"EPISODE_START","payload":{"tau":6,"condition":"none"}}"#
        );
        assert_eq!(parse_jsonl(&format!("{}\n\n", e.to_line())).unwrap(), vec![e]);
    }
}
