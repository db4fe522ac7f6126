//! The queue-waiting game: protocols, event logs, sessions and the HTTP
//! service that records play.

pub mod event;
pub mod player;
pub mod protocol;
pub mod server;
pub mod session;
pub mod store;
pub mod summary;

pub use event::{EventInput, EventKind, GameEvent, Payload, Queue};
pub use protocol::{BonusCondition, ExperimentProtocol, ProtocolId};
pub use session::{EpisodeRecord, Outcome, Session};
pub use store::{EventStore, ExportFilter, SessionConfig};
pub use summary::SessionSummary;
