//! Scripted players that turn model episodes into game events.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::event::{EventInput, EventKind, Queue};
use super::protocol::{BonusCondition, ExperimentProtocol, SS_POINTS};
use crate::error::Result;
use crate::hazard::simulate::run_episode;
use crate::params::AgentParams;
use crate::solver::{solve, SolverKind};

/// Seeded uniform draw of queue lengths, as announced in the session config.
pub struct TauSampler(ChaCha8Rng);

impl TauSampler {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next(&mut self, lengths: &[usize]) -> usize {
        lengths[self.0.random_range(0..lengths.len())]
    }
}

/// Events of one episode that starts at `tick` and ends at decision step
/// `step` (`tau + 1` = completion). One decision per tick. Returns the
/// tick of the SERVED event.
pub fn encode_episode(
    protocol: &ExperimentProtocol,
    tau: usize,
    condition: BonusCondition,
    step: usize,
    tick: u64,
    out: &mut Vec<EventInput>,
) -> u64 {
    let ms = |k: u64| k * protocol.tick_ms;
    let bonuses = protocol.bonuses(condition, tau);
    out.push(
        EventInput::new(tick, ms(tick), EventKind::EpisodeStart)
            .tau(tau)
            .condition(condition),
    );
    for t in 1..=tau {
        let k = tick + t as u64 - 1;
        if t == step {
            if t == 1 {
                out.push(EventInput::new(k, ms(k), EventKind::QueueSelect).queue(Queue::Up));
            } else {
                out.push(EventInput::new(k, ms(k), EventKind::Defect).position(t));
            }
            out.push(
                EventInput::new(k + 1, ms(k + 1), EventKind::Served)
                    .queue(Queue::Up)
                    .points(SS_POINTS),
            );
            return k + 1;
        }
        if t == 1 {
            out.push(EventInput::new(k, ms(k), EventKind::QueueSelect).queue(Queue::Down));
        } else if t < tau {
            for _ in 1..protocol.keystrokes_per_advance {
                out.push(EventInput::new(k, ms(k), EventKind::AdvanceKey));
            }
            out.push(EventInput::new(k, ms(k), EventKind::AdvanceKey).position(t + 1));
        }
        if t < tau && bonuses[t - 1] > 0.0 {
            out.push(
                EventInput::new(k, ms(k), EventKind::BonusAwarded)
                    .position(t)
                    .points(bonuses[t - 1]),
            );
        }
    }
    let k = tick + tau as u64;
    out.push(
        EventInput::new(k, ms(k), EventKind::Served)
            .queue(Queue::Down)
            .points(protocol.ll_points(condition, tau)),
    );
    k
}

/// A model agent playing a full session.
pub struct SimulatedPlayer {
    pub agent: AgentParams,
    pub solver: SolverKind,
}

impl SimulatedPlayer {
    pub fn new(agent: AgentParams) -> Self {
        Self {
            agent,
            solver: SolverKind::default(),
        }
    }

    /// Play `protocol` for the given wall time per phase. Phases without a
    /// fixed duration use `open_phase_ms`. Queue lengths come from
    /// `session_seed`, bias noise from `seed`.
    pub fn play(
        &self,
        protocol: &ExperimentProtocol,
        session_seed: u64,
        seed: u64,
        open_phase_ms: u64,
    ) -> Result<Vec<EventInput>> {
        let mut thresholds: HashMap<(BonusCondition, usize), Vec<f64>> = HashMap::new();
        for phase in &protocol.phases {
            for &c in &phase.conditions {
                for &tau in &protocol.queue_lengths {
                    if let std::collections::hash_map::Entry::Vacant(slot) = thresholds.entry((c, tau)) {
                        let sol = solve(self.solver, &protocol.task(c, tau), &self.agent)?;
                        slot.insert(sol.threshold_values());
                    }
                }
            }
        }
        let mut taus = TauSampler::new(session_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut tick = 0u64;
        let mut phase_end = 0u64;
        for phase in &protocol.phases {
            phase_end += phase.duration_s.map_or(open_phase_ms, |d| d * 1000);
            let mut episode = 0usize;
            // The next episode must finish inside the phase.
            while (tick + 15) * protocol.tick_ms < phase_end {
                let condition = phase.conditions[episode % phase.conditions.len()];
                let tau = taus.next(&protocol.queue_lengths);
                let step = run_episode(&thresholds[&(condition, tau)], &self.agent, &mut rng);
                tick = encode_episode(protocol, tau, condition, step, tick, &mut out);
                episode += 1;
            }
            tick = tick.max(phase_end / protocol.tick_ms);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::protocol::ProtocolId;
    use crate::game::session::{Outcome, Session};

    #[test]
    fn encoded_episodes_replay_cleanly() {
        let p = ExperimentProtocol::builtin(ProtocolId::Exp4, None).unwrap();
        let mut events = Vec::new();
        let mut tick = 0;
        let plan = [
            (6, BonusCondition::Early, 7),
            (6, BonusCondition::Late, 4),
            (10, BonusCondition::None, 1),
            (14, BonusCondition::Early, 15),
        ];
        for &(tau, c, step) in &plan {
            tick = encode_episode(&p, tau, c, step, tick, &mut events);
        }
        let mut s = Session::new("x".into(), p.clone(), 0);
        for e in &events {
            assert_eq!(s.record(e).unwrap().violation, None, "{e:?}");
        }
        let eps = s.tracker().episodes();
        assert_eq!(eps.len(), 4);
        assert_eq!(eps[0].outcome, Outcome::Completed);
        assert_eq!(eps[0].points, 900.0);
        assert_eq!(eps[1].outcome, Outcome::Defected { step: 4 });
        assert_eq!(eps[2].actions(), 1);
        assert_eq!(eps[3].points, 2100.0);
    }

    #[test]
    fn two_keystrokes_per_advance() {
        let p = ExperimentProtocol::builtin(ProtocolId::Exp2, None).unwrap();
        let mut events = Vec::new();
        encode_episode(&p, 4, BonusCondition::None, 5, 0, &mut events);
        let keys = events.iter().filter(|e| e.kind == EventKind::AdvanceKey).count();
        assert_eq!(keys, 4);
    }

    #[test]
    fn played_session_is_deterministic() {
        let p = ExperimentProtocol::builtin(ProtocolId::Exp5, None).unwrap();
        let player = SimulatedPlayer::new(AgentParams::new(0.95, 60.0, 20.0, -20.0));
        let a = player.play(&p, 1, 2, 0).unwrap();
        assert_eq!(a, player.play(&p, 1, 2, 0).unwrap());
        assert!(a.last().unwrap().ms <= 660_000);
        let mut s = Session::new("x".into(), p, 0);
        for e in &a {
            assert_eq!(s.record(e).unwrap().violation, None);
        }
    }
}
