//! Low-communication coupling.
//!
//! Both parties round their distributions onto a grid of step `ε / 4n`, run a
//! propose/verify exchange whose messages carry only an item index and a grid
//! numerator, and then locally re-couple their grid samples back to the
//! original distributions. The match probability is at least
//! `1 − TV(P, Q) − ε`, and the expected traffic is `O(log(n/ε))` bits.

mod message;
mod party;

use std::collections::VecDeque;

use serde::Serialize;

pub use message::{Message, Party, Transcript, TranscriptTrailer, WireRecord};
pub use party::{
    alice_step, bob_step, AliceState, BobState, Incoming, StepOutput, BOB_COIN_INDEX, DART_CAP,
    PROPOSAL_INDEX,
};

use crate::distributions::{discretize, grid_denominator, DiscreteDistribution, GridDistribution};
use crate::error::{CouplingError, Result};
use crate::exec::{map_reduce, Execution};
use crate::protocols::optimal_coupling_bob;
use crate::randomness::{SharedRandomSource, UniformSource};

/// Outcome of the grid-level exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridOutcome {
    pub a: usize,
    pub b: usize,
    pub transcript: Transcript,
}

/// Drives both state machines to completion over an in-process alternating
/// queue.
pub fn run_protocol4<S: UniformSource + ?Sized>(
    p_grid: &GridDistribution,
    q_grid: &GridDistribution,
    shared: &S,
) -> Result<GridOutcome> {
    if p_grid.len() != q_grid.len() {
        return Err(CouplingError::DimensionMismatch {
            left: p_grid.len(),
            right: q_grid.len(),
        });
    }
    if p_grid.denominator() != q_grid.denominator() {
        return Err(CouplingError::DenominatorMismatch {
            left: p_grid.denominator(),
            right: q_grid.denominator(),
        });
    }
    let mut alice = AliceState::Start;
    let mut bob = BobState::AwaitProposal;
    let mut log: Vec<(Party, Message)> = Vec::with_capacity(4);
    let mut queue: VecDeque<(Party, Message)> = VecDeque::with_capacity(2);
    let (mut a, mut b) = (None, None);

    let (next, out) = alice_step(alice, Incoming::Start, p_grid, shared)?;
    alice = next;
    queue.extend(out.send.into_iter().map(|m| (Party::Alice, m)));

    while let Some((sender, msg)) = queue.pop_front() {
        log.push((sender, msg));
        match sender {
            Party::Alice => {
                let (next, out) = bob_step(bob, Incoming::Message(&msg), q_grid, shared)?;
                bob = next;
                b = b.or(out.finished);
                queue.extend(out.send.into_iter().map(|m| (Party::Bob, m)));
            }
            Party::Bob => {
                let (next, out) = alice_step(alice, Incoming::Message(&msg), p_grid, shared)?;
                alice = next;
                a = a.or(out.finished);
                queue.extend(out.send.into_iter().map(|m| (Party::Alice, m)));
            }
        }
    }
    match (a, b) {
        (Some(a), Some(b)) => Ok(GridOutcome {
            a,
            b,
            transcript: Transcript::new(log, p_grid.len(), p_grid.denominator()),
        }),
        _ => Err(CouplingError::ProtocolViolation(
            "exchange ended before both parties finished".into(),
        )),
    }
}

/// Final samples of a full low-communication session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowCommResult {
    /// Alice's sample, distributed as P.
    pub a: usize,
    /// Bob's sample, distributed as Q.
    pub b: usize,
    /// Alice's grid sample, distributed as P'.
    pub a_grid: usize,
    /// Bob's grid sample, distributed as Q'.
    pub b_grid: usize,
    pub transcript: Transcript,
}

/// Pre-computed grids for repeated sessions on one pair.
#[derive(Debug, Clone)]
pub struct LowCommSetup {
    p: DiscreteDistribution,
    q: DiscreteDistribution,
    epsilon: f64,
    p_grid: GridDistribution,
    q_grid: GridDistribution,
    p_rounded: DiscreteDistribution,
    q_rounded: DiscreteDistribution,
}

impl LowCommSetup {
    /// Discretizes both sides with parameter `ε / 4`.
    pub fn new(p: &DiscreteDistribution, q: &DiscreteDistribution, epsilon: f64) -> Result<Self> {
        if p.len() != q.len() {
            return Err(CouplingError::DimensionMismatch {
                left: p.len(),
                right: q.len(),
            });
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CouplingError::InvalidEpsilon(epsilon));
        }
        let p_grid = discretize(p, epsilon / 4.0)?;
        let q_grid = discretize(q, epsilon / 4.0)?;
        Ok(Self {
            p: p.clone(),
            q: q.clone(),
            epsilon,
            p_rounded: p_grid.to_distribution(),
            q_rounded: q_grid.to_distribution(),
            p_grid,
            q_grid,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn p_grid(&self) -> &GridDistribution {
        &self.p_grid
    }

    pub fn q_grid(&self) -> &GridDistribution {
        &self.q_grid
    }

    pub fn p_rounded(&self) -> &DiscreteDistribution {
        &self.p_rounded
    }

    pub fn q_rounded(&self) -> &DiscreteDistribution {
        &self.q_rounded
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn denominator(&self) -> u64 {
        self.p_grid.denominator()
    }

    /// One session. The grid exchange reads `source/protocol`; the local
    /// corrections read `source/alice-correction` and `source/bob-correction`.
    pub fn run(&self, source: &SharedRandomSource) -> Result<LowCommResult> {
        let grid = run_protocol4(&self.p_grid, &self.q_grid, &source.derive("protocol"))?;
        let (a, _) = optimal_coupling_bob(
            grid.a,
            &self.p_rounded,
            &self.p,
            &source.derive("alice-correction"),
        )?;
        let (b, _) = optimal_coupling_bob(
            grid.b,
            &self.q_rounded,
            &self.q,
            &source.derive("bob-correction"),
        )?;
        Ok(LowCommResult {
            a,
            b,
            a_grid: grid.a,
            b_grid: grid.b,
            transcript: grid.transcript,
        })
    }
}

/// Full pipeline for a single session.
pub fn run_lowcomm(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    epsilon: f64,
    source: &SharedRandomSource,
) -> Result<LowCommResult> {
    LowCommSetup::new(p, q, epsilon)?.run(source)
}

/// Logical bit cost of a complete transcript for `n` items at accuracy `ε`
/// (grid denominator `4n / ε`).
pub fn bit_cost(transcript: &Transcript, n: usize, epsilon: f64) -> Result<u64> {
    transcript.check_complete()?;
    let d = grid_denominator(n, epsilon / 4.0)?;
    Ok(transcript
        .messages()
        .iter()
        .map(|(_, m)| m.bits(n, d))
        .sum())
}

/// Source for session `index` of a batch keyed by `base_seed`.
pub fn session_source(base_seed: u64, index: u64) -> SharedRandomSource {
    SharedRandomSource::new(base_seed, "lowcomm").derive(&format!("session-{index}"))
}

/// Aggregates over many sessions. All fields are integer totals so the
/// result is independent of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LowCommTally {
    pub sessions: u64,
    pub matches: u64,
    pub grid_matches: u64,
    pub messages: u64,
    pub dart_rounds: u64,
    pub bits: u64,
    pub max_bits: u64,
}

impl LowCommTally {
    fn merge(self, o: Self) -> Self {
        Self {
            sessions: self.sessions + o.sessions,
            matches: self.matches + o.matches,
            grid_matches: self.grid_matches + o.grid_matches,
            messages: self.messages + o.messages,
            dart_rounds: self.dart_rounds + o.dart_rounds,
            bits: self.bits + o.bits,
            max_bits: self.max_bits.max(o.max_bits),
        }
    }

    fn mean(&self, total: u64) -> f64 {
        total as f64 / self.sessions.max(1) as f64
    }

    pub fn match_rate(&self) -> f64 {
        self.mean(self.matches)
    }

    pub fn grid_match_rate(&self) -> f64 {
        self.mean(self.grid_matches)
    }

    pub fn mean_messages(&self) -> f64 {
        self.mean(self.messages)
    }

    pub fn mean_dart_rounds(&self) -> f64 {
        self.mean(self.dart_rounds)
    }

    pub fn mean_bits(&self) -> f64 {
        self.mean(self.bits)
    }
}

/// Runs `sessions` independent sessions keyed by `base_seed`.
pub fn simulate(
    setup: &LowCommSetup,
    sessions: u64,
    base_seed: u64,
    exec: Execution,
) -> Result<LowCommTally> {
    map_reduce(
        sessions,
        exec,
        LowCommTally::default(),
        |t| {
            let r = setup.run(&session_source(base_seed, t))?;
            let bits = r.transcript.total_bits();
            Ok(LowCommTally {
                sessions: 1,
                matches: u64::from(r.a == r.b),
                grid_matches: u64::from(r.a_grid == r.b_grid),
                messages: r.transcript.len() as u64,
                dart_rounds: r.transcript.dart_rounds(),
                bits,
                max_bits: bits,
            })
        },
        LowCommTally::merge,
    )
}
