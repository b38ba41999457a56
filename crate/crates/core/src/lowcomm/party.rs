//! Alice and Bob as explicit state machines.
//!
//! Stream layout (one shared stream per session):
//!
//! | index            | use                                  |
//! |------------------|--------------------------------------|
//! | `u64::MAX`       | Alice's inverse-CDF proposal draw     |
//! | `0`              | Bob's accept coin `u_0`              |
//! | `k = 1, 2, ...`  | dart `k`, read by both parties       |
//!
//! Every accept/reject decision compares `u · D` against integer grid
//! numerators, so both parties reach the same verdict from the same float.

use crate::distributions::GridDistribution;
use crate::error::{CouplingError, Result};
use crate::randomness::UniformSource;

use super::message::Message;

/// Shared-stream index of Alice's proposal draw.
pub const PROPOSAL_INDEX: u64 = u64::MAX;
/// Shared-stream index of Bob's accept coin.
pub const BOB_COIN_INDEX: u64 = 0;
/// Maximum dart throws before Bob reports a pathological input.
pub const DART_CAP: u64 = 10_000_000;

/// What a party is handed on each turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Incoming<'a> {
    /// Opens the session; only Alice accepts it.
    Start,
    Message(&'a Message),
}

/// What a party emits on a turn: zero or more messages, and its final item
/// once it has terminated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StepOutput {
    pub send: Vec<Message>,
    pub finished: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AliceState {
    Start,
    AwaitVerdict { proposal: usize },
    AwaitDart { proposal: usize, round: u64 },
    Done { item: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobState {
    AwaitProposal,
    AwaitVerdict { dart: usize, round: u64 },
    Done { item: usize },
}

fn violation<T>(msg: String) -> Result<T> {
    Err(CouplingError::ProtocolViolation(msg))
}

/// Item `j` with `cum[j] ≤ x < cum[j + 1]`; falls back to the last item with
/// mass when `x` rounds up to the denominator.
fn locate(grid: &GridDistribution, x: f64) -> usize {
    let mut cum = 0u64;
    let mut last = 0;
    for (j, &m) in grid.numerators().iter().enumerate() {
        if m == 0 {
            continue;
        }
        cum += m;
        last = j;
        if x < cum as f64 {
            return j;
        }
    }
    last
}

/// One turn of Alice, who holds the grid distribution `grid` (P').
pub fn alice_step<S: UniformSource + ?Sized>(
    state: AliceState,
    incoming: Incoming<'_>,
    grid: &GridDistribution,
    shared: &S,
) -> Result<(AliceState, StepOutput)> {
    let d = grid.denominator();
    match (state, incoming) {
        (AliceState::Start, Incoming::Start) => {
            let x = shared.uniform_at(PROPOSAL_INDEX) * d as f64;
            let a = locate(grid, x);
            let out = StepOutput {
                send: vec![Message::Propose {
                    index: a,
                    prob_numerator: grid.numerator(a),
                }],
                finished: None,
            };
            Ok((AliceState::AwaitVerdict { proposal: a }, out))
        }
        (AliceState::AwaitVerdict { proposal }, Incoming::Message(Message::Approve)) => Ok((
            AliceState::Done { item: proposal },
            StepOutput {
                send: vec![],
                finished: Some(proposal),
            },
        )),
        (AliceState::AwaitVerdict { proposal }, Incoming::Message(Message::Reject)) => Ok((
            AliceState::AwaitDart { proposal, round: 1 },
            StepOutput::default(),
        )),
        (
            AliceState::AwaitDart { proposal, round },
            Incoming::Message(&Message::Dart {
                index,
                cum_numerator,
            }),
        ) => {
            if index >= grid.len() || cum_numerator > d {
                return violation(format!("dart ({index}, {cum_numerator}) is off the grid"));
            }
            let x = shared.uniform_at(round) * d as f64;
            // Reject while the dart sits under Alice's own mass for cell j.
            if x <= (cum_numerator + grid.numerator(index)) as f64 {
                Ok((
                    AliceState::AwaitDart {
                        proposal,
                        round: round + 1,
                    },
                    StepOutput {
                        send: vec![Message::Reject],
                        finished: None,
                    },
                ))
            } else {
                Ok((
                    AliceState::Done { item: proposal },
                    StepOutput {
                        send: vec![Message::Approve],
                        finished: Some(proposal),
                    },
                ))
            }
        }
        (state, incoming) => violation(format!("Alice in {state:?} cannot handle {incoming:?}")),
    }
}

fn throw_dart<S: UniformSource + ?Sized>(
    grid: &GridDistribution,
    shared: &S,
    round: u64,
) -> Result<(BobState, Message)> {
    if round > DART_CAP {
        return Err(CouplingError::ScanCapExceeded { cap: DART_CAP });
    }
    let x = shared.uniform_at(round) * grid.denominator() as f64;
    let j = locate(grid, x);
    let below: u64 = grid.numerators()[..j].iter().sum();
    Ok((
        BobState::AwaitVerdict { dart: j, round },
        Message::Dart {
            index: j,
            cum_numerator: below,
        },
    ))
}

/// One turn of Bob, who holds the grid distribution `grid` (Q').
pub fn bob_step<S: UniformSource + ?Sized>(
    state: BobState,
    incoming: Incoming<'_>,
    grid: &GridDistribution,
    shared: &S,
) -> Result<(BobState, StepOutput)> {
    let d = grid.denominator();
    match (state, incoming) {
        (
            BobState::AwaitProposal,
            Incoming::Message(&Message::Propose {
                index,
                prob_numerator,
            }),
        ) => {
            if index >= grid.len() || prob_numerator == 0 || prob_numerator > d {
                return violation(format!(
                    "proposal ({index}, {prob_numerator}) is off the grid"
                ));
            }
            // Accept with probability min(q_a / p_a, 1); strict so q_a = 0
            // can never be accepted.
            let coin = shared.uniform_at(BOB_COIN_INDEX);
            if coin * (prob_numerator as f64) < grid.numerator(index) as f64 {
                return Ok((
                    BobState::Done { item: index },
                    StepOutput {
                        send: vec![Message::Approve],
                        finished: Some(index),
                    },
                ));
            }
            let (next, dart) = throw_dart(grid, shared, 1)?;
            Ok((
                next,
                StepOutput {
                    send: vec![Message::Reject, dart],
                    finished: None,
                },
            ))
        }
        (BobState::AwaitVerdict { dart, .. }, Incoming::Message(Message::Approve)) => Ok((
            BobState::Done { item: dart },
            StepOutput {
                send: vec![],
                finished: Some(dart),
            },
        )),
        (BobState::AwaitVerdict { round, .. }, Incoming::Message(Message::Reject)) => {
            let (next, dart) = throw_dart(grid, shared, round + 1)?;
            Ok((
                next,
                StepOutput {
                    send: vec![dart],
                    finished: None,
                },
            ))
        }
        (state, incoming) => violation(format!("Bob in {state:?} cannot handle {incoming:?}")),
    }
}
