//! Single-shot coupling protocols.
//!
//! Each protocol is split into per-party procedures. The communication-free
//! ones ([`wmh_sample`], [`gumbel_sample`]) take only the party's own
//! distribution and the shared stream, so neither party can observe the
//! other's input. [`optimal_coupling`] is the with-communication baseline:
//! Bob's step receives Alice's sample and her whole distribution.

use serde::{Deserialize, Serialize};

use crate::distributions::{sample_weighted, DiscreteDistribution};
use crate::error::{CouplingError, Result};
use crate::randomness::{SharedRandomSource, UniformSource};

/// Default cap on Weighted MinHash darts before giving up.
pub const WMH_SCAN_CAP: u64 = 10_000_000;

/// Stream index Alice uses for her draw in the optimal coupling.
const OPT_ALICE_INDEX: u64 = 0;
/// Stream index of Bob's accept coin in the optimal coupling.
const OPT_BOB_COIN_INDEX: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    OptimalCoupling,
    WeightedMinHash,
    Gumbel,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [
        ProtocolKind::OptimalCoupling,
        ProtocolKind::WeightedMinHash,
        ProtocolKind::Gumbel,
    ];

    /// Whether the two parties run without exchanging messages.
    pub fn is_communication_free(self) -> bool {
        !matches!(self, ProtocolKind::OptimalCoupling)
    }
}

/// Result of one coupling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub a: usize,
    pub b: usize,
    pub matched: bool,
    pub alice_draws: u64,
    pub bob_draws: u64,
}

impl CouplingOutcome {
    fn new(a: usize, b: usize, alice_draws: u64, bob_draws: u64) -> Self {
        Self {
            a,
            b,
            matched: a == b,
            alice_draws,
            bob_draws,
        }
    }
}

fn check_dims(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.len() != q.len() {
        return Err(CouplingError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

/// Alice's half of the optimal coupling: `a ~ P` by inverse CDF.
pub fn optimal_coupling_alice(p: &DiscreteDistribution, rand: &SharedRandomSource) -> usize {
    p.sample_inverse_cdf(rand.uniform_at(OPT_ALICE_INDEX))
}

/// Bob's half of the optimal coupling. Keeps `a` with probability
/// `min(1, q_a / p_a)`, otherwise draws from the residual
/// `max(0, q − p)` using the `bob-residual` child stream. Returns Bob's
/// sample and the number of uniforms he consumed.
pub fn optimal_coupling_bob(
    a: usize,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    rand: &SharedRandomSource,
) -> Result<(usize, u64)> {
    check_dims(p, q)?;
    if a >= p.len() {
        return Err(CouplingError::ProtocolViolation(format!(
            "proposed item {a} out of range"
        )));
    }
    let pa = p.prob(a);
    // Alice never emits a zero-probability item.
    assert!(pa > 0.0, "optimal coupling received item {a} with p_a = 0");
    let coin = rand.uniform_at(OPT_BOB_COIN_INDEX);
    if coin * pa < q.prob(a) {
        return Ok((a, 1));
    }
    let residual = || {
        p.probs()
            .iter()
            .zip(q.probs())
            .map(|(pi, qi)| (qi - pi).max(0.0))
    };
    let total: f64 = residual().sum();
    if total <= 0.0 {
        // Only reachable through rounding when P and Q agree to the last ulp.
        return Ok((a, 1));
    }
    let u = rand.derive("bob-residual").uniform_at(0);
    let b = sample_weighted(residual(), u, total).unwrap_or(a);
    Ok((b, 2))
}

/// Optimal coupling with communication: `Pr[a = b] = 1 − TV(P, Q)`.
pub fn optimal_coupling(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    rand: &SharedRandomSource,
) -> Result<CouplingOutcome> {
    check_dims(p, q)?;
    let a = optimal_coupling_alice(p, rand);
    let (b, bob_draws) = optimal_coupling_bob(a, p, q, rand)?;
    Ok(CouplingOutcome::new(a, b, 1, bob_draws))
}

/// Weighted MinHash with the default scan cap.
pub fn wmh_sample<S: UniformSource + ?Sized>(
    p: &DiscreteDistribution,
    rand: &S,
) -> Result<(usize, u64)> {
    wmh_sample_with_cap(p, rand, WMH_SCAN_CAP)
}

/// Weighted MinHash: throw darts `x_k = n·u_k` on `[0, n)` and return the
/// first item `j` whose cell `[j, j + p_j)` is hit. Returns the item and the
/// number of darts thrown.
pub fn wmh_sample_with_cap<S: UniformSource + ?Sized>(
    p: &DiscreteDistribution,
    rand: &S,
    cap: u64,
) -> Result<(usize, u64)> {
    let n = p.len();
    let scale = n as f64;
    for k in 0..cap {
        let x = scale * rand.uniform_at(k);
        let cell = (x.floor() as usize).min(n - 1);
        if x - (cell as f64) < p.prob(cell) {
            return Ok((cell, k + 1));
        }
    }
    Err(CouplingError::ScanCapExceeded { cap })
}

/// Gumbel sampling: `argmin_i −ln(u_i) / p_i` over the support, using stream
/// indices `0..n`. Ties go to the smallest index.
pub fn gumbel_sample<S: UniformSource + ?Sized>(p: &DiscreteDistribution, rand: &S) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::INFINITY;
    for (i, &pi) in p.probs().iter().enumerate() {
        if pi <= 0.0 {
            continue;
        }
        let score = -rand.uniform_at(i as u64).ln() / pi;
        if best == usize::MAX || score < best_score {
            best = i;
            best_score = score;
        }
    }
    debug_assert!(best != usize::MAX);
    best
}

/// Runs both parties of `kind` against the same source.
pub fn couple(
    kind: ProtocolKind,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    rand: &SharedRandomSource,
) -> Result<CouplingOutcome> {
    check_dims(p, q)?;
    match kind {
        ProtocolKind::OptimalCoupling => optimal_coupling(p, q, rand),
        ProtocolKind::WeightedMinHash => {
            let (a, da) = wmh_sample(p, rand)?;
            let (b, db) = wmh_sample(q, rand)?;
            Ok(CouplingOutcome::new(a, b, da, db))
        }
        ProtocolKind::Gumbel => {
            let a = gumbel_sample(p, rand);
            let b = gumbel_sample(q, rand);
            let n = p.len() as u64;
            Ok(CouplingOutcome::new(a, b, n, n))
        }
    }
}

/// Samples a single item from `p` with a communication-free protocol.
pub fn sample_with(
    kind: ProtocolKind,
    p: &DiscreteDistribution,
    rand: &SharedRandomSource,
) -> Result<usize> {
    match kind {
        ProtocolKind::OptimalCoupling => Ok(optimal_coupling_alice(p, rand)),
        ProtocolKind::WeightedMinHash => wmh_sample(p, rand).map(|(i, _)| i),
        ProtocolKind::Gumbel => Ok(gumbel_sample(p, rand)),
    }
}
