//! Exact collision probabilities, worst-case bounds, Monte Carlo estimates
//! and the adversarial lower-bound family.

use serde::{Deserialize, Serialize};

use crate::distributions::{sum_min, tv_distance, DiscreteDistribution};
use crate::error::{CouplingError, Result};
use crate::exec::{count_where, Execution};
use crate::numeric::{compensated_sum, format_sig};
use crate::protocols::{couple, ProtocolKind};
use crate::randomness::SharedRandomSource;

/// Slack allowed on the ordering `bound ≤ wmh ≤ gumbel ≤ optimal`.
pub const ORDERING_SLACK: f64 = 1e-12;

/// Exact collision probability of Weighted MinHash:
/// `(1 − TV + Σ |p_i − q_i| · min(p_i, q_i)) / (1 + TV)`.
pub fn exact_collision_wmh(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    let tv = tv_distance(p, q)?;
    let correction = compensated_sum(
        p.probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| (a - b).abs() * a.min(*b)),
    );
    Ok((1.0 - tv + correction) / (1.0 + tv))
}

/// Exact collision probability of Gumbel sampling:
/// `Σ_{j: min(p_j, q_j) > 0} 1 / Σ_i max(p_i / p_j, q_i / q_j)`.
pub fn exact_collision_gumbel(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(CouplingError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let (pp, qq) = (p.probs(), q.probs());
    let terms = (0..pp.len()).filter(|&j| pp[j].min(qq[j]) > 0.0).map(|j| {
        let denom = compensated_sum(
            pp.iter()
                .zip(qq)
                .map(|(pi, qi)| (pi / pp[j]).max(qi / qq[j])),
        );
        1.0 / denom
    });
    Ok(compensated_sum(terms))
}

/// Worst-case communication-free guarantee `(1 − TV) / (1 + TV)`.
pub fn worst_case_bound(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    Ok(bound_from_tv(tv_distance(p, q)?))
}

/// `(1 − tv) / (1 + tv)`.
pub fn bound_from_tv(tv: f64) -> f64 {
    (1.0 - tv) / (1.0 + tv)
}

/// Exact collision probability for `kind`.
pub fn exact_collision(
    kind: ProtocolKind,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<f64> {
    match kind {
        ProtocolKind::OptimalCoupling => sum_min(p, q),
        ProtocolKind::WeightedMinHash => exact_collision_wmh(p, q),
        ProtocolKind::Gumbel => exact_collision_gumbel(p, q),
    }
}

/// All exact quantities for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub tv: f64,
    pub worst_case_bound: f64,
    pub exact_wmh: f64,
    pub exact_gumbel: f64,
    pub exact_optimal: f64,
}

impl CollisionReport {
    pub const CSV_HEADER: &'static str = "tv,bound,wmh,gumbel,optimal";

    /// One CSV row, 12 significant digits per value.
    pub fn to_csv_row(&self) -> String {
        [
            self.tv,
            self.worst_case_bound,
            self.exact_wmh,
            self.exact_gumbel,
            self.exact_optimal,
        ]
        .iter()
        .map(|&x| format_sig(x, 12))
        .collect::<Vec<_>>()
        .join(",")
    }
}

/// Assembles the exact collision report and checks the ordering chain.
pub fn collision_report(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<CollisionReport> {
    let tv = tv_distance(p, q)?;
    let report = CollisionReport {
        tv,
        worst_case_bound: bound_from_tv(tv),
        exact_wmh: exact_collision_wmh(p, q)?,
        exact_gumbel: exact_collision_gumbel(p, q)?,
        exact_optimal: 1.0 - tv,
    };
    let chain = [
        ("bound", report.worst_case_bound),
        ("wmh", report.exact_wmh),
        ("gumbel", report.exact_gumbel),
        ("optimal", report.exact_optimal),
    ];
    for w in chain.windows(2) {
        if w[0].1 > w[1].1 + ORDERING_SLACK {
            return Err(CouplingError::InvariantViolation(format!(
                "{} = {} exceeds {} = {}",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }
    Ok(report)
}

/// Fraction of matching trials with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub trials: u64,
    pub std_error: f64,
}

impl MonteCarloEstimate {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let estimate = hits as f64 / trials as f64;
        Self {
            estimate,
            trials,
            std_error: (estimate * (1.0 - estimate) / trials as f64).sqrt(),
        }
    }
}

/// Source for trial `t` of a Monte Carlo run keyed by `base_seed`.
pub fn trial_source(base_seed: u64, t: u64) -> SharedRandomSource {
    SharedRandomSource::new(base_seed, "monte-carlo").derive(&format!("trial-{t}"))
}

/// Estimates `Pr[a = b]` for `kind` over `trials` independent seeds.
pub fn monte_carlo_collision(
    kind: ProtocolKind,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    trials: u64,
    base_seed: u64,
) -> Result<MonteCarloEstimate> {
    monte_carlo_collision_with(kind, p, q, trials, base_seed, Execution::default())
}

/// [`monte_carlo_collision`] with an explicit execution mode. The result does
/// not depend on `exec`.
pub fn monte_carlo_collision_with(
    kind: ProtocolKind,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    trials: u64,
    base_seed: u64,
    exec: Execution,
) -> Result<MonteCarloEstimate> {
    if trials == 0 {
        return Err(CouplingError::InvalidParameter(
            "trials must be positive".into(),
        ));
    }
    if p.len() != q.len() {
        return Err(CouplingError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let root = SharedRandomSource::new(base_seed, "monte-carlo");
    let hits = count_where(trials, exec, |t| {
        let src = root.derive(&format!("trial-{t}"));
        Ok(couple(kind, p, q, &src)?.matched)
    })?;
    Ok(MonteCarloEstimate::from_counts(hits, trials))
}

/// The `d + 1` distributions over `d + 1` items where member `i` is uniform
/// on every item except `i`. Pairwise TV is exactly `1 / d`.
pub fn adversarial_family(d: usize) -> Result<Vec<DiscreteDistribution>> {
    if d < 2 {
        return Err(CouplingError::InvalidParameter(format!(
            "adversarial family needs d >= 2, got {d}"
        )));
    }
    (0..=d)
        .map(|i| {
            let w: Vec<f64> = (0..=d).map(|j| if j == i { 0.0 } else { 1.0 }).collect();
            DiscreteDistribution::from_weights(&w)
        })
        .collect()
}

/// `(1 − 1/d) / (1 + 1/d)`, the best worst-case collision any
/// communication-free protocol can guarantee on the family.
pub fn adversarial_bound(d: usize) -> f64 {
    bound_from_tv(1.0 / d as f64)
}

/// Random test pair over `n` items: i.i.d. exponential weights, and with
/// probability 1/4 a random subset of one side's entries zeroed (at least
/// one entry always survives).
pub fn random_pair(
    n: usize,
    src: &SharedRandomSource,
) -> Result<(DiscreteDistribution, DiscreteDistribution)> {
    let weights = |label: &str| -> Vec<f64> {
        let s = src.derive(label);
        (0..n as u64)
            .map(|k| -(1.0 - s.uniform_at(k)).ln())
            .collect()
    };
    let mut p = weights("p");
    let mut q = weights("q");
    let z = src.derive("zeros");
    if z.uniform_at(0) < 0.25 {
        let side = if z.uniform_at(1) < 0.5 {
            &mut p
        } else {
            &mut q
        };
        let keep = (z.uniform_at(2) * n as f64) as usize;
        for (i, w) in side.iter_mut().enumerate() {
            if i != keep && z.uniform_at(3 + i as u64) < 0.5 {
                *w = 0.0;
            }
        }
    }
    Ok((
        DiscreteDistribution::from_weights(&p)?,
        DiscreteDistribution::from_weights(&q)?,
    ))
}
