//! Discrete distributions over items `0..n`, total-variation identities and
//! grid discretization.

use serde::{Deserialize, Serialize};

use crate::error::{CouplingError, Result};
use crate::numeric::compensated_sum;

/// Relative slack applied before flooring onto the grid, so values such as
/// `0.1 * 10 = 0.9999999999999999` land on the grid point they represent.
const FLOOR_GUARD: f64 = 1e-12;

/// A normalized probability vector over items `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistribution {
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = CouplingError;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        DiscreteDistribution::from_weights(&raw.probs)
    }
}

impl DiscreteDistribution {
    /// Normalizes non-negative weights into a distribution. Entry order is
    /// preserved.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(CouplingError::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(CouplingError::InvalidWeight { index, value });
            }
        }
        let total = compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(CouplingError::AllZero);
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Point mass on `item`.
    pub fn point_mass(n: usize, item: usize) -> Result<Self> {
        if item >= n {
            return Err(CouplingError::InvalidParameter(format!(
                "item {item} out of range for n = {n}"
            )));
        }
        let mut w = vec![0.0; n];
        w[item] = 1.0;
        Self::from_weights(&w)
    }

    /// Uniform distribution over `n` items.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; n])
    }

    /// Uniform over the given subset of `0..n`.
    pub fn uniform_on(n: usize, subset: &[usize]) -> Result<Self> {
        let mut w = vec![0.0; n];
        for &i in subset {
            if i >= n {
                return Err(CouplingError::InvalidParameter(format!(
                    "item {i} out of range for n = {n}"
                )));
            }
            w[i] = 1.0;
        }
        Self::from_weights(&w)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, item: usize) -> f64 {
        self.probs[item]
    }

    /// Items with strictly positive probability.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
    }

    /// Inverse-CDF sample for `u` in `[0, 1)`. Never returns a zero-probability
    /// item.
    pub fn sample_inverse_cdf(&self, u: f64) -> usize {
        sample_weighted(self.probs.iter().copied(), u, 1.0)
            .expect("a valid distribution has positive mass")
    }
}

/// Inverse-CDF over unnormalized non-negative weights with known total.
/// Returns `None` only when every weight is zero. Float shortfall at the top of
/// the range falls back to the last positive item.
pub(crate) fn sample_weighted<I>(weights: I, u: f64, total: f64) -> Option<usize>
where
    I: IntoIterator<Item = f64>,
{
    let target = u * total;
    let mut cum = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.into_iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        cum += w;
        last_positive = Some(i);
        if target < cum {
            return Some(i);
        }
    }
    last_positive
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

/// Total variation distance `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_dims(p, q)?;
    let half_l1 = 0.5 * compensated_sum(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()));
    Ok(half_l1.clamp(0.0, 1.0))
}

/// `Σ min(p_i, q_i)`, which equals `1 − TV`.
pub fn sum_min(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_dims(p, q)?;
    Ok(compensated_sum(
        p.probs.iter().zip(&q.probs).map(|(a, b)| a.min(*b)),
    ))
}

/// `Σ max(p_i, q_i)`, which equals `1 + TV`.
pub fn sum_max(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_dims(p, q)?;
    Ok(compensated_sum(
        p.probs.iter().zip(&q.probs).map(|(a, b)| a.max(*b)),
    ))
}

/// A distribution whose probabilities are `numerators[i] / denominator`
/// exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridDistribution {
    numerators: Vec<u64>,
    denominator: u64,
}

#[derive(Deserialize)]
struct RawGrid {
    numerators: Vec<u64>,
    denominator: u64,
}

impl TryFrom<RawGrid> for GridDistribution {
    type Error = CouplingError;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridDistribution::new(raw.numerators, raw.denominator)
    }
}

impl GridDistribution {
    pub fn new(numerators: Vec<u64>, denominator: u64) -> Result<Self> {
        if numerators.is_empty() {
            return Err(CouplingError::Empty);
        }
        if denominator == 0 {
            return Err(CouplingError::InvalidGrid("denominator is zero".into()));
        }
        let total: u128 = numerators.iter().map(|&x| x as u128).sum();
        if total != denominator as u128 {
            return Err(CouplingError::InvalidGrid(format!(
                "numerators sum to {total}, expected {denominator}"
            )));
        }
        Ok(Self {
            numerators,
            denominator,
        })
    }

    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn numerators(&self) -> &[u64] {
        &self.numerators
    }

    pub fn numerator(&self, item: usize) -> u64 {
        self.numerators[item]
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    /// Cumulative numerators: `cumulative()[j] = Σ_{t<j} numerators[t]`, with
    /// a final entry equal to the denominator.
    pub fn cumulative(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.numerators.len() + 1);
        let mut acc = 0u64;
        out.push(0);
        for &x in &self.numerators {
            acc += x;
            out.push(acc);
        }
        out
    }

    pub fn to_distribution(&self) -> DiscreteDistribution {
        let d = self.denominator as f64;
        DiscreteDistribution {
            probs: self.numerators.iter().map(|&x| x as f64 / d).collect(),
        }
    }
}

/// Grid denominator `n / epsilon`. Values within `1e-9` (relative) of an
/// integer snap to it; otherwise the ceiling is used so the grid step never
/// exceeds `epsilon / n`.
pub fn grid_denominator(n: usize, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CouplingError::InvalidEpsilon(epsilon));
    }
    let exact = n as f64 / epsilon;
    let nearest = exact.round();
    let d = if (exact - nearest).abs() <= 1e-9 * exact {
        nearest
    } else {
        exact.ceil()
    };
    if d >= 2f64.powi(53) {
        return Err(CouplingError::InvalidParameter(format!(
            "grid denominator {d} is too large"
        )));
    }
    Ok(d as u64)
}

/// Rounds each probability down to the grid `epsilon / n` and assigns the
/// leftover mass to item 0. The result is within `epsilon` of `p` in total
/// variation.
pub fn discretize(p: &DiscreteDistribution, epsilon: f64) -> Result<GridDistribution> {
    let denominator = grid_denominator(p.len(), epsilon)?;
    let d = denominator as f64;
    let mut numerators: Vec<u64> = p
        .probs
        .iter()
        .map(|&x| (x * d * (1.0 + FLOOR_GUARD)).floor() as u64)
        .collect();
    let mut total: u64 = numerators.iter().sum();
    // The guard can overshoot by a unit in degenerate cases; take it back
    // from the largest cells.
    while total > denominator {
        let (imax, _) = numerators
            .iter()
            .enumerate()
            .max_by_key(|(_, &x)| x)
            .expect("non-empty");
        numerators[imax] -= 1;
        total -= 1;
    }
    numerators[0] += denominator - total;
    GridDistribution::new(numerators, denominator)
}
