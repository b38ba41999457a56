//! Speculative decoding over toy autoregressive models.
//!
//! Randomness is keyed by position: the token at position `i` is drawn from
//! `derive(seed, "pos-i")`. With a communication-free sampler the target's
//! token then depends only on the seed, the target model and the prefix, and
//! the prefix is itself drafter-independent by induction. Standard
//! speculative decoding instead draws the target token through the optimal
//! coupling with the drafter's row, so the emitted text depends on the
//! drafter.

use serde::{Deserialize, Serialize};

use crate::distributions::{tv_distance, DiscreteDistribution};
use crate::error::{CouplingError, Result};
use crate::numeric::format_sig;
use crate::protocols::{gumbel_sample, optimal_coupling_alice, optimal_coupling_bob, wmh_sample};
use crate::randomness::SharedRandomSource;

/// How a toy model produces next-token rows.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Row of the last token; `start` (or row 0 when absent) for an empty
    /// prefix.
    MarkovOrder1 {
        rows: Vec<DiscreteDistribution>,
        start: Option<DiscreteDistribution>,
    },
    /// Base row mixed with deterministic noise:
    /// `(1 − s)·base + s·noise`, where the noise row depends on
    /// `(noise_seed, last token)`.
    Perturbed {
        base: Box<ToyLanguageModel>,
        noise_scale: f64,
        noise_seed: u64,
    },
}

/// Deterministic map from token prefix to next-token distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLanguageModel {
    name: String,
    vocab_size: usize,
    kind: ModelKind,
}

/// JSON form: `{"vocab": n, "rows": [[..], ..], "start": [..]?, "name": ..?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub vocab: usize,
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

fn context_label(prefix: &[usize]) -> String {
    match prefix.last() {
        Some(t) => format!("after-{t}"),
        None => "start".to_string(),
    }
}

impl ToyLanguageModel {
    /// Order-1 Markov model from an `n × n` table of weights (rows are
    /// normalized).
    pub fn markov(name: &str, rows: &[Vec<f64>], start: Option<&[f64]>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(CouplingError::InvalidParameter(format!(
                "vocabulary must have at least 2 tokens, got {n}"
            )));
        }
        let rows = rows
            .iter()
            .map(|r| {
                if r.len() != n {
                    return Err(CouplingError::DimensionMismatch {
                        left: r.len(),
                        right: n,
                    });
                }
                DiscreteDistribution::from_weights(r)
            })
            .collect::<Result<Vec<_>>>()?;
        let start = match start {
            Some(s) if s.len() != n => {
                return Err(CouplingError::DimensionMismatch {
                    left: s.len(),
                    right: n,
                })
            }
            Some(s) => Some(DiscreteDistribution::from_weights(s)?),
            None => None,
        };
        Ok(Self {
            name: name.to_string(),
            vocab_size: n,
            kind: ModelKind::MarkovOrder1 { rows, start },
        })
    }

    /// Markov model with random rows: i.i.d. exponential weights raised to
    /// `sharpness`, then normalized. Larger sharpness gives peakier rows.
    pub fn random_markov(name: &str, vocab: usize, sharpness: f64, seed: u64) -> Result<Self> {
        if !(sharpness.is_finite() && sharpness > 0.0) {
            return Err(CouplingError::InvalidParameter(format!(
                "sharpness must be positive, got {sharpness}"
            )));
        }
        let src = SharedRandomSource::new(seed, "toy-model");
        let draw_row = |label: &str| -> Vec<f64> {
            let s = src.derive(label);
            (0..vocab as u64)
                .map(|k| (-(1.0 - s.uniform_at(k)).ln()).powf(sharpness))
                .collect()
        };
        let rows: Vec<Vec<f64>> = (0..vocab).map(|t| draw_row(&format!("row-{t}"))).collect();
        let start = draw_row("start");
        Self::markov(name, &rows, Some(&start))
    }

    /// Noise-perturbed copy of `base`; `noise_scale` must lie in `[0, 1]`.
    pub fn perturbed(
        name: &str,
        base: ToyLanguageModel,
        noise_scale: f64,
        noise_seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise_scale) {
            return Err(CouplingError::InvalidParameter(format!(
                "noise scale must lie in [0, 1], got {noise_scale}"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            vocab_size: base.vocab_size,
            kind: ModelKind::Perturbed {
                base: Box::new(base),
                noise_scale,
                noise_seed,
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Next-token distribution after `prefix`.
    pub fn next_distribution(&self, prefix: &[usize]) -> Result<DiscreteDistribution> {
        if let Some(&token) = prefix.iter().find(|&&t| t >= self.vocab_size) {
            return Err(CouplingError::TokenOutOfRange {
                token,
                vocab: self.vocab_size,
            });
        }
        self.row_for(prefix)
    }

    fn row_for(&self, prefix: &[usize]) -> Result<DiscreteDistribution> {
        match &self.kind {
            ModelKind::MarkovOrder1 { rows, start } => Ok(match prefix.last() {
                Some(&t) => rows[t].clone(),
                None => start.clone().unwrap_or_else(|| rows[0].clone()),
            }),
            ModelKind::Perturbed {
                base,
                noise_scale,
                noise_seed,
            } => {
                let base_row = base.row_for(prefix)?;
                if *noise_scale == 0.0 {
                    return Ok(base_row);
                }
                let noise =
                    SharedRandomSource::new(*noise_seed, "perturb").derive(&context_label(prefix));
                let raw: Vec<f64> = (0..self.vocab_size as u64)
                    .map(|k| -(1.0 - noise.uniform_at(k)).ln())
                    .collect();
                let total: f64 = raw.iter().sum();
                let mixed: Vec<f64> = base_row
                    .probs()
                    .iter()
                    .zip(&raw)
                    .map(|(b, r)| (1.0 - noise_scale) * b + noise_scale * r / total)
                    .collect();
                DiscreteDistribution::from_weights(&mixed)
            }
        }
    }

    /// Materializes the model as an order-1 table. Exact for every model
    /// built from Markov bases, since perturbations depend only on the last
    /// token.
    pub fn to_model_file(&self) -> Result<ModelFile> {
        let rows = (0..self.vocab_size)
            .map(|t| self.row_for(&[t]).map(|r| r.probs().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let start = self.row_for(&[])?.probs().to_vec();
        Ok(ModelFile {
            vocab: self.vocab_size,
            rows,
            start: Some(start),
            name: Some(self.name.clone()),
        })
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        if file.rows.len() != file.vocab {
            return Err(CouplingError::DimensionMismatch {
                left: file.rows.len(),
                right: file.vocab,
            });
        }
        Self::markov(
            file.name.as_deref().unwrap_or("model"),
            &file.rows,
            file.start.as_deref(),
        )
    }
}

/// Communication-free sampler used by drafter-invariant decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvariantMethod {
    Gumbel,
    WeightedMinHash,
}

impl InvariantMethod {
    fn sample(self, p: &DiscreteDistribution, src: &SharedRandomSource) -> Result<usize> {
        match self {
            InvariantMethod::Gumbel => Ok(gumbel_sample(p, src)),
            InvariantMethod::WeightedMinHash => wmh_sample(p, src).map(|(i, _)| i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    Standard,
    DrafterInvariantGumbel,
    DrafterInvariantWmh,
    NoDrafter,
}

impl From<InvariantMethod> for GenerationMode {
    fn from(m: InvariantMethod) -> Self {
        match m {
            InvariantMethod::Gumbel => GenerationMode::DrafterInvariantGumbel,
            InvariantMethod::WeightedMinHash => GenerationMode::DrafterInvariantWmh,
        }
    }
}

/// One generated sequence. `draft_tokens`, `accepted` and `tv` are empty for
/// [`GenerationMode::NoDrafter`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub mode: GenerationMode,
    pub tokens: Vec<usize>,
    pub draft_tokens: Vec<usize>,
    pub accepted: Vec<bool>,
    /// Per-position TV between the drafter's and the target's rows.
    pub tv: Vec<f64>,
}

impl GenerationResult {
    pub const CSV_HEADER: &'static str = "position,token,draft_token,accepted,tv";

    /// CSV body rows (no header).
    pub fn csv_rows(&self) -> Vec<String> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| match self.draft_tokens.get(i) {
                Some(d) => format!(
                    "{i},{t},{d},{},{}",
                    u8::from(self.accepted[i]),
                    format_sig(self.tv[i], 12)
                ),
                None => format!("{i},{t},,,"),
            })
            .collect()
    }
}

/// Source for position `i` of a run keyed by `seed`.
pub fn position_source(seed: u64, position: usize) -> SharedRandomSource {
    SharedRandomSource::new(seed, "specdec").derive(&format!("pos-{position}"))
}

fn check_vocab(target: &ToyLanguageModel, drafter: &ToyLanguageModel) -> Result<()> {
    if target.vocab_size != drafter.vocab_size {
        return Err(CouplingError::VocabMismatch {
            left: target.vocab_size,
            right: drafter.vocab_size,
        });
    }
    Ok(())
}

fn check_length(length: usize) -> Result<()> {
    if length == 0 {
        return Err(CouplingError::InvalidParameter(
            "length must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Target-only generation with Gumbel sampling.
pub fn generate_no_drafter(
    target: &ToyLanguageModel,
    length: usize,
    seed: u64,
) -> Result<GenerationResult> {
    generate_no_drafter_with(target, length, seed, InvariantMethod::Gumbel)
}

/// Target-only generation with the given sampler.
pub fn generate_no_drafter_with(
    target: &ToyLanguageModel,
    length: usize,
    seed: u64,
    method: InvariantMethod,
) -> Result<GenerationResult> {
    check_length(length)?;
    let mut tokens = Vec::with_capacity(length);
    for i in 0..length {
        let row = target.next_distribution(&tokens)?;
        tokens.push(method.sample(&row, &position_source(seed, i))?);
    }
    Ok(GenerationResult {
        mode: GenerationMode::NoDrafter,
        tokens,
        draft_tokens: vec![],
        accepted: vec![],
        tv: vec![],
    })
}

/// Drafter-invariant speculative decoding: drafter and target sample from
/// the same position-keyed source with a communication-free protocol. The
/// emitted tokens equal [`generate_no_drafter_with`] for every drafter.
pub fn generate_drafter_invariant(
    target: &ToyLanguageModel,
    drafter: &ToyLanguageModel,
    length: usize,
    seed: u64,
    method: InvariantMethod,
) -> Result<GenerationResult> {
    check_vocab(target, drafter)?;
    check_length(length)?;
    let mut out = GenerationResult {
        mode: method.into(),
        tokens: Vec::with_capacity(length),
        draft_tokens: Vec::with_capacity(length),
        accepted: Vec::with_capacity(length),
        tv: Vec::with_capacity(length),
    };
    for i in 0..length {
        let src = position_source(seed, i);
        let q = target.next_distribution(&out.tokens)?;
        let p = drafter.next_distribution(&out.tokens)?;
        let draft = method.sample(&p, &src)?;
        let token = method.sample(&q, &src)?;
        out.tv.push(tv_distance(&p, &q)?);
        out.draft_tokens.push(draft);
        out.accepted.push(draft == token);
        out.tokens.push(token);
    }
    Ok(out)
}

/// Standard speculative decoding: the draft token is sampled from the
/// drafter and the target token is obtained through the optimal coupling
/// with the drafter's row, so acceptance happens with probability `1 − TV`.
pub fn generate_standard(
    target: &ToyLanguageModel,
    drafter: &ToyLanguageModel,
    length: usize,
    seed: u64,
) -> Result<GenerationResult> {
    check_vocab(target, drafter)?;
    check_length(length)?;
    let root = SharedRandomSource::new(seed, "specdec-standard");
    let mut out = GenerationResult {
        mode: GenerationMode::Standard,
        tokens: Vec::with_capacity(length),
        draft_tokens: Vec::with_capacity(length),
        accepted: Vec::with_capacity(length),
        tv: Vec::with_capacity(length),
    };
    for i in 0..length {
        let src = root.derive(&format!("pos-{i}"));
        let q = target.next_distribution(&out.tokens)?;
        let p = drafter.next_distribution(&out.tokens)?;
        let draft = optimal_coupling_alice(&p, &src);
        let (token, _) = optimal_coupling_bob(draft, &p, &q, &src)?;
        out.tv.push(tv_distance(&p, &q)?);
        out.draft_tokens.push(draft);
        out.accepted.push(draft == token);
        out.tokens.push(token);
    }
    Ok(out)
}

/// Acceptance summary over one or more drafted runs of equal length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceReport {
    pub runs: usize,
    pub positions: usize,
    /// Fraction of runs accepted at each position.
    pub per_position: Vec<f64>,
    /// Fraction of all (run, position) slots accepted.
    pub aggregate: f64,
}

impl AcceptanceReport {
    pub fn from_results(results: &[GenerationResult]) -> Result<Self> {
        let first = results.first().ok_or(CouplingError::NoDrafter)?;
        let positions = first.tokens.len();
        let mut counts = vec![0u64; positions];
        for r in results {
            if r.mode == GenerationMode::NoDrafter {
                return Err(CouplingError::NoDrafter);
            }
            if r.accepted.len() != positions {
                return Err(CouplingError::DimensionMismatch {
                    left: r.accepted.len(),
                    right: positions,
                });
            }
            for (c, &a) in counts.iter_mut().zip(&r.accepted) {
                *c += u64::from(a);
            }
        }
        let runs = results.len();
        let total: u64 = counts.iter().sum();
        Ok(Self {
            runs,
            positions,
            per_position: counts.iter().map(|&c| c as f64 / runs as f64).collect(),
            aggregate: total as f64 / (runs * positions).max(1) as f64,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("position,acceptance\n");
        for (i, a) in self.per_position.iter().enumerate() {
            s.push_str(&format!("{i},{}\n", format_sig(*a, 12)));
        }
        s.push_str(&format!("aggregate,{}\n", format_sig(self.aggregate, 12)));
        s
    }
}

/// Acceptance summary of a single drafted run.
pub fn acceptance_report(result: &GenerationResult) -> Result<AcceptanceReport> {
    AcceptanceReport::from_results(std::slice::from_ref(result))
}

/// Number of leading accepted drafts in each verification window of `gamma`
/// positions.
pub fn accepted_prefix_per_window(accepted: &[bool], gamma: usize) -> Vec<usize> {
    accepted
        .chunks(gamma.max(1))
        .map(|w| w.iter().take_while(|&&a| a).count())
        .collect()
}

/// Drafter/target row pair at one position of a target run.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionPair {
    pub position: usize,
    pub drafter_row: DiscreteDistribution,
    pub target_row: DiscreteDistribution,
}

/// Rows seen along the target's own (no-drafter, Gumbel) run; one pair per
/// position.
pub fn position_pairs(
    target: &ToyLanguageModel,
    drafter: &ToyLanguageModel,
    length: usize,
    seed: u64,
) -> Result<Vec<PositionPair>> {
    check_vocab(target, drafter)?;
    let run = generate_no_drafter(target, length, seed)?;
    (0..length)
        .map(|i| {
            let prefix = &run.tokens[..i];
            Ok(PositionPair {
                position: i,
                drafter_row: drafter.next_distribution(prefix)?,
                target_row: target.next_distribution(prefix)?,
            })
        })
        .collect()
}
