//! Command implementations. Each returns the rendered output so the binary
//! and the tests share one code path.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use coupling::analysis::{
    adversarial_bound, adversarial_family, collision_report, exact_collision_gumbel,
    exact_collision_wmh, monte_carlo_collision, CollisionReport, MonteCarloEstimate,
};
use coupling::distributions::tv_distance;
use coupling::lowcomm::{session_source, simulate, LowCommSetup, LowCommTally};
use coupling::numeric::format_sig;
use coupling::specdec::{
    acceptance_report, generate_drafter_invariant, generate_no_drafter_with, generate_standard,
    position_pairs, GenerationResult, InvariantMethod, ToyLanguageModel,
};
use coupling::{CouplingError, DiscreteDistribution, Execution, ProtocolKind, SharedRandomSource};
use serde::Serialize;

use crate::input::{load_distribution, load_manifest, load_model, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

fn sig(x: f64) -> String {
    format_sig(x, 12)
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_pair(p: &Path, q: &Path) -> Result<(DiscreteDistribution, DiscreteDistribution)> {
    let p = load_distribution(p)?;
    let q = load_distribution(q)?;
    if p.len() != q.len() {
        return Err(CouplingError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        }
        .into());
    }
    Ok((p, q))
}

pub fn report(p: &Path, q: &Path, format: Format) -> Result<String> {
    let (p, q) = load_pair(p, q)?;
    let r = collision_report(&p, &q)?;
    match format {
        Format::Csv => Ok(format!(
            "{}\n{}\n",
            CollisionReport::CSV_HEADER,
            r.to_csv_row()
        )),
        Format::Json => json(&r),
    }
}

/// One figure point: exact quantities plus empirical Gumbel and WMH rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigureRow {
    pub tv: f64,
    pub empirical_gumbel: MonteCarloEstimate,
    pub empirical_wmh: MonteCarloEstimate,
    pub bound: f64,
    pub optimal: f64,
}

impl FigureRow {
    pub const CSV_HEADER: &'static str = "tv,empirical_gumbel,empirical_wmh,bound,optimal";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            sig(self.tv),
            sig(self.empirical_gumbel.estimate),
            sig(self.empirical_wmh.estimate),
            sig(self.bound),
            sig(self.optimal)
        )
    }
}

/// Pairs named by a manifest. Specdec manifests yield (drafter row, target
/// row) at each position of the target's own run.
pub fn manifest_pairs(
    manifest: &Path,
) -> Result<Vec<(DiscreteDistribution, DiscreteDistribution)>> {
    match load_manifest(manifest)? {
        Manifest::Pairs(entries) => entries.iter().map(|e| load_pair(&e.p, &e.q)).collect(),
        Manifest::Specdec { specdec } => {
            let target = load_model(&specdec.target)?;
            let drafter = load_model(&specdec.drafter)?;
            Ok(
                position_pairs(&target, &drafter, specdec.length, specdec.seed)?
                    .into_iter()
                    .map(|pp| (pp.drafter_row, pp.target_row))
                    .collect(),
            )
        }
    }
}

pub fn figure_rows(
    pairs: &[(DiscreteDistribution, DiscreteDistribution)],
    trials: u64,
    seed: u64,
) -> Result<Vec<FigureRow>> {
    let root = SharedRandomSource::new(seed, "figure");
    pairs
        .iter()
        .enumerate()
        .map(|(i, (p, q))| {
            let pair_seed = root.derive(&format!("pair-{i}")).u64_at(0);
            let r = collision_report(p, q)?;
            Ok(FigureRow {
                tv: r.tv,
                empirical_gumbel: monte_carlo_collision(
                    ProtocolKind::Gumbel,
                    p,
                    q,
                    trials,
                    pair_seed,
                )?,
                empirical_wmh: monte_carlo_collision(
                    ProtocolKind::WeightedMinHash,
                    p,
                    q,
                    trials,
                    pair_seed,
                )?,
                bound: r.worst_case_bound,
                optimal: r.exact_optimal,
            })
        })
        .collect()
}

pub fn figure(manifest: &Path, trials: u64, seed: u64, format: Format) -> Result<String> {
    let rows = figure_rows(&manifest_pairs(manifest)?, trials, seed)?;
    match format {
        Format::Csv => {
            let mut out = format!("{}\n", FigureRow::CSV_HEADER);
            for r in &rows {
                out.push_str(&r.to_csv_row());
                out.push('\n');
            }
            Ok(out)
        }
        Format::Json => json(&rows),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundPair {
    pub i: usize,
    pub j: usize,
    pub tv: f64,
    pub empirical_gumbel: f64,
    pub empirical_wmh: f64,
    pub exact_gumbel: f64,
    pub exact_wmh: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundTable {
    pub d: usize,
    pub tv: f64,
    pub bound: f64,
    pub trials: u64,
    pub min_empirical_gumbel: f64,
    pub min_empirical_wmh: f64,
    pub min_exact_gumbel: f64,
    pub min_exact_wmh: f64,
    pub pairs: Vec<LowerBoundPair>,
}

pub fn lowerbound_table(d: usize, trials: u64, seed: u64) -> Result<LowerBoundTable> {
    let family = adversarial_family(d)?;
    let root = SharedRandomSource::new(seed, "lowerbound");
    let mut pairs = Vec::new();
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            let (p, q) = (&family[i], &family[j]);
            let pair_seed = root.derive(&format!("pair-{i}-{j}")).u64_at(0);
            pairs.push(LowerBoundPair {
                i,
                j,
                tv: tv_distance(p, q)?,
                empirical_gumbel: monte_carlo_collision(
                    ProtocolKind::Gumbel,
                    p,
                    q,
                    trials,
                    pair_seed,
                )?
                .estimate,
                empirical_wmh: monte_carlo_collision(
                    ProtocolKind::WeightedMinHash,
                    p,
                    q,
                    trials,
                    pair_seed,
                )?
                .estimate,
                exact_gumbel: exact_collision_gumbel(p, q)?,
                exact_wmh: exact_collision_wmh(p, q)?,
            });
        }
    }
    let min = |f: fn(&LowerBoundPair) -> f64| pairs.iter().map(f).fold(f64::INFINITY, f64::min);
    Ok(LowerBoundTable {
        d,
        tv: 1.0 / d as f64,
        bound: adversarial_bound(d),
        trials,
        min_empirical_gumbel: min(|p| p.empirical_gumbel),
        min_empirical_wmh: min(|p| p.empirical_wmh),
        min_exact_gumbel: min(|p| p.exact_gumbel),
        min_exact_wmh: min(|p| p.exact_wmh),
        pairs,
    })
}

/// CSV: one row per pair, then a `min` row; the bound repeats on every row.
pub fn lowerbound(d: usize, trials: u64, seed: u64, format: Format) -> Result<String> {
    let t = lowerbound_table(d, trials, seed)?;
    if format == Format::Json {
        return json(&t);
    }
    let mut out =
        String::from("i,j,tv,bound,empirical_gumbel,empirical_wmh,exact_gumbel,exact_wmh\n");
    for p in &t.pairs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.i,
            p.j,
            sig(p.tv),
            sig(t.bound),
            sig(p.empirical_gumbel),
            sig(p.empirical_wmh),
            sig(p.exact_gumbel),
            sig(p.exact_wmh)
        )?;
    }
    writeln!(
        out,
        "min,min,{},{},{},{},{},{}",
        sig(t.tv),
        sig(t.bound),
        sig(t.min_empirical_gumbel),
        sig(t.min_empirical_wmh),
        sig(t.min_exact_gumbel),
        sig(t.min_exact_wmh)
    )?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct LowCommSummary {
    pub sessions: u64,
    pub n: usize,
    pub epsilon: f64,
    pub denominator: u64,
    pub tv: f64,
    pub grid_tv: f64,
    pub match_rate: f64,
    pub grid_match_rate: f64,
    pub mean_messages: f64,
    pub mean_dart_rounds: f64,
    pub mean_bits: f64,
    pub max_bits: u64,
}

impl LowCommSummary {
    pub const CSV_HEADER: &'static str = "sessions,n,epsilon,denominator,tv,grid_tv,match_rate,grid_match_rate,mean_messages,mean_dart_rounds,mean_bits,max_bits";

    fn new(
        setup: &LowCommSetup,
        p: &DiscreteDistribution,
        q: &DiscreteDistribution,
        t: &LowCommTally,
    ) -> Result<Self> {
        Ok(Self {
            sessions: t.sessions,
            n: setup.n(),
            epsilon: setup.epsilon(),
            denominator: setup.denominator(),
            tv: tv_distance(p, q)?,
            grid_tv: tv_distance(setup.p_rounded(), setup.q_rounded())?,
            match_rate: t.match_rate(),
            grid_match_rate: t.grid_match_rate(),
            mean_messages: t.mean_messages(),
            mean_dart_rounds: t.mean_dart_rounds(),
            mean_bits: t.mean_bits(),
            max_bits: t.max_bits,
        })
    }

    fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.sessions,
            self.n,
            sig(self.epsilon),
            self.denominator,
            sig(self.tv),
            sig(self.grid_tv),
            sig(self.match_rate),
            sig(self.grid_match_rate),
            sig(self.mean_messages),
            sig(self.mean_dart_rounds),
            sig(self.mean_bits),
            self.max_bits
        )
    }
}

pub fn lowcomm_summary(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    epsilon: f64,
    sessions: u64,
    seed: u64,
) -> Result<LowCommSummary> {
    let setup = LowCommSetup::new(p, q, epsilon)?;
    let tally = simulate(&setup, sessions, seed, Execution::Parallel)?;
    LowCommSummary::new(&setup, p, q, &tally)
}

/// Writes every session's transcript as JSON lines, each followed by its
/// trailer line.
pub fn write_transcripts(
    path: &Path,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    epsilon: f64,
    sessions: u64,
    seed: u64,
) -> Result<()> {
    let setup = LowCommSetup::new(p, q, epsilon)?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for t in 0..sessions {
        let r = setup.run(&session_source(seed, t))?;
        w.write_all(r.transcript.to_json_lines().as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn lowcomm(
    p: &Path,
    q: &Path,
    epsilon: f64,
    sessions: u64,
    seed: u64,
    transcripts: Option<&Path>,
    format: Format,
) -> Result<String> {
    let (p, q) = load_pair(p, q)?;
    let summary = lowcomm_summary(&p, &q, epsilon, sessions, seed)?;
    if let Some(path) = transcripts {
        write_transcripts(path, &p, &q, epsilon, sessions, seed)?;
    }
    match format {
        Format::Csv => Ok(format!(
            "{}\n{}\n",
            LowCommSummary::CSV_HEADER,
            summary.to_csv_row()
        )),
        Format::Json => json(&summary),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SpecdecMode {
    /// Drafter-invariant decoding with a communication-free sampler.
    Invariant,
    /// Standard speculative decoding (optimal coupling per position).
    Standard,
}

#[derive(Debug, Clone, Serialize)]
pub struct DrafterRun {
    pub drafter: String,
    pub acceptance: f64,
    pub result: GenerationResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecdecOutput {
    pub target: String,
    pub seed: u64,
    pub length: usize,
    /// Emitted tokens shared by every drafter (invariant mode only).
    pub tokens: Option<Vec<usize>>,
    pub runs: Vec<DrafterRun>,
}

pub fn specdec_runs(
    target: &ToyLanguageModel,
    drafters: &[ToyLanguageModel],
    length: usize,
    seed: u64,
    mode: SpecdecMode,
    method: InvariantMethod,
) -> Result<SpecdecOutput> {
    if drafters.is_empty() {
        return Err(CouplingError::NoDrafter.into());
    }
    let mut runs = Vec::with_capacity(drafters.len());
    for d in drafters {
        let result = match mode {
            SpecdecMode::Invariant => generate_drafter_invariant(target, d, length, seed, method)?,
            SpecdecMode::Standard => generate_standard(target, d, length, seed)?,
        };
        runs.push(DrafterRun {
            drafter: d.name().to_string(),
            acceptance: acceptance_report(&result)?.aggregate,
            result,
        });
    }
    let tokens = match mode {
        SpecdecMode::Invariant => {
            let solo = generate_no_drafter_with(target, length, seed, method)?.tokens;
            if let Some(r) = runs.iter().find(|r| r.result.tokens != solo) {
                return Err(CouplingError::InvariantViolation(format!(
                    "drafter {} changed the emitted tokens",
                    r.drafter
                ))
                .into());
            }
            Some(solo)
        }
        SpecdecMode::Standard => None,
    };
    Ok(SpecdecOutput {
        target: target.name().to_string(),
        seed,
        length,
        tokens,
        runs,
    })
}

/// CSV: in invariant mode one `token` column followed by
/// `draft_k,accepted_k,tv_k` per drafter; in standard mode `token_k` is
/// per drafter too.
pub fn render_specdec(out: &SpecdecOutput, format: Format) -> Result<String> {
    if format == Format::Json {
        return json(out);
    }
    let mut s = String::from("position");
    if out.tokens.is_some() {
        s.push_str(",token");
    }
    for k in 1..=out.runs.len() {
        if out.tokens.is_none() {
            write!(s, ",token_{k}")?;
        }
        write!(s, ",draft_{k},accepted_{k},tv_{k}")?;
    }
    s.push('\n');
    for i in 0..out.length {
        write!(s, "{i}")?;
        if let Some(tokens) = &out.tokens {
            write!(s, ",{}", tokens[i])?;
        }
        for r in &out.runs {
            if out.tokens.is_none() {
                write!(s, ",{}", r.result.tokens[i])?;
            }
            write!(
                s,
                ",{},{},{}",
                r.result.draft_tokens[i],
                u8::from(r.result.accepted[i]),
                sig(r.result.tv[i])
            )?;
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn specdec(
    target: &Path,
    drafters: &[impl AsRef<Path>],
    length: usize,
    seed: u64,
    mode: SpecdecMode,
    method: InvariantMethod,
    format: Format,
) -> Result<(String, SpecdecOutput)> {
    let target = load_model(target)?;
    let drafters = drafters
        .iter()
        .map(|d| load_model(d.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let out = specdec_runs(&target, &drafters, length, seed, mode, method)?;
    Ok((render_specdec(&out, format)?, out))
}

/// A random Markov model, or a perturbed copy of `base` when given.
pub fn gen_model(
    vocab: usize,
    sharpness: f64,
    seed: u64,
    base: Option<&Path>,
    noise_scale: f64,
    name: Option<&str>,
) -> Result<String> {
    let model = match base {
        Some(path) => {
            let base = load_model(path)?;
            let name = name
                .map(str::to_string)
                .unwrap_or_else(|| format!("{}-perturbed-{seed}", base.name()));
            ToyLanguageModel::perturbed(&name, base, noise_scale, seed)?
        }
        None => ToyLanguageModel::random_markov(name.unwrap_or("markov"), vocab, sharpness, seed)?,
    };
    json(&model.to_model_file()?)
}

/// Exit status for a failed command: 3 for protocol failures, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let protocol = err
        .chain()
        .filter_map(|e| e.downcast_ref::<CouplingError>())
        .any(CouplingError::is_protocol_failure);
    if protocol {
        3
    } else {
        2
    }
}
