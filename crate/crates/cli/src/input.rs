//! Loading distributions, models and manifests from disk.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coupling::specdec::{ModelFile, ToyLanguageModel};
use coupling::{DiscreteDistribution, GridDistribution};
use serde::Deserialize;

#[derive(Deserialize)]
#[serde(untagged)]
enum DistributionFile {
    Probs(DiscreteDistribution),
    Grid(GridDistribution),
    Bare(Vec<f64>),
}

/// Reads a distribution from `{"probs": [..]}`, `{"numerators": [..],
/// "denominator": D}`, a bare JSON array, or CSV with one weight per row (an
/// optional header row is skipped).
pub fn load_distribution(path: &Path) -> Result<DiscreteDistribution> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_distribution(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_distribution(text: &str) -> Result<DiscreteDistribution> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return Ok(match serde_json::from_str::<DistributionFile>(trimmed)? {
            DistributionFile::Probs(p) => p,
            DistributionFile::Grid(g) => g.to_distribution(),
            DistributionFile::Bare(w) => DiscreteDistribution::from_weights(&w)?,
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut weights = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let Some(field) = record.get(0).filter(|f| !f.is_empty()) else {
            continue;
        };
        match field.parse::<f64>() {
            Ok(w) => weights.push(w),
            Err(_) if row == 0 => continue,
            Err(e) => bail!("row {}: {field:?} is not a number ({e})", row + 1),
        }
    }
    Ok(DiscreteDistribution::from_weights(&weights)?)
}

pub fn load_model(path: &Path) -> Result<ToyLanguageModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ModelFile =
        serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))?;
    let mut model = ToyLanguageModel::from_model_file(&file)
        .with_context(|| format!("invalid model {}", path.display()))?;
    if file.name.is_none() {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        model = ToyLanguageModel::from_model_file(&ModelFile { name: stem, ..file })?;
    }
    Ok(model)
}

/// Figure manifest: either explicit pairs or a model pair whose per-position
/// rows along a target run become the pairs.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Manifest {
    Pairs(Vec<PairEntry>),
    Specdec { specdec: SpecdecEntry },
}

#[derive(Debug, Clone, Deserialize)]
pub struct PairEntry {
    pub p: PathBuf,
    pub q: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SpecdecEntry {
    pub target: PathBuf,
    pub drafter: PathBuf,
    #[serde(default = "default_positions")]
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_positions() -> usize {
    32
}

/// Loads a manifest; relative paths resolve against its directory.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut manifest: Manifest = serde_json::from_str(&text).with_context(|| {
        format!(
            "parsing manifest {} (expected [{{\"p\":..,\"q\":..}}] or {{\"specdec\":{{..}}}})",
            path.display()
        )
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    match &mut manifest {
        Manifest::Pairs(pairs) => pairs.iter_mut().for_each(|e| {
            resolve(&mut e.p);
            resolve(&mut e.q);
        }),
        Manifest::Specdec { specdec } => {
            resolve(&mut specdec.target);
            resolve(&mut specdec.drafter);
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_distribution_form() {
        let forms = [
            r#"{"probs": [1, 1, 0]}"#,
            r#"{"numerators": [5, 5, 0], "denominator": 10}"#,
            "[0.5, 0.5, 0]",
            "0.5\n0.5\n0\n",
            "weight\n1\n1\n0\n",
        ];
        for f in forms {
            assert_eq!(
                parse_distribution(f).unwrap().probs(),
                &[0.5, 0.5, 0.0],
                "{f}"
            );
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_distribution("1\nx\n").is_err());
        assert!(parse_distribution(r#"{"probs": [-1, 2]}"#).is_err());
        assert!(parse_distribution(r#"{"numerators": [1, 1], "denominator": 3}"#).is_err());
        assert!(parse_distribution("").is_err());
    }
}
