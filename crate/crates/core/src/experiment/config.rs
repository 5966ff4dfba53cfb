//! Declarative experiment description.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::BridgeEndpoint;
use crate::error::{Error, Result};
use crate::generator::{GeneratorParams, GeneratorSpec};
use crate::metrics::DistanceMetric;
use crate::regen::SegmentScheme;
use crate::sample::Modality;

fn default_sentence_length() -> usize {
    20
}

fn default_bins() -> usize {
    30
}

fn default_lipschitz_samples() -> usize {
    50
}

fn default_segments() -> i64 {
    8
}

fn default_watermark_n() -> i64 {
    10
}

fn default_brightness_fraction() -> f64 {
    0.1
}

fn default_sigma() -> f64 {
    4.0
}

fn default_natural_size() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub size: usize,
    /// Explicit prompts; when absent, prompts are drawn from the seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<String>>,
    /// Length of seeded text prompts.
    #[serde(default = "default_sentence_length")]
    pub sentence_length: usize,
    /// Out-of-group words mixed into seeded text prompts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filler: Vec<String>,
}

/// Re-generation mode with integer fields kept signed so that validation can
/// name the offending field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ModeSpec {
    Full,
    Watermark {
        #[serde(default = "default_watermark_n")]
        n: i64,
    },
    Fingerprint {
        #[serde(default = "default_segments")]
        segments: i64,
        #[serde(default)]
        scheme: SegmentScheme,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordSubstitutionSweep {
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSweep {
    pub fractions: Vec<f64>,
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrightnessSweep {
    #[serde(default = "default_brightness_fraction")]
    pub fraction: f64,
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaphraseSpec {
    pub authentic: String,
    pub by: String,
    pub iterations: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// Iterate the perturbations are applied to; defaults to `iterations`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Threshold for attack sweeps; defaults to the first of `deltas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_substitution: Option<WordSubstitutionSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian_noise: Option<GaussianSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brightness: Option<BrightnessSweep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paraphrase: Vec<ParaphraseSpec>,
}

impl AttackConfig {
    pub fn is_empty(&self) -> bool {
        self.word_substitution.is_none()
            && self.gaussian_noise.is_none()
            && self.brightness.is_none()
            && self.paraphrase.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NaturalSource {
    /// Uniform draws: pixel intensities for images, coordinates in
    /// `[low, high]` for vectors, vocabulary tokens for text.
    Uniform {
        #[serde(default)]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
    },
    /// Sample files: canonical JSON, or PGM/PPM images.
    Files { paths: Vec<PathBuf> },
}

fn default_high() -> f64 {
    255.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NaturalSpec {
    #[serde(default = "default_natural_size")]
    pub size: usize,
    pub source: NaturalSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_lipschitz_samples")]
    pub lipschitz_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_metric: Option<DistanceMetric>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bins: default_bins(),
            lipschitz_samples: default_lipschitz_samples(),
            lipschitz_metric: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    pub zoo: Vec<GeneratorSpec>,
    pub corpus: CorpusSpec,
    /// Number of re-generation steps `K`.
    pub iterations: i64,
    /// Iterates at which verification runs; defaults to `[iterations]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verify_at: Vec<i64>,
    pub metrics: Vec<DistanceMetric>,
    /// Metrics used for verification; defaults to `metrics` without `mse`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_metrics: Option<Vec<DistanceMetric>>,
    pub deltas: Vec<f64>,
    pub mode: ModeSpec,
    /// One-step re-generation mode for verification and analysis; defaults
    /// to 8-segment fingerprinting for images and full otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_mode: Option<ModeSpec>,
    #[serde(default, skip_serializing_if = "AttackConfig::is_empty")]
    pub attacks: AttackConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub natural: Option<NaturalSpec>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bridges: BTreeMap<String, BridgeEndpoint>,
    /// Image shape for mask plans when no synthetic inpainter fixes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_shape: Option<(usize, usize)>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn k(&self) -> usize {
        self.iterations.max(0) as usize
    }

    pub fn verify_ks(&self) -> Vec<usize> {
        if self.verify_at.is_empty() {
            vec![self.k()]
        } else {
            self.verify_at.iter().map(|&k| k.max(0) as usize).collect()
        }
    }

    pub fn modality(&self) -> Option<Modality> {
        self.zoo.first().map(|g| g.params.modality())
    }

    pub fn verification_metrics(&self) -> Vec<DistanceMetric> {
        match &self.verify_metrics {
            Some(v) => v.clone(),
            None => self
                .metrics
                .iter()
                .filter(|m| **m != DistanceMetric::Mse)
                .cloned()
                .collect(),
        }
    }

    pub fn verification_mode(&self) -> ModeSpec {
        match &self.verify_mode {
            Some(m) => m.clone(),
            None if self.modality() == Some(Modality::Image) => ModeSpec::Fingerprint {
                segments: default_segments(),
                scheme: SegmentScheme::Striped,
            },
            None => ModeSpec::Full,
        }
    }

    pub fn attack_k(&self) -> usize {
        self.attacks.k.unwrap_or(self.k())
    }

    pub fn attack_delta(&self) -> f64 {
        self.attacks
            .delta
            .unwrap_or_else(|| self.deltas.first().copied().unwrap_or(0.05))
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        if self.zoo.is_empty() {
            return Err(Error::config("zoo", "at least one generator is required"));
        }
        let modality = self.zoo[0].params.modality();
        let mut ids = HashSet::new();
        for (i, g) in self.zoo.iter().enumerate() {
            let field = format!("zoo[{i}]");
            if g.id.is_empty() || g.id.contains(['/', '\\']) || g.id.starts_with('.') {
                return Err(Error::config(
                    format!("{field}.id"),
                    format!("`{}` is not a usable identifier", g.id),
                ));
            }
            if !ids.insert(g.id.as_str()) {
                return Err(Error::config(format!("{field}.id"), format!("duplicate id `{}`", g.id)));
            }
            if g.params.modality() != modality {
                return Err(Error::config(
                    format!("{field}.kind"),
                    format!("all generators must share one modality ({modality})"),
                ));
            }
            match &g.params {
                GeneratorParams::SyntheticVector(p) => {
                    if !(p.contraction > 0.0 && p.contraction < 1.0) {
                        return Err(Error::config(
                            format!("{field}.contraction"),
                            format!("{} is outside (0, 1)", p.contraction),
                        ));
                    }
                }
                GeneratorParams::Bridge(b) if !self.bridges.contains_key(&b.endpoint) => {
                    return Err(Error::config(
                        format!("{field}.endpoint"),
                        format!("no bridge named `{}`", b.endpoint),
                    ));
                }
                _ => {}
            }
            g.params
                .validate()
                .map_err(|e| Error::config(field.clone(), e.to_string()))?;
        }

        if self.corpus.size == 0 {
            return Err(Error::config("corpus.size", "must be at least 1"));
        }
        if let Some(p) = &self.corpus.prompts {
            if p.len() < self.corpus.size {
                return Err(Error::config(
                    "corpus.prompts",
                    format!("{} prompts for a corpus of {}", p.len(), self.corpus.size),
                ));
            }
            if let Some(i) = p.iter().position(|s| s.trim().is_empty()) {
                return Err(Error::config(format!("corpus.prompts[{i}]"), "empty prompt"));
            }
        } else if modality == Modality::Text && self.corpus.sentence_length == 0 {
            return Err(Error::config("corpus.sentence_length", "must be at least 1"));
        }

        if self.iterations < 0 {
            return Err(Error::config(
                "iterations",
                format!("K must be >= 0, got {}", self.iterations),
            ));
        }
        for (i, &k) in self.verify_at.iter().enumerate() {
            if k < 0 || k > self.iterations {
                return Err(Error::config(
                    format!("verify_at[{i}]"),
                    format!("{k} is outside 0..={}", self.iterations),
                ));
            }
        }

        if self.metrics.is_empty() {
            return Err(Error::config("metrics", "at least one metric is required"));
        }
        let check_metric = |field: String, m: &DistanceMetric| -> Result<()> {
            if let DistanceMetric::Bridge { name } = m {
                if !self.bridges.contains_key(name) {
                    return Err(Error::config(field, format!("no bridge named `{name}`")));
                }
            } else if !m.supports(modality) {
                return Err(Error::config(
                    field,
                    format!("metric {m} does not apply to {modality} samples"),
                ));
            }
            Ok(())
        };
        for (i, m) in self.metrics.iter().enumerate() {
            check_metric(format!("metrics[{i}]"), m)?;
        }
        let vm = self.verification_metrics();
        if vm.is_empty() {
            return Err(Error::config("verify_metrics", "no metric left for verification"));
        }
        for (i, m) in vm.iter().enumerate() {
            check_metric(format!("verify_metrics[{i}]"), m)?;
        }

        if self.deltas.is_empty() {
            return Err(Error::config("deltas", "at least one delta is required"));
        }
        for (i, &d) in self.deltas.iter().enumerate() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config(format!("deltas[{i}]"), format!("delta must be > 0, got {d}")));
            }
        }
        if self.deltas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("deltas", "values must be strictly increasing"));
        }

        self.validate_mode("mode", &self.mode, modality)?;
        if let Some(m) = &self.verify_mode {
            self.validate_mode("verify_mode", m, modality)?;
        }
        self.validate_attacks(modality)?;

        if let Some(n) = &self.natural {
            if n.size == 0 {
                return Err(Error::config("natural.size", "must be at least 1"));
            }
            match &n.source {
                NaturalSource::Uniform { low, high } => {
                    if !(low.is_finite() && high.is_finite() && low < high) {
                        return Err(Error::config("natural.source", "needs finite low < high"));
                    }
                }
                NaturalSource::Files { paths } if paths.is_empty() => {
                    return Err(Error::config("natural.source.paths", "no files listed"));
                }
                NaturalSource::Files { .. } => {}
            }
        }

        if self.analysis.bins == 0 {
            return Err(Error::config("analysis.bins", "must be at least 1"));
        }
        if let Some(m) = &self.analysis.lipschitz_metric {
            check_metric("analysis.lipschitz_metric".into(), m)?;
        }
        Ok(())
    }

    fn validate_mode(&self, field: &str, mode: &ModeSpec, modality: Modality) -> Result<()> {
        match mode {
            ModeSpec::Full => Ok(()),
            _ if modality != Modality::Image => Err(Error::config(
                field,
                format!("mask modes need image generators, zoo is {modality}"),
            )),
            ModeSpec::Watermark { n } if *n < 2 => Err(Error::config(
                format!("{field}.n"),
                format!("N must be >= 2, got {n}"),
            )),
            ModeSpec::Fingerprint { segments, .. } if *segments < 2 => Err(Error::config(
                format!("{field}.segments"),
                format!("T must be >= 2, got {segments}"),
            )),
            _ => Ok(()),
        }
    }

    fn validate_attacks(&self, modality: Modality) -> Result<()> {
        let a = &self.attacks;
        if let Some(k) = a.k {
            if k > self.k() {
                return Err(Error::config("attacks.k", format!("{k} exceeds iterations")));
            }
        }
        if let Some(d) = a.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("attacks.delta", format!("delta must be > 0, got {d}")));
            }
        }
        let unit = |field: String, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(field, format!("{v} is outside [0, 1]")))
            }
        };
        if let Some(w) = &a.word_substitution {
            if modality != Modality::Text {
                return Err(Error::config("attacks.word_substitution", "needs a text zoo"));
            }
            for (i, &r) in w.rates.iter().enumerate() {
                unit(format!("attacks.word_substitution.rates[{i}]"), r)?;
            }
        }
        if let Some(g) = &a.gaussian_noise {
            if modality != Modality::Image {
                return Err(Error::config("attacks.gaussian_noise", "needs an image zoo"));
            }
            for (i, &r) in g.fractions.iter().enumerate() {
                unit(format!("attacks.gaussian_noise.fractions[{i}]"), r)?;
            }
            if !(g.sigma >= 0.0 && g.sigma.is_finite()) {
                return Err(Error::config("attacks.gaussian_noise.sigma", "must be >= 0"));
            }
            if !g.mu.is_finite() {
                return Err(Error::config("attacks.gaussian_noise.mu", "must be finite"));
            }
        }
        if let Some(b) = &a.brightness {
            if modality != Modality::Image {
                return Err(Error::config("attacks.brightness", "needs an image zoo"));
            }
            unit("attacks.brightness.fraction".into(), b.fraction)?;
            for (i, &f) in b.factors.iter().enumerate() {
                if !(f > 0.0 && f.is_finite()) {
                    return Err(Error::config(
                        format!("attacks.brightness.factors[{i}]"),
                        format!("factor must be > 0, got {f}"),
                    ));
                }
            }
        }
        for (i, p) in a.paraphrase.iter().enumerate() {
            let field = format!("attacks.paraphrase[{i}]");
            for id in [&p.authentic, &p.by] {
                if !self.zoo.iter().any(|g| &g.id == id) {
                    return Err(Error::config(field, format!("unknown generator `{id}`")));
                }
            }
            if p.iterations.is_empty() {
                return Err(Error::config(format!("{field}.iterations"), "no iteration counts"));
            }
            if let Some(&k) = p.iterations.iter().find(|&&k| k > self.k()) {
                return Err(Error::config(
                    format!("{field}.iterations"),
                    format!("{k} exceeds iterations"),
                ));
            }
        }
        Ok(())
    }
}
