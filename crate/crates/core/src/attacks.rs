//! Perturbations applied before verification, the paraphrase attack, and
//! natural-versus-generated separation.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{auc, DensityReport};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::metrics::Metric;
use crate::regen::RegenMode;
use crate::sample::{quantize, ImageSample, Sample, TextSample};
use crate::seed::SeedSpec;
use crate::verify::one_step_distance;

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameters(format!("{name} {v} is outside [0, 1]")))
    }
}

/// Number of sites touched when perturbing a fraction of `n`.
pub fn site_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Replaces `round(rate·len)` distinct positions with uniform draws from
/// `vocabulary`.
pub fn perturb_text(
    x: &TextSample,
    rate: f64,
    vocabulary: &[String],
    seed: &SeedSpec,
) -> Result<TextSample> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    check_unit("substitution rate", rate)?;
    if vocabulary.is_empty() {
        return Err(Error::InvalidParameters("replacement vocabulary is empty".into()));
    }
    let mut rng = seed.rng();
    let mut tokens = x.tokens().to_vec();
    let count = site_count(rate, tokens.len());
    for pos in index::sample(&mut rng, tokens.len(), count) {
        tokens[pos] = vocabulary[rng.random_range(0..vocabulary.len())].clone();
    }
    TextSample::new(tokens)
}

fn pixel_sites(x: &ImageSample, fraction: f64, seed: &SeedSpec) -> (Vec<usize>, rand_chacha::ChaCha8Rng) {
    let n = x.height() * x.width();
    let mut rng = seed.rng();
    let mut sites = index::sample(&mut rng, n, site_count(fraction, n)).into_vec();
    sites.sort_unstable();
    (sites, rng)
}

/// Adds `Normal(mu, sigma²)` independently to every channel of
/// `round(fraction·H·W)` random pixel sites.
pub fn perturb_gaussian(
    x: &ImageSample,
    fraction: f64,
    mu: f64,
    sigma: f64,
    seed: &SeedSpec,
) -> Result<ImageSample> {
    check_unit("noise fraction", fraction)?;
    if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "noise needs finite mu and sigma >= 0, got mu={mu} sigma={sigma}"
        )));
    }
    let (sites, mut rng) = pixel_sites(x, fraction, seed);
    let mut out = x.clone();
    for site in sites {
        let (r, c) = (site / x.width(), site % x.width());
        for ch in 0..x.channels() {
            let z: f64 = rng.sample(StandardNormal);
            let v = f64::from(x.get(r, c, ch)) + mu + sigma * z;
            out.set(r, c, ch, quantize(v));
        }
    }
    Ok(out)
}

/// Scales every channel of `round(fraction·H·W)` random pixel sites by
/// `factor`.
pub fn perturb_brightness(
    x: &ImageSample,
    fraction: f64,
    factor: f64,
    seed: &SeedSpec,
) -> Result<ImageSample> {
    check_unit("brightness fraction", fraction)?;
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "brightness factor {factor} must be positive"
        )));
    }
    let (sites, _) = pixel_sites(x, fraction, seed);
    let mut out = x.clone();
    for site in sites {
        let (r, c) = (site / x.width(), site % x.width());
        for ch in 0..x.channels() {
            out.set(r, c, ch, quantize(f64::from(x.get(r, c, ch)) * factor));
        }
    }
    Ok(out)
}

/// A content perturbation with its parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    WordSubstitution { rate: f64 },
    GaussianNoise { fraction: f64, mu: f64, sigma: f64 },
    Brightness { fraction: f64, factor: f64 },
}

impl Perturbation {
    pub fn kind(&self) -> &'static str {
        match self {
            Perturbation::WordSubstitution { .. } => "word_substitution",
            Perturbation::GaussianNoise { .. } => "gaussian_noise",
            Perturbation::Brightness { .. } => "brightness",
        }
    }

    /// The swept parameter: rate, fraction or factor.
    pub fn param(&self) -> f64 {
        match self {
            Perturbation::WordSubstitution { rate } => *rate,
            Perturbation::GaussianNoise { fraction, .. } => *fraction,
            Perturbation::Brightness { factor, .. } => *factor,
        }
    }

    pub fn apply(&self, x: &Sample, vocabulary: &[String], seed: &SeedSpec) -> Result<Sample> {
        Ok(match self {
            Perturbation::WordSubstitution { rate } => {
                perturb_text(x.as_text()?, *rate, vocabulary, seed)?.into()
            }
            Perturbation::GaussianNoise { fraction, mu, sigma } => {
                perturb_gaussian(x.as_image()?, *fraction, *mu, *sigma, seed)?.into()
            }
            Perturbation::Brightness { fraction, factor } => {
                perturb_brightness(x.as_image()?, *fraction, *factor, seed)?.into()
            }
        })
    }
}

/// One full re-generation of `x` by `paraphraser`.
pub fn paraphrase_attack(x: &Sample, paraphraser: &Generator, seed: &SeedSpec) -> Result<Sample> {
    if x.modality() != paraphraser.modality() {
        return Err(Error::ModalityMismatch {
            expected: paraphraser.modality(),
            actual: x.modality(),
        });
    }
    paraphraser.regenerate(x, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseReport {
    pub authentic_id: String,
    pub paraphraser_id: String,
    /// Iterations of the authentic model before paraphrasing.
    pub k: usize,
    pub metric_id: String,
    /// One-step distances of the paraphrased samples per generator.
    pub series: BTreeMap<String, Vec<f64>>,
    /// `auc(paraphraser, authentic)`: near 0.5 when the two involved models
    /// cannot be told apart.
    pub involved_auc: f64,
    /// Per unrelated model, the smaller of its separation from the
    /// paraphraser and from the authentic model.
    pub unrelated_auc: BTreeMap<String, f64>,
}

/// Paraphrases each sample of `corpus` (the `k`-th iterates of `authentic`)
/// with `paraphraser`, then measures one-step distances under every model.
#[allow(clippy::too_many_arguments)]
pub fn paraphrase_report(
    corpus: &[Sample],
    authentic: &Generator,
    paraphraser: &Generator,
    generators: &[&Generator],
    metric: &Metric,
    k: usize,
    mode: &RegenMode,
    seed: &SeedSpec,
) -> Result<ParaphraseReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let attacked = corpus
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let s = seed.derive(i);
            let p = paraphrase_attack(x, paraphraser, &s.derive("paraphrase"))?;
            Ok((s, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut series = BTreeMap::new();
    let mut ids: Vec<&Generator> = vec![authentic, paraphraser];
    for g in generators {
        if !ids.iter().any(|h| h.id() == g.id()) {
            ids.push(g);
        }
    }
    for g in &ids {
        let values = attacked
            .par_iter()
            .map(|(s, x)| one_step_distance(x, g, metric, mode, s))
            .collect::<Result<Vec<_>>>()?;
        series.insert(g.id().to_owned(), values);
    }
    let d_a = &series[authentic.id()];
    let d_b = &series[paraphraser.id()];
    let involved_auc = auc(d_b, d_a);
    let unrelated_auc = ids[2..]
        .iter()
        .map(|g| {
            let d_u = &series[g.id()];
            (g.id().to_owned(), auc(d_b, d_u).min(auc(d_a, d_u)))
        })
        .collect();
    Ok(ParaphraseReport {
        authentic_id: authentic.id().to_owned(),
        paraphraser_id: paraphraser.id().to_owned(),
        k,
        metric_id: metric.id(),
        series,
        involved_auc,
        unrelated_auc,
    })
}

/// One-step distances under `generator` for natural and generated content;
/// the reference series is `generated`.
#[allow(clippy::too_many_arguments)]
pub fn natural_vs_generated(
    natural: &[Sample],
    generated: &[Sample],
    generator: &Generator,
    metric: &Metric,
    bins: usize,
    k: usize,
    mode: &RegenMode,
    seed: &SeedSpec,
) -> Result<DensityReport> {
    if natural.is_empty() || generated.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let run = |label: &str, corpus: &[Sample]| -> Result<Vec<f64>> {
        corpus
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let s = seed.derive(label).derive(i);
                one_step_distance(x, generator, metric, mode, &s)
            })
            .collect()
    };
    let mut series = BTreeMap::new();
    series.insert("generated".to_owned(), run("generated", generated)?);
    series.insert("natural".to_owned(), run("natural", natural)?);
    DensityReport::from_series(&metric.id(), k, "generated", series, bins)
}
