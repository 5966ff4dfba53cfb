//! Authorship verification by the one-step distance ratio.
//!
//! For a sample `x` claimed by `G_a`, both `G_a` and a contrast model `G_c`
//! re-generate it once. The claim is accepted when
//! `r = D(G_c(x), x) / D(G_a(x), x) > 1 + δ`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::metrics::Metric;
use crate::regen::{regenerate_with_mode, RegenMode};
use crate::sample::Sample;
use crate::seed::SeedSpec;

/// Lower bound applied to `d_auth` before dividing.
pub const EPS_FLOOR: f64 = 1e-12;

/// Identifies a sample by the generator that produced it and its index in
/// that generator's corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleRef {
    pub source: String,
    pub index: usize,
}

impl SampleRef {
    pub fn new(source: impl Into<String>, index: usize) -> Self {
        SampleRef {
            source: source.into(),
            index,
        }
    }

    /// Base seed for every re-generation of this sample.
    pub fn seed(&self, base: &SeedSpec) -> SeedSpec {
        base.derive(self.source.as_str()).derive(self.index)
    }
}

impl fmt::Display for SampleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.source, self.index)
    }
}

/// Seed of the one-step re-generation of a sample by `generator_id`.
pub fn regen_seed(sample_seed: &SeedSpec, generator_id: &str) -> SeedSpec {
    sample_seed.derive(format!("regen:{generator_id}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub sample_ref: String,
    pub authentic_id: String,
    pub contrast_id: String,
    pub d_auth: f64,
    pub d_contrast: f64,
    pub ratio: f64,
    pub delta: f64,
    pub verified: bool,
}

/// The ratio and decision for a pair of one-step distances.
///
/// Both distances zero gives `r = 1`, which never verifies.
pub fn decide(d_auth: f64, d_contrast: f64, delta: f64) -> (f64, bool) {
    let ratio = if d_auth == 0.0 && d_contrast == 0.0 {
        1.0
    } else {
        d_contrast / d_auth.max(EPS_FLOOR)
    };
    (ratio, ratio > 1.0 + delta)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameters(format!("delta {delta} must be positive")))
    }
}

/// One-step distance `D(G(x), x)` under `mode`.
pub fn one_step_distance(
    x: &Sample,
    generator: &Generator,
    metric: &Metric,
    mode: &RegenMode,
    sample_seed: &SeedSpec,
) -> Result<f64> {
    let y = regenerate_with_mode(generator, x, mode, &regen_seed(sample_seed, generator.id()))?;
    metric.distance(&y, x)
}

/// Runs the ratio test on one sample. `sample_seed` is the sample's own
/// seed; each model re-generates under a child derived from its id.
#[allow(clippy::too_many_arguments)]
pub fn verify_sample(
    x: &Sample,
    authentic: &Generator,
    contrast: &Generator,
    metric: &Metric,
    delta: f64,
    mode: &RegenMode,
    sample_seed: &SeedSpec,
    sample_ref: &str,
) -> Result<VerificationOutcome> {
    check_delta(delta)?;
    for g in [authentic, contrast] {
        if g.modality() != x.modality() {
            return Err(Error::ModalityMismatch {
                expected: g.modality(),
                actual: x.modality(),
            });
        }
    }
    let d_auth = one_step_distance(x, authentic, metric, mode, sample_seed)?;
    let d_contrast = one_step_distance(x, contrast, metric, mode, sample_seed)?;
    let (ratio, verified) = decide(d_auth, d_contrast, delta);
    Ok(VerificationOutcome {
        sample_ref: sample_ref.to_owned(),
        authentic_id: authentic.id().to_owned(),
        contrast_id: contrast.id().to_owned(),
        d_auth,
        d_contrast,
        ratio,
        delta,
        verified,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub authentic_id: String,
    pub contrast_id: String,
    pub k: usize,
    pub delta: f64,
    pub metric_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
}

impl PairEvaluation {
    /// Builds an evaluation from counts; precision is 1 when nothing was
    /// verified.
    #[allow(clippy::too_many_arguments)]
    pub fn from_counts(
        authentic_id: &str,
        contrast_id: &str,
        k: usize,
        delta: f64,
        metric_id: &str,
        tp: usize,
        fp: usize,
        fn_: usize,
        tn: usize,
    ) -> Self {
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        PairEvaluation {
            authentic_id: authentic_id.to_owned(),
            contrast_id: contrast_id.to_owned(),
            k,
            delta,
            metric_id: metric_id.to_owned(),
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
        }
    }
}

/// `(d_auth, d_contrast)` for every positive and negative of one pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairDistances {
    pub positives: Vec<(f64, f64)>,
    pub negatives: Vec<(f64, f64)>,
}

impl PairDistances {
    pub fn evaluate(
        &self,
        authentic_id: &str,
        contrast_id: &str,
        k: usize,
        delta: f64,
        metric_id: &str,
    ) -> PairEvaluation {
        let tp = self
            .positives
            .iter()
            .filter(|&&(a, c)| decide(a, c, delta).1)
            .count();
        let fp = self
            .negatives
            .iter()
            .filter(|&&(a, c)| decide(a, c, delta).1)
            .count();
        PairEvaluation::from_counts(
            authentic_id,
            contrast_id,
            k,
            delta,
            metric_id,
            tp,
            fp,
            self.positives.len() - tp,
            self.negatives.len() - fp,
        )
    }
}

/// One-step distances of every sample under every generator and metric.
///
/// Computed once and shared by every ordered pair and every `δ`.
#[derive(Debug, Clone, Default)]
pub struct OneStepTable {
    generators: Vec<String>,
    metrics: Vec<String>,
    /// Per sample: `[generator][metric]` flattened.
    rows: HashMap<SampleRef, Vec<f64>>,
}

impl OneStepTable {
    pub fn compute(
        samples: &[(SampleRef, Sample)],
        generators: &[&Generator],
        metrics: &[Metric],
        mode: &RegenMode,
        base: &SeedSpec,
    ) -> Result<Self> {
        let rows = samples
            .par_iter()
            .map(|(r, x)| {
                let sample_seed = r.seed(base);
                let mut row = Vec::with_capacity(generators.len() * metrics.len());
                for g in generators {
                    let y = regenerate_with_mode(g, x, mode, &regen_seed(&sample_seed, g.id()))?;
                    for m in metrics {
                        row.push(m.distance(&y, x)?);
                    }
                }
                Ok((r.clone(), row))
            })
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(OneStepTable {
            generators: generators.iter().map(|g| g.id().to_owned()).collect(),
            metrics: metrics.iter().map(Metric::id).collect(),
            rows,
        })
    }

    pub fn generators(&self) -> &[String] {
        &self.generators
    }

    pub fn metrics(&self) -> &[String] {
        &self.metrics
    }

    pub fn get(&self, sample: &SampleRef, generator: &str, metric: &str) -> Option<f64> {
        let gi = self.generators.iter().position(|g| g == generator)?;
        let mi = self.metrics.iter().position(|m| m == metric)?;
        self.rows
            .get(sample)
            .map(|row| row[gi * self.metrics.len() + mi])
    }

    fn lookup(&self, sample: &SampleRef, generator: &str, metric: &str) -> Result<f64> {
        self.get(sample, generator, metric).ok_or_else(|| {
            Error::MissingArtifacts(format!(
                "no one-step distance for {sample} under {generator}/{metric}"
            ))
        })
    }

    /// One-step distances of `samples` under `generator`.
    pub fn series(&self, samples: &[SampleRef], generator: &str, metric: &str) -> Result<Vec<f64>> {
        samples
            .iter()
            .map(|s| self.lookup(s, generator, metric))
            .collect()
    }

    /// Distances for the pair `(authentic, contrast)`: positives come from
    /// the authentic corpus, negatives from the contrast corpus, both judged
    /// with `authentic` as the claimed author.
    pub fn pair(
        &self,
        positives: &[SampleRef],
        negatives: &[SampleRef],
        authentic: &str,
        contrast: &str,
        metric: &str,
    ) -> Result<PairDistances> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let both = |s: &SampleRef| -> Result<(f64, f64)> {
            Ok((
                self.lookup(s, authentic, metric)?,
                self.lookup(s, contrast, metric)?,
            ))
        };
        Ok(PairDistances {
            positives: positives.iter().map(both).collect::<Result<_>>()?,
            negatives: negatives.iter().map(both).collect::<Result<_>>()?,
        })
    }
}

fn corpus_refs(source: &str, n: usize) -> Vec<SampleRef> {
    (0..n).map(|i| SampleRef::new(source, i)).collect()
}

/// Precision and recall of the ratio test for one ordered pair.
///
/// Every sample of `corpus_a` is a positive and every sample of `corpus_c`
/// a negative, both tested with `authentic` as the claimed author.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pair(
    corpus_a: &[Sample],
    corpus_c: &[Sample],
    authentic: &Generator,
    contrast: &Generator,
    metric: &Metric,
    delta: f64,
    k: usize,
    mode: &RegenMode,
    base: &SeedSpec,
) -> Result<PairEvaluation> {
    let mut evals = delta_sweep(
        corpus_a, corpus_c, authentic, contrast, metric, &[delta], k, mode, base,
    )?;
    Ok(evals.remove(0))
}

/// One evaluation per `δ`, all computed from the same re-generations.
#[allow(clippy::too_many_arguments)]
pub fn delta_sweep(
    corpus_a: &[Sample],
    corpus_c: &[Sample],
    authentic: &Generator,
    contrast: &Generator,
    metric: &Metric,
    deltas: &[f64],
    k: usize,
    mode: &RegenMode,
    base: &SeedSpec,
) -> Result<Vec<PairEvaluation>> {
    check_deltas(deltas)?;
    if corpus_a.is_empty() || corpus_c.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let pos = corpus_refs(authentic.id(), corpus_a.len());
    let neg = corpus_refs(contrast.id(), corpus_c.len());
    let samples: Vec<(SampleRef, Sample)> = pos
        .iter()
        .cloned()
        .zip(corpus_a.iter().cloned())
        .chain(neg.iter().cloned().zip(corpus_c.iter().cloned()))
        .collect();
    let table = OneStepTable::compute(&samples, &[authentic, contrast], std::slice::from_ref(metric), mode, base)?;
    let dists = table.pair(&pos, &neg, authentic.id(), contrast.id(), &metric.id())?;
    Ok(deltas
        .iter()
        .map(|&d| dists.evaluate(authentic.id(), contrast.id(), k, d, &metric.id()))
        .collect())
}

pub fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::InvalidParameters("no delta values given".into()));
    }
    for &d in deltas {
        check_delta(d)?;
    }
    if deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameters(
            "delta values must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Writes evaluations as CSV rows
/// `authentic,contrast,k,delta,metric,tp,fp,fn,tn,precision,recall`.
pub fn write_pairs_csv<W: Write>(out: W, evals: &[PairEvaluation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "authentic", "contrast", "k", "delta", "metric", "tp", "fp", "fn", "tn", "precision",
        "recall",
    ])?;
    for e in evals {
        w.write_record([
            e.authentic_id.clone(),
            e.contrast_id.clone(),
            e.k.to_string(),
            e.delta.to_string(),
            e.metric_id.clone(),
            e.tp.to_string(),
            e.fp.to_string(),
            e.fn_.to_string(),
            e.tn.to_string(),
            format!("{:.6}", e.precision),
            format!("{:.6}", e.recall),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridValue {
    Precision,
    Recall,
}

/// Authentic × contrast matrix of one statistic. Diagonal cells are empty.
pub fn write_grid_csv<W: Write>(
    out: W,
    ids: &[String],
    evals: &[&PairEvaluation],
    value: GridValue,
) -> Result<()> {
    let cells: BTreeMap<(&str, &str), f64> = evals
        .iter()
        .map(|e| {
            let v = match value {
                GridValue::Precision => e.precision,
                GridValue::Recall => e.recall,
            };
            ((e.authentic_id.as_str(), e.contrast_id.as_str()), v)
        })
        .collect();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut header = vec!["authentic".to_owned()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for a in ids {
        let mut row = vec![a.clone()];
        for c in ids {
            row.push(
                cells
                    .get(&(a.as_str(), c.as_str()))
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
