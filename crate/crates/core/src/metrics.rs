//! Distance measures between a re-generated candidate and its input.
//!
//! Similarity scores are turned into distances as `1 - s`. Text metrics are
//! directed: the candidate is always the re-generated sample and the
//! reference the sample that was fed to the generator.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bridge::BridgeClient;
use crate::error::{Error, Result};
use crate::sample::{ImageSample, Modality, Sample, TextSample, VectorSample};

/// Smoothing mass given to an n-gram order with no matches.
pub const BLEU_EPSILON: f64 = 1e-9;
pub const BLEU_DEFAULT_ORDER: usize = 4;
pub const SSIM_DEFAULT_WINDOW: usize = 8;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// `1 - BLEU` at sentence level.
///
/// Orders above the candidate length are dropped, so a short candidate that
/// equals its reference still scores zero. Orders with no matching n-gram
/// contribute `BLEU_EPSILON / total` instead of zero.
pub fn bleu_distance(candidate: &TextSample, reference: &TextSample, max_n: usize) -> Result<f64> {
    if max_n == 0 {
        return Err(Error::InvalidParameters("BLEU order must be at least 1".into()));
    }
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::EmptySample);
    }
    let cand = candidate.tokens();
    let refr = reference.tokens();
    let order = max_n.min(cand.len());

    let mut log_sum = 0.0;
    for n in 1..=order {
        let ref_counts = ngram_counts(refr, n);
        let cand_counts = ngram_counts(cand, n);
        let matches: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = (cand.len() + 1 - n) as f64;
        let p = if matches == 0 {
            BLEU_EPSILON / total
        } else {
            matches as f64 / total
        };
        log_sum += p.ln();
    }
    let geo_mean = (log_sum / order as f64).exp();
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let brevity = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    let bleu = (brevity * geo_mean).clamp(0.0, 1.0);
    Ok(1.0 - bleu)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - F1` of the LCS-based precision and recall.
pub fn rouge_l_distance(candidate: &TextSample, reference: &TextSample) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::EmptySample);
    }
    let lcs = lcs_len(candidate.tokens(), reference.tokens());
    if lcs == 0 {
        return Ok(1.0);
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let f1 = 2.0 * p * r / (p + r);
    Ok((1.0 - f1).max(0.0))
}

fn check_same_shape(a: &ImageSample, b: &ImageSample) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// Mean squared intensity difference on the 0..=255 scale.
pub fn mse_distance(a: &ImageSample, b: &ImageSample) -> Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

/// `1 - SSIM` over non-overlapping `window`×`window` tiles.
///
/// Statistics are population moments on the 0..=255 scale. Tiles that would
/// run past the bottom or right edge are skipped. Each channel is averaged
/// over its tiles and the channel scores are averaged.
pub fn ssim_distance(a: &ImageSample, b: &ImageSample, window: usize) -> Result<f64> {
    check_same_shape(a, b)?;
    if window == 0 || a.height() < window || a.width() < window {
        return Err(Error::WindowTooLarge {
            window,
            height: a.height(),
            width: a.width(),
        });
    }
    let tiles_r = a.height() / window;
    let tiles_c = a.width() / window;
    let n = (window * window) as f64;
    let mut channel_total = 0.0;
    for ch in 0..a.channels() {
        let mut tile_total = 0.0;
        for tr in 0..tiles_r {
            for tc in 0..tiles_c {
                let rows = tr * window..(tr + 1) * window;
                let cols = tc * window..(tc + 1) * window;
                let (mut sa, mut sb) = (0.0, 0.0);
                for r in rows.clone() {
                    for c in cols.clone() {
                        sa += f64::from(a.get(r, c, ch));
                        sb += f64::from(b.get(r, c, ch));
                    }
                }
                let (mu_a, mu_b) = (sa / n, sb / n);
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for r in rows.clone() {
                    for c in cols.clone() {
                        let da = f64::from(a.get(r, c, ch)) - mu_a;
                        let db = f64::from(b.get(r, c, ch)) - mu_b;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                }
                let (va, vb, cov) = (va / n, vb / n, cov / n);
                let num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2);
                let den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (va + vb + SSIM_C2);
                tile_total += num / den;
            }
        }
        channel_total += tile_total / (tiles_r * tiles_c) as f64;
    }
    let ssim = channel_total / a.channels() as f64;
    Ok(1.0 - ssim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VectorDistance {
    Euclidean,
    Cosine,
}

pub fn vector_distance(a: &VectorSample, b: &VectorSample, kind: VectorDistance) -> Result<f64> {
    raw_vector_distance(a.values(), b.values(), kind)
}

fn raw_vector_distance(a: &[f64], b: &[f64], kind: VectorDistance) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    match kind {
        VectorDistance::Euclidean => Ok(a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()),
        VectorDistance::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
        }
    }
}

fn image_as_f64(img: &ImageSample) -> Vec<f64> {
    img.pixels().iter().map(|&p| f64::from(p)).collect()
}

/// Metric identifier with its parameters.
///
/// Identifiers: `bleu` (order 4) or `bleuN`, `rouge_l`, `mse`, `ssim`
/// (window 8) or `ssimN`, `euclidean`, `cosine`, `bridge:<name>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistanceMetric {
    Bleu { max_n: usize },
    RougeL,
    Mse,
    Ssim { window: usize },
    Euclidean,
    Cosine,
    Bridge { name: String },
}

impl DistanceMetric {
    pub fn bleu() -> Self {
        DistanceMetric::Bleu {
            max_n: BLEU_DEFAULT_ORDER,
        }
    }

    pub fn ssim() -> Self {
        DistanceMetric::Ssim {
            window: SSIM_DEFAULT_WINDOW,
        }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Modalities the built-in implementation accepts. Bridge metrics accept
    /// anything and let the back-end decide.
    pub fn supports(&self, modality: Modality) -> bool {
        match self {
            DistanceMetric::Bleu { .. } | DistanceMetric::RougeL => modality == Modality::Text,
            DistanceMetric::Mse | DistanceMetric::Ssim { .. } => modality == Modality::Image,
            DistanceMetric::Euclidean | DistanceMetric::Cosine => {
                matches!(modality, Modality::Vector | Modality::Image)
            }
            DistanceMetric::Bridge { .. } => true,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, DistanceMetric::Bleu { .. } | DistanceMetric::RougeL)
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceMetric::Bleu { max_n } if *max_n == BLEU_DEFAULT_ORDER => f.write_str("bleu"),
            DistanceMetric::Bleu { max_n } => write!(f, "bleu{max_n}"),
            DistanceMetric::RougeL => f.write_str("rouge_l"),
            DistanceMetric::Mse => f.write_str("mse"),
            DistanceMetric::Ssim { window } if *window == SSIM_DEFAULT_WINDOW => f.write_str("ssim"),
            DistanceMetric::Ssim { window } => write!(f, "ssim{window}"),
            DistanceMetric::Euclidean => f.write_str("euclidean"),
            DistanceMetric::Cosine => f.write_str("cosine"),
            DistanceMetric::Bridge { name } => write!(f, "bridge:{name}"),
        }
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownMetric(s.to_owned());
        let numeric_suffix = |prefix: &str| -> Result<Option<usize>> {
            match s.strip_prefix(prefix) {
                None => Ok(None),
                Some("") => Ok(None),
                Some(rest) => match rest.parse::<usize>() {
                    Ok(n) if n >= 1 => Ok(Some(n)),
                    _ => Err(unknown()),
                },
            }
        };
        Ok(match s {
            "rouge_l" => DistanceMetric::RougeL,
            "mse" => DistanceMetric::Mse,
            "euclidean" => DistanceMetric::Euclidean,
            "cosine" => DistanceMetric::Cosine,
            _ if s.starts_with("bridge:") => {
                let name = &s["bridge:".len()..];
                if name.is_empty() {
                    return Err(unknown());
                }
                DistanceMetric::Bridge { name: name.into() }
            }
            _ if s.starts_with("bleu") => DistanceMetric::Bleu {
                max_n: numeric_suffix("bleu")?.unwrap_or(BLEU_DEFAULT_ORDER),
            },
            _ if s.starts_with("ssim") => DistanceMetric::Ssim {
                window: numeric_suffix("ssim")?.unwrap_or(SSIM_DEFAULT_WINDOW),
            },
            _ => return Err(unknown()),
        })
    }
}

impl TryFrom<String> for DistanceMetric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DistanceMetric> for String {
    fn from(m: DistanceMetric) -> Self {
        m.to_string()
    }
}

/// A metric ready to evaluate, with a connection when the metric is served
/// by an external back-end.
#[derive(Clone)]
pub struct Metric {
    kind: DistanceMetric,
    bridge: Option<Arc<BridgeClient>>,
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Metric").field("kind", &self.kind).finish()
    }
}

impl Metric {
    pub fn builtin(kind: DistanceMetric) -> Result<Self> {
        if let DistanceMetric::Bridge { name } = &kind {
            return Err(Error::InvalidParameters(format!(
                "metric bridge:{name} needs a bridge endpoint"
            )));
        }
        Ok(Metric { kind, bridge: None })
    }

    pub fn bridged(kind: DistanceMetric, client: Arc<BridgeClient>) -> Self {
        Metric {
            kind,
            bridge: Some(client),
        }
    }

    pub fn kind(&self) -> &DistanceMetric {
        &self.kind
    }

    pub fn id(&self) -> String {
        self.kind.id()
    }

    /// Distance between a re-generated `candidate` and its input `reference`.
    pub fn distance(&self, candidate: &Sample, reference: &Sample) -> Result<f64> {
        if candidate.modality() != reference.modality() {
            return Err(Error::ModalityMismatch {
                expected: reference.modality(),
                actual: candidate.modality(),
            });
        }
        if !self.kind.supports(reference.modality()) {
            return Err(Error::UnsupportedModality(format!(
                "metric {} does not apply to {} samples",
                self.kind,
                reference.modality()
            )));
        }
        let value = match (&self.kind, candidate, reference) {
            (DistanceMetric::Bleu { max_n }, Sample::Text(c), Sample::Text(r)) => {
                bleu_distance(c, r, *max_n)?
            }
            (DistanceMetric::RougeL, Sample::Text(c), Sample::Text(r)) => rouge_l_distance(c, r)?,
            (DistanceMetric::Mse, Sample::Image(a), Sample::Image(b)) => mse_distance(a, b)?,
            (DistanceMetric::Ssim { window }, Sample::Image(a), Sample::Image(b)) => {
                ssim_distance(a, b, *window)?
            }
            (DistanceMetric::Euclidean, Sample::Vector(a), Sample::Vector(b)) => {
                vector_distance(a, b, VectorDistance::Euclidean)?
            }
            (DistanceMetric::Cosine, Sample::Vector(a), Sample::Vector(b)) => {
                vector_distance(a, b, VectorDistance::Cosine)?
            }
            (DistanceMetric::Euclidean, Sample::Image(a), Sample::Image(b)) => {
                check_same_shape(a, b)?;
                raw_vector_distance(&image_as_f64(a), &image_as_f64(b), VectorDistance::Euclidean)?
            }
            (DistanceMetric::Cosine, Sample::Image(a), Sample::Image(b)) => {
                check_same_shape(a, b)?;
                raw_vector_distance(&image_as_f64(a), &image_as_f64(b), VectorDistance::Cosine)?
            }
            (DistanceMetric::Bridge { name }, c, r) => {
                let client = self.bridge.as_ref().ok_or_else(|| {
                    Error::InvalidParameters(format!("metric bridge:{name} has no endpoint"))
                })?;
                let d = client.distance(name, c, r)?;
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Bridge(format!(
                        "metric bridge:{name} returned invalid distance {d}"
                    )));
                }
                d
            }
            _ => unreachable!("modality support checked above"),
        };
        Ok(value)
    }
}

/// One measured distance `D(G(x), x)` or step distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub metric: String,
    pub sample: String,
    pub generator: String,
    pub k: usize,
    pub value: f64,
}

/// Writes records as CSV with the header `metric,sample,generator,k,value`.
pub fn write_distance_records<W: Write>(out: W, records: &[DistanceRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["metric", "sample", "generator", "k", "value"])?;
    for r in records {
        w.write_record([
            r.metric.as_str(),
            r.sample.as_str(),
            r.generator.as_str(),
            &r.k.to_string(),
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
