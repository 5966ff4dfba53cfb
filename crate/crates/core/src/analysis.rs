//! Convergence curves, one-step distance densities and Lipschitz estimates.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::metrics::Metric;
use crate::regen::{RegenMode, RegenTrace};
use crate::sample::Sample;
use crate::seed::SeedSpec;
use crate::verify::{one_step_distance, regen_seed};

/// Base distances below this are skipped by the Lipschitz estimator.
pub const MIN_BASE_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub generator_id: String,
    pub metric_id: String,
    /// Corpus mean of the step distance for `k = 1..K`.
    pub means: Vec<f64>,
    /// Population standard deviation, same indexing.
    pub stddevs: Vec<f64>,
}

pub fn convergence_curve(traces: &[RegenTrace], metric_id: &str) -> Result<ConvergenceCurve> {
    let first = traces.first().ok_or(Error::EmptyInput)?;
    let k = first.iterations();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(traces.len()); k];
    for t in traces {
        if t.generator_id != first.generator_id {
            return Err(Error::InconsistentTraces(format!(
                "generators {} and {} mixed",
                first.generator_id, t.generator_id
            )));
        }
        if t.iterations() != k {
            return Err(Error::InconsistentTraces(format!(
                "iteration counts {k} and {} mixed",
                t.iterations()
            )));
        }
        let d = t.distances(metric_id).ok_or_else(|| {
            Error::InconsistentTraces(format!("trace lacks metric {metric_id}"))
        })?;
        if d.len() != k {
            return Err(Error::InconsistentTraces(format!(
                "{} step distances for {k} iterations",
                d.len()
            )));
        }
        for (col, &v) in columns.iter_mut().zip(d) {
            col.push(v);
        }
    }
    let (means, stddevs) = columns.iter().map(|c| mean_std(c)).unzip();
    Ok(ConvergenceCurve {
        generator_id: first.generator_id.clone(),
        metric_id: metric_id.to_owned(),
        means,
        stddevs,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `P(a < c) + ½·P(a = c)` for `a` drawn from `authentic`, `c` from
/// `contrast`. Returns 0.5 when either side is empty.
pub fn auc(authentic: &[f64], contrast: &[f64]) -> f64 {
    if authentic.is_empty() || contrast.is_empty() {
        return 0.5;
    }
    let mut sorted = contrast.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut score = 0.0;
    for &a in authentic {
        let below_or_eq = sorted.partition_point(|&c| c <= a);
        let below = sorted.partition_point(|&c| c < a);
        let greater = sorted.len() - below_or_eq;
        let equal = below_or_eq - below;
        score += greater as f64 + 0.5 * equal as f64;
    }
    score / (authentic.len() as f64 * contrast.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub metric_id: String,
    pub k: usize,
    /// The series every other series is compared against.
    pub reference_id: String,
    pub series: BTreeMap<String, Vec<f64>>,
    /// Shared edges, `bins + 1` values.
    pub bin_edges: Vec<f64>,
    pub histograms: BTreeMap<String, Vec<usize>>,
    /// `auc(reference, other)` for every other series.
    pub auc_separation: BTreeMap<String, f64>,
}

impl DensityReport {
    pub fn from_series(
        metric_id: &str,
        k: usize,
        reference_id: &str,
        series: BTreeMap<String, Vec<f64>>,
        bins: usize,
    ) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameters("histogram needs at least one bin".into()));
        }
        let reference = series.get(reference_id).ok_or_else(|| {
            Error::InvalidParameters(format!("reference series {reference_id} missing"))
        })?;
        if series.values().any(Vec::is_empty) {
            return Err(Error::EmptyInput);
        }
        let all = series.values().flatten().copied();
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let bin_edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();
        let histograms = series
            .iter()
            .map(|(id, values)| {
                let mut h = vec![0usize; bins];
                for &v in values {
                    let i = (((v - lo) / width).floor() as usize).min(bins - 1);
                    h[i] += 1;
                }
                (id.clone(), h)
            })
            .collect();
        let auc_separation = series
            .iter()
            .filter(|(id, _)| id.as_str() != reference_id)
            .map(|(id, values)| (id.clone(), auc(reference, values)))
            .collect();
        Ok(DensityReport {
            metric_id: metric_id.to_owned(),
            k,
            reference_id: reference_id.to_owned(),
            series,
            bin_edges,
            histograms,
            auc_separation,
        })
    }

    /// Long-format CSV `generator,k,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["generator", "k", "value"])?;
        for (id, values) in &self.series {
            for v in values {
                w.write_record([id.clone(), self.k.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One-step distances of the `k`-th iterates of `authentic` under every
/// generator, with `authentic` as the reference series.
#[allow(clippy::too_many_arguments)]
pub fn density_report(
    corpus: &[Sample],
    authentic: &Generator,
    generators: &[&Generator],
    metric: &Metric,
    bins: usize,
    k: usize,
    mode: &RegenMode,
    seed: &SeedSpec,
) -> Result<DensityReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !generators.iter().any(|g| g.id() == authentic.id()) {
        return Err(Error::InvalidParameters(format!(
            "authentic model {} is not among the generators",
            authentic.id()
        )));
    }
    let mut series = BTreeMap::new();
    for g in generators {
        let values = corpus
            .par_iter()
            .enumerate()
            .map(|(i, x)| one_step_distance(x, g, metric, mode, &seed.derive(i)))
            .collect::<Result<Vec<_>>>()?;
        series.insert(g.id().to_owned(), values);
    }
    DensityReport::from_series(&metric.id(), k, authentic.id(), series, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub generator_id: String,
    pub metric_id: String,
    pub ratios: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    /// Pairs dropped because their base distance was below 1e-12.
    pub skipped: usize,
}

/// `D(f(x), f(y)) / D(x, y)` over all unordered pairs of `corpus`.
///
/// Each sample is mapped once, under `seed/i/"regen:<id>"`.
pub fn estimate_lipschitz(
    generator: &Generator,
    corpus: &[Sample],
    metric: &Metric,
    seed: &SeedSpec,
) -> Result<LipschitzEstimate> {
    if corpus.len() < 2 {
        return Err(Error::InsufficientSamples);
    }
    let mapped = corpus
        .par_iter()
        .enumerate()
        .map(|(i, x)| generator.regenerate(x, &regen_seed(&seed.derive(i), generator.id())))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..corpus.len())
        .flat_map(|i| (i + 1..corpus.len()).map(move |j| (i, j)))
        .collect();
    let results = pairs
        .par_iter()
        .map(|&(i, j)| {
            let base = metric.distance(&corpus[j], &corpus[i])?;
            if base < MIN_BASE_DISTANCE {
                return Ok(None);
            }
            Ok(Some(metric.distance(&mapped[j], &mapped[i])? / base))
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let ratios: Vec<f64> = results.into_iter().flatten().collect();
    if ratios.is_empty() {
        return Err(Error::InsufficientSamples);
    }
    let (mean, std) = mean_std(&ratios);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LipschitzEstimate {
        generator_id: generator.id().to_owned(),
        metric_id: metric.id(),
        ratios,
        mean,
        std,
        max,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::DistanceMetric;
    use crate::sample::VectorSample;

    fn brute_auc(a: &[f64], c: &[f64]) -> f64 {
        let mut s = 0.0;
        for x in a {
            for y in c {
                if x < y {
                    s += 1.0;
                } else if x == y {
                    s += 0.5;
                }
            }
        }
        s / (a.len() * c.len()) as f64
    }

    #[test]
    fn auc_matches_pairwise_count() {
        let a = [0.1, 0.2, 0.2, 0.5, 0.9];
        let c = [0.2, 0.3, 0.05, 0.9, 0.9, 1.0];
        assert!((auc(&a, &c) - brute_auc(&a, &c)).abs() < 1e-15);
        assert_eq!(auc(&[0.0], &[1.0]), 1.0);
        assert_eq!(auc(&[1.0], &[1.0]), 0.5);
    }

    #[test]
    fn single_trace_curve() {
        let mut sd = BTreeMap::new();
        sd.insert("euclidean".to_owned(), vec![0.5, 0.25, 0.125]);
        let x: Sample = VectorSample::new(vec![0.0]).unwrap().into();
        let t = RegenTrace {
            generator_id: "g".into(),
            seed: SeedSpec::new(0),
            samples: vec![x; 4],
            step_distances: sd,
        };
        let c = convergence_curve(std::slice::from_ref(&t), "euclidean").unwrap();
        assert_eq!(c.means, vec![0.5, 0.25, 0.125]);
        assert_eq!(c.stddevs, vec![0.0; 3]);
        assert!(matches!(convergence_curve(&[], "euclidean"), Err(Error::EmptyInput)));
        let mut other = t.clone();
        other.generator_id = "h".into();
        assert!(matches!(
            convergence_curve(&[t, other], "euclidean"),
            Err(Error::InconsistentTraces(_))
        ));
    }

    #[test]
    fn density_with_reference_only_has_no_auc() {
        let mut s = BTreeMap::new();
        s.insert("a".to_owned(), vec![0.1, 0.2, 0.3]);
        let r = DensityReport::from_series("m", 5, "a", s, 4).unwrap();
        assert!(r.auc_separation.is_empty());
        assert_eq!(r.bin_edges.len(), 5);
        assert_eq!(r.histograms["a"].iter().sum::<usize>(), 3);
    }

    #[test]
    fn lipschitz_needs_two_samples() {
        let g = Generator::synthetic(&crate::generator::GeneratorSpec::new(
            "v",
            crate::generator::GeneratorParams::SyntheticVector(
                crate::synthetic::VectorGenParams::new(vec![0.0], 0.5),
            ),
        ))
        .unwrap();
        let m = Metric::builtin(DistanceMetric::Euclidean).unwrap();
        let x: Sample = VectorSample::new(vec![1.0]).unwrap().into();
        assert!(matches!(
            estimate_lipschitz(&g, std::slice::from_ref(&x), &m, &SeedSpec::new(0)),
            Err(Error::InsufficientSamples)
        ));
        assert!(matches!(
            estimate_lipschitz(&g, &[x.clone(), x], &m, &SeedSpec::new(0)),
            Err(Error::InsufficientSamples)
        ));
    }
}
