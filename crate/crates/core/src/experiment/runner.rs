//! Runs an experiment end to end and lays its artifacts out on disk.
//!
//! ```text
//! <out>/config.json  prompts.json  plans.json
//! <out>/traces/<gen>/<i>/x_000.json … trace.json
//! <out>/verify/pairs.csv  pairs.json  grid_*.csv  onestep_k*.csv
//! <out>/analysis/convergence_*.csv  density_*.csv  lipschitz.csv  summary.json
//! <out>/attacks/<kind>.csv  <kind>/<a>__<c>.csv  paraphrase/*.json  natural/*
//! <out>/<command>.manifest.json
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ModeSpec, NaturalSource, NaturalSpec};
use super::manifest::{entry, ArtifactSet, RunManifest};
use crate::analysis::{
    convergence_curve, estimate_lipschitz, ConvergenceCurve, DensityReport, LipschitzEstimate,
};
use crate::attacks::{natural_vs_generated, paraphrase_report, ParaphraseReport, Perturbation};
use crate::bridge::BridgeClient;
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorParams};
use crate::metrics::{write_distance_records, DistanceMetric, DistanceRecord, Metric};
use crate::regen::{iterate_regenerate, make_segmentation, RegenMode, RegenTrace, WatermarkPlan};
use crate::sample::{ImageSample, Modality, Sample, TextSample, VectorSample};
use crate::seed::SeedSpec;
use crate::verify::{write_grid_csv, write_pairs_csv, GridValue, OneStepTable, PairEvaluation, SampleRef};

/// Every generator's traces, indexed by generator id then prompt index.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub k: usize,
    pub traces: BTreeMap<String, Vec<RegenTrace>>,
}

impl Corpus {
    /// The `k`-th iterates of `generator`'s traces.
    pub fn iterates(&self, generator: &str, k: usize) -> Result<Vec<Sample>> {
        let traces = self
            .traces
            .get(generator)
            .ok_or_else(|| Error::MissingArtifacts(format!("no traces for {generator}")))?;
        traces
            .iter()
            .map(|t| {
                t.sample(k).cloned().ok_or_else(|| {
                    Error::InconsistentTraces(format!("trace of {generator} has no iterate {k}"))
                })
            })
            .collect()
    }

    fn refs_and_samples(&self, ids: &[&str], k: usize) -> Result<Vec<(SampleRef, Sample)>> {
        let mut out = Vec::new();
        for id in ids {
            for (i, x) in self.iterates(id, k)?.into_iter().enumerate() {
                out.push((SampleRef::new(*id, i), x));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub evaluations: Vec<PairEvaluation>,
    pub one_step: Vec<DistanceRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub convergence: Vec<ConvergenceCurve>,
    pub density: Vec<DensityReport>,
    pub lipschitz: Vec<LipschitzEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub attack: String,
    pub param: f64,
    pub evaluation: PairEvaluation,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub sweeps: Vec<SweepRow>,
    pub paraphrase: Vec<ParaphraseReport>,
    pub natural: Vec<DensityReport>,
}

/// A validated config with its generators, metrics and mask plans built.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    generators: Vec<Generator>,
    metrics: Vec<Metric>,
    verify_metrics: Vec<Metric>,
    lipschitz_metric: Metric,
    mode: RegenMode,
    verify_mode: RegenMode,
    base: SeedSpec,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let bridges: HashMap<String, Arc<BridgeClient>> = config
            .bridges
            .iter()
            .map(|(name, ep)| (name.clone(), Arc::new(BridgeClient::new(ep.clone()))))
            .collect();
        let generators = config
            .zoo
            .iter()
            .map(|spec| Generator::build(spec, &bridges))
            .collect::<Result<Vec<_>>>()?;
        let build_metric = |m: &DistanceMetric| -> Result<Metric> {
            match m {
                DistanceMetric::Bridge { name } => Ok(Metric::bridged(
                    m.clone(),
                    Arc::clone(bridges.get(name).ok_or_else(|| {
                        Error::config("metrics", format!("no bridge named `{name}`"))
                    })?),
                )),
                _ => Metric::builtin(m.clone()),
            }
        };
        let metrics = config.metrics.iter().map(build_metric).collect::<Result<Vec<_>>>()?;
        let verify_metrics = config
            .verification_metrics()
            .iter()
            .map(build_metric)
            .collect::<Result<Vec<_>>>()?;
        let lipschitz_metric = match &config.analysis.lipschitz_metric {
            Some(m) => build_metric(m)?,
            None => verify_metrics[0].clone(),
        };
        let base = SeedSpec::new(config.master_seed);
        let plan_seed = base.derive("plan");
        let mode = build_mode(&config, "mode", &config.mode, &plan_seed.derive("mode"))?;
        let verify_mode = build_mode(
            &config,
            "verify_mode",
            &config.verification_mode(),
            &plan_seed.derive("verify_mode"),
        )?;
        Ok(Experiment {
            config,
            generators,
            metrics,
            verify_metrics,
            lipschitz_metric,
            mode,
            verify_mode,
            base,
        })
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn generator(&self, id: &str) -> Result<&Generator> {
        self.generators
            .iter()
            .find(|g| g.id() == id)
            .ok_or_else(|| Error::config("zoo", format!("unknown generator `{id}`")))
    }

    pub fn mode(&self) -> &RegenMode {
        &self.mode
    }

    pub fn verify_mode(&self) -> &RegenMode {
        &self.verify_mode
    }

    pub fn modality(&self) -> Modality {
        self.generators[0].modality()
    }

    fn ids(&self) -> Vec<&str> {
        self.generators.iter().map(Generator::id).collect()
    }

    fn generator_refs(&self) -> Vec<&Generator> {
        self.generators.iter().collect()
    }

    /// Synonym-group tokens of every synthetic text model, sorted.
    fn group_tokens(&self) -> Vec<String> {
        let mut set = BTreeSet::new();
        for spec in &self.config.zoo {
            if let GeneratorParams::SyntheticText(p) = &spec.params {
                for g in &p.synonym_groups {
                    set.extend(g.iter().cloned());
                }
            }
        }
        set.into_iter().collect()
    }

    pub fn prompts(&self) -> Vec<String> {
        let n = self.config.corpus.size;
        if let Some(p) = &self.config.corpus.prompts {
            return p[..n].to_vec();
        }
        let groups = self.group_tokens();
        let filler = &self.config.corpus.filler;
        if self.modality() != Modality::Text || (groups.is_empty() && filler.is_empty()) {
            return (0..n).map(|i| format!("prompt-{i:05}")).collect();
        }
        let seed = self.base.derive("prompt");
        (0..n)
            .map(|i| {
                let mut rng = seed.derive(i).rng();
                (0..self.config.corpus.sentence_length)
                    .map(|_| {
                        let from_groups = filler.is_empty() || (!groups.is_empty() && rng.random_bool(0.5));
                        let pool = if from_groups { &groups } else { filler };
                        pool[rng.random_range(0..pool.len())].clone()
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    /// Initial content and `K` re-generation steps for every generator and
    /// prompt.
    pub fn generate(&self) -> Result<Corpus> {
        let prompts = self.prompts();
        let k = self.config.k();
        let jobs: Vec<(usize, usize)> = (0..self.generators.len())
            .flat_map(|g| (0..prompts.len()).map(move |i| (g, i)))
            .collect();
        let results = jobs
            .par_iter()
            .map(|&(g, i)| {
                let gen = &self.generators[g];
                let x0 = gen.generate_initial(&prompts[i], &self.base.derive("initial").derive(i))?;
                let seed = self.base.derive("trace").derive(gen.id()).derive(i);
                iterate_regenerate(gen, &x0, k, &self.mode, &self.metrics, &seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut traces: BTreeMap<String, Vec<RegenTrace>> = BTreeMap::new();
        for ((g, _), t) in jobs.iter().zip(results) {
            traces.entry(self.generators[*g].id().to_owned()).or_default().push(t);
        }
        Ok(Corpus { k, traces })
    }

    fn one_step_table(&self, corpus: &Corpus, k: usize) -> Result<OneStepTable> {
        let samples = corpus.refs_and_samples(&self.ids(), k)?;
        OneStepTable::compute(
            &samples,
            &self.generator_refs(),
            &self.verify_metrics,
            &self.verify_mode,
            &self.base.derive("verify").derive(k),
        )
    }

    fn pair_evaluations(&self, table: &OneStepTable, refs: &BTreeMap<&str, Vec<SampleRef>>, k: usize) -> Result<Vec<PairEvaluation>> {
        let mut out = Vec::new();
        for m in &self.verify_metrics {
            let mid = m.id();
            for a in self.ids() {
                for c in self.ids() {
                    if a == c {
                        continue;
                    }
                    let d = table.pair(&refs[a], &refs[c], a, c, &mid)?;
                    for &delta in &self.config.deltas {
                        out.push(d.evaluate(a, c, k, delta, &mid));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Ratio-test precision and recall for every ordered pair, `δ`, metric
    /// and verification iterate.
    pub fn verify(&self, corpus: &Corpus) -> Result<VerifyReport> {
        let mut evaluations = Vec::new();
        let mut one_step = Vec::new();
        let refs = self.sample_refs();
        for k in self.config.verify_ks() {
            let table = self.one_step_table(corpus, k)?;
            evaluations.extend(self.pair_evaluations(&table, &refs, k)?);
            for src in self.ids() {
                for r in &refs[src] {
                    for g in self.ids() {
                        for m in &self.verify_metrics {
                            let mid = m.id();
                            one_step.push(DistanceRecord {
                                value: table.get(r, g, &mid).expect("table covers corpus"),
                                metric: mid,
                                sample: r.to_string(),
                                generator: g.to_owned(),
                                k,
                            });
                        }
                    }
                }
            }
        }
        Ok(VerifyReport {
            evaluations,
            one_step,
        })
    }

    fn sample_refs(&self) -> BTreeMap<&str, Vec<SampleRef>> {
        self.ids()
            .into_iter()
            .map(|id| {
                let refs = (0..self.config.corpus.size).map(|i| SampleRef::new(id, i)).collect();
                (id, refs)
            })
            .collect()
    }

    /// Convergence curves, one-step densities per authentic model and
    /// Lipschitz estimates on the initial content.
    pub fn analyze(&self, corpus: &Corpus) -> Result<AnalysisReport> {
        let mut convergence = Vec::new();
        for m in &self.metrics {
            for id in self.ids() {
                convergence.push(convergence_curve(&corpus.traces[id], &m.id())?);
            }
        }
        let refs = self.sample_refs();
        let mut density = Vec::new();
        for k in self.config.verify_ks() {
            let table = self.one_step_table(corpus, k)?;
            for m in &self.verify_metrics {
                for a in self.ids() {
                    let series = self
                        .ids()
                        .into_iter()
                        .map(|g| Ok((g.to_owned(), table.series(&refs[a], g, &m.id())?)))
                        .collect::<Result<BTreeMap<_, _>>>()?;
                    density.push(DensityReport::from_series(
                        &m.id(),
                        k,
                        a,
                        series,
                        self.config.analysis.bins,
                    )?);
                }
            }
        }
        let n = self.config.analysis.lipschitz_samples.min(self.config.corpus.size);
        let lipschitz = self
            .generators
            .iter()
            .map(|g| {
                let xs: Vec<Sample> = corpus.iterates(g.id(), 0)?.into_iter().take(n).collect();
                estimate_lipschitz(
                    g,
                    &xs,
                    &self.lipschitz_metric,
                    &self.base.derive("lipschitz").derive(g.id()),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AnalysisReport {
            convergence,
            density,
            lipschitz,
        })
    }

    /// Perturbations the config asks for, grouped by kind.
    pub fn perturbation_sweeps(&self) -> Vec<Vec<Perturbation>> {
        let a = &self.config.attacks;
        let mut out = Vec::new();
        if let Some(w) = &a.word_substitution {
            out.push(w.rates.iter().map(|&rate| Perturbation::WordSubstitution { rate }).collect());
        }
        if let Some(g) = &a.gaussian_noise {
            out.push(
                g.fractions
                    .iter()
                    .map(|&fraction| Perturbation::GaussianNoise {
                        fraction,
                        mu: g.mu,
                        sigma: g.sigma,
                    })
                    .collect(),
            );
        }
        if let Some(b) = &a.brightness {
            out.push(
                b.factors
                    .iter()
                    .map(|&factor| Perturbation::Brightness {
                        fraction: b.fraction,
                        factor,
                    })
                    .collect(),
            );
        }
        out
    }

    /// Replacement vocabulary for word substitution: every synonym-group
    /// token plus every token seen in the corpus.
    pub fn vocabulary(&self, corpus: &Corpus) -> Vec<String> {
        let mut set: BTreeSet<String> = self.group_tokens().into_iter().collect();
        set.extend(self.config.corpus.filler.iter().cloned());
        for traces in corpus.traces.values() {
            for t in traces {
                for s in &t.samples {
                    if let Sample::Text(x) = s {
                        set.extend(x.tokens().iter().cloned());
                    }
                }
            }
        }
        set.into_iter().collect()
    }

    /// Verification of perturbed `k`-th iterates across one sweep.
    pub fn attack_sweep(&self, corpus: &Corpus, sweep: &[Perturbation]) -> Result<Vec<SweepRow>> {
        let k = self.config.attack_k();
        let delta = self.config.attack_delta();
        let vocab = self.vocabulary(corpus);
        let clean = corpus.refs_and_samples(&self.ids(), k)?;
        let refs = self.sample_refs();
        let metric = &self.verify_metrics[0];
        let mut rows = Vec::new();
        for (j, p) in sweep.iter().enumerate() {
            let attack_base = self.base.derive("attack").derive(p.kind()).derive(j);
            let perturbed = clean
                .par_iter()
                .map(|(r, x)| Ok((r.clone(), p.apply(x, &vocab, &r.seed(&attack_base))?)))
                .collect::<Result<Vec<_>>>()?;
            let table = OneStepTable::compute(
                &perturbed,
                &self.generator_refs(),
                std::slice::from_ref(metric),
                &self.verify_mode,
                &attack_base.derive("regen"),
            )?;
            for a in self.ids() {
                for c in self.ids() {
                    if a == c {
                        continue;
                    }
                    let d = table.pair(&refs[a], &refs[c], a, c, &metric.id())?;
                    rows.push(SweepRow {
                        attack: p.kind().to_owned(),
                        param: p.param(),
                        evaluation: d.evaluate(a, c, k, delta, &metric.id()),
                    });
                }
            }
        }
        Ok(rows)
    }

    pub fn attack(&self, corpus: &Corpus) -> Result<AttackReport> {
        let mut sweeps = Vec::new();
        for sweep in self.perturbation_sweeps() {
            sweeps.extend(self.attack_sweep(corpus, &sweep)?);
        }
        Ok(AttackReport {
            sweeps,
            paraphrase: self.paraphrase_reports(corpus)?,
            natural: self.natural_reports(corpus)?,
        })
    }

    /// One report per configured paraphrase pair and iteration count.
    pub fn paraphrase_reports(&self, corpus: &Corpus) -> Result<Vec<ParaphraseReport>> {
        let metric = &self.verify_metrics[0];
        let mut out = Vec::new();
        for spec in &self.config.attacks.paraphrase {
            let authentic = self.generator(&spec.authentic)?;
            let by = self.generator(&spec.by)?;
            for &k in &spec.iterations {
                let xs = corpus.iterates(authentic.id(), k)?;
                out.push(paraphrase_report(
                    &xs,
                    authentic,
                    by,
                    &self.generator_refs(),
                    metric,
                    k,
                    &self.verify_mode,
                    &self
                        .base
                        .derive("paraphrase")
                        .derive(authentic.id())
                        .derive(by.id())
                        .derive(k),
                )?);
            }
        }
        Ok(out)
    }

    /// Natural against generated one-step distances, one report per
    /// generator in zoo order. Empty without a `natural` block.
    pub fn natural_reports(&self, corpus: &Corpus) -> Result<Vec<DensityReport>> {
        let Some(spec) = &self.config.natural else {
            return Ok(Vec::new());
        };
        let k = self.config.attack_k();
        let nat = self.natural_corpus(spec, corpus)?;
        self.generators
            .iter()
            .map(|g| {
                natural_vs_generated(
                    &nat,
                    &corpus.iterates(g.id(), k)?,
                    g,
                    &self.verify_metrics[0],
                    self.config.analysis.bins,
                    k,
                    &self.verify_mode,
                    &self.base.derive("natural").derive(g.id()),
                )
            })
            .collect()
    }

    /// Content no zoo model produced, shaped like the generated corpus.
    pub fn natural_corpus(&self, spec: &NaturalSpec, corpus: &Corpus) -> Result<Vec<Sample>> {
        let template = corpus
            .traces
            .values()
            .next()
            .and_then(|t| t.first())
            .map(|t| t.samples[0].clone())
            .ok_or(Error::EmptyCorpus)?;
        match &spec.source {
            NaturalSource::Files { paths } => paths
                .iter()
                .take(spec.size)
                .map(|p| load_natural(p))
                .collect(),
            NaturalSource::Uniform { low, high } => {
                let seed = self.base.derive("natural-content");
                let vocab = self.vocabulary(corpus);
                (0..spec.size)
                    .map(|i| {
                        let mut rng = seed.derive(i).rng();
                        Ok(match &template {
                            Sample::Vector(v) => Sample::Vector(VectorSample::new(
                                (0..v.len()).map(|_| rng.random_range(*low..=*high)).collect(),
                            )?),
                            Sample::Image(img) => {
                                let (h, w, c) = img.shape();
                                let lo = low.clamp(0.0, 255.0).round() as u8;
                                let hi = high.clamp(0.0, 255.0).round() as u8;
                                let px = (0..h * w * c).map(|_| rng.random_range(lo..=hi)).collect();
                                Sample::Image(ImageSample::new(h, w, c, px)?)
                            }
                            Sample::Text(_) => {
                                if vocab.is_empty() {
                                    return Err(Error::EmptyCorpus);
                                }
                                let n = self.config.corpus.sentence_length.max(1);
                                Sample::Text(TextSample::new(
                                    (0..n)
                                        .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
                                        .collect(),
                                )?)
                            }
                        })
                    })
                    .collect()
            }
        }
    }

    /// Reads the traces written by [`cmd_generate`].
    pub fn load_corpus(&self, out: &Path) -> Result<Corpus> {
        let k = self.config.k();
        let mut traces = BTreeMap::new();
        for g in &self.generators {
            let list = (0..self.config.corpus.size)
                .into_par_iter()
                .map(|i| {
                    let t = RegenTrace::load(&trace_dir(out, g.id(), i))?;
                    if t.generator_id != g.id() || t.iterations() != k {
                        return Err(Error::InconsistentTraces(format!(
                            "{}: expected {} with K={k}, found {} with K={}",
                            trace_dir(out, g.id(), i).display(),
                            g.id(),
                            t.generator_id,
                            t.iterations()
                        )));
                    }
                    Ok(t)
                })
                .collect::<Result<Vec<_>>>()?;
            traces.insert(g.id().to_owned(), list);
        }
        Ok(Corpus { k, traces })
    }
}

fn build_mode(cfg: &ExperimentConfig, field: &str, spec: &ModeSpec, seed: &SeedSpec) -> Result<RegenMode> {
    if let ModeSpec::Full = spec {
        return Ok(RegenMode::Full);
    }
    let (h, w) = image_shape(cfg).ok_or_else(|| {
        Error::config("image_shape", format!("{field} needs an image shape"))
    })?;
    let field_err = |sub: &str, e: Error| Error::config(format!("{field}.{sub}"), e.to_string());
    Ok(match spec {
        ModeSpec::Full => unreachable!(),
        ModeSpec::Watermark { n } => RegenMode::Watermark(
            WatermarkPlan::seeded(h, w, *n as usize, seed).map_err(|e| field_err("n", e))?,
        ),
        ModeSpec::Fingerprint { segments, scheme } => RegenMode::Fingerprint(
            make_segmentation(h, w, *segments as usize, *scheme, seed)
                .map_err(|e| field_err("segments", e))?,
        ),
    })
}

fn image_shape(cfg: &ExperimentConfig) -> Option<(usize, usize)> {
    cfg.image_shape.or_else(|| {
        cfg.zoo.iter().find_map(|g| match &g.params {
            GeneratorParams::SyntheticInpaint(p) => Some((p.height, p.width)),
            _ => None,
        })
    })
}

fn load_natural(path: &Path) -> Result<Sample> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" | "ppm" | "pnm" | "pbm" => Ok(Sample::Image(ImageSample::from_pnm(path)?)),
        _ => Sample::load(path),
    }
}

pub fn trace_dir(out: &Path, generator: &str, index: usize) -> PathBuf {
    out.join("traces").join(generator).join(format!("{index:05}"))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn fmt_param(v: f64) -> String {
    format!("{v}")
}

/// `generate`: prompts, plans and every trace.
pub fn cmd_generate(exp: &Experiment, out: &Path) -> Result<RunManifest> {
    let corpus = exp.generate()?;
    let mut art = ArtifactSet::new(out);
    art.write("config.json", exp.config.to_json().as_bytes())?;
    art.write_json("prompts.json", &exp.prompts())?;
    art.write_json(
        "plans.json",
        &serde_json::json!({ "mode": exp.mode(), "verify_mode": exp.verify_mode() }),
    )?;
    let jobs: Vec<(&str, usize, &RegenTrace)> = corpus
        .traces
        .iter()
        .flat_map(|(id, ts)| ts.iter().enumerate().map(move |(i, t)| (id.as_str(), i, t)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(id, i, t)| {
            let dir = trace_dir(out, id, i);
            t.save(&dir)?;
            let rel = format!("traces/{id}/{i:05}");
            let mut names: Vec<String> = (0..=t.iterations()).map(|k| format!("x_{k:03}.json")).collect();
            names.push("trace.json".into());
            names
                .iter()
                .map(|n| Ok(entry(&format!("{rel}/{n}"), &fs::read(dir.join(n))?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    art.extend(entries.into_iter().flatten());
    art.finish("generate", &exp.config)
}

pub fn cmd_verify(exp: &Experiment, out: &Path) -> Result<RunManifest> {
    let corpus = exp.load_corpus(out)?;
    let report = exp.verify(&corpus)?;
    let mut art = ArtifactSet::new(out);
    art.write("verify/pairs.csv", &csv_bytes(|b| write_pairs_csv(b, &report.evaluations))?)?;
    art.write_json("verify/pairs.json", &report.evaluations)?;
    let ids: Vec<String> = exp.ids().into_iter().map(str::to_owned).collect();
    for k in exp.config.verify_ks() {
        for m in &exp.verify_metrics {
            let mid = m.id();
            for &delta in &exp.config.deltas {
                let sel: Vec<&PairEvaluation> = report
                    .evaluations
                    .iter()
                    .filter(|e| e.k == k && e.metric_id == mid && e.delta == delta)
                    .collect();
                for (name, v) in [("precision", GridValue::Precision), ("recall", GridValue::Recall)] {
                    art.write(
                        &format!("verify/grid_{mid}_k{k}_d{}_{name}.csv", fmt_param(delta)),
                        &csv_bytes(|b| write_grid_csv(b, &ids, &sel, v))?,
                    )?;
                }
            }
        }
        let recs: Vec<DistanceRecord> = report.one_step.iter().filter(|r| r.k == k).cloned().collect();
        art.write(
            &format!("verify/onestep_k{k}.csv"),
            &csv_bytes(|b| write_distance_records(b, &recs))?,
        )?;
    }
    art.finish("verify", &exp.config)
}

pub fn cmd_analyze(exp: &Experiment, out: &Path) -> Result<RunManifest> {
    let corpus = exp.load_corpus(out)?;
    let report = exp.analyze(&corpus)?;
    let mut art = ArtifactSet::new(out);
    for m in &exp.metrics {
        let mid = m.id();
        let bytes = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["generator", "k", "mean", "std"])?;
            for c in report.convergence.iter().filter(|c| c.metric_id == mid) {
                for (k, (mean, std)) in c.means.iter().zip(&c.stddevs).enumerate() {
                    w.write_record([
                        c.generator_id.clone(),
                        (k + 1).to_string(),
                        mean.to_string(),
                        std.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
        art.write(&format!("analysis/convergence_{mid}.csv"), &bytes)?;
    }
    for d in &report.density {
        art.write(
            &format!("analysis/density_{}_k{}_{}.csv", d.metric_id, d.k, d.reference_id),
            &csv_bytes(|b| d.write_csv(b))?,
        )?;
    }
    let lip = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["generator", "metric", "mean", "std", "max", "pairs", "skipped"])?;
        for l in &report.lipschitz {
            w.write_record([
                l.generator_id.clone(),
                l.metric_id.clone(),
                l.mean.to_string(),
                l.std.to_string(),
                l.max.to_string(),
                l.ratios.len().to_string(),
                l.skipped.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    art.write("analysis/lipschitz.csv", &lip)?;
    let summary = serde_json::json!({
        "convergence": report.convergence,
        "density": report.density.iter().map(|d| serde_json::json!({
            "metric": d.metric_id,
            "k": d.k,
            "reference": d.reference_id,
            "auc_separation": d.auc_separation,
            "bin_edges": d.bin_edges,
            "histograms": d.histograms,
        })).collect::<Vec<_>>(),
        "lipschitz": report.lipschitz.iter().map(|l| serde_json::json!({
            "generator": l.generator_id,
            "metric": l.metric_id,
            "mean": l.mean,
            "std": l.std,
            "max": l.max,
            "pairs": l.ratios.len(),
            "skipped": l.skipped,
        })).collect::<Vec<_>>(),
    });
    art.write_json("analysis/summary.json", &summary)?;
    art.finish("analyze", &exp.config)
}

pub fn cmd_attack(exp: &Experiment, out: &Path) -> Result<RunManifest> {
    let corpus = exp.load_corpus(out)?;
    let report = exp.attack(&corpus)?;
    let mut art = ArtifactSet::new(out);
    let mut by_kind: BTreeMap<&str, Vec<&SweepRow>> = BTreeMap::new();
    for r in &report.sweeps {
        by_kind.entry(r.attack.as_str()).or_default().push(r);
    }
    for (kind, rows) in &by_kind {
        let all = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record([
                "authentic", "contrast", "attack", "param", "tp", "fp", "fn", "tn", "precision",
                "recall",
            ])?;
            for r in rows {
                let e = &r.evaluation;
                w.write_record([
                    e.authentic_id.clone(),
                    e.contrast_id.clone(),
                    r.attack.clone(),
                    fmt_param(r.param),
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
        })?;
        art.write(&format!("attacks/{kind}.csv"), &all)?;
        let mut pairs: BTreeMap<(&str, &str), Vec<&SweepRow>> = BTreeMap::new();
        for r in rows {
            pairs
                .entry((r.evaluation.authentic_id.as_str(), r.evaluation.contrast_id.as_str()))
                .or_default()
                .push(r);
        }
        for ((a, c), rows) in pairs {
            let bytes = csv_bytes(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["attack", "param", "precision", "recall"])?;
                for r in rows {
                    w.write_record([
                        r.attack.clone(),
                        fmt_param(r.param),
                        format!("{:.6}", r.evaluation.precision),
                        format!("{:.6}", r.evaluation.recall),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })?;
            art.write(&format!("attacks/{kind}/{a}__{c}.csv"), &bytes)?;
        }
    }
    for p in &report.paraphrase {
        art.write_json(
            &format!("attacks/paraphrase/{}_by_{}_k{}.json", p.authentic_id, p.paraphraser_id, p.k),
            p,
        )?;
    }
    for (d, g) in report.natural.iter().zip(exp.generators()) {
        art.write(
            &format!("attacks/natural/{}_k{}.csv", g.id(), d.k),
            &csv_bytes(|b| d.write_csv(b))?,
        )?;
    }
    if !report.natural.is_empty() {
        let summary: BTreeMap<&str, f64> = report
            .natural
            .iter()
            .zip(exp.generators())
            .map(|(d, g)| (g.id(), d.auc_separation["natural"]))
            .collect();
        art.write_json("attacks/natural/auc.json", &summary)?;
    }
    art.finish("attack", &exp.config)
}

/// The output directory named on the command line, else the config's.
pub fn output_dir(cfg: &ExperimentConfig, cli: Option<&Path>) -> PathBuf {
    cli.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone())
}
