//! End-to-end acceptance criteria, each at its stated tolerance and time
//! budget. Every criterion prints one `PASS`/`FAIL` line; the test fails if
//! any criterion does.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use refprint::analysis::{convergence_curve, estimate_lipschitz};
use refprint::experiment::runner::{cmd_generate, cmd_verify, Experiment, VerifyReport};
use refprint::experiment::zoo::{
    default_image_config, default_text_config, default_vector_config, vector_generator,
    DEFAULT_SEED,
};
use refprint::experiment::{Corpus, ExperimentConfig};
use refprint::metrics::{bleu_distance, mse_distance, rouge_l_distance, ssim_distance};
use refprint::regen::iterate_regenerate;
use refprint::verify::PairEvaluation;
use refprint::{
    DistanceMetric, Generator, GeneratorParams, Metric, RegenMode, Sample,
    SeedSpec, VectorSample,
};

type Outcome = Result<String, String>;

/// Generated corpora of the three default zoos, shared across criteria.
struct Zoo {
    name: &'static str,
    exp: Experiment,
    corpus: Corpus,
    verify: Option<VerifyReport>,
}

#[derive(Default)]
struct Shared {
    zoos: Vec<Zoo>,
}

impl Shared {
    fn zoos(&mut self) -> Result<&mut [Zoo], String> {
        if self.zoos.is_empty() {
            for (name, cfg) in [
                ("vector", default_vector_config()),
                ("text", default_text_config()),
                ("image", default_image_config()),
            ] {
                let exp = Experiment::new(cfg).map_err(|e| e.to_string())?;
                let corpus = exp.generate().map_err(|e| e.to_string())?;
                self.zoos.push(Zoo {
                    name,
                    exp,
                    corpus,
                    verify: None,
                });
            }
        }
        Ok(&mut self.zoos)
    }

    fn verified(&mut self) -> Result<&[Zoo], String> {
        for z in self.zoos()?.iter_mut() {
            if z.verify.is_none() {
                z.verify = Some(z.exp.verify(&z.corpus).map_err(|e| e.to_string())?);
            }
        }
        Ok(&self.zoos)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn noiseless_vector(index: usize) -> (Generator, f64) {
    let mut spec = vector_generator(index);
    let GeneratorParams::SyntheticVector(p) = &mut spec.params else {
        unreachable!()
    };
    p.noise_sigma = 0.0;
    let l = p.contraction;
    (Generator::synthetic(&spec).unwrap(), l)
}

fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Sample> {
    let mut rng = common::rng(seed);
    (0..n)
        .map(|_| {
            let v = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
            Sample::Vector(VectorSample::new(v).unwrap())
        })
        .collect()
}

fn step_distance_bound(_: &mut Shared) -> Outcome {
    let metric = Metric::builtin(DistanceMetric::Euclidean).map_err(err)?;
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for i in 0..4 {
        let (g, l) = noiseless_vector(i);
        for (s, x0) in random_vectors(100, 16, 100 + i as u64).iter().enumerate() {
            let trace = iterate_regenerate(
                &g,
                x0,
                10,
                &RegenMode::Full,
                std::slice::from_ref(&metric),
                &SeedSpec::new(s as u64),
            )
            .map_err(err)?;
            let d = trace.distances("euclidean").unwrap();
            for (k, dk) in d.iter().enumerate() {
                let slack = dk - (l.powi(k as i32) * d[0] + 1e-9);
                worst = worst.max(slack);
                checked += 1;
                if slack > 0.0 {
                    return Err(format!(
                        "{} start {s} step {}: {dk} exceeds bound by {slack:e}",
                        g.id(),
                        k + 1
                    ));
                }
            }
        }
    }
    Ok(format!("{checked} steps, max(step - bound) = {worst:.3e}"))
}

fn lipschitz_exactness(_: &mut Shared) -> Outcome {
    let (g, l) = noiseless_vector(2);
    let metric = Metric::builtin(DistanceMetric::Euclidean).map_err(err)?;
    let corpus = random_vectors(50, 16, 7);
    let est = estimate_lipschitz(&g, &corpus, &metric, &SeedSpec::new(DEFAULT_SEED)).map_err(err)?;
    let (dm, dx) = ((est.mean - l).abs(), (est.max - l).abs());
    let detail = format!("L = {l}, mean = {:.9}, max = {:.9}, {} pairs", est.mean, est.max, est.ratios.len());
    if dm <= 1e-6 && dx <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_oracles(_: &mut Shared) -> Outcome {
    let mut rng = common::rng(20_240_502);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for _ in 0..50 {
        let (a, b) = common::random_text_pair(&mut rng);
        let bleu = bleu_distance(&a, &b, 4).map_err(err)?;
        let rouge = rouge_l_distance(&a, &b).map_err(err)?;
        let e = worst.entry("bleu").or_default();
        *e = e.max((bleu - common::bleu_oracle(a.tokens(), b.tokens(), 4)).abs());
        let e = worst.entry("rouge_l").or_default();
        *e = e.max((rouge - common::rouge_l_oracle(a.tokens(), b.tokens())).abs());

        let (x, y) = common::random_image_pair(&mut rng);
        let window = rng.random_range(3..=8);
        let mse = mse_distance(&x, &y).map_err(err)?;
        let ssim = ssim_distance(&x, &y, window).map_err(err)?;
        let e = worst.entry("mse").or_default();
        *e = e.max((mse - common::mse_oracle(&x, &y)).abs());
        let e = worst.entry("ssim").or_default();
        *e = e.max((ssim - common::ssim_oracle(&x, &y, window)).abs());
    }
    let detail = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    let ok = worst["bleu"] <= 1e-6 && worst["rouge_l"] <= 1e-6 && worst["mse"] <= 1e-9 && worst["ssim"] <= 1e-9;
    if ok {
        Ok(format!("max abs error over 50 instances: {detail}"))
    } else {
        Err(detail)
    }
}

fn convergence_trend(shared: &mut Shared) -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for z in shared.zoos()? {
        for m in &z.exp.config.metrics {
            for g in z.exp.generators() {
                let c = convergence_curve(&z.corpus.traces[g.id()], &m.id()).map_err(err)?;
                for k in 1..c.means.len() {
                    let (prev, next) = (c.means[k - 1], c.means[k]);
                    if prev > 0.0 {
                        worst = worst.max(next / prev);
                    }
                    if next > 1.05 * prev + 1e-12 {
                        failures.push(format!("{} {} k={}: {prev:.4} -> {next:.4}", g.id(), m.id(), k + 1));
                    }
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("3 zoos, largest step ratio {worst:.3}"))
    } else {
        Err(failures.join("; "))
    }
}

fn verification_quality(shared: &mut Shared) -> Outcome {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for z in shared.verified()? {
        let bar = if z.name == "image" { 0.85 } else { 0.95 };
        let sel: Vec<&PairEvaluation> = z
            .verify
            .as_ref()
            .unwrap()
            .evaluations
            .iter()
            .filter(|e| e.k == 5 && e.delta == 0.05)
            .collect();
        let min_p = sel.iter().map(|e| e.precision).fold(1.0, f64::min);
        let min_r = sel.iter().map(|e| e.recall).fold(1.0, f64::min);
        lines.push(format!("{} min P {min_p:.3} R {min_r:.3} over {} rows", z.name, sel.len()));
        for e in sel {
            if e.precision < bar || e.recall < bar {
                failures.push(format!(
                    "{} {}→{} {}: P {:.3} R {:.3}",
                    z.name, e.authentic_id, e.contrast_id, e.metric_id, e.precision, e.recall
                ));
            }
        }
    }
    if failures.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

fn delta_monotonicity(shared: &mut Shared) -> Outcome {
    let mut failures = Vec::new();
    let mut series = 0;
    for z in shared.verified()? {
        let mut groups: BTreeMap<(String, String, String, usize), Vec<&PairEvaluation>> = BTreeMap::new();
        for e in &z.verify.as_ref().unwrap().evaluations {
            groups
                .entry((e.authentic_id.clone(), e.contrast_id.clone(), e.metric_id.clone(), e.k))
                .or_default()
                .push(e);
        }
        for (key, mut evals) in groups {
            series += 1;
            evals.sort_by(|a, b| a.delta.total_cmp(&b.delta));
            for w in evals.windows(2) {
                if w[1].recall > w[0].recall {
                    failures.push(format!("{} {key:?}: recall rises at δ={}", z.name, w[1].delta));
                }
                if w[1].precision > w[0].precision + 0.02 {
                    failures.push(format!("{} {key:?}: precision rises at δ={}", z.name, w[1].delta));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{series} δ-series checked"))
    } else {
        Err(failures.join("; "))
    }
}

fn iteration_benefit(_: &mut Shared) -> Outcome {
    let mut failures = Vec::new();
    let mut gains = Vec::new();
    for s in 1..=10u64 {
        let mut cfg = default_vector_config();
        cfg.master_seed = s;
        let exp = Experiment::new(cfg).map_err(err)?;
        let corpus = exp.generate().map_err(err)?;
        let report = exp.verify(&corpus).map_err(err)?;
        let recall = |k: usize, c: &str| {
            report
                .evaluations
                .iter()
                .find(|e| e.authentic_id == "vec-3" && e.contrast_id == c && e.k == k && e.delta == 0.05)
                .map(|e| e.recall)
                .unwrap()
        };
        for c in ["vec-0", "vec-1", "vec-2"] {
            let (r1, r5) = (recall(1, c), recall(5, c));
            gains.push(r5 - r1);
            if r5 < r1 {
                failures.push(format!("seed {s} vs {c}: recall k=1 {r1:.3} > k=5 {r5:.3}"));
            }
        }
    }
    if failures.is_empty() {
        let mean = gains.iter().sum::<f64>() / gains.len() as f64;
        Ok(format!("10 seeds × 3 contrasts, mean recall gain {mean:.3}"))
    } else {
        Err(failures.join("; "))
    }
}

/// `(param, tp, fp)` per sweep step.
type SweepCounts = Vec<(f64, usize, usize)>;

/// Precision per `(authentic, contrast)` in sweep order.
fn sweep_precisions(z: &Zoo, kind: &str) -> Result<BTreeMap<(String, String), SweepCounts>, String> {
    let sweep = z
        .exp
        .perturbation_sweeps()
        .into_iter()
        .find(|s| s.first().is_some_and(|p| p.kind() == kind))
        .ok_or_else(|| format!("{} config has no {kind} sweep", z.name))?;
    let rows = z.exp.attack_sweep(&z.corpus, &sweep).map_err(err)?;
    let mut out: BTreeMap<(String, String), SweepCounts> = BTreeMap::new();
    for r in rows {
        let e = r.evaluation;
        out.entry((e.authentic_id, e.contrast_id))
            .or_default()
            .push((r.param, e.tp, e.fp));
    }
    Ok(out)
}

fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

fn attack_trends(shared: &mut Shared) -> Outcome {
    let zoos = shared.zoos()?;
    let mut failures = Vec::new();

    let text = zoos.iter().find(|z| z.name == "text").unwrap();
    for ((a, c), rows) in sweep_precisions(text, "word_substitution")? {
        let mut best = f64::NEG_INFINITY;
        for (i, &(x, tp, fp)) in rows.iter().enumerate() {
            let p = precision(tp, fp);
            if i > 0 && p > best + 0.05 {
                failures.push(format!("word {a}→{c}: precision {p:.3} at X={x} exceeds earlier {best:.3}"));
            }
            best = if i == 0 { p } else { best.min(p) };
        }
    }

    let image = zoos.iter().find(|z| z.name == "image").unwrap();
    let mut gauss_worst = 0.0f64;
    for ((a, c), rows) in sweep_precisions(image, "gaussian_noise")? {
        let base = precision(rows[0].1, rows[0].2);
        for &(r, tp, fp) in rows.iter().filter(|row| row.0 <= 0.5) {
            let drop = base - precision(tp, fp);
            gauss_worst = gauss_worst.max(drop);
            if drop > 0.10 {
                failures.push(format!("gaussian {a}→{c}: precision drops {drop:.3} at r={r}"));
            }
        }
    }

    // Pooled over contrasts, per authentic model and factor.
    let mut pooled: BTreeMap<(String, u64), (usize, usize)> = BTreeMap::new();
    let mut factors = Vec::new();
    for ((a, _), rows) in sweep_precisions(image, "brightness")? {
        for &(f, tp, fp) in &rows {
            let e = pooled.entry((a.clone(), f.to_bits())).or_default();
            e.0 += tp;
            e.1 += fp;
            if !factors.contains(&f) {
                factors.push(f);
            }
        }
    }
    let base_f = factors[0];
    let mut bright = Vec::new();
    for &f in factors.iter().filter(|&&f| f >= 1.1) {
        let best = pooled
            .iter()
            .filter(|((_, fb), _)| *fb == f.to_bits())
            .map(|((a, _), &(tp, fp))| {
                let (btp, bfp) = pooled[&(a.clone(), base_f.to_bits())];
                (precision(btp, bfp) - precision(tp, fp), a.clone())
            })
            .max_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap();
        bright.push(format!("f={f}: {} −{:.3}", best.1, best.0));
        if best.0 < 0.10 {
            failures.push(format!("brightness f={f}: largest per-model drop only {:.3}", best.0));
        }
    }

    if failures.is_empty() {
        Ok(format!(
            "word monotone within 0.05; gaussian max drop {gauss_worst:.3}; brightness {}",
            bright.join(", ")
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn paraphrase_asymmetry(shared: &mut Shared) -> Outcome {
    let z = shared.zoos()?.iter().find(|z| z.name == "vector").unwrap();
    let reports = z.exp.paraphrase_reports(&z.corpus).map_err(err)?;
    if reports.is_empty() {
        return Err("vector config has no paraphrase attack".into());
    }
    let mut lines = Vec::new();
    let mut ok = true;
    for r in &reports {
        let min_unrelated = r.unrelated_auc.values().copied().fold(1.0, f64::min);
        ok &= (0.35..=0.65).contains(&r.involved_auc) && min_unrelated >= 0.9;
        ok &= r.series[&r.authentic_id].len() == 200;
        lines.push(format!(
            "{} by {} k={}: involved {:.3}, unrelated min {:.3}",
            r.authentic_id, r.paraphraser_id, r.k, r.involved_auc, min_unrelated
        ));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn natural_separation(shared: &mut Shared) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for z in shared.zoos()? {
        let reports = z.exp.natural_reports(&z.corpus).map_err(err)?;
        let worst = reports
            .iter()
            .map(|r| r.auc_separation["natural"])
            .fold(1.0, f64::min);
        ok &= !reports.is_empty() && worst >= 0.95;
        lines.push(format!("{} min auc {worst:.4}", z.name));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn run_generate_verify(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let exp = Experiment::new(cfg.clone()).map_err(err)?;
    cmd_generate(&exp, out).map_err(err)?;
    cmd_verify(&exp, out).map_err(err)?;
    Ok((
        fs::read(out.join("generate.manifest.json")).map_err(err)?,
        fs::read(out.join("verify.manifest.json")).map_err(err)?,
    ))
}

fn determinism(_: &mut Shared) -> Outcome {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(err)?;
    let mut files = 0;
    for mut cfg in [default_vector_config(), default_text_config(), default_image_config()] {
        cfg.corpus.size = 20;
        let dir = tempfile::tempdir().map_err(err)?;
        let first = run_generate_verify(&cfg, &dir.path().join("a"))?;
        let again = run_generate_verify(&cfg, &dir.path().join("a"))?;
        let other = single.install(|| run_generate_verify(&cfg, &dir.path().join("b")))?;
        if first != again || first != other {
            return Err(format!("{}: manifests differ between runs", cfg.name));
        }
        let manifest: serde_json::Value = serde_json::from_slice(&first.0).map_err(err)?;
        files += manifest["artifacts"].as_array().map_or(0, Vec::len);
    }
    Ok(format!("3 zoos, same dir, fresh dir and 1 thread agree ({files} generated files)"))
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn(&mut Shared) -> Outcome,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

#[test]
fn acceptance() {
    let criteria = [
        Criterion { name: "step-distance bound", budget: secs(5), run: step_distance_bound },
        Criterion { name: "lipschitz exactness", budget: secs(5), run: lipschitz_exactness },
        Criterion { name: "metric oracles", budget: secs(10), run: metric_oracles },
        Criterion { name: "convergence trend", budget: secs(120), run: convergence_trend },
        Criterion { name: "verification quality", budget: secs(300), run: verification_quality },
        Criterion { name: "delta monotonicity", budget: secs(60), run: delta_monotonicity },
        Criterion { name: "iteration benefit", budget: secs(180), run: iteration_benefit },
        Criterion { name: "attack trends", budget: secs(300), run: attack_trends },
        Criterion { name: "paraphrase asymmetry", budget: secs(120), run: paraphrase_asymmetry },
        Criterion { name: "natural vs generated", budget: secs(60), run: natural_separation },
        Criterion { name: "determinism", budget: secs(60), run: determinism },
    ];
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)(&mut shared);
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d} (over the {:?} budget)", c.budget)),
            Err(d) => (false, d),
        };
        let line = format!(
            "acceptance {} {} [{:.2}s / {}s] {}\n",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs(),
            detail
        );
        // Bypass the harness's capture so the lines always show.
        let _ = std::io::stderr().write_all(line.as_bytes());
        if !pass {
            failed.push(c.name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
