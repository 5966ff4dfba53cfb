//! Monte-Carlo and closed-form checks of the synthetic models and the
//! statistics built on them.

use refprint::analysis::{convergence_curve, density_report, estimate_lipschitz};
use refprint::attacks::perturb_gaussian;
use refprint::synthetic::{TextGenParams, VectorGenParams};
use refprint::verify::delta_sweep;
use refprint::{
    DistanceMetric, Generator, GeneratorParams, GeneratorSpec, ImageSample, Metric, RegenMode,
    Sample, SeedSpec, TextSample, VectorSample,
};

fn vector_gen(id: &str, fixed_point: Vec<f64>, l: f64, sigma: f64) -> Generator {
    let mut p = VectorGenParams::new(fixed_point, l);
    p.rotation_seed = 7;
    p.noise_sigma = sigma;
    Generator::synthetic(&GeneratorSpec::new(id, GeneratorParams::SyntheticVector(p))).unwrap()
}

fn euclidean() -> Metric {
    Metric::builtin(DistanceMetric::Euclidean).unwrap()
}

fn random_vectors(n: usize, dim: usize, seed: &SeedSpec) -> Vec<Sample> {
    use rand::Rng;
    (0..n)
        .map(|i| {
            let mut rng = seed.derive(i).rng();
            let v = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            Sample::Vector(VectorSample::new(v).unwrap())
        })
        .collect()
}

#[test]
fn text_substitution_frequency() {
    // A large group keeps the noise branch's share of preferred draws small:
    // P(preferred) = p_sub + p_noise / |group| = 0.802.
    let group: Vec<String> = (0..50).map(|i| format!("s{i}")).collect();
    let g = Generator::synthetic(&GeneratorSpec::new(
        "t",
        GeneratorParams::SyntheticText(TextGenParams {
            synonym_groups: vec![group],
            preference: vec!["s0".into()],
            p_sub: 0.8,
            p_noise: 0.1,
        }),
    ))
    .unwrap();
    let x = Sample::Text(TextSample::new(vec!["s7".to_owned(); 10_000]).unwrap());
    let y = g.regenerate(&x, &SeedSpec::new(3)).unwrap();
    let hits = y.as_text().unwrap().tokens().iter().filter(|t| *t == "s0").count();
    let freq = hits as f64 / 10_000.0;
    assert!((freq - 0.8).abs() <= 0.02, "frequency {freq}");
}

#[test]
fn gaussian_noise_mean_absolute_change() {
    let x = ImageSample::filled(100, 200, 1, 128).unwrap();
    let y = perturb_gaussian(&x, 0.5, 0.0, 4.0, &SeedSpec::new(5)).unwrap();
    let total: u32 = x
        .pixels()
        .iter()
        .zip(y.pixels())
        .map(|(&a, &b)| u32::from(a.abs_diff(b)))
        .sum();
    let mean = f64::from(total) / 10_000.0;
    let want = 4.0 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((mean - want).abs() <= 0.1 * want, "mean change {mean}");
}

#[test]
fn initial_generation_depends_on_seed() {
    let g = vector_gen("v", vec![0.0; 4], 0.5, 0.0);
    let a = g.generate_initial("p", &SeedSpec::new(7)).unwrap();
    let b = g.generate_initial("p", &SeedSpec::new(8)).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, g.generate_initial("p", &SeedSpec::new(7)).unwrap());
}

#[test]
fn noiseless_convergence_is_geometric() {
    let g = vector_gen("half", vec![1.0, -2.0, 0.5], 0.5, 0.0);
    let starts = random_vectors(200, 3, &SeedSpec::new(1).derive("start"));
    let traces: Vec<_> = starts
        .iter()
        .enumerate()
        .map(|(i, x)| {
            refprint::regen::iterate_regenerate(&g, x, 6, &RegenMode::Full, &[euclidean()], &SeedSpec::new(1).derive(i))
                .unwrap()
        })
        .collect();
    let curve = convergence_curve(&traces, "euclidean").unwrap();
    for w in curve.means.windows(2) {
        assert!((w[1] / w[0] - 0.5).abs() < 1e-9, "{:?}", curve.means);
    }
}

#[test]
fn noisy_convergence_means_do_not_grow() {
    let g = vector_gen("noisy", vec![0.0; 8], 0.7, 0.02);
    let starts = random_vectors(200, 8, &SeedSpec::new(2));
    let traces: Vec<_> = starts
        .iter()
        .enumerate()
        .map(|(i, x)| {
            refprint::regen::iterate_regenerate(&g, x, 8, &RegenMode::Full, &[euclidean()], &SeedSpec::new(2).derive(i))
                .unwrap()
        })
        .collect();
    let curve = convergence_curve(&traces, "euclidean").unwrap();
    for w in curve.means.windows(2) {
        assert!(w[1] <= 1.05 * w[0], "{:?}", curve.means);
    }
}

#[test]
fn lipschitz_of_linear_maps() {
    let corpus = random_vectors(30, 6, &SeedSpec::new(4));
    for l in [0.9, 0.999] {
        let g = vector_gen("lin", vec![0.5; 6], l, 0.0);
        let est = estimate_lipschitz(&g, &corpus, &euclidean(), &SeedSpec::new(4)).unwrap();
        assert!((est.mean - l).abs() < 1e-6 && (est.max - l).abs() < 1e-6, "{est:?}");
        assert_eq!(est.ratios.len(), 30 * 29 / 2);
    }
}

#[test]
fn identical_models_are_not_separated() {
    let a = vector_gen("a", vec![0.0; 8], 0.8, 0.05);
    let b = vector_gen("b", vec![0.0; 8], 0.8, 0.05);
    let corpus: Vec<Sample> = (0..300)
        .map(|i| a.generate_initial(&format!("prompt-{i}"), &SeedSpec::new(9)).unwrap())
        .collect();
    let report = density_report(&corpus, &a, &[&a, &b], &euclidean(), 20, 0, &RegenMode::Full, &SeedSpec::new(9)).unwrap();
    let auc = report.auc_separation["b"];
    assert!((auc - 0.5).abs() <= 0.1, "auc {auc}");
}

#[test]
fn separated_models_are_verified() {
    let a = vector_gen("a", vec![0.0; 8], 0.9, 0.02);
    let c = vector_gen("c", vec![10.0; 8], 0.5, 0.02);
    let five_steps = |g: &Generator, n: usize| -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let seed = SeedSpec::new(21).derive(g.id()).derive(i);
                let x0 = g.generate_initial(&format!("p{i}"), &seed).unwrap();
                refprint::regen::iterate_regenerate(g, &x0, 5, &RegenMode::Full, &[], &seed)
                    .unwrap()
                    .last()
                    .clone()
            })
            .collect()
    };
    let pos = five_steps(&a, 200);
    let neg = five_steps(&c, 200);
    let evals = delta_sweep(&pos, &neg, &a, &c, &euclidean(), &[0.05, 1e6], 5, &RegenMode::Full, &SeedSpec::new(22)).unwrap();
    assert!(evals[0].recall >= 0.95 && evals[0].precision >= 0.95, "{:?}", evals[0]);
    assert_eq!(evals[1].tp, 0);
    assert_eq!(evals[1].recall, 0.0);
}
