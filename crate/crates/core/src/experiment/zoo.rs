//! Default four-model zoos for each modality.
//!
//! The shipped `configs/*.json` files are these configs serialized.

use super::config::{
    AnalysisConfig, AttackConfig, BrightnessSweep, CorpusSpec, ExperimentConfig, GaussianSweep,
    ModeSpec, NaturalSource, NaturalSpec, ParaphraseSpec, WordSubstitutionSweep,
};
use crate::generator::{GeneratorParams, GeneratorSpec};
use crate::metrics::DistanceMetric;
use crate::synthetic::{InpaintGenParams, TextGenParams, VectorGenParams};

pub const DEFAULT_SEED: u64 = 20_240_501;
pub const DEFAULT_DELTAS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

const VECTOR_DIM: usize = 16;
/// Shared offset on the last axis; keeps every fixed point away from the
/// origin, where cosine distance degenerates.
const VECTOR_LIFT: f64 = 10.0;

/// Contractions, fixed-point offsets along the first three axes, rotation
/// angles in degrees, and rotation seeds of the vector zoo. The two fast
/// models sit near `VECTOR_LIFT·e₁₅`, the two slow ones `10·e₀` further on.
///
/// The slow pair is tuned together: vec-3 re-generating vec-2 content should
/// land about as far from vec-2's fixed point as vec-2 itself would, and
/// vec-3's wider rotation makes its own iterates drift off vec-2's sooner.
const VECTOR_MODELS: [(f64, [f64; 3], f64, u64); 4] = [
    (0.5, [0.0, 0.0, 0.0], 60.0, 101),
    (0.7, [0.0, 2.0, 0.0], 60.0, 102),
    (0.9, [10.0, 0.0, 0.0], 62.0, 103),
    (0.95, [10.0, 0.0, 3.0], 90.0, 104),
];

pub fn vector_generator(index: usize) -> GeneratorSpec {
    let (l, head, degrees, rotation_seed) = VECTOR_MODELS[index];
    let mut fixed_point = vec![0.0; VECTOR_DIM];
    fixed_point[..3].copy_from_slice(&head);
    fixed_point[VECTOR_DIM - 1] = VECTOR_LIFT;
    GeneratorSpec::new(
        format!("vec-{index}"),
        GeneratorParams::SyntheticVector(VectorGenParams {
            dim: VECTOR_DIM,
            fixed_point,
            contraction: l,
            rotation_seed,
            rotation_angle: degrees.to_radians(),
            noise_sigma: 0.02,
            prompt_scale: 0.5,
        }),
    )
}

pub fn default_vector_config() -> ExperimentConfig {
    ExperimentConfig {
        name: "vector-zoo".into(),
        master_seed: DEFAULT_SEED,
        zoo: (0..4).map(vector_generator).collect(),
        corpus: CorpusSpec {
            size: 200,
            prompts: None,
            sentence_length: 20,
            filler: Vec::new(),
        },
        iterations: 5,
        verify_at: vec![1, 5],
        metrics: vec![DistanceMetric::Euclidean, DistanceMetric::Cosine],
        verify_metrics: Some(vec![DistanceMetric::Euclidean]),
        deltas: DEFAULT_DELTAS.to_vec(),
        mode: ModeSpec::Full,
        verify_mode: None,
        attacks: AttackConfig {
            paraphrase: vec![ParaphraseSpec {
                authentic: "vec-2".into(),
                by: "vec-3".into(),
                iterations: vec![1, 3, 5],
            }],
            ..AttackConfig::default()
        },
        natural: Some(NaturalSpec {
            size: 200,
            source: NaturalSource::Uniform {
                low: 20.0,
                high: 30.0,
            },
        }),
        analysis: AnalysisConfig {
            lipschitz_metric: Some(DistanceMetric::Euclidean),
            ..AnalysisConfig::default()
        },
        bridges: Default::default(),
        image_shape: None,
        output_dir: "out/vector".into(),
    }
}

const SYNONYM_GROUPS: [[&str; 4]; 24] = [
    ["big", "large", "huge", "vast"],
    ["small", "little", "tiny", "minor"],
    ["fast", "quick", "rapid", "swift"],
    ["happy", "glad", "joyful", "cheerful"],
    ["sad", "unhappy", "gloomy", "downcast"],
    ["begin", "start", "commence", "initiate"],
    ["end", "finish", "conclude", "complete"],
    ["buy", "purchase", "acquire", "obtain"],
    ["help", "assist", "aid", "support"],
    ["show", "display", "exhibit", "present"],
    ["smart", "clever", "bright", "intelligent"],
    ["hard", "difficult", "tough", "demanding"],
    ["easy", "simple", "effortless", "plain"],
    ["old", "aged", "ancient", "elderly"],
    ["new", "fresh", "modern", "novel"],
    ["car", "automobile", "vehicle", "auto"],
    ["house", "home", "residence", "dwelling"],
    ["road", "street", "avenue", "lane"],
    ["speak", "talk", "say", "utter"],
    ["look", "see", "watch", "observe"],
    ["walk", "stroll", "march", "wander"],
    ["choose", "select", "pick", "opt"],
    ["answer", "reply", "respond", "retort"],
    ["idea", "notion", "concept", "thought"],
];

const FILLER: [&str; 24] = [
    "the", "a", "of", "and", "to", "in", "on", "with", "for", "at", "by", "from", "we", "they",
    "it", "this", "that", "was", "is", "were", "our", "their", "very", "then",
];

/// Substitution probabilities of the text zoo.
const TEXT_P_SUB: [f64; 4] = [0.9, 0.6, 0.9, 0.6];
const TEXT_P_NOISE: f64 = 0.0;

/// Model `m` prefers member `(m + g) mod 4` of group `g`, so any two models
/// disagree on every group.
pub fn text_generator(index: usize) -> GeneratorSpec {
    let synonym_groups: Vec<Vec<String>> = SYNONYM_GROUPS
        .iter()
        .map(|g| g.iter().map(|t| t.to_string()).collect())
        .collect();
    let preference = synonym_groups
        .iter()
        .enumerate()
        .map(|(g, members)| members[(index + g) % members.len()].clone())
        .collect();
    GeneratorSpec::new(
        format!("text-{index}"),
        GeneratorParams::SyntheticText(TextGenParams {
            synonym_groups,
            preference,
            p_sub: TEXT_P_SUB[index],
            p_noise: TEXT_P_NOISE,
        }),
    )
}

pub fn default_text_config() -> ExperimentConfig {
    ExperimentConfig {
        name: "text-zoo".into(),
        master_seed: DEFAULT_SEED,
        zoo: (0..4).map(text_generator).collect(),
        corpus: CorpusSpec {
            size: 200,
            prompts: None,
            sentence_length: 20,
            filler: FILLER.iter().map(|s| s.to_string()).collect(),
        },
        iterations: 5,
        verify_at: vec![1, 5],
        metrics: vec![DistanceMetric::RougeL, DistanceMetric::bleu()],
        verify_metrics: None,
        deltas: DEFAULT_DELTAS.to_vec(),
        mode: ModeSpec::Full,
        verify_mode: None,
        attacks: AttackConfig {
            word_substitution: Some(WordSubstitutionSweep {
                rates: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            }),
            ..AttackConfig::default()
        },
        natural: Some(NaturalSpec {
            size: 200,
            source: NaturalSource::Uniform {
                low: 0.0,
                high: 255.0,
            },
        }),
        analysis: AnalysisConfig {
            lipschitz_metric: Some(DistanceMetric::RougeL),
            ..AnalysisConfig::default()
        },
        bridges: Default::default(),
        image_shape: None,
        output_dir: "out/text".into(),
    }
}

/// Kernel mass, centre share of that mass, and the grey level each model
/// pulls toward.
const INPAINT_MODELS: [(f64, f64, f64); 4] = [
    (0.5, 0.3, 40.0),
    (0.5, 0.3, 90.0),
    (0.4, 0.3, 150.0),
    (0.4, 0.15, 220.0),
];

pub fn inpaint_generator(index: usize) -> GeneratorSpec {
    let (mass, centre, level) = INPAINT_MODELS[index];
    GeneratorSpec::new(
        format!("img-{index}"),
        GeneratorParams::SyntheticInpaint(InpaintGenParams {
            kernel: InpaintGenParams::centred_kernel(mass, mass * centre),
            bias: vec![level * (1.0 - mass)],
            noise_sigma: 0.5,
            height: 32,
            width: 32,
            channels: 1,
        }),
    )
}

pub fn default_image_config() -> ExperimentConfig {
    ExperimentConfig {
        name: "image-zoo".into(),
        master_seed: DEFAULT_SEED,
        zoo: (0..4).map(inpaint_generator).collect(),
        corpus: CorpusSpec {
            size: 200,
            prompts: None,
            sentence_length: 20,
            filler: Vec::new(),
        },
        iterations: 5,
        verify_at: vec![1, 5],
        metrics: vec![DistanceMetric::ssim(), DistanceMetric::Mse, DistanceMetric::Euclidean],
        verify_metrics: None,
        deltas: DEFAULT_DELTAS.to_vec(),
        mode: ModeSpec::Full,
        verify_mode: None,
        attacks: AttackConfig {
            gaussian_noise: Some(GaussianSweep {
                fractions: vec![0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0],
                mu: 0.0,
                sigma: 4.0,
            }),
            brightness: Some(BrightnessSweep {
                fraction: 0.1,
                factors: vec![1.0, 1.01, 1.02, 1.05, 1.1, 1.5],
            }),
            ..AttackConfig::default()
        },
        natural: Some(NaturalSpec {
            size: 200,
            source: NaturalSource::Uniform {
                low: 0.0,
                high: 255.0,
            },
        }),
        analysis: AnalysisConfig::default(),
        bridges: Default::default(),
        image_shape: None,
        output_dir: "out/image".into(),
    }
}
