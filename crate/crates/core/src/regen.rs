//! Iterative re-generation and the two image re-generation modes.
//!
//! `x⁽ᵏ⁾ = G(x⁽ᵏ⁻¹⁾)` for `k = 1..K`, with step `k` seeded by
//! `derive_seed(seed, k)`. Images can be re-generated in full, through a
//! fixed watermark mask, or segment by segment with the segments merged back
//! by position.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::metrics::Metric;
use crate::sample::{ImageSample, PixelMask, Sample};
use crate::seed::{derive_seed, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentScheme {
    /// Position `p` (row-major) goes to segment `p mod T`.
    #[default]
    Striped,
    /// A seeded shuffle of positions dealt round-robin.
    SeededRandom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationPlan {
    height: usize,
    width: usize,
    num_segments: usize,
    /// Segment index of each position, row-major.
    assignment: Vec<usize>,
}

impl SegmentationPlan {
    pub fn from_assignment(
        height: usize,
        width: usize,
        num_segments: usize,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        if num_segments < 2 {
            return Err(Error::InvalidParameters(format!(
                "a segmentation needs at least 2 segments, got {num_segments}"
            )));
        }
        if assignment.len() != height * width {
            return Err(Error::PlanMismatch(format!(
                "assignment covers {} positions, image has {}",
                assignment.len(),
                height * width
            )));
        }
        let plan = SegmentationPlan {
            height,
            width,
            num_segments,
            assignment,
        };
        let sizes = plan.sizes();
        if plan.assignment.iter().any(|&t| t >= num_segments) {
            return Err(Error::PlanMismatch("segment index out of range".into()));
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        if hi - lo > 1 || *lo == 0 {
            return Err(Error::PlanMismatch(format!(
                "segment sizes {sizes:?} are not balanced"
            )));
        }
        Ok(plan)
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn segment_of(&self, row: usize, col: usize) -> usize {
        self.assignment[row * self.width + col]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_segments];
        for &t in &self.assignment {
            if t < self.num_segments {
                sizes[t] += 1;
            }
        }
        sizes
    }

    pub fn segment_mask(&self, t: usize) -> PixelMask {
        let bits = self.assignment.iter().map(|&s| s == t).collect();
        PixelMask::from_bits(self.height, self.width, bits)
    }

    fn check_fits(&self, image: &ImageSample) -> Result<()> {
        if (image.height(), image.width()) != (self.height, self.width) {
            return Err(Error::PlanMismatch(format!(
                "segmentation built for {}x{}, image is {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }
}

/// Balanced partition of the `height × width` positions into `t` segments.
pub fn make_segmentation(
    height: usize,
    width: usize,
    t: usize,
    scheme: SegmentScheme,
    seed: &SeedSpec,
) -> Result<SegmentationPlan> {
    let n = height * width;
    if t > n {
        return Err(Error::TooManySegments {
            segments: t,
            positions: n,
        });
    }
    let assignment = match scheme {
        SegmentScheme::Striped => (0..n).map(|p| p % t).collect(),
        SegmentScheme::SeededRandom => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed.derive("segmentation").rng());
            let mut assignment = vec![0; n];
            for (i, &p) in order.iter().enumerate() {
                assignment[p] = i % t;
            }
            assignment
        }
    };
    SegmentationPlan::from_assignment(height, width, t, assignment)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkPlan {
    /// One pixel in `n` is masked.
    n: usize,
    mask: PixelMask,
}

impl WatermarkPlan {
    pub fn new(n: usize, mask: PixelMask) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameters(format!(
                "watermark fraction 1/{n} needs N >= 2"
            )));
        }
        let expected = mask.height() * mask.width() / n;
        if mask.len() != expected {
            return Err(Error::PlanMismatch(format!(
                "watermark mask has {} positions, 1/{n} of the image is {expected}",
                mask.len()
            )));
        }
        Ok(WatermarkPlan { n, mask })
    }

    /// Draws `floor(H·W / n)` fixed positions from `seed`.
    pub fn seeded(height: usize, width: usize, n: usize, seed: &SeedSpec) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameters(format!(
                "watermark fraction 1/{n} needs N >= 2"
            )));
        }
        let total = height * width;
        let picks = index::sample(&mut seed.derive("watermark").rng(), total, total / n);
        let positions = picks.into_iter().map(|i| (i / width, i % width)).collect();
        Self::new(n, PixelMask::new(height, width, positions)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> &PixelMask {
        &self.mask
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum RegenMode {
    Full,
    Watermark(WatermarkPlan),
    Fingerprint(SegmentationPlan),
}

/// One masked-inpainting pass over the plan's fixed mask.
pub fn regenerate_watermark(
    generator: &Generator,
    x: &ImageSample,
    plan: &WatermarkPlan,
    seed: &SeedSpec,
) -> Result<ImageSample> {
    if plan.mask.image_shape() != (x.height(), x.width()) {
        return Err(Error::PlanMismatch(format!(
            "watermark mask built for {:?}, image is {}x{}",
            plan.mask.image_shape(),
            x.height(),
            x.width()
        )));
    }
    let sample = Sample::Image(x.clone());
    let out = generator.regenerate_masked(&sample, &plan.mask, seed)?;
    Ok(out.as_image()?.clone())
}

/// Re-generates every segment with the rest of the original image as
/// context, then keeps each position's value from its own segment's pass.
pub fn regenerate_fingerprint(
    generator: &Generator,
    x: &ImageSample,
    plan: &SegmentationPlan,
    seed: &SeedSpec,
) -> Result<ImageSample> {
    plan.check_fits(x)?;
    let original = Sample::Image(x.clone());
    let mut merged = x.clone();
    for t in 0..plan.num_segments() {
        let mask = plan.segment_mask(t);
        let pass = generator.regenerate_masked(&original, &mask, &derive_seed(seed, t))?;
        let pass = pass.as_image()?;
        for &(r, c) in mask.positions() {
            for ch in 0..x.channels() {
                merged.set(r, c, ch, pass.get(r, c, ch));
            }
        }
    }
    Ok(merged)
}

/// One re-generation step in the given mode.
pub fn regenerate_with_mode(
    generator: &Generator,
    x: &Sample,
    mode: &RegenMode,
    seed: &SeedSpec,
) -> Result<Sample> {
    match mode {
        RegenMode::Full => generator.regenerate(x, seed),
        RegenMode::Watermark(plan) => {
            let img = image_for_plan(x)?;
            Ok(regenerate_watermark(generator, img, plan, seed)?.into())
        }
        RegenMode::Fingerprint(plan) => {
            let img = image_for_plan(x)?;
            Ok(regenerate_fingerprint(generator, img, plan, seed)?.into())
        }
    }
}

fn image_for_plan(x: &Sample) -> Result<&ImageSample> {
    x.as_image()
        .map_err(|_| Error::PlanMismatch(format!("mask plans need an image, got a {} sample", x.modality())))
}

/// The iterates `x⁽⁰⁾..x⁽ᴷ⁾` and the step distances `D(x⁽ᵏ⁾, x⁽ᵏ⁻¹⁾)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenTrace {
    pub generator_id: String,
    pub seed: SeedSpec,
    pub samples: Vec<Sample>,
    /// Metric id → distances for `k = 1..K`.
    pub step_distances: BTreeMap<String, Vec<f64>>,
}

impl RegenTrace {
    pub fn iterations(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }

    pub fn sample(&self, k: usize) -> Option<&Sample> {
        self.samples.get(k)
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a trace holds at least x0")
    }

    pub fn distances(&self, metric_id: &str) -> Option<&[f64]> {
        self.step_distances.get(metric_id).map(Vec::as_slice)
    }

    /// Writes `x_000.json … x_KKK.json` and `trace.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.samples.len());
        for (k, s) in self.samples.iter().enumerate() {
            let name = format!("x_{k:03}.json");
            s.save(&dir.join(&name))?;
            files.push(name);
        }
        let manifest = TraceManifest {
            generator_id: self.generator_id.clone(),
            iterations: self.iterations(),
            seed: self.seed.clone(),
            step_seeds: (1..=self.iterations())
                .map(|k| derive_seed(&self.seed, k))
                .collect(),
            samples: files,
            step_distances: self.step_distances.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(dir.join("trace.json"), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("trace.json");
        let text = fs::read_to_string(&path)
            .map_err(|_| Error::MissingArtifacts(path.display().to_string()))?;
        let manifest: TraceManifest = serde_json::from_str(&text)?;
        let samples = manifest
            .samples
            .iter()
            .map(|name| {
                let p = dir.join(name);
                if !p.exists() {
                    return Err(Error::MissingArtifacts(p.display().to_string()));
                }
                Sample::load(&p)
            })
            .collect::<Result<Vec<_>>>()?;
        if samples.len() != manifest.iterations + 1 {
            return Err(Error::InconsistentTraces(format!(
                "{} lists {} samples for {} iterations",
                path.display(),
                samples.len(),
                manifest.iterations
            )));
        }
        Ok(RegenTrace {
            generator_id: manifest.generator_id,
            seed: manifest.seed,
            samples,
            step_distances: manifest.step_distances,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TraceManifest {
    generator_id: String,
    iterations: usize,
    seed: SeedSpec,
    step_seeds: Vec<SeedSpec>,
    samples: Vec<String>,
    step_distances: BTreeMap<String, Vec<f64>>,
}

/// Runs `k` re-generation steps from `x0`, recording step distances under
/// every metric.
pub fn iterate_regenerate(
    generator: &Generator,
    x0: &Sample,
    k: usize,
    mode: &RegenMode,
    metrics: &[Metric],
    seed: &SeedSpec,
) -> Result<RegenTrace> {
    x0.expect_modality(generator.modality())?;
    if let RegenMode::Watermark(_) | RegenMode::Fingerprint(_) = mode {
        image_for_plan(x0)?;
    }
    let mut samples = Vec::with_capacity(k + 1);
    samples.push(x0.clone());
    let mut step_distances: BTreeMap<String, Vec<f64>> = metrics
        .iter()
        .map(|m| (m.id(), Vec::with_capacity(k)))
        .collect();
    for step in 1..=k {
        let prev = &samples[step - 1];
        let next = regenerate_with_mode(generator, prev, mode, &derive_seed(seed, step))?;
        for m in metrics {
            let d = m.distance(&next, prev)?;
            step_distances.get_mut(&m.id()).expect("metric registered").push(d);
        }
        samples.push(next);
    }
    Ok(RegenTrace {
        generator_id: generator.id().to_owned(),
        seed: seed.clone(),
        samples,
        step_distances,
    })
}
