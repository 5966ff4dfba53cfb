//! The re-generation interface shared by built-in and bridged models.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bridge::BridgeClient;
use crate::error::{Error, Result};
use crate::sample::{Modality, PixelMask, Sample, TextSample};
use crate::seed::{prompt_hash, SeedSpec};
use crate::synthetic::{
    InpaintGenParams, InpaintGenerator, TextGenParams, TextGenerator, VectorGenParams,
    VectorGenerator,
};

/// A model served by an external process over the bridge protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeGenParams {
    /// Name of an entry in the experiment's `bridges` table.
    pub endpoint: String,
    pub modality: Modality,
    /// Whether the back-end implements `regenerate_masked`.
    #[serde(default)]
    pub masked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorParams {
    SyntheticVector(VectorGenParams),
    SyntheticText(TextGenParams),
    SyntheticInpaint(InpaintGenParams),
    Bridge(BridgeGenParams),
}

impl GeneratorParams {
    pub fn kind(&self) -> &'static str {
        match self {
            GeneratorParams::SyntheticVector(_) => "synthetic-vector",
            GeneratorParams::SyntheticText(_) => "synthetic-text",
            GeneratorParams::SyntheticInpaint(_) => "synthetic-inpaint",
            GeneratorParams::Bridge(_) => "bridge",
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            GeneratorParams::SyntheticVector(_) => Modality::Vector,
            GeneratorParams::SyntheticText(_) => Modality::Text,
            GeneratorParams::SyntheticInpaint(_) => Modality::Image,
            GeneratorParams::Bridge(b) => b.modality,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorParams::SyntheticVector(p) => p.validate(),
            GeneratorParams::SyntheticText(p) => p.validate(),
            GeneratorParams::SyntheticInpaint(p) => p.validate(),
            GeneratorParams::Bridge(b) if b.endpoint.is_empty() => Err(
                Error::InvalidParameters("bridge generator needs an endpoint name".into()),
            ),
            GeneratorParams::Bridge(_) => Ok(()),
        }
    }
}

/// Serialized form of a generator inside an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub id: String,
    #[serde(flatten)]
    pub params: GeneratorParams,
}

impl GeneratorSpec {
    pub fn new(id: impl Into<String>, params: GeneratorParams) -> Self {
        GeneratorSpec {
            id: id.into(),
            params,
        }
    }
}

enum Backend {
    Vector(VectorGenerator),
    Text(TextGenerator),
    Inpaint(InpaintGenerator),
    Bridge {
        client: Arc<BridgeClient>,
        modality: Modality,
        masked: bool,
    },
}

/// A validated, ready-to-run generator.
pub struct Generator {
    id: String,
    kind: &'static str,
    backend: Backend,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .finish()
    }
}

impl Generator {
    /// Builds a synthetic generator. Bridge specs need [`Generator::build`].
    pub fn synthetic(spec: &GeneratorSpec) -> Result<Self> {
        Self::build(spec, &HashMap::new())
    }

    pub fn build(spec: &GeneratorSpec, bridges: &HashMap<String, Arc<BridgeClient>>) -> Result<Self> {
        if spec.id.is_empty() {
            return Err(Error::InvalidParameters("generator id is empty".into()));
        }
        spec.params.validate()?;
        let backend = match &spec.params {
            GeneratorParams::SyntheticVector(p) => Backend::Vector(VectorGenerator::new(p.clone())?),
            GeneratorParams::SyntheticText(p) => Backend::Text(TextGenerator::new(p.clone())?),
            GeneratorParams::SyntheticInpaint(p) => {
                Backend::Inpaint(InpaintGenerator::new(p.clone())?)
            }
            GeneratorParams::Bridge(b) => {
                let client = bridges.get(&b.endpoint).ok_or_else(|| {
                    Error::InvalidParameters(format!("unknown bridge endpoint `{}`", b.endpoint))
                })?;
                Backend::Bridge {
                    client: Arc::clone(client),
                    modality: b.modality,
                    masked: b.masked,
                }
            }
        };
        Ok(Generator {
            id: spec.id.clone(),
            kind: spec.params.kind(),
            backend,
        })
    }

    pub fn bridged(
        id: impl Into<String>,
        client: Arc<BridgeClient>,
        modality: Modality,
        masked: bool,
    ) -> Self {
        Generator {
            id: id.into(),
            kind: "bridge",
            backend: Backend::Bridge {
                client,
                modality,
                masked,
            },
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn modality(&self) -> Modality {
        match &self.backend {
            Backend::Vector(_) => Modality::Vector,
            Backend::Text(_) => Modality::Text,
            Backend::Inpaint(_) => Modality::Image,
            Backend::Bridge { modality, .. } => *modality,
        }
    }

    pub fn supports_mask(&self) -> bool {
        match &self.backend {
            Backend::Inpaint(_) => true,
            Backend::Bridge {
                modality, masked, ..
            } => *masked && *modality == Modality::Image,
            _ => false,
        }
    }

    /// Produces `x⁽⁰⁾` for a prompt.
    ///
    /// Synthetic models hash the prompt into a content stream under
    /// `seed/"content"/hash`, shared by every model given the same seed, and
    /// draw their own noise under `seed/"step"/id`.
    pub fn generate_initial(&self, prompt: &str, seed: &SeedSpec) -> Result<Sample> {
        if prompt.trim().is_empty() {
            return Err(Error::InvalidParameters("prompt is empty".into()));
        }
        let content = seed.derive("content").derive(prompt_hash(prompt));
        let step = seed.derive("step").derive(self.id.as_str());
        Ok(match &self.backend {
            Backend::Vector(g) => g.generate_initial(&content, &step)?.into(),
            Backend::Inpaint(g) => g.generate_initial(&content, &step)?.into(),
            Backend::Text(g) => g.regenerate(&TextSample::from_text(prompt), &step)?.into(),
            Backend::Bridge {
                client, modality, ..
            } => {
                let out = client.generate_initial(prompt, *modality, step.as_u64())?;
                out.expect_modality(*modality)?;
                out
            }
        })
    }

    /// One full re-generation pass `G(x)`.
    pub fn regenerate(&self, sample: &Sample, seed: &SeedSpec) -> Result<Sample> {
        sample.expect_modality(self.modality())?;
        let out: Sample = match (&self.backend, sample) {
            (Backend::Vector(g), Sample::Vector(x)) => g.regenerate(x, seed)?.into(),
            (Backend::Text(g), Sample::Text(x)) => g.regenerate(x, seed)?.into(),
            (Backend::Inpaint(g), Sample::Image(x)) => g.regenerate(x, seed)?.into(),
            (Backend::Bridge { client, .. }, x) => {
                let out = client.regenerate(x, seed.as_u64())?;
                check_bridge_output(x, &out)?;
                out
            }
            _ => unreachable!("modality checked above"),
        };
        Ok(out)
    }

    /// Re-generates only the masked pixels of an image.
    pub fn regenerate_masked(&self, sample: &Sample, mask: &PixelMask, seed: &SeedSpec) -> Result<Sample> {
        let image = sample.as_image()?;
        mask.check_fits(image)?;
        match &self.backend {
            Backend::Inpaint(g) => Ok(g.regenerate_masked(image, mask, seed)?.into()),
            Backend::Bridge {
                client,
                masked: true,
                modality: Modality::Image,
            } => {
                let out = client.regenerate_masked(sample, mask, seed.as_u64())?;
                check_bridge_output(sample, &out)?;
                let out_img = out.as_image()?;
                for r in 0..image.height() {
                    for c in 0..image.width() {
                        if mask.contains(r, c) {
                            continue;
                        }
                        for ch in 0..image.channels() {
                            if out_img.get(r, c, ch) != image.get(r, c, ch) {
                                return Err(Error::Bridge(format!(
                                    "back-end changed unmasked pixel ({r}, {c})"
                                )));
                            }
                        }
                    }
                }
                Ok(out)
            }
            _ => Err(Error::UnsupportedModality(format!(
                "generator {} does not support masked re-generation",
                self.id
            ))),
        }
    }
}

fn check_bridge_output(input: &Sample, output: &Sample) -> Result<()> {
    output.expect_modality(input.modality())?;
    if let (Sample::Image(a), Sample::Image(b)) = (input, output) {
        if !a.same_shape(b) {
            return Err(Error::ShapeMismatch(format!(
                "back-end returned {:?} for a {:?} input",
                b.shape(),
                a.shape()
            )));
        }
    }
    Ok(())
}
