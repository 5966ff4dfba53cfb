//! Generative-model fingerprinting by iterative re-generation.
//!
//! Content produced by a generator is pushed toward that generator's fixed
//! point each time it is fed back through it. Authorship of a sample `x` is
//! then tested by comparing how far the claimed authentic model moves it,
//! `D(G_a(x), x)`, with how far a contrast model moves it, `D(G_c(x), x)`.

pub mod analysis;
pub mod attacks;
pub mod bridge;
pub mod error;
pub mod experiment;
pub mod generator;
pub mod metrics;
pub mod regen;
pub mod sample;
pub mod seed;
pub mod synthetic;
pub mod verify;

pub use error::{Error, Result};
pub use generator::{Generator, GeneratorParams, GeneratorSpec};
pub use metrics::{DistanceMetric, DistanceRecord, Metric};
pub use sample::{ImageSample, Modality, PixelMask, Sample, TextSample, VectorSample};
pub use regen::{RegenMode, RegenTrace};
pub use seed::{derive_seed, SeedSpec};
