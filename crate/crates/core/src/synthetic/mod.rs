//! Synthetic generator families with known fixed points.

pub mod inpaint;
pub mod text;
pub mod vector;

pub use inpaint::{prompt_image, InpaintGenParams, InpaintGenerator};
pub use text::{TextGenParams, TextGenerator};
pub use vector::{VectorGenParams, VectorGenerator};
