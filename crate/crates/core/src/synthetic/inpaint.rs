//! Kernel-average inpainter.
//!
//! A masked pixel becomes the 3×3 weighted average of its neighbourhood in
//! the input image plus a per-channel bias and Gaussian noise. Borders use
//! replicated edge pixels. Unmasked pixels are copied through untouched.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{quantize, ImageSample, PixelMask};
use crate::seed::SeedSpec;

fn default_side() -> usize {
    32
}

fn default_channels() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintGenParams {
    /// `kernel[dr + 1][dc + 1]` weights the neighbour at offset `(dr, dc)`.
    pub kernel: [[f64; 3]; 3],
    /// One entry, or one per channel.
    pub bias: Vec<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Shape of images produced by initial generation.
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
}

impl InpaintGenParams {
    /// Kernel with weight `centre` in the middle and the rest of `sum` spread
    /// evenly over the eight neighbours.
    pub fn centred_kernel(sum: f64, centre: f64) -> [[f64; 3]; 3] {
        let side = (sum - centre) / 8.0;
        let mut k = [[side; 3]; 3];
        k[1][1] = centre;
        k
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        let weights = self.kernel.iter().flatten();
        if weights.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("kernel weights must be finite and non-negative".into());
        }
        let sum: f64 = weights.sum();
        if sum > 1.0 + 1e-12 {
            return bad(format!("kernel weights sum to {sum}, more than 1"));
        }
        if self.bias.is_empty() || self.bias.iter().any(|b| !b.is_finite()) {
            return bad("bias must hold finite values".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        if self.height == 0 || self.width == 0 {
            return bad("image height and width must be positive".into());
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if self.bias.len() != 1 && self.bias.len() != self.channels {
            return bad(format!(
                "bias has {} entries for {} channels",
                self.bias.len(),
                self.channels
            ));
        }
        Ok(())
    }

    fn bias_for(&self, channel: usize) -> f64 {
        if self.bias.len() == 1 {
            self.bias[0]
        } else {
            self.bias[channel]
        }
    }
}

#[derive(Debug, Clone)]
pub struct InpaintGenerator {
    params: InpaintGenParams,
}

impl InpaintGenerator {
    pub fn new(params: InpaintGenParams) -> Result<Self> {
        params.validate()?;
        Ok(InpaintGenerator { params })
    }

    pub fn params(&self) -> &InpaintGenParams {
        &self.params
    }

    pub fn regenerate_masked(
        &self,
        x: &ImageSample,
        mask: &PixelMask,
        seed: &SeedSpec,
    ) -> Result<ImageSample> {
        mask.check_fits(x)?;
        if self.params.bias.len() != 1 && self.params.bias.len() != x.channels() {
            return Err(Error::InvalidParameters(format!(
                "bias has {} entries for a {}-channel image",
                self.params.bias.len(),
                x.channels()
            )));
        }
        let (h, w) = (x.height() as isize, x.width() as isize);
        let k = &self.params.kernel;
        let sigma = self.params.noise_sigma;
        let mut rng = seed.rng();
        let mut out = x.clone();
        for &(row, col) in mask.positions() {
            for ch in 0..x.channels() {
                let mut acc = 0.0;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let r = (row as isize + dr).clamp(0, h - 1) as usize;
                        let c = (col as isize + dc).clamp(0, w - 1) as usize;
                        acc += k[(dr + 1) as usize][(dc + 1) as usize] * f64::from(x.get(r, c, ch));
                    }
                }
                acc += self.params.bias_for(ch);
                if sigma > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    acc += sigma * z;
                }
                out.set(row, col, ch, quantize(acc));
            }
        }
        Ok(out)
    }

    pub fn regenerate(&self, x: &ImageSample, seed: &SeedSpec) -> Result<ImageSample> {
        self.regenerate_masked(x, &PixelMask::full(x.height(), x.width()), seed)
    }

    /// Smooth prompt-derived content (a few sinusoids over mid-grey plus
    /// uniform texture), then one full pass of this model.
    pub fn generate_initial(&self, content: &SeedSpec, step: &SeedSpec) -> Result<ImageSample> {
        let img = prompt_image(
            self.params.height,
            self.params.width,
            self.params.channels,
            content,
        )?;
        self.regenerate(&img, step)
    }
}

/// Deterministic content image for a prompt seed.
pub fn prompt_image(
    height: usize,
    width: usize,
    channels: usize,
    content: &SeedSpec,
) -> Result<ImageSample> {
    let mut rng = content.rng();
    let mut waves = Vec::new();
    for _ in 0..3 {
        let amp = rng.random_range(10.0..40.0);
        let fr = rng.random_range(0.05..0.3);
        let fc = rng.random_range(0.05..0.3);
        let phase = rng.random::<f64>() * TAU;
        waves.push((amp, fr, fc, phase));
    }
    let mut pixels = Vec::with_capacity(height * width * channels);
    for r in 0..height {
        for c in 0..width {
            let base: f64 = 128.0
                + waves
                    .iter()
                    .map(|(amp, fr, fc, ph)| amp * (fr * r as f64 + fc * c as f64 + ph).sin())
                    .sum::<f64>();
            for _ in 0..channels {
                let texture = rng.random_range(-10.0..10.0);
                pixels.push(quantize(base + texture));
            }
        }
    }
    ImageSample::new(height, width, channels, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kernel: [[f64; 3]; 3], bias: f64, sigma: f64) -> InpaintGenParams {
        InpaintGenParams {
            kernel,
            bias: vec![bias],
            noise_sigma: sigma,
            height: 8,
            width: 8,
            channels: 1,
        }
    }

    #[test]
    fn empty_mask_is_identity() {
        let g = InpaintGenerator::new(params(InpaintGenParams::centred_kernel(0.5, 0.2), 30.0, 2.0))
            .unwrap();
        let x = prompt_image(8, 8, 1, &SeedSpec::new(3)).unwrap();
        let y = g
            .regenerate_masked(&x, &PixelMask::empty(8, 8), &SeedSpec::new(1))
            .unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn constant_image_is_a_fixed_point_of_unit_kernel() {
        let g = InpaintGenerator::new(params(InpaintGenParams::centred_kernel(1.0, 0.5), 0.0, 0.0))
            .unwrap();
        let x = ImageSample::filled(5, 7, 1, 77).unwrap();
        assert_eq!(g.regenerate(&x, &SeedSpec::new(0)).unwrap(), x);
    }

    #[test]
    fn single_pixel_hand_convolution() {
        let kernel = [[0.1, 0.0, 0.1], [0.0, 0.4, 0.0], [0.1, 0.0, 0.2]];
        let g = InpaintGenerator::new(params(kernel, 3.0, 0.0)).unwrap();
        let x = ImageSample::new(3, 3, 1, vec![10, 20, 30, 40, 50, 60, 70, 80, 90]).unwrap();
        let mask = PixelMask::new(3, 3, vec![(1, 1)]).unwrap();
        let y = g.regenerate_masked(&x, &mask, &SeedSpec::new(0)).unwrap();
        // 0.1*10 + 0.1*30 + 0.4*50 + 0.1*70 + 0.2*90 + 3 = 52
        assert_eq!(y.get(1, 1, 0), 52);
        for (i, (&a, &b)) in x.pixels().iter().zip(y.pixels()).enumerate() {
            if i != 4 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn corner_uses_replicated_edges_and_clamps() {
        let kernel = InpaintGenParams::centred_kernel(1.0, 1.0);
        let g = InpaintGenerator::new(params(kernel, 100.0, 0.0)).unwrap();
        let x = ImageSample::new(2, 2, 1, vec![200, 0, 0, 0]).unwrap();
        let mask = PixelMask::new(2, 2, vec![(0, 0)]).unwrap();
        let y = g.regenerate_masked(&x, &mask, &SeedSpec::new(0)).unwrap();
        assert_eq!(y.get(0, 0, 0), 255);
    }

    #[test]
    fn validation() {
        assert!(params(InpaintGenParams::centred_kernel(1.2, 0.2), 0.0, 0.0)
            .validate()
            .is_err());
        let mut p = params(InpaintGenParams::centred_kernel(0.5, 0.2), 0.0, 0.0);
        p.kernel[0][0] = -0.1;
        assert!(p.validate().is_err());
        let mut p = params(InpaintGenParams::centred_kernel(0.5, 0.2), 0.0, 0.0);
        p.bias = vec![1.0, 2.0];
        assert!(p.validate().is_err());
    }
}
