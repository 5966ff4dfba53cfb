//! Affine contraction toward a model-specific fixed point.
//!
//! `f(x) = x* + L·Q(x − x*) + ε`. `Q` is orthogonal, so without noise the map
//! is Lipschitz with constant exactly `L`. `Q = P·R·Pᵀ` where `P` is a product
//! of random Givens rotations and `R` rotates each coordinate plane
//! `(2b, 2b+1)` by `rotation_angle`. The block structure keeps every
//! direction turning by the same angle, so no direction of `x − x*` is
//! preserved by `I − L·Q` better than another.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::VectorSample;
use crate::seed::SeedSpec;

fn default_rotation_angle() -> f64 {
    PI / 3.0
}

fn default_prompt_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorGenParams {
    pub dim: usize,
    pub fixed_point: Vec<f64>,
    pub contraction: f64,
    /// Zero selects `Q = I`.
    #[serde(default)]
    pub rotation_seed: u64,
    #[serde(default = "default_rotation_angle")]
    pub rotation_angle: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Spread of the prompt-derived offset used by initial generation.
    #[serde(default = "default_prompt_scale")]
    pub prompt_scale: f64,
}

impl VectorGenParams {
    pub fn new(fixed_point: Vec<f64>, contraction: f64) -> Self {
        VectorGenParams {
            dim: fixed_point.len(),
            fixed_point,
            contraction,
            rotation_seed: 0,
            rotation_angle: default_rotation_angle(),
            noise_sigma: 0.0,
            prompt_scale: default_prompt_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.fixed_point.len() != self.dim {
            return bad(format!(
                "fixed_point has {} entries, dim is {}",
                self.fixed_point.len(),
                self.dim
            ));
        }
        if self.fixed_point.iter().any(|v| !v.is_finite()) {
            return bad("fixed_point must be finite".into());
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return bad(format!("contraction {} is outside (0, 1)", self.contraction));
        }
        if !self.rotation_angle.is_finite() {
            return bad("rotation_angle must be finite".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        if !(self.prompt_scale >= 0.0 && self.prompt_scale.is_finite()) {
            return bad(format!("prompt_scale {} must be finite and >= 0", self.prompt_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VectorGenerator {
    params: VectorGenParams,
    /// Row-major `dim × dim`.
    q: Vec<f64>,
}

impl VectorGenerator {
    pub fn new(params: VectorGenParams) -> Result<Self> {
        params.validate()?;
        let q = rotation_matrix(params.dim, params.rotation_seed, params.rotation_angle);
        Ok(VectorGenerator { params, q })
    }

    pub fn params(&self) -> &VectorGenParams {
        &self.params
    }

    pub fn rotation(&self) -> &[f64] {
        &self.q
    }

    pub fn regenerate(&self, x: &VectorSample, seed: &SeedSpec) -> Result<VectorSample> {
        let dim = self.params.dim;
        if x.len() != dim {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: dim,
            });
        }
        let xs = &self.params.fixed_point;
        let offset: Vec<f64> = x.values().iter().zip(xs).map(|(a, b)| a - b).collect();
        let l = self.params.contraction;
        let sigma = self.params.noise_sigma;
        let mut rng = seed.rng();
        let mut out = Vec::with_capacity(dim);
        for (row, &c) in self.q.chunks_exact(dim).zip(xs) {
            let qv: f64 = row.iter().zip(&offset).map(|(a, b)| a * b).sum();
            let mut y = c + l * qv;
            if sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                y += sigma * z;
            }
            out.push(y);
        }
        VectorSample::new(out)
    }

    /// Prompt content `u ~ N(0, prompt_scale²·I)` placed around this model's
    /// fixed point, then passed once through the map.
    pub fn generate_initial(&self, content: &SeedSpec, step: &SeedSpec) -> Result<VectorSample> {
        let mut rng = content.rng();
        let start: Vec<f64> = self
            .params
            .fixed_point
            .iter()
            .map(|c| {
                let z: f64 = rng.sample(StandardNormal);
                c + self.params.prompt_scale * z
            })
            .collect();
        self.regenerate(&VectorSample::new(start)?, step)
    }
}

/// Orthogonal `Q = P·R·Pᵀ`; identity when `rotation_seed` is zero.
pub fn rotation_matrix(dim: usize, rotation_seed: u64, angle: f64) -> Vec<f64> {
    let mut q = identity(dim);
    if rotation_seed == 0 {
        return q;
    }
    // P as a product of 3·dim Givens rotations on random planes.
    let mut p = identity(dim);
    if dim >= 2 {
        let mut rng = SeedSpec::new(rotation_seed).derive("rotation").rng();
        for _ in 0..3 * dim {
            let i = rng.random_range(0..dim);
            let mut j = rng.random_range(0..dim - 1);
            if j >= i {
                j += 1;
            }
            let theta = rng.random::<f64>() * TAU;
            givens_rows(&mut p, dim, i, j, theta);
        }
    }
    let mut r = identity(dim);
    let (s, c) = angle.sin_cos();
    for b in 0..dim / 2 {
        let (i, j) = (2 * b, 2 * b + 1);
        r[i * dim + i] = c;
        r[i * dim + j] = -s;
        r[j * dim + i] = s;
        r[j * dim + j] = c;
    }
    let pr = matmul(&p, &r, dim);
    let pt = transpose(&p, dim);
    q.copy_from_slice(&matmul(&pr, &pt, dim));
    q
}

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

fn givens_rows(m: &mut [f64], dim: usize, i: usize, j: usize, theta: f64) {
    let (s, c) = theta.sin_cos();
    for col in 0..dim {
        let a = m[i * dim + col];
        let b = m[j * dim + col];
        m[i * dim + col] = c * a - s * b;
        m[j * dim + col] = s * a + c * b;
    }
}

fn matmul(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

fn transpose(a: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[j * dim + i] = a[i * dim + j];
        }
    }
    out
}
