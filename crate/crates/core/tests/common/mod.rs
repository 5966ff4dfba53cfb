//! Brute-force reference implementations shared by the integration suites.
//!
//! Each oracle is written from the metric's definition, with no code shared
//! with the library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refprint::{ImageSample, TextSample};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Occurrences of `gram` in `tokens`, by scanning every window.
fn occurrences(tokens: &[String], gram: &[String]) -> usize {
    let mut count = 0;
    let mut start = 0;
    while start + gram.len() <= tokens.len() {
        if tokens[start..start + gram.len()] == *gram {
            count += 1;
        }
        start += 1;
    }
    count
}

/// `1 - BLEU` with clipped n-gram precisions, effective order
/// `min(max_n, |cand|)`, `1e-9/total` for an order without matches, and the
/// usual brevity penalty.
pub fn bleu_oracle(cand: &[String], reference: &[String], max_n: usize) -> f64 {
    let order = max_n.min(cand.len());
    let mut product = 1.0f64;
    for n in 1..=order {
        let total = cand.len() - n + 1;
        let mut matched = 0;
        for i in 0..total {
            let gram = &cand[i..i + n];
            let first = (0..i).all(|j| cand[j..j + n] != *gram);
            if first {
                matched += occurrences(cand, gram).min(occurrences(reference, gram));
            }
        }
        let p = if matched == 0 {
            1e-9 / total as f64
        } else {
            matched as f64 / total as f64
        };
        product *= p.powf(1.0 / order as f64);
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    1.0 - (bp * product).min(1.0)
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|t| it.any(|h| h == *t))
}

/// LCS length by enumerating every subsequence of `a` (|a| ≤ 16).
pub fn lcs_oracle(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let ones = mask.count_ones() as usize;
        if ones <= best {
            continue;
        }
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if is_subsequence(&sub, b) {
            best = ones;
        }
    }
    best
}

pub fn rouge_l_oracle(cand: &[String], reference: &[String]) -> f64 {
    let l = lcs_oracle(cand, reference) as f64;
    if l == 0.0 {
        return 1.0;
    }
    let p = l / cand.len() as f64;
    let r = l / reference.len() as f64;
    1.0 - 2.0 * p * r / (p + r)
}

pub fn mse_oracle(a: &ImageSample, b: &ImageSample) -> f64 {
    let (h, w, c) = a.shape();
    let mut total = 0i64;
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let d = i64::from(a.get(r, col, ch)) - i64::from(b.get(r, col, ch));
                total += d * d;
            }
        }
    }
    total as f64 / (h * w * c) as f64
}

/// `1 - SSIM` over non-overlapping tiles from exact integer moment sums.
pub fn ssim_oracle(a: &ImageSample, b: &ImageSample, window: usize) -> f64 {
    let (h, w, c) = a.shape();
    let (tr, tc) = (h / window, w / window);
    let n = (window * window) as i64;
    let c1 = 2.55f64 * 2.55;
    let c2 = 7.65f64 * 7.65;
    let mut per_channel = Vec::new();
    for ch in 0..c {
        // Per tile: Σa, Σb, Σa², Σb², Σab.
        let mut sums = vec![[0i64; 5]; tr * tc];
        for r in 0..tr * window {
            for col in 0..tc * window {
                let x = i64::from(a.get(r, col, ch));
                let y = i64::from(b.get(r, col, ch));
                let s = &mut sums[(r / window) * tc + col / window];
                s[0] += x;
                s[1] += y;
                s[2] += x * x;
                s[3] += y * y;
                s[4] += x * y;
            }
        }
        let nf = n as f64;
        let mean: f64 = sums
            .iter()
            .map(|s| {
                let mu_a = s[0] as f64 / nf;
                let mu_b = s[1] as f64 / nf;
                let va = (n * s[2] - s[0] * s[0]) as f64 / (nf * nf);
                let vb = (n * s[3] - s[1] * s[1]) as f64 / (nf * nf);
                let cov = (n * s[4] - s[0] * s[1]) as f64 / (nf * nf);
                ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2))
            })
            .sum::<f64>()
            / sums.len() as f64;
        per_channel.push(mean);
    }
    1.0 - per_channel.iter().sum::<f64>() / c as f64
}

pub fn random_tokens(rng: &mut impl Rng, alphabet: usize, min_len: usize, max_len: usize) -> Vec<String> {
    let len = rng.random_range(min_len..=max_len);
    (0..len)
        .map(|_| format!("w{}", rng.random_range(0..alphabet)))
        .collect()
}

pub fn random_text_pair(rng: &mut impl Rng) -> (TextSample, TextSample) {
    let alphabet = rng.random_range(2..=5);
    let a = random_tokens(rng, alphabet, 1, 12);
    let b = if rng.random_bool(0.3) {
        // A light edit of `a`, so that high-order matches occur.
        let mut b = a.clone();
        let i = rng.random_range(0..b.len());
        b[i] = format!("w{}", rng.random_range(0..alphabet));
        b
    } else {
        random_tokens(rng, alphabet, 1, 12)
    };
    (TextSample::new(a).unwrap(), TextSample::new(b).unwrap())
}

/// Two same-shape images; the second is sometimes a noisy copy of the first.
pub fn random_image_pair(rng: &mut impl Rng) -> (ImageSample, ImageSample) {
    let h = rng.random_range(8..=20);
    let w = rng.random_range(8..=20);
    let c = if rng.random_bool(0.5) { 1 } else { 3 };
    let a: Vec<u8> = (0..h * w * c).map(|_| rng.random()).collect();
    let b: Vec<u8> = if rng.random_bool(0.5) {
        a.iter()
            .map(|&v| (i32::from(v) + rng.random_range(-12..=12)).clamp(0, 255) as u8)
            .collect()
    } else {
        (0..h * w * c).map(|_| rng.random()).collect()
    };
    (
        ImageSample::new(h, w, c, a).unwrap(),
        ImageSample::new(h, w, c, b).unwrap(),
    )
}
