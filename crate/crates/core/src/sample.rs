//! Content model: text, image and vector samples plus pixel masks.
//!
//! Images are stored row-major with interleaved channels, so the byte for
//! `(row, col, channel)` lives at `(row * width + col) * channels + channel`.
//! That same order is used for the base64 payload of the canonical file
//! format.

use std::fmt;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
    Vector,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Vector => "vector",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TextSample {
    tokens: Vec<String>,
}

impl TextSample {
    /// Builds a sample from pre-split tokens. Tokens must be non-empty and
    /// free of whitespace; an empty token list is allowed as a degenerate
    /// value and rejected by the operations that need content.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::InvalidSample(format!("token {i} is empty")));
            }
            if t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidSample(format!(
                    "token {i} ({t:?}) contains whitespace"
                )));
            }
        }
        Ok(TextSample { tokens })
    }

    /// Splits on unicode whitespace.
    pub fn from_text(text: &str) -> Self {
        TextSample {
            tokens: text.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

impl fmt::Display for TextSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Rounds half away from zero, then clamps to the 8-bit range.
pub fn quantize(value: f64) -> u8 {
    value.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageSample {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageSample {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidSample(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidSample(format!(
                "image channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = height * width * channels;
        if pixels.len() != expected {
            return Err(Error::InvalidSample(format!(
                "expected {expected} intensities for {height}x{width}x{channels}, got {}",
                pixels.len()
            )));
        }
        Ok(ImageSample {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.pixels[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: u8) {
        let i = self.index(row, col, channel);
        self.pixels[i] = value;
    }

    pub fn same_shape(&self, other: &ImageSample) -> bool {
        self.shape() == other.shape()
    }

    /// Reads a binary or ASCII PGM/PPM file. Grayscale maps to one channel,
    /// colour to three; 16-bit files are rescaled to 8 bits.
    pub fn from_pnm(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()
            .map_err(|e| Error::InvalidSample(format!("{}: {e}", path.display())))?;
        let (channels, buf) = if img.color().has_color() {
            let rgb = img.to_rgb8();
            (3, rgb)
        } else {
            let gray = img.to_luma8();
            let (w, h) = gray.dimensions();
            return Self::new(h as usize, w as usize, 1, gray.into_raw());
        };
        let (w, h) = buf.dimensions();
        Self::new(h as usize, w as usize, channels, buf.into_raw())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSample {
    values: Vec<f64>,
}

impl VectorSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!(
                "vector entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(VectorSample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// The universal content unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleRepr", into = "SampleRepr")]
pub enum Sample {
    Text(TextSample),
    Image(ImageSample),
    Vector(VectorSample),
}

impl Sample {
    pub fn modality(&self) -> Modality {
        match self {
            Sample::Text(_) => Modality::Text,
            Sample::Image(_) => Modality::Image,
            Sample::Vector(_) => Modality::Vector,
        }
    }

    pub fn as_text(&self) -> Result<&TextSample> {
        match self {
            Sample::Text(t) => Ok(t),
            other => Err(Error::ModalityMismatch {
                expected: Modality::Text,
                actual: other.modality(),
            }),
        }
    }

    pub fn as_image(&self) -> Result<&ImageSample> {
        match self {
            Sample::Image(i) => Ok(i),
            other => Err(Error::ModalityMismatch {
                expected: Modality::Image,
                actual: other.modality(),
            }),
        }
    }

    pub fn as_vector(&self) -> Result<&VectorSample> {
        match self {
            Sample::Vector(v) => Ok(v),
            other => Err(Error::ModalityMismatch {
                expected: Modality::Vector,
                actual: other.modality(),
            }),
        }
    }

    pub fn expect_modality(&self, expected: Modality) -> Result<()> {
        if self.modality() == expected {
            Ok(())
        } else {
            Err(Error::ModalityMismatch {
                expected,
                actual: self.modality(),
            })
        }
    }

    /// True when both samples have the same modality and, for images, the
    /// same shape (vectors: same length).
    pub fn same_shape(&self, other: &Sample) -> bool {
        match (self, other) {
            (Sample::Text(_), Sample::Text(_)) => true,
            (Sample::Image(a), Sample::Image(b)) => a.same_shape(b),
            (Sample::Vector(a), Sample::Vector(b)) => a.len() == b.len(),
            _ => false,
        }
    }

    /// Canonical JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("samples always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = self.to_json();
        body.push('\n');
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        Self::from_json(&body)
    }
}

impl From<TextSample> for Sample {
    fn from(t: TextSample) -> Self {
        Sample::Text(t)
    }
}

impl From<ImageSample> for Sample {
    fn from(i: ImageSample) -> Self {
        Sample::Image(i)
    }
}

impl From<VectorSample> for Sample {
    fn from(v: VectorSample) -> Self {
        Sample::Vector(v)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "lowercase")]
enum SampleRepr {
    Text {
        tokens: Vec<String>,
    },
    Image {
        height: usize,
        width: usize,
        channels: usize,
        pixels_b64: String,
    },
    Vector {
        values: Vec<f64>,
    },
}

impl TryFrom<SampleRepr> for Sample {
    type Error = Error;

    fn try_from(repr: SampleRepr) -> Result<Self> {
        Ok(match repr {
            SampleRepr::Text { tokens } => Sample::Text(TextSample::new(tokens)?),
            SampleRepr::Image {
                height,
                width,
                channels,
                pixels_b64,
            } => {
                let pixels = BASE64
                    .decode(pixels_b64.as_bytes())
                    .map_err(|e| Error::InvalidSample(format!("pixels_b64: {e}")))?;
                Sample::Image(ImageSample::new(height, width, channels, pixels)?)
            }
            SampleRepr::Vector { values } => Sample::Vector(VectorSample::new(values)?),
        })
    }
}

impl From<Sample> for SampleRepr {
    fn from(sample: Sample) -> Self {
        match sample {
            Sample::Text(t) => SampleRepr::Text { tokens: t.tokens },
            Sample::Image(i) => SampleRepr::Image {
                height: i.height,
                width: i.width,
                channels: i.channels,
                pixels_b64: BASE64.encode(&i.pixels),
            },
            Sample::Vector(v) => SampleRepr::Vector { values: v.values },
        }
    }
}

/// A set of pixel positions inside an image of fixed height and width.
/// Masks address whole pixels; every channel at a masked position is
/// re-generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaskRepr", into = "MaskRepr")]
pub struct PixelMask {
    height: usize,
    width: usize,
    positions: Vec<(usize, usize)>,
    bits: Vec<bool>,
}

impl PixelMask {
    /// Positions are sorted row-major; duplicates and out-of-bounds entries
    /// are rejected.
    pub fn new(height: usize, width: usize, positions: Vec<(usize, usize)>) -> Result<Self> {
        let mut bits = vec![false; height * width];
        for &(row, col) in &positions {
            if row >= height || col >= width {
                return Err(Error::MaskOutOfBounds {
                    row,
                    col,
                    height,
                    width,
                });
            }
            let i = row * width + col;
            if bits[i] {
                return Err(Error::InvalidMask(format!(
                    "position ({row}, {col}) listed twice"
                )));
            }
            bits[i] = true;
        }
        let positions = (0..height * width)
            .filter(|&i| bits[i])
            .map(|i| (i / width, i % width))
            .collect();
        Ok(PixelMask {
            height,
            width,
            positions,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        PixelMask {
            height,
            width,
            positions: Vec::new(),
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        PixelMask {
            height,
            width,
            positions: (0..height * width).map(|i| (i / width, i % width)).collect(),
            bits: vec![true; height * width],
        }
    }

    pub(crate) fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), height * width);
        let positions = (0..height * width)
            .filter(|&i| bits[i])
            .map(|i| (i / width, i % width))
            .collect();
        PixelMask {
            height,
            width,
            positions,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width && self.bits[row * self.width + col]
    }

    /// Fails unless the mask was built for an image of this height and width.
    pub fn check_fits(&self, image: &ImageSample) -> Result<()> {
        if self.height != image.height() || self.width != image.width() {
            // Report the first position that falls outside, if any; otherwise
            // the mask is smaller than the image.
            if let Some(&(row, col)) = self
                .positions
                .iter()
                .find(|&&(r, c)| r >= image.height() || c >= image.width())
            {
                return Err(Error::MaskOutOfBounds {
                    row,
                    col,
                    height: image.height(),
                    width: image.width(),
                });
            }
            return Err(Error::ShapeMismatch(format!(
                "mask built for {}x{}, image is {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    height: usize,
    width: usize,
    positions: Vec<(usize, usize)>,
}

impl TryFrom<MaskRepr> for PixelMask {
    type Error = Error;

    fn try_from(r: MaskRepr) -> Result<Self> {
        PixelMask::new(r.height, r.width, r.positions)
    }
}

impl From<PixelMask> for MaskRepr {
    fn from(m: PixelMask) -> Self {
        MaskRepr {
            height: m.height,
            width: m.width,
            positions: m.positions,
        }
    }
}
