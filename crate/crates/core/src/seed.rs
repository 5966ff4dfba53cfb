//! Label-path seeding.
//!
//! Every random stream in the pipeline is addressed by a master seed plus an
//! ordered list of labels (`["trace", "vec-a", 17, 3]`). The pair is hashed
//! with SHA-256 over an injective byte encoding and the digest seeds a
//! ChaCha8 generator, so the stream for a given path never depends on the
//! order in which work is scheduled.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const DOMAIN_TAG: &[u8] = b"refprint/seed/v1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedLabel {
    Int(u64),
    Str(String),
}

impl fmt::Display for SeedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedLabel::Int(v) => write!(f, "{v}"),
            SeedLabel::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for SeedLabel {
    fn from(s: &str) -> Self {
        SeedLabel::Str(s.to_owned())
    }
}

impl From<String> for SeedLabel {
    fn from(s: String) -> Self {
        SeedLabel::Str(s)
    }
}

impl From<&String> for SeedLabel {
    fn from(s: &String) -> Self {
        SeedLabel::Str(s.clone())
    }
}

impl From<u64> for SeedLabel {
    fn from(v: u64) -> Self {
        SeedLabel::Int(v)
    }
}

impl From<usize> for SeedLabel {
    fn from(v: usize) -> Self {
        SeedLabel::Int(v as u64)
    }
}

impl From<u32> for SeedLabel {
    fn from(v: u32) -> Self {
        SeedLabel::Int(u64::from(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    #[serde(default)]
    pub stream_labels: Vec<SeedLabel>,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_labels: Vec::new(),
        }
    }

    /// Returns a child spec with `label` appended to the path.
    pub fn derive(&self, label: impl Into<SeedLabel>) -> SeedSpec {
        let mut stream_labels = self.stream_labels.clone();
        stream_labels.push(label.into());
        SeedSpec {
            master_seed: self.master_seed,
            stream_labels,
        }
    }

    /// SHA-256 digest of the length-prefixed, type-tagged encoding of the path.
    pub fn key(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN_TAG);
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((self.stream_labels.len() as u64).to_le_bytes());
        for label in &self.stream_labels {
            match label {
                SeedLabel::Int(v) => {
                    hasher.update([0u8]);
                    hasher.update(v.to_le_bytes());
                }
                SeedLabel::Str(s) => {
                    hasher.update([1u8]);
                    hasher.update((s.len() as u64).to_le_bytes());
                    hasher.update(s.as_bytes());
                }
            }
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }

    /// Collapses the path to a plain integer, used where a seed has to cross
    /// a process boundary.
    pub fn as_u64(&self) -> u64 {
        let key = self.key();
        u64::from_le_bytes(key[..8].try_into().expect("digest has 32 bytes"))
    }
}

impl fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.master_seed)?;
        for label in &self.stream_labels {
            write!(f, "/{label}")?;
        }
        Ok(())
    }
}

pub fn derive_seed(base: &SeedSpec, label: impl Into<SeedLabel>) -> SeedSpec {
    base.derive(label)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the UTF-8 bytes of a prompt.
pub fn prompt_hash(prompt: &str) -> u64 {
    prompt.bytes().fold(FNV_OFFSET, |hash, byte| {
        (hash ^ u64::from(byte)).wrapping_mul(FNV_PRIME)
    })
}
