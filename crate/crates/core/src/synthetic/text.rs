//! Length-preserving synonym rewriting.
//!
//! Each model prefers one member of every synonym group. A pass rewrites
//! group tokens toward the preferred member, so repeated passes drive a
//! sentence to the model's canonical form.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::TextSample;
use crate::seed::SeedSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGenParams {
    pub synonym_groups: Vec<Vec<String>>,
    /// Preferred token of each group, by group index.
    pub preference: Vec<String>,
    pub p_sub: f64,
    pub p_noise: f64,
}

impl TextGenParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        if self.synonym_groups.is_empty() {
            return bad("synonym_groups is empty".into());
        }
        if self.preference.len() != self.synonym_groups.len() {
            return bad(format!(
                "{} preferences for {} synonym groups",
                self.preference.len(),
                self.synonym_groups.len()
            ));
        }
        let mut seen = HashSet::new();
        for (gi, group) in self.synonym_groups.iter().enumerate() {
            if group.is_empty() {
                return bad(format!("synonym group {gi} is empty"));
            }
            for tok in group {
                if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                    return bad(format!("invalid token {tok:?} in group {gi}"));
                }
                if !seen.insert(tok.as_str()) {
                    return bad(format!("token {tok:?} appears in more than one group"));
                }
            }
            if !group.contains(&self.preference[gi]) {
                return bad(format!(
                    "preferred token {:?} is not in group {gi}",
                    self.preference[gi]
                ));
            }
        }
        for (name, p) in [("p_sub", self.p_sub), ("p_noise", self.p_noise)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} is outside [0, 1]"));
            }
        }
        if self.p_sub + self.p_noise > 1.0 + 1e-12 {
            return bad("p_sub + p_noise exceeds 1".into());
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &String> {
        self.synonym_groups.iter().flatten()
    }
}

#[derive(Debug, Clone)]
pub struct TextGenerator {
    params: TextGenParams,
    group_of: HashMap<String, usize>,
}

impl TextGenerator {
    pub fn new(params: TextGenParams) -> Result<Self> {
        params.validate()?;
        let group_of = params
            .synonym_groups
            .iter()
            .enumerate()
            .flat_map(|(gi, g)| g.iter().map(move |t| (t.clone(), gi)))
            .collect();
        Ok(TextGenerator { params, group_of })
    }

    pub fn params(&self) -> &TextGenParams {
        &self.params
    }

    pub fn group_of(&self, token: &str) -> Option<usize> {
        self.group_of.get(token).copied()
    }

    pub fn regenerate(&self, x: &TextSample, seed: &SeedSpec) -> Result<TextSample> {
        if x.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut rng = seed.rng();
        let p_sub = self.params.p_sub;
        let p_any = p_sub + self.params.p_noise;
        let tokens = x
            .tokens()
            .iter()
            .map(|tok| match self.group_of(tok) {
                None => tok.clone(),
                Some(gi) => {
                    let u: f64 = rng.random();
                    if u < p_sub {
                        self.params.preference[gi].clone()
                    } else if u < p_any {
                        let group = &self.params.synonym_groups[gi];
                        group[rng.random_range(0..group.len())].clone()
                    } else {
                        tok.clone()
                    }
                }
            })
            .collect();
        TextSample::new(tokens)
    }

    /// Rewrites every group token to its preferred member.
    pub fn canonicalize(&self, x: &TextSample) -> TextSample {
        let tokens = x
            .tokens()
            .iter()
            .map(|tok| match self.group_of(tok) {
                Some(gi) => self.params.preference[gi].clone(),
                None => tok.clone(),
            })
            .collect();
        TextSample::new(tokens).expect("canonical tokens stay valid")
    }
}
