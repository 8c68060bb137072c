//! Mixed continuous / integer / categorical search spaces.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("dimension {index}: {reason}")]
    InvalidDimension { index: usize, reason: String },
    #[error("search space has no dimensions")]
    Empty,
    #[error("candidate has {0} genes, space has {1} dimensions")]
    ArityMismatch(usize, usize),
    #[error("gene {index} is outside its domain")]
    OutOfDomain { index: usize },
    #[error("cannot decode value {value} for dimension {index}")]
    BadValue { index: usize, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// A categorical choice as written in configs and histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Choice {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Choice {
    pub fn numeric(&self) -> Option<f64> {
        match self {
            Choice::Int(i) => Some(*i as f64),
            Choice::Real(r) => Some(*r),
            Choice::Text(_) => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Choice::Int(i) => Value::from(*i),
            Choice::Real(r) => Value::from(*r),
            Choice::Text(s) => Value::from(s.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Dimension {
    Continuous {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        lo: f64,
        hi: f64,
        #[serde(default)]
        scale: Scale,
    },
    Integer {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        lo: i64,
        hi: i64,
    },
    Categorical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        choices: Vec<Choice>,
    },
}

impl Dimension {
    pub fn continuous(lo: f64, hi: f64) -> Self {
        Dimension::Continuous {
            name: None,
            lo,
            hi,
            scale: Scale::Linear,
        }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        Dimension::Continuous {
            name: None,
            lo,
            hi,
            scale: Scale::Log,
        }
    }

    pub fn integer(lo: i64, hi: i64) -> Self {
        Dimension::Integer { name: None, lo, hi }
    }

    pub fn categorical(choices: Vec<Choice>) -> Self {
        Dimension::Categorical {
            name: None,
            choices,
        }
    }

    pub fn named(mut self, n: &str) -> Self {
        match &mut self {
            Dimension::Continuous { name, .. }
            | Dimension::Integer { name, .. }
            | Dimension::Categorical { name, .. } => *name = Some(n.to_string()),
        }
        self
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Dimension::Continuous { name, .. }
            | Dimension::Integer { name, .. }
            | Dimension::Categorical { name, .. } => name.as_deref(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            Dimension::Continuous { lo, hi, scale, .. } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(format!("continuous bounds need lo < hi, got [{lo}, {hi}]"));
                }
                if *scale == Scale::Log && *lo <= 0.0 {
                    return Err(format!("log scale needs lo > 0, got {lo}"));
                }
            }
            Dimension::Integer { lo, hi, .. } => {
                if lo >= hi {
                    return Err(format!("integer bounds need lo < hi, got [{lo}, {hi}]"));
                }
            }
            Dimension::Categorical { choices, .. } => {
                if choices.is_empty() {
                    return Err("categorical choices must be nonempty".into());
                }
            }
        }
        Ok(())
    }

    /// Width of this dimension in normalized coordinates.
    pub fn normalized_width(&self) -> usize {
        match self {
            Dimension::Categorical { choices, .. } => choices.len(),
            _ => 1,
        }
    }
}

/// One gene per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gene {
    Real(f64),
    Int(i64),
    /// Index into the dimension's choices.
    Cat(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub genes: Vec<Gene>,
}

impl Candidate {
    pub fn new(genes: Vec<Gene>) -> Self {
        Self { genes }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }
}

const ONE_HOT_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, SpaceError> {
        let s = Self { dims };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        if self.dims.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (index, d) in self.dims.iter().enumerate() {
            d.validate()
                .map_err(|reason| SpaceError::InvalidDimension { index, reason })?;
        }
        Ok(())
    }

    /// `dim` copies of a linear continuous `[lo, hi]` dimension.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self, SpaceError> {
        Self::new((0..dim).map(|_| Dimension::continuous(lo, hi)).collect())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn normalized_len(&self) -> usize {
        self.dims.iter().map(Dimension::normalized_width).sum()
    }

    pub fn check(&self, c: &Candidate) -> Result<(), SpaceError> {
        if c.len() != self.len() {
            return Err(SpaceError::ArityMismatch(c.len(), self.len()));
        }
        for (index, (d, g)) in self.dims.iter().zip(&c.genes).enumerate() {
            let ok = match (d, g) {
                (Dimension::Continuous { lo, hi, .. }, Gene::Real(v)) => *lo <= *v && *v <= *hi,
                (Dimension::Integer { lo, hi, .. }, Gene::Int(v)) => lo <= v && v <= hi,
                (Dimension::Categorical { choices, .. }, Gene::Cat(i)) => *i < choices.len(),
                _ => false,
            };
            if !ok {
                return Err(SpaceError::OutOfDomain { index });
            }
        }
        Ok(())
    }

    pub fn contains(&self, c: &Candidate) -> bool {
        self.check(c).is_ok()
    }

    /// Maps a candidate into the unit-scaled coordinates used by the kernel:
    /// numeric dimensions to `[0, 1]` (log dimensions through `ln`),
    /// categorical ones to one-hot vectors scaled by `1/sqrt(2)` so distinct
    /// choices sit at distance 1.
    pub fn normalize(&self, c: &Candidate) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.normalized_len());
        for (d, g) in self.dims.iter().zip(&c.genes) {
            match (d, g) {
                (Dimension::Continuous { lo, hi, scale, .. }, Gene::Real(v)) => {
                    out.push(match scale {
                        Scale::Linear => (v - lo) / (hi - lo),
                        Scale::Log => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
                    });
                }
                (Dimension::Integer { lo, hi, .. }, Gene::Int(v)) => {
                    out.push((v - lo) as f64 / (hi - lo) as f64);
                }
                (Dimension::Categorical { choices, .. }, Gene::Cat(i)) => {
                    for k in 0..choices.len() {
                        out.push(if k == *i { ONE_HOT_SCALE } else { 0.0 });
                    }
                }
                _ => panic!("gene kind does not match dimension"),
            }
        }
        out
    }

    /// Numeric view passed to objectives: categorical genes become their
    /// choice value, or the choice index for text choices.
    pub fn decode(&self, c: &Candidate) -> Vec<f64> {
        self.dims
            .iter()
            .zip(&c.genes)
            .map(|(d, g)| match (d, g) {
                (_, Gene::Real(v)) => *v,
                (_, Gene::Int(v)) => *v as f64,
                (Dimension::Categorical { choices, .. }, Gene::Cat(i)) => {
                    choices[*i].numeric().unwrap_or(*i as f64)
                }
                (_, Gene::Cat(i)) => *i as f64,
            })
            .collect()
    }

    /// JSON form used in histories: numbers for numeric genes, the choice
    /// itself for categorical genes.
    pub fn to_json_values(&self, c: &Candidate) -> Vec<Value> {
        self.dims
            .iter()
            .zip(&c.genes)
            .map(|(d, g)| match (d, g) {
                (_, Gene::Real(v)) => Value::from(*v),
                (_, Gene::Int(v)) => Value::from(*v),
                (Dimension::Categorical { choices, .. }, Gene::Cat(i)) => choices[*i].to_json(),
                (_, Gene::Cat(i)) => Value::from(*i),
            })
            .collect()
    }

    pub fn from_json_values(&self, values: &[Value]) -> Result<Candidate, SpaceError> {
        if values.len() != self.len() {
            return Err(SpaceError::ArityMismatch(values.len(), self.len()));
        }
        let bad = |index: usize, v: &Value| SpaceError::BadValue {
            index,
            value: v.to_string(),
        };
        let mut genes = Vec::with_capacity(values.len());
        for (index, (d, v)) in self.dims.iter().zip(values).enumerate() {
            let g = match d {
                Dimension::Continuous { .. } => {
                    Gene::Real(v.as_f64().ok_or_else(|| bad(index, v))?)
                }
                Dimension::Integer { .. } => Gene::Int(v.as_i64().ok_or_else(|| bad(index, v))?),
                Dimension::Categorical { choices, .. } => {
                    let parsed: Choice =
                        serde_json::from_value(v.clone()).map_err(|_| bad(index, v))?;
                    let i = choices
                        .iter()
                        .position(|c| *c == parsed)
                        .ok_or_else(|| bad(index, v))?;
                    Gene::Cat(i)
                }
            };
            genes.push(g);
        }
        let c = Candidate::new(genes);
        self.check(&c)?;
        Ok(c)
    }
}

/// Each gene uniform over its domain: log dimensions uniform in log space,
/// integers uniform over the inclusive range.
pub fn sample_uniform<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Candidate {
    let genes = space
        .dims
        .iter()
        .map(|d| match d {
            Dimension::Continuous { lo, hi, scale, .. } => Gene::Real(match scale {
                Scale::Linear => rng.random_range(*lo..=*hi),
                Scale::Log => rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi),
            }),
            Dimension::Integer { lo, hi, .. } => Gene::Int(rng.random_range(*lo..=*hi)),
            Dimension::Categorical { choices, .. } => Gene::Cat(rng.random_range(0..choices.len())),
        })
        .collect();
    Candidate::new(genes)
}
