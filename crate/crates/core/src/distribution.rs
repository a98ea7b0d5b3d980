//! Points on the probability simplex and outcome indices.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance for the sum-to-one check and for distribution equality.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// A probability distribution over `N >= 2` mutually exclusive outcomes.
///
/// Entries are checked to lie in `[0, 1]` and to sum to one within
/// [`DISTRIBUTION_TOLERANCE`]; they are stored exactly as given.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 outcomes, got {}",
                probs.len()
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!(
                    "entry {} = {p} is outside [0, 1]",
                    i + 1
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("zero outcomes".into()));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Degenerate distribution putting all mass on `outcome`.
    pub fn certain(n: usize, outcome: Outcome) -> Result<Self> {
        outcome.check(n)?;
        let mut probs = vec![0.0; n];
        probs[outcome.index()] = 1.0;
        Self::new(probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, outcome: Outcome) -> f64 {
        self.probs[outcome.index()]
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> {
        (0..self.len()).map(Outcome)
    }

    pub fn min_entry(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when every entry is at least `margin`.
    pub fn is_interior(&self, margin: f64) -> bool {
        self.probs.iter().all(|&p| p >= margin)
    }

    pub fn approx_eq(&self, other: &Distribution, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .probs
                .iter()
                .zip(&other.probs)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    pub(crate) fn check_len(&self, expected: usize) -> Result<()> {
        if self.len() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                actual: self.len(),
            })
        }
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

impl fmt::Debug for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, p) in self.probs.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            match f.precision() {
                Some(prec) => write!(f, "{p:.prec$}")?,
                None => write!(f, "{p}")?,
            }
        }
        write!(f, "]")
    }
}

/// A realized outcome. Stored zero-based; serialized and displayed one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome(usize);

impl Outcome {
    /// Zero-based constructor.
    pub const fn new(index: usize) -> Self {
        Self(index)
    }

    /// One-based constructor matching the `{1, ..., N}` labelling.
    pub fn from_label(label: usize) -> Result<Self> {
        if label == 0 {
            return Err(Error::OutcomeOutOfRange {
                index: 0,
                outcomes: 0,
            });
        }
        Ok(Self(label - 1))
    }

    pub const fn index(self) -> usize {
        self.0
    }

    pub const fn label(self) -> usize {
        self.0 + 1
    }

    pub fn check(self, outcomes: usize) -> Result<()> {
        if self.0 < outcomes {
            Ok(())
        } else {
            Err(Error::OutcomeOutOfRange {
                index: self.label(),
                outcomes,
            })
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u64(self.label() as u64)
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let label = usize::deserialize(d)?;
        Outcome::from_label(label).map_err(serde::de::Error::custom)
    }
}
