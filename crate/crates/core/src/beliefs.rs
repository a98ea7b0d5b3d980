//! Agent types and true-belief formation from private and public signals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, DISTRIBUTION_TOLERANCE};
use crate::error::{Error, Result};
use crate::scoring::{discrepancy, ScoringRule};

/// Entries produced by [`MergeRule::ShiftToward`] are kept in
/// `[SHIFT_CLAMP, 1 - SHIFT_CLAMP]`.
pub const SHIFT_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(String);

impl AgentId {
    pub const MAKER: &'static str = "maker";

    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn maker() -> Self {
        Self(Self::MAKER.to_string())
    }

    pub fn is_maker(&self) -> bool {
        self.0 == Self::MAKER
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<String> for AgentId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Where an agent's public signal comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PublicSignalSource {
    /// A fixed signal, e.g. summarising discussions outside the market.
    Exogenous(Distribution),
    /// Whatever the market's current estimate is when the agent reports.
    MarketCurrentEstimate,
}

/// Read access to the market's current estimate.
///
/// Taken by reference so callers can observe whether the estimate was read.
pub trait MarketView {
    fn current_estimate(&self) -> Distribution;
}

impl MarketView for Distribution {
    fn current_estimate(&self) -> Distribution {
        self.clone()
    }
}

/// How an agent combines its private and public signals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRule {
    PrivateOnly,
    /// Two outcomes only: move `delta` of probability towards the outcome the
    /// public signal favours. A public signal favouring neither outcome
    /// leaves the private signal unchanged.
    ShiftToward {
        delta: f64,
    },
    /// `lambda * private + (1 - lambda) * public`.
    ConvexMix {
        lambda: f64,
    },
}

impl MergeRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MergeRule::PrivateOnly => Ok(()),
            MergeRule::ShiftToward { delta } if delta > 0.0 && delta < 1.0 => Ok(()),
            MergeRule::ShiftToward { delta } => Err(Error::InvalidParameter(format!(
                "shift delta {delta} must lie in (0, 1)"
            ))),
            MergeRule::ConvexMix { lambda } if (0.0..=1.0).contains(&lambda) => Ok(()),
            MergeRule::ConvexMix { lambda } => Err(Error::InvalidParameter(format!(
                "mix weight {lambda} must lie in [0, 1]"
            ))),
        }
    }
}

/// An agent's private type plus whether it trusts its public signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentType {
    pub agent_id: AgentId,
    pub private_signal: Distribution,
    pub public_source: PublicSignalSource,
    pub merge: MergeRule,
    /// The agent assumes its public signal does not hurt its expected payoff.
    #[serde(default = "default_true")]
    pub believes_nni: bool,
}

fn default_true() -> bool {
    true
}

impl AgentType {
    pub fn new(
        agent_id: impl Into<AgentId>,
        private_signal: Distribution,
        public_source: PublicSignalSource,
        merge: MergeRule,
        believes_nni: bool,
    ) -> Self {
        Self {
            agent_id: agent_id.into(),
            private_signal,
            public_source,
            merge,
            believes_nni,
        }
    }

    /// An agent whose belief is its private signal.
    pub fn private_only(agent_id: impl Into<AgentId>, private_signal: Distribution) -> Self {
        Self::new(
            agent_id,
            private_signal.clone(),
            PublicSignalSource::Exogenous(private_signal),
            MergeRule::PrivateOnly,
            true,
        )
    }
}

pub fn resolve_public_signal(agent: &AgentType, market: &impl MarketView) -> Distribution {
    match &agent.public_source {
        PublicSignalSource::Exogenous(d) => d.clone(),
        PublicSignalSource::MarketCurrentEstimate => market.current_estimate(),
    }
}

pub fn merge(
    rule: MergeRule,
    private: &Distribution,
    public: &Distribution,
) -> Result<Distribution> {
    rule.validate()?;
    public.check_len(private.len())?;
    match rule {
        MergeRule::PrivateOnly => Ok(private.clone()),
        MergeRule::ShiftToward { delta } => {
            if private.len() != 2 {
                return Err(Error::UnsupportedMerge {
                    rule: "shift_toward",
                    outcomes: private.len(),
                });
            }
            let (q, p) = (public.probs(), private.probs());
            if (q[0] - q[1]).abs() <= DISTRIBUTION_TOLERANCE {
                return Ok(private.clone());
            }
            let favored = if q[0] > q[1] { 0 } else { 1 };
            let other = 1 - favored;
            let mut out = [0.0; 2];
            let raised = p[favored] + delta;
            if raised > 1.0 - SHIFT_CLAMP {
                out[favored] = 1.0 - SHIFT_CLAMP;
                out[other] = SHIFT_CLAMP;
            } else if raised < SHIFT_CLAMP {
                out[favored] = SHIFT_CLAMP;
                out[other] = 1.0 - SHIFT_CLAMP;
            } else {
                out[favored] = raised;
                out[other] = p[other] - delta;
            }
            Distribution::new(out.to_vec())
        }
        MergeRule::ConvexMix { lambda } => Distribution::new(
            private
                .probs()
                .iter()
                .zip(public.probs())
                .map(|(a, b)| (lambda * a + (1.0 - lambda) * b).clamp(0.0, 1.0))
                .collect(),
        ),
    }
}

/// The agent's final true belief at a moment when the market shows `market`.
///
/// Agents that do not trust their public signal never look at it.
pub fn form_true_belief(agent: &AgentType, market: &impl MarketView) -> Result<Distribution> {
    if !agent.believes_nni {
        return Ok(agent.private_signal.clone());
    }
    let public = resolve_public_signal(agent, market);
    merge(agent.merge, &agent.private_signal, &public)
}

/// `D(s, p, p_nat) <= D(s, p_prv, p_nat)`, evaluated exactly in that argument
/// order.
pub fn nni_holds<R: ScoringRule + ?Sized>(
    rule: &R,
    belief: &Distribution,
    private: &Distribution,
    nature: &Distribution,
) -> Result<bool> {
    let merged = discrepancy(rule, belief, nature)?;
    let alone = discrepancy(rule, private, nature)?;
    Ok(merged <= alone + 1e-12)
}
