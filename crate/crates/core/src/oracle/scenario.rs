use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::beliefs::{AgentId, AgentType, MergeRule};
use crate::distribution::{Distribution, Outcome};
use crate::error::{Error, Result};
use crate::market::Protocol;
use crate::scoring::{ScoringRule, ScoringRuleSpec};
use crate::simplex::divisions_for_step;

/// One report within a strategy. Slots are 1-based positions in the
/// market's arrival order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Participation {
    pub slot: usize,
    pub final_estimate: Distribution,
    /// Ignored by protocols that take no private estimate; when missing
    /// under one that does, the agent's true private signal is reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_estimate: Option<Distribution>,
}

/// When and what an agent reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub participations: Vec<Participation>,
}

impl Strategy {
    pub fn single(
        slot: usize,
        final_estimate: Distribution,
        private_estimate: Option<Distribution>,
    ) -> Self {
        Self {
            participations: vec![Participation {
                slot,
                final_estimate,
                private_estimate,
            }],
        }
    }

    pub fn validate(&self, slots: usize, outcomes: usize) -> Result<()> {
        if self.participations.is_empty() {
            return Err(Error::InvalidStrategy("no participations".into()));
        }
        let mut prev = 0;
        for p in &self.participations {
            if p.slot <= prev || p.slot > slots {
                return Err(Error::InvalidStrategy(format!(
                    "slot {} out of order or outside 1..={slots}",
                    p.slot
                )));
            }
            prev = p.slot;
            p.final_estimate.check_len(outcomes)?;
            if let Some(q) = &p.private_estimate {
                q.check_len(outcomes)?;
            }
        }
        Ok(())
    }

    pub fn last(&self) -> &Participation {
        self.participations
            .last()
            .expect("validated strategies are non-empty")
    }
}

/// How a non-focal agent acts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Reports its true belief once, at its scheduled slot.
    #[default]
    Truthful,
    /// Follows a fixed script regardless of what it sees.
    Scripted(Strategy),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledAgent {
    pub agent: AgentType,
    /// Scheduled arrival slot.
    pub slot: usize,
    #[serde(default)]
    pub behavior: Behavior,
}

impl ScheduledAgent {
    pub fn truthful(agent: AgentType, slot: usize) -> Self {
        Self {
            agent,
            slot,
            behavior: Behavior::Truthful,
        }
    }

    pub fn id(&self) -> &AgentId {
        &self.agent.agent_id
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub protocol: Protocol,
    pub rule: ScoringRuleSpec,
    #[serde(rename = "p_0")]
    pub initial: Distribution,
    pub agents: Vec<ScheduledAgent>,
    /// Total number of arrival slots; slots nobody is scheduled in are free.
    pub slots: usize,
    /// Nature's distribution, used for diagnostics and outcome sampling.
    #[serde(default, rename = "p_nat", skip_serializing_if = "Option::is_none")]
    pub nature: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized_outcome: Option<Outcome>,
}

impl Scenario {
    pub fn outcome_count(&self) -> usize {
        self.rule.outcome_count()
    }

    pub fn agent_index(&self, id: &AgentId) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a.id() == id)
            .ok_or_else(|| Error::InvalidParameter(format!("no agent `{id}` in scenario")))
    }

    /// Slots used by each agent under its own behavior.
    pub(crate) fn scheduled_slots(&self, index: usize) -> Vec<usize> {
        match &self.agents[index].behavior {
            Behavior::Truthful => vec![self.agents[index].slot],
            Behavior::Scripted(s) => s.participations.iter().map(|p| p.slot).collect(),
        }
    }

    /// Slot → agent index for every agent except `skip`.
    pub(crate) fn occupancy(&self, skip: Option<usize>) -> Result<BTreeMap<usize, usize>> {
        let mut taken = BTreeMap::new();
        for index in 0..self.agents.len() {
            if Some(index) == skip {
                continue;
            }
            for slot in self.scheduled_slots(index) {
                if let Some(&other) = taken.get(&slot) {
                    return Err(self.conflict(slot, other, index));
                }
                taken.insert(slot, index);
            }
        }
        Ok(taken)
    }

    pub(crate) fn conflict(&self, slot: usize, first: usize, second: usize) -> Error {
        Error::SlotConflict {
            slot,
            first: self.agents[first].id().to_string(),
            second: self.agents[second].id().to_string(),
        }
    }

    /// Slots nobody but the focal agent occupies, in order.
    pub fn free_slots(&self, focal: usize) -> Result<Vec<usize>> {
        let taken = self.occupancy(Some(focal))?;
        Ok((1..=self.slots)
            .filter(|s| !taken.contains_key(s))
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.outcome_count();
        self.initial.check_len(n)?;
        if self.slots == 0 {
            return Err(Error::InvalidParameter(
                "a scenario needs at least one slot".into(),
            ));
        }
        let mut ids = HashSet::new();
        for a in &self.agents {
            if a.id().is_maker() {
                return Err(Error::InvalidParameter(format!(
                    "agent id `{}` is reserved",
                    AgentId::MAKER
                )));
            }
            if !ids.insert(a.id().clone()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate agent id `{}`",
                    a.id()
                )));
            }
            if a.slot == 0 || a.slot > self.slots {
                return Err(Error::InvalidParameter(format!(
                    "agent `{}` scheduled at slot {} outside 1..={}",
                    a.id(),
                    a.slot,
                    self.slots
                )));
            }
            a.agent.private_signal.check_len(n)?;
            if let crate::beliefs::PublicSignalSource::Exogenous(d) = &a.agent.public_source {
                d.check_len(n)?;
            }
            a.agent.merge.validate()?;
            if matches!(a.agent.merge, MergeRule::ShiftToward { .. }) && n != 2 {
                return Err(Error::UnsupportedMerge {
                    rule: "shift_toward",
                    outcomes: n,
                });
            }
            if let Behavior::Scripted(s) = &a.behavior {
                s.validate(self.slots, n)?;
            }
        }
        self.occupancy(None)?;
        if let Some(nat) = &self.nature {
            nat.check_len(n)?;
        }
        if let Some(o) = self.realized_outcome {
            o.check(n)?;
        }
        Ok(())
    }
}

/// Bounds on the strategies enumerated for the focal agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySpace {
    pub report_grid_step: f64,
    pub max_participations: usize,
    pub allow_timing_choice: bool,
    pub allow_false_private: bool,
}

impl StrategySpace {
    pub fn validate(&self) -> Result<()> {
        divisions_for_step(self.report_grid_step)?;
        if self.max_participations == 0 {
            return Err(Error::InvalidParameter(
                "at least one participation is required".into(),
            ));
        }
        Ok(())
    }
}

impl Default for StrategySpace {
    fn default() -> Self {
        Self {
            report_grid_step: 0.05,
            max_participations: 1,
            allow_timing_choice: true,
            allow_false_private: true,
        }
    }
}
