use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::{Behavior, Participation, Scenario, Strategy};
use crate::beliefs::form_true_belief;
use crate::distribution::{Distribution, Outcome};
use crate::error::{Error, Result};
use crate::market::{settlement_plan_for, Ledger, LineBasis, MarketState};
use crate::scoring::{expected_payoff_change, ScoringRuleSpec};

/// How the focal agent values a settlement line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffModel {
    /// Expected realized payment, `sum_i p_i * payment_i`, under the agent's
    /// true belief.
    #[default]
    RealizedPayment,
    /// Two-reference lines are valued branch by branch: the final-report
    /// branch in expectation under the true belief, the private-report
    /// branch under the true private signal, and the larger expectation
    /// counts. Single-reference lines are valued as under
    /// [`PayoffModel::RealizedPayment`].
    BranchWise,
}

/// A played-out market: its ledger plus, for each report, the slot it
/// occupied and the reporter's true belief at that moment.
#[derive(Clone, Debug)]
pub struct Playthrough {
    pub ledger: Ledger,
    pub slots: Vec<usize>,
    pub beliefs: Vec<Distribution>,
}

impl Playthrough {
    /// True belief of whoever reported at `slot`.
    pub fn belief_at_slot(&self, slot: usize) -> Option<&Distribution> {
        self.slots
            .iter()
            .position(|&s| s == slot)
            .map(|i| &self.beliefs[i])
    }
}

enum Act<'a> {
    Truthful(usize),
    Scripted(usize, &'a Participation),
}

impl Act<'_> {
    fn agent(&self) -> usize {
        match self {
            Act::Truthful(i) | Act::Scripted(i, _) => *i,
        }
    }
}

enum Focal<'a> {
    AsScheduled,
    Truthful(usize),
    Strategy(usize, &'a Strategy),
}

fn place<'a>(
    scenario: &Scenario,
    acts: &mut BTreeMap<usize, Act<'a>>,
    slot: usize,
    act: Act<'a>,
) -> Result<()> {
    let who = act.agent();
    if let Some(existing) = acts.get(&slot) {
        return Err(scenario.conflict(slot, existing.agent(), who));
    }
    acts.insert(slot, act);
    Ok(())
}

fn play_inner(scenario: &Scenario, focal: Focal<'_>) -> Result<Playthrough> {
    let focal_index = match focal {
        Focal::AsScheduled => None,
        Focal::Truthful(i) | Focal::Strategy(i, _) => Some(i),
    };
    let mut acts: BTreeMap<usize, Act<'_>> = BTreeMap::new();
    // Placed in a fixed order so the first of two clashing agents is reported.
    for (index, a) in scenario.agents.iter().enumerate() {
        if Some(index) == focal_index {
            continue;
        }
        match &a.behavior {
            Behavior::Truthful => place(scenario, &mut acts, a.slot, Act::Truthful(index))?,
            Behavior::Scripted(s) => {
                for p in &s.participations {
                    place(scenario, &mut acts, p.slot, Act::Scripted(index, p))?;
                }
            }
        }
    }
    match focal {
        Focal::AsScheduled => {}
        Focal::Truthful(i) => place(
            scenario,
            &mut acts,
            scenario.agents[i].slot,
            Act::Truthful(i),
        )?,
        Focal::Strategy(i, s) => {
            s.validate(scenario.slots, scenario.outcome_count())?;
            for p in &s.participations {
                place(scenario, &mut acts, p.slot, Act::Scripted(i, p))?;
            }
        }
    }

    let requires_private = scenario.protocol.requires_private();
    let mut market = MarketState::open(
        scenario.protocol,
        scenario.rule.clone(),
        scenario.initial.clone(),
    )?;
    let mut slots = Vec::with_capacity(acts.len());
    let mut beliefs = Vec::with_capacity(acts.len());
    for (slot, act) in acts {
        let (index, report) = match act {
            Act::Truthful(i) => (i, None),
            Act::Scripted(i, p) => (i, Some(p)),
        };
        let agent = &scenario.agents[index].agent;
        let belief = form_true_belief(agent, market.current_estimate())?;
        let (final_estimate, private) = match report {
            None => (belief.clone(), agent.private_signal.clone()),
            Some(p) => (
                p.final_estimate.clone(),
                p.private_estimate
                    .clone()
                    .unwrap_or_else(|| agent.private_signal.clone()),
            ),
        };
        market.submit_report(
            agent.agent_id.clone(),
            final_estimate,
            requires_private.then_some(private),
        )?;
        slots.push(slot);
        beliefs.push(belief);
    }
    Ok(Playthrough {
        ledger: market.into_ledger(),
        slots,
        beliefs,
    })
}

/// Plays every agent according to its behavior.
pub fn play(scenario: &Scenario) -> Result<Playthrough> {
    scenario.validate()?;
    play_inner(scenario, Focal::AsScheduled)
}

/// Plays the scenario with `focal` following `strategy` instead of its
/// behavior.
pub fn play_with(scenario: &Scenario, focal: usize, strategy: &Strategy) -> Result<Playthrough> {
    scenario.validate()?;
    play_inner(scenario, Focal::Strategy(focal, strategy))
}

fn line_payoff(
    rule: &ScoringRuleSpec,
    line: &LineBasis,
    belief: &Distribution,
    private: &Distribution,
    model: PayoffModel,
) -> Result<f64> {
    if model == PayoffModel::BranchWise && line.references.len() == 2 {
        let own_private = line.private_report.as_ref().ok_or_else(|| {
            Error::ProtocolViolation(format!("seq {} lacks a private report", line.report_seq))
        })?;
        let first =
            expected_payoff_change(rule, belief, &line.report, &line.references[0].estimate)?;
        let second =
            expected_payoff_change(rule, private, own_private, &line.references[1].estimate)?;
        return Ok(first.max(second));
    }
    let mut total = 0.0;
    for (i, &w) in belief.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        total += w * line.payment(rule, Outcome::new(i))?;
    }
    Ok(total)
}

/// Scores strategies of one focal agent against fixed behaviors of the rest.
#[derive(Clone, Debug)]
pub struct Evaluator<'a> {
    scenario: &'a Scenario,
    focal: usize,
    belief: Distribution,
    model: PayoffModel,
}

impl<'a> Evaluator<'a> {
    /// The focal agent's true belief is the one it forms at its scheduled
    /// slot when it and everyone else act as scheduled, with the focal
    /// agent truthful. Deviations are judged against that belief.
    pub fn new(scenario: &'a Scenario, focal: usize, model: PayoffModel) -> Result<Self> {
        scenario.validate()?;
        if focal >= scenario.agents.len() {
            return Err(Error::InvalidParameter(format!(
                "focal index {focal} out of range"
            )));
        }
        let truthful = play_inner(scenario, Focal::Truthful(focal))?;
        let belief = truthful
            .belief_at_slot(scenario.agents[focal].slot)
            .expect("the focal agent reported at its scheduled slot")
            .clone();
        Ok(Self {
            scenario,
            focal,
            belief,
            model,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn focal(&self) -> usize {
        self.focal
    }

    pub fn belief(&self) -> &Distribution {
        &self.belief
    }

    pub fn private_signal(&self) -> &Distribution {
        &self.scenario.agents[self.focal].agent.private_signal
    }

    pub fn model(&self) -> PayoffModel {
        self.model
    }

    /// One report of the true belief at the scheduled slot, with the true
    /// private signal where the protocol asks for one.
    pub fn truthful_strategy(&self) -> Strategy {
        let private = self
            .scenario
            .protocol
            .requires_private()
            .then(|| self.private_signal().clone());
        Strategy::single(
            self.scenario.agents[self.focal].slot,
            self.belief.clone(),
            private,
        )
    }

    pub fn playthrough(&self, strategy: &Strategy) -> Result<Playthrough> {
        play_inner(self.scenario, Focal::Strategy(self.focal, strategy))
    }

    /// Expected payoff of `strategy` summed over all of the focal agent's
    /// settlement lines.
    pub fn payoff(&self, strategy: &Strategy) -> Result<f64> {
        let played = self.playthrough(strategy)?;
        let id = self.scenario.agents[self.focal].id();
        let plan = settlement_plan_for(
            self.scenario.protocol,
            &played.ledger,
            &self.scenario.rule,
            id,
        )?;
        let mut total = 0.0;
        for line in &plan {
            total += line_payoff(
                &self.scenario.rule,
                line,
                &self.belief,
                self.private_signal(),
                self.model,
            )?;
        }
        Ok(total)
    }
}

/// Expected payoff of `strategy` for agent `focal` under its true belief.
pub fn evaluate_strategy(
    scenario: &Scenario,
    focal: usize,
    strategy: &Strategy,
    model: PayoffModel,
) -> Result<f64> {
    Evaluator::new(scenario, focal, model)?.payoff(strategy)
}

/// The truthful strategy of agent `focal`.
pub fn truthful_strategy(scenario: &Scenario, focal: usize) -> Result<Strategy> {
    Ok(Evaluator::new(scenario, focal, PayoffModel::RealizedPayment)?.truthful_strategy())
}
