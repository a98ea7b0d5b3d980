use std::fmt;

use serde::{Deserialize, Serialize};

use super::play::play;
use super::scenario::{Behavior, Participation, Scenario, ScheduledAgent, Strategy};
use crate::beliefs::{AgentId, AgentType, MergeRule, PublicSignalSource};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::market::Protocol;
use crate::scoring::{expected_payoff_change, ScoringRuleSpec};

/// Expected payoffs of the three worked examples in units of 1e-4, in
/// report order.
pub const REFERENCE_EXPECTED_PAYOFFS: [&[i64]; 3] =
    [&[201, 1838], &[823, 1920], &[-42, 1809, 3819]];

/// Net expected payoff of agent 1's two reports in the third example, in
/// units of 1e-4.
pub const REFERENCE_BLUFF_NET: i64 = 3777;

/// Rounds to four decimals, halves away from zero, as an integer count of
/// 1e-4.
pub fn round4(x: f64) -> i64 {
    (x * 1e4).round() as i64
}

fn d(v: &[f64]) -> Distribution {
    Distribution::new(v.to_vec()).expect("worked-example distributions are valid")
}

const SHIFT: MergeRule = MergeRule::ShiftToward { delta: 0.1 };

/// Agent 1 of all three examples: believes [0.4 0.6] whatever it hears.
fn first_agent() -> AgentType {
    AgentType::private_only("1", d(&[0.4, 0.6]))
}

/// Agent 2 of the later examples: private [0.7 0.3], reacting to the
/// market's current estimate.
fn reactive_agent() -> AgentType {
    AgentType::new(
        "2",
        d(&[0.7, 0.3]),
        PublicSignalSource::MarketCurrentEstimate,
        SHIFT,
        true,
    )
}

/// Scenario of a worked example (1, 2 or 3) on a logarithmic two-outcome
/// market starting at [0.5 0.5].
///
/// 1. Agent 1 reports first; agent 2 (private [0.8 0.2], outside signal
///    [0.45 0.55]) second.
/// 2. Agent 2 (reacting to the market) reports first; agent 1 second.
/// 3. Agent 1 bluffs with [0.51 0.49], agent 2 reacts, agent 1 corrects.
pub fn worked_example(id: u8) -> Result<Scenario> {
    let base = |agents, slots| Scenario {
        protocol: Protocol::Srm,
        rule: ScoringRuleSpec::logarithmic(2),
        initial: d(&[0.5, 0.5]),
        agents,
        slots,
        nature: None,
        realized_outcome: None,
    };
    match id {
        1 => {
            let second = AgentType::new(
                "2",
                d(&[0.8, 0.2]),
                PublicSignalSource::Exogenous(d(&[0.45, 0.55])),
                SHIFT,
                true,
            );
            Ok(base(
                vec![
                    ScheduledAgent::truthful(first_agent(), 1),
                    ScheduledAgent::truthful(second, 2),
                ],
                2,
            ))
        }
        2 => Ok(base(
            vec![
                ScheduledAgent::truthful(first_agent(), 2),
                ScheduledAgent::truthful(reactive_agent(), 1),
            ],
            2,
        )),
        3 => {
            let bluff = Strategy {
                participations: vec![
                    Participation {
                        slot: 1,
                        final_estimate: d(&[0.51, 0.49]),
                        private_estimate: None,
                    },
                    Participation {
                        slot: 3,
                        final_estimate: d(&[0.4, 0.6]),
                        private_estimate: None,
                    },
                ],
            };
            Ok(base(
                vec![
                    ScheduledAgent {
                        agent: first_agent(),
                        slot: 3,
                        behavior: Behavior::Scripted(bluff),
                    },
                    ScheduledAgent::truthful(reactive_agent(), 2),
                ],
                3,
            ))
        }
        _ => Err(Error::InvalidParameter(format!(
            "no worked example {id}; expected 1, 2 or 3"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub agent: AgentId,
    /// The agent's true belief when it reported.
    pub belief: Distribution,
    pub order: usize,
    pub current: Distribution,
    pub report: Distribution,
    pub expected_payoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub example: u8,
    pub rows: Vec<TableRow>,
    /// Sum over agent 1's rows when it reports more than once.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net_expected_payoff: Option<f64>,
}

/// One mismatch between a regenerated value and its reference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMismatch {
    pub what: String,
    pub expected: i64,
    pub actual: i64,
}

impl Table {
    /// Differences from the reference values at four decimals; empty when
    /// everything matches.
    pub fn mismatches(&self) -> Vec<TableMismatch> {
        let mut out = Vec::new();
        let expected = REFERENCE_EXPECTED_PAYOFFS[usize::from(self.example) - 1];
        if expected.len() != self.rows.len() {
            out.push(TableMismatch {
                what: "row count".into(),
                expected: expected.len() as i64,
                actual: self.rows.len() as i64,
            });
        }
        for (k, (row, &e)) in self.rows.iter().zip(expected).enumerate() {
            let actual = round4(row.expected_payoff);
            if actual != e {
                out.push(TableMismatch {
                    what: format!("row {} (agent {})", k + 1, row.agent),
                    expected: e,
                    actual,
                });
            }
        }
        if self.example == 3 {
            let actual = self.net_expected_payoff.map_or(i64::MIN, round4);
            if actual != REFERENCE_BLUFF_NET {
                out.push(TableMismatch {
                    what: "net expected payoff of agent 1".into(),
                    expected: REFERENCE_BLUFF_NET,
                    actual,
                });
            }
        }
        out
    }
}

fn fmt_dist(p: &Distribution) -> String {
    format!("{p:.2}")
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "example {}", self.example)?;
        writeln!(
            f,
            "{:<6} {:<12} {:<6} {:<12} {:<12} {:>8}",
            "agent", "p", "order", "p_c", "p'", "EP"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<6} {:<12} {:<6} {:<12} {:<12} {:>8.4}",
                r.agent.as_str(),
                fmt_dist(&r.belief),
                r.order,
                fmt_dist(&r.current),
                fmt_dist(&r.report),
                r.expected_payoff
            )?;
        }
        if let Some(net) = self.net_expected_payoff {
            writeln!(f, "net EP of agent 1: {net:.4}")?;
        }
        Ok(())
    }
}

/// Regenerates a worked example's table by playing its scenario.
pub fn reproduce_table(example: u8) -> Result<Table> {
    let scenario = worked_example(example)?;
    let played = play(&scenario)?;
    let records = played.ledger.records();
    let mut rows = Vec::new();
    for (k, r) in played.ledger.reports().iter().enumerate() {
        let current = &records[r.seq - 1].final_estimate;
        let belief = &played.beliefs[k];
        rows.push(TableRow {
            agent: r.agent_id.clone(),
            belief: belief.clone(),
            order: r.seq,
            current: current.clone(),
            report: r.final_estimate.clone(),
            expected_payoff: expected_payoff_change(
                &scenario.rule,
                belief,
                &r.final_estimate,
                current,
            )?,
        });
    }
    let first = AgentId::new("1");
    let own: Vec<f64> = rows
        .iter()
        .filter(|r| r.agent == first)
        .map(|r| r.expected_payoff)
        .collect();
    let net_expected_payoff = (own.len() > 1).then(|| own.iter().sum());
    Ok(Table {
        example,
        rows,
        net_expected_payoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_goes_away_from_zero() {
        assert_eq!(round4(0.00005), 1);
        assert_eq!(round4(-0.00005), -1);
        assert_eq!(round4(-0.0042), -42);
        assert_eq!(round4(0.19204), 1920);
    }

    #[test]
    fn tables_match_reference_values() {
        for id in 1..=3 {
            let t = reproduce_table(id).unwrap();
            assert!(t.mismatches().is_empty(), "{t}\n{:?}", t.mismatches());
        }
    }

    #[test]
    fn second_agent_beliefs_follow_the_narrative() {
        let t = reproduce_table(1).unwrap();
        assert!(t.rows[1].belief.approx_eq(&d(&[0.7, 0.3]), 1e-12));
        let t = reproduce_table(3).unwrap();
        assert!(t.rows[1].report.approx_eq(&d(&[0.8, 0.2]), 1e-12));
        assert_eq!(t.rows[0].report, d(&[0.51, 0.49]));
    }

    #[test]
    fn unknown_example_is_rejected() {
        assert!(worked_example(4).is_err());
        assert!(reproduce_table(0).is_err());
    }
}
