//! Market ledger, report submission and settlement dispatch.
//!
//! All five protocols share one append-only ledger. Seq 0 always holds the
//! maker's initial estimate; every later record is an agent report. A market
//! is settled once, lazily, from the closed ledger.

mod settle;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use settle::{
    settle, settle_ap, settle_apnm, settle_nm, settle_sp, settle_srm, settlement_plan,
    settlement_plan_for, LineBasis, Reference, ReferenceLabel, Settlement, SettlementLine,
};

use crate::beliefs::AgentId;
use crate::distribution::{Distribution, Outcome};
use crate::error::{Error, Result};
use crate::scoring::{RuleKind, ScoringRule, ScoringRuleSpec};

/// Minimum entry of any estimate entering a logarithmic-rule market.
pub const INTERIOR_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Chained payments against the immediately preceding report.
    #[serde(rename = "SRM")]
    Srm,
    /// Each report paid against the ledger entry of greatest discrepancy.
    #[serde(rename = "AP_SRM")]
    ApSrm,
    /// Last report only, against the previous private estimate of another agent.
    #[serde(rename = "NM_SRM")]
    NmSrm,
    /// Last report only, against the other agents' private estimate of
    /// greatest discrepancy.
    #[serde(rename = "APNM_SRM")]
    ApNmSrm,
    /// Last report only, outcome-wise maximum of a final-report branch and a
    /// private-report branch.
    #[serde(rename = "SP_SRM")]
    SpSrm,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Srm,
        Protocol::ApSrm,
        Protocol::NmSrm,
        Protocol::ApNmSrm,
        Protocol::SpSrm,
    ];

    /// Whether reports carry a private estimate alongside the final one.
    pub fn requires_private(self) -> bool {
        matches!(self, Protocol::NmSrm | Protocol::ApNmSrm | Protocol::SpSrm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Srm => "SRM",
            Protocol::ApSrm => "AP_SRM",
            Protocol::NmSrm => "NM_SRM",
            Protocol::ApNmSrm => "APNM_SRM",
            Protocol::SpSrm => "SP_SRM",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown protocol `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub seq: usize,
    pub agent_id: AgentId,
    pub final_estimate: Distribution,
    #[serde(default)]
    pub private_estimate: Option<Distribution>,
}

/// Append-only record of the initial estimate and every report.
#[derive(Clone, Debug, PartialEq)]
pub struct Ledger {
    records: Vec<ReportRecord>,
}

impl Ledger {
    pub fn new(initial: Distribution) -> Self {
        Self {
            records: vec![ReportRecord {
                seq: 0,
                agent_id: AgentId::maker(),
                final_estimate: initial,
                private_estimate: None,
            }],
        }
    }

    /// Rebuilds a ledger, checking sequence numbers, the maker record and
    /// dimensions.
    pub fn from_records(records: Vec<ReportRecord>) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::InvalidLedger("empty ledger".into()));
        };
        if !first.agent_id.is_maker() || first.private_estimate.is_some() {
            return Err(Error::InvalidLedger(
                "seq 0 must be the maker's initial estimate without a private estimate".into(),
            ));
        }
        let n = first.final_estimate.len();
        for (k, r) in records.iter().enumerate() {
            if r.seq != k {
                return Err(Error::InvalidLedger(format!(
                    "record {k} carries seq {}",
                    r.seq
                )));
            }
            if k > 0 && r.agent_id.is_maker() {
                return Err(Error::InvalidLedger(format!(
                    "seq {k} uses the reserved maker id"
                )));
            }
            r.final_estimate.check_len(n)?;
            if let Some(p) = &r.private_estimate {
                p.check_len(n)?;
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ReportRecord] {
        &self.records
    }

    /// Agent reports, without the maker record.
    pub fn reports(&self) -> &[ReportRecord] {
        &self.records[1..]
    }

    pub fn initial(&self) -> &Distribution {
        &self.records[0].final_estimate
    }

    pub fn current_estimate(&self) -> &Distribution {
        &self
            .records
            .last()
            .expect("ledger always holds seq 0")
            .final_estimate
    }

    pub fn outcome_count(&self) -> usize {
        self.initial().len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn push(
        &mut self,
        agent_id: AgentId,
        final_estimate: Distribution,
        private_estimate: Option<Distribution>,
    ) -> usize {
        let seq = self.records.len();
        self.records.push(ReportRecord {
            seq,
            agent_id,
            final_estimate,
            private_estimate,
        });
        seq
    }

    /// Each agent's highest-seq report, ordered by seq.
    pub fn last_reports(&self) -> Vec<&ReportRecord> {
        let mut last: BTreeMap<&AgentId, &ReportRecord> = BTreeMap::new();
        for r in self.reports() {
            last.insert(&r.agent_id, r);
        }
        let mut out: Vec<_> = last.into_values().collect();
        out.sort_by_key(|r| r.seq);
        out
    }

    /// Distinct agents that reported.
    pub fn participants(&self) -> usize {
        self.last_reports().len()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Self::from_records(records)
    }
}

/// A live market: protocol, rule and ledger.
#[derive(Clone, Debug)]
pub struct MarketState {
    protocol: Protocol,
    rule: ScoringRuleSpec,
    ledger: Ledger,
    closed: bool,
}

fn check_estimate(rule: &ScoringRuleSpec, p: &Distribution) -> Result<()> {
    p.check_len(rule.outcome_count())?;
    if rule.kind() == RuleKind::Logarithmic && !p.is_interior(INTERIOR_MARGIN) {
        return Err(Error::BoundaryEstimate(p.to_string()));
    }
    Ok(())
}

impl MarketState {
    pub fn open(protocol: Protocol, rule: ScoringRuleSpec, initial: Distribution) -> Result<Self> {
        check_estimate(&rule, &initial)?;
        Ok(Self {
            protocol,
            rule,
            ledger: Ledger::new(initial),
            closed: false,
        })
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn rule(&self) -> &ScoringRuleSpec {
        &self.rule
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    pub fn current_estimate(&self) -> &Distribution {
        self.ledger.current_estimate()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Appends a report and moves the current estimate to it. Returns the
    /// report's seq.
    pub fn submit_report(
        &mut self,
        agent_id: impl Into<AgentId>,
        final_estimate: Distribution,
        private_estimate: Option<Distribution>,
    ) -> Result<usize> {
        let agent_id = agent_id.into();
        if self.closed {
            return Err(Error::MarketClosed);
        }
        if agent_id.is_maker() {
            return Err(Error::ProtocolViolation(format!(
                "agent id `{}` is reserved",
                AgentId::MAKER
            )));
        }
        check_estimate(&self.rule, &final_estimate)?;
        match (self.protocol.requires_private(), &private_estimate) {
            (true, None) => {
                return Err(Error::ProtocolViolation(format!(
                    "{} requires a private estimate from {agent_id}",
                    self.protocol
                )))
            }
            (false, Some(_)) => {
                return Err(Error::ProtocolViolation(format!(
                    "{} does not take private estimates",
                    self.protocol
                )))
            }
            (true, Some(p)) => check_estimate(&self.rule, p)?,
            (false, None) => {}
        }
        Ok(self.ledger.push(agent_id, final_estimate, private_estimate))
    }

    pub fn close_and_settle(&mut self, outcome: Outcome) -> Result<Settlement> {
        if self.closed {
            return Err(Error::MarketClosed);
        }
        outcome.check(self.rule.outcome_count())?;
        self.closed = true;
        settle(self.protocol, &self.ledger, &self.rule, outcome)
    }
}
