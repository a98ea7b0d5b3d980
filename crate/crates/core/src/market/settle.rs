use serde::{Deserialize, Serialize};

use super::{Ledger, Protocol, ReportRecord};
use crate::beliefs::AgentId;
use crate::distribution::{Distribution, Outcome};
use crate::error::{ext_sub, not_nan, Error, Result};
use crate::scoring::{discrepancy, ScoringRule, ScoringRuleSpec};

/// Which reference estimate a payment was computed against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReferenceLabel {
    /// The estimate immediately preceding the report.
    #[serde(rename = "p_c")]
    PreviousEstimate,
    /// The ledger estimate of greatest discrepancy from the report.
    #[serde(rename = "p'_c")]
    MaxDiscrepancyEstimate,
    /// The latest earlier private estimate by a different agent.
    #[serde(rename = "p_c^prv")]
    PreviousPrivate,
    /// Other agents' private estimate of greatest discrepancy from the report.
    #[serde(rename = "p''_c")]
    MaxDiscrepancyPrivate,
    /// Reference for the final-report branch of the strategy-proof payment.
    #[serde(rename = "p_c^1")]
    FinalBranch,
    /// Reference for the private-report branch of the strategy-proof payment.
    #[serde(rename = "p_c^2")]
    PrivateBranch,
}

impl ReferenceLabel {
    pub fn symbol(self) -> &'static str {
        match self {
            ReferenceLabel::PreviousEstimate => "p_c",
            ReferenceLabel::MaxDiscrepancyEstimate => "p'_c",
            ReferenceLabel::PreviousPrivate => "p_c^prv",
            ReferenceLabel::MaxDiscrepancyPrivate => "p''_c",
            ReferenceLabel::FinalBranch => "p_c^1",
            ReferenceLabel::PrivateBranch => "p_c^2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub label: ReferenceLabel,
    /// Ledger seq the estimate was taken from; 0 for the initial estimate.
    pub seq: usize,
    pub estimate: Distribution,
}

/// Everything a payment depends on except the realized outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineBasis {
    pub agent_id: AgentId,
    pub report_seq: usize,
    pub report: Distribution,
    pub private_report: Option<Distribution>,
    pub references: Vec<Reference>,
}

impl LineBasis {
    /// Payment at `outcome`: `s_i(report) - s_i(reference)`, or for two
    /// references the larger of the two branch payments.
    pub fn payment<R: ScoringRule + ?Sized>(&self, rule: &R, outcome: Outcome) -> Result<f64> {
        let mut best: Option<f64> = None;
        for r in &self.references {
            let own = match r.label {
                ReferenceLabel::PrivateBranch => self.private_report.as_ref().ok_or_else(|| {
                    Error::ProtocolViolation(format!(
                        "seq {} has a private branch but no private report",
                        self.report_seq
                    ))
                })?,
                _ => &self.report,
            };
            let v = ext_sub(
                rule.score(own, outcome)?,
                rule.score(&r.estimate, outcome)?,
                "payment",
            )?;
            best = Some(best.map_or(v, |b| b.max(v)));
        }
        best.ok_or_else(|| {
            Error::InvalidLedger(format!("seq {} has no reference estimate", self.report_seq))
        })
    }

    pub fn reference(&self, label: ReferenceLabel) -> Option<&Reference> {
        self.references.iter().find(|r| r.label == label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlementLine {
    #[serde(flatten)]
    pub basis: LineBasis,
    pub payment: f64,
}

impl SettlementLine {
    pub fn agent_id(&self) -> &AgentId {
        &self.basis.agent_id
    }

    /// Recomputes the payment from the recorded estimates alone.
    pub fn recompute_payment<R: ScoringRule + ?Sized>(
        &self,
        rule: &R,
        outcome: Outcome,
    ) -> Result<f64> {
        self.basis.payment(rule, outcome)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub protocol: Protocol,
    pub realized_outcome: Outcome,
    pub lines: Vec<SettlementLine>,
    /// Sum of all line payments.
    pub maker_loss: f64,
}

impl Settlement {
    /// Total paid to one agent (several lines for chained and AP markets).
    pub fn agent_total(&self, agent: &AgentId) -> f64 {
        self.lines
            .iter()
            .filter(|l| l.agent_id() == agent)
            .map(|l| l.payment)
            .sum()
    }

    /// Recomputes the maker's loss as the sum of the line payments.
    pub fn maker_loss_realized(&self) -> f64 {
        self.lines.iter().map(|l| l.payment).sum()
    }
}

/// Index of the candidate of greatest `D(s, target, candidate)`; ties go to
/// the earliest candidate, so callers pass candidates in ascending seq.
fn max_discrepancy<'a>(
    rule: &ScoringRuleSpec,
    target: &Distribution,
    candidates: &[(usize, &'a Distribution)],
) -> Result<Option<(usize, &'a Distribution)>> {
    let mut best: Option<(f64, (usize, &'a Distribution))> = None;
    for &(seq, cand) in candidates {
        let v = not_nan(discrepancy(rule, target, cand)?, "argmax discrepancy")?;
        if best.as_ref().map_or(true, |(b, _)| v > *b) {
            best = Some((v, (seq, cand)));
        }
    }
    Ok(best.map(|(_, c)| c))
}

fn private_of(r: &ReportRecord) -> Result<&Distribution> {
    r.private_estimate.as_ref().ok_or_else(|| {
        Error::ProtocolViolation(format!(
            "seq {} by {} lacks a private estimate",
            r.seq, r.agent_id
        ))
    })
}

fn reference(label: ReferenceLabel, (seq, estimate): (usize, &Distribution)) -> Reference {
    Reference {
        label,
        seq,
        estimate: estimate.clone(),
    }
}

fn basis_for(r: &ReportRecord, references: Vec<Reference>, with_private: bool) -> LineBasis {
    LineBasis {
        agent_id: r.agent_id.clone(),
        report_seq: r.seq,
        report: r.final_estimate.clone(),
        private_report: if with_private {
            r.private_estimate.clone()
        } else {
            None
        },
        references,
    }
}

/// Other agents' private estimates in seq order.
fn others_private<'a>(
    ledger: &'a Ledger,
    agent: &AgentId,
) -> Result<Vec<(usize, &'a Distribution)>> {
    ledger
        .reports()
        .iter()
        .filter(|r| &r.agent_id != agent)
        .map(|r| Ok((r.seq, private_of(r)?)))
        .collect()
}

/// Outcome-independent part of the settlement: one [`LineBasis`] per paid
/// report.
pub fn settlement_plan(
    protocol: Protocol,
    ledger: &Ledger,
    rule: &ScoringRuleSpec,
) -> Result<Vec<LineBasis>> {
    plan(protocol, ledger, rule, None)
}

/// [`settlement_plan`] restricted to the lines paid to `agent`.
pub fn settlement_plan_for(
    protocol: Protocol,
    ledger: &Ledger,
    rule: &ScoringRuleSpec,
    agent: &AgentId,
) -> Result<Vec<LineBasis>> {
    plan(protocol, ledger, rule, Some(agent))
}

fn plan(
    protocol: Protocol,
    ledger: &Ledger,
    rule: &ScoringRuleSpec,
    only: Option<&AgentId>,
) -> Result<Vec<LineBasis>> {
    ledger.initial().check_len(rule.outcome_count())?;
    let records = ledger.records();
    let initial = (0, ledger.initial());
    let paid: Vec<&ReportRecord> = match protocol {
        Protocol::Srm | Protocol::ApSrm => ledger.reports().iter().collect(),
        _ => ledger.last_reports(),
    };
    let all_estimates: Vec<_> = match protocol {
        Protocol::ApSrm => records.iter().map(|r| (r.seq, &r.final_estimate)).collect(),
        _ => Vec::new(),
    };
    paid.into_iter()
        .filter(|r| only.map_or(true, |a| &r.agent_id == a))
        .map(|r| match protocol {
            Protocol::Srm => {
                let prev = &records[r.seq - 1];
                let refs = vec![reference(
                    ReferenceLabel::PreviousEstimate,
                    (prev.seq, &prev.final_estimate),
                )];
                Ok(basis_for(r, refs, false))
            }
            Protocol::ApSrm => {
                let best = max_discrepancy(rule, &r.final_estimate, &all_estimates)?
                    .expect("ledger holds the initial estimate");
                Ok(basis_for(
                    r,
                    vec![reference(ReferenceLabel::MaxDiscrepancyEstimate, best)],
                    false,
                ))
            }
            Protocol::NmSrm => {
                let prev = records[1..r.seq]
                    .iter()
                    .rev()
                    .find(|k| k.agent_id != r.agent_id);
                let source = match prev {
                    Some(k) => (k.seq, private_of(k)?),
                    None => initial,
                };
                Ok(basis_for(
                    r,
                    vec![reference(ReferenceLabel::PreviousPrivate, source)],
                    true,
                ))
            }
            Protocol::ApNmSrm => {
                let cands = others_private(ledger, &r.agent_id)?;
                let best = max_discrepancy(rule, &r.final_estimate, &cands)?.unwrap_or(initial);
                Ok(basis_for(
                    r,
                    vec![reference(ReferenceLabel::MaxDiscrepancyPrivate, best)],
                    true,
                ))
            }
            Protocol::SpSrm => {
                let own_private = private_of(r)?;
                let cands = others_private(ledger, &r.agent_id)?;
                let first = max_discrepancy(rule, &r.final_estimate, &cands)?.unwrap_or(initial);
                let second = max_discrepancy(rule, own_private, &cands)?.unwrap_or(initial);
                Ok(basis_for(
                    r,
                    vec![
                        reference(ReferenceLabel::FinalBranch, first),
                        reference(ReferenceLabel::PrivateBranch, second),
                    ],
                    true,
                ))
            }
        })
        .collect()
}

pub fn settle(
    protocol: Protocol,
    ledger: &Ledger,
    rule: &ScoringRuleSpec,
    outcome: Outcome,
) -> Result<Settlement> {
    outcome.check(rule.outcome_count())?;
    let lines = settlement_plan(protocol, ledger, rule)?
        .into_iter()
        .map(|basis| {
            let payment = basis.payment(rule, outcome)?;
            Ok(SettlementLine { basis, payment })
        })
        .collect::<Result<Vec<_>>>()?;
    let maker_loss = lines.iter().map(|l| l.payment).sum();
    Ok(Settlement {
        protocol,
        realized_outcome: outcome,
        lines,
        maker_loss,
    })
}

pub fn settle_srm(ledger: &Ledger, rule: &ScoringRuleSpec, outcome: Outcome) -> Result<Settlement> {
    settle(Protocol::Srm, ledger, rule, outcome)
}

pub fn settle_ap(ledger: &Ledger, rule: &ScoringRuleSpec, outcome: Outcome) -> Result<Settlement> {
    settle(Protocol::ApSrm, ledger, rule, outcome)
}

pub fn settle_nm(ledger: &Ledger, rule: &ScoringRuleSpec, outcome: Outcome) -> Result<Settlement> {
    settle(Protocol::NmSrm, ledger, rule, outcome)
}

pub fn settle_apnm(
    ledger: &Ledger,
    rule: &ScoringRuleSpec,
    outcome: Outcome,
) -> Result<Settlement> {
    settle(Protocol::ApNmSrm, ledger, rule, outcome)
}

pub fn settle_sp(ledger: &Ledger, rule: &ScoringRuleSpec, outcome: Outcome) -> Result<Settlement> {
    settle(Protocol::SpSrm, ledger, rule, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketState;

    const A: Outcome = Outcome::new(0);

    fn d(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    fn rule() -> ScoringRuleSpec {
        ScoringRuleSpec::logarithmic(2)
    }

    fn ledger(protocol: Protocol, reports: &[(&str, &[f64], Option<&[f64]>)]) -> Ledger {
        let mut m = MarketState::open(protocol, rule(), d(&[0.5, 0.5])).unwrap();
        for (id, f, p) in reports {
            m.submit_report(*id, d(f), p.map(d)).unwrap();
        }
        m.ledger().clone()
    }

    fn example_one(protocol: Protocol) -> Ledger {
        let private = protocol.requires_private();
        ledger(
            protocol,
            &[
                ("1", &[0.4, 0.6], private.then_some(&[0.4, 0.6][..])),
                ("2", &[0.7, 0.3], private.then_some(&[0.8, 0.2][..])),
            ],
        )
    }

    #[test]
    fn srm_example_one() {
        let s = settle_srm(&example_one(Protocol::Srm), &rule(), A).unwrap();
        assert_eq!(s.lines.len(), 2);
        let ln = f64::ln;
        assert!((s.lines[0].payment - (ln(0.4) - ln(0.5))).abs() < 1e-15);
        assert!((s.lines[0].payment + 0.2231).abs() < 1e-4);
        assert!((s.lines[1].payment - 0.5596).abs() < 1e-4);
        assert!((s.maker_loss - 0.3365).abs() < 1e-4);
        assert!((s.maker_loss - (ln(0.7) - ln(0.5))).abs() < 1e-12);
        assert_eq!(s.maker_loss, s.maker_loss_realized());
    }

    #[test]
    fn srm_trivial_ledgers() {
        let s = settle_srm(
            &ledger(Protocol::Srm, &[("1", &[0.5, 0.5], None)]),
            &rule(),
            A,
        )
        .unwrap();
        assert_eq!(s.lines[0].payment, 0.0);
        let s = settle_srm(&ledger(Protocol::Srm, &[]), &rule(), A).unwrap();
        assert!(s.lines.is_empty());
        assert_eq!(s.maker_loss, 0.0);
    }

    #[test]
    fn srm_pays_every_report() {
        let l = ledger(
            Protocol::Srm,
            &[("1", &[0.4, 0.6], None), ("1", &[0.3, 0.7], None)],
        );
        assert_eq!(settle_srm(&l, &rule(), A).unwrap().lines.len(), 2);
    }

    #[test]
    fn ap_picks_the_farthest_estimate() {
        let s = settle_ap(&example_one(Protocol::ApSrm), &rule(), A).unwrap();
        let first = &s.lines[0];
        let r = first
            .basis
            .reference(ReferenceLabel::MaxDiscrepancyEstimate)
            .unwrap();
        assert_eq!(r.seq, 2);
        assert_eq!(r.estimate, d(&[0.7, 0.3]));
        let toward_later = discrepancy(&rule(), &d(&[0.4, 0.6]), &d(&[0.7, 0.3])).unwrap();
        let toward_initial = discrepancy(&rule(), &d(&[0.4, 0.6]), &d(&[0.5, 0.5])).unwrap();
        assert!((toward_later - 0.1920).abs() < 5e-5);
        assert!(toward_later > toward_initial);
        assert!((first.payment + 0.5596).abs() < 1e-4);
    }

    #[test]
    fn ap_degenerate_cases() {
        let l = ledger(Protocol::ApSrm, &[("1", &[0.5, 0.5], None)]);
        let s = settle_ap(&l, &rule(), A).unwrap();
        let r = s.lines[0]
            .basis
            .reference(ReferenceLabel::MaxDiscrepancyEstimate)
            .unwrap();
        // All discrepancies are zero; smallest seq wins.
        assert_eq!(r.seq, 0);
        assert_eq!(s.lines[0].payment, 0.0);

        let l = ledger(Protocol::ApSrm, &[("1", &[0.3, 0.7], None)]);
        let s = settle_ap(&l, &rule(), A).unwrap();
        assert_eq!(s.lines[0].basis.references[0].seq, 0);
    }

    #[test]
    fn nm_example() {
        let s = settle_nm(&example_one(Protocol::NmSrm), &rule(), A).unwrap();
        assert_eq!(s.lines.len(), 2);
        let one = &s.lines[0];
        assert_eq!(one.agent_id().as_str(), "1");
        assert_eq!(one.basis.references[0].seq, 0);
        assert_eq!(one.basis.references[0].estimate, d(&[0.5, 0.5]));
        let two = &s.lines[1];
        assert_eq!(two.basis.references[0].estimate, d(&[0.4, 0.6]));
        assert_eq!(
            two.basis.references[0].label,
            ReferenceLabel::PreviousPrivate
        );
    }

    #[test]
    fn nm_pays_last_report_only() {
        let l = ledger(
            Protocol::NmSrm,
            &[
                ("1", &[0.6, 0.4], Some(&[0.6, 0.4])),
                ("2", &[0.3, 0.7], Some(&[0.2, 0.8])),
                ("1", &[0.4, 0.6], Some(&[0.4, 0.6])),
            ],
        );
        let s = settle_nm(&l, &rule(), A).unwrap();
        assert_eq!(s.lines.len(), 2);
        let one = s
            .lines
            .iter()
            .find(|l| l.agent_id().as_str() == "1")
            .unwrap();
        assert_eq!(one.basis.report_seq, 3);
        // Previous private estimate by another agent: agent 2's [0.2, 0.8].
        assert_eq!(one.basis.references[0].estimate, d(&[0.2, 0.8]));
        let two = s
            .lines
            .iter()
            .find(|l| l.agent_id().as_str() == "2")
            .unwrap();
        assert_eq!(two.basis.references[0].estimate, d(&[0.6, 0.4]));
    }

    #[test]
    fn apnm_examples() {
        let s = settle_apnm(&example_one(Protocol::ApNmSrm), &rule(), A).unwrap();
        let two = &s.lines[1];
        assert_eq!(two.basis.references[0].estimate, d(&[0.4, 0.6]));
        assert!((two.payment - 0.5596).abs() < 1e-4);
        assert!((two.payment - (0.7f64.ln() - 0.4f64.ln())).abs() < 1e-15);

        let solo = ledger(Protocol::ApNmSrm, &[("1", &[0.3, 0.7], Some(&[0.3, 0.7]))]);
        let s = settle_apnm(&solo, &rule(), A).unwrap();
        assert_eq!(s.lines[0].basis.references[0].seq, 0);

        // A candidate equal to the report has zero discrepancy and loses.
        let l = ledger(
            Protocol::ApNmSrm,
            &[
                ("2", &[0.7, 0.3], Some(&[0.7, 0.3])),
                ("3", &[0.2, 0.8], Some(&[0.2, 0.8])),
                ("1", &[0.7, 0.3], Some(&[0.7, 0.3])),
            ],
        );
        let s = settle_apnm(&l, &rule(), A).unwrap();
        let one = s
            .lines
            .iter()
            .find(|l| l.agent_id().as_str() == "1")
            .unwrap();
        assert_eq!(one.basis.references[0].seq, 2);
    }

    #[test]
    fn sp_examples() {
        let s = settle_sp(&example_one(Protocol::SpSrm), &rule(), A).unwrap();
        let two = &s.lines[1];
        let ln = f64::ln;
        let branch1 = ln(0.7) - ln(0.4);
        let branch2 = ln(0.8) - ln(0.4);
        assert!((branch1 - 0.5596).abs() < 1e-4 && (branch2 - 0.6931).abs() < 1e-4);
        assert!((two.payment - branch2).abs() < 1e-15);
        assert_eq!(two.basis.references.len(), 2);
        assert_eq!(s.maker_loss, s.maker_loss_realized());

        let solo = ledger(Protocol::SpSrm, &[("1", &[0.3, 0.7], Some(&[0.6, 0.4]))]);
        let s = settle_sp(&solo, &rule(), A).unwrap();
        assert!(s.lines[0].basis.references.iter().all(|r| r.seq == 0));
    }

    #[test]
    fn sp_collapses_to_apnm_when_reports_agree() {
        let reports: [(&str, &[f64], Option<&[f64]>); 3] = [
            ("1", &[0.4, 0.6], Some(&[0.4, 0.6])),
            ("2", &[0.7, 0.3], Some(&[0.7, 0.3])),
            ("3", &[0.55, 0.45], Some(&[0.55, 0.45])),
        ];
        let sp = settle_sp(&ledger(Protocol::SpSrm, &reports), &rule(), A).unwrap();
        let apnm = settle_apnm(&ledger(Protocol::ApNmSrm, &reports), &rule(), A).unwrap();
        for (a, b) in sp.lines.iter().zip(&apnm.lines) {
            assert_eq!(a.payment, b.payment);
        }
    }

    #[test]
    fn lines_are_auditable() {
        for protocol in Protocol::ALL {
            for outcome in [Outcome::new(0), Outcome::new(1)] {
                let s = settle(protocol, &example_one(protocol), &rule(), outcome).unwrap();
                for line in &s.lines {
                    assert!(!line.basis.references.is_empty());
                    assert_eq!(
                        line.recompute_payment(&rule(), outcome).unwrap(),
                        line.payment
                    );
                }
            }
        }
    }

    #[test]
    fn settlement_serializes_with_reference_symbols() {
        let s = settle_sp(&example_one(Protocol::SpSrm), &rule(), A).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains(r#""label":"p_c^1""#));
        assert!(json.contains(r#""realized_outcome":1"#));
        let back: Settlement = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
