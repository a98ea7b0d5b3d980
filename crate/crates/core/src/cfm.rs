//! Cost-function market maker (LMSR) and its bridge to scoring-rule
//! settlement.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::beliefs::AgentId;
use crate::distribution::{Distribution, Outcome};
use crate::error::{Error, Result};
use crate::market::{settle, MarketState, Protocol};
use crate::scoring::{RuleKind, ScoringRule, ScoringRuleSpec};

/// Largest tolerated gap between recorded and recomputed prices.
pub const PRICE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Lmsr,
}

/// A convex cost function over share quantities.
pub trait CostFunction {
    /// Money wagered in the market at quantities `q`.
    fn cost(&self, q: &[f64]) -> Result<f64>;
    /// Instantaneous prices, the gradient of the cost.
    fn prices(&self, q: &[f64]) -> Result<Distribution>;
    /// Bundle moving the prices at `q` to `target`.
    fn bundle_for_target(&self, q: &[f64], target: &Distribution) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCost")]
pub struct CostFunctionSpec {
    kind: CostKind,
    liquidity: f64,
}

#[derive(Deserialize)]
struct RawCost {
    kind: CostKind,
    liquidity: f64,
}

impl TryFrom<RawCost> for CostFunctionSpec {
    type Error = Error;

    fn try_from(raw: RawCost) -> Result<Self> {
        match raw.kind {
            CostKind::Lmsr => Self::lmsr(raw.liquidity),
        }
    }
}

impl CostFunctionSpec {
    pub fn lmsr(liquidity: f64) -> Result<Self> {
        if !(liquidity.is_finite() && liquidity > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "liquidity {liquidity} must be positive"
            )));
        }
        Ok(Self {
            kind: CostKind::Lmsr,
            liquidity,
        })
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn liquidity(&self) -> f64 {
        self.liquidity
    }
}

fn check_vector(v: &[f64], what: &str) -> Result<()> {
    if v.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{what} needs at least two entries"
        )));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{what} entry {x} is not finite"
        )));
    }
    Ok(())
}

fn check_pair(q: &[f64], r: &[f64]) -> Result<()> {
    check_vector(q, "quantity vector")?;
    check_vector(r, "bundle")?;
    if q.len() != r.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            actual: r.len(),
        });
    }
    Ok(())
}

impl CostFunction for CostFunctionSpec {
    fn cost(&self, q: &[f64]) -> Result<f64> {
        check_vector(q, "quantity vector")?;
        let b = self.liquidity;
        let m = q.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let sum: f64 = q.iter().map(|&x| ((x - m) / b).exp()).sum();
        Ok(m + b * sum.ln())
    }

    fn prices(&self, q: &[f64]) -> Result<Distribution> {
        check_vector(q, "quantity vector")?;
        let b = self.liquidity;
        let m = q.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let w: Vec<f64> = q.iter().map(|&x| ((x - m) / b).exp()).collect();
        let total: f64 = w.iter().sum();
        Distribution::new(w.into_iter().map(|x| x / total).collect())
    }

    fn bundle_for_target(&self, q: &[f64], target: &Distribution) -> Result<Vec<f64>> {
        target.check_len(q.len())?;
        if target.min_entry() <= 0.0 {
            return Err(Error::BoundaryEstimate(format!(
                "{target}: reaching a boundary price needs an infinite bundle"
            )));
        }
        let now = self.prices(q)?;
        Ok(target
            .probs()
            .iter()
            .zip(now.probs())
            .map(|(t, c)| self.liquidity * (t.ln() - c.ln()))
            .collect())
    }
}

pub fn cost(spec: &CostFunctionSpec, q: &[f64]) -> Result<f64> {
    spec.cost(q)
}

pub fn prices(spec: &CostFunctionSpec, q: &[f64]) -> Result<Distribution> {
    spec.prices(q)
}

pub fn bundle_for_target(
    spec: &CostFunctionSpec,
    q: &[f64],
    target: &Distribution,
) -> Result<Vec<f64>> {
    spec.bundle_for_target(q, target)
}

/// `C(q + r) - C(q)`, what the trader pays for bundle `r`.
pub fn trade_payment(spec: &CostFunctionSpec, q: &[f64], r: &[f64]) -> Result<f64> {
    check_pair(q, r)?;
    let after: Vec<f64> = q.iter().zip(r).map(|(a, b)| a + b).collect();
    Ok(spec.cost(&after)? - spec.cost(q)?)
}

/// Realized payoff of a trade: `r_i - (C(q + r) - C(q))`.
pub fn trade_payoff(
    spec: &CostFunctionSpec,
    q: &[f64],
    r: &[f64],
    outcome: Outcome,
) -> Result<f64> {
    outcome.check(q.len())?;
    Ok(r[outcome.index()] - trade_payment(spec, q, r)?)
}

/// `sum_i p_i r_i - (C(q + r) - C(q))`.
pub fn expected_payoff_cfm(
    spec: &CostFunctionSpec,
    belief: &Distribution,
    q: &[f64],
    r: &[f64],
) -> Result<f64> {
    check_pair(q, r)?;
    belief.check_len(q.len())?;
    let payout: f64 = belief.probs().iter().zip(r).map(|(p, x)| p * x).sum();
    Ok(payout - trade_payment(spec, q, r)?)
}

/// Quantities at which the LMSR shows `prices`; from zero quantities the
/// bundle to a target is the target's quantity vector up to a shift.
pub fn quantities_for_prices(spec: &CostFunctionSpec, prices: &Distribution) -> Result<Vec<f64>> {
    spec.bundle_for_target(&vec![0.0; prices.len()], prices)
}

/// Per outcome, the scoring-rule payoff of moving the market from
/// `current` to `report` minus the LMSR payoff of the trade doing the same.
pub fn equivalence_check(
    rule: &ScoringRuleSpec,
    spec: &CostFunctionSpec,
    current: &Distribution,
    report: &Distribution,
) -> Result<Vec<f64>> {
    if rule.kind() != RuleKind::Logarithmic {
        return Err(Error::InvalidParameter(
            "the LMSR matches the logarithmic rule only".into(),
        ));
    }
    if rule.offsets().iter().any(|&a| a != 0.0) {
        return Err(Error::InvalidParameter(
            "the LMSR matches a rule with zero offsets".into(),
        ));
    }
    if rule.scale() != spec.liquidity() {
        return Err(Error::InvalidParameter(format!(
            "rule scale {} differs from liquidity {}",
            rule.scale(),
            spec.liquidity()
        )));
    }
    current.check_len(rule.outcome_count())?;
    report.check_len(rule.outcome_count())?;
    let q = quantities_for_prices(spec, current)?;
    let r = spec.bundle_for_target(&q, report)?;
    let paid = trade_payment(spec, &q, &r)?;
    current
        .outcomes()
        .map(|i| {
            let srm = rule.score(report, i)? - rule.score(current, i)?;
            Ok(srm - (r[i.index()] - paid))
        })
        .collect()
}

/// One line of a trade ledger. Seq 0 belongs to the maker and carries the
/// initial quantities as its bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub seq: usize,
    pub agent_id: AgentId,
    pub bundle: Vec<f64>,
    /// Prices after the trade.
    pub prices: Distribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_estimate: Option<Distribution>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeLedger {
    spec: CostFunctionSpec,
    records: Vec<TradeRecord>,
    quantities: Vec<f64>,
}

impl TradeLedger {
    pub fn new(spec: CostFunctionSpec, initial: Vec<f64>) -> Result<Self> {
        let prices = spec.prices(&initial)?;
        Ok(Self {
            spec,
            records: vec![TradeRecord {
                seq: 0,
                agent_id: AgentId::maker(),
                bundle: initial.clone(),
                prices,
                private_estimate: None,
            }],
            quantities: initial,
        })
    }

    /// Rebuilds a ledger from records, checking every recorded price
    /// against the quantity path.
    pub fn from_records(spec: CostFunctionSpec, records: Vec<TradeRecord>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::PricePath {
            seq: 0,
            reason: "no maker record".into(),
        })?;
        if first.seq != 0 || !first.agent_id.is_maker() {
            return Err(Error::PricePath {
                seq: first.seq,
                reason: "the first record must be the maker's seq 0".into(),
            });
        }
        let mut ledger = Self::new(spec, first.bundle.clone())?;
        check_prices(&ledger.records[0].prices, &first.prices, 0)?;
        for (k, r) in records.iter().enumerate().skip(1) {
            if r.seq != k {
                return Err(Error::PricePath {
                    seq: r.seq,
                    reason: format!("expected seq {k}"),
                });
            }
            if r.agent_id.is_maker() {
                return Err(Error::PricePath {
                    seq: r.seq,
                    reason: "the maker trades only at seq 0".into(),
                });
            }
            ledger.trade(
                r.agent_id.clone(),
                r.bundle.clone(),
                r.private_estimate.clone(),
            )?;
            check_prices(&ledger.records[k].prices, &r.prices, k)?;
        }
        Ok(ledger)
    }

    pub fn spec(&self) -> &CostFunctionSpec {
        &self.spec
    }

    pub fn records(&self) -> &[TradeRecord] {
        &self.records
    }

    pub fn quantities(&self) -> &[f64] {
        &self.quantities
    }

    pub fn current_prices(&self) -> &Distribution {
        &self
            .records
            .last()
            .expect("the maker record is always present")
            .prices
    }

    /// Applies a trade and returns its seq.
    pub fn trade(
        &mut self,
        agent_id: AgentId,
        bundle: Vec<f64>,
        private_estimate: Option<Distribution>,
    ) -> Result<usize> {
        check_pair(&self.quantities, &bundle)?;
        if agent_id.is_maker() {
            return Err(Error::ProtocolViolation(format!(
                "agent id `{}` is reserved",
                AgentId::MAKER
            )));
        }
        if let Some(p) = &private_estimate {
            p.check_len(self.quantities.len())?;
        }
        for (q, r) in self.quantities.iter_mut().zip(&bundle) {
            *q += r;
        }
        let seq = self.records.len();
        self.records.push(TradeRecord {
            seq,
            agent_id,
            bundle,
            prices: self.spec.prices(&self.quantities)?,
            private_estimate,
        });
        Ok(seq)
    }

    /// Buys the bundle that moves prices to `target`.
    pub fn trade_to(
        &mut self,
        agent_id: AgentId,
        target: &Distribution,
        private_estimate: Option<Distribution>,
    ) -> Result<usize> {
        let r = self.spec.bundle_for_target(&self.quantities, target)?;
        self.trade(agent_id, r, private_estimate)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(spec: CostFunctionSpec, r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Self::from_records(spec, records)
    }
}

fn check_prices(recomputed: &Distribution, recorded: &Distribution, seq: usize) -> Result<()> {
    if recorded.len() != recomputed.len() || !recorded.approx_eq(recomputed, PRICE_TOLERANCE) {
        return Err(Error::PricePath {
            seq,
            reason: format!("recorded prices {recorded} but quantities give {recomputed}"),
        });
    }
    Ok(())
}

/// Payment scheme the top-up brings CFM traders up to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopUpRule {
    Ap,
    Nm,
    ApNm,
    Sp,
}

impl TopUpRule {
    pub fn protocol(self) -> Protocol {
        match self {
            TopUpRule::Ap => Protocol::ApSrm,
            TopUpRule::Nm => Protocol::NmSrm,
            TopUpRule::ApNm => Protocol::ApNmSrm,
            TopUpRule::Sp => Protocol::SpSrm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopUp {
    pub agent_id: AgentId,
    /// Realized payoff of all the agent's trades.
    pub cfm_payoff: f64,
    /// What the chosen scoring-rule settlement pays the agent.
    pub target_payment: f64,
    /// Cash issued at settlement: `target_payment - cfm_payoff`.
    pub top_up: f64,
}

/// Logarithmic scoring rule matching the ledger's LMSR.
pub fn matching_rule(spec: &CostFunctionSpec, outcomes: usize) -> Result<ScoringRuleSpec> {
    ScoringRuleSpec::logarithmic(outcomes).with_scale(spec.liquidity())
}

/// Cash each trader receives at settlement so that its CFM payoff equals
/// the payment `rule` would make on the implied report ledger.
///
/// Each trade is read as a report of the prices it left behind together
/// with the trader's reported private estimate.
pub fn sp_topup(ledger: &TradeLedger, rule: TopUpRule, outcome: Outcome) -> Result<Vec<TopUp>> {
    let spec = *ledger.spec();
    let records = ledger.records();
    let n = ledger.quantities().len();
    outcome.check(n)?;
    let protocol = rule.protocol();
    let scoring = matching_rule(&spec, n)?;
    let mut market = MarketState::open(protocol, scoring.clone(), records[0].prices.clone())?;
    let mut q = records[0].bundle.clone();
    let mut agents: Vec<AgentId> = Vec::new();
    let mut cfm: Vec<f64> = Vec::new();
    for r in &records[1..] {
        let private = if protocol.requires_private() {
            Some(r.private_estimate.clone().ok_or_else(|| {
                Error::ProtocolViolation(format!("trade {} lacks a private estimate", r.seq))
            })?)
        } else {
            None
        };
        let payoff = trade_payoff(&spec, &q, &r.bundle, outcome)?;
        for (a, b) in q.iter_mut().zip(&r.bundle) {
            *a += b;
        }
        check_prices(&spec.prices(&q)?, &r.prices, r.seq)?;
        market.submit_report(r.agent_id.clone(), r.prices.clone(), private)?;
        match agents.iter().position(|a| a == &r.agent_id) {
            Some(k) => cfm[k] += payoff,
            None => {
                agents.push(r.agent_id.clone());
                cfm.push(payoff);
            }
        }
    }
    let settlement = settle(protocol, market.ledger(), &scoring, outcome)?;
    Ok(agents
        .into_iter()
        .zip(cfm)
        .map(|(agent_id, cfm_payoff)| {
            let target_payment = settlement.agent_total(&agent_id);
            TopUp {
                top_up: target_payment - cfm_payoff,
                agent_id,
                cfm_payoff,
                target_payment,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::settle_sp;

    fn d(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    fn unit() -> CostFunctionSpec {
        CostFunctionSpec::lmsr(1.0).unwrap()
    }

    #[test]
    fn cost_values() {
        assert!((cost(&unit(), &[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-9);
        assert!((cost(&unit(), &[3.5, 3.5]).unwrap() - (3.5 + 2f64.ln())).abs() < 1e-12);
        assert!((cost(&unit(), &[1.0, 0.0]).unwrap() - 1.313262).abs() < 1e-6);
        // Large quantities do not overflow.
        assert!((cost(&unit(), &[1000.0, 0.0]).unwrap() - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn price_values() {
        assert_eq!(prices(&unit(), &[0.0, 0.0]).unwrap(), d(&[0.5, 0.5]));
        let b = 2.5;
        let spec = CostFunctionSpec::lmsr(b).unwrap();
        let p = prices(&spec, &[b * 7f64.ln(), b * 3f64.ln()]).unwrap();
        assert!(p.approx_eq(&d(&[0.7, 0.3]), 1e-12));
        let shifted = prices(&spec, &[b * 7f64.ln() + 4.0, b * 3f64.ln() + 4.0]).unwrap();
        assert!(p.approx_eq(&shifted, 1e-12));
    }

    #[test]
    fn trade_basics() {
        let q = [0.3, -0.2, 1.1];
        assert_eq!(trade_payment(&unit(), &q, &[0.0; 3]).unwrap(), 0.0);
        assert!((trade_payment(&unit(), &q, &[2.0; 3]).unwrap() - 2.0).abs() < 1e-12);
        let belief = d(&[0.2, 0.3, 0.5]);
        assert!(
            expected_payoff_cfm(&unit(), &belief, &q, &[2.0; 3])
                .unwrap()
                .abs()
                < 1e-12
        );
        assert_eq!(
            expected_payoff_cfm(&unit(), &belief, &q, &[0.0; 3]).unwrap(),
            0.0
        );
    }

    #[test]
    fn bundle_examples() {
        let r = bundle_for_target(&unit(), &[0.0, 0.0], &d(&[0.7, 0.3])).unwrap();
        assert!((r[0] - 0.33647).abs() < 1e-5 && (r[1] + 0.51083).abs() < 1e-5);
        assert!(prices(&unit(), &r)
            .unwrap()
            .approx_eq(&d(&[0.7, 0.3]), 1e-12));
        let q = [0.4, -1.0];
        let here = prices(&unit(), &q).unwrap();
        assert!(bundle_for_target(&unit(), &q, &here)
            .unwrap()
            .iter()
            .all(|x| x.abs() < 1e-12));
        assert!(matches!(
            bundle_for_target(&unit(), &q, &d(&[1.0, 0.0])),
            Err(Error::BoundaryEstimate(_))
        ));
    }

    #[test]
    fn bundle_composition_is_path_independent() {
        let q = [0.0, 0.0, 0.0];
        let r1 = bundle_for_target(&unit(), &q, &d(&[0.2, 0.5, 0.3])).unwrap();
        let mid: Vec<f64> = q.iter().zip(&r1).map(|(a, b)| a + b).collect();
        let r2 = bundle_for_target(&unit(), &mid, &d(&[0.6, 0.1, 0.3])).unwrap();
        let end: Vec<f64> = mid.iter().zip(&r2).map(|(a, b)| a + b).collect();
        let direct = bundle_for_target(&unit(), &q, &d(&[0.6, 0.1, 0.3])).unwrap();
        let p1 = prices(&unit(), &end).unwrap();
        let p2 = prices(&unit(), &direct).unwrap();
        assert!(p1.approx_eq(&p2, 1e-12));
    }

    #[test]
    fn optimal_trade_moves_prices_to_belief() {
        let spec = unit();
        let q = [0.2, -0.4];
        let belief = d(&[0.65, 0.35]);
        let r = bundle_for_target(&spec, &q, &belief).unwrap();
        let h = 1e-5;
        for k in 0..2 {
            let mut up = r.clone();
            let mut down = r.clone();
            up[k] += h;
            down[k] -= h;
            let grad = (expected_payoff_cfm(&spec, &belief, &q, &up).unwrap()
                - expected_payoff_cfm(&spec, &belief, &q, &down).unwrap())
                / (2.0 * h);
            assert!(grad.abs() < 1e-8, "gradient {grad}");
        }
    }

    #[test]
    fn equivalence_example() {
        let rule = ScoringRuleSpec::logarithmic(2);
        let diff = equivalence_check(&rule, &unit(), &d(&[0.5, 0.5]), &d(&[0.7, 0.3])).unwrap();
        assert!(diff.iter().all(|x| x.abs() < 1e-9));
        let same = equivalence_check(&rule, &unit(), &d(&[0.3, 0.7]), &d(&[0.3, 0.7])).unwrap();
        assert!(same.iter().all(|x| x.abs() < 1e-12));
        let wide = ScoringRuleSpec::logarithmic(2).with_scale(2.0).unwrap();
        assert!(equivalence_check(&wide, &unit(), &d(&[0.5, 0.5]), &d(&[0.7, 0.3])).is_err());
        let quad = ScoringRuleSpec::quadratic(2);
        assert!(equivalence_check(&quad, &unit(), &d(&[0.5, 0.5]), &d(&[0.7, 0.3])).is_err());
    }

    fn two_trader_ledger() -> TradeLedger {
        let mut l = TradeLedger::new(unit(), vec![0.0, 0.0]).unwrap();
        l.trade_to("1".into(), &d(&[0.4, 0.6]), Some(d(&[0.4, 0.6])))
            .unwrap();
        l.trade_to("2".into(), &d(&[0.7, 0.3]), Some(d(&[0.8, 0.2])))
            .unwrap();
        l
    }

    #[test]
    fn single_truthful_trader_needs_no_top_up() {
        let mut l = TradeLedger::new(unit(), vec![0.0, 0.0]).unwrap();
        l.trade_to("1".into(), &d(&[0.3, 0.7]), Some(d(&[0.3, 0.7])))
            .unwrap();
        for o in [Outcome::new(0), Outcome::new(1)] {
            let t = sp_topup(&l, TopUpRule::Sp, o).unwrap();
            assert!(t[0].top_up.abs() < 1e-12);
        }
    }

    #[test]
    fn two_trader_top_up_is_sp_payment_minus_chained_payoff() {
        let l = two_trader_ledger();
        let a = Outcome::new(0);
        let t = sp_topup(&l, TopUpRule::Sp, a).unwrap();
        // Independently: chained log-rule payoffs and the SP settlement.
        let chained = [0.4f64.ln() - 0.5f64.ln(), 0.7f64.ln() - 0.4f64.ln()];
        let mut m = MarketState::open(
            Protocol::SpSrm,
            ScoringRuleSpec::logarithmic(2),
            d(&[0.5, 0.5]),
        )
        .unwrap();
        m.submit_report("1", d(&[0.4, 0.6]), Some(d(&[0.4, 0.6])))
            .unwrap();
        m.submit_report("2", d(&[0.7, 0.3]), Some(d(&[0.8, 0.2])))
            .unwrap();
        let sp = settle_sp(m.ledger(), &ScoringRuleSpec::logarithmic(2), a).unwrap();
        for (k, top) in t.iter().enumerate() {
            assert!((top.cfm_payoff - chained[k]).abs() < 1e-12);
            assert!((top.target_payment - sp.lines[k].payment).abs() < 1e-12);
            assert!((top.top_up - (sp.lines[k].payment - chained[k])).abs() < 1e-12);
        }
        assert!((t[1].top_up - (0.8f64.ln() - 0.7f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn trade_ledger_round_trips_and_detects_tampering() {
        let l = two_trader_ledger();
        let mut buf = Vec::new();
        l.write_jsonl(&mut buf).unwrap();
        let back = TradeLedger::read_jsonl(unit(), buf.as_slice()).unwrap();
        assert_eq!(back, l);

        let mut records = l.records().to_vec();
        records[2].prices = d(&[0.6, 0.4]);
        assert!(matches!(
            TradeLedger::from_records(unit(), records),
            Err(Error::PricePath { seq: 2, .. })
        ));
    }

    #[test]
    fn top_up_requires_private_estimates() {
        let mut l = TradeLedger::new(unit(), vec![0.0, 0.0]).unwrap();
        l.trade_to("1".into(), &d(&[0.3, 0.7]), None).unwrap();
        assert!(sp_topup(&l, TopUpRule::Sp, Outcome::new(0)).is_err());
        assert!(sp_topup(&l, TopUpRule::Ap, Outcome::new(0)).is_ok());
    }
}
