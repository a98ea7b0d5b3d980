//! Proper scoring rules and the functionals built from them: expected score,
//! uncertainty, discrepancy, expected payoff of an estimate change, a grid
//! properness check, and the market maker's worst-case loss.
//!
//! Scores live on the extended real line. `-inf` is a legal score (the
//! logarithmic rule at a zero-probability outcome); zero-weight terms are
//! dropped from expectations so `0 * -inf` never arises, and any NaN is
//! reported as [`Error::Indeterminate`].

use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, Outcome};
use crate::error::{ext_sub, not_nan, Error, Result};
use crate::simplex::{interior_extremum, simplex_grid};

/// Slack for the properness inequality on the grid.
pub const PROPERNESS_SLACK: f64 = 1e-12;

/// A scoring rule `s : simplex x outcomes -> [-inf, inf]`.
pub trait ScoringRule: Sync {
    fn outcome_count(&self) -> usize;

    fn score(&self, report: &Distribution, outcome: Outcome) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// `a_i + b ln p_i`
    Logarithmic,
    /// `a_i + b (2 p_i - sum_j p_j^2)`
    Quadratic,
}

#[derive(Deserialize)]
struct RawRule {
    kind: RuleKind,
    offsets: Vec<f64>,
    scale: f64,
}

/// A parameterized strictly proper scoring rule with per-outcome offsets and
/// a positive scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule")]
pub struct ScoringRuleSpec {
    kind: RuleKind,
    offsets: Vec<f64>,
    scale: f64,
}

impl TryFrom<RawRule> for ScoringRuleSpec {
    type Error = Error;

    fn try_from(raw: RawRule) -> Result<Self> {
        Self::new(raw.kind, raw.offsets, raw.scale)
    }
}

impl ScoringRuleSpec {
    pub fn new(kind: RuleKind, offsets: Vec<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        if offsets.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need one offset per outcome (at least 2), got {}",
                offsets.len()
            )));
        }
        if offsets.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("offsets must be finite".into()));
        }
        Ok(Self {
            kind,
            offsets,
            scale,
        })
    }

    /// Logarithmic rule with zero offsets and unit scale.
    pub fn logarithmic(outcomes: usize) -> Self {
        Self::new(RuleKind::Logarithmic, vec![0.0; outcomes], 1.0)
            .expect("valid default logarithmic rule")
    }

    /// Quadratic rule with zero offsets and unit scale.
    pub fn quadratic(outcomes: usize) -> Self {
        Self::new(RuleKind::Quadratic, vec![0.0; outcomes], 1.0)
            .expect("valid default quadratic rule")
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        self = Self::new(self.kind, self.offsets, scale)?;
        Ok(self)
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Whether scores stay finite on the closed simplex.
    pub fn is_bounded(&self) -> bool {
        self.kind == RuleKind::Quadratic
    }
}

impl ScoringRule for ScoringRuleSpec {
    fn outcome_count(&self) -> usize {
        self.offsets.len()
    }

    fn score(&self, report: &Distribution, outcome: Outcome) -> Result<f64> {
        report.check_len(self.offsets.len())?;
        outcome.check(self.offsets.len())?;
        let i = outcome.index();
        let p = report.probs();
        let raw = match self.kind {
            RuleKind::Logarithmic => {
                if p[i] == 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                p[i].ln()
            }
            RuleKind::Quadratic => 2.0 * p[i] - p.iter().map(|x| x * x).sum::<f64>(),
        };
        Ok(self.offsets[i] + self.scale * raw)
    }
}

/// `s_i(p)`.
pub fn score<R: ScoringRule + ?Sized>(rule: &R, p: &Distribution, i: Outcome) -> Result<f64> {
    rule.score(p, i)
}

/// `sum_i p_i s_i(p')`: the expected score of reporting `report` while
/// believing `belief`. May be `-inf`.
pub fn expected_score<R: ScoringRule + ?Sized>(
    rule: &R,
    belief: &Distribution,
    report: &Distribution,
) -> Result<f64> {
    belief.check_len(rule.outcome_count())?;
    report.check_len(rule.outcome_count())?;
    let mut total = 0.0;
    for (i, &w) in belief.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        total += w * rule.score(report, Outcome::new(i))?;
    }
    not_nan(total, "expected score")
}

/// Uncertainty `S(s, x) = sum_i x_i s_i(x)`.
pub fn uncertainty<R: ScoringRule + ?Sized>(rule: &R, x: &Distribution) -> Result<f64> {
    expected_score(rule, x, x)
}

/// Discrepancy `D(s, x, y) = sum_i x_i s_i(x) - sum_i x_i s_i(y)`.
///
/// Nonnegative for proper rules; `+inf` when `y` puts zero mass where `x`
/// does not under the logarithmic rule.
pub fn discrepancy<R: ScoringRule + ?Sized>(
    rule: &R,
    x: &Distribution,
    y: &Distribution,
) -> Result<f64> {
    ext_sub(
        uncertainty(rule, x)?,
        expected_score(rule, x, y)?,
        "discrepancy",
    )
}

/// `sum_i p_i (s_i(p') - s_i(p_c))`: expected payoff, under `belief`, of
/// moving the market from `previous` to `report`.
pub fn expected_payoff_change<R: ScoringRule + ?Sized>(
    rule: &R,
    belief: &Distribution,
    report: &Distribution,
    previous: &Distribution,
) -> Result<f64> {
    ext_sub(
        expected_score(rule, belief, report)?,
        expected_score(rule, belief, previous)?,
        "expected payoff change",
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropernessReport {
    /// `E(p, p) >= E(p, p') - PROPERNESS_SLACK` for every grid pair.
    pub proper: bool,
    /// Additionally `E(p, p) > E(p, p') + PROPERNESS_SLACK` whenever `p != p'`.
    pub strictly_proper: bool,
    /// Largest `E(p, p') - E(p, p)` seen, floored at zero.
    pub worst_violation: f64,
    pub violations: usize,
    pub pairs_checked: usize,
}

/// Exhaustive properness check over all pairs of a simplex grid.
pub fn properness_check<R: ScoringRule + ?Sized>(
    rule: &R,
    grid_step: f64,
) -> Result<PropernessReport> {
    let grid = simplex_grid(rule.outcome_count(), grid_step)?;
    let mut report = PropernessReport {
        proper: true,
        strictly_proper: true,
        worst_violation: 0.0,
        violations: 0,
        pairs_checked: 0,
    };
    for (a, belief) in grid.iter().enumerate() {
        let truthful = expected_score(rule, belief, belief)?;
        for (b, report_p) in grid.iter().enumerate() {
            report.pairs_checked += 1;
            let other = expected_score(rule, belief, report_p)?;
            // other may be -inf; truthful is finite for regular rules.
            let gain = ext_sub(other, truthful, "properness check")?;
            if gain > PROPERNESS_SLACK {
                report.proper = false;
                report.strictly_proper = false;
                report.violations += 1;
                report.worst_violation = report.worst_violation.max(gain);
            } else if a != b && gain > -PROPERNESS_SLACK {
                report.strictly_proper = false;
            }
        }
    }
    Ok(report)
}

/// Worst-case loss with its epsilon-restricted value and boundary behaviour.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WclEstimate {
    /// Supremum over the epsilon-interior.
    pub value: f64,
    /// Per-outcome contributions to `value` (before any agent multiplier).
    pub per_outcome: Vec<f64>,
    /// Limit as epsilon -> 0, when known (may be `+inf`).
    pub boundary_limit: Option<f64>,
    /// The loss grows without bound as reports approach the boundary.
    pub unbounded: bool,
}

fn sup_score(rule: &ScoringRuleSpec, i: Outcome, eps: f64) -> Result<f64> {
    interior_extremum(rule.outcome_count(), eps, true, |p| rule.score(p, i))
}

fn inf_score(rule: &ScoringRuleSpec, i: Outcome, eps: f64) -> Result<f64> {
    interior_extremum(rule.outcome_count(), eps, false, |p| rule.score(p, i))
}

/// Worst-case loss of the chained market:
/// `max_i sup_p (s_i(p) - s_i(p_0))` with `p` in the epsilon-interior.
pub fn wcl_baseline(
    rule: &ScoringRuleSpec,
    initial: &Distribution,
    eps: f64,
) -> Result<WclEstimate> {
    initial.check_len(rule.outcome_count())?;
    let mut per_outcome = Vec::with_capacity(initial.len());
    for i in initial.outcomes() {
        let start = rule.score(initial, i)?;
        per_outcome.push(ext_sub(sup_score(rule, i, eps)?, start, "baseline loss")?);
    }
    let value = per_outcome
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let boundary_limit = match rule.kind() {
        RuleKind::Logarithmic => Some(
            initial
                .probs()
                .iter()
                .map(|&p0| {
                    if p0 == 0.0 {
                        f64::INFINITY
                    } else {
                        -rule.scale() * p0.ln()
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max),
        ),
        RuleKind::Quadratic if eps == 0.0 => Some(value),
        RuleKind::Quadratic => Some(wcl_baseline(rule, initial, 0.0)?.value),
    };
    let unbounded = boundary_limit.is_some_and(f64::is_infinite);
    Ok(WclEstimate {
        value,
        per_outcome,
        boundary_limit,
        unbounded,
    })
}

/// Worst-case loss when every one of `agents` payments is settled against its
/// own reference: `n * max_i sup_{p, p_c} (s_i(p) - s_i(p_c))`.
pub fn wcl_per_agent(rule: &ScoringRuleSpec, agents: usize, eps: f64) -> Result<WclEstimate> {
    if agents == 0 {
        return Err(Error::InvalidParameter("need at least one agent".into()));
    }
    let n = agents as f64;
    let mut per_outcome = Vec::with_capacity(rule.outcome_count());
    for i in 0..rule.outcome_count() {
        let i = Outcome::new(i);
        // The two suprema separate: sup_p s_i(p) - inf_{p_c} s_i(p_c).
        per_outcome.push(ext_sub(
            sup_score(rule, i, eps)?,
            inf_score(rule, i, eps)?,
            "per-agent loss",
        )?);
    }
    let single = per_outcome
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let unbounded = !rule.is_bounded();
    let boundary_limit = if unbounded {
        Some(f64::INFINITY)
    } else if eps == 0.0 {
        Some(n * single)
    } else {
        Some(wcl_per_agent(rule, agents, 0.0)?.value)
    };
    Ok(WclEstimate {
        value: n * single,
        per_outcome,
        boundary_limit,
        unbounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    const A: Outcome = Outcome::new(0);

    #[test]
    fn log_scores() {
        let rule = ScoringRuleSpec::logarithmic(2);
        assert_eq!(score(&rule, &d(&[1.0, 0.0]), A).unwrap(), 0.0);
        assert!((score(&rule, &d(&[0.5, 0.5]), A).unwrap() + 0.693147).abs() < 1e-6);
        assert!((score(&rule, &d(&[0.3, 0.7]), A).unwrap() + 1.203973).abs() < 1e-6);
        assert_eq!(
            score(&rule, &d(&[1.0, 0.0]), Outcome::new(1)).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn quadratic_scores() {
        let rule = ScoringRuleSpec::quadratic(3);
        let p = d(&[0.2, 0.3, 0.5]);
        // 2 * 0.2 - (0.04 + 0.09 + 0.25)
        assert!((score(&rule, &p, A).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn dimension_and_outcome_errors() {
        let rule = ScoringRuleSpec::logarithmic(3);
        assert!(matches!(
            score(&rule, &d(&[0.5, 0.5]), A),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            score(&rule, &d(&[0.2, 0.3, 0.5]), Outcome::new(3)),
            Err(Error::OutcomeOutOfRange { .. })
        ));
        assert!(ScoringRuleSpec::new(RuleKind::Logarithmic, vec![0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn expected_score_examples() {
        let rule = ScoringRuleSpec::logarithmic(2);
        let u = d(&[0.5, 0.5]);
        assert!((expected_score(&rule, &u, &u).unwrap() + 0.693147).abs() < 1e-6);
        let c = d(&[1.0, 0.0]);
        assert_eq!(expected_score(&rule, &c, &c).unwrap(), 0.0);
        assert!((expected_score(&rule, &d(&[0.4, 0.6]), &u).unwrap() + 0.693147).abs() < 1e-6);
        assert_eq!(expected_score(&rule, &u, &c).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn uncertainty_examples() {
        let rule = ScoringRuleSpec::logarithmic(2);
        assert!((uncertainty(&rule, &d(&[0.5, 0.5])).unwrap() + 0.693147).abs() < 1e-6);
        assert_eq!(uncertainty(&rule, &d(&[1.0, 0.0])).unwrap(), 0.0);
        let oracle = 0.4f64 * 0.4f64.ln() + 0.6 * 0.6f64.ln();
        let u = uncertainty(&rule, &d(&[0.4, 0.6])).unwrap();
        assert!((u - oracle).abs() < 1e-15);
        assert!((u + 0.673012).abs() < 1e-6);
    }

    #[test]
    fn discrepancy_examples() {
        let rule = ScoringRuleSpec::logarithmic(2);
        let x = d(&[0.4, 0.6]);
        assert_eq!(discrepancy(&rule, &x, &x).unwrap(), 0.0);
        assert!((discrepancy(&rule, &x, &d(&[0.5, 0.5])).unwrap() - 0.020136).abs() < 1e-5);
        assert!(
            (discrepancy(&rule, &d(&[0.7, 0.3]), &d(&[0.4, 0.6])).unwrap() - 0.183790).abs() < 1e-5
        );
        assert_eq!(
            discrepancy(&rule, &x, &d(&[1.0, 0.0])).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn payoff_change_examples() {
        let rule = ScoringRuleSpec::logarithmic(2);
        let p = d(&[0.4, 0.6]);
        let u = d(&[0.5, 0.5]);
        assert!((expected_payoff_change(&rule, &p, &p, &u).unwrap() - 0.0201).abs() < 5e-5);
        let bluff = d(&[0.51, 0.49]);
        assert!((expected_payoff_change(&rule, &p, &bluff, &u).unwrap() + 0.0042).abs() < 5e-5);
        assert_eq!(expected_payoff_change(&rule, &p, &u, &u).unwrap(), 0.0);
    }

    #[test]
    fn indeterminate_payoff_is_an_error() {
        let rule = ScoringRuleSpec::logarithmic(2);
        let c = d(&[1.0, 0.0]);
        let u = d(&[0.5, 0.5]);
        // -inf - (-inf)
        assert!(matches!(
            expected_payoff_change(&rule, &u, &c, &c),
            Err(Error::Indeterminate(_))
        ));
    }

    #[test]
    fn offsets_shift_scores_not_discrepancy() {
        let plain = ScoringRuleSpec::logarithmic(2);
        let shifted = ScoringRuleSpec::new(RuleKind::Logarithmic, vec![3.0, -1.5], 1.0).unwrap();
        let x = d(&[0.3, 0.7]);
        let y = d(&[0.6, 0.4]);
        for i in x.outcomes() {
            let delta = score(&shifted, &x, i).unwrap() - score(&plain, &x, i).unwrap();
            assert!((delta - shifted.offsets()[i.index()]).abs() < 1e-15);
        }
        let a = discrepancy(&plain, &x, &y).unwrap();
        let b = discrepancy(&shifted, &x, &y).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn properness_grid() {
        let report = properness_check(&ScoringRuleSpec::logarithmic(2), 0.05).unwrap();
        assert!(report.proper && report.strictly_proper);
        assert_eq!(report.violations, 0);
        assert_eq!(report.pairs_checked, 21 * 21);
        let report = properness_check(&ScoringRuleSpec::quadratic(3), 0.05).unwrap();
        assert!(report.proper && report.strictly_proper);
    }

    struct Linear(usize);

    impl ScoringRule for Linear {
        fn outcome_count(&self) -> usize {
            self.0
        }
        fn score(&self, report: &Distribution, outcome: Outcome) -> Result<f64> {
            Ok(report.prob(outcome))
        }
    }

    #[test]
    fn linear_rule_is_not_proper() {
        let report = properness_check(&Linear(2), 0.1).unwrap();
        assert!(!report.proper);
        assert!(report.worst_violation > 0.0);
        // belief [0.6, 0.4]: E(p, p) = 0.52 versus E(p, [1, 0]) = 0.6
        assert!(report.worst_violation >= 0.08 - 1e-12);
    }

    #[test]
    fn baseline_wcl_log() {
        let rule = ScoringRuleSpec::logarithmic(2);
        let u = d(&[0.5, 0.5]);
        let w = wcl_baseline(&rule, &u, 1e-6).unwrap();
        assert!((w.value - 2f64.ln()).abs() < 1e-3);
        assert!((w.boundary_limit.unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(!w.unbounded);
        // Analytic sup: ln((1 - eps) / 0.5).
        let w = wcl_baseline(&rule, &u, 0.01).unwrap();
        assert!((w.value - (0.99f64 / 0.5).ln()).abs() < 1e-12);
        for n in [3, 4, 5] {
            let r = ScoringRuleSpec::logarithmic(n);
            let w = wcl_baseline(&r, &Distribution::uniform(n).unwrap(), 1e-6).unwrap();
            assert!((w.value - (n as f64).ln()).abs() < 1e-3, "n = {n}");
        }
    }

    #[test]
    fn baseline_wcl_certain_start() {
        let rule = ScoringRuleSpec::logarithmic(2);
        let w = wcl_baseline(&rule, &d(&[1.0, 0.0]), 1e-6).unwrap();
        assert!(w.per_outcome[0] <= 0.0 && w.per_outcome[0] > -2e-6);
        assert_eq!(w.per_outcome[1], f64::INFINITY);
        assert!(w.unbounded);
    }

    #[test]
    fn per_agent_wcl() {
        let rule = ScoringRuleSpec::logarithmic(2);
        let one = wcl_per_agent(&rule, 1, 0.01).unwrap();
        assert!((one.value - 99f64.ln()).abs() < 1e-9);
        assert!(one.unbounded);
        let three = wcl_per_agent(&rule, 3, 0.01).unwrap();
        assert_eq!(three.value, 3.0 * one.value);
        let quad = wcl_per_agent(&ScoringRuleSpec::quadratic(2), 1, 0.0).unwrap();
        assert!(quad.value.is_finite());
        assert!((quad.value - 2.0).abs() < 1e-12);
        assert!(!quad.unbounded);
    }

    #[test]
    fn quadratic_baseline_wcl() {
        let rule = ScoringRuleSpec::quadratic(3);
        let w = wcl_baseline(&rule, &Distribution::uniform(3).unwrap(), 0.0).unwrap();
        // s_i(e_i) - s_i(uniform) = 1 - 1/3
        assert!((w.value - 2.0 / 3.0).abs() < 1e-12);
    }
}
