use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::play::{Evaluator, PayoffModel};
use super::scenario::{Participation, Scenario, Strategy, StrategySpace};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::scoring::RuleKind;
use crate::simplex::{interior_grid, simplex_grid};

/// Largest number of strategies a single search will evaluate.
pub const SEARCH_CAP: u64 = 10_000_000;

/// Truthful strategies within this much of the best deviation count as best.
pub const OPTIMALITY_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub truthful_strategy: Strategy,
    pub truthful_payoff: f64,
    /// Best strategy other than the truthful one; the truthful strategy
    /// itself when the space holds nothing else.
    pub best_deviation: Strategy,
    pub best_deviation_payoff: f64,
    pub truthful_is_best: bool,
    /// `truthful_payoff - best_deviation_payoff`.
    pub margin: f64,
    pub strategies_evaluated: u64,
    pub payoff_model: PayoffModel,
}

/// The finite set of strategies open to the focal agent.
struct Space {
    /// Slot sequences, each strictly increasing.
    patterns: Vec<Vec<usize>>,
    finals: Vec<Distribution>,
    /// `None` when the protocol takes no private estimate.
    privates: Vec<Option<Distribution>>,
    /// Cumulative strategy counts per pattern.
    offsets: Vec<u64>,
}

fn with_exact(mut grid: Vec<Distribution>, point: &Distribution) -> Vec<Distribution> {
    match grid.iter().position(|g| g.approx_eq(point, 1e-12)) {
        Some(i) => grid[i] = point.clone(),
        None => grid.push(point.clone()),
    }
    grid
}

fn increasing_subsets(items: &[usize], max_len: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(
        items: &[usize],
        start: usize,
        max_len: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        for i in start..items.len() {
            cur.push(items[i]);
            out.push(cur.clone());
            if cur.len() < max_len {
                rec(items, i + 1, max_len, cur, out);
            }
            cur.pop();
        }
    }
    if max_len > 0 {
        rec(items, 0, max_len, &mut Vec::new(), out);
    }
}

impl Space {
    fn build(eval: &Evaluator<'_>, space: &StrategySpace) -> Result<Self> {
        space.validate()?;
        let scenario = eval.scenario();
        let n = scenario.outcome_count();
        let grid = match scenario.rule.kind() {
            RuleKind::Logarithmic => interior_grid(n, space.report_grid_step)?,
            RuleKind::Quadratic => simplex_grid(n, space.report_grid_step)?,
        };
        let finals = with_exact(grid.clone(), eval.belief());
        let truth = eval.private_signal();
        let privates = if !scenario.protocol.requires_private() {
            vec![None]
        } else if space.allow_false_private {
            with_exact(grid, truth).into_iter().map(Some).collect()
        } else {
            vec![Some(truth.clone())]
        };

        let available = scenario.free_slots(eval.focal())?;
        let scheduled = scenario.agents[eval.focal()].slot;
        let mut patterns = Vec::new();
        if space.allow_timing_choice {
            increasing_subsets(&available, space.max_participations, &mut patterns);
        } else {
            let earlier: Vec<usize> = available
                .iter()
                .copied()
                .filter(|&s| s < scheduled)
                .collect();
            patterns.push(vec![scheduled]);
            let mut prefixes = Vec::new();
            increasing_subsets(&earlier, space.max_participations - 1, &mut prefixes);
            for mut p in prefixes {
                p.push(scheduled);
                patterns.push(p);
            }
        }
        // Enumeration order: shorter patterns first, then by slots.
        patterns.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

        let f = finals.len() as u128;
        let p = privates.len() as u128;
        let mut offsets = Vec::with_capacity(patterns.len() + 1);
        let mut total: u128 = 0;
        offsets.push(0);
        for pattern in &patterns {
            total += f.pow(pattern.len() as u32) * p;
            if total > u128::from(SEARCH_CAP) {
                let rest: u128 = patterns.iter().map(|q| f.pow(q.len() as u32) * p).sum();
                return Err(Error::SearchSpaceTooLarge {
                    estimate: rest,
                    cap: SEARCH_CAP,
                });
            }
            offsets.push(total as u64);
        }
        Ok(Self {
            patterns,
            finals,
            privates,
            offsets,
        })
    }

    fn len(&self) -> u64 {
        *self.offsets.last().expect("offsets start with zero")
    }

    /// Strategy at enumeration index `idx`: pattern, then each
    /// participation's final report from first to last, then the private
    /// report of the last participation.
    fn strategy(&self, idx: u64) -> Strategy {
        let k = self.offsets.partition_point(|&o| o <= idx) - 1;
        let pattern = &self.patterns[k];
        let mut rest = idx - self.offsets[k];
        let np = self.privates.len() as u64;
        let nf = self.finals.len() as u64;
        let private = self.privates[(rest % np) as usize].clone();
        rest /= np;
        let mut finals = vec![0; pattern.len()];
        for slot in finals.iter_mut().rev() {
            *slot = (rest % nf) as usize;
            rest /= nf;
        }
        let last = pattern.len() - 1;
        let participations = pattern
            .iter()
            .zip(finals)
            .enumerate()
            .map(|(j, (&slot, fi))| Participation {
                slot,
                final_estimate: self.finals[fi].clone(),
                private_estimate: if j == last { private.clone() } else { None },
            })
            .collect();
        Strategy { participations }
    }
}

/// Number of strategies [`best_response`] would evaluate.
pub fn search_space_size(scenario: &Scenario, focal: usize, space: &StrategySpace) -> Result<u64> {
    let eval = Evaluator::new(scenario, focal, PayoffModel::RealizedPayment)?;
    Ok(Space::build(&eval, space)?.len())
}

fn better(a: Option<(f64, u64)>, b: Option<(f64, u64)>) -> Option<(f64, u64)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                Some(y)
            } else {
                Some(x)
            }
        }
    }
}

/// Exhaustively searches the focal agent's strategy space.
///
/// Earlier participations of a multi-report strategy carry the true private
/// signal: no protocol pays an agent against its own private estimates, and
/// the modelled reactions of other agents look only at final estimates.
pub fn best_response(
    scenario: &Scenario,
    focal: usize,
    space: &StrategySpace,
    model: PayoffModel,
) -> Result<VerificationReport> {
    let eval = Evaluator::new(scenario, focal, model)?;
    best_response_with(&eval, space)
}

pub(crate) fn best_response_with(
    eval: &Evaluator<'_>,
    space: &StrategySpace,
) -> Result<VerificationReport> {
    let strategies = Space::build(eval, space)?;
    let truthful = eval.truthful_strategy();
    let truthful_payoff = eval.payoff(&truthful)?;
    let best = (0..strategies.len())
        .into_par_iter()
        .map(|idx| -> Result<Option<(f64, u64)>> {
            let s = strategies.strategy(idx);
            if s == truthful {
                return Ok(None);
            }
            Ok(Some((eval.payoff(&s)?, idx)))
        })
        .try_reduce(|| None, |a, b| Ok(better(a, b)))?;
    let (best_deviation, best_deviation_payoff) = match best {
        Some((v, idx)) => (strategies.strategy(idx), v),
        None => (truthful.clone(), truthful_payoff),
    };
    let margin = truthful_payoff - best_deviation_payoff;
    Ok(VerificationReport {
        truthful_strategy: truthful,
        truthful_payoff,
        best_deviation,
        best_deviation_payoff,
        truthful_is_best: margin >= -OPTIMALITY_SLACK,
        margin,
        strategies_evaluated: strategies.len(),
        payoff_model: eval.model(),
    })
}
