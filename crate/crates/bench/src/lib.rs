//! Fixtures shared by the benchmarks.

use spml_core::oracle::worked_example;
use spml_core::{Distribution, Ledger, MarketState, Protocol, Scenario, ScoringRuleSpec};

/// Deterministic interior distribution over `n` outcomes that varies with `k`.
pub fn wobble(n: usize, k: usize) -> Distribution {
    let raw: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.8 * ((k * 7 + i * 3) as f64 * 0.37).sin())
        .collect();
    let total: f64 = raw.iter().sum();
    Distribution::new(raw.iter().map(|x| x / total).collect()).expect("positive weights")
}

/// A ledger of `reports` log-rule reports by `agents` rotating agents.
pub fn ledger(protocol: Protocol, outcomes: usize, agents: usize, reports: usize) -> Ledger {
    let rule = ScoringRuleSpec::logarithmic(outcomes);
    let mut m = MarketState::open(
        protocol,
        rule,
        Distribution::uniform(outcomes).expect("n >= 2"),
    )
    .expect("valid market");
    for k in 0..reports {
        let private = protocol
            .requires_private()
            .then(|| wobble(outcomes, k + 1000));
        m.submit_report(
            format!("a{}", k % agents).as_str(),
            wobble(outcomes, k),
            private,
        )
        .expect("valid report");
    }
    m.into_ledger()
}

/// The first worked example with a free slot after the second agent, so
/// the first agent can choose to wait.
pub fn delay_scenario() -> Scenario {
    let mut s = worked_example(1).expect("built in");
    s.slots = 3;
    s
}
