//! Brute-force strategy search over small markets.

mod play;
mod scenario;
mod search;
mod tables;
mod theorems;

pub use play::{
    evaluate_strategy, play, play_with, truthful_strategy, Evaluator, PayoffModel, Playthrough,
};
pub use scenario::{Behavior, Participation, Scenario, ScheduledAgent, Strategy, StrategySpace};
pub use search::{
    best_response, search_space_size, VerificationReport, OPTIMALITY_SLACK, SEARCH_CAP,
};
pub use tables::{
    reproduce_table, round4, worked_example, Table, TableMismatch, TableRow, REFERENCE_BLUFF_NET,
    REFERENCE_EXPECTED_PAYOFFS,
};
pub use theorems::{
    random_sweep_scenario, sweep, sweep_outcomes, sweep_space, verify_theorem, ClaimKind, Coverage,
    SweepStats, TheoremId, TheoremSummary, Witness, SCRIPTED_SHARE, SWEEP_GRID_STEP,
};
