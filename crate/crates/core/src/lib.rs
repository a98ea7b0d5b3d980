//! Scoring-rule prediction markets: scoring rules, agent beliefs, five
//! settlement protocols, a brute-force strategy oracle and an LMSR bridge.

pub mod beliefs;
pub mod cfm;
pub mod distribution;
pub mod error;
pub mod market;
pub mod oracle;
pub mod scoring;
pub mod sim;
pub mod simplex;

pub use beliefs::{AgentId, AgentType, MergeRule, PublicSignalSource};
pub use cfm::{CostFunction, CostFunctionSpec, TradeLedger};
pub use distribution::{Distribution, Outcome, DISTRIBUTION_TOLERANCE};
pub use error::{Error, Result};
pub use market::{Ledger, MarketState, Protocol, ReportRecord, Settlement, SettlementLine};
pub use oracle::{Scenario, Strategy, StrategySpace, TheoremId, VerificationReport};
pub use scoring::{RuleKind, ScoringRule, ScoringRuleSpec};
