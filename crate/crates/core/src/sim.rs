//! Scenario files, runs and their on-disk outputs.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beliefs::{AgentId, PublicSignalSource};
use crate::distribution::{Distribution, Outcome};
use crate::error::{Error, Result};
use crate::market::{settle, settlement_plan, Ledger, Protocol, ReportRecord, Settlement};
use crate::oracle::{
    best_response, play, Behavior, PayoffModel, Scenario, StrategySpace, VerificationReport,
};
use crate::scoring::{wcl_baseline, wcl_per_agent, ScoringRule, ScoringRuleSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::InvalidParameter(format!(
                "unknown format `{s}`; expected csv or json"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputOptions {
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    /// Seeds outcome sampling when the scenario fixes no outcome.
    #[serde(default)]
    pub seed: u64,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<StrategySpace>,
    /// Agent whose strategies `space` is searched for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_agent: Option<AgentId>,
    #[serde(default)]
    pub output: OutputOptions,
}

fn invalid(path: impl Into<String>, err: impl ToString) -> Error {
    Error::InvalidScenario {
        path: path.into(),
        message: err.to_string(),
    }
}

impl ScenarioFile {
    /// Parses and validates a scenario file; errors name the offending
    /// field path.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(path, e.into_inner())
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!(
                    "unsupported version {}; expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        let s = &self.scenario;
        let n = s.rule.outcome_count();
        let len_check =
            |d: &Distribution, path: String| d.check_len(n).map_err(|e| invalid(path, e));
        len_check(&s.initial, "scenario.p_0".into())?;
        if let Some(nat) = &s.nature {
            len_check(nat, "scenario.p_nat".into())?;
        }
        if let Some(o) = s.realized_outcome {
            o.check(n)
                .map_err(|e| invalid("scenario.realized_outcome", e))?;
        }
        if s.slots == 0 {
            return Err(invalid(
                "scenario.slots",
                "a scenario needs at least one slot",
            ));
        }
        let requires_private = s.protocol.requires_private();
        for (k, a) in s.agents.iter().enumerate() {
            let at = |field: &str| format!("scenario.agents[{k}].{field}");
            len_check(&a.agent.private_signal, at("agent.private_signal"))?;
            if let PublicSignalSource::Exogenous(d) = &a.agent.public_source {
                len_check(d, at("agent.public_source.exogenous"))?;
            }
            a.agent
                .merge
                .validate()
                .map_err(|e| invalid(at("agent.merge"), e))?;
            if a.slot == 0 || a.slot > s.slots {
                return Err(invalid(
                    at("slot"),
                    format!("slot {} outside 1..={}", a.slot, s.slots),
                ));
            }
            if s.agents[..k].iter().any(|b| b.id() == a.id()) {
                return Err(invalid(
                    at("agent.agent_id"),
                    format!("duplicate agent id `{}`", a.id()),
                ));
            }
            if let Behavior::Scripted(strategy) = &a.behavior {
                for (j, p) in strategy.participations.iter().enumerate() {
                    if requires_private && p.private_estimate.is_none() {
                        return Err(invalid(
                            at(&format!(
                                "behavior.scripted.participations[{j}].private_estimate"
                            )),
                            format!(
                                "{} requires a private estimate with every report",
                                s.protocol
                            ),
                        ));
                    }
                }
            }
        }
        s.validate().map_err(|e| invalid("scenario", e))?;
        if let Some(space) = &self.space {
            space.validate().map_err(|e| invalid("space", e))?;
            match &self.focal_agent {
                None => {
                    return Err(invalid(
                        "focal_agent",
                        "a strategy space needs a focal agent",
                    ))
                }
                Some(id) => {
                    s.agent_index(id).map_err(|e| invalid("focal_agent", e))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeSource {
    Override,
    Scenario,
    /// Drawn from the scenario's nature distribution with the file's seed.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPayoff {
    pub agent_id: AgentId,
    /// True belief at the agent's last report.
    pub belief: Distribution,
    /// Expected total payment under `belief`.
    pub expected_payoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub protocol: Protocol,
    pub rule: ScoringRuleSpec,
    pub realized_outcome: Outcome,
    pub outcome_source: OutcomeSource,
    pub ledger: Vec<ReportRecord>,
    pub settlement: Settlement,
    pub maker_loss: f64,
    pub expected_payoffs: Vec<AgentPayoff>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
}

/// Outcome used by a run: the override, else the scenario's, else a draw
/// from nature.
pub fn choose_outcome(
    file: &ScenarioFile,
    outcome_override: Option<Outcome>,
) -> Result<(Outcome, OutcomeSource)> {
    let n = file.scenario.rule.outcome_count();
    if let Some(o) = outcome_override {
        o.check(n)?;
        return Ok((o, OutcomeSource::Override));
    }
    if let Some(o) = file.scenario.realized_outcome {
        return Ok((o, OutcomeSource::Scenario));
    }
    if let Some(nat) = &file.scenario.nature {
        let mut rng = ChaCha8Rng::seed_from_u64(file.seed);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in nat.probs().iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok((Outcome::new(i), OutcomeSource::Sampled));
            }
        }
        let last = nat.probs().iter().rposition(|&p| p > 0.0).unwrap_or(n - 1);
        return Ok((Outcome::new(last), OutcomeSource::Sampled));
    }
    Err(invalid(
        "scenario.realized_outcome",
        "no outcome: set realized_outcome or p_nat, or pass an override",
    ))
}

/// Plays the scenario, settles it and, when the file carries a strategy
/// space, searches the focal agent's best response.
pub fn run(file: &ScenarioFile, outcome_override: Option<Outcome>) -> Result<RunReport> {
    file.validate()?;
    let s = &file.scenario;
    let (outcome, outcome_source) = choose_outcome(file, outcome_override)?;
    let played = play(s)?;
    let settlement = settle(s.protocol, &played.ledger, &s.rule, outcome)?;

    let plan = settlement_plan(s.protocol, &played.ledger, &s.rule)?;
    let mut expected_payoffs: Vec<AgentPayoff> = Vec::new();
    for (k, r) in played.ledger.reports().iter().enumerate() {
        let belief = played.beliefs[k].clone();
        match expected_payoffs
            .iter_mut()
            .find(|a| a.agent_id == r.agent_id)
        {
            Some(a) => a.belief = belief,
            None => expected_payoffs.push(AgentPayoff {
                agent_id: r.agent_id.clone(),
                belief,
                expected_payoff: 0.0,
            }),
        }
    }
    for a in &mut expected_payoffs {
        let mut total = 0.0;
        for line in plan.iter().filter(|l| l.agent_id == a.agent_id) {
            for i in a.belief.outcomes() {
                let w = a.belief.prob(i);
                if w > 0.0 {
                    total += w * line.payment(&s.rule, i)?;
                }
            }
        }
        a.expected_payoff = total;
    }

    let verification = match (&file.space, &file.focal_agent) {
        (Some(space), Some(id)) => Some(best_response(
            s,
            s.agent_index(id)?,
            space,
            PayoffModel::RealizedPayment,
        )?),
        _ => None,
    };
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        seed: file.seed,
        protocol: s.protocol,
        rule: s.rule.clone(),
        realized_outcome: outcome,
        outcome_source,
        ledger: played.ledger.records().to_vec(),
        maker_loss: settlement.maker_loss,
        settlement,
        expected_payoffs,
        verification,
    })
}

/// Settles a previously written ledger under the file's protocol and rule.
pub fn resettle(
    file: &ScenarioFile,
    ledger: &Ledger,
    outcome_override: Option<Outcome>,
) -> Result<Settlement> {
    let (outcome, _) = choose_outcome(file, outcome_override)?;
    settle(file.scenario.protocol, ledger, &file.scenario.rule, outcome)
}

/// Full-precision float: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_estimate(p: &Distribution) -> String {
    p.probs()
        .iter()
        .map(|&x| fmt_float(x))
        .collect::<Vec<_>>()
        .join(";")
}

pub const SETTLEMENT_COLUMNS: [&str; 11] = [
    "agent_id",
    "report_seq",
    "report",
    "private_report",
    "payment",
    "reference_1_label",
    "reference_1_seq",
    "reference_1_estimate",
    "reference_2_label",
    "reference_2_seq",
    "reference_2_estimate",
];

/// One row per settlement line; single-reference lines leave the second
/// reference empty.
pub fn write_settlement_csv<W: Write>(settlement: &Settlement, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SETTLEMENT_COLUMNS)?;
    for line in &settlement.lines {
        let b = &line.basis;
        let mut row = vec![
            b.agent_id.to_string(),
            b.report_seq.to_string(),
            fmt_estimate(&b.report),
            b.private_report
                .as_ref()
                .map(fmt_estimate)
                .unwrap_or_default(),
            fmt_float(line.payment),
        ];
        for k in 0..2 {
            match b.references.get(k) {
                Some(r) => row.extend([
                    r.label.symbol().to_string(),
                    r.seq.to_string(),
                    fmt_estimate(&r.estimate),
                ]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes the settlement as `settlement.csv` or `settlement.json`.
pub fn write_settlement(
    settlement: &Settlement,
    dir: &Path,
    format: OutputFormat,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    match format {
        OutputFormat::Csv => {
            let path = dir.join("settlement.csv");
            write_settlement_csv(settlement, fs::File::create(&path)?)?;
            Ok(path)
        }
        OutputFormat::Json => {
            let path = dir.join("settlement.json");
            write_json(settlement, &path)?;
            Ok(path)
        }
    }
}

/// Writes `ledger.jsonl`, the settlement and `report.json` into `dir`.
pub fn write_run(report: &RunReport, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let ledger_path = dir.join("ledger.jsonl");
    let mut f = fs::File::create(&ledger_path)?;
    for r in &report.ledger {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    let settlement_path = write_settlement(&report.settlement, dir, format)?;
    let report_path = dir.join("report.json");
    write_json(report, &report_path)?;
    Ok(vec![ledger_path, settlement_path, report_path])
}

pub fn read_ledger(path: &Path) -> Result<Ledger> {
    Ledger::read_jsonl(BufReader::new(fs::File::open(path)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WclRow {
    pub epsilon: f64,
    pub wcl: f64,
    /// Value as epsilon -> 0, when known.
    pub limit: Option<f64>,
    pub unbounded: bool,
}

/// Worst-case loss per epsilon: the chained bound for `SRM`, the
/// per-agent bound times `agents` for every other protocol.
pub fn wcl_curve(
    rule: &ScoringRuleSpec,
    initial: &Distribution,
    protocol: Protocol,
    agents: usize,
    epsilons: &[f64],
) -> Result<Vec<WclRow>> {
    let n = rule.outcome_count();
    epsilons
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && eps < 1.0 / n as f64) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon {eps} must lie in (0, 1/{n})"
                )));
            }
            let est = match protocol {
                Protocol::Srm => wcl_baseline(rule, initial, eps)?,
                _ => wcl_per_agent(rule, agents, eps)?,
            };
            Ok(WclRow {
                epsilon: eps,
                wcl: est.value,
                limit: est.boundary_limit,
                unbounded: est.unbounded,
            })
        })
        .collect()
}

pub fn write_wcl_csv<W: Write>(rows: &[WclRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epsilon", "wcl", "limit", "unbounded"])?;
    for r in rows {
        out.write_record([
            fmt_float(r.epsilon),
            fmt_float(r.wcl),
            r.limit.map(fmt_float).unwrap_or_default(),
            r.unbounded.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
