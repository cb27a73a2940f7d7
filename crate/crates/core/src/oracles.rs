//! Predefined oracles over execution traces and balances, plus custom
//! oracles raised by contract-emitted events.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::concolic::sym::Site;
use crate::model::FunctionRef;
use crate::txn::Transaction;
use crate::vm::{ExecResult, Program, Status};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OracleId {
    InfiniteLoop,
    PrecisionLoss,
    UnnecessaryCast,
    UnnecessaryBool,
    ShlOverflow,
    EarningProfits,
    Custom(String),
}

impl fmt::Display for OracleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleId::InfiniteLoop => f.write_str("InfiniteLoop"),
            OracleId::PrecisionLoss => f.write_str("PrecisionLoss"),
            OracleId::UnnecessaryCast => f.write_str("UnnecessaryCast"),
            OracleId::UnnecessaryBool => f.write_str("UnnecessaryBool"),
            OracleId::ShlOverflow => f.write_str("ShlOverflow"),
            OracleId::EarningProfits => f.write_str("EarningProfits"),
            OracleId::Custom(name) => write!(f, "Custom({name})"),
        }
    }
}

impl OracleId {
    pub fn severity(&self) -> Severity {
        match self {
            OracleId::EarningProfits => Severity::Critical,
            OracleId::ShlOverflow => Severity::Major,
            _ => Severity::Medium,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Critical,
    Major,
    Medium,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Critical => "critical",
            Severity::Major => "major",
            Severity::Medium => "medium",
        })
    }
}

/// Precision-loss level: a truncating division, or one whose result later
/// feeds a multiplication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Lossy,
    Amplified,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FindingSite {
    Instruction { function: FunctionRef, pc: usize },
    Transaction,
}

impl fmt::Display for FindingSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FindingSite::Instruction { function, pc } => write!(f, "{function}@{pc}"),
            FindingSite::Transaction => f.write_str("transaction"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub oracle: OracleId,
    pub level: Option<Level>,
    pub severity: Severity,
    pub site: FindingSite,
    pub witness: Transaction,
    pub detail: String,
}

/// Deduplication key of a finding.
pub type FindingKey = (OracleId, Option<Level>, FindingSite);

impl Finding {
    pub fn key(&self) -> FindingKey {
        (self.oracle.clone(), self.level, self.site.clone())
    }

    /// Oracle name with the precision-loss level, if any.
    pub fn label(&self) -> String {
        match self.level {
            Some(Level::Lossy) => format!("{}(lossy)", self.oracle),
            Some(Level::Amplified) => format!("{}(amplified)", self.oracle),
            None => self.oracle.to_string(),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {} at {}: {}", self.severity, self.label(), self.site, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    pub infinite_loop: bool,
    pub precision_loss: bool,
    pub unnecessary_cast: bool,
    pub unnecessary_bool: bool,
    pub shl_overflow: bool,
    pub earning_profits: bool,
    /// Report divisions whose truncated result reaches a multiplication.
    pub amplification: bool,
    /// Traversals of an unchanged loop condition needed for InfiniteLoop.
    pub loop_threshold: u64,
    /// Event tags that signal a violated invariant, with oracle names.
    pub custom: BTreeMap<u64, String>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            infinite_loop: true,
            precision_loss: true,
            unnecessary_cast: true,
            unnecessary_bool: true,
            shl_overflow: true,
            earning_profits: true,
            amplification: true,
            loop_threshold: 100,
            custom: BTreeMap::new(),
        }
    }
}

fn site_of(prog: &Program, s: Site) -> FindingSite {
    FindingSite::Instruction { function: prog.functions[s.function as usize].fref.clone(), pc: s.pc as usize }
}

/// Trace-based oracles. Requires a traced execution.
pub fn check_runtime_oracles(prog: &Program, result: &ExecResult, txn: &Transaction, cfg: &OracleConfig) -> Vec<Finding> {
    let Some(trace) = &result.trace else { return Vec::new() };
    let mut out = Vec::new();
    let mut push = |oracle: OracleId, level: Option<Level>, site: Site, detail: String| {
        out.push(Finding {
            severity: oracle.severity(),
            oracle,
            level,
            site: site_of(prog, site),
            witness: txn.clone(),
            detail,
        });
    };
    if cfg.infinite_loop && result.status == Status::OutOfGas {
        for (site, st) in &trace.loops {
            if st.constant && st.count >= cfg.loop_threshold {
                push(
                    OracleId::InfiniteLoop,
                    None,
                    *site,
                    format!("loop condition operands {} and {} unchanged over {} iterations", st.first[0], st.first[1], st.count),
                );
            }
        }
    }
    if cfg.precision_loss {
        for site in &trace.lossy_divs {
            push(OracleId::PrecisionLoss, Some(Level::Lossy), *site, "division truncates a nonzero remainder".into());
        }
        if cfg.amplification {
            for (mul, div) in &trace.amplified {
                let d = site_of(prog, *div);
                push(OracleId::PrecisionLoss, Some(Level::Amplified), *mul, format!("multiplies the truncated result of {d}"));
            }
        }
    }
    if cfg.unnecessary_cast {
        for site in &trace.unnecessary_casts {
            push(OracleId::UnnecessaryCast, None, *site, "cast to the operand's own type".into());
        }
    }
    if cfg.unnecessary_bool {
        for site in &trace.unnecessary_bools {
            push(OracleId::UnnecessaryBool, None, *site, "comparison against a boolean constant".into());
        }
    }
    if cfg.shl_overflow {
        for site in &trace.shl_overflows {
            push(OracleId::ShlOverflow, None, *site, "left shift discards nonzero high bits".into());
        }
    }
    out
}

/// Fires when a successful run leaves the sender with more of some coin.
pub fn check_earning_profits(result: &ExecResult, txn: &Transaction) -> Option<Finding> {
    if !result.status.is_success() {
        return None;
    }
    let gains: Vec<String> = result
        .balances_after
        .iter()
        .filter_map(|(t, after)| {
            let before = result.balances_before.get(t).copied().unwrap_or(0);
            (*after > before).then(|| format!("Coin<{t}> {before} -> {after}"))
        })
        .collect();
    if gains.is_empty() {
        return None;
    }
    Some(Finding {
        oracle: OracleId::EarningProfits,
        level: None,
        severity: Severity::Critical,
        site: FindingSite::Transaction,
        witness: txn.clone(),
        detail: format!("sender balance increased: {}", gains.join(", ")),
    })
}

/// One finding per emitted event whose tag is registered.
pub fn check_custom_events(result: &ExecResult, txn: &Transaction, registry: &BTreeMap<u64, String>) -> Vec<Finding> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (tag, payload) in &result.events {
        let Some(name) = registry.get(tag) else { continue };
        if !seen.insert(tag) {
            continue;
        }
        let oracle = OracleId::Custom(name.clone());
        out.push(Finding {
            severity: oracle.severity(),
            oracle,
            level: None,
            site: FindingSite::Transaction,
            witness: txn.clone(),
            detail: format!("event {tag} emitted with {payload}"),
        });
    }
    out
}

/// All enabled oracles over one execution.
pub fn evaluate(prog: &Program, result: &ExecResult, txn: &Transaction, cfg: &OracleConfig) -> Vec<Finding> {
    let mut out = check_runtime_oracles(prog, result, txn, cfg);
    if cfg.earning_profits {
        out.extend(check_earning_profits(result, txn));
    }
    out.extend(check_custom_events(result, txn, &cfg.custom));
    out
}

/// Findings deduplicated by key, keeping the shortest witness.
#[derive(Clone, Debug, Default)]
pub struct FindingSet {
    map: BTreeMap<FindingKey, Finding>,
}

impl FindingSet {
    /// Adds a finding; true when its key is new.
    pub fn insert(&mut self, f: Finding) -> bool {
        match self.map.get_mut(&f.key()) {
            Some(cur) => {
                if f.witness.calls.len() < cur.witness.calls.len() {
                    *cur = f;
                }
                false
            }
            None => {
                self.map.insert(f.key(), f);
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Finding> {
        self.map.values()
    }

    pub fn contains(&self, oracle: &OracleId) -> bool {
        self.map.keys().any(|k| &k.0 == oracle)
    }
}
