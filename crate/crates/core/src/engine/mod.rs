//! The fuzzing loop: action scheduling over generation, mutation and
//! concolic solving, coverage feedback, corpus admission and findings.

pub mod config;
pub mod corpus;
mod output;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concolic::{apply_assignment, collect_constraints, flip_and_solve, FlipOutcome, PathCondition, ReferenceSolver, Site};
use crate::model::{FunctionRef, Package};
use crate::oracles::{evaluate, Finding, FindingKey, FindingSet, OracleConfig};
use crate::parse::parse_package;
use crate::synth::{extend_trace, havoc_generate, havoc_mutate, insert_call, mutate_values, remove_call, SynthConfig, Synthesizer};
use crate::txn::{parse_transaction, validate, Transaction, TxnError};
use crate::typegraph::build_type_graph;
use crate::vm::{execute, parse_genesis, run_initializers, CoverageMap, ExecOptions, ExecResult, Program, WorldState};

pub use config::{CampaignConfig, ConfigError, OracleSettings, Weights};
pub use corpus::{mutator_stack, select_action, Action, Corpus, Mutator, Seed};
use output::Sink;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything a worker reads but never changes.
pub struct Context {
    pub cfg: CampaignConfig,
    pub package: Arc<Package>,
    pub prog: Arc<Program>,
    pub genesis: Arc<WorldState>,
    pub syn: Synthesizer,
    pub oracles: OracleConfig,
    pub weights: Weights,
    solver: ReferenceSolver,
}

fn check_rename(pkg: &Package, from: &FunctionRef, to: &FunctionRef) -> Result<(), ConfigError> {
    let bad = |m: String| Err(ConfigError::Invalid(m));
    let Some(a) = pkg.function(from) else { return bad(format!("rename: unknown function {from}")) };
    let Some(b) = pkg.function(to) else { return bad(format!("rename: unknown function {to}")) };
    if !b.is_public() {
        return bad(format!("rename: {to} is not public"));
    }
    let same = a.arity() == b.arity()
        && a.outputs == b.outputs
        && a.inputs.len() == b.inputs.len()
        && a.inputs.iter().zip(&b.inputs).all(|(x, y)| x.ty == y.ty && x.mode == y.mode);
    if !same {
        return bad(format!("rename: {from} and {to} have different signatures"));
    }
    Ok(())
}

impl Context {
    pub fn load(cfg: CampaignConfig) -> Result<Context, ConfigError> {
        cfg.validate()?;
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| ConfigError::Io { path: p.display().to_string(), msg: e.to_string() })
        };
        let text = read(&cfg.package)?;
        let package = Arc::new(parse_package(&text).map_err(|e| ConfigError::Package(e.to_string()))?);
        let gtext = match &cfg.genesis {
            Some(p) => read(p)?,
            None => String::new(),
        };
        let mut genesis = parse_genesis(&package, &gtext).map_err(|e| ConfigError::Genesis(e.to_string()))?;
        let prog = Arc::new(Program::load(package.clone()));
        run_initializers(&prog, &mut genesis, cfg.gas_limit)
            .map_err(|(f, status)| ConfigError::Genesis(format!("initializer {f} failed: {status:?}")))?;
        let rename = cfg.rename_map()?;
        for (from, to) in &rename {
            check_rename(&package, from, to)?;
        }
        let genesis = Arc::new(genesis);
        let graph = Arc::new(build_type_graph(package.clone()));
        let scfg = SynthConfig { max_calls: cfg.max_calls, type_params: cfg.typeparams, rename };
        let syn = Synthesizer::new(graph, genesis.clone(), scfg);
        let oracles = cfg.oracle_config()?;
        let weights = cfg.effective_weights();
        Ok(Context { cfg, package, prog, genesis, syn, oracles, weights, solver: ReferenceSolver })
    }

    /// Parses a transaction in replay format against the package.
    pub fn parse_transaction(&self, text: &str) -> Result<Transaction, String> {
        parse_transaction(&self.package, text).map_err(|e| e.to_string())
    }

    /// Validates and executes one transaction with tracing on, and runs the
    /// oracles over the result.
    pub fn replay(&self, txn: &Transaction) -> Result<(ExecResult, Vec<Finding>), TxnError> {
        validate(txn, &self.package, &self.genesis)?;
        let r = execute(&self.prog, &self.genesis, txn, &ExecOptions { gas_limit: self.cfg.gas_limit, trace: true });
        let findings = evaluate(&self.prog, &r, txn, &self.oracles);
        Ok((r, findings))
    }

    fn starts(&self) -> &[FunctionRef] {
        if self.cfg.typegraph {
            &self.syn.starts
        } else {
            &[]
        }
    }

    /// Both arms of the branch at `site` have been reached.
    fn fully_covered(&self, coverage: &CoverageMap, site: Site) -> bool {
        let base = self.prog.functions[site.function as usize].arm_base.get(site.pc as usize).copied().unwrap_or(u32::MAX);
        base != u32::MAX && coverage.contains(base) && coverage.contains(base + 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub executions: u64,
    /// Transactions rejected by the validator.
    pub invalid: u64,
    /// Empty transactions, discarded without execution.
    pub empty: u64,
    /// Generation attempts that produced no transaction.
    pub synthesis_failures: u64,
    pub generate: u64,
    pub mutate: u64,
    pub concolic: u64,
    pub concolic_sat: u64,
    pub concolic_unsat: u64,
    pub concolic_unknown: u64,
    /// Concolic picks whose seed had nothing to flip.
    pub concolic_nothing: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub covered: u32,
    pub total: u32,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindingRecord {
    pub id: usize,
    pub oracle: String,
    pub severity: String,
    pub site: String,
    pub detail: String,
    /// Iteration of first discovery.
    pub iteration: u64,
    pub witness: String,
    pub calls: usize,
    pub transaction: String,
}

/// Deterministic campaign summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub seed: u64,
    pub iterations: u64,
    pub counts: Counts,
    pub coverage: CoverageSummary,
    pub corpus: usize,
    pub findings: Vec<FindingRecord>,
    pub oracle_counts: BTreeMap<String, usize>,
}

/// Timing, kept apart from the report so reports stay reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub iterations: u64,
    pub executions: u64,
    pub elapsed_secs: f64,
    pub executions_per_sec: f64,
    pub covered: u32,
    pub findings: usize,
}

#[derive(Clone, Debug)]
pub struct Step {
    pub iteration: u64,
    pub action: Action,
    /// The transaction produced, valid or not.
    pub txn: Option<Transaction>,
    pub valid: bool,
    pub result: Option<ExecResult>,
    pub admitted: bool,
    pub new_findings: Vec<Finding>,
}

struct Found {
    id: usize,
    iteration: u64,
}

struct Shared {
    corpus: Corpus,
    coverage: CoverageMap,
    findings: FindingSet,
    found: BTreeMap<FindingKey, Found>,
    counts: Counts,
    next: u64,
    sink: Option<Sink>,
    io_error: Option<std::io::Error>,
}

pub struct Campaign {
    ctx: Arc<Context>,
    shared: Mutex<Shared>,
    rng: ChaCha8Rng,
    started: Instant,
    /// Print a stats line to stderr every second while running.
    pub progress: bool,
}

fn worker_rng(seed: u64, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

impl Campaign {
    pub fn new(cfg: CampaignConfig) -> Result<Campaign, EngineError> {
        Self::with_output(cfg, None)
    }

    /// A campaign that writes its corpus, findings and report under `out`.
    pub fn with_output(cfg: CampaignConfig, out: Option<&Path>) -> Result<Campaign, EngineError> {
        let ctx = Arc::new(Context::load(cfg)?);
        let sink = match out {
            Some(dir) => Some(Sink::create(dir, ctx.cfg.dump_constraints)?),
            None => None,
        };
        let shared = Shared {
            corpus: Corpus::default(),
            coverage: CoverageMap::new(ctx.prog.total_arms),
            findings: FindingSet::default(),
            found: BTreeMap::new(),
            counts: Counts::default(),
            next: 0,
            sink,
            io_error: None,
        };
        let rng = worker_rng(ctx.cfg.seed, 0);
        Ok(Campaign { ctx, shared: Mutex::new(shared), rng, started: Instant::now(), progress: false })
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    /// Runs one iteration on the calling thread; none once the limit is hit.
    pub fn step(&mut self) -> Option<Step> {
        step(&self.ctx, &self.shared, &mut self.rng, self.started)
    }

    pub fn corpus(&self) -> Corpus {
        self.shared.lock().unwrap().corpus.clone()
    }

    pub fn coverage(&self) -> CoverageMap {
        self.shared.lock().unwrap().coverage.clone()
    }

    pub fn stats(&self) -> Stats {
        stats(&self.shared.lock().unwrap(), self.started)
    }

    /// Runs to the configured limit and returns the report.
    pub fn run(mut self) -> Result<CampaignReport, EngineError> {
        let workers = self.ctx.cfg.workers;
        if workers <= 1 {
            let mut last = Instant::now();
            while self.step().is_some() {
                if self.progress && last.elapsed() >= Duration::from_secs(1) {
                    last = Instant::now();
                    eprintln!("{}", stats_line(&self.stats()));
                }
            }
        } else {
            let (ctx, shared, started, progress) = (&self.ctx, &self.shared, self.started, self.progress);
            std::thread::scope(|s| {
                for w in 0..workers as u64 {
                    s.spawn(move || {
                        let mut rng = worker_rng(ctx.cfg.seed, w);
                        let mut last = Instant::now();
                        while step(ctx, shared, &mut rng, started).is_some() {
                            if progress && w == 0 && last.elapsed() >= Duration::from_secs(1) {
                                last = Instant::now();
                                eprintln!("{}", stats_line(&stats(&shared.lock().unwrap(), started)));
                            }
                        }
                    });
                }
            });
        }
        self.finish()
    }

    fn finish(self) -> Result<CampaignReport, EngineError> {
        let started = self.started;
        let mut sh = self.shared.into_inner().unwrap();
        if let Some(e) = sh.io_error.take() {
            return Err(e.into());
        }
        let report = build_report(&self.ctx, &sh);
        let st = stats(&sh, started);
        if let Some(sink) = &mut sh.sink {
            sink.finish(&report, &sh.coverage, &st)?;
        }
        Ok(report)
    }
}

fn stats(sh: &Shared, started: Instant) -> Stats {
    let elapsed = started.elapsed().as_secs_f64();
    Stats {
        iterations: sh.next,
        executions: sh.counts.executions,
        elapsed_secs: elapsed,
        executions_per_sec: if elapsed > 0.0 { sh.counts.executions as f64 / elapsed } else { 0.0 },
        covered: sh.coverage.count(),
        findings: sh.findings.len(),
    }
}

pub fn stats_line(s: &Stats) -> String {
    format!(
        "iterations {} | exec/s {:.0} | coverage {} | findings {}",
        s.iterations, s.executions_per_sec, s.covered, s.findings
    )
}

fn build_report(ctx: &Context, sh: &Shared) -> CampaignReport {
    let mut findings: Vec<FindingRecord> = sh
        .findings
        .iter()
        .map(|f| {
            let found = &sh.found[&f.key()];
            FindingRecord {
                id: found.id,
                oracle: f.label(),
                severity: f.severity.to_string(),
                site: f.site.to_string(),
                detail: f.detail.clone(),
                iteration: found.iteration,
                witness: output::witness_path(found.id),
                calls: f.witness.calls.len(),
                transaction: f.witness.to_replay(),
            }
        })
        .collect();
    findings.sort_by_key(|f| f.id);
    let mut oracle_counts = BTreeMap::new();
    for f in sh.findings.iter() {
        *oracle_counts.entry(f.oracle.to_string()).or_insert(0) += 1;
    }
    let total = ctx.prog.total_arms;
    let covered = sh.coverage.count();
    CampaignReport {
        seed: ctx.cfg.seed,
        iterations: sh.next,
        counts: sh.counts.clone(),
        coverage: CoverageSummary {
            covered,
            total,
            ratio: if total == 0 { 0.0 } else { covered as f64 / total as f64 },
        },
        corpus: sh.corpus.len(),
        findings,
        oracle_counts,
    }
}

/// Claims the next iteration number unless a limit has been reached.
fn claim(ctx: &Context, sh: &mut Shared, started: Instant) -> Option<u64> {
    if sh.io_error.is_some() {
        return None;
    }
    if ctx.cfg.iterations.is_some_and(|n| sh.next >= n) {
        return None;
    }
    if ctx.cfg.time.is_some_and(|t| started.elapsed().as_secs_f64() >= t) {
        return None;
    }
    sh.next += 1;
    Some(sh.next - 1)
}

fn apply_mutators(ctx: &Context, seed: &Transaction, stack: &[Mutator], rng: &mut ChaCha8Rng) -> Transaction {
    let syn = &ctx.syn;
    let mut t = seed.clone();
    for m in stack {
        t = match m {
            Mutator::Values => mutate_values(&t, rng),
            Mutator::Extend => extend_trace(&t, syn, rng).unwrap_or(t),
            Mutator::Insert => insert_call(&t, syn, rng),
            Mutator::Remove => remove_call(&t, syn, rng),
            Mutator::Havoc => havoc_mutate(&t, syn, rng),
        };
    }
    t
}

enum Work {
    Ready(Option<Transaction>),
    Concolic { txn: Transaction, path: Option<Arc<PathCondition>>, coverage: CoverageMap },
}

/// Records one execution: coverage, corpus admission and findings.
fn merge(ctx: &Context, sh: &mut Shared, iteration: u64, txn: &Transaction, result: &ExecResult) -> (bool, Vec<Finding>) {
    sh.counts.executions += 1;
    let mut seed = Seed::new(txn.clone(), result.coverage.clone(), iteration);
    seed.path = result.trace.as_ref().map(|tr| Arc::new(tr.path.clone()));
    let admitted = sh.corpus.admit(seed, &mut sh.coverage);
    if admitted {
        if let Some(sink) = &mut sh.sink {
            if let Err(e) = sink.seed(sh.corpus.len() - 1, txn) {
                sh.io_error.get_or_insert(e);
            }
        }
    }
    let mut new_findings = Vec::new();
    for f in evaluate(&ctx.prog, result, txn, &ctx.oracles) {
        let key = f.key();
        let before = sh.findings.iter().find(|g| g.key() == key).map(|g| g.witness.calls.len());
        let fresh = sh.findings.insert(f.clone());
        let id = match sh.found.get(&key) {
            Some(found) => found.id,
            None => {
                let id = sh.found.len();
                sh.found.insert(key.clone(), Found { id, iteration });
                id
            }
        };
        let replaced = before.is_some_and(|n| f.witness.calls.len() < n);
        if let Some(sink) = &mut sh.sink {
            let r = if fresh {
                sink.finding(id, iteration, ctx.cfg.seed, &f)
            } else if replaced {
                sink.witness(id, &f.witness)
            } else {
                Ok(())
            };
            if let Err(e) = r {
                sh.io_error.get_or_insert(e);
            }
        }
        if fresh {
            new_findings.push(f);
        }
    }
    (admitted, new_findings)
}

fn is_valid(ctx: &Context, txn: &Transaction) -> bool {
    validate(txn, &ctx.package, &ctx.genesis).is_ok()
}

fn step(ctx: &Context, shared: &Mutex<Shared>, rng: &mut ChaCha8Rng, started: Instant) -> Option<Step> {
    let (iteration, action, work) = {
        let mut sh = shared.lock().unwrap();
        let iteration = claim(ctx, &mut sh, started)?;
        let action = select_action(&sh.corpus, &ctx.weights, ctx.starts(), !ctx.cfg.typegraph, rng);
        match &action {
            Action::Generate(_) => sh.counts.generate += 1,
            Action::Mutate { .. } => sh.counts.mutate += 1,
            Action::Concolic { .. } => sh.counts.concolic += 1,
        }
        let work = match &action {
            Action::Generate(_) => Work::Ready(None),
            Action::Mutate { seed, .. } | Action::Concolic { seed } => {
                let s = &mut sh.corpus.seeds[*seed];
                s.times_fuzzed += 1;
                let (txn, path) = (s.txn.clone(), s.path.clone());
                match action {
                    Action::Concolic { .. } => Work::Concolic { txn, path, coverage: sh.coverage.clone() },
                    _ => Work::Ready(Some(txn)),
                }
            }
        };
        (iteration, action, work)
    };

    let mut pre = Vec::new();
    let txn = match (&action, work) {
        (Action::Generate(start), _) => match start {
            Some(f) => ctx.syn.generate(f, rng).ok(),
            None if ctx.cfg.typegraph => None,
            None => Some(havoc_generate(&ctx.syn, rng)),
        },
        (Action::Mutate { stack, .. }, Work::Ready(Some(seed))) => Some(apply_mutators(ctx, &seed, stack, rng)),
        (_, Work::Concolic { txn, path, coverage }) => Some(concolic(ctx, shared, iteration, txn, path, &coverage, rng, &mut pre)),
        _ => unreachable!("work matches action"),
    };

    let empty = txn.as_ref().is_some_and(|t| t.is_empty());
    let valid = !empty && txn.as_ref().is_some_and(|t| is_valid(ctx, t));
    let result = match (&txn, valid) {
        (Some(t), true) => Some(execute(&ctx.prog, &ctx.genesis, t, &ExecOptions { gas_limit: ctx.cfg.gas_limit, trace: true })),
        _ => None,
    };

    let mut sh = shared.lock().unwrap();
    let sh = &mut *sh;
    if txn.is_none() {
        sh.counts.synthesis_failures += 1;
    } else if empty {
        sh.counts.empty += 1;
    } else if !valid {
        sh.counts.invalid += 1;
    }
    let mut admitted = false;
    let mut new_findings = pre;
    if let (Some(t), Some(r)) = (&txn, &result) {
        let (a, f) = merge(ctx, sh, iteration, t, r);
        admitted = a;
        new_findings.extend(f);
    }
    Some(Step { iteration, action, txn, valid, result, admitted, new_findings })
}

/// Collects the path of the seed, or of a structural mutant of it, flips
/// branches and returns the transaction with solved inputs. Falls back to
/// a value mutation when nothing is solved.
#[allow(clippy::too_many_arguments)]
fn concolic(
    ctx: &Context,
    shared: &Mutex<Shared>,
    iteration: u64,
    seed: Transaction,
    seed_path: Option<Arc<PathCondition>>,
    coverage: &CoverageMap,
    rng: &mut ChaCha8Rng,
    findings: &mut Vec<Finding>,
) -> Transaction {
    let mutant = if rng.gen_bool(0.5) {
        let m = apply_mutators(ctx, &seed, &mutator_stack(!ctx.cfg.typegraph, rng), rng);
        (!m.is_empty() && is_valid(ctx, &m)).then_some(m)
    } else {
        None
    };
    let (base, path) = match mutant {
        Some(m) => match collect_constraints(&ctx.prog, &ctx.genesis, &m, ctx.cfg.gas_limit) {
            Ok(c) => {
                let mut sh = shared.lock().unwrap();
                let (_, f) = merge(ctx, &mut sh, iteration, &m, &c.result);
                findings.extend(f);
                (m, Some(Arc::new(c.path)))
            }
            Err(_) => (m, None),
        },
        None => (seed, seed_path),
    };
    let outcome = match &path {
        Some(p) => {
            let fully = |s: Site| ctx.fully_covered(coverage, s);
            let (o, flips) = flip_and_solve(p, rng, &ctx.solver, ctx.cfg.concolic_budget, &fully);
            if ctx.cfg.dump_constraints {
                let mut sh = shared.lock().unwrap();
                if let Some(sink) = &mut sh.sink {
                    if let Err(e) = sink.constraints(iteration, p, &flips, &o) {
                        sh.io_error.get_or_insert(e);
                    }
                }
            }
            o
        }
        None => FlipOutcome::Nothing,
    };
    let next = match &outcome {
        FlipOutcome::Sat(a) => apply_assignment(&base, a).ok(),
        _ => None,
    };
    let mut sh = shared.lock().unwrap();
    match outcome {
        FlipOutcome::Sat(_) => sh.counts.concolic_sat += 1,
        FlipOutcome::Unsat => sh.counts.concolic_unsat += 1,
        FlipOutcome::Unknown => sh.counts.concolic_unknown += 1,
        FlipOutcome::Nothing => sh.counts.concolic_nothing += 1,
    }
    drop(sh);
    next.unwrap_or_else(|| mutate_values(&base, rng))
}

/// Loads, runs and reports a campaign.
pub fn run_campaign(cfg: CampaignConfig, out: Option<&Path>) -> Result<CampaignReport, EngineError> {
    Campaign::with_output(cfg, out)?.run()
}
