use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use movefuzz::engine::{Campaign, CampaignConfig, Context};

#[derive(Parser)]
#[command(name = "movefuzz", version, about = "Type-aware concolic fuzzer for smart-contract packages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fuzzing campaign and write its output directory.
    Fuzz {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
        /// Output directory.
        #[arg(long, default_value = "movefuzz-out")]
        out: PathBuf,
        /// Exit with status 1 when the campaign reports a finding.
        #[arg(long)]
        fail_on_finding: bool,
        /// Suppress the per-second progress line.
        #[arg(long)]
        quiet: bool,
    },
    /// Execute one transaction file against the genesis state.
    Replay {
        config: PathBuf,
        transaction: PathBuf,
        #[command(flatten)]
        flags: Flags,
        /// Exit with status 1 when the transaction triggers a finding.
        #[arg(long)]
        fail_on_finding: bool,
    },
    /// Print the package's type graph in DOT format.
    Typegraph { config: PathBuf },
    /// Parse and verify the package and genesis named by a config.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time: Option<f64>,
    #[arg(long)]
    gas_limit: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Structure-unaware generation and mutation.
    #[arg(long)]
    no_typegraph: bool,
    /// Keep generic functions at their default instantiation.
    #[arg(long)]
    no_typeparams: bool,
    #[arg(long)]
    no_concolic: bool,
    #[arg(long)]
    concolic_budget: Option<u32>,
    /// Write each concolic path condition under `constraints/`.
    #[arg(long)]
    dump_constraints: bool,
}

impl Flags {
    fn apply(&self, cfg: &mut CampaignConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = Some(v);
        }
        if let Some(v) = self.time {
            cfg.time = Some(v);
        }
        if let Some(v) = self.gas_limit {
            cfg.gas_limit = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.concolic_budget {
            cfg.concolic_budget = v;
        }
        cfg.typegraph &= !self.no_typegraph;
        cfg.typeparams &= !self.no_typeparams;
        cfg.concolic &= !self.no_concolic;
        cfg.dump_constraints |= self.dump_constraints;
    }
}

fn load(path: &Path, flags: Option<&Flags>) -> Result<CampaignConfig, String> {
    let mut cfg = CampaignConfig::load(path).map_err(|e| e.to_string())?;
    if let Some(f) = flags {
        f.apply(&mut cfg);
    }
    Ok(cfg)
}

/// A context for subcommands that never fuzz, so no limit is required.
fn context(mut cfg: CampaignConfig) -> Result<Context, String> {
    if cfg.iterations.is_none() && cfg.time.is_none() {
        cfg.iterations = Some(0);
    }
    Context::load(cfg).map_err(|e| e.to_string())
}

fn fuzz(config: &Path, flags: &Flags, out: &Path, fail_on_finding: bool, quiet: bool) -> Result<bool, String> {
    let cfg = load(config, Some(flags))?;
    let mut campaign = Campaign::with_output(cfg, Some(out)).map_err(|e| e.to_string())?;
    campaign.progress = !quiet;
    let report = campaign.run().map_err(|e| e.to_string())?;
    println!(
        "iterations {} | coverage {}/{} | corpus {} | findings {}",
        report.iterations,
        report.coverage.covered,
        report.coverage.total,
        report.corpus,
        report.findings.len()
    );
    for f in &report.findings {
        println!("#{} [{}] {} at {} (iteration {}, {})", f.id, f.severity, f.oracle, f.site, f.iteration, f.witness);
    }
    println!("output written to {}", out.display());
    Ok(!(fail_on_finding && !report.findings.is_empty()))
}

fn replay(config: &Path, txn_path: &Path, flags: &Flags, fail_on_finding: bool) -> Result<bool, String> {
    let ctx = context(load(config, Some(flags))?)?;
    let text = std::fs::read_to_string(txn_path).map_err(|e| format!("{}: {e}", txn_path.display()))?;
    let txn = ctx.parse_transaction(&text).map_err(|e| format!("{}: {e}", txn_path.display()))?;
    let (r, findings) = ctx.replay(&txn).map_err(|e| format!("invalid transaction: {e}"))?;
    println!("status: {}", r.status);
    println!("gas used: {}", r.gas_used);
    println!("coverage: {:?}", r.coverage);
    for (tag, v) in &r.events {
        println!("event {tag}: {v:?}");
    }
    for (t, after) in &r.balances_after {
        let before = r.balances_before.get(t).copied().unwrap_or(0);
        if before != *after {
            println!("balance {t}: {before} -> {after}");
        }
    }
    for f in &findings {
        println!("finding {f}");
    }
    Ok(!(fail_on_finding && !findings.is_empty()))
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Fuzz { config, flags, out, fail_on_finding, quiet } => fuzz(&config, &flags, &out, fail_on_finding, quiet),
        Command::Replay { config, transaction, flags, fail_on_finding } => replay(&config, &transaction, &flags, fail_on_finding),
        Command::Typegraph { config } => {
            let ctx = context(load(&config, None)?)?;
            print!("{}", ctx.syn.graph.to_dot());
            Ok(true)
        }
        Command::Validate { config } => {
            let ctx = context(load(&config, None)?)?;
            println!(
                "ok: {} functions, {} pool objects, {} branch arms",
                ctx.syn.functions.len(),
                ctx.genesis.objects.len(),
                ctx.prog.total_arms
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
