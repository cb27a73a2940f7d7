//! Campaign output directory: `report`, `stats`, `findings`, `coverage`,
//! `corpus/`, `witnesses/` and optionally `constraints/`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::concolic::{FlipOutcome, PathCondition, TERMINAL};
use crate::engine::{CampaignReport, Stats};
use crate::oracles::Finding;
use crate::txn::Transaction;
use crate::vm::CoverageMap;

pub fn witness_path(id: usize) -> String {
    format!("witnesses/{id:04}.txn")
}

pub struct Sink {
    dir: PathBuf,
    findings: File,
}

impl Sink {
    pub fn create(dir: &Path, constraints: bool) -> io::Result<Sink> {
        fs::create_dir_all(dir)?;
        for sub in ["corpus", "witnesses", "constraints"] {
            let p = dir.join(sub);
            if p.exists() {
                fs::remove_dir_all(&p)?;
            }
        }
        fs::create_dir_all(dir.join("corpus"))?;
        fs::create_dir_all(dir.join("witnesses"))?;
        if constraints {
            fs::create_dir_all(dir.join("constraints"))?;
        }
        let findings = OpenOptions::new().create(true).write(true).truncate(true).open(dir.join("findings"))?;
        Ok(Sink { dir: dir.to_path_buf(), findings })
    }

    pub fn seed(&mut self, index: usize, txn: &Transaction) -> io::Result<()> {
        fs::write(self.dir.join(format!("corpus/{index:06}.txn")), txn.to_replay())
    }

    pub fn witness(&mut self, id: usize, txn: &Transaction) -> io::Result<()> {
        fs::write(self.dir.join(witness_path(id)), txn.to_replay())
    }

    pub fn finding(&mut self, id: usize, iteration: u64, seed: u64, f: &Finding) -> io::Result<()> {
        self.witness(id, &f.witness)?;
        let line = json!({
            "id": id,
            "oracle": f.label(),
            "severity": f.severity.to_string(),
            "site": f.site.to_string(),
            "witness": witness_path(id),
            "timestamp": iteration,
            "seed": seed,
        });
        writeln!(self.findings, "{line}")?;
        self.findings.flush()
    }

    pub fn constraints(&mut self, iteration: u64, pc: &PathCondition, flips: &[usize], outcome: &FlipOutcome) -> io::Result<()> {
        let mut s = pc.dump();
        let flips: Vec<String> =
            flips.iter().map(|&i| if i == TERMINAL { "terminal".to_string() } else { i.to_string() }).collect();
        s.push_str(&format!("flip {}\n", flips.join(" ")));
        let o = match outcome {
            FlipOutcome::Sat(a) => {
                let vals: Vec<String> = a.iter().map(|(v, x)| format!("{v}={x}")).collect();
                format!("sat {}", vals.join(" "))
            }
            FlipOutcome::Unsat => "unsat".into(),
            FlipOutcome::Unknown => "unknown".into(),
            FlipOutcome::Nothing => "nothing".into(),
        };
        s.push_str(&o);
        s.push('\n');
        fs::write(self.dir.join(format!("constraints/{iteration:08}.txt")), s)
    }

    pub fn finish(&mut self, report: &CampaignReport, coverage: &CoverageMap, stats: &Stats) -> io::Result<()> {
        let mut r = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
        r.push('\n');
        fs::write(self.dir.join("report"), r)?;
        let mut s = serde_json::to_string_pretty(stats).map_err(io::Error::other)?;
        s.push('\n');
        fs::write(self.dir.join("stats"), s)?;
        fs::write(self.dir.join("coverage"), coverage.dump())
    }
}
