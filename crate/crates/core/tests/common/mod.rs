#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use movefuzz::model::Package;
use movefuzz::parse::parse_package;
use movefuzz::vm::{parse_genesis, Program, WorldState};

pub fn bench_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").join(name)
}

pub fn load_bench(name: &str) -> (Arc<Package>, WorldState) {
    let dir = bench_dir(name);
    let text = std::fs::read_to_string(dir.join("package.mv")).unwrap();
    let pkg = Arc::new(parse_package(&text).unwrap_or_else(|e| panic!("{name}: {e}")));
    let gtext = std::fs::read_to_string(dir.join("genesis.txt")).unwrap_or_default();
    let mut genesis = parse_genesis(&pkg, &gtext).unwrap();
    let prog = Program::load(pkg.clone());
    movefuzz::vm::run_initializers(&prog, &mut genesis, 100_000).unwrap();
    (pkg, genesis)
}

pub fn package(text: &str) -> Arc<Package> {
    Arc::new(parse_package(text).unwrap_or_else(|e| panic!("{e}")))
}
