mod common;

use std::collections::BTreeMap;

use movefuzz::model::TypeTag;
use movefuzz::stdlib::coin_ref;
use movefuzz::txn::{parse_transaction, validate};
use movefuzz::vm::arith::AbortKind;
use movefuzz::vm::*;

fn coin_total(state: &WorldState) -> BTreeMap<TypeTag, i128> {
    fn walk(v: &Value, out: &mut BTreeMap<TypeTag, i128>) {
        match v {
            Value::Struct(ty, fields) => {
                if let TypeTag::Datatype(r, args) = &**ty {
                    if *r == coin_ref() {
                        *out.entry(args[0].clone()).or_default() += fields[0].as_int().as_u64() as i128;
                        return;
                    }
                }
                fields.iter().for_each(|f| walk(f, out));
            }
            Value::Vec(items) => items.iter().for_each(|f| walk(f, out)),
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    for o in state.objects.values() {
        walk(&o.value, &mut out);
    }
    out
}

#[test]
fn loan_then_repay_succeeds_and_conserves_coins() {
    let (pkg, genesis) = common::load_bench("fig1");
    let prog = Program::load(pkg.clone());
    let txn = parse_transaction(&pkg, "call pool::loan<u8> 100u64\ncall pool::repay<u8> r0.0 r0.1\n").unwrap();
    validate(&txn, &pkg, &genesis).unwrap();
    let r = execute(&prog, &genesis, &txn, &ExecOptions::default());
    assert_eq!(r.status, Status::Success);
    let after = r.final_state.as_ref().unwrap();
    let before_total = coin_total(&genesis);
    let after_total = coin_total(after);
    for t in after.supply.keys().chain(after_total.keys()) {
        let d = after_total.get(t).copied().unwrap_or(0) - before_total.get(t).copied().unwrap_or(0);
        assert_eq!(d, after.supply.get(t).copied().unwrap_or(0) - genesis.supply.get(t).copied().unwrap_or(0));
    }
    assert!(r.balances_after.values().sum::<u128>() <= r.balances_before.values().sum::<u128>());
    let (f, pc, taken) = prog.describe_arm(*r.coverage.last().unwrap()).unwrap();
    assert_eq!((&*f.name, pc, taken), ("repay", 10, true));
}

#[test]
fn division_by_zero_aborts_at_the_div() {
    let pkg = common::package("module m\npublic fn f(x: u64) -> u64\n  ld_param x\n  ld_const u64 0\n  div\n  ret\nend\n");
    let prog = Program::load(pkg.clone());
    let txn = parse_transaction(&pkg, "call m::f 7u64").unwrap();
    let r = execute(&prog, &WorldState::default(), &txn, &ExecOptions::default());
    match r.status {
        Status::Abort { kind, function, pc } => {
            assert_eq!(kind, AbortKind::DivByZero);
            assert_eq!(&*function.name, "f");
            assert_eq!(pc, 2);
        }
        s => panic!("unexpected {s:?}"),
    }
    assert!(r.final_state.is_none());
}

#[test]
fn unbounded_loop_runs_out_of_gas_exactly() {
    let pkg = common::package("module m\npublic fn spin()\ntop:\n  branch top\nend\n");
    let prog = Program::load(pkg.clone());
    let txn = parse_transaction(&pkg, "call m::spin").unwrap();
    let r = execute(&prog, &WorldState::default(), &txn, &ExecOptions { gas_limit: 100_000, trace: false });
    assert_eq!(r.status, Status::OutOfGas);
    assert_eq!(r.gas_used, 100_000);
}

#[test]
fn gas_equals_retired_instructions() {
    let pkg = common::package("module m\npublic fn f(x: u64) -> u64\n  ld_param x\n  ld_const u64 1\n  add\n  ret\nend\n");
    let prog = Program::load(pkg.clone());
    let txn = parse_transaction(&pkg, "call m::f 1u64\ncall m::f 2u64").unwrap();
    let r = execute(&prog, &WorldState::default(), &txn, &ExecOptions::default());
    assert_eq!(r.status, Status::Success);
    assert_eq!(r.gas_used, 8);
}

#[test]
fn narrowing_cast_out_of_range_aborts() {
    let pkg = common::package("module m\npublic fn f(x: u128) -> u64\n  ld_param x\n  cast u64\n  ret\nend\n");
    let prog = Program::load(pkg.clone());
    let txn = parse_transaction(&pkg, "call m::f 18446744073709551616u128").unwrap();
    let r = execute(&prog, &WorldState::default(), &txn, &ExecOptions::default());
    assert!(matches!(r.status, Status::Abort { kind: AbortKind::CastOutOfRange, pc: 1, .. }));
}

#[test]
fn opposite_arms_are_both_new() {
    let pkg = common::package(
        "module m\npublic fn f(b: bool)\n  ld_param b\n  br_true yes\n  ret\nyes:\n  ret\nend\n",
    );
    let prog = Program::load(pkg.clone());
    let mut map = CoverageMap::new(prog.total_arms);
    let run = |s: &str| execute(&prog, &WorldState::default(), &parse_transaction(&pkg, s).unwrap(), &ExecOptions::default());
    let t = run("call m::f true");
    let f = run("call m::f false");
    assert!(map.record(&t));
    assert!(!map.record(&t));
    assert!(map.record(&f));
    assert_eq!(map.count(), 2);
}

#[test]
fn execution_is_deterministic() {
    let (pkg, genesis) = common::load_bench("fig1");
    let prog = Program::load(pkg.clone());
    let txn = parse_transaction(&pkg, "call pool::loan<u64> 5000u64\ncall pool::repay<u64> r0.0 r0.1\n").unwrap();
    let a = execute(&prog, &genesis, &txn, &ExecOptions::default());
    let b = execute(&prog, &genesis, &txn, &ExecOptions::default());
    assert_eq!(a, b);
    assert!(matches!(a.status, Status::Abort { kind: AbortKind::Explicit(1), .. }));
}

#[test]
fn aborting_initializer_is_reported() {
    let pkg = common::package("module m\nfn init()\n  abort 9\nend\n");
    let prog = Program::load(pkg.clone());
    let mut g = WorldState::default();
    let (f, status) = run_initializers(&prog, &mut g, 1000).unwrap_err();
    assert_eq!(&*f.name, "init");
    assert!(matches!(status, Status::Abort { kind: AbortKind::Explicit(9), .. }));
}
