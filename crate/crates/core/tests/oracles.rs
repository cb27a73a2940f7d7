mod common;

use std::collections::BTreeMap;

use movefuzz::oracles::*;
use movefuzz::txn::{parse_transaction, validate, Transaction};
use movefuzz::vm::*;

fn run(pkg: &std::sync::Arc<movefuzz::model::Package>, genesis: &WorldState, text: &str, gas: u64) -> (Program, ExecResult, Transaction) {
    let prog = Program::load(pkg.clone());
    let txn = parse_transaction(pkg, text).unwrap();
    validate(&txn, pkg, genesis).unwrap();
    let r = execute(&prog, genesis, &txn, &ExecOptions { gas_limit: gas, trace: true });
    (prog, r, txn)
}

fn sites(findings: &[Finding], oracle: OracleId, level: Option<Level>) -> Vec<String> {
    let mut v: Vec<String> =
        findings.iter().filter(|f| f.oracle == oracle && f.level == level).map(|f| f.site.to_string()).collect();
    v.sort();
    v.dedup();
    v
}

#[test]
fn truncating_division_is_lossy() {
    let pkg = common::package("module m\npublic fn f(a: u64, b: u64) -> u64\n  ld_param a\n  ld_param b\n  div\n  ret\nend\n");
    let cfg = OracleConfig::default();
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::f 5u64 2u64", 1000);
    let f = evaluate(&prog, &r, &txn, &cfg);
    assert_eq!(sites(&f, OracleId::PrecisionLoss, Some(Level::Lossy)), vec!["m::f@2".to_string()]);
    assert_eq!(f[0].severity, Severity::Medium);
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::f 6u64 2u64", 1000);
    assert!(evaluate(&prog, &r, &txn, &cfg).is_empty());
}

#[test]
fn boost_computation_has_two_amplified_sites() {
    let (pkg, genesis) = common::load_bench("fig11");
    let (prog, r, txn) = run(&pkg, &genesis, "call boost::update_boost_factor 1u128 1u128 7u128 1000u128", 100_000);
    assert_eq!(r.status, Status::Success);
    let f = evaluate(&prog, &r, &txn, &OracleConfig::default());
    assert_eq!(
        sites(&f, OracleId::PrecisionLoss, Some(Level::Amplified)),
        vec!["boost::calculate_boost_weight@3".to_string(), "boost::compute_boost_factor@5".to_string()]
    );
    let cfg = OracleConfig { amplification: false, ..OracleConfig::default() };
    let f = evaluate(&prog, &r, &txn, &cfg);
    assert!(sites(&f, OracleId::PrecisionLoss, Some(Level::Amplified)).is_empty());
    assert!(!sites(&f, OracleId::PrecisionLoss, Some(Level::Lossy)).is_empty());
}

#[test]
fn multiply_before_divide_has_no_amplified_site() {
    let (pkg, genesis) = common::load_bench("fig11_control");
    let (prog, r, txn) = run(&pkg, &genesis, "call boost::update_boost_factor 1u128 1u128 7u128 1000u128", 100_000);
    assert_eq!(r.status, Status::Success);
    let f = evaluate(&prog, &r, &txn, &OracleConfig::default());
    assert!(sites(&f, OracleId::PrecisionLoss, Some(Level::Amplified)).is_empty());
}

#[test]
fn guarded_shifts_never_overflow() {
    let (pkg, genesis) = common::load_bench("fig9");
    let prog = Program::load(pkg.clone());
    let cfg = OracleConfig::default();
    for x in (0..=u16::MAX as u32).step_by(7).chain([1, 0x8000, 0xFFFF, 0x00FF]) {
        let txn = parse_transaction(&pkg, &format!("call math::count_leading_zeros {x}u16")).unwrap();
        let r = execute(&prog, &genesis, &txn, &ExecOptions::default());
        assert_eq!(r.status, Status::Success);
        let f = evaluate(&prog, &r, &txn, &cfg);
        assert!(f.iter().all(|f| f.oracle != OracleId::ShlOverflow), "x = {x}: {f:?}");
    }
}

#[test]
fn unguarded_shift_overflows() {
    let pkg = common::package("module m\npublic fn f(x: u8) -> u8\n  ld_param x\n  ld_const u8 4\n  shl\n  ret\nend\n");
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::f 255u8", 1000);
    let f = evaluate(&prog, &r, &txn, &OracleConfig::default());
    assert_eq!(sites(&f, OracleId::ShlOverflow, None), vec!["m::f@2".to_string()]);
    assert_eq!(f.iter().find(|f| f.oracle == OracleId::ShlOverflow).unwrap().severity, Severity::Major);
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::f 15u8", 1000);
    assert!(evaluate(&prog, &r, &txn, &OracleConfig::default()).is_empty());
}

const LOOPS: &str = "module m
public fn stuck(x: u64)
top:
  ld_param x
  ld_const u64 0
  neq
  br_true top
  ret
end
public fn count(n: u64)
  local i: u64
  ld_const u64 0
  st_loc i
top:
  copy_loc i
  ld_param n
  lt
  br_false done
  copy_loc i
  ld_const u64 1
  add
  st_loc i
  branch top
done:
  ret
end
";

#[test]
fn constant_loop_condition_is_infinite_loop() {
    let pkg = common::package(LOOPS);
    let cfg = OracleConfig::default();
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::stuck 3u64", 10_000);
    assert_eq!(r.status, Status::OutOfGas);
    assert_eq!(sites(&evaluate(&prog, &r, &txn, &cfg), OracleId::InfiniteLoop, None), vec!["m::stuck@3".to_string()]);
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::count 1000000u64", 10_000);
    assert_eq!(r.status, Status::OutOfGas);
    assert!(evaluate(&prog, &r, &txn, &cfg).is_empty());
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::stuck 0u64", 10_000);
    assert_eq!(r.status, Status::Success);
    assert!(evaluate(&prog, &r, &txn, &cfg).is_empty());
}

#[test]
fn repaid_flash_loan_earns_nothing() {
    let (pkg, genesis) = common::load_bench("fig1");
    let (prog, r, txn) = run(&pkg, &genesis, "call pool::loan<u8> 100u64\ncall pool::repay<u8> r0.0 r0.1", 10_000);
    assert_eq!(r.status, Status::Success);
    assert!(evaluate(&prog, &r, &txn, &OracleConfig::default()).iter().all(|f| f.oracle != OracleId::EarningProfits));
    let (prog, r, txn) = run(&pkg, &genesis, "", 10_000);
    assert!(evaluate(&prog, &r, &txn, &OracleConfig::default()).is_empty());
}

#[test]
fn minted_coin_kept_by_sender_is_profit() {
    let pkg = common::package("module m\npublic fn faucet<T>(x: u64) -> Coin<T>\n  ld_param x\n  call coin::mint<T>\n  ret\nend\n");
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::faucet<u8> 5u64\ncall coin::transfer_to_sender<u8> r0.0", 1000);
    assert_eq!(r.status, Status::Success);
    let f = evaluate(&prog, &r, &txn, &OracleConfig::default());
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].oracle, OracleId::EarningProfits);
    assert_eq!(f[0].severity, Severity::Critical);
    assert_eq!(f[0].site, FindingSite::Transaction);
}

#[test]
fn registered_events_raise_custom_findings() {
    let pkg = common::package("module m\npublic fn f(x: u64)\n  ld_param x\n  emit_event 7\n  ld_param x\n  emit_event 8\n  ret\nend\n");
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::f 1u64", 1000);
    let mut cfg = OracleConfig::default();
    assert!(evaluate(&prog, &r, &txn, &cfg).is_empty());
    cfg.custom = BTreeMap::from([(7, "Broken invariant".to_string())]);
    let f = evaluate(&prog, &r, &txn, &cfg);
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].oracle, OracleId::Custom("Broken invariant".into()));
    assert_eq!(f[0].label(), "Custom(Broken invariant)");
}

#[test]
fn finding_set_keeps_shortest_witness() {
    let pkg = common::package("module m\npublic fn f(a: u64, b: u64) -> u64\n  ld_param a\n  ld_param b\n  div\n  ret\nend\n");
    let cfg = OracleConfig::default();
    let mut set = FindingSet::default();
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::f 1u64 1u64\ncall m::f 5u64 2u64", 1000);
    for f in evaluate(&prog, &r, &txn, &cfg) {
        assert!(set.insert(f));
    }
    let (prog, r, txn) = run(&pkg, &WorldState::default(), "call m::f 7u64 2u64", 1000);
    for f in evaluate(&prog, &r, &txn, &cfg) {
        assert!(!set.insert(f));
    }
    assert_eq!(set.len(), 1);
    assert_eq!(set.iter().next().unwrap().witness.calls.len(), 1);
    assert!(set.contains(&OracleId::PrecisionLoss));
}

#[test]
fn overflowing_liquidity_is_underrepaid() {
    let (pkg, genesis) = common::load_bench("cetus");
    let l = 1u128 << 112;
    let text = format!("call pool::split<SUI> @2 0u64\ncall pool::add_liquidity<SUI> @1 {l}u128\ncall pool::repay_liquidity<SUI> @1 r0.0 r1.0");
    let (prog, r, txn) = run(&pkg, &genesis, &text, 100_000);
    assert_eq!(r.status, Status::Success);
    let f = evaluate(&prog, &r, &txn, &OracleConfig::default());
    assert_eq!(sites(&f, OracleId::ShlOverflow, None), vec!["pool::checked_shlw@9".to_string()]);
    assert_eq!(sites(&f, OracleId::EarningProfits, None), vec!["transaction".to_string()]);
}

#[test]
fn honest_liquidity_repayment_earns_nothing() {
    let (pkg, genesis) = common::load_bench("cetus");
    let text = "call pool::split<SUI> @2 1000u64\ncall pool::add_liquidity<SUI> @1 257000u128\ncall pool::repay_liquidity<SUI> @1 r0.0 r1.0";
    let (prog, r, txn) = run(&pkg, &genesis, text, 100_000);
    assert_eq!(r.status, Status::Success);
    assert!(evaluate(&prog, &r, &txn, &OracleConfig::default()).is_empty());
}

#[test]
fn manipulated_price_inflates_flash_position() {
    let (pkg, genesis) = common::load_bench("nemo");
    assert_eq!(genesis.objects.len(), 2);
    let honest = "call market::open_position<SUI> @2\ncall market::borrow<SUI> r0.0 1000000u64\ncall market::get_oracle @1\n\
                  call market::swap<SUI, SUI> r1.0 r2.0\ncall market::repay<SUI> r3.0 r1.1\ncall market::withdraw<SUI> r4.0";
    let (_, r, txn) = run(&pkg, &genesis, honest, 100_000);
    assert_eq!(r.status, Status::Success);
    assert!(check_earning_profits(&r, &txn).is_none());
    let exploit = "call market::calculate_amount_by_price @1 0u64 2048u64\ncall market::open_position<SUI> @2\n\
                   call market::borrow<SUI> r1.0 1000000u64\ncall market::get_oracle @1\n\
                   call market::swap<SUI, SUI> r2.0 r3.0\ncall market::repay<SUI> r4.0 r2.1\ncall market::withdraw<SUI> r5.0";
    let (_, r, txn) = run(&pkg, &genesis, exploit, 100_000);
    assert_eq!(r.status, Status::Success);
    assert!(check_earning_profits(&r, &txn).is_some());
}

#[test]
fn wrapped_purchase_reports_reserve_mismatch() {
    let (pkg, genesis) = common::load_bench("fig8");
    let cfg = OracleConfig { custom: BTreeMap::from([(1, "Incorrect reserve calculation".to_string())]), ..OracleConfig::default() };
    let (prog, r, txn) = run(&pkg, &genesis, "call oracle::oracle_buy<u8> @1 @2 50u64", 100_000);
    assert_eq!(r.status, Status::Success);
    assert!(evaluate(&prog, &r, &txn, &cfg).iter().all(|f| !matches!(f.oracle, OracleId::Custom(_))));
    let (prog, r, txn) = run(&pkg, &genesis, "call oracle::oracle_buy<u8> @1 @2 500u64", 100_000);
    assert_eq!(r.status, Status::Success);
    let labels: Vec<String> = evaluate(&prog, &r, &txn, &cfg).iter().map(|f| f.label()).collect();
    assert!(labels.contains(&"Custom(Incorrect reserve calculation)".to_string()), "{labels:?}");
}

#[test]
fn aligned_ticks_pass_the_range_check() {
    let (pkg, genesis) = common::load_bench("fig10");
    let (_, r, _) = run(&pkg, &genesis, "call position::create_position 1000020u64 1000080u64", 10_000);
    assert_eq!(r.status, Status::Success);
    let (_, r, _) = run(&pkg, &genesis, "call position::create_position 1000021u64 1000080u64", 10_000);
    assert!(matches!(r.status, Status::Abort { .. }));
}
