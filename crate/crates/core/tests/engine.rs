mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use movefuzz::engine::config::parse_function_ref;
use movefuzz::engine::*;
use movefuzz::txn::Transaction;
use movefuzz::vm::CoverageMap;

fn bench_cfg(name: &str) -> CampaignConfig {
    CampaignConfig::load(&common::bench_dir(name).join("campaign.cfg")).unwrap()
}

fn seed(arms: &[u32]) -> Seed {
    Seed::new(Transaction::default(), arms.to_vec(), 0)
}

#[test]
fn default_weights() {
    assert_eq!(Weights::default(), Weights { generate: 0.2, mutate: 0.6, concolic: 0.2 });
    let w = Weights::default().without_concolic();
    assert_eq!(w.concolic, 0.0);
    assert!((w.generate - 0.25).abs() < 1e-12 && (w.mutate - 0.75).abs() < 1e-12);
}

#[test]
fn empty_corpus_always_generates() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let start = parse_function_ref("pool::loan").unwrap();
    for _ in 0..100 {
        let a = select_action(&Corpus::default(), &Weights::default(), std::slice::from_ref(&start), false, &mut rng);
        assert_eq!(a, Action::Generate(Some(start.clone())));
    }
}

#[test]
fn action_frequencies_follow_weights() {
    let mut corpus = Corpus::default();
    let mut cov = CoverageMap::new(4);
    assert!(corpus.admit(seed(&[0]), &mut cov));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let starts = [parse_function_ref("pool::loan").unwrap()];
    let mut counts = [0u32; 3];
    let n = 10_000;
    for _ in 0..n {
        let i = match select_action(&corpus, &Weights::default(), &starts, false, &mut rng) {
            Action::Generate(_) => 0,
            Action::Mutate { .. } => 1,
            Action::Concolic { .. } => 2,
        };
        counts[i] += 1;
    }
    for (c, w) in counts.iter().zip([0.2, 0.6, 0.2]) {
        assert!((*c as f64 / n as f64 - w).abs() < 0.02, "{counts:?}");
    }
    let only_mutate = Weights { generate: 0.0, mutate: 1.0, concolic: 0.0 };
    for _ in 0..100 {
        assert!(matches!(select_action(&corpus, &only_mutate, &starts, false, &mut rng), Action::Mutate { .. }));
    }
}

#[test]
fn mutator_stacks_are_short() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lens = [0u32; 4];
    for _ in 0..7000 {
        let s = mutator_stack(false, &mut rng);
        assert!(!s.contains(&Mutator::Havoc));
        lens[s.len()] += 1;
    }
    assert_eq!(lens[0], 0);
    assert!(lens[1] > lens[2] && lens[2] > lens[3], "{lens:?}");
    assert!(mutator_stack(true, &mut rng).iter().all(|m| *m == Mutator::Havoc));
}

#[test]
fn admission_requires_new_coverage() {
    let mut corpus = Corpus::default();
    let mut cov = CoverageMap::new(8);
    assert!(corpus.admit(seed(&[1, 2]), &mut cov));
    assert!(!corpus.admit(seed(&[2]), &mut cov));
    assert!(!corpus.admit(seed(&[]), &mut cov));
    assert!(corpus.admit(seed(&[2, 3, 5]), &mut cov));
    assert_eq!(corpus.len(), 2);
    assert_eq!(cov.count(), 4);
    // Mean rarity (1/2 + 1 + 1) / 3 against (1 + 1/2) / 2.
    assert!(corpus.energy(1) > corpus.energy(0));
    corpus.seeds[1].times_fuzzed = 3;
    assert!(corpus.energy(1) < corpus.energy(0));
}

#[test]
fn invalid_configs_are_rejected() {
    let parse = |s: &str| CampaignConfig::parse(s).and_then(|c| c.validate().map(|_| c));
    assert!(parse("package = \"p.mv\"\niterations = 10\n").is_ok());
    assert!(matches!(parse("package = \"p.mv\"\n"), Err(ConfigError::Invalid(_))));
    assert!(matches!(parse("package = \"p.mv\"\niterations = 1\ngas_limit = 0\n"), Err(ConfigError::Invalid(_))));
    assert!(matches!(
        parse("package = \"p.mv\"\niterations = 1\n[weights]\ngenerate = 0.5\nmutate = 0.6\nconcolic = 0.2\n"),
        Err(ConfigError::Invalid(_))
    ));
    assert!(matches!(parse("package = \"p.mv\"\niterations = 1\nbogus = 3\n"), Err(ConfigError::Syntax(_))));
    assert!(matches!(
        parse("package = \"p.mv\"\niterations = 1\n[custom_oracles]\nx = \"y\"\n"),
        Err(ConfigError::Invalid(_))
    ));
    assert!(matches!(parse("package = \"p.mv\"\niterations = 1\n[rename]\n\"a\" = \"b::c\"\n"), Err(ConfigError::Invalid(_))));
    let mut cfg = bench_cfg("fig1");
    cfg.package = cfg.package.with_file_name("missing.mv");
    assert!(matches!(Context::load(cfg), Err(ConfigError::Io { .. })));
}

#[test]
fn zero_iterations_give_empty_report() {
    let mut cfg = bench_cfg("fig1");
    cfg.iterations = Some(0);
    let dir = tempfile::tempdir().unwrap();
    let r = run_campaign(cfg, Some(dir.path())).unwrap();
    assert_eq!(r.iterations, 0);
    assert_eq!(r.corpus, 0);
    assert!(r.findings.is_empty());
    assert_eq!(r.coverage.covered, 0);
    assert_eq!(std::fs::read_dir(dir.path().join("corpus")).unwrap().count(), 0);
    assert!(std::fs::read_to_string(dir.path().join("findings")).unwrap().is_empty());
}

#[test]
fn campaigns_repeat_exactly() {
    let run = || {
        let mut cfg = bench_cfg("fig8");
        cfg.iterations = Some(300);
        let dir = tempfile::tempdir().unwrap();
        let r = run_campaign(cfg, Some(dir.path())).unwrap();
        let report = std::fs::read_to_string(dir.path().join("report")).unwrap();
        let findings = std::fs::read_to_string(dir.path().join("findings")).unwrap();
        (serde_json::to_string(&r.counts).unwrap(), report, findings)
    };
    assert_eq!(run(), run());
}

#[test]
fn fig1_corpus_holds_loan_then_repay() {
    let mut cfg = bench_cfg("fig1");
    cfg.iterations = Some(1000);
    let mut c = Campaign::new(cfg).unwrap();
    while c.step().is_some() {}
    let repay = c.context().prog.functions.iter().find(|f| &*f.fref.name == "repay").unwrap();
    let arms: Vec<u32> = repay.arm_base.iter().copied().filter(|b| *b != u32::MAX).flat_map(|b| [b, b + 1]).collect();
    let corpus = c.corpus();
    assert!(corpus.seeds.iter().any(|s| {
        let names: Vec<&str> = s.txn.calls.iter().map(|c| &*c.function.name).collect();
        names.windows(2).any(|w| w == ["loan", "repay"])
    }));
    let cov = c.coverage();
    assert!(arms.iter().any(|a| cov.contains(*a)));
}

#[test]
fn findings_carry_replayable_witnesses() {
    let mut cfg = bench_cfg("fig8");
    cfg.iterations = Some(2000);
    let dir = tempfile::tempdir().unwrap();
    let r = run_campaign(cfg.clone(), Some(dir.path())).unwrap();
    assert!(!r.findings.is_empty());
    let ctx = Context::load(cfg).unwrap();
    for f in &r.findings {
        let text = std::fs::read_to_string(dir.path().join(&f.witness)).unwrap();
        let txn = ctx.parse_transaction(&text).unwrap();
        let (_, found) = ctx.replay(&txn).unwrap();
        assert!(found.iter().any(|x| x.label() == f.oracle && x.site.to_string() == f.site), "{f:?}");
    }
}

#[test]
fn parallel_workers_share_the_iteration_budget() {
    let mut cfg = bench_cfg("fig5");
    cfg.iterations = Some(400);
    cfg.workers = 3;
    let r = run_campaign(cfg, None).unwrap();
    assert_eq!(r.iterations, 400);
    assert_eq!(r.counts.generate + r.counts.mutate + r.counts.concolic, 400);
    assert!(r.coverage.covered > 0);
}
