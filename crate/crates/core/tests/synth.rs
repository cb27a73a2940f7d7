mod common;

use std::sync::Arc;

use movefuzz::synth::*;
use movefuzz::txn::{validate, ArgBinding, Transaction};
use movefuzz::typegraph::build_type_graph;
use movefuzz::vm::WorldState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synth(name: &str, cfg: SynthConfig) -> (Synthesizer, WorldState) {
    let (pkg, genesis) = common::load_bench(name);
    let g = Arc::new(build_type_graph(pkg));
    (Synthesizer::new(g, Arc::new(genesis.clone()), cfg), genesis)
}

fn generate(syn: &Synthesizer, rng: &mut ChaCha8Rng) -> Option<Transaction> {
    use rand::seq::SliceRandom;
    let start = syn.starts.choose(rng)?.clone();
    syn.generate(&start, rng).ok()
}

#[test]
fn fig1_generates_loan_then_repay() {
    let (syn, genesis) = synth("fig1", SynthConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = generate(&syn, &mut rng).unwrap();
    validate(&t, syn.package(), &genesis).unwrap();
    let names: Vec<&str> = t.calls.iter().map(|c| &*c.function.name).collect();
    assert_eq!(names, vec!["loan", "repay"]);
    assert_eq!(t.calls[0].type_args, t.calls[1].type_args);
    assert_eq!(t.calls[1].args, vec![ArgBinding::Result(0, 0), ArgBinding::Result(0, 1)]);
}

#[test]
fn generated_and_mutated_transactions_validate() {
    for bench in ["fig1", "fig5", "fig8", "fig9", "fig10", "fig11", "cetus", "nemo"] {
        let (syn, genesis) = synth(bench, SynthConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut made = 0;
        for _ in 0..300 {
            let Some(t) = generate(&syn, &mut rng) else { continue };
            made += 1;
            validate(&t, syn.package(), &genesis).unwrap_or_else(|e| panic!("{bench}: {e}\n{t}"));
            let muts = [
                mutate_values(&t, &mut rng),
                extend_trace(&t, &syn, &mut rng).unwrap_or_else(|| t.clone()),
                insert_call(&t, &syn, &mut rng),
                remove_call(&t, &syn, &mut rng),
            ];
            for m in muts {
                validate(&m, syn.package(), &genesis).unwrap_or_else(|e| panic!("{bench}: {e}\n{t}\n=>\n{m}"));
            }
        }
        assert!(made > 0, "{bench}");
    }
}
