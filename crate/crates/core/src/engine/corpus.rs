//! Seed corpus with coverage-rarity energy, and action scheduling.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::concolic::PathCondition;
use crate::engine::config::Weights;
use crate::model::FunctionRef;
use crate::txn::Transaction;
use crate::vm::CoverageMap;

#[derive(Clone, Debug)]
pub struct Seed {
    pub txn: Transaction,
    /// Sorted branch arms reached by the seed.
    pub coverage: Vec<u32>,
    /// Iteration that admitted the seed.
    pub found_at: u64,
    pub times_fuzzed: u64,
    /// Path condition of the seed, filled on first concolic use.
    pub path: Option<Arc<PathCondition>>,
}

impl Seed {
    pub fn new(txn: Transaction, coverage: Vec<u32>, found_at: u64) -> Seed {
        Seed { txn, coverage, found_at, times_fuzzed: 0, path: None }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub seeds: Vec<Seed>,
    /// Number of seeds reaching each arm.
    hits: BTreeMap<u32, u64>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Adds `seed` when it reaches an arm missing from `coverage`, which is
    /// updated. Returns whether the seed was admitted.
    pub fn admit(&mut self, seed: Seed, coverage: &mut CoverageMap) -> bool {
        if !coverage.merge(&seed.coverage) {
            return false;
        }
        for a in &seed.coverage {
            *self.hits.entry(*a).or_default() += 1;
        }
        self.seeds.push(seed);
        true
    }

    /// 1/(1 + times fuzzed) times the mean rarity 1/hits of the seed's arms.
    pub fn energy(&self, i: usize) -> f64 {
        let s = &self.seeds[i];
        let rarity = if s.coverage.is_empty() {
            1.0
        } else {
            s.coverage.iter().map(|a| 1.0 / self.hits.get(a).copied().unwrap_or(1).max(1) as f64).sum::<f64>()
                / s.coverage.len() as f64
        };
        rarity / (1 + s.times_fuzzed) as f64
    }

    /// A seed index drawn in proportion to energy.
    pub fn pick(&self, rng: &mut impl Rng) -> Option<usize> {
        if self.seeds.is_empty() {
            return None;
        }
        let energies: Vec<f64> = (0..self.seeds.len()).map(|i| self.energy(i)).collect();
        let total: f64 = energies.iter().sum();
        let mut r = rng.gen::<f64>() * total;
        for (i, e) in energies.iter().enumerate() {
            if r < *e {
                return Some(i);
            }
            r -= e;
        }
        Some(self.seeds.len() - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mutator {
    /// Change primitive inputs.
    Values,
    /// Continue the trace's walk.
    Extend,
    /// Connect a new call to an open value.
    Insert,
    /// Drop a call and everything depending on it.
    Remove,
    /// Structure-unaware edits of the call list.
    Havoc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    /// Start function of the new trace, or none for structure-unaware generation.
    Generate(Option<FunctionRef>),
    Mutate { seed: usize, stack: Vec<Mutator> },
    Concolic { seed: usize },
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Generate(_) => "generate",
            Action::Mutate { .. } => "mutate",
            Action::Concolic { .. } => "concolic",
        }
    }
}

/// Between one and three mutators, each count half as likely as the one
/// before; structure-aware mutators are drawn uniformly unless `havoc`.
pub fn mutator_stack(havoc: bool, rng: &mut impl Rng) -> Vec<Mutator> {
    let n = match rng.gen_range(0..7) {
        0..=3 => 1,
        4 | 5 => 2,
        _ => 3,
    };
    (0..n)
        .map(|_| {
            if havoc {
                return Mutator::Havoc;
            }
            [Mutator::Values, Mutator::Extend, Mutator::Insert, Mutator::Remove][rng.gen_range(0..4)]
        })
        .collect()
}

/// Generation with an empty corpus; otherwise an action drawn by weight on
/// a seed drawn by energy. `starts` empty means structure-unaware fuzzing.
pub fn select_action(corpus: &Corpus, weights: &Weights, starts: &[FunctionRef], havoc: bool, rng: &mut impl Rng) -> Action {
    let generate = |rng: &mut _| Action::Generate(starts.choose(rng).cloned());
    if corpus.is_empty() {
        return generate(rng);
    }
    let total = weights.generate + weights.mutate + weights.concolic;
    let r = rng.gen::<f64>() * total;
    if r < weights.generate {
        return generate(rng);
    }
    let seed = corpus.pick(rng).expect("corpus is not empty");
    if r < weights.generate + weights.mutate || weights.concolic == 0.0 {
        Action::Mutate { seed, stack: mutator_stack(havoc, rng) }
    } else {
        Action::Concolic { seed }
    }
}
