//! Choosing constraints to negate and building the solver query.

use std::collections::BTreeMap;

use rand::Rng;

use crate::concolic::solver::{Assignment, SolveOutcome, Solver};
use crate::concolic::sym::{Goal, PathCondition, Site};

/// Index of the terminal (violated) guard in flip lists.
pub const TERMINAL: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlipOutcome {
    Sat(Assignment),
    Unsat,
    Unknown,
    /// The path has no symbolic constraint to flip.
    Nothing,
}

/// Solver goals for negating the constraints at `flips`: the prefix up to
/// the earliest flip is kept, each flipped branch or guard is negated, and
/// the terminal guard (if listed) is required to hold.
pub fn flip_goals(pc: &PathCondition, flips: &[usize]) -> Vec<Goal> {
    let earliest = flips.iter().copied().min().unwrap_or(TERMINAL).min(pc.constraints.len());
    let mut goals: Vec<Goal> = pc.constraints[..earliest].iter().map(|c| c.goal()).collect();
    for &i in flips {
        if i == TERMINAL {
            if let Some(t) = &pc.terminal {
                goals.push(t.goal());
            }
        } else if let Some(c) = pc.constraints.get(i) {
            goals.push(c.goal().negated());
        }
    }
    goals
}

/// Picks one constraint (two with probability 0.2) to flip. Branch sites
/// not yet covered on both arms are preferred, together with the terminal
/// guard; otherwise any site may be chosen.
pub fn choose_flips(pc: &PathCondition, rng: &mut impl Rng, fully_covered: &dyn Fn(Site) -> bool) -> Vec<usize> {
    let mut sites: BTreeMap<Site, Vec<usize>> = BTreeMap::new();
    let mut all: BTreeMap<Site, Vec<usize>> = BTreeMap::new();
    for (i, c) in pc.constraints.iter().enumerate() {
        all.entry(c.site).or_default().push(i);
        if c.is_branch() && !fully_covered(c.site) {
            sites.entry(c.site).or_default().push(i);
        }
    }
    if let Some(t) = &pc.terminal {
        sites.entry(t.site).or_default().push(TERMINAL);
        all.entry(t.site).or_default().push(TERMINAL);
    }
    let pool = if sites.is_empty() { all } else { sites };
    if pool.is_empty() {
        return Vec::new();
    }
    let groups: Vec<&Vec<usize>> = pool.values().collect();
    let count = if groups.len() >= 2 && !rng.gen_bool(0.8) { 2 } else { 1 };
    let mut picked: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    for k in 0..count {
        let j = rng.gen_range(k..order.len());
        order.swap(k, j);
        let g = groups[order[k]];
        picked.push(g[rng.gen_range(0..g.len())]);
    }
    picked.sort_unstable();
    picked
}

/// Flips constraints of `pc` and solves for new inputs.
pub fn flip_and_solve(
    pc: &PathCondition,
    rng: &mut impl Rng,
    solver: &dyn Solver,
    budget: u32,
    fully_covered: &dyn Fn(Site) -> bool,
) -> (FlipOutcome, Vec<usize>) {
    let flips = choose_flips(pc, rng, fully_covered);
    if flips.is_empty() {
        return (FlipOutcome::Nothing, flips);
    }
    let seed = rng.gen();
    (solve_flips(pc, &flips, solver, budget, seed), flips)
}

/// Solves the query for a given set of flips.
pub fn solve_flips(pc: &PathCondition, flips: &[usize], solver: &dyn Solver, budget: u32, seed: u64) -> FlipOutcome {
    let goals = flip_goals(pc, flips);
    match solver.solve(&goals, &pc.vars, budget, seed) {
        SolveOutcome::Sat(mut a) => {
            let env = |v| a.get(&v).copied().unwrap_or_else(|| pc.value_of(v));
            if !goals.iter().all(|g| g.holds(&env)) {
                return FlipOutcome::Unknown;
            }
            a.retain(|v, x| pc.vars.get(v).is_none_or(|(_, cur)| cur != x));
            FlipOutcome::Sat(a)
        }
        SolveOutcome::Unsat => FlipOutcome::Unsat,
        SolveOutcome::Unknown => FlipOutcome::Unknown,
    }
}
