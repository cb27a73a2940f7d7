//! The campaign-wide branch-arm coverage bitmap.

use crate::vm::interp::ExecResult;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoverageMap {
    words: Vec<u64>,
    count: u32,
}

impl CoverageMap {
    pub fn new(total_arms: u32) -> Self {
        CoverageMap { words: vec![0; (total_arms as usize).div_ceil(64)], count: 0 }
    }

    pub fn contains(&self, arm: u32) -> bool {
        self.words.get(arm as usize / 64).is_some_and(|w| w & (1 << (arm % 64)) != 0)
    }

    /// Sets one arm; true when it was not set before.
    pub fn insert(&mut self, arm: u32) -> bool {
        let w = arm as usize / 64;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let bit = 1u64 << (arm % 64);
        let fresh = self.words[w] & bit == 0;
        if fresh {
            self.words[w] |= bit;
            self.count += 1;
        }
        fresh
    }

    /// Would `arms` add anything to the map?
    pub fn is_new(&self, arms: &[u32]) -> bool {
        arms.iter().any(|a| !self.contains(*a))
    }

    /// Merges a run's arms; true when at least one was new.
    pub fn record(&mut self, result: &ExecResult) -> bool {
        self.merge(&result.coverage)
    }

    pub fn merge(&mut self, arms: &[u32]) -> bool {
        let mut fresh = false;
        for &a in arms {
            fresh |= self.insert(a);
        }
        fresh
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn arms(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for (w, bits) in self.words.iter().enumerate() {
            let mut b = *bits;
            while b != 0 {
                out.push(w as u32 * 64 + b.trailing_zeros());
                b &= b - 1;
            }
        }
        out
    }

    /// Hex dump of the bitmap, one 64-arm word per line.
    pub fn dump(&self) -> String {
        self.words.iter().map(|w| format!("{w:016x}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_is_idempotent() {
        let mut m = CoverageMap::new(10);
        assert!(m.merge(&[1, 3]));
        assert!(!m.merge(&[1, 3]));
        assert!(m.merge(&[2]));
        assert_eq!(m.count(), 3);
        assert_eq!(m.arms(), vec![1, 2, 3]);
    }
}
