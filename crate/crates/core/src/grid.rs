//! Experiment-grid helpers.

use alloc::vec::Vec;

use crate::hash::hash64_pair;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot choose {k} of {pool} items")]
pub struct CombinationError {
    pub k: usize,
    pub pool: usize,
}

/// All `k`-subsets of `pool`, each in pool order, listed lexicographically by
/// position.
pub fn enumerate_combinations<T: Clone>(pool: &[T], k: usize) -> Result<Vec<Vec<T>>, CombinationError> {
    let n = pool.len();
    if k > n {
        return Err(CombinationError { k, pool: n });
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| pool[i].clone()).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return Ok(out);
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Seed for the cell at `ordinal`; appending cells leaves earlier seeds alone.
pub fn cell_seed(suite_seed: u64, ordinal: usize) -> u64 {
    hash64_pair(suite_seed, ordinal as u64)
}
