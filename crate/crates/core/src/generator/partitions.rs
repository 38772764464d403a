// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use num_bigint::BigUint;

use super::GenError;
use crate::net::{NodeId, Partition};

/// All partitions of `instances` elements into exactly `parts` non-empty
/// cells, in restricted-growth-string order.
#[derive(Clone, Debug)]
pub struct PartitionIter {
    rgs: Vec<usize>,
    parts: usize,
    done: bool,
}

impl PartitionIter {
    pub fn new(instances: usize, parts: usize) -> Result<Self, GenError> {
        if parts == 0 || parts > instances {
            return Err(GenError::PartitionsOutOfRange { parts, instances });
        }
        // Smallest string: zeros, then 1, 2, .., parts-1 at the tail.
        let mut rgs = vec![0; instances];
        for k in 1..parts {
            rgs[instances - parts + k] = k;
        }
        Ok(Self { rgs, parts, done: false })
    }

    fn advance(&mut self) -> bool {
        let n = self.rgs.len();
        let mut prefix_max = vec![0usize; n];
        let mut m = 0;
        for (i, &v) in self.rgs.iter().enumerate() {
            m = m.max(v);
            prefix_max[i] = m;
        }
        for i in (1..n).rev() {
            let before = prefix_max[i - 1];
            let limit = (before + 1).min(self.parts - 1);
            let mut v = self.rgs[i] + 1;
            while v <= limit {
                let m = before.max(v);
                let remaining = n - 1 - i;
                if remaining >= self.parts - 1 - m {
                    self.rgs[i] = v;
                    // Minimal feasible suffix.
                    let fill_from = n - (self.parts - 1 - m);
                    for j in i + 1..n {
                        self.rgs[j] = if j >= fill_from { m + 1 + (j - fill_from) } else { 0 };
                    }
                    return true;
                }
                v += 1;
            }
        }
        false
    }

    fn current(&self) -> Partition {
        let mut cells = vec![Vec::new(); self.parts];
        for (i, &c) in self.rgs.iter().enumerate() {
            cells[c].push(NodeId(i));
        }
        Partition::new(cells)
    }
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let out = self.current();
        if !self.advance() {
            self.done = true;
        }
        Some(out)
    }
}

pub fn enumerate_partitions(instances: usize, parts: usize) -> Result<PartitionIter, GenError> {
    PartitionIter::new(instances, parts)
}

/// Stirling number of the second kind by the explicit sum
/// S(n,k) = 1/k! * sum_j (-1)^j C(k,j) (k-j)^n.
pub fn stirling2(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    if n == 0 {
        return BigUint::from(1u32);
    }
    let mut pos = BigUint::from(0u32);
    let mut neg = BigUint::from(0u32);
    let mut binom = BigUint::from(1u32);
    for j in 0..=k {
        let term = &binom * BigUint::from((k - j) as u64).pow(n as u32);
        if j % 2 == 0 {
            pos += term;
        } else {
            neg += term;
        }
        binom = binom * BigUint::from((k - j) as u64) / BigUint::from((j + 1) as u64);
    }
    let fact: BigUint = (1..=k as u64).map(BigUint::from).product();
    (pos - neg) / fact
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn count(n: usize, p: usize) -> usize {
        enumerate_partitions(n, p).unwrap().count()
    }

    #[test]
    fn table_counts() {
        assert_eq!(count(5, 2), 15);
        assert_eq!(count(5, 3), 25);
        assert_eq!(count(9, 2), 255);
        assert_eq!(count(9, 3), 3025);
        assert_eq!(count(4, 4), 1);
        assert_eq!(count(6, 2), 31);
    }

    #[test]
    fn out_of_range() {
        assert!(enumerate_partitions(4, 0).is_err());
        assert!(enumerate_partitions(4, 5).is_err());
    }

    #[test]
    fn no_duplicates_and_all_covering() {
        let all: Vec<Partition> = enumerate_partitions(7, 3).unwrap().collect();
        let set: HashSet<Partition> = all.iter().cloned().collect();
        assert_eq!(set.len(), all.len());
        for p in &all {
            assert_eq!(p.cells().len(), 3);
            assert!(p.validate(7).is_ok());
        }
    }

    #[test]
    fn first_and_last_in_rgs_order() {
        let all: Vec<Partition> = enumerate_partitions(4, 2).unwrap().collect();
        // 0001 -> {0,1,2},{3}; 0111 -> {0},{1,2,3}
        assert_eq!(all[0], Partition::new(vec![vec![NodeId(0), NodeId(1), NodeId(2)], vec![NodeId(3)]]));
        assert_eq!(all.last().unwrap(), &Partition::new(vec![vec![NodeId(0)], vec![NodeId(1), NodeId(2), NodeId(3)]]));
    }

    #[test]
    fn explicit_sum_matches_recurrence() {
        // Oracle: S(n,k) = k S(n-1,k) + S(n-1,k-1).
        let mut s = vec![vec![0u64; 12]; 12];
        s[0][0] = 1;
        for n in 1..12 {
            for k in 1..=n {
                s[n][k] = k as u64 * s[n - 1][k] + s[n - 1][k - 1];
            }
        }
        for n in 0..12 {
            for k in 0..=n {
                assert_eq!(stirling2(n, k), BigUint::from(s[n][k]), "S({n},{k})");
            }
        }
    }
}
