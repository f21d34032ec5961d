use serde::{Deserialize, Serialize};

use super::BinaryCode;
use crate::{Error, Result};

/// ⌈√n⌉ in exact integer arithmetic.
pub fn ceil_sqrt(n: usize) -> usize {
    let r = n.isqrt();
    if r * r == n {
        r
    } else {
        r + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    /// Root-to-node path in the code trie; may be empty.
    pub prefix: Vec<bool>,
    /// Sample indices, ascending.
    pub members: Vec<usize>,
}

impl Subset {
    pub fn prefix_ones(&self) -> usize {
        self.prefix.iter().filter(|b| **b).count()
    }

    pub fn matches(&self, code: &BinaryCode) -> bool {
        self.prefix.len() <= code.len() && self.prefix.iter().enumerate().all(|(j, &b)| code.get(j) == b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixPartition {
    pub subsets: Vec<Subset>,
    pub n: usize,
    pub code_len: usize,
    /// ⌈√n⌉, the largest allowed subset.
    pub cap: usize,
}

impl PrefixPartition {
    pub fn k(&self) -> usize {
        self.subsets.len()
    }

    pub fn max_subset_size(&self) -> usize {
        self.subsets.iter().map(|s| s.members.len()).max().unwrap_or(0)
    }

    /// `(subset, position within subset)` for every sample.
    pub fn locate(&self) -> Vec<(usize, usize)> {
        let mut at = vec![(usize::MAX, usize::MAX); self.n];
        for (j, s) in self.subsets.iter().enumerate() {
            for (i, &m) in s.members.iter().enumerate() {
                at[m] = (j, i);
            }
        }
        at
    }

    /// √n · code length, the recorded ceiling on K.
    pub fn k_bound(&self) -> f64 {
        (self.n as f64).sqrt() * self.code_len as f64
    }
}

const NONE: u32 = 0;

struct Node {
    /// Child index per bit; `NONE` (the root's index) marks a missing child.
    children: [u32; 2],
    count: u32,
    /// Sample stored at a leaf.
    sample: u32,
}

/// Partitions distinct equal-length codes by trie prefix: selects the nodes
/// whose subtree holds at most ⌈√n⌉ codes while every proper ancestor holds
/// more. Subsets come out in lexicographic prefix order.
pub fn prefix_partition(codes: &[BinaryCode]) -> Result<PrefixPartition> {
    let n = codes.len();
    let code_len = codes
        .first()
        .ok_or_else(|| Error::InvalidInput("no codes to partition".into()))?
        .len();
    if u32::try_from(n).is_err() {
        return Err(Error::InvalidInput(format!("{n} codes exceed the trie capacity")));
    }
    let mut trie = vec![Node {
        children: [NONE; 2],
        count: 0,
        sample: 0,
    }];
    for (i, code) in codes.iter().enumerate() {
        if code.len() != code_len {
            return Err(Error::DimensionMismatch {
                expected: code_len,
                got: code.len(),
            });
        }
        let mut at = 0usize;
        trie[0].count += 1;
        for j in 0..code_len {
            let bit = usize::from(code.get(j));
            let next = trie[at].children[bit];
            at = if next == NONE {
                trie.push(Node {
                    children: [NONE; 2],
                    count: 0,
                    sample: 0,
                });
                let id = (trie.len() - 1) as u32;
                trie[at].children[bit] = id;
                id as usize
            } else {
                next as usize
            };
            trie[at].count += 1;
        }
        if trie[at].count > 1 {
            return Err(Error::Precondition(format!(
                "codes {} and {i} are identical",
                trie[at].sample
            )));
        }
        trie[at].sample = i as u32;
    }

    let cap = ceil_sqrt(n);
    let mut subsets = Vec::new();
    let mut path = Vec::with_capacity(code_len);
    select(&trie, 0, cap, &mut path, &mut subsets);
    Ok(PrefixPartition {
        subsets,
        n,
        code_len,
        cap,
    })
}

fn select(trie: &[Node], at: usize, cap: usize, path: &mut Vec<bool>, out: &mut Vec<Subset>) {
    if trie[at].count as usize <= cap {
        let mut members = Vec::with_capacity(trie[at].count as usize);
        collect_leaves(trie, at, &mut members);
        members.sort_unstable();
        out.push(Subset {
            prefix: path.clone(),
            members,
        });
        return;
    }
    for bit in [false, true] {
        let child = trie[at].children[usize::from(bit)];
        if child != NONE {
            path.push(bit);
            select(trie, child as usize, cap, path, out);
            path.pop();
        }
    }
}

fn collect_leaves(trie: &[Node], at: usize, out: &mut Vec<usize>) {
    let [c0, c1] = trie[at].children;
    if c0 == NONE && c1 == NONE {
        out.push(trie[at].sample as usize);
        return;
    }
    for c in [c0, c1] {
        if c != NONE {
            collect_leaves(trie, c as usize, out);
        }
    }
}
