//! Unfolded Morgan count fingerprint with RDKit's 32-bit environment ids.
//!
//! Atom invariants hash (atomic number, total degree, total H, charge,
//! mass delta, ring flag). Each round hashes the layer number, the atom's
//! previous invariant and its sorted (bond type, neighbour invariant) pairs.
//! An environment covering the same bond set as one already seen is dropped
//! and its atom stops growing. Hashing is boost's `hash_combine` on `u32`.

use std::collections::BTreeMap;

use crate::aromatic::cyclic_bonds;
use crate::graph::MoleculeGraph;

fn combine(seed: u32, v: u32) -> u32 {
    seed ^ v.wrapping_add(0x9e37_79b9).wrapping_add(seed << 6).wrapping_add(seed >> 2)
}

fn hash_all(values: &[u32]) -> u32 {
    values.iter().fold(0, |seed, &v| combine(seed, v))
}

fn bond_code(g: &MoleculeGraph, bond: usize) -> u32 {
    let b = &g.bonds()[bond];
    if b.aromatic {
        12
    } else {
        b.order as u32
    }
}

/// Environment id to occurrence count.
pub fn morgan_counts(g: &MoleculeGraph, radius: usize) -> BTreeMap<u32, u32> {
    let n = g.atom_count();
    let words = g.bonds().len().div_ceil(64).max(1);
    let cyclic = cyclic_bonds(g);
    let mut counts = BTreeMap::new();
    let mut current: Vec<u32> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let total_degree = g.degree(i) as u32 + a.hydrogens as u32;
            let mut parts = vec![a.element.atomic_number() as u32, total_degree, a.hydrogens as u32, 0, 0];
            if g.neighbors(i).iter().any(|&(_, b)| cyclic[b]) {
                parts.push(1);
            }
            hash_all(&parts)
        })
        .collect();
    for &id in &current {
        *counts.entry(id).or_insert(0) += 1;
    }
    let mut envs = vec![vec![0u64; words]; n];
    // the empty environment of an isolated atom never counts again
    let mut seen: Vec<Vec<u64>> = vec![vec![0u64; words]];
    let mut dead = vec![false; n];
    for layer in 0..radius {
        let mut next = current.clone();
        let mut next_envs = envs.clone();
        let mut round: Vec<(Vec<u64>, u32, usize)> = Vec::new();
        for i in 0..n {
            if dead[i] {
                continue;
            }
            let mut env = envs[i].clone();
            let mut nbrs: Vec<(u32, u32)> = Vec::with_capacity(g.degree(i));
            for &(nb, b) in g.neighbors(i) {
                env[b / 64] |= 1 << (b % 64);
                for (w, x) in env.iter_mut().zip(&envs[nb]) {
                    *w |= x;
                }
                nbrs.push((bond_code(g, b), current[nb]));
            }
            nbrs.sort_unstable();
            let mut inv = combine(layer as u32, current[i]);
            for (bt, c) in nbrs {
                inv = combine(inv, hash_all(&[bt, c]));
            }
            next[i] = inv;
            next_envs[i] = env.clone();
            round.push((env, inv, i));
        }
        round.sort();
        for (env, inv, i) in round {
            if seen.contains(&env) {
                dead[i] = true;
            } else {
                *counts.entry(inv).or_insert(0) += 1;
                seen.push(env);
            }
        }
        current = next;
        envs = next_envs;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Element::*;

    #[test]
    fn ethanol_matches_reference_ids() {
        let g = MoleculeGraph::from_parts(&[C, C, O], &[(0, 1, 1), (1, 2, 1)]).unwrap();
        let ids: Vec<u32> = morgan_counts(&g, 2).into_keys().collect();
        assert_eq!(ids, vec![864662311, 1535166686, 2245384272, 2246728737, 3542456614, 4018048386]);
    }

    #[test]
    fn single_atom_has_one_environment() {
        let g = MoleculeGraph::from_parts(&[C], &[]).unwrap();
        assert_eq!(morgan_counts(&g, 2).into_iter().collect::<Vec<_>>(), vec![(2246733040, 1)]);
    }
}
