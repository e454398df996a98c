//! Ring perception and aromaticity.
//!
//! Rings are the relevant cycles of the graph (the union of all minimum
//! cycle bases). An atom is an aromaticity candidate when it sits in a ring,
//! carries at most one multiple bond and can donate zero, one or two
//! electrons to the pi system. A ring, or a bond-connected combination of
//! fused rings, is aromatic when all its atoms are candidates and the
//! electron count is 2 or 4n+2. For a combination of several rings only the
//! bonds on its perimeter become aromatic. Triple bonds keep their order.

use crate::graph::{Element, MoleculeGraph};

/// Upper bound on simple-cycle enumeration before giving up on exotic cages.
const MAX_CYCLES: usize = 20_000;
/// Largest number of rings combined when testing fused systems.
const MAX_FUSED_COMBINATION: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ring {
    /// Atoms in cyclic order.
    pub atoms: Vec<usize>,
    /// Bond indices of the ring.
    pub bonds: Vec<usize>,
}

impl Ring {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Marks bonds that lie on some cycle.
pub fn cyclic_bonds(g: &MoleculeGraph) -> Vec<bool> {
    // A bond is cyclic iff its endpoints stay connected without it.
    let n = g.atom_count();
    let mut out = vec![false; g.bonds().len()];
    for (idx, bond) in g.bonds().iter().enumerate() {
        let mut seen = vec![false; n];
        let mut stack = vec![bond.a];
        seen[bond.a] = true;
        while let Some(v) = stack.pop() {
            for &(nb, bi) in g.neighbors(v) {
                if bi != idx && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        out[idx] = seen[bond.b];
    }
    out
}

/// All simple cycles, each reported once, smallest first. Returns `None`
/// when the count exceeds [`MAX_CYCLES`].
fn simple_cycles(g: &MoleculeGraph, cyclic: &[bool]) -> Option<Vec<Ring>> {
    let n = g.atom_count();
    let mut cycles = Vec::new();
    // Each cycle is found from its lowest atom, walking to a higher neighbor
    // first and closing through a neighbor higher than the first step.
    for start in 0..n {
        let mut path = vec![start];
        let mut path_bonds = Vec::new();
        let mut on_path = vec![false; n];
        on_path[start] = true;
        if !extend(g, cyclic, start, &mut path, &mut path_bonds, &mut on_path, &mut cycles) {
            return None;
        }
    }
    cycles.sort_by(|a: &Ring, b: &Ring| a.len().cmp(&b.len()).then_with(|| a.atoms.cmp(&b.atoms)));
    Some(cycles)
}

fn extend(
    g: &MoleculeGraph,
    cyclic: &[bool],
    start: usize,
    path: &mut Vec<usize>,
    path_bonds: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Ring>,
) -> bool {
    let v = *path.last().unwrap();
    for &(nb, bi) in g.neighbors(v) {
        if !cyclic[bi] || nb < start {
            continue;
        }
        if nb == start {
            // close: require at least 3 atoms and orientation path[1] < last
            if path.len() >= 3 && path[1] < v {
                let mut bonds = path_bonds.clone();
                bonds.push(bi);
                out.push(Ring { atoms: path.clone(), bonds });
                if out.len() > MAX_CYCLES {
                    return false;
                }
            }
            continue;
        }
        if on_path[nb] {
            continue;
        }
        on_path[nb] = true;
        path.push(nb);
        path_bonds.push(bi);
        let ok = extend(g, cyclic, start, path, path_bonds, on_path, out);
        path.pop();
        path_bonds.pop();
        on_path[nb] = false;
        if !ok {
            return false;
        }
    }
    true
}

/// GF(2) elimination basis over bond-incidence vectors.
struct CycleSpace {
    /// Reduced rows keyed by pivot bit.
    rows: Vec<(usize, Vec<u64>)>,
}

impl CycleSpace {
    fn new() -> Self {
        Self { rows: Vec::new() }
    }

    fn reduce(&self, mut v: Vec<u64>) -> Vec<u64> {
        for (pivot, row) in &self.rows {
            if v[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (a, b) in v.iter_mut().zip(row) {
                    *a ^= b;
                }
            }
        }
        v
    }

    fn is_independent(&self, v: &[u64]) -> bool {
        self.reduce(v.to_vec()).iter().any(|&w| w != 0)
    }

    fn insert(&mut self, v: Vec<u64>) {
        let r = self.reduce(v);
        if let Some(pivot) = first_bit(&r) {
            // keep rows fully reduced w.r.t. the new pivot
            for (_, row) in self.rows.iter_mut() {
                if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                    for (a, b) in row.iter_mut().zip(&r) {
                        *a ^= b;
                    }
                }
            }
            self.rows.push((pivot, r));
        }
    }
}

fn first_bit(v: &[u64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(i, &w)| i * 64 + w.trailing_zeros() as usize)
}

fn incidence(ring: &Ring, nbonds: usize) -> Vec<u64> {
    let mut v = vec![0u64; nbonds.div_ceil(64).max(1)];
    for &b in &ring.bonds {
        v[b / 64] |= 1 << (b % 64);
    }
    v
}

/// Relevant cycles: cycles not expressible as a sum of strictly shorter
/// cycles. For ordinary molecules this is the symmetrized smallest set of
/// smallest rings.
pub fn find_rings(g: &MoleculeGraph) -> Vec<Ring> {
    let cyclic = cyclic_bonds(g);
    if !cyclic.iter().any(|&c| c) {
        return Vec::new();
    }
    let nbonds = g.bonds().len();
    let cycles = match simple_cycles(g, &cyclic) {
        Some(c) => c,
        None => return smallest_basis_fallback(g, &cyclic),
    };
    let mut shorter = CycleSpace::new();
    let mut relevant = Vec::new();
    let mut i = 0;
    while i < cycles.len() {
        let len = cycles[i].len();
        let mut j = i;
        while j < cycles.len() && cycles[j].len() == len {
            j += 1;
        }
        let group = &cycles[i..j];
        for ring in group {
            if shorter.is_independent(&incidence(ring, nbonds)) {
                relevant.push(ring.clone());
            }
        }
        for ring in group {
            shorter.insert(incidence(ring, nbonds));
        }
        i = j;
    }
    relevant
}

/// Minimum cycle basis from BFS-derived candidate cycles, used only when
/// simple-cycle enumeration explodes.
fn smallest_basis_fallback(g: &MoleculeGraph, cyclic: &[bool]) -> Vec<Ring> {
    let n = g.atom_count();
    let nbonds = g.bonds().len();
    let mut candidates = Vec::new();
    for root in 0..n {
        let mut parent = vec![usize::MAX; n];
        let mut parent_bond = vec![usize::MAX; n];
        let mut depth = vec![usize::MAX; n];
        depth[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(nb, bi) in g.neighbors(v) {
                if cyclic[bi] && depth[nb] == usize::MAX {
                    depth[nb] = depth[v] + 1;
                    parent[nb] = v;
                    parent_bond[nb] = bi;
                    queue.push_back(nb);
                }
            }
        }
        for (bi, bond) in g.bonds().iter().enumerate() {
            if !cyclic[bi] || depth[bond.a] == usize::MAX || depth[bond.b] == usize::MAX {
                continue;
            }
            if parent_bond[bond.a] == bi || parent_bond[bond.b] == bi {
                continue;
            }
            let walk = |mut v: usize| {
                let mut atoms = vec![v];
                let mut bonds = Vec::new();
                while v != root {
                    bonds.push(parent_bond[v]);
                    v = parent[v];
                    atoms.push(v);
                }
                (atoms, bonds)
            };
            let (pa, ba) = walk(bond.a);
            let (pb, bb) = walk(bond.b);
            let shared: Vec<_> = pa.iter().filter(|x| pb.contains(x)).collect();
            if shared.len() != 1 {
                continue;
            }
            let mut atoms: Vec<usize> = pa.iter().rev().copied().collect();
            atoms.extend(pb.iter().take(pb.len() - 1));
            let mut bonds = ba;
            bonds.push(bi);
            bonds.extend(bb);
            candidates.push(Ring { atoms, bonds });
        }
    }
    candidates.sort_by_key(|r| r.len());
    let mut space = CycleSpace::new();
    let mut out = Vec::new();
    for r in candidates {
        let v = incidence(&r, nbonds);
        if space.is_independent(&v) {
            space.insert(v);
            out.push(r);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Donor {
    None,
    Vacant,
    One,
    Two,
}

impl Donor {
    fn electrons(self) -> u32 {
        match self {
            Donor::None | Donor::Vacant => 0,
            Donor::One => 1,
            Donor::Two => 2,
        }
    }
}

fn is_more_electronegative(a: Element, b: Element) -> bool {
    fn chi(e: Element) -> f64 {
        match e {
            Element::C => 2.55,
            Element::N => 3.04,
            Element::O => 3.44,
            Element::F => 3.98,
            Element::Cl => 3.16,
        }
    }
    chi(a) > chi(b)
}

fn donor_type(g: &MoleculeGraph, atom: usize, cyclic: &[bool]) -> Donor {
    let a = g.atoms()[atom];
    let default_valence = a.element.max_valence() as i32;
    if default_valence <= 1 {
        return Donor::None;
    }
    let outer = match a.element {
        Element::C => 4,
        Element::N => 5,
        Element::O => 6,
        _ => return Donor::None,
    };
    let total_degree = g.degree(atom) as i32 + a.hydrogens as i32;
    if total_degree > 3 {
        return Donor::None;
    }
    let lone = outer - default_valence;
    let mut nelec = (default_valence - total_degree) + lone;
    let explicit_valence = g.bond_order_sum(atom) as i32 + a.hydrogens as i32;
    let unsaturation = explicit_valence - total_degree;
    if nelec > 1 && unsaturation > 1 {
        nelec = 1;
    }
    let multiple = g
        .neighbors(atom)
        .iter()
        .any(|&(_, bi)| g.bonds()[bi].order > 1);
    let exocyclic_multiple = g
        .neighbors(atom)
        .iter()
        .find(|&&(_, bi)| g.bonds()[bi].order > 1 && !cyclic[bi])
        .map(|&(nb, _)| nb);
    match nelec {
        n if n < 0 => Donor::None,
        0 => {
            if exocyclic_multiple.is_some() {
                Donor::Vacant
            } else {
                Donor::None
            }
        }
        1 => {
            if let Some(other) = exocyclic_multiple {
                if is_more_electronegative(g.atoms()[other].element, a.element) {
                    Donor::Vacant
                } else {
                    Donor::One
                }
            } else if multiple {
                Donor::One
            } else {
                Donor::None
            }
        }
        _ => {
            if multiple {
                Donor::One
            } else {
                Donor::Two
            }
        }
    }
}

fn is_candidate(g: &MoleculeGraph, atom: usize, donor: Donor) -> bool {
    if donor == Donor::None {
        return false;
    }
    let multiples = g
        .neighbors(atom)
        .iter()
        .filter(|&&(_, bi)| g.bonds()[bi].order > 1)
        .count();
    multiples <= 1
}

fn huckel(electrons: u32) -> bool {
    electrons == 2 || (electrons >= 6 && (electrons - 2) % 4 == 0)
}

/// Computes aromatic flags `(atoms, bonds)` for `g` without modifying it.
pub fn aromatic_flags(g: &MoleculeGraph) -> (Vec<bool>, Vec<bool>) {
    let n = g.atom_count();
    let nbonds = g.bonds().len();
    let mut atom_flags = vec![false; n];
    let mut bond_flags = vec![false; nbonds];
    let rings = find_rings(g);
    if rings.is_empty() {
        return (atom_flags, bond_flags);
    }
    let cyclic = cyclic_bonds(g);
    let donors: Vec<Donor> = (0..n).map(|i| donor_type(g, i, &cyclic)).collect();
    let cand: Vec<bool> = (0..n).map(|i| is_candidate(g, i, donors[i])).collect();
    let cand_rings: Vec<&Ring> = rings
        .iter()
        .filter(|r| r.atoms.iter().all(|&a| cand[a]))
        .collect();
    if cand_rings.is_empty() {
        return (atom_flags, bond_flags);
    }

    // fused systems: rings sharing a bond
    let shares_bond = |a: &Ring, b: &Ring| a.bonds.iter().any(|x| b.bonds.contains(x));
    let m = cand_rings.len();
    let mut system = vec![usize::MAX; m];
    let mut next_system = 0;
    for i in 0..m {
        if system[i] != usize::MAX {
            continue;
        }
        system[i] = next_system;
        let mut stack = vec![i];
        while let Some(r) = stack.pop() {
            for j in 0..m {
                if system[j] == usize::MAX && shares_bond(cand_rings[r], cand_rings[j]) {
                    system[j] = next_system;
                    stack.push(j);
                }
            }
        }
        next_system += 1;
    }

    for sys in 0..next_system {
        let members: Vec<&Ring> = (0..m).filter(|&i| system[i] == sys).map(|i| cand_rings[i]).collect();
        let mut all_bonds: Vec<usize> = members.iter().flat_map(|r| r.bonds.iter().copied()).collect();
        all_bonds.sort_unstable();
        all_bonds.dedup();
        let mut done = vec![false; nbonds];
        let max_size = members.len().min(MAX_FUSED_COMBINATION);
        'sizes: for size in 1..=max_size {
            if all_bonds.iter().all(|&b| done[b]) {
                break;
            }
            let mut comb: Vec<usize> = (0..size).collect();
            loop {
                let chosen: Vec<&Ring> = comb.iter().map(|&i| members[i]).collect();
                if size == 1 || combination_connected(&chosen, &shares_bond) {
                    let mut union: Vec<usize> = chosen.iter().flat_map(|r| r.atoms.iter().copied()).collect();
                    union.sort_unstable();
                    union.dedup();
                    let electrons: u32 = union.iter().map(|&a| donors[a].electrons()).sum();
                    if huckel(electrons) {
                        for &a in &union {
                            atom_flags[a] = true;
                        }
                        for r in &chosen {
                            for &b in &r.bonds {
                                let count = chosen.iter().filter(|o| o.bonds.contains(&b)).count();
                                if count == 1 {
                                    done[b] = true;
                                    if g.bonds()[b].order < 3 {
                                        bond_flags[b] = true;
                                    }
                                }
                            }
                        }
                    }
                }
                if !next_combination(&mut comb, members.len()) {
                    continue 'sizes;
                }
            }
        }
    }
    (atom_flags, bond_flags)
}

fn combination_connected(rings: &[&Ring], shares_bond: &dyn Fn(&Ring, &Ring) -> bool) -> bool {
    let mut reached = vec![false; rings.len()];
    reached[0] = true;
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        for j in 0..rings.len() {
            if !reached[j] && shares_bond(rings[i], rings[j]) {
                reached[j] = true;
                stack.push(j);
            }
        }
    }
    reached.into_iter().all(|r| r)
}

fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Sets aromatic flags on `g` in place.
pub fn perceive(g: &mut MoleculeGraph) {
    if !g.is_valid() {
        return;
    }
    let (atoms, bonds) = aromatic_flags(g);
    g.set_aromatic(&atoms, &bonds);
}

/// Size of the largest relevant ring, 0 when acyclic.
pub fn largest_ring_size(g: &MoleculeGraph) -> usize {
    find_rings(g).iter().map(Ring::len).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Element::*;

    fn ring_graph(elements: &[Element], orders: &[u8]) -> MoleculeGraph {
        let n = elements.len();
        let bonds: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, orders[i])).collect();
        let mut g = MoleculeGraph::from_parts(elements, &bonds).unwrap();
        perceive(&mut g);
        g
    }

    #[test]
    fn benzene_is_aromatic() {
        let g = ring_graph(&[C; 6], &[2, 1, 2, 1, 2, 1]);
        assert!(g.atoms().iter().all(|a| a.aromatic));
        assert!(g.bonds().iter().all(|b| b.aromatic));
    }

    #[test]
    fn cyclobutadiene_is_not() {
        let g = ring_graph(&[C; 4], &[2, 1, 2, 1]);
        assert!(g.atoms().iter().all(|a| !a.aromatic));
    }

    #[test]
    fn furan_and_cyclic_ozone() {
        let g = ring_graph(&[C, C, O, C, C], &[2, 1, 1, 2, 1]);
        assert!(g.atoms().iter().all(|a| a.aromatic));
        let g = ring_graph(&[O, O, O], &[1, 1, 1]);
        assert!(g.atoms().iter().all(|a| a.aromatic));
    }

    #[test]
    fn saturated_ring_is_not() {
        let g = ring_graph(&[C; 6], &[1; 6]);
        assert!(g.atoms().iter().all(|a| !a.aromatic));
        assert_eq!(find_rings(&g).len(), 1);
    }

    #[test]
    fn fused_perimeter_leaves_shared_bond_single() {
        // two fused four-rings: C0=C1, C1-C2, C2=C3, C3-C4, C4-C1, C4=C5, C5-C0
        let mut g = MoleculeGraph::from_parts(
            &[C; 6],
            &[(0, 1, 2), (1, 2, 1), (2, 3, 2), (3, 4, 1), (4, 1, 1), (4, 5, 2), (5, 0, 1)],
        )
        .unwrap();
        perceive(&mut g);
        assert!(g.atoms().iter().all(|a| a.aromatic));
        let shared = g.bond_between(1, 4).unwrap();
        assert!(!shared.aromatic);
        assert_eq!(g.bonds().iter().filter(|b| b.aromatic).count(), 6);
    }

    #[test]
    fn relevant_cycles_of_bicycle() {
        // bicyclo[2.2.0]: two fused four rings; envelope six-ring is not relevant
        let g = MoleculeGraph::from_parts(
            &[C; 6],
            &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 4, 1), (4, 1, 1), (4, 5, 1), (5, 0, 1)],
        )
        .unwrap();
        let rings = find_rings(&g);
        assert_eq!(rings.len(), 2);
        assert!(rings.iter().all(|r| r.len() == 4));
    }
}
