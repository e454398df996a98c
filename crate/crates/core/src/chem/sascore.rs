//! Synthetic accessibility score on the 1 (easy) to 10 (hard) scale.
//!
//! Fragment contributions come from the table distributed with RDKit's
//! SA_Score contribution (`fpscores.pkl.gz`), re-encoded in
//! `data/sa_fragments.bin`: magic `SAFRAG01`, group and id counts as `u32`,
//! one `f64` score per group, then ids in ascending order as LEB128 deltas,
//! each followed by its `u16` group index. Fragments missing from the table
//! score -4.

use std::sync::OnceLock;

use super::morgan::morgan_counts;
use crate::aromatic::{find_rings, Ring};
use crate::canon::symmetry_classes;
use crate::error::ChemError;
use crate::graph::{Element, MoleculeGraph};

const TABLE: &[u8] = include_bytes!("../../data/sa_fragments.bin");

struct FragmentTable {
    ids: Vec<u32>,
    groups: Vec<u16>,
    scores: Vec<f64>,
}

impl FragmentTable {
    fn decode(bytes: &[u8]) -> Self {
        assert_eq!(&bytes[..8], b"SAFRAG01", "fragment table magic");
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let (ngroups, nids) = (u32_at(8) as usize, u32_at(12) as usize);
        let mut at = 16;
        let scores = (0..ngroups)
            .map(|i| f64::from_le_bytes(bytes[at + 8 * i..at + 8 * i + 8].try_into().unwrap()))
            .collect();
        at += 8 * ngroups;
        let mut ids = Vec::with_capacity(nids);
        let mut groups = Vec::with_capacity(nids);
        let mut prev = 0u32;
        for _ in 0..nids {
            let (mut delta, mut shift) = (0u32, 0);
            loop {
                let b = bytes[at];
                at += 1;
                delta |= ((b & 0x7f) as u32) << shift;
                if b & 0x80 == 0 {
                    break;
                }
                shift += 7;
            }
            prev += delta;
            ids.push(prev);
            groups.push(u16::from_le_bytes([bytes[at], bytes[at + 1]]));
            at += 2;
        }
        assert_eq!(at, bytes.len(), "fragment table length");
        Self { ids, groups, scores }
    }

    fn score(&self, id: u32) -> f64 {
        match self.ids.binary_search(&id) {
            Ok(i) => self.scores[self.groups[i] as usize],
            Err(_) => -4.0,
        }
    }
}

fn table() -> &'static FragmentTable {
    static T: OnceLock<FragmentTable> = OnceLock::new();
    T.get_or_init(|| FragmentTable::decode(TABLE))
}

/// Counts entering the complexity penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Complexity {
    pub chiral_centers: usize,
    pub spiro_atoms: usize,
    pub bridgehead_atoms: usize,
    pub macrocycles: usize,
}

impl Complexity {
    pub fn of(g: &MoleculeGraph) -> Self {
        let rings = find_rings(g);
        Self {
            chiral_centers: chiral_centers(g, &rings),
            spiro_atoms: spiro_atoms(g, &rings),
            bridgehead_atoms: bridgeheads(g, &rings).iter().filter(|&&b| b).count(),
            macrocycles: rings.iter().filter(|r| r.len() > 8).count(),
        }
    }
}

fn spiro_atoms(g: &MoleculeGraph, rings: &[Ring]) -> usize {
    let mut spiro = vec![false; g.atom_count()];
    for (i, r) in rings.iter().enumerate() {
        for s in &rings[i + 1..] {
            let shared: Vec<usize> = r.atoms.iter().copied().filter(|a| s.atoms.contains(a)).collect();
            if shared.len() == 1 {
                spiro[shared[0]] = true;
            }
        }
    }
    spiro.into_iter().filter(|&s| s).count()
}

/// Ends of bond paths shared by two rings that have more than one bond in
/// common.
fn bridgeheads(g: &MoleculeGraph, rings: &[Ring]) -> Vec<bool> {
    let mut out = vec![false; g.atom_count()];
    for (i, r) in rings.iter().enumerate() {
        for s in &rings[i + 1..] {
            let shared: Vec<usize> = r.bonds.iter().copied().filter(|b| s.bonds.contains(b)).collect();
            if shared.len() < 2 {
                continue;
            }
            let mut touches = vec![0u8; g.atom_count()];
            for &b in &shared {
                touches[g.bonds()[b].a] += 1;
                touches[g.bonds()[b].b] += 1;
            }
            for (a, &t) in touches.iter().enumerate() {
                if t == 1 {
                    out[a] = true;
                }
            }
        }
    }
    out
}

/// Tetrahedral atoms whose neighbours are pairwise distinguishable. Carbon
/// qualifies with three or four heavy neighbours and at most one hydrogen;
/// three-coordinate nitrogen only in a three-membered ring or at a
/// bridgehead, and not next to a multiple bond (its lone pair would be
/// conjugated). Ring-dependent (para-like) stereo is not counted.
fn conjugated(g: &MoleculeGraph, atom: usize) -> bool {
    g.neighbors(atom).iter().any(|&(nb, _)| {
        g.atoms()[nb].aromatic || g.neighbors(nb).iter().any(|&(_, b)| g.bonds()[b].order > 1 || g.bonds()[b].aromatic)
    })
}

fn chiral_centers(g: &MoleculeGraph, rings: &[Ring]) -> usize {
    let classes = symmetry_classes(g);
    let bridge = bridgeheads(g, rings);
    let mut count = 0;
    for (i, atom) in g.atoms().iter().enumerate() {
        if atom.aromatic || atom.hydrogens > 1 || g.degree(i) < 3 || g.bond_order_sum(i) != g.degree(i) as u8 {
            continue;
        }
        let legal = match atom.element {
            Element::C => g.degree(i) + atom.hydrogens as usize == 4,
            Element::N => {
                g.degree(i) == 3
                    && !conjugated(g, i)
                    && (bridge[i] || rings.iter().any(|r| r.len() == 3 && r.atoms.contains(&i)))
            }
            _ => false,
        };
        if !legal {
            continue;
        }
        let mut nbr: Vec<u32> = g.neighbors(i).iter().map(|&(nb, _)| classes[nb]).collect();
        nbr.sort_unstable();
        if nbr.windows(2).all(|w| w[0] != w[1]) {
            count += 1;
        }
    }
    count
}

pub fn sa_score(g: &MoleculeGraph) -> Result<f64, ChemError> {
    if !g.is_valid() {
        return Err(ChemError::InvalidMolecule);
    }
    let fp = morgan_counts(g, 2);
    let t = table();
    let (mut total, mut occurrences) = (0.0, 0u32);
    for (&id, &count) in &fp {
        total += t.score(id) * count as f64;
        occurrences += count;
    }
    let fragment = total / occurrences as f64;

    let atoms = g.atom_count() as f64;
    let c = Complexity::of(g);
    let log_plus_one = |n: usize| (n as f64 + 1.0).log10();
    let macrocycle = if c.macrocycles > 0 { 2f64.log10() } else { 0.0 };
    let complexity = -(atoms.powf(1.005) - atoms)
        - log_plus_one(c.chiral_centers)
        - log_plus_one(c.spiro_atoms)
        - log_plus_one(c.bridgehead_atoms)
        - macrocycle;
    let distinct = fp.len() as f64;
    let density = if atoms > distinct { 0.5 * (atoms / distinct).ln() } else { 0.0 };

    let raw = fragment + complexity + density;
    let (lo, hi) = (-4.0, 2.5);
    let mut score = 11.0 - (raw - lo + 1.0) / (hi - lo) * 9.0;
    if score > 8.0 {
        score = 8.0 + (score - 8.0).ln();
    }
    Ok(score.clamp(1.0, 10.0))
}
