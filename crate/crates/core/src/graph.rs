//! Molecular graphs produced by the decoder.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Elements reachable from the built-in vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    C,
    N,
    O,
    F,
    Cl,
}

impl Element {
    /// Maximum number of bonds (sum of bond orders) the atom may form.
    pub fn max_valence(self) -> u8 {
        match self {
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::F | Element::Cl => 1,
        }
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::Cl => 17,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Cl => "Cl",
        }
    }

    pub fn aromatic_symbol(self) -> &'static str {
        match self {
            Element::C => "c",
            Element::N => "n",
            Element::O => "o",
            Element::F => "f",
            Element::Cl => "cl",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "F" => Element::F,
            "Cl" => Element::Cl,
            _ => return None,
        })
    }

    /// Average atomic mass, used by descriptor proxies.
    pub fn mass(self) -> f64 {
        match self {
            Element::C => 12.011,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::F => 18.998,
            Element::Cl => 35.453,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    /// Implicit hydrogens: max valence minus the bond-order sum.
    pub hydrogens: u8,
    pub aromatic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    /// Kekulé bond order, 1 to 3.
    pub order: u8,
    pub aromatic: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    Invalid(String),
}

/// Decoded chemical graph with hydrogen counts derived from valence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoleculeGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    validity: Validity,
}

impl MoleculeGraph {
    pub fn invalid(reason: impl Into<String>) -> Self {
        Self {
            atoms: Vec::new(),
            bonds: Vec::new(),
            adjacency: Vec::new(),
            validity: Validity::Invalid(reason.into()),
        }
    }

    /// Builds a graph from heavy atoms and Kekulé bonds `(a, b, order)`.
    /// Hydrogen counts are filled from the remaining valence; aromatic flags
    /// start cleared. Returns `None` when a bond is malformed (self bond,
    /// duplicate pair, order outside 1..=3, index out of range) or an atom
    /// exceeds its valence.
    pub fn from_parts(elements: &[Element], bonds: &[(usize, usize, u8)]) -> Option<Self> {
        let n = elements.len();
        let mut used = vec![0u8; n];
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut out = Vec::with_capacity(bonds.len());
        for (idx, &(a, b, order)) in bonds.iter().enumerate() {
            if a >= n || b >= n || a == b || !(1..=3).contains(&order) {
                return None;
            }
            if adjacency[a].iter().any(|&(nb, _)| nb == b) {
                return None;
            }
            used[a] += order;
            used[b] += order;
            adjacency[a].push((b, idx));
            adjacency[b].push((a, idx));
            out.push(Bond { a, b, order, aromatic: false });
        }
        let mut atoms = Vec::with_capacity(n);
        for (i, &element) in elements.iter().enumerate() {
            let cap = element.max_valence();
            if used[i] > cap {
                return None;
            }
            atoms.push(Atom { element, hydrogens: cap - used[i], aromatic: false });
        }
        let validity = if n == 0 {
            Validity::Invalid("empty molecule".into())
        } else {
            Validity::Valid
        };
        Some(Self { atoms, bonds: out, adjacency, validity })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn validity(&self) -> &Validity {
        &self.validity
    }

    pub fn is_valid(&self) -> bool {
        matches!(self.validity, Validity::Valid)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Compact encoding of atoms and bonds in stored order. Equal keys mean
    /// identical labelled graphs, so it can stand in for the graph as a memo
    /// key ahead of canonicalization.
    pub fn structure_key(&self) -> Vec<u8> {
        let mut key = Vec::with_capacity(2 + self.atoms.len() + 5 * self.bonds.len());
        key.extend_from_slice(&(self.atoms.len() as u16).to_le_bytes());
        for a in &self.atoms {
            key.push(a.element.atomic_number() | (a.hydrogens << 5));
            key.push(a.aromatic as u8);
        }
        for b in &self.bonds {
            key.extend_from_slice(&(b.a as u16).to_le_bytes());
            key.extend_from_slice(&(b.b as u16).to_le_bytes());
            key.push(b.order | ((b.aromatic as u8) << 4));
        }
        key
    }

    /// `(neighbor, bond index)` pairs of `atom`.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, idx)| &self.bonds[idx])
    }

    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for &(nb, _) in &self.adjacency[a] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub(crate) fn set_aromatic(&mut self, atoms: &[bool], bonds: &[bool]) {
        for (atom, &flag) in self.atoms.iter_mut().zip(atoms) {
            atom.aromatic = flag;
        }
        for (bond, &flag) in self.bonds.iter_mut().zip(bonds) {
            bond.aromatic = flag;
        }
    }

    /// Returns a copy with atoms renumbered so that old atom `i` becomes
    /// `perm[i]`. Bond list order follows the new indices.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.atoms.len());
        let mut atoms = self.atoms.clone();
        for (i, atom) in self.atoms.iter().enumerate() {
            atoms[perm[i]] = *atom;
        }
        let mut bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|b| Bond { a: perm[b.a], b: perm[b.b], ..*b })
            .collect();
        bonds.sort_by_key(|b| (b.a.min(b.b), b.a.max(b.b)));
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (idx, b) in bonds.iter().enumerate() {
            adjacency[b.a].push((b.b, idx));
            adjacency[b.b].push((b.a, idx));
        }
        Self { atoms, bonds, adjacency, validity: self.validity.clone() }
    }

    /// Sum of Kekulé bond orders at `atom`.
    pub fn bond_order_sum(&self, atom: usize) -> u8 {
        self.adjacency[atom].iter().map(|&(_, idx)| self.bonds[idx].order).sum()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn molecular_weight(&self) -> f64 {
        const H_MASS: f64 = 1.008;
        self.atoms
            .iter()
            .map(|a| a.element.mass() + a.hydrogens as f64 * H_MASS)
            .sum()
    }
}

impl fmt::Display for MoleculeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match crate::canon::canonicalize(self) {
            Ok(form) => f.write_str(form.as_str()),
            Err(_) => f.write_str("<invalid>"),
        }
    }
}
