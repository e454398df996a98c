//! Folded circular fingerprints and Tanimoto similarity.

use serde::{Deserialize, Serialize};

use super::morgan::morgan_counts;
use crate::error::ChemError;
use crate::graph::MoleculeGraph;

pub const FINGERPRINT_BITS: usize = 1024;
pub const FINGERPRINT_RADIUS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    pub radius: usize,
}

impl Fingerprint {
    pub fn empty(width: usize, radius: usize) -> Self {
        Self { words: vec![0; width.div_ceil(64)], width, radius }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Bits as 0.0/1.0, for linear algebra.
    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.width).map(|i| if self.get(i) { 1.0 } else { 0.0 }).collect()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Radius-3 Morgan fingerprint folded into 1,024 bits (environment id
/// modulo the width), the bit vector RDKit's Morgan generator produces.
pub fn fingerprint(g: &MoleculeGraph) -> Result<Fingerprint, ChemError> {
    if !g.is_valid() {
        return Err(ChemError::InvalidMolecule);
    }
    let mut fp = Fingerprint::empty(FINGERPRINT_BITS, FINGERPRINT_RADIUS);
    for id in morgan_counts(g, FINGERPRINT_RADIUS).into_keys() {
        fp.set(id as usize % FINGERPRINT_BITS);
    }
    Ok(fp)
}

pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, ChemError> {
    if a.width != b.width {
        return Err(ChemError::WidthMismatch(a.width, b.width));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok(if either == 0 { 1.0 } else { both as f64 / either as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfies::decode_molecule;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn hexane_and_hexanol_differ() {
        let hexane = fingerprint(&decode_molecule(&["[C]"; 6]).unwrap()).unwrap();
        let hexanol = fingerprint(&decode_molecule(&["[C]", "[C]", "[C]", "[C]", "[C]", "[C]", "[O]"]).unwrap()).unwrap();
        assert_ne!(hexane, hexanol);
        assert_eq!(tanimoto(&hexane, &hexane).unwrap(), 1.0);
        let t = tanimoto(&hexane, &hexanol).unwrap();
        assert!(t > 0.0 && t < 1.0);
    }

    #[test]
    fn tanimoto_edges() {
        let mut a = Fingerprint::empty(64, 0);
        let mut b = Fingerprint::empty(64, 0);
        assert_eq!(tanimoto(&a, &b).unwrap(), 1.0);
        a.set(1);
        b.set(2);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.0);
        assert!(matches!(tanimoto(&a, &Fingerprint::empty(128, 0)), Err(ChemError::WidthMismatch(64, 128))));
    }
}
