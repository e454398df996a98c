//! Wildman-Crippen logP by atom typing over the hydrogen-expanded graph.

use std::sync::OnceLock;

use super::smarts::{ExpandedGraph, Pattern};
use crate::error::ChemError;
use crate::graph::MoleculeGraph;

const TABLE: &str = include_str!("../../data/crippen_types.tsv");

pub struct AtomType {
    pub label: String,
    pub pattern: Pattern,
    pub logp: f64,
}

fn table() -> &'static [AtomType] {
    static TYPES: OnceLock<Vec<AtomType>> = OnceLock::new();
    TYPES.get_or_init(|| {
        TABLE
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|line| {
                let mut cols = line.split('\t');
                let label = cols.next().expect("type column").to_string();
                let smarts = cols.next().expect("smarts column");
                let logp = cols.next().expect("logp column").parse().expect("numeric logp");
                let pattern = Pattern::parse(smarts).unwrap_or_else(|e| panic!("bad pattern {smarts}: {e:?}"));
                AtomType { label, pattern, logp }
            })
            .collect()
    })
}

/// Atom type label for every node of the expanded graph, heavy atoms first
/// and then hydrogens.
pub fn atom_types(g: &MoleculeGraph) -> Result<Vec<&'static str>, ChemError> {
    let x = ExpandedGraph::new(g);
    (0..x.nodes.len())
        .map(|i| {
            table()
                .iter()
                .find(|t| t.pattern.matches_at(&x, i))
                .map(|t| t.label.as_str())
                .ok_or_else(|| ChemError::UnsupportedAtomClass(format!("atom {i} (Z={})", x.nodes[i].atomic_number)))
        })
        .collect()
}

pub fn crippen_logp(g: &MoleculeGraph) -> Result<f64, ChemError> {
    if !g.is_valid() {
        return Err(ChemError::InvalidMolecule);
    }
    let x = ExpandedGraph::new(g);
    let mut total = 0.0;
    for i in 0..x.nodes.len() {
        let t = table()
            .iter()
            .find(|t| t.pattern.matches_at(&x, i))
            .ok_or_else(|| ChemError::UnsupportedAtomClass(format!("atom {i} (Z={})", x.nodes[i].atomic_number)))?;
        total += t.logp;
    }
    Ok(total)
}
