//! Quantitative estimate of drug-likeness (QED) with mean weights.
//!
//! Descriptors follow RDKit's definitions so that scores agree with
//! `rdkit.Chem.QED.qed`: average molecular weight, Crippen logP, acceptor
//! and donor patterns, Ertl TPSA over N and O, strict rotatable bonds,
//! rings left after deleting aliphatic ring atoms with a non-aromatic
//! neighbour, and the count of structural alerts that match.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::crippen::crippen_logp;
use super::smarts::{BondKind, ExpandedGraph, Pattern};
use crate::error::ChemError;
use crate::graph::{Element, MoleculeGraph};

const ALERTS: &str = include_str!("../../data/qed_alerts.txt");

const ACCEPTORS: [&str; 11] = [
    "[oH0;X2]",
    "[OH1;X2;v2]",
    "[OH0;X2;v2]",
    "[OH0;X1;v2]",
    "[O-;X1]",
    "[SH0;X2;v2]",
    "[SH0;X1;v2]",
    "[S-;X1]",
    "[nH0;X2]",
    "[NH0;X1;v3]",
    "[$([N;+0;X3;v3]);!$(N[C,S]=O)]",
];

const DONORS: &str = "[$([N&!H0&v3]),$([N&!H0&+&v4]),$([O,S;H1;+0]),$([n&H1&+0])]";

const ROTATABLE_STRICT: &str = "[!$(*#*)&!D1&!$(C(F)(F)F)&!$(C(Cl)(Cl)Cl)&!$(C(Br)(Br)Br)&!$(C([CH3])([CH3])[CH3])\
&!$([CD3](=[N,O,S])-!@[#7,O,S!D1])&!$([#7,O,S!D1]-!@[CD3]=[N,O,S])&!$([CD3](=[N+])-!@[#7!D1])\
&!$([#7!D1]-!@[CD3]=[N+])]-,:;!@[!$(*#*)&!D1&!$(C(F)(F)F)&!$(C(Cl)(Cl)Cl)&!$(C(Br)(Br)Br)&!$(C([CH3])([CH3])[CH3])]";

const ALIPHATIC_RING_ATOM: &str = "[$([A;R][!a])]";

struct Patterns {
    acceptors: Vec<Pattern>,
    donors: Pattern,
    rotatable: Pattern,
    aliphatic_ring_atom: Pattern,
    alerts: Vec<Pattern>,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let parse = |s: &str| Pattern::parse(s).unwrap_or_else(|e| panic!("bad pattern {s}: {e:?}"));
        Patterns {
            acceptors: ACCEPTORS.iter().map(|s| parse(s)).collect(),
            donors: parse(DONORS),
            rotatable: parse(ROTATABLE_STRICT),
            aliphatic_ring_atom: parse(ALIPHATIC_RING_ATOM),
            alerts: ALERTS
                .lines()
                .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
                .map(|l| parse(l.trim()))
                .collect(),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QedProperties {
    pub mw: f64,
    pub alogp: f64,
    pub hba: usize,
    pub hbd: usize,
    pub psa: f64,
    pub rotb: usize,
    pub arom: usize,
    pub alerts: usize,
}

/// Asymmetric double sigmoid `(a, b, c, d, e, f, dmax)`.
type Ads = [f64; 7];

const ADS: [Ads; 8] = [
    [2.817065973, 392.5754953, 290.7489764, 2.419764353, 49.22325677, 65.37051707, 104.9805561],
    [3.172690585, 137.8624751, 2.534937431, 4.581497897, 0.822739154, 0.576295591, 131.3186604],
    [2.948620388, 160.4605972, 3.615294657, 4.435986202, 0.290141953, 1.300669958, 148.7763046],
    [1.618662227, 1010.051101, 0.985094388, 0.000000001, 0.713820843, 0.920922555, 258.1632616],
    [1.876861559, 125.2232657, 62.90773554, 87.83366614, 12.01999824, 28.51324732, 104.5686167],
    [0.010000000, 272.4121427, 2.558379970, 1.565547684, 1.271567166, 2.758063707, 105.4420403],
    [3.217788970, 957.7374108, 2.274627939, 0.000000001, 1.317690384, 0.375760881, 312.3372610],
    [0.010000000, 1199.094025, -0.09002883, 0.000000001, 0.185904477, 0.875193782, 417.7253140],
];

const MEAN_WEIGHTS: [f64; 8] = [0.66, 0.46, 0.05, 0.61, 0.06, 0.65, 0.48, 0.95];

fn desirability(x: f64, p: &Ads) -> f64 {
    let [a, b, c, d, e, f, dmax] = *p;
    let rise = 1.0 + (-(x - c + d / 2.0) / e).exp();
    let fall = 1.0 + (-(x - c - d / 2.0) / f).exp();
    (a + b / rise * (1.0 - 1.0 / fall)) / dmax
}

impl QedProperties {
    pub fn of(g: &MoleculeGraph) -> Result<Self, ChemError> {
        if !g.is_valid() {
            return Err(ChemError::InvalidMolecule);
        }
        let x = ExpandedGraph::heavy(g);
        let p = patterns();
        Ok(Self {
            mw: g.molecular_weight(),
            alogp: crippen_logp(g)?,
            hba: p.acceptors.iter().map(|a| a.count_unique(&x)).sum(),
            hbd: p.donors.count_unique(&x),
            psa: tpsa(g),
            rotb: p.rotatable.count_unique(&x),
            arom: aromatic_ring_count(g, &x, &p.aliphatic_ring_atom),
            alerts: p.alerts.iter().filter(|a| a.has_match(&x)).count(),
        })
    }

    pub fn qed(&self) -> f64 {
        let values = [
            self.mw,
            self.alogp,
            self.hba as f64,
            self.hbd as f64,
            self.psa,
            self.rotb as f64,
            self.arom as f64,
            self.alerts as f64,
        ];
        let mut t = 0.0;
        for i in 0..8 {
            t += MEAN_WEIGHTS[i] * desirability(values[i], &ADS[i]).ln();
        }
        (t / MEAN_WEIGHTS.iter().sum::<f64>()).exp()
    }
}

pub fn qed(g: &MoleculeGraph) -> Result<f64, ChemError> {
    Ok(QedProperties::of(g)?.qed())
}

/// Rings remaining once aliphatic ring atoms bonded to a non-aromatic atom
/// are deleted, counted as the cycle rank of what is left.
fn aromatic_ring_count(g: &MoleculeGraph, x: &ExpandedGraph, deleted: &Pattern) -> usize {
    let n = g.atom_count();
    let keep: Vec<bool> = (0..n).map(|i| !deleted.matches_at(x, i)).collect();
    let vertices = keep.iter().filter(|&&k| k).count();
    let edges = g.bonds().iter().filter(|b| keep[b.a] && keep[b.b]).count();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if !keep[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(nb, _) in g.neighbors(v) {
                if keep[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    (edges + components).saturating_sub(vertices)
}

/// Topological polar surface area from N and O contributions.
pub fn tpsa(g: &MoleculeGraph) -> f64 {
    let x = ExpandedGraph::heavy(g);
    let mut total = 0.0;
    for (i, atom) in g.atoms().iter().enumerate() {
        if !matches!(atom.element, Element::N | Element::O) {
            continue;
        }
        let (mut single, mut double, mut triple, mut arom) = (0, 0, 0, 0);
        for e in &x.adjacency[i] {
            match e.kind {
                BondKind::Single => single += 1,
                BondKind::Double => double += 1,
                BondKind::Triple => triple += 1,
                BondKind::Aromatic => arom += 1,
            }
        }
        let h = atom.hydrogens;
        let degree = g.degree(i);
        let in3 = x.nodes[i].smallest_ring == 3;
        let known = match (atom.element, degree) {
            (Element::N, 1) => match (h, single, double, triple) {
                (0, _, _, 1) => Some(23.79),
                (1, _, 1, _) => Some(23.85),
                (2, 1, _, _) => Some(26.02),
                _ => None,
            },
            (Element::N, 2) => {
                if h == 0 && single == 1 && double == 1 {
                    Some(12.36)
                } else if h == 0 && triple == 1 && double == 1 {
                    Some(13.60)
                } else if h == 1 && single == 2 {
                    Some(if in3 { 21.94 } else { 12.03 })
                } else if h == 0 && arom == 2 {
                    Some(12.89)
                } else if h == 1 && arom == 2 {
                    Some(15.79)
                } else {
                    None
                }
            }
            (Element::N, 3) => {
                if h == 0 && single == 3 {
                    Some(if in3 { 3.01 } else { 3.24 })
                } else if h == 0 && single == 1 && double == 2 {
                    Some(11.68)
                } else if h == 0 && arom == 3 {
                    Some(4.41)
                } else if h == 0 && single == 1 && arom == 2 {
                    Some(4.93)
                } else if h == 0 && double == 1 && arom == 2 {
                    Some(8.39)
                } else {
                    None
                }
            }
            (Element::O, 1) => match (h, single, double) {
                (0, _, 1) => Some(17.07),
                (1, 1, _) => Some(20.23),
                _ => None,
            },
            (Element::O, 2) => {
                if h == 0 && single == 2 {
                    Some(if in3 { 12.53 } else { 9.23 })
                } else if h == 0 && arom == 2 {
                    Some(13.14)
                } else {
                    None
                }
            }
            _ => None,
        };
        total += known.unwrap_or_else(|| {
            let (base, per_neighbor) = if atom.element == Element::N { (30.5, 8.2) } else { (28.5, 8.6) };
            (base - per_neighbor * degree as f64 + 1.5 * h as f64).max(0.0)
        });
    }
    total
}
