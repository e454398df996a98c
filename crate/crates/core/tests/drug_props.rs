// QED components and SA scores against the RDKit reference dump.

use qevo::chem::sascore::Complexity;
use qevo::chem::{fingerprint, sa_score, QedProperties};
use qevo::{canonicalize, decode_molecule, split_tokens};

const GOLDEN: &str = include_str!("../../../golden/drug_props.golden");

struct Row<'a> {
    tokens: &'a str,
    smiles: &'a str,
    floats: [f64; 6],
    ints: [usize; 8],
    on_bits: Vec<usize>,
}

fn rows() -> Vec<Row<'static>> {
    GOLDEN
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("tokens,"))
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            let f = |i: usize| c[i].parse::<f64>().unwrap();
            let n = |i: usize| c[i].parse::<usize>().unwrap();
            Row {
                tokens: c[0],
                smiles: c[1],
                // mw, alogp, psa, qed, sas, unused
                floats: [f(2), f(3), f(6), f(10), f(14), 0.0],
                // hba, hbd, rotb, arom, alerts, chiral, spiro, bridgehead
                ints: [n(4), n(5), n(7), n(8), n(9), n(11), n(12), n(13)],
                on_bits: c[15].split(' ').filter(|t| !t.is_empty()).map(|t| t.parse().unwrap()).collect(),
            }
        })
        .collect()
}

#[test]
fn descriptors_match_reference() {
    let rows = rows();
    assert!(rows.len() >= 3000);
    let mut failures = Vec::new();
    for r in &rows {
        let toks = split_tokens(r.tokens).unwrap();
        let g = decode_molecule(&toks).unwrap();
        let p = QedProperties::of(&g).unwrap();
        let c = Complexity::of(&g);
        let got_f = [p.mw, p.alogp, p.psa, p.qed(), sa_score(&g).unwrap()];
        let tol = [1e-3, 1e-4, 1e-3, 1e-8, 1e-8];
        let got_i = [p.hba, p.hbd, p.rotb, p.arom, p.alerts, c.chiral_centers, c.spiro_atoms, c.bridgehead_atoms];
        let names = ["mw", "alogp", "psa", "qed", "sas"];
        let inames = ["hba", "hbd", "rotb", "arom", "alerts", "chiral", "spiro", "bridgehead"];
        for k in 0..5 {
            if (got_f[k] - r.floats[k]).abs() > tol[k] {
                failures.push(format!("{} {} {}: {} vs {}", r.smiles, canonicalize(&g).unwrap(), names[k], got_f[k], r.floats[k]));
            }
        }
        let fp = fingerprint(&g).unwrap();
        let on: Vec<usize> = (0..fp.width()).filter(|&i| fp.get(i)).collect();
        if on != r.on_bits {
            failures.push(format!("{} fingerprint: {:?} vs {:?}", r.smiles, on, r.on_bits));
        }
        for k in 0..8 {
            if got_i[k] != r.ints[k] {
                failures.push(format!("{} {} {}: {} vs {}", r.smiles, canonicalize(&g).unwrap(), inames[k], got_i[k], r.ints[k]));
            }
        }
    }
    assert!(failures.is_empty(), "{} mismatches:\n{}", failures.len(), failures.iter().take(4000).cloned().collect::<Vec<_>>().join("\n"));
}
