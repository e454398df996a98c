// Agreement with the frozen reference-stack outputs in golden/.

use std::collections::HashMap;

use qevo::chem::{crippen_logp, DrugScorer, LossWeights, PlogpScorer};
use qevo::refspace::{enumerate, EnumerateOptions};
use qevo::{canonicalize, MoleculeBitstring, TokenTable, VocabularyPreset};

const LOGP: &str = include_str!("../../../golden/logp_6token.golden");
const COUNTS: &str = include_str!("../../../golden/unique_counts.golden");
const DRUG_RANK: &str = include_str!("../../../golden/drug_rank_6token.golden");

fn data_rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines().skip(2).filter(|l| !l.is_empty()).map(|l| l.split(',').collect())
}

fn table() -> TokenTable {
    TokenTable::from_vocabulary(&VocabularyPreset::Table2x3.vocabulary()).unwrap()
}

#[test]
fn every_header_carries_a_manifest() {
    for text in [LOGP, COUNTS, DRUG_RANK] {
        assert!(text.starts_with("# manifest: selfies=2.1.1 rdkit="));
    }
}

#[test]
fn logp_matches_for_every_k6_molecule() {
    let table = table();
    let mut rows = 0;
    let mut worst = (0.0f64, String::new());
    for c in data_rows(LOGP) {
        let g = table.decode_bitstring(&MoleculeBitstring::parse(c[0], 3).unwrap());
        let ours = crippen_logp(&g).unwrap();
        let err = (ours - c[2].parse::<f64>().unwrap()).abs();
        if err > worst.0 {
            worst = (err, c[1].to_string());
        }
        rows += 1;
    }
    assert_eq!(rows, 5789);
    // the golden values carry four decimals
    assert!(worst.0 <= 1e-4 + 1e-12, "{worst:?}");
}

#[test]
fn golden_molecules_are_distinct_classes() {
    let table = table();
    let mut seen = HashMap::new();
    for c in data_rows(LOGP) {
        let g = table.decode_bitstring(&MoleculeBitstring::parse(c[0], 3).unwrap());
        let canonical = canonicalize(&g).unwrap().into_string();
        if let Some(previous) = seen.insert(canonical, c[1].to_string()) {
            panic!("{previous} and {} share a canonical form", c[1]);
        }
    }
}

#[test]
fn k6_counts_match() {
    let row = data_rows(COUNTS).find(|c| c[0] == "6").unwrap();
    let space = enumerate(VocabularyPreset::Table2x3, 6, &PlogpScorer, &EnumerateOptions::default()).unwrap();
    assert_eq!(space.total_bitstrings(), row[1].parse::<u64>().unwrap());
    assert_eq!(space.unique_including_invalid(), row[2].parse::<usize>().unwrap());
    assert_eq!(space.unique_valid(), row[3].parse::<usize>().unwrap());
    assert_eq!(space.invalid_multiplicity, row[4].parse::<u64>().unwrap());
}

#[test]
fn k6_drug_ranking_matches_top_50() {
    let table = table();
    let scorer = DrugScorer::new(LossWeights::new(2.0, 1.0, 0.0).unwrap(), None).unwrap();
    let space = enumerate(VocabularyPreset::Table2x3, 6, &scorer, &EnumerateOptions::default()).unwrap();
    let rows: Vec<Vec<&str>> = data_rows(DRUG_RANK).collect();
    assert_eq!(rows.len(), 50);
    // one unit in the fourth decimal: the file prints CCCCCF (0.558850361...) as 0.5588
    for (ours, c) in space.top_k(50).iter().zip(&rows) {
        let g = table.decode_bitstring(&MoleculeBitstring::parse(c[1], 3).unwrap());
        assert_eq!(ours.canonical, canonicalize(&g).unwrap(), "rank {}", c[0]);
        assert!((ours.score - c[3].parse::<f64>().unwrap()).abs() <= 1e-4 + 1e-12, "rank {}: {} vs {}", c[0], ours.score, c[3]);
    }
}
