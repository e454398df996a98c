//! Ensemble statistics over a shot histogram: weights, the weighted property
//! average, purity and the regularized loss.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canon::{canonical_graph, CanonicalForm};
use crate::chem::{PropertyScore, Scorer};
use crate::error::ChemError;
use crate::graph::MoleculeGraph;
use crate::sampler::{BitKey, SampleHistogram};
use crate::selfies::{decode_compiled, TokenTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegForm {
    /// λ·(1 − Σω²): zero for a pure ensemble.
    #[default]
    OneMinusSumSq,
    /// −λ·Σω²: same minimizer, shifted by λ.
    NegSumSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub p0: f64,
    pub lambda: f64,
    #[serde(default)]
    pub reg_form: RegForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub weights: BTreeMap<BitKey, f64>,
    pub p_m: f64,
    pub purity: f64,
    pub regularization: f64,
    pub loss: f64,
    pub unique_count: usize,
}

/// What one bitstring decodes to, with its score.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    /// `None` for invalid decodings.
    pub canonical: Option<CanonicalForm>,
    pub score: PropertyScore,
}

/// Decodes and scores bitstrings, memoizing by bitstring and by canonical
/// form. Safe to share across threads; inserts are idempotent.
pub struct MoleculeEvaluator {
    table: TokenTable,
    scorer: Arc<dyn Scorer>,
    by_bits: RwLock<HashMap<BitKey, Arc<Evaluated>>>,
    by_canonical: RwLock<HashMap<CanonicalForm, PropertyScore>>,
}

impl MoleculeEvaluator {
    pub fn new(table: TokenTable, scorer: Arc<dyn Scorer>) -> Self {
        Self { table, scorer, by_bits: RwLock::default(), by_canonical: RwLock::default() }
    }

    pub fn scorer(&self) -> &dyn Scorer {
        self.scorer.as_ref()
    }

    pub fn table(&self) -> &TokenTable {
        &self.table
    }

    pub fn decode(&self, key: &BitKey) -> MoleculeGraph {
        let n = self.table.bits_per_token();
        let bits = key.bits();
        let tokens: Vec<_> = bits
            .chunks(n)
            .map(|block| self.table.get(block.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32)))
            .collect();
        decode_compiled(&tokens)
    }

    pub fn evaluate(&self, key: &BitKey) -> Result<Arc<Evaluated>, ChemError> {
        if let Some(hit) = self.by_bits.read().expect("cache lock").get(key) {
            return Ok(hit.clone());
        }
        let graph = self.decode(key);
        let evaluated = if graph.is_valid() {
            let (canonical, graph) = canonical_graph(&graph)?;
            let cached = self.by_canonical.read().expect("cache lock").get(&canonical).copied();
            let score = match cached {
                Some(s) => s,
                None => {
                    let s = self.scorer.score(&graph)?;
                    self.by_canonical.write().expect("cache lock").insert(canonical.clone(), s);
                    s
                }
            };
            Evaluated { canonical: Some(canonical), score }
        } else {
            Evaluated { canonical: None, score: PropertyScore::INVALID }
        };
        let evaluated = Arc::new(evaluated);
        self.by_bits.write().expect("cache lock").insert(key.clone(), evaluated.clone());
        Ok(evaluated)
    }

    /// Evaluates every key of `hist` in parallel.
    pub fn evaluate_all(&self, hist: &SampleHistogram) -> Result<BTreeMap<BitKey, Arc<Evaluated>>, ChemError> {
        let keys: Vec<&BitKey> = hist.counts.keys().collect();
        let evaluated: Vec<_> = keys.par_iter().map(|k| self.evaluate(k)).collect::<Result<_, _>>()?;
        Ok(keys.into_iter().cloned().zip(evaluated).collect())
    }

    pub fn cached_molecules(&self) -> usize {
        self.by_canonical.read().expect("cache lock").len()
    }
}

pub fn weights(hist: &SampleHistogram) -> BTreeMap<BitKey, f64> {
    let n = hist.shots as f64;
    hist.counts.iter().map(|(k, &c)| (k.clone(), c as f64 / n)).collect()
}

/// Σ (N_i/N)·p_i with scores supplied per bitstring. Sums in key order so
/// the result does not depend on evaluation order.
pub fn weighted_mean<E>(
    hist: &SampleHistogram,
    mut score: impl FnMut(&BitKey) -> Result<f64, E>,
) -> Result<f64, E> {
    let n = hist.shots as f64;
    let mut total = 0.0;
    for (k, &c) in &hist.counts {
        total += c as f64 / n * score(k)?;
    }
    Ok(total)
}

pub fn ensemble_average(hist: &SampleHistogram, evaluator: &MoleculeEvaluator) -> Result<f64, ChemError> {
    let evaluated = evaluator.evaluate_all(hist)?;
    weighted_mean(hist, |k| Ok(evaluated[k].score.value))
}

/// 1 − |unique| / shots.
pub fn purity(hist: &SampleHistogram) -> f64 {
    1.0 - hist.unique_count() as f64 / hist.shots as f64
}

pub fn regularization(hist: &SampleHistogram, cfg: &LossConfig) -> f64 {
    let n = hist.shots as f64;
    let sum_sq: f64 = hist.counts.values().map(|&c| (c as f64 / n).powi(2)).sum();
    match cfg.reg_form {
        RegForm::OneMinusSumSq => cfg.lambda * (1.0 - sum_sq),
        RegForm::NegSumSq => -cfg.lambda * sum_sq,
    }
}

/// Stats given an already computed ensemble average.
pub fn stats_from_average(hist: &SampleHistogram, p_m: f64, cfg: &LossConfig) -> EnsembleStats {
    let reg = regularization(hist, cfg);
    EnsembleStats {
        weights: weights(hist),
        p_m,
        purity: purity(hist),
        regularization: reg,
        loss: (p_m - cfg.p0).abs() + reg,
        unique_count: hist.unique_count(),
    }
}

pub fn total_loss(
    hist: &SampleHistogram,
    cfg: &LossConfig,
    evaluator: &MoleculeEvaluator,
) -> Result<EnsembleStats, ChemError> {
    let p_m = ensemble_average(hist, evaluator)?;
    Ok(stats_from_average(hist, p_m, cfg))
}
