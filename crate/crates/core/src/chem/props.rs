//! The composite drug-design loss and the plogP loss.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::crippen::crippen_logp;
use super::qed::qed;
use super::sascore::sa_score;
use super::fingerprint::{fingerprint, tanimoto, Fingerprint};
use crate::aromatic::find_rings;
use crate::error::ChemError;
use crate::graph::MoleculeGraph;

/// Score of one molecule under a loss. Invalid molecules carry the penalty 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyScore {
    pub value: f64,
    pub valid: bool,
}

impl PropertyScore {
    pub const INVALID: PropertyScore = PropertyScore { value: 1.0, valid: false };

    pub fn valid(value: f64) -> Self {
        Self { value, valid: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ChemError> {
        let w = Self { alpha, beta, gamma };
        w.check()?;
        Ok(w)
    }

    pub fn check(&self) -> Result<(), ChemError> {
        let ok = [self.alpha, self.beta, self.gamma].iter().all(|x| x.is_finite() && *x >= 0.0)
            && self.alpha + self.beta + self.gamma > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ChemError::InvalidWeights(format!("{self:?}")))
        }
    }
}

/// Drug-likeness model behind the a and b terms.
pub trait DrugLikeness: Send + Sync {
    fn name(&self) -> &str;
    /// Drug-likeness in [0, 1].
    fn qed(&self, g: &MoleculeGraph) -> Result<f64, ChemError>;
    /// Synthetic accessibility in [1, 10].
    fn sas(&self, g: &MoleculeGraph) -> Result<f64, ChemError>;
}

/// QED with mean weights and the fragment-based SA score.
#[derive(Debug, Clone, Copy, Default)]
pub struct QedSa;

impl DrugLikeness for QedSa {
    fn name(&self) -> &str {
        "qed+sa"
    }

    fn qed(&self, g: &MoleculeGraph) -> Result<f64, ChemError> {
        qed(g)
    }

    fn sas(&self, g: &MoleculeGraph) -> Result<f64, ChemError> {
        sa_score(g)
    }
}

fn term_a(model: &dyn DrugLikeness, g: &MoleculeGraph) -> Result<f64, ChemError> {
    let large_ring = find_rings(g).iter().any(|r| r.len() > 7);
    let offset = if large_ring { 1.0 } else { 1.2 };
    Ok((offset - model.qed(g)?).clamp(0.0, 1.2))
}

fn term_b(model: &dyn DrugLikeness, g: &MoleculeGraph) -> Result<f64, ChemError> {
    Ok((model.sas(g)? / 10.0).clamp(0.1, 1.0))
}

pub fn drug_term_a(g: &MoleculeGraph) -> Result<f64, ChemError> {
    term_a(&QedSa, g)
}

pub fn drug_term_b(g: &MoleculeGraph) -> Result<f64, ChemError> {
    term_b(&QedSa, g)
}

pub fn drug_term_c(g: &MoleculeGraph, reference: &Fingerprint) -> Result<f64, ChemError> {
    Ok((1.0 - tanimoto(&fingerprint(g)?, reference)?).clamp(0.0, 1.0))
}

pub fn drug_design_loss(
    g: &MoleculeGraph,
    w: &LossWeights,
    reference: Option<&Fingerprint>,
) -> Result<PropertyScore, ChemError> {
    DrugScorer::with_model(*w, reference.cloned(), Arc::new(QedSa))?.score(g)
}

pub fn plogp_loss(g: &MoleculeGraph) -> Result<PropertyScore, ChemError> {
    if !g.is_valid() {
        return Ok(PropertyScore::INVALID);
    }
    Ok(PropertyScore::valid(-crippen_logp(g)?))
}

/// A per-molecule loss the ensemble can average.
pub trait Scorer: Send + Sync {
    /// Identifier used to check that a reference space matches a run.
    fn id(&self) -> String;
    fn score(&self, g: &MoleculeGraph) -> Result<PropertyScore, ChemError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlogpScorer;

impl Scorer for PlogpScorer {
    fn id(&self) -> String {
        "plogp".into()
    }

    fn score(&self, g: &MoleculeGraph) -> Result<PropertyScore, ChemError> {
        plogp_loss(g)
    }
}

#[derive(Clone)]
pub struct DrugScorer {
    weights: LossWeights,
    reference: Option<Fingerprint>,
    model: Arc<dyn DrugLikeness>,
}

impl DrugScorer {
    pub fn new(weights: LossWeights, reference: Option<Fingerprint>) -> Result<Self, ChemError> {
        Self::with_model(weights, reference, Arc::new(QedSa))
    }

    pub fn with_model(
        weights: LossWeights,
        reference: Option<Fingerprint>,
        model: Arc<dyn DrugLikeness>,
    ) -> Result<Self, ChemError> {
        weights.check()?;
        if weights.gamma > 0.0 && reference.is_none() {
            return Err(ChemError::MissingReference);
        }
        Ok(Self { weights, reference, model })
    }
}

impl Scorer for DrugScorer {
    fn id(&self) -> String {
        let w = &self.weights;
        let reference = match &self.reference {
            Some(fp) if w.gamma > 0.0 => {
                let mut bytes = Vec::new();
                for i in 0..fp.width() {
                    bytes.push(fp.get(i) as u8);
                }
                format!(",ref={:016x}", super::fingerprint::fnv1a64(&bytes))
            }
            _ => String::new(),
        };
        format!("drug(alpha={},beta={},gamma={}{},model={})", w.alpha, w.beta, w.gamma, reference, self.model.name())
    }

    fn score(&self, g: &MoleculeGraph) -> Result<PropertyScore, ChemError> {
        if !g.is_valid() {
            return Ok(PropertyScore::INVALID);
        }
        let w = &self.weights;
        let mut total = w.alpha * term_a(self.model.as_ref(), g)? + w.beta * term_b(self.model.as_ref(), g)?;
        if w.gamma > 0.0 {
            let reference = self.reference.as_ref().ok_or(ChemError::MissingReference)?;
            total += w.gamma * drug_term_c(g, reference)?;
        }
        Ok(PropertyScore::valid(total / (w.alpha + w.beta + w.gamma)))
    }
}
