//! Molecular property scorers, fingerprints and the two losses.

pub mod crippen;
pub mod fingerprint;
pub mod morgan;
pub mod props;
pub mod qed;
pub mod sascore;
pub mod smarts;

pub use crippen::crippen_logp;
pub use fingerprint::{fingerprint, tanimoto, Fingerprint, FINGERPRINT_BITS, FINGERPRINT_RADIUS};
pub use qed::{qed, QedProperties};
pub use sascore::sa_score;
pub use props::{
    drug_design_loss, drug_term_a, drug_term_b, drug_term_c, plogp_loss, DrugLikeness, DrugScorer,
    LossWeights, PlogpScorer, PropertyScore, QedSa, Scorer,
};
