//! Classical simulation of quantum ensemble variational optimization over
//! SELFIES-encoded chemical spaces.

pub mod analysis;
pub mod aromatic;
pub mod canon;
pub mod chem;
pub mod codec;
pub mod driver;
pub mod ensemble;
pub mod optimizers;
pub mod refspace;
pub mod error;
pub mod graph;
pub mod sampler;
pub mod selfies;

pub use canon::{canonical_graph, canonicalize, CanonicalForm};
pub use codec::{decode_bits, encode_tokens, split_tokens, MoleculeBitstring, TokenVocabulary, VocabularyPreset};
pub use error::{Error, Result};
pub use graph::{Atom, Bond, Element, MoleculeGraph, Validity};
pub use selfies::{decode_bitstring, decode_molecule, TokenTable};
