//! SELFIES decoding for the restricted token alphabets.
//!
//! Derivation follows the reference library's rules: every atom token
//! carries a requested bond order that is clipped to the remaining valence
//! of the previous atom, `[BranchL]` and `[RingL]` read `L` following tokens
//! as a base-16 index, and ring closures are formed after the main chain is
//! complete. Decoding never fails; a string whose tokens are all skipped
//! yields the empty (invalid) graph.

use crate::codec::{decode_bits, MoleculeBitstring, TokenVocabulary};
use crate::error::DecodeError;
use crate::graph::{Element, MoleculeGraph};

/// Semantic meaning of one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelfiesToken {
    Atom { element: Element, order: u8 },
    Branch { order: u8, index_len: u8 },
    Ring { order: u8, index_len: u8 },
}

/// Order of the index alphabet: position in this list is the digit value a
/// token contributes when read as a branch length or ring offset. Tokens
/// outside the list count as zero.
const INDEX_ALPHABET: [&str; 16] = [
    "[C]", "[Ring1]", "[Ring2]", "[Branch1]", "[=Branch1]", "[#Branch1]", "[Branch2]",
    "[=Branch2]", "[#Branch2]", "[O]", "[N]", "[=N]", "[=C]", "[#C]", "[S]", "[P]",
];

/// Digit value of `label` in the index alphabet.
pub fn index_digit(label: &str) -> u8 {
    INDEX_ALPHABET
        .iter()
        .position(|&s| s == label)
        .unwrap_or(0) as u8
}

/// Parses a bracketed token label such as `[=C]`, `[Ring2]` or `[#Branch1]`.
pub fn parse_token(label: &str) -> Option<SelfiesToken> {
    let inner = label.strip_prefix('[')?.strip_suffix(']')?;
    let (order, rest) = match inner.as_bytes().first()? {
        b'=' => (2, &inner[1..]),
        b'#' => (3, &inner[1..]),
        _ => (1, inner),
    };
    if let Some(l) = rest.strip_prefix("Branch") {
        let index_len = l.parse::<u8>().ok().filter(|l| (1..=3).contains(l))?;
        return Some(SelfiesToken::Branch { order, index_len });
    }
    if let Some(l) = rest.strip_prefix("Ring") {
        let index_len = l.parse::<u8>().ok().filter(|l| (1..=3).contains(l))?;
        return Some(SelfiesToken::Ring { order, index_len });
    }
    let element = Element::from_symbol(rest)?;
    Some(SelfiesToken::Atom { element, order })
}

/// Token of one alphabet entry with its index digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompiledToken {
    pub token: SelfiesToken,
    pub digit: u8,
}

/// A vocabulary resolved to decoder tokens, indexed by code.
#[derive(Debug, Clone)]
pub struct TokenTable {
    by_code: Vec<CompiledToken>,
    bits_per_token: usize,
}

impl TokenTable {
    pub fn from_vocabulary(vocab: &TokenVocabulary) -> Result<Self, DecodeError> {
        let by_code = vocab
            .tokens()
            .iter()
            .map(|label| {
                parse_token(label)
                    .map(|token| CompiledToken { token, digit: index_digit(label) })
                    .ok_or_else(|| DecodeError::UnsupportedToken(label.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { by_code, bits_per_token: vocab.bits_per_token() })
    }

    pub fn bits_per_token(&self) -> usize {
        self.bits_per_token
    }

    pub fn get(&self, code: u32) -> CompiledToken {
        self.by_code[code as usize]
    }

    /// Decodes the big-endian bit pattern `index` of `num_tokens` tokens.
    pub fn decode_index(&self, index: u64, num_tokens: usize) -> MoleculeGraph {
        let n = self.bits_per_token;
        let mask = (1u64 << n) - 1;
        let mut tokens = [CompiledToken { token: SelfiesToken::Ring { order: 1, index_len: 1 }, digit: 0 }; 16];
        if num_tokens <= tokens.len() {
            for (i, slot) in tokens.iter_mut().take(num_tokens).enumerate() {
                let shift = n * (num_tokens - 1 - i);
                *slot = self.get(((index >> shift) & mask) as u32);
            }
            decode_compiled(&tokens[..num_tokens])
        } else {
            let v: Vec<_> = (0..num_tokens)
                .map(|i| self.get(((index >> (n * (num_tokens - 1 - i))) & mask) as u32))
                .collect();
            decode_compiled(&v)
        }
    }

    pub fn decode_bitstring(&self, bits: &MoleculeBitstring) -> MoleculeGraph {
        let tokens: Vec<_> = (0..bits.num_tokens()).map(|i| self.get(bits.block(i))).collect();
        decode_compiled(&tokens)
    }
}

/// Decodes token labels into a molecule graph.
pub fn decode_molecule<S: AsRef<str>>(tokens: &[S]) -> Result<MoleculeGraph, DecodeError> {
    let compiled = tokens
        .iter()
        .map(|t| {
            let label = t.as_ref();
            parse_token(label)
                .map(|token| CompiledToken { token, digit: index_digit(label) })
                .ok_or_else(|| DecodeError::UnsupportedToken(label.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(decode_compiled(&compiled))
}

/// Decodes a bitstring through `vocab`.
pub fn decode_bitstring(
    bits: &MoleculeBitstring,
    vocab: &TokenVocabulary,
) -> Result<MoleculeGraph, DecodeError> {
    let labels = decode_bits(bits, vocab)?;
    decode_molecule(&labels)
}

struct Derivation<'t> {
    tokens: &'t [CompiledToken],
    pos: usize,
    elements: Vec<Element>,
    /// `(from, to, order)` in creation order.
    bonds: Vec<(usize, usize, u8)>,
    used: Vec<u8>,
    /// `(left atom, right atom, order)` pending ring closures.
    rings: Vec<(usize, usize, u8)>,
}

impl<'t> Derivation<'t> {
    fn next_token(&mut self) -> Option<CompiledToken> {
        let t = self.tokens.get(self.pos).copied();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn read_index(&mut self, len: u8) -> usize {
        let mut value = 0usize;
        for _ in 0..len {
            let digit = self.next_token().map_or(0, |t| t.digit as usize);
            value = value * INDEX_ALPHABET.len() + digit;
        }
        value
    }

    fn add_atom(&mut self, element: Element) -> usize {
        self.elements.push(element);
        self.used.push(0);
        self.elements.len() - 1
    }

    /// Derives tokens until the state saturates or `max_derive` tokens are
    /// consumed; returns the number of tokens consumed.
    fn derive(&mut self, max_derive: usize, init_state: u8, root: Option<usize>) -> usize {
        let mut derived = 0usize;
        let mut state = Some(init_state);
        let mut prev = root;

        while let Some(s) = state {
            if derived >= max_derive {
                break;
            }
            let Some(tok) = self.next_token() else { break };
            derived += 1;

            let next_state = match tok.token {
                SelfiesToken::Branch { order, index_len } => {
                    if s <= 1 {
                        Some(s)
                    } else {
                        let branch_state = (s - 1).min(order);
                        let q = self.read_index(index_len);
                        derived += index_len as usize
                            + self.derive(q + 1, branch_state, prev);
                        Some(s - branch_state)
                    }
                }
                SelfiesToken::Ring { order, index_len } => {
                    if s == 0 {
                        Some(0)
                    } else {
                        let ring_order = order.min(s);
                        let q = self.read_index(index_len);
                        derived += index_len as usize;
                        let right = prev.expect("positive state implies a previous atom");
                        let left = right.saturating_sub(q + 1);
                        self.rings.push((left, right, ring_order));
                        let left_over = s - ring_order;
                        (left_over > 0).then_some(left_over)
                    }
                }
                SelfiesToken::Atom { element, order } => {
                    let cap = element.max_valence();
                    let bond_order = if s == 0 { 0 } else { order.min(s).min(cap) };
                    let atom = self.add_atom(element);
                    if bond_order > 0 {
                        let from = prev.expect("positive state implies a previous atom");
                        self.bonds.push((from, atom, bond_order));
                        self.used[from] += bond_order;
                        self.used[atom] += bond_order;
                    }
                    prev = Some(atom);
                    let left_over = cap - bond_order;
                    (left_over > 0).then_some(left_over)
                }
            };
            state = next_state;
        }

        while derived < max_derive && self.next_token().is_some() {
            derived += 1;
        }
        derived
    }

    fn form_rings(&mut self) {
        for i in 0..self.rings.len() {
            let (left, right, order) = self.rings[i];
            if left == right {
                continue;
            }
            let lfree = self.elements[left].max_valence() as i16 - self.used[left] as i16;
            let rfree = self.elements[right].max_valence() as i16 - self.used[right] as i16;
            if lfree <= 0 || rfree <= 0 {
                continue;
            }
            let order = (order as i16).min(lfree).min(rfree) as u8;
            let existing = self
                .bonds
                .iter()
                .position(|&(a, b, _)| (a == left && b == right) || (a == right && b == left));
            match existing {
                Some(idx) => {
                    let old = self.bonds[idx].2;
                    let new = (old + order).min(3);
                    self.bonds[idx].2 = new;
                    self.used[left] += new - old;
                    self.used[right] += new - old;
                }
                None => {
                    self.bonds.push((left, right, order));
                    self.used[left] += order;
                    self.used[right] += order;
                }
            }
        }
    }
}

/// Decodes already-resolved tokens.
pub fn decode_compiled(tokens: &[CompiledToken]) -> MoleculeGraph {
    let mut d = Derivation {
        tokens,
        pos: 0,
        elements: Vec::with_capacity(tokens.len()),
        bonds: Vec::with_capacity(tokens.len() + 2),
        used: Vec::with_capacity(tokens.len()),
        rings: Vec::new(),
    };
    d.derive(usize::MAX, 0, None);
    d.form_rings();
    if d.elements.is_empty() {
        return MoleculeGraph::invalid("no atoms derived");
    }
    let mut graph = MoleculeGraph::from_parts(&d.elements, &d.bonds)
        .expect("derivation respects valence caps");
    crate::aromatic::perceive(&mut graph);
    graph
}
