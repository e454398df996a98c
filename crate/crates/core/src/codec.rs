//! Token vocabularies and the bitstring encoding of token sequences.
//!
//! A vocabulary of `2^n` tokens assigns every token an `n`-bit code. A
//! molecule of `k` tokens is the concatenation of its token codes, giving a
//! `k * n` bit string. Within a code the leftmost character of the ket is the
//! most significant bit and the first qubit of that token's block.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CodecError;

/// Bits per token above which a vocabulary is rejected.
pub const MAX_BITS_PER_TOKEN: usize = 8;

const TABLE_2_3: &str = "\
[C]=000
[O]=001
[N]=010
[F]=011
[=C]=100
[#N]=101
[Ring1]=110
[Branch1]=111
";

const TABLE_2_4: &str = "\
[C]=0000
[=C]=1000
[#C]=0100
[O]=0010
[=O]=0001
[N]=1100
[=N]=0011
[#N]=0110
[F]=1001
[Cl]=1010
[Ring1]=0101
[Ring2]=1110
[Branch1]=0111
[=Branch1]=1101
[Branch2]=1011
[=Branch2]=1111
";

/// Built-in vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VocabularyPreset {
    /// Eight tokens, three bits each.
    #[serde(rename = "table_2_3")]
    Table2x3,
    /// Sixteen tokens, four bits each.
    #[serde(rename = "table_2_4")]
    Table2x4,
}

impl VocabularyPreset {
    pub fn name(self) -> &'static str {
        match self {
            VocabularyPreset::Table2x3 => "table_2_3",
            VocabularyPreset::Table2x4 => "table_2_4",
        }
    }

    pub fn vocabulary(self) -> TokenVocabulary {
        let text = match self {
            VocabularyPreset::Table2x3 => TABLE_2_3,
            VocabularyPreset::Table2x4 => TABLE_2_4,
        };
        TokenVocabulary::parse(text).expect("built-in vocabulary is well formed")
    }
}

impl FromStr for VocabularyPreset {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table_2_3" => Ok(VocabularyPreset::Table2x3),
            "table_2_4" => Ok(VocabularyPreset::Table2x4),
            other => Err(CodecError::UnknownPreset(other.to_string())),
        }
    }
}

/// Bijection between token labels and fixed-width bit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocabulary {
    bits_per_token: usize,
    /// Indexed by code value.
    tokens_by_code: Vec<String>,
    codes: HashMap<String, u32>,
}

impl TokenVocabulary {
    /// Builds a vocabulary from `(token, code)` pairs where each code is a
    /// string of `'0'`/`'1'` characters, most significant bit first.
    pub fn from_pairs<I, S, C>(pairs: I) -> Result<Self, CodecError>
    where
        I: IntoIterator<Item = (S, C)>,
        S: Into<String>,
        C: AsRef<str>,
    {
        let mut width = None;
        let mut entries = Vec::new();
        for (token, code) in pairs {
            let token = token.into();
            let code = code.as_ref().trim();
            if code.is_empty() || !code.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(CodecError::MalformedCode(code.to_string()));
            }
            match width {
                None => width = Some(code.len()),
                Some(w) if w != code.len() => {
                    return Err(CodecError::MixedWidth { expected: w, found: code.len() })
                }
                _ => {}
            }
            if code.len() > MAX_BITS_PER_TOKEN {
                return Err(CodecError::MalformedCode(code.to_string()));
            }
            let value = u32::from_str_radix(code, 2).expect("validated binary digits");
            entries.push((token, value));
        }
        let n = width.ok_or(CodecError::EmptyVocabulary)?;
        let size = 1usize << n;
        if entries.len() != size {
            return Err(CodecError::IncompleteVocabulary { expected: size, found: entries.len() });
        }
        let mut tokens_by_code = vec![String::new(); size];
        let mut seen = vec![false; size];
        let mut codes = HashMap::with_capacity(size);
        for (token, value) in entries {
            if seen[value as usize] {
                return Err(CodecError::DuplicateCode(format!("{value:0n$b}")));
            }
            if codes.insert(token.clone(), value).is_some() {
                return Err(CodecError::DuplicateToken(token));
            }
            seen[value as usize] = true;
            tokens_by_code[value as usize] = token;
        }
        Ok(Self { bits_per_token: n, tokens_by_code, codes })
    }

    /// Parses the `token=bitcode` text format. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, CodecError> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            // Tokens may contain '=' (e.g. "[=C]"), so split on the last one.
            let (token, code) = line
                .rsplit_once('=')
                .ok_or(CodecError::MalformedLine(lineno + 1))?;
            let token = token.trim();
            if token.is_empty() {
                return Err(CodecError::MalformedLine(lineno + 1));
            }
            pairs.push((token.to_string(), code.trim().to_string()));
        }
        Self::from_pairs(pairs)
    }

    /// Serializes to the `token=bitcode` text format in code order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (code, token) in self.tokens_by_code.iter().enumerate() {
            out.push_str(&format!("{token}={}\n", self.format_code(code as u32)));
        }
        out
    }

    pub fn bits_per_token(&self) -> usize {
        self.bits_per_token
    }

    pub fn len(&self) -> usize {
        self.tokens_by_code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens_by_code.is_empty()
    }

    /// Tokens in code order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens_by_code
    }

    pub fn code_of(&self, token: &str) -> Option<u32> {
        self.codes.get(token).copied()
    }

    pub fn token_of(&self, code: u32) -> Option<&str> {
        self.tokens_by_code.get(code as usize).map(String::as_str)
    }

    pub fn format_code(&self, code: u32) -> String {
        format!("{code:0w$b}", w = self.bits_per_token)
    }
}

/// A molecule encoded as `k` concatenated token codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MoleculeBitstring {
    bits: Vec<bool>,
    bits_per_token: usize,
}

impl MoleculeBitstring {
    pub fn new(bits: Vec<bool>, bits_per_token: usize) -> Result<Self, CodecError> {
        if bits_per_token == 0 || bits.len() % bits_per_token != 0 {
            return Err(CodecError::LengthMismatch {
                expected: bits_per_token,
                found: bits.len(),
            });
        }
        Ok(Self { bits, bits_per_token })
    }

    /// Parses a string of `'0'`/`'1'` characters.
    pub fn parse(text: &str, bits_per_token: usize) -> Result<Self, CodecError> {
        let bits = text
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(CodecError::MalformedCode(text.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(bits, bits_per_token)
    }

    /// Builds the bitstring whose big-endian integer value is `value`.
    /// Only valid for total widths up to 64 bits.
    pub fn from_index(value: u64, num_tokens: usize, bits_per_token: usize) -> Self {
        let width = num_tokens * bits_per_token;
        assert!(width <= 64, "index form only covers up to 64 bits");
        let bits = (0..width).map(|i| (value >> (width - 1 - i)) & 1 == 1).collect();
        Self { bits, bits_per_token }
    }

    /// Big-endian integer value, `None` above 64 bits.
    pub fn to_index(&self) -> Option<u64> {
        if self.bits.len() > 64 {
            return None;
        }
        Some(self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.bits.len() / self.bits_per_token
    }

    pub fn bits_per_token(&self) -> usize {
        self.bits_per_token
    }

    /// Code of the `i`-th token block.
    pub fn block(&self, i: usize) -> u32 {
        let n = self.bits_per_token;
        self.bits[i * n..(i + 1) * n]
            .iter()
            .fold(0u32, |acc, &b| (acc << 1) | b as u32)
    }
}

impl fmt::Display for MoleculeBitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Concatenates the codes of `tokens`, which must have exactly
/// `num_tokens` entries.
/// Splits a concatenated token string such as `[C][=C][Ring1]` into its
/// bracketed labels. Whitespace between tokens is ignored.
pub fn split_tokens(text: &str) -> Result<Vec<&str>, CodecError> {
    let mut out = Vec::new();
    let mut rest = text.trim_start();
    while !rest.is_empty() {
        if !rest.starts_with('[') {
            return Err(CodecError::UnknownToken(rest.chars().take(12).collect()));
        }
        let end = rest.find(']').ok_or_else(|| CodecError::UnknownToken(rest.to_string()))?;
        out.push(&rest[..=end]);
        rest = rest[end + 1..].trim_start();
    }
    Ok(out)
}

pub fn encode_tokens<S: AsRef<str>>(
    tokens: &[S],
    vocab: &TokenVocabulary,
    num_tokens: usize,
) -> Result<MoleculeBitstring, CodecError> {
    if tokens.len() != num_tokens {
        return Err(CodecError::LengthMismatch { expected: num_tokens, found: tokens.len() });
    }
    let n = vocab.bits_per_token();
    let mut bits = Vec::with_capacity(n * tokens.len());
    for token in tokens {
        let token = token.as_ref();
        let code = vocab
            .code_of(token)
            .ok_or_else(|| CodecError::UnknownToken(token.to_string()))?;
        bits.extend((0..n).rev().map(|shift| (code >> shift) & 1 == 1));
    }
    Ok(MoleculeBitstring { bits, bits_per_token: n })
}

/// Splits `bits` into token blocks and looks each one up. Every block
/// decodes because a vocabulary covers all `2^n` codes.
pub fn decode_bits<'v>(
    bits: &MoleculeBitstring,
    vocab: &'v TokenVocabulary,
) -> Result<Vec<&'v str>, CodecError> {
    let n = vocab.bits_per_token();
    if bits.bits_per_token != n || bits.len() % n != 0 {
        return Err(CodecError::LengthMismatch { expected: n, found: bits.len() });
    }
    Ok((0..bits.num_tokens())
        .map(|i| vocab.token_of(bits.block(i)).expect("vocabulary is total"))
        .collect())
}
