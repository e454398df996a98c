//! Shot sampling from the RealAmplitudes (RA) and Bologna-Yale (BY) ansätze.
//!
//! RA is Ry layer, CNOT chain (i → i+1), Ry layer. The CNOT chain maps a basis
//! state x to its prefix parity y_j = x_0 ⊕ … ⊕ x_j, so after the first layer
//! the amplitude of y is Π_j a_j(y_j ⊕ y_{j−1}). That makes the whole circuit
//! a bond-dimension-2 chain: the full statevector is built in O(q·2^q), and
//! exact shots are drawn qubit by qubit in O(q) without the statevector.
//!
//! BY emits one bit per cell from a two-qubit register (emit, bond): Ry on
//! emit, CNOT emit→bond, Ry on emit, CNOT bond→emit, measure and reset emit.
//! The bond qubit carries over to the next cell and is traced at the end.
//!
//! Qubit 0 is the leftmost bit of the sampled bitstring.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::MoleculeBitstring;
use crate::error::SamplerError;

pub const DEFAULT_STATEVECTOR_CAP: usize = 24;
pub const MAX_STATEVECTOR_QUBITS: usize = 27;
/// Shots per RNG stream; chunks run in parallel and merge in order.
const SHOTS_PER_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzFamily {
    Ra,
    By,
}

impl fmt::Display for AnsatzFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnsatzFamily::Ra => "ra",
            AnsatzFamily::By => "by",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub family: AnsatzFamily,
    pub num_output_bits: usize,
    /// Largest RA register this spec may simulate, at most 27.
    pub statevector_cap: usize,
}

impl AnsatzSpec {
    pub fn new(family: AnsatzFamily, num_output_bits: usize) -> Self {
        Self { family, num_output_bits, statevector_cap: DEFAULT_STATEVECTOR_CAP }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.statevector_cap = cap.min(MAX_STATEVECTOR_QUBITS);
        self
    }

    /// Two Ry angles per output bit for both families.
    pub fn num_parameters(&self) -> usize {
        2 * self.num_output_bits
    }

    fn check_theta(&self, theta: &ParameterVector) -> Result<(), SamplerError> {
        if theta.len() != self.num_parameters() {
            return Err(SamplerError::ParameterCount { expected: self.num_parameters(), found: theta.len() });
        }
        Ok(())
    }

    pub fn check_register(&self) -> Result<(), SamplerError> {
        if self.family == AnsatzFamily::Ra && self.num_output_bits > self.statevector_cap.min(MAX_STATEVECTOR_QUBITS) {
            return Err(SamplerError::TooManyQubits {
                qubits: self.num_output_bits,
                cap: self.statevector_cap.min(MAX_STATEVECTOR_QUBITS),
            });
        }
        Ok(())
    }
}

/// Circuit angles in radians. RA: first layer then second layer. BY: the two
/// angles of cell k at positions 2k and 2k+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Stable 64-bit digest of the exact angle bits.
    pub fn digest(&self) -> u64 {
        let bytes: Vec<u8> = self.0.iter().flat_map(|x| x.to_bits().to_le_bytes()).collect();
        crate::chem::fingerprint::fnv1a64(&bytes)
    }
}

/// Packed bitstring used as a histogram key, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitKey {
    words: Vec<u64>,
    len: usize,
}

impl BitKey {
    pub fn zeros(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64).max(1)], len }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut key = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                key.set(i);
            }
        }
        key
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (63 - i % 64);
    }

    /// The bits as an integer, first bit most significant, when they fit.
    pub fn short_index(&self) -> Option<u64> {
        (self.len <= 64).then(|| if self.len == 0 { 0 } else { self.words[0] >> (64 - self.len) })
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (63 - i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn to_bitstring(&self, bits_per_token: usize) -> Result<MoleculeBitstring, crate::error::CodecError> {
        MoleculeBitstring::new(self.bits(), bits_per_token)
    }
}

impl fmt::Display for BitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for BitKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(serde::de::Error::custom("bit keys are 0/1 strings")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BitKey::from_bits(&bits))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleHistogram {
    pub counts: BTreeMap<BitKey, u64>,
    pub shots: u64,
}

impl SampleHistogram {
    pub fn new() -> Self {
        Self { counts: BTreeMap::new(), shots: 0 }
    }

    pub fn add(&mut self, key: BitKey, count: u64) {
        if count > 0 {
            *self.counts.entry(key).or_insert(0) += count;
            self.shots += count;
        }
    }

    pub fn merge(&mut self, other: SampleHistogram) {
        for (k, c) in other.counts {
            self.add(k, c);
        }
    }

    pub fn unique_count(&self) -> usize {
        self.counts.len()
    }
}

impl Default for SampleHistogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Ry(θ) acting on |0⟩ gives (cos θ/2, sin θ/2); as a matrix
/// [[c, −s], [s, c]].
fn ry(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[c, -s], [s, c]]
}

/// Full real statevector of the RA circuit, index bit (q−1−j) holding qubit j.
pub fn ra_statevector(spec: &AnsatzSpec, theta: &ParameterVector) -> Result<Vec<f64>, SamplerError> {
    spec.check_theta(theta)?;
    spec.check_register()?;
    let q = spec.num_output_bits;
    let first: Vec<[f64; 2]> = (0..q)
        .map(|j| {
            let (s, c) = (theta.0[j] / 2.0).sin_cos();
            [c, s]
        })
        .collect();
    let dim = 1usize << q;
    // amplitude after the CNOT chain: product over parity differences
    let mut psi: Vec<f64> = (0..dim)
        .into_par_iter()
        .map(|idx| {
            let mut amp = 1.0;
            let mut prev = 0;
            for (j, a) in first.iter().enumerate() {
                let y = (idx >> (q - 1 - j)) & 1;
                amp *= a[y ^ prev];
                prev = y;
            }
            amp
        })
        .collect();
    for j in 0..q {
        let r = ry(theta.0[q + j]);
        let stride = 1usize << (q - 1 - j);
        psi.par_chunks_mut(2 * stride).for_each(|block| {
            let (lo, hi) = block.split_at_mut(stride);
            for (x0, x1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*x0, *x1);
                *x0 = r[0][0] * a + r[0][1] * b;
                *x1 = r[1][0] * a + r[1][1] * b;
            }
        });
    }
    Ok(psi)
}

/// Precomputed transfer data for exact sequential RA sampling.
struct RaChain {
    /// a_j(v) = first-layer amplitude of value v on qubit j.
    first: Vec<[f64; 2]>,
    second: Vec<[[f64; 2]; 2]>,
    /// right[j][y] = squared norm contribution of qubits j.. given y_{j−1} = y
    /// on both sides; off-diagonal terms vanish because the second layer is
    /// orthogonal.
    right: Vec<[[f64; 2]; 2]>,
}

impl RaChain {
    fn new(q: usize, theta: &[f64]) -> Self {
        let first: Vec<[f64; 2]> = (0..q)
            .map(|j| {
                let (s, c) = (theta[j] / 2.0).sin_cos();
                [c, s]
            })
            .collect();
        let second: Vec<_> = (0..q).map(|j| ry(theta[q + j])).collect();
        // E_j(p, p') = Σ_y a_j(y⊕p) a_j(y⊕p') E_{j+1}(y, y)
        let mut right = vec![[[1.0; 2]; 2]; q + 1];
        for j in (0..q).rev() {
            let a = first[j];
            let next = right[j + 1];
            let mut e = [[0.0; 2]; 2];
            for (p, row) in e.iter_mut().enumerate() {
                for (pp, cell) in row.iter_mut().enumerate() {
                    *cell = (0..2).map(|y| a[y ^ p] * a[y ^ pp] * next[y][y]).sum();
                }
            }
            right[j] = e;
        }
        Self { first, second, right }
    }

    fn shot(&self, rng: &mut ChaCha8Rng) -> BitKey {
        let q = self.first.len();
        let mut key = BitKey::zeros(q);
        // left[p]: partial amplitude for the chosen prefix, indexed by y_{j−1}
        let mut left = [1.0, 0.0];
        for j in 0..q {
            let a = self.first[j];
            let r = self.second[j];
            let env = self.right[j + 1];
            let mut branch = [[0.0; 2]; 2];
            let mut weight = [0.0; 2];
            for z in 0..2 {
                for y in 0..2 {
                    branch[z][y] = (left[0] * a[y] + left[1] * a[y ^ 1]) * r[z][y];
                }
                let v = branch[z];
                weight[z] = v[0] * v[0] * env[0][0] + 2.0 * v[0] * v[1] * env[0][1] + v[1] * v[1] * env[1][1];
            }
            let total = weight[0] + weight[1];
            let z = usize::from(rng.gen::<f64>() * total >= weight[0]);
            if z == 1 {
                key.set(j);
            }
            let norm = weight[z].sqrt();
            left = [branch[z][0] / norm, branch[z][1] / norm];
        }
        key
    }
}

/// One BY pass emitting `angles.len() / 2` bits.
fn by_shot(angles: &[f64], rng: &mut ChaCha8Rng) -> BitKey {
    let cells = angles.len() / 2;
    let mut key = BitKey::zeros(cells);
    // bond qubit amplitudes, starts in |0⟩
    let mut bond = [1.0f64, 0.0];
    for k in 0..cells {
        // joint state psi[e][b], emit freshly reset to |0⟩
        let mut psi = [[bond[0], bond[1]], [0.0, 0.0]];
        apply_emit(&mut psi, ry(angles[2 * k]));
        // CNOT emit → bond
        psi[1].swap(0, 1);
        apply_emit(&mut psi, ry(angles[2 * k + 1]));
        // CNOT bond → emit
        let (t0, t1) = (psi[0][1], psi[1][1]);
        psi[0][1] = t1;
        psi[1][1] = t0;
        let p1 = psi[1][0] * psi[1][0] + psi[1][1] * psi[1][1];
        let p0 = psi[0][0] * psi[0][0] + psi[0][1] * psi[0][1];
        let e = usize::from(rng.gen::<f64>() * (p0 + p1) >= p0);
        if e == 1 {
            key.set(k);
        }
        let norm = if e == 1 { p1 } else { p0 }.sqrt();
        bond = [psi[e][0] / norm, psi[e][1] / norm];
    }
    key
}

fn apply_emit(psi: &mut [[f64; 2]; 2], r: [[f64; 2]; 2]) {
    for b in 0..2 {
        let (x0, x1) = (psi[0][b], psi[1][b]);
        psi[0][b] = r[0][0] * x0 + r[0][1] * x1;
        psi[1][b] = r[1][0] * x0 + r[1][1] * x1;
    }
}

/// RNG for chunk `chunk` of a sampling call seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic child seed: word `index` of stream `tag` under `master`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut rng = stream_rng(master, tag);
    rng.set_word_pos(index as u128 * 2);
    rng.gen()
}

pub fn sample(
    spec: &AnsatzSpec,
    theta: &ParameterVector,
    shots: u64,
    seed: u64,
) -> Result<SampleHistogram, SamplerError> {
    if shots == 0 {
        return Err(SamplerError::NoShots);
    }
    spec.check_theta(theta)?;
    spec.check_register()?;
    let chain = match spec.family {
        AnsatzFamily::Ra => Some(RaChain::new(spec.num_output_bits, &theta.0)),
        AnsatzFamily::By => None,
    };
    let chunks = shots.div_ceil(SHOTS_PER_CHUNK);
    let parts: Vec<SampleHistogram> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let n = SHOTS_PER_CHUNK.min(shots - c * SHOTS_PER_CHUNK);
            let mut hist = SampleHistogram::new();
            for _ in 0..n {
                let key = match &chain {
                    Some(chain) => chain.shot(&mut rng),
                    None => by_shot(&theta.0, &mut rng),
                };
                hist.add(key, 1);
            }
            hist
        })
        .collect();
    let mut out = SampleHistogram::new();
    for part in parts {
        out.merge(part);
    }
    Ok(out)
}

/// Multinomial draw from the full RA statevector. Same distribution as
/// [`sample`], different use of the random stream.
pub fn sample_statevector(
    spec: &AnsatzSpec,
    theta: &ParameterVector,
    shots: u64,
    seed: u64,
) -> Result<SampleHistogram, SamplerError> {
    if shots == 0 {
        return Err(SamplerError::NoShots);
    }
    let psi = ra_statevector(spec, theta)?;
    let mut cdf = Vec::with_capacity(psi.len());
    let mut acc = 0.0;
    for a in &psi {
        acc += a * a;
        cdf.push(acc);
    }
    let q = spec.num_output_bits;
    let mut rng = stream_rng(seed, 0);
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..shots {
        let u = rng.gen::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(psi.len() - 1);
        *counts.entry(idx).or_insert(0) += 1;
    }
    let mut hist = SampleHistogram::new();
    for (idx, c) in counts {
        let bits: Vec<bool> = (0..q).map(|j| (idx >> (q - 1 - j)) & 1 == 1).collect();
        hist.add(BitKey::from_bits(&bits), c);
    }
    Ok(hist)
}

/// First layer 0, second layer π/2: the CNOT chain sees only |0…0⟩, and the
/// last layer puts every qubit in (|0⟩+|1⟩)/√2.
pub fn uniform_init(spec: &AnsatzSpec) -> ParameterVector {
    let q = spec.num_output_bits;
    match spec.family {
        AnsatzFamily::Ra => {
            let mut v = vec![0.0; q];
            v.extend(std::iter::repeat(PI / 2.0).take(q));
            ParameterVector(v)
        }
        AnsatzFamily::By => ParameterVector((0..q).flat_map(|_| [0.0, PI / 2.0]).collect()),
    }
}

/// Angles i.i.d. uniform on [0, π].
pub fn random_init(spec: &AnsatzSpec, seed: u64) -> ParameterVector {
    let mut rng = stream_rng(seed, 0);
    ParameterVector((0..spec.num_parameters()).map(|_| rng.gen::<f64>() * PI).collect())
}

/// Angles that prepare `target` deterministically: 0 or π on the last
/// rotation of each qubit, everything else 0.
pub fn biased_init(spec: &AnsatzSpec, target: &[bool]) -> Result<ParameterVector, SamplerError> {
    let q = spec.num_output_bits;
    if target.len() != q {
        return Err(SamplerError::LengthMismatch { expected: q, found: target.len() });
    }
    let angle = |b: bool| if b { PI } else { 0.0 };
    Ok(match spec.family {
        AnsatzFamily::Ra => {
            let mut v = vec![0.0; q];
            v.extend(target.iter().map(|&b| angle(b)));
            ParameterVector(v)
        }
        AnsatzFamily::By => ParameterVector(target.iter().flat_map(|&b| [0.0, angle(b)]).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ra(q: usize) -> AnsatzSpec {
        AnsatzSpec::new(AnsatzFamily::Ra, q)
    }

    #[test]
    fn single_qubit_half_turn() {
        let psi = ra_statevector(&ra(1), &ParameterVector(vec![0.0, PI / 2.0])).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((psi[0] - h).abs() < 1e-12 && (psi[1] - h).abs() < 1e-12);
    }

    #[test]
    fn identity_circuit() {
        let psi = ra_statevector(&ra(3), &ParameterVector(vec![0.0; 6])).unwrap();
        assert_eq!(psi[0], 1.0);
        assert!(psi[1..].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn uniform_init_layout() {
        let t = uniform_init(&ra(3));
        assert_eq!(t.0, vec![0.0, 0.0, 0.0, PI / 2.0, PI / 2.0, PI / 2.0]);
        let psi = ra_statevector(&ra(2), &uniform_init(&ra(2))).unwrap();
        assert!(psi.iter().all(|a| (a - 0.5).abs() < 1e-12));
    }

    /// Dense reference: gates applied one by one to a generic statevector.
    fn naive_statevector(q: usize, theta: &[f64]) -> Vec<f64> {
        let mut psi = vec![0.0; 1 << q];
        psi[0] = 1.0;
        let bit = |idx: usize, j: usize| (idx >> (q - 1 - j)) & 1;
        let apply_ry = |psi: &mut Vec<f64>, j: usize, t: f64| {
            let r = ry(t);
            let mut out = vec![0.0; psi.len()];
            for (idx, &amp) in psi.iter().enumerate() {
                let b = bit(idx, j);
                let flipped = idx ^ (1 << (q - 1 - j));
                out[idx] += r[b][b] * amp;
                out[flipped] += r[1 - b][b] * amp;
            }
            *psi = out;
        };
        for j in 0..q {
            apply_ry(&mut psi, j, theta[j]);
        }
        for j in 0..q.saturating_sub(1) {
            let mut out = vec![0.0; psi.len()];
            for (idx, &amp) in psi.iter().enumerate() {
                let target = if bit(idx, j) == 1 { idx ^ (1 << (q - 2 - j)) } else { idx };
                out[target] += amp;
            }
            psi = out;
        }
        for j in 0..q {
            apply_ry(&mut psi, j, theta[q + j]);
        }
        psi
    }

    #[test]
    fn statevector_matches_gate_by_gate() {
        let mut rng = stream_rng(3, 0);
        for q in 1..=6 {
            let theta: Vec<f64> = (0..2 * q).map(|_| rng.gen::<f64>() * 2.0 * PI).collect();
            let fast = ra_statevector(&ra(q), &ParameterVector(theta.clone())).unwrap();
            let slow = naive_statevector(q, &theta);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chain_marginals_match_statevector() {
        // exact prefix probabilities from the chain equal statevector sums
        let q = 5;
        let mut rng = stream_rng(11, 0);
        let theta: Vec<f64> = (0..2 * q).map(|_| rng.gen::<f64>() * PI).collect();
        let psi = ra_statevector(&ra(q), &ParameterVector(theta.clone())).unwrap();
        let chain = RaChain::new(q, &theta);
        assert!((chain.right[0][0][0] - 1.0).abs() < 1e-12);
        let p_first_one: f64 = psi.iter().enumerate().filter(|(i, _)| i >> (q - 1) == 1).map(|(_, a)| a * a).sum();
        let a = chain.first[0];
        let r = chain.second[0];
        let env = chain.right[1];
        let v = [a[0] * r[1][0], a[1] * r[1][1]];
        let w1 = v[0] * v[0] * env[0][0] + 2.0 * v[0] * v[1] * env[0][1] + v[1] * v[1] * env[1][1];
        assert!((w1 - p_first_one).abs() < 1e-12);
    }

    #[test]
    fn too_many_qubits() {
        let spec = ra(25);
        let theta = ParameterVector(vec![0.0; 50]);
        assert!(matches!(ra_statevector(&spec, &theta), Err(SamplerError::TooManyQubits { qubits: 25, cap: 24 })));
        assert!(sample(&spec.with_cap(30), &theta, 1, 0).is_ok());
        assert_eq!(spec.with_cap(30).statevector_cap, 27);
    }

    #[test]
    fn basis_angles_are_deterministic() {
        let target = [true, false, true, true, false];
        for family in [AnsatzFamily::Ra, AnsatzFamily::By] {
            let spec = AnsatzSpec::new(family, 5);
            let theta = biased_init(&spec, &target).unwrap();
            let hist = sample(&spec, &theta, 500, 9).unwrap();
            assert_eq!(hist.unique_count(), 1);
            assert_eq!(hist.counts.keys().next().unwrap().bits(), target.to_vec());
        }
    }

    #[test]
    fn seeds_reproduce() {
        let spec = ra(8);
        let theta = random_init(&spec, 4);
        assert_eq!(theta, random_init(&spec, 4));
        assert_ne!(theta, random_init(&spec, 5));
        assert!(theta.0.iter().all(|&t| (0.0..=PI).contains(&t)));
        assert_eq!(sample(&spec, &theta, 10_000, 1).unwrap(), sample(&spec, &theta, 10_000, 1).unwrap());
    }

    #[test]
    fn bit_key_round_trip() {
        let bits: Vec<bool> = (0..130).map(|i| i % 3 == 0).collect();
        let key = BitKey::from_bits(&bits);
        assert_eq!(key.bits(), bits);
        let json = serde_json::to_string(&key).unwrap();
        assert_eq!(serde_json::from_str::<BitKey>(&json).unwrap(), key);
        assert!(BitKey::from_bits(&[false, true]) < BitKey::from_bits(&[true, false]));
    }
}
