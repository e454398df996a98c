//! Exhaustive enumeration of a k-token space: decode every bitstring,
//! deduplicate by canonical form, score and rank.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canon::{canonical_graph, canonicalize, CanonicalForm};
use crate::chem::Scorer;
use crate::codec::{MoleculeBitstring, VocabularyPreset};
use crate::error::{Error, Result};
use crate::selfies::TokenTable;

/// Largest space the enumerator accepts, in bits.
pub const MAX_ENUMERATION_BITS: usize = 27;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefEntry {
    pub canonical: CanonicalForm,
    pub score: f64,
    /// Number of bitstrings decoding to this molecule.
    pub multiplicity: u64,
    /// Smallest bitstring index that decodes to it.
    pub representative: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpace {
    pub vocabulary: VocabularyPreset,
    pub num_tokens: usize,
    pub bits_per_token: usize,
    pub scorer_id: String,
    /// Valid molecules, ascending by score, ties by canonical form.
    pub ranking: Vec<RefEntry>,
    /// Bitstrings whose decoding is empty or otherwise invalid.
    pub invalid_multiplicity: u64,
}

#[derive(Debug, Clone)]
pub struct EnumerateOptions {
    /// Bitstrings per work unit.
    pub chunk_size: u64,
    /// Distinct molecules held in memory before a sorted run is spilled.
    /// `None` keeps everything in memory.
    pub memory_budget: Option<usize>,
    /// Where spill runs go; the system temp dir when unset.
    pub spill_dir: Option<PathBuf>,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { chunk_size: 1 << 16, memory_budget: None, spill_dir: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tally {
    multiplicity: u64,
    representative: u64,
}

impl Tally {
    fn absorb(&mut self, other: Tally) {
        self.multiplicity += other.multiplicity;
        self.representative = self.representative.min(other.representative);
    }
}

type Partial<K> = (HashMap<K, Tally>, u64);

/// Tallies bitstrings by decoded graph. Many bitstrings decode to the same
/// labelled graph, so canonicalization is deferred to the distinct ones.
fn tally_range(table: &TokenTable, k: usize, start: u64, end: u64) -> Partial<Vec<u8>> {
    let mut map: HashMap<Vec<u8>, Tally> = HashMap::new();
    let mut invalid = 0;
    for index in start..end {
        let g = table.decode_index(index, k);
        if !g.is_valid() {
            invalid += 1;
            continue;
        }
        let t = Tally { multiplicity: 1, representative: index };
        map.entry(g.structure_key()).and_modify(|a| a.absorb(t)).or_insert(t);
    }
    (map, invalid)
}

fn canonical_tallies(table: &TokenTable, k: usize, raw: HashMap<Vec<u8>, Tally>) -> Result<HashMap<String, Tally>> {
    let keyed: Vec<(String, Tally)> = raw
        .into_par_iter()
        .map(|(_, t)| Ok((canonicalize(&table.decode_index(t.representative, k))?.into_string(), t)))
        .collect::<Result<_>>()?;
    let mut out: HashMap<String, Tally> = HashMap::new();
    for (key, t) in keyed {
        out.entry(key).and_modify(|a| a.absorb(t)).or_insert(t);
    }
    Ok(out)
}

fn merge_into<K: std::hash::Hash + Eq>(acc: &mut HashMap<K, Tally>, other: HashMap<K, Tally>) {
    for (key, t) in other {
        acc.entry(key).and_modify(|a| a.absorb(t)).or_insert(t);
    }
}

/// A sorted run on disk: one `canonical\tmultiplicity\trepresentative` line
/// per molecule. Canonical SMILES never contain tabs or newlines.
struct SpillRun {
    path: PathBuf,
}

impl SpillRun {
    fn write(dir: &Path, seq: usize, map: &mut HashMap<String, Tally>) -> Result<Self> {
        let path = dir.join(format!("qevo-refspace-{}-{seq}.run", std::process::id()));
        let mut entries: Vec<_> = map.drain().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut w = BufWriter::new(File::create(&path)?);
        for (key, t) in entries {
            writeln!(w, "{key}\t{}\t{}", t.multiplicity, t.representative)?;
        }
        w.flush()?;
        Ok(Self { path })
    }
}

impl Drop for SpillRun {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn parse_run_line(line: &str) -> Result<(String, Tally)> {
    let mut parts = line.split('\t');
    let bad = || Error::Format(format!("corrupt spill line `{line}`"));
    let key = parts.next().ok_or_else(bad)?.to_string();
    let multiplicity = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let representative = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    Ok((key, Tally { multiplicity, representative }))
}

/// k-way merge of sorted runs plus the in-memory remainder.
fn merge_runs(runs: &[SpillRun], rest: HashMap<String, Tally>) -> Result<Vec<(String, Tally)>> {
    let mut sources: Vec<Box<dyn Iterator<Item = Result<(String, Tally)>>>> = Vec::new();
    for run in runs {
        let reader = BufReader::new(File::open(&run.path)?);
        sources.push(Box::new(
            reader.lines().map(|l| l.map_err(Error::from).and_then(|l| parse_run_line(&l))),
        ));
    }
    let mut rest: Vec<_> = rest.into_iter().collect();
    rest.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    sources.push(Box::new(rest.into_iter().map(Ok)));

    struct Head(String, Tally, usize);
    impl PartialEq for Head {
        fn eq(&self, o: &Self) -> bool {
            self.0 == o.0 && self.2 == o.2
        }
    }
    impl Eq for Head {}
    impl PartialOrd for Head {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Head {
        // reversed for a min-heap
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.cmp(&self.0).then(o.2.cmp(&self.2))
        }
    }

    let mut heap = BinaryHeap::new();
    for (i, src) in sources.iter_mut().enumerate() {
        if let Some(item) = src.next() {
            let (k, t) = item?;
            heap.push(Head(k, t, i));
        }
    }
    let mut out: Vec<(String, Tally)> = Vec::new();
    while let Some(Head(key, t, i)) = heap.pop() {
        match out.last_mut() {
            Some((last, acc)) if *last == key => acc.absorb(t),
            _ => out.push((key, t)),
        }
        if let Some(item) = sources[i].next() {
            let (k, t) = item?;
            heap.push(Head(k, t, i));
        }
    }
    Ok(out)
}

fn rank_order(a: &RefEntry, b: &RefEntry) -> Ordering {
    a.score.total_cmp(&b.score).then_with(|| a.canonical.as_str().cmp(b.canonical.as_str()))
}

pub fn enumerate(
    vocabulary: VocabularyPreset,
    num_tokens: usize,
    scorer: &dyn Scorer,
    opts: &EnumerateOptions,
) -> Result<ReferenceSpace> {
    let vocab = vocabulary.vocabulary();
    let n = vocab.bits_per_token();
    let bits = n * num_tokens;
    if bits > MAX_ENUMERATION_BITS || num_tokens == 0 {
        return Err(Error::SpaceTooLarge { bits, max: MAX_ENUMERATION_BITS });
    }
    let table = TokenTable::from_vocabulary(&vocab)?;
    let total = 1u64 << bits;
    let chunk = opts.chunk_size.max(1);
    let chunks: Vec<(u64, u64)> = (0..total).step_by(chunk as usize).map(|s| (s, (s + chunk).min(total))).collect();

    // Rounds bound the number of in-flight partial maps when spilling.
    let round = match opts.memory_budget {
        Some(_) => rayon::current_num_threads().max(1) * 4,
        None => chunks.len(),
    };
    let spill_dir = opts.spill_dir.clone().unwrap_or_else(std::env::temp_dir);
    let mut runs = Vec::new();
    let mut merged: HashMap<String, Tally> = HashMap::new();
    let mut invalid = 0u64;
    for batch in chunks.chunks(round) {
        let (raw, bad) = batch.par_iter().map(|&(s, e)| tally_range(&table, num_tokens, s, e)).reduce(
            || (HashMap::new(), 0),
            |(a, ia), (b, ib)| {
                let (mut big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
                merge_into(&mut big, small);
                (big, ia + ib)
            },
        );
        let map = canonical_tallies(&table, num_tokens, raw)?;
        invalid += bad;
        merge_into(&mut merged, map);
        if let Some(budget) = opts.memory_budget {
            if merged.len() > budget {
                runs.push(SpillRun::write(&spill_dir, runs.len(), &mut merged)?);
            }
        }
    }
    let tallies: Vec<(String, Tally)> =
        if runs.is_empty() { merged.into_iter().collect() } else { merge_runs(&runs, merged)? };

    let mut ranking: Vec<RefEntry> = tallies
        .into_par_iter()
        .map(|(key, t)| {
            let g = table.decode_index(t.representative, num_tokens);
            let score = if g.is_valid() { scorer.score(&canonical_graph(&g)?.1)? } else { scorer.score(&g)? };
            Ok(RefEntry {
                canonical: CanonicalForm::from_canonical(key),
                score: score.value,
                multiplicity: t.multiplicity,
                representative: t.representative,
            })
        })
        .collect::<Result<_>>()?;
    ranking.par_sort_unstable_by(rank_order);
    Ok(ReferenceSpace {
        vocabulary,
        num_tokens,
        bits_per_token: n,
        scorer_id: scorer.id(),
        ranking,
        invalid_multiplicity: invalid,
    })
}

impl ReferenceSpace {
    pub fn total_bitstrings(&self) -> u64 {
        1u64 << (self.num_tokens * self.bits_per_token)
    }

    pub fn unique_valid(&self) -> usize {
        self.ranking.len()
    }

    /// Distinct decoding classes, with all invalid decodings counted as one.
    pub fn unique_including_invalid(&self) -> usize {
        self.ranking.len() + usize::from(self.invalid_multiplicity > 0)
    }

    pub fn top_k(&self, k: usize) -> &[RefEntry] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    pub fn optimum(&self) -> Option<&RefEntry> {
        self.ranking.first()
    }

    pub fn representative_bits(&self, entry: &RefEntry) -> MoleculeBitstring {
        MoleculeBitstring::from_index(entry.representative, self.num_tokens, self.bits_per_token)
    }

    /// Errors unless this space was built for the same vocabulary, length
    /// and scorer.
    pub fn check_scope(&self, vocabulary: VocabularyPreset, num_tokens: usize, scorer_id: &str) -> Result<()> {
        if self.vocabulary != vocabulary || self.num_tokens != num_tokens || self.scorer_id != scorer_id {
            return Err(Error::ScopeMismatch(format!(
                "reference is {}/k={}/{}, run is {}/k={}/{}",
                self.vocabulary.name(),
                self.num_tokens,
                self.scorer_id,
                vocabulary.name(),
                num_tokens,
                scorer_id
            )));
        }
        Ok(())
    }

    pub fn write_csv(&self, w: &mut impl Write, top_n: usize) -> Result<()> {
        writeln!(w, "rank,canonical,score,multiplicity,bits")?;
        for (i, e) in self.top_k(top_n).iter().enumerate() {
            writeln!(w, "{},{},{:.6},{},{}", i + 1, e.canonical, e.score, e.multiplicity, self.representative_bits(e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(&mut BufReader::new(File::open(path)?))
    }

    /// Layout: magic, u32 header length, JSON header, then per entry
    /// u64 multiplicity, u64 representative, f64 score, u32 length and the
    /// canonical text. Little endian throughout.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::json!({
            "vocabulary": self.vocabulary,
            "num_tokens": self.num_tokens,
            "bits_per_token": self.bits_per_token,
            "scorer_id": self.scorer_id,
            "invalid_multiplicity": self.invalid_multiplicity,
            "entries": self.ranking.len(),
        });
        let header = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for e in &self.ranking {
            w.write_all(&e.multiplicity.to_le_bytes())?;
            w.write_all(&e.representative.to_le_bytes())?;
            w.write_all(&e.score.to_le_bytes())?;
            let text = e.canonical.as_str().as_bytes();
            w.write_all(&(text.len() as u32).to_le_bytes())?;
            w.write_all(text)?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format("not a reference-space cache".into()));
        }
        let header_len = read_u32(r)? as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        #[derive(Deserialize)]
        struct Header {
            vocabulary: VocabularyPreset,
            num_tokens: usize,
            bits_per_token: usize,
            scorer_id: String,
            invalid_multiplicity: u64,
            entries: usize,
        }
        let h: Header = serde_json::from_slice(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut ranking = Vec::with_capacity(h.entries);
        for _ in 0..h.entries {
            let multiplicity = read_u64(r)?;
            let representative = read_u64(r)?;
            let score = f64::from_bits(read_u64(r)?);
            let len = read_u32(r)? as usize;
            let mut text = vec![0u8; len];
            r.read_exact(&mut text)?;
            let text = String::from_utf8(text).map_err(|e| Error::Format(e.to_string()))?;
            ranking.push(RefEntry { canonical: CanonicalForm::from_canonical(text), score, multiplicity, representative });
        }
        Ok(Self {
            vocabulary: h.vocabulary,
            num_tokens: h.num_tokens,
            bits_per_token: h.bits_per_token,
            scorer_id: h.scorer_id,
            ranking,
            invalid_multiplicity: h.invalid_multiplicity,
        })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"QEVOREF1";

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::PlogpScorer;

    #[test]
    fn small_space_conserves_bitstrings() {
        let space = enumerate(VocabularyPreset::Table2x3, 3, &PlogpScorer, &EnumerateOptions::default()).unwrap();
        let total: u64 = space.ranking.iter().map(|e| e.multiplicity).sum::<u64>() + space.invalid_multiplicity;
        assert_eq!(total, 512);
        assert_eq!(space.optimum().unwrap().canonical.as_str(), "CCC");
    }

    #[test]
    fn chunking_and_spilling_agree() {
        let base = enumerate(VocabularyPreset::Table2x3, 4, &PlogpScorer, &EnumerateOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = EnumerateOptions { chunk_size: 97, memory_budget: Some(10), spill_dir: Some(dir.path().into()) };
        let spilled = enumerate(VocabularyPreset::Table2x3, 4, &PlogpScorer, &opts).unwrap();
        assert_eq!(base, spilled);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn too_large() {
        let err = enumerate(VocabularyPreset::Table2x3, 10, &PlogpScorer, &EnumerateOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SpaceTooLarge { bits: 30, .. }));
    }

    #[test]
    fn binary_cache_round_trip() {
        let space = enumerate(VocabularyPreset::Table2x3, 3, &PlogpScorer, &EnumerateOptions::default()).unwrap();
        let mut buf = Vec::new();
        space.write_binary(&mut buf).unwrap();
        assert_eq!(ReferenceSpace::read_binary(&mut buf.as_slice()).unwrap(), space);
    }
}
