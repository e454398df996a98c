//! The outer optimization loop: sample the ansatz, decode and score the
//! shots, form the ensemble loss and hand it to the optimizer. Also run
//! configuration, presets, run records and batch mode.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canon::CanonicalForm;
use crate::chem::{fingerprint, DrugScorer, LossWeights, PlogpScorer, Scorer};
use crate::codec::{encode_tokens, split_tokens, MoleculeBitstring, VocabularyPreset};
use crate::ensemble::{stats_from_average, weighted_mean, LossConfig, MoleculeEvaluator, RegForm};
use crate::error::{ChemError, Error, OptimizerError, Result};
use crate::optimizers::{run_optimizer, ImfilConfig, Method, OptStep, OptimizerConfig, SpsaConfig, StopReason};
use crate::refspace::ReferenceSpace;
use crate::sampler::{
    biased_init, derive_seed, random_init, sample, uniform_init, AnsatzFamily, AnsatzSpec, BitKey,
    ParameterVector, DEFAULT_STATEVECTOR_CAP,
};
use crate::selfies::{decode_molecule, TokenTable};

/// Seed stream tags.
const TAG_INIT: u64 = 1;
const TAG_EVAL: u64 = 2;
const TAG_MONITOR: u64 = 3;
const TAG_OPTIMIZER: u64 = 4;

/// Number of equal iteration windows reported for plotting.
pub const PHASE_WINDOWS: usize = 6;
/// Rows in the summary's best-molecule table.
pub const BEST_TABLE_LEN: usize = 20;

/// Ruxolitinib, 35 tokens of Table A.2 padded with five `[C]` that the
/// decoder ignores once the last ring closes.
pub const RUXOLITINIB_40: &str = "[N][#C][C][C][Branch1][Branch2][C][C][C][C][C][Ring1][Branch1][N][C][=C]\
[Branch1][=C][C][=N][C][=N][C][=C][Ring1][=Branch1][C][=C][N][Ring1][Branch1][C][=N][Ring1][=C][C][C][C][C][C]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Uniform,
    Random,
    /// `target` is either a 0/1 string of the full register or a token
    /// string such as `[C][C][O]`.
    Biased { target: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScorerConfig {
    Plogp,
    Drug {
        alpha: f64,
        beta: f64,
        gamma: f64,
        /// Token string of the similarity reference; needed when gamma > 0.
        #[serde(default)]
        reference: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    /// Target value. `None` takes the optimum of a supplied reference space.
    #[serde(default)]
    pub p0: Option<f64>,
    pub lambda: f64,
    #[serde(default)]
    pub reg_form: RegForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub vocabulary: VocabularyPreset,
    pub num_tokens: usize,
    pub ansatz: AnsatzFamily,
    #[serde(default = "default_cap")]
    pub statevector_cap: usize,
    pub init: InitMode,
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    pub scorer: ScorerConfig,
    pub loss: LossSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Directory for the JSONL rows and summary; nothing is written when unset.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_name() -> String {
    "custom".into()
}

fn default_cap() -> usize {
    DEFAULT_STATEVECTOR_CAP
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn ansatz_spec(&self) -> AnsatzSpec {
        let q = self.num_tokens * self.vocabulary.vocabulary().bits_per_token();
        AnsatzSpec::new(self.ansatz, q).with_cap(self.statevector_cap)
    }

    pub fn build_scorer(&self) -> Result<Arc<dyn Scorer>> {
        Ok(match &self.scorer {
            ScorerConfig::Plogp => Arc::new(PlogpScorer),
            ScorerConfig::Drug { alpha, beta, gamma, reference } => {
                let weights = LossWeights::new(*alpha, *beta, *gamma)?;
                let reference = match reference {
                    Some(text) => {
                        let tokens = split_tokens(text)?;
                        let g = decode_molecule(&tokens)?;
                        if !g.is_valid() {
                            return Err(ChemError::BadReference(text.clone()).into());
                        }
                        Some(fingerprint(&g)?)
                    }
                    None => None,
                };
                Arc::new(DrugScorer::new(weights, reference)?)
            }
        })
    }

    fn target_bits(&self, target: &str) -> Result<Vec<bool>> {
        let spec = self.ansatz_spec();
        let vocab = self.vocabulary.vocabulary();
        let trimmed = target.trim();
        if !trimmed.is_empty() && trimmed.bytes().all(|b| b == b'0' || b == b'1') {
            return Ok(MoleculeBitstring::parse(trimmed, vocab.bits_per_token())?.bits().to_vec());
        }
        let tokens = split_tokens(trimmed)?;
        let bits = encode_tokens(&tokens, &vocab, self.num_tokens)?;
        if bits.len() != spec.num_output_bits {
            return Err(Error::Config("biased target does not fill the register".into()));
        }
        Ok(bits.bits().to_vec())
    }

    /// Every check that can fail before compute starts.
    pub fn validate(&self) -> Result<()> {
        if self.num_tokens == 0 {
            return Err(Error::Config("num_tokens must be at least 1".into()));
        }
        if self.shots == 0 {
            return Err(Error::Config("shots must be at least 1".into()));
        }
        if !(self.loss.lambda.is_finite() && self.loss.lambda >= 0.0) {
            return Err(Error::Config("loss.lambda must be finite and nonnegative".into()));
        }
        if self.loss.p0.is_some_and(|p| !p.is_finite()) {
            return Err(Error::Config("loss.p0 must be finite".into()));
        }
        self.ansatz_spec().check_register()?;
        self.optimizer.validate()?;
        self.build_scorer()?;
        if let InitMode::Biased { target } = &self.init {
            let bits = self.target_bits(target)?;
            if bits.len() != self.ansatz_spec().num_output_bits {
                return Err(Error::Config(format!(
                    "biased target has {} bits, register has {}",
                    bits.len(),
                    self.ansatz_spec().num_output_bits
                )));
            }
            let key = BitKey::from_bits(&bits);
            let table = TokenTable::from_vocabulary(&self.vocabulary.vocabulary())?;
            let evaluator = MoleculeEvaluator::new(table, Arc::new(PlogpScorer));
            if !evaluator.decode(&key).is_valid() {
                return Err(Error::Config("biased target does not decode to a molecule".into()));
            }
        }
        Ok(())
    }

    pub fn initial_theta(&self) -> Result<ParameterVector> {
        let spec = self.ansatz_spec();
        Ok(match &self.init {
            InitMode::Uniform => uniform_init(&spec),
            InitMode::Random => random_init(&spec, derive_seed(self.seed, TAG_INIT, 0)),
            InitMode::Biased { target } => biased_init(&spec, &self.target_bits(target)?)?,
        })
    }

    /// Target value, from the config or the optimum of `reference`.
    pub fn resolve_p0(&self, reference: Option<&ReferenceSpace>) -> Result<f64> {
        if let Some(p0) = self.loss.p0 {
            return Ok(p0);
        }
        let reference = reference.ok_or_else(|| Error::Config("loss.p0 unset and no reference space given".into()))?;
        reference.check_scope(self.vocabulary, self.num_tokens, &self.build_scorer()?.id())?;
        reference.optimum().map(|e| e.score).ok_or_else(|| Error::Config("reference space has no valid molecules".into()))
    }
}

pub const PRESET_NAMES: [&str; 10] = [
    "plogp_k6",
    "plogp_k7",
    "plogp_k8",
    "plogp_k9",
    "drug_k6",
    "drug_k7",
    "drug_k8",
    "drug_k9",
    "jak2_40tok_unbiased",
    "jak2_40tok_biased",
];

/// Optimum of each small-space preset, taken from full enumeration and
/// rounded to four decimals. Tests check these against fresh enumerations.
fn preset_p0(name: &str) -> Option<f64> {
    Some(match name {
        "plogp_k6" => -2.5866,
        "plogp_k7" => -2.9767,
        "plogp_k8" => -3.3668,
        "plogp_k9" => -3.7569,
        "drug_k6" => 0.5100,
        "drug_k7" => 0.4961,
        "drug_k8" => 0.4894,
        "drug_k9" => 0.4615,
        _ => return None,
    })
}

fn small_space_optimizer() -> OptimizerConfig {
    OptimizerConfig {
        method: Method::Imfil,
        max_iterations: 300,
        convergence_eps: 1e-3,
        convergence_window: 50,
        spsa: SpsaConfig::default(),
        imfil: ImfilConfig::default(),
    }
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let small = |k: usize, scorer: ScorerConfig| RunConfig {
        name: name.to_string(),
        vocabulary: VocabularyPreset::Table2x3,
        num_tokens: k,
        ansatz: AnsatzFamily::Ra,
        statevector_cap: 27,
        init: InitMode::Uniform,
        shots: 1024,
        seed: 0,
        scorer,
        loss: LossSection { p0: preset_p0(name), lambda: 1.0, reg_form: RegForm::OneMinusSumSq },
        optimizer: small_space_optimizer(),
        output: None,
    };
    let drug_small = ScorerConfig::Drug { alpha: 2.0, beta: 1.0, gamma: 0.0, reference: None };
    let jak2 = |init: InitMode| RunConfig {
        name: name.to_string(),
        vocabulary: VocabularyPreset::Table2x4,
        num_tokens: 40,
        ansatz: AnsatzFamily::By,
        statevector_cap: DEFAULT_STATEVECTOR_CAP,
        init,
        shots: 10_240,
        seed: 0,
        scorer: ScorerConfig::Drug { alpha: 2.0, beta: 1.0, gamma: 2.0, reference: Some(RUXOLITINIB_40.into()) },
        // the optimum of a 2^160 space is unknown; the loss floor is 0
        loss: LossSection { p0: Some(0.0), lambda: 1.0, reg_form: RegForm::OneMinusSumSq },
        optimizer: OptimizerConfig {
            method: Method::Spsa,
            max_iterations: 200,
            convergence_eps: 1e-4,
            convergence_window: 50,
            spsa: SpsaConfig { resamplings: 50, ..SpsaConfig::default() },
            imfil: ImfilConfig::default(),
        },
        output: None,
    };
    Ok(match name {
        "plogp_k6" => small(6, ScorerConfig::Plogp),
        "plogp_k7" => small(7, ScorerConfig::Plogp),
        "plogp_k8" => small(8, ScorerConfig::Plogp),
        "plogp_k9" => small(9, ScorerConfig::Plogp),
        "drug_k6" => small(6, drug_small),
        "drug_k7" => small(7, drug_small),
        "drug_k8" => small(8, drug_small),
        "drug_k9" => small(9, drug_small),
        "jak2_40tok_unbiased" => jak2(InitMode::Uniform),
        "jak2_40tok_biased" => jak2(InitMode::Biased { target: RUXOLITINIB_40.into() }),
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSoFar {
    pub canonical: CanonicalForm,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    /// 0 is the initial sample; optimizer steps start at 1.
    pub iteration: usize,
    /// Loss reported by the optimizer for this step; the monitor loss at 0.
    pub loss: f64,
    pub p_m: f64,
    pub purity: f64,
    /// Monitor-sample loss at the step's θ.
    pub monitor_loss: f64,
    pub cumulative_unique: usize,
    pub best: Option<BestSoFar>,
    pub theta_digest: String,
    pub evaluations: u64,
}

/// One distinct valid molecule seen during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedMolecule {
    pub canonical: CanonicalForm,
    pub score: f64,
    /// Iteration of the first evaluation that sampled it.
    pub first_iteration: usize,
    /// Bitstring that first produced it.
    pub bits: BitKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub vocabulary: VocabularyPreset,
    pub num_tokens: usize,
    pub scorer_id: String,
    pub p0: f64,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
    pub iterations: usize,
    pub evaluations: u64,
    pub unique_molecules: usize,
    /// Distinct sampled bitstrings, invalid decodings included. Absent for
    /// registers wider than 64 qubits.
    pub unique_bitstrings: Option<usize>,
    pub final_theta: Vec<f64>,
    pub best_molecules: Vec<LoggedMolecule>,
    /// Inclusive iteration ranges of the six plotting windows.
    pub windows: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<IterationRow>,
    pub summary: RunSummary,
    /// Every distinct valid molecule, ascending by score then canonical form.
    pub molecules: Vec<LoggedMolecule>,
}

impl RunRecord {
    pub fn best(&self) -> Option<&LoggedMolecule> {
        self.molecules.first()
    }

    pub fn rows_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn read(rows_path: &Path, summary_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(rows_path)?;
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        #[derive(Deserialize)]
        struct SummaryFile {
            summary: RunSummary,
            molecules: Vec<LoggedMolecule>,
        }
        let s: SummaryFile =
            serde_json::from_str(&fs::read_to_string(summary_path)?).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self { rows, summary: s.summary, molecules: s.molecules })
    }
}

/// Splits iterations 1..=n into six near-equal inclusive ranges. Empty
/// ranges are dropped when n < 6.
pub fn phase_windows(n: usize) -> Vec<(usize, usize)> {
    (0..PHASE_WINDOWS)
        .filter_map(|w| {
            let start = w * n / PHASE_WINDOWS + 1;
            let end = (w + 1) * n / PHASE_WINDOWS;
            (start <= end).then_some((start, end))
        })
        .collect()
}

/// Window of `iteration`, numbered from 1; the initial sample is window 0.
pub fn window_of(windows: &[(usize, usize)], iteration: usize) -> usize {
    windows.iter().position(|&(s, e)| iteration >= s && iteration <= e).map_or(0, |w| w + 1)
}

#[derive(Debug, Clone)]
struct LogEntry {
    score: f64,
    eval_id: u64,
    iteration: usize,
    bits: BitKey,
}

#[derive(Default)]
struct MoleculeLog {
    entries: BTreeMap<CanonicalForm, LogEntry>,
    /// Every sampled bitstring, invalid ones included; only kept for
    /// registers of at most 64 qubits.
    bitstrings: HashSet<u64>,
}

impl MoleculeLog {
    fn record(&mut self, canonical: &CanonicalForm, entry: LogEntry) {
        match self.entries.get_mut(canonical) {
            Some(e) => {
                if (entry.eval_id, &entry.bits) < (e.eval_id, &e.bits) {
                    *e = entry;
                }
            }
            None => {
                self.entries.insert(canonical.clone(), entry);
            }
        }
    }

    fn best(&self) -> Option<BestSoFar> {
        self.entries
            .iter()
            .min_by(|a, b| a.1.score.total_cmp(&b.1.score).then_with(|| a.0.cmp(b.0)))
            .map(|(c, e)| BestSoFar { canonical: c.clone(), score: e.score })
    }

    fn sorted(&self) -> Vec<LoggedMolecule> {
        let mut v: Vec<LoggedMolecule> = self
            .entries
            .iter()
            .map(|(c, e)| LoggedMolecule {
                canonical: c.clone(),
                score: e.score,
                first_iteration: e.iteration,
                bits: e.bits.clone(),
            })
            .collect();
        v.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.canonical.cmp(&b.canonical)));
        v
    }
}

struct Outputs {
    rows: BufWriter<File>,
    summary: PathBuf,
}

impl Outputs {
    fn open(dir: &Path, name: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let (rows, summary) = output_paths(dir, name, seed);
        Ok(Self { rows: BufWriter::new(File::create(rows)?), summary })
    }

    fn row(&mut self, row: &IterationRow) -> Result<()> {
        serde_json::to_writer(&mut self.rows, row).map_err(|e| Error::Format(e.to_string()))?;
        self.rows.write_all(b"\n")?;
        self.rows.flush()?;
        Ok(())
    }

    fn finish(mut self, record: &RunRecord) -> Result<()> {
        self.rows.flush()?;
        let body = serde_json::json!({ "summary": record.summary, "molecules": record.molecules });
        fs::write(&self.summary, serde_json::to_string_pretty(&body).expect("summary serializes"))?;
        Ok(())
    }
}

/// Paths of the rows file and summary file a run writes into `dir`.
pub fn output_paths(dir: &Path, name: &str, seed: u64) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}_seed{seed}.jsonl")), dir.join(format!("{name}_seed{seed}.summary.json")))
}

/// Builds the evaluator a run would use; batch runs share one so the
/// decode and score caches are reused across seeds.
pub fn evaluator_for(cfg: &RunConfig) -> Result<Arc<MoleculeEvaluator>> {
    let table = TokenTable::from_vocabulary(&cfg.vocabulary.vocabulary())?;
    Ok(Arc::new(MoleculeEvaluator::new(table, cfg.build_scorer()?)))
}

pub fn run_qevo(cfg: &RunConfig, reference: Option<&ReferenceSpace>) -> Result<RunRecord> {
    cfg.validate()?;
    run_with_evaluator(cfg, reference, evaluator_for(cfg)?)
}

pub fn run_with_evaluator(
    cfg: &RunConfig,
    reference: Option<&ReferenceSpace>,
    evaluator: Arc<MoleculeEvaluator>,
) -> Result<RunRecord> {
    cfg.validate()?;
    let p0 = cfg.resolve_p0(reference)?;
    let loss_cfg = LossConfig { p0, lambda: cfg.loss.lambda, reg_form: cfg.loss.reg_form };
    let spec = cfg.ansatz_spec();
    let theta0 = cfg.initial_theta()?;
    let log = Mutex::new(MoleculeLog::default());
    let track_bitstrings = cfg.num_tokens * cfg.vocabulary.vocabulary().bits_per_token() <= 64;
    let iteration = AtomicUsize::new(0);
    let mut outputs = match &cfg.output {
        Some(dir) => Some(Outputs::open(dir, &cfg.name, cfg.seed)?),
        None => None,
    };

    // Samples θ, logs every valid molecule under `eval_id`, returns the stats.
    let measure = |theta: &[f64], seed: u64, eval_id: u64| -> Result<crate::ensemble::EnsembleStats> {
        let hist = sample(&spec, &ParameterVector(theta.to_vec()), cfg.shots, seed)?;
        let evaluated = evaluator.evaluate_all(&hist)?;
        let p_m = weighted_mean(&hist, |k| Ok::<f64, Error>(evaluated[k].score.value))?;
        let it = iteration.load(Ordering::SeqCst);
        let mut log = log.lock().expect("log lock");
        if track_bitstrings {
            log.bitstrings.extend(hist.counts.keys().filter_map(BitKey::short_index));
        }
        for (key, ev) in &evaluated {
            if let Some(c) = &ev.canonical {
                log.record(c, LogEntry { score: ev.score.value, eval_id, iteration: it, bits: key.clone() });
            }
        }
        drop(log);
        Ok(stats_from_average(&hist, p_m, &loss_cfg))
    };

    // Evaluation ids: the optimizer's count from 0; monitor samples use the
    // top half of the id space so the two never collide.
    let monitor_id = |it: usize| (1u64 << 63) | it as u64;
    let monitor = |theta: &[f64], it: usize| measure(theta, derive_seed(cfg.seed, TAG_MONITOR, it as u64), monitor_id(it));

    let make_row = |it: usize, loss: Option<f64>, theta: &[f64], evaluations: u64| -> Result<IterationRow> {
        let stats = monitor(theta, it)?;
        let log = log.lock().expect("log lock");
        Ok(IterationRow {
            iteration: it,
            loss: loss.unwrap_or(stats.loss),
            p_m: stats.p_m,
            purity: stats.purity,
            monitor_loss: stats.loss,
            cumulative_unique: log.entries.len(),
            best: log.best(),
            theta_digest: format!("{:016x}", ParameterVector(theta.to_vec()).digest()),
            evaluations,
        })
    };

    let mut rows = Vec::new();
    let initial = make_row(0, None, &theta0.0, 0)?;
    if let Some(o) = outputs.as_mut() {
        o.row(&initial)?;
    }
    rows.push(initial);
    iteration.store(1, Ordering::SeqCst);

    let objective = |theta: &[f64], id: u64| -> std::result::Result<f64, OptimizerError> {
        measure(theta, derive_seed(cfg.seed, TAG_EVAL, id), id)
            .map(|s| s.loss)
            .map_err(|e| OptimizerError::Objective(e.to_string()))
    };
    let mut row_error: Option<Error> = None;
    let mut last_theta = theta0.0.clone();
    let mut on_step = |step: &OptStep| -> std::result::Result<(), OptimizerError> {
        let it = step.iteration + 1;
        let row = make_row(it, Some(step.loss), &step.theta, step.evaluations)
            .and_then(|row| {
                if let Some(o) = outputs.as_mut() {
                    o.row(&row)?;
                }
                Ok(row)
            })
            .map_err(|e| {
                let msg = e.to_string();
                row_error = Some(e);
                OptimizerError::Objective(msg)
            })?;
        rows.push(row);
        last_theta.clone_from(&step.theta);
        iteration.store(it + 1, Ordering::SeqCst);
        Ok(())
    };
    let result = run_optimizer(&theta0.0, &objective, &cfg.optimizer, derive_seed(cfg.seed, TAG_OPTIMIZER, 0), &mut on_step);

    let (final_theta, stop, error) = match result {
        Ok(r) => (r.theta, Some(r.stop), None),
        Err(e) => (last_theta, None, Some(row_error.take().map_or_else(|| e.to_string(), |e| e.to_string()))),
    };
    let (molecules, unique_bitstrings) = {
        let log = log.lock().expect("log lock");
        (log.sorted(), track_bitstrings.then_some(log.bitstrings.len()))
    };
    let n = rows.len() - 1;
    let record = RunRecord {
        summary: RunSummary {
            name: cfg.name.clone(),
            seed: cfg.seed,
            vocabulary: cfg.vocabulary,
            num_tokens: cfg.num_tokens,
            scorer_id: evaluator.scorer().id(),
            p0,
            stop,
            error: error.clone(),
            iterations: n,
            evaluations: rows.last().map_or(0, |r| r.evaluations),
            unique_molecules: molecules.len(),
            unique_bitstrings,
            final_theta,
            best_molecules: molecules.iter().take(BEST_TABLE_LEN).cloned().collect(),
            windows: phase_windows(n),
        },
        rows,
        molecules,
    };
    if let Some(o) = outputs {
        o.finish(&record)?;
    }
    match error {
        Some(msg) => Err(Error::Optimizer(OptimizerError::Objective(msg))),
        None => Ok(record),
    }
}

/// True iff the run sampled any of the reference's `top_k` molecules.
pub fn success_against_reference(record: &RunRecord, reference: &ReferenceSpace, top_k: usize) -> Result<bool> {
    let s = &record.summary;
    reference.check_scope(s.vocabulary, s.num_tokens, &s.scorer_id)?;
    let top: std::collections::HashSet<&str> = reference.top_k(top_k).iter().map(|e| e.canonical.as_str()).collect();
    Ok(record.molecules.iter().any(|m| top.contains(m.canonical.as_str())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRun {
    pub seed: u64,
    pub best: Option<BestSoFar>,
    pub in_top_k: Option<bool>,
    pub unique_molecules: usize,
    pub unique_bitstrings: Option<usize>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub name: String,
    pub top_k: usize,
    pub runs: Vec<BatchRun>,
    /// Fraction of runs that hit the reference top-k; absent without a reference.
    pub success_rate: Option<f64>,
    pub median_unique_molecules: f64,
    /// Median unique molecules over the reference's valid count.
    pub median_explored_fraction: Option<f64>,
    /// Median distinct bitstrings over the size of the register's space.
    pub median_bitstring_fraction: Option<f64>,
}

/// Runs `cfg` once per seed, in parallel, sharing one evaluation cache.
/// Failed seeds are reported in the summary rather than aborting the batch.
pub fn run_batch(
    cfg: &RunConfig,
    seeds: &[u64],
    reference: Option<&ReferenceSpace>,
    top_k: usize,
) -> Result<(Vec<Result<RunRecord>>, BatchSummary)> {
    cfg.validate()?;
    if let Some(r) = reference {
        r.check_scope(cfg.vocabulary, cfg.num_tokens, &cfg.build_scorer()?.id())?;
    }
    let evaluator = evaluator_for(cfg)?;
    let records: Vec<Result<RunRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let run_cfg = RunConfig { seed, ..cfg.clone() };
            run_with_evaluator(&run_cfg, reference, evaluator.clone())
        })
        .collect();
    let mut runs = Vec::new();
    for (seed, rec) in seeds.iter().zip(&records) {
        runs.push(match rec {
            Ok(r) => BatchRun {
                seed: *seed,
                best: r.best().map(|m| BestSoFar { canonical: m.canonical.clone(), score: m.score }),
                in_top_k: reference.map(|re| success_against_reference(r, re, top_k)).transpose()?,
                unique_molecules: r.summary.unique_molecules,
                unique_bitstrings: r.summary.unique_bitstrings,
                iterations: r.summary.iterations,
                error: None,
            },
            Err(e) => BatchRun {
                seed: *seed,
                best: None,
                in_top_k: reference.map(|_| false),
                unique_molecules: 0,
                unique_bitstrings: None,
                iterations: 0,
                error: Some(e.to_string()),
            },
        });
    }
    let success_rate = reference.map(|_| {
        runs.iter().filter(|r| r.in_top_k == Some(true)).count() as f64 / runs.len().max(1) as f64
    });
    let median_bits: Option<Vec<f64>> = runs.iter().map(|r| r.unique_bitstrings.map(|n| n as f64)).collect();
    let width = cfg.num_tokens * cfg.vocabulary.vocabulary().bits_per_token();
    let median_bitstring_fraction = median_bits.map(|v| median(v) / 2f64.powi(width as i32));
    let median = median(runs.iter().map(|r| r.unique_molecules as f64).collect());
    let summary = BatchSummary {
        name: cfg.name.clone(),
        top_k,
        success_rate,
        median_unique_molecules: median,
        median_explored_fraction: reference.map(|r| median / r.unique_valid() as f64),
        median_bitstring_fraction,
        runs,
    };
    Ok((records, summary))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
