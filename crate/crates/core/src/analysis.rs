//! Post-processing of runs: PCA over reference fingerprints, projection of
//! sampled molecules, candidate export and per-iteration plot series.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{fingerprint, Fingerprint};
use crate::driver::{phase_windows, window_of, LoggedMolecule, RunRecord};
use crate::error::{Error, Result};
use crate::refspace::ReferenceSpace;
use crate::selfies::TokenTable;

pub const PCA_TOLERANCE: f64 = 1e-9;
const MAX_POWER_ITERATIONS: usize = 100_000;

/// Two leading principal components of a set of fingerprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    /// Variances along the components (covariance eigenvalues).
    pub explained_variance: [f64; 2],
    /// Leading eigenvalue left after removing both components.
    pub third_variance: f64,
    pub samples: usize,
}

/// Dense covariance of bit vectors, `(1/N) Σ x xᵀ − μ μᵀ`.
struct Covariance {
    dim: usize,
    data: Vec<f64>,
}

impl Covariance {
    fn of(fps: &[Fingerprint], mean: &[f64]) -> Self {
        let dim = mean.len();
        let n = fps.len() as f64;
        let mut data = fps
            .par_chunks(4096)
            .map(|chunk| {
                let mut acc = vec![0.0; dim * dim];
                for fp in chunk {
                    let on: Vec<usize> = (0..dim).filter(|&i| fp.get(i)).collect();
                    for &i in &on {
                        for &j in &on {
                            acc[i * dim + j] += 1.0;
                        }
                    }
                }
                acc
            })
            .reduce(
                || vec![0.0; dim * dim],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = data[i * dim + j] / n - mean[i] * mean[j];
            }
        }
        Self { dim, data }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks(self.dim).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    fn rayleigh(&self, v: &[f64]) -> f64 {
        dot(v, &self.apply(v)) / dot(v, v)
    }

    fn deflate(&mut self, lambda: f64, v: &[f64]) {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.data[i * self.dim + j] -= lambda * v[i] * v[j];
            }
        }
    }

    /// Dominant eigenpair by power iteration from a fixed start vector,
    /// with the sign convention applied.
    fn leading(&self) -> (f64, Vec<f64>) {
        // start from the diagonal, which is never orthogonal to the top
        // eigenvector of a positive semidefinite matrix unless it vanishes
        let mut v: Vec<f64> = (0..self.dim).map(|i| self.data[i * self.dim + i] + 1e-3).collect();
        normalize(&mut v);
        for _ in 0..MAX_POWER_ITERATIONS {
            let mut w = self.apply(&v);
            if normalize(&mut w) == 0.0 {
                break;
            }
            let delta = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            if delta < PCA_TOLERANCE {
                break;
            }
        }
        fix_sign(&mut v);
        (self.rayleigh(&v), v)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Makes the largest-magnitude coordinate positive; the first one wins ties.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl PcaModel {
    /// Fits on the given fingerprints, one row per molecule.
    pub fn fit(fps: &[Fingerprint]) -> Result<Self> {
        let distinct: HashSet<&Fingerprint> = fps.iter().collect();
        if distinct.len() < 3 {
            return Err(Error::DegenerateCovariance);
        }
        let dim = fps[0].width();
        let mut mean = vec![0.0; dim];
        for fp in fps {
            for (i, m) in mean.iter_mut().enumerate() {
                if fp.get(i) {
                    *m += 1.0;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= fps.len() as f64);
        let mut cov = Covariance::of(fps, &mean);
        let (l1, v1) = cov.leading();
        cov.deflate(l1, &v1);
        let (l2, v2) = cov.leading();
        cov.deflate(l2, &v2);
        let (l3, _) = cov.leading();
        Ok(Self { mean, components: [v1, v2], explained_variance: [l1, l2], third_variance: l3, samples: fps.len() })
    }

    /// Fits on every molecule of a reference space.
    pub fn fit_reference(reference: &ReferenceSpace) -> Result<Self> {
        let fps = reference_fingerprints(reference)?;
        Self::fit(&fps)
    }

    pub fn project(&self, fp: &Fingerprint) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, comp) in self.components.iter().enumerate() {
            out[k] = (0..fp.width()).map(|i| ((fp.get(i) as u8 as f64) - self.mean[i]) * comp[i]).sum();
        }
        out
    }

    /// Variance of `fps` about the fitted mean along `v` (a Rayleigh quotient).
    pub fn variance_along(&self, fps: &[Fingerprint], v: &[f64]) -> f64 {
        Covariance::of(fps, &self.mean).rayleigh(v)
    }
}

/// Fingerprints of the reference molecules in ranking order.
pub fn reference_fingerprints(reference: &ReferenceSpace) -> Result<Vec<Fingerprint>> {
    let table = TokenTable::from_vocabulary(&reference.vocabulary.vocabulary())?;
    reference
        .ranking
        .par_iter()
        .map(|e| Ok(fingerprint(&table.decode_index(e.representative, reference.num_tokens))?))
        .collect()
}

fn molecule_fingerprint(table: &TokenTable, m: &LoggedMolecule) -> Result<Fingerprint> {
    let bits = m.bits.to_bitstring(table.bits_per_token())?;
    Ok(fingerprint(&table.decode_bitstring(&bits))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub run: String,
    pub seed: u64,
    pub canonical: String,
    pub score: f64,
    pub first_iteration: usize,
    /// Optimization window 1 to 6; the initial sample is window 0.
    pub window: usize,
    pub pc1: f64,
    pub pc2: f64,
}

/// Projects every molecule each run sampled onto the model.
pub fn pca_project(model: &PcaModel, records: &[RunRecord], table: &TokenTable) -> Result<Vec<ProjectionRow>> {
    let mut rows = Vec::new();
    for rec in records {
        let windows = phase_windows(rec.summary.iterations);
        let projected: Vec<Result<ProjectionRow>> = rec
            .molecules
            .par_iter()
            .map(|m| {
                let fp = molecule_fingerprint(table, m)?;
                let [pc1, pc2] = model.project(&fp);
                Ok(ProjectionRow {
                    run: rec.summary.name.clone(),
                    seed: rec.summary.seed,
                    canonical: m.canonical.as_str().to_string(),
                    score: m.score,
                    first_iteration: m.first_iteration,
                    window: window_of(&windows, m.first_iteration),
                    pc1,
                    pc2,
                })
            })
            .collect();
        for r in projected {
            rows.push(r?);
        }
    }
    Ok(rows)
}

pub fn write_projection_csv<W: Write>(w: &mut W, rows: &[ProjectionRow]) -> Result<()> {
    writeln!(w, "run,seed,canonical,score,first_iteration,window,pc1,pc2")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.10},{},{},{:.10},{:.10}",
            r.run, r.seed, r.canonical, r.score, r.first_iteration, r.window, r.pc1, r.pc2
        )?;
    }
    Ok(())
}

/// Top `top_n` distinct molecules over the given records, ascending by score
/// with ties broken by canonical form. A molecule seen in several records
/// keeps its earliest sighting.
pub fn export_candidates(records: &[RunRecord], top_n: usize) -> Vec<LoggedMolecule> {
    let mut merged: BTreeMap<&str, &LoggedMolecule> = BTreeMap::new();
    for rec in records {
        for m in &rec.molecules {
            merged
                .entry(m.canonical.as_str())
                .and_modify(|e| {
                    if (m.first_iteration, &m.bits) < (e.first_iteration, &e.bits) {
                        *e = m;
                    }
                })
                .or_insert(m);
        }
    }
    let mut out: Vec<LoggedMolecule> = merged.into_values().cloned().collect();
    out.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.canonical.cmp(&b.canonical)));
    out.truncate(top_n);
    out
}

pub fn write_candidates_csv<W: Write>(w: &mut W, molecules: &[LoggedMolecule]) -> Result<()> {
    writeln!(w, "rank,canonical,score,first_iteration,bits")?;
    for (i, m) in molecules.iter().enumerate() {
        writeln!(w, "{},{},{:.10},{},{}", i + 1, m.canonical, m.score, m.first_iteration, m.bits)?;
    }
    Ok(())
}

/// Per-iteration plot series: loss and its trailing running mean, purity,
/// ensemble average and cumulative unique molecules.
pub fn write_trace_csv<W: Write>(w: &mut W, record: &RunRecord, running_window: usize) -> Result<()> {
    let windows = phase_windows(record.summary.iterations);
    writeln!(w, "iteration,window,loss,loss_running_mean,monitor_loss,p_m,purity,cumulative_unique")?;
    let window = running_window.max(1);
    let mut sum = 0.0;
    for (i, row) in record.rows.iter().enumerate() {
        sum += row.loss;
        if i >= window {
            sum -= record.rows[i - window].loss;
        }
        let mean = sum / (i + 1).min(window) as f64;
        writeln!(
            w,
            "{},{},{:.10},{:.10},{:.10},{:.10},{:.10},{}",
            row.iteration,
            window_of(&windows, row.iteration),
            row.loss,
            mean,
            row.monitor_loss,
            row.p_m,
            row.purity,
            row.cumulative_unique
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(bits: &[usize]) -> Fingerprint {
        let mut f = Fingerprint::empty(16, 0);
        for &b in bits {
            f.set(b);
        }
        f
    }

    #[test]
    fn degenerate_inputs() {
        let a = fp(&[1, 2]);
        let b = fp(&[3]);
        assert!(matches!(PcaModel::fit(&[a.clone(), b.clone(), a.clone()]), Err(Error::DegenerateCovariance)));
        assert!(PcaModel::fit(&[a, b, fp(&[4, 5])]).is_ok());
    }

    #[test]
    fn components_are_orthonormal_and_ordered() {
        let fps: Vec<Fingerprint> =
            (0..40).map(|i| fp(&[i % 16, (i * 7 + 3) % 16, (i * i) % 13, if i % 3 == 0 { 15 } else { 0 }])).collect();
        let m = PcaModel::fit(&fps).unwrap();
        let [v1, v2] = &m.components;
        assert!((dot(v1, v1) - 1.0).abs() < 1e-8);
        assert!((dot(v2, v2) - 1.0).abs() < 1e-8);
        assert!(dot(v1, v2).abs() < 1e-8);
        assert!(m.explained_variance[0] >= m.explained_variance[1]);
        assert!(m.explained_variance[1] >= m.third_variance - 1e-9);
        assert!((m.variance_along(&fps, v1) - m.explained_variance[0]).abs() < 1e-8);
        for v in [v1, v2] {
            let top = v.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(top > 0.0);
        }
        assert_eq!(m.project(&fps[5]), m.project(&fps[5]));
    }

}
