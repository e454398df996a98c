//! Derivative-free optimizers for the sampled loss: SPSA with resampling and
//! an implicit-filtering style stencil search.
//!
//! Objectives receive an evaluation id along with θ. Ids are handed out in
//! a fixed order, so a noisy objective that seeds itself from the id makes the
//! whole trajectory reproducible even though evaluations run in parallel.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::OptimizerError;
use crate::sampler::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spsa,
    Imfil,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaConfig {
    /// `None` calibrates a so the first update moves about `target_step` per coordinate.
    pub a: Option<f64>,
    pub c: f64,
    /// Stability constant; `None` means 0.1·max_iterations.
    #[serde(rename = "A")]
    pub big_a: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub resamplings: usize,
    pub target_step: f64,
    pub calibration_pairs: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            a: None,
            c: 0.1,
            big_a: None,
            alpha: 0.602,
            gamma: 0.101,
            resamplings: 1,
            target_step: 0.1,
            calibration_pairs: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImfilConfig {
    pub initial_scale: f64,
    pub scale_decay: f64,
    pub min_scale: f64,
    pub max_stencil_failures: usize,
}

impl Default for ImfilConfig {
    fn default() -> Self {
        Self { initial_scale: 0.5, scale_decay: 0.5, min_scale: 1e-4, max_stencil_failures: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub max_iterations: usize,
    pub convergence_eps: f64,
    pub convergence_window: usize,
    pub spsa: SpsaConfig,
    pub imfil: ImfilConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Imfil,
            max_iterations: 500,
            convergence_eps: 1e-3,
            convergence_window: 50,
            spsa: SpsaConfig::default(),
            imfil: ImfilConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |msg: &str| Err(OptimizerError::InvalidConfig(msg.to_string()));
        if self.convergence_window == 0 {
            return bad("convergence_window must be at least 1");
        }
        if !(self.convergence_eps >= 0.0) {
            return bad("convergence_eps must be nonnegative");
        }
        let s = &self.spsa;
        if s.resamplings == 0 {
            return bad("spsa.resamplings must be at least 1");
        }
        if !(s.c > 0.0) || s.a.is_some_and(|a| !(a > 0.0)) || s.big_a.is_some_and(|x| !(x >= 0.0)) {
            return bad("spsa gains must be positive");
        }
        if !(s.target_step > 0.0) || s.calibration_pairs == 0 {
            return bad("spsa calibration needs a positive target_step and at least one pair");
        }
        let f = &self.imfil;
        if !(f.initial_scale > 0.0 && f.min_scale > 0.0 && f.min_scale <= f.initial_scale) {
            return bad("imfil scales must be positive with min_scale <= initial_scale");
        }
        if !(f.scale_decay > 0.0 && f.scale_decay < 1.0) {
            return bad("imfil.scale_decay must lie in (0, 1)");
        }
        if f.max_stencil_failures == 0 {
            return bad("imfil.max_stencil_failures must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptStep {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub loss: f64,
    /// ‖ĝ‖ for SPSA.
    pub gradient_norm: Option<f64>,
    /// Stencil scale h for imfil.
    pub scale: Option<f64>,
    /// Objective evaluations spent so far, calibration included.
    pub evaluations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    ScaleExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub theta: Vec<f64>,
    pub steps: Vec<OptStep>,
    pub stop: StopReason,
}

/// Hands out evaluation ids and runs batches of evaluations in parallel.
struct Evaluator<'a, F> {
    f: &'a F,
    next_id: u64,
}

impl<F> Evaluator<'_, F>
where
    F: Fn(&[f64], u64) -> Result<f64, OptimizerError> + Sync,
{
    fn batch(&mut self, points: &[Vec<f64>]) -> Result<Vec<f64>, OptimizerError> {
        let base = self.next_id;
        self.next_id += points.len() as u64;
        points.par_iter().enumerate().map(|(i, p)| (self.f)(p, base + i as u64)).collect()
    }
}

fn rademacher(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn shifted(theta: &[f64], dir: &[f64], scale: f64) -> Vec<f64> {
    theta.iter().zip(dir).map(|(t, d)| t + scale * d).collect()
}

/// SPSA gradient estimate at θ with perturbation size `ck`, averaged over
/// `resamplings` Rademacher directions. Also returns the mean of the
/// evaluated losses.
pub fn spsa_gradient<F>(
    theta: &[f64],
    objective: &F,
    ck: f64,
    resamplings: usize,
    rng: &mut ChaCha8Rng,
    first_eval_id: u64,
) -> Result<(Vec<f64>, f64), OptimizerError>
where
    F: Fn(&[f64], u64) -> Result<f64, OptimizerError> + Sync,
{
    let mut ev = Evaluator { f: objective, next_id: first_eval_id };
    spsa_gradient_inner(theta, &mut ev, ck, resamplings, rng)
}

fn spsa_gradient_inner<F>(
    theta: &[f64],
    ev: &mut Evaluator<'_, F>,
    ck: f64,
    resamplings: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, f64), OptimizerError>
where
    F: Fn(&[f64], u64) -> Result<f64, OptimizerError> + Sync,
{
    let d = theta.len();
    let deltas: Vec<Vec<f64>> = (0..resamplings).map(|_| rademacher(rng, d)).collect();
    let points: Vec<Vec<f64>> =
        deltas.iter().flat_map(|delta| [shifted(theta, delta, ck), shifted(theta, delta, -ck)]).collect();
    let values = ev.batch(&points)?;
    let mut grad = vec![0.0; d];
    for (delta, pair) in deltas.iter().zip(values.chunks(2)) {
        let slope = (pair[0] - pair[1]) / (2.0 * ck * resamplings as f64);
        for (g, x) in grad.iter_mut().zip(delta) {
            *g += slope * x;
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok((grad, mean))
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn spsa_gain_a<F>(
    theta: &[f64],
    ev: &mut Evaluator<'_, F>,
    cfg: &SpsaConfig,
    big_a: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, OptimizerError>
where
    F: Fn(&[f64], u64) -> Result<f64, OptimizerError> + Sync,
{
    if let Some(a) = cfg.a {
        return Ok(a);
    }
    // mean |ĝ_i| from independent single-pair estimates at the start point
    let mut total = 0.0;
    for _ in 0..cfg.calibration_pairs {
        let (g, _) = spsa_gradient_inner(theta, ev, cfg.c, 1, rng)?;
        if !all_finite(&g) {
            return Err(OptimizerError::NonFiniteLoss(0));
        }
        total += g.iter().map(|x| x.abs()).sum::<f64>() / g.len().max(1) as f64;
    }
    let magnitude = total / cfg.calibration_pairs as f64;
    let scale = (big_a + 1.0).powf(cfg.alpha);
    Ok(if magnitude > 0.0 { cfg.target_step * scale / magnitude } else { cfg.target_step * scale })
}

fn run_spsa<F>(
    theta: &mut Vec<f64>,
    ev: &mut Evaluator<'_, F>,
    cfg: &OptimizerConfig,
    seed: u64,
    step_done: &mut dyn FnMut(OptStep, &[f64]) -> Result<bool, OptimizerError>,
) -> Result<StopReason, OptimizerError>
where
    F: Fn(&[f64], u64) -> Result<f64, OptimizerError> + Sync,
{
    let s = &cfg.spsa;
    let big_a = s.big_a.unwrap_or(0.1 * cfg.max_iterations as f64);
    let mut rng = stream_rng(seed, 0x5b5a);
    let a = spsa_gain_a(theta, ev, s, big_a, &mut rng)?;
    for k in 0..cfg.max_iterations {
        let ck = s.c / (k as f64 + 1.0).powf(s.gamma);
        let mut ak = a / (big_a + k as f64 + 1.0).powf(s.alpha);
        let (mut grad, mut loss) = spsa_gradient_inner(theta, ev, ck, s.resamplings, &mut rng)?;
        if !(all_finite(&grad) && loss.is_finite()) {
            ak *= 0.5;
            (grad, loss) = spsa_gradient_inner(theta, ev, ck, s.resamplings, &mut rng)?;
            if !(all_finite(&grad) && loss.is_finite()) {
                return Err(OptimizerError::NonFiniteLoss(k));
            }
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= ak * g;
        }
        let step = OptStep {
            iteration: k,
            theta: theta.clone(),
            loss,
            gradient_norm: Some(grad.iter().map(|g| g * g).sum::<f64>().sqrt()),
            scale: None,
            evaluations: ev.next_id,
        };
        if step_done(step, theta)? {
            return Ok(StopReason::Converged);
        }
    }
    Ok(StopReason::MaxIterations)
}

fn run_imfil<F>(
    theta: &mut Vec<f64>,
    ev: &mut Evaluator<'_, F>,
    cfg: &OptimizerConfig,
    step_done: &mut dyn FnMut(OptStep, &[f64]) -> Result<bool, OptimizerError>,
) -> Result<StopReason, OptimizerError>
where
    F: Fn(&[f64], u64) -> Result<f64, OptimizerError> + Sync,
{
    let f = &cfg.imfil;
    let d = theta.len();
    let mut h = f.initial_scale;
    let mut failures = 0;
    let finite_or_inf = |x: f64| if x.is_finite() { x } else { f64::INFINITY };
    for k in 0..cfg.max_iterations {
        if h < f.min_scale {
            return Ok(StopReason::ScaleExhausted);
        }
        // center first, then +h and −h along each coordinate
        let mut points = Vec::with_capacity(2 * d + 1);
        points.push(theta.clone());
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut p = theta.clone();
                p[i] += sign * h;
                points.push(p);
            }
        }
        let values: Vec<f64> = ev.batch(&points)?.into_iter().map(finite_or_inf).collect();
        let center = values[0];
        let grad: Vec<f64> = (0..d).map(|i| (values[1 + 2 * i] - values[2 + 2 * i]) / (2.0 * h)).collect();

        let (best_idx, best_val) =
            values.iter().enumerate().skip(1).fold((0, center), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let mut candidate: Option<(Vec<f64>, f64)> = (best_idx > 0).then(|| (points[best_idx].clone(), best_val));

        let gmax = grad.iter().filter(|g| g.is_finite()).fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax > 0.0 && all_finite(&grad) {
            let p: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - h * g / gmax).collect();
            let v = finite_or_inf(ev.batch(std::slice::from_ref(&p))?[0]);
            if v < center && candidate.as_ref().map_or(true, |c| v < c.1) {
                candidate = Some((p, v));
            }
        }

        let loss = match candidate {
            Some((p, v)) => {
                *theta = p;
                failures = 0;
                v
            }
            None => {
                failures += 1;
                if failures >= f.max_stencil_failures {
                    h *= f.scale_decay;
                    failures = 0;
                }
                center
            }
        };
        if !loss.is_finite() {
            return Err(OptimizerError::NonFiniteLoss(k));
        }
        let step = OptStep {
            iteration: k,
            theta: theta.clone(),
            loss,
            gradient_norm: None,
            scale: Some(h),
            evaluations: ev.next_id,
        };
        if step_done(step, theta)? {
            return Ok(StopReason::Converged);
        }
    }
    Ok(StopReason::MaxIterations)
}

/// Tracks the running mean of the last `window` losses and reports when it
/// has moved by at most ε over one window.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    window: usize,
    eps: f64,
    losses: Vec<f64>,
    means: Vec<f64>,
}

impl ConvergenceMonitor {
    pub fn new(window: usize, eps: f64) -> Self {
        Self { window: window.max(1), eps, losses: Vec::new(), means: Vec::new() }
    }

    /// Records a loss; true once the run should stop.
    pub fn push(&mut self, loss: f64) -> bool {
        self.losses.push(loss);
        let start = self.losses.len().saturating_sub(self.window);
        let tail = &self.losses[start..];
        self.means.push(tail.iter().sum::<f64>() / tail.len() as f64);
        let s = self.means.len() - 1;
        s >= self.window && (self.means[s] - self.means[s - self.window]).abs() <= self.eps
    }

    pub fn running_means(&self) -> &[f64] {
        &self.means
    }
}

/// Runs the configured optimizer from `init`. `on_step` sees every step in
/// order; returning an error aborts the run.
pub fn run_optimizer<F>(
    init: &[f64],
    objective: &F,
    cfg: &OptimizerConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&OptStep) -> Result<(), OptimizerError>,
) -> Result<OptimizerResult, OptimizerError>
where
    F: Fn(&[f64], u64) -> Result<f64, OptimizerError> + Sync,
{
    cfg.validate()?;
    let mut theta = init.to_vec();
    let mut steps = Vec::new();
    if cfg.max_iterations == 0 {
        return Ok(OptimizerResult { theta, steps, stop: StopReason::MaxIterations });
    }
    let mut ev = Evaluator { f: objective, next_id: 0 };
    let mut monitor = ConvergenceMonitor::new(cfg.convergence_window, cfg.convergence_eps);
    let mut step_done = |step: OptStep, _: &[f64]| -> Result<bool, OptimizerError> {
        on_step(&step)?;
        let converged = monitor.push(step.loss);
        steps.push(step);
        Ok(converged)
    };
    let stop = match cfg.method {
        Method::Spsa => run_spsa(&mut theta, &mut ev, cfg, seed, &mut step_done)?,
        Method::Imfil => run_imfil(&mut theta, &mut ev, cfg, &mut step_done)?,
    };
    Ok(OptimizerResult { theta, steps, stop })
}
