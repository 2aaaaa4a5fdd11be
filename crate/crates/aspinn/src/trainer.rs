//! Adam training loop over the collocation loss, with per-iteration loss
//! history and periodic test-set metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gradients::{loss_and_grad, loss_only, FlatGradient, GradientError};
use crate::model::{params_per_node, LogCholeskyFactor, ModelParams};
use crate::problems::{DomainKind, PdeProblem};
use crate::sampling::{batches, generate_samples, init_nodes, BatchPlan, BatchSize, SampleSet, SamplingError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Full run configuration. `alpha`/test-set sizes of `None` take the
/// defaults: α = 10·M̃, K = ⌈M/4⌉, K̃ = ⌈M̃/4⌉.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub problem: String,
    /// Nodes per dimension of the initial uniform grid.
    pub node_grid: Vec<usize>,
    pub interior_samples: usize,
    pub boundary_samples: usize,
    pub interior_test: Option<usize>,
    pub boundary_test: Option<usize>,
    pub batch: BatchSize,
    pub alpha: Option<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iterations: usize,
    pub seed: u64,
    pub scale: f64,
    pub eval_every: usize,
    /// Tie factor diagonals and freeze off-diagonals (isotropic zones).
    pub isotropic: bool,
}

impl TrainConfig {
    pub fn defaults(problem: &str) -> Self {
        let spacetime = matches!(problem, "advection1d" | "burgers1d");
        let boundary_samples = if spacetime { 64 + 2 * 32 } else { 4 * 32 };
        Self {
            problem: problem.to_string(),
            node_grid: vec![4, 2],
            interior_samples: 200,
            boundary_samples,
            interior_test: None,
            boundary_test: None,
            batch: BatchSize::Fraction(1.0),
            alpha: None,
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            iterations: 20_000,
            seed: 0,
            scale: 0.5,
            eval_every: 100,
            isotropic: false,
        }
    }

    pub fn effective_alpha(&self) -> f64 {
        self.alpha.unwrap_or(10.0 * self.boundary_samples as f64)
    }

    pub fn effective_interior_test(&self) -> usize {
        self.interior_test
            .unwrap_or_else(|| self.interior_samples.div_ceil(4))
    }

    pub fn effective_boundary_test(&self) -> usize {
        self.boundary_test
            .unwrap_or_else(|| self.boundary_samples.div_ceil(4))
    }

    /// Validation; an α not exceeding M̃ is a warning, not an error.
    pub fn validate(&self) -> Result<Vec<String>, TrainError> {
        let err = |m: String| Err(TrainError::InvalidConfig(m));
        if self.iterations < 1 {
            return err("iterations must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            return err(format!("lr must be positive, got {}", self.lr));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return err(format!("{name} must be in (0, 1), got {v}"));
            }
        }
        if self.interior_samples < 1 || self.boundary_samples < 1 {
            return err("sample counts must be >= 1".into());
        }
        if self.node_grid.is_empty() || self.node_grid.iter().any(|&c| c < 1) {
            return err("node grid counts must be >= 1".into());
        }
        if self.eval_every < 1 {
            return err("eval_every must be >= 1".into());
        }
        if !(self.scale > 0.0) {
            return err(format!("scale must be positive, got {}", self.scale));
        }
        let mut warnings = Vec::new();
        if self.effective_alpha() <= self.boundary_samples as f64 {
            warnings.push(format!(
                "alpha {} does not exceed boundary sample count {}",
                self.effective_alpha(),
                self.boundary_samples
            ));
        }
        Ok(warnings)
    }
}

/// Adam moment vectors and step counter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self { m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }
}

/// One bias-corrected Adam update, applied to the flattened parameters.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ModelParams,
    grad: &FlatGradient,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), TrainError> {
    let g = &grad.values;
    assert_eq!(g.len(), state.m.len());
    let mut flat = params.flatten();
    assert_eq!(g.len(), flat.len());
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..g.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        flat[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        if !flat[i].is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "non-finite parameter update at component {i}"
            )));
        }
    }
    params.unflatten_into(&flat);
    Ok(())
}

/// Relative L2 error of the model against a truth function on a point grid.
/// Falls back to absolute RMS (flagged) when the truth is identically zero.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct L2Error {
    pub value: f64,
    pub absolute_fallback: bool,
}

pub fn l2_error<F: Fn(&[f64]) -> f64>(
    params: &ModelParams,
    truth: F,
    grid: &[Vec<f64>],
) -> L2Error {
    let evals = crate::model::prepare_f64(params, false);
    let mut num = 0.0;
    let mut den = 0.0;
    for x in grid {
        let u: f64 = evals.iter().map(|ne| ne.contrib(x, false).value).sum();
        let t = truth(x);
        num += (u - t) * (u - t);
        den += t * t;
    }
    if den == 0.0 {
        L2Error { value: (num / grid.len() as f64).sqrt(), absolute_fallback: true }
    } else {
        L2Error { value: (num / den).sqrt(), absolute_fallback: false }
    }
}

/// Uniform evaluation grid for metrics: n points per dimension over the
/// domain bounds, slit points masked out.
pub fn eval_grid(problem: &PdeProblem, n: usize) -> Vec<Vec<f64>> {
    let dom = &problem.domain;
    let d = dom.dim();
    let total: usize = (0..d).map(|_| n).product();
    let mut grid = Vec::with_capacity(total);
    for flat in 0..total {
        let mut idx = flat;
        let mut x = Vec::with_capacity(d);
        for dim in 0..d {
            let i = idx % n;
            idx /= n;
            let (lo, hi) = dom.bounds[dim];
            x.push(lo + (hi - lo) * i as f64 / (n - 1) as f64);
        }
        if dom.kind == DomainKind::BoxMinusSlit && dom.on_slit(&x) {
            continue;
        }
        grid.push(x);
    }
    grid
}

/// Metric snapshot at one evaluation point of the run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub test_loss: f64,
    pub l2: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
    pub metrics: Vec<MetricRecord>,
    pub final_params: ModelParams,
    pub config: TrainConfig,
    pub samples: SampleSet,
    pub wall_time_secs: f64,
    /// Set when training aborted on a non-finite loss; the report then
    /// carries the state reached so far.
    pub failed: bool,
    /// Interior points consumed per iteration (for batch-cost accounting).
    pub gradient_evals: Vec<usize>,
}

/// Tie the factor diagonals and freeze off-diagonals: off-diagonal
/// gradient entries are zeroed, each diagonal entry receives the summed
/// diagonal gradient. With identical per-slot Adam state this keeps the
/// diagonals exactly tied, reproducing the isotropic ansatz.
fn apply_isotropic_mask(grad: &mut FlatGradient, n_nodes: usize, dim: usize) {
    let p = params_per_node(dim);
    for node in 0..n_nodes {
        let base = node * p + 1 + dim; // start of factor entries
        let mut diag_sum = 0.0;
        for row in 0..dim {
            diag_sum += grad.values[base + LogCholeskyFactor::diag_index(row)];
        }
        for k in 0..dim * (dim + 1) / 2 {
            grad.values[base + k] = 0.0;
        }
        for row in 0..dim {
            grad.values[base + LogCholeskyFactor::diag_index(row)] = diag_sum;
        }
    }
}

/// Run the full training loop described by `config`.
/// Step size at iteration `iter`: `lr` is held for the first three quarters
/// of the run, then cosine-annealed down to 0.2% of `lr`. The constant phase
/// lets the nodes migrate; the annealed tail removes the SGD noise floor
/// that otherwise dominates the final error.
fn scheduled_lr(lr: f64, iter: usize, iterations: usize) -> f64 {
    let half = iterations - iterations / 4;
    if iter < half || iterations < 2 {
        return lr;
    }
    let p = (iter - half) as f64 / (iterations - half) as f64;
    let floor = 0.002 * lr;
    floor + (lr - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
}

pub fn train(config: &TrainConfig) -> Result<TrainReport, TrainError> {
    let warnings = config.validate()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let problem = crate::problems::by_name(&config.problem)
        .ok_or_else(|| TrainError::UnknownProblem(config.problem.clone()))?;
    if config.node_grid.len() != problem.dim() {
        return Err(TrainError::InvalidConfig(format!(
            "node grid has {} dims, problem '{}' has {}",
            config.node_grid.len(),
            problem.name,
            problem.dim()
        )));
    }
    let start = std::time::Instant::now();
    let samples = generate_samples(
        &problem.domain,
        config.interior_samples,
        config.boundary_samples,
        config.effective_interior_test(),
        config.effective_boundary_test(),
        config.seed,
    )?;
    let mut params = init_nodes(&problem.domain, &config.node_grid, config.scale, config.seed ^ 0x5eed);
    let alpha = config.effective_alpha();
    let plan = BatchPlan { batch_size: config.batch, seed: config.seed.wrapping_add(1) };
    let grid = eval_grid(&problem, 101);

    let mut state = AdamState::new(params.num_params());
    let mut loss_history = Vec::with_capacity(config.iterations);
    let mut gradient_evals = Vec::with_capacity(config.iterations);
    let mut metrics = Vec::new();
    let mut clamp_reported = false;
    let mut failed = false;

    let m = samples.interior_train.len();
    let mut epoch: u64 = 0;
    let mut epoch_batches = batches(m, &plan, epoch);
    let mut batch_idx = 0usize;

    let record_metrics = |iteration: usize,
                          params: &ModelParams,
                          metrics: &mut Vec<MetricRecord>| {
        let test_loss = loss_only(
            params,
            &problem,
            &samples.interior_test,
            &samples.boundary_test,
            alpha,
        )
        .unwrap_or(f64::NAN);
        let l2 = if problem.has_exact() {
            Some(l2_error(params, |x| problem.exact(x).unwrap(), &grid).value)
        } else {
            None
        };
        metrics.push(MetricRecord { iteration, test_loss, l2 });
    };

    for iter in 0..config.iterations {
        if batch_idx >= epoch_batches.len() {
            epoch += 1;
            epoch_batches = batches(m, &plan, epoch);
            batch_idx = 0;
        }
        let batch: Vec<Vec<f64>> = epoch_batches[batch_idx]
            .iter()
            .map(|&i| samples.interior_train[i].clone())
            .collect();
        batch_idx += 1;

        let lg = match loss_and_grad(&params, &problem, &batch, &samples.boundary_train, alpha) {
            Ok(lg) => lg,
            Err(GradientError::NonFinite { index, boundary }) => {
                log::error!(
                    "non-finite loss at iteration {iter} ({} sample {index}); aborting",
                    if boundary { "boundary" } else { "interior" }
                );
                failed = true;
                break;
            }
            Err(e) => {
                return Err(TrainError::InvalidConfig(e.to_string()));
            }
        };
        if lg.clamped && !clamp_reported {
            log::warn!("factor diagonal clamped to ±{} (reported once)", crate::model::DIAG_CLAMP);
            clamp_reported = true;
        }
        let mut grad = lg.grad;
        if config.isotropic {
            apply_isotropic_mask(&mut grad, params.nodes.len(), params.dim());
        }
        loss_history.push(lg.loss);
        gradient_evals.push(batch.len());
        let lr = scheduled_lr(config.lr, iter, config.iterations);
        if adam_step(&mut state, &mut params, &grad, lr, config.beta1, config.beta2, config.eps)
            .is_err()
        {
            failed = true;
            break;
        }
        if (iter + 1) % config.eval_every == 0 || iter + 1 == config.iterations {
            record_metrics(iter + 1, &params, &mut metrics);
        }
    }

    Ok(TrainReport {
        loss_history,
        metrics,
        final_params: params,
        config: config.clone(),
        samples,
        wall_time_secs: start.elapsed().as_secs_f64(),
        failed,
        gradient_evals,
    })
}
