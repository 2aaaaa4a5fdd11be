//! Discretized collocation loss and its exact parameter gradient.
//!
//! loss = (1/M) Σₖ (L(u)(ξₖ) − f(ξₖ))² + (α/2M̃) Σₖ (u(ξ̃ₖ) − g(ξ̃ₖ))²
//!
//! The gradient is computed by pushing forward-mode dual numbers through
//! the per-node evaluation pipeline: each node carries one tangent slot
//! per trainable scalar (weight, center, factor entries), and the chain
//! through the residual handles nonlinear operators like u·u_x for free.
//! Per-sample contributions are filled into a pre-indexed buffer and
//! summed in a single ordered pass, so results are bit-reproducible
//! regardless of thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{params_per_node, ModelParams, NodeEval, MAX_DIM};
use crate::problems::PdeProblem;
use crate::scalar::Dual;

/// Gradient in the fixed flattening order of [`ModelParams::flatten`].
#[derive(Clone, Debug, PartialEq)]
pub struct FlatGradient {
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: FlatGradient,
    /// Whether any node's raw diagonal hit the exp clamp this evaluation.
    pub clamped: bool,
}

#[derive(Debug, Error)]
pub enum GradientError {
    #[error("non-finite {} contribution at sample {index}", if *.boundary { "boundary" } else { "interior" })]
    NonFinite { index: usize, boundary: bool },
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),
}

/// Loss and its exact gradient over the given batches.
pub fn loss_and_grad(
    params: &ModelParams,
    problem: &PdeProblem,
    batch: &[Vec<f64>],
    boundary_batch: &[Vec<f64>],
    alpha: f64,
) -> Result<LossGrad, GradientError> {
    if batch.is_empty() {
        return Err(GradientError::EmptyBatch("interior"));
    }
    if boundary_batch.is_empty() {
        return Err(GradientError::EmptyBatch("boundary"));
    }
    if !(alpha > 0.0) {
        return Err(GradientError::BadAlpha(alpha));
    }
    match params_per_node(params.dim()) {
        3 => compute::<3>(params, problem, batch, boundary_batch, alpha),
        6 => compute::<6>(params, problem, batch, boundary_batch, alpha),
        10 => compute::<10>(params, problem, batch, boundary_batch, alpha),
        other => unreachable!("unsupported parameter block size {other}"),
    }
}

/// Loss only, on the plain f64 pipeline.
pub fn loss_only(
    params: &ModelParams,
    problem: &PdeProblem,
    batch: &[Vec<f64>],
    boundary_batch: &[Vec<f64>],
    alpha: f64,
) -> Result<f64, GradientError> {
    let evals = crate::model::prepare_f64(params, problem.needs_hessian);
    let d = params.dim();
    let mut loss = 0.0;
    for (k, x) in batch.iter().enumerate() {
        let mut u = 0.0;
        let mut grad = [0.0; MAX_DIM];
        let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
        for ne in &evals {
            let c = ne.contrib(x, problem.needs_hessian);
            u += c.value;
            for i in 0..d {
                grad[i] += c.grad[i];
                if problem.needs_hessian {
                    for j in 0..d {
                        hess[i][j] += c.hess[i][j];
                    }
                }
            }
        }
        let r = problem.interior_residual(x, u, &grad, &hess);
        if !r.is_finite() {
            return Err(GradientError::NonFinite { index: k, boundary: false });
        }
        loss += r * r;
    }
    loss /= batch.len() as f64;
    let mut bloss = 0.0;
    for (k, x) in boundary_batch.iter().enumerate() {
        let mut u = 0.0;
        for ne in &evals {
            u += ne.contrib(x, false).value;
        }
        let r = problem.boundary_residual(x, u);
        if !r.is_finite() {
            return Err(GradientError::NonFinite { index: k, boundary: true });
        }
        bloss += r * r;
    }
    loss += alpha / (2.0 * boundary_batch.len() as f64) * bloss;
    Ok(loss)
}

fn compute<const K: usize>(
    params: &ModelParams,
    problem: &PdeProblem,
    batch: &[Vec<f64>],
    boundary_batch: &[Vec<f64>],
    alpha: f64,
) -> Result<LossGrad, GradientError> {
    let d = params.dim();
    let s = params.scale;
    let needs_hessian = problem.needs_hessian;
    let n = params.nodes.len();
    let p_total = n * K;

    // Per-node evaluators with one tangent slot per trainable scalar:
    // slot 0 = weight, 1..=d = center, the rest = factor entries.
    let mut clamped = false;
    let evals: Vec<NodeEval<Dual<K>>> = params
        .nodes
        .iter()
        .map(|node| {
            let weight = Dual::<K>::seeded(node.weight, 0);
            let center: Vec<Dual<K>> = node
                .center
                .iter()
                .enumerate()
                .map(|(i, &c)| Dual::seeded(c, 1 + i))
                .collect();
            let factor: Vec<Dual<K>> = node
                .factor
                .entries
                .iter()
                .enumerate()
                .map(|(i, &e)| Dual::seeded(e, 1 + d + i))
                .collect();
            let ne = NodeEval::prepare(weight, &center, &factor, d, s, needs_hessian);
            clamped |= ne.clamped;
            ne
        })
        .collect();

    struct Sample {
        residual: f64,
        // 2·r·(dr/dθ) for every flattened parameter
        row: Vec<f64>,
    }

    let interior: Vec<Sample> = batch
        .par_iter()
        .map(|x| {
            // per-node dual contributions, then totals from the value parts
            let contribs: Vec<_> = evals.iter().map(|ne| ne.contrib(x, needs_hessian)).collect();
            let mut u = 0.0;
            let mut grad = [0.0; MAX_DIM];
            let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
            for c in &contribs {
                u += c.value.re;
                for i in 0..d {
                    grad[i] += c.grad[i].re;
                    if needs_hessian {
                        for j in 0..d {
                            hess[i][j] += c.hess[i][j].re;
                        }
                    }
                }
            }
            let r = problem.interior_residual(x, u, &grad, &hess);
            let mut row = vec![0.0; p_total];
            for (i, c) in contribs.iter().enumerate() {
                // totals with node i's tangents attached
                let ud = Dual::<K> { re: u, eps: c.value.eps };
                let mut gd = [Dual::<K>::constant(0.0); MAX_DIM];
                let mut hd = [[Dual::<K>::constant(0.0); MAX_DIM]; MAX_DIM];
                for a in 0..d {
                    gd[a] = Dual { re: grad[a], eps: c.grad[a].eps };
                    if needs_hessian {
                        for b in 0..d {
                            hd[a][b] = Dual { re: hess[a][b], eps: c.hess[a][b].eps };
                        }
                    }
                }
                let rd = problem.interior_residual(x, ud, &gd, &hd);
                for k in 0..K {
                    row[i * K + k] = 2.0 * r * rd.eps[k];
                }
            }
            Sample { residual: r, row }
        })
        .collect();

    let boundary: Vec<Sample> = boundary_batch
        .par_iter()
        .map(|x| {
            let contribs: Vec<_> = evals.iter().map(|ne| ne.contrib(x, false)).collect();
            let u: f64 = contribs.iter().map(|c| c.value.re).sum();
            let r = problem.boundary_residual(x, u);
            let mut row = vec![0.0; p_total];
            for (i, c) in contribs.iter().enumerate() {
                let ud = Dual::<K> { re: u, eps: c.value.eps };
                let rd = problem.boundary_residual(x, ud);
                for k in 0..K {
                    row[i * K + k] = 2.0 * r * rd.eps[k];
                }
            }
            Sample { residual: r, row }
        })
        .collect();

    // single ordered reduction pass
    let m = batch.len() as f64;
    let mt = boundary_batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p_total];
    for (k, sample) in interior.iter().enumerate() {
        if !sample.residual.is_finite() {
            return Err(GradientError::NonFinite { index: k, boundary: false });
        }
        loss += sample.residual * sample.residual / m;
        for (g, v) in grad.iter_mut().zip(&sample.row) {
            *g += v / m;
        }
    }
    for (k, sample) in boundary.iter().enumerate() {
        if !sample.residual.is_finite() {
            return Err(GradientError::NonFinite { index: k, boundary: true });
        }
        loss += alpha / (2.0 * mt) * sample.residual * sample.residual;
        for (g, v) in grad.iter_mut().zip(&sample.row) {
            *g += alpha / (2.0 * mt) * v;
        }
    }
    if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        // locate the first offending sample for the error report
        for (k, sample) in interior.iter().enumerate() {
            if sample.row.iter().any(|v| !v.is_finite()) {
                return Err(GradientError::NonFinite { index: k, boundary: false });
            }
        }
        for (k, sample) in boundary.iter().enumerate() {
            if sample.row.iter().any(|v| !v.is_finite()) {
                return Err(GradientError::NonFinite { index: k, boundary: true });
            }
        }
        return Err(GradientError::NonFinite { index: 0, boundary: false });
    }
    Ok(LossGrad { loss, grad: FlatGradient { values: grad }, clamped })
}

/// Central-difference approximation of the loss gradient. Verification
/// oracle only; never used on the training path.
pub fn fd_grad_oracle(
    params: &ModelParams,
    problem: &PdeProblem,
    batch: &[Vec<f64>],
    boundary_batch: &[Vec<f64>],
    alpha: f64,
    step: f64,
) -> Result<FlatGradient, GradientError> {
    assert!(step > 0.0);
    let flat = params.flatten();
    let mut values = Vec::with_capacity(flat.len());
    let mut work = params.clone();
    for i in 0..flat.len() {
        let mut fp = flat.clone();
        fp[i] += step;
        work.unflatten_into(&fp);
        let lp = loss_only(&work, problem, batch, boundary_batch, alpha)?;
        fp[i] = flat[i] - step;
        work.unflatten_into(&fp);
        let lm = loss_only(&work, problem, batch, boundary_batch, alpha)?;
        values.push((lp - lm) / (2.0 * step));
    }
    Ok(FlatGradient { values })
}
