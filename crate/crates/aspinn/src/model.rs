//! Gaussian kernel network with per-node anisotropic zones of influence.
//!
//! The model is u(x) = Σᵢ Uᵢ φ(‖Σᵢ⁻¹(x − Xᵢ)‖) with φ(r) = exp(−r²) and
//! Σᵢ = Lᵢ Lᵢᵀ assembled from an unconstrained log-Cholesky factor: the
//! diagonal of Lᵢ is exp(s·l̃ⱼⱼ), the strict lower triangle is stored
//! verbatim. Everything here is generic over [`Scalar`] so the gradient
//! module can push dual numbers through the same code path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Maximum supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Raw diagonal entries are clamped to this magnitude before exponentiation
/// so a collapsing zone of influence cannot overflow exp().
pub const DIAG_CLAMP: f64 = 30.0;

/// Fixed-size vector storage; only the first `dim` entries are meaningful.
pub type Vector = [f64; MAX_DIM];
/// Fixed-size matrix storage; only the leading `dim`×`dim` block is meaningful.
pub type Matrix = [[f64; MAX_DIM]; MAX_DIM];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite evaluation at node {node}")]
    NonFinite { node: usize },
    #[error("dimension mismatch: model dim {expected}, point dim {got}")]
    DimMismatch { expected: usize, got: usize },
}

/// Unconstrained lower-triangular parametrization of one node's SPD matrix.
///
/// Entries are stored row-major over the lower triangle:
/// `[l00, l10, l11, l20, l21, l22]` for `dim = 3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogCholeskyFactor {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl LogCholeskyFactor {
    pub fn new(dim: usize, entries: Vec<f64>) -> Self {
        assert!(dim >= 1 && dim <= MAX_DIM, "dim must be in 1..={}", MAX_DIM);
        assert_eq!(entries.len(), dim * (dim + 1) / 2);
        Self { dim, entries }
    }

    /// Identity anisotropy: all raw entries zero.
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, vec![0.0; dim * (dim + 1) / 2])
    }

    /// Isotropic factor with Σ = diag(h, …, h): raw diagonal (ln h)/(2s),
    /// zero off-diagonals, so exp(2s·l̃ⱼⱼ) = h.
    pub fn isotropic(dim: usize, h: f64, s: f64) -> Self {
        let mut f = Self::identity(dim);
        let raw = h.ln() / (2.0 * s);
        let mut idx = 0;
        for row in 0..dim {
            idx += row;
            f.entries[idx] = raw;
            idx += 1;
        }
        f
    }

    /// Recover raw entries from an SPD matrix: plain Cholesky, then the
    /// diagonal is mapped through ln(·)/s.
    pub fn from_spd(sigma: &Matrix, dim: usize, s: f64) -> Self {
        let mut l = [[0.0f64; MAX_DIM]; MAX_DIM];
        for j in 0..dim {
            let mut d = sigma[j][j];
            for k in 0..j {
                d -= l[j][k] * l[j][k];
            }
            assert!(d > 0.0, "matrix is not positive definite");
            l[j][j] = d.sqrt();
            for i in (j + 1)..dim {
                let mut v = sigma[i][j];
                for k in 0..j {
                    v -= l[i][k] * l[j][k];
                }
                l[i][j] = v / l[j][j];
            }
        }
        let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..i {
                entries.push(l[i][j]);
            }
            entries.push(l[i][i].ln() / s);
        }
        Self::new(dim, entries)
    }

    /// Index of the raw diagonal entry of row `row` within `entries`.
    pub fn diag_index(row: usize) -> usize {
        row * (row + 1) / 2 + row
    }
}

/// One kernel unit: a center, a scalar weight, and its anisotropy factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub center: Vec<f64>,
    pub weight: f64,
    pub factor: LogCholeskyFactor,
}

/// Supported kernels. The model is Gaussian-only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gaussian,
}

/// Full trainable state plus the fixed scale `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub nodes: Vec<Node>,
    pub scale: f64,
    pub kernel: Kernel,
}

/// Number of trainable scalars per node: weight + center + factor entries.
pub fn params_per_node(dim: usize) -> usize {
    1 + dim + dim * (dim + 1) / 2
}

impl ModelParams {
    pub fn new(nodes: Vec<Node>, scale: f64) -> Self {
        assert!(!nodes.is_empty());
        let dim = nodes[0].center.len();
        assert!(nodes.iter().all(|n| n.center.len() == dim && n.factor.dim == dim));
        Self { nodes, scale, kernel: Kernel::Gaussian }
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].center.len()
    }

    pub fn num_params(&self) -> usize {
        self.nodes.len() * params_per_node(self.dim())
    }

    /// Flatten in the fixed order: for each node, (weight, center
    /// components, factor entries row-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for node in &self.nodes {
            out.push(node.weight);
            out.extend_from_slice(&node.center);
            out.extend_from_slice(&node.factor.entries);
        }
        out
    }

    /// Inverse of [`flatten`]; panics if the length does not match.
    pub fn unflatten_into(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let d = self.dim();
        let p = params_per_node(d);
        for (node, chunk) in self.nodes.iter_mut().zip(flat.chunks_exact(p)) {
            node.weight = chunk[0];
            node.center.copy_from_slice(&chunk[1..1 + d]);
            node.factor.entries.copy_from_slice(&chunk[1 + d..]);
        }
    }
}

/// Ellipsoidal zone of influence of a node: eigen-structure of Σ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Vec<f64>,
    /// Eigenvalues of Σ, sorted descending.
    pub semi_axes: Vec<f64>,
    /// Matching orthonormal eigenvectors, one per semi-axis.
    pub axes: Vec<Vec<f64>>,
}

// --- generic per-node evaluation pipeline ---------------------------------

/// Build L from raw entries: diag = exp(s·l̃ⱼⱼ) (clamped), strict lower
/// triangle verbatim. Returns the matrix and whether clamping fired.
pub(crate) fn build_l<S: Scalar>(
    entries: &[S],
    dim: usize,
    s: f64,
) -> ([[S; MAX_DIM]; MAX_DIM], bool) {
    let mut l = [[S::zero(); MAX_DIM]; MAX_DIM];
    let mut clamped = false;
    let mut idx = 0;
    for i in 0..dim {
        for j in 0..i {
            l[i][j] = entries[idx];
            idx += 1;
        }
        let (raw, fired) = entries[idx].clamp_sym(DIAG_CLAMP);
        clamped |= fired;
        l[i][i] = (S::from_f64(s) * raw).exp();
        idx += 1;
    }
    (l, clamped)
}

/// Solve L w = b then Lᵀ z = b': two triangular solves computing Σ⁻¹ b.
#[inline]
pub(crate) fn solve_sigma<S: Scalar>(
    l: &[[S; MAX_DIM]; MAX_DIM],
    b: &[S; MAX_DIM],
    dim: usize,
) -> [S; MAX_DIM] {
    let mut w = [S::zero(); MAX_DIM];
    for i in 0..dim {
        let mut v = b[i];
        for k in 0..i {
            v = v - l[i][k] * w[k];
        }
        w[i] = v / l[i][i];
    }
    let mut z = [S::zero(); MAX_DIM];
    for i in (0..dim).rev() {
        let mut v = w[i];
        for k in (i + 1)..dim {
            v = v - l[k][i] * z[k];
        }
        z[i] = v / l[i][i];
    }
    z
}

/// Per-node state that does not depend on the query point. Preparing it
/// once per batch amortizes the triangular solves behind Σ⁻¹.
pub(crate) struct NodeEval<S: Scalar> {
    pub weight: S,
    pub center: [S; MAX_DIM],
    /// A = Σ⁻¹, assembled column-by-column from triangular solves.
    pub a: [[S; MAX_DIM]; MAX_DIM],
    /// A² = AᵀA (A is symmetric).
    pub a2: [[S; MAX_DIM]; MAX_DIM],
    pub clamped: bool,
    pub dim: usize,
}

/// Value, spatial gradient, and spatial Hessian of one node's contribution.
pub(crate) struct Contribution<S: Scalar> {
    pub value: S,
    pub grad: [S; MAX_DIM],
    pub hess: [[S; MAX_DIM]; MAX_DIM],
}

impl<S: Scalar> NodeEval<S> {
    pub fn prepare(
        weight: S,
        center: &[S],
        factor_entries: &[S],
        dim: usize,
        s: f64,
        needs_hessian: bool,
    ) -> Self {
        let (l, clamped) = build_l(factor_entries, dim, s);
        let mut a = [[S::zero(); MAX_DIM]; MAX_DIM];
        for j in 0..dim {
            let mut e = [S::zero(); MAX_DIM];
            e[j] = S::from_f64(1.0);
            let col = solve_sigma(&l, &e, dim);
            for i in 0..dim {
                a[i][j] = col[i];
            }
        }
        let mut a2 = [[S::zero(); MAX_DIM]; MAX_DIM];
        if needs_hessian {
            for i in 0..dim {
                for j in 0..dim {
                    let mut v = S::zero();
                    for k in 0..dim {
                        v = v + a[i][k] * a[k][j];
                    }
                    a2[i][j] = v;
                }
            }
        }
        let mut c = [S::zero(); MAX_DIM];
        c[..dim].copy_from_slice(&center[..dim]);
        Self { weight, center: c, a, a2, clamped, dim }
    }

    /// Contribution at `x`. With z = A(x − X):
    /// value  = U e^{−‖z‖²}
    /// grad   = U e^{−‖z‖²} (−2 A z)
    /// hess   = U e^{−‖z‖²} (4 (Az)(Az)ᵀ − 2 A²)
    #[inline]
    pub fn contrib(&self, x: &[f64], needs_hessian: bool) -> Contribution<S> {
        let d = self.dim;
        let mut delta = [S::zero(); MAX_DIM];
        for i in 0..d {
            delta[i] = S::from_f64(x[i]) - self.center[i];
        }
        let mut z = [S::zero(); MAX_DIM];
        for i in 0..d {
            let mut v = S::zero();
            for k in 0..d {
                v = v + self.a[i][k] * delta[k];
            }
            z[i] = v;
        }
        let mut nrm2 = S::zero();
        for i in 0..d {
            nrm2 = nrm2 + z[i] * z[i];
        }
        let ue = self.weight * (-nrm2).exp();
        let mut q = [S::zero(); MAX_DIM];
        for i in 0..d {
            let mut v = S::zero();
            for k in 0..d {
                v = v + self.a[i][k] * z[k];
            }
            q[i] = v;
        }
        let m2 = S::from_f64(-2.0);
        let mut grad = [S::zero(); MAX_DIM];
        for i in 0..d {
            grad[i] = ue * m2 * q[i];
        }
        let mut hess = [[S::zero(); MAX_DIM]; MAX_DIM];
        if needs_hessian {
            let four = S::from_f64(4.0);
            for i in 0..d {
                for j in 0..d {
                    hess[i][j] = ue * (four * q[i] * q[j] + m2 * self.a2[i][j]);
                }
            }
        }
        Contribution { value: ue, grad, hess }
    }
}

pub(crate) fn prepare_f64(params: &ModelParams, needs_hessian: bool) -> Vec<NodeEval<f64>> {
    let d = params.dim();
    params
        .nodes
        .iter()
        .map(|n| {
            NodeEval::prepare(n.weight, &n.center, &n.factor.entries, d, params.scale, needs_hessian)
        })
        .collect()
}

// --- public operations -----------------------------------------------------

/// Assemble the lower-triangular factor L of Σ = L Lᵀ.
pub fn assemble_l(factor: &LogCholeskyFactor, s: f64) -> Matrix {
    let (l, _) = build_l(&factor.entries, factor.dim, s);
    l
}

/// The SPD matrix Σ = L Lᵀ; symmetric entries are constructed once.
pub fn sigma(node: &Node, s: f64) -> Matrix {
    let d = node.factor.dim;
    let l = assemble_l(&node.factor, s);
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..=i {
            let mut v = 0.0;
            for k in 0..d {
                v += l[i][k] * l[j][k];
            }
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// z = Σ⁻¹(x − X) via two triangular solves with L.
pub fn whiten(node: &Node, s: f64, x: &[f64]) -> Vector {
    let d = node.factor.dim;
    let (l, _) = build_l(&node.factor.entries, d, s);
    let mut delta = [0.0; MAX_DIM];
    for i in 0..d {
        delta[i] = x[i] - node.center[i];
    }
    solve_sigma(&l, &delta, d)
}

fn check_dim(params: &ModelParams, x: &[f64]) -> Result<(), ModelError> {
    if x.len() != params.dim() {
        return Err(ModelError::DimMismatch { expected: params.dim(), got: x.len() });
    }
    Ok(())
}

/// u(x) = Σᵢ Uᵢ exp(−‖Σᵢ⁻¹(x − Xᵢ)‖²).
pub fn eval(params: &ModelParams, x: &[f64]) -> Result<f64, ModelError> {
    check_dim(params, x)?;
    let evals = prepare_f64(params, false);
    let mut u = 0.0;
    for (i, ne) in evals.iter().enumerate() {
        let c = ne.contrib(x, false);
        if !c.value.is_finite() {
            return Err(ModelError::NonFinite { node: i });
        }
        u += c.value;
    }
    Ok(u)
}

/// Value, gradient, and Hessian of u at `x`.
pub fn eval_derivs(params: &ModelParams, x: &[f64]) -> Result<(f64, Vector, Matrix), ModelError> {
    check_dim(params, x)?;
    let d = params.dim();
    let evals = prepare_f64(params, true);
    let mut u = 0.0;
    let mut grad = [0.0; MAX_DIM];
    let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, ne) in evals.iter().enumerate() {
        let c = ne.contrib(x, true);
        if !c.value.is_finite() {
            return Err(ModelError::NonFinite { node: i });
        }
        u += c.value;
        for r in 0..d {
            grad[r] += c.grad[r];
            for s_ in 0..d {
                hess[r][s_] += c.hess[r][s_];
            }
        }
    }
    Ok((u, grad, hess))
}

/// Eigen-structure of Σ: the zone of influence is an ellipsoid whose
/// semi-axes are the eigenvalues of Σ along the matching eigenvectors.
pub fn zone_of_influence(node: &Node, s: f64) -> Ellipse {
    let d = node.factor.dim;
    let m = sigma(node, s);
    let (vals, vecs) = sym_eigen(&m, d);
    // sort descending by eigenvalue
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let semi_axes: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let axes: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..d).map(|r| vecs[r][i]).collect())
        .collect();
    Ellipse { center: node.center.clone(), semi_axes, axes }
}

/// Jacobi eigen-decomposition for symmetric matrices of dim ≤ 3.
/// Returns (eigenvalues, eigenvector columns).
pub(crate) fn sym_eigen(m: &Matrix, dim: usize) -> (Vector, Matrix) {
    let mut a = *m;
    let mut v = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..dim {
        v[i][i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s_ = t * c;
                for k in 0..dim {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s_ * akq;
                    a[k][q] = s_ * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s_ * aqk;
                    a[q][k] = s_ * apk + c * aqk;
                }
                for k in 0..dim {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s_ * vkq;
                    v[k][q] = s_ * vkp + c * vkq;
                }
            }
        }
    }
    let mut vals = [0.0; MAX_DIM];
    for i in 0..dim {
        vals[i] = a[i][i];
    }
    (vals, v)
}
