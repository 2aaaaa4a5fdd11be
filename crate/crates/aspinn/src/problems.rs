//! Benchmark PDEs as data: domain geometry, interior residual L(u) − f,
//! boundary residual B(u) − g, and the exact solution where one exists.
//!
//! Spacetime problems treat time as the last coordinate, so a 1D
//! time-dependent PDE lives on a 2D strip [−1,1] × [0,T] and its initial
//! condition is Dirichlet data on the t = 0 edge.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::model::{Matrix, Vector, MAX_DIM};
use crate::scalar::Scalar;

/// A point counts as lying ON the slit iff |y| ≤ this and 0 ≤ x < 1.
pub const SLIT_TOL: f64 = 1e-12;
/// Samplers keep interior points at least this far from the slit.
pub const SLIT_CLEARANCE: f64 = 1e-3;
/// Tolerance for boundary membership.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Advection speed (the wave travels right at this speed).
pub const ADVECTION_SPEED: f64 = 1.0;
/// Advection initial Gaussian: mean and width.
pub const ADVECTION_MU: f64 = -0.3;
pub const ADVECTION_SIGMA: f64 = 0.15;
/// Time horizons keeping the advected wave inside the interval and
/// bracketing the Burgers shock formation time 1/(2π).
pub const ADVECTION_T: f64 = 0.8;
pub const BURGERS_T: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Box,
    BoxMinusSlit,
    SpacetimeStrip,
}

/// Domain geometry. For `SpacetimeStrip` the last coordinate is time and
/// its interval is [0, time_horizon].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub bounds: Vec<(f64, f64)>,
    pub time_horizon: Option<f64>,
}

/// One boundary component: coordinate `fix_dim` pinned at `value`, the
/// remaining coordinates ranging over `ranges` (indexed by dimension;
/// the fixed dimension's range is ignored).
#[derive(Clone, Debug)]
pub struct BoundaryFace {
    pub fix_dim: usize,
    pub value: f64,
    pub ranges: Vec<(f64, f64)>,
    pub measure: f64,
}

impl DomainSpec {
    pub fn unit_box(dim: usize) -> Self {
        Self { kind: DomainKind::Box, bounds: vec![(-1.0, 1.0); dim], time_horizon: None }
    }

    pub fn box_minus_slit() -> Self {
        Self { kind: DomainKind::BoxMinusSlit, bounds: vec![(-1.0, 1.0); 2], time_horizon: None }
    }

    pub fn spacetime_strip(xlo: f64, xhi: f64, horizon: f64) -> Self {
        assert!(horizon > 0.0);
        Self {
            kind: DomainKind::SpacetimeStrip,
            bounds: vec![(xlo, xhi), (0.0, horizon)],
            time_horizon: Some(horizon),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn on_slit(&self, x: &[f64]) -> bool {
        self.kind == DomainKind::BoxMinusSlit
            && x[1].abs() <= SLIT_TOL
            && x[0] >= 0.0
            && x[0] < 1.0
    }

    /// Distance from the slit segment; +inf for slit-free domains.
    pub fn slit_distance(&self, x: &[f64]) -> f64 {
        if self.kind != DomainKind::BoxMinusSlit {
            return f64::INFINITY;
        }
        let dx = if x[0] < 0.0 {
            x[0].abs()
        } else if x[0] > 1.0 {
            x[0] - 1.0
        } else {
            0.0
        };
        (dx * dx + x[1] * x[1]).sqrt()
    }

    /// Strictly inside the box and off the slit.
    pub fn is_interior(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        for (xi, (lo, hi)) in x.iter().zip(&self.bounds) {
            if *xi <= *lo || *xi >= *hi {
                return false;
            }
        }
        !self.on_slit(x)
    }

    /// Boundary components where conditions are imposed. Spacetime strips
    /// expose the initial line and the spatial sides; the terminal time
    /// edge carries no data.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let d = self.dim();
        let extent = |skip: usize| -> f64 {
            self.bounds
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, (lo, hi))| hi - lo)
                .product()
        };
        let mut faces = Vec::new();
        match self.kind {
            DomainKind::Box | DomainKind::BoxMinusSlit => {
                for i in 0..d {
                    for value in [self.bounds[i].0, self.bounds[i].1] {
                        faces.push(BoundaryFace {
                            fix_dim: i,
                            value,
                            ranges: self.bounds.clone(),
                            measure: extent(i),
                        });
                    }
                }
                if self.kind == DomainKind::BoxMinusSlit {
                    let mut ranges = self.bounds.clone();
                    ranges[0] = (0.0, 1.0);
                    faces.push(BoundaryFace { fix_dim: 1, value: 0.0, ranges, measure: 1.0 });
                }
            }
            DomainKind::SpacetimeStrip => {
                // initial line t = 0
                faces.push(BoundaryFace {
                    fix_dim: d - 1,
                    value: 0.0,
                    ranges: self.bounds.clone(),
                    measure: extent(d - 1),
                });
                // spatial sides for all t
                for i in 0..d - 1 {
                    for value in [self.bounds[i].0, self.bounds[i].1] {
                        faces.push(BoundaryFace {
                            fix_dim: i,
                            value,
                            ranges: self.bounds.clone(),
                            measure: extent(i),
                        });
                    }
                }
            }
        }
        faces
    }

    pub fn is_boundary(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        for (xi, (lo, hi)) in x.iter().zip(&self.bounds) {
            if *xi < lo - BOUNDARY_TOL || *xi > hi + BOUNDARY_TOL {
                return false;
            }
        }
        if self.on_slit(x) {
            return true;
        }
        self.boundary_faces()
            .iter()
            .any(|f| (x[f.fix_dim] - f.value).abs() <= BOUNDARY_TOL)
    }
}

/// Interior residual kinds, dispatched generically so dual numbers flow
/// through the same arithmetic as plain values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residual {
    Poisson2d,
    Ripple2d,
    SquareSlit,
    Advection1d { speed: f64 },
    Burgers1d,
}

impl Residual {
    /// L(u)(x) − f(x) given the value, gradient, and Hessian of u at x.
    #[inline]
    pub fn eval<S: Scalar>(&self, x: &[f64], u: S, grad: &[S; MAX_DIM], hess: &[[S; MAX_DIM]; MAX_DIM]) -> S {
        match *self {
            Residual::Poisson2d => {
                let lap = hess[0][0] + hess[1][1];
                -lap - S::from_f64(poisson_source(x))
            }
            Residual::Ripple2d => {
                let lap = hess[0][0] + hess[1][1];
                let c = 16.0 * PI * PI * (4.0 * x[0] * x[0] + x[1] * x[1]);
                -lap + S::from_f64(c) * u - S::from_f64(ripple_source(x))
            }
            Residual::SquareSlit => hess[0][0] + hess[1][1] + S::from_f64(1.0),
            Residual::Advection1d { speed } => grad[1] + S::from_f64(speed) * grad[0],
            Residual::Burgers1d => grad[1] + u * grad[0],
        }
    }
}

/// One benchmark PDE.
#[derive(Clone, Debug)]
pub struct PdeProblem {
    pub name: &'static str,
    pub domain: DomainSpec,
    pub residual: Residual,
    /// First-order problems skip the Hessian as an optimization.
    pub needs_hessian: bool,
    has_exact: bool,
}

impl PdeProblem {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Interior residual L(u)(x) − f(x).
    #[inline]
    pub fn interior_residual<S: Scalar>(
        &self,
        x: &[f64],
        u: S,
        grad: &[S; MAX_DIM],
        hess: &[[S; MAX_DIM]; MAX_DIM],
    ) -> S {
        self.residual.eval(x, u, grad, hess)
    }

    /// Boundary residual B(u)(x) − g(x) = u(x) − g(x) (Dirichlet / initial data).
    #[inline]
    pub fn boundary_residual<S: Scalar>(&self, x: &[f64], u: S) -> S {
        u - S::from_f64(self.boundary_target(x))
    }

    /// The Dirichlet / initial-condition value g at a boundary point.
    pub fn boundary_target(&self, x: &[f64]) -> f64 {
        match self.residual {
            Residual::Poisson2d | Residual::Ripple2d | Residual::SquareSlit => 0.0,
            Residual::Advection1d { speed } => advection_profile(x[0] - speed * x[1]),
            Residual::Burgers1d => {
                if x[1].abs() <= BOUNDARY_TOL {
                    burgers_initial(x[0])
                } else {
                    0.0
                }
            }
        }
    }

    /// Exact solution value, when one exists.
    pub fn exact(&self, x: &[f64]) -> Option<f64> {
        if !self.has_exact {
            return None;
        }
        Some(self.exact_stack(x).unwrap().0)
    }

    pub fn has_exact(&self) -> bool {
        self.has_exact
    }

    /// Analytic (value, gradient, Hessian) of the exact solution.
    pub fn exact_stack(&self, x: &[f64]) -> Option<(f64, Vector, Matrix)> {
        match self.residual {
            Residual::Poisson2d => Some(poisson_exact_stack(x)),
            Residual::Ripple2d => Some(ripple_exact_stack(x)),
            Residual::Advection1d { speed } => Some(advection_exact_stack(x, speed)),
            Residual::SquareSlit | Residual::Burgers1d => None,
        }
    }
}

/// −∇²u = 5π² sin(2πx) sin(πy) on [−1,1]², u = 0 on the boundary.
pub fn poisson2d() -> PdeProblem {
    PdeProblem {
        name: "poisson2d",
        domain: DomainSpec::unit_box(2),
        residual: Residual::Poisson2d,
        needs_hessian: true,
        has_exact: true,
    }
}

/// −∇²u + 16π²(4x² + y²)u = f on [−1,1]² with a manufactured source so
/// that u = (1 − x²)(1 − y²)cos(2π(2x² + y²)) solves it exactly.
pub fn ripple2d() -> PdeProblem {
    PdeProblem {
        name: "ripple2d",
        domain: DomainSpec::unit_box(2),
        residual: Residual::Ripple2d,
        needs_hessian: true,
        has_exact: true,
    }
}

/// ∇²u + 1 = 0 on (−1,1)² minus the slit {(x,0): 0 ≤ x < 1}, u = 0 on the
/// outer boundary and both slit faces. No exact solution.
pub fn square_slit() -> PdeProblem {
    PdeProblem {
        name: "square_slit",
        domain: DomainSpec::box_minus_slit(),
        residual: Residual::SquareSlit,
        needs_hessian: true,
        has_exact: false,
    }
}

/// u_t + a u_x = 0 on the spacetime strip [−1,1] × [0,T] with a traveling
/// Gaussian exact solution.
pub fn advection1d() -> PdeProblem {
    PdeProblem {
        name: "advection1d",
        domain: DomainSpec::spacetime_strip(-1.0, 1.0, ADVECTION_T),
        residual: Residual::Advection1d { speed: ADVECTION_SPEED },
        needs_hessian: false,
        has_exact: true,
    }
}

/// u_t + u u_x = 0 on [−1,1] × [0,T] with a compactly supported sine bump
/// initial condition; develops a shock at t = 1/(2π).
pub fn burgers1d() -> PdeProblem {
    PdeProblem {
        name: "burgers1d",
        domain: DomainSpec::spacetime_strip(-1.0, 1.0, BURGERS_T),
        residual: Residual::Burgers1d,
        needs_hessian: false,
        has_exact: false,
    }
}

pub const PROBLEM_NAMES: [&str; 5] =
    ["poisson2d", "ripple2d", "square_slit", "advection1d", "burgers1d"];

pub fn by_name(name: &str) -> Option<PdeProblem> {
    match name {
        "poisson2d" => Some(poisson2d()),
        "ripple2d" => Some(ripple2d()),
        "square_slit" => Some(square_slit()),
        "advection1d" => Some(advection1d()),
        "burgers1d" => Some(burgers1d()),
        _ => None,
    }
}

// --- closed forms -----------------------------------------------------------

fn poisson_source(x: &[f64]) -> f64 {
    5.0 * PI * PI * (2.0 * PI * x[0]).sin() * (PI * x[1]).sin()
}

fn poisson_exact_stack(x: &[f64]) -> (f64, Vector, Matrix) {
    let (sx, cx) = (2.0 * PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    let u = sx * sy;
    let mut grad = [0.0; MAX_DIM];
    grad[0] = 2.0 * PI * cx * sy;
    grad[1] = PI * sx * cy;
    let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
    hess[0][0] = -4.0 * PI * PI * u;
    hess[1][1] = -PI * PI * u;
    hess[0][1] = 2.0 * PI * PI * cx * cy;
    hess[1][0] = hess[0][1];
    (u, grad, hess)
}

fn ripple_exact_stack(x: &[f64]) -> (f64, Vector, Matrix) {
    let (xv, yv) = (x[0], x[1]);
    let p = 1.0 - xv * xv;
    let q = 1.0 - yv * yv;
    let w = 2.0 * xv * xv + yv * yv;
    let (s, c) = (2.0 * PI * w).sin_cos();
    let u = p * q * c;
    let mut grad = [0.0; MAX_DIM];
    grad[0] = q * (-2.0 * xv * c - 8.0 * PI * xv * p * s);
    grad[1] = p * (-2.0 * yv * c - 4.0 * PI * yv * q * s);
    let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
    hess[0][0] = q
        * (-2.0 * c + 32.0 * PI * xv * xv * s
            - 8.0 * PI * p * s
            - 64.0 * PI * PI * xv * xv * p * c);
    hess[1][1] = p
        * (-2.0 * c + 16.0 * PI * yv * yv * s
            - 4.0 * PI * q * s
            - 16.0 * PI * PI * yv * yv * q * c);
    hess[0][1] = -2.0 * yv * (-2.0 * xv * c - 8.0 * PI * xv * p * s)
        + q * (8.0 * PI * xv * yv * s - 32.0 * PI * PI * xv * yv * p * c);
    hess[1][0] = hess[0][1];
    (u, grad, hess)
}

/// Manufactured source so the ripple's closed-form u is an exact solution.
fn ripple_source(x: &[f64]) -> f64 {
    let (u, _, hess) = ripple_exact_stack(x);
    let c = 16.0 * PI * PI * (4.0 * x[0] * x[0] + x[1] * x[1]);
    -(hess[0][0] + hess[1][1]) + c * u
}

/// Initial Gaussian profile of the advection problem.
pub fn advection_profile(xi: f64) -> f64 {
    let z = (xi - ADVECTION_MU) / ADVECTION_SIGMA;
    (-0.5 * z * z).exp()
}

fn advection_exact_stack(x: &[f64], speed: f64) -> (f64, Vector, Matrix) {
    let xi = x[0] - speed * x[1];
    let u = advection_profile(xi);
    let s2 = ADVECTION_SIGMA * ADVECTION_SIGMA;
    let du = -(xi - ADVECTION_MU) / s2 * u;
    let ddu = ((xi - ADVECTION_MU).powi(2) / (s2 * s2) - 1.0 / s2) * u;
    let mut grad = [0.0; MAX_DIM];
    grad[0] = du;
    grad[1] = -speed * du;
    let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
    hess[0][0] = ddu;
    hess[0][1] = -speed * ddu;
    hess[1][0] = hess[0][1];
    hess[1][1] = speed * speed * ddu;
    (u, grad, hess)
}

/// Burgers initial condition: sin 2π(x + ½) on [−½, ½], zero outside.
pub fn burgers_initial(x: f64) -> f64 {
    if (-0.5..=0.5).contains(&x) {
        (2.0 * PI * (x + 0.5)).sin()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn poisson_exact_values() {
        let p = poisson2d();
        assert_relative_eq!(p.exact(&[0.25, 0.5]).unwrap(), 1.0, max_relative = 1e-14);
        // homogeneous Dirichlet
        assert_eq!(p.boundary_residual(&[1.0, 0.3], 0.0), 0.0);
    }

    #[test]
    fn ripple_exact_values() {
        let p = ripple2d();
        assert_relative_eq!(p.exact(&[0.0, 0.0]).unwrap(), 1.0, max_relative = 1e-14);
        assert!(p.exact(&[1.0, 0.3]).unwrap().abs() < 1e-14);
        assert!(p.exact(&[-1.0, -0.7]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn advection_exact_values() {
        let p = advection1d();
        assert_relative_eq!(p.exact(&[-0.3, 0.0]).unwrap(), 1.0, max_relative = 1e-14);
        // peak travels with the wave
        for t in [0.1, 0.4, 0.8] {
            assert_relative_eq!(
                p.exact(&[-0.3 + ADVECTION_SPEED * t, t]).unwrap(),
                1.0,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn burgers_initial_condition() {
        assert_relative_eq!(burgers_initial(-0.25), 1.0, max_relative = 1e-14);
        assert_eq!(burgers_initial(0.75), 0.0);
        let p = burgers1d();
        // u ≡ 0 solves the PDE (not the IC)
        let zero = [[0.0; MAX_DIM]; MAX_DIM];
        let r = p.interior_residual(&[0.2, 0.3], 0.0, &[0.0; MAX_DIM], &zero);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn slit_geometry_and_residual() {
        let p = square_slit();
        // constant source: u ≡ 0 stack gives residual 1
        let zero = [[0.0; MAX_DIM]; MAX_DIM];
        let r = p.interior_residual(&[0.3, -0.4], 0.0, &[0.0; MAX_DIM], &zero);
        assert_eq!(r, 1.0);
        // slit membership
        assert!(p.domain.on_slit(&[0.5, 0.0]));
        assert!(p.domain.is_boundary(&[0.5, 0.0]));
        assert_eq!(p.boundary_residual(&[0.5, 0.0], 0.0), 0.0);
        // a point 1e-9 above the slit is interior (tolerance is 1e-12)
        assert!(p.domain.is_interior(&[0.5, 1e-9]));
        assert!(!p.domain.on_slit(&[0.5, 1e-9]));
        // x = 1 is past the half-open slit
        assert!(!p.domain.on_slit(&[1.0, 0.0]));
    }

    fn random_interior(domain: &DomainSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let x: Vec<f64> = domain
                .bounds
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            if domain.is_interior(&x) && domain.slit_distance(&x) > SLIT_CLEARANCE {
                return x;
            }
        }
    }

    #[test]
    fn manufactured_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for p in [poisson2d(), ripple2d(), advection1d()] {
            for _ in 0..100 {
                let x = random_interior(&p.domain, &mut rng);
                let (u, grad, hess) = p.exact_stack(&x).unwrap();
                let r = p.interior_residual(&x, u, &grad, &hess);
                assert!(r.abs() < 1e-9, "{}: residual {r} at {x:?}", p.name);
            }
        }
    }

    #[test]
    fn exact_stacks_match_finite_differences() {
        // independent FD check of the hand-coded derivative stacks
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for p in [poisson2d(), ripple2d(), advection1d()] {
            for _ in 0..30 {
                let x = random_interior(&p.domain, &mut rng);
                let (_, grad, hess) = p.exact_stack(&x).unwrap();
                let f = |y: &[f64]| p.exact(y).unwrap();
                for i in 0..2 {
                    let mut xp = x.clone();
                    xp[i] += h;
                    let mut xm = x.clone();
                    xm[i] -= h;
                    let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                    assert!(
                        (grad[i] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                        "{} grad[{i}] {} vs fd {}",
                        p.name,
                        grad[i],
                        fd
                    );
                }
                // FD Laplacian against analytic trace
                let mut lap_fd = 0.0;
                for i in 0..2 {
                    let mut xp = x.clone();
                    xp[i] += h;
                    let mut xm = x.clone();
                    xm[i] -= h;
                    lap_fd += (f(&xp) - 2.0 * f(&x) + f(&xm)) / (h * h);
                }
                let lap = hess[0][0] + hess[1][1];
                assert!(
                    (lap - lap_fd).abs() < 1e-3 * (1.0 + lap_fd.abs()),
                    "{} laplacian {} vs fd {}",
                    p.name,
                    lap,
                    lap_fd
                );
                // mixed second derivative
                let mut xq = x.clone();
                xq[0] += h;
                xq[1] += h;
                let upp = f(&xq);
                xq[1] -= 2.0 * h;
                let upm = f(&xq);
                xq[0] -= 2.0 * h;
                let umm = f(&xq);
                xq[1] += 2.0 * h;
                let ump = f(&xq);
                let fd_xy = (upp - upm - ump + umm) / (4.0 * h * h);
                assert!(
                    (hess[0][1] - fd_xy).abs() < 1e-3 * (1.0 + fd_xy.abs()),
                    "{} hess[0][1] {} vs fd {}",
                    p.name,
                    hess[0][1],
                    fd_xy
                );
            }
        }
    }

    #[test]
    fn boundary_residual_of_exact_solution_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for p in [poisson2d(), ripple2d(), advection1d()] {
            let faces = p.domain.boundary_faces();
            let total: f64 = faces.iter().map(|f| f.measure).sum();
            for _ in 0..100 {
                // measure-weighted face choice
                let mut pick = rng.gen_range(0.0..total);
                let face = faces
                    .iter()
                    .find(|f| {
                        pick -= f.measure;
                        pick <= 0.0
                    })
                    .unwrap();
                let mut x = vec![0.0; p.dim()];
                for i in 0..p.dim() {
                    x[i] = if i == face.fix_dim {
                        face.value
                    } else {
                        rng.gen_range(face.ranges[i].0..face.ranges[i].1)
                    };
                }
                let u = p.exact(&x).unwrap();
                let r = p.boundary_residual(&x, u);
                assert!(r.abs() < 1e-12, "{}: boundary residual {r} at {x:?}", p.name);
                assert!(p.domain.is_boundary(&x));
            }
        }
        // Burgers initial-condition residual at t = 0
        let p = burgers1d();
        for _ in 0..100 {
            let x = [rng.gen_range(-1.0..1.0), 0.0];
            let r = p.boundary_residual(&x, burgers_initial(x[0]));
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn spacetime_faces_exclude_terminal_edge() {
        let p = advection1d();
        let faces = p.domain.boundary_faces();
        assert_eq!(faces.len(), 3);
        assert!(!p.domain.is_boundary(&[0.3, ADVECTION_T]));
        assert!(p.domain.is_boundary(&[0.3, 0.0]));
        assert!(p.domain.is_boundary(&[-1.0, 0.5]));
    }
}
