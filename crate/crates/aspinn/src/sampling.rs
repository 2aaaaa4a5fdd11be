//! Collocation point generation, initial node layout, and batching.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LogCholeskyFactor, ModelParams, Node};
use crate::problems::{DomainKind, DomainSpec, SLIT_CLEARANCE};

/// Give up on rejection sampling after this many draws.
const MAX_DRAWS: usize = 1_000_000;
/// Train/test points closer than this in every coordinate count as shared.
const DISJOINT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("rejection sampling exhausted after {MAX_DRAWS} draws (malformed domain?)")]
    RejectionExhausted,
}

/// Disjoint train/test collocation sets with the seed that produced them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleSet {
    pub interior_train: Vec<Vec<f64>>,
    pub boundary_train: Vec<Vec<f64>>,
    pub interior_test: Vec<Vec<f64>>,
    pub boundary_test: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Batch size given either as a point count or a fraction of M.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    Count(usize),
    Fraction(f64),
}

impl BatchSize {
    pub fn resolve(&self, m: usize) -> usize {
        match *self {
            BatchSize::Count(c) => c.clamp(1, m),
            BatchSize::Fraction(f) => ((f * m as f64).round() as usize).clamp(1, m),
        }
    }
}

/// Epoch-wise permutation plan over the interior training points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: BatchSize,
    pub seed: u64,
}

fn draw_interior(domain: &DomainSpec, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    for _ in 0..MAX_DRAWS {
        let x: Vec<f64> = domain
            .bounds
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        if domain.is_interior(&x) && domain.slit_distance(&x) > SLIT_CLEARANCE {
            return Some(x);
        }
    }
    None
}

fn draw_boundary(domain: &DomainSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let faces = domain.boundary_faces();
    let total: f64 = faces.iter().map(|f| f.measure).sum();
    let mut pick = rng.gen_range(0.0..total);
    let face = faces
        .iter()
        .find(|f| {
            pick -= f.measure;
            pick <= 0.0
        })
        .unwrap_or(faces.last().unwrap());
    (0..domain.dim())
        .map(|i| {
            if i == face.fix_dim {
                face.value
            } else {
                rng.gen_range(face.ranges[i].0..face.ranges[i].1)
            }
        })
        .collect()
}

fn shares_coords(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DISJOINT_TOL)
}

/// Uniform-random collocation sets. Boundary points are allocated to
/// boundary components proportionally to their measure; test points are
/// rejected against the train set so the two are disjoint.
pub fn generate_samples(
    domain: &DomainSpec,
    m: usize,
    m_boundary: usize,
    k: usize,
    k_boundary: usize,
    seed: u64,
) -> Result<SampleSet, SamplingError> {
    assert!(m >= 1 && m_boundary >= 1 && k >= 1 && k_boundary >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut interior_train = Vec::with_capacity(m);
    for _ in 0..m {
        interior_train.push(draw_interior(domain, &mut rng).ok_or(SamplingError::RejectionExhausted)?);
    }
    let boundary_train: Vec<Vec<f64>> =
        (0..m_boundary).map(|_| draw_boundary(domain, &mut rng)).collect();
    let mut interior_test = Vec::with_capacity(k);
    let mut draws = 0usize;
    while interior_test.len() < k {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(SamplingError::RejectionExhausted);
        }
        let x = draw_interior(domain, &mut rng).ok_or(SamplingError::RejectionExhausted)?;
        if !interior_train.iter().any(|t| shares_coords(t, &x)) {
            interior_test.push(x);
        }
    }
    let mut boundary_test = Vec::with_capacity(k_boundary);
    draws = 0;
    while boundary_test.len() < k_boundary {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(SamplingError::RejectionExhausted);
        }
        let x = draw_boundary(domain, &mut rng);
        if !boundary_train.iter().any(|t| shares_coords(t, &x)) {
            boundary_test.push(x);
        }
    }
    Ok(SampleSet { interior_train, boundary_train, interior_test, boundary_test, seed })
}

/// Nodes at the cell centers of a uniform grid, isotropic zones sized to
/// the per-dimension spacing, weights uniform in [−0.1, 0.1].
pub fn init_nodes(
    domain: &DomainSpec,
    counts: &[usize],
    s: f64,
    seed: u64,
) -> ModelParams {
    let d = domain.dim();
    assert_eq!(counts.len(), d);
    assert!(counts.iter().all(|&c| c >= 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacings: Vec<f64> = domain
        .bounds
        .iter()
        .zip(counts)
        .map(|((lo, hi), &c)| (hi - lo) / c as f64)
        .collect();
    // isotropic radius from the mean spacing
    let h0 = spacings.iter().sum::<f64>() / d as f64;
    let total: usize = counts.iter().product();
    let mut nodes = Vec::with_capacity(total);
    for flat in 0..total {
        let mut idx = flat;
        let mut center = Vec::with_capacity(d);
        for dim in 0..d {
            let i = idx % counts[dim];
            idx /= counts[dim];
            center.push(domain.bounds[dim].0 + (i as f64 + 0.5) * spacings[dim]);
        }
        if domain.kind == DomainKind::BoxMinusSlit && domain.on_slit(&center) {
            center[1] += 1e-2;
        }
        nodes.push(Node {
            center,
            weight: rng.gen_range(-0.1..0.1),
            factor: LogCholeskyFactor::isotropic(d, h0, s),
        });
    }
    ModelParams::new(nodes, s)
}

/// Index slices covering one epoch: a fresh permutation per epoch derived
/// from the plan seed, last batch possibly short.
pub fn batches(m: usize, plan: &BatchPlan, epoch: u64) -> Vec<Vec<usize>> {
    let size = plan.batch_size.resolve(m);
    let mut order: Vec<usize> = (0..m).collect();
    // mix the epoch into the stream so permutations differ per epoch but
    // are identical across reruns
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(epoch.wrapping_add(1));
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order.chunks(size).map(|c| c.to_vec()).collect()
}
