//! Ground-truth stand-ins: a finite-difference Poisson solver on the slit
//! domain and a first-order Godunov finite-volume solver for inviscid
//! Burgers, plus multilinear resampling and a CSV exchange format so
//! externally computed references can be substituted.

use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("conjugate gradient did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("point {0:?} outside the reference grid hull")]
    OutOfHull(Vec<f64>),
    #[error("point {0:?} lies in a masked region of the reference grid")]
    Masked(Vec<f64>),
    #[error("bad reference CSV: {0}")]
    BadCsv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scalar field on a uniform tensor grid. `values` and `mask` are
/// row-major with the first axis slowest. Masked entries are invalid
/// (slit nodes, outside-domain cells).
#[derive(Clone, Debug)]
pub struct GridSolution {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GridSolution {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &i) in idx.iter().enumerate() {
            flat = flat * self.axes[d].len() + i;
        }
        flat
    }

    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[self.index(idx)]
    }
}

const CG_MAX_ITERS: usize = 100_000;

/// Poisson −∇²u = 1 on the square with a slit, zero Dirichlet data on the
/// outer boundary and on the slit nodes {y = 0, 0 ≤ x ≤ 1}. 5-point
/// Laplacian, matrix-free conjugate gradients to relative residual 1e-10.
/// `n` must be odd so the slit line lies on grid nodes.
pub fn fd_poisson_slit(n: usize) -> Result<GridSolution, ReferenceError> {
    assert!(n >= 17 && n % 2 == 1, "n must be odd and >= 17");
    let h = 2.0 / (n - 1) as f64;
    let axis: Vec<f64> = (0..n).map(|i| -1.0 + i as f64 * h).collect();
    let mid = (n - 1) / 2;
    let on_slit = |i: usize, j: usize| j == mid && i >= mid;
    let is_unknown =
        |i: usize, j: usize| i > 0 && i < n - 1 && j > 0 && j < n - 1 && !on_slit(i, j);

    // compact index map over the unknowns
    let mut id = vec![usize::MAX; n * n];
    let mut coords = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if is_unknown(i, j) {
                id[i * n + j] = coords.len();
                coords.push((i, j));
            }
        }
    }
    let m = coords.len();
    let h2 = h * h;
    // A u = b with A = −Δ_h (Dirichlet-0 neighbors drop out), b ≡ 1
    let apply = |u: &[f64], out: &mut [f64]| {
        for (k, &(i, j)) in coords.iter().enumerate() {
            let mut v = 4.0 * u[k];
            for (ni, nj) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                let nid = id[ni * n + nj];
                if nid != usize::MAX {
                    v -= u[nid];
                }
            }
            out[k] = v / h2;
        }
    };

    let b = vec![1.0; m];
    let mut u = vec![0.0; m];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; m];
    let bnorm: f64 = (b.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let tol = 1e-10 * bnorm;
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let mut converged = rs.sqrt() <= tol;
    let mut iters = 0;
    while !converged {
        iters += 1;
        if iters > CG_MAX_ITERS {
            return Err(ReferenceError::NonConvergence(CG_MAX_ITERS));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rs / pap;
        for k in 0..m {
            u[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        if rs_new.sqrt() <= tol {
            converged = true;
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for k in 0..m {
            p[k] = r[k] + beta * p[k];
        }
    }

    let mut values = vec![0.0; n * n];
    let mut mask = vec![true; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = id[i * n + j];
            if k != usize::MAX {
                values[i * n + j] = u[k];
            } else if on_slit(i, j) {
                mask[i * n + j] = false; // crack nodes are double-valued
            }
        }
    }
    Ok(GridSolution { axes: vec![axis.clone(), axis], values, mask })
}

/// Godunov flux for f(u) = u²/2 with the exact Riemann solution.
#[inline]
pub fn burgers_godunov_flux(ul: f64, ur: f64) -> f64 {
    if ul <= ur {
        // rarefaction: minimize f over [ul, ur]
        if ul > 0.0 {
            0.5 * ul * ul
        } else if ur < 0.0 {
            0.5 * ur * ur
        } else {
            0.0
        }
    } else {
        // shock moving at s = (ul + ur)/2
        if ul + ur > 0.0 {
            0.5 * ul * ul
        } else {
            0.5 * ur * ur
        }
    }
}

/// First-order Godunov solve of u_t + (u²/2)_x = 0 on [−1,1] with
/// zero-inflow boundary states. Returns snapshots at the requested times,
/// linearly interpolated in time between steps. Axes: (cell centers, times).
pub fn godunov_burgers<F: Fn(f64) -> f64>(
    nx: usize,
    cfl: f64,
    horizon: f64,
    u0: F,
    times: &[f64],
) -> GridSolution {
    assert!(nx >= 100, "nx must be >= 100");
    assert!(cfl > 0.0 && cfl <= 0.9, "cfl must be in (0, 0.9]");
    assert!(times.iter().all(|&t| (0.0..=horizon).contains(&t)));
    let dx = 2.0 / nx as f64;
    let centers: Vec<f64> = (0..nx).map(|i| -1.0 + (i as f64 + 0.5) * dx).collect();
    let mut u: Vec<f64> = centers.iter().map(|&x| u0(x)).collect();
    let mut t = 0.0;

    let mut sorted: Vec<(usize, f64)> = times.iter().copied().enumerate().collect();
    sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let mut snapshots = vec![vec![0.0; nx]; times.len()];
    let mut next = 0;
    while next < sorted.len() && sorted[next].1 <= 0.0 {
        snapshots[sorted[next].0] = u.clone();
        next += 1;
    }

    let mut flux = vec![0.0; nx + 1];
    while next < sorted.len() {
        let umax = u.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if umax == 0.0 {
            // nothing moves; all remaining snapshots equal the current state
            for &(k, _) in &sorted[next..] {
                snapshots[k] = u.clone();
            }
            break;
        }
        let dt = cfl * dx / umax;
        let u_prev = u.clone();
        let t_prev = t;
        flux[0] = burgers_godunov_flux(0.0, u[0]);
        flux[nx] = burgers_godunov_flux(u[nx - 1], 0.0);
        for i in 1..nx {
            flux[i] = burgers_godunov_flux(u[i - 1], u[i]);
        }
        for i in 0..nx {
            u[i] -= dt / dx * (flux[i + 1] - flux[i]);
        }
        t += dt;
        while next < sorted.len() && sorted[next].1 <= t {
            let (k, tk) = sorted[next];
            let w = (tk - t_prev) / dt;
            for i in 0..nx {
                snapshots[k][i] = (1.0 - w) * u_prev[i] + w * u[i];
            }
            next += 1;
        }
    }

    let nt = times.len();
    let mut values = vec![0.0; nx * nt];
    for (k, snap) in snapshots.iter().enumerate() {
        for i in 0..nx {
            values[i * nt + k] = snap[i];
        }
    }
    GridSolution {
        axes: vec![centers, times.to_vec()],
        values,
        mask: vec![true; nx * nt],
    }
}

/// Multilinear interpolation at `point`; exact on multilinear fields.
/// Errors on points outside the grid hull or inside masked cells.
pub fn resample(reference: &GridSolution, point: &[f64]) -> Result<f64, ReferenceError> {
    let d = reference.dim();
    assert_eq!(point.len(), d);
    let mut base = vec![0usize; d];
    let mut w = vec![0.0f64; d];
    for k in 0..d {
        let axis = &reference.axes[k];
        let n = axis.len();
        let lo = axis[0];
        let hi = axis[n - 1];
        let span = hi - lo;
        let tol = 1e-12 * (1.0 + span.abs());
        if point[k] < lo - tol || point[k] > hi + tol {
            return Err(ReferenceError::OutOfHull(point.to_vec()));
        }
        let step = span / (n - 1) as f64;
        let f = ((point[k] - lo) / step).floor();
        let i = (f as isize).clamp(0, n as isize - 2) as usize;
        base[k] = i;
        w[k] = ((point[k] - axis[i]) / step).clamp(0.0, 1.0);
    }
    let corners = 1usize << d;
    let mut acc = 0.0;
    for c in 0..corners {
        let mut idx = vec![0usize; d];
        let mut weight = 1.0;
        for k in 0..d {
            let hi = (c >> k) & 1 == 1;
            idx[k] = base[k] + hi as usize;
            weight *= if hi { w[k] } else { 1.0 - w[k] };
        }
        let flat = reference.index(&idx);
        if !reference.mask[flat] {
            return Err(ReferenceError::Masked(point.to_vec()));
        }
        acc += weight * reference.values[flat];
    }
    Ok(acc)
}

// --- reference CSV exchange --------------------------------------------------

/// Write the exchange format: a `# ref` header, then `x[,y],value` rows in
/// row-major order; masked entries carry `nan`.
pub fn write_reference_csv<W: Write>(grid: &GridSolution, mut w: W) -> Result<(), ReferenceError> {
    let d = grid.dim();
    match d {
        1 => writeln!(w, "# ref d=1 nx={}", grid.axes[0].len())?,
        2 => {
            let t = grid.axes[1].last().copied().unwrap_or(0.0);
            writeln!(
                w,
                "# ref d=2 nx={} ny={} T={}",
                grid.axes[0].len(),
                grid.axes[1].len(),
                fmt_float(t)
            )?;
        }
        _ => return Err(ReferenceError::BadCsv(format!("unsupported dim {d}"))),
    }
    let shape: Vec<usize> = grid.axes.iter().map(|a| a.len()).collect();
    let total: usize = shape.iter().product();
    for flat in 0..total {
        let mut rem = flat;
        let mut idx = vec![0usize; d];
        for k in (0..d).rev() {
            idx[k] = rem % shape[k];
            rem /= shape[k];
        }
        for k in 0..d {
            write!(w, "{},", fmt_float(grid.axes[k][idx[k]]))?;
        }
        let v = if grid.mask[flat] { grid.values[flat] } else { f64::NAN };
        writeln!(w, "{}", fmt_float(v))?;
    }
    Ok(())
}

/// Round-trip-safe float formatting (17 significant digits when needed).
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    let short = format!("{v}");
    if short.parse::<f64>() == Ok(v) {
        short
    } else {
        format!("{v:.17e}")
    }
}

pub fn read_reference_csv<R: BufRead>(r: R) -> Result<GridSolution, ReferenceError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| ReferenceError::BadCsv("empty file".into()))??;
    if !header.starts_with("# ref") {
        return Err(ReferenceError::BadCsv("missing '# ref' header".into()));
    }
    let mut dim = 0usize;
    let mut shape: Vec<usize> = Vec::new();
    for tok in header.split_whitespace().skip(2) {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| ReferenceError::BadCsv(format!("bad header token '{tok}'")))?;
        match key {
            "d" => dim = val.parse().map_err(|_| ReferenceError::BadCsv("bad d".into()))?,
            "nx" | "ny" => {
                shape.push(val.parse().map_err(|_| ReferenceError::BadCsv("bad size".into()))?)
            }
            "T" => {} // informational
            _ => return Err(ReferenceError::BadCsv(format!("unknown header key '{key}'"))),
        }
    }
    if dim == 0 || shape.len() != dim {
        return Err(ReferenceError::BadCsv("header dim/shape mismatch".into()));
    }
    let total: usize = shape.iter().product();
    let mut values = vec![0.0; total];
    let mut mask = vec![true; total];
    let mut axes: Vec<Vec<f64>> = shape.iter().map(|&n| vec![f64::NAN; n]).collect();
    let mut count = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if count >= total {
            return Err(ReferenceError::BadCsv("too many rows".into()));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(ReferenceError::BadCsv(format!("expected {} fields", dim + 1)));
        }
        let mut rem = count;
        let mut idx = vec![0usize; dim];
        for k in (0..dim).rev() {
            idx[k] = rem % shape[k];
            rem /= shape[k];
        }
        for k in 0..dim {
            let c: f64 = fields[k]
                .parse()
                .map_err(|_| ReferenceError::BadCsv(format!("bad coordinate '{}'", fields[k])))?;
            let slot = &mut axes[k][idx[k]];
            if slot.is_nan() {
                *slot = c;
            } else if (*slot - c).abs() > 1e-12 * (1.0 + c.abs()) {
                return Err(ReferenceError::BadCsv("inconsistent grid coordinates".into()));
            }
        }
        let vstr = fields[dim].trim();
        if vstr == "nan" {
            mask[count] = false;
        } else {
            values[count] = vstr
                .parse()
                .map_err(|_| ReferenceError::BadCsv(format!("bad value '{vstr}'")))?;
        }
        count += 1;
    }
    if count != total {
        return Err(ReferenceError::BadCsv(format!("expected {total} rows, got {count}")));
    }
    for axis in &axes {
        if axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ReferenceError::BadCsv("axes must be strictly increasing".into()));
        }
    }
    Ok(GridSolution { axes, values, mask })
}
