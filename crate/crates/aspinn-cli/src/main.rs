//! Command-line front end: run training, export node geometry, compare runs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use aspinn::model::{params_per_node, zone_of_influence, ModelParams};
use aspinn::reference::{fmt_float, read_reference_csv, resample, GridSolution, ReferenceError};
use aspinn::sampling::BatchSize;
use aspinn::trainer::{eval_grid, train, TrainConfig, TrainReport};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "aspinn", version, about = "Meshless anisotropic PDE solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write run artifacts.
    Solve(SolveArgs),
    /// Convert a params.json into per-node ellipse geometry.
    ExportCenters(ExportCentersArgs),
    /// Relative L2 between two runs, or a run and a reference CSV.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// key = value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// Node grid, e.g. 4x2 (one count per dimension).
    #[arg(long)]
    nodes: Option<String>,
    /// Interior sample count M.
    #[arg(long)]
    samples: Option<usize>,
    /// Boundary sample count M-tilde.
    #[arg(long)]
    boundary_samples: Option<usize>,
    /// Batch size: integer count or fraction in (0, 1].
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// log-Cholesky diagonal scale s.
    #[arg(long)]
    scale_s: Option<f64>,
    /// SPINN mode: tie factor diagonals, freeze off-diagonals.
    #[arg(long)]
    isotropic: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportCentersArgs {
    /// params.json produced by `solve`.
    params: PathBuf,
    /// Output file (default: centers.json next to the input).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory of run A (must contain solution.csv).
    run_a: PathBuf,
    /// Directory of run B; omit when using --reference.
    run_b: Option<PathBuf>,
    /// Reference grid CSV to compare run A against.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Fixed-time slices for spacetime runs, e.g. 0,0.3,0.6.
    #[arg(long)]
    slices: Option<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    if let Ok(n) = std::env::var("ASPINN_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: ASPINN_THREADS must be a positive integer, got '{n}'");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Solve(a) => cmd_solve(&a),
        Cmd::ExportCenters(a) => cmd_export_centers(&a),
        Cmd::Compare(a) => cmd_compare(&a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

// ---------------------------------------------------------------- solve

/// Keys accepted in a run-config file; mirrors the solve flags.
const CONFIG_KEYS: &[&str] = &[
    "problem",
    "nodes",
    "samples",
    "boundary_samples",
    "batch",
    "alpha",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "iters",
    "seed",
    "scale_s",
    "isotropic",
    "eval_every",
    "out",
];

fn parse_config_file(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("config line {}: expected key = value", lineno + 1))?;
        let k = k.trim();
        if !CONFIG_KEYS.contains(&k) {
            anyhow::bail!("config line {}: unknown key '{k}'", lineno + 1);
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_nodes(s: &str) -> anyhow::Result<Vec<usize>> {
    let counts: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow::anyhow!("--nodes expects counts like 4x2, got '{s}'"))?;
    if counts.is_empty() || counts.iter().any(|&c| c == 0) {
        anyhow::bail!("--nodes counts must be >= 1, got '{s}'");
    }
    Ok(counts)
}

fn parse_batch(s: &str) -> anyhow::Result<BatchSize> {
    if s.contains('.') {
        let f: f64 = s.parse().map_err(|_| anyhow::anyhow!("bad batch fraction '{s}'"))?;
        if !(f > 0.0 && f <= 1.0) {
            anyhow::bail!("batch fraction must be in (0, 1], got {f}");
        }
        Ok(BatchSize::Fraction(f))
    } else {
        let c: usize = s.parse().map_err(|_| anyhow::anyhow!("bad batch count '{s}'"))?;
        if c == 0 {
            anyhow::bail!("batch count must be >= 1");
        }
        Ok(BatchSize::Count(c))
    }
}

fn build_config(args: &SolveArgs) -> anyhow::Result<(TrainConfig, PathBuf)> {
    let file = match &args.config {
        Some(p) => parse_config_file(p)?,
        None => BTreeMap::new(),
    };
    let get = |k: &str| file.get(k).map(|s| s.as_str());

    let problem = args
        .problem
        .clone()
        .or_else(|| get("problem").map(str::to_string))
        .ok_or_else(|| anyhow::anyhow!("missing --problem (or 'problem' config key)"))?;
    aspinn::problems::by_name(&problem)
        .ok_or_else(|| anyhow::anyhow!("unknown problem '{problem}'"))?;

    let mut cfg = TrainConfig::defaults(&problem);
    macro_rules! scalar {
        ($field:ident, $flag:expr, $key:literal) => {
            if let Some(v) = $flag {
                cfg.$field = v;
            } else if let Some(s) = get($key) {
                cfg.$field =
                    s.parse().map_err(|_| anyhow::anyhow!("bad value for {}: '{s}'", $key))?;
            }
        };
    }
    if let Some(n) = &args.nodes {
        cfg.node_grid = parse_nodes(n)?;
    } else if let Some(s) = get("nodes") {
        cfg.node_grid = parse_nodes(s)?;
    }
    scalar!(interior_samples, args.samples, "samples");
    scalar!(boundary_samples, args.boundary_samples, "boundary_samples");
    scalar!(lr, args.lr, "lr");
    scalar!(iterations, args.iters, "iters");
    scalar!(seed, args.seed, "seed");
    scalar!(scale, args.scale_s, "scale_s");
    if let Some(a) = args.alpha {
        cfg.alpha = Some(a);
    } else if let Some(s) = get("alpha") {
        cfg.alpha = Some(s.parse().map_err(|_| anyhow::anyhow!("bad value for alpha: '{s}'"))?);
    }
    if let Some(b) = &args.batch {
        cfg.batch = parse_batch(b)?;
    } else if let Some(s) = get("batch") {
        cfg.batch = parse_batch(s)?;
    }
    for (key, field) in [("beta1", &mut cfg.beta1), ("beta2", &mut cfg.beta2), ("eps", &mut cfg.eps)]
    {
        if let Some(s) = get(key) {
            *field = s.parse().map_err(|_| anyhow::anyhow!("bad value for {key}: '{s}'"))?;
        }
    }
    if let Some(s) = get("eval_every") {
        cfg.eval_every =
            s.parse().map_err(|_| anyhow::anyhow!("bad value for eval_every: '{s}'"))?;
    }
    cfg.isotropic = args.isotropic
        || get("isotropic").map(|s| s == "true" || s == "1").unwrap_or(false);

    let d = cfg.node_grid.len();
    let expected = aspinn::problems::by_name(&problem).unwrap().domain.dim();
    if d != expected {
        anyhow::bail!("--nodes has {d} dimensions but problem '{problem}' has {expected}");
    }

    let out = if args.out != Path::new(".") {
        args.out.clone()
    } else if let Some(s) = get("out") {
        PathBuf::from(s)
    } else {
        args.out.clone()
    };
    Ok((cfg, out))
}

fn cmd_solve(args: &SolveArgs) -> anyhow::Result<ExitCode> {
    let (cfg, out) = build_config(args)?;
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    fs::create_dir_all(&out)?;

    let report = train(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
    write_artifacts(&report, &out)?;
    if report.failed {
        eprintln!("training aborted on a non-finite loss; partial artifacts written");
        return Ok(ExitCode::from(EXIT_NUMERICAL));
    }
    Ok(ExitCode::SUCCESS)
}

/// params.json payload: the model plus enough ordering metadata to interpret
/// the flat parameter vector without reading the source.
#[derive(Serialize, Deserialize)]
struct ParamsFile {
    dim: usize,
    params_per_node: usize,
    /// Flat ordering, per node.
    ordering: String,
    params: ModelParams,
}

#[derive(Serialize)]
struct RunFile<'a> {
    config: &'a TrainConfig,
    alpha_effective: f64,
    seed: u64,
    versions: BTreeMap<&'static str, &'static str>,
    wall_time_secs: f64,
    failed: bool,
}

fn write_artifacts(report: &TrainReport, out: &Path) -> anyhow::Result<()> {
    let cfg = &report.config;
    let problem = aspinn::problems::by_name(&cfg.problem).unwrap();

    // loss_history.csv: train loss every iteration; test loss and L2 at the
    // eval cadence, blank elsewhere.
    let mut metric_at: BTreeMap<usize, (f64, Option<f64>)> = BTreeMap::new();
    for m in &report.metrics {
        metric_at.insert(m.iteration, (m.test_loss, m.l2));
    }
    let mut csv = String::from("iter,train_loss,test_loss,l2_error\n");
    for (i, loss) in report.loss_history.iter().enumerate() {
        let iter = i + 1;
        let (t, l) = match metric_at.get(&iter) {
            Some((t, l2)) => {
                (fmt_float(*t), l2.map(fmt_float).unwrap_or_default())
            }
            None => (String::new(), String::new()),
        };
        csv.push_str(&format!("{iter},{},{t},{l}\n", fmt_float(*loss)));
    }
    atomic_write(&out.join("loss_history.csv"), csv.as_bytes())?;

    // solution.csv on the metric evaluation grid.
    let grid = eval_grid(&problem, 101);
    let d = problem.domain.dim();
    let mut sol = String::new();
    sol.push_str(match (d, problem.domain.time_horizon.is_some()) {
        (1, _) => "x,u\n",
        (2, true) => "x,t,u\n",
        _ => "x,y,u\n",
    });
    for x in &grid {
        let u = aspinn::model::eval(&report.final_params, x).map_err(|e| anyhow::anyhow!("{e}"))?;
        let coords: Vec<String> = x.iter().map(|&c| fmt_float(c)).collect();
        sol.push_str(&format!("{},{}\n", coords.join(","), fmt_float(u)));
    }
    atomic_write(&out.join("solution.csv"), sol.as_bytes())?;

    // params.json / centers.json / run.json
    let pf = ParamsFile {
        dim: d,
        params_per_node: params_per_node(d),
        ordering: "per node: weight, center components, factor rows (row-major; diagonal stored raw, pre-exp)".into(),
        params: report.final_params.clone(),
    };
    atomic_write(&out.join("params.json"), serde_json::to_string_pretty(&pf)?.as_bytes())?;
    atomic_write(
        &out.join("centers.json"),
        serde_json::to_string_pretty(&centers_payload(&report.final_params))?.as_bytes(),
    )?;
    let mut versions = BTreeMap::new();
    versions.insert("aspinn", env!("CARGO_PKG_VERSION"));
    let run = RunFile {
        config: cfg,
        alpha_effective: cfg.effective_alpha(),
        seed: cfg.seed,
        versions,
        wall_time_secs: report.wall_time_secs,
        failed: report.failed,
    };
    atomic_write(&out.join("run.json"), serde_json::to_string_pretty(&run)?.as_bytes())?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CenterEntry {
    center: Vec<f64>,
    weight: f64,
    semi_axes: Vec<f64>,
    axes: Vec<Vec<f64>>,
}

fn centers_payload(params: &ModelParams) -> Vec<CenterEntry> {
    params
        .nodes
        .iter()
        .map(|n| {
            let e = zone_of_influence(n, params.scale);
            CenterEntry {
                center: e.center,
                weight: n.weight,
                semi_axes: e.semi_axes,
                axes: e.axes,
            }
        })
        .collect()
}

// ------------------------------------------------------- export-centers

fn cmd_export_centers(args: &ExportCentersArgs) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.params)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", args.params.display()))?;
    let pf: ParamsFile = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("{} is not a params.json: {e}", args.params.display()))?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.params.with_file_name("centers.json"));
    atomic_write(&out, serde_json::to_string_pretty(&centers_payload(&pf.params))?.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

// --------------------------------------------------------------- compare

struct SolutionCsv {
    dim: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

fn read_solution_csv(dir: &Path) -> anyhow::Result<SolutionCsv> {
    let path = dir.join("solution.csv");
    let text = fs::read_to_string(&path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow::anyhow!("{}: empty", path.display()))?;
    let dim = header.split(',').count() - 1;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| anyhow::anyhow!("{} row {}: bad number", path.display(), i + 2))?;
        if cols.len() != dim + 1 {
            anyhow::bail!("{} row {}: expected {} columns", path.display(), i + 2, dim + 1);
        }
        points.push(cols[..dim].to_vec());
        values.push(cols[dim]);
    }
    Ok(SolutionCsv { dim, points, values })
}

fn rel_l2(num_sq: f64, den_sq: f64, n: usize) -> f64 {
    if den_sq == 0.0 {
        (num_sq / n as f64).sqrt()
    } else {
        (num_sq / den_sq).sqrt()
    }
}

fn cmd_compare(args: &CompareArgs) -> anyhow::Result<ExitCode> {
    let a = read_solution_csv(&args.run_a)?;
    let slices: Option<Vec<f64>> = match &args.slices {
        Some(s) => Some(
            s.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| anyhow::anyhow!("bad --slices value '{s}'"))?,
        ),
        None => None,
    };

    // Pair each point of run A with a comparison value; None = masked in the
    // reference (skipped, counted).
    let paired: Vec<Option<f64>> = match (&args.run_b, &args.reference) {
        (Some(dir), None) => {
            let b = read_solution_csv(dir)?;
            if b.dim != a.dim {
                anyhow::bail!("dimension mismatch: run A is {}-d, run B is {}-d", a.dim, b.dim);
            }
            if b.points != a.points {
                anyhow::bail!("runs were evaluated on different grids; cannot compare");
            }
            b.values.into_iter().map(Some).collect()
        }
        (None, Some(path)) => {
            let file = fs::File::open(path)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
            let reference = read_reference_csv(std::io::BufReader::new(file))
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            if reference.axes.len() != a.dim {
                anyhow::bail!(
                    "dimension mismatch: run A is {}-d, reference is {}-d",
                    a.dim,
                    reference.axes.len()
                );
            }
            a.points.iter().map(|p| lookup(&reference, p)).collect::<Result<_, _>>()?
        }
        _ => anyhow::bail!("pass either a run B directory or --reference FILE (exactly one)"),
    };

    let mut rows = Vec::new();
    match slices {
        None => {
            let (mut num, mut den, mut n, mut skipped) = (0.0, 0.0, 0usize, 0usize);
            for (ua, vb) in a.values.iter().zip(&paired) {
                match vb {
                    Some(v) => {
                        num += (ua - v) * (ua - v);
                        den += v * v;
                        n += 1;
                    }
                    None => skipped += 1,
                }
            }
            if n == 0 {
                anyhow::bail!("no comparable points (all masked)");
            }
            rows.push(("all".to_string(), n, skipped, rel_l2(num, den, n)));
        }
        Some(ts) => {
            let last = a.dim - 1;
            for t in ts {
                let (mut num, mut den, mut n, mut skipped) = (0.0, 0.0, 0usize, 0usize);
                for ((p, ua), vb) in a.points.iter().zip(&a.values).zip(&paired) {
                    if (p[last] - t).abs() > 1e-9 {
                        continue;
                    }
                    match vb {
                        Some(v) => {
                            num += (ua - v) * (ua - v);
                            den += v * v;
                            n += 1;
                        }
                        None => skipped += 1,
                    }
                }
                if n == 0 {
                    anyhow::bail!(
                        "slice t = {t}: no grid points at that time (grid times are multiples of T/100)"
                    );
                }
                rows.push((fmt_float(t), n, skipped, rel_l2(num, den, n)));
            }
        }
    }

    fs::create_dir_all(&args.out)?;
    let mut csv = String::from("slice,points,masked,l2\n");
    for (slice, n, skipped, l2) in &rows {
        csv.push_str(&format!("{slice},{n},{skipped},{}\n", fmt_float(*l2)));
        println!("{slice}: l2 = {} ({n} points, {skipped} masked)", fmt_float(*l2));
    }
    atomic_write(&args.out.join("comparison.csv"), csv.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

/// Reference value at a point; Ok(None) when the point falls in a masked
/// cell (skipped from the comparison rather than failing the whole run).
fn lookup(reference: &GridSolution, p: &[f64]) -> anyhow::Result<Option<f64>> {
    match resample(reference, p) {
        Ok(v) => Ok(Some(v)),
        Err(ReferenceError::Masked { .. }) => Ok(None),
        Err(ReferenceError::OutOfHull { .. }) => Ok(None),
        Err(e) => Err(anyhow::anyhow!("{e}")),
    }
}

// --------------------------------------------------------------- output

/// Write-temp-then-rename so readers never observe a partial file.
fn atomic_write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
        .map_err(|e| anyhow::anyhow!("cannot move into place {}: {e}", path.display()))?;
    Ok(())
}
