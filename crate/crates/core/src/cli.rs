//! Command-line front end.

use crate::basis::{Basis, Vector};
use crate::error::{GmsError, Result};
use crate::flow::FlowCache;
use crate::fpt::{self, Boundary, FptQuery};
use crate::girsanov::{self, ModelPair};
use crate::interp::{self, InterpolationProblem, PiecewiseSmooth};
use crate::linalg::{max_abs, Mat};
use crate::model::ProcessModel;
use crate::partition::NodeIndex;
use crate::transforms;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "gms",
    version,
    about = "Schauder-basis toolkit for Gauss-Markov processes"
)]
pub struct Cli {
    /// Worker threads (default: available cores; GMS_THREADS overrides).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArg {
    /// Model JSON file (default: standard Wiener process).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate psi and phi for every element up to a depth.
    Basis {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        depth: u32,
        /// Evaluation points on [0, 1], endpoints included.
        #[arg(long, default_value_t = 257)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample paths on the dyadic grid.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value_t = 1)]
        paths: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample paths and refine them by extra levels; coarse values are unchanged.
    Refine {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value_t = 1)]
        levels: u32,
        #[arg(long, default_value_t = 1)]
        paths: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover coefficients from grid values (CSV with columns path_id,t,i,x_i).
    Coeffs {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimal-energy interpolant of grid data (CSV with columns t,i,x_i).
    Interp {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 257)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Radon-Nikodym weights of alpha-paths with respect to the beta model.
    Girsanov {
        #[arg(long)]
        alpha: PathBuf,
        #[arg(long)]
        beta: PathBuf,
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value_t = 1)]
        paths: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adaptive first-passage search.
    Fpt {
        #[command(flatten)]
        model: ModelArg,
        /// Level for scalar processes, or half-space level with --direction.
        #[arg(long)]
        level: f64,
        /// Comma-separated half-space normal for d > 1.
        #[arg(long, value_delimiter = ',')]
        direction: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        paths: u64,
        #[arg(long, default_value_t = 12)]
        max_depth: u32,
        #[arg(long, default_value_t = 2)]
        coarse_depth: u32,
        #[arg(long, default_value_t = 1e-4)]
        p_low: f64,
        #[arg(long, default_value_t = 1.0 - 1e-4)]
        p_high: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analytic identity checks for a model.
    Selftest {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 5)]
        depth: u32,
        /// Optional report file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    /// Argument checks that do not need a model.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let depth_ok = |d: u32| {
            if (1..=24).contains(&d) {
                Ok(())
            } else {
                Err(format!("--depth must be in 1..=24, got {d}"))
            }
        };
        let points_ok = |p: usize| {
            if p >= 2 {
                Ok(())
            } else {
                Err("--points must be at least 2".to_string())
            }
        };
        let paths_ok = |p: u64| {
            if p >= 1 {
                Ok(())
            } else {
                Err("--paths must be at least 1".to_string())
            }
        };
        match self {
            Self::Basis { depth, points, .. } => {
                depth_ok(*depth)?;
                points_ok(*points)
            }
            Self::Simulate { depth, paths, .. } => {
                depth_ok(*depth)?;
                paths_ok(*paths)
            }
            Self::Refine {
                depth,
                levels,
                paths,
                ..
            } => {
                depth_ok(*depth)?;
                depth_ok(depth + levels)?;
                paths_ok(*paths)
            }
            Self::Coeffs { depth, .. } | Self::Selftest { depth, .. } => depth_ok(*depth),
            Self::Interp { depth, points, .. } => {
                depth_ok(*depth)?;
                points_ok(*points)
            }
            Self::Girsanov { depth, paths, .. } => {
                depth_ok(*depth)?;
                paths_ok(*paths)
            }
            Self::Fpt {
                paths,
                max_depth,
                coarse_depth,
                p_low,
                p_high,
                ..
            } => {
                depth_ok(*max_depth)?;
                paths_ok(*paths)?;
                if !(0.0 < *p_low && p_low < p_high && *p_high < 1.0) {
                    return Err("need 0 < --p-low < --p-high < 1".into());
                }
                if *coarse_depth < 1 || coarse_depth > max_depth {
                    return Err("need 1 <= --coarse-depth <= --max-depth".into());
                }
                Ok(())
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Basis { .. } => "basis",
            Self::Simulate { .. } => "simulate",
            Self::Refine { .. } => "refine",
            Self::Coeffs { .. } => "coeffs",
            Self::Interp { .. } => "interp",
            Self::Girsanov { .. } => "girsanov",
            Self::Fpt { .. } => "fpt",
            Self::Selftest { .. } => "selftest",
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Tabular output: header plus rows of already formatted cells.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn write(&self, path: &Path, format: Format) -> Result<()> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(&self.header)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                w.flush()?;
            }
            Format::Json => {
                let records: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let obj = self
                            .header
                            .iter()
                            .zip(r)
                            .map(|(h, c)| (h.to_string(), cell_json(c)))
                            .collect::<serde_json::Map<_, _>>();
                        Value::Object(obj)
                    })
                    .collect();
                let mut f = std::fs::File::create(path)?;
                serde_json::to_writer_pretty(&mut f, &records)?;
                f.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

fn cell_json(c: &str) -> Value {
    if let Ok(i) = c.parse::<i64>() {
        return json!(i);
    }
    if c == "true" || c == "false" {
        return json!(c == "true");
    }
    match c.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => json!(c),
    }
}

fn load_model(arg: &Option<PathBuf>) -> Result<ProcessModel> {
    match arg {
        Some(p) => ProcessModel::from_json_file(p),
        None => Ok(ProcessModel::wiener_1d()),
    }
}

fn basis_for(model: ProcessModel, depth: u32) -> Result<Basis> {
    Basis::dyadic(Arc::new(FlowCache::new(model)?), depth)
}

fn grid_points(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(GmsError::Range("need at least 2 evaluation points".into()));
    }
    Ok((0..points)
        .map(|i| i as f64 / (points - 1) as f64)
        .collect())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_manifest(out: &Path, command: &str, config: Value, summary: Value) -> Result<()> {
    let m = json!({
        "tool": "gms",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "summary": summary,
    });
    let mut f = std::fs::File::create(manifest_path(out))?;
    serde_json::to_writer_pretty(&mut f, &m)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn push_vector_rows(table: &mut Table, prefix: &[String], v: &Vector) {
    for (i, x) in v.iter().enumerate() {
        let mut row = prefix.to_vec();
        row.push(i.to_string());
        row.push(fmt_f64(*x));
        table.rows.push(row);
    }
}

fn path_table(basis: &Basis, paths: &[transforms::SamplePath]) -> Table {
    let mut t = Table::new(&["path_id", "t", "i", "x_i"]);
    let _ = basis;
    for p in paths {
        let (times, vals) = p.grid();
        for (s, v) in times.iter().zip(&vals) {
            push_vector_rows(&mut t, &[p.path_id().to_string(), fmt_f64(*s)], v);
        }
    }
    t
}

type GridData = BTreeMap<u64, (Vec<f64>, Vec<Vector>)>;

/// Reads `[path_id,]t,i,x_i` rows into per-path grids.
fn read_grid_csv(path: &Path, d: usize) -> Result<GridData> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (ct, ci, cx) = match (col("t"), col("i"), col("x_i")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(GmsError::Range("input needs columns t, i, x_i".into())),
    };
    let cp = col("path_id");
    let mut raw: BTreeMap<u64, BTreeMap<u64, Vector>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |c: usize| -> Result<&str> {
            rec.get(c)
                .map(str::trim)
                .ok_or_else(|| GmsError::Range("short CSV row".into()))
        };
        let bad = |what: &str| GmsError::Range(format!("cannot parse {what} in input"));
        let pid = match cp {
            Some(c) => parse(c)?.parse::<u64>().map_err(|_| bad("path_id"))?,
            None => 0,
        };
        let t: f64 = parse(ct)?.parse().map_err(|_| bad("t"))?;
        let i: usize = parse(ci)?.parse().map_err(|_| bad("i"))?;
        let x: f64 = parse(cx)?.parse().map_err(|_| bad("x_i"))?;
        if i >= d {
            return Err(GmsError::Dimension(format!(
                "component {i} exceeds d = {d}"
            )));
        }
        raw.entry(pid)
            .or_default()
            .entry(t.to_bits())
            .or_insert_with(|| Vector::zeros(d))[i] = x;
    }
    Ok(raw
        .into_iter()
        .map(|(pid, g)| {
            let (ts, vs): (Vec<f64>, Vec<Vector>) =
                g.into_iter().map(|(b, v)| (f64::from_bits(b), v)).unzip();
            (pid, (ts, vs))
        })
        .collect())
}

struct Outcome {
    table: Option<(PathBuf, Table)>,
    config: Value,
    summary: Value,
    passed: bool,
}

fn run_basis(model: &ModelArg, depth: u32, points: usize, out: &Path) -> Result<Outcome> {
    let b = basis_for(load_model(&model.model)?, depth)?;
    let ts = grid_points(points)?;
    let mut table = Table::new(&["n", "k", "t", "i", "j", "psi_ij", "phi_ij"]);
    let n_el = crate::partition::element_count(depth);
    let rows: Vec<Vec<Vec<String>>> = b.elements()[..n_el]
        .par_iter()
        .map(|e| {
            let mut rows = Vec::new();
            for &t in &ts {
                let psi = e.eval_psi(b.cache(), t);
                let phi = e.eval_phi(b.cache(), t);
                for i in 0..psi.nrows() {
                    for j in 0..psi.ncols() {
                        rows.push(vec![
                            e.index.n.to_string(),
                            e.index.k.to_string(),
                            fmt_f64(t),
                            i.to_string(),
                            j.to_string(),
                            fmt_f64(psi[(i, j)]),
                            fmt_f64(phi[(i, j)]),
                        ]);
                    }
                }
            }
            rows
        })
        .collect();
    table.rows = rows.into_iter().flatten().collect();
    Ok(Outcome {
        table: Some((out.to_path_buf(), table)),
        config: json!({"model": model.model, "depth": depth, "points": points}),
        summary: json!({"elements": n_el}),
        passed: true,
    })
}

fn run_simulate(
    model: &ModelArg,
    depth: u32,
    levels: u32,
    paths: u64,
    seed: u64,
    out: &Path,
) -> Result<Outcome> {
    let b = basis_for(load_model(&model.model)?, depth + levels)?;
    let sampled: Vec<transforms::SamplePath> = (0..paths)
        .into_par_iter()
        .map(|id| {
            let p = transforms::sample(&b, seed, id, depth)?;
            if levels == 0 {
                Ok(p)
            } else {
                transforms::refine_levels(&b, &p, levels)
            }
        })
        .collect::<Result<_>>()?;
    Ok(Outcome {
        table: Some((out.to_path_buf(), path_table(&b, &sampled))),
        config: json!({"model": model.model, "depth": depth, "levels": levels, "paths": paths, "seed": seed}),
        summary: json!({"grid_points": sampled.first().map(|p| p.grid().0.len())}),
        passed: true,
    })
}

fn run_coeffs(model: &ModelArg, depth: u32, input: &Path, out: &Path) -> Result<Outcome> {
    let b = basis_for(load_model(&model.model)?, depth)?;
    let data = read_grid_csv(input, b.d())?;
    let mut table = Table::new(&["path_id", "n", "k", "i", "xi_i"]);
    for (pid, (ts, vs)) in &data {
        let xi = transforms::coefficients_from_grid(&b, ts, vs, depth)?;
        for (flat, v) in xi.values().iter().enumerate() {
            let idx = NodeIndex::from_flat(flat);
            push_vector_rows(
                &mut table,
                &[pid.to_string(), idx.n.to_string(), idx.k.to_string()],
                v,
            );
        }
    }
    Ok(Outcome {
        table: Some((out.to_path_buf(), table)),
        config: json!({"model": model.model, "depth": depth, "input": input}),
        summary: json!({"paths": data.len()}),
        passed: true,
    })
}

fn run_interp(
    model: &ModelArg,
    depth: u32,
    input: &Path,
    points: usize,
    out: &Path,
) -> Result<Outcome> {
    let b = basis_for(load_model(&model.model)?, depth)?;
    let data = read_grid_csv(input, b.d())?;
    let (ts, vs) = match data.len() {
        1 => data.into_values().next().expect("one path"),
        0 => return Err(GmsError::Range("input has no rows".into())),
        _ => {
            return Err(GmsError::Range(
                "interp expects data for a single path".into(),
            ))
        }
    };
    let problem = InterpolationProblem::new(&b, depth, ts, vs)?;
    let x = interp::optimal_interpolant(&problem)?;
    let energy = if b.cache().m() == b.d() {
        Some(interp::dirichlet_energy(
            b.cache(),
            &x as &dyn PiecewiseSmooth,
        )?)
    } else {
        None
    };
    let mut table = Table::new(&["t", "i", "x_i"]);
    for t in grid_points(points)? {
        push_vector_rows(&mut table, &[fmt_f64(t)], &x.eval(t)?);
    }
    Ok(Outcome {
        table: Some((out.to_path_buf(), table)),
        config: json!({"model": model.model, "depth": depth, "input": input, "points": points}),
        summary: json!({"dirichlet_energy": energy}),
        passed: true,
    })
}

fn run_girsanov(
    alpha: &Path,
    beta: &Path,
    depth: u32,
    paths: u64,
    seed: u64,
    out: &Path,
) -> Result<Outcome> {
    let pair = ModelPair::new(
        ProcessModel::from_json_file(alpha)?,
        ProcessModel::from_json_file(beta)?,
    )?;
    let lift = girsanov::lift_matrix(&pair, depth)?;
    let b = pair.alpha_basis(depth)?;
    let weights: Vec<girsanov::RnWeight> = (0..paths)
        .into_par_iter()
        .map(|id| {
            let p = transforms::sample(&b, seed, id, depth)?;
            girsanov::rn_derivative(&lift, p.coefficients())
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["path_id", "log_weight", "weight"]);
    for (id, w) in weights.iter().enumerate() {
        table.rows.push(vec![
            id.to_string(),
            fmt_f64(w.log_weight),
            fmt_f64(w.weight),
        ]);
    }
    let n = weights.len() as f64;
    let mean = weights.iter().map(|w| w.weight).sum::<f64>() / n;
    let var = weights
        .iter()
        .map(|w| (w.weight - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    Ok(Outcome {
        table: Some((out.to_path_buf(), table)),
        config: json!({"alpha": alpha, "beta": beta, "depth": depth, "paths": paths, "seed": seed}),
        summary: json!({
            "determinant": lift.det,
            "determinant_limit": girsanov::determinant_limit(&pair),
            "mean_weight": mean,
            "standard_error": (var / n).sqrt(),
        }),
        passed: true,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_fpt(
    model: &ModelArg,
    level: f64,
    direction: &Option<Vec<f64>>,
    paths: u64,
    max_depth: u32,
    coarse_depth: u32,
    p_low: f64,
    p_high: f64,
    seed: u64,
    out: &Path,
) -> Result<Outcome> {
    let b = basis_for(load_model(&model.model)?, max_depth)?;
    let boundary = match direction {
        Some(w) => Boundary::HalfSpace {
            direction: w.clone(),
            level,
        },
        None => Boundary::Level(level),
    };
    let mut q = FptQuery::new(boundary, paths, max_depth, seed);
    q.coarse_depth = coarse_depth;
    q.p_low = p_low;
    q.p_high = p_high;
    let recs = fpt::first_passage(&b, &q)?;
    let mut table = Table::new(&["path_id", "crossed", "tau_lo", "tau_hi"]);
    for r in &recs {
        table.rows.push(vec![
            r.path_id.to_string(),
            r.crossed.to_string(),
            fmt_f64(r.tau_lo),
            fmt_f64(r.tau_hi),
        ]);
    }
    let crossed = recs.iter().filter(|r| r.crossed).count();
    let drawn: usize = recs.iter().map(|r| r.refined_nodes + r.coarse_nodes).sum();
    let full = crate::partition::element_count(max_depth) as f64 * recs.len() as f64;
    Ok(Outcome {
        table: Some((out.to_path_buf(), table)),
        config: json!({
            "model": model.model, "level": level, "direction": direction, "paths": paths,
            "max_depth": max_depth, "coarse_depth": coarse_depth, "p_low": p_low, "p_high": p_high, "seed": seed,
        }),
        summary: json!({
            "crossed": crossed,
            "crossing_fraction": crossed as f64 / recs.len().max(1) as f64,
            "refined_fraction": drawn as f64 / full.max(1.0),
        }),
        passed: true,
    })
}

/// One analytic identity check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error.is_finite() && self.error <= self.tolerance
    }
}

/// Duality, Cholesky, chain-rule and round-trip identities at `depth`.
pub fn selftest_checks(model: ProcessModel, depth: u32) -> Result<Vec<Check>> {
    let b = basis_for(model, depth)?;
    let c = b.cache();
    let d = b.d();
    let n = crate::partition::element_count(depth);
    let els = &b.elements()[..n];

    let duality = els
        .par_iter()
        .map(|p| {
            let dual = p.dual();
            els.iter()
                .map(|q| {
                    let v = dual.apply(|t| q.eval_psi(c, t));
                    let target = if p.index == q.index {
                        Mat::identity(d, d)
                    } else {
                        Mat::zeros(d, d)
                    };
                    max_abs(&(v - target))
                })
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);

    let psi = transforms::assemble_psi_matrix(&b, depth)?;
    let delta = transforms::assemble_delta_matrix(&b, depth)?;
    let cov = transforms::grid_covariance_matrix(&b, depth)?;
    let chol = max_abs(&(&psi * psi.transpose() - &cov));
    let inv = max_abs(&(delta.transpose() * &delta * &cov - Mat::identity(n * d, n * d)));

    let probes = [0.0, 0.13, 0.31, 0.5, 0.77, 1.0];
    let mut chain = 0.0f64;
    for &s in &probes {
        for &u in &probes {
            for &t in &probes {
                chain = chain.max(max_abs(&(c.flow(u, t) * c.flow(s, u) - c.flow(s, t))));
            }
        }
    }

    let xi = transforms::CoefficientField::from_values(
        d,
        depth,
        (0..n)
            .map(|i| crate::rng::node_normal(17, 0, NodeIndex::from_flat(i), d))
            .collect(),
    )?;
    let path = transforms::path_from_coefficients(&b, xi.clone(), 17, 0)?;
    let (ts, vs) = path.grid();
    let back = transforms::coefficients_from_grid(&b, &ts, &vs, depth)?;
    let round = xi
        .values()
        .iter()
        .zip(back.values())
        .map(|(a, b)| (a - b).amax())
        .fold(0.0f64, f64::max);

    Ok(vec![
        Check {
            name: "duality",
            error: duality,
            tolerance: 1e-8,
        },
        Check {
            name: "cholesky_psi_psi_t",
            error: chol,
            tolerance: 1e-8,
        },
        Check {
            name: "inverse_delta_t_delta_c",
            error: inv,
            tolerance: 1e-6,
        },
        Check {
            name: "flow_chain_rule",
            error: chain,
            tolerance: 1e-10,
        },
        Check {
            name: "coefficient_round_trip",
            error: round,
            tolerance: 1e-10,
        },
    ])
}

fn run_selftest(
    model: &ModelArg,
    depth: u32,
    out: &Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<Outcome> {
    let checks = selftest_checks(load_model(&model.model)?, depth)?;
    let mut table = Table::new(&["check", "error", "tolerance", "status"]);
    for ch in &checks {
        let status = if ch.passed() { "PASS" } else { "FAIL" };
        writeln!(
            stdout,
            "{status} {:<26} error={:.3e} tol={:.1e}",
            ch.name, ch.error, ch.tolerance
        )?;
        table.rows.push(vec![
            ch.name.into(),
            fmt_f64(ch.error),
            fmt_f64(ch.tolerance),
            status.into(),
        ]);
    }
    let passed = checks.iter().all(Check::passed);
    Ok(Outcome {
        table: out.clone().map(|p| (p, table)),
        config: json!({"model": model.model, "depth": depth}),
        summary: json!({"passed": passed, "checks": checks.len()}),
        passed,
    })
}

fn dispatch(cmd: &Command, stdout: &mut dyn Write) -> Result<Outcome> {
    match cmd {
        Command::Basis {
            model,
            depth,
            points,
            out,
        } => run_basis(model, *depth, *points, out),
        Command::Simulate {
            model,
            depth,
            paths,
            seed,
            out,
        } => run_simulate(model, *depth, 0, *paths, *seed, out),
        Command::Refine {
            model,
            depth,
            levels,
            paths,
            seed,
            out,
        } => run_simulate(model, *depth, *levels, *paths, *seed, out),
        Command::Coeffs {
            model,
            depth,
            input,
            out,
        } => run_coeffs(model, *depth, input, out),
        Command::Interp {
            model,
            depth,
            input,
            points,
            out,
        } => run_interp(model, *depth, input, *points, out),
        Command::Girsanov {
            alpha,
            beta,
            depth,
            paths,
            seed,
            out,
        } => run_girsanov(alpha, beta, *depth, *paths, *seed, out),
        Command::Fpt {
            model,
            level,
            direction,
            paths,
            max_depth,
            coarse_depth,
            p_low,
            p_high,
            seed,
            out,
        } => run_fpt(
            model,
            *level,
            direction,
            *paths,
            *max_depth,
            *coarse_depth,
            *p_low,
            *p_high,
            *seed,
            out,
        ),
        Command::Selftest { model, depth, out } => run_selftest(model, *depth, out, stdout),
    }
}

fn thread_count(flag: Option<usize>) -> std::result::Result<Option<usize>, String> {
    match std::env::var("GMS_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| format!("GMS_THREADS must be a positive integer, got {v:?}")),
        Err(_) => match flag {
            Some(0) => Err("--threads must be positive".into()),
            other => Ok(other),
        },
    }
}

/// Runs the CLI on `args`, writing reports to `stdout` and diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    if let Err(msg) = cli.command.validate() {
        let _ = writeln!(stderr, "error: {msg}");
        return EXIT_USAGE;
    }
    let threads = match thread_count(cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: thread pool: {e}");
            return EXIT_FAILURE;
        }
    };
    let stage = cli.command.name();
    let mut report: Vec<u8> = Vec::new();
    let dispatched = pool.install(|| dispatch(&cli.command, &mut report));
    let _ = stdout.write_all(&report);
    let result = dispatched.and_then(|o| {
        if let Some((path, table)) = &o.table {
            table.write(path, cli.format)?;
            let mut config = o.config.clone();
            config["format"] = json!(format!("{:?}", cli.format).to_lowercase());
            config["threads"] = json!(pool.current_num_threads());
            write_manifest(path, stage, config, o.summary.clone())?;
        }
        Ok(o.passed)
    });
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            let _ = writeln!(stderr, "error in stage {stage}: one or more checks failed");
            EXIT_FAILURE
        }
        Err(e) => {
            let _ = writeln!(stderr, "error in stage {stage}: {e}");
            EXIT_FAILURE
        }
    }
}
