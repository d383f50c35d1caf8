//! Dichotomic first-passage search: paths are refined only where a crossing is plausible.

use crate::basis::{bridge_moments, Basis, Vector};
use crate::error::{GmsError, Result};
use crate::flow::FlowCache;
use crate::partition::NodeIndex;
use crate::rng;
use crate::transforms;
use rayon::prelude::*;
use std::sync::Arc;

pub type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Boundary {
    /// Constant level for a scalar process.
    Level(f64),
    /// Time-dependent level `a(t)` for a scalar process.
    Curve(Curve),
    /// Exit through `{x : w . x >= level}`.
    HalfSpace { direction: Vec<f64>, level: f64 },
}

impl std::fmt::Debug for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Level(a) => write!(f, "Level({a})"),
            Self::Curve(_) => write!(f, "Curve"),
            Self::HalfSpace { direction, level } => write!(f, "HalfSpace({direction:?}, {level})"),
        }
    }
}

impl Boundary {
    fn level_at(&self, t: f64) -> f64 {
        match self {
            Self::Level(a) => *a,
            Self::Curve(c) => c(t),
            Self::HalfSpace { level, .. } => *level,
        }
    }

    fn project(&self, x: &Vector) -> f64 {
        match self {
            Self::HalfSpace { direction, .. } => {
                direction.iter().zip(x.iter()).map(|(w, v)| w * v).sum()
            }
            _ => x[0],
        }
    }
}

#[derive(Clone, Debug)]
pub struct FptQuery {
    pub boundary: Boundary,
    /// Finest grid is `D_max_depth`.
    pub max_depth: u32,
    /// Depth of the initial unconditional sample.
    pub coarse_depth: u32,
    pub p_low: f64,
    pub p_high: f64,
    pub paths: u64,
    pub seed: u64,
}

impl FptQuery {
    pub fn new(boundary: Boundary, paths: u64, max_depth: u32, seed: u64) -> Self {
        Self {
            boundary,
            max_depth,
            coarse_depth: 2,
            p_low: 1e-4,
            p_high: 1.0 - 1e-4,
            paths,
            seed,
        }
    }

    pub fn validate(&self, basis: &Basis) -> Result<()> {
        if !(0.0 < self.p_low && self.p_low < self.p_high && self.p_high < 1.0) {
            return Err(GmsError::Range(format!(
                "thresholds must satisfy 0 < p_low < p_high < 1 (got {}, {})",
                self.p_low, self.p_high
            )));
        }
        if self.coarse_depth < 1 || self.coarse_depth > self.max_depth {
            return Err(GmsError::Range(
                "need 1 <= coarse_depth <= max_depth".into(),
            ));
        }
        if self.max_depth > basis.max_depth() {
            return Err(GmsError::Range(format!(
                "max_depth {} exceeds the basis depth {}",
                self.max_depth,
                basis.max_depth()
            )));
        }
        match &self.boundary {
            Boundary::HalfSpace { direction, .. } => {
                if direction.len() != basis.d() || direction.iter().all(|w| *w == 0.0) {
                    return Err(GmsError::Dimension(
                        "half-space direction must be a nonzero vector of length d".into(),
                    ));
                }
            }
            _ if basis.d() != 1 => {
                return Err(GmsError::Dimension(
                    "level boundaries need a scalar process; use a half-space for d > 1".into(),
                ))
            }
            _ => {}
        }
        Ok(())
    }
}

/// How a crossing was decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Detection {
    /// A grid value reached the boundary.
    Straddle,
    /// Residual bridge crossing probability at the finest level.
    Probability,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FptRecord {
    pub path_id: u64,
    pub crossed: bool,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub detection: Option<Detection>,
    /// Nodes drawn after the coarse sample.
    pub refined_nodes: usize,
    /// Nodes drawn by the coarse sample.
    pub coarse_nodes: usize,
    /// Projected path values at `tau_lo` and `tau_hi`.
    pub bracket_values: Option<(f64, f64)>,
}

/// Time-changed Brownian-bridge crossing probability for a scalar process between `l` and `r`,
/// with the boundary frozen at the interval ends.
pub fn bridge_crossing_probability(
    cache: &FlowCache,
    x_l: f64,
    x_r: f64,
    l: f64,
    r: f64,
    level: f64,
) -> Result<f64> {
    crossing_probability(cache, x_l, x_r, l, r, level, level)
}

fn crossing_probability(
    cache: &FlowCache,
    x_l: f64,
    x_r: f64,
    l: f64,
    r: f64,
    a_l: f64,
    a_r: f64,
) -> Result<f64> {
    if cache.d() != 1 {
        return Err(GmsError::Dimension(
            "scalar crossing probability needs d = 1".into(),
        ));
    }
    if x_l >= a_l || x_r >= a_r {
        return Ok(1.0);
    }
    let d_eta = cache.h(0.0, l, r)[(0, 0)];
    if !(d_eta > 0.0) {
        return Err(GmsError::Degenerate {
            n: 0,
            k: 0,
            reason: format!("no variance accumulates on [{l}, {r}]"),
        });
    }
    let (gl, gr) = (cache.g(l)[(0, 0)], cache.g(r)[(0, 0)]);
    let gap = (a_l - x_l) / gl * ((a_r - x_r) / gr);
    Ok((-2.0 * gap / d_eta).exp())
}

/// Brownian-bridge approximation for the projection `w . X`, matched to the exact conditional
/// variance of the projection at the interval midpoint.
fn projected_crossing_probability(
    cache: &FlowCache,
    direction: &[f64],
    z_l: f64,
    z_r: f64,
    l: f64,
    r: f64,
    level: f64,
) -> Result<f64> {
    if z_l >= level || z_r >= level {
        return Ok(1.0);
    }
    let b = bridge_moments(cache, 0.5 * (l + r), l, r)?;
    let w = Vector::from_column_slice(direction);
    let var_mid = (w.transpose() * &b.sigma * &w)[(0, 0)];
    if !(var_mid > 0.0) {
        return Ok(0.0);
    }
    Ok((-2.0 * (level - z_l) * (level - z_r) / (4.0 * var_mid)).exp())
}

fn interval_probability(
    basis: &Basis,
    q: &FptQuery,
    x_l: &Vector,
    x_r: &Vector,
    l: f64,
    r: f64,
) -> Result<(bool, f64)> {
    let (z_l, z_r) = (q.boundary.project(x_l), q.boundary.project(x_r));
    let (a_l, a_r) = (q.boundary.level_at(l), q.boundary.level_at(r));
    if z_r >= a_r {
        return Ok((true, 1.0));
    }
    let p = match &q.boundary {
        Boundary::HalfSpace { direction, level } if basis.d() > 1 => {
            projected_crossing_probability(basis.cache(), direction, z_l, z_r, l, r, *level)?
        }
        Boundary::HalfSpace { direction, .. } => {
            scalar_halfspace(basis.cache(), direction[0], x_l[0], x_r[0], l, r, a_l)?
        }
        _ => crossing_probability(basis.cache(), z_l, z_r, l, r, a_l, a_r)?,
    };
    Ok((false, p))
}

fn scalar_halfspace(
    cache: &FlowCache,
    w: f64,
    x_l: f64,
    x_r: f64,
    l: f64,
    r: f64,
    level: f64,
) -> Result<f64> {
    if w > 0.0 {
        crossing_probability(cache, x_l, x_r, l, r, level / w, level / w)
    } else {
        crossing_probability(cache, -x_l, -x_r, l, r, level / -w, level / -w)
    }
}

fn interval(basis: &Basis, idx: NodeIndex) -> Result<crate::partition::Support> {
    let tree = basis.tree();
    if idx.n <= tree.depth() {
        return tree.support(idx);
    }
    let parent = idx
        .parent()
        .ok_or_else(|| GmsError::Range(format!("node {idx} has no parent")))?;
    let p = tree.support(parent)?;
    let (l, r) = if idx.k.is_multiple_of(2) {
        (p.l, p.m)
    } else {
        (p.m, p.r)
    };
    Ok(crate::partition::Support {
        l,
        m: 0.5 * (l + r),
        r,
    })
}

/// Runs the dichotomic search for one path.
pub fn first_passage_path(basis: &Basis, q: &FptQuery, path_id: u64) -> Result<FptRecord> {
    let mut path = transforms::sample(basis, q.seed, path_id, q.coarse_depth)?;
    let coarse_nodes = crate::partition::element_count(q.coarse_depth);
    let mut record = FptRecord {
        path_id,
        crossed: false,
        tau_lo: f64::NAN,
        tau_hi: f64::NAN,
        detection: None,
        refined_nodes: 0,
        coarse_nodes,
        bracket_values: None,
    };
    let x0 = Vector::zeros(basis.d());
    if q.boundary.project(&x0) >= q.boundary.level_at(0.0) {
        record.crossed = true;
        record.tau_lo = 0.0;
        record.tau_hi = 0.0;
        record.detection = Some(Detection::Straddle);
        return Ok(record);
    }
    let n0 = q.coarse_depth;
    let mut stack: Vec<NodeIndex> = (0..(1u64 << (n0 - 1)))
        .rev()
        .map(|k| NodeIndex::new(n0, k))
        .collect();
    while let Some(idx) = stack.pop() {
        let s = interval(basis, idx)?;
        let x_l = path.value_at(s.l).expect("left end on grid").clone();
        let x_r = path.value_at(s.r).expect("right end on grid").clone();
        let (straddle, p) = interval_probability(basis, q, &x_l, &x_r, s.l, s.r)?;
        if !straddle && p <= q.p_low {
            continue;
        }
        if idx.n < q.max_depth {
            path.refine_node(basis, idx)?;
            record.refined_nodes += 1;
            let (a, b) = idx.children();
            stack.push(b);
            stack.push(a);
            continue;
        }
        let detection = if straddle {
            Some(Detection::Straddle)
        } else if p >= q.p_high || rng::node_uniform(q.seed, path_id, idx) < p {
            Some(Detection::Probability)
        } else {
            None
        };
        if let Some(det) = detection {
            record.crossed = true;
            record.tau_lo = s.l;
            record.tau_hi = s.r;
            record.detection = Some(det);
            record.bracket_values = Some((q.boundary.project(&x_l), q.boundary.project(&x_r)));
            return Ok(record);
        }
    }
    Ok(record)
}

/// Runs the search for paths `0..paths` in parallel.
pub fn first_passage(basis: &Basis, q: &FptQuery) -> Result<Vec<FptRecord>> {
    q.validate(basis)?;
    (0..q.paths)
        .into_par_iter()
        .map(|id| first_passage_path(basis, q, id))
        .collect()
}
