//! Construction (coefficients to paths), coefficient recovery, finite-dimensional matrices,
//! sampling with conditional refinement, and the operators `K` and `D`.

use crate::basis::{Basis, Vector};
use crate::error::{GmsError, Result};
use crate::flow::FlowCache;
use crate::linalg::{self, Mat};
use crate::partition::{element_count, NodeIndex};
use crate::rng;
use std::collections::{BTreeMap, HashMap};

/// Coefficients `xi_{n,k}` for all elements of level `< depth`, in recursive dyadic order.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    d: usize,
    depth: u32,
    values: Vec<Vector>,
}

impl CoefficientField {
    pub fn zeros(d: usize, depth: u32) -> Self {
        Self {
            d,
            depth,
            values: vec![Vector::zeros(d); element_count(depth)],
        }
    }

    pub fn from_values(d: usize, depth: u32, values: Vec<Vector>) -> Result<Self> {
        if values.len() != element_count(depth) {
            return Err(GmsError::Dimension(format!(
                "depth {depth} needs {} coefficients, got {}",
                element_count(depth),
                values.len()
            )));
        }
        if values
            .iter()
            .any(|v| v.len() != d || v.iter().any(|x| !x.is_finite()))
        {
            return Err(GmsError::Dimension(format!(
                "coefficients must be finite vectors of length {d}"
            )));
        }
        Ok(Self { d, depth, values })
    }

    /// Field with one unit coordinate at `(idx, component)`.
    pub fn unit(d: usize, depth: u32, idx: NodeIndex, component: usize) -> Self {
        let mut f = Self::zeros(d, depth);
        f.values[idx.flat()][component] = 1.0;
        f
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn get(&self, idx: NodeIndex) -> Option<&Vector> {
        self.values.get(idx.flat())
    }

    pub fn set(&mut self, idx: NodeIndex, v: Vector) -> Result<()> {
        let slot = self
            .values
            .get_mut(idx.flat())
            .ok_or_else(|| GmsError::Range(format!("node {idx} exceeds field depth")))?;
        *slot = v;
        Ok(())
    }

    /// Pads with zeros up to `depth`.
    pub fn extended(&self, depth: u32) -> Self {
        let mut out = self.clone();
        if depth > self.depth {
            out.values
                .resize(element_count(depth), Vector::zeros(self.d));
            out.depth = depth;
        }
        out
    }

    /// Restriction to levels `< depth`.
    pub fn truncated(&self, depth: u32) -> Self {
        let mut out = self.clone();
        if depth < self.depth {
            out.values.truncate(element_count(depth));
            out.depth = depth;
        }
        out
    }

    /// Stacked column vector in recursive dyadic order.
    pub fn to_vector(&self) -> Vector {
        Vector::from_iterator(
            self.values.len() * self.d,
            self.values.iter().flat_map(|v| v.iter().copied()),
        )
    }

    pub fn from_vector(d: usize, depth: u32, v: &Vector) -> Result<Self> {
        let n = element_count(depth);
        if v.len() != n * d {
            return Err(GmsError::Dimension(format!(
                "expected {} entries, got {}",
                n * d,
                v.len()
            )));
        }
        let values = (0..n).map(|i| v.rows(i * d, d).into_owned()).collect();
        Self::from_values(d, depth, values)
    }

    /// Smallest `delta` with `|xi_{n,k}| <= 2^{n delta / 2}` for all levels `n >= n0`.
    pub fn admissibility_delta(&self, n0: u32) -> f64 {
        let mut delta = f64::NEG_INFINITY;
        for (i, v) in self.values.iter().enumerate() {
            let idx = NodeIndex::from_flat(i);
            if idx.n == 0 || idx.n < n0 {
                continue;
            }
            let norm = v.norm();
            if norm > 0.0 {
                delta = delta.max(2.0 * norm.log2() / idx.n as f64);
            }
        }
        delta
    }
}

fn check_depth(basis: &Basis, depth: u32) -> Result<()> {
    if depth > basis.max_depth() {
        return Err(GmsError::Range(format!(
            "depth {depth} exceeds the basis depth {}",
            basis.max_depth()
        )));
    }
    Ok(())
}

/// Partial sum `sum psi_{n,k}(t) xi_{n,k}` over the ancestors of `t`.
pub fn construct(basis: &Basis, xi: &CoefficientField, t: f64) -> Result<Vector> {
    check_depth(basis, xi.depth())?;
    if xi.d() != basis.d() {
        return Err(GmsError::Dimension(
            "coefficient and basis dimensions differ".into(),
        ));
    }
    let mut acc = Vector::zeros(basis.d());
    if xi.depth() == 0 {
        return Ok(acc);
    }
    for idx in basis.tree().ancestors(t, xi.depth() - 1) {
        let c = &xi.values[idx.flat()];
        if c.iter().all(|x| *x == 0.0) {
            continue;
        }
        acc += basis.elements()[idx.flat()].eval_psi(basis.cache(), t) * c;
    }
    Ok(acc)
}

/// Time derivative of the partial sum (left-continuous at breakpoints).
pub fn construct_derivative(basis: &Basis, xi: &CoefficientField, t: f64) -> Result<Vector> {
    check_depth(basis, xi.depth())?;
    let mut acc = Vector::zeros(basis.d());
    if xi.depth() == 0 {
        return Ok(acc);
    }
    for idx in basis.tree().ancestors(t, xi.depth() - 1) {
        let c = &xi.values[idx.flat()];
        acc += basis.elements()[idx.flat()].eval_psi_dot(basis.cache(), t) * c;
    }
    Ok(acc)
}

/// Applies every dual functional of level `< depth` to a function.
pub fn coefficients<F: Fn(f64) -> Vector>(
    basis: &Basis,
    x: F,
    depth: u32,
) -> Result<CoefficientField> {
    check_depth(basis, depth)?;
    let values = basis.elements()[..element_count(depth)]
        .iter()
        .map(|e| {
            let s = e.support;
            e.apply_dual(&x(s.l), &x(s.m), &x(s.r))
        })
        .collect();
    CoefficientField::from_values(basis.d(), depth, values)
}

/// Coefficients from values on the grid `D_depth` (times must match exactly).
pub fn coefficients_from_grid(
    basis: &Basis,
    times: &[f64],
    values: &[Vector],
    depth: u32,
) -> Result<CoefficientField> {
    if times.len() != values.len() {
        return Err(GmsError::Dimension(
            "grid times and values differ in length".into(),
        ));
    }
    let lookup: HashMap<u64, &Vector> = times.iter().map(|t| t.to_bits()).zip(values).collect();
    let zero = Vector::zeros(basis.d());
    let get = |t: f64| -> Result<Vector> {
        if let Some(v) = lookup.get(&t.to_bits()) {
            return Ok((*v).clone());
        }
        if t == 0.0 {
            return Ok(zero.clone());
        }
        Err(GmsError::Range(format!("missing grid value at t = {t}")))
    };
    check_depth(basis, depth)?;
    let mut out = Vec::with_capacity(element_count(depth));
    for e in &basis.elements()[..element_count(depth)] {
        let s = e.support;
        out.push(e.apply_dual(&get(s.l)?, &get(s.m)?, &get(s.r)?));
    }
    CoefficientField::from_values(basis.d(), depth, out)
}

/// Grid points of the finite-dimensional matrices: split points in recursive dyadic order
/// (the root contributes `t = 1`).
pub fn matrix_points(basis: &Basis, depth: u32) -> Result<Vec<f64>> {
    check_depth(basis, depth)?;
    Ok(basis.elements()[..element_count(depth)]
        .iter()
        .map(|e| e.support.m)
        .collect())
}

/// `Psi_N`: block `(i, j)` is `psi_j(point_i)`.
pub fn assemble_psi_matrix(basis: &Basis, depth: u32) -> Result<Mat> {
    let pts = matrix_points(basis, depth)?;
    let d = basis.d();
    let n = pts.len();
    let mut out = Mat::zeros(n * d, n * d);
    for (j, e) in basis.elements()[..n].iter().enumerate() {
        for (i, &t) in pts.iter().enumerate() {
            if !e.support.contains(t) {
                continue;
            }
            let blk = e.eval_psi(basis.cache(), t);
            out.view_mut((i * d, j * d), (d, d)).copy_from(&blk);
        }
    }
    Ok(out)
}

/// `Delta_N`: block `(j, i)` is the weight of the dual functional `j` at `point_i`.
pub fn assemble_delta_matrix(basis: &Basis, depth: u32) -> Result<Mat> {
    let pts = matrix_points(basis, depth)?;
    let d = basis.d();
    let n = pts.len();
    let pos: HashMap<u64, usize> = pts
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_bits(), i))
        .collect();
    let mut out = Mat::zeros(n * d, n * d);
    for (j, e) in basis.elements()[..n].iter().enumerate() {
        for (t, w) in e.dual().points {
            match pos.get(&t.to_bits()) {
                Some(&i) => {
                    let mut blk = out.view_mut((j * d, i * d), (d, d));
                    blk += &w;
                }
                None if t == 0.0 => {}
                None => {
                    return Err(GmsError::Range(format!(
                        "dual point {t} of {} is not a grid point",
                        e.index
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// `[C(point_i, point_j)]` over the matrix points.
pub fn grid_covariance_matrix(basis: &Basis, depth: u32) -> Result<Mat> {
    let pts = matrix_points(basis, depth)?;
    let d = basis.d();
    let n = pts.len();
    let mut out = Mat::zeros(n * d, n * d);
    for (i, &t) in pts.iter().enumerate() {
        for (j, &s) in pts.iter().enumerate() {
            out.view_mut((i * d, j * d), (d, d))
                .copy_from(&basis.cache().covariance(t, s));
        }
    }
    Ok(out)
}

/// Checks block lower-triangularity of a square block matrix.
pub fn is_block_lower_triangular(a: &Mat, d: usize) -> bool {
    let n = a.nrows() / d;
    (0..n).all(|i| ((i + 1)..n).all(|j| a.view((i * d, j * d), (d, d)).iter().all(|x| *x == 0.0)))
}

fn time_key(t: f64) -> u64 {
    t.to_bits()
}

/// A synthesized path: coefficients plus values on the refined grid.
#[derive(Clone, Debug)]
pub struct SamplePath {
    seed: u64,
    path_id: u64,
    /// Every level below `depth` is fully drawn.
    depth: u32,
    coefficients: CoefficientField,
    /// Nodes of level `>= depth` drawn by partial refinement.
    extra: Vec<NodeIndex>,
    grid: BTreeMap<u64, Vector>,
}

impl SamplePath {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coefficients
    }

    pub fn partially_refined(&self) -> &[NodeIndex] {
        &self.extra
    }

    /// Sorted grid times and values.
    pub fn grid(&self) -> (Vec<f64>, Vec<Vector>) {
        let times = self.grid.keys().map(|k| f64::from_bits(*k)).collect();
        let vals = self.grid.values().cloned().collect();
        (times, vals)
    }

    pub fn value_at(&self, t: f64) -> Option<&Vector> {
        self.grid.get(&time_key(t))
    }

    /// Partial-sum evaluator at arbitrary `t`.
    pub fn evaluate(&self, basis: &Basis, t: f64) -> Result<Vector> {
        construct(basis, &self.coefficients, t)
    }
}

/// Path of depth `depth` with coefficients drawn from the keyed generator.
pub fn sample(basis: &Basis, seed: u64, path_id: u64, depth: u32) -> Result<SamplePath> {
    check_depth(basis, depth)?;
    let d = basis.d();
    let values = (0..element_count(depth))
        .map(|i| rng::node_normal(seed, path_id, NodeIndex::from_flat(i), d))
        .collect();
    let coefficients = CoefficientField::from_values(d, depth, values)?;
    path_from_coefficients(basis, coefficients, seed, path_id)
}

/// Path whose grid is `D_depth` for a given coefficient field.
pub fn path_from_coefficients(
    basis: &Basis,
    coefficients: CoefficientField,
    seed: u64,
    path_id: u64,
) -> Result<SamplePath> {
    let depth = coefficients.depth();
    check_depth(basis, depth)?;
    let mut grid = BTreeMap::new();
    grid.insert(time_key(0.0), Vector::zeros(basis.d()));
    for e in &basis.elements()[..element_count(depth)] {
        let t = e.support.m;
        grid.insert(time_key(t), construct(basis, &coefficients, t)?);
    }
    Ok(SamplePath {
        seed,
        path_id,
        depth,
        coefficients,
        extra: Vec::new(),
        grid,
    })
}

impl SamplePath {
    /// Draws the coefficient of `idx` and inserts `X(m) = Z(m) + sigma xi`.
    ///
    /// The node is admissible when both ends of its support are already on the grid.
    pub fn refine_node(&mut self, basis: &Basis, idx: NodeIndex) -> Result<()> {
        if idx.n < self.depth || self.extra.contains(&idx) {
            return Err(GmsError::Range(format!("node {idx} is already drawn")));
        }
        if idx.n > basis.max_level() {
            return Err(GmsError::Range(format!(
                "node {idx} exceeds basis level {}",
                basis.max_level()
            )));
        }
        let e = basis.element(idx)?;
        let s = e.support;
        if self.value_at(s.l).is_none() || self.value_at(s.r).is_none() {
            return Err(GmsError::Range(format!(
                "node {idx} cannot be refined before its parent"
            )));
        }
        if self.coefficients.depth() < idx.n + 1 {
            self.coefficients = self.coefficients.extended(idx.n + 1);
        }
        let xi = rng::node_normal(self.seed, self.path_id, idx, basis.d());
        let z = construct(basis, &self.coefficients, s.m)?;
        self.coefficients.set(idx, xi.clone())?;
        self.grid.insert(time_key(s.m), z + &e.sigma * xi);
        self.extra.push(idx);
        Ok(())
    }

    fn absorb_complete_levels(&mut self) {
        loop {
            let level = self.depth;
            let full = level >= 1
                && (0..(1u64 << (level - 1)))
                    .all(|k| self.extra.contains(&NodeIndex::new(level, k)));
            if !full {
                break;
            }
            self.extra.retain(|i| i.n != level);
            self.depth += 1;
        }
    }
}

/// Draws coefficients for `targets` (processed parents first) and inserts the new split-point
/// values; existing grid values are unchanged.
pub fn refine(basis: &Basis, path: &SamplePath, targets: &[NodeIndex]) -> Result<SamplePath> {
    let mut out = path.clone();
    let mut sorted: Vec<NodeIndex> = targets.to_vec();
    sorted.sort_by_key(|i| i.flat());
    sorted.dedup();
    for idx in sorted {
        out.refine_node(basis, idx)?;
    }
    out.absorb_complete_levels();
    Ok(out)
}

/// Refines every node of the next `levels` levels.
pub fn refine_levels(basis: &Basis, path: &SamplePath, levels: u32) -> Result<SamplePath> {
    let mut out = path.clone();
    for _ in 0..levels {
        let n = out.depth;
        let targets: Vec<NodeIndex> = if n == 0 {
            vec![NodeIndex::ROOT]
        } else {
            (0..(1u64 << (n - 1)))
                .map(|k| NodeIndex::new(n, k))
                .filter(|i| !out.extra.contains(i))
                .collect()
        };
        out = refine(basis, &out, &targets)?;
    }
    Ok(out)
}

/// `K[u](t) = g(t) int_0^t f(s) u(s) ds` at sorted `times`, integrating piecewise between
/// `breakpoints`.
pub fn apply_k<U: Fn(f64) -> Vector>(
    cache: &FlowCache,
    u: U,
    times: &[f64],
    breakpoints: &[f64],
) -> Result<Vec<Vector>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(GmsError::Range(
            "K needs sorted evaluation times in [0, 1]".into(),
        ));
    }
    let mut knots: Vec<f64> = breakpoints
        .iter()
        .chain(times)
        .copied()
        .filter(|t| (0.0..=1.0).contains(t))
        .collect();
    knots.push(0.0);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let d = cache.d();
    let mut acc = Vector::zeros(d);
    let mut cum: HashMap<u64, Vector> = HashMap::new();
    cum.insert(0f64.to_bits(), acc.clone());
    let gl = cache.quadrature();
    for w in knots.windows(2) {
        for (s, wt) in gl.mapped(w[0], w[1]) {
            acc += cache.f(s) * u(s) * wt;
        }
        cum.insert(w[1].to_bits(), acc.clone());
    }
    Ok(times
        .iter()
        .map(|t| cache.g(*t) * &cum[&t.to_bits()])
        .collect())
}

/// `D[u](t) = f(t)^{-1} d/dt (g(t)^{-1} u(t))`; uses `du` when given, otherwise central
/// differences with step `1e-6`.
pub fn apply_d<U, DU>(cache: &FlowCache, u: U, du: Option<DU>, times: &[f64]) -> Result<Vec<Vector>>
where
    U: Fn(f64) -> Vector,
    DU: Fn(f64) -> Vector,
{
    if cache.m() != cache.d() {
        return Err(GmsError::InvalidModel(
            "D requires a square, invertible diffusion root".into(),
        ));
    }
    let model = cache.model();
    let eps = 1e-6;
    times
        .iter()
        .map(|&t| {
            let root_inv =
                linalg::inverse(&model.gamma_root(t), "diffusion root").map_err(|_| {
                    GmsError::InvalidModel(format!("diffusion root is singular at t = {t}"))
                })?;
            match &du {
                Some(du) => Ok(root_inv * (du(t) - model.alpha(t) * u(t))),
                None => {
                    let (a, b) = ((t - eps).max(0.0), (t + eps).min(1.0));
                    let diff = (cache.g_inv(b) * u(b) - cache.g_inv(a) * u(a)) / (b - a);
                    Ok(root_inv * cache.g(t) * diff)
                }
            }
        })
        .collect()
}

/// `sum_j psi^X_j(t) psi^Y_j(s)^T` over elements of level `< depth`.
pub fn cross_covariance(bx: &Basis, by: &Basis, depth: u32, t: f64, s: f64) -> Result<Mat> {
    check_depth(bx, depth)?;
    check_depth(by, depth)?;
    let mut acc = Mat::zeros(bx.d(), by.d());
    for idx in bx.tree().ancestors(t, depth - 1) {
        let ey = &by.elements()[idx.flat()];
        if !ey.support.contains(s) {
            continue;
        }
        acc += bx.elements()[idx.flat()].eval_psi(bx.cache(), t)
            * ey.eval_psi(by.cache(), s).transpose();
    }
    Ok(acc)
}

/// Finite-resolution integration-by-parts defect for two scalar processes driven by the same
/// coefficients: `X_1 Y_1 - sum (X_i dY_i + Y_i dX_i) - B`, with the sums over `D_grid` and
/// `B` the expected discrete bracket `E[sum dX_i dY_i]`.
pub fn integration_by_parts_defect(
    bx: &Basis,
    by: &Basis,
    xi: &CoefficientField,
    grid_depth: u32,
) -> Result<f64> {
    if bx.d() != 1 || by.d() != 1 {
        return Err(GmsError::Dimension(
            "integration-by-parts check is scalar".into(),
        ));
    }
    let grid = bx.tree().endpoints(grid_depth)?;
    let xs: Vec<f64> = grid
        .iter()
        .map(|&t| construct(bx, xi, t).map(|v| v[0]))
        .collect::<Result<_>>()?;
    let ys: Vec<f64> = grid
        .iter()
        .map(|&t| construct(by, xi, t).map(|v| v[0]))
        .collect::<Result<_>>()?;
    let mut ito = 0.0;
    let mut bracket = 0.0;
    let cxy = |t: f64, s: f64| cross_covariance(bx, by, xi.depth(), t, s).map(|m| m[(0, 0)]);
    for i in 0..grid.len() - 1 {
        let (dx, dy) = (xs[i + 1] - xs[i], ys[i + 1] - ys[i]);
        ito += xs[i] * dy + ys[i] * dx;
        let (a, b) = (grid[i], grid[i + 1]);
        bracket += cxy(b, b)? - cxy(b, a)? - cxy(a, b)? + cxy(a, a)?;
    }
    Ok(xs[xs.len() - 1] * ys[ys.len() - 1] - ito - bracket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::model::ProcessModel;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn wiener_basis(depth: u32) -> Basis {
        Basis::dyadic(
            Arc::new(FlowCache::new(ProcessModel::wiener_1d()).unwrap()),
            depth,
        )
        .unwrap()
    }

    #[test]
    fn construct_examples() {
        let b = wiener_basis(4);
        let xi = CoefficientField::unit(1, 4, NodeIndex::new(1, 0), 0);
        assert_abs_diff_eq!(construct(&b, &xi, 0.5).unwrap()[0], 0.5, epsilon = 1e-15);
        let z = CoefficientField::zeros(1, 4);
        assert_eq!(construct(&b, &z, 0.3).unwrap()[0], 0.0);
        assert!(construct(&b, &CoefficientField::zeros(1, 6), 0.3).is_err());
    }

    #[test]
    fn identity_function_round_trip() {
        let b = wiener_basis(6);
        let xi = coefficients(&b, |t| Vector::from_element(1, t), 6).unwrap();
        for t in b.tree().endpoints(6).unwrap() {
            assert_abs_diff_eq!(construct(&b, &xi, t).unwrap()[0], t, epsilon = 1e-14);
        }
        assert!(xi.admissibility_delta(1) < 1.0);
    }

    #[test]
    fn small_psi_matrix() {
        let b = wiener_basis(2);
        let p = assemble_psi_matrix(&b, 2).unwrap();
        assert_eq!(p.shape(), (2, 2));
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(1, 1)], 0.5, epsilon = 1e-15);
        assert_eq!(p[(0, 1)], 0.0);
        let dl = assemble_delta_matrix(&b, 2).unwrap();
        assert!(max_abs(&(dl * p - Mat::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn sampling_is_deterministic() {
        let b = wiener_basis(5);
        let p1 = sample(&b, 9, 0, 5).unwrap();
        let p2 = sample(&b, 9, 0, 5).unwrap();
        assert_eq!(p1.grid(), p2.grid());
        let (times, _) = p1.grid();
        assert_eq!(times.len(), 17);
    }

    #[test]
    fn refine_preserves_grid_and_extends_coefficients() {
        let b = wiener_basis(6);
        let p = sample(&b, 3, 1, 3).unwrap();
        let q = refine(&b, &p, &[]).unwrap();
        assert_eq!(p.grid(), q.grid());
        let full = refine_levels(&b, &p, 2).unwrap();
        assert_eq!(full.depth(), 5);
        for (t, v) in p.grid().0.iter().zip(p.grid().1) {
            assert_eq!(full.value_at(*t).unwrap(), &v);
        }
        let (times, vals) = full.grid();
        let xi = coefficients_from_grid(&b, &times, &vals, 5).unwrap();
        let direct = sample(&b, 3, 1, 5).unwrap();
        for (a, c) in xi.values().iter().zip(direct.coefficients().values()) {
            assert_abs_diff_eq!(a[0], c[0], epsilon = 1e-12);
        }
        assert!(refine(&b, &p, &[NodeIndex::new(5, 0)]).is_err());
        assert!(refine(&b, &p, &[NodeIndex::new(2, 0)]).is_err());
    }

    #[test]
    fn k_of_zero_and_d_of_k() {
        let c = FlowCache::new(ProcessModel::wiener_1d()).unwrap();
        let times: Vec<f64> = (0..=32).map(|i| i as f64 / 32.0).collect();
        let z = apply_k(&c, |_| Vector::zeros(1), &times, &[]).unwrap();
        assert!(z.iter().all(|v| v[0] == 0.0));
        let k = |t: f64| {
            apply_k(
                &c,
                |s| Vector::from_element(1, (std::f64::consts::PI * s).sin()),
                &[t],
                &[],
            )
            .unwrap()[0]
                .clone()
        };
        let inner: Vec<f64> = times[1..32].to_vec();
        let du = apply_d(&c, k, None::<fn(f64) -> Vector>, &inner).unwrap();
        for (t, v) in inner.iter().zip(du) {
            assert!((v[0] - (std::f64::consts::PI * t).sin()).abs() < 1e-6);
        }
    }
}
