//! Dirichlet energy, optimal interpolation on `D_N`, and the boundary-value route to the basis.

use crate::basis::Basis;
use crate::basis::{BasisElement, Vector};
use crate::error::{GmsError, Result};
use crate::flow::FlowCache;
use crate::linalg::{self, Mat};
use crate::partition::{NodeIndex, Support, SupportTree};
use crate::quadrature::GaussLegendre;
use crate::transforms::{self, CoefficientField};

/// A function on `[0, 1]` that is smooth between known breakpoints.
pub trait PiecewiseSmooth {
    fn value(&self, t: f64) -> Vector;
    /// Derivative on the open pieces; `None` requests finite differences.
    fn derivative(&self, _t: f64) -> Option<Vector> {
        None
    }
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Closure-backed piecewise-smooth function.
pub struct FnPath<V, D>
where
    V: Fn(f64) -> Vector,
    D: Fn(f64) -> Vector,
{
    pub value: V,
    pub derivative: Option<D>,
    pub breakpoints: Vec<f64>,
}

impl<V: Fn(f64) -> Vector, D: Fn(f64) -> Vector> PiecewiseSmooth for FnPath<V, D> {
    fn value(&self, t: f64) -> Vector {
        (self.value)(t)
    }
    fn derivative(&self, t: f64) -> Option<Vector> {
        self.derivative.as_ref().map(|d| d(t))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

/// Partial sum of the basis with a fixed coefficient field.
#[derive(Clone, Debug)]
pub struct Expansion<'a> {
    pub basis: &'a Basis,
    pub coefficients: CoefficientField,
}

impl<'a> Expansion<'a> {
    pub fn eval(&self, t: f64) -> Result<Vector> {
        transforms::construct(self.basis, &self.coefficients, t)
    }
}

impl<'a> PiecewiseSmooth for Expansion<'a> {
    fn value(&self, t: f64) -> Vector {
        transforms::construct(self.basis, &self.coefficients, t).expect("expansion depth checked")
    }
    fn derivative(&self, t: f64) -> Option<Vector> {
        transforms::construct_derivative(self.basis, &self.coefficients, t).ok()
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.basis
            .tree()
            .endpoints(self.coefficients.depth().max(1))
            .unwrap_or_default()
    }
}

/// Sum of two piecewise-smooth functions.
pub struct Sum<'a>(pub &'a dyn PiecewiseSmooth, pub &'a dyn PiecewiseSmooth);

impl<'a> PiecewiseSmooth for Sum<'a> {
    fn value(&self, t: f64) -> Vector {
        self.0.value(t) + self.1.value(t)
    }
    fn derivative(&self, t: f64) -> Option<Vector> {
        Some(self.0.derivative(t)? + self.1.derivative(t)?)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.0.breakpoints();
        b.extend(self.1.breakpoints());
        b
    }
}

const ENERGY_PANEL: f64 = 1.0 / 64.0;
const FD_STEP: f64 = 1e-6;

/// Panels of `[0, 1]` split at `breakpoints` and refined to width at most `max_width`.
pub(crate) fn panels(breakpoints: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    let mut knots: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|t| *t > 0.0 && *t < 1.0)
        .collect();
    knots.push(0.0);
    knots.push(1.0);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let mut out = Vec::new();
    for w in knots.windows(2) {
        let pieces = ((w[1] - w[0]) / max_width).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let a = w[0] + h * p as f64;
            let b = if p + 1 == pieces { w[1] } else { a + h };
            out.push((a, b));
        }
    }
    out
}

/// `int_0^1 |D[x](t)|^2 dt` with `D[x] = sqrt(Gamma)^{-1} (x' - alpha x)`.
pub fn dirichlet_energy(cache: &FlowCache, x: &dyn PiecewiseSmooth) -> Result<f64> {
    if cache.m() != cache.d() {
        return Err(GmsError::InvalidModel(
            "Dirichlet energy needs a square, invertible diffusion root".into(),
        ));
    }
    let model = cache.model();
    let gl = cache.quadrature();
    let mut total = 0.0;
    for (a, b) in panels(&x.breakpoints(), ENERGY_PANEL) {
        for (s, w) in gl.mapped(a, b) {
            let dx = match x.derivative(s) {
                Some(v) => v,
                None => {
                    let h = FD_STEP.min(0.5 * (s - a)).min(0.5 * (b - s));
                    (x.value(s + h) - x.value(s - h)) / (2.0 * h)
                }
            };
            let root = model.gamma_root(s);
            let lu = root.clone().lu();
            let y = lu
                .solve(&(dx - model.alpha(s) * x.value(s)))
                .ok_or_else(|| {
                    GmsError::InvalidModel(format!("diffusion root singular at t = {s}"))
                })?;
            total += w * y.norm_squared();
        }
    }
    Ok(total)
}

/// Data on `D_N` to be interpolated with minimal Dirichlet energy.
#[derive(Clone, Debug)]
pub struct InterpolationProblem<'a> {
    pub basis: &'a Basis,
    pub depth: u32,
    pub times: Vec<f64>,
    pub values: Vec<Vector>,
}

impl<'a> InterpolationProblem<'a> {
    pub fn new(basis: &'a Basis, depth: u32, times: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        let grid = basis.tree().endpoints(depth)?;
        for t in &grid {
            if !times.iter().any(|s| s.to_bits() == t.to_bits()) {
                return Err(GmsError::Range(format!(
                    "data is missing grid point t = {t}"
                )));
            }
        }
        if let Some(i) = times.iter().position(|t| *t == 0.0) {
            if values[i].iter().any(|x| *x != 0.0) {
                return Err(GmsError::Range("data at t = 0 must vanish".into()));
            }
        }
        if values.iter().any(|v| v.len() != basis.d()) {
            return Err(GmsError::Dimension(
                "data vectors must have length d".into(),
            ));
        }
        Ok(Self {
            basis,
            depth,
            times,
            values,
        })
    }
}

/// `Psi(Delta_N(x))`: the unique minimal-energy interpolant of the data.
pub fn optimal_interpolant<'a>(p: &InterpolationProblem<'a>) -> Result<Expansion<'a>> {
    let coefficients = transforms::coefficients_from_grid(p.basis, &p.times, &p.values, p.depth)?;
    Ok(Expansion {
        basis: p.basis,
        coefficients,
    })
}

/// First-order system used to solve the Euler-Lagrange equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BvpForm {
    /// `u'' + P u' - Q u = 0` with `P = (Gamma alpha^T - Gamma') Gamma^{-1} - alpha` and
    /// `Q = (Gamma alpha^T - Gamma') Gamma^{-1} alpha + alpha'`; needs invertible, differentiable
    /// coefficients.
    SecondOrder,
    /// `u' = alpha u + Gamma v`, `v' = -alpha^T v`; valid for singular `Gamma`.
    Canonical,
}

impl BvpForm {
    pub fn default_for(cache: &FlowCache) -> Self {
        let model = cache.model();
        let square = model.m() == model.d();
        let invertible = square
            && (0..=8).all(|i| {
                let t = i as f64 / 8.0;
                linalg::inverse(&model.gamma_root(t), "root").is_ok()
            });
        if invertible && model.is_differentiable() {
            Self::SecondOrder
        } else {
            Self::Canonical
        }
    }
}

/// One half of a boundary-value solution: `u(zero_at) = 0`, `u(one_at) = I`.
#[derive(Clone, Debug)]
pub struct MuBranch {
    pub zero_at: f64,
    pub one_at: f64,
    form: BvpForm,
    shoot: Mat,
}

/// Solutions on the two halves of a support (the root has only a left half).
#[derive(Clone, Debug)]
pub struct MuSolution {
    pub left: MuBranch,
    pub right: Option<MuBranch>,
}

const MIN_SHOOT_STEPS: usize = 64;

fn companion(cache: &FlowCache, form: BvpForm, t: f64) -> Mat {
    let model = cache.model();
    let d = model.d();
    let a = model.alpha(t);
    let mut out = Mat::zeros(2 * d, 2 * d);
    match form {
        BvpForm::Canonical => {
            out.view_mut((0, 0), (d, d)).copy_from(&a);
            out.view_mut((0, d), (d, d)).copy_from(&model.gamma(t));
            out.view_mut((d, d), (d, d)).copy_from(&(-a.transpose()));
        }
        BvpForm::SecondOrder => {
            let root = model.gamma_root(t);
            let root_dot = model.gamma_root_dot(t).expect("checked differentiable");
            let gamma = &root * root.transpose();
            let gamma_dot = &root_dot * root.transpose() + &root * root_dot.transpose();
            let gamma_inv = gamma.clone().try_inverse().expect("checked invertible");
            let k = (&gamma * a.transpose() - gamma_dot) * gamma_inv;
            let p = &k - &a;
            let q = &k * &a + model.alpha_dot(t).expect("checked differentiable");
            out.view_mut((0, d), (d, d)).copy_from(&Mat::identity(d, d));
            out.view_mut((d, 0), (d, d)).copy_from(&q);
            out.view_mut((d, d), (d, d)).copy_from(&(-p));
        }
    }
    out
}

/// Propagates the companion system from `a` (state `[0; I]`) to `t`.
fn propagate(cache: &FlowCache, form: BvpForm, a: f64, t: f64) -> Mat {
    let d = cache.d();
    let mut y = Mat::zeros(2 * d, d);
    y.view_mut((d, 0), (d, d)).copy_from(&Mat::identity(d, d));
    if a == t {
        return y;
    }
    let n = ((t - a).abs() * cache.config().flow_steps as f64)
        .ceil()
        .max(MIN_SHOOT_STEPS as f64) as usize;
    let h = (t - a) / n as f64;
    for i in 0..n {
        let s = a + i as f64 * h;
        let k1 = companion(cache, form, s) * &y;
        let k2 = companion(cache, form, s + 0.5 * h) * (&y + &k1 * (0.5 * h));
        let k3 = companion(cache, form, s + 0.5 * h) * (&y + &k2 * (0.5 * h));
        let k4 = companion(cache, form, s + h) * (&y + &k3 * h);
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

impl MuBranch {
    fn solve(cache: &FlowCache, form: BvpForm, zero_at: f64, one_at: f64) -> Result<Self> {
        let d = cache.d();
        let y = propagate(cache, form, zero_at, one_at);
        let u_end = y.view((0, 0), (d, d)).into_owned();
        let shoot =
            linalg::inverse(&u_end, "shooting matrix").map_err(|e| GmsError::Degenerate {
                n: 0,
                k: 0,
                reason: format!("shooting on [{zero_at}, {one_at}]: {e}"),
            })?;
        Ok(Self {
            zero_at,
            one_at,
            form,
            shoot,
        })
    }

    fn state(&self, cache: &FlowCache, t: f64) -> (Mat, Mat) {
        let d = cache.d();
        let y = propagate(cache, self.form, self.zero_at, t) * &self.shoot;
        (
            y.view((0, 0), (d, d)).into_owned(),
            y.view((d, 0), (d, d)).into_owned(),
        )
    }

    /// `u(t)`.
    pub fn eval(&self, cache: &FlowCache, t: f64) -> Mat {
        if t == self.one_at {
            return Mat::identity(cache.d(), cache.d());
        }
        self.state(cache, t).0
    }

    /// `D[u](t)`, an `m x d` matrix.
    pub fn eval_d(&self, cache: &FlowCache, t: f64) -> Mat {
        let model = cache.model();
        let (u, w) = self.state(cache, t);
        match self.form {
            BvpForm::Canonical => model.gamma_root(t).transpose() * w,
            BvpForm::SecondOrder => {
                let root_inv = model
                    .gamma_root(t)
                    .try_inverse()
                    .expect("checked invertible");
                root_inv * (w - model.alpha(t) * u)
            }
        }
    }
}

impl MuSolution {
    pub fn eval(&self, cache: &FlowCache, t: f64) -> Mat {
        match &self.right {
            Some(r) if t > self.left.one_at => r.eval(cache, t),
            _ => self.left.eval(cache, t),
        }
    }

    pub fn eval_d(&self, cache: &FlowCache, t: f64) -> Mat {
        match &self.right {
            Some(r) if t >= self.left.one_at => r.eval_d(cache, t),
            _ => self.left.eval_d(cache, t),
        }
    }
}

fn check_form(cache: &FlowCache, form: BvpForm) -> Result<()> {
    if form == BvpForm::SecondOrder {
        let model = cache.model();
        if !model.is_differentiable() {
            return Err(GmsError::NotDifferentiable(
                "the second-order form needs alpha' and sqrt(Gamma)'".into(),
            ));
        }
        if model.m() != model.d() {
            return Err(GmsError::InvalidModel(
                "the second-order form needs an invertible diffusion root".into(),
            ));
        }
    }
    Ok(())
}

/// Solves the Euler-Lagrange equation on `[l, m]` (`u(l) = 0`, `u(m) = I`) and on `[m, r]`
/// (`u(m) = I`, `u(r) = 0`); `r == m` yields only the left half.
pub fn solve_mu_bvp(
    cache: &FlowCache,
    l: f64,
    m: f64,
    r: f64,
    form: BvpForm,
) -> Result<MuSolution> {
    if !(l < m && m <= r) {
        return Err(GmsError::Range(format!(
            "need l < m <= r (got {l}, {m}, {r})"
        )));
    }
    check_form(cache, form)?;
    let left = MuBranch::solve(cache, form, l, m)?;
    let right = if r > m {
        Some(MuBranch::solve(cache, form, r, m)?)
    } else {
        None
    };
    Ok(MuSolution { left, right })
}

/// Element produced by the boundary-value route: `psi = mu T`, `phi = D[mu] T`.
#[derive(Clone, Debug)]
pub struct BvpElement {
    pub index: NodeIndex,
    pub support: Support,
    /// Gram-Schmidt factor (lower triangular, positive diagonal); equals `psi(m)`.
    pub sigma: Mat,
    pub gram: Mat,
    pub mu: MuSolution,
}

impl BvpElement {
    pub fn eval_psi(&self, cache: &FlowCache, t: f64) -> Mat {
        let s = self.support;
        if t <= s.l || t > s.r || (t == s.r && s.r != s.m) {
            return Mat::zeros(cache.d(), cache.d());
        }
        self.mu.eval(cache, t) * &self.sigma
    }

    pub fn eval_phi(&self, cache: &FlowCache, t: f64) -> Mat {
        let s = self.support;
        if t < s.l || t >= s.r && !(s.r == s.m && t == s.r) {
            return Mat::zeros(cache.m(), cache.d());
        }
        self.mu.eval_d(cache, t) * &self.sigma
    }
}

const GRAM_PANELS: usize = 4;

/// Builds an element by solving the boundary-value problem, applying `D`, orthonormalizing the
/// resulting column functions and mapping back through `K` (a right multiplication of `mu`).
pub fn basis_via_bvp(
    cache: &FlowCache,
    tree: &SupportTree,
    idx: NodeIndex,
    form: BvpForm,
) -> Result<BvpElement> {
    let support = tree.support(idx)?;
    let Support { l, m, r } = support;
    let mu = solve_mu_bvp(cache, l, m, r, form)?;
    let gl = GaussLegendre::new(cache.config().quadrature_order);
    let mut nodes = Vec::new();
    for (a, b) in [(l, m), (m, r)] {
        if b <= a {
            continue;
        }
        let h = (b - a) / GRAM_PANELS as f64;
        for p in 0..GRAM_PANELS {
            nodes.extend(gl.mapped(a + h * p as f64, a + h * (p + 1) as f64));
        }
    }
    let (d, mm) = (cache.d(), cache.m());
    let rows = nodes.len() * mm;
    let mut cols = Mat::zeros(rows, d);
    for (q, (s, w)) in nodes.iter().enumerate() {
        let dm = mu.eval_d(cache, *s) * w.sqrt();
        cols.view_mut((q * mm, 0), (mm, d)).copy_from(&dm);
    }
    let gram = cols.transpose() * &cols;
    let sigma = reverse_gram_schmidt(&cols).map_err(|reason| GmsError::Degenerate {
        n: idx.n,
        k: idx.k,
        reason,
    })?;
    Ok(BvpElement {
        index: idx,
        support,
        sigma,
        gram: linalg::symmetrize(&gram),
        mu,
    })
}

/// Modified Gram-Schmidt with one reorthogonalization pass, processing columns from last to
/// first; returns lower-triangular `T` such that `cols T` has orthonormal columns.
fn reverse_gram_schmidt(cols: &Mat) -> std::result::Result<Mat, String> {
    let d = cols.ncols();
    let mut q: Vec<Vector> = Vec::with_capacity(d);
    let mut t = Mat::zeros(d, d);
    for j in (0..d).rev() {
        let mut v: Vector = cols.column(j).into_owned();
        let mut coef = Mat::zeros(d, 1);
        coef[(j, 0)] = 1.0;
        for _pass in 0..2 {
            for (pos, e) in q.iter().enumerate() {
                let i = d - 1 - pos;
                let c = e.dot(&v);
                v -= e * c;
                for row in i..d {
                    coef[(row, 0)] -= c * t[(row, i)];
                }
            }
        }
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(format!("column {j} is linearly dependent"));
        }
        q.push(v / norm);
        for row in j..d {
            t[(row, j)] = coef[(row, 0)] / norm;
        }
    }
    Ok(t)
}

/// Largest deviation between the two construction routes over a grid on the support.
pub fn compare_routes(
    cache: &FlowCache,
    built: &BasisElement,
    bvp: &BvpElement,
    points: usize,
) -> f64 {
    let s = built.support;
    (0..=points)
        .map(|i| {
            let t = s.l + (s.r - s.l) * i as f64 / points as f64;
            linalg::max_abs(&(built.eval_psi(cache, t) - bvp.eval_psi(cache, t)))
        })
        .fold(0.0, f64::max)
}
