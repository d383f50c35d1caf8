//! Finite-dimensional change of measure between two scalar Gauss-Markov processes that share
//! their diffusion coefficient.

use crate::basis::Basis;
use crate::error::{GmsError, Result};
use crate::flow::{FlowCache, FlowConfig};
use crate::interp::panels;
use crate::linalg::{self, Mat};
use crate::model::{MatFn, ProcessModel};
use crate::partition::{element_count, NodeIndex};
use crate::quadrature::GaussLegendre;
use crate::transforms::{self, CoefficientField};
use std::sync::Arc;

const PROBES: usize = 513;

/// Two scalar models `dX = a(t) X dt + sqrt(Gamma) dW` and `dX = b(t) X dt + sqrt(Gamma) dW`.
#[derive(Clone, Debug)]
pub struct ModelPair {
    alpha: Arc<FlowCache>,
    beta: Arc<FlowCache>,
    reduction: Option<Reduction>,
}

/// Record of the rescaling `Z = gamma Y` applied to the second model.
#[derive(Clone)]
pub struct Reduction {
    /// `gamma(t) = sqrt(Gamma_X(t)) / sqrt(Gamma_Y(t))`.
    pub gamma: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Reduction")
    }
}

fn scalar(m: &Mat) -> f64 {
    m[(0, 0)]
}

fn check_scalar(model: &ProcessModel, name: &str) -> Result<()> {
    if model.d() != 1 || model.m() != 1 {
        return Err(GmsError::Pairing(format!(
            "{name} model must be one-dimensional"
        )));
    }
    Ok(())
}

impl ModelPair {
    pub fn new(alpha: ProcessModel, beta: ProcessModel) -> Result<Self> {
        Self::with_config(alpha, beta, FlowConfig::default())
    }

    pub fn with_config(
        alpha: ProcessModel,
        beta: ProcessModel,
        config: FlowConfig,
    ) -> Result<Self> {
        check_scalar(&alpha, "alpha")?;
        check_scalar(&beta, "beta")?;
        for i in 0..PROBES {
            let t = i as f64 / (PROBES - 1) as f64;
            let (a, b) = (scalar(&alpha.gamma_root(t)), scalar(&beta.gamma_root(t)));
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(GmsError::Pairing(format!(
                    "diffusion roots differ at t = {t} ({a} vs {b}); use ModelPair::reduced"
                )));
            }
        }
        Ok(Self {
            alpha: Arc::new(FlowCache::with_config(alpha, config)?),
            beta: Arc::new(FlowCache::with_config(beta, config)?),
            reduction: None,
        })
    }

    /// Pairs `x` with `Z = gamma Y`, which has drift `gamma'/gamma + alpha_Y` and the diffusion
    /// root of `x`. Requires non-vanishing diffusion roots with a differentiable ratio.
    pub fn reduced(x: ProcessModel, y: ProcessModel) -> Result<Self> {
        check_scalar(&x, "first")?;
        check_scalar(&y, "second")?;
        for i in 0..PROBES {
            let t = i as f64 / (PROBES - 1) as f64;
            if scalar(&x.gamma_root(t)) == 0.0 || scalar(&y.gamma_root(t)) == 0.0 {
                return Err(GmsError::Pairing(format!("diffusion vanishes at t = {t}")));
            }
        }
        let (xg, yg) = (x.clone(), y.clone());
        let gamma: Arc<dyn Fn(f64) -> f64 + Send + Sync> =
            Arc::new(move |t| scalar(&xg.gamma_root(t)) / scalar(&yg.gamma_root(t)));
        let gamma_dot: Arc<dyn Fn(f64) -> f64 + Send + Sync> =
            match (x.gamma_root_dot(0.0), y.gamma_root_dot(0.0)) {
                (Some(_), Some(_)) => {
                    let (xd, yd) = (x.clone(), y.clone());
                    Arc::new(move |t| {
                        let (a, b) = (scalar(&xd.gamma_root(t)), scalar(&yd.gamma_root(t)));
                        let (da, db) = (
                            scalar(&xd.gamma_root_dot(t).unwrap()),
                            scalar(&yd.gamma_root_dot(t).unwrap()),
                        );
                        (da * b - a * db) / (b * b)
                    })
                }
                _ => {
                    let g = gamma.clone();
                    Arc::new(move |t| {
                        let h = 1e-6;
                        let (a, b) = ((t - h).max(0.0), (t + h).min(1.0));
                        (g(b) - g(a)) / (b - a)
                    })
                }
            };
        let (g, gd, yy, xx) = (gamma.clone(), gamma_dot, y.clone(), x.clone());
        let alpha_z: MatFn =
            Arc::new(move |t| Mat::from_element(1, 1, gd(t) / g(t) + scalar(&yy.alpha(t))));
        let root_z: MatFn = Arc::new(move |t| xx.gamma_root(t));
        let z = ProcessModel::generic(1, 1, alpha_z, root_z)?;
        let mut pair = Self::new(x, z)?;
        pair.reduction = Some(Reduction { gamma });
        Ok(pair)
    }

    pub fn alpha(&self) -> &FlowCache {
        &self.alpha
    }

    pub fn beta(&self) -> &FlowCache {
        &self.beta
    }

    pub fn reduction(&self) -> Option<&Reduction> {
        self.reduction.as_ref()
    }

    pub fn alpha_basis(&self, depth: u32) -> Result<Basis> {
        Basis::dyadic(self.alpha.clone(), depth)
    }

    pub fn beta_basis(&self, depth: u32) -> Result<Basis> {
        Basis::dyadic(self.beta.clone(), depth)
    }

    fn drift_gap(&self, t: f64) -> f64 {
        scalar(&self.alpha.model().alpha(t)) - scalar(&self.beta.model().alpha(t))
    }
}

/// `G_N = Delta_beta Psi_alpha`, its inverse `H_N = Delta_alpha Psi_beta`, and spectral data.
#[derive(Clone, Debug)]
pub struct LiftMatrices {
    pub depth: u32,
    pub g: Mat,
    pub h: Mat,
    /// Diagonal of `G_N` in recursive dyadic order.
    pub nu: Vec<f64>,
    /// `nu` from the closed form `(g_alpha(m)/g_beta(m)) (M_beta/M_alpha)`.
    pub nu_formula: Vec<f64>,
    pub log_det: f64,
    pub det: f64,
    pub spectral_norm: f64,
}

pub fn lift_matrix(pair: &ModelPair, depth: u32) -> Result<LiftMatrices> {
    let ba = pair.alpha_basis(depth)?;
    let bb = pair.beta_basis(depth)?;
    let g = transforms::assemble_delta_matrix(&bb, depth)?
        * transforms::assemble_psi_matrix(&ba, depth)?;
    let h = transforms::assemble_delta_matrix(&ba, depth)?
        * transforms::assemble_psi_matrix(&bb, depth)?;
    let n = element_count(depth);
    let nu: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    let nu_formula = (0..n)
        .map(|i| {
            let (ea, eb) = (&ba.elements()[i], &bb.elements()[i]);
            let m = ea.support.m;
            scalar(&pair.alpha.g(m)) / scalar(&pair.beta.g(m)) * scalar(&eb.m_mat)
                / scalar(&ea.m_mat)
        })
        .collect();
    let log_det = nu.iter().map(|x| x.abs().ln()).sum::<f64>();
    let sign = nu.iter().filter(|x| **x < 0.0).count() % 2;
    let det = if sign == 0 {
        log_det.exp()
    } else {
        -log_det.exp()
    };
    let spectral_norm = g.clone().svd(false, false).singular_values.max();
    Ok(LiftMatrices {
        depth,
        g,
        h,
        nu,
        nu_formula,
        log_det,
        det,
        spectral_norm,
    })
}

fn integrate(f: impl Fn(f64) -> f64) -> f64 {
    GaussLegendre::new(16).integrate_composite(0.0, 1.0, 64, f)
}

/// `exp(1/2 int_0^1 (a - b))`.
pub fn determinant_limit(pair: &ModelPair) -> f64 {
    (0.5 * integrate(|t| pair.drift_gap(t))).exp()
}

/// `|J_N - J|` for `N` in `depths`.
pub fn determinant_convergence(
    pair: &ModelPair,
    depths: impl IntoIterator<Item = u32>,
) -> Result<Vec<(u32, f64)>> {
    let limit = determinant_limit(pair);
    depths
        .into_iter()
        .map(|n| Ok((n, (lift_matrix(pair, n)?.det - limit).abs())))
        .collect()
}

/// Norm bound `sup g_a / inf g_b * sup f_a^2 / inf f_b^2` over a fine grid.
pub fn norm_bound(pair: &ModelPair) -> f64 {
    let grid = (0..PROBES).map(|i| i as f64 / (PROBES - 1) as f64);
    let (mut sga, mut igb, mut sfa, mut ifb) = (0.0f64, f64::INFINITY, 0.0f64, f64::INFINITY);
    for t in grid {
        sga = sga.max(scalar(&pair.alpha.g(t)).abs());
        igb = igb.min(scalar(&pair.beta.g(t)).abs());
        sfa = sfa.max(scalar(&pair.alpha.f(t)).powi(2));
        ifb = ifb.min(scalar(&pair.beta.f(t)).powi(2));
    }
    sga / igb * sfa / ifb
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RnWeight {
    pub log_weight: f64,
    pub weight: f64,
}

/// `J_N exp(-1/2 xi^T (S_N - I) xi)` for the coefficients `xi` of an alpha-path.
pub fn rn_derivative(lift: &LiftMatrices, xi: &CoefficientField) -> Result<RnWeight> {
    if xi.depth() != lift.depth || xi.d() != 1 {
        return Err(GmsError::Dimension(format!(
            "expected scalar coefficients of depth {}, got depth {}",
            lift.depth,
            xi.depth()
        )));
    }
    let v = xi.to_vector();
    let gv = &lift.g * &v;
    let log_weight = lift.log_det - 0.5 * (gv.norm_squared() - v.norm_squared());
    Ok(RnWeight {
        log_weight,
        weight: log_weight.exp(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceDefect {
    pub finite_trace: f64,
    pub limit_trace: f64,
    pub residual: f64,
}

/// `tr(S_N - I)` against `int (a - b) + int (h_a / f_a^2) (a - b)^2`.
pub fn trace_defect(pair: &ModelPair, depth: u32) -> Result<TraceDefect> {
    let lift = lift_matrix(pair, depth)?;
    let n = lift.g.ncols();
    let finite_trace = lift.g.norm_squared() - n as f64;
    let limit_trace = limit_trace(pair);
    let residual = if limit_trace != 0.0 {
        (finite_trace - limit_trace).abs() / limit_trace.abs()
    } else {
        (finite_trace - limit_trace).abs()
    };
    Ok(TraceDefect {
        finite_trace,
        limit_trace,
        residual,
    })
}

pub fn limit_trace(pair: &ModelPair) -> f64 {
    let a = &pair.alpha;
    integrate(|t| {
        let gap = pair.drift_gap(t);
        gap + scalar(&a.h(0.0, 0.0, t)) / scalar(&a.f(t)).powi(2) * gap * gap
    })
}

/// `int (phi_a + (a-b)/sqrt(Gamma) psi_a)(phi_b + (a-b)/sqrt(Gamma) psi_b)` over alpha-basis
/// elements `p` and `q`.
pub fn s_kernel_entry(pair: &ModelPair, basis: &Basis, p: NodeIndex, q: NodeIndex) -> Result<f64> {
    let (ep, eq) = (basis.element(p)?, basis.element(q)?);
    let cache = &pair.alpha;
    let integrand = |e: &crate::basis::BasisElement, t: f64| {
        let root = scalar(&cache.model().gamma_root(t));
        scalar(&e.eval_phi(cache, t)) + pair.drift_gap(t) / root * scalar(&e.eval_psi(cache, t))
    };
    let mut breaks = Vec::new();
    for e in [ep, eq] {
        breaks.extend([e.support.l, e.support.m, e.support.r]);
    }
    let gl = cache.quadrature();
    let mut total = 0.0;
    for (a, b) in panels(&breaks, 1.0 / 32.0) {
        total += gl.integrate(a, b, |t| integrand(ep, t) * integrand(eq, t));
    }
    Ok(total)
}

/// Columns of `G` for the elements of level `< small` computed at resolution `big`, and the
/// resulting block of `S = G^T G`.
pub fn s_block_from_lift(pair: &ModelPair, small: u32, big: u32) -> Result<Mat> {
    let ba = pair.alpha_basis(big)?;
    let bb = pair.beta_basis(big)?;
    let n = element_count(small);
    let mut cols = Mat::zeros(element_count(big), n);
    for j in 0..n {
        let e = &ba.elements()[j];
        let xi = transforms::coefficients(
            &bb,
            |t| e.eval_psi(pair.alpha(), t).column(0).into_owned(),
            big,
        )?;
        cols.set_column(j, &xi.to_vector());
    }
    Ok(cols.transpose() * cols)
}

/// Realizes the `beta`-coefficients of an alpha-path: `G xi`.
pub fn lift_coefficients(lift: &LiftMatrices, xi: &CoefficientField) -> Result<CoefficientField> {
    CoefficientField::from_vector(1, lift.depth, &(&lift.g * xi.to_vector()))
}

pub fn max_identity_defect(lift: &LiftMatrices) -> f64 {
    let n = lift.g.nrows();
    linalg::max_abs(&(&lift.g * &lift.h - Mat::identity(n, n)))
}
