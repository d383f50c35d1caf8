//! Bridge moments, Schauder elements `psi`, orthonormal elements `phi` and dual functionals.

use crate::error::{GmsError, Result};
use crate::flow::FlowCache;
use crate::linalg::{self, Mat};
use crate::partition::{NodeIndex, Support, SupportTree};
use nalgebra::DVector;
use rayon::prelude::*;
use std::sync::Arc;

pub type Vector = DVector<f64>;

/// Conditional law of `X_t` given `X_{t_x}` and `X_{t_z}`.
#[derive(Clone, Debug)]
pub struct BridgeMoments {
    pub sigma: Mat,
    pub mu_l: Mat,
    pub mu_r: Mat,
}

pub fn bridge_moments(cache: &FlowCache, t: f64, tx: f64, tz: f64) -> Result<BridgeMoments> {
    if !(tx < tz) || t < tx || t > tz {
        return Err(GmsError::Range(format!(
            "bridge needs t_x < t_z and t in [t_x, t_z] (t={t}, t_x={tx}, t_z={tz})"
        )));
    }
    let ctx = format!("bridge kernel on [{tx}, {tz}]");
    let h_t_full = cache.h(t, tx, tz);
    let sigma = cache.h(t, tx, t) * linalg::spd_solve(&h_t_full, &cache.h(t, t, tz), &ctx)?;
    let mu_l = cache.flow(tx, t)
        * linalg::spd_right_solve(&cache.h(tx, t, tz), &cache.h(tx, tx, tz), &ctx)?;
    let mu_r = cache.flow(tz, t)
        * linalg::spd_right_solve(&cache.h(tz, tx, t), &cache.h(tz, tx, tz), &ctx)?;
    Ok(BridgeMoments {
        sigma: linalg::symmetrize(&sigma),
        mu_l,
        mu_r,
    })
}

/// One element of the Schauder system together with its dual data.
#[derive(Clone, Debug)]
pub struct BasisElement {
    pub index: NodeIndex,
    pub support: Support,
    /// `L = g(m)^T h_m(l,m)^{-1} sigma`.
    pub l_mat: Mat,
    /// `R = g(m)^T h_m(m,r)^{-1} sigma`; zero for the root.
    pub r_mat: Mat,
    /// `M = g(m)^T sigma^{-T}`.
    pub m_mat: Mat,
    /// Conditional covariance `Sigma_{n,k}` at the split point.
    pub sigma_cov: Mat,
    /// Lower Cholesky factor of `sigma_cov`.
    pub sigma: Mat,
    lm: Mat,
    rm: Mat,
    sigma_inv: Mat,
    dual_l: Mat,
    dual_r: Mat,
    mid_l: Mat,
    mid_r: Mat,
}

pub fn build_element(
    cache: &FlowCache,
    tree: &SupportTree,
    idx: NodeIndex,
) -> Result<BasisElement> {
    let support = tree.support(idx)?;
    let Support { l, m, r } = support;
    let d = cache.d();
    let degenerate = |reason: String| GmsError::Degenerate {
        n: idx.n,
        k: idx.k,
        reason,
    };
    let h_left = cache.h(m, l, m);
    let ctx = format!("h-kernel of node {idx}");
    let (sigma_cov, right) = if idx.is_root() {
        (linalg::symmetrize(&h_left), None)
    } else {
        let h_right = cache.h(m, m, r);
        let h_full = cache.h(m, l, r);
        let s = &h_left
            * linalg::spd_solve(&h_full, &h_right, &ctx).map_err(|e| degenerate(e.to_string()))?;
        (linalg::symmetrize(&s), Some(h_right))
    };
    let sigma = linalg::cholesky(&sigma_cov, &format!("Sigma of node {idx}"))
        .map_err(|e| degenerate(e.to_string()))?;
    let sigma_inv =
        linalg::lower_solve(&sigma, &Mat::identity(d, d)).map_err(|e| degenerate(e.to_string()))?;
    let lm = linalg::spd_solve(&h_left, &sigma, &ctx).map_err(|e| degenerate(e.to_string()))?;
    let rm = match &right {
        Some(h_right) => {
            linalg::spd_solve(h_right, &sigma, &ctx).map_err(|e| degenerate(e.to_string()))?
        }
        None => Mat::zeros(d, d),
    };
    let gm_t = cache.g(m).transpose();
    let (mid_l, mid_r) = if right.is_some() {
        let b = bridge_moments(cache, m, l, r).map_err(|e| degenerate(e.to_string()))?;
        (b.mu_l, b.mu_r)
    } else {
        (Mat::zeros(d, d), Mat::zeros(d, d))
    };
    let dual_l = lm.transpose() * cache.flow(l, m);
    let dual_r = if right.is_some() {
        rm.transpose() * cache.flow(r, m)
    } else {
        Mat::zeros(d, d)
    };
    Ok(BasisElement {
        index: idx,
        support,
        l_mat: &gm_t * &lm,
        r_mat: &gm_t * &rm,
        m_mat: &gm_t * sigma_inv.transpose(),
        sigma_cov,
        sigma,
        lm,
        rm,
        sigma_inv,
        dual_l,
        dual_r,
        mid_l,
        mid_r,
    })
}

impl BasisElement {
    pub fn is_root(&self) -> bool {
        self.index.is_root()
    }

    /// `psi_{n,k}(t)`, a `d x d` matrix; zero outside the support.
    pub fn eval_psi(&self, cache: &FlowCache, t: f64) -> Mat {
        let Support { l, m, r } = self.support;
        let d = cache.d();
        if t < l || t > r || t == l || (t == r && !self.is_root()) {
            return Mat::zeros(d, d);
        }
        if t == m {
            return self.sigma.clone();
        }
        if t < m {
            cache.flow(m, t) * cache.h(m, l, t) * &self.lm
        } else {
            cache.flow(m, t) * cache.h(m, t, r) * &self.rm
        }
    }

    /// `phi_{n,k}(t)`, an `m x d` matrix; left-continuous branches on `[l, m)` and `[m, r)`.
    pub fn eval_phi(&self, cache: &FlowCache, t: f64) -> Mat {
        let Support { l, m, r } = self.support;
        let (dd, mm) = (cache.d(), cache.m());
        let last = r == 1.0 && t == 1.0;
        if t < l || (t >= r && !last) {
            return Mat::zeros(mm, dd);
        }
        let root_t = cache.model().gamma_root(t).transpose() * cache.flow(t, m).transpose();
        if self.is_root() || t < m {
            root_t * &self.lm
        } else {
            -(root_t * &self.rm)
        }
    }

    /// `psi'(t) = alpha psi + sqrt(Gamma) phi` (branch chosen as in `eval_phi`).
    pub fn eval_psi_dot(&self, cache: &FlowCache, t: f64) -> Mat {
        let model = cache.model();
        model.alpha(t) * self.eval_psi(cache, t) + model.gamma_root(t) * self.eval_phi(cache, t)
    }

    /// Bridge mean weights at the split point: `E[X_m | X_l, X_r] = W_l X_l + W_r X_r`.
    pub fn midpoint_weights(&self) -> (&Mat, &Mat) {
        (&self.mid_l, &self.mid_r)
    }

    pub fn dual(&self) -> DualFunctional {
        let Support { l, m, r } = self.support;
        let points = if self.is_root() {
            vec![(m, self.sigma_inv.clone())]
        } else {
            vec![
                (l, -&self.dual_l),
                (m, self.sigma_inv.clone()),
                (r, -&self.dual_r),
            ]
        };
        DualFunctional {
            index: self.index,
            points,
        }
    }

    /// Coefficient of a path from its values at `l`, `m`, `r` (root uses `x_m` only).
    pub fn apply_dual(&self, x_l: &Vector, x_m: &Vector, x_r: &Vector) -> Vector {
        if self.is_root() {
            &self.sigma_inv * x_m
        } else {
            &self.sigma_inv * x_m - &self.dual_l * x_l - &self.dual_r * x_r
        }
    }
}

/// Three-point functional `x -> sum_p W_p x(t_p)`.
#[derive(Clone, Debug)]
pub struct DualFunctional {
    pub index: NodeIndex,
    pub points: Vec<(f64, Mat)>,
}

impl DualFunctional {
    pub fn apply<F: Fn(f64) -> Mat>(&self, x: F) -> Mat {
        let mut it = self.points.iter();
        let (t0, w0) = it.next().expect("dual functional has at least one point");
        let mut acc = w0 * x(*t0);
        for (t, w) in it {
            acc += w * x(*t);
        }
        acc
    }
}

/// All elements with level `<= max_level`, in recursive dyadic order.
#[derive(Clone, Debug)]
pub struct Basis {
    cache: Arc<FlowCache>,
    tree: Arc<SupportTree>,
    max_level: u32,
    elements: Vec<BasisElement>,
}

impl Basis {
    pub fn build(cache: Arc<FlowCache>, tree: Arc<SupportTree>, max_level: u32) -> Result<Self> {
        if max_level > tree.depth() {
            return Err(GmsError::Range(format!(
                "basis level {max_level} exceeds tree depth {}",
                tree.depth()
            )));
        }
        let count = 1usize << max_level;
        let elements = (0..count)
            .into_par_iter()
            .map(|i| build_element(&cache, &tree, NodeIndex::from_flat(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cache,
            tree,
            max_level,
            elements,
        })
    }

    /// Dyadic basis able to carry paths of depth `depth` (levels `0..depth-1`).
    pub fn dyadic(cache: Arc<FlowCache>, depth: u32) -> Result<Self> {
        if depth == 0 {
            return Err(GmsError::Range("path depth must be at least 1".into()));
        }
        let tree = Arc::new(SupportTree::dyadic((depth - 1).max(1))?);
        Self::build(cache, tree, depth - 1)
    }

    pub fn cache(&self) -> &FlowCache {
        &self.cache
    }

    pub fn cache_arc(&self) -> Arc<FlowCache> {
        self.cache.clone()
    }

    pub fn tree(&self) -> &SupportTree {
        &self.tree
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Largest path depth this basis supports.
    pub fn max_depth(&self) -> u32 {
        self.max_level + 1
    }

    pub fn d(&self) -> usize {
        self.cache.d()
    }

    pub fn element(&self, idx: NodeIndex) -> Result<&BasisElement> {
        self.elements
            .get(idx.flat())
            .filter(|e| e.index == idx)
            .ok_or_else(|| GmsError::Range(format!("node {idx} is not in the basis")))
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn eval_psi(&self, idx: NodeIndex, t: f64) -> Result<Mat> {
        Ok(self.element(idx)?.eval_psi(&self.cache, t))
    }

    pub fn eval_phi(&self, idx: NodeIndex, t: f64) -> Result<Mat> {
        Ok(self.element(idx)?.eval_phi(&self.cache, t))
    }
}
