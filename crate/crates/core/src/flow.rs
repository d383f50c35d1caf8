//! Flow, `g`, `f` and h-kernel evaluators with closed-form fast paths.

use crate::error::{GmsError, Result};
use crate::linalg::{self, Mat};
use crate::model::{ProcessModel, Specialization};
use crate::quadrature::GaussLegendre;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowConfig {
    /// RK4 sub-steps per unit time.
    pub flow_steps: usize,
    /// Gauss-Legendre nodes per h-kernel integral.
    pub quadrature_order: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            flow_steps: 256,
            quadrature_order: 16,
        }
    }
}

/// Which evaluators answer flow and h-kernel queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalPath {
    ClosedForm,
    Generic,
}

/// Immutable evaluator bundle for one model.
#[derive(Clone, Debug)]
pub struct FlowCache {
    model: Arc<ProcessModel>,
    config: FlowConfig,
    gl: GaussLegendre,
    path: EvalPath,
    /// `g(j / flow_steps)` and its inverse on the uniform RK4 grid (generic path only).
    g_table: Vec<Mat>,
    g_inv_table: Vec<Mat>,
}

impl FlowCache {
    pub fn new(model: ProcessModel) -> Result<Self> {
        Self::with_config(model, FlowConfig::default())
    }

    pub fn with_config(model: ProcessModel, config: FlowConfig) -> Result<Self> {
        let path = match model.specialization() {
            Specialization::Generic => EvalPath::Generic,
            _ => EvalPath::ClosedForm,
        };
        Self::build(Arc::new(model), config, path)
    }

    /// Forces the generic RK4 and quadrature evaluators regardless of the specialization.
    pub fn generic(model: ProcessModel, config: FlowConfig) -> Result<Self> {
        Self::build(Arc::new(model), config, EvalPath::Generic)
    }

    fn build(model: Arc<ProcessModel>, config: FlowConfig, path: EvalPath) -> Result<Self> {
        if config.flow_steps == 0 || config.quadrature_order == 0 {
            return Err(GmsError::Range(
                "flow_steps and quadrature_order must be positive".into(),
            ));
        }
        let mut cache = Self {
            model,
            config,
            gl: GaussLegendre::new(config.quadrature_order),
            path,
            g_table: Vec::new(),
            g_inv_table: Vec::new(),
        };
        if path == EvalPath::Generic {
            let n = config.flow_steps;
            let h = 1.0 / n as f64;
            let mut g = Mat::identity(cache.d(), cache.d());
            cache.g_table.push(g.clone());
            for j in 0..n {
                g = cache.rk4_step(&g, j as f64 * h, h);
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(GmsError::InvalidModel(format!(
                        "flow became non-finite near t = {}",
                        (j + 1) as f64 * h
                    )));
                }
                cache.g_table.push(g.clone());
            }
            cache.g_inv_table = cache
                .g_table
                .iter()
                .enumerate()
                .map(|(j, g)| linalg::inverse(g, &format!("g({})", j as f64 * h)))
                .collect::<Result<_>>()?;
        }
        Ok(cache)
    }

    pub fn model(&self) -> &ProcessModel {
        &self.model
    }

    pub fn config(&self) -> FlowConfig {
        self.config
    }

    pub fn eval_path(&self) -> EvalPath {
        self.path
    }

    pub fn d(&self) -> usize {
        self.model.d()
    }

    pub fn m(&self) -> usize {
        self.model.m()
    }

    pub fn quadrature(&self) -> &GaussLegendre {
        &self.gl
    }

    fn rk4_step(&self, y: &Mat, t: f64, h: f64) -> Mat {
        let a = |s: f64| self.model.alpha(s);
        let k1 = a(t) * y;
        let k2 = a(t + 0.5 * h) * (y + &k1 * (0.5 * h));
        let k3 = a(t + 0.5 * h) * (y + &k2 * (0.5 * h));
        let k4 = a(t + h) * (y + &k3 * h);
        y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    fn rk4(&self, s: f64, t: f64) -> Mat {
        let d = self.d();
        let mut y = Mat::identity(d, d);
        if s == t {
            return y;
        }
        let n = ((t - s).abs() * self.config.flow_steps as f64)
            .ceil()
            .max(1.0) as usize;
        let h = (t - s) / n as f64;
        for i in 0..n {
            y = self.rk4_step(&y, s + i as f64 * h, h);
        }
        y
    }

    /// `F(s, t)`: solution at `t` of `dF/dt = alpha F` with `F(s, s) = I`.
    pub fn flow(&self, s: f64, t: f64) -> Mat {
        let d = self.d();
        if s == t {
            return Mat::identity(d, d);
        }
        match (self.path, self.model.specialization()) {
            (EvalPath::ClosedForm, Specialization::Wiener1d) => Mat::identity(1, 1),
            (EvalPath::ClosedForm, Specialization::OuConstant1d { alpha, .. }) => {
                Mat::from_element(1, 1, (alpha * (t - s)).exp())
            }
            (EvalPath::ClosedForm, Specialization::Rotation { alpha, .. }) => {
                (alpha * (t - s)).exp()
            }
            (EvalPath::ClosedForm, Specialization::IntegratedWiener { .. }) => iw_flow(d, t - s),
            _ => self.rk4(s, t),
        }
    }

    /// `g(t) = F(0, t)`.
    pub fn g(&self, t: f64) -> Mat {
        match self.path {
            EvalPath::ClosedForm => self.flow(0.0, t),
            EvalPath::Generic => {
                let (j, rem) = self.table_slot(t);
                if rem == 0.0 {
                    self.g_table[j].clone()
                } else {
                    let t0 = j as f64 / self.config.flow_steps as f64;
                    self.rk4_step(&Mat::identity(self.d(), self.d()), t0, rem) * &self.g_table[j]
                }
            }
        }
    }

    /// `g(t)^{-1} = F(t, 0)`.
    pub fn g_inv(&self, t: f64) -> Mat {
        match self.path {
            EvalPath::ClosedForm => self.flow(t, 0.0),
            EvalPath::Generic => {
                let (j, rem) = self.table_slot(t);
                if rem == 0.0 {
                    self.g_inv_table[j].clone()
                } else {
                    let t0 = j as f64 / self.config.flow_steps as f64;
                    let step = self.rk4_step(&Mat::identity(self.d(), self.d()), t0, rem);
                    let step_inv = step.try_inverse().expect("short flow step is invertible");
                    &self.g_inv_table[j] * step_inv
                }
            }
        }
    }

    fn table_slot(&self, t: f64) -> (usize, f64) {
        let n = self.config.flow_steps;
        let x = t.clamp(0.0, 1.0) * n as f64;
        let j = (x.floor() as usize).min(n);
        let rem = (t - j as f64 / n as f64).max(0.0);
        if j == n {
            (n, 0.0)
        } else {
            (j, rem)
        }
    }

    /// `f(t) = g(t)^{-1} sqrt(Gamma)(t)`, a `d x m` matrix.
    pub fn f(&self, t: f64) -> Mat {
        self.g_inv(t) * self.model.gamma_root(t)
    }

    /// `h_u(s, t) = int_s^t F(w, u) Gamma(w) F(w, u)^T dw`, validated argument order.
    pub fn h_kernel(&self, u: f64, s: f64, t: f64) -> Result<Mat> {
        if s > t {
            return Err(GmsError::Range(format!(
                "h-kernel needs s <= t (got s = {s}, t = {t})"
            )));
        }
        Ok(self.h(u, s, t))
    }

    /// Unchecked h-kernel; `s > t` yields the signed integral.
    pub fn h(&self, u: f64, s: f64, t: f64) -> Mat {
        let d = self.d();
        if s == t {
            return Mat::zeros(d, d);
        }
        match (self.path, self.model.specialization()) {
            (EvalPath::ClosedForm, Specialization::Wiener1d) => Mat::from_element(1, 1, t - s),
            (EvalPath::ClosedForm, Specialization::OuConstant1d { alpha, gamma }) => {
                let v = if *alpha == 0.0 {
                    gamma * (t - s)
                } else {
                    -gamma * (2.0 * alpha * (u - s)).exp() * (-2.0 * alpha * (t - s)).exp_m1()
                        / (2.0 * alpha)
                };
                Mat::from_element(1, 1, v)
            }
            (EvalPath::ClosedForm, Specialization::Rotation { sigma2, .. }) => {
                Mat::identity(d, d) * (sigma2 * (t - s))
            }
            (EvalPath::ClosedForm, Specialization::IntegratedWiener { .. }) => iw_h(d, u, s, t),
            _ => self.h_quadrature(u, s, t),
        }
    }

    fn h_quadrature(&self, u: f64, s: f64, t: f64) -> Mat {
        let d = self.d();
        let gu = self.g(u);
        let mut acc = Mat::zeros(d, d);
        for (w, wt) in self.gl.mapped(s, t) {
            let fw = &gu * self.f(w);
            acc += (&fw * fw.transpose()) * wt;
        }
        linalg::symmetrize(&acc)
    }

    /// `C(t, s) = g(t) h_0(0, t ^ s) g(s)^T`.
    pub fn covariance(&self, t: f64, s: f64) -> Mat {
        let lo = t.min(s);
        self.g(t) * self.h(0.0, 0.0, lo) * self.g(s).transpose()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Upper-triangular Taylor flow of the integrated Wiener drift.
fn iw_flow(d: usize, tau: f64) -> Mat {
    Mat::from_fn(d, d, |i, j| {
        if j >= i {
            tau.powi((j - i) as i32) / factorial(j - i)
        } else {
            0.0
        }
    })
}

fn iw_h(d: usize, u: f64, s: f64, t: f64) -> Mat {
    Mat::from_fn(d, d, |i, j| {
        let p = 2 * d - 1 - i - j;
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * ((t - u).powi(p as i32) - (s - u).powi(p as i32))
            / (p as f64 * factorial(d - 1 - i) * factorial(d - 1 - j))
    })
}
