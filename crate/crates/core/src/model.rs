//! Gauss-Markov process definitions `dX = alpha(t) X dt + sqrt(Gamma)(t) dW`, `X_0 = 0`.

use crate::error::{GmsError, Result};
use crate::linalg::Mat;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

pub type MatFn = Arc<dyn Fn(f64) -> Mat + Send + Sync>;

/// Closed-form fast paths.
#[derive(Clone, Debug, PartialEq)]
pub enum Specialization {
    Generic,
    Wiener1d,
    OuConstant1d { alpha: f64, gamma: f64 },
    Rotation { alpha: Mat, sigma2: f64 },
    IntegratedWiener { order: usize },
}

#[derive(Clone)]
pub struct ProcessModel {
    d: usize,
    m: usize,
    alpha: MatFn,
    gamma_root: MatFn,
    alpha_dot: Option<MatFn>,
    gamma_root_dot: Option<MatFn>,
    specialization: Specialization,
}

impl std::fmt::Debug for ProcessModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProcessModel")
            .field("d", &self.d)
            .field("m", &self.m)
            .field("specialization", &self.specialization)
            .finish()
    }
}

const PROBES: usize = 257;

impl ProcessModel {
    /// Generic model from coefficient functions; validated on a probe grid.
    pub fn generic(d: usize, m: usize, alpha: MatFn, gamma_root: MatFn) -> Result<Self> {
        let model = Self {
            d,
            m,
            alpha,
            gamma_root,
            alpha_dot: None,
            gamma_root_dot: None,
            specialization: Specialization::Generic,
        };
        model.validate()?;
        Ok(model)
    }

    /// Attaches time derivatives of alpha and sqrt(Gamma).
    pub fn with_derivatives(mut self, alpha_dot: MatFn, gamma_root_dot: MatFn) -> Self {
        self.alpha_dot = Some(alpha_dot);
        self.gamma_root_dot = Some(gamma_root_dot);
        self
    }

    pub fn wiener_1d() -> Self {
        Self {
            d: 1,
            m: 1,
            alpha: Arc::new(|_| Mat::zeros(1, 1)),
            gamma_root: Arc::new(|_| Mat::from_element(1, 1, 1.0)),
            alpha_dot: Some(Arc::new(|_| Mat::zeros(1, 1))),
            gamma_root_dot: Some(Arc::new(|_| Mat::zeros(1, 1))),
            specialization: Specialization::Wiener1d,
        }
    }

    /// Scalar Ornstein-Uhlenbeck process with constant drift `alpha` and variance rate `gamma`.
    pub fn ou(alpha: f64, gamma: f64) -> Result<Self> {
        if !alpha.is_finite() || !(gamma > 0.0) || !gamma.is_finite() {
            return Err(GmsError::InvalidModel(format!(
                "OU parameters must be finite with gamma > 0 (alpha={alpha}, gamma={gamma})"
            )));
        }
        let root = gamma.sqrt();
        Ok(Self {
            d: 1,
            m: 1,
            alpha: Arc::new(move |_| Mat::from_element(1, 1, alpha)),
            gamma_root: Arc::new(move |_| Mat::from_element(1, 1, root)),
            alpha_dot: Some(Arc::new(|_| Mat::zeros(1, 1))),
            gamma_root_dot: Some(Arc::new(|_| Mat::zeros(1, 1))),
            specialization: Specialization::OuConstant1d { alpha, gamma },
        })
    }

    /// Constant antisymmetric drift with isotropic noise `sigma2 * I`.
    pub fn rotation(alpha: Mat, sigma2: f64) -> Result<Self> {
        let d = alpha.nrows();
        if d == 0 || alpha.ncols() != d {
            return Err(GmsError::InvalidModel(
                "rotation drift must be square".into(),
            ));
        }
        if crate::linalg::max_abs(&(&alpha + alpha.transpose())) > 1e-14 {
            return Err(GmsError::InvalidModel(
                "rotation drift must be antisymmetric".into(),
            ));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(GmsError::InvalidModel(
                "rotation noise variance must be positive".into(),
            ));
        }
        let a = alpha.clone();
        let s = sigma2.sqrt();
        Ok(Self {
            d,
            m: d,
            alpha: Arc::new(move |_| a.clone()),
            gamma_root: Arc::new(move |_| Mat::identity(d, d) * s),
            alpha_dot: Some(Arc::new(move |_| Mat::zeros(d, d))),
            gamma_root_dot: Some(Arc::new(move |_| Mat::zeros(d, d))),
            specialization: Specialization::Rotation { alpha, sigma2 },
        })
    }

    /// `d`-dimensional integrated Wiener process (order `d - 1`): the last coordinate is driven
    /// by a scalar Brownian motion and each coordinate is the integral of the next.
    pub fn integrated_wiener(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(GmsError::InvalidModel(
                "integrated Wiener process needs d >= 2".into(),
            ));
        }
        Ok(Self {
            d,
            m: 1,
            alpha: Arc::new(move |_| {
                let mut a = Mat::zeros(d, d);
                for i in 0..d - 1 {
                    a[(i, i + 1)] = 1.0;
                }
                a
            }),
            gamma_root: Arc::new(move |_| {
                let mut g = Mat::zeros(d, 1);
                g[(d - 1, 0)] = 1.0;
                g
            }),
            alpha_dot: Some(Arc::new(move |_| Mat::zeros(d, d))),
            gamma_root_dot: Some(Arc::new(move |_| Mat::zeros(d, 1))),
            specialization: Specialization::IntegratedWiener { order: d - 1 },
        })
    }

    /// Piecewise-linear interpolation of tabulated coefficient samples.
    pub fn tabulated(
        d: usize,
        m: usize,
        times: Vec<f64>,
        alpha: Vec<Mat>,
        gamma_root: Vec<Mat>,
    ) -> Result<Self> {
        if times.len() < 2 || times.len() != alpha.len() || times.len() != gamma_root.len() {
            return Err(GmsError::InvalidModel(
                "tabulated model needs matching time, alpha and gamma_root samples (at least 2)"
                    .into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GmsError::InvalidModel(
                "tabulated times must increase strictly".into(),
            ));
        }
        if times[0] > 0.0 || *times.last().unwrap() < 1.0 {
            return Err(GmsError::InvalidModel(
                "tabulated times must cover [0, 1]".into(),
            ));
        }
        let t = Arc::new(times);
        let (ta, tg) = (t.clone(), t);
        let alpha = Arc::new(alpha);
        let gamma_root = Arc::new(gamma_root);
        Self::generic(
            d,
            m,
            Arc::new(move |s| interpolate(&ta, &alpha, s)),
            Arc::new(move |s| interpolate(&tg, &gamma_root, s)),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 {
            return Err(GmsError::InvalidModel("dimensions must be positive".into()));
        }
        for i in 0..PROBES {
            let t = i as f64 / (PROBES - 1) as f64;
            let a = (self.alpha)(t);
            let g = (self.gamma_root)(t);
            if a.shape() != (self.d, self.d) {
                return Err(GmsError::Dimension(format!(
                    "alpha({t}) has shape {:?}, expected ({}, {})",
                    a.shape(),
                    self.d,
                    self.d
                )));
            }
            if g.shape() != (self.d, self.m) {
                return Err(GmsError::Dimension(format!(
                    "gamma_root({t}) has shape {:?}, expected ({}, {})",
                    g.shape(),
                    self.d,
                    self.m
                )));
            }
            if a.iter().chain(g.iter()).any(|x| !x.is_finite()) {
                return Err(GmsError::InvalidModel(format!(
                    "non-finite coefficient at t = {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn specialization(&self) -> &Specialization {
        &self.specialization
    }

    pub fn alpha(&self, t: f64) -> Mat {
        (self.alpha)(t)
    }

    pub fn gamma_root(&self, t: f64) -> Mat {
        (self.gamma_root)(t)
    }

    /// `Gamma(t) = sqrt(Gamma) sqrt(Gamma)^T`.
    pub fn gamma(&self, t: f64) -> Mat {
        let r = self.gamma_root(t);
        &r * r.transpose()
    }

    pub fn alpha_dot(&self, t: f64) -> Option<Mat> {
        self.alpha_dot.as_ref().map(|f| f(t))
    }

    pub fn gamma_root_dot(&self, t: f64) -> Option<Mat> {
        self.gamma_root_dot.as_ref().map(|f| f(t))
    }

    pub fn is_differentiable(&self) -> bool {
        self.alpha_dot.is_some() && self.gamma_root_dot.is_some()
    }

    /// Same coefficients with the specialization tag dropped.
    pub fn as_generic(&self) -> Self {
        let mut m = self.clone();
        m.specialization = Specialization::Generic;
        m
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.into_model()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(&s)
    }
}

fn interpolate(times: &[f64], vals: &[Mat], t: f64) -> Mat {
    let j = match times.partition_point(|&x| x <= t) {
        0 => 0,
        p if p >= times.len() => times.len() - 2,
        p => p - 1,
    };
    let (t0, t1) = (times[j], times[j + 1]);
    let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    &vals[j] * (1.0 - w) + &vals[j + 1] * w
}

/// Interpolation rule for tabulated coefficients.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    PiecewiseLinear,
}

/// On-disk model description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub d: usize,
    pub m: usize,
    #[serde(flatten)]
    pub kind: ModelKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "specialization", rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "wiener_1d")]
    Wiener1d,
    #[serde(rename = "ou_constant_1d")]
    OuConstant1d {
        alpha: f64,
        gamma: f64,
    },
    Rotation {
        alpha: Vec<Vec<f64>>,
        sigma2: f64,
    },
    IntegratedWiener,
    Generic {
        interpolation: Interpolation,
        times: Vec<f64>,
        /// One row-major d x d matrix per time.
        alpha: Vec<Vec<Vec<f64>>>,
        /// One row-major d x m matrix per time.
        gamma_root: Vec<Vec<Vec<f64>>>,
    },
}

fn rows_to_mat(rows: &[Vec<f64>], nr: usize, nc: usize, what: &str) -> Result<Mat> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(GmsError::Dimension(format!("{what} must be {nr}x{nc}")));
    }
    Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn into_model(self) -> Result<ProcessModel> {
        let (d, m) = (self.d, self.m);
        let expect = |dd: usize, mm: usize, name: &str| -> Result<()> {
            if d != dd || m != mm {
                return Err(GmsError::Dimension(format!(
                    "{name} requires d={dd}, m={mm}; file declares d={d}, m={m}"
                )));
            }
            Ok(())
        };
        match self.kind {
            ModelKind::Wiener1d => {
                expect(1, 1, "wiener_1d")?;
                Ok(ProcessModel::wiener_1d())
            }
            ModelKind::OuConstant1d { alpha, gamma } => {
                expect(1, 1, "ou_constant_1d")?;
                ProcessModel::ou(alpha, gamma)
            }
            ModelKind::Rotation { alpha, sigma2 } => {
                expect(d, d, "rotation")?;
                ProcessModel::rotation(rows_to_mat(&alpha, d, d, "alpha")?, sigma2)
            }
            ModelKind::IntegratedWiener => {
                expect(d, 1, "integrated_wiener")?;
                ProcessModel::integrated_wiener(d)
            }
            ModelKind::Generic {
                interpolation: Interpolation::PiecewiseLinear,
                times,
                alpha,
                gamma_root,
            } => {
                let a = alpha
                    .iter()
                    .map(|r| rows_to_mat(r, d, d, "alpha sample"))
                    .collect::<Result<Vec<_>>>()?;
                let g = gamma_root
                    .iter()
                    .map(|r| rows_to_mat(r, d, m, "gamma_root sample"))
                    .collect::<Result<Vec<_>>>()?;
                ProcessModel::tabulated(d, m, times, a, g)
            }
        }
    }
}
