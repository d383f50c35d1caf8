//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use gms_core::linalg::Mat;
use gms_core::{FlowCache, ProcessModel};
use std::sync::Arc;

/// Five-point Gauss-Legendre nodes and weights on `[a, b]`; exact for polynomials of degree <= 9.
pub fn gl5_nodes(a: f64, b: f64) -> [(f64, f64); 5] {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    std::array::from_fn(|i| (c + h * X[i], h * W[i]))
}

pub fn gl5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    gl5_nodes(a, b).iter().map(|(x, w)| w * f(*x)).sum()
}

/// Composite Simpson rule with `n` (even) subintervals.
pub fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Covariance of the `(d-1)`-times integrated Wiener process started at zero at time `t0`.
pub fn iw_covariance_from(d: usize, t0: f64, t: f64, s: f64) -> Mat {
    let u = t.min(s);
    Mat::from_fn(d, d, |i, j| {
        let (a, b) = (d - 1 - i, d - 1 - j);
        if u <= t0 {
            return 0.0;
        }
        gl5(t0, u, |w| {
            (t - w).powi(a as i32) / factorial(a) * (s - w).powi(b as i32) / factorial(b)
        })
    })
}

/// Closed-form covariance oracles.
#[derive(Clone, Debug)]
pub enum Oracle {
    Wiener,
    Ou {
        alpha: f64,
        gamma: f64,
    },
    /// `A = [[0, theta], [-theta, 0]]`.
    Rotation {
        theta: f64,
        sigma2: f64,
    },
    IntegratedWiener(usize),
}

impl Oracle {
    pub fn d(&self) -> usize {
        match self {
            Self::Wiener | Self::Ou { .. } => 1,
            Self::Rotation { .. } => 2,
            Self::IntegratedWiener(d) => *d,
        }
    }

    pub fn covariance(&self, t: f64, s: f64) -> Mat {
        let u = t.min(s);
        match self {
            Self::Wiener => Mat::from_element(1, 1, u),
            Self::Ou { alpha, gamma } => Mat::from_element(
                1,
                1,
                gamma * (alpha * (t + s)).exp() * (1.0 - (-2.0 * alpha * u).exp()) / (2.0 * alpha),
            ),
            Self::Rotation { theta, sigma2 } => {
                let a = theta * (t - s);
                Mat::from_row_slice(2, 2, &[a.cos(), a.sin(), -a.sin(), a.cos()]) * (sigma2 * u)
            }
            Self::IntegratedWiener(d) => iw_covariance_from(*d, 0.0, t, s),
        }
    }

    pub fn model(&self) -> ProcessModel {
        match self {
            Self::Wiener => ProcessModel::wiener_1d(),
            Self::Ou { alpha, gamma } => ProcessModel::ou(*alpha, *gamma).unwrap(),
            Self::Rotation { theta, sigma2 } => ProcessModel::rotation(
                Mat::from_row_slice(2, 2, &[0.0, *theta, -*theta, 0.0]),
                *sigma2,
            )
            .unwrap(),
            Self::IntegratedWiener(d) => ProcessModel::integrated_wiener(*d).unwrap(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Wiener => "wiener".into(),
            Self::Ou { alpha, .. } => format!("ou(alpha={alpha})"),
            Self::Rotation { .. } => "rotation".into(),
            Self::IntegratedWiener(d) => format!("integrated_wiener(d={d})"),
        }
    }

    pub fn cache(&self) -> Arc<FlowCache> {
        Arc::new(FlowCache::new(self.model()).unwrap())
    }
}

/// Wiener, OU(1, 1), rotation and integrated Wiener (d = 2).
pub fn standard_models() -> Vec<Oracle> {
    vec![
        Oracle::Wiener,
        Oracle::Ou {
            alpha: 1.0,
            gamma: 1.0,
        },
        Oracle::Rotation {
            theta: 1.0,
            sigma2: 1.0,
        },
        Oracle::IntegratedWiener(2),
    ]
}

/// Conditional law of `X_t` given `X_l = 0`, `X_m = x_m`, `X_r = 0` for the integrated Wiener
/// process, computed by brute-force Gaussian conditioning of the process restarted at `l`.
pub struct IwConditioning {
    pub d: usize,
    pub l: f64,
    pub m: f64,
    pub r: f64,
    /// `Var(X_m | X_l = 0, X_r = 0)`.
    pub sigma_cov: Mat,
    /// Lower Cholesky factor of `sigma_cov`.
    pub sigma: Mat,
    obs_inv: Mat,
}

impl IwConditioning {
    pub fn new(d: usize, l: f64, m: f64, r: f64) -> Self {
        let c = |a: f64, b: f64| iw_covariance_from(d, l, a, b);
        let mut obs = Mat::zeros(2 * d, 2 * d);
        let pts = [m, r];
        for (i, a) in pts.iter().enumerate() {
            for (j, b) in pts.iter().enumerate() {
                obs.view_mut((i * d, j * d), (d, d)).copy_from(&c(*a, *b));
            }
        }
        let obs_inv = obs
            .clone()
            .try_inverse()
            .expect("observation covariance invertible");
        let crr_inv = c(r, r).try_inverse().unwrap();
        let sigma_cov = c(m, m) - c(m, r) * crr_inv * c(r, m);
        let sigma = sigma_cov
            .clone()
            .cholesky()
            .expect("conditional covariance SPD")
            .l();
        Self {
            d,
            l,
            m,
            r,
            sigma_cov,
            sigma,
            obs_inv,
        }
    }

    /// `E[X_t | X_l = 0, X_m = sigma e_j, X_r = 0]` as columns `j`, for `l <= t <= r`.
    pub fn psi(&self, t: f64) -> Mat {
        let d = self.d;
        let mut cross = Mat::zeros(d, 2 * d);
        cross
            .view_mut((0, 0), (d, d))
            .copy_from(&iw_covariance_from(d, self.l, t, self.m));
        cross
            .view_mut((0, d), (d, d))
            .copy_from(&iw_covariance_from(d, self.l, t, self.r));
        let mut rhs = Mat::zeros(2 * d, d);
        rhs.view_mut((0, 0), (d, d)).copy_from(&self.sigma);
        cross * &self.obs_inv * rhs
    }
}

/// Standard normal survival function.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}
