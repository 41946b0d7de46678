//! Autocovariance curves `Γ_{h,N}(t)` of `log Q̂` and the three Yule–Walker procedures.
//!
//! `Γ_{h,N}(t) = (1/(4N)) Σ_{i=1}^{N−h} (log Q̂_i(t) − L̄(t))(log Q̂_{i+h}(t) − L̄(t))` with
//! `L̄(t)` the full-panel mean. The factor 1/4 makes `Γ` target the autocovariances of
//! `log g` rather than of `2 log g`, so `σ̂²` estimates `σ_ε²` directly.
//!
//! Integrals over `[α, 1]` use the composite trapezoid rule on the grid nodes in `[α, 1]`,
//! normalised by `1 − α`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{trapezoid_mean, Alpha, TimeGrid};
use crate::linalg::{solve_spd, toeplitz};
use crate::qv::QvPanel;
use crate::scalar::Scalar;
use crate::sim::LatentSeries;

/// Relative window below zero inside which a residual variance is clamped to zero.
pub const SIGMA2_CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Procedure {
    /// Yule–Walker on `Γ(1)`.
    A,
    /// Yule–Walker on `Γ` averaged over `[α, 1]`.
    B,
    /// Pointwise Yule–Walker on `[α, 1]`, coefficients averaged.
    C,
}

impl Procedure {
    pub const ALL: [Procedure; 3] = [Procedure::A, Procedure::B, Procedure::C];
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Procedure::A => "A",
            Procedure::B => "B",
            Procedure::C => "C",
        })
    }
}

impl FromStr for Procedure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Procedure::A),
            "B" | "b" => Ok(Procedure::B),
            "C" | "c" => Ok(Procedure::C),
            other => Err(Error::Validation(format!("unknown procedure '{other}' (expected A, B or C)"))),
        }
    }
}

/// `Γ_{h,N}(t_k)` for `h = 0..=p` and `k = start..=m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCurves<T> {
    pub grid: TimeGrid,
    pub start: usize,
    pub p: usize,
    pub n: usize,
    /// `gamma[h][k - start]`.
    pub gamma: Vec<Vec<T>>,
}

impl<T: Scalar> GammaCurves<T> {
    /// `(Γ_0(t_k), …, Γ_p(t_k))`.
    pub fn at(&self, k: usize) -> Vec<T> {
        let j = k - self.start;
        self.gamma.iter().map(|g| g[j]).collect()
    }

    /// Trapezoid average of each `Γ_h` over `t_k`, `k >= k0`.
    pub fn averaged_from(&self, k0: usize) -> Vec<T> {
        let j0 = k0 - self.start;
        self.gamma.iter().map(|g| trapezoid_mean(&g[j0..])).collect()
    }

    fn alpha_index(&self, alpha: Alpha) -> Result<usize> {
        let k0 = alpha.index_on(&self.grid)?;
        if k0 < self.start {
            return Err(Error::Validation(format!(
                "alpha = {}Δ lies below the start {}Δ of the autocovariance curves",
                alpha.n_steps(),
                self.start
            )));
        }
        Ok(k0)
    }
}

fn centered_autocov<T: Scalar>(x: &[T], p: usize, scale: T) -> Vec<T> {
    let n = x.len();
    let mean = x.iter().copied().sum::<T>() / T::from_usize_lossy(n);
    let c: Vec<T> = x.iter().map(|&v| v - mean).collect();
    (0..=p)
        .map(|h| {
            let s: T = c[..n - h].iter().zip(&c[h..]).map(|(&a, &b)| a * b).sum();
            s * scale
        })
        .collect()
}

/// `Γ_{h,N}(t_k)` on `[α, 1]`.
pub fn gamma_curves<T: Scalar>(qv: &QvPanel<T>, p: usize, alpha: Alpha) -> Result<GammaCurves<T>> {
    let k0 = alpha.index_on(&qv.grid())?;
    gamma_curves_from(qv, p, k0)
}

/// `Γ_{h,N}(t_k)` for `k = k0..=m`; `k0 = m` gives `t = 1` only.
pub fn gamma_curves_from<T: Scalar>(qv: &QvPanel<T>, p: usize, k0: usize) -> Result<GammaCurves<T>> {
    let n = qv.n_curves();
    let grid = qv.grid();
    if p == 0 {
        return Err(Error::Validation("AR order p must be at least 1".into()));
    }
    if n <= p {
        return Err(Error::InsufficientSample(format!("need N > p curves, got N = {n}, p = {p}")));
    }
    if k0 > grid.m() {
        return Err(Error::Validation(format!("start index {k0} beyond m = {}", grid.m())));
    }
    qv.require_positive_from(k0)?;
    let scale = T::one() / (T::lit(4.0) * T::from_usize_lossy(n));
    let per_node: Vec<Vec<T>> = (k0..=grid.m())
        .into_par_iter()
        .map(|k| {
            let col: Vec<T> = (0..n).map(|i| qv.log_row(i)[k]).collect();
            centered_autocov(&col, p, scale)
        })
        .collect();
    let gamma = (0..=p).map(|h| per_node.iter().map(|v| v[h]).collect()).collect();
    Ok(GammaCurves { grid, start: k0, p, n, gamma })
}

/// Sample autocovariances `γ_{h,N} = (1/N) Σ (log g_i − mean)(log g_{i+h} − mean)`, `h = 0..=p`.
pub fn oracle_gammas<T: Scalar>(latent: &LatentSeries<T>, p: usize) -> Result<Vec<T>> {
    let n = latent.len();
    if n <= p {
        return Err(Error::InsufficientSample(format!("need N > p, got N = {n}, p = {p}")));
    }
    Ok(centered_autocov(&latent.log_g, p, T::one() / T::from_usize_lossy(n)))
}

/// Result of one Yule–Walker solve.
#[derive(Debug, Clone, PartialEq)]
pub struct YwSolution<T> {
    pub phi: Vec<T>,
    pub sigma2: T,
    /// The residual variance was marginally negative and set to zero.
    pub clamped: bool,
}

fn solve_phi<T: Scalar>(g0: T, gvec: &[T]) -> Result<Vec<T>> {
    let p = gvec.len();
    let mut c = Vec::with_capacity(p);
    c.push(g0);
    c.extend_from_slice(&gvec[..p - 1]);
    solve_spd(&toeplitz(&c), gvec)
}

fn residual<T: Scalar>(g0: T, gvec: &[T], phi: &[T]) -> Result<(T, bool)> {
    let s = g0 - phi.iter().zip(gvec).map(|(&a, &b)| a * b).sum::<T>();
    if s >= T::zero() {
        Ok((s, false))
    } else if s > -T::lit(SIGMA2_CLAMP_TOL) * g0.abs() {
        Ok((T::zero(), true))
    } else {
        Err(Error::NegativeVariance { value: s.to_f64_lossy() })
    }
}

/// `φ = Ψ⁻¹γ`, `σ² = γ_0 − φᵀγ` with `Ψ` the Toeplitz matrix of `(γ_0, …, γ_{p−1})`.
pub fn yule_walker_solve<T: Scalar>(gamma0: T, gamma_vec: &[T]) -> Result<YwSolution<T>> {
    if gamma_vec.is_empty() {
        return Err(Error::Validation("AR order p must be at least 1".into()));
    }
    let phi = solve_phi(gamma0, gamma_vec)?;
    let (sigma2, clamped) = residual(gamma0, gamma_vec, &phi)?;
    Ok(YwSolution { phi, sigma2, clamped })
}

/// Standard errors `sqrt(avar / N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors<T> {
    pub phi: Vec<T>,
    pub sigma_eps2: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport<T> {
    pub procedure: Procedure,
    pub p: usize,
    /// Truncation in grid steps (`None` for Procedure A, which uses `t = 1` only).
    pub alpha_steps: Option<usize>,
    pub alpha: Option<T>,
    pub phi: Vec<T>,
    pub sigma_eps2: T,
    pub bias_corrected: bool,
    pub clamped: bool,
    pub stderr: Option<StdErrors<T>>,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    /// Where the accompanying `Ĝ` table was written, if anywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ghat_ref: Option<String>,
}

impl<T: Scalar> EstimateReport<T> {
    fn new(gammas: &GammaCurves<T>, procedure: Procedure, alpha: Option<Alpha>, sol: YwSolution<T>) -> Self {
        Self {
            procedure,
            p: gammas.p,
            alpha_steps: alpha.map(|a| a.n_steps()),
            alpha: alpha.map(|a| a.value(&gammas.grid)),
            phi: sol.phi,
            sigma_eps2: sol.sigma2,
            bias_corrected: false,
            clamped: sol.clamped,
            stderr: None,
            n: gammas.n,
            m: gammas.grid.m(),
            ghat_ref: None,
        }
    }
}

/// Procedure A: Yule–Walker on `Γ(1)`.
pub fn procedure_a<T: Scalar>(gammas: &GammaCurves<T>) -> Result<EstimateReport<T>> {
    let g = gammas.at(gammas.grid.m());
    let sol = yule_walker_solve(g[0], &g[1..])?;
    Ok(EstimateReport::new(gammas, Procedure::A, None, sol))
}

/// Procedure B: Yule–Walker on `(1/(1−α)) ∫_α^1 Γ(t) dt`.
pub fn procedure_b<T: Scalar>(gammas: &GammaCurves<T>, alpha: Alpha) -> Result<EstimateReport<T>> {
    let k0 = gammas.alpha_index(alpha)?;
    let g = gammas.averaged_from(k0);
    let sol = yule_walker_solve(g[0], &g[1..])?;
    Ok(EstimateReport::new(gammas, Procedure::B, Some(alpha), sol))
}

fn pointwise_phi<T: Scalar>(gammas: &GammaCurves<T>, k0: usize) -> Result<Vec<Vec<T>>> {
    (k0..=gammas.grid.m())
        .map(|k| {
            let g = gammas.at(k);
            solve_phi(g[0], &g[1..]).map_err(|e| match e {
                Error::DegenerateAutocovariance(msg) => {
                    Error::DegenerateAutocovariance(format!("at t_{k} = {}: {msg}", gammas.grid.point::<f64>(k)))
                }
                other => other,
            })
        })
        .collect()
}

/// `φ̂` from pointwise `φ(t_k)` (each scaled by `factor`), then `σ̂²` as the averaged residual
/// `Γ_0(t) − φ̂ᵀΓ(t)`.
fn procedure_c_scaled<T: Scalar>(gammas: &GammaCurves<T>, k0: usize, factor: T) -> Result<YwSolution<T>> {
    let p = gammas.p;
    let phis = pointwise_phi(gammas, k0)?;
    let phi: Vec<T> = (0..p)
        .map(|j| {
            let curve: Vec<T> = phis.iter().map(|v| v[j] * factor).collect();
            trapezoid_mean(&curve)
        })
        .collect();
    let resid: Vec<T> = (k0..=gammas.grid.m())
        .map(|k| {
            let g = gammas.at(k);
            g[0] - phi.iter().zip(&g[1..]).map(|(&a, &b)| a * b).sum::<T>()
        })
        .collect();
    let s = trapezoid_mean(&resid);
    let g0 = trapezoid_mean(&gammas.gamma[0][k0 - gammas.start..]);
    let (sigma2, clamped) = if s >= T::zero() {
        (s, false)
    } else if s > -T::lit(SIGMA2_CLAMP_TOL) * g0 {
        (T::zero(), true)
    } else {
        return Err(Error::NegativeVariance { value: s.to_f64_lossy() });
    };
    Ok(YwSolution { phi, sigma2, clamped })
}

/// Procedure C: average of pointwise Yule–Walker coefficients over `[α, 1]`.
pub fn procedure_c<T: Scalar>(gammas: &GammaCurves<T>, alpha: Alpha) -> Result<EstimateReport<T>> {
    let k0 = gammas.alpha_index(alpha)?;
    let sol = procedure_c_scaled(gammas, k0, T::one())?;
    Ok(EstimateReport::new(gammas, Procedure::C, Some(alpha), sol))
}

/// Runs one procedure; `alpha` is ignored by Procedure A.
pub fn run_procedure<T: Scalar>(
    gammas: &GammaCurves<T>,
    procedure: Procedure,
    alpha: Alpha,
) -> Result<EstimateReport<T>> {
    match procedure {
        Procedure::A => procedure_a(gammas),
        Procedure::B => procedure_b(gammas, alpha),
        Procedure::C => procedure_c(gammas, alpha),
    }
}

/// Small-sample correction for AR(1): `φ_BC = φ(1 + 3/N)` and `σ²_BC = Γ_0 − φ_BC Γ_1`,
/// evaluated at `t = 1` (A), on the averaged `Γ` (B), or pointwise then averaged (C).
pub fn bias_correct<T: Scalar>(report: &EstimateReport<T>, gammas: &GammaCurves<T>) -> Result<EstimateReport<T>> {
    if report.p != 1 || gammas.p != 1 {
        return Err(Error::UnsupportedOrder {
            p: report.p,
            reason: "the small-sample bias correction is only available for AR(1)".into(),
        });
    }
    if report.bias_corrected {
        return Err(Error::Validation("report is already bias corrected".into()));
    }
    if report.n != gammas.n || report.m != gammas.grid.m() {
        return Err(Error::Validation("report and autocovariance curves come from different panels".into()));
    }
    let factor = T::one() + T::lit(3.0) / T::from_usize_lossy(gammas.n);
    let sol = match report.procedure {
        Procedure::A => {
            let g = gammas.at(gammas.grid.m());
            let phi = vec![report.phi[0] * factor];
            let (sigma2, clamped) = residual(g[0], &g[1..], &phi)?;
            YwSolution { phi, sigma2, clamped }
        }
        Procedure::B => {
            let k0 = gammas.alpha_index(Alpha::steps(report.alpha_steps.unwrap_or(1)))?;
            let g = gammas.averaged_from(k0);
            let phi = vec![report.phi[0] * factor];
            let (sigma2, clamped) = residual(g[0], &g[1..], &phi)?;
            YwSolution { phi, sigma2, clamped }
        }
        Procedure::C => {
            let k0 = gammas.alpha_index(Alpha::steps(report.alpha_steps.unwrap_or(1)))?;
            procedure_c_scaled(gammas, k0, factor)?
        }
    };
    Ok(EstimateReport {
        phi: sol.phi,
        sigma_eps2: sol.sigma2,
        clamped: sol.clamped,
        bias_corrected: true,
        stderr: None,
        ..report.clone()
    })
}
