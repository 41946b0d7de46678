//! Functional stochastic volatility: simulation and estimation for panels of intraday
//! cumulative return curves `R_i(t) = g_i ∫_0^t σ(u) dW_i(u)` with `log g_i` an AR(p).
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the common `f64` instantiation, with `*32` variants for single precision.

// `!(x > 0)` style guards are intentional: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod data;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod qv;
pub mod rng;
pub mod scalar;
pub mod sigma;
pub mod sim;

pub use asymptotics::{
    asymptotic_variance, avar_order1, avar_orderp, bartlett_v, theoretical_kappa, BartlettInput, KappaOptions,
};
pub use data::{clean, compute_cidr, CleaningPolicy, CleaningReport, DropReason, RawIntradayTable};
pub use error::{Error, ErrorClass, Result};
pub use estimate::{
    bias_correct, gamma_curves, procedure_a, procedure_b, procedure_c, run_procedure, yule_walker_solve, Procedure,
};
pub use grid::{Alpha, TimeGrid};
pub use mc::{run_mc, McDesign, McSummary};
pub use model::Innovation;
pub use qv::{estimate_g, estimate_h, realized_qv};
pub use rng::Seed;
pub use scalar::Scalar;
pub use sigma::SigmaShape;
pub use sim::{simulate_diffusion_path, simulate_latent, simulate_panel};

pub type SigmaSpec = sigma::SigmaSpec<f64>;
pub type SigmaSpec32 = sigma::SigmaSpec<f32>;
pub type Tabulated = sigma::Tabulated<f64>;
pub type CumulativeVolatility = sigma::CumulativeVolatility<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type LatentSeries = sim::LatentSeries<f64>;
pub type LatentSeries32 = sim::LatentSeries<f32>;
pub type CurvePanel = sim::CurvePanel<f64>;
pub type CurvePanel32 = sim::CurvePanel<f32>;
pub type QvPanel = qv::QvPanel<f64>;
pub type QvPanel32 = qv::QvPanel<f32>;
pub type GammaCurves = estimate::GammaCurves<f64>;
pub type GammaCurves32 = estimate::GammaCurves<f32>;
pub type EstimateReport = estimate::EstimateReport<f64>;
pub type EstimateReport32 = estimate::EstimateReport<f32>;
pub type KappaSequence = asymptotics::KappaSequence<f64>;
pub type AsymptoticVariance = asymptotics::AsymptoticVariance<f64>;
pub type GridCurve = grid::GridCurve<f64>;
pub type Matrix = linalg::Matrix<f64>;
