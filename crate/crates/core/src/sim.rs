//! Panels `R_i(t) = g_i ∫_0^t σ dW_i` on a grid, with `log g_i` an AR(p) sequence.
//!
//! Brownian integrals are sampled exactly at the grid points through the time change
//! `∫_0^t σ dW = W(G(t))` in distribution: independent Gaussian increments with variances
//! `G(t_k) - G(t_{k-1})`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{Innovation, ModelParams};
use crate::rng::{Seed, Stream};
use crate::scalar::Scalar;
use crate::sigma::{CumulativeVolatility, SigmaSpec};

/// Burn-in used when none is given.
pub const DEFAULT_BURN_IN: usize = 500;

/// Latent log-volatility levels `log g_1..log g_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSeries<T> {
    pub log_g: Vec<T>,
}

impl<T: Scalar> LatentSeries<T> {
    pub fn new(log_g: Vec<T>) -> Result<Self> {
        if log_g.is_empty() {
            return Err(Error::Validation("latent series must hold at least one value".into()));
        }
        Ok(Self { log_g })
    }

    pub fn len(&self) -> usize {
        self.log_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_g.is_empty()
    }

    pub fn g(&self) -> Vec<T> {
        self.log_g.iter().map(|x| x.exp()).collect()
    }
}

/// `N` curves observed at the `m + 1` points of a common grid, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePanel<T> {
    grid: TimeGrid,
    n: usize,
    values: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ids: Option<Vec<String>>,
}

impl<T: Scalar> CurvePanel<T> {
    pub fn new(grid: TimeGrid, n: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * grid.len() {
            return Err(Error::Data(format!(
                "panel of {n} curves on m = {} needs {} values, got {}",
                grid.m(),
                n * grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("panel contains non-finite values".into()));
        }
        Ok(Self { grid, n, values, ids: None })
    }

    pub fn from_rows(grid: TimeGrid, rows: &[Vec<T>]) -> Result<Self> {
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(grid, rows.len(), values)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::Data(format!("{} ids for {} curves", ids.len(), self.n)));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_curves(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w = self.grid.len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.grid.len())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Every value multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self { grid: self.grid, n: self.n, values: self.values.iter().map(|&v| v * c).collect(), ids: self.ids.clone() }
    }

    pub fn convert<U: Scalar>(&self) -> CurvePanel<U> {
        CurvePanel {
            grid: self.grid,
            n: self.n,
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            ids: self.ids.clone(),
        }
    }
}

fn draw_innovation<T: Scalar, R: Rng + ?Sized>(law: &Innovation<T>, sd: f64, rng: &mut R) -> T {
    let z: f64 = match *law {
        Innovation::Gaussian => StandardNormal.sample(rng),
        Innovation::StudentT { df } => {
            let df = df.to_f64_lossy();
            let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
            t * ((df - 2.0) / df).sqrt()
        }
    };
    T::lit(sd * z)
}

/// AR(p) recursion from `log g = 0`, run for `burn_in + n` steps with the first `burn_in`
/// discarded, using the given generator.
pub fn simulate_latent_with<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<LatentSeries<T>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Validation("latent series length N must be >= 1".into()));
    }
    let p = params.p();
    let sd = params.sigma_eps2.to_f64_lossy().sqrt();
    // history[0] is the most recent value
    let mut history = vec![T::zero(); p];
    let mut out = Vec::with_capacity(n);
    for step in 0..burn_in + n {
        let eps = draw_innovation(&params.innovation, sd, rng);
        let x = params.phi.iter().zip(&history).map(|(&a, &b)| a * b).sum::<T>() + eps;
        history.rotate_right(1);
        history[0] = x;
        if step >= burn_in {
            out.push(x);
        }
    }
    LatentSeries::new(out)
}

/// Latent series from the `Latent` substream of `seed`.
pub fn simulate_latent<T: Scalar>(
    params: &ModelParams<T>,
    n: usize,
    burn_in: usize,
    seed: impl Into<Seed>,
) -> Result<LatentSeries<T>> {
    let mut rng = seed.into().rng(Stream::Latent);
    simulate_latent_with(params, n, burn_in, &mut rng)
}

/// Fills `out[0..=m]` with a path of `∫_0^{t_k} σ dW` given per-cell standard deviations.
fn diffusion_path_into<T: Scalar, R: Rng + ?Sized>(cell_sd: &[f64], scale: T, rng: &mut R, out: &mut [T]) {
    let mut level = 0.0f64;
    out[0] = T::zero();
    for (slot, &sd) in out[1..].iter_mut().zip(cell_sd) {
        let z: f64 = StandardNormal.sample(rng);
        level += sd * z;
        *slot = scale * T::lit(level);
    }
}

fn cell_sds<T: Scalar>(sigma: &SigmaSpec<T>, grid: TimeGrid) -> Vec<f64> {
    CumulativeVolatility::on_grid(sigma, grid).increments().into_iter().map(|v| v.to_f64_lossy().sqrt()).collect()
}

/// One path of `∫_0^{t_k} σ(u) dW(u)`, `k = 0..=m`, exact in distribution at the grid points.
pub fn simulate_diffusion_path<T: Scalar>(
    sigma: &SigmaSpec<T>,
    grid: TimeGrid,
    seed: impl Into<Seed>,
) -> Result<Vec<T>> {
    sigma.validate()?;
    let sds = cell_sds(sigma, grid);
    let mut rng = seed.into().rng(Stream::Brownian(0));
    let mut out = vec![T::zero(); grid.len()];
    diffusion_path_into(&sds, T::one(), &mut rng, &mut out);
    Ok(out)
}

/// Panel plus the latent series that generated it. Curve `i` uses its own Brownian substream,
/// independent of the latent innovations.
pub fn simulate_panel<T: Scalar>(
    params: &ModelParams<T>,
    n: usize,
    grid: TimeGrid,
    burn_in: usize,
    seed: impl Into<Seed>,
) -> Result<(CurvePanel<T>, LatentSeries<T>)> {
    let seed = seed.into();
    let latent = simulate_latent(params, n, burn_in, seed)?;
    let sds = cell_sds(&params.sigma, grid);
    let w = grid.len();
    let mut values = vec![T::zero(); n * w];
    for (i, (row, log_g)) in values.chunks_exact_mut(w).zip(&latent.log_g).enumerate() {
        let mut rng = seed.rng(Stream::Brownian(i as u64));
        diffusion_path_into(&sds, log_g.exp(), &mut rng, row);
    }
    Ok((CurvePanel::new(grid, n, values)?, latent))
}
