use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Equispaced observation grid `t_k = k/m`, `k = 0..=m`, on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TimeGrid {
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    m: usize,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        TimeGrid::new(r.m)
    }
}

impl From<TimeGrid> for GridRepr {
    fn from(g: TimeGrid) -> Self {
        GridRepr { m: g.m }
    }
}

impl TimeGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Validation(format!("grid needs m >= 2 steps, got {m}")));
        }
        Ok(Self { m })
    }

    /// Number of steps.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of grid points, `m + 1`.
    #[inline]
    pub fn len(&self) -> usize {
        self.m + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn delta<T: Scalar>(&self) -> T {
        T::one() / T::from_usize_lossy(self.m)
    }

    /// `t_k`; exact at both ends.
    #[inline]
    pub fn point<T: Scalar>(&self, k: usize) -> T {
        debug_assert!(k <= self.m);
        if k == self.m {
            T::one()
        } else {
            T::from_usize_lossy(k) / T::from_usize_lossy(self.m)
        }
    }

    pub fn points<T: Scalar>(&self) -> Vec<T> {
        (0..=self.m).map(|k| self.point(k)).collect()
    }
}

/// Lower truncation `alpha = steps * Δ`, always on the grid and strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Alpha {
    steps: usize,
}

impl Alpha {
    /// One grid step, `alpha = Δ`.
    pub const ONE_STEP: Alpha = Alpha { steps: 1 };

    pub fn steps(steps: usize) -> Self {
        Self { steps }
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.steps
    }

    /// Checks `0 < alpha < 1` on `grid` and returns the first retained grid index.
    pub fn index_on(&self, grid: &TimeGrid) -> Result<usize> {
        if self.steps == 0 || self.steps >= grid.m() {
            return Err(Error::Validation(format!(
                "alpha = {}Δ must satisfy 0 < alpha < 1 on a grid with m = {}",
                self.steps,
                grid.m()
            )));
        }
        Ok(self.steps)
    }

    pub fn value<T: Scalar>(&self, grid: &TimeGrid) -> T {
        grid.point(self.steps)
    }
}

impl Default for Alpha {
    fn default() -> Self {
        Self::ONE_STEP
    }
}

/// A function sampled on the grid points `t_k`, `k = start..=m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCurve<T> {
    pub grid: TimeGrid,
    pub start: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> GridCurve<T> {
    pub fn new(grid: TimeGrid, start: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.m() + 1 - start);
        Self { grid, start, values }
    }

    /// Value at grid index `k`, `None` below `start`.
    pub fn at(&self, k: usize) -> Option<T> {
        k.checked_sub(self.start).and_then(|j| self.values.get(j).copied())
    }

    /// `(t_k, value)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.values.iter().enumerate().map(move |(j, &v)| (self.grid.point(self.start + j), v))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::new(self.grid, self.start, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Composite trapezoid weights for nodes `t_start..=t_m` normalised to sum to one, i.e.
/// `sum_k w_k f(t_k)` approximates `(1/(1 - t_start)) ∫ f`.
pub(crate) fn trapezoid_mean<T: Scalar>(values: &[T]) -> T {
    let n = values.len();
    match n {
        0 => T::nan(),
        1 => values[0],
        _ => {
            let half = T::lit(0.5);
            let inner: T = values[1..n - 1].iter().copied().sum();
            (inner + half * (values[0] + values[n - 1])) / T::from_usize_lossy(n - 1)
        }
    }
}

/// Composite trapezoid integral of grid samples with spacing `step`.
pub(crate) fn trapezoid_integral<T: Scalar>(values: &[T], step: T) -> T {
    let n = values.len();
    if n < 2 {
        return T::zero();
    }
    trapezoid_mean(values) * step * T::from_usize_lossy(n - 1)
}
