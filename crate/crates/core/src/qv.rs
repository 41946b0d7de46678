//! Realized quadratic variation and the nonparametric estimators `Ĥ`, `Ĝ`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Alpha, GridCurve, TimeGrid};
use crate::scalar::Scalar;
use crate::sim::CurvePanel;

/// `Q̂_i(t_k)` for every curve and grid point, with logs cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvPanel<T> {
    grid: TimeGrid,
    n: usize,
    qhat: Vec<T>,
    /// `log Q̂`, NaN where `Q̂ = 0`.
    log_qhat: Vec<T>,
    first_positive_k: Vec<Option<usize>>,
}

impl<T: Scalar> QvPanel<T> {
    /// Wraps an externally supplied QV matrix (row-major, `n × (m+1)`), e.g. exact
    /// `Q_i(t) = g_i² G(t)` for oracle comparisons.
    pub fn from_qv_matrix(grid: TimeGrid, n: usize, qhat: Vec<T>) -> Result<Self> {
        let w = grid.len();
        if qhat.len() != n * w {
            return Err(Error::Data(format!(
                "QV matrix for {n} curves on m = {} needs {} values, got {}",
                grid.m(),
                n * w,
                qhat.len()
            )));
        }
        if qhat.iter().any(|q| !(q.is_finite() && *q >= T::zero())) {
            return Err(Error::Data("QV values must be finite and nonnegative".into()));
        }
        let log_qhat = qhat.iter().map(|&q| if q > T::zero() { q.ln() } else { T::nan() }).collect();
        let first_positive_k = qhat.chunks_exact(w).map(|row| row.iter().position(|&q| q > T::zero())).collect();
        Ok(Self { grid, n, qhat, log_qhat, first_positive_k })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_curves(&self) -> usize {
        self.n
    }

    pub fn qhat_row(&self, i: usize) -> &[T] {
        let w = self.grid.len();
        &self.qhat[i * w..(i + 1) * w]
    }

    /// `log Q̂_i(t_k)` for all `k`; NaN entries mark `Q̂ = 0`.
    pub fn log_row(&self, i: usize) -> &[T] {
        let w = self.grid.len();
        &self.log_qhat[i * w..(i + 1) * w]
    }

    pub fn log_at(&self, i: usize, k: usize) -> Option<T> {
        let v = self.log_row(i)[k];
        (!v.is_nan()).then_some(v)
    }

    pub fn first_positive_k(&self) -> &[Option<usize>] {
        &self.first_positive_k
    }

    /// Fails with the first curve (and its largest offending index) having `Q̂ = 0` at some
    /// `t_k`, `k >= k0`.
    pub fn require_positive_from(&self, k0: usize) -> Result<()> {
        for i in 0..self.n {
            let row = self.qhat_row(i);
            if let Some(k) = (k0..row.len()).rev().find(|&k| !(row[k] > T::zero())) {
                return Err(Error::ZeroQuadraticVariation { curve: i, k });
            }
        }
        Ok(())
    }
}

/// Cumulative sums of squared increments, `Q̂_i(t_k) = Σ_{j<=k} (R_i(t_j) − R_i(t_{j−1}))²`.
pub fn realized_qv<T: Scalar>(panel: &CurvePanel<T>) -> QvPanel<T> {
    let grid = panel.grid();
    let w = grid.len();
    let n = panel.n_curves();
    let mut qhat = vec![T::zero(); n * w];
    qhat.par_chunks_mut(w).zip(panel.values().par_chunks(w)).for_each(|(q, r)| {
        let mut acc = T::zero();
        q[0] = T::zero();
        for k in 1..w {
            let d = r[k] - r[k - 1];
            acc += d * d;
            q[k] = acc;
        }
    });
    QvPanel::from_qv_matrix(grid, n, qhat).expect("realized QV is finite and nonnegative")
}

/// `Ĥ(t_k) = N⁻¹ Σ_i log Q̂_i(t_k)` for `t_k >= α`.
pub fn estimate_h<T: Scalar>(qv: &QvPanel<T>, alpha: Alpha) -> Result<GridCurve<T>> {
    let k0 = alpha.index_on(&qv.grid)?;
    estimate_h_from(qv, k0)
}

/// `Ĥ` on `t_k`, `k >= k0`, for any `k0 <= m` (including `k0 = m`, i.e. `t = 1` alone).
pub fn estimate_h_from<T: Scalar>(qv: &QvPanel<T>, k0: usize) -> Result<GridCurve<T>> {
    if qv.n == 0 {
        return Err(Error::InsufficientSample("no curves".into()));
    }
    if k0 > qv.grid.m() {
        return Err(Error::Validation(format!("start index {k0} beyond m = {}", qv.grid.m())));
    }
    qv.require_positive_from(k0)?;
    let w = qv.grid.len();
    let mut sums = vec![T::zero(); w - k0];
    for i in 0..qv.n {
        for (s, &l) in sums.iter_mut().zip(&qv.log_row(i)[k0..]) {
            *s += l;
        }
    }
    let n = T::from_usize_lossy(qv.n);
    Ok(GridCurve::new(qv.grid, k0, sums.into_iter().map(|s| s / n).collect()))
}

/// `Ĝ = exp(Ĥ)` for `t_k >= α`.
pub fn estimate_g<T: Scalar>(qv: &QvPanel<T>, alpha: Alpha) -> Result<GridCurve<T>> {
    Ok(estimate_h(qv, alpha)?.map(|h| h.exp()))
}

/// Writes `t_k,Hhat,Ghat` rows.
pub fn write_h_g_csv<T: Scalar, W: Write>(h: &GridCurve<T>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["t_k", "Hhat", "Ghat"])?;
    for (t, v) in h.iter() {
        wtr.write_record([t.to_string(), v.to_string(), v.exp().to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::sigma::{CumulativeVolatility, SigmaShape};
    use crate::sim::simulate_panel;

    fn grid(m: usize) -> TimeGrid {
        TimeGrid::new(m).unwrap()
    }

    #[test]
    fn hand_summation() {
        let panel = CurvePanel::from_rows(grid(3), &[vec![0.0, 0.1, -0.1, 0.2]]).unwrap();
        let qv = realized_qv(&panel);
        let expect: [f64; 4] = [0.0, 0.01, 0.05, 0.14];
        for (q, e) in qv.qhat_row(0).iter().zip(expect) {
            assert!((q - e).abs() < 1e-15);
        }
        assert_eq!(qv.first_positive_k(), &[Some(1)]);
    }

    #[test]
    fn constant_curve_has_zero_qv() {
        let panel = CurvePanel::from_rows(grid(4), &[vec![0.0; 5], vec![0.0, 0.1, 0.2, 0.3, 0.4]]).unwrap();
        let qv = realized_qv(&panel);
        assert!(qv.qhat_row(0).iter().all(|&q| q == 0.0));
        assert_eq!(qv.first_positive_k()[0], None);
        assert!(qv.log_at(0, 3).is_none());
        match estimate_h(&qv, Alpha::ONE_STEP) {
            Err(Error::ZeroQuadraticVariation { curve: 0, k: 4 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn late_start_reports_largest_zero_index() {
        let panel = CurvePanel::from_rows(grid(4), &[vec![0.0, 0.0, 0.0, 0.1, 0.2]]).unwrap();
        let qv = realized_qv(&panel);
        assert!(matches!(estimate_h(&qv, Alpha::ONE_STEP), Err(Error::ZeroQuadraticVariation { curve: 0, k: 2 })));
        assert!(estimate_h(&qv, Alpha::steps(3)).is_ok());
    }

    #[test]
    fn oracle_single_curve_recovers_h() {
        let spec = SigmaShape::Slope.spec::<f64>();
        let g = grid(78);
        let cv = CumulativeVolatility::on_grid(&spec, g);
        let qv = QvPanel::from_qv_matrix(g, 1, cv.g().to_vec()).unwrap();
        let h = estimate_h(&qv, Alpha::ONE_STEP).unwrap();
        for k in 1..=78 {
            assert!((h.at(k).unwrap() - cv.h(k).unwrap()).abs() < 1e-14);
        }
        let gh = estimate_g(&qv, Alpha::ONE_STEP).unwrap();
        assert!((gh.at(78).unwrap() - cv.g()[78]).abs() < 1e-15);
    }

    #[test]
    fn geometric_mean_cancels_scale() {
        let g = grid(4);
        let v = [0.0, 0.01, 0.03, 0.04, 0.05];
        let e = std::f64::consts::E;
        let q: Vec<f64> = v.iter().map(|x| x * e).chain(v.iter().map(|x| x / e)).collect();
        let qv = QvPanel::from_qv_matrix(g, 2, q).unwrap();
        let h = estimate_h(&qv, Alpha::ONE_STEP).unwrap();
        for k in 1..=4 {
            assert!((h.at(k).unwrap() - v[k].ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn qv_converges_to_g_for_unit_latent() {
        let spec = SigmaShape::Flat.spec::<f64>();
        let params = ModelParams::ar1(spec, 1e-300, 1e-300).unwrap();
        let sup_err = |m: usize| {
            let (panel, _) = simulate_panel(&params, 400, grid(m), 0, 3).unwrap();
            let qv = realized_qv(&panel);
            let mut total = 0.0;
            for i in 0..400 {
                let row = qv.qhat_row(i);
                let s = (0..=m).map(|k| (row[k] - 0.04 * k as f64 / m as f64).abs()).fold(0.0, f64::max);
                total += s;
            }
            total / 400.0
        };
        let (a, b) = (sup_err(78), sup_err(312));
        assert!(b < a && a / b > 1.5 && a / b < 2.7, "{a} {b}");
    }

    #[test]
    fn csv_export() {
        let g = grid(2);
        let qv = QvPanel::from_qv_matrix(g, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let h = estimate_h(&qv, Alpha::ONE_STEP).unwrap();
        let mut buf = Vec::new();
        write_h_g_csv(&h, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t_k,Hhat,Ghat");
        assert!(lines[1].starts_with("0.5,"));
        assert!(lines[2].starts_with("1,0,1"));
    }
}
