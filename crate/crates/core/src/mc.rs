//! Monte Carlo replication harness and the evaluation metrics (bias, RMSE, functional errors).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{bias_correct, gamma_curves_from, run_procedure, Procedure};
use crate::grid::{trapezoid_integral, Alpha, TimeGrid};
use crate::model::ModelParams;
use crate::qv::{estimate_h_from, realized_qv};
use crate::rng::Seed;
use crate::sigma::CumulativeVolatility;
use crate::sim::{simulate_panel, DEFAULT_BURN_IN};

/// Share of failed replications above which a run is flagged.
pub const FAILURE_FLAG_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McDesign {
    pub label: String,
    pub params: ModelParams<f64>,
    pub n_list: Vec<usize>,
    pub m: usize,
    /// Truncations in grid steps.
    pub alpha_list: Vec<usize>,
    pub r: usize,
    pub procedures: Vec<Procedure>,
    /// Also record the bias-corrected variant of every estimate.
    pub bias_corrected: bool,
    pub base_seed: u64,
    pub burn_in: usize,
}

impl McDesign {
    pub fn new(label: impl Into<String>, params: ModelParams<f64>, n_list: Vec<usize>, m: usize, r: usize) -> Self {
        Self {
            label: label.into(),
            params,
            n_list,
            m,
            alpha_list: vec![1],
            r,
            procedures: Procedure::ALL.to_vec(),
            bias_corrected: false,
            base_seed: 0,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let grid = TimeGrid::new(self.m)?;
        if self.r == 0 {
            return Err(Error::Validation("replication count R must be >= 1".into()));
        }
        if self.n_list.is_empty() || self.alpha_list.is_empty() || self.procedures.is_empty() {
            return Err(Error::Validation("N list, alpha list and procedures must be nonempty".into()));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n <= self.params.p()) {
            return Err(Error::Validation(format!("sample size N = {n} must exceed p = {}", self.params.p())));
        }
        for &a in &self.alpha_list {
            Alpha::steps(a).index_on(&grid)?;
        }
        if self.bias_corrected && self.params.p() != 1 {
            return Err(Error::UnsupportedOrder {
                p: self.params.p(),
                reason: "the small-sample bias correction is only available for AR(1)".into(),
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.m).expect("validated grid")
    }

    /// Seed of replication `r` at sample size `n`.
    pub fn replication_seed(&self, n: usize, r: usize) -> Seed {
        Seed(self.base_seed).child(n as u64).child(r as u64)
    }

    fn cell_keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        for &procedure in &self.procedures {
            let alphas: Vec<Option<usize>> = match procedure {
                Procedure::A => vec![None],
                _ => self.alpha_list.iter().map(|&a| Some(a)).collect(),
            };
            for alpha_steps in alphas {
                keys.push(CellKey { procedure, alpha_steps, bias_corrected: false });
                if self.bias_corrected {
                    keys.push(CellKey { procedure, alpha_steps, bias_corrected: true });
                }
            }
        }
        keys
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub procedure: Procedure,
    pub alpha_steps: Option<usize>,
    pub bias_corrected: bool,
}

/// Estimates from one replication, ordered as the design's cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub r: usize,
    pub estimates: Vec<(CellKey, Vec<f64>, f64)>,
    /// `∫_0^1 (Ĝ − G) dt`.
    pub g_err_integral: f64,
    /// `∫_0^1 (Ĝ − G)² dt`.
    pub g_ise: f64,
}

impl Replication {
    pub fn estimate(&self, key: CellKey) -> Option<(&[f64], f64)> {
        self.estimates.iter().find(|(k, _, _)| *k == key).map(|(_, phi, s2)| (phi.as_slice(), *s2))
    }
}

/// `Ĝ` on the whole grid: estimated on `t_k >= t_{k0}` and held at `Ĝ(t_{k0})` below.
fn extended_ghat(h: &crate::grid::GridCurve<f64>) -> Vec<f64> {
    let first = h.values[0].exp();
    let mut out = vec![first; h.start];
    out.extend(h.values.iter().map(|v| v.exp()));
    out
}

fn one_replication(design: &McDesign, n: usize, r: usize, g_true: &[f64]) -> Result<Replication> {
    let grid = design.grid();
    let seed = design.replication_seed(n, r);
    let (panel, _) = simulate_panel(&design.params, n, grid, design.burn_in, seed)?;
    let qv = realized_qv(&panel);
    let k0 = *design.alpha_list.iter().min().expect("nonempty");
    let gammas = gamma_curves_from(&qv, design.params.p(), k0)?;
    let mut estimates = Vec::new();
    for key in design.cell_keys() {
        if key.bias_corrected {
            continue;
        }
        let alpha = Alpha::steps(key.alpha_steps.unwrap_or(k0));
        let rep = run_procedure(&gammas, key.procedure, alpha)?;
        if design.bias_corrected {
            let bc = bias_correct(&rep, &gammas)?;
            estimates.push((key, rep.phi, rep.sigma_eps2));
            estimates.push((CellKey { bias_corrected: true, ..key }, bc.phi, bc.sigma_eps2));
        } else {
            estimates.push((key, rep.phi, rep.sigma_eps2));
        }
    }
    let ghat = extended_ghat(&estimate_h_from(&qv, k0)?);
    let diff: Vec<f64> = ghat.iter().zip(g_true).map(|(a, b)| a - b).collect();
    let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
    let step = grid.delta::<f64>();
    Ok(Replication {
        r,
        estimates,
        g_err_integral: trapezoid_integral(&diff, step),
        g_ise: trapezoid_integral(&sq, step),
    })
}

/// All `R` replications at sample size `n`, in replication order. Runs in parallel; the
/// output does not depend on the number of worker threads.
pub fn run_replications(design: &McDesign, n: usize) -> Result<Vec<Result<Replication>>> {
    run_replications_with(design, n, &|_| {})
}

pub fn run_replications_with(
    design: &McDesign,
    n: usize,
    on_done: &(dyn Fn(usize) + Sync),
) -> Result<Vec<Result<Replication>>> {
    design.validate()?;
    let g_true = CumulativeVolatility::on_grid(&design.params.sigma, design.grid()).g().to_vec();
    Ok((0..design.r)
        .into_par_iter()
        .map(|r| {
            let out = one_replication(design, n, r, &g_true);
            on_done(r);
            out
        })
        .collect())
}

/// `B = mean(x) − truth`, `RMSE = sqrt(mean((x − truth)²))`.
pub fn bias_rmse(values: &[f64], truth: f64) -> (f64, f64) {
    let r = values.len() as f64;
    let b = values.iter().sum::<f64>() / r - truth;
    let mse = values.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / r;
    (b, mse.sqrt())
}

/// `(fB, fRMSE, fRE)` from per-replication `∫(Ĝ−G)`, `∫(Ĝ−G)²` and `∫G²`.
pub fn functional_metrics(err_integrals: &[f64], ises: &[f64], g_sq_integral: f64) -> (f64, f64, f64) {
    let r = ises.len() as f64;
    let fb = err_integrals.iter().sum::<f64>() / r;
    let mise = ises.iter().sum::<f64>() / r;
    (fb, mise.sqrt(), (mise / g_sq_integral).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub label: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub procedure: Procedure,
    pub alpha_steps: Option<usize>,
    pub bias_corrected: bool,
    pub b_phi: Vec<f64>,
    pub rmse_phi: Vec<f64>,
    pub b_sigma2: f64,
    pub rmse_sigma2: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCell {
    pub label: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub f_b: f64,
    pub f_rmse: f64,
    pub f_re: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub failed: usize,
    pub flagged: bool,
    /// Up to five distinct messages.
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub design: McDesign,
    pub cells: Vec<McCell>,
    pub functional: Vec<FunctionalCell>,
    pub failures: Vec<FailureSummary>,
}

impl McSummary {
    pub fn cell(
        &self,
        n: usize,
        procedure: Procedure,
        alpha_steps: Option<usize>,
        bias_corrected: bool,
    ) -> Option<&McCell> {
        self.cells.iter().find(|c| {
            c.n == n
                && c.procedure == procedure
                && c.bias_corrected == bias_corrected
                && (procedure == Procedure::A || c.alpha_steps == alpha_steps)
        })
    }

    pub fn functional(&self, n: usize) -> Option<&FunctionalCell> {
        self.functional.iter().find(|c| c.n == n)
    }

    pub fn flagged(&self) -> bool {
        self.failures.iter().any(|f| f.flagged)
    }
}

/// Aggregates replications at one sample size into table cells.
pub fn summarize(
    design: &McDesign,
    n: usize,
    reps: &[Result<Replication>],
) -> (Vec<McCell>, FunctionalCell, FailureSummary) {
    let ok: Vec<&Replication> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    let mut messages: Vec<String> = Vec::new();
    for e in reps.iter().filter_map(|r| r.as_ref().err()) {
        let s = e.to_string();
        if messages.len() < 5 && !messages.contains(&s) {
            messages.push(s);
        }
    }
    let failed = reps.len() - ok.len();
    let failure =
        FailureSummary { n, failed, flagged: failed as f64 > FAILURE_FLAG_RATE * reps.len() as f64, messages };
    let p = design.params.p();
    let cells = design
        .cell_keys()
        .into_iter()
        .map(|key| {
            let mut b_phi = Vec::with_capacity(p);
            let mut rmse_phi = Vec::with_capacity(p);
            for j in 0..p {
                let xs: Vec<f64> = ok.iter().filter_map(|r| r.estimate(key)).map(|(phi, _)| phi[j]).collect();
                let (b, rm) = bias_rmse(&xs, design.params.phi[j]);
                b_phi.push(b);
                rmse_phi.push(rm);
            }
            let s2: Vec<f64> = ok.iter().filter_map(|r| r.estimate(key)).map(|(_, s)| s).collect();
            let (b_sigma2, rmse_sigma2) = bias_rmse(&s2, design.params.sigma_eps2);
            McCell {
                label: design.label.clone(),
                n,
                procedure: key.procedure,
                alpha_steps: key.alpha_steps,
                bias_corrected: key.bias_corrected,
                b_phi,
                rmse_phi,
                b_sigma2,
                rmse_sigma2,
                replications: ok.len(),
            }
        })
        .collect();
    let g = CumulativeVolatility::on_grid(&design.params.sigma, design.grid());
    let g_sq: Vec<f64> = g.g().iter().map(|v| v * v).collect();
    let g_sq_integral = trapezoid_integral(&g_sq, design.grid().delta::<f64>());
    let errs: Vec<f64> = ok.iter().map(|r| r.g_err_integral).collect();
    let ises: Vec<f64> = ok.iter().map(|r| r.g_ise).collect();
    let (f_b, f_rmse, f_re) = functional_metrics(&errs, &ises, g_sq_integral);
    let functional = FunctionalCell { label: design.label.clone(), n, f_b, f_rmse, f_re, replications: ok.len() };
    (cells, functional, failure)
}

/// Runs every sample size of the design.
pub fn run_mc(design: &McDesign) -> Result<McSummary> {
    run_mc_with(design, &|_, _| {})
}

/// As [`run_mc`], calling `progress(n, replication)` after each finished replication.
pub fn run_mc_with(design: &McDesign, progress: &(dyn Fn(usize, usize) + Sync)) -> Result<McSummary> {
    design.validate()?;
    let mut summary =
        McSummary { design: design.clone(), cells: Vec::new(), functional: Vec::new(), failures: Vec::new() };
    for &n in &design.n_list {
        let reps = run_replications_with(design, n, &|r| progress(n, r))?;
        let (cells, functional, failure) = summarize(design, n, &reps);
        if failure.failed == reps.len() {
            return Err(Error::Data(format!(
                "all {} replications failed at N = {n}: {}",
                reps.len(),
                failure.messages.join("; ")
            )));
        }
        summary.cells.extend(cells);
        summary.functional.push(functional);
        summary.failures.push(failure);
    }
    Ok(summary)
}

fn fmt_opt(a: Option<usize>) -> String {
    a.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per cell and AR coefficient:
/// `label,N,procedure,alpha_steps,bias_corrected,coef,B_phi,RMSE_phi,B_sigma2,RMSE_sigma2,R`.
pub fn write_cells_csv<W: Write>(summaries: &[McSummary], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "label",
        "N",
        "procedure",
        "alpha_steps",
        "bias_corrected",
        "coef",
        "B_phi",
        "RMSE_phi",
        "B_sigma2",
        "RMSE_sigma2",
        "R",
    ])?;
    for s in summaries {
        for c in &s.cells {
            for j in 0..c.b_phi.len() {
                wtr.write_record([
                    c.label.clone(),
                    c.n.to_string(),
                    c.procedure.to_string(),
                    fmt_opt(c.alpha_steps),
                    c.bias_corrected.to_string(),
                    (j + 1).to_string(),
                    c.b_phi[j].to_string(),
                    c.rmse_phi[j].to_string(),
                    c.b_sigma2.to_string(),
                    c.rmse_sigma2.to_string(),
                    c.replications.to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `label,N,fB,fRMSE,fRE,R`.
pub fn write_functional_csv<W: Write>(summaries: &[McSummary], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["label", "N", "fB", "fRMSE", "fRE", "R"])?;
    for s in summaries {
        for c in &s.functional {
            wtr.write_record([
                c.label.clone(),
                c.n.to_string(),
                c.f_b.to_string(),
                c.f_rmse.to_string(),
                c.f_re.to_string(),
                c.replications.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigma::SigmaShape;

    fn design(r: usize) -> McDesign {
        let params = ModelParams::ar1(SigmaShape::Flat.spec(), 0.55, 0.25).unwrap();
        let mut d = McDesign::new("flat", params, vec![60], 12, r);
        d.alpha_list = vec![1, 3];
        d.bias_corrected = true;
        d.base_seed = 17;
        d.burn_in = 50;
        d
    }

    #[test]
    fn hand_metrics() {
        let (b, rmse) = bias_rmse(&[0.5, 0.6], 0.55);
        assert!(b.abs() < 1e-15);
        assert!((rmse - 0.05).abs() < 1e-15);
        assert_eq!(bias_rmse(&[0.55, 0.55], 0.55), (0.0, 0.0));
        let (fb, frmse, fre) = functional_metrics(&[0.0], &[0.0], 1.0);
        assert_eq!((fb, frmse, fre), (0.0, 0.0, 0.0));
    }

    #[test]
    fn fre_of_scaled_g_is_ten_percent() {
        let g: Vec<f64> = (0..=10).map(|k| 0.04 * k as f64 / 10.0).collect();
        let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
        let diff_sq: Vec<f64> = g.iter().map(|v| (0.1 * v) * (0.1 * v)).collect();
        let ise = trapezoid_integral(&diff_sq, 0.1);
        let (_, _, fre) = functional_metrics(&[0.0, 0.0], &[ise, ise], trapezoid_integral(&sq, 0.1));
        assert!((fre - 0.1).abs() < 1e-14);
    }

    #[test]
    fn rmse_decomposes() {
        let xs = [0.41, 0.52, 0.6, 0.47, 0.58];
        let (b, rmse) = bias_rmse(&xs, 0.55);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 5.0;
        assert!((rmse * rmse - (b * b + var)).abs() < 1e-15);
        assert!(rmse >= b.abs());
    }

    #[test]
    fn single_replication_bias_is_its_error() {
        let d = design(1);
        let s = run_mc(&d).unwrap();
        let reps = run_replications(&d, 60).unwrap();
        let rep = reps[0].as_ref().unwrap();
        for c in &s.cells {
            let key = CellKey { procedure: c.procedure, alpha_steps: c.alpha_steps, bias_corrected: c.bias_corrected };
            let (phi, s2) = rep.estimate(key).unwrap();
            assert_eq!(c.b_phi[0], phi[0] - 0.55);
            assert!((c.rmse_phi[0] - c.b_phi[0].abs()).abs() < 1e-15);
            assert_eq!(c.b_sigma2, s2 - 0.25);
        }
    }

    #[test]
    fn cells_cover_design() {
        let s = run_mc(&design(4)).unwrap();
        // A once, B and C at two alphas, each with a corrected twin
        assert_eq!(s.cells.len(), 2 * (1 + 2 + 2));
        assert!(s.cell(60, Procedure::B, Some(3), true).is_some());
        assert!(s.cell(60, Procedure::A, None, false).is_some());
        assert!(!s.flagged());
        let f = s.functional(60).unwrap();
        assert!(f.f_re > 0.0 && f.f_rmse >= f.f_b.abs());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let d = design(12);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_mc(&d).unwrap());
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_mc(&d).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn validation() {
        let mut d = design(0);
        assert!(d.validate().is_err());
        d.r = 1;
        d.alpha_list = vec![12];
        assert!(d.validate().is_err());
        d.alpha_list = vec![1];
        d.n_list = vec![1];
        assert!(d.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let s = run_mc(&design(2)).unwrap();
        let mut buf = Vec::new();
        write_cells_csv(std::slice::from_ref(&s), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("label,N,procedure,alpha_steps,bias_corrected,coef,B_phi"));
        assert_eq!(text.lines().count(), 1 + s.cells.len());
        let mut buf = Vec::new();
        write_functional_csv(&[s], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
