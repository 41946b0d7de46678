use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::NaiveDate;
use clap::Args;
use fsvol_core::asymptotics::{ar_autocovariances, asymptotic_variance, avar_orderp, KappaOptions};
use fsvol_core::io::{read_panel, write_json, write_panel, SimulationSidecar};
use fsvol_core::mc::{run_mc_with, write_cells_csv, write_functional_csv};
use fsvol_core::model::check_causal;
use fsvol_core::qv::write_h_g_csv;
use fsvol_core::sigma::SigmaSpec;
use fsvol_core::{
    bias_correct, clean, compute_cidr, estimate_h, gamma_curves, realized_qv, run_procedure, simulate_panel, Alpha,
    BartlettInput, CleaningPolicy, Error, EstimateReport, Innovation, McDesign, ModelParams, Procedure,
    RawIntradayTable, Result, TimeGrid,
};
use serde::Deserialize;
use serde_json::json;

use crate::config::overlay;

const DEFAULT_M: usize = 78;
const DEFAULT_BURN_IN: usize = 500;

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Validation(format!("missing required --{flag} (flag or config key)")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `panel.bin` + `truth.json` -> `panel.truth.json`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_json_to(value: &impl serde::Serialize, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_json(value, create(p)?),
        None => write_json(value, std::io::stdout().lock()),
    }
}

fn model_params(sigma: &str, phi: Vec<f64>, sigma_eps2: f64, innovation: Option<&str>) -> Result<ModelParams> {
    let sigma: SigmaSpec<f64> = sigma.parse()?;
    let innovation: Innovation<f64> = innovation.unwrap_or("gaussian").parse()?;
    ModelParams::new(sigma, phi, sigma_eps2, innovation)
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Volatility shape: flat[:c], slope[:a,b], sine[:a,b], ushape[:c] or tabulated:<file.csv>
    #[arg(long)]
    pub sigma: Option<String>,
    /// AR coefficients of log g, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub phi: Option<Vec<f64>>,
    /// Innovation variance of log g
    #[arg(long)]
    pub sigma_eps2: Option<f64>,
    /// Innovation law: gaussian or t:<df>
    #[arg(long)]
    pub innovation: Option<String>,
    /// Number of curves
    #[arg(long)]
    pub n: Option<usize>,
    /// Intraday grid steps [default: 78]
    #[arg(long)]
    pub m: Option<usize>,
    /// Discarded AR warm-up length [default: 500]
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Panel file; `.bin` selects the binary format, anything else CSV
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// True-parameter JSON [default: <output stem>.truth.json]
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}
overlay!(SimulateArgs { sigma, phi, sigma_eps2, innovation, n, m, burn_in, seed, output, sidecar });

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let params = model_params(
        a.sigma.as_deref().unwrap_or("flat"),
        required(a.phi, "phi")?,
        required(a.sigma_eps2, "sigma-eps2")?,
        a.innovation.as_deref(),
    )?;
    let n = required(a.n, "n")?;
    if n == 0 {
        return Err(Error::Validation("--n must be at least 1".into()));
    }
    let grid = TimeGrid::new(a.m.unwrap_or(DEFAULT_M))?;
    let output = required(a.output, "output")?;
    let burn_in = a.burn_in.unwrap_or(DEFAULT_BURN_IN);
    let seed = a.seed.unwrap_or(0);

    let (panel, latent) = simulate_panel(&params, n, grid, burn_in, seed)?;
    write_panel(&output, &panel)?;
    let sidecar = SimulationSidecar { params, n, m: grid.m(), burn_in, seed, log_g: latent.log_g };
    let sidecar_path = a.sidecar.unwrap_or_else(|| sibling(&output, "truth.json"));
    write_json(&sidecar, create(&sidecar_path)?)
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    /// Panel file (CSV or `.bin`)
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Procedures, comma separated [default: A,B,C]
    #[arg(long = "proc", value_delimiter = ',')]
    #[serde(rename = "proc")]
    pub procedures: Option<Vec<Procedure>>,
    /// AR order [default: 1]
    #[arg(long)]
    pub p: Option<usize>,
    /// Truncation points in grid steps, comma separated [default: 1]
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<usize>>,
    /// Add small-sample bias-corrected variants (AR(1) only)
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    pub bias_correct: Option<bool>,
    /// Attach plug-in asymptotic standard errors
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    pub stderr: Option<bool>,
    /// Innovation kurtosis ratio used for standard errors [default: 3]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Report JSON [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Hhat/Ghat CSV [default: <output stem>.ghat.csv when --output is given]
    #[arg(long)]
    pub ghat: Option<PathBuf>,
}
overlay!(EstimateArgs { input, procedures, p, alpha, bias_correct, stderr, eta, output, ghat });

fn attach_stderr(report: &mut EstimateReport, eta: f64) -> Result<()> {
    let kappas = ar_autocovariances(&report.phi, report.sigma_eps2, KappaOptions::default())?;
    let input = BartlettInput::new(kappas, eta, report.p)?;
    report.stderr = Some(asymptotic_variance(&input, report.procedure)?.standard_errors(report.n));
    Ok(())
}

pub fn estimate(a: EstimateArgs) -> Result<()> {
    let input = required(a.input, "input")?;
    let procedures = a.procedures.unwrap_or_else(|| Procedure::ALL.to_vec());
    let p = a.p.unwrap_or(1);
    let mut alphas = a.alpha.unwrap_or_else(|| vec![1]);
    alphas.sort_unstable();
    alphas.dedup();
    let bc = a.bias_correct.unwrap_or(false);
    let eta = a.eta.unwrap_or(3.0);
    if p == 0 {
        return Err(Error::Validation("--p must be at least 1".into()));
    }
    if procedures.is_empty() || alphas.is_empty() {
        return Err(Error::Validation("--proc and --alpha need at least one value".into()));
    }
    if alphas[0] == 0 {
        return Err(Error::Validation("--alpha is in grid steps and must be at least 1".into()));
    }
    if bc && p != 1 {
        return Err(Error::UnsupportedOrder {
            p,
            reason: "the small-sample bias correction is only available for AR(1)".into(),
        });
    }
    if !(eta >= 1.0) {
        return Err(Error::Validation(format!("--eta must be >= 1, got {eta}")));
    }

    let panel = read_panel(&input)?;
    let grid = panel.grid();
    for &s in &alphas {
        Alpha::steps(s).index_on(&grid)?;
    }
    let qv = realized_qv(&panel);
    let alpha_min = Alpha::steps(alphas[0]);
    let gammas = gamma_curves(&qv, p, alpha_min)?;

    let ghat_path = a.ghat.or_else(|| a.output.as_deref().map(|o| sibling(o, "ghat.csv")));
    let ghat_ref = ghat_path.as_ref().map(|p| p.display().to_string());
    let mut reports = Vec::new();
    for &proc in &procedures {
        let list: Vec<usize> = if proc == Procedure::A { vec![alphas[0]] } else { alphas.clone() };
        for s in list {
            let mut report = run_procedure(&gammas, proc, Alpha::steps(s))?;
            report.ghat_ref = ghat_ref.clone();
            let mut corrected = if bc { Some(bias_correct(&report, &gammas)?) } else { None };
            if a.stderr.unwrap_or(false) {
                attach_stderr(&mut report, eta)?;
                if let Some(c) = corrected.as_mut() {
                    attach_stderr(c, eta)?;
                }
            }
            reports.push(report);
            reports.extend(corrected);
        }
    }

    if let Some(path) = &ghat_path {
        let h = estimate_h(&qv, alpha_min)?;
        write_h_g_csv(&h, create(path)?)?;
    }
    write_json_to(&reports, a.output.as_deref())
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McArgs {
    /// Volatility shapes, comma separated (same syntax as simulate --sigma) [default: flat]
    #[arg(long, value_delimiter = ',')]
    pub shapes: Option<Vec<String>>,
    /// AR coefficients [default: 0.55]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub phi: Option<Vec<f64>>,
    /// Innovation variance [default: 0.25]
    #[arg(long)]
    pub sigma_eps2: Option<f64>,
    /// Innovation law: gaussian or t:<df>
    #[arg(long)]
    pub innovation: Option<String>,
    /// Sample sizes [default: 100,500,1000,2000]
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Intraday grid steps [default: 78]
    #[arg(long)]
    pub m: Option<usize>,
    /// Replications per sample size [default: 500]
    #[arg(long)]
    pub r: Option<usize>,
    /// Truncation points in grid steps [default: 1]
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<usize>>,
    /// Procedures [default: A,B,C]
    #[arg(long = "proc", value_delimiter = ',')]
    #[serde(rename = "proc")]
    pub procedures: Option<Vec<Procedure>>,
    /// Also tabulate bias-corrected estimates (AR(1) only)
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    pub bias_correct: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 500]
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Directory for mc_cells.csv, mc_functional.csv and mc_summary.json [default: .]
    #[arg(short, long)]
    pub output_dir: Option<PathBuf>,
    /// No progress lines on stderr
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    pub quiet: Option<bool>,
}
overlay!(McArgs {
    shapes,
    phi,
    sigma_eps2,
    innovation,
    n,
    m,
    r,
    alpha,
    procedures,
    bias_correct,
    seed,
    burn_in,
    output_dir,
    quiet
});

pub fn mc(a: McArgs) -> Result<()> {
    let shapes = a.shapes.unwrap_or_else(|| vec!["flat".into()]);
    let phi = a.phi.unwrap_or_else(|| vec![0.55]);
    let sigma_eps2 = a.sigma_eps2.unwrap_or(0.25);
    let seed = a.seed.unwrap_or(0);
    let quiet = a.quiet.unwrap_or(false);
    let mut designs = Vec::new();
    for (idx, shape) in shapes.iter().enumerate() {
        let params = model_params(shape, phi.clone(), sigma_eps2, a.innovation.as_deref())?;
        let mut d = McDesign::new(
            shape.as_str(),
            params,
            a.n.clone().unwrap_or_else(|| vec![100, 500, 1000, 2000]),
            a.m.unwrap_or(DEFAULT_M),
            a.r.unwrap_or(500),
        );
        d.alpha_list = a.alpha.clone().unwrap_or_else(|| vec![1]);
        if let Some(p) = &a.procedures {
            d.procedures = p.clone();
        }
        d.bias_corrected = a.bias_correct.unwrap_or(false);
        d.base_seed = fsvol_core::Seed(seed).child(idx as u64).0;
        d.burn_in = a.burn_in.unwrap_or(DEFAULT_BURN_IN);
        d.validate()?;
        designs.push(d);
    }
    let dir = a.output_dir.unwrap_or_else(|| PathBuf::from("."));

    let mut summaries = Vec::new();
    for d in &designs {
        let step = (d.r / 10).max(1);
        let done = Mutex::new((0usize, 0usize));
        let progress = |n: usize, _r: usize| {
            if quiet {
                return;
            }
            let mut g = done.lock().unwrap();
            if g.0 != n {
                *g = (n, 0);
            }
            g.1 += 1;
            if g.1.is_multiple_of(step) || g.1 == d.r {
                eprintln!("[{}] N={n}: {}/{} replications", d.label, g.1, d.r);
            }
        };
        let s = run_mc_with(d, &progress)?;
        for f in &s.failures {
            if f.failed > 0 {
                eprintln!(
                    "[{}] N={}: {} replications failed{}",
                    d.label,
                    f.n,
                    f.failed,
                    if f.flagged { " (above the 1% flag rate)" } else { "" }
                );
            }
        }
        summaries.push(s);
    }
    write_cells_csv(&summaries, create(&dir.join("mc_cells.csv"))?)?;
    write_functional_csv(&summaries, create(&dir.join("mc_functional.csv"))?)?;
    write_json(&summaries, create(&dir.join("mc_summary.json"))?)
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestArgs {
    /// Raw intraday CSV: security_id,date,k,price[,low,high,adjust_factor,holiday_flag]
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// CIDR panel file (CSV or `.bin`)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Cleaning report JSON [default: <output stem>.report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// [default: 0.05]
    #[arg(long)]
    pub max_missing_rate: Option<f64>,
    /// Lower band multiplier on the daily low [default: 0.98]
    #[arg(long)]
    pub band_low: Option<f64>,
    /// Upper band multiplier on the daily high [default: 1.02]
    #[arg(long)]
    pub band_high: Option<f64>,
    /// [default: 0.05]
    #[arg(long)]
    pub max_band_violation_rate: Option<f64>,
    /// [default: 252]
    #[arg(long)]
    pub min_trading_days: Option<usize>,
    /// Extra holiday dates (YYYY-MM-DD), comma separated
    #[arg(long, value_delimiter = ',')]
    pub holidays: Option<Vec<String>>,
}
overlay!(IngestArgs {
    input,
    output,
    report,
    max_missing_rate,
    band_low,
    band_high,
    max_band_violation_rate,
    min_trading_days,
    holidays
});

fn policy(a: &IngestArgs) -> Result<CleaningPolicy> {
    let d = CleaningPolicy::default();
    let holiday_dates = a
        .holidays
        .iter()
        .flatten()
        .map(|s| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                .map_err(|e| Error::Validation(format!("bad holiday date '{s}': {e}")))
        })
        .collect::<Result<_>>()?;
    let p = CleaningPolicy {
        max_missing_rate: a.max_missing_rate.unwrap_or(d.max_missing_rate),
        band_low: a.band_low.unwrap_or(d.band_low),
        band_high: a.band_high.unwrap_or(d.band_high),
        max_band_violation_rate: a.max_band_violation_rate.unwrap_or(d.max_band_violation_rate),
        min_trading_days: a.min_trading_days.unwrap_or(d.min_trading_days),
        holiday_dates,
    };
    let rate_ok = |x: f64| (0.0..=1.0).contains(&x);
    if !rate_ok(p.max_missing_rate) || !rate_ok(p.max_band_violation_rate) {
        return Err(Error::Validation("rates must lie in [0, 1]".into()));
    }
    if !(p.band_low > 0.0 && p.band_low <= 1.0 && p.band_high >= 1.0 && p.band_high.is_finite()) {
        return Err(Error::Validation("band multipliers need 0 < low <= 1 <= high".into()));
    }
    Ok(p)
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let policy = policy(&a)?;
    let input = required(a.input, "input")?;
    let output = required(a.output, "output")?;
    let raw = RawIntradayTable::from_csv_path(&input)?;
    let (cleaned, report) = clean(&raw, &policy);
    let panel = compute_cidr(&cleaned)?;
    write_panel(&output, &panel)?;
    let report_path = a.report.unwrap_or_else(|| sibling(&output, "report.json"));
    write_json(&report, create(&report_path)?)?;
    eprintln!(
        "{} of {} security-days retained, {} securities dropped, {} values imputed",
        report.retained_days,
        report.input_days,
        report.securities_dropped.len(),
        report.values_imputed
    );
    Ok(())
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvarArgs {
    /// AR coefficients, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub phi: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma_eps2: Option<f64>,
    /// Kurtosis ratio E eps^4 / sigma_eps^4 [default: 3]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Procedures [default: A,B,C]
    #[arg(long = "proc", value_delimiter = ',')]
    #[serde(rename = "proc")]
    pub procedures: Option<Vec<Procedure>>,
    /// AR order; must match the number of coefficients when given
    #[arg(long)]
    pub p: Option<usize>,
    /// Autocovariance truncation cap [default: 10000]
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Autocovariance truncation threshold relative to kappa_0 [default: 1e-12]
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// JSON output [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}
overlay!(AvarArgs { phi, sigma_eps2, eta, procedures, p, max_lag, rel_tol, output });

pub fn avar(a: AvarArgs) -> Result<()> {
    let phi = required(a.phi, "phi")?;
    let sigma_eps2 = required(a.sigma_eps2, "sigma-eps2")?;
    let eta = a.eta.unwrap_or(3.0);
    if let Some(p) = a.p {
        if p != phi.len() {
            return Err(Error::Validation(format!("--p {p} but {} coefficients given", phi.len())));
        }
    }
    check_causal(&phi)?;
    if !(eta >= 1.0) {
        return Err(Error::Validation(format!("--eta must be >= 1, got {eta}")));
    }
    let d = KappaOptions::default();
    let opts = KappaOptions { max_lag: a.max_lag.unwrap_or(d.max_lag), rel_tol: a.rel_tol.unwrap_or(d.rel_tol) };
    let kappas = ar_autocovariances(&phi, sigma_eps2, opts)?;
    let p = phi.len();
    let input = BartlettInput::new(kappas.clone(), eta, p)?;

    let mut results = Vec::new();
    for proc in a.procedures.unwrap_or_else(|| Procedure::ALL.to_vec()) {
        let v = asymptotic_variance(&input, proc)?;
        let (cov_key, s2_key) = if proc == Procedure::C { ("pi", "rho") } else { ("nu", "tau") };
        let mut entry = json!({ "procedure": proc, cov_key: v.phi, s2_key: v.sigma_eps2 });
        if p == 1 {
            let fd = avar_orderp(&input, proc)?;
            entry["order_p"] = json!({ cov_key: fd.phi, s2_key: fd.sigma_eps2 });
        }
        results.push(entry);
    }
    let out = json!({
        "p": p,
        "phi": phi,
        "sigma_eps2": sigma_eps2,
        "eta": eta,
        "kappa": (0..=p).map(|h| kappas.get(h as i64)).collect::<Vec<_>>(),
        "h_max": kappas.h_max,
        "truncated_at_cap": kappas.truncated_at_cap,
        "results": results,
    });
    write_json_to(&out, a.output.as_deref())?;
    if kappas.truncated_at_cap {
        eprintln!("warning: autocovariances truncated at max_lag = {}", opts.max_lag);
    }
    Ok(())
}
