//! Deterministic intraday volatility functions and their cumulative transforms
//! `G(t) = ∫_0^t σ²(u) du`, `H(t) = log G(t)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::Scalar;

/// Constant of the U-shaped volatility used in the simulation study.
pub const USHAPE_LEVEL: f64 = 0.1145299;

/// Node count of the trapezoid fallback for `G`.
pub const DEFAULT_QUADRATURE_NODES: usize = 10_000;

/// Volatility function `σ(u)` on `[0, 1]`.
///
/// Built-in shapes:
/// - `Flat(c)`: `σ(u) = c`
/// - `Slope { a, b }`: `σ(u) = a + b u`
/// - `Sine { a, b }`: `σ(u) = a sin(2πu) + b`
/// - `UShape(c)`: `σ(u) = (u - 1/2)² + c`
///
/// `Tabulated` is a left-continuous step function, see [`Tabulated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSpec<T> {
    Flat {
        c: T,
    },
    Slope {
        a: T,
        b: T,
    },
    Sine {
        a: T,
        b: T,
    },
    #[serde(rename = "ushape")]
    UShape {
        c: T,
    },
    Tabulated(Tabulated<T>),
}

/// Step-function volatility. Row `j` holds `σ(u) = values[j]` for `u ∈ (knots[j-1], knots[j]]`
/// with `knots[-1] = 0`; `σ(0) = values[0]`. `knots` is strictly increasing and ends at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated<T> {
    knots: Vec<T>,
    values: Vec<T>,
}

/// The four volatility shapes of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaShape {
    Flat,
    Slope,
    Sine,
    UShape,
}

impl SigmaShape {
    pub const ALL: [SigmaShape; 4] = [SigmaShape::Flat, SigmaShape::Slope, SigmaShape::Sine, SigmaShape::UShape];

    pub fn spec<T: Scalar>(self) -> SigmaSpec<T> {
        let l = T::lit;
        match self {
            SigmaShape::Flat => SigmaSpec::Flat { c: l(0.2) },
            SigmaShape::Slope => SigmaSpec::Slope { a: l(0.1), b: l(0.2) },
            SigmaShape::Sine => SigmaSpec::Sine { a: l(0.1), b: l(0.2) },
            SigmaShape::UShape => SigmaSpec::UShape { c: l(USHAPE_LEVEL) },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaShape::Flat => "flat",
            SigmaShape::Slope => "slope",
            SigmaShape::Sine => "sine",
            SigmaShape::UShape => "ushape",
        }
    }
}

impl fmt::Display for SigmaShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SigmaShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "flat" => Ok(SigmaShape::Flat),
            "slope" => Ok(SigmaShape::Slope),
            "sine" => Ok(SigmaShape::Sine),
            "ushape" => Ok(SigmaShape::UShape),
            other => Err(Error::Validation(format!("unknown sigma shape '{other}'"))),
        }
    }
}

fn check_domain<T: Scalar>(u: T, what: &str) -> Result<()> {
    if !(u >= T::zero() && u <= T::one()) {
        return Err(Error::Domain(format!("{what} = {u} is outside [0, 1]")));
    }
    Ok(())
}

impl<T: Scalar> Tabulated<T> {
    pub fn new(knots: Vec<T>, values: Vec<T>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::Validation(format!(
                "tabulated sigma needs matching non-empty knots/values, got {} and {}",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] < T::zero() || *knots.last().unwrap() != T::one() {
            return Err(Error::Validation("tabulated sigma knots must lie in [0, 1] and end at u = 1".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("tabulated sigma knots must be strictly increasing".into()));
        }
        let mut left = T::zero();
        for (j, (&u, &v)) in knots.iter().zip(&values).enumerate() {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::Validation(format!("sigma value {v} at row {j} must be finite and >= 0")));
            }
            // a zero on a cell of positive width puts positive measure on {σ = 0}
            if u > left && v == T::zero() {
                return Err(Error::Validation(format!(
                    "sigma vanishes on the cell ({left}, {u}]; sigma must be positive almost everywhere"
                )));
            }
            left = u;
        }
        Ok(Self { knots, values })
    }

    /// Equal-width cells, `values[j]` on `(j/n, (j+1)/n]`.
    pub fn uniform(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        let knots =
            (1..=n).map(|j| if j == n { T::one() } else { T::from_usize_lossy(j) / T::from_usize_lossy(n) }).collect();
        Self::new(knots, values)
    }

    /// Reads a two-column `u,sigma` CSV (header optional).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path.as_ref())?;
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Data(format!("line {}: expected 2 columns (u, sigma)", line + 1)));
            }
            let (u, s) = match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(u), Ok(s)) => (u, s),
                _ if line == 0 => continue,
                _ => return Err(Error::Data(format!("line {}: unparsable row", line + 1))),
            };
            knots.push(T::lit(u));
            values.push(T::lit(s));
        }
        Self::new(knots, values)
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn eval(&self, u: T) -> T {
        let j = self.knots.partition_point(|&k| k < u);
        self.values[j.min(self.values.len() - 1)]
    }

    fn cumulative(&self, t: T) -> T {
        let mut acc = T::zero();
        let mut left = T::zero();
        for (&u, &v) in self.knots.iter().zip(&self.values) {
            if t <= left {
                break;
            }
            let right = if u < t { u } else { t };
            acc += v * v * (right - left);
            left = u;
        }
        acc
    }
}

impl<T: Scalar> SigmaSpec<T> {
    /// Checks nonnegativity and that `σ` is not zero on a set of positive measure.
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        let bad = |msg: String| Err(Error::Validation(msg));
        match *self {
            SigmaSpec::Flat { c } => {
                if !(c > z && c.is_finite()) {
                    return bad(format!("flat sigma needs c > 0, got {c}"));
                }
            }
            SigmaSpec::Slope { a, b } => {
                if !(a.is_finite() && b.is_finite()) || a < z || a + b < z || (a == z && b == z) {
                    return bad(format!(
                        "slope sigma a + b·u must be >= 0 on [0,1] and not identically 0, got a = {a}, b = {b}"
                    ));
                }
            }
            SigmaSpec::Sine { a, b } => {
                if !(a.is_finite() && b.is_finite()) || b < a.abs() || b == z {
                    return bad(format!("sine sigma a·sin(2πu) + b needs b >= |a| and b > 0, got a = {a}, b = {b}"));
                }
            }
            SigmaSpec::UShape { c } => {
                if !(c >= z && c.is_finite()) {
                    return bad(format!("U-shape sigma needs c >= 0, got {c}"));
                }
            }
            SigmaSpec::Tabulated(ref t) => {
                Tabulated::new(t.knots.clone(), t.values.clone())?;
            }
        }
        Ok(())
    }

    /// `σ(u)` for `u ∈ [0, 1]`.
    pub fn eval(&self, u: T) -> Result<T> {
        check_domain(u, "u")?;
        Ok(self.eval_unchecked(u))
    }

    fn eval_unchecked(&self, u: T) -> T {
        let half = T::lit(0.5);
        match *self {
            SigmaSpec::Flat { c } => c,
            SigmaSpec::Slope { a, b } => a + b * u,
            SigmaSpec::Sine { a, b } => a * (T::TAU() * u).sin() + b,
            SigmaSpec::UShape { c } => (u - half) * (u - half) + c,
            SigmaSpec::Tabulated(ref tab) => tab.eval(u),
        }
    }

    /// `G(t) = ∫_0^t σ²(u) du` in closed form.
    pub fn cumulative_g(&self, t: T) -> Result<T> {
        check_domain(t, "t")?;
        Ok(self.cumulative_g_unchecked(t))
    }

    fn cumulative_g_unchecked(&self, t: T) -> T {
        let l = T::lit;
        let pi = T::PI();
        match *self {
            SigmaSpec::Flat { c } => c * c * t,
            SigmaSpec::Slope { a, b } => a * a * t + a * b * t * t + b * b * t * t * t / l(3.0),
            SigmaSpec::Sine { a, b } => {
                // a²∫sin² + 2ab∫sin + b² t
                let four_pi_t = l(4.0) * pi * t;
                let two_pi_t = l(2.0) * pi * t;
                a * a * (t / l(2.0) - four_pi_t.sin() / (l(8.0) * pi))
                    + a * b * (T::one() - two_pi_t.cos()) / pi
                    + b * b * t
            }
            SigmaSpec::UShape { c } => {
                let h = l(0.5);
                let s = t - h;
                let p5 = |x: T| x * x * x * x * x;
                let p3 = |x: T| x * x * x;
                (p5(s) + p5(h)) / l(5.0) + l(2.0) * c * (p3(s) + p3(h)) / l(3.0) + c * c * t
            }
            SigmaSpec::Tabulated(ref tab) => tab.cumulative(t),
        }
    }

    /// Trapezoid rule for `∫_0^t σ²` with `nodes` subintervals.
    pub fn cumulative_g_quadrature(&self, t: T, nodes: usize) -> Result<T> {
        check_domain(t, "t")?;
        let n = nodes.max(1);
        let h = t / T::from_usize_lossy(n);
        let f = |u: T| {
            let s = self.eval_unchecked(u);
            s * s
        };
        let mut acc = (f(T::zero()) + f(t)) * T::lit(0.5);
        for j in 1..n {
            acc += f(h * T::from_usize_lossy(j));
        }
        Ok(acc * h)
    }

    /// `H(t) = log G(t)`; errors where `G(t) = 0`.
    pub fn cumulative_h(&self, t: T) -> Result<T> {
        let g = self.cumulative_g(t)?;
        if g <= T::zero() {
            return Err(Error::Domain(format!(
                "H(t) undefined at t = {t}: G(t) = 0 (t below the effective support of sigma)"
            )));
        }
        Ok(g.ln())
    }
}

impl<T: Scalar> fmt::Display for SigmaSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSpec::Flat { c } => write!(f, "flat:{c}"),
            SigmaSpec::Slope { a, b } => write!(f, "slope:{a},{b}"),
            SigmaSpec::Sine { a, b } => write!(f, "sine:{a},{b}"),
            SigmaSpec::UShape { c } => write!(f, "ushape:{c}"),
            SigmaSpec::Tabulated(t) => write!(f, "tabulated[{} rows]", t.values.len()),
        }
    }
}

/// Parses `flat:0.2`, `slope:0.1,0.2`, `sine:0.1,0.2`, `ushape:0.1145299`, a bare shape name
/// (simulation-study defaults), or `tabulated:<path.csv>`.
impl<T: Scalar> FromStr for SigmaSpec<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        if name.eq_ignore_ascii_case("tabulated") {
            let path = args.ok_or_else(|| Error::Validation("tabulated sigma needs a CSV path".into()))?;
            return Ok(SigmaSpec::Tabulated(Tabulated::from_csv(path)?));
        }
        let shape: SigmaShape = name.parse()?;
        let Some(args) = args else {
            return Ok(shape.spec());
        };
        let nums = args
            .split(',')
            .map(|x| x.trim().parse::<f64>().map(T::lit))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| Error::Validation(format!("bad sigma parameters '{args}': {e}")))?;
        let spec = match (shape, nums.as_slice()) {
            (SigmaShape::Flat, &[c]) => SigmaSpec::Flat { c },
            (SigmaShape::Slope, &[a, b]) => SigmaSpec::Slope { a, b },
            (SigmaShape::Sine, &[a, b]) => SigmaSpec::Sine { a, b },
            (SigmaShape::UShape, &[c]) => SigmaSpec::UShape { c },
            _ => return Err(Error::Validation(format!("wrong number of parameters for {shape}: '{args}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `G` and `H` tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeVolatility<T> {
    pub grid: TimeGrid,
    g: Vec<T>,
}

impl<T: Scalar> CumulativeVolatility<T> {
    pub fn on_grid(spec: &SigmaSpec<T>, grid: TimeGrid) -> Self {
        let g = (0..=grid.m()).map(|k| spec.cumulative_g_unchecked(grid.point(k))).collect();
        Self { grid, g }
    }

    pub fn g(&self) -> &[T] {
        &self.g
    }

    /// `H(t_k)`, `None` where `G(t_k) = 0`.
    pub fn h(&self, k: usize) -> Option<T> {
        let g = self.g[k];
        (g > T::zero()).then(|| g.ln())
    }

    /// Cell variances `G(t_k) - G(t_{k-1})`, `k = 1..=m`.
    pub fn increments(&self) -> Vec<T> {
        self.g.windows(2).map(|w| (w[1] - w[0]).max(T::zero())).collect()
    }
}
