use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sigma::SigmaSpec;

/// Distribution of the log-volatility innovations `ε_i`, always scaled to mean 0 and
/// variance `σ_ε²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Innovation<T> {
    #[default]
    Gaussian,
    /// Student-t rescaled to unit variance; `df > 8` keeps eight moments finite.
    StudentT { df: T },
}

impl<T: Scalar> Innovation<T> {
    pub fn validate(&self) -> Result<()> {
        if let Innovation::StudentT { df } = *self {
            if !(df > T::lit(8.0)) || !df.is_finite() {
                return Err(Error::Validation(format!(
                    "Student-t innovations need df > 8 (finite eighth moment), got {df}"
                )));
            }
        }
        Ok(())
    }

    /// Kurtosis ratio `η = E ε⁴ / σ_ε⁴`.
    pub fn eta(&self) -> T {
        match *self {
            Innovation::Gaussian => T::lit(3.0),
            Innovation::StudentT { df } => T::lit(3.0) + T::lit(6.0) / (df - T::lit(4.0)),
        }
    }
}

impl<T: Scalar> fmt::Display for Innovation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Innovation::Gaussian => f.write_str("gaussian"),
            Innovation::StudentT { df } => write!(f, "t:{df}"),
        }
    }
}

/// `gaussian` or `t:<df>`.
impl<T: Scalar> FromStr for Innovation<T> {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let inn = match s.split_once(':') {
            None if s == "gaussian" || s == "normal" => Innovation::Gaussian,
            Some(("t", df)) => {
                let df: f64 = df.trim().parse().map_err(|_| Error::Validation(format!("bad Student-t df '{df}'")))?;
                Innovation::StudentT { df: T::lit(df) }
            }
            _ => return Err(Error::Validation(format!("unknown innovation law '{s}'"))),
        };
        inn.validate()?;
        Ok(inn)
    }
}

/// Data-generating process: volatility shape, latent AR(p) coefficients, innovation variance
/// and law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub sigma: SigmaSpec<T>,
    pub phi: Vec<T>,
    pub sigma_eps2: T,
    #[serde(default)]
    pub innovation: Innovation<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(sigma: SigmaSpec<T>, phi: Vec<T>, sigma_eps2: T, innovation: Innovation<T>) -> Result<Self> {
        let p = Self { sigma, phi, sigma_eps2, innovation };
        p.validate()?;
        Ok(p)
    }

    pub fn ar1(sigma: SigmaSpec<T>, phi: T, sigma_eps2: T) -> Result<Self> {
        Self::new(sigma, vec![phi], sigma_eps2, Innovation::Gaussian)
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma.validate()?;
        check_causal(&self.phi)?;
        if !(self.sigma_eps2 > T::zero()) || !self.sigma_eps2.is_finite() {
            return Err(Error::Validation(format!(
                "innovation variance must be positive and finite, got {}",
                self.sigma_eps2
            )));
        }
        self.innovation.validate()
    }
}

/// Partial autocorrelations of the AR polynomial `1 - φ_1 z - … - φ_p z^p` by the step-down
/// (Schur–Cohn) recursion. The polynomial has no zero in the closed unit disk iff every
/// returned value has modulus `< 1`. Returns `None` as soon as a modulus `>= 1` appears.
pub fn reflection_coefficients<T: Scalar>(phi: &[T]) -> Option<Vec<T>> {
    let mut a = phi.to_vec();
    let mut out = vec![T::zero(); phi.len()];
    for order in (1..=phi.len()).rev() {
        let k = a[order - 1];
        if !(k.abs() < T::one()) {
            return None;
        }
        out[order - 1] = k;
        let denom = T::one() - k * k;
        let prev: Vec<T> = (0..order - 1).map(|j| (a[j] + k * a[order - 2 - j]) / denom).collect();
        a = prev;
    }
    Some(out)
}

/// Causality: `1 - φ_1 z - … - φ_p z^p ≠ 0` for `|z| <= 1` and `φ_p ≠ 0`.
pub fn check_causal<T: Scalar>(phi: &[T]) -> Result<()> {
    if phi.is_empty() {
        return Err(Error::Validation("AR order p must be at least 1".into()));
    }
    if phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("AR coefficients must be finite".into()));
    }
    if *phi.last().unwrap() == T::zero() {
        return Err(Error::Validation(format!("leading AR coefficient phi_{} must be nonzero", phi.len())));
    }
    if reflection_coefficients(phi).is_none() {
        let coeffs: Vec<String> = phi.iter().map(|x| x.to_string()).collect();
        return Err(Error::Validation(format!(
            "phi = ({}) is not causal: 1 - phi_1 z - ... - phi_p z^p must have no zeros in the closed unit disk |z| <= 1",
            coeffs.join(", ")
        )));
    }
    Ok(())
}
