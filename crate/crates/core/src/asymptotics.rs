//! Theoretical autocovariances `κ_h` of `log g`, the Bartlett matrix `V`, and asymptotic
//! variances of the three procedures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{Procedure, StdErrors};
use crate::linalg::{solve, solve_spd, toeplitz, Matrix};
use crate::model::{reflection_coefficients, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaOptions {
    /// Hard cap on the truncation lag.
    pub max_lag: usize,
    /// Truncate once `p` consecutive `|κ_h|` fall below `rel_tol · κ_0`.
    pub rel_tol: f64,
}

impl Default for KappaOptions {
    fn default() -> Self {
        Self { max_lag: 10_000, rel_tol: 1e-12 }
    }
}

/// `κ_0..κ_{h_max}`; lags beyond `h_max` are treated as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSequence<T> {
    pub values: Vec<T>,
    pub h_max: usize,
    pub phi: Vec<T>,
    pub sigma_eps2: T,
    pub truncated_at_cap: bool,
}

impl<T: Scalar> KappaSequence<T> {
    /// `κ_h` for any signed lag.
    pub fn get(&self, h: i64) -> T {
        self.values.get(h.unsigned_abs() as usize).copied().unwrap_or_else(T::zero)
    }
}

/// Autocovariances of a causal AR(p) with coefficients `phi` (zeros allowed) and innovation
/// variance `sigma2`.
pub fn ar_autocovariances<T: Scalar>(phi: &[T], sigma2: T, opts: KappaOptions) -> Result<KappaSequence<T>> {
    let p = phi.len();
    if p == 0 || phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("AR coefficients must be a nonempty finite vector".into()));
    }
    if reflection_coefficients(phi).is_none() {
        return Err(Error::Validation(
            "AR polynomial 1 - phi_1 z - ... - phi_p z^p must have no zeros in the closed unit disk |z| <= 1".into(),
        ));
    }
    if !(sigma2 > T::zero()) {
        return Err(Error::Validation(format!("innovation variance must be positive, got {sigma2}")));
    }
    let tol = T::lit(opts.rel_tol);
    let mut values: Vec<T>;
    if p == 1 {
        let f = phi[0];
        let k0 = sigma2 / (T::one() - f * f);
        values = vec![k0];
        let mut cur = k0;
        while values.len() <= opts.max_lag && (values.len() < 2 || cur.abs() >= tol * k0) {
            cur *= f;
            values.push(cur);
        }
    } else {
        // κ_h − Σ_j φ_j κ_{|h−j|} = σ² δ_{h0}, h = 0..p
        let a = Matrix::from_fn(p + 1, p + 1, |h, l| {
            let mut v = if h == l { T::one() } else { T::zero() };
            for (j, &f) in phi.iter().enumerate() {
                if (h as i64 - (j as i64 + 1)).unsigned_abs() as usize == l {
                    v -= f;
                }
            }
            v
        });
        let mut rhs = vec![T::zero(); p + 1];
        rhs[0] = sigma2;
        values = solve(&a, &rhs)?;
        let k0 = values[0];
        loop {
            let h = values.len();
            let tail_small = values[h - p..].iter().all(|v| v.abs() < tol * k0);
            if h > opts.max_lag || tail_small {
                break;
            }
            let next = phi.iter().enumerate().map(|(j, &f)| f * values[h - 1 - j]).sum();
            values.push(next);
        }
    }
    let h_max = values.len() - 1;
    let truncated_at_cap = h_max > opts.max_lag || (h_max == opts.max_lag && values[h_max].abs() >= tol * values[0]);
    values.truncate(opts.max_lag.max(p) + 1);
    Ok(KappaSequence { h_max: values.len() - 1, values, phi: phi.to_vec(), sigma_eps2: sigma2, truncated_at_cap })
}

/// `κ_h` of `log g` under `params`.
pub fn theoretical_kappa<T: Scalar>(params: &ModelParams<T>, opts: KappaOptions) -> Result<KappaSequence<T>> {
    params.validate()?;
    ar_autocovariances(&params.phi, params.sigma_eps2, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BartlettInput<T> {
    pub kappas: KappaSequence<T>,
    /// `E ε⁴ / σ_ε⁴`.
    pub eta: T,
    pub p: usize,
}

impl<T: Scalar> BartlettInput<T> {
    pub fn new(kappas: KappaSequence<T>, eta: T, p: usize) -> Result<Self> {
        if !(eta >= T::one()) || !eta.is_finite() {
            return Err(Error::Validation(format!("kurtosis ratio eta must be >= 1, got {eta}")));
        }
        if p == 0 {
            return Err(Error::Validation("order p must be at least 1".into()));
        }
        Ok(Self { kappas, eta, p })
    }

    pub fn from_params(params: &ModelParams<T>, opts: KappaOptions) -> Result<Self> {
        let kappas = theoretical_kappa(params, opts)?;
        Self::new(kappas, params.innovation.eta(), params.p())
    }
}

/// `V_{k,l} = (η−3)κ_kκ_l + Σ_h (κ_h κ_{h−k+l} + κ_{h−k} κ_{h+l})`, `k, l = 0..=p`.
pub fn bartlett_v<T: Scalar>(input: &BartlettInput<T>) -> Matrix<T> {
    let kap = &input.kappas;
    let p = input.p;
    let bound = (kap.h_max + p) as i64;
    let extra = input.eta - T::lit(3.0);
    let mut v = Matrix::zeros(p + 1, p + 1);
    for k in 0..=p {
        for l in k..=p {
            let (ki, li) = (k as i64, l as i64);
            let mut s = T::zero();
            for h in -bound..=bound {
                s += kap.get(h) * kap.get(h - ki + li) + kap.get(h - ki) * kap.get(h + li);
            }
            let val = extra * kap.get(ki) * kap.get(li) + s;
            v[(k, l)] = val;
            v[(l, k)] = val;
        }
    }
    v
}

/// Asymptotic variances of `√N(φ − φ_est)` and `√N(σ² − σ²_est)` for one procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticVariance<T> {
    pub procedure: Procedure,
    pub p: usize,
    /// `p × p` covariance matrix of the coefficient estimates (row-major rows).
    pub phi: Vec<Vec<T>>,
    pub sigma_eps2: T,
    pub eta: T,
    pub h_max: usize,
}

impl<T: Scalar> AsymptoticVariance<T> {
    /// `sqrt(avar / N)` for each coefficient and for `σ_ε²`.
    pub fn standard_errors(&self, n: usize) -> StdErrors<T> {
        let n = T::from_usize_lossy(n);
        StdErrors {
            phi: (0..self.p).map(|j| (self.phi[j][j] / n).sqrt()).collect(),
            sigma_eps2: (self.sigma_eps2 / n).sqrt(),
        }
    }
}

fn kappa_head<T: Scalar>(input: &BartlettInput<T>) -> Vec<T> {
    (0..=input.p).map(|h| input.kappas.get(h as i64)).collect()
}

/// Order-1 variances: `ν = (−κ_1/κ_0², 1/κ_0) V (·)ᵀ`, `τ = (1 + κ_1²/κ_0², −1/κ_0) V (·)ᵀ`
/// for Procedures A and B; `π = (0, 1/κ_0) V (·)ᵀ`, `ρ = (1, −φ) V (·)ᵀ` for Procedure C.
pub fn avar_order1<T: Scalar>(input: &BartlettInput<T>, procedure: Procedure) -> Result<AsymptoticVariance<T>> {
    if input.p != 1 {
        return Err(Error::UnsupportedOrder { p: input.p, reason: "order-1 asymptotic variances need p = 1".into() });
    }
    let v = bartlett_v(input);
    let k0 = input.kappas.get(0);
    let k1 = input.kappas.get(1);
    let (a_phi, a_s2) = match procedure {
        Procedure::A | Procedure::B => {
            let g1 = [-k1 / (k0 * k0), T::one() / k0];
            let g2 = [T::one() + k1 * k1 / (k0 * k0), -T::one() / k0];
            (v.quadratic_form(&g1), v.quadratic_form(&g2))
        }
        Procedure::C => {
            let phi = input.kappas.phi.first().copied().unwrap_or_else(|| k1 / k0);
            (v.quadratic_form(&[T::zero(), T::one() / k0]), v.quadratic_form(&[T::one(), -phi]))
        }
    };
    Ok(AsymptoticVariance {
        procedure,
        p: 1,
        phi: vec![vec![a_phi]],
        sigma_eps2: a_s2,
        eta: input.eta,
        h_max: input.kappas.h_max,
    })
}

/// Yule–Walker map `x = (x_0..x_p) ↦ (X⁻¹a, x_0 − (X⁻¹a)ᵀa)` with `X` Toeplitz in
/// `x_0..x_{p−1}` and `a = (x_1..x_p)`.
fn yw_map<T: Scalar>(x: &[T]) -> Result<(Vec<T>, T)> {
    let p = x.len() - 1;
    let a = &x[1..];
    let f = solve(&toeplitz(&x[..p]), a)?;
    let g = x[0] - f.iter().zip(a).map(|(&u, &w)| u * w).sum::<T>();
    Ok((f, g))
}

fn fd_step<T: Scalar>(k0: T) -> T {
    let base = if T::epsilon() < T::lit(1e-10) { T::lit(1e-6) } else { T::epsilon().cbrt() };
    base * k0.max(T::one())
}

/// Central-difference Jacobians of the Yule–Walker map at `x`: `(∂f/∂x` as `p × (p+1)`, `∇g)`.
pub fn yw_gradients<T: Scalar>(x: &[T]) -> Result<(Matrix<T>, Vec<T>)> {
    let p = x.len() - 1;
    let step = fd_step(x[0]);
    let mut jf = Matrix::zeros(p, p + 1);
    let mut gg = vec![T::zero(); p + 1];
    let two = T::lit(2.0);
    for c in 0..=p {
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[c] += step;
        dn[c] -= step;
        let (fu, gu) = yw_map(&up)?;
        let (fd, gd) = yw_map(&dn)?;
        for r in 0..p {
            jf[(r, c)] = (fu[r] - fd[r]) / (two * step);
        }
        gg[c] = (gu - gd) / (two * step);
    }
    Ok((jf, gg))
}

/// Order-p variances: `ν_p = J V Jᵀ`, `τ_p = ∇gᵀ V ∇g` (A, B) with `J`, `∇g` by central
/// differences; `π_p = Ξ⁻¹ W V Wᵀ Ξ⁻¹`, `ρ_p = (1, −φᵀ) V (1, −φᵀ)ᵀ` (C).
pub fn avar_orderp<T: Scalar>(input: &BartlettInput<T>, procedure: Procedure) -> Result<AsymptoticVariance<T>> {
    let p = input.p;
    let v = bartlett_v(input);
    let kap = kappa_head(input);
    let (phi_cov, s2) = match procedure {
        Procedure::A | Procedure::B => {
            let (jf, gg) = yw_gradients(&kap)?;
            let cov = jf.matmul(&v).matmul(&jf.transpose());
            (cov, v.quadratic_form(&gg))
        }
        Procedure::C => {
            let xi = toeplitz(&kap[..p]);
            // W V Wᵀ drops row and column 0 of V
            let wvw = Matrix::from_fn(p, p, |i, j| v[(i + 1, j + 1)]);
            let mut xi_inv = Matrix::zeros(p, p);
            for c in 0..p {
                let mut e = vec![T::zero(); p];
                e[c] = T::one();
                let col = solve_spd(&xi, &e)?;
                for r in 0..p {
                    xi_inv[(r, c)] = col[r];
                }
            }
            let cov = xi_inv.matmul(&wvw).matmul(&xi_inv);
            let phi = if input.kappas.phi.len() == p { input.kappas.phi.clone() } else { solve_spd(&xi, &kap[1..])? };
            let mut w = vec![T::one()];
            w.extend(phi.iter().map(|&f| -f));
            (cov, v.quadratic_form(&w))
        }
    };
    Ok(AsymptoticVariance {
        procedure,
        p,
        phi: phi_cov.as_rows(),
        sigma_eps2: s2,
        eta: input.eta,
        h_max: input.kappas.h_max,
    })
}

/// Order-1 formulas when `p = 1`, order-p otherwise.
pub fn asymptotic_variance<T: Scalar>(input: &BartlettInput<T>, procedure: Procedure) -> Result<AsymptoticVariance<T>> {
    if input.p == 1 {
        avar_order1(input, procedure)
    } else {
        avar_orderp(input, procedure)
    }
}
