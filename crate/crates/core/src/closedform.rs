//! Exact conditional moments for the cases that admit them.
//!
//! For `p = 0` the position noise does not depend on the velocity, so with a
//! constant or Gaussian initial density the conditional law of `u` given `x`
//! is Gaussian. For `p = 1/2` and constant `f` the velocity integrals reduce
//! to modified Bessel functions because the angular coupling
//! `κ = D|x|/(σ²τ)` no longer depends on `|u|`.

use crate::error::{Error, Result};
use crate::model::{burgers_exact, CriticalTime, ModelParams};
use crate::moments::Angular;
use crate::specfun;

fn require_p(params: &ModelParams, p: f64) -> Result<()> {
    if params.p != p {
        return Err(Error::WrongExponent {
            expected: p,
            got: params.p,
        });
    }
    Ok(())
}

fn critical(params: &ModelParams) -> Option<f64> {
    params.critical_time().finite()
}

/// `û` for `p = 0` and a uniform initial density in the `L → ∞` limit.
/// Equals the noise-free solution for `t < T` and vanishes at `t = T`.
pub fn mean_p0_uniform(params: &ModelParams, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    require_p(params, 0.0)?;
    if let Some(tc) = critical(params) {
        if t == tc {
            return Ok(vec![0.0; x.len()]);
        }
    }
    burgers_exact(params, t, x)
}

fn before_blowup(params: &ModelParams, t: f64) -> Result<()> {
    if let CriticalTime::Finite(tc) = params.critical_time() {
        if t >= tc {
            return Err(Error::EvaluationAtOrPastBlowup { t, critical: tc });
        }
    }
    Ok(())
}

/// Total conditional variance for `p = 0`, uniform `f`:
/// `n σ²τ(t)/D(t)²`, the conditional-Gaussian result (per component it is
/// `σ²τ/D²`).
pub fn variance_p0_uniform(params: &ModelParams, t: f64) -> Result<f64> {
    require_p(params, 0.0)?;
    before_blowup(params, t)?;
    let d = params.drift_factor(t);
    Ok(params.n as f64 * params.sigma * params.sigma * params.noise_time(t) / (d * d))
}

/// The variance in its printed typography, `σt/(t + 1/α)²` for `β = 0` and
/// `σt/(e^{βt}(1/α + 1/β) − 1/β)` for `β > 0`. Kept to measure the
/// discrepancy with [`variance_p0_uniform`].
pub fn variance_p0_uniform_printed(params: &ModelParams, t: f64) -> Result<f64> {
    require_p(params, 0.0)?;
    before_blowup(params, t)?;
    let (a, b, s) = (params.alpha, params.beta, params.sigma);
    if b == 0.0 {
        Ok(s * t / (t + 1.0 / a).powi(2))
    } else {
        Ok(s * t / ((b * t).exp() * (1.0 / a + 1.0 / b) - 1.0 / b))
    }
}

fn require_gaussian_case(params: &ModelParams) -> Result<()> {
    require_p(params, 0.0)?;
    if params.n != 1 {
        return Err(Error::UnsupportedDimension {
            n: params.n,
            reason: "the Gaussian closed form is one-dimensional",
        });
    }
    if params.beta != 0.0 {
        return Err(Error::UnsupportedParameters(
            "the Gaussian closed form needs beta = 0".into(),
        ));
    }
    Ok(())
}

fn gaussian_denominator(params: &ModelParams, k: f64, t: f64) -> f64 {
    let a = params.alpha;
    let s2 = params.sigma * params.sigma;
    a * a * t * t + 2.0 * (k * k * s2 + a) * t + 1.0
}

/// `û` for `p = 0`, `β = 0`, `n = 1` and `f ∝ exp(−k²x²)`.
pub fn mean_p0_gaussian(params: &ModelParams, k: f64, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    require_gaussian_case(params)?;
    let a = params.alpha;
    let c = (1.0 + a * t) * a / gaussian_denominator(params, k, t);
    Ok(x.iter().map(|xi| c * xi).collect())
}

/// `v̂` for the Gaussian case; independent of `x`.
pub fn variance_p0_gaussian(params: &ModelParams, k: f64, t: f64) -> Result<f64> {
    require_gaussian_case(params)?;
    let a = params.alpha;
    Ok(params.sigma * params.sigma * a * a * t / gaussian_denominator(params, k, t))
}

/// Time of the minimum of `∂ₓû` in the Gaussian case,
/// `t* = (1/α)(√(2/−α)·σk − 1)`. Positive only when `σk < √(−α/2)`.
pub fn tstar_p0_gaussian(params: &ModelParams, k: f64) -> Result<f64> {
    require_gaussian_case(params)?;
    let a = params.alpha;
    if a >= 0.0 {
        return Err(Error::UnsupportedParameters("t* needs alpha < 0".into()));
    }
    Ok(((2.0 / -a).sqrt() * params.sigma * k - 1.0) / a)
}

fn require_powerlaw_case(params: &ModelParams, s: f64) -> Result<()> {
    if params.n != 1 || params.beta != 0.0 || params.p != 0.0 {
        return Err(Error::UnsupportedParameters(
            "the power-law slope needs n = 1, beta = 0 and p = 0".into(),
        ));
    }
    if !(s >= 2.0 && s.fract() == 0.0) {
        return Err(Error::UnsupportedParameters(format!(
            "the power-law slope needs an integer s >= 2, got {s}"
        )));
    }
    Ok(())
}

/// Printed near-origin slope `α²(1+αt)/((2(s−1)−1)k²)` of `û` for
/// `f ∝ (1 + k²x²)^{−s}`.
pub fn powerlaw_origin_slope(params: &ModelParams, s: f64, k: f64, t: f64) -> Result<f64> {
    require_powerlaw_case(params, s)?;
    let a = params.alpha;
    Ok(a * a * (1.0 + a * t) / ((2.0 * (s - 1.0) - 1.0) * k * k))
}

/// Leading behaviour of the same slope as `t → T`:
/// `∂ₓû(t,0) = D·Var₀(u)/(σ²t)` and `Var₀(u) → α²/((2s−3)k²)`, giving
/// `α(1+αt)/((2s−3)σ²t k²)`.
pub fn powerlaw_origin_slope_near_t(params: &ModelParams, s: f64, k: f64, t: f64) -> Result<f64> {
    require_powerlaw_case(params, s)?;
    let a = params.alpha;
    let s2 = params.sigma * params.sigma;
    Ok(a * (1.0 + a * t) / ((2.0 * s - 3.0) * s2 * t * k * k))
}

fn require_phalf(params: &ModelParams, eps: f64, x: &[f64]) -> Result<(f64, f64)> {
    require_p(params, 0.5)?;
    if params.beta != 0.0 {
        return Err(Error::UnsupportedParameters(
            "the Bessel formula needs beta = 0".into(),
        ));
    }
    if x.len() != params.n {
        return Err(crate::error::invalid("x", "length must equal n"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(crate::error::invalid("epsilon", "must lie in (0, 1)"));
    }
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if xn == 0.0 {
        return Err(crate::error::invalid(
            "x",
            "the Bessel formula needs x != 0",
        ));
    }
    Ok((xn, eps * xn / (params.sigma * params.sigma * (1.0 - eps))))
}

/// Exact `û` for `p = 1/2`, `β = 0` and constant `f`:
///
/// `û = sgn(D)·(x/|D|)·(S₁(z)/S₀(z))·K_{n/2+1}(z)/K_{n/2}(z)`,
/// `z = ε|x|/(σ²(1−ε))`, where `S₁/S₀` is the mean direction cosine of the
/// angular weight `e^{z cos θ}` (`tanh z` for `n = 1`).
pub fn mean_phalf_uniform_exact(params: &ModelParams, eps: f64, x: &[f64]) -> Result<Vec<f64>> {
    let (_, z) = require_phalf(params, eps, x)?;
    let n = params.n as f64;
    let d = eps / params.alpha;
    let ang = Angular::new(params.n).eval(z, None);
    let k = specfun::bessel_k_ratio(n / 2.0 + 1.0, n / 2.0, z)?.value;
    let c = d.signum() / d.abs() * ang.s1 / ang.s0 * k;
    Ok(x.iter().map(|xi| c * xi).collect())
}

/// Leading factor of `û` for `p = 1/2` near the critical time:
/// `û ≈ αx|x|/(nσ²(1−ε))·K_{n/2+1}(z)/K_{n/2}(z)`, `z = ε|x|/(σ²(1−ε))`.
///
/// This replaces the direction cosine of [`mean_phalf_uniform_exact`] by its
/// small-`z` value `z/n`, so it tends to `αx/ε` as `ε → 0`.
pub fn mean_phalf_uniform_neareps(params: &ModelParams, eps: f64, x: &[f64]) -> Result<Vec<f64>> {
    let (xn, z) = require_phalf(params, eps, x)?;
    let n = params.n as f64;
    let s2 = params.sigma * params.sigma;
    let k = specfun::bessel_k_ratio(n / 2.0 + 1.0, n / 2.0, z)?.value;
    let c = params.alpha * xn / (n * s2 * (1.0 - eps)) * k;
    Ok(x.iter().map(|xi| c * xi).collect())
}

/// The same leading factor in its printed typography,
/// `2α√(1−ε)x|x|/(nσ²)·K_{n/2+1}(z')/K_{n/2}(z')` with
/// `z' = ε|x|/(σ²√(1−ε))`. It tends to `2αx/ε` rather than `αx/ε`.
pub fn mean_phalf_uniform_neareps_printed(
    params: &ModelParams,
    eps: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let (xn, _) = require_phalf(params, eps, x)?;
    let n = params.n as f64;
    let s2 = params.sigma * params.sigma;
    let zp = eps * xn / (s2 * (1.0 - eps).sqrt());
    let k = specfun::bessel_k_ratio(n / 2.0 + 1.0, n / 2.0, zp)?.value;
    let c = 2.0 * params.alpha * (1.0 - eps).sqrt() * xn / (n * s2) * k;
    Ok(x.iter().map(|xi| c * xi).collect())
}
