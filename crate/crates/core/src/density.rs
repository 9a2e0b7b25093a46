//! Closed-form phase-space density `P(t,x,u)` and its Fokker–Planck residual.
//!
//! A particle observed with velocity `u` at time `t` started from
//! `x₀ = u e^{βt}/α`. Given that start its position is Gaussian with mean
//! `D(t)u` and covariance `σ²|u|^{2p}τ(t)·I`, where
//! `D(t) = e^{βt}/α + (e^{βt} − 1)/β` and `τ(t) = (e^{2pβt} − 1)/(2pβ)`
//! (both reduce to `1/α + t` and `t` when `β = 0`). Changing variables from
//! `u₀ = αx₀` to `u = u₀e^{−βt}` contributes the Jacobian `e^{nβt}/|α|^n`.

use crate::error::{invalid, Error, Result};
use crate::model::{InitialDistribution, ModelParams};
use std::f64::consts::PI;

/// A density value together with its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub value: f64,
    pub log_value: f64,
}

impl DensityValue {
    fn from_log(log_value: f64) -> Self {
        Self {
            value: log_value.exp(),
            log_value,
        }
    }
}

fn check_dims(params: &ModelParams, x: &[f64], u: &[f64]) -> Result<()> {
    if x.len() != params.n || u.len() != params.n {
        return Err(invalid(
            "x/u",
            format!(
                "expected {} components, got {} and {}",
                params.n,
                x.len(),
                u.len()
            ),
        ));
    }
    Ok(())
}

/// `ln P(t,x,u)`.
pub fn ln_phase_density(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: &[f64],
    u: &[f64],
) -> Result<f64> {
    check_dims(params, x, u)?;
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let n = params.n as f64;
    let r2: f64 = u.iter().map(|v| v * v).sum();
    if params.p > 0.0 && r2 == 0.0 {
        return Err(Error::ZeroVelocityWithPositiveP);
    }
    let ebt = (params.beta * t).exp();
    let x0: Vec<f64> = u.iter().map(|v| v * ebt / params.alpha).collect();
    let ln_f = dist.ln_density(&x0)?;
    if ln_f == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let d = params.drift_factor(t);
    let tau = params.noise_time(t);
    let s2 = params.sigma * params.sigma;
    let ln_r = 0.5 * r2.ln();
    let dev2: f64 = u.iter().zip(x).map(|(ui, xi)| (ui * d - xi).powi(2)).sum();
    let ln_var = (s2 * tau).ln()
        + if params.p > 0.0 {
            2.0 * params.p * ln_r
        } else {
            0.0
        };
    Ok(ln_f + n * params.beta * t
        - n * params.alpha.abs().ln()
        - 0.5 * n * (2.0 * PI).ln()
        - 0.5 * n * ln_var
        - 0.5 * dev2 * (-ln_var).exp())
}

/// Closed-form phase-space density.
pub fn phase_density(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: &[f64],
    u: &[f64],
) -> Result<DensityValue> {
    ln_phase_density(params, dist, t, x, u).map(DensityValue::from_log)
}

/// The `β > 0` density in its printed typography, read with the noise time
/// `(e^{2βpt} − 1)/(2βp)` in both normalizer and exponent and the printed
/// prefactor `e^{−βt}`. Kept only to measure its departure from the
/// Fokker–Planck equation and from unit mass.
pub fn phase_density_printed_beta(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: &[f64],
    u: &[f64],
) -> Result<DensityValue> {
    check_dims(params, x, u)?;
    if !(params.beta > 0.0 && params.p > 0.0) {
        return Err(Error::UnsupportedParameters(
            "the printed form is only defined for beta > 0 and p > 0".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let n = params.n as f64;
    let (a, b, s, p) = (params.alpha, params.beta, params.sigma, params.p);
    let r2: f64 = u.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Err(Error::ZeroVelocityWithPositiveP);
    }
    let ebt = (b * t).exp();
    let x0: Vec<f64> = u.iter().map(|v| v * ebt / a).collect();
    let ln_f = dist.ln_density(&x0)?;
    let e2 = (2.0 * b * p * t).exp_m1();
    let d = ebt * (1.0 / a + 1.0 / b) - 1.0 / b;
    let dev2: f64 = u.iter().zip(x).map(|(ui, xi)| (ui * d - xi).powi(2)).sum();
    let ln_r = 0.5 * r2.ln();
    let ln_norm = n * (a.abs() * s * (2.0 * PI * e2 / (2.0 * b * p)).sqrt()).ln() + p * n * ln_r;
    let expo = 2.0 * b * p * dev2 / (2.0 * s * s * (2.0 * p * ln_r).exp() * e2);
    Ok(DensityValue::from_log(ln_f - b * t - ln_norm - expo))
}

/// Which density the residual is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityForm {
    Derived,
    PrintedBeta,
}

/// Relative residual of the Fokker–Planck equation
/// `∂_t P = −u·∇_x P + β(u·∇_u P + nP) + (σ²/2)|u|^{2p} Δ_x P`
/// with central differences of step `h`, divided by the largest term.
pub fn fp_residual(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: &[f64],
    u: &[f64],
    h: f64,
) -> Result<f64> {
    fp_residual_with(params, dist, t, x, u, h, DensityForm::Derived)
}

pub fn fp_residual_with(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: &[f64],
    u: &[f64],
    h: f64,
    form: DensityForm,
) -> Result<f64> {
    check_dims(params, x, u)?;
    if !(h > 0.0) {
        return Err(invalid("h", format!("step must be > 0, got {h}")));
    }
    if t <= h {
        return Err(Error::NonSmoothPoint {
            reason: format!("t = {t} within one step of 0"),
        });
    }
    let n = params.n;
    let r = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if params.p > 0.0 && r <= 2.0 * h {
        return Err(Error::NonSmoothPoint {
            reason: format!("|u| = {r} within two steps of the singular point u = 0"),
        });
    }
    if let InitialDistribution::UniformBox { l } = *dist {
        // The start point u e^{βt}/α moves with both u and t in the stencil.
        let scale = ((params.beta * (t + h)).exp() / params.alpha.abs()).max(1.0);
        let reach = 2.0 * h * scale * (1.0 + params.beta * r);
        for &ui in u {
            let x0 = (ui * (params.beta * t).exp() / params.alpha).abs();
            if (x0 - l).abs() <= reach {
                return Err(Error::NonSmoothPoint {
                    reason: format!("u/alpha within {reach:.3e} of the box boundary"),
                });
            }
        }
    }
    let eval = |t: f64, x: &[f64], u: &[f64]| -> Result<f64> {
        match form {
            DensityForm::Derived => phase_density(params, dist, t, x, u).map(|d| d.value),
            DensityForm::PrintedBeta => {
                phase_density_printed_beta(params, dist, t, x, u).map(|d| d.value)
            }
        }
    };
    let p0 = eval(t, x, u)?;
    let dt = (eval(t + h, x, u)? - eval(t - h, x, u)?) / (2.0 * h);
    let mut adv = 0.0;
    let mut lap = 0.0;
    let mut udu = 0.0;
    let mut xs = x.to_vec();
    let mut us = u.to_vec();
    for k in 0..n {
        xs[k] = x[k] + h;
        let fp = eval(t, &xs, u)?;
        xs[k] = x[k] - h;
        let fm = eval(t, &xs, u)?;
        xs[k] = x[k];
        adv += u[k] * (fp - fm) / (2.0 * h);
        lap += (fp - 2.0 * p0 + fm) / (h * h);
        us[k] = u[k] + h;
        let gp = eval(t, x, &us)?;
        us[k] = u[k] - h;
        let gm = eval(t, x, &us)?;
        us[k] = u[k];
        udu += u[k] * (gp - gm) / (2.0 * h);
    }
    let damping = params.beta * (udu + n as f64 * p0);
    let diffusion = 0.5 * params.sigma * params.sigma * r.powf(2.0 * params.p) * lap;
    let terms = [dt, adv, damping, diffusion];
    let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((dt + adv - damping - diffusion).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64, p: f64) -> ModelParams {
        ModelParams::new(-1.0, beta, 1.0, p, 1).unwrap()
    }

    #[test]
    fn density_at_origin_example() {
        let pr = ModelParams::new(-1.0, 0.0, 1.0, 0.0, 1).unwrap();
        let d = InitialDistribution::uniform(10.0).unwrap();
        let v = phase_density(&pr, &d, 1.0, &[0.0], &[0.0]).unwrap();
        assert!((v.value - 0.05 / (2.0 * PI).sqrt()).abs() < 1e-16);
        assert!((v.log_value - v.value.ln()).abs() < 1e-14);
    }

    #[test]
    fn matches_printed_beta_zero_form() {
        // f(u/α)/((|α|σ√(2πt))^n |u|^{pn}) · exp(−|u(1/α+t)−x|²/(2σ²t|u|^{2p}))
        let pr = ModelParams::new(-1.5, 0.0, 0.7, 0.5, 1).unwrap();
        let d = InitialDistribution::gaussian(0.8).unwrap();
        let (t, x, u) = (0.4, 0.3, -0.9f64);
        let f = (0.8 / PI.sqrt()) * (-(0.8f64 * u / -1.5).powi(2)).exp();
        let want = f / (1.5 * 0.7 * (2.0 * PI * t).sqrt() * u.abs().sqrt())
            * (-(u * (1.0 / -1.5 + t) - x).powi(2) / (2.0 * 0.49 * t * u.abs())).exp();
        let got = phase_density(&pr, &d, t, &[x], &[u]).unwrap().value;
        assert!(((got - want) / want).abs() < 1e-13);
    }

    #[test]
    fn joint_flip_symmetry() {
        let d = InitialDistribution::gaussian(1.0).unwrap();
        for p in [0.0, 0.5, 2.0] {
            for beta in [0.0, 0.5] {
                let pr = params(beta, p);
                let a = phase_density(&pr, &d, 0.3, &[0.4], &[-0.7]).unwrap();
                let b = phase_density(&pr, &d, 0.3, &[-0.4], &[0.7]).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn small_beta_limit() {
        let d = InitialDistribution::gaussian(1.0).unwrap();
        let a = phase_density(&params(0.0, 0.5), &d, 0.5, &[0.3], &[-0.2])
            .unwrap()
            .value;
        let b = phase_density(&params(1e-6, 0.5), &d, 0.5, &[0.3], &[-0.2])
            .unwrap()
            .value;
        assert!(((a - b) / a).abs() < 1e-4);
    }

    #[test]
    fn errors() {
        let d = InitialDistribution::gaussian(1.0).unwrap();
        assert_eq!(
            phase_density(&params(0.0, 1.0), &d, 0.5, &[0.3], &[0.0]),
            Err(Error::ZeroVelocityWithPositiveP)
        );
        assert_eq!(
            phase_density(&params(0.0, 1.0), &d, 0.0, &[0.3], &[0.1]),
            Err(Error::NonPositiveTime(0.0))
        );
        let b = InitialDistribution::uniform(1.0).unwrap();
        // u/α = 1 sits on the box boundary.
        assert!(matches!(
            fp_residual(&params(0.0, 0.0), &b, 0.5, &[0.0], &[-1.0], 1e-3),
            Err(Error::NonSmoothPoint { .. })
        ));
    }

    #[test]
    fn residual_examples() {
        let g = InitialDistribution::gaussian(1.0).unwrap();
        let r = fp_residual(&params(0.0, 0.0), &g, 0.5, &[0.2], &[-0.3], 1e-3).unwrap();
        assert!(r < 1e-4, "{r}");
        let r = fp_residual(&params(0.5, 1.0), &g, 0.5, &[0.2], &[-0.3], 1e-3).unwrap();
        assert!(r < 1e-4, "{r}");
        let a = fp_residual(&params(0.5, 1.0), &g, 0.5, &[0.2], &[-0.3], 1e-3).unwrap();
        let b = fp_residual(&params(0.5, 1.0), &g, 0.5, &[-0.2], &[0.3], 1e-3).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn printed_beta_form_fails_the_equation() {
        let g = InitialDistribution::gaussian(1.0).unwrap();
        let r = fp_residual_with(
            &params(0.5, 1.0),
            &g,
            0.5,
            &[0.2],
            &[-0.3],
            1e-3,
            DensityForm::PrintedBeta,
        )
        .unwrap();
        assert!(r > 1e-2, "{r}");
    }

    #[test]
    fn multi_dimensional_residual() {
        let pr = ModelParams::new(-1.0, 0.3, 0.8, 1.5, 3).unwrap();
        let g = InitialDistribution::gaussian(0.9).unwrap();
        let r = fp_residual(&pr, &g, 0.4, &[0.1, -0.2, 0.3], &[-0.4, 0.2, 0.5], 1e-3).unwrap();
        assert!(r < 1e-4, "{r}");
    }
}
