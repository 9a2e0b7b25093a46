//! Induced velocity of the observable density, `n = 1`.
//!
//! Integrating the Fokker–Planck equation over `u` gives
//!
//! `∂ₜρ̂ + ∂ₓ(ρ̂ û) = (σ²/2) ∂ₓ² ∫|u|^{2p} P du`,
//!
//! so the velocity `v` that transports `ρ̂`, `∂ₜρ̂ + ∂ₓ(ρ̂ v) = 0`, is
//! `v = û + v₁` with `v₁ = −(σ²/2)∫|u|^{2p}∂ₓP du/ρ̂`. Differentiating the
//! Gaussian factor of `P` in `x` turns this into `v₁ = (x − D(t)û)/(2τ(t))`.

use crate::error::{invalid, Error, Result};
use crate::model::{CriticalTime, InitialDistribution, ModelParams};
use crate::moments::{
    conditional_mean, observable_density, Method, MomentEstimate, QuadratureSpec,
};
use crate::quad::{self, QuadTol};

fn check(params: &ModelParams, t: f64) -> Result<()> {
    if params.n != 1 {
        return Err(Error::UnsupportedDimension {
            n: params.n,
            reason: "the induced velocity is one-dimensional",
        });
    }
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if let CriticalTime::Finite(tc) = params.critical_time() {
        if t >= tc {
            return Err(Error::EvaluationAtOrPastBlowup { t, critical: tc });
        }
    }
    Ok(())
}

/// Tighter tolerances for values that are differenced.
fn inner_spec(spec: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: spec.rel_tol.min(1e-12),
        ..*spec
    }
}

/// Time step of the difference quotient: a fixed fraction of the distance
/// to the nearer of `t = 0` and `t = T`.
fn time_step(params: &ModelParams, t: f64) -> f64 {
    let room = match params.critical_time() {
        CriticalTime::Finite(tc) => t.min(tc - t),
        CriticalTime::NoBlowup => t,
    };
    0.02 * room
}

/// `∂ₜρ̂(t, y)` by central differences at steps `δ`, `δ/2` and `δ/4`,
/// extrapolated twice (`O(δ⁶)`). Returns the value and an error estimate
/// from the last correction plus the quadrature error amplified by the
/// difference quotients.
pub fn observable_density_rate(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    y: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    check(params, t)?;
    let inner = inner_spec(spec);
    let d = time_step(params, t);
    let mut noise = 0.0f64;
    let mut diff = |h: f64| -> Result<f64> {
        let a = observable_density(params, dist, t + h, &[y], &inner)?;
        let b = observable_density(params, dist, t - h, &[y], &inner)?;
        noise = noise.max((a.error_bound + b.error_bound) / (2.0 * h));
        Ok((a.value - b.value) / (2.0 * h))
    };
    let d1 = diff(d)?;
    let d2 = diff(0.5 * d)?;
    let d3 = diff(0.25 * d)?;
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    let value = (16.0 * r2 - r1) / 15.0;
    Ok((value, (value - r2).abs() + 2.0 * noise))
}

fn integrate_rate(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    if b < a {
        let (v, e) = integrate_rate(params, dist, t, b, a, spec)?;
        return Ok((-v, e));
    }
    let mut err: Option<Error> = None;
    let mut fd_err = 0.0f64;
    let res = quad::integrate(
        |y| match observable_density_rate(params, dist, t, y, spec) {
            Ok((v, e)) => {
                fd_err = fd_err.max(e);
                [v]
            }
            Err(e) => {
                err.get_or_insert(e);
                [0.0]
            }
        },
        &[a, b],
        QuadTol {
            rel: spec.rel_tol.max(1e-9),
            abs: 1e-300,
            max_subdivisions: 200,
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok((res.value[0], res.error[0] + fd_err * (b - a).abs()))
}

fn density_at(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: f64,
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>> {
    match observable_density(params, dist, t, &[x], &inner_spec(spec)) {
        Ok(r) if r.value > f64::MIN_POSITIVE => Ok(r),
        Ok(_) | Err(Error::SingularDenominator) => Err(Error::ZeroDensity(x)),
        Err(e) => Err(e),
    }
}

/// `v(t,x) = −∫_{−∞}^x ∂ₜρ̂(t,y) dy / ρ̂(t,x)` for an even initial density.
///
/// `ρ̂` is then even in `y` and the total mass is conserved, so
/// `∫_{−∞}^0 ∂ₜρ̂ dy = 0` and the integral starts at `y = 0`. This also
/// covers the constant-density limit, where `∫_{−∞}^0` itself diverges.
pub fn induced_velocity(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: f64,
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>> {
    check(params, t)?;
    if !dist.is_even() {
        return Err(Error::UnsupportedParameters(
            "the symmetric lower limit needs an even initial density".into(),
        ));
    }
    let rho = density_at(params, dist, t, x, spec)?;
    if x == 0.0 {
        return Ok(MomentEstimate {
            value: 0.0,
            error_bound: 0.0,
            method: Method::Quadrature,
            converged: true,
        });
    }
    let (i, ierr) = integrate_rate(params, dist, t, 0.0, x, spec)?;
    finish(i, ierr, &rho, spec)
}

fn finish(
    i: f64,
    ierr: f64,
    rho: &MomentEstimate<f64>,
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>> {
    let v = -i / rho.value;
    let error_bound = ierr / rho.value + v.abs() * rho.error_bound / rho.value;
    Ok(MomentEstimate {
        value: v,
        error_bound,
        method: Method::Quadrature,
        converged: rho.converged && error_bound <= spec.tolerance_for(v).max(1e-6 * v.abs()),
    })
}

/// Relative density level that ends the lower range of
/// [`induced_velocity_truncated`].
pub const LOWER_CUTOFF: f64 = 1e-14;

/// The same velocity with the lower limit taken literally: the integral
/// starts where `ρ̂ < 10⁻¹⁴·ρ̂(t,0)` on the negative axis. Needs a density
/// with finite mass.
pub fn induced_velocity_truncated(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: f64,
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>> {
    check(params, t)?;
    let rho = density_at(params, dist, t, x, spec)?;
    let rho0 = density_at(params, dist, t, 0.0, spec)?.value;
    let mut y0 = -1.0f64.max(x.abs());
    loop {
        let r = match observable_density(params, dist, t, &[y0], &inner_spec(spec)) {
            Ok(r) => r.value,
            Err(Error::SingularDenominator) => 0.0,
            Err(e) => return Err(e),
        };
        if r < LOWER_CUTOFF * rho0 {
            break;
        }
        y0 *= 2.0;
        if y0 < -1e12 {
            return Err(Error::DivergentIntegral(
                "the observable density does not decay; use induced_velocity".into(),
            ));
        }
    }
    if !(x > y0) {
        return Err(invalid("x", "lies below the truncation point"));
    }
    // Split at the origin and at x so each panel sees a smooth integrand.
    let mut pts = vec![y0];
    let mid = 0.5 * y0;
    pts.push(mid);
    if x > 0.0 {
        pts.push(0.0);
    }
    pts.push(x);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let mut i = 0.0;
    let mut ierr = 0.0;
    for w in pts.windows(2) {
        let (v, e) = integrate_rate(params, dist, t, w[0], w[1], spec)?;
        i += v;
        ierr += e;
    }
    finish(i, ierr, &rho, spec)
}

/// `v₁(t,x) = (x − D(t)û(t,x))/(2τ(t))`.
pub fn v1_correction(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: f64,
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>> {
    check(params, t)?;
    let m = conditional_mean(params, dist, t, &[x], spec)?;
    let d = params.drift_factor(t);
    let tau = params.noise_time(t);
    let v = (x - d * m.value[0]) / (2.0 * tau);
    Ok(MomentEstimate {
        value: v,
        error_bound: d.abs() * m.error_bound / (2.0 * tau),
        method: Method::Quadrature,
        converged: m.converged,
    })
}
