//! Leading-order predictions near the critical time and near the origin,
//! with tools to compare them against quadrature.
//!
//! Where the printed constants and the re-derived ones differ, both are
//! exposed: the plain name evaluates the printed expression, the
//! `_derived` variant the re-derived one. For constant `f` every constant
//! follows from the radial average
//!
//! `⟨r^a⟩ = b^{a/(2p)}·Γ((n(p−1)−a)/(2p))/Γ(n(p−1)/(2p))`, `b = |x|²/(2σ²τ(T))`,
//!
//! of the weight `r^{n(1−p)−1}·exp(−b r^{−2p})` that the density reduces to
//! at `t = T`.

use crate::error::{invalid, Error, Result};
use crate::model::{InitialDistribution, ModelParams};
use crate::moments::{conditional_mean, QuadratureSpec};
use crate::specfun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `p < 1`: the gradient catastrophe survives.
    SubCritical,
    /// `p = 1`.
    Critical,
    /// `p > 1`: the conditional mean vanishes at the critical time.
    SuperCritical,
}

impl Regime {
    pub fn of(p: f64) -> Self {
        if p < 1.0 {
            Regime::SubCritical
        } else if p == 1.0 {
            Regime::Critical
        } else {
            Regime::SuperCritical
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::SubCritical => "subcritical",
            Regime::Critical => "critical",
            Regime::SuperCritical => "supercritical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticCoefficients {
    /// Blow-up constant `C`, defined for `p > 1`.
    pub c_blowup: Option<f64>,
    /// Variance constant `F`, defined for `p > 1 + 4/n`.
    pub f_variance: Option<f64>,
    pub regime: Regime,
}

/// Printed constants for `params`.
pub fn coefficients(params: &ModelParams) -> Result<AsymptoticCoefficients> {
    let regime = Regime::of(params.p);
    let c_blowup = if regime == Regime::SuperCritical {
        Some(blowup_coefficient(params)?)
    } else {
        None
    };
    let f_variance = if params.p > 1.0 + 4.0 / params.n as f64 && params.beta == 0.0 {
        Some(variance_coefficient(params)?)
    } else {
        None
    };
    Ok(AsymptoticCoefficients {
        c_blowup,
        f_variance,
        regime,
    })
}

fn critical_time(params: &ModelParams) -> Result<f64> {
    params
        .critical_time()
        .finite()
        .ok_or_else(|| invalid("alpha", "needs alpha < -beta for a finite critical time"))
}

fn require_supercritical(p: f64) -> Result<()> {
    if p == 1.0 {
        return Err(Error::UndefinedAtP1);
    }
    if p < 1.0 {
        return Err(Error::OutOfRegime { p });
    }
    Ok(())
}

/// `Γ((n+2)(p−1)/(2p))/Γ(n(p−1)/(2p))`.
fn blowup_gamma_ratio(n: f64, p: f64) -> Result<f64> {
    specfun::gamma_ratio((n + 2.0) * (p - 1.0) / (2.0 * p), n * (p - 1.0) / (2.0 * p))
}

/// Noise time at the critical time.
fn tau_at_t(params: &ModelParams) -> Result<f64> {
    Ok(params.noise_time(critical_time(params)?))
}

/// Printed blow-up constant:
/// `C = −(1/α)(√(−α/(2σ²)))^{(1−p)/(2p)}·Γ((n+2)(p−1)/(2p))/Γ(n(p−1)/(2p))`
/// for `β = 0`, and for `β > 0`
/// `C = −(1/β)ln((α+β)/α)·(2((α/(α+β))^{2p} − 1)σ/(2pβ))^{(p−1)/p}·Γ(…)/Γ(…)`.
pub fn blowup_coefficient(params: &ModelParams) -> Result<f64> {
    require_supercritical(params.p)?;
    critical_time(params)?;
    let (a, b, s, p) = (params.alpha, params.beta, params.sigma, params.p);
    let g = blowup_gamma_ratio(params.n as f64, p)?;
    if b == 0.0 {
        Ok(-(1.0 / a) * (-a / (2.0 * s * s)).sqrt().powf((1.0 - p) / (2.0 * p)) * g)
    } else {
        let lead = -((a + b) / a).ln() / b;
        let inner = 2.0 * ((a / (b + a)).powf(2.0 * p) - 1.0) * s / (2.0 * p * b);
        Ok(lead * inner.powf((p - 1.0) / p) * g)
    }
}

/// Re-derived blow-up constant, valid for any `β`:
/// `C = T/(nσ²τ_T)·(2σ²τ_T)^{(p−1)/p}·Γ((n+2)(p−1)/(2p))/Γ(n(p−1)/(2p))`,
/// with `τ_T` the noise time at `T`. For `β = 0` this is
/// `(1/(nσ²))(−α/(2σ²))^{(1−p)/p}·Γ(…)/Γ(…)`.
pub fn blowup_coefficient_derived(params: &ModelParams) -> Result<f64> {
    require_supercritical(params.p)?;
    let t = critical_time(params)?;
    let tau = tau_at_t(params)?;
    let (s2, p, n) = (params.sigma * params.sigma, params.p, params.n as f64);
    let g = blowup_gamma_ratio(n, p)?;
    Ok(t / (n * s2 * tau) * (2.0 * s2 * tau).powf((p - 1.0) / p) * g)
}

/// Empirical blow-up constant from quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// `(ε, −û/(ε·x|x|^{2(1−p)/p}))` per evaluation.
    pub samples: Vec<(f64, f64)>,
    /// Linear extrapolation of the last two samples to `ε = 0`.
    pub extrapolated: f64,
}

/// Measure `C` as `−û/(ε·x|x|^{2(1−p)/p})` at each `ε` (along the first
/// axis of `x`), and extrapolate linearly in `ε`.
pub fn calibrate_blowup_coefficient(
    params: &ModelParams,
    dist: &InitialDistribution,
    x: &[f64],
    eps: &[f64],
    spec: &QuadratureSpec,
) -> Result<Calibration> {
    require_supercritical(params.p)?;
    if eps.len() < 2 {
        return Err(invalid("eps", "need at least two values"));
    }
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if xn == 0.0 || x[0] == 0.0 {
        return Err(invalid("x", "needs a nonzero first component"));
    }
    let p = params.p;
    let scale = x[0] * xn.powf(2.0 * (1.0 - p) / p);
    let mut samples = Vec::with_capacity(eps.len());
    for &e in eps {
        let t = params.time_from_epsilon(e)?;
        let m = conditional_mean(params, dist, t, x, spec)?;
        samples.push((e, -m.value[0] / (e * scale)));
    }
    let k = samples.len();
    let (e1, c1) = samples[k - 2];
    let (e2, c2) = samples[k - 1];
    let extrapolated = (e1 * c2 - e2 * c1) / (e1 - e2);
    Ok(Calibration {
        samples,
        extrapolated,
    })
}

fn scaled(x: &[f64], c: f64) -> Vec<f64> {
    x.iter().map(|v| c * v).collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

/// Leading term of `û` as `ε → 0`, with printed constants:
/// `αx/ε` for `p < 1`, `εx/α` for `p = 1`, `−Cεx|x|^{2(1−p)/p}` for `p > 1`.
/// For `β > 0` the `p < 1` branch uses the exact drift factor, `x/D(t)`.
pub fn predicted_mean_near_t(params: &ModelParams, eps: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_eps(eps)?;
    let p = params.p;
    match Regime::of(p) {
        Regime::SubCritical => {
            let t = params.time_from_epsilon(eps)?;
            Ok(scaled(x, 1.0 / params.drift_factor(t)))
        }
        Regime::Critical => Ok(scaled(x, eps / params.alpha)),
        Regime::SuperCritical => {
            let c = blowup_coefficient(params)?;
            Ok(scaled(x, -c * eps * norm(x).powf(2.0 * (1.0 - p) / p)))
        }
    }
}

/// Same as [`predicted_mean_near_t`] with re-derived constants. For
/// `p = 1` the mean is `D(t)x/(nσ²τ(t))` exactly in the `L → ∞` limit.
pub fn predicted_mean_near_t_derived(
    params: &ModelParams,
    eps: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_eps(eps)?;
    let p = params.p;
    match Regime::of(p) {
        Regime::SubCritical => predicted_mean_near_t(params, eps, x),
        Regime::Critical => {
            let t = params.time_from_epsilon(eps)?;
            let s2 = params.sigma * params.sigma;
            Ok(scaled(
                x,
                params.drift_factor(t) / (params.n as f64 * s2 * params.noise_time(t)),
            ))
        }
        Regime::SuperCritical => {
            let c = blowup_coefficient_derived(params)?;
            Ok(scaled(x, -c * eps * norm(x).powf(2.0 * (1.0 - p) / p)))
        }
    }
}

/// Linear behaviour of `û` at the origin: `αx/ε` for `β = 0` and
/// `β/((β/α + 1)^ε − 1)·x` for `β > 0`. Both equal `x/D(t)`.
pub fn predicted_mean_near_origin(params: &ModelParams, eps: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_eps(eps)?;
    if !(params.p > 0.0) {
        return Err(Error::OutOfRegime { p: params.p });
    }
    critical_time(params)?;
    let (a, b) = (params.alpha, params.beta);
    let c = if b == 0.0 {
        a / eps
    } else {
        b / ((b / a + 1.0).powf(eps) - 1.0)
    };
    Ok(scaled(x, c))
}

/// Leading behaviour of `v̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceAsymptote {
    Value(f64),
    /// `v̂ = O(ε^{exponent})` as `ε → 0`.
    DivergenceExponent(f64),
}

fn require_beta0(params: &ModelParams) -> Result<()> {
    if params.beta != 0.0 {
        return Err(Error::UnsupportedParameters(
            "the variance asymptotics need beta = 0".into(),
        ));
    }
    Ok(())
}

fn unit_fraction(p: f64) -> Option<f64> {
    if !(p > 0.0 && p < 1.0) {
        return None;
    }
    let m = (1.0 / p).round();
    ((1.0 / m - p).abs() < 1e-12).then_some(m)
}

/// Printed variance constant
/// `F = Γ((n(p−1)−2)/(2p))/Γ(n(p−1)/(2p))·(−α/(4σ²))^{1/p}`.
pub fn variance_coefficient(params: &ModelParams) -> Result<f64> {
    let (n, p) = (params.n as f64, params.p);
    if !(p > 1.0 + 4.0 / n) {
        return Err(Error::OutOfRegime { p });
    }
    require_beta0(params)?;
    let g = specfun::gamma_ratio((n * (p - 1.0) - 2.0) / (2.0 * p), n * (p - 1.0) / (2.0 * p))?;
    Ok(g * (-params.alpha / (4.0 * params.sigma * params.sigma)).powf(1.0 / p))
}

/// Re-derived variance constant, `⟨r²⟩/|x|^{2/p}` at `t = T`:
/// `Γ((n(p−1)−2)/(2p))/Γ(n(p−1)/(2p))·(1/(2σ²τ_T))^{1/p}`, which is
/// `(−α/(2σ²))^{1/p}·Γ(…)/Γ(…)` for `β = 0`. Finite for `p > 1 + 2/n`.
pub fn variance_coefficient_derived(params: &ModelParams) -> Result<f64> {
    let (n, p) = (params.n as f64, params.p);
    if !(p > 1.0 + 2.0 / n) {
        return Err(Error::OutOfRegime { p });
    }
    let tau = tau_at_t(params)?;
    let g = specfun::gamma_ratio((n * (p - 1.0) - 2.0) / (2.0 * p), n * (p - 1.0) / (2.0 * p))?;
    Ok(g * (1.0 / (2.0 * params.sigma * params.sigma * tau)).powf(1.0 / p))
}

/// Printed variance asymptote: `F|x|^{2/p}(1 − ((n(p−1)−(p+2))/(2p))ε)`
/// for `p > 1 + 4/n`, and the divergence exponent `−4m/(2m−1)` for
/// `p = 1/m`.
pub fn variance_asymptote(params: &ModelParams, eps: f64, x: &[f64]) -> Result<VarianceAsymptote> {
    check_eps(eps)?;
    let (n, p) = (params.n as f64, params.p);
    if let Some(m) = unit_fraction(p) {
        return Ok(VarianceAsymptote::DivergenceExponent(
            -4.0 * m / (2.0 * m - 1.0),
        ));
    }
    let f = variance_coefficient(params)?;
    let corr = 1.0 - (n * (p - 1.0) - (p + 2.0)) / (2.0 * p) * eps;
    Ok(VarianceAsymptote::Value(f * norm(x).powf(2.0 / p) * corr))
}

/// Re-derived divergence exponent of `v̂` for constant `f` and `p < 1`.
/// The velocity scale of the conditional law grows like
/// `|D|^{−1/(1−p)}`, so `v̂ = O(ε^{−2/(1−p)})`.
pub fn variance_divergence_exponent_derived(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::OutOfRegime { p });
    }
    Ok(-2.0 / (1.0 - p))
}

/// Printed near-origin variance at fixed `ε`:
/// `Γ((n(p−1)−2)/(2p))/Γ(n/2)·(−ε²/(4ασ²(1−ε)))^{1/(p−1)}`.
pub fn variance_near_origin(params: &ModelParams, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let (n, p) = (params.n as f64, params.p);
    if !(p > 1.0 + 4.0 / n) {
        return Err(Error::OutOfRegime { p });
    }
    require_beta0(params)?;
    let g = specfun::gamma_ratio((n * (p - 1.0) - 2.0) / (2.0 * p), n / 2.0)?;
    let s2 = params.sigma * params.sigma;
    Ok(g * (-eps * eps / (4.0 * params.alpha * s2 * (1.0 - eps))).powf(1.0 / (p - 1.0)))
}

/// Re-derived `v̂(t, 0)`: `Γ(n/2 − 1/(p−1))/Γ(n/2)·(D²/(2σ²τ))^{1/(p−1)}`,
/// for `p > 1 + 2/n`.
pub fn variance_near_origin_derived(params: &ModelParams, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let (n, p) = (params.n as f64, params.p);
    if !(p > 1.0 + 2.0 / n) {
        return Err(Error::OutOfRegime { p });
    }
    let t = params.time_from_epsilon(eps)?;
    let d = params.drift_factor(t);
    let c = d * d / (2.0 * params.sigma * params.sigma * params.noise_time(t));
    let g = specfun::gamma_ratio(n / 2.0 - 1.0 / (p - 1.0), n / 2.0)?;
    Ok(g * c.powf(1.0 / (p - 1.0)))
}

fn box_level(dist: &InitialDistribution, n: usize) -> Result<f64> {
    match dist {
        InitialDistribution::UniformBox { .. } => dist.normalization(n),
        _ => Err(Error::UnsupportedParameters(
            "the near-origin density needs a uniform initial density".into(),
        )),
    }
}

/// Printed observable density at the origin,
/// `f_L/(2|p−1|)·(ε²π)^{−n/2}·Γ(n/2)`.
pub fn observable_density_near_origin(
    params: &ModelParams,
    dist: &InitialDistribution,
    eps: f64,
) -> Result<f64> {
    check_eps(eps)?;
    let p = params.p;
    if !(p > 0.0) || p == 1.0 {
        return Err(Error::OutOfRegime { p });
    }
    let n = params.n as f64;
    let fl = box_level(dist, params.n)?;
    let g = specfun::gamma(n / 2.0)?.value;
    Ok(fl / (2.0 * (p - 1.0).abs()) * (eps * eps * std::f64::consts::PI).powf(-n / 2.0) * g)
}

/// Re-derived `ρ̂(t, 0) = f_L·e^{nβt}/(|1−p|·|αD(t)|^n)`, which is
/// `f_L/(|1−p|ε^n)` for `β = 0`.
pub fn observable_density_near_origin_derived(
    params: &ModelParams,
    dist: &InitialDistribution,
    eps: f64,
) -> Result<f64> {
    check_eps(eps)?;
    let p = params.p;
    if !(p > 0.0) || p == 1.0 {
        return Err(Error::OutOfRegime { p });
    }
    let fl = box_level(dist, params.n)?;
    let t = params.time_from_epsilon(eps)?;
    let n = params.n as i32;
    let ad = (params.alpha * params.drift_factor(t)).abs();
    Ok(fl * (n as f64 * params.beta * t).exp() / ((1.0 - p).abs() * ad.powi(n)))
}

/// Least-squares line through `(ln|x|, ln|y|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log space.
    pub max_residual: f64,
}

pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("fit", "need at least two paired values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.abs().ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.abs().ln()).collect();
    if lx.iter().chain(&ly).any(|v| !v.is_finite()) {
        return Err(invalid("fit", "values must be finite and nonzero"));
    }
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("fit", "abscissae must not all coincide"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).abs())
        .fold(0.0, f64::max);
    Ok(SlopeFit {
        slope,
        intercept,
        max_residual,
    })
}

/// Classification of an ε-slope of `|û|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Slope near −1: `|û|` grows like `1/ε`.
    BlowupLike,
    /// Slope near +1: `|û|` vanishes like `ε`.
    DecayLike,
    Indeterminate,
}

impl Verdict {
    pub fn classify(slope: f64, tol: f64) -> Self {
        if (slope + 1.0).abs() <= tol {
            Verdict::BlowupLike
        } else if (slope - 1.0).abs() <= tol {
            Verdict::DecayLike
        } else {
            Verdict::Indeterminate
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::BlowupLike => "blowup-like",
            Verdict::DecayLike => "decay-like",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, n: usize) -> ModelParams {
        ModelParams::new(-1.0, 0.0, 1.0, p, n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn printed_blowup_constant_example() {
        let c = blowup_coefficient(&params(2.0, 1)).unwrap();
        let g = specfun::gamma(0.75).unwrap().value / specfun::gamma(0.25).unwrap().value;
        assert!(rel(c, 0.5f64.powf(-0.125) * g) < 1e-13);
        assert!(rel(c, 0.36858) < 1e-4);
        assert_eq!(
            blowup_coefficient(&params(1.0, 1)),
            Err(Error::UndefinedAtP1)
        );
        assert!(matches!(
            blowup_coefficient(&params(0.5, 1)),
            Err(Error::OutOfRegime { .. })
        ));
    }

    #[test]
    fn blowup_constants_positive() {
        for n in 1..=3 {
            for p in [1.1, 1.5, 2.0, 3.0, 6.0] {
                assert!(blowup_coefficient(&params(p, n)).unwrap() > 0.0);
                assert!(blowup_coefficient_derived(&params(p, n)).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn derived_blowup_constant() {
        let c = blowup_coefficient_derived(&params(2.0, 1)).unwrap();
        assert!(rel(c, 0.47799) < 1e-4, "{c}");
        // Continuous in beta.
        let q = ModelParams::new(-1.0, 1e-7, 1.0, 2.0, 1).unwrap();
        assert!(rel(blowup_coefficient_derived(&q).unwrap(), c) < 1e-6);
    }

    #[test]
    fn printed_beta_constant_has_a_different_beta_limit() {
        let q = ModelParams::new(-1.0, 1e-4, 1.0, 2.0, 1).unwrap();
        let a = blowup_coefficient(&q).unwrap();
        let b = blowup_coefficient(&params(2.0, 1)).unwrap();
        assert!(rel(a, b) > 0.01, "{a} {b}");
    }

    #[test]
    fn near_t_examples() {
        let v = predicted_mean_near_t(&params(0.5, 1), 0.01, &[1.0]).unwrap()[0];
        assert!(rel(v, -100.0) < 1e-12);
        let v = predicted_mean_near_t(&params(1.0, 1), 0.01, &[1.0]).unwrap()[0];
        assert!(rel(v, -0.01) < 1e-12);
        let c = blowup_coefficient(&params(2.0, 1)).unwrap();
        let v = predicted_mean_near_t(&params(2.0, 1), 0.01, &[2.0]).unwrap()[0];
        assert!(rel(v, -c * 0.01) < 1e-12);
    }

    #[test]
    fn near_origin_examples() {
        let v = predicted_mean_near_origin(&params(2.0, 1), 0.5, &[0.001]).unwrap()[0];
        assert!(rel(v, -0.002) < 1e-12);
        assert_eq!(
            predicted_mean_near_origin(&params(2.0, 1), 1.0, &[1.0]).unwrap()[0],
            -1.0
        );
        let a = predicted_mean_near_origin(
            &ModelParams::new(-1.0, 1e-6, 1.0, 2.0, 1).unwrap(),
            0.3,
            &[1.0],
        )
        .unwrap()[0];
        let b = predicted_mean_near_origin(&params(2.0, 1), 0.3, &[1.0]).unwrap()[0];
        assert!(rel(a, b) < 1e-4);
        // Both branches equal 1/D(t).
        let q = ModelParams::new(-2.0, 0.5, 1.0, 2.0, 1).unwrap();
        let t = q.time_from_epsilon(0.3).unwrap();
        let a = predicted_mean_near_origin(&q, 0.3, &[1.0]).unwrap()[0];
        assert!(rel(a, 1.0 / q.drift_factor(t)) < 1e-12);
    }

    #[test]
    fn variance_examples() {
        let f = variance_coefficient(&params(6.0, 1)).unwrap();
        let want = specfun::gamma(0.25).unwrap().value / specfun::gamma(5.0 / 12.0).unwrap().value
            * 0.25f64.powf(1.0 / 6.0);
        assert!(rel(f, want) < 1e-13);
        assert!(
            rel(
                variance_coefficient_derived(&params(6.0, 1)).unwrap(),
                1.5182
            ) < 1e-4
        );
        assert_eq!(
            variance_asymptote(&params(0.5, 1), 0.1, &[1.0]).unwrap(),
            VarianceAsymptote::DivergenceExponent(-8.0 / 3.0)
        );
        assert_eq!(variance_divergence_exponent_derived(0.5).unwrap(), -4.0);
        assert!(matches!(
            variance_asymptote(&params(3.0, 1), 0.1, &[1.0]),
            Err(Error::OutOfRegime { .. })
        ));
        let v = variance_near_origin(&params(6.0, 1), 0.2).unwrap();
        let g = specfun::gamma(0.25).unwrap().value / specfun::gamma(0.5).unwrap().value;
        assert!(rel(v, g * (0.04f64 / (4.0 * 0.8)).powf(0.2)) < 1e-13);
    }

    #[test]
    fn density_near_origin_factor_two() {
        let d = InitialDistribution::uniform(1.0).unwrap();
        for p in [0.5, 2.0] {
            let a = observable_density_near_origin(&params(p, 1), &d, 0.1).unwrap();
            let b = observable_density_near_origin_derived(&params(p, 1), &d, 0.1).unwrap();
            assert!(rel(b, 2.0 * a) < 1e-13);
        }
    }

    #[test]
    fn slope_fit_exact_power() {
        let xs = [0.5, 1.0, 2.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        let f = fit_loglog_slope(&xs, &ys).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-13);
        assert!(f.max_residual < 1e-13);
        assert_eq!(Verdict::classify(-0.97, 0.05), Verdict::BlowupLike);
        assert_eq!(Verdict::classify(1.02, 0.05), Verdict::DecayLike);
        assert_eq!(Verdict::classify(0.3, 0.05), Verdict::Indeterminate);
    }
}
