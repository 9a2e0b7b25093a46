//! Parameter records, critical time, the noise-free Burgers solution and the
//! initial particle densities.

use crate::error::{invalid, Error, Result};
use crate::specfun;
use std::f64::consts::PI;

/// Physical and stochastic parameters of the particle system
/// `dX = U dt + σ|U|^p dW`, `dU = −βU dt`, started from the linear profile
/// `u₀(x) = αx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub p: f64,
    pub n: usize,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64, p: f64, n: usize) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(invalid(
                "beta",
                format!("must be finite and >= 0, got {beta}"),
            ));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid(
                "sigma",
                format!("must be finite and > 0, got {sigma}"),
            ));
        }
        if !(p >= 0.0) || !p.is_finite() {
            return Err(invalid("p", format!("must be finite and >= 0, got {p}")));
        }
        if n == 0 {
            return Err(invalid("n", "dimension must be >= 1"));
        }
        Ok(Self {
            alpha,
            beta,
            sigma,
            p,
            n,
        })
    }

    pub fn with_p(self, p: f64) -> Result<Self> {
        Self::new(self.alpha, self.beta, self.sigma, p, self.n)
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        Self::new(self.alpha, beta, self.sigma, self.p, self.n)
    }

    pub fn critical_time(&self) -> CriticalTime {
        critical_time(self)
    }

    /// Time corresponding to `ε = 1 − t/T`.
    pub fn time_from_epsilon(&self, eps: f64) -> Result<f64> {
        match self.critical_time() {
            CriticalTime::Finite(tc) => {
                if !(0.0..=1.0).contains(&eps) {
                    return Err(invalid("epsilon", format!("must lie in [0, 1], got {eps}")));
                }
                Ok((1.0 - eps) * tc)
            }
            CriticalTime::NoBlowup => Err(invalid(
                "epsilon",
                "epsilon is undefined when the solution does not blow up",
            )),
        }
    }

    /// Position-noise time scale `τ(t)` such that the conditional position
    /// variance given the current velocity `u` is `σ²|u|^{2p} τ(t)`.
    pub fn noise_time(&self, t: f64) -> f64 {
        let k = 2.0 * self.p * self.beta;
        if k == 0.0 {
            t
        } else {
            (k * t).exp_m1() / k
        }
    }

    /// Drift coefficient `D(t)`: a particle with current velocity `u` started
    /// from `D(t)·u` in the noise-free flow.
    pub fn drift_factor(&self, t: f64) -> f64 {
        if self.beta == 0.0 {
            1.0 / self.alpha + t
        } else {
            (self.beta * t).exp() / self.alpha + (self.beta * t).exp_m1() / self.beta
        }
    }
}

/// Blow-up time of the linear-profile solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalTime {
    Finite(f64),
    NoBlowup,
}

impl CriticalTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            CriticalTime::Finite(t) => Some(t),
            CriticalTime::NoBlowup => None,
        }
    }
}

pub fn critical_time(params: &ModelParams) -> CriticalTime {
    let (a, b) = (params.alpha, params.beta);
    if a >= 0.0 || a >= -b {
        return CriticalTime::NoBlowup;
    }
    if b == 0.0 {
        CriticalTime::Finite(-1.0 / a)
    } else {
        // ln(α/(α+β)) = −ln(1 + β/α), written to stay accurate for small β.
        CriticalTime::Finite(-(b / a).ln_1p() / b)
    }
}

/// Noise-free velocity field `u(t,x)` for the linear initial profile.
pub fn burgers_exact(params: &ModelParams, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    if let CriticalTime::Finite(tc) = params.critical_time() {
        if t >= tc {
            return Err(Error::EvaluationAtOrPastBlowup { t, critical: tc });
        }
    }
    let (a, b) = (params.alpha, params.beta);
    let factor = if b == 0.0 {
        a / (1.0 + a * t)
    } else {
        // (1 − e^{−βt})/β computed without cancellation.
        let g = -(-b * t).exp_m1() / b;
        a * (-b * t).exp() / (1.0 + a * g)
    };
    Ok(x.iter().map(|xi| factor * xi).collect())
}

/// Initial particle density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDistribution {
    /// Constant `1/(2L)^n` on the cube `[−L, L]^n`.
    UniformBox { l: f64 },
    /// `(k/√π)^n exp(−k²|x|²)`.
    Gaussian { k: f64 },
    /// `c/(1 + k²x²)^s`, one dimension only. For `s ≤ 1/2` the profile is
    /// not integrable and `c = 1` is used; conditional moments do not depend
    /// on `c`.
    PowerLaw { s: f64, k: f64 },
}

impl InitialDistribution {
    pub fn uniform(l: f64) -> Result<Self> {
        if !(l > 0.0) {
            return Err(invalid("L", format!("must be > 0, got {l}")));
        }
        Ok(Self::UniformBox { l })
    }

    pub fn gaussian(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(invalid("k", format!("must be finite and > 0, got {k}")));
        }
        Ok(Self::Gaussian { k })
    }

    pub fn power_law(s: f64, k: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(invalid("s", format!("must be finite and > 0, got {s}")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(invalid("k", format!("must be finite and > 0, got {k}")));
        }
        Ok(Self::PowerLaw { s, k })
    }

    /// Normalization constant of the density in dimension `n`.
    pub fn normalization(&self, n: usize) -> Result<f64> {
        match *self {
            Self::UniformBox { l } => Ok((2.0 * l).powi(-(n as i32))),
            Self::Gaussian { k } => Ok((k / PI.sqrt()).powi(n as i32)),
            Self::PowerLaw { s, k } => {
                if n != 1 {
                    return Err(Error::UnsupportedDimension {
                        n,
                        reason: "power-law initial density is one-dimensional",
                    });
                }
                if s > 0.5 {
                    let lg = specfun::ln_gamma(s)? - specfun::ln_gamma(s - 0.5)?;
                    Ok(k * lg.exp() / PI.sqrt())
                } else {
                    Ok(1.0)
                }
            }
        }
    }

    /// `ln f(x)`, `−∞` outside the support.
    pub fn ln_density(&self, x: &[f64]) -> Result<f64> {
        let n = x.len();
        let ln_c = self.normalization(n)?.ln();
        Ok(match *self {
            Self::UniformBox { l } => {
                if x.iter().all(|xi| xi.abs() <= l) {
                    ln_c
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Gaussian { k } => ln_c - k * k * x.iter().map(|xi| xi * xi).sum::<f64>(),
            Self::PowerLaw { s, k } => ln_c - s * (k * k * x[0] * x[0]).ln_1p(),
        })
    }

    pub fn is_even(&self) -> bool {
        true
    }
}

pub fn initial_density(dist: &InitialDistribution, x: &[f64]) -> Result<f64> {
    Ok(dist.ln_density(x)?.exp())
}

/// Evaluation coordinates `(t, x)` with the derived `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub epsilon: Option<f64>,
}

impl EvalPoint {
    pub fn new(params: &ModelParams, t: f64, x: Vec<f64>) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(invalid("t", format!("must be >= 0, got {t}")));
        }
        if x.len() != params.n {
            return Err(invalid(
                "x",
                format!("expected {} components, got {}", params.n, x.len()),
            ));
        }
        let epsilon = params.critical_time().finite().map(|tc| 1.0 - t / tc);
        Ok(Self { t, x, epsilon })
    }

    pub fn from_epsilon(params: &ModelParams, eps: f64, x: Vec<f64>) -> Result<Self> {
        let t = params.time_from_epsilon(eps)?;
        let mut pt = Self::new(params, t, x)?;
        pt.epsilon = Some(eps);
        Ok(pt)
    }
}

/// Phase-space evaluation coordinates `(t, x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, beta: f64) -> ModelParams {
        ModelParams::new(alpha, beta, 1.0, 0.0, 1).unwrap()
    }

    #[test]
    fn critical_time_examples() {
        assert_eq!(critical_time(&params(-1.0, 0.0)), CriticalTime::Finite(1.0));
        assert_eq!(critical_time(&params(-0.5, 1.0)), CriticalTime::NoBlowup);
        assert_eq!(critical_time(&params(1.0, 0.0)), CriticalTime::NoBlowup);
        let t = critical_time(&params(-2.0, 1.0)).finite().unwrap();
        assert!((t - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn burgers_exact_examples() {
        let u = burgers_exact(&params(-1.0, 0.0), 0.5, &[2.0]).unwrap();
        assert!((u[0] + 4.0).abs() < 1e-14);
        let u = burgers_exact(&params(-2.0, 1.0), 0.0, &[3.0]).unwrap();
        assert_eq!(u[0], -6.0);
        let p = params(-2.0, 1.0);
        let direct = -2.0 * (-0.3f64).exp() / (1.0 + (-2.0) * (1.0 - (-0.3f64).exp()));
        let u = burgers_exact(&p, 0.3, &[1.0]).unwrap();
        assert!((u[0] - direct).abs() < 1e-14);
    }

    #[test]
    fn blowup_is_reached_and_past_is_error() {
        let p = params(-1.0, 0.0);
        let u = burgers_exact(&p, 1.0 - 1e-6, &[1.0]).unwrap();
        assert!(u[0].abs() > 1e5);
        assert!(matches!(
            burgers_exact(&p, 1.0, &[1.0]),
            Err(Error::EvaluationAtOrPastBlowup { .. })
        ));
        let p = params(-2.0, 1.0);
        let tc = p.critical_time().finite().unwrap();
        let u = burgers_exact(&p, tc * (1.0 - 1e-6), &[1.0]).unwrap();
        assert!(u[0].abs() > 1e5 * 2.0);
    }

    #[test]
    fn small_beta_matches_zero_beta() {
        let p0 = params(-1.0, 0.0);
        let p1 = params(-1.0, 1e-8);
        let t0 = p0.critical_time().finite().unwrap();
        let t1 = p1.critical_time().finite().unwrap();
        assert!(((t1 - t0) / t0).abs() < 1e-5);
        for &t in &[0.1, 0.5, 0.9] {
            let a = burgers_exact(&p0, t, &[1.3]).unwrap()[0];
            let b = burgers_exact(&p1, t, &[1.3]).unwrap()[0];
            assert!(((a - b) / a).abs() < 1e-5);
        }
        let d0 = p0.drift_factor(0.4);
        let d1 = p1.drift_factor(0.4);
        assert!(((d0 - d1) / d0).abs() < 1e-6);
    }

    #[test]
    fn initial_density_examples() {
        let u = InitialDistribution::uniform(1.0).unwrap();
        assert_eq!(initial_density(&u, &[0.5]).unwrap(), 0.5);
        assert_eq!(initial_density(&u, &[1.5]).unwrap(), 0.0);
        let g = InitialDistribution::gaussian(1.0).unwrap();
        assert!((initial_density(&g, &[0.0]).unwrap() - 0.5641895835477563).abs() < 1e-15);
        let pl = InitialDistribution::power_law(2.0, 1.0).unwrap();
        assert!(matches!(
            initial_density(&pl, &[0.0, 1.0]),
            Err(Error::UnsupportedDimension { .. })
        ));
    }

    #[test]
    fn power_law_normalization_is_exact() {
        // ∫ dx/(1+x²)² = π/2
        let pl = InitialDistribution::power_law(2.0, 1.0).unwrap();
        let c = pl.normalization(1).unwrap();
        assert!((c - 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn densities_are_even() {
        let dists = [
            InitialDistribution::uniform(1.3).unwrap(),
            InitialDistribution::gaussian(0.7).unwrap(),
            InitialDistribution::power_law(0.75, 2.0).unwrap(),
        ];
        for d in dists {
            for &x in &[0.1, 0.9, 1.29, 1.31, 4.0] {
                assert_eq!(
                    initial_density(&d, &[x]).unwrap(),
                    initial_density(&d, &[-x]).unwrap()
                );
            }
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(-1.0, 0.0, 0.0, 0.0, 1).is_err());
        assert!(ModelParams::new(-1.0, -0.1, 1.0, 0.0, 1).is_err());
        assert!(ModelParams::new(-1.0, 0.0, 1.0, -1.0, 1).is_err());
        assert!(ModelParams::new(-1.0, 0.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn eval_point_epsilon() {
        let p = params(-1.0, 0.0);
        let pt = EvalPoint::new(&p, 0.25, vec![1.0]).unwrap();
        assert_eq!(pt.epsilon, Some(0.75));
        let pt = EvalPoint::from_epsilon(&p, 0.1, vec![1.0]).unwrap();
        assert!((pt.t - 0.9).abs() < 1e-15);
    }
}
