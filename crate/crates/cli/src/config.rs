//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, lists are comma separated.
//! Unset keys take the defaults listed in [`KEYS`]; a few keys have
//! experiment-specific defaults, marked `(per experiment)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use burgers_lab::model::{CriticalTime, InitialDistribution, ModelParams};
use burgers_lab::moments::{QuadratureSpec, Truncation};
use burgers_lab::montecarlo::{Bandwidth, KernelSpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Exact,
    Density,
    Mean,
    Variance,
    MonteCarlo,
    Asymptotics,
    ThresholdSweep,
    GaussianF,
    PowerLawF,
    ViscousResidual,
    Induced,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Exact,
        Experiment::Density,
        Experiment::Mean,
        Experiment::Variance,
        Experiment::MonteCarlo,
        Experiment::Asymptotics,
        Experiment::ThresholdSweep,
        Experiment::GaussianF,
        Experiment::PowerLawF,
        Experiment::ViscousResidual,
        Experiment::Induced,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Exact => "exact",
            Experiment::Density => "density",
            Experiment::Mean => "mean",
            Experiment::Variance => "variance",
            Experiment::MonteCarlo => "mc",
            Experiment::Asymptotics => "asymptotics",
            Experiment::ThresholdSweep => "threshold-sweep",
            Experiment::GaussianF => "gaussian-f",
            Experiment::PowerLawF => "powerlaw-f",
            Experiment::ViscousResidual => "viscous-residual",
            Experiment::Induced => "induced",
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| bad("experiment", format!("unknown experiment `{s}`")))
    }
}

/// Every accepted key: `(name, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "alpha",
        "-1",
        "initial velocity gradient; a finite critical time needs alpha < -beta",
    ),
    ("beta", "0", "linear damping rate, >= 0"),
    ("sigma", "1", "noise amplitude, > 0"),
    (
        "p",
        "0",
        "exponent of the velocity-dependent noise sigma|u|^p",
    ),
    ("n", "1", "spatial dimension"),
    (
        "p_values",
        "(per experiment)",
        "list of p for asymptotics, threshold-sweep and gaussian-f; default is p",
    ),
    (
        "dist",
        "(per experiment)",
        "initial density: uniform, gaussian or powerlaw",
    ),
    ("L", "1", "half-width of the uniform box"),
    ("k", "1", "scale of the gaussian and power-law densities"),
    ("s", "2", "power-law exponent, f ~ (1 + k^2 x^2)^-s"),
    (
        "s_values",
        "0.4,0.75,2",
        "list of power-law exponents for powerlaw-f",
    ),
    (
        "epsilon",
        "(per experiment)",
        "list of epsilon = 1 - t/T in (0, 1]; exclusive with t",
    ),
    ("t", "", "list of times; exclusive with epsilon"),
    ("x", "0.5,1", "list of positions along the first axis"),
    ("rel_tol", "1e-8", "relative quadrature tolerance"),
    ("abs_tol", "1e-12", "absolute quadrature tolerance"),
    ("max_subdivisions", "2000", "quadrature subdivision budget"),
    (
        "truncation",
        "adaptive",
        "velocity range: adaptive (constant-density limit) or support (finite box)",
    ),
    (
        "tail_target",
        "1e-12",
        "relative tail mass left out by adaptive truncation",
    ),
    ("count", "100000", "Monte Carlo sample count per time"),
    ("seed", "0", "Monte Carlo seed"),
    (
        "bandwidth",
        "auto",
        "kernel bandwidth: auto (Silverman) or a positive number",
    ),
    (
        "min_effective_samples",
        "100",
        "kernel effective sample size below which a row is flagged",
    ),
    (
        "mc_quantity",
        "mean",
        "mc estimates the conditional mean or variance",
    ),
    (
        "nu",
        "0.01,0.1,1,10",
        "list of viscosities for viscous-residual",
    ),
    (
        "fd_step",
        "1e-3",
        "finite-difference step for origin slopes and viscous residuals",
    ),
    (
        "prediction",
        "derived",
        "asymptotic constants: derived or printed",
    ),
];

pub fn key_help() -> String {
    let mut out = String::from("CONFIG KEYS (flat key = value, lists comma separated):\n");
    for (k, d, doc) in KEYS {
        let d = if d.is_empty() { "unset" } else { d };
        out.push_str(&format!("  {k:<22} [{d}] {doc}\n"));
    }
    out
}

fn bad(key: &str, reason: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Parse `key = value` text into a map. Later lines override earlier ones.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(&format!("line {}", i + 1), "expected `key = value`"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionForm {
    Derived,
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McQuantity {
    Mean,
    Variance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeAxis {
    Epsilon(Vec<f64>),
    Time(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub count: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub quantity: McQuantity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub params: ModelParams,
    pub dist: InitialDistribution,
    pub p_values: Vec<f64>,
    pub s_values: Vec<f64>,
    pub times: TimeAxis,
    pub xs: Vec<f64>,
    pub quadrature: QuadratureSpec,
    pub mc: McConfig,
    pub nu: Vec<f64>,
    pub fd_step: f64,
    pub prediction: PredictionForm,
    /// Resolved `(key, value)` pairs in [`KEYS`] order, echoed into the CSV.
    pub echo: Vec<(String, String)>,
}

struct Reader<'a> {
    raw: &'a BTreeMap<String, String>,
    echo: Vec<(String, String)>,
}

impl Reader<'_> {
    fn text(&mut self, key: &str, default: &str) -> String {
        let v = self
            .raw
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string());
        self.echo.push((key.to_string(), v.clone()));
        v
    }

    fn num<T: FromStr>(&mut self, key: &str, default: &str) -> Result<T, CliError> {
        let v = self.text(key, default);
        v.parse()
            .map_err(|_| bad(key, format!("cannot parse `{v}`")))
    }

    fn list(&mut self, key: &str, default: &str) -> Result<Vec<f64>, CliError> {
        let v = self.text(key, default);
        parse_list(key, &v)
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(key, format!("cannot parse `{s}` as a finite number")))
        })
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn core_error(e: burgers_lab::error::Error) -> CliError {
    match e {
        burgers_lab::error::Error::InvalidParameter { name, reason } => bad(name, reason),
        other => bad("config", other.to_string()),
    }
}

struct Defaults {
    dist: &'static str,
    epsilon: &'static str,
    p_values: Option<&'static str>,
}

fn defaults(e: Experiment) -> Defaults {
    let d = Defaults {
        dist: "uniform",
        epsilon: "0.5,0.2,0.1",
        p_values: None,
    };
    match e {
        Experiment::ThresholdSweep => Defaults {
            epsilon: "0.04,0.02,0.01,0.005",
            p_values: Some("0,0.25,0.5,0.75,1,1.5,2"),
            ..d
        },
        Experiment::GaussianF => Defaults {
            dist: "gaussian",
            p_values: Some("0,0.5,1,2"),
            ..d
        },
        Experiment::PowerLawF => Defaults {
            dist: "powerlaw",
            epsilon: "0.9,0.7,0.5,0.3,0.2,0.1",
            ..d
        },
        Experiment::ViscousResidual => Defaults {
            dist: "gaussian",
            epsilon: "0.9,0.7,0.5,0.3,0.1",
            ..d
        },
        Experiment::Asymptotics => Defaults {
            epsilon: "0.01,0.003,0.001",
            ..d
        },
        _ => d,
    }
}

impl ExperimentConfig {
    pub fn from_map(
        experiment: Experiment,
        raw: &BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        if let Some(k) = raw
            .keys()
            .find(|k| !KEYS.iter().any(|(name, _, _)| name == k))
        {
            return Err(bad(k, "unknown key; see --help"));
        }
        let defs = defaults(experiment);
        let mut r = Reader {
            raw,
            echo: Vec::new(),
        };

        let alpha: f64 = r.num("alpha", "-1")?;
        let beta: f64 = r.num("beta", "0")?;
        let sigma: f64 = r.num("sigma", "1")?;
        let p: f64 = r.num("p", "0")?;
        let n: usize = r.num("n", "1")?;
        let params = ModelParams::new(alpha, beta, sigma, p, n).map_err(core_error)?;
        let p_default = defs
            .p_values
            .map(str::to_string)
            .unwrap_or_else(|| p.to_string());
        let p_values = r.list("p_values", &p_default)?;
        if p_values.is_empty() {
            return Err(bad("p_values", "must not be empty"));
        }
        if let Some(q) = p_values.iter().find(|q| **q < 0.0) {
            return Err(bad("p_values", format!("p must be >= 0, got {q}")));
        }

        let dist_name = r.text("dist", defs.dist);
        let l: f64 = r.num("L", "1")?;
        let k: f64 = r.num("k", "1")?;
        let s: f64 = r.num("s", "2")?;
        let dist = match dist_name.as_str() {
            "uniform" => InitialDistribution::uniform(l),
            "gaussian" => InitialDistribution::gaussian(k),
            "powerlaw" => InitialDistribution::power_law(s, k),
            other => return Err(bad("dist", format!("unknown density `{other}`"))),
        }
        .map_err(core_error)?;
        dist.normalization(n)
            .map_err(|e| bad("dist", e.to_string()))?;
        let s_values = r.list("s_values", "0.4,0.75,2")?;
        if s_values.iter().any(|v| !(*v > 0.0)) {
            return Err(bad("s_values", "exponents must be > 0"));
        }

        let has_t = raw.contains_key("t");
        let has_eps = raw.contains_key("epsilon");
        if has_t && has_eps {
            return Err(bad("t", "set either t or epsilon, not both"));
        }
        let times = if has_t {
            let t = r.list("t", "")?;
            if let Some(bad_t) = t.iter().find(|t| !(**t > 0.0)) {
                return Err(bad("t", format!("times must be > 0, got {bad_t}")));
            }
            TimeAxis::Time(t)
        } else {
            let e = r.list("epsilon", defs.epsilon)?;
            if let Some(bad_e) = e.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
                return Err(bad(
                    "epsilon",
                    format!("values must lie in (0, 1], got {bad_e}"),
                ));
            }
            TimeAxis::Epsilon(e)
        };
        match &times {
            TimeAxis::Time(t) if t.is_empty() => return Err(bad("t", "grid is empty")),
            TimeAxis::Epsilon(e) if e.is_empty() => return Err(bad("epsilon", "grid is empty")),
            _ => {}
        }
        let xs = r.list("x", "0.5,1")?;
        if xs.is_empty() {
            return Err(bad("x", "grid is empty"));
        }

        let rel_tol: f64 = r.num("rel_tol", "1e-8")?;
        let abs_tol: f64 = r.num("abs_tol", "1e-12")?;
        let max_subdivisions: usize = r.num("max_subdivisions", "2000")?;
        let trunc = r.text("truncation", "adaptive");
        let tail_target: f64 = r.num("tail_target", "1e-12")?;
        let truncation = match trunc.as_str() {
            "adaptive" => Truncation::AdaptiveTail {
                target: tail_target,
            },
            "support" => Truncation::FromSupport,
            other => return Err(bad("truncation", format!("unknown truncation `{other}`"))),
        };
        let quadrature = QuadratureSpec {
            rel_tol,
            abs_tol,
            max_subdivisions,
            truncation,
            ..QuadratureSpec::default()
        };
        quadrature.validate().map_err(core_error)?;

        let count: usize = r.num("count", "100000")?;
        if count < 2 {
            return Err(bad("count", "need at least two samples"));
        }
        let seed: u64 = r.num("seed", "0")?;
        let bw = r.text("bandwidth", "auto");
        let bandwidth = if bw == "auto" {
            Bandwidth::AutoSilverman
        } else {
            match bw.parse::<f64>() {
                Ok(h) if h > 0.0 && h.is_finite() => Bandwidth::Fixed(h),
                _ => {
                    return Err(bad(
                        "bandwidth",
                        format!("expected `auto` or a positive number, got `{bw}`"),
                    ))
                }
            }
        };
        let min_effective_samples: f64 = r.num("min_effective_samples", "100")?;
        let quantity = match r.text("mc_quantity", "mean").as_str() {
            "mean" => McQuantity::Mean,
            "variance" => McQuantity::Variance,
            other => {
                return Err(bad(
                    "mc_quantity",
                    format!("expected mean or variance, got `{other}`"),
                ))
            }
        };
        let nu = r.list("nu", "0.01,0.1,1,10")?;
        if nu.is_empty() || nu.iter().any(|v| *v < 0.0) {
            return Err(bad("nu", "needs at least one viscosity, all >= 0"));
        }
        let fd_step: f64 = r.num("fd_step", "1e-3")?;
        if !(fd_step > 0.0) {
            return Err(bad("fd_step", "must be > 0"));
        }
        let prediction = match r.text("prediction", "derived").as_str() {
            "derived" => PredictionForm::Derived,
            "printed" => PredictionForm::Printed,
            other => {
                return Err(bad(
                    "prediction",
                    format!("expected derived or printed, got `{other}`"),
                ))
            }
        };

        let cfg = ExperimentConfig {
            experiment,
            params,
            dist,
            p_values,
            s_values,
            times,
            xs,
            quadrature,
            mc: McConfig {
                count,
                seed,
                kernel: KernelSpec {
                    bandwidth,
                    min_effective_samples,
                },
                quantity,
            },
            nu,
            fd_step,
            prediction,
            echo: canonical_echo(r.echo),
        };
        cfg.check_grid()?;
        Ok(cfg)
    }

    /// Every parameter set the experiment visits must have its times
    /// strictly before the critical time.
    fn check_grid(&self) -> Result<(), CliError> {
        let TimeAxis::Time(ts) = &self.times else {
            return match self.params.critical_time() {
                CriticalTime::Finite(_) => Ok(()),
                CriticalTime::NoBlowup => Err(bad(
                    "epsilon",
                    "needs alpha < -beta; use t for a non-blowup flow",
                )),
            };
        };
        if let CriticalTime::Finite(tc) = self.params.critical_time() {
            if let Some(t) = ts.iter().find(|t| **t >= tc) {
                return Err(bad(
                    "t",
                    format!("t = {t} is at or past the critical time {tc}"),
                ));
            }
        }
        Ok(())
    }

    /// `(ε, t)` pairs of the time grid; `ε` is absent without a critical time.
    pub fn time_points(&self) -> Vec<(Option<f64>, f64)> {
        match &self.times {
            TimeAxis::Epsilon(e) => e
                .iter()
                .map(|&e| {
                    (
                        Some(e),
                        self.params.time_from_epsilon(e).expect("validated epsilon"),
                    )
                })
                .collect(),
            TimeAxis::Time(ts) => {
                let tc = self.params.critical_time().finite();
                ts.iter().map(|&t| (tc.map(|tc| 1.0 - t / tc), t)).collect()
            }
        }
    }

    pub fn x_point(&self, x: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.params.n];
        v[0] = x;
        v
    }
}

/// Normalize echoed values: lists and numbers in their shortest
/// round-trip form, keys in [`KEYS`] order.
fn canonical_echo(raw: Vec<(String, String)>) -> Vec<(String, String)> {
    let map: BTreeMap<_, _> = raw.into_iter().collect();
    KEYS.iter()
        .filter_map(|(k, _, _)| map.get(*k).map(|v| (k.to_string(), v)))
        .map(|(k, v)| {
            let v = match parse_list(&k, v) {
                Ok(nums) if !v.is_empty() => fmt_list(&nums),
                _ => v.clone(),
            };
            (k, v)
        })
        .collect()
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.echo {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(e: Experiment, text: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::from_map(e, &parse_text(text)?)
    }

    #[test]
    fn defaults_validate() {
        for e in Experiment::ALL {
            cfg(e, "").unwrap();
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = cfg(Experiment::Mean, "alhpa = -1").unwrap_err();
        assert!(matches!(err, CliError::ConfigInvalid { ref key, .. } if key == "alhpa"));
    }

    #[test]
    fn field_level_messages() {
        for (text, key) in [
            ("sigma = 0", "sigma"),
            ("epsilon = 0.5, 1.5", "epsilon"),
            ("t = 2", "t"),
            ("x =", "x"),
            ("dist = cauchy", "dist"),
            ("t = 0.1\nepsilon = 0.5", "t"),
            ("bandwidth = -1", "bandwidth"),
        ] {
            match cfg(Experiment::Mean, text) {
                Err(CliError::ConfigInvalid { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn echo_round_trips() {
        let a = cfg(Experiment::Mean, "p = 0.50\nx = 1.0, 2\n# comment\n").unwrap();
        let b = cfg(Experiment::Mean, &a.to_string()).unwrap();
        assert_eq!(a.echo, b.echo);
        assert_eq!(a.xs, vec![1.0, 2.0]);
    }
}
