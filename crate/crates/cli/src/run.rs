//! Experiment drivers.
//!
//! Every driver expands its grid into points, evaluates the points on the
//! rayon pool and collects rows in grid order, so the table does not depend
//! on scheduling.

use rayon::prelude::*;

use burgers_lab::asymptotics::{self, fit_loglog_slope, Regime, Verdict};
use burgers_lab::closedform;
use burgers_lab::error::Error;
use burgers_lab::induced;
use burgers_lab::model::{burgers_exact, InitialDistribution, ModelParams};
use burgers_lab::moments::{
    conditional_mean, conditional_variance, observable_density, MomentEstimate, QuadratureSpec,
};
use burgers_lab::montecarlo::{kernel_conditional_mean, kernel_conditional_variance, sample_paths};

use crate::config::{Experiment, ExperimentConfig, McQuantity, PredictionForm, TimeAxis};
use crate::table::{ResultTable, Row, Status};
use crate::CliError;

type Core<T> = Result<T, Error>;

#[derive(Debug, Clone, Copy)]
struct Point {
    p: f64,
    eps: Option<f64>,
    t: f64,
    x: f64,
}

impl Point {
    fn row(&self, quantity: &'static str, method: &'static str) -> Row {
        Row {
            p: self.p,
            epsilon: self.eps,
            t: Some(self.t),
            x: Some(self.x),
            quantity,
            value: f64::NAN,
            error_bound: 0.0,
            method,
            regime: Regime::of(self.p).name(),
            prediction: None,
            status: Status::Converged,
            note: String::new(),
        }
    }

    fn estimate(&self, quantity: &'static str, e: &MomentEstimate<f64>) -> Row {
        Row {
            value: e.value,
            error_bound: e.error_bound,
            status: if e.converged {
                Status::Converged
            } else {
                Status::NotConverged
            },
            ..self.row(quantity, e.method.module())
        }
    }

    fn failure(&self, quantity: &'static str, method: &'static str, e: &Error) -> Row {
        Row {
            status: Status::Failed,
            note: format!("error at p={} t={} x={}: {e}", self.p, self.t, self.x),
            ..self.row(quantity, method)
        }
    }
}

fn summary_row(p: f64, quantity: &'static str, method: &'static str, x: Option<f64>) -> Row {
    Row {
        p,
        epsilon: None,
        t: None,
        x,
        quantity,
        value: f64::NAN,
        error_bound: 0.0,
        method,
        regime: Regime::of(p).name(),
        prediction: None,
        status: Status::Converged,
        note: String::new(),
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
}

impl Ctx<'_> {
    fn params(&self, p: f64) -> Core<ModelParams> {
        self.cfg.params.with_p(p)
    }

    fn spec(&self) -> &QuadratureSpec {
        &self.cfg.quadrature
    }

    fn xv(&self, x: f64) -> Vec<f64> {
        self.cfg.x_point(x)
    }

    fn points(&self, ps: &[f64]) -> Vec<Point> {
        let times = self.cfg.time_points();
        let mut out = Vec::new();
        for &p in ps {
            for &(eps, t) in &times {
                for &x in &self.cfg.xs {
                    out.push(Point { p, eps, t, x });
                }
            }
        }
        out
    }

    fn derived(&self) -> bool {
        self.cfg.prediction == PredictionForm::Derived
    }

    fn mean(&self, pt: &Point) -> Core<MomentEstimate<f64>> {
        let q = self.params(pt.p)?;
        Ok(conditional_mean(&q, &self.cfg.dist, pt.t, &self.xv(pt.x), self.spec())?.map(|v| v[0]))
    }

    /// Closed form when one exists for the configuration, otherwise the
    /// leading term near the critical time.
    fn mean_prediction(&self, pt: &Point) -> Option<(f64, &'static str)> {
        let q = self.params(pt.p).ok()?;
        let xv = self.xv(pt.x);
        let dist = &self.cfg.dist;
        let closed = match *dist {
            InitialDistribution::UniformBox { .. } if pt.p == 0.0 => {
                closedform::mean_p0_uniform(&q, pt.t, &xv).ok()
            }
            InitialDistribution::Gaussian { k } if pt.p == 0.0 => {
                closedform::mean_p0_gaussian(&q, k, pt.t, &xv).ok()
            }
            InitialDistribution::UniformBox { .. } if pt.p == 0.5 => pt
                .eps
                .and_then(|e| closedform::mean_phalf_uniform_exact(&q, e, &xv).ok()),
            _ => None,
        };
        if let Some(v) = closed {
            return Some((v[0], "prediction: closedform"));
        }
        if !matches!(dist, InitialDistribution::UniformBox { .. }) {
            return None;
        }
        let eps = pt.eps?;
        let v = if self.derived() {
            asymptotics::predicted_mean_near_t_derived(&q, eps, &xv)
        } else {
            asymptotics::predicted_mean_near_t(&q, eps, &xv)
        };
        v.ok().map(|v| (v[0], "prediction: asymptotics near T"))
    }

    fn variance_prediction(&self, pt: &Point) -> Option<(f64, &'static str)> {
        let q = self.params(pt.p).ok()?;
        let derived = self.derived();
        match self.cfg.dist {
            InitialDistribution::UniformBox { .. } if pt.p == 0.0 => {
                let v = if derived {
                    closedform::variance_p0_uniform(&q, pt.t)
                } else {
                    closedform::variance_p0_uniform_printed(&q, pt.t)
                };
                v.ok().map(|v| (v, "prediction: closedform"))
            }
            InitialDistribution::Gaussian { k } if pt.p == 0.0 => {
                closedform::variance_p0_gaussian(&q, k, pt.t)
                    .ok()
                    .map(|v| (v, "prediction: closedform"))
            }
            InitialDistribution::UniformBox { .. } => {
                let eps = pt.eps?;
                let v = if pt.x == 0.0 {
                    if derived {
                        asymptotics::variance_near_origin_derived(&q, eps)
                    } else {
                        asymptotics::variance_near_origin(&q, eps)
                    }
                } else if derived {
                    asymptotics::variance_coefficient_derived(&q)
                } else {
                    asymptotics::variance_coefficient(&q)
                };
                v.ok().map(|v| (v, "prediction: asymptotics"))
            }
            _ => None,
        }
    }

    fn variance(&self, pt: &Point) -> Row {
        let eval = || -> Core<MomentEstimate<f64>> {
            let q = self.params(pt.p)?;
            conditional_variance(&q, &self.cfg.dist, pt.t, &self.xv(pt.x), self.spec())
        };
        let mut row = match eval() {
            Ok(e) => pt.estimate("variance", &e),
            Err(Error::DivergentIntegral(why)) => Row {
                value: f64::INFINITY,
                note: format!("divergent: {why}"),
                ..pt.row("variance", "moments")
            },
            Err(e) => return pt.failure("variance", "moments", &e),
        };
        if row.value.is_finite() {
            if let Some((v, note)) = self.variance_prediction(pt) {
                row.prediction = Some(v);
                row.note = note.into();
            }
        }
        row
    }

    fn mean_row(&self, pt: &Point) -> Row {
        match self.mean(pt) {
            Ok(e) => {
                let mut row = pt.estimate("mean", &e);
                if let Some((v, note)) = self.mean_prediction(pt) {
                    row.prediction = Some(v);
                    row.note = note.into();
                }
                row
            }
            Err(e) => pt.failure("mean", "moments", &e),
        }
    }
}

fn par_rows(points: &[Point], f: impl Fn(&Point) -> Vec<Row> + Sync + Send) -> Vec<Row> {
    points
        .par_iter()
        .map(f)
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn exact(ctx: &Ctx) -> Vec<Row> {
    par_rows(&ctx.points(&ctx.cfg.p_values), |pt| {
        let r = ctx
            .params(pt.p)
            .and_then(|q| burgers_exact(&q, pt.t, &ctx.xv(pt.x)));
        vec![match r {
            Ok(v) => Row {
                value: v[0],
                ..pt.row("u", "model")
            },
            Err(e) => pt.failure("u", "model", &e),
        }]
    })
}

fn density(ctx: &Ctx) -> Vec<Row> {
    par_rows(&ctx.points(&ctx.cfg.p_values), |pt| {
        let r = ctx
            .params(pt.p)
            .and_then(|q| observable_density(&q, &ctx.cfg.dist, pt.t, &ctx.xv(pt.x), ctx.spec()));
        let mut row = match r {
            Ok(e) => pt.estimate("density", &e),
            Err(e) => return vec![pt.failure("density", "moments", &e)],
        };
        if let (0.0, Some(eps), Ok(q)) = (pt.x, pt.eps, ctx.params(pt.p)) {
            let pred = if ctx.derived() {
                asymptotics::observable_density_near_origin_derived(&q, &ctx.cfg.dist, eps)
            } else {
                asymptotics::observable_density_near_origin(&q, &ctx.cfg.dist, eps)
            };
            if let Ok(v) = pred {
                row.prediction = Some(v);
                row.note = "prediction: asymptotics near origin".into();
            }
        }
        vec![row]
    })
}

fn mean(ctx: &Ctx) -> Vec<Row> {
    par_rows(&ctx.points(&ctx.cfg.p_values), |pt| vec![ctx.mean_row(pt)])
}

fn variance(ctx: &Ctx) -> Vec<Row> {
    par_rows(&ctx.points(&ctx.cfg.p_values), |pt| vec![ctx.variance(pt)])
}

fn monte_carlo(ctx: &Ctx) -> Vec<Row> {
    let cfg = ctx.cfg;
    let mut rows = Vec::new();
    for &p in &cfg.p_values {
        for &(eps, t) in &cfg.time_points() {
            let pts: Vec<Point> = cfg.xs.iter().map(|&x| Point { p, eps, t, x }).collect();
            let samples = ctx
                .params(p)
                .and_then(|q| sample_paths(&q, &cfg.dist, t, cfg.mc.count, cfg.mc.seed));
            let samples = match samples {
                Ok(s) => s,
                Err(e) => {
                    rows.extend(pts.iter().map(|pt| pt.failure("mean", "montecarlo", &e)));
                    continue;
                }
            };
            rows.extend(par_rows(&pts, |pt| {
                let xv = ctx.xv(pt.x);
                let (quantity, mc, quad) = match cfg.mc.quantity {
                    McQuantity::Mean => (
                        "mean",
                        kernel_conditional_mean(&samples, &xv, &cfg.mc.kernel)
                            .map(|e| e.map(|v| v[0])),
                        ctx.mean(pt).map(|e| e.value),
                    ),
                    McQuantity::Variance => (
                        "variance",
                        kernel_conditional_variance(&samples, &xv, &cfg.mc.kernel),
                        ctx.params(pt.p)
                            .and_then(|q| {
                                conditional_variance(&q, &cfg.dist, pt.t, &xv, ctx.spec())
                            })
                            .map(|e| e.value),
                    ),
                };
                let mut row = match mc {
                    Ok(e) => pt.estimate(quantity, &e),
                    Err(e) => return vec![pt.failure(quantity, "montecarlo", &e)],
                };
                match quad {
                    Ok(v) => {
                        row.prediction = Some(v);
                        row.note = "prediction: moments".into();
                    }
                    Err(e) => row.note = format!("no quadrature reference: {e}"),
                }
                vec![row]
            }));
        }
    }
    rows
}

/// `x|x|^{2(1−p)/p}` along the first axis.
fn blowup_scale(p: f64, x: f64) -> f64 {
    x * x.abs().powf(2.0 * (1.0 - p) / p)
}

fn asymptotic(ctx: &Ctx) -> Vec<Row> {
    let cfg = ctx.cfg;
    let n = cfg.params.n as f64;
    let points = ctx.points(&cfg.p_values);
    let mut rows = par_rows(&points, |pt| {
        let mut out = vec![ctx.mean_row(pt)];
        let q = match ctx.params(pt.p) {
            Ok(q) => q,
            Err(_) => return out,
        };
        if let (Some(eps), true) = (pt.eps, pt.p > 1.0) {
            let m = &out[0];
            if m.status != Status::Failed && pt.x != 0.0 {
                let scale = eps * blowup_scale(pt.p, pt.x);
                let c = if ctx.derived() {
                    asymptotics::blowup_coefficient_derived(&q)
                } else {
                    asymptotics::blowup_coefficient(&q)
                };
                out.push(Row {
                    value: -m.value / scale,
                    error_bound: m.error_bound / scale.abs(),
                    prediction: c.ok(),
                    status: m.status,
                    ..pt.row("blowup_coefficient", "asymptotics")
                });
            }
        }
        if pt.p < 1.0 || pt.p > 1.0 + 2.0 / n {
            out.push(ctx.variance(pt));
        }
        out
    });
    // Linear extrapolation of the coefficient to ε = 0 from the two
    // smallest ε of the grid.
    if let TimeAxis::Epsilon(eps) = &cfg.times {
        let mut order: Vec<usize> = (0..eps.len()).collect();
        order.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]));
        if order.len() >= 2 {
            let (e1, e2) = (eps[order[1]], eps[order[0]]);
            for &p in cfg.p_values.iter().filter(|&&p| p > 1.0) {
                for &x in &cfg.xs {
                    let pick = |e: f64| {
                        rows.iter().find(|r| {
                            r.quantity == "blowup_coefficient"
                                && r.p == p
                                && r.x == Some(x)
                                && r.epsilon == Some(e)
                        })
                    };
                    if let (Some(a), Some(b)) = (pick(e1), pick(e2)) {
                        let value = (e1 * b.value - e2 * a.value) / (e1 - e2);
                        let mut row = Row {
                            value,
                            error_bound: a.error_bound.max(b.error_bound) * (e1 + e2) / (e1 - e2),
                            prediction: a.prediction,
                            status: if a.status == b.status {
                                a.status
                            } else {
                                Status::NotConverged
                            },
                            note: format!("extrapolated from epsilon={e1},{e2}"),
                            ..summary_row(
                                p,
                                "blowup_coefficient_extrapolated",
                                "asymptotics",
                                Some(x),
                            )
                        };
                        if !value.is_finite() {
                            row.status = Status::Failed;
                        }
                        rows.push(row);
                    }
                }
            }
        }
    }
    rows
}

fn slope_row(
    p: f64,
    x: f64,
    quantity: &'static str,
    eps: &[f64],
    vals: &[f64],
    prediction: Option<f64>,
) -> Row {
    let mut row = summary_row(p, quantity, "asymptotics", Some(x));
    let mags: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
    match fit_loglog_slope(eps, &mags) {
        Ok(fit) => {
            row.value = fit.slope;
            row.error_bound = fit.max_residual;
            row.prediction = prediction;
            row.note = Verdict::classify(fit.slope, 0.25).name().to_string();
        }
        Err(e) => {
            row.status = Status::Failed;
            row.note = format!("error: {e}");
        }
    }
    row
}

/// Rows of one `(p, x)` series across the ε grid, in grid order.
fn series<'a>(rows: &'a [Row], quantity: &str, p: f64, x: f64) -> Vec<&'a Row> {
    rows.iter()
        .filter(|r| r.quantity == quantity && r.p == p && r.x == Some(x) && r.epsilon.is_some())
        .collect()
}

fn threshold_sweep(ctx: &Ctx) -> Result<Vec<Row>, CliError> {
    let cfg = ctx.cfg;
    let TimeAxis::Epsilon(_) = cfg.times else {
        return Err(CliError::ConfigInvalid {
            key: "epsilon".into(),
            reason: "threshold-sweep fits against an epsilon grid".into(),
        });
    };
    let mut rows = par_rows(&ctx.points(&cfg.p_values), |pt| vec![ctx.mean_row(pt)]);
    let mut fits = Vec::new();
    for &p in &cfg.p_values {
        for &x in &cfg.xs {
            let s = series(&rows, "mean", p, x);
            let mut row = slope_row(
                p,
                x,
                "epsilon_slope",
                &s.iter().map(|r| r.epsilon.unwrap()).collect::<Vec<_>>(),
                &s.iter().map(|r| r.value).collect::<Vec<_>>(),
                Some(if p < 1.0 { -1.0 } else { 1.0 }),
            );
            if s.iter().any(|r| r.status != Status::Converged) && row.status == Status::Converged {
                row.status = Status::NotConverged;
            }
            fits.push(row);
        }
    }
    rows.extend(fits);
    Ok(rows)
}

fn gaussian_f(ctx: &Ctx) -> Result<Vec<Row>, CliError> {
    let cfg = ctx.cfg;
    if !matches!(cfg.dist, InitialDistribution::Gaussian { .. }) {
        return Err(CliError::ConfigInvalid {
            key: "dist".into(),
            reason: "gaussian-f needs dist = gaussian".into(),
        });
    }
    let k = match cfg.dist {
        InitialDistribution::Gaussian { k } => k,
        _ => unreachable!(),
    };
    let mut rows = par_rows(&ctx.points(&cfg.p_values), |pt| {
        let mut row = match ctx.mean(pt) {
            Ok(e) => pt.estimate("mean", &e),
            Err(e) => return vec![pt.failure("mean", "moments", &e)],
        };
        let p0 = ctx
            .params(0.0)
            .and_then(|q| closedform::mean_p0_gaussian(&q, k, pt.t, &ctx.xv(pt.x)));
        if let Ok(v) = p0 {
            row.prediction = Some(v[0]);
            if pt.p < 1.0 {
                let dev = (row.value / v[0] - 1.0).abs();
                row.note = if dev <= 0.1 {
                    "tracks p=0 closed form"
                } else {
                    "departs from p=0 closed form"
                }
                .into();
            }
        }
        vec![row]
    });
    if let TimeAxis::Epsilon(_) = cfg.times {
        let uniform = InitialDistribution::uniform(1.0).expect("valid box");
        let mut extra = Vec::new();
        for &p in cfg.p_values.iter().filter(|&&p| p >= 1.0) {
            for &x in &cfg.xs {
                let s = series(&rows, "mean", p, x);
                if s.len() < 2 {
                    continue;
                }
                let eps: Vec<f64> = s.iter().map(|r| r.epsilon.unwrap()).collect();
                let reference: Core<Vec<f64>> = s
                    .par_iter()
                    .map(|r| {
                        let q = ctx.params(p)?;
                        Ok(
                            conditional_mean(&q, &uniform, r.t.unwrap(), &ctx.xv(x), ctx.spec())?
                                .value[0],
                        )
                    })
                    .collect();
                let vals: Vec<f64> = s.iter().map(|r| r.value).collect();
                let mut row = match &reference {
                    Ok(u) => {
                        let fit =
                            fit_loglog_slope(&eps, &u.iter().map(|v| v.abs()).collect::<Vec<_>>())
                                .ok();
                        slope_row(p, x, "epsilon_slope", &eps, &vals, fit.map(|f| f.slope))
                    }
                    Err(_) => slope_row(p, x, "epsilon_slope", &eps, &vals, None),
                };
                if let Ok(u) = &reference {
                    let agree = u.iter().zip(&vals).all(|(a, b)| a.signum() == b.signum());
                    row.note = format!(
                        "{}; sign {} uniform-f",
                        row.note,
                        if agree { "agrees with" } else { "differs from" }
                    );
                }
                extra.push(row);
            }
        }
        rows.extend(extra);
    }
    Ok(rows)
}

/// Exponent of the `(1+αt)` dependence expected for each power-law class.
fn powerlaw_class(exponent: f64) -> (&'static str, f64) {
    let classes = [("x(1+at)", 1.0), ("x", 0.0), ("x/(1+at)", -1.0)];
    classes
        .into_iter()
        .min_by(|a, b| (a.1 - exponent).abs().total_cmp(&(b.1 - exponent).abs()))
        .unwrap()
}

fn expected_powerlaw_exponent(s: f64) -> f64 {
    if s > 1.0 {
        1.0
    } else if s >= 0.5 {
        0.0
    } else {
        -1.0
    }
}

fn powerlaw_f(ctx: &Ctx) -> Result<Vec<Row>, CliError> {
    let cfg = ctx.cfg;
    let k = match cfg.dist {
        InitialDistribution::PowerLaw { k, .. } => k,
        _ => {
            return Err(CliError::ConfigInvalid {
                key: "dist".into(),
                reason: "powerlaw-f needs dist = powerlaw".into(),
            })
        }
    };
    if cfg.params.n != 1 {
        return Err(CliError::ConfigInvalid {
            key: "n".into(),
            reason: "power-law densities are one-dimensional".into(),
        });
    }
    let h = cfg.fd_step;
    let times = cfg.time_points();
    let mut jobs = Vec::new();
    for &s in &cfg.s_values {
        for &p in &cfg.p_values {
            for &(eps, t) in &times {
                jobs.push((s, Point { p, eps, t, x: 0.0 }));
            }
        }
    }
    let rows: Vec<Row> = jobs
        .par_iter()
        .map(|(s, pt)| {
            let dist = InitialDistribution::power_law(*s, k).expect("validated exponent");
            let r = ctx
                .params(pt.p)
                .and_then(|q| conditional_mean(&q, &dist, pt.t, &[h], ctx.spec()));
            let mut row = match r {
                Ok(e) => pt.estimate("origin_slope", &e.map(|v| v[0] / h)),
                Err(e) => pt.failure("origin_slope", "moments", &e),
            };
            row.error_bound /= h;
            let pred = ctx.params(pt.p).and_then(|q| {
                if ctx.derived() {
                    closedform::powerlaw_origin_slope_near_t(&q, *s, k, pt.t)
                } else {
                    closedform::powerlaw_origin_slope(&q, *s, k, pt.t)
                }
            });
            row.prediction = pred.ok();
            row.note = format!("s={s}");
            row
        })
        .collect();
    let alpha = cfg.params.alpha;
    let mut out = Vec::new();
    let mut start = 0;
    for &s in &cfg.s_values {
        for &p in &cfg.p_values {
            let block = &rows[start..start + times.len()];
            start += times.len();
            out.extend_from_slice(block);
            let mut row = summary_row(p, "one_plus_alpha_t_exponent", "asymptotics", Some(0.0));
            let xs: Vec<f64> = block
                .iter()
                .map(|r| (1.0 + alpha * r.t.unwrap()).abs())
                .collect();
            let ys: Vec<f64> = block.iter().map(|r| r.value.abs()).collect();
            match fit_loglog_slope(&xs, &ys) {
                Ok(fit) => {
                    let (class, _) = powerlaw_class(fit.slope);
                    row.value = fit.slope;
                    row.error_bound = fit.max_residual;
                    row.prediction = Some(expected_powerlaw_exponent(s));
                    row.note = format!("s={s}; observed class {class}");
                    if block.iter().any(|r| r.status != Status::Converged) {
                        row.status = Status::NotConverged;
                    }
                }
                Err(e) => {
                    row.status = Status::Failed;
                    row.note = format!("s={s}; error: {e}");
                }
            }
            out.push(row);
        }
    }
    Ok(out)
}

fn viscous_residual(ctx: &Ctx) -> Result<Vec<Row>, CliError> {
    let cfg = ctx.cfg;
    if cfg.params.n != 1 {
        return Err(CliError::ConfigInvalid {
            key: "n".into(),
            reason: "viscous-residual is one-dimensional".into(),
        });
    }
    if cfg.p_values.iter().any(|&p| p != 0.0) {
        return Err(CliError::ConfigInvalid {
            key: "p".into(),
            reason: "viscous-residual uses the p = 0 closed forms; set p = 0".into(),
        });
    }
    let q = ctx.params(0.0).map_err(|e| CliError::ConfigInvalid {
        key: "p".into(),
        reason: e.to_string(),
    })?;
    let u = |t: f64, x: f64| -> Core<f64> {
        Ok(match cfg.dist {
            InitialDistribution::Gaussian { k } => closedform::mean_p0_gaussian(&q, k, t, &[x])?[0],
            InitialDistribution::UniformBox { .. } => closedform::mean_p0_uniform(&q, t, &[x])?[0],
            InitialDistribution::PowerLaw { .. } => unreachable!(),
        })
    };
    if matches!(cfg.dist, InitialDistribution::PowerLaw { .. }) {
        return Err(CliError::ConfigInvalid {
            key: "dist".into(),
            reason: "viscous-residual needs a closed form: uniform or gaussian".into(),
        });
    }
    let tc = q.critical_time().finite();
    let points = ctx.points(&[0.0]);
    // (u_t + u u_x, u_xx) at each grid point by central differences.
    let parts: Vec<Core<(f64, f64)>> = points
        .par_iter()
        .map(|pt| {
            let room = tc.map_or(pt.t, |tc| pt.t.min(tc - pt.t));
            let ht = cfg.fd_step * room;
            let hx = cfg.fd_step * pt.x.abs().max(1.0);
            let u0 = u(pt.t, pt.x)?;
            let dt =
                |h: f64| -> Core<f64> { Ok((u(pt.t + h, pt.x)? - u(pt.t - h, pt.x)?) / (2.0 * h)) };
            let ut = (4.0 * dt(0.5 * ht)? - dt(ht)?) / 3.0;
            let (up, um) = (u(pt.t, pt.x + hx)?, u(pt.t, pt.x - hx)?);
            let ux = (up - um) / (2.0 * hx);
            let uxx = (up - 2.0 * u0 + um) / (hx * hx);
            Ok((ut + u0 * ux, uxx))
        })
        .collect();
    let mut rows = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &nu in &cfg.nu {
        let mut worst = 0.0f64;
        let mut failed = false;
        for (pt, part) in points.iter().zip(&parts) {
            let mut row = match part {
                Ok((lhs, uxx)) => {
                    let r = (lhs - nu * uxx).abs();
                    worst = worst.max(r);
                    Row {
                        value: r,
                        ..pt.row("viscous_residual", "closedform")
                    }
                }
                Err(e) => {
                    failed = true;
                    pt.failure("viscous_residual", "closedform", e)
                }
            };
            row.note = format!("nu={nu}; {}", row.note)
                .trim_end_matches("; ")
                .to_string();
            rows.push(row);
        }
        let mut row = summary_row(0.0, "max_viscous_residual", "closedform", None);
        row.value = worst;
        row.note = format!("nu={nu}");
        if failed {
            row.status = Status::Failed;
        }
        rows.push(row);
        if !failed && best.is_none_or(|(_, w)| worst < w) {
            best = Some((nu, worst));
        }
    }
    let mut row = summary_row(0.0, "min_over_nu_max_residual", "closedform", None);
    match best {
        Some((nu, w)) => {
            row.value = w;
            row.note = format!("attained at nu={nu}");
        }
        None => row.status = Status::Failed,
    }
    rows.push(row);
    Ok(rows)
}

fn induced_rows(ctx: &Ctx) -> Result<Vec<Row>, CliError> {
    let cfg = ctx.cfg;
    if cfg.params.n != 1 {
        return Err(CliError::ConfigInvalid {
            key: "n".into(),
            reason: "the induced velocity is one-dimensional".into(),
        });
    }
    Ok(par_rows(&ctx.points(&cfg.p_values), |pt| {
        let q = match ctx.params(pt.p) {
            Ok(q) => q,
            Err(e) => return vec![pt.failure("induced_velocity", "induced", &e)],
        };
        let d = &cfg.dist;
        let v = induced::induced_velocity(&q, d, pt.t, pt.x, ctx.spec());
        let u = ctx.mean(pt);
        let v1 = induced::v1_correction(&q, d, pt.t, pt.x, ctx.spec());
        let mut out = Vec::new();
        out.push(match &v {
            Ok(e) => pt.estimate("induced_velocity", e),
            Err(e) => pt.failure("induced_velocity", "induced", e),
        });
        out.push(match &u {
            Ok(e) => pt.estimate("mean", e),
            Err(e) => pt.failure("mean", "moments", e),
        });
        out.push(match &v1 {
            Ok(e) => Row {
                method: "induced",
                ..pt.estimate("v1_correction", e)
            },
            Err(e) => pt.failure("v1_correction", "induced", e),
        });
        out[0].method = "induced";
        if let (Ok(v), Ok(u), Ok(v1)) = (&v, &u, &v1) {
            let resid = (v.value - u.value - v1.value).abs();
            let bound = v.error_bound + u.error_bound + v1.error_bound;
            out.push(Row {
                value: resid,
                error_bound: bound,
                status: if resid <= bound {
                    Status::Converged
                } else {
                    Status::NotConverged
                },
                note: if resid <= bound {
                    "within error bounds"
                } else {
                    "exceeds error bounds"
                }
                .into(),
                ..pt.row("decomposition_residual", "induced")
            });
        }
        out
    }))
}

/// Evaluate `cfg` on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, CliError> {
    let ctx = Ctx { cfg };
    let rows = match cfg.experiment {
        Experiment::Exact => exact(&ctx),
        Experiment::Density => density(&ctx),
        Experiment::Mean => mean(&ctx),
        Experiment::Variance => variance(&ctx),
        Experiment::MonteCarlo => monte_carlo(&ctx),
        Experiment::Asymptotics => asymptotic(&ctx),
        Experiment::ThresholdSweep => threshold_sweep(&ctx)?,
        Experiment::GaussianF => gaussian_f(&ctx)?,
        Experiment::PowerLawF => powerlaw_f(&ctx)?,
        Experiment::ViscousResidual => viscous_residual(&ctx)?,
        Experiment::Induced => induced_rows(&ctx)?,
    };
    let mut provenance = vec![
        format!("burgers-lab {}", env!("CARGO_PKG_VERSION")),
        format!("experiment={}", cfg.experiment.name()),
        format!("seed={}", cfg.mc.seed),
    ];
    provenance.extend(cfg.echo.iter().map(|(k, v)| format!("{k} = {v}")));
    let mut table = ResultTable { provenance, rows };
    let failed = table.failed();
    let unconverged = table.unconverged();
    let status = if failed > 0 {
        "error"
    } else if unconverged > 0 {
        "not-converged"
    } else {
        "ok"
    };
    table.provenance.push(format!(
        "status={status} rows={} failed={failed} unconverged={unconverged}",
        table.rows.len()
    ));
    Ok(table)
}

/// Evaluate `cfg` on a dedicated pool of `threads` workers.
pub fn run_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ResultTable, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| CliError::ConfigInvalid {
        key: "threads".into(),
        reason: e.to_string(),
    })?;
    pool.install(|| run_experiment(cfg))
}
