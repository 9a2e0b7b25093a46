//! Acceptance criteria, one PASS/FAIL line each.
//!
//! A failing line carries the measured numbers and, where the cause is
//! known, the value the same quantity takes under the re-derived formula.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use burgers_lab::asymptotics::{
    blowup_coefficient, blowup_coefficient_derived, fit_loglog_slope,
    observable_density_near_origin, observable_density_near_origin_derived,
    predicted_mean_near_origin, variance_coefficient, variance_coefficient_derived,
    variance_divergence_exponent_derived,
};
use burgers_lab::closedform::{
    mean_p0_gaussian, mean_p0_uniform, mean_phalf_uniform_exact, mean_phalf_uniform_neareps,
    mean_phalf_uniform_neareps_printed,
};
use burgers_lab::density::{fp_residual, phase_density};
use burgers_lab::induced::{induced_velocity, v1_correction};
use burgers_lab::model::{InitialDistribution, ModelParams};
use burgers_lab::moments::{
    conditional_mean, conditional_variance, observable_density, QuadratureSpec,
};
use burgers_lab::montecarlo::{kernel_conditional_mean, sample_paths, KernelSpec};
use burgers_lab_cli::{run_with_threads, Experiment, ExperimentConfig};

type Check = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Check);

fn params(alpha: f64, beta: f64, p: f64) -> ModelParams {
    ModelParams::new(alpha, beta, 1.0, p, 1).unwrap()
}

fn uniform() -> InitialDistribution {
    InitialDistribution::uniform(1.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn mean1(
    q: &ModelParams,
    d: &InitialDistribution,
    t: f64,
    x: f64,
    s: &QuadratureSpec,
) -> Result<f64, String> {
    conditional_mean(q, d, t, &[x], s)
        .map(|m| m.value[0])
        .map_err(e)
}

const EPS_GRID: [f64; 5] = [0.9, 0.7, 0.5, 0.3, 0.1];
const X_GRID: [f64; 5] = [-2.0, -0.5, 0.25, 1.0, 3.0];

fn c1() -> Check {
    let start = Instant::now();
    let spec = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for (alpha, beta) in [(-1.0, 0.0), (-2.0, 1.0)] {
        let q = params(alpha, beta, 0.0);
        for eps in EPS_GRID {
            let t = q.time_from_epsilon(eps).map_err(e)?;
            for x in X_GRID {
                let m = mean1(&q, &uniform(), t, x, &spec)?;
                let c = mean_p0_uniform(&q, t, &[x]).map_err(e)?[0];
                worst = worst.max(rel(m, c));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-6 && secs < 10.0,
        format!("max relative deviation {worst:.2e} over 2x5x5 points (limit 1e-6), {secs:.2} s (limit 10 s)"),
    ))
}

fn c2() -> Check {
    let start = Instant::now();
    let spec = QuadratureSpec::default();
    let k = 1.0;
    let d = InitialDistribution::gaussian(k).unwrap();
    let q = params(-1.0, 0.0, 0.0);
    let mut worst = 0.0f64;
    for eps in EPS_GRID {
        let t = q.time_from_epsilon(eps).map_err(e)?;
        for x in X_GRID {
            let m = mean1(&q, &d, t, x, &spec)?;
            let c = mean_p0_gaussian(&q, k, t, &[x]).map_err(e)?[0];
            worst = worst.max(rel(m, c));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-6 && secs < 10.0,
        format!("max relative deviation {worst:.2e} over 5x5 points (limit 1e-6), {secs:.2} s (limit 10 s)"),
    ))
}

fn c3() -> Check {
    let start = Instant::now();
    let spec = QuadratureSpec::default();
    let eps = [0.04, 0.02, 0.01, 0.005];
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0] {
        let q = params(-1.0, 0.0, p);
        let mut v = Vec::new();
        for &ep in &eps {
            v.push(
                mean1(
                    &q,
                    &uniform(),
                    q.time_from_epsilon(ep).map_err(e)?,
                    1.0,
                    &spec,
                )?
                .abs(),
            );
        }
        let slope = fit_loglog_slope(&eps, &v).map_err(e)?.slope;
        let want = if p < 1.0 { -1.0 } else { 1.0 };
        ok &= (slope - want).abs() <= 0.05;
        parts.push(format!("p={p}: {slope:+.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    Ok((
        ok,
        format!(
            "slopes {} (targets -1/+1 within 0.05), {secs:.1} s",
            parts.join(", ")
        ),
    ))
}

fn c4() -> Check {
    let q = params(-1.0, 0.0, 2.0);
    let eps = 1e-3;
    let t = q.time_from_epsilon(eps).map_err(e)?;
    let x = 1.0f64;
    let u = mean1(&q, &uniform(), t, x, &QuadratureSpec::default())?;
    let c_emp = -u / (eps * x * x.abs().powf(2.0 * (1.0 - 2.0) / 2.0));
    let printed = blowup_coefficient(&q).map_err(e)?;
    let derived = blowup_coefficient_derived(&q).map_err(e)?;
    let dev = rel(c_emp, printed);
    Ok((
        dev <= 0.05,
        format!(
            "empirical C = {c_emp:.5} vs printed {printed:.5} ({:+.1}%, limit 5%); re-derived constant {derived:.5} is off by {:.2}%, with the remaining gap O(eps)",
            100.0 * (c_emp / printed - 1.0),
            100.0 * rel(c_emp, derived),
        ),
    ))
}

fn c5() -> Check {
    let q = params(-1.0, 0.0, 2.0);
    let t = q.time_from_epsilon(0.01).map_err(e)?;
    let xs = [0.5, 1.0, 2.0, 4.0];
    let mut v = Vec::new();
    for &x in &xs {
        v.push(mean1(&q, &uniform(), t, x, &QuadratureSpec::default())?.abs());
    }
    let fit = fit_loglog_slope(&xs, &v).map_err(e)?;
    Ok((
        fit.slope.abs() <= 0.05,
        format!(
            "|x|-exponent {:+.4} (target 0 within 0.05), max log residual {:.1e}",
            fit.slope, fit.max_residual
        ),
    ))
}

fn fd_slope(q: &ModelParams, t: f64, h: f64) -> Result<f64, String> {
    let s = QuadratureSpec::default();
    Ok((mean1(q, &uniform(), t, h, &s)? - mean1(q, &uniform(), t, -h, &s)?) / (2.0 * h))
}

fn c6() -> Check {
    let h = 1e-3;
    let mut ok = true;
    let mut bad = Vec::new();
    let mut n = 0;
    for (alpha, beta) in [(-1.0, 0.0), (-2.0, 1.0)] {
        for p in [0.5, 1.0, 2.0] {
            let q = params(alpha, beta, p);
            for eps in [0.5, 0.1] {
                let t = q.time_from_epsilon(eps).map_err(e)?;
                let slope = fd_slope(&q, t, h)?;
                let want = predicted_mean_near_origin(&q, eps, &[1.0]).map_err(e)?[0];
                n += 1;
                if rel(slope, want) > 0.01 {
                    ok = false;
                    let fine = fd_slope(&q, t, 1e-6)?;
                    bad.push(format!(
                        "beta={beta} p={p} eps={eps}: {slope:.5} vs {want:.5} ({:+.1}%; at h=1e-6 {:+.2}%)",
                        100.0 * (slope / want - 1.0),
                        100.0 * (fine / want - 1.0)
                    ));
                }
            }
        }
    }
    let mut msg = format!(
        "{}/{n} slopes within 1% of alpha/eps (beta=1: the damped coefficient)",
        n - bad.len()
    );
    if !bad.is_empty() {
        msg.push_str("; misses: ");
        msg.push_str(&bad.join("; "));
        msg.push_str(
            "; for p=1 the exact mean is D(t)x/(sigma^2 t), whose slope differs from alpha/eps; \
             for p>1 the linear range shrinks like eps^2, so h=1e-3 is outside it at eps=0.1",
        );
    }
    Ok((ok, msg))
}

fn c7() -> Check {
    let start = Instant::now();
    let dist = InitialDistribution::uniform(2.0).unwrap();
    let spec = QuadratureSpec::from_support();
    let kspec = KernelSpec::default();
    let mut worst = 0.0f64;
    let mut all_converged = true;
    for p in [0.0, 0.5, 1.0, 2.0] {
        let q = params(-1.0, 0.0, p);
        for eps in [0.5, 0.1] {
            let t = q.time_from_epsilon(eps).map_err(e)?;
            let s = sample_paths(&q, &dist, t, 1_000_000, 1).map_err(e)?;
            for x in [0.5, 1.0] {
                let quad = conditional_mean(&q, &dist, t, &[x], &spec).map_err(e)?;
                let mc = kernel_conditional_mean(&s, &[x], &kspec).map_err(e)?;
                all_converged &= mc.converged && quad.converged;
                let se = mc.error_bound.hypot(quad.error_bound);
                worst = worst.max((mc.value[0] - quad.value[0]).abs() / se);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 3.0 && all_converged && secs < 120.0,
        format!(
            "largest |MC - quadrature| = {worst:.2} combined SE over 16 points (limit 3), box L=2, 1e6 samples, {secs:.1} s (limit 120 s)"
        ),
    ))
}

/// Largest residual at steps `h` and `h/2` over the points.
fn worst_residual(
    points: &[(ModelParams, f64, f64, f64)],
    g: &InitialDistribution,
    h: f64,
) -> Result<(f64, f64), String> {
    let mut w = (0.0f64, 0.0f64);
    for (q, t, x, u) in points {
        let a = fp_residual(q, g, *t, &[*x], &[*u], h).map_err(e)?;
        if a > w.0 {
            w = (a, fp_residual(q, g, *t, &[*x], &[*u], 0.5 * h).map_err(e)?);
        }
    }
    Ok(w)
}

fn c8() -> Check {
    // The residual of a central-difference operator is O(h^2); the step is
    // small enough for the steepest sampled density and the reported order
    // shows the decay is truncation and not a defect of the formula.
    const H: f64 = 2.5e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = InitialDistribution::gaussian(1.0).unwrap();
    let mut flat = Vec::new();
    let mut damped = Vec::new();
    let mut worst_limit = 0.0f64;
    for i in 0..20 {
        let p = rng.random_range(0.0..3.0);
        let x = rng.random_range(-1.5..1.5);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let u = sign * rng.random_range(0.2..1.5);
        let frac = rng.random_range(0.1..0.9);

        let q0 = params(-1.0, 0.0, p);
        let t0 = frac * q0.critical_time().finite().unwrap();
        flat.push((q0, t0, x, u));

        let (alpha, beta) = if i % 2 == 0 { (-1.0, 0.5) } else { (-2.0, 1.0) };
        let qb = params(alpha, beta, p);
        let tb = frac * qb.critical_time().finite().unwrap();
        damped.push((qb, tb, x, u));

        let qs = params(-1.0, 1e-6, p);
        let a = phase_density(&q0, &g, t0, &[x], &[u]).map_err(e)?.value;
        let b = phase_density(&qs, &g, t0, &[x], &[u]).map_err(e)?.value;
        worst_limit = worst_limit.max(rel(b, a));
    }
    let (r0, r0_half) = worst_residual(&flat, &g, H)?;
    let (rb, rb_half) = worst_residual(&damped, &g, H)?;
    let coarse = worst_residual(&flat, &g, 1e-3)?
        .0
        .max(worst_residual(&damped, &g, 1e-3)?.0);
    Ok((
        r0 < 1e-4 && rb < 1e-4 && worst_limit < 1e-4,
        format!(
            "max residual at h={H:e}: {r0:.1e} (beta=0), {rb:.1e} (beta in {{0.5,1}}) over 20 points each (limit 1e-4); \
             observed order {:.2} and {:.2} on halving h; at h=1e-3 the max is {coarse:.1e}; \
             beta=1e-6 vs beta=0 density {worst_limit:.1e} (limit 1e-4)",
            (r0 / r0_half).log2(),
            (rb / rb_half).log2(),
        ),
    ))
}

fn c9() -> Check {
    let spec = QuadratureSpec::default();
    // (a)
    let q6 = params(-1.0, 0.0, 6.0);
    let t = q6.time_from_epsilon(1e-3).map_err(e)?;
    let v = conditional_variance(&q6, &uniform(), t, &[1.0], &spec)
        .map_err(e)?
        .value;
    let f = variance_coefficient(&q6).map_err(e)?;
    let fd = variance_coefficient_derived(&q6).map_err(e)?;
    let a_ok = rel(v, f) <= 0.02;
    // (b)
    let qh = params(-1.0, 0.0, 0.5);
    let eps = [0.004, 0.002, 0.001, 0.0005];
    let mut vs = Vec::new();
    for &ep in &eps {
        let t = qh.time_from_epsilon(ep).map_err(e)?;
        vs.push(
            conditional_variance(&qh, &uniform(), t, &[1.0], &spec)
                .map_err(e)?
                .value,
        );
    }
    let slope = fit_loglog_slope(&eps, &vs).map_err(e)?.slope;
    let want = -8.0 / 3.0;
    let b_ok = (slope - want).abs() <= 0.15;
    let derived_exp = variance_divergence_exponent_derived(0.5).map_err(e)?;
    // (c)
    let q0 = params(-1.0, 0.0, 0.0);
    let mut worst = 0.0f64;
    for t in [0.1, 0.4, 0.7, 0.95] {
        for x in [0.5, 1.0] {
            let v = conditional_variance(&q0, &uniform(), t, &[x], &spec)
                .map_err(e)?
                .value;
            let want = t / (t - 1.0f64).powi(2);
            worst = worst.max(rel(v, want));
        }
    }
    let c_ok = worst <= 1e-6;
    Ok((
        a_ok && b_ok && c_ok,
        format!(
            "(a) {} v = {v:.5} vs printed F = {f:.5} ({:+.1}%, limit 2%); re-derived F = {fd:.5} ({:+.2}%) \
             (b) {} exponent {slope:+.3} vs -8/3 (limit 0.15); re-derived exponent {derived_exp:+.0} \
             (c) {} max relative deviation {worst:.1e} from sigma^2 t/(t+1/alpha)^2 (limit 1e-6)",
            if a_ok { "pass" } else { "FAIL" },
            100.0 * (v / f - 1.0),
            100.0 * (v / fd - 1.0),
            if b_ok { "pass" } else { "FAIL" },
            if c_ok { "pass" } else { "FAIL" },
        ),
    ))
}

fn c10() -> Check {
    let q = params(-1.0, 0.0, 0.5);
    let spec = QuadratureSpec::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (eps, limit) in [(0.1, 0.10), (0.02, 0.03)] {
        let t = q.time_from_epsilon(eps).map_err(e)?;
        let quad = mean1(&q, &uniform(), t, 1.0, &spec)?;
        let lead = mean_phalf_uniform_neareps(&q, eps, &[1.0]).map_err(e)?[0];
        let printed = mean_phalf_uniform_neareps_printed(&q, eps, &[1.0]).map_err(e)?[0];
        let exact = mean_phalf_uniform_exact(&q, eps, &[1.0]).map_err(e)?[0];
        let d = rel(lead, quad);
        ok &= d <= limit;
        parts.push(format!(
            "eps={eps}: {:.2}% (limit {:.0}%; printed typography {:.1}%, exact Bessel form {:.1e})",
            100.0 * d,
            100.0 * limit,
            100.0 * rel(printed, quad),
            rel(exact, quad)
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn c11() -> Check {
    let q = params(-1.0, 0.0, 2.0);
    let spec = QuadratureSpec::default();
    let t = q.time_from_epsilon(0.2).map_err(e)?;
    let mut decomposition = true;
    let mut worst = 0.0f64;
    for x in [-1.7, -0.45, 0.08, 0.62, 2.3] {
        let v = induced_velocity(&q, &uniform(), t, x, &spec).map_err(e)?;
        let u = conditional_mean(&q, &uniform(), t, &[x], &spec).map_err(e)?;
        let v1 = v1_correction(&q, &uniform(), t, x, &spec).map_err(e)?;
        let r = (v.value - u.value[0] - v1.value).abs();
        let bound = v.error_bound + u.error_bound + v1.error_bound;
        decomposition &= r <= bound;
        worst = worst.max(r / bound);
    }
    let slope_over = |xs: &[f64]| -> Result<f64, String> {
        let mut v = Vec::new();
        for &x in xs {
            v.push(
                v1_correction(&q, &uniform(), t, x, &spec)
                    .map_err(e)?
                    .value
                    .abs(),
            );
        }
        Ok(fit_loglog_slope(xs, &v).map_err(e)?.slope)
    };
    let slope = slope_over(&[1e-2, 2e-2, 4e-2, 8e-2])?;
    let small = slope_over(&[1e-4, 2e-4, 4e-4, 8e-4])?;
    let cubic = (slope - 3.0).abs() <= 0.1;
    let zero = v1_correction(&q, &uniform(), t, 0.0, &spec)
        .map_err(e)?
        .value
        == 0.0;
    let mut msg = format!(
        "decomposition {} (largest residual {worst:.2} of its bound); cubic slope over x in [1e-2, 8e-2] {slope:.3} (target 3 within 0.1); v1(0) = 0 {}",
        if decomposition { "holds" } else { "FAILS" },
        if zero { "exactly" } else { "FAILS" },
    );
    if !cubic {
        msg.push_str(&format!(
            "; over x in [1e-4, 8e-4] the slope is {small:.3}: the cubic range ends near x ~ 1e-3 at eps=0.2 and v1 changes sign near x ~ 1e-2"
        ));
    }
    Ok((decomposition && cubic && zero, msg))
}

fn c12() -> Check {
    let spec = QuadratureSpec::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.5, 2.0] {
        let q = params(-1.0, 0.0, p);
        let t = q.time_from_epsilon(0.1).map_err(e)?;
        let r = observable_density(&q, &uniform(), t, &[0.0], &spec)
            .map_err(e)?
            .value;
        let printed = observable_density_near_origin(&q, &uniform(), 0.1).map_err(e)?;
        let derived = observable_density_near_origin_derived(&q, &uniform(), 0.1).map_err(e)?;
        ok &= rel(r, printed) <= 0.02;
        parts.push(format!(
            "p={p}: rho(0) = {r:.5} vs printed {printed:.5} (ratio {:.4}, limit 2%), re-derived {derived:.5} ({:.1e})",
            r / printed,
            rel(r, derived)
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn c13() -> Check {
    let start = Instant::now();
    let mut raw = BTreeMap::new();
    raw.insert("seed".to_string(), "7".to_string());
    raw.insert("count".to_string(), "50000".to_string());
    let mut bad = Vec::new();
    for exp in Experiment::ALL {
        let cfg = ExperimentConfig::from_map(exp, &raw).map_err(e)?;
        let one = run_with_threads(&cfg, Some(1)).map_err(e)?.to_csv();
        let many = run_with_threads(&cfg, Some(16)).map_err(e)?.to_csv();
        let again = run_with_threads(&cfg, Some(16)).map_err(e)?.to_csv();
        if one != many || many != again {
            bad.push(exp.name());
        }
    }
    Ok((
        bad.is_empty(),
        format!(
            "{} experiments byte-identical across 1 and 16 threads and repeated runs{}, {:.1} s",
            Experiment::ALL.len() - bad.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; differing: {}", bad.join(", "))
            },
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("closed-form mean, p=0, uniform", c1),
        ("closed-form mean, p=0, gaussian", c2),
        ("threshold reproduction", c3),
        ("blow-up constant C", c4),
        ("spatial power law, p=2", c5),
        ("near-origin slope", c6),
        ("Monte Carlo triangle", c7),
        ("Fokker-Planck residual", c8),
        ("variance asymptotics", c9),
        ("p=1/2 Bessel formula", c10),
        ("induced velocity", c11),
        ("observable density at the origin", c12),
        ("determinism", c13),
    ];
    let mut passed = 0;
    let mut total = Duration::ZERO;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, msg) = match f() {
            Ok(r) => r,
            Err(err) => (false, format!("error: {err}")),
        };
        total += start.elapsed();
        if ok {
            passed += 1;
        }
        println!(
            "{} [{:>2}] {name}: {msg}",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!(
        "acceptance: {passed}/{} criteria pass ({:.1} s)",
        criteria.len(),
        total.as_secs_f64()
    );
    if passed != criteria.len() {
        std::process::exit(1);
    }
}
