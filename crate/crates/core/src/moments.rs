//! Conditional velocity moments and the observable density by quadrature
//! over the velocity variable.
//!
//! With `u = r·e`, `|e| = 1`, the density depends on `u` only through `r`
//! and `cos θ = e·x̂`:
//!
//! `P = A(r)·exp(κ cos θ)`, `κ = D|x| r^{1−2p}/(σ²τ)`,
//!
//! so every moment reduces to a radial integral with an angular factor that
//! is known in closed form for `n = 1` and is a one-dimensional integral
//! otherwise. Radial integrals are taken in `w = ln r`, which resolves the
//! essential singularity at `r = 0` and the algebraic tails at once, and are
//! evaluated in log-space relative to the peak of each integrand.

use crate::error::{invalid, Error, Result};
use crate::model::{CriticalTime, InitialDistribution, ModelParams};
use crate::quad::{self, QuadTol};
use crate::specfun;
use std::f64::consts::PI;

/// How the velocity domain is truncated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Integrate over the support of a finite box exactly (a ball of radius
    /// `|α|L e^{−βt}` for `n ≥ 2`). Other distributions behave as
    /// `AdaptiveTail` with the default target.
    FromSupport,
    /// Treat a box as the constant density `f_L` (the `L → ∞` limit) and
    /// stop each radial integral once the neglected tail is below `target`
    /// relative to the integrand peak.
    AdaptiveTail { target: f64 },
}

/// Geometric truncation sequence `L_j = base^j`, `j = first..=last`, used
/// when the truncated integrals diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LSequence {
    pub base: f64,
    pub first: i32,
    pub last: i32,
    pub tol: f64,
}

impl Default for LSequence {
    fn default() -> Self {
        Self {
            base: 2.0,
            first: 3,
            last: 20,
            tol: 1e-6,
        }
    }
}

impl LSequence {
    pub fn values(&self) -> Vec<f64> {
        (self.first..=self.last)
            .map(|j| self.base.powi(j))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub truncation: Truncation,
    pub l_sequence: LSequence,
}

pub const DEFAULT_TAIL_TARGET: f64 = 1e-12;

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 2000,
            truncation: Truncation::AdaptiveTail {
                target: DEFAULT_TAIL_TARGET,
            },
            l_sequence: LSequence::default(),
        }
    }
}

impl QuadratureSpec {
    pub fn from_support() -> Self {
        Self {
            truncation: Truncation::FromSupport,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(invalid("rel_tol", "must be > 0"));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(invalid("abs_tol", "must be >= 0"));
        }
        if self.max_subdivisions == 0 {
            return Err(invalid("max_subdivisions", "must be >= 1"));
        }
        if let Truncation::AdaptiveTail { target } = self.truncation {
            if !(target > 0.0 && target < 1.0) {
                return Err(invalid("tail_target", "must lie in (0, 1)"));
            }
        }
        let l = &self.l_sequence;
        if !(l.base > 1.0) || l.last <= l.first || !(l.tol > 0.0) {
            return Err(invalid(
                "l_sequence",
                "needs base > 1, last > first and tol > 0",
            ));
        }
        Ok(())
    }

    /// Tolerance a value of magnitude `v` is held to.
    pub fn tolerance_for(&self, v: f64) -> f64 {
        (self.rel_tol * v.abs()).max(self.abs_tol)
    }

    fn tail_target(&self) -> f64 {
        match self.truncation {
            Truncation::AdaptiveTail { target } => target,
            Truncation::FromSupport => DEFAULT_TAIL_TARGET,
        }
    }

    fn quad_tol(&self) -> QuadTol {
        QuadTol {
            rel: self.rel_tol / 4.0,
            abs: 1e-300,
            max_subdivisions: self.max_subdivisions,
        }
    }
}

/// Which procedure produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Quadrature,
    ClosedForm,
    MonteCarlo,
    Asymptotic,
}

impl Method {
    /// Name of the module that implements the method.
    pub fn module(&self) -> &'static str {
        match self {
            Method::Quadrature => "moments",
            Method::ClosedForm => "closedform",
            Method::MonteCarlo => "montecarlo",
            Method::Asymptotic => "asymptotics",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate<T> {
    pub value: T,
    pub error_bound: f64,
    pub method: Method,
    pub converged: bool,
}

impl<T> MomentEstimate<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> MomentEstimate<U> {
        MomentEstimate {
            value: f(self.value),
            error_bound: self.error_bound,
            method: self.method,
            converged: self.converged,
        }
    }
}

// ---------------------------------------------------------------------------
// Angular factors

/// Angular integrals of `exp(κ cos θ − |κ|)` over the unit sphere in `R^n`,
/// oriented so that `θ = 0` points along `sgn(κ)·x̂`.
#[derive(Debug, Clone)]
pub(crate) struct Angular {
    n: usize,
    /// Area of `S^{n−2}`.
    c: f64,
    /// `∫₀^π cos^{2m}φ sin^{n−2}φ dφ`.
    moments: Vec<f64>,
}

const SERIES_KAPPA: f64 = 2.0;

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct AngularValues {
    /// `∫ e^{κcosθ−|κ|} dS`.
    pub s0: f64,
    /// `|∫ cos θ e^{κcosθ−|κ|} dS|`.
    pub s1: f64,
    /// `∫ |r e − |m| x̂'|² e^{…} dS` in the orientation where the mean
    /// points along `θ = 0`.
    pub s2c: f64,
}

impl Angular {
    pub(crate) fn new(n: usize) -> Self {
        if n == 1 {
            return Self {
                n,
                c: 1.0,
                moments: Vec::new(),
            };
        }
        let c = specfun::sphere_area(n - 1);
        let nf = n as f64;
        let a0 = specfun::gamma_ratio(0.5, nf / 2.0).unwrap_or(0.0)
            * specfun::gamma((nf - 1.0) / 2.0)
                .map(|g| g.value)
                .unwrap_or(0.0);
        let mut moments = Vec::with_capacity(64);
        let mut a = a0;
        for m in 0..64 {
            moments.push(a);
            let mf = m as f64;
            a *= (mf + 0.5) / (mf + nf / 2.0);
        }
        Self { n, c, moments }
    }

    /// Angular factors at `|κ| = k`. `central = Some((r, |m|))` also
    /// returns the central second moment.
    pub(crate) fn eval(&self, k: f64, central: Option<(f64, f64)>) -> AngularValues {
        if self.n == 1 {
            let e = (-2.0 * k).exp();
            let s2c = central.map_or(0.0, |(r, m)| (r - m).powi(2) + (r + m).powi(2) * e);
            return AngularValues {
                s0: 1.0 + e,
                s1: -(-2.0 * k).exp_m1(),
                s2c,
            };
        }
        if !k.is_finite() {
            return AngularValues::default();
        }
        if k <= SERIES_KAPPA {
            let mut s0 = 0.0;
            let mut s1 = 0.0;
            let mut term = 1.0; // k^j / j!
            for j in 0..(2 * self.moments.len() - 2) {
                if j % 2 == 0 {
                    s0 += term * self.moments[j / 2];
                } else {
                    s1 += term * self.moments[j.div_ceil(2)];
                }
                term *= k / (j as f64 + 1.0);
                if term < 1e-18 * s0 {
                    break;
                }
            }
            let scale = self.c * (-k).exp();
            let (s0, s1) = (s0 * scale, s1 * scale);
            let s2c = central.map_or(0.0, |(r, m)| r * r * s0 - 2.0 * r * m * s1 + m * m * s0);
            return AngularValues {
                s0,
                s1,
                s2c: s2c.max(0.0),
            };
        }
        let nm2 = (self.n - 2) as i32;
        let w = 1.0 / k.sqrt();
        let mut pts = vec![0.0];
        for b in [2.0 * w, 6.0 * w, 16.0 * w] {
            if b < PI {
                pts.push(b);
            }
        }
        pts.push(PI);
        let (rr, mm) = central.unwrap_or((0.0, 0.0));
        let res = quad::integrate(
            |phi: f64| {
                let (s, c) = phi.sin_cos();
                let g = (k * (c - 1.0)).exp() * s.powi(nm2);
                let d2 = (rr * c - mm).powi(2) + (rr * s).powi(2);
                [g, g * c, g * d2]
            },
            &pts,
            QuadTol {
                rel: 1e-13,
                abs: 1e-300,
                max_subdivisions: 200,
            },
        );
        AngularValues {
            s0: self.c * res.value[0],
            s1: (self.c * res.value[1]).max(0.0),
            s2c: self.c * res.value[2],
        }
    }
}

// ---------------------------------------------------------------------------
// Radial model

#[derive(Debug, Clone, Copy)]
enum Profile {
    Constant { ln_c: f64 },
    Gaussian { ln_c: f64, k2: f64 },
    PowerLaw { ln_c: f64, s: f64, k2: f64 },
}

/// The density at fixed `(t, x)` as a function of `w = ln |u|`.
#[derive(Debug, Clone)]
pub(crate) struct Radial {
    pub n: usize,
    pub p: f64,
    /// Signed drift factor `D(t)`.
    pub d: f64,
    /// `|x|`.
    pub xn: f64,
    /// `σ²τ(t)`.
    pub s2t: f64,
    ln_pref: f64,
    profile: Profile,
    /// `e^{βt}/|α|`: maps `|u|` to the starting distance `|x₀|`.
    u_to_x0: f64,
    /// Support edge `ln(|α|L e^{−βt})` of a finite box.
    pub w_max: Option<f64>,
    angular: Angular,
}

/// Asymptotic behaviour of one radial integrand at one end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Tail {
    /// Faster than any exponential in `w`.
    Super,
    /// `≈ e^{s w}`, integrable.
    Power(f64),
    /// Not integrable.
    Divergent,
    /// Identically zero.
    Zero,
    /// Cut by the support edge.
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Component {
    /// `∫ P du`
    Mass,
    /// `|∫ (u·x̂) P du|`
    First,
    /// `∫ |u|² P du`
    Second,
}

impl Radial {
    pub(crate) fn new(
        params: &ModelParams,
        dist: &InitialDistribution,
        t: f64,
        xn: f64,
        spec: &QuadratureSpec,
    ) -> Result<Self> {
        let n = params.n;
        let nf = n as f64;
        let tau = params.noise_time(t);
        let s2t = params.sigma * params.sigma * tau;
        let ln_pref =
            nf * params.beta * t - nf * params.alpha.abs().ln() - 0.5 * nf * (2.0 * PI * s2t).ln();
        let ln_c = dist.normalization(n)?.ln();
        let profile = match *dist {
            InitialDistribution::UniformBox { .. } => Profile::Constant { ln_c },
            InitialDistribution::Gaussian { k } => Profile::Gaussian { ln_c, k2: k * k },
            InitialDistribution::PowerLaw { s, k } => Profile::PowerLaw { ln_c, s, k2: k * k },
        };
        let w_max = match (*dist, spec.truncation) {
            (InitialDistribution::UniformBox { l }, Truncation::FromSupport) => {
                Some((params.alpha.abs() * l).ln() - params.beta * t)
            }
            _ => None,
        };
        let mut d = params.drift_factor(t);
        // At the critical time D vanishes analytically.
        if let CriticalTime::Finite(tc) = params.critical_time() {
            if t == tc {
                d = 0.0;
            }
        }
        Ok(Self {
            n,
            p: params.p,
            d,
            xn,
            s2t,
            ln_pref,
            profile,
            u_to_x0: (params.beta * t).exp() / params.alpha.abs(),
            w_max,
            angular: Angular::new(n),
        })
    }

    /// Log of the density part shared by all components, without the
    /// angular factor and the Jacobian.
    pub(crate) fn ln_base(&self, w: f64) -> f64 {
        let ln_f = match self.profile {
            Profile::Constant { ln_c } => ln_c,
            Profile::Gaussian { ln_c, k2 } => {
                let z = (w + self.u_to_x0.ln()).exp();
                ln_c - k2 * z * z
            }
            Profile::PowerLaw { ln_c, s, k2 } => {
                let z = (w + self.u_to_x0.ln()).exp();
                ln_c - s * (k2 * z * z).ln_1p()
            }
        };
        let a = if self.d == 0.0 {
            0.0
        } else {
            self.d.abs() * ((1.0 - self.p) * w).exp()
        };
        let b = if self.xn == 0.0 {
            0.0
        } else {
            self.xn * (-self.p * w).exp()
        };
        let q = (a - b) * (a - b) / (2.0 * self.s2t);
        let v = self.ln_pref + ln_f - self.p * self.n as f64 * w - q;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    pub(crate) fn kappa_abs(&self, w: f64) -> f64 {
        if self.d == 0.0 || self.xn == 0.0 {
            0.0
        } else {
            self.d.abs() * self.xn * ((1.0 - 2.0 * self.p) * w).exp() / self.s2t
        }
    }

    /// `true` when the angular weight is uniform, so every odd moment
    /// vanishes.
    pub(crate) fn isotropic(&self) -> bool {
        self.d == 0.0 || self.xn == 0.0
    }

    fn profile_tail(&self) -> Option<f64> {
        match self.profile {
            Profile::Constant { .. } => Some(0.0),
            Profile::Gaussian { .. } => None,
            Profile::PowerLaw { s, .. } => Some(-2.0 * s),
        }
    }

    /// Tail classification of `r^{n+k}·e^{ln_base}·S` at `w → +∞`.
    pub(crate) fn right_tail(&self, comp: Component) -> Tail {
        if comp == Component::First && self.isotropic() {
            return Tail::Zero;
        }
        if self.w_max.is_some() {
            return Tail::Bounded;
        }
        let Some(fslope) = self.profile_tail() else {
            return Tail::Super;
        };
        if self.p < 1.0 && self.d != 0.0 {
            return Tail::Super;
        }
        let nf = self.n as f64;
        let k = match comp {
            Component::Mass => 0.0,
            Component::Second => 2.0,
            // |S1| ∝ κ ∝ r^{1−2p} once κ → 0 (here p ≥ 1).
            Component::First => 1.0 + (1.0 - 2.0 * self.p),
        };
        let s = nf + k - self.p * nf + fslope;
        if s < -1e-12 {
            Tail::Power(s)
        } else {
            Tail::Divergent
        }
    }

    /// Tail classification at `w → −∞`.
    pub(crate) fn left_tail(&self, comp: Component) -> Tail {
        if comp == Component::First && self.isotropic() {
            return Tail::Zero;
        }
        if self.p > 0.0 && self.xn != 0.0 {
            return Tail::Super;
        }
        if self.p > 1.0 && self.d != 0.0 {
            return Tail::Super;
        }
        let nf = self.n as f64;
        let k = match comp {
            Component::Mass => 0.0,
            Component::Second => 2.0,
            // Only p = 0 reaches here with κ ≠ 0; κ ∝ r.
            Component::First => 2.0,
        };
        let s = nf + k - self.p * nf;
        if s > 1e-12 {
            Tail::Power(s)
        } else {
            Tail::Divergent
        }
    }

    /// Log of the planning envelope of each component.
    pub(crate) fn ln_components(&self, w: f64) -> [f64; 3] {
        let base = self.ln_base(w);
        if base == f64::NEG_INFINITY {
            return [f64::NEG_INFINITY; 3];
        }
        let a = self.angular.eval(self.kappa_abs(w), None);
        let nf = self.n as f64;
        let l0 = nf * w + base + a.s0.ln();
        let l1 = if self.isotropic() {
            f64::NEG_INFINITY
        } else {
            (nf + 1.0) * w + base + a.s1.ln()
        };
        let l2 = l0 + 2.0 * w;
        [l0, l1, l2]
    }

    /// Points where the integrands change character.
    fn hints(&self) -> Vec<f64> {
        let mut h = vec![0.0];
        if self.d != 0.0 && self.xn != 0.0 {
            h.push((self.xn / self.d.abs()).ln());
        }
        if let Profile::Gaussian { k2, .. } = self.profile {
            h.push(-(k2.sqrt() * self.u_to_x0).ln());
        }
        // Scale where the drift term of the exponent becomes O(1).
        if self.d != 0.0 && self.p != 1.0 {
            h.push(0.5 * (2.0 * self.s2t / (self.d * self.d)).ln() / (1.0 - self.p));
        }
        if self.xn != 0.0 && self.p > 0.0 {
            h.push((self.xn * self.xn / (2.0 * self.s2t)).ln() / (2.0 * self.p));
        }
        if let Some(wm) = self.w_max {
            h.push(wm);
        }
        h.retain(|v| v.is_finite());
        h
    }
}

// ---------------------------------------------------------------------------
// Planning

const W_CAP: f64 = 1500.0;
const SCAN_HALF: f64 = 40.0;
const SCAN_STEP: f64 = 0.25;

#[derive(Debug, Clone)]
pub(crate) struct Plan<const K: usize> {
    pub lo: f64,
    pub points: Vec<f64>,
    pub lref: [f64; K],
    /// Analytic tail masses beyond `lo` and `hi`, relative to `e^{lref}`.
    pub left_corr: [f64; K],
    pub right_corr: [f64; K],
    pub peaks: [f64; K],
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Locate the region carrying all but `target` of each component and the
/// breakpoints for the adaptive rule.
pub(crate) fn plan<const K: usize>(
    ell: &dyn Fn(f64) -> [f64; K],
    left: [Tail; K],
    right: [Tail; K],
    hints: &[f64],
    w_max: Option<f64>,
    target: f64,
) -> Option<Plan<K>> {
    let ln_target = target.ln() - 3.0;
    let hmin = hints.iter().cloned().fold(f64::INFINITY, f64::min);
    let hmax = hints.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut c_lo = (hmin - SCAN_HALF).max(-W_CAP);
    let mut c_hi = (hmax + SCAN_HALF).min(W_CAP);
    if let Some(wm) = w_max {
        c_hi = c_hi.min(wm);
        if c_lo >= c_hi {
            c_lo = c_hi - 2.0 * SCAN_HALF;
        }
    }
    let mut lmax = [f64::NEG_INFINITY; K];
    let mut argmax = [f64::NAN; K];
    let update = |w: f64, v: &[f64; K], lmax: &mut [f64; K], argmax: &mut [f64; K]| {
        for k in 0..K {
            if v[k] > lmax[k] {
                lmax[k] = v[k];
                argmax[k] = w;
            }
        }
    };
    let steps = ((c_hi - c_lo) / SCAN_STEP).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let w = (c_lo + i as f64 * SCAN_STEP).min(c_hi);
        let v = ell(w);
        update(w, &v, &mut lmax, &mut argmax);
    }
    let done = |v: &[f64; K], lmax: &[f64; K], tails: &[Tail; K]| {
        (0..K).all(|k| match tails[k] {
            Tail::Zero | Tail::Bounded => true,
            Tail::Divergent => false,
            Tail::Super => v[k] < lmax[k] + ln_target,
            Tail::Power(s) => {
                v[k] < lmax[k] + ln_target && v[k] - s.abs().ln() < lmax[k] + ln_target
            }
        })
    };
    // Extend right.
    let mut hi = c_hi;
    let at_edge = w_max.is_some_and(|wm| hi >= wm);
    if !at_edge {
        let mut h = SCAN_STEP;
        loop {
            let v = ell(hi);
            if done(&v, &lmax, &right) || hi >= W_CAP || w_max.is_some_and(|wm| hi >= wm) {
                break;
            }
            hi += h;
            if let Some(wm) = w_max {
                hi = hi.min(wm);
            }
            hi = hi.min(W_CAP);
            let v = ell(hi);
            update(hi, &v, &mut lmax, &mut argmax);
            h = (h * 1.1).min(8.0);
        }
    }
    // Extend left.
    let mut lo = c_lo;
    let mut h = SCAN_STEP;
    loop {
        let v = ell(lo);
        if done(&v, &lmax, &left) || lo <= -W_CAP {
            break;
        }
        lo = (lo - h).max(-W_CAP);
        let v = ell(lo);
        update(lo, &v, &mut lmax, &mut argmax);
        h = (h * 1.1).min(8.0);
    }
    if lmax.iter().all(|v| *v == f64::NEG_INFINITY) {
        return None;
    }
    // Refine peaks and place breakpoints around them.
    let mut points = vec![lo, hi];
    let mut peaks = [f64::NAN; K];
    let mut lref = lmax;
    for k in 0..K {
        if lmax[k] == f64::NEG_INFINITY {
            continue;
        }
        let a = (argmax[k] - SCAN_STEP).max(lo);
        let b = (argmax[k] + SCAN_STEP).min(hi);
        let fk = |w: f64| ell(w)[k];
        let (wp, vp) = if b > a {
            golden_max(&fk, a, b)
        } else {
            (argmax[k], lmax[k])
        };
        let (wp, vp) = if vp > lmax[k] {
            (wp, vp)
        } else {
            (argmax[k], lmax[k])
        };
        peaks[k] = wp;
        lref[k] = vp;
        let hh = 0.02;
        let curv = (fk(wp + hh) - 2.0 * vp + fk(wp - hh)) / (hh * hh);
        let s = if curv < 0.0 && curv.is_finite() {
            (1.0 / (-curv).sqrt()).clamp(1e-6, 5.0)
        } else {
            1.0
        };
        points.push(wp);
        for m in [1.0, 3.0, 8.0] {
            points.push(wp - m * s);
            points.push(wp + m * s);
        }
    }
    for &hnt in hints {
        points.push(hnt);
    }
    points.retain(|v| v.is_finite() && *v >= lo && *v <= hi);
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let vlo = ell(lo);
    let vhi = ell(hi);
    let mut left_corr = [0.0; K];
    let mut right_corr = [0.0; K];
    for k in 0..K {
        if lref[k] == f64::NEG_INFINITY {
            continue;
        }
        if let Tail::Power(s) = left[k] {
            left_corr[k] = (vlo[k] - lref[k]).exp() / s.abs();
        }
        if let Tail::Power(s) = right[k] {
            right_corr[k] = (vhi[k] - lref[k]).exp() / s.abs();
        }
    }
    Some(Plan {
        lo,
        points,
        lref,
        left_corr,
        right_corr,
        peaks,
    })
}

fn points_within(points: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut v = vec![a];
    v.extend(points.iter().cloned().filter(|p| *p > a && *p < b));
    v.push(b);
    v
}

// ---------------------------------------------------------------------------
// Shared integration driver

/// Normalized integrals `I_k` with `∫ g_k = e^{lref_k}·I_k`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Integrals<const K: usize> {
    pub value: [f64; K],
    pub error: [f64; K],
    pub lref: [f64; K],
    pub converged: bool,
}

pub(crate) enum Outcome<const K: usize> {
    Finite(Integrals<K>),
    /// Cumulative integrals over `r ≤ R_j`, with per-annulus increments.
    Sequence {
        increments: Vec<[f64; K]>,
        lref: [f64; K],
        converged: bool,
        settle_w: f64,
    },
}

/// Integrate components `K` of a radial problem.
///
/// `ell` gives the planning envelopes, `g` the integrands already divided
/// by `e^{lref}` (it receives `lref`). When a component diverges at the
/// right end and the domain is unbounded, the integrals are returned as a
/// sequence over `r ≤ L_j` for the ratio-limit path.
pub(crate) fn integrate_radial<const K: usize>(
    radial: &Radial,
    ell: &dyn Fn(f64) -> [f64; K],
    g: &dyn Fn(f64, &[f64; K]) -> [f64; K],
    norms: [usize; K],
    left: [Tail; K],
    right: [Tail; K],
    spec: &QuadratureSpec,
) -> Result<Outcome<K>> {
    if left.contains(&Tail::Divergent) {
        return Err(Error::DivergentIntegral(
            "the velocity integral diverges at u = 0".into(),
        ));
    }
    let diverges = right.contains(&Tail::Divergent);
    let hints = radial.hints();
    let tol = spec.quad_tol();
    if !diverges {
        let pl = plan(ell, left, right, &hints, radial.w_max, spec.tail_target())
            .ok_or(Error::SingularDenominator)?;
        let lref = pl.lref;
        let res = quad::integrate_with_norms(|w| g(w, &lref), &pl.points, tol, norms);
        let mut value = res.value;
        let mut error = res.error;
        for k in 0..K {
            value[k] += pl.left_corr[k] + pl.right_corr[k];
            error[k] += pl.left_corr[k] + pl.right_corr[k];
        }
        return Ok(Outcome::Finite(Integrals {
            value,
            error,
            lref,
            converged: res.converged,
        }));
    }
    let ls = spec.l_sequence.values();
    let w_last = ls.last().unwrap().ln();
    let bounded = right.map(|t| {
        if t == Tail::Divergent {
            Tail::Bounded
        } else {
            t
        }
    });
    let pl = plan(ell, left, bounded, &hints, Some(w_last), spec.tail_target())
        .ok_or(Error::SingularDenominator)?;
    let lref = pl.lref;
    let mut increments = Vec::with_capacity(ls.len());
    let mut converged = true;
    let mut a = pl.lo;
    for (j, l) in ls.iter().enumerate() {
        let b = l.ln();
        let mut inc = [0.0; K];
        let mut err = [0.0; K];
        if b > a {
            let pts = points_within(&pl.points, a, b);
            let res = quad::integrate_with_norms(|w| g(w, &lref), &pts, tol, norms);
            inc = res.value;
            err = res.error;
            converged &= res.converged;
        }
        if j == 0 {
            for k in 0..K {
                inc[k] += pl.left_corr[k];
                err[k] += pl.left_corr[k];
            }
        }
        increments.push(inc);
        a = a.max(b);
    }
    // A peak at the planning bound only reflects the growing tail.
    let settle_w = pl
        .peaks
        .iter()
        .cloned()
        .filter(|v| v.is_finite() && *v < w_last - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome::Sequence {
        increments,
        lref,
        converged,
        settle_w,
    })
}

/// Limit of `num_j/den_j` along a divergent truncation sequence using the
/// Stolz–Cesàro ratio of increments, followed by one Richardson step for
/// `O(1/L)` corrections.
fn stolz_limit(
    num_inc: &[f64],
    den_inc: &[f64],
    ls: &[f64],
    settle_w: f64,
    seq: &LSequence,
    abs_tol: f64,
) -> Result<MomentEstimate<f64>> {
    let mut stolz = Vec::with_capacity(ls.len());
    for j in 1..ls.len() {
        if den_inc[j] == 0.0 || !den_inc[j].is_finite() {
            continue;
        }
        stolz.push((ls[j], num_inc[j] / den_inc[j]));
    }
    let b = seq.base;
    let rich: Vec<(f64, f64)> = stolz
        .windows(2)
        .map(|w| (w[1].0, (b * w[1].1 - w[0].1) / (b - 1.0)))
        .collect();
    // Latest pair of consecutive small steps: the deepest stable term.
    let check = |s: &[(f64, f64)]| -> Option<(f64, f64)> {
        for i in (2..s.len()).rev() {
            if s[i].0.ln() < settle_w + 2.0 {
                continue;
            }
            let d1 = (s[i].1 - s[i - 1].1).abs();
            let d0 = (s[i - 1].1 - s[i - 2].1).abs();
            let tol = seq.tol * s[i].1.abs().max(abs_tol);
            if d1 <= tol && d0 <= tol {
                return Some((s[i].1, d1.max(f64::EPSILON * s[i].1.abs())));
            }
        }
        None
    };
    if let Some((v, e)) = check(&stolz) {
        return Ok(MomentEstimate {
            value: v,
            error_bound: e,
            method: Method::Quadrature,
            converged: true,
        });
    }
    if let Some((v, e)) = check(&rich) {
        return Ok(MomentEstimate {
            value: v,
            error_bound: e,
            method: Method::Quadrature,
            converged: true,
        });
    }
    let last = rich.last().or(stolz.last()).map_or(f64::NAN, |v| v.1);
    let prev = if rich.len() >= 2 {
        rich[rich.len() - 2].1
    } else if stolz.len() >= 2 {
        stolz[stolz.len() - 2].1
    } else {
        f64::NAN
    };
    if stolz.is_empty() {
        return Err(Error::SingularDenominator);
    }
    Ok(MomentEstimate {
        value: last,
        error_bound: (last - prev).abs(),
        method: Method::Quadrature,
        converged: false,
    })
}

// ---------------------------------------------------------------------------
// Public operations

fn validate_point(params: &ModelParams, t: f64, x: &[f64], spec: &QuadratureSpec) -> Result<()> {
    spec.validate()?;
    if x.len() != params.n {
        return Err(invalid(
            "x",
            format!("expected {} components, got {}", params.n, x.len()),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x", "must be finite"));
    }
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if let CriticalTime::Finite(tc) = params.critical_time() {
        if t > tc {
            return Err(Error::EvaluationAtOrPastBlowup { t, critical: tc });
        }
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn not_converged(e: &MomentEstimate<f64>) -> Error {
    Error::RatioNotConverged {
        last: e.value,
        previous: e.value - e.error_bound,
    }
}

/// Scalar mean along `x̂` (signed), with error.
fn mean_along(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    xn: f64,
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>> {
    let radial = Radial::new(params, dist, t, xn, spec)?;
    if radial.isotropic() {
        return Ok(MomentEstimate {
            value: 0.0,
            error_bound: 0.0,
            method: Method::Quadrature,
            converged: true,
        });
    }
    let sign = radial.d.signum();
    let nf = radial.n as f64;
    let ell = |w: f64| {
        let l = radial.ln_components(w);
        [l[0], l[1]]
    };
    let g = |w: f64, lref: &[f64; 2]| {
        let base = radial.ln_base(w);
        if base == f64::NEG_INFINITY {
            return [0.0, 0.0];
        }
        let a = radial.angular.eval(radial.kappa_abs(w), None);
        [
            (nf * w + base - lref[0]).exp() * a.s0,
            ((nf + 1.0) * w + base - lref[1]).exp() * a.s1,
        ]
    };
    let left = [
        radial.left_tail(Component::Mass),
        radial.left_tail(Component::First),
    ];
    let right = [
        radial.right_tail(Component::Mass),
        radial.right_tail(Component::First),
    ];
    match integrate_radial(&radial, &ell, &g, [0, 1], left, right, spec)? {
        Outcome::Finite(ints) => {
            if !(ints.value[0] > 0.0) {
                return Err(Error::SingularDenominator);
            }
            let m = sign * (ints.lref[1] - ints.lref[0]).exp() * ints.value[1] / ints.value[0];
            let rel = ints.error[1] / ints.value[1].abs().max(f64::MIN_POSITIVE)
                + ints.error[0] / ints.value[0];
            let error_bound = m.abs() * rel;
            Ok(MomentEstimate {
                value: m,
                error_bound,
                method: Method::Quadrature,
                converged: ints.converged && error_bound <= spec.tolerance_for(m),
            })
        }
        Outcome::Sequence {
            increments,
            lref,
            converged,
            settle_w,
            ..
        } => {
            let scale = sign * (lref[1] - lref[0]).exp();
            let num: Vec<f64> = increments.iter().map(|v| v[1] * scale).collect();
            let den: Vec<f64> = increments.iter().map(|v| v[0]).collect();
            let mut est = stolz_limit(
                &num,
                &den,
                &spec.l_sequence.values(),
                settle_w,
                &spec.l_sequence,
                spec.abs_tol,
            )?;
            est.converged &= converged;
            Ok(est)
        }
    }
}

/// Conditional mean velocity `û(t,x)`.
pub fn conditional_mean(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<Vec<f64>>> {
    validate_point(params, t, x, spec)?;
    let xn = norm(x);
    if xn == 0.0 && dist.is_even() {
        return Ok(MomentEstimate {
            value: vec![0.0; x.len()],
            error_bound: 0.0,
            method: Method::Quadrature,
            converged: true,
        });
    }
    let est = mean_along(params, dist, t, xn, spec)?;
    if !est.converged && est.error_bound > spec.l_sequence.tol * est.value.abs().max(spec.abs_tol) {
        // Only the ratio path leaves non-converged values this far off.
        if radial_diverges(params, dist, t, xn, spec)? {
            return Err(not_converged(&est));
        }
    }
    Ok(est.map(|m| x.iter().map(|xi| m * xi / xn).collect()))
}

fn radial_diverges(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    xn: f64,
    spec: &QuadratureSpec,
) -> Result<bool> {
    let r = Radial::new(params, dist, t, xn, spec)?;
    Ok(r.right_tail(Component::Mass) == Tail::Divergent
        || r.right_tail(Component::First) == Tail::Divergent)
}

/// Total conditional variance `E|u − û|²` given `x`.
pub fn conditional_variance(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>> {
    validate_point(params, t, x, spec)?;
    let xn = norm(x);
    let mean = if xn == 0.0 && dist.is_even() {
        MomentEstimate {
            value: 0.0,
            error_bound: 0.0,
            method: Method::Quadrature,
            converged: true,
        }
    } else {
        let m = mean_along(params, dist, t, xn, spec)?;
        if !m.converged && radial_diverges(params, dist, t, xn, spec)? {
            return Err(not_converged(&m));
        }
        m
    };
    let radial = Radial::new(params, dist, t, xn, spec)?;
    let m_abs = mean.value.abs();
    let nf = radial.n as f64;
    let left = [
        radial.left_tail(Component::Mass),
        radial.left_tail(Component::Second),
    ];
    let right = [
        radial.right_tail(Component::Mass),
        radial.right_tail(Component::Second),
    ];
    if right[1] == Tail::Divergent && right[0] != Tail::Divergent {
        return Err(Error::DivergentIntegral(
            "the conditional second moment is infinite for these parameters".into(),
        ));
    }
    let ell = |w: f64| {
        let l = radial.ln_components(w);
        // Envelope of the central moment: |u − m|² ≤ 2(r² + m²).
        let lm = if m_abs > 0.0 {
            l[0] + 2.0 * m_abs.ln()
        } else {
            f64::NEG_INFINITY
        };
        [l[0], l[2].max(lm) + 2f64.ln()]
    };
    let g = |w: f64, lref: &[f64; 2]| {
        let base = radial.ln_base(w);
        if base == f64::NEG_INFINITY {
            return [0.0, 0.0];
        }
        let r = w.exp();
        let a = radial.angular.eval(radial.kappa_abs(w), Some((r, m_abs)));
        let jac = nf * w + base;
        [(jac - lref[0]).exp() * a.s0, (jac - lref[1]).exp() * a.s2c]
    };
    match integrate_radial(&radial, &ell, &g, [0, 1], left, right, spec)? {
        Outcome::Finite(ints) => {
            if !(ints.value[0] > 0.0) {
                return Err(Error::SingularDenominator);
            }
            let v = (ints.lref[1] - ints.lref[0]).exp() * ints.value[1] / ints.value[0];
            let rel = ints.error[1] / ints.value[1].abs().max(f64::MIN_POSITIVE)
                + ints.error[0] / ints.value[0];
            // The mean error enters quadratically.
            let error_bound = v.abs() * rel + mean.error_bound * mean.error_bound;
            Ok(MomentEstimate {
                value: v,
                error_bound,
                method: Method::Quadrature,
                converged: ints.converged && mean.converged && error_bound <= spec.tolerance_for(v),
            })
        }
        Outcome::Sequence {
            increments,
            lref,
            converged,
            settle_w,
            ..
        } => {
            let scale = (lref[1] - lref[0]).exp();
            let num: Vec<f64> = increments.iter().map(|v| v[1] * scale).collect();
            let den: Vec<f64> = increments.iter().map(|v| v[0]).collect();
            let mut est = stolz_limit(
                &num,
                &den,
                &spec.l_sequence.values(),
                settle_w,
                &spec.l_sequence,
                spec.abs_tol,
            )?;
            est.converged &= converged && mean.converged;
            if !est.converged {
                return Err(not_converged(&est));
            }
            Ok(est)
        }
    }
}

/// Observable density `ρ̂(t,x) = ∫ P(t,x,u) du`.
pub fn observable_density(
    params: &ModelParams,
    dist: &InitialDistribution,
    t: f64,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>> {
    validate_point(params, t, x, spec)?;
    let xn = norm(x);
    let radial = Radial::new(params, dist, t, xn, spec)?;
    let left = [radial.left_tail(Component::Mass)];
    let right = [radial.right_tail(Component::Mass)];
    if right[0] == Tail::Divergent || left[0] == Tail::Divergent {
        return Err(Error::DivergentIntegral(
            "the observable density is infinite for these parameters".into(),
        ));
    }
    let nf = radial.n as f64;
    let ell = |w: f64| [radial.ln_components(w)[0]];
    let g = |w: f64, lref: &[f64; 1]| {
        let base = radial.ln_base(w);
        if base == f64::NEG_INFINITY {
            return [0.0];
        }
        let a = radial.angular.eval(radial.kappa_abs(w), None);
        [(nf * w + base - lref[0]).exp() * a.s0]
    };
    let Outcome::Finite(ints) = integrate_radial(&radial, &ell, &g, [0], left, right, spec)? else {
        unreachable!("convergent tails never take the sequence path")
    };
    let scale = ints.lref[0].exp();
    let v = scale * ints.value[0];
    let error_bound = scale * ints.error[0];
    Ok(MomentEstimate {
        value: v,
        error_bound,
        method: Method::Quadrature,
        converged: ints.converged && error_bound <= spec.tolerance_for(v),
    })
}

/// Limit of `numerator(L)/denominator(L)` along the truncation sequence.
///
/// The plain ratio is accepted when three successive values agree to the
/// sequence tolerance. Otherwise the ratio of increments (the discrete
/// analogue of the ratio of integrands at the moving boundary) is used,
/// with one Richardson step. A sequence whose magnitude keeps growing is
/// reported as `RatioNotConverged`; a bounded one that did not settle is
/// returned with `converged = false`.
pub fn truncated_ratio_limit<N, D>(
    mut numerator: N,
    mut denominator: D,
    spec: &QuadratureSpec,
) -> Result<MomentEstimate<f64>>
where
    N: FnMut(f64) -> Result<f64>,
    D: FnMut(f64) -> Result<f64>,
{
    spec.validate()?;
    let seq = &spec.l_sequence;
    let ls = seq.values();
    let mut nums = Vec::with_capacity(ls.len());
    let mut dens = Vec::with_capacity(ls.len());
    for &l in &ls {
        let d = denominator(l)?;
        if d == 0.0 || !d.is_finite() {
            return Err(Error::SingularDenominator);
        }
        nums.push(numerator(l)?);
        dens.push(d);
    }
    let plain: Vec<f64> = nums.iter().zip(&dens).map(|(a, b)| a / b).collect();
    for i in 2..plain.len() {
        let tol = seq.tol * plain[i].abs().max(spec.abs_tol);
        let d1 = (plain[i] - plain[i - 1]).abs();
        if d1 <= tol && (plain[i - 1] - plain[i - 2]).abs() <= tol {
            return Ok(MomentEstimate {
                value: plain[i],
                error_bound: d1,
                method: Method::Quadrature,
                converged: true,
            });
        }
    }
    let mut num_inc = vec![nums[0]];
    let mut den_inc = vec![dens[0]];
    for j in 1..ls.len() {
        num_inc.push(nums[j] - nums[j - 1]);
        den_inc.push(dens[j] - dens[j - 1]);
    }
    let est = stolz_limit(
        &num_inc,
        &den_inc,
        &ls,
        f64::NEG_INFINITY,
        seq,
        spec.abs_tol,
    )?;
    if est.converged {
        return Ok(est);
    }
    let k = plain.len();
    let growing = k >= 4
        && (k - 3..k).all(|i| plain[i].abs() > plain[i - 1].abs() * (1.0 + 10.0 * seq.tol))
        && plain[k - 1].abs() > 10.0 * plain[k - 4].abs();
    if growing || !est.value.is_finite() {
        return Err(Error::RatioNotConverged {
            last: plain[k - 1],
            previous: plain[k - 2],
        });
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> InitialDistribution {
        InitialDistribution::uniform(10.0).unwrap()
    }

    fn params(p: f64) -> ModelParams {
        ModelParams::new(-1.0, 0.0, 1.0, p, 1).unwrap()
    }

    #[test]
    fn mean_p0_uniform_example() {
        let m = conditional_mean(
            &params(0.0),
            &uniform(),
            0.5,
            &[1.0],
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((m.value[0] + 2.0).abs() < 1e-6, "{:?}", m);
        assert!(m.converged);
    }

    #[test]
    fn mean_at_origin_is_exactly_zero() {
        for p in [0.0, 0.5, 1.0, 2.0] {
            let m = conditional_mean(
                &params(p),
                &uniform(),
                0.7,
                &[0.0],
                &QuadratureSpec::default(),
            )
            .unwrap();
            assert_eq!(m.value, vec![0.0]);
            let m = conditional_mean(
                &params(p),
                &uniform(),
                1.0,
                &[0.0],
                &QuadratureSpec::default(),
            )
            .unwrap();
            assert_eq!(m.value, vec![0.0]);
        }
    }

    #[test]
    fn variance_p0_uniform_example() {
        for x in [-3.0, 0.0, 0.4, 2.0] {
            let v = conditional_variance(
                &params(0.0),
                &uniform(),
                0.5,
                &[x],
                &QuadratureSpec::default(),
            )
            .unwrap();
            assert!((v.value - 2.0).abs() < 1e-6, "x={x} {:?}", v);
        }
    }

    #[test]
    fn observable_density_p0() {
        let d = uniform();
        let fl = 0.05;
        let r =
            observable_density(&params(0.0), &d, 0.5, &[0.3], &QuadratureSpec::default()).unwrap();
        assert!((r.value - 2.0 * fl).abs() < 1e-9, "{:?}", r);
    }

    #[test]
    fn observable_density_is_even() {
        let d = InitialDistribution::gaussian(1.0).unwrap();
        let s = QuadratureSpec::default();
        let a = observable_density(&params(0.5), &d, 0.4, &[0.7], &s)
            .unwrap()
            .value;
        let b = observable_density(&params(0.5), &d, 0.4, &[-0.7], &s)
            .unwrap()
            .value;
        assert_eq!(a, b);
    }

    #[test]
    fn divergent_cases() {
        let s = QuadratureSpec::default();
        assert!(matches!(
            observable_density(&params(2.0), &uniform(), 1.0, &[0.0], &s),
            Err(Error::DivergentIntegral(_))
        ));
        assert!(matches!(
            observable_density(&params(1.0), &uniform(), 0.5, &[0.3], &s),
            Err(Error::DivergentIntegral(_))
        ));
        assert!(matches!(
            conditional_variance(&params(2.0), &uniform(), 0.5, &[0.3], &s),
            Err(Error::DivergentIntegral(_))
        ));
    }

    #[test]
    fn p1_mean_uses_ratio_path() {
        // Ratio of integrands at the moving boundary: û = D x/(σ²τ).
        let s = QuadratureSpec::default();
        let t = 0.6;
        let m = conditional_mean(&params(1.0), &uniform(), t, &[0.8], &s).unwrap();
        let want = (-1.0 + t) * 0.8 / t;
        assert!(
            ((m.value[0] - want) / want).abs() < 1e-6,
            "{:?} want {want}",
            m
        );
    }

    #[test]
    fn past_blowup_is_error() {
        assert!(matches!(
            conditional_mean(
                &params(0.5),
                &uniform(),
                1.01,
                &[1.0],
                &QuadratureSpec::default()
            ),
            Err(Error::EvaluationAtOrPastBlowup { .. })
        ));
    }

    #[test]
    fn ratio_limit_identical() {
        let s = QuadratureSpec::default();
        let e = truncated_ratio_limit(|l| Ok(l * l), |l| Ok(l * l), &s).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(e.converged);
    }

    #[test]
    fn ratio_limit_lhopital() {
        // ∫₀^L (2 + 1/(1+r)) dr / ∫₀^L dr → 2.
        let s = QuadratureSpec::default();
        let e = truncated_ratio_limit(|l| Ok(2.0 * l + (1.0 + l).ln()), |l| Ok(l), &s).unwrap();
        assert!((e.value - 2.0).abs() < 1e-6, "{:?}", e);
    }

    #[test]
    fn ratio_limit_decaying_denominator() {
        let s = QuadratureSpec::default();
        let e = truncated_ratio_limit(|l| Ok(l), |l| Ok(1.0 / l), &s);
        assert!(matches!(e, Err(Error::RatioNotConverged { .. })), "{e:?}");
    }

    #[test]
    fn angular_n3_closed_form() {
        let a = Angular::new(3);
        for k in [0.0, 1e-6, 0.3, 1.9, 2.1, 7.0, 40.0, 900.0] {
            let v = a.eval(k, None);
            let want0 = if k == 0.0 {
                4.0 * PI
            } else {
                2.0 * PI * (-(-2.0 * k).exp_m1()) / k
            };
            assert!(
                ((v.s0 - want0) / want0).abs() < 1e-11,
                "k={k}: {} vs {want0}",
                v.s0
            );
            // |S1| = 2π[(1+e^{−2k})/k − (1−e^{−2k})/k²]
            let want1 = if k == 0.0 {
                0.0
            } else {
                let e = (-2.0 * k).exp();
                let small = k < 1e-3;
                if small {
                    4.0 * PI * k / 3.0 * (-k).exp()
                } else {
                    2.0 * PI * ((1.0 + e) / k - (1.0 - e) / (k * k))
                }
            };
            assert!(
                (v.s1 - want1).abs() <= 1e-10 * want1.max(1e-300) + 1e-15,
                "k={k}: {} vs {want1}",
                v.s1
            );
        }
    }
}
