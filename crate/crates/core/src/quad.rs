//! Adaptive Gauss–Kronrod (10/21-point) quadrature over finite intervals with
//! vector-valued integrands.
//!
//! All components share the panel structure. The panel with the largest
//! error relative to its component tolerance is bisected; ties go to the
//! panel with the lowest left endpoint so the subdivision sequence is
//! reproducible.

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

/// Gauss weights for the odd-indexed Kronrod nodes `XGK[1], XGK[3], ...`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy)]
struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub subdivisions: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Tolerances and limits of the adaptive driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTol {
    pub rel: f64,
    pub abs: f64,
    pub max_subdivisions: usize,
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut err = err.abs();
    if resasc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / resasc).powf(1.5);
        err = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * resabs;
        if min_err > err {
            err = min_err;
        }
    }
    err
}

fn qk21<const N: usize, F: FnMut(f64) -> [f64; N]>(f: &mut F, a: f64, b: f64) -> Panel<N> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = [0.0; N];
    let mut resg = [0.0; N];
    let mut resabs = [0.0; N];
    let mut fv1 = [[0.0; N]; 10];
    let mut fv2 = [[0.0; N]; 10];
    for c in 0..N {
        resk[c] = fc[c] * WGK[10];
        resabs[c] = fc[c].abs() * WGK[10];
    }
    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for c in 0..N {
            resg[c] += WG[j] * (f1[c] + f2[c]);
            resk[c] += WGK[jtw] * (f1[c] + f2[c]);
            resabs[c] += WGK[jtw] * (f1[c].abs() + f2[c].abs());
        }
        fv1[jtw] = f1;
        fv2[jtw] = f2;
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for c in 0..N {
            resk[c] += WGK[jtwm1] * (f1[c] + f2[c]);
            resabs[c] += WGK[jtwm1] * (f1[c].abs() + f2[c].abs());
        }
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
    }
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    let ah = half.abs();
    for c in 0..N {
        let mean = resk[c] * 0.5;
        let mut resasc = WGK[10] * (fc[c] - mean).abs();
        for j in 0..10 {
            resasc += WGK[j] * ((fv1[j][c] - mean).abs() + (fv2[j][c] - mean).abs());
        }
        value[c] = resk[c] * half;
        error[c] = rescale_error((resk[c] - resg[c]) * half, resabs[c] * ah, resasc * ah);
        if !value[c].is_finite() {
            error[c] = f64::INFINITY;
        }
    }
    Panel { a, b, value, error }
}

fn totals<const N: usize>(panels: &[Panel<N>]) -> ([f64; N], [f64; N]) {
    let mut v = [0.0; N];
    let mut e = [0.0; N];
    for p in panels {
        for c in 0..N {
            v[c] += p.value[c];
            e[c] += p.error[c];
        }
    }
    (v, e)
}

/// Integrate `f` over `[points[0], points[last]]`, with the interior points
/// as initial panel boundaries (jumps and kinks should be placed there).
pub fn integrate<const N: usize, F>(f: F, points: &[f64], tol: QuadTol) -> QuadResult<N>
where
    F: FnMut(f64) -> [f64; N],
{
    integrate_with_norms(f, points, tol, std::array::from_fn(|c| c))
}

/// Like [`integrate`], but the relative tolerance of component `c` is taken
/// with respect to `max(|I_c|, |I_{norms[c]}|)`. A sign-changing component
/// can then be paired with a component holding its absolute value.
pub fn integrate_with_norms<const N: usize, F>(
    mut f: F,
    points: &[f64],
    tol: QuadTol,
    norms: [usize; N],
) -> QuadResult<N>
where
    F: FnMut(f64) -> [f64; N],
{
    assert!(points.len() >= 2, "need at least one interval");
    let mut panels: Vec<Panel<N>> = Vec::with_capacity(tol.max_subdivisions + points.len());
    for w in points.windows(2) {
        if w[1] > w[0] {
            panels.push(qk21(&mut f, w[0], w[1]));
        }
    }
    let mut evaluations = 21 * panels.len();
    let mut subdivisions = 0;
    loop {
        let (value, error) = totals(&panels);
        let target: [f64; N] = std::array::from_fn(|c| {
            let scale = value[c].abs().max(value[norms[c]].abs());
            (tol.rel * scale).max(tol.abs)
        });
        let done = (0..N).all(|c| error[c] <= target[c]);
        if done || subdivisions >= tol.max_subdivisions || panels.is_empty() {
            return QuadResult {
                value,
                error,
                subdivisions,
                evaluations,
                converged: done,
            };
        }
        // Worst panel by normalized error; ties resolved to the lowest a.
        let mut worst = None;
        let mut worst_score = -1.0;
        for (i, p) in panels.iter().enumerate() {
            let width = p.b - p.a;
            let mid = 0.5 * (p.a + p.b);
            if width <= 64.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) {
                continue;
            }
            let score = (0..N).map(|c| p.error[c] / target[c]).fold(0.0, f64::max);
            let better = score > worst_score
                || (score == worst_score && worst.is_none_or(|w: usize| p.a < panels[w].a));
            if better {
                worst_score = score;
                worst = Some(i);
            }
        }
        let Some(i) = worst else {
            return QuadResult {
                value,
                error,
                subdivisions,
                evaluations,
                converged: false,
            };
        };
        let p = panels.swap_remove(i);
        let mid = 0.5 * (p.a + p.b);
        panels.push(qk21(&mut f, p.a, mid));
        panels.push(qk21(&mut f, mid, p.b));
        evaluations += 42;
        subdivisions += 1;
    }
}

/// Scalar convenience wrapper.
pub fn integrate_scalar<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    tol: QuadTol,
) -> (f64, f64, bool) {
    let r = integrate(|x| [f(x)], points, tol);
    (r.value[0], r.error[0], r.converged)
}
