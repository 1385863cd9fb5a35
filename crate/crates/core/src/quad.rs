//! Adaptive Gauss-Kronrod quadrature (7/15 Gauss, 10/21 Kronrod pair) with a
//! global error-driven bisection strategy, plus interval maps for infinite
//! ranges. The vector form integrates several components over a shared
//! subdivision.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{LabError, Result};

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
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

/// Tolerances and work limit for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_subdivisions: 4000,
        }
    }
}

impl QuadSpec {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        QuadSpec {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }
}

/// Value and estimated absolute error of a scalar integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Values and estimated absolute error (max over components) of a vector integral.
#[derive(Debug, Clone, PartialEq)]
pub struct VecQuadResult {
    pub values: Vec<f64>,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    values: Vec<f64>,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut fvals = vec![0.0; dim * 21];
    for (i, &x) in XGK.iter().enumerate() {
        if i == 10 {
            f(center, buf);
            fvals[dim * 20..dim * 21].copy_from_slice(buf);
        } else {
            f(center - half * x, buf);
            fvals[dim * (2 * i)..dim * (2 * i + 1)].copy_from_slice(buf);
            f(center + half * x, buf);
            fvals[dim * (2 * i + 1)..dim * (2 * i + 2)].copy_from_slice(buf);
        }
    }
    if fvals.iter().any(|v| !v.is_finite()) {
        return Err(LabError::QuadratureFailure(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    let mut error = 0.0f64;
    for c in 0..dim {
        let mut k = WGK[10] * fvals[dim * 20 + c];
        let mut g = 0.0;
        let mut resabs = WGK[10] * fvals[dim * 20 + c].abs();
        for i in 0..10 {
            let s = fvals[dim * (2 * i) + c] + fvals[dim * (2 * i + 1) + c];
            k += WGK[i] * s;
            resabs += WGK[i] * (fvals[dim * (2 * i) + c].abs() + fvals[dim * (2 * i + 1) + c].abs());
            if i % 2 == 1 {
                g += WG[i / 2] * s;
            }
        }
        let mean = 0.5 * k;
        let mut resasc = WGK[10] * (fvals[dim * 20 + c] - mean).abs();
        for i in 0..10 {
            resasc += WGK[i]
                * ((fvals[dim * (2 * i) + c] - mean).abs() + (fvals[dim * (2 * i + 1) + c] - mean).abs());
        }
        let resasc = resasc * half.abs();
        let resabs = resabs * half.abs();
        let mut err = ((k - g) * half).abs();
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        kron[c] = k * half;
        error = error.max(err);
    }
    Ok((kron, error))
}

/// Integrates a vector-valued function over the partition given by `points`
/// (sorted, at least two entries) with globally adaptive bisection.
pub fn integrate_vec<F>(mut f: F, dim: usize, points: &[f64], spec: &QuadSpec) -> Result<VecQuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    if points.len() < 2 || points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(LabError::InvalidInput(
            "quadrature needs an increasing list of at least two points".into(),
        ));
    }
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        let (values, error) = gk21(&mut f, w[0], w[1], dim, &mut buf)?;
        evaluations += 21;
        heap.push(Segment { a: w[0], b: w[1], values, error });
    }
    let mut subdivisions = 0;
    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for s in heap.iter() {
            for (t, v) in total.iter_mut().zip(&s.values) {
                *t += v;
            }
            err += s.error;
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= spec.abs_tol.max(spec.rel_tol * scale) {
            return Ok(VecQuadResult { values: total, error: err, evaluations });
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(LabError::QuadratureFailure(format!(
                "error estimate {err:e} above tolerance after {subdivisions} subdivisions"
            )));
        }
        let worst = heap.pop().expect("non-empty partition");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            return Err(LabError::QuadratureFailure(format!(
                "interval [{}, {}] cannot be bisected further",
                worst.a, worst.b
            )));
        }
        let (v1, e1) = gk21(&mut f, worst.a, mid, dim, &mut buf)?;
        let (v2, e2) = gk21(&mut f, mid, worst.b, dim, &mut buf)?;
        evaluations += 42;
        subdivisions += 1;
        heap.push(Segment { a: worst.a, b: mid, values: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, values: v2, error: e2 });
    }
}

/// Scalar integral over the partition given by `points`.
pub fn integrate_breaks<F>(mut f: F, points: &[f64], spec: &QuadSpec) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x, out: &mut [f64]| out[0] = f(x), 1, points, spec)?;
    Ok(QuadResult {
        value: r.values[0],
        error: r.error,
        evaluations: r.evaluations,
    })
}

/// Scalar integral over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    integrate_breaks(f, &[a, b], spec)
}

fn real_line_forward(u: f64) -> f64 {
    // inverse of u = x / (1 - x^2)
    if u == 0.0 {
        0.0
    } else {
        2.0 * u / (1.0 + (1.0 + 4.0 * u * u).sqrt())
    }
}

/// Vector integral over the whole real line. `breaks` are points in the
/// original variable used to seed the partition; the range is mapped onto
/// (-1, 1) by `u = x / (1 - x^2)`.
pub fn integrate_real_line_vec<F>(mut f: F, dim: usize, breaks: &[f64], spec: &QuadSpec) -> Result<VecQuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut pts = vec![-1.0];
    let mut sorted: Vec<f64> = breaks.iter().copied().filter(|b| b.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for b in sorted {
        let x = real_line_forward(b);
        if x > *pts.last().unwrap() && x < 1.0 {
            pts.push(x);
        }
    }
    pts.push(1.0);
    integrate_vec(
        |x, out: &mut [f64]| {
            let d = 1.0 - x * x;
            let u = x / d;
            let jac = (1.0 + x * x) / (d * d);
            if !u.is_finite() || !jac.is_finite() {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            f(u, out);
            out.iter_mut().for_each(|o| *o *= jac);
        },
        dim,
        &pts,
        spec,
    )
}

/// Scalar integral over the whole real line.
pub fn integrate_real_line<F>(mut f: F, breaks: &[f64], spec: &QuadSpec) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_real_line_vec(|u, out: &mut [f64]| out[0] = f(u), 1, breaks, spec)?;
    Ok(QuadResult {
        value: r.values[0],
        error: r.error,
        evaluations: r.evaluations,
    })
}

/// Vector integral over `(-inf, upper]`, mapped by `u = upper - (1 - x) / x`.
pub fn integrate_lower_tail_vec<F>(mut f: F, dim: usize, upper: f64, breaks: &[f64], spec: &QuadSpec) -> Result<VecQuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut xs: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b < upper)
        .map(|b| 1.0 / (1.0 + (upper - b)))
        .collect();
    xs.push(0.0);
    xs.push(1.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    integrate_vec(
        |x, out: &mut [f64]| {
            let u = upper - (1.0 - x) / x;
            let jac = 1.0 / (x * x);
            if !u.is_finite() || !jac.is_finite() {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            f(u, out);
            out.iter_mut().for_each(|o| *o *= jac);
        },
        dim,
        &xs,
        spec,
    )
}

/// Scalar integral over `(-inf, upper]`.
pub fn integrate_lower_tail<F>(mut f: F, upper: f64, breaks: &[f64], spec: &QuadSpec) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_lower_tail_vec(|u, out: &mut [f64]| out[0] = f(u), 1, upper, breaks, spec)?;
    Ok(QuadResult {
        value: r.values[0],
        error: r.error,
        evaluations: r.evaluations,
    })
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable `log(sum(exp(x_i)))`; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
