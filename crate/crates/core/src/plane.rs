//! Integrals over the chart plane for data with singular points off the
//! origin. A disc around each such point is integrated in local log-polar
//! coordinates; the rest of the plane is integrated in global log-polar
//! coordinates, each circle with the discs cut out.

use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::geom::{Complex64, PolarPoint};
use crate::quad::{integrate_lower_tail_vec, integrate_real_line_vec, integrate_vec, QuadSpec, VecQuadResult};

/// Excised disc around an off-origin singular point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub center: Complex64,
    pub radius: f64,
}

/// Disjoint discs around the given nonzero points, each at distance at least
/// three radii from the origin and from every other point.
pub fn excision_discs(points: &[Complex64]) -> Vec<Disc> {
    let mut pts: Vec<Complex64> = points.iter().copied().filter(|a| a.norm() > 0.0).collect();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup();
    pts.iter()
        .map(|&a| {
            let gap = pts.iter().filter(|&&b| b != a).map(|&b| (a - b).norm()).fold(a.norm(), f64::min);
            Disc { center: a, radius: 0.25 * gap }
        })
        .collect()
}

/// Outer one-dimensional rule in the log-radial variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialRule {
    /// Adaptive Gauss-Kronrod on algebraically mapped half-lines.
    Adaptive(QuadSpec),
    /// Piecewise double-exponential trapezoid with step `h`; the error
    /// estimate is the change against step `2h`.
    DoubleExponential { h: f64 },
}

/// Integrand callback: the point, `log` of the area Jacobian of the current
/// coordinates, and the output slice to overwrite.
pub trait PlaneIntegrand: FnMut(PolarPoint, f64, &mut [f64]) {}
impl<F: FnMut(PolarPoint, f64, &mut [f64])> PlaneIntegrand for F {}

struct Plane<'a, F> {
    f: F,
    dim: usize,
    discs: &'a [Disc],
    nodes: usize,
    ring_spec: QuadSpec,
    failure: Option<LabError>,
    buf: Vec<f64>,
}

impl<F: PlaneIntegrand> Plane<'_, F> {
    /// Trapezoid sum over a full circle; `false` when halving the node count
    /// changes the result by more than the ring tolerance.
    fn trapezoid(&mut self, out: &mut [f64], point: &impl Fn(f64) -> PolarPoint, log_jac: f64) -> bool {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut half = vec![0.0; self.dim];
        let n = self.nodes + self.nodes % 2;
        let h = 2.0 * PI / n as f64;
        for l in 0..n {
            (self.f)(point(l as f64 * h), log_jac, &mut self.buf);
            for ((o, hv), v) in out.iter_mut().zip(half.iter_mut()).zip(&self.buf) {
                if v.is_finite() {
                    *o += v * h;
                    if l % 2 == 0 {
                        *hv += 2.0 * v * h;
                    }
                }
            }
        }
        let scale = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = out.iter().zip(&half).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        diff <= self.ring_spec.abs_tol.max(self.ring_spec.rel_tol * scale)
    }

    /// Adaptive sum of the angular integrals over `arcs`, split at `peaks`.
    fn adaptive(&mut self, out: &mut [f64], point: &impl Fn(f64) -> PolarPoint, log_jac: f64, arcs: &[(f64, f64)], peaks: &[f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(a, b) in arcs {
            let mut pts = vec![a, b];
            for &p in peaks {
                let t = if p > b { p - 2.0 * PI } else { p };
                if t > a && t < b {
                    pts.push(t);
                }
            }
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let (f, buf) = (&mut self.f, &mut self.buf);
            let r = integrate_vec(
                |t, o: &mut [f64]| {
                    f(point(t), log_jac, buf);
                    for (o, v) in o.iter_mut().zip(buf.iter()) {
                        *o = if v.is_finite() { *v } else { 0.0 };
                    }
                },
                self.dim,
                &pts,
                &self.ring_spec,
            );
            match r {
                Ok(r) => out.iter_mut().zip(&r.values).for_each(|(o, v)| *o += v),
                Err(e) => {
                    self.failure.get_or_insert(e);
                }
            }
        }
    }

    /// Angular integral over the circle `|z| = e^u` minus the discs.
    fn ring(&mut self, u: f64, out: &mut [f64]) {
        let r = u.exp();
        let mut cuts = Vec::new();
        let mut near = false;
        for d in self.discs {
            let ca = d.center.norm();
            if (r - ca).abs() < d.radius {
                let c = ((r * r + ca * ca - d.radius * d.radius) / (2.0 * r * ca)).clamp(-1.0, 1.0);
                cuts.push((d.center.arg(), c.acos()));
            } else if self.nodes as f64 * (u - ca.ln()).abs() < 36.0 {
                near = true;
            }
        }
        let base = cuts.first().map(|c| c.0).unwrap_or(0.0);
        let point = move |t: f64| PolarPoint::new(u, base + t);
        if cuts.is_empty() && !near && self.trapezoid(out, &point, 2.0 * u) {
            return;
        }
        let wrap = |t: f64| (t - base).rem_euclid(2.0 * PI);
        let peaks: Vec<f64> = self.discs.iter().map(|d| wrap(d.center.arg())).collect();
        let mut arcs: Vec<(f64, f64)> = Vec::new();
        if cuts.is_empty() {
            arcs.push((0.0, 2.0 * PI));
        } else {
            let mut c: Vec<(f64, f64)> = cuts.iter().map(|&(t, d)| (if t == base { 0.0 } else { wrap(t) }, d)).collect();
            c.sort_by(|a, b| a.0.total_cmp(&b.0));
            for k in 0..c.len() {
                let start = c[k].0 + c[k].1;
                let end = if k + 1 < c.len() { c[k + 1].0 - c[k + 1].1 } else { 2.0 * PI - c[0].1 };
                if end > start {
                    arcs.push((start, end));
                }
            }
        }
        self.adaptive(out, &point, 2.0 * u, &arcs, &peaks);
    }

    /// Angular integral over the circle of radius `e^s` about `disc.center`.
    fn local_ring(&mut self, disc: Disc, s: f64, out: &mut [f64]) {
        let point = move |t: f64| PolarPoint::near(disc.center, s, t);
        if !self.trapezoid(out, &point, 2.0 * s) {
            self.adaptive(out, &point, 2.0 * s, &[(0.0, 2.0 * PI)], &[]);
        }
    }
}

fn sorted_breaks(breaks: &[f64], discs: &[Disc]) -> Vec<f64> {
    let mut b: Vec<f64> = breaks.to_vec();
    for d in discs {
        let ca = d.center.norm();
        b.extend([(ca - d.radius).ln(), ca.ln(), (ca + d.radius).ln()]);
    }
    b.retain(|x| x.is_finite());
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Offsets below the top of a disc's log-radius range used to seed the
/// partition of the local integral.
const LOCAL_BREAKS: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 40.0];

/// Integral of the callback over the plane. `nodes` is the angular trapezoid
/// size for circles away from the discs and for circles inside them; `breaks`
/// seed the partition in `u = log|z|`.
pub fn integrate_plane<F: PlaneIntegrand>(
    f: F,
    dim: usize,
    discs: &[Disc],
    nodes: usize,
    breaks: &[f64],
    rule: RadialRule,
    ring_spec: QuadSpec,
) -> Result<VecQuadResult> {
    let mut plane = Plane { f, dim, discs, nodes, ring_spec, failure: None, buf: vec![0.0; dim] };
    let global_breaks = sorted_breaks(breaks, discs);
    let mut total = match rule {
        RadialRule::Adaptive(spec) => integrate_real_line_vec(|u, out| plane.ring(u, out), dim, &global_breaks, &spec)?,
        RadialRule::DoubleExponential { h } => de_line(|u, out| plane.ring(u, out), dim, &global_breaks, h),
    };
    for &d in discs {
        let top = d.radius.ln();
        let local_breaks: Vec<f64> = LOCAL_BREAKS.iter().map(|o| top - o).collect();
        let part = match rule {
            RadialRule::Adaptive(spec) => {
                integrate_lower_tail_vec(|s, out| plane.local_ring(d, s, out), dim, top, &local_breaks, &spec)?
            }
            RadialRule::DoubleExponential { h } => de_lower_tail(|s, out| plane.local_ring(d, s, out), dim, top, h),
        };
        total.values.iter_mut().zip(&part.values).for_each(|(t, v)| *t += v);
        total.error += part.error;
        total.evaluations += part.evaluations;
    }
    match plane.failure {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Trapezoid sums over `t = k h`, `|k| <= n`, at steps `h` and `2h`.
struct DeSum {
    fine: Vec<f64>,
    coarse: Vec<f64>,
    evaluations: usize,
}

impl DeSum {
    fn new(dim: usize) -> Self {
        DeSum { fine: vec![0.0; dim], coarse: vec![0.0; dim], evaluations: 0 }
    }

    /// `map(t) = (x, dx/dt)`.
    fn run<G, M>(&mut self, g: &mut G, t_min: f64, t_max: f64, h: f64, map: M)
    where
        G: FnMut(f64, &mut [f64]),
        M: Fn(f64) -> (f64, f64),
    {
        let mut buf = vec![0.0; self.fine.len()];
        let (k0, k1) = ((t_min / h).ceil() as i64, (t_max / h).floor() as i64);
        for k in k0..=k1 {
            let (x, w) = map(k as f64 * h);
            if !(x.is_finite() && w.is_finite()) || w == 0.0 {
                continue;
            }
            g(x, &mut buf);
            self.evaluations += 1;
            for c in 0..buf.len() {
                let v = buf[c] * w * h;
                if v.is_finite() {
                    self.fine[c] += v;
                    if k.rem_euclid(2) == 0 {
                        self.coarse[c] += 2.0 * v;
                    }
                }
            }
        }
    }

    fn finish(self) -> VecQuadResult {
        let error = self.fine.iter().zip(&self.coarse).map(|(f, c)| (f - c).abs()).fold(0.0, f64::max);
        VecQuadResult { values: self.fine, error, evaluations: self.evaluations }
    }
}

const HALF_PI: f64 = 0.5 * PI;

/// Parameter range of the exp-sinh tails. The far end reaches `|x| ~ 2e11`:
/// far enough for `1/x^2` tails, short of the point where large log-terms of
/// integrand and Jacobian cancel to no significant digits.
const TAIL_T: (f64, f64) = (-4.5, 3.5);

/// `x = b + exp((pi/2) sinh t)` covers `(b, inf)`.
fn exp_sinh(t: f64) -> (f64, f64) {
    let e = (HALF_PI * t.sinh()).exp();
    (e, e * HALF_PI * t.cosh())
}

/// `x = c + m tanh((pi/2) sinh t)` covers `(c - m, c + m)`.
fn tanh_sinh(t: f64) -> (f64, f64) {
    let s = HALF_PI * t.sinh();
    (s.tanh(), HALF_PI * t.cosh() / (s.cosh() * s.cosh()))
}

/// Whole real line split at `breaks`: tanh-sinh on each finite piece and
/// exp-sinh on the two tails.
fn de_line<G: FnMut(f64, &mut [f64])>(mut g: G, dim: usize, breaks: &[f64], h: f64) -> VecQuadResult {
    let mut sum = DeSum::new(dim);
    let (lo, hi) = match (breaks.first(), breaks.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    };
    sum.run(&mut g, TAIL_T.0, TAIL_T.1, h, |t| {
        let (e, w) = exp_sinh(t);
        (lo - e, w)
    });
    sum.run(&mut g, TAIL_T.0, TAIL_T.1, h, |t| {
        let (e, w) = exp_sinh(t);
        (hi + e, w)
    });
    for pair in breaks.windows(2) {
        let (c, m) = (0.5 * (pair[0] + pair[1]), 0.5 * (pair[1] - pair[0]));
        sum.run(&mut g, -3.0, 3.0, h, |t| {
            let (x, w) = tanh_sinh(t);
            (c + m * x, m * w)
        });
    }
    sum.finish()
}

fn de_lower_tail<G: FnMut(f64, &mut [f64])>(mut g: G, dim: usize, upper: f64, h: f64) -> VecQuadResult {
    let mut sum = DeSum::new(dim);
    sum.run(&mut g, TAIL_T.0, TAIL_T.1, h, |t| {
        let (e, w) = exp_sinh(t);
        (upper - e, w)
    });
    sum.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discs_are_disjoint_and_avoid_the_origin() {
        let pts = [Complex64::new(1.0, 0.0), Complex64::new(1.2, 0.0), Complex64::new(0.0, -3.0)];
        let d = excision_discs(&pts);
        assert_eq!(d.len(), 3);
        for (i, a) in d.iter().enumerate() {
            assert!(a.radius * 3.0 <= a.center.norm() + 1e-15);
            for b in &d[i + 1..] {
                assert!(a.radius + b.radius < (a.center - b.center).norm());
            }
        }
    }

    #[test]
    fn integrable_point_singularity_off_the_origin() {
        // int |z - a|^(-1) exp(-|z - a|^2) dA = pi^(3/2), next to a second point
        let a = Complex64::new(1.5, 0.5);
        let discs = excision_discs(&[a, Complex64::new(0.0, 2.0)]);
        for rule in [RadialRule::Adaptive(QuadSpec::new(1e-14, 1e-12)), RadialRule::DoubleExponential { h: 1.0 / 32.0 }] {
            let r = integrate_plane(
                |pt: PolarPoint, log_jac: f64, out: &mut [f64]| {
                    let l = pt.log_abs_minus(a);
                    out[0] = (log_jac - l - (2.0 * l).exp()).exp();
                },
                1,
                &discs,
                64,
                &[-2.0, 0.0, 2.0],
                rule,
                QuadSpec::new(1e-14, 1e-12),
            )
            .unwrap();
            assert!((r.values[0] - PI.powf(1.5)).abs() < 1e-10, "{rule:?}: {}", r.values[0]);
        }
    }

    #[test]
    fn smooth_gaussian_off_the_origin() {
        // int exp(-|z - a|^2) dA = pi
        let a = Complex64::new(-0.7, 1.1);
        let discs = excision_discs(&[a]);
        for rule in [RadialRule::Adaptive(QuadSpec::new(1e-14, 1e-12)), RadialRule::DoubleExponential { h: 1.0 / 32.0 }] {
            let r = integrate_plane(
                |pt: PolarPoint, log_jac: f64, out: &mut [f64]| out[0] = (log_jac - (2.0 * pt.log_abs_minus(a)).exp()).exp(),
                1,
                &discs,
                64,
                &[-2.0, 0.0, 2.0],
                rule,
                QuadSpec::new(1e-14, 1e-12),
            )
            .unwrap();
            assert!((r.values[0] - PI).abs() < 1e-10, "{rule:?}: {}", r.values[0]);
        }
    }
}
