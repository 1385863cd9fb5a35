//! Bergman density functions `P_p = sum |s_i|^2 e^{-2 p phi}` of orthonormal
//! bases and the convergence diagnostics built on them.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{LabError, Result};
use crate::geom::{Complex64, PolarPoint, SpherePoint};
use crate::l2::OrthoBasis;
use crate::plane::{excision_discs, integrate_plane, RadialRule};
use crate::quad::QuadSpec;
use crate::random::gaussian_unit_vector;

/// `log P_p` at a chart point given in polar form.
pub fn log_bergman_polar(basis: &OrthoBasis, pt: PolarPoint) -> f64 {
    basis.log_sum_squares(pt) - 2.0 * basis.p() as f64 * basis.space.weight.eval_polar(pt)
}

/// `P_p(x)`; vanishes at atoms with positive forced order and is finite elsewhere.
pub fn bergman_eval(basis: &OrthoBasis, x: Complex64) -> f64 {
    if x.norm() == 0.0 {
        // the polar form needs log|x|; fall back to a direct evaluation
        return bergman_eval_direct(basis, x);
    }
    log_bergman_polar(basis, PolarPoint::from_complex(x)).exp()
}

/// Evaluation without the log-domain path, valid for moderate `|x|`.
fn bergman_eval_direct(basis: &OrthoBasis, x: Complex64) -> f64 {
    let rc = basis.reduced_coefficients();
    let d = basis.dim();
    let mut b = Complex64::new(1.0, 0.0);
    for (a, m) in &basis.space.base {
        b *= (x - a).powu(*m);
    }
    let mut total = 0.0;
    for i in 0..d {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (0..d).rev() {
            acc = acc * x + rc[(i, j)];
        }
        total += (b * acc).norm_sqr();
    }
    let phi = basis.space.weight.eval(x);
    if total == 0.0 {
        return 0.0;
    }
    (total.ln() - 2.0 * basis.p() as f64 * phi).exp()
}

/// Pointwise values `|s(x)|^2 e^{-2 p phi(x)}` of a unit-norm section `sum a_i sigma_i`.
pub fn section_density(basis: &OrthoBasis, a: &[Complex64], x: Complex64) -> f64 {
    let pt = PolarPoint::from_complex(x);
    let (vals, scale) = basis.reduced_values(pt);
    let s: Complex64 = vals.iter().zip(a).map(|(v, c)| v * c).sum();
    let (lb, _) = basis.space.base_factor_polar(pt);
    (2.0 * lb + 2.0 * scale + s.norm_sqr().ln() - 2.0 * basis.p() as f64 * basis.space.weight.eval_polar(pt)).exp()
}

/// Outcome of the extremal property check at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalReport {
    pub bergman: f64,
    pub max_random: f64,
    pub extremal_value: f64,
}

/// Compares `P_p(x)` with random unit sections and with the extremal section
/// whose coefficients are proportional to `conj(sigma_i(x))`.
pub fn extremal_check<R: Rng>(basis: &OrthoBasis, x: Complex64, trials: usize, rng: &mut R) -> ExtremalReport {
    let bergman = bergman_eval(basis, x);
    let d = basis.dim();
    let mut max_random = 0.0f64;
    for _ in 0..trials {
        let a = gaussian_unit_vector(rng, d);
        max_random = max_random.max(section_density(basis, &a, x));
    }
    let (vals, _) = basis.reduced_values(PolarPoint::from_complex(x));
    let norm = vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let a: Vec<Complex64> = vals.iter().map(|v| v.conj() / norm).collect();
    ExtremalReport {
        bergman,
        max_random,
        extremal_value: section_density(basis, &a, x),
    }
}

/// Double-exponential trapezoid nodes `u = sinh(sinh(tau))` on the real line.
fn de_nodes(h: f64) -> Vec<(f64, f64)> {
    let t_max = 4.2;
    let n = (t_max / h).ceil() as i64;
    (-n..=n)
        .map(|i| {
            let t = i as f64 * h;
            let u = t.sinh().sinh();
            let w = h * t.sinh().cosh() * t.cosh();
            (u, w)
        })
        .collect()
}

/// Integrals over the plane of `exp(f_c)` for log-integrands `f_c` of polar
/// coordinates, written by `f` into its output slice, by trapezoid rules in
/// `tau` (with `u = log|z| = sinh(sinh(tau))`) and in the angle. Returns the
/// values and the differences from the rule with doubled step.
fn plane_integral<F>(mut f: F, dim: usize, angular: usize) -> Vec<(f64, f64)>
where
    F: FnMut(PolarPoint, &mut [f64]),
{
    let h = 1.0 / 128.0;
    let nodes = de_nodes(h);
    let mut fine = vec![0.0; dim];
    let mut coarse = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let mut ring = vec![0.0; dim];
    let mid_parity = (nodes.len() / 2) % 2;
    for (idx, (u, w)) in nodes.iter().enumerate() {
        if !u.is_finite() {
            continue;
        }
        ring.iter_mut().for_each(|r| *r = 0.0);
        for l in 0..angular {
            let theta = 2.0 * PI * l as f64 / angular as f64;
            f(PolarPoint::new(*u, theta), &mut buf);
            for (r, b) in ring.iter_mut().zip(&buf) {
                let v = (b + 2.0 * u).exp();
                if v.is_finite() {
                    *r += v;
                }
            }
        }
        for c in 0..dim {
            let contrib = ring[c] * 2.0 * PI / angular as f64 * w;
            if contrib.is_finite() {
                fine[c] += contrib;
                if idx % 2 == mid_parity {
                    coarse[c] += 2.0 * contrib;
                }
            }
        }
    }
    fine.into_iter().zip(coarse).map(|(f, c)| (f, (f - c).abs())).collect()
}

/// Same as `plane_integral`, with discs about off-origin singular points cut
/// out and integrated in local coordinates (piecewise double-exponential rule).
fn plane_integral_for<F>(basis: &OrthoBasis, dim: usize, mut f: F) -> Vec<(f64, f64)>
where
    F: FnMut(PolarPoint, &mut [f64]),
{
    let discs = excision_discs(&basis.space.off_axis_points());
    if discs.is_empty() {
        return plane_integral(f, dim, angular_nodes(basis));
    }
    let r = integrate_plane(
        |pt, log_jac, out: &mut [f64]| {
            f(pt, out);
            out.iter_mut().for_each(|o| *o = (*o + log_jac).exp());
        },
        dim,
        &discs,
        angular_nodes(basis),
        &[-1.0, 0.0, 1.0],
        RadialRule::DoubleExponential { h: 1.0 / 64.0 },
        QuadSpec::new(1e-15, 1e-13),
    );
    match r {
        // the rule reports one error for all components
        Ok(r) => r.values.into_iter().map(|v| (v, r.error)).collect(),
        Err(_) => vec![(f64::NAN, f64::INFINITY); dim],
    }
}

fn angular_nodes(basis: &OrthoBasis) -> usize {
    if basis.space.is_radial() {
        1
    } else {
        (4 * basis.p() as usize + 8).max(128)
    }
}

/// Result of an independent-route integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralCheck {
    pub value: f64,
    pub expected: f64,
    pub error_estimate: f64,
}

/// `int P_p f dlambda`, which should equal `d_p`, computed by a quadrature
/// route independent of the one used to build the basis.
pub fn normalization_check(basis: &OrthoBasis) -> IntegralCheck {
    let vol = &basis.space.volume;
    let (value, err) = plane_integral_for(basis, 1, |pt, out| {
        out[0] = log_bergman_polar(basis, pt) + vol.log_density_polar(pt)
    })[0];
    IntegralCheck { value, expected: basis.dim() as f64, error_estimate: err }
}

/// Squared norms of the basis sections by the independent route.
pub fn section_norms(basis: &OrthoBasis) -> Vec<IntegralCheck> {
    let vol = &basis.space.volume;
    let p = basis.p() as f64;
    plane_integral_for(basis, basis.dim(), |pt, out| {
        let (vals, scale) = basis.reduced_values(pt);
        let (lb, _) = basis.space.base_factor_polar(pt);
        let common = 2.0 * lb + 2.0 * scale - 2.0 * p * basis.space.weight.eval_polar(pt) + vol.log_density_polar(pt);
        for (o, v) in out.iter_mut().zip(&vals) {
            *o = common + v.norm_sqr().ln();
        }
    })
    .into_iter()
    .map(|(value, error_estimate)| IntegralCheck { value, expected: 1.0, error_estimate })
    .collect()
}

/// Compact region on which sup-norm diagnostics are taken: a polar grid on an
/// annulus, minus a standoff disc around each singular point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub standoff: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region { r_min: 0.5, r_max: 2.0, n_r: 10, n_theta: 10, standoff: 0.1 }
    }
}

impl Region {
    pub fn points(&self, singular: &[SpherePoint]) -> Vec<Complex64> {
        let mut pts = Vec::with_capacity(self.n_r * self.n_theta);
        for i in 0..self.n_r {
            let r = if self.n_r == 1 {
                self.r_min
            } else {
                self.r_min * (self.r_max / self.r_min).powf(i as f64 / (self.n_r - 1) as f64)
            };
            for j in 0..self.n_theta {
                let theta = 2.0 * PI * (j as f64 + 0.5) / self.n_theta as f64;
                let z = Complex64::from_polar(r, theta);
                let clear = singular.iter().all(|s| match s {
                    SpherePoint::Finite(a) => (z - a).norm() > self.standoff,
                    SpherePoint::Infinity => z.norm() < 1.0 / self.standoff,
                });
                if clear {
                    pts.push(z);
                }
            }
        }
        pts
    }
}

/// One row of the Bergman convergence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRow {
    pub p: u32,
    pub sup_abs_log_over_p: f64,
    pub min_log_over_p: f64,
    pub grid_points: usize,
}

/// Sup-norm decay of `(1/p) log P_p` on a region.
#[derive(Debug, Clone, PartialEq)]
pub struct BergmanDiagnostics {
    pub rows: Vec<DiagnosticRow>,
    pub values: Vec<(u32, Complex64, f64)>,
    pub verdict: bool,
}

/// Decay required between the first and last degree of a sweep.
pub const MAINHYP_DECAY: f64 = 0.6;

/// Singular points of the weight and volume of a basis.
pub fn singular_points(basis: &OrthoBasis) -> Vec<SpherePoint> {
    let w = &basis.space.weight;
    w.atoms
        .iter()
        .map(|a| a.point)
        .chain(w.punctures.iter().copied())
        .chain(basis.space.volume.punctures().iter().copied())
        .collect()
}

/// Evaluates `sup_K |log P_p| / p` for each basis of a degree sweep. The
/// verdict requires a strictly decreasing sequence whose last entry is at
/// most `MAINHYP_DECAY` times the first.
pub fn mainhyp_diagnostic(bases: &[OrthoBasis], region: &Region) -> Result<BergmanDiagnostics> {
    if bases.is_empty() {
        return Err(LabError::InvalidInput("empty degree sweep".into()));
    }
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for basis in bases {
        let pts = region.points(&singular_points(basis));
        if pts.is_empty() {
            return Err(LabError::InvalidInput("region has no admissible points".into()));
        }
        let p = basis.p();
        let mut sup = 0.0f64;
        let mut min = f64::INFINITY;
        for z in &pts {
            let lp = log_bergman_polar(basis, PolarPoint::from_complex(*z));
            if !lp.is_finite() {
                return Err(LabError::NumericallyDegenerate(format!("log P_p not finite at {z}")));
            }
            sup = sup.max(lp.abs() / p as f64);
            min = min.min(lp / p as f64);
            values.push((p, *z, lp.exp()));
        }
        rows.push(DiagnosticRow { p, sup_abs_log_over_p: sup, min_log_over_p: min, grid_points: pts.len() });
    }
    let decreasing = rows.windows(2).all(|w| w[1].sup_abs_log_over_p < w[0].sup_abs_log_over_p);
    let decay = rows.last().unwrap().sup_abs_log_over_p <= MAINHYP_DECAY * rows[0].sup_abs_log_over_p;
    Ok(BergmanDiagnostics { rows, values, verdict: decreasing && decay })
}

/// Both sides of the sub-mean-value upper bound
/// `(1/p) log P_p(z) <= (1/p) log(C / r^2) + 2 (max_B phi - phi(z))`
/// with `C = (1/pi) max_B (1/f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BkeReport {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn bke_upper_check(basis: &OrthoBasis, z: Complex64, r: f64) -> Result<BkeReport> {
    if !(r > 0.0) {
        return Err(LabError::InvalidInput("radius must be positive".into()));
    }
    for s in singular_points(basis) {
        let touches = match s {
            SpherePoint::Finite(a) => (z - a).norm() <= r,
            SpherePoint::Infinity => false,
        };
        if touches {
            return Err(LabError::BallTouchesAtom { center: format!("{z}"), radius: r });
        }
    }
    let w = &basis.space.weight;
    let vol = &basis.space.volume;
    // phi is subharmonic, so its maximum over the disc sits on the boundary
    let n = 1024;
    let mut max_phi = f64::NEG_INFINITY;
    for l in 0..n {
        let x = z + Complex64::from_polar(r, 2.0 * PI * l as f64 / n as f64);
        max_phi = max_phi.max(w.eval(x));
    }
    let mut min_f = vol.density(z);
    for i in 1..=32 {
        let rho = r * i as f64 / 32.0;
        for l in 0..64 {
            let x = z + Complex64::from_polar(rho, 2.0 * PI * l as f64 / 64.0);
            min_f = min_f.min(vol.density(x));
        }
    }
    let p = basis.p() as f64;
    let c = 1.0 / (PI * min_f);
    let lhs = bergman_eval(basis, z).ln() / p;
    let rhs = (c / (r * r)).ln() / p + 2.0 * (max_phi - w.eval(z));
    Ok(BkeReport { lhs, rhs })
}
