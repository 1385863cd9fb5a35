//! Positive (1,1)-currents on the sphere represented as atoms plus an
//! absolutely continuous density, test functions, pairings and the
//! Fubini-Study currents `gamma_p` of orthonormal bases.

pub mod ma;
pub mod toric;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::bergman::log_bergman_polar;
use crate::error::{LabError, Result};
use crate::geom::{Complex64, PolarPoint, SingularWeight, SpherePoint};
use crate::l2::OrthoBasis;
use crate::quad::{integrate_lower_tail_vec, integrate_real_line_vec, QuadSpec};

/// Smooth compactly supported bump `amplitude * exp(1 - 1/(1 - t^2))`,
/// `t = |z - center| / radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: Complex64,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Bump { center, radius, amplitude: 1.0 }
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        let t2 = (z - self.center).norm_sqr() / (self.radius * self.radius);
        if t2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - t2)).exp()
        }
    }

    /// Closed-form Laplacian.
    pub fn laplacian(&self, z: Complex64) -> f64 {
        let t2 = (z - self.center).norm_sqr() / (self.radius * self.radius);
        if t2 >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - t2;
        let psi = (1.0 - 1.0 / q).exp();
        let bracket = -4.0 / (q * q) + 4.0 * t2 / q.powi(4) - 8.0 * t2 / q.powi(3);
        self.amplitude * psi * bracket / (self.radius * self.radius)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() < self.radius
    }
}

/// A finite family of bumps; the maximum pairing gap over the family is the
/// weak distance used throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFamily {
    pub bumps: Vec<Bump>,
}

impl TestFamily {
    /// Five bumps: one on the origin, four spread over the plane.
    pub fn five_bump() -> Self {
        let b = |re: f64, im: f64, r: f64| Bump::new(Complex64::new(re, im), r);
        TestFamily {
            bumps: vec![b(0.0, 0.0, 0.6), b(0.8, 0.3, 0.5), b(-0.6, -0.9, 0.7), b(1.5, -1.2, 1.0), b(-1.8, 1.4, 1.2)],
        }
    }

    /// Sixteen bumps on two rings plus the origin and a far one.
    pub fn sixteen_bump() -> Self {
        let mut bumps = vec![Bump::new(Complex64::new(0.0, 0.0), 0.5)];
        for k in 0..7 {
            let c = Complex64::from_polar(0.9, 2.0 * PI * k as f64 / 7.0);
            bumps.push(Bump::new(c, 0.45));
        }
        for k in 0..7 {
            let c = Complex64::from_polar(2.2, 2.0 * PI * (k as f64 + 0.5) / 7.0);
            bumps.push(Bump::new(c, 0.9));
        }
        bumps.push(Bump::new(Complex64::new(0.0, 4.0), 2.0));
        TestFamily { bumps }
    }
}

type LogDensity = Arc<dyn Fn(PolarPoint) -> f64 + Send + Sync>;

/// A current of bidegree (1,1) on the sphere: atoms plus a density with
/// respect to Lebesgue measure in chart 0, stored as its logarithm.
#[derive(Clone)]
pub struct CurrentMeasure {
    pub atoms: Vec<(SpherePoint, f64)>,
    pub log_density: LogDensity,
    /// Finite points where the density may be singular.
    pub singular: Vec<Complex64>,
    /// True when the density depends only on `|z|`.
    pub radial: bool,
}

impl std::fmt::Debug for CurrentMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CurrentMeasure")
            .field("atoms", &self.atoms)
            .field("singular", &self.singular)
            .field("radial", &self.radial)
            .finish()
    }
}

const ANGULAR: usize = 256;

fn pairing_spec() -> QuadSpec {
    QuadSpec::new(1e-12, 1e-10)
}

impl CurrentMeasure {
    pub fn scaled(&self, factor: f64) -> CurrentMeasure {
        let d = self.log_density.clone();
        let shift = factor.ln();
        CurrentMeasure {
            atoms: self.atoms.iter().map(|(p, m)| (*p, m * factor)).collect(),
            log_density: Arc::new(move |pt| d(pt) + shift),
            singular: self.singular.clone(),
            radial: self.radial,
        }
    }

    pub fn atom_mass(&self, point: SpherePoint) -> f64 {
        self.atoms
            .iter()
            .filter(|(p, _)| p.chordal(point) < 1e-12)
            .map(|(_, m)| m)
            .sum()
    }

    /// Mass of the absolutely continuous part.
    pub fn ac_mass(&self) -> Result<f64> {
        let n = if self.radial { 1 } else { ANGULAR };
        let dens = &self.log_density;
        let r = integrate_real_line_vec(
            |u, out: &mut [f64]| {
                let mut s = 0.0;
                for l in 0..n {
                    let v = (dens(PolarPoint::new(u, 2.0 * PI * l as f64 / n as f64)) + 2.0 * u).exp();
                    if v.is_finite() {
                        s += v;
                    }
                }
                out[0] = 2.0 * PI / n as f64 * s;
            },
            1,
            &[-20.0, -5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0, 20.0],
            &pairing_spec(),
        )?;
        Ok(r.values[0])
    }

    pub fn total_mass(&self) -> Result<f64> {
        Ok(self.atoms.iter().map(|(_, m)| m).sum::<f64>() + self.ac_mass()?)
    }

    /// `<T, chi>` for a bump.
    pub fn pair(&self, chi: &Bump) -> Result<f64> {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter_map(|(p, m)| p.finite().map(|z| m * chi.eval(z)))
            .sum();
        let radial = self.radial;
        let dens = self.log_density.clone();
        let ac = integrate_over_bump(chi, &self.singular, radial, true, move |pt| dens(pt), |z| chi.eval(z))?;
        Ok(atoms + ac)
    }
}

/// `int g(z) h(z) dlambda` over the support of `chi`, in polar coordinates
/// about a singular point inside the support (or the bump centre). With
/// `log_g` the closure returns `log g`.
fn integrate_over_bump<G, H>(
    chi: &Bump,
    singular: &[Complex64],
    radial_about_origin: bool,
    log_g: bool,
    g: G,
    h: H,
) -> Result<f64>
where
    G: Fn(PolarPoint) -> f64,
    H: Fn(Complex64) -> f64,
{
    let origin = singular
        .iter()
        .copied()
        .find(|s| chi.contains(*s))
        .unwrap_or(chi.center);
    let reach = (origin - chi.center).norm() + chi.radius;
    let at_zero = origin.norm() == 0.0;
    let n = if at_zero && radial_about_origin && chi.center.norm() == 0.0 { 1 } else { ANGULAR };
    let upper = reach.ln();
    let r = integrate_lower_tail_vec(
        |u, out: &mut [f64]| {
            let rho = u.exp();
            let mut s = 0.0;
            for l in 0..n {
                let theta = 2.0 * PI * l as f64 / n as f64;
                let offset = Complex64::from_polar(rho, theta);
                let z = origin + offset;
                let hv = h(z);
                if hv == 0.0 {
                    continue;
                }
                let pt = if at_zero { PolarPoint::new(u, theta) } else { PolarPoint::from_complex(z) };
                let v = if log_g { (g(pt) + 2.0 * u).exp() * hv } else { g(pt) * hv * (2.0 * u).exp() };
                if v.is_finite() {
                    s += v;
                }
            }
            out[0] = 2.0 * PI / n as f64 * s;
        },
        1,
        upper,
        &[upper - 0.5, upper - 1.0, upper - 2.0, upper - 4.0, upper - 8.0, upper - 16.0],
        &pairing_spec(),
    )?;
    Ok(r.values[0])
}

/// The current `gamma_p = (1/2) dd^c log sum |sigma_i|^2` of an orthonormal
/// basis: base-point atoms, the atom at infinity and the smooth remainder.
pub fn fs_current(basis: &OrthoBasis) -> CurrentMeasure {
    let space = &basis.space;
    let mut atoms: Vec<(SpherePoint, f64)> = space
        .base
        .iter()
        .map(|(a, m)| (SpherePoint::Finite(*a), *m as f64))
        .collect();
    let d = basis.dim();
    let top = space.base_degree() as f64 + (d as f64 - 1.0);
    let at_inf = space.p as f64 - top;
    if at_inf > 0.0 {
        atoms.push((SpherePoint::Infinity, at_inf));
    }
    let rc = basis.reduced_coefficients();
    let rows: Vec<Vec<Complex64>> = (0..d).map(|i| (0..d).map(|j| rc[(i, j)]).collect()).collect();
    let reversed: Vec<Vec<Complex64>> = rows.iter().map(|r| r.iter().rev().copied().collect()).collect();
    let log_density = Arc::new(move |pt: PolarPoint| -> f64 {
        if pt.u <= 0.0 {
            log_fs_density_unit_disc(&rows, pt)
        } else {
            // chart w = 1/z with reversed polynomials; the density picks up |w|^4
            log_fs_density_unit_disc(&reversed, PolarPoint::new(-pt.u, -pt.theta)) - 4.0 * pt.u
        }
    });
    CurrentMeasure {
        atoms,
        log_density,
        singular: space.base.iter().map(|(a, _)| *a).collect(),
        radial: space.is_radial(),
    }
}

/// Log of `(1/pi) (|t'|^2 |t|^2 - |<t', t>|^2) / |t|^4` for the polynomial
/// vector `t` at a point with `|z| <= 1`, via the Lagrange identity.
fn log_fs_density_unit_disc(rows: &[Vec<Complex64>], pt: PolarPoint) -> f64 {
    let z = pt.to_complex();
    let mut vals = Vec::with_capacity(rows.len());
    let mut ders = Vec::with_capacity(rows.len());
    for r in rows {
        let mut t = Complex64::new(0.0, 0.0);
        let mut dt = Complex64::new(0.0, 0.0);
        for &c in r.iter().rev() {
            dt = dt * z + t;
            t = t * z + c;
        }
        vals.push(t);
        ders.push(dt);
    }
    let q: f64 = vals.iter().map(|t| t.norm_sqr()).sum();
    let mut num = 0.0;
    for i in 0..vals.len() {
        for k in (i + 1)..vals.len() {
            num += (ders[i] * vals[k] - vals[i] * ders[k]).norm_sqr();
        }
    }
    if q == 0.0 || num == 0.0 {
        return f64::NEG_INFINITY;
    }
    num.ln() - 2.0 * q.ln() - PI.ln()
}

/// The curvature current `gamma = dd^c phi` of a global weight.
pub fn curvature_current(weight: &SingularWeight) -> Result<CurrentMeasure> {
    weight.check_global()?;
    let mut atoms: Vec<(SpherePoint, f64)> = weight
        .atoms
        .iter()
        .filter(|a| a.point != SpherePoint::Infinity)
        .map(|a| (a.point, a.nu))
        .collect();
    let inf = weight.mass_at_infinity().unwrap_or(0.0);
    if inf > 1e-15 {
        atoms.push((SpherePoint::Infinity, inf));
    }
    let singular: Vec<Complex64> = weight
        .atoms
        .iter()
        .map(|a| a.point)
        .chain(weight.punctures.iter().copied())
        .filter_map(|p| p.finite())
        .collect();
    let w = weight.clone();
    let log_density =
        Arc::new(move |pt: PolarPoint| -> f64 {
        match w.curvature_log_density_polar(pt) {
            Some(v) => v,
            None if pt.u.abs() < 300.0 => w.curvature_density(pt.to_complex()).map_or(f64::NEG_INFINITY, f64::ln),
            None => f64::NEG_INFINITY,
        }
    });
    Ok(CurrentMeasure { atoms, log_density, singular, radial: weight.is_radial() })
}

/// `max_chi |<T, chi> - <S, chi>|` over a test family.
pub fn weak_distance(t: &CurrentMeasure, s: &CurrentMeasure, family: &TestFamily) -> Result<f64> {
    let mut worst = 0.0f64;
    for chi in &family.bumps {
        worst = worst.max((t.pair(chi)? - s.pair(chi)?).abs());
    }
    Ok(worst)
}

/// `|atom mass of T at point - nu|`.
pub fn lelong_gap(t: &CurrentMeasure, point: SpherePoint, nu: f64) -> f64 {
    (t.atom_mass(point) - nu).abs()
}

/// Both sides of `<gamma_p, chi> - p <gamma, chi> = (1/2) int log P_p dd^c chi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `|<gamma_p, chi>| + p |<gamma, chi>|`, the scale for relative comparisons.
    pub scale: f64,
}

pub fn pairing_identity(basis: &OrthoBasis, chi: &Bump) -> Result<PairingReport> {
    let gp = fs_current(basis);
    let g = curvature_current(&basis.space.weight)?;
    let p = basis.p() as f64;
    let a = gp.pair(chi)?;
    let b = g.pair(chi)?;
    let mut singular = gp.singular.clone();
    singular.extend(g.singular.iter().copied());
    let b2 = basis.clone();
    let rhs = integrate_over_bump(
        chi,
        &singular,
        basis.space.is_radial(),
        false,
        move |pt| log_bergman_polar(&b2, pt),
        |z| chi.laplacian(z) / (2.0 * PI),
    )?;
    Ok(PairingReport { lhs: a - p * b, rhs: 0.5 * rhs, scale: a.abs() + p * b.abs() })
}

/// Signed mass of `T - S` as a sanity check on total masses.
pub fn mass_defect(t: &CurrentMeasure, expected: f64) -> Result<f64> {
    Ok(t.total_mass()? - expected)
}

/// Rejects zero-dimensional section spaces early with a clear error.
pub fn require_sections(basis: &OrthoBasis) -> Result<()> {
    if basis.dim() == 0 {
        return Err(LabError::UndefinedSpace("no sections".into()));
    }
    Ok(())
}
