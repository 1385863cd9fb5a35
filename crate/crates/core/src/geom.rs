//! Model spaces, singular weights and volume densities on the Riemann sphere.
//!
//! Everything is expressed in an affine chart `z` (chart 0) or `w = 1/z`
//! (chart infinity). With `d^c = (1/2 pi i)(d - dbar)` the Lebesgue density of
//! `dd^c u` is `Laplacian(u) / (2 pi)`, so `dd^c log|z| = delta_0` and the
//! Fubini-Study weight `(1/2) log(1 + |z|^2)` has curvature density
//! `(1/pi)(1 + |z|^2)^-2` of total mass one.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::sync::Arc;

pub use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::quad::{log_sum_exp, softplus};

/// A point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpherePoint {
    Finite(Complex64),
    Infinity,
}

impl SpherePoint {
    pub fn origin() -> Self {
        SpherePoint::Finite(Complex64::new(0.0, 0.0))
    }

    pub fn finite(self) -> Option<Complex64> {
        match self {
            SpherePoint::Finite(z) => Some(z),
            SpherePoint::Infinity => None,
        }
    }

    pub fn is_origin(self) -> bool {
        matches!(self, SpherePoint::Finite(z) if z.norm() == 0.0)
    }

    /// Image under `z -> 1/z`.
    pub fn inverse(self) -> Self {
        match self {
            SpherePoint::Infinity => SpherePoint::origin(),
            SpherePoint::Finite(z) if z.norm() == 0.0 => SpherePoint::Infinity,
            SpherePoint::Finite(z) => SpherePoint::Finite(z.inv()),
        }
    }

    /// Chordal distance, bounded by one.
    pub fn chordal(self, other: SpherePoint) -> f64 {
        match (self, other) {
            (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
            (SpherePoint::Finite(z), SpherePoint::Infinity) | (SpherePoint::Infinity, SpherePoint::Finite(z)) => {
                1.0 / (1.0 + z.norm_sqr()).sqrt()
            }
            (SpherePoint::Finite(a), SpherePoint::Finite(b)) => {
                (a - b).norm() / ((1.0 + a.norm_sqr()) * (1.0 + b.norm_sqr())).sqrt()
            }
        }
    }

    fn describe(self) -> String {
        match self {
            SpherePoint::Infinity => "inf".to_string(),
            SpherePoint::Finite(z) => format!("{}{:+}i", z.re, z.im),
        }
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Affine charts of the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    Zero,
    Infinity,
}

impl Chart {
    pub fn other(self) -> Chart {
        match self {
            Chart::Zero => Chart::Infinity,
            Chart::Infinity => Chart::Zero,
        }
    }
}

/// The compact model spaces supported by the laboratory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpace {
    Sphere,
    ProductSphere,
}

impl ModelSpace {
    pub fn dimension(self) -> usize {
        match self {
            ModelSpace::Sphere => 1,
            ModelSpace::ProductSphere => 2,
        }
    }

    /// Chart transition `z -> 1/z` on one factor; `None` at the origin.
    pub fn transition(z: Complex64) -> Option<Complex64> {
        (z.norm() != 0.0).then(|| z.inv())
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelSpace::Sphere => "sphere",
            ModelSpace::ProductSphere => "product-sphere",
        }
    }
}

/// Point mass of the curvature current: the weight behaves like
/// `nu * log|z - a|` near `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub point: SpherePoint,
    pub nu: f64,
}

/// User supplied smooth potential without a closed-form Laplacian.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub f: Arc<dyn Fn(Complex64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomPotential({})", self.name)
    }
}

impl PartialEq for CustomPotential {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.f, &other.f)
    }
}

/// Smooth part of a weight.
///
/// `Standard` is `fs_scale * (1/2) log(1 + |z|^2) + quadratic * |z|^2 + constant`.
/// A nonzero quadratic term is only meaningful chart-locally.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothPart {
    Standard { fs_scale: f64, quadratic: f64, constant: f64 },
    Custom(CustomPotential),
}

/// Exact offset of a point from a nearby center, kept when the point itself
/// cannot be told apart from the center in floating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub center: Complex64,
    /// `log|z - center|`.
    pub log_dist: f64,
    /// `arg(z - center)`.
    pub arg: f64,
}

/// Log-domain view of a chart point `z = exp(u + i theta)`.
#[derive(Debug, Clone, Copy)]
pub struct PolarPoint {
    pub u: f64,
    pub theta: f64,
    pub anchor: Option<Anchor>,
}

impl PolarPoint {
    pub fn new(u: f64, theta: f64) -> Self {
        PolarPoint { u, theta, anchor: None }
    }

    pub fn from_complex(z: Complex64) -> Self {
        PolarPoint::new(z.norm().ln(), z.arg())
    }

    /// `center + exp(log_dist + i arg)`, with distances to `center` exact.
    pub fn near(center: Complex64, log_dist: f64, arg: f64) -> Self {
        let z = center + Complex64::from_polar(log_dist.exp(), arg);
        PolarPoint { anchor: Some(Anchor { center, log_dist, arg }), ..PolarPoint::from_complex(z) }
    }

    fn anchored_at(&self, a: Complex64) -> Option<Anchor> {
        self.anchor.filter(|an| an.center == a)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.u.exp(), self.theta)
    }

    /// `log(1 + |z|^2)`.
    pub fn log_one_plus_r2(self) -> f64 {
        softplus(2.0 * self.u)
    }

    /// `log|z - a|` for finite `a`, stable for extreme radii.
    pub fn log_abs_minus(self, a: Complex64) -> f64 {
        if let Some(an) = self.anchored_at(a) {
            return an.log_dist;
        }
        let an = a.norm();
        if an == 0.0 {
            return self.u;
        }
        let la = an.ln();
        if self.u < la - 40.0 {
            la
        } else if self.u > la + 40.0 {
            self.u
        } else {
            (self.to_complex() - a).norm().ln()
        }
    }

    /// `arg(z - a)` for finite `a`, stable for extreme radii.
    pub fn arg_minus(self, a: Complex64) -> f64 {
        if let Some(an) = self.anchored_at(a) {
            return an.arg;
        }
        let an = a.norm();
        if an == 0.0 {
            return self.theta;
        }
        let la = an.ln();
        if self.u < la - 40.0 {
            (-a).arg()
        } else if self.u > la + 40.0 {
            self.theta
        } else {
            (self.to_complex() - a).arg()
        }
    }

    /// Log of the chordal distance to `a`.
    pub fn log_chordal(self, a: SpherePoint) -> f64 {
        match a {
            SpherePoint::Infinity => -0.5 * self.log_one_plus_r2(),
            SpherePoint::Finite(a) => {
                self.log_abs_minus(a) - 0.5 * self.log_one_plus_r2() - 0.5 * a.norm_sqr().ln_1p()
            }
        }
    }

    /// `log A` where `A = |(1 + |z|^2) d rho|^2` for `rho = -log(chordal/2)`.
    fn log_gradient_term(self, a: SpherePoint) -> f64 {
        match a {
            SpherePoint::Infinity => 2.0 * self.u - 2.0 * LN_2,
            SpherePoint::Finite(a) if a.norm() == 0.0 => -2.0 * self.u - 2.0 * LN_2,
            SpherePoint::Finite(a) => {
                // |1 + a conj(z)|^2 / (4 |z - a|^2)
                let la = a.norm().ln();
                let num = if self.u + la < -40.0 {
                    0.0
                } else if self.u + la > 40.0 {
                    self.u + la
                } else {
                    (Complex64::new(1.0, 0.0) + a * self.to_complex().conj()).norm().ln()
                };
                2.0 * num - 2.0 * self.log_abs_minus(a) - 2.0 * LN_2
            }
        }
    }
}

/// Distance proxy `|sigma(z)|` for a puncture: half the chordal distance.
pub fn sigma_abs(puncture: SpherePoint, z: Complex64) -> f64 {
    0.5 * SpherePoint::Finite(z).chordal(puncture)
}

/// `F = -(1/2) sum log(-log |sigma_j|)` from precomputed proxy values.
pub fn poincare_potential_from_sigmas(sigmas: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &s in sigmas {
        if !(s >= 0.0 && s < 1.0) {
            return Err(LabError::OutOfDomain(format!("|sigma| = {s} outside [0, 1)")));
        }
        total -= 0.5 * (-s.ln()).ln();
    }
    Ok(total)
}

/// `F` for a list of punctures at a chart point.
pub fn poincare_potential(punctures: &[SpherePoint], z: Complex64) -> Result<f64> {
    let sigmas: Vec<f64> = punctures.iter().map(|&a| sigma_abs(a, z)).collect();
    poincare_potential_from_sigmas(&sigmas)
}

fn rho_polar(pt: PolarPoint, a: SpherePoint) -> f64 {
    LN_2 - pt.log_chordal(a)
}

/// Sum over punctures of `A / rho^2 - 1 / (2 rho)`; the Lebesgue density of
/// `dd^c F` is `(1/pi)(1 + |z|^2)^-2` times this.
fn perturbation_bracket(pt: PolarPoint, punctures: &[SpherePoint]) -> f64 {
    punctures
        .iter()
        .map(|&a| {
            let rho = rho_polar(pt, a);
            (pt.log_gradient_term(a) - 2.0 * rho.ln()).exp() - 0.5 / rho
        })
        .sum()
}

/// `log(base + delta * bracket)` evaluated without overflow; NaN if negative.
fn log_base_plus_bracket(pt: PolarPoint, punctures: &[SpherePoint], base: f64, delta: f64) -> f64 {
    let mut positive = vec![base.ln()];
    let mut negative = 0.0;
    for &a in punctures {
        let rho = rho_polar(pt, a);
        positive.push(delta.ln() + pt.log_gradient_term(a) - 2.0 * rho.ln());
        negative += delta * 0.5 / rho;
    }
    let lp = log_sum_exp(positive.iter().copied());
    lp + (-negative * (-lp).exp()).ln_1p()
}

/// A singular weight on `O(degree)` written in one affine chart.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularWeight {
    pub chart: Chart,
    pub degree: f64,
    pub smooth: SmoothPart,
    pub atoms: Vec<Atom>,
    pub epsilon: f64,
    pub punctures: Vec<SpherePoint>,
}

impl SingularWeight {
    /// The Fubini-Study weight `(1/2) log(1 + |z|^2)` on `O(1)`.
    pub fn fubini_study() -> Self {
        SingularWeight {
            chart: Chart::Zero,
            degree: 1.0,
            smooth: SmoothPart::Standard { fs_scale: 1.0, quadratic: 0.0, constant: 0.0 },
            atoms: Vec::new(),
            epsilon: 0.0,
            punctures: Vec::new(),
        }
    }

    /// Fubini-Study smooth part scaled by `1 - nu` plus an atom of mass `nu` at `point`.
    pub fn with_single_atom(point: SpherePoint, nu: f64) -> Result<Self> {
        let w = SingularWeight::fubini_study().with_fs_scale(1.0 - nu).with_atom(point, nu)?;
        Ok(w)
    }

    pub fn with_fs_scale(mut self, scale: f64) -> Self {
        if let SmoothPart::Standard { fs_scale, .. } = &mut self.smooth {
            *fs_scale = scale;
        }
        self
    }

    pub fn with_quadratic(mut self, q: f64) -> Self {
        if let SmoothPart::Standard { quadratic, .. } = &mut self.smooth {
            *quadratic = q;
        }
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        if let SmoothPart::Standard { constant, .. } = &mut self.smooth {
            *constant = c;
        }
        self
    }

    pub fn with_custom(mut self, name: &str, f: Arc<dyn Fn(Complex64) -> f64 + Send + Sync>) -> Self {
        self.smooth = SmoothPart::Custom(CustomPotential { name: name.to_string(), f });
        self
    }

    pub fn with_atom(mut self, point: SpherePoint, nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(LabError::InvalidInput(format!("atom mass {nu} must be finite and nonnegative")));
        }
        if let SpherePoint::Finite(z) = point {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(LabError::InvalidInput("atom location must be finite".into()));
            }
        }
        if nu > 0.0 {
            self.atoms.push(Atom { point, nu });
        }
        Ok(self)
    }

    /// Adds the perturbation `epsilon * F` for the given punctures.
    pub fn with_poincare(mut self, epsilon: f64, punctures: Vec<SpherePoint>) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(LabError::InvalidInput(format!("epsilon {epsilon} must be finite and nonnegative")));
        }
        self.epsilon = epsilon;
        self.punctures = punctures;
        Ok(self)
    }

    /// Lelong number at a point (sum of coincident atoms).
    pub fn lelong(&self, point: SpherePoint) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.point.chordal(point) < 1e-12)
            .map(|a| a.nu)
            .sum()
    }

    /// Coefficient of the Fubini-Study part, if the smooth part is standard.
    pub fn fs_scale(&self) -> Option<f64> {
        match self.smooth {
            SmoothPart::Standard { fs_scale, .. } => Some(fs_scale),
            SmoothPart::Custom(_) => None,
        }
    }

    /// Lelong number at the chart's point at infinity implied by growth:
    /// `degree - fs_scale - (finite atom masses)`.
    pub fn mass_at_infinity(&self) -> Option<f64> {
        match self.smooth {
            SmoothPart::Standard { fs_scale, quadratic, .. } if quadratic == 0.0 => {
                let finite: f64 = self
                    .atoms
                    .iter()
                    .filter(|a| a.point != SpherePoint::Infinity)
                    .map(|a| a.nu)
                    .sum();
                Some(self.degree - fs_scale - finite)
            }
            _ => None,
        }
    }

    /// Checks that the weight defines a global singular metric: standard smooth
    /// part without quadratic term, nonnegative mass at infinity consistent
    /// with any explicitly listed atom there.
    pub fn check_global(&self) -> Result<()> {
        let inf = self.mass_at_infinity().ok_or_else(|| {
            LabError::InvalidInput("weight is chart-local (custom or quadratic smooth part)".into())
        })?;
        if let Some(s) = self.fs_scale() {
            if s < -1e-12 {
                return Err(LabError::InvalidInput(format!("negative Fubini-Study scale {s}")));
            }
        }
        if inf < -1e-9 {
            return Err(LabError::InvalidInput(format!(
                "atom masses exceed the degree (mass at infinity {inf})"
            )));
        }
        let listed = self.lelong(SpherePoint::Infinity);
        if listed > 0.0 && (listed - inf).abs() > 1e-9 {
            return Err(LabError::InvalidInput(format!(
                "atom at infinity has mass {listed} but growth implies {inf}"
            )));
        }
        Ok(())
    }

    /// True when every atom and puncture sits at 0 or infinity.
    pub fn is_radial(&self) -> bool {
        matches!(self.smooth, SmoothPart::Standard { .. })
            && self
                .atoms
                .iter()
                .map(|a| a.point)
                .chain(self.punctures.iter().copied())
                .all(|p| p == SpherePoint::Infinity || p.is_origin())
    }

    /// Weight value at a chart point; `-inf` exactly at atoms and punctures.
    pub fn eval(&self, x: Complex64) -> f64 {
        if !(x.re.is_finite() && x.im.is_finite()) {
            return f64::NAN;
        }
        let mut v = self.smooth_value(x);
        for a in &self.atoms {
            if let SpherePoint::Finite(p) = a.point {
                v += a.nu * (x - p).norm().ln();
            }
        }
        if self.epsilon > 0.0 && !self.punctures.is_empty() {
            let f = poincare_potential(&self.punctures, x).unwrap_or(f64::NAN);
            v += self.epsilon * f;
        }
        v
    }

    /// Weight value at `exp(u + i theta)`, usable for `|u|` far beyond the
    /// range of `f64` radii.
    pub fn eval_polar(&self, pt: PolarPoint) -> f64 {
        let mut v = match &self.smooth {
            SmoothPart::Standard { fs_scale, quadratic, constant } => {
                let mut s = 0.5 * fs_scale * pt.log_one_plus_r2() + constant;
                if *quadratic != 0.0 {
                    s += quadratic * (2.0 * pt.u).exp();
                }
                s
            }
            SmoothPart::Custom(c) => (c.f)(pt.to_complex()),
        };
        for a in &self.atoms {
            if let SpherePoint::Finite(p) = a.point {
                v += a.nu * pt.log_abs_minus(p);
            }
        }
        if self.epsilon > 0.0 {
            for &a in &self.punctures {
                v -= 0.5 * self.epsilon * rho_polar(pt, a).ln();
            }
        }
        v
    }

    pub fn smooth_value(&self, x: Complex64) -> f64 {
        match &self.smooth {
            SmoothPart::Standard { fs_scale, quadratic, constant } => {
                0.5 * fs_scale * x.norm_sqr().ln_1p() + quadratic * x.norm_sqr() + constant
            }
            SmoothPart::Custom(c) => (c.f)(x),
        }
    }

    /// Closed-form Laplacian of the smooth part, when available.
    pub fn smooth_laplacian(&self, x: Complex64) -> Option<f64> {
        match &self.smooth {
            SmoothPart::Standard { fs_scale, quadratic, .. } => {
                let q = 1.0 + x.norm_sqr();
                Some(2.0 * fs_scale / (q * q) + 4.0 * quadratic)
            }
            SmoothPart::Custom(_) => None,
        }
    }

    fn near_singular(&self, x: Complex64, radius: f64) -> bool {
        self.atoms
            .iter()
            .map(|a| a.point)
            .chain(self.punctures.iter().copied())
            .any(|p| match p {
                SpherePoint::Finite(a) => (x - a).norm() <= radius,
                SpherePoint::Infinity => false,
            })
    }

    /// Lebesgue density of the absolutely continuous part of `dd^c phi`
    /// (closed form when possible, otherwise a five-point Laplacian).
    pub fn curvature_density(&self, x: Complex64) -> Result<f64> {
        if self.near_singular(x, 0.0) {
            return Err(LabError::OutOfDomain(format!("{x} is a singular point of the weight")));
        }
        match self.smooth_laplacian(x) {
            Some(lap) => {
                let mut d = lap / (2.0 * PI);
                if self.epsilon > 0.0 && !self.punctures.is_empty() {
                    let pt = PolarPoint::from_complex(x);
                    let q = 1.0 + x.norm_sqr();
                    d += self.epsilon / PI / (q * q) * perturbation_bracket(pt, &self.punctures);
                }
                Ok(d)
            }
            None => self.curvature_density_fd(x, 1e-4 * x.norm().max(1.0)),
        }
    }

    /// Log of the curvature density at `exp(u + i theta)`, stable for extreme
    /// radii; `None` for chart-local or custom smooth parts.
    pub fn curvature_log_density_polar(&self, pt: PolarPoint) -> Option<f64> {
        let SmoothPart::Standard { fs_scale, quadratic, .. } = self.smooth else {
            return None;
        };
        if quadratic != 0.0 {
            return None;
        }
        let fs = -PI.ln() - 2.0 * pt.log_one_plus_r2();
        if self.epsilon == 0.0 || self.punctures.is_empty() {
            return Some(fs + fs_scale.ln());
        }
        Some(fs + log_base_plus_bracket(pt, &self.punctures, fs_scale, self.epsilon))
    }

    /// Five-point finite-difference curvature density with step `h`.
    pub fn curvature_density_fd(&self, x: Complex64, h: f64) -> Result<f64> {
        if self.near_singular(x, 2.0 * h) {
            return Err(LabError::DegenerateStencil(format!(
                "stencil of size {h} at {x} reaches a singular point"
            )));
        }
        let c = self.eval(x);
        let s = [
            self.eval(x + Complex64::new(h, 0.0)),
            self.eval(x - Complex64::new(h, 0.0)),
            self.eval(x + Complex64::new(0.0, h)),
            self.eval(x - Complex64::new(0.0, h)),
        ];
        if !c.is_finite() || s.iter().any(|v| !v.is_finite()) {
            return Err(LabError::DegenerateStencil(format!("non-finite weight near {x}")));
        }
        let lap = (s.iter().sum::<f64>() - 4.0 * c) / (h * h);
        Ok(lap / (2.0 * PI))
    }

    /// Verifies semipositivity of the curvature on a 64 x 64 polar grid,
    /// skipping points close to atoms and punctures.
    pub fn validate_semipositive(&self) -> Result<()> {
        const N: usize = 64;
        for i in 0..N {
            let u = -5.0 + 10.0 * i as f64 / (N - 1) as f64;
            for j in 0..N {
                let theta = 2.0 * PI * (j as f64 + 0.5) / N as f64;
                let x = Complex64::from_polar(u.exp(), theta);
                let close = self
                    .atoms
                    .iter()
                    .map(|a| a.point)
                    .chain(self.punctures.iter().copied())
                    .any(|p| SpherePoint::Finite(x).chordal(p) < 1e-3);
                if close {
                    continue;
                }
                let d = match self.curvature_density(x) {
                    Ok(d) => d,
                    Err(LabError::DegenerateStencil(_)) => continue,
                    Err(e) => return Err(e),
                };
                let q = 1.0 + x.norm_sqr();
                // compare against the Fubini-Study scale at this point
                if d < -1e-9 / (PI * q * q) {
                    return Err(LabError::InvalidEpsilon { density: d, location: format!("{x}") });
                }
            }
        }
        Ok(())
    }

    /// The same metric written in the opposite chart: `phi'(w) = phi(1/w) + degree * log|w|`.
    pub fn transition(&self) -> Result<SingularWeight> {
        self.check_global()?;
        let SmoothPart::Standard { fs_scale, constant, .. } = self.smooth else {
            unreachable!("checked by check_global")
        };
        let mut new_constant = constant;
        let mut atoms = Vec::new();
        for a in &self.atoms {
            match a.point {
                SpherePoint::Infinity => {}
                SpherePoint::Finite(p) if p.norm() == 0.0 => {
                    atoms.push(Atom { point: SpherePoint::Infinity, nu: a.nu });
                }
                SpherePoint::Finite(p) => {
                    new_constant += a.nu * p.norm().ln();
                    atoms.push(Atom { point: SpherePoint::Finite(p.inv()), nu: a.nu });
                }
            }
        }
        let inf = self.mass_at_infinity().expect("checked by check_global");
        if inf > 1e-15 {
            atoms.push(Atom { point: SpherePoint::origin(), nu: inf });
        }
        Ok(SingularWeight {
            chart: self.chart.other(),
            degree: self.degree,
            smooth: SmoothPart::Standard { fs_scale, quadratic: 0.0, constant: new_constant },
            atoms,
            epsilon: self.epsilon,
            punctures: self.punctures.iter().map(|p| p.inverse()).collect(),
        })
    }

    /// Canonical text used for hashing and reports.
    pub fn describe(&self) -> String {
        let smooth = match &self.smooth {
            SmoothPart::Standard { fs_scale, quadratic, constant } => {
                format!("std({fs_scale},{quadratic},{constant})")
            }
            SmoothPart::Custom(c) => format!("custom({})", c.name),
        };
        let atoms: Vec<String> = self.atoms.iter().map(|a| format!("{}:{}", a.point, a.nu)).collect();
        let punct: Vec<String> = self.punctures.iter().map(|p| p.to_string()).collect();
        format!(
            "chart={:?};degree={};smooth={};atoms=[{}];eps={};punctures=[{}]",
            self.chart,
            self.degree,
            smooth,
            atoms.join(","),
            self.epsilon,
            punct.join(",")
        )
    }
}

/// Reference volume forms of total mass one.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeDensity {
    FubiniStudy,
    /// `omega_FS + delta * dd^c F`, complete with Poincare growth at the punctures.
    Poincare { punctures: Vec<SpherePoint>, delta: f64 },
}

impl VolumeDensity {
    pub const DEFAULT_POINCARE_DELTA: f64 = 0.5;

    pub fn poincare(punctures: Vec<SpherePoint>) -> Result<Self> {
        Self::poincare_with_delta(punctures, Self::DEFAULT_POINCARE_DELTA)
    }

    pub fn poincare_with_delta(punctures: Vec<SpherePoint>, delta: f64) -> Result<Self> {
        if punctures.is_empty() {
            return Err(LabError::InvalidInput("Poincare volume needs at least one puncture".into()));
        }
        // rho >= log 2 keeps the density positive when delta * N < 2 log 2
        if !(delta > 0.0 && delta * punctures.len() as f64 * 0.5 / LN_2 < 1.0) {
            return Err(LabError::InvalidInput(format!(
                "Poincare parameter {delta} must lie in (0, 2 log 2 / {})",
                punctures.len()
            )));
        }
        Ok(VolumeDensity::Poincare { punctures, delta })
    }

    pub fn punctures(&self) -> &[SpherePoint] {
        match self {
            VolumeDensity::FubiniStudy => &[],
            VolumeDensity::Poincare { punctures, .. } => punctures,
        }
    }

    pub fn is_radial(&self) -> bool {
        self.punctures()
            .iter()
            .all(|p| *p == SpherePoint::Infinity || p.is_origin())
    }

    /// Lebesgue density at a chart point.
    pub fn density(&self, x: Complex64) -> f64 {
        self.log_density_polar(PolarPoint::from_complex(x)).exp()
    }

    /// Log of the Lebesgue density at `exp(u + i theta)`.
    pub fn log_density_polar(&self, pt: PolarPoint) -> f64 {
        let fs = -PI.ln() - 2.0 * pt.log_one_plus_r2();
        match self {
            VolumeDensity::FubiniStudy => fs,
            VolumeDensity::Poincare { punctures, delta } => fs + log_base_plus_bracket(pt, punctures, 1.0, *delta),
        }
    }

    /// The same form in the opposite chart.
    pub fn transition(&self) -> VolumeDensity {
        match self {
            VolumeDensity::FubiniStudy => VolumeDensity::FubiniStudy,
            VolumeDensity::Poincare { punctures, delta } => VolumeDensity::Poincare {
                punctures: punctures.iter().map(|p| p.inverse()).collect(),
                delta: *delta,
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            VolumeDensity::FubiniStudy => "fs".to_string(),
            VolumeDensity::Poincare { punctures, delta } => {
                let p: Vec<String> = punctures.iter().map(|p| p.to_string()).collect();
                format!("poincare([{}],{delta})", p.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_real_line, QuadSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fs_weight_value_and_density() {
        let w = SingularWeight::fubini_study();
        assert!((w.eval(c(1.0, 0.0)) - 0.5 * 2f64.ln()).abs() < 1e-15);
        let d = w.curvature_density(c(0.0, 0.0)).unwrap();
        assert!((d - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn atom_weight_value() {
        let w = SingularWeight::fubini_study().with_atom(SpherePoint::origin(), 0.5).unwrap();
        assert!((w.eval(c(1.0, 0.0)) - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(w.eval(c(0.0, 0.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn quadratic_curvature() {
        let w = SingularWeight::fubini_study().with_quadratic(0.25);
        let d = w.curvature_density(c(0.0, 0.0)).unwrap();
        assert!((d - (1.0 / PI + 0.5 / PI)).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_finite_differences() {
        let w = SingularWeight::with_single_atom(SpherePoint::Finite(c(0.3, -0.2)), 0.4)
            .unwrap()
            .with_poincare(0.2, vec![SpherePoint::Finite(c(-1.0, 0.5))])
            .unwrap();
        for x in [c(0.7, 0.1), c(-0.4, 1.3), c(2.0, -1.0)] {
            let exact = w.curvature_density(x).unwrap();
            let fd = w.curvature_density_fd(x, 1e-3).unwrap();
            assert!((exact - fd).abs() < 1e-5, "{exact} vs {fd}");
        }
    }

    #[test]
    fn stencil_near_atom_is_rejected() {
        let w = SingularWeight::with_single_atom(SpherePoint::origin(), 0.5).unwrap();
        assert!(matches!(
            w.curvature_density_fd(c(1e-4, 0.0), 1e-3),
            Err(LabError::DegenerateStencil(_))
        ));
    }

    #[test]
    fn poincare_potential_examples() {
        let v = poincare_potential_from_sigmas(&[(-std::f64::consts::E).exp()]).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
        assert!(matches!(poincare_potential_from_sigmas(&[1.0]), Err(LabError::OutOfDomain(_))));
    }

    #[test]
    fn perturbation_shifts_weight() {
        let base = SingularWeight::fubini_study();
        let pert = base.clone().with_poincare(0.05, vec![SpherePoint::origin()]).unwrap();
        // pick x with |sigma(x)| = exp(-e): then F(x) = -1/2
        let s = (-std::f64::consts::E).exp();
        let r = 2.0 * s / (1.0 - 4.0 * s * s).sqrt();
        let x = c(r, 0.0);
        assert!((sigma_abs(SpherePoint::origin(), x) - s).abs() < 1e-15);
        assert!((pert.eval(x) - base.eval(x) + 0.025).abs() < 1e-14);
    }

    #[test]
    fn huge_epsilon_is_not_semipositive() {
        let w = SingularWeight::fubini_study()
            .with_poincare(1000.0, vec![SpherePoint::origin()])
            .unwrap();
        assert!(matches!(w.validate_semipositive(), Err(LabError::InvalidEpsilon { .. })));
        let ok = SingularWeight::fubini_study()
            .with_poincare(0.1, vec![SpherePoint::origin()])
            .unwrap();
        ok.validate_semipositive().unwrap();
    }

    #[test]
    fn transition_cocycle() {
        let w = SingularWeight::fubini_study()
            .with_fs_scale(0.3)
            .with_atom(SpherePoint::origin(), 0.25)
            .unwrap()
            .with_atom(SpherePoint::Finite(c(1.0, 2.0)), 0.2)
            .unwrap()
            .with_poincare(0.1, vec![SpherePoint::Finite(c(-0.5, 0.5))])
            .unwrap();
        let t = w.transition().unwrap();
        assert!((t.lelong(SpherePoint::Infinity) - 0.25).abs() < 1e-15);
        assert!((t.lelong(SpherePoint::origin()) - 0.25).abs() < 1e-12);
        for wpt in [c(0.3, 0.4), c(-2.0, 1.0), c(0.01, -0.02)] {
            let lhs = t.eval(wpt);
            let rhs = w.eval(wpt.inv()) + wpt.norm().ln();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
        let back = t.transition().unwrap();
        for z in [c(0.3, 0.4), c(-2.0, 1.0)] {
            assert!((back.eval(z) - w.eval(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn atom_log_asymptotics() {
        let a = c(0.5, 0.5);
        let w = SingularWeight::with_single_atom(SpherePoint::Finite(a), 0.4).unwrap();
        let ratio = |r: f64| w.eval(a + c(r, 0.0)) / r.ln();
        let (r1, r2) = (ratio(1e-8), ratio(1e-12));
        assert!((r1 - 0.4).abs() < 0.05);
        assert!((r2 - 0.4).abs() < (r1 - 0.4).abs());
    }

    #[test]
    fn polar_evaluation_agrees() {
        let w = SingularWeight::with_single_atom(SpherePoint::Finite(c(0.2, 0.1)), 0.3)
            .unwrap()
            .with_poincare(0.1, vec![SpherePoint::Infinity, SpherePoint::Finite(c(1.0, 0.0))])
            .unwrap();
        for z in [c(0.5, 0.5), c(-3.0, 0.2), c(0.01, 0.0)] {
            let pt = PolarPoint::from_complex(z);
            assert!((w.eval_polar(pt) - w.eval(z)).abs() < 1e-12);
        }
    }

    fn radial_mass(v: &VolumeDensity) -> f64 {
        integrate_real_line(
            |u| 2.0 * PI * (2.0 * u + v.log_density_polar(PolarPoint::new(u, 0.0))).exp(),
            &[-10.0, -2.0, 0.0, 2.0, 10.0],
            &QuadSpec::new(1e-14, 1e-12),
        )
        .unwrap()
        .value
    }

    #[test]
    fn volume_masses() {
        assert!((radial_mass(&VolumeDensity::FubiniStudy) - 1.0).abs() < 1e-11);
        let p = VolumeDensity::poincare(vec![SpherePoint::origin()]).unwrap();
        assert!((radial_mass(&p) - 1.0).abs() < 1e-9);
        let p = VolumeDensity::poincare(vec![SpherePoint::Infinity]).unwrap();
        assert!((radial_mass(&p) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn poincare_volume_growth() {
        let v = VolumeDensity::poincare(vec![SpherePoint::origin()]).unwrap();
        let delta = VolumeDensity::DEFAULT_POINCARE_DELTA;
        for t in [1e-6, 1e-5, 1e-4, 1e-3] {
            let f = v.density(c(t, 0.0));
            let model = delta / (4.0 * PI) / (t * t.ln()).powi(2);
            let ratio = f / model;
            assert!(ratio > 0.5 && ratio < 2.0, "ratio {ratio} at {t}");
        }
    }

    #[test]
    fn volume_transition_density() {
        let v = VolumeDensity::poincare(vec![SpherePoint::Finite(c(0.5, -0.25))]).unwrap();
        let t = v.transition();
        for w in [c(0.3, 0.2), c(-1.5, 0.7)] {
            let lhs = t.density(w);
            let rhs = v.density(w.inv()) / w.norm_sqr().powi(2);
            assert!((lhs / rhs - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(SingularWeight::fubini_study().with_atom(SpherePoint::origin(), -0.1).is_err());
        assert!(VolumeDensity::poincare_with_delta(vec![SpherePoint::origin()], 2.0).is_err());
        let local = SingularWeight::fubini_study().with_quadratic(0.25);
        assert!(local.transition().is_err());
    }
}
