//! Weighted L2 spaces of holomorphic sections of `O(p)` on the sphere: the
//! integrability filter, Gram matrices and orthonormal bases.
//!
//! A section is written in chart 0 as `B(z) t(z)` where the base factor
//! `B(z) = prod (z - a)^{m_a}` carries the vanishing forced at finite special
//! points and `t` is a reduced polynomial of degree at most `D`. Monomials are
//! prescaled by `sqrt((p+1) C(p,k))`, the Fubini-Study normalisation, so the
//! Fubini-Study Gram matrix is the identity.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::geom::{Complex64, PolarPoint, SingularWeight, SpherePoint, VolumeDensity};
use crate::plane::{excision_discs, integrate_plane, RadialRule};
use crate::quad::{integrate_real_line_vec, QuadSpec};

/// Largest supported line bundle degree.
pub const MAX_DEGREE: u32 = 64;

/// Condition numbers above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

const SNAP_TOL: f64 = 1e-9;

/// Behaviour of the weighted integrand at one special point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalData {
    pub point: SpherePoint,
    pub nu: f64,
    pub poincare_volume: bool,
    pub perturbed: bool,
}

/// Smallest vanishing order `m` making `|z|^{2m} e^{-2 p phi} f` locally
/// integrable. In polar coordinates the integrand behaves like
/// `t^alpha (-log t)^beta dt` with `alpha = 2m + 1 - 2 p nu` (minus 2 under a
/// Poincare volume) and `beta = p eps` (perturbed) minus 2 (Poincare volume);
/// it converges iff `alpha > -1`, or `alpha = -1` and `beta < -1`.
pub fn minimal_order(p: u32, local: &LocalData, epsilon: f64) -> u32 {
    let pf = p as f64;
    let beta = if local.perturbed { pf * epsilon } else { 0.0 } - if local.poincare_volume { 2.0 } else { 0.0 };
    let mut m = 0u32;
    loop {
        let alpha = 2.0 * m as f64 + 1.0 - 2.0 * pf * local.nu - if local.poincare_volume { 2.0 } else { 0.0 };
        let gap = alpha + 1.0;
        if gap > SNAP_TOL || (gap.abs() <= SNAP_TOL && beta < -1.0 - SNAP_TOL) {
            return m;
        }
        m += 1;
    }
}

/// Options for Gram matrix assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramSpec {
    pub quad: QuadSpec,
    /// Minimum number of angular trapezoid nodes for non-radial data.
    pub angular_nodes: usize,
    /// Express the basis in prescaled monomials.
    pub prescale: bool,
}

impl Default for GramSpec {
    fn default() -> Self {
        GramSpec {
            quad: QuadSpec::new(1e-13, 1e-11),
            angular_nodes: 64,
            prescale: true,
        }
    }
}

impl GramSpec {
    pub fn describe(&self) -> String {
        format!(
            "abs={};rel={};maxsub={};ang={};prescale={}",
            self.quad.abs_tol, self.quad.rel_tol, self.quad.max_subdivisions, self.angular_nodes, self.prescale
        )
    }
}

/// The space `H^0_(2)(O(p), h)` with the data needed to integrate in it.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionSpace {
    pub weight: SingularWeight,
    pub volume: VolumeDensity,
    pub p: u32,
    /// Finite base points with their forced vanishing orders.
    pub base: Vec<(Complex64, u32)>,
    /// Forced vanishing order at infinity.
    pub infinity_order: u32,
    /// Degree bound `D` of the reduced polynomial; `None` if the space is zero.
    pub reduced_degree: Option<u32>,
}

impl SectionSpace {
    /// Runs the integrability filter.
    pub fn new(weight: &SingularWeight, volume: &VolumeDensity, p: u32) -> Result<Self> {
        if p > MAX_DEGREE {
            return Err(LabError::PTooLarge(p));
        }
        if p == 0 {
            return Err(LabError::InvalidInput("degree must be positive".into()));
        }
        if weight.chart != crate::geom::Chart::Zero {
            return Err(LabError::InvalidInput("section spaces are built in chart 0".into()));
        }
        weight.check_global()?;
        let mut base = Vec::new();
        let mut total = 0i64;
        for local in special_points(weight, volume) {
            let m = minimal_order(p, &local, weight.epsilon);
            if let SpherePoint::Finite(a) = local.point {
                if m > 0 {
                    base.push((a, m));
                }
                total += m as i64;
            }
        }
        let inf = LocalData {
            point: SpherePoint::Infinity,
            nu: weight.mass_at_infinity().unwrap_or(0.0).max(0.0),
            poincare_volume: volume.punctures().contains(&SpherePoint::Infinity),
            perturbed: weight.epsilon > 0.0 && weight.punctures.contains(&SpherePoint::Infinity),
        };
        let infinity_order = minimal_order(p, &inf, weight.epsilon);
        let d = p as i64 - infinity_order as i64 - total;
        Ok(SectionSpace {
            weight: weight.clone(),
            volume: volume.clone(),
            p,
            base,
            infinity_order,
            reduced_degree: (d >= 0).then_some(d as u32),
        })
    }

    /// `d_p`, the dimension of the space.
    pub fn dim(&self) -> usize {
        self.reduced_degree.map_or(0, |d| d as usize + 1)
    }

    pub fn base_degree(&self) -> u32 {
        self.base.iter().map(|(_, m)| m).sum()
    }

    /// Forced vanishing order at a point (the minimal admissible exponent at an atom).
    pub fn vanishing_order(&self, point: SpherePoint) -> u32 {
        match point {
            SpherePoint::Infinity => self.infinity_order,
            SpherePoint::Finite(z) => self
                .base
                .iter()
                .filter(|(a, _)| (a - z).norm() < 1e-12)
                .map(|(_, m)| *m)
                .sum(),
        }
    }

    /// Exponents `k` labelling the basis monomials: `base_degree + j`.
    pub fn admissible_exponents(&self) -> Vec<u32> {
        let b = self.base_degree();
        (0..self.dim() as u32).map(|j| b + j).collect()
    }

    /// Finite nonzero atoms and punctures of the weight and the volume.
    pub fn off_axis_points(&self) -> Vec<Complex64> {
        let w = &self.weight;
        let atoms = w.atoms.iter().filter(|a| a.nu > 0.0).map(|a| a.point);
        let punctures = w.punctures.iter().filter(|_| w.epsilon > 0.0).copied();
        atoms
            .chain(punctures)
            .chain(self.volume.punctures().iter().copied())
            .filter_map(|p| p.finite())
            .filter(|z| z.norm() > 0.0)
            .collect()
    }

    /// True when every special point sits at 0 or infinity.
    pub fn is_radial(&self) -> bool {
        self.weight.is_radial() && self.volume.is_radial()
    }

    /// `log sqrt((p+1) C(p,k))` for the basis exponents.
    pub fn log_prescale(&self) -> Vec<f64> {
        self.admissible_exponents()
            .iter()
            .map(|&k| 0.5 * ((self.p as f64 + 1.0).ln() + ln_binomial(self.p, k)))
            .collect()
    }

    /// `log|B(z)|` and `arg B(z)`.
    pub fn base_factor_polar(&self, pt: PolarPoint) -> (f64, f64) {
        let mut l = 0.0;
        let mut a = 0.0;
        for (b, m) in &self.base {
            l += *m as f64 * pt.log_abs_minus(*b);
            a += *m as f64 * pt.arg_minus(*b);
        }
        (l, a)
    }

    pub fn describe(&self) -> String {
        format!(
            "weight={{{}}};volume={};p={}",
            self.weight.describe(),
            self.volume.describe(),
            self.p
        )
    }
}

fn special_points(weight: &SingularWeight, volume: &VolumeDensity) -> Vec<LocalData> {
    let mut pts: Vec<Complex64> = Vec::new();
    let candidates = weight
        .atoms
        .iter()
        .map(|a| a.point)
        .chain(weight.punctures.iter().copied())
        .chain(volume.punctures().iter().copied());
    for p in candidates {
        if let SpherePoint::Finite(z) = p {
            if !pts.iter().any(|q| (q - z).norm() < 1e-12) {
                pts.push(z);
            }
        }
    }
    pts.into_iter()
        .map(|z| {
            let point = SpherePoint::Finite(z);
            let near = |q: &SpherePoint| q.chordal(point) < 1e-12;
            LocalData {
                point,
                nu: weight.lelong(point),
                poincare_volume: volume.punctures().iter().any(near),
                perturbed: weight.epsilon > 0.0 && weight.punctures.iter().any(near),
            }
        })
        .collect()
}

pub fn ln_binomial(n: u32, k: u32) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Integrand data at one chart point: prescaled basis values times
/// `exp(-p phi) sqrt(f J)` for the area Jacobian `J`, in polar form.
fn weighted_values(space: &SectionSpace, log_pre: &[f64], pt: PolarPoint, log_jac: f64) -> Vec<Complex64> {
    let (lb, ab) = space.base_factor_polar(pt);
    let common = lb - space.p as f64 * space.weight.eval_polar(pt)
        + 0.5 * space.volume.log_density_polar(pt)
        + 0.5 * log_jac;
    log_pre
        .iter()
        .enumerate()
        .map(|(j, lp)| {
            let l = common + lp + j as f64 * pt.u;
            if l < -745.0 || !l.is_finite() {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar(l.exp(), ab + j as f64 * pt.theta)
            }
        })
        .collect()
}

const RADIAL_BREAKS: [f64; 17] = [
    -40.0, -20.0, -10.0, -6.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 10.0, 20.0, 40.0,
];

/// Gram matrix of the (prescaled) monomial basis together with the quadrature
/// error estimate. Radial data use a diagonal fast path; otherwise angular
/// trapezoid sums are nested inside an adaptive radial rule.
pub fn gram_matrix(space: &SectionSpace, spec: &GramSpec) -> Result<(DMatrix<Complex64>, f64)> {
    let d = space.dim();
    if d == 0 {
        return Err(LabError::UndefinedSpace(format!("d_p = 0 for p = {}", space.p)));
    }
    let log_pre = space.log_prescale();
    let (mut g, err) = if space.is_radial() {
        let r = integrate_real_line_vec(
            |u, out: &mut [f64]| {
                let v = weighted_values(space, &log_pre, PolarPoint::new(u, 0.0), 2.0 * u);
                for (o, x) in out.iter_mut().zip(&v) {
                    *o = 2.0 * PI * x.norm_sqr();
                }
            },
            d,
            &RADIAL_BREAKS,
            &spec.quad,
        )?;
        let mut g = DMatrix::zeros(d, d);
        for i in 0..d {
            g[(i, i)] = Complex64::new(r.values[i], 0.0);
        }
        (g, r.error)
    } else {
        let n = spec.angular_nodes.max(4 * space.p as usize + 8);
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
        let r = integrate_plane(
            |pt, log_jac, out: &mut [f64]| {
                let v = weighted_values(space, &log_pre, pt, log_jac);
                for (idx, &(i, j)) in pairs.iter().enumerate() {
                    let z = v[i] * v[j].conj();
                    out[2 * idx] = z.re;
                    out[2 * idx + 1] = z.im;
                }
            },
            2 * pairs.len(),
            &excision_discs(&space.off_axis_points()),
            n,
            &RADIAL_BREAKS,
            RadialRule::Adaptive(spec.quad),
            spec.quad,
        )?;
        let mut g = DMatrix::zeros(d, d);
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let z = Complex64::new(r.values[2 * idx], r.values[2 * idx + 1]);
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
        }
        (g, r.error)
    };
    if !spec.prescale {
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] /= (log_pre[i] + log_pre[j]).exp();
            }
        }
    }
    Ok((g, err))
}

/// Orthonormal basis `sigma_i = sum_j C_ij e_j` of the section space, where
/// `e_j` are the (prescaled) basis monomials times the base factor.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    pub space: SectionSpace,
    pub spec: GramSpec,
    pub coeffs: DMatrix<Complex64>,
    pub gram: Option<DMatrix<Complex64>>,
    pub condition: Option<f64>,
    pub quad_error: Option<f64>,
    pub provenance: String,
}

/// Hex SHA-256 digest of a canonical description string.
pub fn provenance_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Key describing a basis computation, used for caching and reports.
pub fn basis_key(space: &SectionSpace, spec: &GramSpec) -> String {
    provenance_hash(&format!("model=sphere;{};spec={{{}}}", space.describe(), spec.describe()))
}

/// Condition number of a Hermitian positive matrix from its eigenvalues.
pub fn hermitian_condition(g: &DMatrix<Complex64>) -> Result<f64> {
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(LabError::NotPD);
    }
    Ok(max / min)
}

/// Condition number of `D^{-1/2} G D^{-1/2}` with `D = diag G`. Cholesky is
/// invariant under this scaling, so this bounds its accuracy; a diagonal Gram
/// matrix has condition 1 however far apart its entries are.
pub fn equilibrated_condition(g: &DMatrix<Complex64>) -> Result<f64> {
    let d: Vec<f64> = (0..g.nrows()).map(|i| g[(i, i)].re).collect();
    if d.iter().any(|x| !(*x > 0.0)) {
        return Err(LabError::NotPD);
    }
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / (d[i] * d[j]).sqrt());
    hermitian_condition(&scaled)
}

/// Cholesky orthonormalisation `G = L L^*`, `C = L^{-1}`, guarded by the
/// equilibrated condition number.
pub fn orthonormalize(g: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, f64)> {
    let cond = equilibrated_condition(g)?;
    if cond > MAX_CONDITION {
        return Err(LabError::IllConditioned(cond));
    }
    let chol = g.clone().cholesky().ok_or(LabError::NotPD)?;
    let l = chol.l();
    let n = g.nrows();
    let c = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(LabError::NotPD)?;
    Ok((c, cond))
}

impl OrthoBasis {
    /// Builds the orthonormal basis by quadrature.
    pub fn compute(space: &SectionSpace, spec: &GramSpec) -> Result<Self> {
        let (g, err) = gram_matrix(space, spec)?;
        let (c, cond) = orthonormalize(&g)?;
        Ok(OrthoBasis {
            space: space.clone(),
            spec: *spec,
            coeffs: c,
            gram: Some(g),
            condition: Some(cond),
            quad_error: Some(err),
            provenance: basis_key(space, spec),
        })
    }

    /// Convenience wrapper: filter plus basis with default options.
    pub fn build(weight: &SingularWeight, volume: &VolumeDensity, p: u32) -> Result<Self> {
        let space = SectionSpace::new(weight, volume, p)?;
        OrthoBasis::compute(&space, &GramSpec::default())
    }

    /// Rebuilds a basis from stored coefficients.
    pub fn from_coefficients(space: &SectionSpace, spec: &GramSpec, coeffs: DMatrix<Complex64>) -> Result<Self> {
        let d = space.dim();
        if coeffs.nrows() != d || coeffs.ncols() != d {
            return Err(LabError::InvalidInput(format!(
                "coefficient matrix is {}x{}, expected {d}x{d}",
                coeffs.nrows(),
                coeffs.ncols()
            )));
        }
        Ok(OrthoBasis {
            space: space.clone(),
            spec: *spec,
            coeffs,
            gram: None,
            condition: None,
            quad_error: None,
            provenance: basis_key(space, spec),
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn p(&self) -> u32 {
        self.space.p
    }

    fn log_prescale_or_zero(&self) -> Vec<f64> {
        if self.spec.prescale {
            self.space.log_prescale()
        } else {
            vec![0.0; self.dim()]
        }
    }

    /// Reduced polynomial coefficients (ascending powers) of `sum_i a_i sigma_i`.
    pub fn reduced_polynomial(&self, a: &[Complex64]) -> Vec<Complex64> {
        let pre = self.log_prescale_or_zero();
        (0..self.dim())
            .map(|j| {
                let s: Complex64 = (0..self.dim()).map(|i| a[i] * self.coeffs[(i, j)]).sum();
                s * pre[j].exp()
            })
            .collect()
    }

    /// Reduced polynomial coefficients of every basis section (row `i` is `sigma_i`).
    pub fn reduced_coefficients(&self) -> DMatrix<Complex64> {
        let pre = self.log_prescale_or_zero();
        let mut m = self.coeffs.clone();
        for j in 0..self.dim() {
            let s = pre[j].exp();
            for i in 0..self.dim() {
                m[(i, j)] *= s;
            }
        }
        m
    }

    /// Values of the reduced basis polynomials `t_i` at a point, scaled by
    /// `exp(-scale)`; returns `(values, scale)`.
    pub fn reduced_values(&self, pt: PolarPoint) -> (Vec<Complex64>, f64) {
        let d = self.dim();
        let deg = d as f64 - 1.0;
        let scale = deg * pt.u.max(0.0);
        let pre = self.log_prescale_or_zero();
        let mono: Vec<Complex64> = (0..d)
            .map(|j| {
                let l = pre[j] + j as f64 * pt.u - scale;
                if l < -745.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::from_polar(l.exp(), j as f64 * pt.theta)
                }
            })
            .collect();
        let vals = (0..d)
            .map(|i| (0..d).map(|j| self.coeffs[(i, j)] * mono[j]).sum())
            .collect();
        (vals, scale)
    }

    /// `log sum_i |sigma_i(x)|^2` without the weight factor.
    pub fn log_sum_squares(&self, pt: PolarPoint) -> f64 {
        let (vals, scale) = self.reduced_values(pt);
        let s: f64 = vals.iter().map(|v| v.norm_sqr()).sum();
        let (lb, _) = self.space.base_factor_polar(pt);
        2.0 * lb + 2.0 * scale + s.ln()
    }

    /// Checks `C G C^* = I`; returns the largest entrywise deviation.
    pub fn orthonormality_defect(&self) -> Option<f64> {
        let g = self.gram.as_ref()?;
        let m = &self.coeffs * g * self.coeffs.adjoint();
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((m[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        Some(worst)
    }
}

/// Encodes a basis: little-endian `u64` header `{magic, version, d, flags}`,
/// then row-major `(re, im)` coefficient doubles, the Gram matrix when flag
/// bit 0 is set, and the condition number and quadrature error when bits 1
/// and 2 are set.
pub fn encode_basis(b: &OrthoBasis) -> Vec<u8> {
    let d = b.coeffs.nrows();
    let flags = b.gram.is_some() as u64 | (b.condition.is_some() as u64) << 1 | (b.quad_error.is_some() as u64) << 2;
    let mut out = Vec::with_capacity(32 + 32 * d * d + 16);
    for w in [CACHE_MAGIC, CACHE_VERSION, d as u64, flags] {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let mut matrix = |m: &DMatrix<Complex64>| {
        for i in 0..d {
            for j in 0..d {
                out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
                out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
            }
        }
    };
    matrix(&b.coeffs);
    if let Some(g) = &b.gram {
        matrix(g);
    }
    for x in [b.condition, b.quad_error].into_iter().flatten() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub const CACHE_MAGIC: u64 = u64::from_le_bytes(*b"EQLBASIS");
pub const CACHE_VERSION: u64 = 2;

/// Inverse of [`encode_basis`] for the given space and options.
pub fn decode_basis(space: &SectionSpace, spec: &GramSpec, bytes: &[u8]) -> Result<OrthoBasis> {
    let word = |i: usize| -> Result<u64> {
        bytes
            .get(8 * i..8 * i + 8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("eight bytes")))
            .ok_or_else(|| LabError::CacheCorrupt("truncated header".into()))
    };
    if word(0)? != CACHE_MAGIC {
        return Err(LabError::CacheCorrupt("bad magic".into()));
    }
    if word(1)? != CACHE_VERSION {
        return Err(LabError::CacheCorrupt("unsupported version".into()));
    }
    let d = word(2)? as usize;
    let flags = word(3)?;
    let (has_gram, has_cond, has_err) = (flags & 1 != 0, flags & 2 != 0, flags & 4 != 0);
    let expected = 32 + 16 * d * d * (1 + has_gram as usize) + 8 * (has_cond as usize + has_err as usize);
    if flags > 7 || d > MAX_DEGREE as usize + 1 || bytes.len() != expected {
        return Err(LabError::CacheCorrupt(format!("payload length {} does not match d = {d}", bytes.len())));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[32 + 8 * k..40 + 8 * k].try_into().expect("eight bytes"));
    let matrix = |offset: usize| {
        DMatrix::from_fn(d, d, |i, j| {
            let k = offset + 2 * (i * d + j);
            Complex64::new(f(k), f(k + 1))
        })
    };
    let mut b = OrthoBasis::from_coefficients(space, spec, matrix(0))?;
    let mut next = 2 * d * d;
    if has_gram {
        b.gram = Some(matrix(next));
        next += 2 * d * d;
    }
    if has_cond {
        b.condition = Some(f(next));
        next += 1;
    }
    if has_err {
        b.quad_error = Some(f(next));
    }
    let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
    if !b.coeffs.iter().all(finite)
        || !b.gram.iter().flat_map(|g| g.iter()).all(finite)
        || ![b.condition, b.quad_error].into_iter().flatten().all(f64::is_finite)
    {
        return Err(LabError::CacheCorrupt("non-finite value".into()));
    }
    Ok(b)
}
