//! Sections of `O(p, p)` on `P^1 x P^1` built from two sphere bases, and the
//! common zeros of two of them by a hidden-variable resultant.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::currents::ma::Box2;
use crate::currents::toric::{log_potential_slope, monomial_data, separable_mass};
use crate::error::{LabError, Result};
use crate::geom::{Complex64, SpherePoint};
use crate::l2::OrthoBasis;
use crate::poly::{balance, eigenvalues, CLUSTER_TOL};
use crate::random::{gaussian_unit_vector, mean_stderr, Estimate, SphereSampler, EXPERIMENT_PAIRS};

/// Largest admissible relative backward error of a common zero.
pub const MATCH_TOL: f64 = 1e-8;

/// Sylvester matrices whose smallest singular value falls below this fraction
/// of the largest at every probe point are treated as singular.
const SINGULAR_TOL: f64 = 1e-10;

/// Leading blocks with a worse condition number trigger a new change of coordinates.
const LEADING_CONDITION: f64 = 1e10;

const ATTEMPTS: u64 = 6;

/// Orthonormal basis of the product space: `sigma_i(z1) tau_j(z2)`, indexed
/// `i * d2 + j`.
#[derive(Debug, Clone)]
pub struct ProductBasis {
    pub first: OrthoBasis,
    pub second: OrthoBasis,
}

/// A line `{z_factor = point}` along which every section vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseCurve {
    pub factor: usize,
    pub point: SpherePoint,
    pub multiplicity: u32,
}

impl ProductBasis {
    pub fn new(first: OrthoBasis, second: OrthoBasis) -> Result<Self> {
        if first.p() != second.p() {
            return Err(LabError::InvalidInput("factors must share the degree".into()));
        }
        Ok(ProductBasis { first, second })
    }

    pub fn p(&self) -> u32 {
        self.first.p()
    }

    pub fn dim(&self) -> usize {
        self.first.dim() * self.second.dim()
    }

    /// Degrees of the reduced form in `z1` and `z2`.
    pub fn bidegree(&self) -> (usize, usize) {
        (self.first.dim() - 1, self.second.dim() - 1)
    }

    /// Bezout number of two reduced forms.
    pub fn expected_zeros(&self) -> u32 {
        let (a, b) = self.bidegree();
        2 * (a * b) as u32
    }

    /// Lines of the base locus with their vanishing orders.
    pub fn base_curves(&self) -> Vec<BaseCurve> {
        let mut out = Vec::new();
        for (factor, b) in [&self.first, &self.second].into_iter().enumerate() {
            for (a, m) in &b.space.base {
                out.push(BaseCurve { factor, point: SpherePoint::Finite(*a), multiplicity: *m });
            }
            if b.space.infinity_order > 0 {
                out.push(BaseCurve { factor, point: SpherePoint::Infinity, multiplicity: b.space.infinity_order });
            }
        }
        out
    }

    /// Coefficients `F[j][k]` of `z1^j z2^k` in the reduced form of `sum a_i s_i`.
    pub fn reduced_form(&self, a: &[Complex64]) -> Result<DMatrix<Complex64>> {
        if a.len() != self.dim() {
            return Err(LabError::InvalidInput("coefficient vector has the wrong length".into()));
        }
        let (d1, d2) = (self.first.dim(), self.second.dim());
        let amat = DMatrix::from_fn(d1, d2, |i, j| a[i * d2 + j]);
        Ok(self.first.reduced_coefficients().transpose() * amat * self.second.reduced_coefficients())
    }
}

/// Isolated common zeros of two sections with multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonZeros {
    pub points: Vec<((SpherePoint, SpherePoint), u32)>,
    pub base_curves: Vec<BaseCurve>,
    pub max_residual: f64,
}

impl CommonZeros {
    pub fn total(&self) -> u32 {
        self.points.iter().map(|(_, m)| m).sum()
    }

    /// Number of zeros (with multiplicity) whose log-moduli lie in the box.
    pub fn count_in(&self, region: &Box2) -> u32 {
        self.points
            .iter()
            .filter_map(|((a, b), m)| match (a.finite(), b.finite()) {
                (Some(x), Some(y)) if x.norm() > 0.0 && y.norm() > 0.0 => {
                    region.contains(x.norm().ln(), y.norm().ln()).then_some(*m)
                }
                _ => None,
            })
            .sum()
    }
}

/// Unitary Moebius map `z = (alpha w + beta) / (-conj(beta) w + conj(alpha))`.
#[derive(Debug, Clone, Copy)]
struct Rotation {
    alpha: Complex64,
    beta: Complex64,
}

impl Rotation {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let v = gaussian_unit_vector(rng, 2);
        Rotation { alpha: v[0], beta: v[1] }
    }

    fn apply(&self, w: Complex64) -> SpherePoint {
        let num = self.alpha * w + self.beta;
        let den = -self.beta.conj() * w + self.alpha.conj();
        if den.norm() <= f64::EPSILON * num.norm() {
            SpherePoint::Infinity
        } else {
            SpherePoint::Finite(num / den)
        }
    }

    /// `T[j][m]`: coefficient of `w^m` in `(alpha w + beta)^j (-conj(beta) w + conj(alpha))^(D - j)`.
    fn substitution(&self, deg: usize) -> DMatrix<Complex64> {
        let lin_a = [self.beta, self.alpha];
        let lin_b = [self.alpha.conj(), -self.beta.conj()];
        let mut t = DMatrix::zeros(deg + 1, deg + 1);
        for j in 0..=deg {
            let mut poly = vec![Complex64::new(1.0, 0.0)];
            for _ in 0..j {
                poly = multiply(&poly, &lin_a);
            }
            for _ in j..deg {
                poly = multiply(&poly, &lin_b);
            }
            for (m, c) in poly.into_iter().enumerate() {
                t[(j, m)] = c;
            }
        }
        t
    }
}

fn multiply(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Value, partial derivatives and absolute-value bound of `sum F[j][k] x^j y^k`.
fn eval_form(f: &DMatrix<Complex64>, x: Complex64, y: Complex64) -> (Complex64, Complex64, Complex64, f64) {
    let zero = Complex64::new(0.0, 0.0);
    let (mut v, mut dx, mut dy, mut bound) = (zero, zero, zero, 0.0);
    let (ax, ay) = (x.norm(), y.norm());
    for j in 0..f.nrows() {
        for k in 0..f.ncols() {
            let c = f[(j, k)];
            if c == zero {
                continue;
            }
            let xj = x.powu(j as u32);
            let yk = y.powu(k as u32);
            v += c * xj * yk;
            if j > 0 {
                dx += c * (j as f64) * x.powu(j as u32 - 1) * yk;
            }
            if k > 0 {
                dy += c * (k as f64) * xj * y.powu(k as u32 - 1);
            }
            bound += c.norm() * ax.powi(j as i32) * ay.powi(k as i32);
        }
    }
    (v, dx, dy, bound)
}

fn backward_error(f: &DMatrix<Complex64>, x: Complex64, y: Complex64) -> f64 {
    let (v, _, _, b) = eval_form(f, x, y);
    if b == 0.0 {
        0.0
    } else {
        v.norm() / b
    }
}

/// Sylvester matrix in the second variable at `x`: rows are shifts of `f`
/// then of `g`, columns are powers of `y`.
fn sylvester_at(f: &DMatrix<Complex64>, g: &DMatrix<Complex64>, x: Complex64) -> DMatrix<Complex64> {
    let d2 = f.ncols() - 1;
    let n = 2 * d2;
    let coeffs = |h: &DMatrix<Complex64>| -> Vec<Complex64> {
        (0..=d2)
            .map(|k| (0..h.nrows()).rev().fold(Complex64::new(0.0, 0.0), |acc, j| acc * x + h[(j, k)]))
            .collect()
    };
    let (cf, cg) = (coeffs(f), coeffs(g));
    let mut s = DMatrix::zeros(n, n);
    for i in 0..d2 {
        for k in 0..=d2 {
            s[(i, i + k)] = cf[k];
            s[(d2 + i, i + k)] = cg[k];
        }
    }
    s
}

/// `S_m`: coefficient of `x^m` in the Sylvester matrix.
fn sylvester_blocks(f: &DMatrix<Complex64>, g: &DMatrix<Complex64>) -> Vec<DMatrix<Complex64>> {
    let (d1, d2) = (f.nrows() - 1, f.ncols() - 1);
    let n = 2 * d2;
    (0..=d1)
        .map(|m| {
            let mut s = DMatrix::zeros(n, n);
            for i in 0..d2 {
                for k in 0..=d2 {
                    s[(i, i + k)] = f[(m, k)];
                    s[(d2 + i, i + k)] = g[(m, k)];
                }
            }
            s
        })
        .collect()
}

fn singular_ratio(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Second coordinate from the (Vandermonde) null vector of the Sylvester matrix.
fn second_coordinate(s: &DMatrix<Complex64>) -> Complex64 {
    let svd = s.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let k = svd.singular_values.imin();
    let v: Vec<Complex64> = (0..vt.ncols()).map(|j| vt[(k, j)].conj()).collect();
    let n = v.len();
    let front = v[1] / v[0];
    if front.norm() <= 1.0 || v[n - 2].norm() == 0.0 {
        front
    } else {
        v[n - 1] / v[n - 2]
    }
}

fn newton(f: &DMatrix<Complex64>, g: &DMatrix<Complex64>, mut x: Complex64, mut y: Complex64) -> (Complex64, Complex64) {
    for _ in 0..4 {
        let (fv, fx, fy, _) = eval_form(f, x, y);
        let (gv, gx, gy, _) = eval_form(g, x, y);
        let det = fx * gy - fy * gx;
        if det.norm() == 0.0 {
            break;
        }
        let nx = x - (fv * gy - fy * gv) / det;
        let ny = y - (fx * gv - fv * gx) / det;
        if !(nx.re.is_finite() && nx.im.is_finite() && ny.re.is_finite() && ny.im.is_finite()) {
            break;
        }
        let before = backward_error(f, x, y).max(backward_error(g, x, y));
        let after = backward_error(f, nx, ny).max(backward_error(g, nx, ny));
        if after > before {
            break;
        }
        x = nx;
        y = ny;
    }
    (x, y)
}

/// Detects a common curve component: the resultant vanishes identically
/// exactly when the Sylvester matrix is singular at every point.
fn shares_curve(f: &DMatrix<Complex64>, g: &DMatrix<Complex64>, rng: &mut ChaCha8Rng) -> bool {
    (0..3).all(|_| {
        let x = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        singular_ratio(&sylvester_at(f, g, x)) < SINGULAR_TOL
    })
}

/// Roots of a univariate form in one of the variables; used when the other
/// degree is zero and only a shared curve can occur.
fn univariate_common(f: &[Complex64], g: &[Complex64]) -> Result<bool> {
    let (roots, _) = match crate::poly::sphere_roots(f) {
        Ok(r) => r,
        Err(_) => return Ok(true),
    };
    let bound = |c: &[Complex64], z: Complex64| crate::poly::backward_error(c, z);
    if g.iter().all(|c| c.norm() == 0.0) {
        return Ok(true);
    }
    Ok(roots.iter().any(|z| bound(g, *z) < MATCH_TOL))
}

/// Common zeros of two reduced forms of bidegree `(D1, D2)` on `P^1 x P^1`.
pub fn common_zeros_forms(f: &DMatrix<Complex64>, g: &DMatrix<Complex64>) -> Result<Vec<((SpherePoint, SpherePoint), u32)>> {
    if f.shape() != g.shape() {
        return Err(LabError::InvalidInput("forms must share the bidegree".into()));
    }
    let (d1, d2) = (f.nrows() - 1, f.ncols() - 1);
    if d1 == 0 || d2 == 0 {
        let flat = |h: &DMatrix<Complex64>| -> Vec<Complex64> { h.iter().copied().collect() };
        if d1 + d2 > 0 && univariate_common(&flat(f), &flat(g))? {
            return Err(LabError::PositiveDimensional);
        }
        if d1 + d2 == 0 && (f[(0, 0)].norm() == 0.0 || g[(0, 0)].norm() == 0.0) {
            return Err(LabError::PositiveDimensional);
        }
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b1a5);
    let mut last = LabError::NumericallyDegenerate("no attempt made".into());
    for _ in 0..ATTEMPTS {
        let (r1, r2) = (Rotation::random(&mut rng), Rotation::random(&mut rng));
        let (t1, t2) = (r1.substitution(d1), r2.substitution(d2));
        let ft = t1.transpose() * f * &t2;
        let gt = t1.transpose() * g * &t2;
        if shares_curve(&ft, &gt, &mut rng) {
            return Err(LabError::PositiveDimensional);
        }
        match solve_affine(&ft, &gt) {
            Ok(sol) => {
                let pts: Vec<(SpherePoint, SpherePoint)> = sol.iter().map(|(x, y)| (r1.apply(*x), r2.apply(*y))).collect();
                return Ok(cluster_pairs(&pts));
            }
            Err(e @ LabError::NumericallyDegenerate(_)) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// All `2 D1 D2` solutions in the affine chart, assuming none at infinity.
fn solve_affine(f: &DMatrix<Complex64>, g: &DMatrix<Complex64>) -> Result<Vec<(Complex64, Complex64)>> {
    let (d1, d2) = (f.nrows() - 1, f.ncols() - 1);
    let n = 2 * d2;
    let blocks = sylvester_blocks(f, g);
    let lead = &blocks[d1];
    let lu = lead.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| LabError::NumericallyDegenerate("singular leading block".into()))?;
    let cond = lead.norm() * inv.norm();
    if !(cond < LEADING_CONDITION) {
        return Err(LabError::NumericallyDegenerate(format!("leading block condition {cond:e}")));
    }
    let size = n * d1;
    let mut comp = DMatrix::zeros(size, size);
    for b in 0..d1 - 1 {
        for i in 0..n {
            comp[(b * n + i, (b + 1) * n + i)] = Complex64::new(1.0, 0.0);
        }
    }
    for (m, block) in blocks.iter().take(d1).enumerate() {
        let piece = -(&inv * block);
        comp.view_mut(((d1 - 1) * n, m * n), (n, n)).copy_from(&piece);
    }
    balance(&mut comp);
    let xs = eigenvalues(comp)?;
    let mut out = Vec::with_capacity(size);
    for x in xs {
        let y = second_coordinate(&sylvester_at(f, g, x));
        let (x, y) = newton(f, g, x, y);
        let res = backward_error(f, x, y).max(backward_error(g, x, y));
        if !(res <= MATCH_TOL) {
            return Err(LabError::NumericallyDegenerate(format!("unmatched resultant root, residual {res:e}")));
        }
        out.push((x, y));
    }
    Ok(out)
}

fn cluster_pairs(pts: &[(SpherePoint, SpherePoint)]) -> Vec<((SpherePoint, SpherePoint), u32)> {
    let mut out: Vec<((SpherePoint, SpherePoint), u32)> = Vec::new();
    for &(a, b) in pts {
        match out
            .iter_mut()
            .find(|((c, d), _)| c.chordal(a) < CLUSTER_TOL && d.chordal(b) < CLUSTER_TOL)
        {
            Some((_, m)) => *m += 1,
            None => out.push(((a, b), 1)),
        }
    }
    out
}

/// Isolated common zeros of `sum a1_i s_i` and `sum a2_i s_i`; the lines of
/// the base locus are reported separately.
pub fn common_zeros_pair(basis: &ProductBasis, a1: &[Complex64], a2: &[Complex64]) -> Result<CommonZeros> {
    let f = basis.reduced_form(a1)?;
    let g = basis.reduced_form(a2)?;
    let points = common_zeros_forms(&f, &g)?;
    let mut max_residual = 0.0f64;
    for ((a, b), _) in &points {
        if let (Some(x), Some(y)) = (a.finite(), b.finite()) {
            if x.norm() <= 1.0 && y.norm() <= 1.0 {
                max_residual = max_residual.max(backward_error(&f, x, y)).max(backward_error(&g, x, y));
            }
        }
    }
    let z = CommonZeros { points, base_curves: basis.base_curves(), max_residual };
    if z.total() != basis.expected_zeros() {
        return Err(LabError::NumericallyDegenerate(format!(
            "found {} common zeros, expected {}",
            z.total(),
            basis.expected_zeros()
        )));
    }
    Ok(z)
}

/// Monte Carlo estimate of `E[count in region / (2 p^2)]` against the
/// closed-form mass of `(gamma_p / p)^2 / 2` for a toric product basis.
/// Log-modulus boxes for common-zero counts. Each carries a sizable share of
/// the limit mass so that counts at small degree are not all zero; edges sit
/// halfway between nodes of the default grid.
pub fn pair_regions() -> Vec<Box2> {
    vec![
        Box2::new(-0.55, 0.55, -0.55, 0.55),
        Box2::new(0.05, 1.55, -1.55, -0.05),
        Box2::new(-2.05, -0.55, -2.05, -0.55),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairExpectation {
    pub estimates: Vec<Estimate>,
    pub samples: usize,
    pub degenerate: usize,
    pub positive_dimensional: usize,
}

pub fn pair_expectation(basis: &ProductBasis, regions: &[Box2], n: usize, sampler: &SphereSampler) -> Result<PairExpectation> {
    let p = basis.p();
    let m1 = monomial_data(&basis.first)?;
    let m2 = monomial_data(&basis.second)?;
    let total = basis.expected_zeros() as f64;
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(n); regions.len()];
    let (mut degenerate, mut positive_dimensional) = (0, 0);
    for i in 0..n {
        let a1 = sampler.sample(EXPERIMENT_PAIRS, 2 * i as u64, basis.dim());
        let a2 = sampler.sample(EXPERIMENT_PAIRS, 2 * i as u64 + 1, basis.dim());
        match common_zeros_pair(basis, &a1, &a2) {
            Ok(z) => {
                for (k, r) in regions.iter().enumerate() {
                    values[k].push(z.count_in(r) as f64 / total);
                }
            }
            Err(LabError::NumericallyDegenerate(_)) => degenerate += 1,
            Err(LabError::PositiveDimensional) => positive_dimensional += 1,
            Err(e) => return Err(e),
        }
    }
    let estimates = regions
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let (mean, stderr) = mean_stderr(&values[k]);
            let mass = separable_mass(|s| log_potential_slope(&m1, p, s), |t| log_potential_slope(&m2, p, t), r);
            Estimate { mean, stderr, reference: mass / 2.0 }
        })
        .collect();
    Ok(PairExpectation { estimates, samples: n, degenerate, positive_dimensional })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{SingularWeight, VolumeDensity};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fs_product(p: u32) -> ProductBasis {
        let b = OrthoBasis::build(&SingularWeight::fubini_study(), &VolumeDensity::FubiniStudy, p).unwrap();
        ProductBasis::new(b.clone(), b).unwrap()
    }

    #[test]
    fn linear_system_has_the_expected_points() {
        // z1 - 2 = 0 and z2 - i = 0 as forms of bidegree (1, 1)
        let mut f = DMatrix::zeros(2, 2);
        f[(0, 0)] = c(-2.0, 0.0);
        f[(1, 0)] = c(1.0, 0.0);
        let mut g = DMatrix::zeros(2, 2);
        g[(0, 0)] = c(0.0, -1.0);
        g[(0, 1)] = c(1.0, 0.0);
        let pts = common_zeros_forms(&f, &g).unwrap();
        assert_eq!(pts.iter().map(|(_, m)| m).sum::<u32>(), 2);
        let affine: Vec<_> = pts
            .iter()
            .filter_map(|((a, b), _)| Some((a.finite()?, b.finite()?)))
            .collect();
        assert!(affine.iter().any(|(x, y)| (x - c(2.0, 0.0)).norm() < 1e-10 && (y - c(0.0, 1.0)).norm() < 1e-10));
        // the other zero is where both forms' top parts vanish: (infinity, infinity)
        assert!(pts.iter().any(|((a, b), _)| *a == SpherePoint::Infinity && *b == SpherePoint::Infinity));
    }

    #[test]
    fn identical_sections_are_positive_dimensional() {
        let b = fs_product(2);
        let a = SphereSampler::new(3).sample(0, 0, b.dim());
        assert_eq!(common_zeros_pair(&b, &a, &a), Err(LabError::PositiveDimensional));
    }

    #[test]
    fn random_pairs_meet_bezout() {
        let b = fs_product(3);
        let s = SphereSampler::new(5);
        for i in 0..10 {
            let z = common_zeros_pair(&b, &s.sample(9, 2 * i, b.dim()), &s.sample(9, 2 * i + 1, b.dim())).unwrap();
            assert_eq!(z.total(), 18);
            assert!(z.max_residual < MATCH_TOL);
        }
    }

    #[test]
    fn atom_line_base_curve() {
        let w = SingularWeight::with_single_atom(SpherePoint::origin(), 0.5).unwrap();
        let b1 = OrthoBasis::build(&w, &VolumeDensity::FubiniStudy, 4).unwrap();
        let b2 = OrthoBasis::build(&SingularWeight::fubini_study(), &VolumeDensity::FubiniStudy, 4).unwrap();
        let b = ProductBasis::new(b1, b2).unwrap();
        let curves = b.base_curves();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].factor, 0);
        let (d1, d2) = b.bidegree();
        let s = SphereSampler::new(2);
        let z = common_zeros_pair(&b, &s.sample(1, 0, b.dim()), &s.sample(1, 1, b.dim())).unwrap();
        assert_eq!(z.total() as usize, 2 * d1 * d2);
    }

    #[test]
    fn pair_expectation_matches_closed_form() {
        let b = fs_product(3);
        let regions = [Box2::new(-0.5, 0.5, -0.5, 0.5), Box2::new(0.0, 2.0, -2.0, 0.0)];
        let r = pair_expectation(&b, &regions, 200, &SphereSampler::new(17)).unwrap();
        assert_eq!(r.degenerate + r.positive_dimensional, 0);
        for e in &r.estimates {
            assert!(e.z_score() < 3.0, "{e:?}");
        }
    }

    #[test]
    fn bezout_at_degree_four() {
        let b = fs_product(4);
        let s = SphereSampler::new(8);
        for i in 0..100 {
            let z = common_zeros_pair(&b, &s.sample(4, 2 * i, b.dim()), &s.sample(4, 2 * i + 1, b.dim())).unwrap();
            assert_eq!(z.total(), 32);
        }
    }
}
