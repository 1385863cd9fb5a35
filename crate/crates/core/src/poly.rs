//! Roots of univariate complex polynomials via balanced companion matrices.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::geom::{Complex64, SpherePoint};

/// Leading coefficients below this fraction of the largest one are treated
/// as zero, sending the corresponding roots to infinity.
pub const LEADING_TOL: f64 = 1e-12;

/// Roots closer than this (chordal distance) are merged into one multiple root.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Horner evaluation of `sum c_j z^j` (ascending coefficients).
pub fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

fn horner_with_derivative(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Relative backward error `|r(z)| / sum |c_j| |z|^j`, evaluated in the
/// reversed variable when `|z| > 1`.
pub fn backward_error(c: &[Complex64], z: Complex64) -> f64 {
    if z.norm() <= 1.0 {
        let num = horner(c, z).norm();
        let den = c.iter().rev().fold(0.0, |acc, a| acc * z.norm() + a.norm());
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    } else {
        let rev: Vec<Complex64> = c.iter().rev().copied().collect();
        backward_error_small(&rev, z.inv())
    }
}

fn backward_error_small(c: &[Complex64], w: Complex64) -> f64 {
    let num = horner(c, w).norm();
    let den = c.iter().rev().fold(0.0, |acc, a| acc * w.norm() + a.norm());
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Parlett-Reinsch balancing by powers of two.
pub(crate) fn balance(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].norm();
                    r += m[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Eigenvalues of a complex square matrix: Hessenberg reduction followed by
/// single-shift QR iteration with Wilkinson shifts and periodic exceptional
/// shifts.
pub fn eigenvalues(m: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(LabError::NumericallyDegenerate("non-finite matrix entry".into()));
    }
    let h = m.hessenberg().h();
    hessenberg_eigenvalues(h)
}

fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let (ax, ay) = (x.norm(), y.norm());
    if ay == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (ax / r, (x / ax) * y.conj() / r)
}

fn hessenberg_eigenvalues(mut h: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = h.nrows();
    let zero = Complex64::new(0.0, 0.0);
    let mut eig = vec![zero; n];
    let norm = h.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        let mut l = hi;
        while l > 0 {
            let s = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            let s = if s == 0.0 { norm } else { s };
            if h[(l, l - 1)].norm() <= f64::EPSILON * s {
                h[(l, l - 1)] = zero;
                break;
            }
            l -= 1;
        }
        if l == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > 60 * n {
            return Err(LabError::NumericallyDegenerate("QR iteration did not converge".into()));
        }
        let shift = if iter % 11 == 0 {
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else if iter % 11 == 10 {
            h[(hi, hi)] + Complex64::new(0.0, 0.75 * h[(hi, hi - 1)].norm())
        } else {
            let a = h[(hi - 1, hi - 1)];
            let b = h[(hi - 1, hi)];
            let c = h[(hi, hi - 1)];
            let d = h[(hi, hi)];
            let half = (a - d) * 0.5;
            let disc = (half * half + b * c).sqrt();
            let mid = (a + d) * 0.5;
            let (m1, m2) = (mid + disc, mid - disc);
            if (m1 - d).norm() < (m2 - d).norm() {
                m1
            } else {
                m2
            }
        };
        for k in l..hi {
            let (x, y) = if k == l {
                (h[(l, l)] - shift, h[(l + 1, l)])
            } else {
                (h[(k, k - 1)], h[(k + 1, k - 1)])
            };
            let (c, s) = givens(x, y);
            let col0 = if k == l { l } else { k - 1 };
            for j in col0..=hi {
                let (a, b) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = a * c + s * b;
                h[(k + 1, j)] = -s.conj() * a + b * c;
            }
            if k > l {
                h[(k + 1, k - 1)] = zero;
            }
            let row1 = (k + 2).min(hi);
            for i in l..=row1 {
                let (a, b) = (h[(i, k)], h[(i, k + 1)]);
                h[(i, k)] = a * c + b * s.conj();
                h[(i, k + 1)] = -a * s + b * c;
            }
        }
    }
    Ok(eig)
}

/// Finite roots (with repetition) of a polynomial whose leading coefficient
/// is significant, refined by two Newton steps.
pub fn finite_roots(c: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = c[n];
    let mut m = DMatrix::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    balance(&mut m);
    let mut roots = eigenvalues(m)?;
    for z in roots.iter_mut() {
        for _ in 0..2 {
            let (p, dp) = horner_with_derivative(c, *z);
            if dp.norm() == 0.0 {
                break;
            }
            let next = *z - p / dp;
            if next.re.is_finite() && next.im.is_finite() && backward_error(c, next) <= backward_error(c, *z) {
                *z = next;
            }
        }
    }
    Ok(roots)
}

/// Merges roots closer than `tol` in chordal distance.
pub fn cluster(points: &[SpherePoint], tol: f64) -> Vec<(SpherePoint, u32)> {
    let mut out: Vec<(SpherePoint, u32)> = Vec::new();
    for &p in points {
        match out.iter_mut().find(|(q, _)| q.chordal(p) < tol) {
            Some((_, m)) => *m += 1,
            None => out.push((p, 1)),
        }
    }
    out
}

/// All roots on the sphere of a polynomial of formal degree `c.len() - 1`:
/// negligible leading coefficients produce roots at infinity.
pub fn sphere_roots(c: &[Complex64]) -> Result<(Vec<Complex64>, u32)> {
    let max = c.iter().fold(0.0f64, |m, a| m.max(a.norm()));
    if max == 0.0 {
        return Err(LabError::NumericallyDegenerate("zero polynomial".into()));
    }
    let mut deg = c.len() - 1;
    while deg > 0 && c[deg].norm() < LEADING_TOL * max {
        deg -= 1;
    }
    let at_infinity = (c.len() - 1 - deg) as u32;
    Ok((finite_roots(&c[..=deg])?, at_infinity))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_roots() {
        let r = finite_roots(&[c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 1.0).abs() < 1e-14 && (re[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn roots_of_unity_and_backward_error() {
        let n = 20;
        let mut coeffs = vec![c(0.0, 0.0); n + 1];
        coeffs[0] = c(-1.0, 0.0);
        coeffs[n] = c(1.0, 0.0);
        let r = finite_roots(&coeffs).unwrap();
        assert_eq!(r.len(), n);
        for z in r {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!(backward_error(&coeffs, z) < 1e-14);
        }
    }

    #[test]
    fn eigenvalues_of_triangular_and_random() {
        let mut m = DMatrix::<Complex64>::zeros(4, 4);
        for i in 0..4 {
            for j in i..4 {
                m[(i, j)] = c(i as f64 + 1.0, j as f64 - i as f64);
            }
        }
        let mut ev: Vec<f64> = eigenvalues(m).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        for (k, e) in ev.iter().enumerate() {
            assert!((e - (k as f64 + 1.0)).abs() < 1e-12);
        }
        // trace and determinant of a dense complex matrix
        let n = 7;
        let m = DMatrix::from_fn(n, n, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64));
        let ev = eigenvalues(m.clone()).unwrap();
        let tr: Complex64 = ev.iter().sum();
        assert!((tr - m.trace()).norm() < 1e-10);
        let det: Complex64 = ev.iter().product();
        assert!((det - m.determinant()).norm() < 1e-8 * (1.0 + det.norm()));
    }

    #[test]
    fn leading_collapse_goes_to_infinity() {
        let (r, inf) = sphere_roots(&[c(2.0, 0.0), c(-1.0, 0.0), c(1e-15, 0.0)]).unwrap();
        assert_eq!(inf, 1);
        assert_eq!(r.len(), 1);
        assert!((r[0] - c(2.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn clustering_counts_multiplicity() {
        let pts = [
            SpherePoint::Finite(c(1.0, 0.0)),
            SpherePoint::Finite(c(1.0 + 1e-9, 0.0)),
            SpherePoint::Infinity,
        ];
        let cl = cluster(&pts, CLUSTER_TOL);
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].1, 2);
    }
}
