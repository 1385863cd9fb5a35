//! Toric reduction on `P^1 x P^1`: for radial data the Fubini-Study current
//! of a product basis is determined by the convex profile
//! `u_p(s, t) = (1/2p) log sum |c_jk|^2 e^{2(a_j s + b_k t)}` in logarithmic
//! coordinates, and `(gamma_p / p)^2` is computed as the real Monge-Ampere
//! measure of that profile.

use crate::error::{LabError, Result};
use crate::geom::PolarPoint;
use crate::l2::OrthoBasis;
use crate::quad::log_sum_exp;

use super::ma::{area, errors_decreasing, Box2, ConvexProfile, Grid};

/// Exponents and log-moduli of the monomials of a diagonal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialData {
    pub exponents: Vec<f64>,
    pub log_coeffs: Vec<f64>,
}

/// Extracts the monomial data of a radial (diagonal) basis.
pub fn monomial_data(basis: &OrthoBasis) -> Result<MonomialData> {
    if !basis.space.is_radial() || basis.space.base.iter().any(|(a, _)| a.norm() != 0.0) {
        return Err(LabError::NotToric("basis data are not invariant under rotations".into()));
    }
    let rc = basis.reduced_coefficients();
    let d = basis.dim();
    for i in 0..d {
        let diag = rc[(i, i)].norm();
        for j in 0..d {
            if i != j && rc[(i, j)].norm() > 1e-10 * diag {
                return Err(LabError::NotToric(format!("coefficient ({i}, {j}) is off-diagonal")));
            }
        }
    }
    let exps = basis.space.admissible_exponents();
    Ok(MonomialData {
        exponents: exps.iter().map(|&k| k as f64).collect(),
        log_coeffs: (0..d).map(|i| rc[(i, i)].norm().ln()).collect(),
    })
}

/// One-variable potential `(1/2p) log sum |c_j|^2 e^{2 a_j s}`.
pub fn log_potential(data: &MonomialData, p: u32, s: f64) -> f64 {
    let terms: Vec<f64> = data
        .exponents
        .iter()
        .zip(&data.log_coeffs)
        .map(|(a, c)| 2.0 * a * s + 2.0 * c)
        .collect();
    log_sum_exp(terms.iter().copied()) / (2.0 * p as f64)
}

/// Derivative in `s` of `log_potential`.
pub fn log_potential_slope(data: &MonomialData, p: u32, s: f64) -> f64 {
    let logs: Vec<f64> = data
        .exponents
        .iter()
        .zip(&data.log_coeffs)
        .map(|(a, c)| 2.0 * a * s + 2.0 * c)
        .collect();
    let top = log_sum_exp(logs.iter().copied());
    let mean: f64 = logs.iter().zip(&data.exponents).map(|(l, a)| a * (l - top).exp()).sum();
    mean / p as f64
}

/// Region masses of `(gamma_p / p)^2` and of the limiting `gamma^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToricReport {
    pub p: u32,
    pub masses: Vec<f64>,
    /// Mass carried by the boundary divisors: `2 (1 - area(polytope))`.
    pub boundary_correction: f64,
    pub tiling_defect: f64,
}

fn rectangle(a: (f64, f64), b: (f64, f64)) -> Vec<[f64; 2]> {
    vec![[a.0, b.0], [a.1, b.0], [a.1, b.1], [a.0, b.1]]
}

/// `(gamma_p/p)^2` on boxes of the `(log|z1|, log|z2|)` plane for a product basis.
pub fn toric_fs_square(first: &OrthoBasis, second: &OrthoBasis, regions: &[Box2], grid: Grid) -> Result<ToricReport> {
    if first.p() != second.p() {
        return Err(LabError::InvalidInput("factors must share the degree".into()));
    }
    let p = first.p();
    let m1 = monomial_data(first)?;
    let m2 = monomial_data(second)?;
    let span = |m: &MonomialData| {
        let lo = m.exponents.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo / p as f64, hi / p as f64)
    };
    let polytope = rectangle(span(&m1), span(&m2));
    let prof = ConvexProfile::from_fn(grid, polytope.clone(), |s, t| {
        log_potential(&m1, p, s) + log_potential(&m2, p, t)
    })?;
    prof.check_convex()?;
    let areas = prof.cell_areas()?;
    Ok(ToricReport {
        p,
        masses: regions.iter().map(|r| prof.region_mass_from(&areas, r)).collect(),
        boundary_correction: 2.0 * (1.0 - area(&polytope)),
        tiling_defect: prof.tiling_defect(&areas),
    })
}

/// Limiting profile `g(s) = phi(e^s)` of a radial weight and its slope range.
fn weight_profile(basis: &OrthoBasis) -> (impl Fn(f64) -> f64 + '_, (f64, f64)) {
    let w = &basis.space.weight;
    let lo = w.lelong(crate::geom::SpherePoint::origin());
    let hi = w.degree - w.mass_at_infinity().unwrap_or(0.0);
    (move |s: f64| w.eval_polar(PolarPoint::new(s, 0.0)), (lo, hi))
}

/// Region masses of `gamma^2` from the piecewise-linear approximant of the
/// limiting profile on the same grid.
pub fn toric_limit_masses(first: &OrthoBasis, second: &OrthoBasis, regions: &[Box2], grid: Grid) -> Result<Vec<f64>> {
    let (g1, r1) = weight_profile(first);
    let (g2, r2) = weight_profile(second);
    let prof = ConvexProfile::from_fn(grid, rectangle(r1, r2), |s, t| g1(s) + g2(t))?;
    prof.check_convex()?;
    let areas = prof.cell_areas()?;
    Ok(regions.iter().map(|r| prof.region_mass_from(&areas, r)).collect())
}

/// Closed form for separable profiles: `2 (g1'(s2) - g1'(s1)) (g2'(t2) - g2'(t1))`
/// using the given one-variable derivatives.
pub fn separable_mass<F1: Fn(f64) -> f64, F2: Fn(f64) -> f64>(d1: F1, d2: F2, region: &Box2) -> f64 {
    2.0 * (d1(region.s_max) - d1(region.s_min)) * (d2(region.t_max) - d2(region.t_min))
}

/// Errors of a degree sweep against the limit, with the trend verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct ToricSweep {
    pub reports: Vec<ToricReport>,
    pub limit: Vec<f64>,
    pub errors: Vec<Vec<f64>>,
    pub verdict: bool,
}

/// Runs `toric_fs_square` for a list of basis pairs (increasing degree).
pub fn toric_sweep(pairs: &[(OrthoBasis, OrthoBasis)], regions: &[Box2], grid: Grid) -> Result<ToricSweep> {
    let (f, s) = pairs
        .first()
        .ok_or_else(|| LabError::InvalidInput("empty degree sweep".into()))?;
    let limit = toric_limit_masses(f, s, regions, grid)?;
    let mut reports = Vec::new();
    for (a, b) in pairs {
        reports.push(toric_fs_square(a, b, regions, grid)?);
    }
    let errors: Vec<Vec<f64>> = (0..regions.len())
        .map(|k| reports.iter().map(|r| (r.masses[k] - limit[k]).abs()).collect())
        .collect();
    let verdict = errors.iter().all(|e| errors_decreasing(e));
    Ok(ToricSweep { reports, limit, errors, verdict })
}
