//! Real Monge-Ampere measures of convex functions sampled on a grid.
//!
//! The profile is replaced by the convex envelope of its samples. The
//! subdifferential of the envelope at a grid vertex `v` is the set of slopes
//! `q` with `q . (x - v) <= g(x) - g(v)` for all samples `x`, intersected
//! with the declared Newton polytope; its area is the Monge-Ampere mass of
//! `v`. Region masses carry a factor two so that the measure matches the
//! complex Monge-Ampere operator of the associated toric function.

use crate::error::{LabError, Result};

/// Uniform tensor grid on a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub s_min: f64,
    pub s_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_s: usize,
    pub n_t: usize,
}

impl Grid {
    pub fn square(half_width: f64, n: usize) -> Self {
        Grid { s_min: -half_width, s_max: half_width, t_min: -half_width, t_max: half_width, n_s: n, n_t: n }
    }

    pub fn s(&self, i: usize) -> f64 {
        self.s_min + (self.s_max - self.s_min) * i as f64 / (self.n_s - 1) as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t_min + (self.t_max - self.t_min) * j as f64 / (self.n_t - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n_s < 2 || self.n_t < 2 || !(self.s_min < self.s_max) || !(self.t_min < self.t_max) {
            return Err(LabError::InvalidInput("grid needs at least 2x2 nodes on a nonempty box".into()));
        }
        Ok(())
    }
}

/// Closed axis-parallel box in the `(s, t)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub s_min: f64,
    pub s_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Box2 {
    pub fn new(s_min: f64, s_max: f64, t_min: f64, t_max: f64) -> Self {
        Box2 { s_min, s_max, t_min, t_max }
    }

    pub fn contains(&self, s: f64, t: f64) -> bool {
        let eps = 1e-12;
        s >= self.s_min - eps && s <= self.s_max + eps && t >= self.t_min - eps && t <= self.t_max + eps
    }
}

/// Which sample points constrain each subdifferential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// Every grid point; exact for any convex data.
    Full,
    /// Points within this many grid steps in each direction.
    Window(usize),
}

type Polygon = Vec<[f64; 2]>;

/// Grid samples of a convex function together with its Newton polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProfile {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub polytope: Polygon,
    pub stencil: Stencil,
}

fn polygon_area(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    if n < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..n {
        let [x0, y0] = p[i];
        let [x1, y1] = p[(i + 1) % n];
        a += x0 * y1 - x1 * y0;
    }
    0.5 * a.abs()
}

/// Area of a convex polygon given by its vertices in order.
pub fn area(p: &[[f64; 2]]) -> f64 {
    polygon_area(p)
}

/// Keeps the part of a convex polygon where `n . q <= c + tol`.
fn clip(poly: &[[f64; 2]], n: [f64; 2], c: f64, tol: f64) -> Polygon {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let k = poly.len();
    for i in 0..k {
        let a = poly[i];
        let b = poly[(i + 1) % k];
        let fa = n[0] * a[0] + n[1] * a[1] - c - tol;
        let fb = n[0] * b[0] + n[1] * b[1] - c - tol;
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa <= 0.0) != (fb <= 0.0) {
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

impl ConvexProfile {
    pub fn from_values(grid: Grid, polytope: Polygon, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n_s * grid.n_t {
            return Err(LabError::InvalidInput(format!(
                "expected {} values, got {}",
                grid.n_s * grid.n_t,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidInput("profile values must be finite".into()));
        }
        if polytope.len() < 3 || polygon_area(&polytope) == 0.0 {
            return Err(LabError::InvalidInput("Newton polytope must be a nondegenerate polygon".into()));
        }
        Ok(ConvexProfile { grid, values, polytope, stencil: Stencil::Window(8) })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Grid, polytope: Polygon, g: F) -> Result<Self> {
        grid.validate()?;
        let mut values = Vec::with_capacity(grid.n_s * grid.n_t);
        for i in 0..grid.n_s {
            for j in 0..grid.n_t {
                values.push(g(grid.s(i), grid.t(j)));
            }
        }
        Self::from_values(grid, polytope, values)
    }

    /// Parses whitespace separated `s t value` lines on a tensor grid
    /// (any order); `#` starts a comment.
    pub fn from_table(text: &str, polytope: Polygon) -> Result<Self> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let nums: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            match nums {
                Ok(v) if v.len() == 3 => rows.push((v[0], v[1], v[2])),
                _ => return Err(LabError::InvalidInput(format!("line {}: expected `s t value`", ln + 1))),
            }
        }
        let mut ss: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut ts: Vec<f64> = rows.iter().map(|r| r.1).collect();
        ss.sort_by(f64::total_cmp);
        ss.dedup();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        if ss.len() < 2 || ts.len() < 2 || ss.len() * ts.len() != rows.len() {
            return Err(LabError::InvalidInput("table is not a full tensor grid".into()));
        }
        let grid = Grid {
            s_min: ss[0],
            s_max: *ss.last().unwrap(),
            t_min: ts[0],
            t_max: *ts.last().unwrap(),
            n_s: ss.len(),
            n_t: ts.len(),
        };
        let tol = 1e-9 * (grid.s_max - grid.s_min).max(grid.t_max - grid.t_min);
        for (i, s) in ss.iter().enumerate() {
            if (s - grid.s(i)).abs() > tol {
                return Err(LabError::InvalidInput("s nodes are not uniformly spaced".into()));
            }
        }
        for (j, t) in ts.iter().enumerate() {
            if (t - grid.t(j)).abs() > tol {
                return Err(LabError::InvalidInput("t nodes are not uniformly spaced".into()));
            }
        }
        let mut values = vec![f64::NAN; rows.len()];
        for (s, t, v) in rows {
            let i = ss.iter().position(|x| *x == s).expect("node present");
            let j = ts.iter().position(|x| *x == t).expect("node present");
            values[i * grid.n_t + j] = v;
        }
        Self::from_values(grid, polytope, values)
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_t + j]
    }

    /// Midpoint convexity along rows, columns and both diagonals.
    pub fn check_convex(&self) -> Result<()> {
        let (ns, nt) = (self.grid.n_s as i64, self.grid.n_t as i64);
        let scale = self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-10 * scale;
        for i in 0..ns {
            for j in 0..nt {
                for (di, dj) in [(1, 0), (0, 1), (1, 1), (1, -1)] {
                    let (a, b) = (i - di, j - dj);
                    let (c, d) = (i + di, j + dj);
                    if a < 0 || b < 0 || c >= ns || d >= nt || b >= nt || d < 0 {
                        continue;
                    }
                    let mid = self.value(i as usize, j as usize);
                    let sum = self.value(a as usize, b as usize) + self.value(c as usize, d as usize);
                    if sum - 2.0 * mid < -tol {
                        return Err(LabError::NonConvexProfile(format!(
                            "midpoint test fails at ({}, {})",
                            self.grid.s(i as usize),
                            self.grid.t(j as usize)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Subdifferential polygon at vertex `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> Result<Polygon> {
        let g = &self.grid;
        let (vs, vt) = (g.s(i), g.t(j));
        let gv = self.value(i, j);
        // slack for rounding in the differences g(x) - g(v)
        let scale = self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = 8.0 * f64::EPSILON * scale;
        let w = match self.stencil {
            Stencil::Full => g.n_s.max(g.n_t),
            Stencil::Window(w) => w,
        } as i64;
        // nearest neighbours first so the polygon shrinks quickly
        let mut offsets: Vec<(i64, i64)> = Vec::new();
        for a in -w..=w {
            for b in -w..=w {
                let (x, y) = (i as i64 + a, j as i64 + b);
                if (a, b) != (0, 0) && x >= 0 && y >= 0 && x < g.n_s as i64 && y < g.n_t as i64 {
                    offsets.push((a, b));
                }
            }
        }
        offsets.sort_by_key(|(a, b)| a.abs().max(b.abs()) * 1000 + a.abs() + b.abs());
        let mut poly = self.polytope.clone();
        for (a, b) in offsets {
            let (x, y) = ((i as i64 + a) as usize, (j as i64 + b) as usize);
            let n = [g.s(x) - vs, g.t(y) - vt];
            poly = clip(&poly, n, self.value(x, y) - gv, tol);
            if poly.is_empty() {
                return Err(LabError::NonConvexProfile(format!(
                    "empty subdifferential at ({vs}, {vt})"
                )));
            }
        }
        Ok(poly)
    }

    /// Areas of all subdifferentials, row-major in `(i, j)`.
    pub fn cell_areas(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..self.grid.n_s {
            for j in 0..self.grid.n_t {
                out.push(polygon_area(&self.cell(i, j)?));
            }
        }
        Ok(out)
    }

    /// `sum of cell areas - area(polytope)`; zero when the cells tile the
    /// polytope, positive if a windowed stencil missed a constraint.
    pub fn tiling_defect(&self, areas: &[f64]) -> f64 {
        areas.iter().sum::<f64>() - polygon_area(&self.polytope)
    }

    pub fn polytope_area(&self) -> f64 {
        polygon_area(&self.polytope)
    }

    /// Mass of a region from precomputed cell areas.
    pub fn region_mass_from(&self, areas: &[f64], region: &Box2) -> f64 {
        let mut m = 0.0;
        for i in 0..self.grid.n_s {
            for j in 0..self.grid.n_t {
                if region.contains(self.grid.s(i), self.grid.t(j)) {
                    m += areas[i * self.grid.n_t + j];
                }
            }
        }
        2.0 * m
    }
}

/// Monge-Ampere mass `2 * sum area(subdifferential)` of the grid vertices in `region`.
pub fn real_ma_measure(profile: &ConvexProfile, region: &Box2) -> Result<f64> {
    profile.check_convex()?;
    let g = &profile.grid;
    let mut m = 0.0;
    for i in 0..g.n_s {
        for j in 0..g.n_t {
            if region.contains(g.s(i), g.t(j)) {
                m += polygon_area(&profile.cell(i, j)?);
            }
        }
    }
    Ok(2.0 * m)
}

/// One-dimensional analogue: the total slope jump of the piecewise linear
/// interpolant at nodes in `[s1, s2]`, with end slopes clamped to `[a, b]`.
pub fn real_ma_1d(nodes: &[f64], values: &[f64], slope_range: (f64, f64), s1: f64, s2: f64) -> Result<f64> {
    let n = nodes.len();
    if n < 2 || values.len() != n {
        return Err(LabError::InvalidInput("need matching nodes and values".into()));
    }
    let slope = |k: usize| (values[k + 1] - values[k]) / (nodes[k + 1] - nodes[k]);
    for k in 1..n - 1 {
        if slope(k) < slope(k - 1) - 1e-12 * (1.0 + slope(k).abs()) {
            return Err(LabError::NonConvexProfile(format!("slope decreases at {}", nodes[k])));
        }
    }
    let mut m = 0.0;
    for k in 0..n {
        if nodes[k] < s1 - 1e-12 || nodes[k] > s2 + 1e-12 {
            continue;
        }
        let left = if k == 0 { slope_range.0 } else { slope(k - 1) };
        let right = if k == n - 1 { slope_range.1 } else { slope(k) };
        m += right - left;
    }
    Ok(m)
}

/// Model convex functions with explicit smooth approximants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaPreset {
    /// `v = max(s, t, 0)`, `v_p = (1/p) log(e^{ps} + e^{pt} + 1)`; one atom of mass 1 at the origin.
    MaxCorner,
    /// `v = max(s, 0) + max(t, 0)`, `v_p` the sum of one-variable softplus terms; atom of mass 2.
    SumCorner,
}

impl MaPreset {
    pub fn polytope(self) -> Polygon {
        match self {
            MaPreset::MaxCorner => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            MaPreset::SumCorner => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }

    pub fn limit(self, s: f64, t: f64) -> f64 {
        match self {
            MaPreset::MaxCorner => s.max(t).max(0.0),
            MaPreset::SumCorner => s.max(0.0) + t.max(0.0),
        }
    }

    pub fn approximant(self, p: u32, s: f64, t: f64) -> f64 {
        let p = p as f64;
        match self {
            MaPreset::MaxCorner => crate::quad::log_sum_exp([p * s, p * t, 0.0]) / p,
            MaPreset::SumCorner => (crate::quad::softplus(p * s) + crate::quad::softplus(p * t)) / p,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaPreset::MaxCorner => "max-corner",
            MaPreset::SumCorner => "sum-corner",
        }
    }

    /// Regions used by the convergence harness: the corner, a ridge box and a
    /// box away from the singular set. Edges lie between grid nodes.
    pub fn regions() -> Vec<Box2> {
        vec![
            Box2::new(-0.55, 0.55, -0.55, 0.55),
            Box2::new(0.45, 1.55, 0.45, 1.55),
            Box2::new(2.05, 2.95, -2.95, -2.05),
        ]
    }
}

/// One entry of the convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessRow {
    pub p: u32,
    pub region: usize,
    pub mass: f64,
    pub limit_mass: f64,
    pub error: f64,
}

/// Convergence table and per-region verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessReport {
    pub preset: MaPreset,
    pub rows: Vec<HarnessRow>,
    pub max_tiling_defect: f64,
    pub verdict: bool,
}

/// Errors below this are treated as converged.
pub const ERROR_FLOOR: f64 = 1e-9;

/// True when each consecutive error is strictly smaller or already below the floor.
pub fn errors_decreasing(errors: &[f64]) -> bool {
    errors.windows(2).all(|w| w[1] < w[0] || w[1] <= ERROR_FLOOR)
}

/// `|MA(v_p)(B) - MA(v)(B)|` over a degree sweep, both sides computed by the
/// same engine on the same grid.
pub fn ma_convergence_harness(preset: MaPreset, p_list: &[u32], regions: &[Box2], grid: Grid) -> Result<HarnessReport> {
    let limit = ConvexProfile::from_fn(grid, preset.polytope(), |s, t| preset.limit(s, t))?;
    limit.check_convex()?;
    let limit_areas = limit.cell_areas()?;
    let mut defect = limit.tiling_defect(&limit_areas).abs();
    let limit_masses: Vec<f64> = regions.iter().map(|r| limit.region_mass_from(&limit_areas, r)).collect();
    let mut rows = Vec::new();
    for &p in p_list {
        let prof = ConvexProfile::from_fn(grid, preset.polytope(), |s, t| preset.approximant(p, s, t))?;
        prof.check_convex()?;
        let areas = prof.cell_areas()?;
        defect = defect.max(prof.tiling_defect(&areas).abs());
        for (k, r) in regions.iter().enumerate() {
            let mass = prof.region_mass_from(&areas, r);
            rows.push(HarnessRow { p, region: k, mass, limit_mass: limit_masses[k], error: (mass - limit_masses[k]).abs() });
        }
    }
    let verdict = (0..regions.len()).all(|k| {
        let errs: Vec<f64> = rows.iter().filter(|r| r.region == k).map(|r| r.error).collect();
        errors_decreasing(&errs)
    });
    Ok(HarnessReport { preset, rows, max_tiling_defect: defect, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon {
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    }

    #[test]
    fn corner_atom_is_exact() {
        let grid = Grid::square(2.0, 9);
        let prof = ConvexProfile::from_fn(grid, unit_square(), |s, t| s.max(0.0) + t.max(0.0)).unwrap();
        let m = real_ma_measure(&prof, &Box2::new(-0.25, 0.25, -0.25, 0.25)).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        let away = real_ma_measure(&prof, &Box2::new(0.25, 2.0, -2.0, 2.0)).unwrap();
        assert!(away.abs() < 1e-12);
    }

    #[test]
    fn quadratic_profile_mass() {
        // g = (s^2 + t^2)/2 has identity gradient map: mass = 2 * area of
        // the slopes covered by the box, here [-0.45, 0.45]^2
        let grid = Grid::square(1.0, 21);
        let poly = vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        let prof = ConvexProfile::from_fn(grid, poly, |s, t| 0.5 * (s * s + t * t)).unwrap();
        let m = real_ma_measure(&prof, &Box2::new(-0.45, 0.45, -0.45, 0.45)).unwrap();
        assert!((m - 2.0 * 0.81).abs() < 1e-9, "{m}");
    }

    #[test]
    fn non_convex_detected() {
        let grid = Grid::square(1.0, 5);
        let prof = ConvexProfile::from_fn(grid, unit_square(), |s, t| -(s * s) + t).unwrap();
        assert!(matches!(prof.check_convex(), Err(LabError::NonConvexProfile(_))));
        assert!(matches!(
            real_ma_measure(&prof, &Box2::new(-1.0, 1.0, -1.0, 1.0)),
            Err(LabError::NonConvexProfile(_))
        ));
    }

    #[test]
    fn one_dimensional_slopes() {
        let nodes: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let values: Vec<f64> = nodes.iter().map(|s| s.abs()).collect();
        let m = real_ma_1d(&nodes, &values, (-1.0, 1.0), -0.1, 0.1).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
    }

    #[test]
    fn table_parsing() {
        let mut text = String::from("# s t value\n");
        for i in 0..3 {
            for j in 0..3 {
                let (s, t) = (i as f64 - 1.0, j as f64 - 1.0);
                text.push_str(&format!("{s} {t} {}\n", s.max(0.0) + t.max(0.0)));
            }
        }
        let prof = ConvexProfile::from_table(&text, unit_square()).unwrap();
        assert_eq!(prof.grid.n_s, 3);
        let m = real_ma_measure(&prof, &Box2::new(-0.5, 0.5, -0.5, 0.5)).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert!(ConvexProfile::from_table("0 0 1\n1 0\n", unit_square()).is_err());
    }

    #[test]
    fn cells_tile_polytope() {
        let grid = Grid::square(3.0, 31);
        let prof = ConvexProfile::from_fn(grid, MaPreset::MaxCorner.polytope(), |s, t| {
            MaPreset::MaxCorner.approximant(4, s, t)
        })
        .unwrap();
        let areas = prof.cell_areas().unwrap();
        assert!(prof.tiling_defect(&areas).abs() < 1e-9, "{}", prof.tiling_defect(&areas));
    }
}
