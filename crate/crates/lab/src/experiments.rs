//! Scenario construction and the experiment kinds.

use std::time::Instant;

use equilab::bergman::{mainhyp_diagnostic, normalization_check, section_norms, Region};
use equilab::bivariate::{pair_expectation, pair_regions, ProductBasis};
use equilab::currents::ma::{ma_convergence_harness, Box2, Grid, MaPreset};
use equilab::currents::toric::{toric_fs_square, toric_sweep};
use equilab::currents::{curvature_current, fs_current, lelong_gap, pairing_identity, weak_distance, TestFamily};
use equilab::geom::{SingularWeight, SpherePoint, VolumeDensity};
use equilab::l2::{GramSpec, OrthoBasis, SectionSpace};
use equilab::random::{cd_constant, per_doubling_factor, expectation_estimate, sequence_run, zeros, SphereSampler, EXPERIMENT_VANISHING};
use equilab::LabError;

use crate::cache::{Cache, CacheEvent};
use crate::config::{emit, format_point, ExperimentConfig, Kind, Model, VolumeSpec, WeightSpec};
use crate::error::{context, CliError};
use crate::report::{num, Check, Plot, ReportBundle, Table};

/// Relative tolerance of `int P_p = d_p`: ten times the Gram quadrature tolerance.
pub const NORMALIZATION_TOL: f64 = 10.0 * 1e-11;
/// Tolerance of `C G C^* = I`.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;
/// Tolerance of recomputed section norms.
pub const SECTION_NORM_TOL: f64 = 1e-6;
/// Relative tolerance of the pairing identity for `gamma_p - p gamma`.
pub const PAIRING_TOL: f64 = 1e-4;
/// Weak distances below this count as zero in the monotonicity check.
pub const WEAK_FLOOR: f64 = 1e-10;
/// Allowed `|total mass - p| / p` of `gamma_p`.
pub const MASS_TOL: f64 = 1e-4;
/// Allowed deviation of the product-FS total Monge-Ampere mass from 2.
pub const TOTAL_MASS_TOL: f64 = 0.02;
/// Largest admissible z-score of a Monte Carlo estimate.
pub const Z_LIMIT: f64 = 3.0;

pub fn build_weight(spec: &WeightSpec) -> equilab::Result<SingularWeight> {
    let mut w = SingularWeight::fubini_study().with_fs_scale(spec.fs_scale);
    for (p, nu) in &spec.atoms {
        w = w.with_atom(*p, *nu)?;
    }
    if spec.epsilon > 0.0 || !spec.punctures.is_empty() {
        w = w.with_poincare(spec.epsilon, spec.punctures.clone())?;
    }
    w.check_global()?;
    if spec.epsilon > 0.0 {
        w.validate_semipositive()?;
    }
    Ok(w)
}

pub fn build_volume(spec: &VolumeSpec) -> equilab::Result<VolumeDensity> {
    match spec {
        VolumeSpec::FubiniStudy => Ok(VolumeDensity::FubiniStudy),
        VolumeSpec::Poincare { punctures, delta } => VolumeDensity::poincare_with_delta(punctures.clone(), *delta),
    }
}

/// Inconsistent scenario data is a configuration problem; other failures stay numerical.
fn invalid_as_usage<T>(r: equilab::Result<T>, section: &str) -> Result<T, CliError> {
    match r {
        Err(LabError::InvalidInput(msg)) => Err(CliError::Usage(format!("{section}: {msg}"))),
        other => context(other, || section.into()),
    }
}

pub struct Runner {
    pub cfg: ExperimentConfig,
    cache: Cache,
    pub bundle: ReportBundle,
    weights: Vec<SingularWeight>,
    volume: VolumeDensity,
}

fn is_plain_fs(w: &SingularWeight, v: &VolumeDensity) -> bool {
    w.atoms.is_empty() && w.epsilon == 0.0 && w.fs_scale() == Some(1.0) && matches!(v, VolumeDensity::FubiniStudy)
}

impl Runner {
    pub fn new(cfg: ExperimentConfig, cache: Cache) -> Result<Self, CliError> {
        let first = invalid_as_usage(build_weight(&cfg.weight), "[weight]")?;
        let mut weights = vec![first];
        if cfg.model == Model::Product {
            let spec = cfg.weight2.clone().unwrap_or_else(|| cfg.weight.clone());
            weights.push(invalid_as_usage(build_weight(&spec), "[weight2]")?);
        }
        let volume = invalid_as_usage(build_volume(&cfg.volume), "[volume]")?;
        let bundle = ReportBundle { config_text: emit(&cfg), ..Default::default() };
        Ok(Runner { cfg, cache, bundle, weights, volume })
    }

    fn basis(&mut self, factor: usize, p: u32) -> Result<OrthoBasis, CliError> {
        let w = &self.weights[factor];
        let space = context(SectionSpace::new(w, &self.volume, p), || format!("section space, factor {factor}, p = {p}"))?;
        let (basis, event) = self.cache.basis(&space, &GramSpec::default()).map_err(|e| match e {
            CliError::Numerical { source, .. } => {
                CliError::Numerical { context: format!("basis, factor {factor}, p = {p}"), source }
            }
            other => other,
        })?;
        let label = match event {
            CacheEvent::Hit => "hit",
            CacheEvent::Miss => "miss",
            CacheEvent::Repaired => "repaired",
            CacheEvent::Disabled => "disabled",
        };
        self.bundle.cache_events.push((format!("factor{factor}.p{p}"), label.into()));
        Ok(basis)
    }

    fn bases(&mut self, factor: usize) -> Result<Vec<OrthoBasis>, CliError> {
        let ps = self.cfg.p_list.clone();
        ps.into_iter().map(|p| self.basis(factor, p)).collect()
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.bundle.checks.push(Check::new(name, passed, detail));
    }

    /// Runs the configured experiment kind (all applicable kinds for `report-all`).
    pub fn run(mut self) -> Result<ReportBundle, CliError> {
        let kinds: Vec<Kind> = match (self.cfg.kind, self.cfg.model) {
            (Kind::ReportAll, Model::Sphere) => {
                vec![Kind::Dim, Kind::Bergman, Kind::FsCurrent, Kind::Zeros, Kind::Expectation]
            }
            (Kind::ReportAll, Model::Product) => vec![Kind::Dim, Kind::Expectation, Kind::Ma2],
            (k, _) => vec![k],
        };
        for kind in kinds {
            let start = Instant::now();
            match (kind, self.cfg.model) {
                (Kind::Dim, _) => self.dim()?,
                (Kind::Bergman, Model::Sphere) => self.bergman()?,
                (Kind::FsCurrent, Model::Sphere) => self.fscurrent()?,
                (Kind::Zeros, Model::Sphere) => self.zeros()?,
                (Kind::Expectation, Model::Sphere) => self.expectation()?,
                (Kind::Expectation, Model::Product) => self.pair_expectation()?,
                (Kind::Ma2, model) => self.ma2(model == Model::Product)?,
                (k, m) => {
                    return Err(CliError::Usage(format!("experiment `{}` is not available on the {} model", k.name(), m.name())))
                }
            }
            self.bundle.timings.push((kind.name().into(), start.elapsed().as_secs_f64()));
        }
        Ok(self.bundle)
    }

    fn dim(&mut self) -> Result<(), CliError> {
        let mut t = Table::new("dim", &["factor", "p", "d_p", "point", "nu", "k_min"]);
        let mut consistent = true;
        for factor in 0..self.weights.len() {
            let w = self.weights[factor].clone();
            for &p in &self.cfg.p_list.clone() {
                let space = context(SectionSpace::new(&w, &self.volume, p), || format!("section space, p = {p}"))?;
                let forced: u32 = space.base_degree() + space.infinity_order;
                consistent &= space.dim() as i64 == (p as i64 + 1 - forced as i64).max(0);
                let mut points: Vec<SpherePoint> = w.atoms.iter().map(|a| a.point).collect();
                if points.is_empty() {
                    t.push(vec![factor.to_string(), p.to_string(), space.dim().to_string(), "-".into(), num(0.0), "0".into()]);
                }
                points.dedup();
                for pt in points {
                    t.push(vec![
                        factor.to_string(),
                        p.to_string(),
                        space.dim().to_string(),
                        format_point(pt),
                        num(w.lelong(pt)),
                        space.vanishing_order(pt).to_string(),
                    ]);
                }
            }
        }
        self.bundle.tables.push(t);
        self.check("dim.count", consistent, "d_p = p + 1 - forced vanishing orders".into());
        Ok(())
    }

    fn bergman(&mut self) -> Result<(), CliError> {
        let bases = self.bases(0)?;
        let r = self.cfg.region;
        let region = Region { r_min: r.r_min, r_max: r.r_max, n_r: r.n_r, n_theta: r.n_theta, standoff: r.standoff };
        let diag = context(mainhyp_diagnostic(&bases, &region), || "Bergman diagnostic".into())?;
        let mut t = Table::new(
            "bergman",
            &[
                "p",
                "d_p",
                "sup_abs_log_Pp_over_p",
                "min_log_Pp_over_p",
                "grid_points",
                "normalization_rel_error",
                "orthonormality_defect",
                "max_section_norm_error",
                "verdict",
            ],
        );
        let (mut norm_ok, mut ortho_ok, mut sec_ok) = (true, true, true);
        let mut worst = (0.0f64, 0.0f64, 0.0f64);
        for (basis, row) in bases.iter().zip(&diag.rows) {
            let n = normalization_check(basis);
            let rel = (n.value - n.expected).abs() / n.expected;
            let ortho = basis.orthonormality_defect().unwrap_or(f64::NAN);
            let sec = section_norms(basis).iter().map(|c| (c.value - 1.0).abs()).fold(0.0, f64::max);
            norm_ok &= rel <= NORMALIZATION_TOL;
            ortho_ok &= ortho <= ORTHONORMALITY_TOL;
            sec_ok &= sec <= SECTION_NORM_TOL;
            worst = (worst.0.max(rel), worst.1.max(ortho), worst.2.max(sec));
            t.push(vec![
                row.p.to_string(),
                basis.dim().to_string(),
                num(row.sup_abs_log_over_p),
                num(row.min_log_over_p),
                row.grid_points.to_string(),
                num(rel),
                num(ortho),
                num(sec),
                diag.verdict.to_string(),
            ]);
        }
        let mut v = Table::new("bergman_values", &["p", "re", "im", "P_p"]);
        for (p, z, val) in &diag.values {
            v.push(vec![p.to_string(), num(z.re), num(z.im), num(*val)]);
        }
        if is_plain_fs(&self.weights[0], &self.volume) {
            let worst_fs = diag
                .values
                .iter()
                .map(|(p, _, val)| (val / (*p as f64 + 1.0) - 1.0).abs())
                .fold(0.0, f64::max);
            self.check("bergman.fs_closed_form", worst_fs <= 1e-6, format!("max |P_p/(p+1) - 1| = {}", num(worst_fs)));
        }
        self.bundle.plots.push(Plot {
            name: "bergman".into(),
            title: format!("{}: sup |log P_p| / p", self.cfg.name),
            x_label: "p".into(),
            y_label: "sup |log P_p| / p".into(),
            series: vec![("sup".into(), diag.rows.iter().map(|r| (r.p as f64, r.sup_abs_log_over_p)).collect())],
        });
        self.bundle.tables.push(t);
        self.bundle.tables.push(v);
        self.check("bergman.decay", diag.verdict, "strictly decreasing, last <= 0.6 * first".into());
        self.check("bergman.normalization", norm_ok, format!("max relative error {}", num(worst.0)));
        self.check("bergman.orthonormality", ortho_ok, format!("max defect {}", num(worst.1)));
        self.check("bergman.section_norms", sec_ok, format!("max error {}", num(worst.2)));
        Ok(())
    }

    fn fscurrent(&mut self) -> Result<(), CliError> {
        let bases = self.bases(0)?;
        let w = self.weights[0].clone();
        let gamma = context(curvature_current(&w), || "curvature current".into())?;
        let family = TestFamily::five_bump();
        let mut t = Table::new("fscurrent", &["p", "weak_distance", "lelong_gap", "mass_defect_over_p", "pairing_rel_error"]);
        let mut dists = Vec::new();
        let (mut lelong_ok, mut mass_ok, mut pairing_ok) = (true, true, true);
        for basis in &bases {
            let p = basis.p();
            let gp = fs_current(basis);
            let scaled = gp.scaled(1.0 / p as f64);
            let d = context(weak_distance(&scaled, &gamma, &family), || format!("weak distance, p = {p}"))?;
            let gap = w
                .atoms
                .iter()
                .map(|a| lelong_gap(&scaled, a.point, a.nu))
                .fold(0.0, f64::max);
            let mass = (context(gp.total_mass(), || format!("mass, p = {p}"))? - p as f64).abs() / p as f64;
            let mut pairing = 0.0f64;
            for chi in &family.bumps {
                let r = context(pairing_identity(basis, chi), || format!("pairing identity, p = {p}"))?;
                pairing = pairing.max((r.lhs - r.rhs).abs() / r.scale.max(1.0));
            }
            lelong_ok &= gap <= 1.0 / p as f64 + 1e-12;
            mass_ok &= mass <= MASS_TOL;
            pairing_ok &= pairing <= PAIRING_TOL;
            dists.push(d);
            t.push(vec![p.to_string(), num(d), num(gap), num(mass), num(pairing)]);
        }
        let decreasing = dists.windows(2).all(|w| w[1] < w[0] || w[1] <= WEAK_FLOOR);
        self.bundle.plots.push(Plot {
            name: "fscurrent".into(),
            title: format!("{}: weak distance", self.cfg.name),
            x_label: "p".into(),
            y_label: "max |<gamma_p/p - gamma, chi>|".into(),
            series: vec![("5 bumps".into(), self.cfg.p_list.iter().zip(&dists).map(|(p, d)| (*p as f64, *d)).collect())],
        });
        self.bundle.tables.push(t);
        self.check("fscurrent.weak_decreasing", decreasing, "weak distance strictly decreasing".into());
        self.check("fscurrent.lelong_gap", lelong_ok, "|atom(gamma_p/p) - nu| <= 1/p".into());
        self.check("fscurrent.mass", mass_ok, format!("|mass - p| <= {MASS_TOL} p"));
        self.check("fscurrent.pairing", pairing_ok, format!("pairing identity within {PAIRING_TOL} relative"));
        Ok(())
    }

    fn zeros(&mut self) -> Result<(), CliError> {
        let bases = self.bases(0)?;
        let family = TestFamily::five_bump();
        let mut t = Table::new("sequence", &["seed", "p", "rms_deviation", "fitted_factor", "verdict"]);
        let mut all = true;
        let mut series = Vec::new();
        for &seed in &self.cfg.sampling.seeds.clone() {
            let rep = context(sequence_run(&bases, seed, &family), || format!("sequence, seed {seed}"))?;
            all &= rep.verdict;
            let factor = per_doubling_factor(&rep.rows);
            for row in &rep.rows {
                t.push(vec![seed.to_string(), row.p.to_string(), num(row.rms), num(factor), rep.verdict.to_string()]);
            }
            series.push((format!("seed {seed}"), rep.rows.iter().map(|r| (r.p as f64, r.rms)).collect()));
        }
        self.bundle.tables.push(t);
        self.bundle.plots.push(Plot {
            name: "sequence".into(),
            title: format!("{}: one random section per degree", self.cfg.name),
            x_label: "p".into(),
            y_label: "RMS deviation".into(),
            series,
        });
        self.check("zeros.sequences", all, "fitted RMS factor per doubling <= 0.7 for every seed".into());
        let atoms: Vec<SpherePoint> = self.weights[0].atoms.iter().map(|a| a.point).collect();
        if atoms.is_empty() {
            return Ok(());
        }
        let sampler = SphereSampler::new(self.cfg.sampling.seeds[0]);
        let n = self.cfg.sampling.samples;
        let mut v = Table::new("vanishing", &["p", "point", "k_min", "min_multiplicity", "samples", "degenerate"]);
        let mut exact = true;
        for basis in &bases {
            let p = basis.p();
            let mut mins = vec![u32::MAX; atoms.len()];
            let mut degenerate = 0;
            for i in 0..n {
                let a = sampler.sample(EXPERIMENT_VANISHING, ((p as u64) << 32) | i as u64, basis.dim());
                match zeros(basis, &a) {
                    Ok(z) => {
                        for (k, pt) in atoms.iter().enumerate() {
                            let m: u32 = z.points.iter().filter(|(q, _)| q.chordal(*pt) < 1e-9).map(|(_, m)| m).sum();
                            mins[k] = mins[k].min(m);
                        }
                    }
                    Err(LabError::NumericallyDegenerate(_)) => degenerate += 1,
                    Err(e) => return Err(CliError::Numerical { context: format!("zeros, p = {p}"), source: e }),
                }
            }
            for (k, pt) in atoms.iter().enumerate() {
                let kmin = basis.space.vanishing_order(*pt);
                exact &= mins[k] == kmin;
                v.push(vec![
                    p.to_string(),
                    format_point(*pt),
                    kmin.to_string(),
                    mins[k].to_string(),
                    n.to_string(),
                    degenerate.to_string(),
                ]);
            }
        }
        self.bundle.tables.push(v);
        self.check("zeros.vanishing_order", exact, "minimal multiplicity at each atom equals k_min".into());
        Ok(())
    }

    fn expectation(&mut self) -> Result<(), CliError> {
        let bases = self.bases(0)?;
        let family = TestFamily::five_bump();
        let sampler = SphereSampler::new(self.cfg.sampling.seeds[0]);
        let mut t = Table::new("expectation", &["p", "bump", "mean", "stderr", "reference", "z_score"]);
        let mut ok = true;
        let mut degenerate = 0;
        for basis in &bases {
            let p = basis.p();
            let rep = context(expectation_estimate(basis, self.cfg.sampling.samples, &family, &sampler), || {
                format!("expectation, p = {p}")
            })?;
            degenerate += rep.degenerate;
            for (k, e) in rep.estimates.iter().enumerate() {
                ok &= e.z_score() <= Z_LIMIT;
                t.push(vec![p.to_string(), k.to_string(), num(e.mean), num(e.stderr), num(e.reference), num(e.z_score())]);
            }
        }
        self.bundle.tables.push(t);
        self.check("expectation.within_3_sigma", ok, format!("{degenerate} degenerate samples skipped"));
        let n = self.cfg.sampling.cd_samples;
        if n > 0 {
            let mut c = Table::new("cd_constant", &["d", "mean", "stderr", "reference", "z_score"]);
            let mut ok = true;
            for d in [2usize, 3, 5, 8] {
                let e = context(cd_constant(d, n, &sampler), || format!("dimensional constant, d = {d}"))?;
                ok &= e.z_score() <= Z_LIMIT;
                c.push(vec![d.to_string(), num(e.mean), num(e.stderr), num(e.reference), num(e.z_score())]);
            }
            self.bundle.tables.push(c);
            self.check("expectation.cd_constant", ok, "E log|<a,u>| within 3 sigma of -H_(d-1)/2".into());
        }
        Ok(())
    }

    fn product_bases(&mut self) -> Result<Vec<ProductBasis>, CliError> {
        let first = self.bases(0)?;
        let second = self.bases(1)?;
        first
            .into_iter()
            .zip(second)
            .map(|(a, b)| context(ProductBasis::new(a, b), || "product basis".into()))
            .collect()
    }

    fn grid(&self) -> Grid {
        Grid::square(self.cfg.grid.0, self.cfg.grid.1)
    }

    fn pair_expectation(&mut self) -> Result<(), CliError> {
        let bases = self.product_bases()?;
        let regions = pair_regions();
        let sampler = SphereSampler::new(self.cfg.sampling.seeds[0]);
        let n = self.cfg.sampling.samples;
        let grid = self.grid();
        let mut t = Table::new(
            "pair_expectation",
            &["p", "region", "mean", "stderr", "reference", "z_score", "toric_mass_over_2"],
        );
        let mut b = Table::new("bezout", &["p", "pairs", "bezout_number", "exact_count", "degenerate", "positive_dimensional"]);
        let (mut within, mut bezout_ok) = (true, true);
        for basis in &bases {
            let p = basis.p();
            let rep = context(pair_expectation(basis, &regions, n, &sampler), || format!("pair expectation, p = {p}"))?;
            let toric = context(toric_fs_square(&basis.first, &basis.second, &regions, grid), || {
                format!("toric masses, p = {p}")
            })?;
            for (k, e) in rep.estimates.iter().enumerate() {
                within &= e.z_score() <= Z_LIMIT;
                t.push(vec![
                    p.to_string(),
                    k.to_string(),
                    num(e.mean),
                    num(e.stderr),
                    num(e.reference),
                    num(e.z_score()),
                    num(toric.masses[k] / 2.0),
                ]);
            }
            let exact = rep.samples - rep.degenerate - rep.positive_dimensional;
            bezout_ok &= exact == rep.samples;
            b.push(vec![
                p.to_string(),
                rep.samples.to_string(),
                basis.expected_zeros().to_string(),
                exact.to_string(),
                rep.degenerate.to_string(),
                rep.positive_dimensional.to_string(),
            ]);
        }
        self.bundle.tables.push(t);
        self.bundle.tables.push(b);
        self.check("expectation.pairs_within_3_sigma", within, "region counts / Bezout number vs closed form".into());
        self.check("expectation.bezout", bezout_ok, "every pair has exactly the Bezout number of common zeros".into());
        Ok(())
    }

    fn ma2(&mut self, product: bool) -> Result<(), CliError> {
        let grid = self.grid();
        let regions = MaPreset::regions();
        let mut t = Table::new("ma2", &["source", "p", "region", "mass", "limit_mass", "error"]);
        let mut series = Vec::new();
        for preset in [MaPreset::MaxCorner, MaPreset::SumCorner] {
            let rep = context(ma_convergence_harness(preset, &self.cfg.p_list, &regions, grid), || {
                format!("Monge-Ampere harness {}", preset.name())
            })?;
            for r in &rep.rows {
                t.push(vec![preset.name().into(), r.p.to_string(), r.region.to_string(), num(r.mass), num(r.limit_mass), num(r.error)]);
            }
            series.push((
                preset.name().to_string(),
                rep.rows.iter().filter(|r| r.region == 0).map(|r| (r.p as f64, r.error)).collect(),
            ));
            self.check(&format!("ma2.{}", preset.name()), rep.verdict, format!("max tiling defect {}", num(rep.max_tiling_defect)));
        }
        if product {
            let bases = self.product_bases()?;
            let pairs: Vec<(OrthoBasis, OrthoBasis)> = bases.iter().map(|b| (b.first.clone(), b.second.clone())).collect();
            let sweep = context(toric_sweep(&pairs, &regions, grid), || "toric sweep".into())?;
            let whole = Box2::new(-grid.s_max.abs(), grid.s_max.abs(), -grid.t_max.abs(), grid.t_max.abs());
            let mut totals = Table::new("toric_total", &["p", "interior_mass", "boundary_correction", "total", "tiling_defect"]);
            let mut total_ok = true;
            for (k, (a, b)) in pairs.iter().enumerate() {
                let r = context(toric_fs_square(a, b, &[whole], grid), || "toric total".into())?;
                let total = r.masses[0] + r.boundary_correction;
                total_ok &= (total - 2.0).abs() <= TOTAL_MASS_TOL * 2.0;
                totals.push(vec![self.cfg.p_list[k].to_string(), num(r.masses[0]), num(r.boundary_correction), num(total), num(r.tiling_defect)]);
            }
            for (k, rep) in sweep.reports.iter().enumerate() {
                for (j, m) in rep.masses.iter().enumerate() {
                    t.push(vec!["toric".into(), rep.p.to_string(), j.to_string(), num(*m), num(sweep.limit[j]), num(sweep.errors[j][k])]);
                }
            }
            series.push((
                "toric".into(),
                sweep.reports.iter().zip(&sweep.errors[0]).map(|(r, e)| (r.p as f64, *e)).collect(),
            ));
            self.bundle.tables.push(totals);
            self.check("ma2.toric_trend", sweep.verdict, "region masses approach the limit".into());
            self.check("ma2.toric_total", total_ok, "total mass 2 within 2%".into());
        }
        self.bundle.tables.push(t);
        self.bundle.plots.push(Plot {
            name: "ma2".into(),
            title: format!("{}: Monge-Ampere error on the corner box", self.cfg.name),
            x_label: "p".into(),
            y_label: "|mass - limit|".into(),
            series,
        });
        Ok(())
    }
}
