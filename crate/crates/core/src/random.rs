//! Gaussian random sections, their zero sets and the statistics built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::currents::{curvature_current, fs_current, Bump, TestFamily};
use crate::error::{LabError, Result};
use crate::geom::{Complex64, SpherePoint};
use crate::l2::OrthoBasis;
use crate::poly::{backward_error, cluster, sphere_roots, CLUSTER_TOL};

/// Largest admissible relative backward error of a computed root.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Standard complex Gaussian vector normalised to the unit sphere.
pub fn gaussian_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..d)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|z| z / n).collect();
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeded source of independent streams: sample `index` of experiment
/// `experiment` always sees the same random numbers, whatever the order of
/// evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphereSampler {
    pub seed: u64,
}

impl SphereSampler {
    pub fn new(seed: u64) -> Self {
        SphereSampler { seed }
    }

    pub fn rng(&self, experiment: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ splitmix(experiment)));
        rng.set_stream(index);
        rng
    }

    /// Uniform point of the unit sphere in `C^d`.
    pub fn sample(&self, experiment: u64, index: u64, d: usize) -> Vec<Complex64> {
        gaussian_unit_vector(&mut self.rng(experiment, index), d)
    }
}

/// Zeros on the sphere with multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSet {
    pub points: Vec<(SpherePoint, u32)>,
    pub max_residual: f64,
}

impl ZeroSet {
    pub fn total(&self) -> u32 {
        self.points.iter().map(|(_, m)| m).sum()
    }

    /// `(1/p) sum mult * chi(z)`.
    pub fn pair(&self, chi: &Bump, p: u32) -> f64 {
        self.points
            .iter()
            .filter_map(|(z, m)| z.finite().map(|z| *m as f64 * chi.eval(z)))
            .sum::<f64>()
            / p as f64
    }
}

/// Zeros of `sum a_i sigma_i`: base points exactly, the reduced polynomial by
/// companion eigenvalues, collapsed leading coefficients at infinity.
pub fn zeros(basis: &OrthoBasis, a: &[Complex64]) -> Result<ZeroSet> {
    if a.len() != basis.dim() {
        return Err(LabError::InvalidInput("coefficient vector has the wrong length".into()));
    }
    let c = basis.reduced_polynomial(a);
    let (roots, collapsed) = sphere_roots(&c)?;
    let mut max_residual = 0.0f64;
    for z in &roots {
        max_residual = max_residual.max(backward_error(&c, *z));
    }
    if max_residual > RESIDUAL_TOL {
        return Err(LabError::NumericallyDegenerate(format!("root residual {max_residual:e}")));
    }
    let mut pts: Vec<SpherePoint> = Vec::new();
    for (b, m) in &basis.space.base {
        for _ in 0..*m {
            pts.push(SpherePoint::Finite(*b));
        }
    }
    pts.extend(roots.into_iter().map(SpherePoint::Finite));
    for _ in 0..(basis.space.infinity_order + collapsed) {
        pts.push(SpherePoint::Infinity);
    }
    let points = cluster(&pts, CLUSTER_TOL);
    let z = ZeroSet { points, max_residual };
    if z.total() != basis.p() {
        return Err(LabError::NumericallyDegenerate(format!(
            "found {} zeros for degree {}",
            z.total(),
            basis.p()
        )));
    }
    Ok(z)
}

/// Mean, standard error and reference value for one test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub reference: f64,
}

impl Estimate {
    /// `|mean - reference| / stderr`.
    pub fn z_score(&self) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == self.reference {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - self.reference).abs() / self.stderr
        }
    }
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of `E[(1/p) [Z_s]]` against `gamma_p / p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationReport {
    pub estimates: Vec<Estimate>,
    pub samples: usize,
    pub degenerate: usize,
}

pub const EXPERIMENT_EXPECTATION: u64 = 1;
pub const EXPERIMENT_SEQUENCE: u64 = 2;
pub const EXPERIMENT_CD: u64 = 3;
pub const EXPERIMENT_PAIRS: u64 = 4;
pub const EXPERIMENT_VANISHING: u64 = 5;

pub fn expectation_estimate(basis: &OrthoBasis, n: usize, family: &TestFamily, sampler: &SphereSampler) -> Result<ExpectationReport> {
    let p = basis.p();
    let reference = fs_current(basis).scaled(1.0 / p as f64);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(n); family.bumps.len()];
    let mut degenerate = 0;
    for i in 0..n {
        let a = sampler.sample(EXPERIMENT_EXPECTATION, i as u64, basis.dim());
        match zeros(basis, &a) {
            Ok(z) => {
                for (k, chi) in family.bumps.iter().enumerate() {
                    values[k].push(z.pair(chi, p));
                }
            }
            Err(LabError::NumericallyDegenerate(_)) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    let mut estimates = Vec::new();
    for (k, chi) in family.bumps.iter().enumerate() {
        let (mean, stderr) = mean_stderr(&values[k]);
        estimates.push(Estimate { mean, stderr, reference: reference.pair(chi)? });
    }
    Ok(ExpectationReport { estimates, samples: n, degenerate })
}

/// `E log |<a, u>|` for `a` uniform on the unit sphere of `C^d` and a fixed
/// unit vector `u`; the reference is `-(1/2) H_{d-1}`.
pub fn cd_constant(d: usize, n: usize, sampler: &SphereSampler) -> Result<Estimate> {
    if d < 2 || n < 2 {
        return Err(LabError::InvalidInput("need d >= 2 and at least two samples".into()));
    }
    let mut rng = sampler.rng(EXPERIMENT_CD, d as u64);
    let xs: Vec<f64> = (0..n).map(|_| gaussian_unit_vector(&mut rng, d)[0].norm().ln()).collect();
    let (mean, stderr) = mean_stderr(&xs);
    let harmonic: f64 = (1..d).map(|k| 1.0 / k as f64).sum();
    Ok(Estimate { mean, stderr, reference: -0.5 * harmonic })
}

/// Deviations of one random sequence `s_p` from the limit current.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRow {
    pub p: u32,
    pub deviations: Vec<f64>,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub seed: u64,
    pub rows: Vec<SequenceRow>,
    pub verdict: bool,
}

/// Per-doubling factor required of the RMS deviation along a sequence.
pub const SEQUENCE_DECAY: f64 = 0.7;

/// Draws one section per degree and measures `|<(1/p)[Z_{s_p}], chi> - <gamma, chi>|`.
/// The verdict fits `ln rms` against `log2 p` by least squares and asks the
/// fitted per-doubling factor to be at most `SEQUENCE_DECAY`.
pub fn sequence_run(bases: &[OrthoBasis], seed: u64, family: &TestFamily) -> Result<SequenceReport> {
    let first = bases.first().ok_or_else(|| LabError::InvalidInput("empty degree sweep".into()))?;
    let gamma = curvature_current(&first.space.weight)?;
    let refs: Vec<f64> = family.bumps.iter().map(|b| gamma.pair(b)).collect::<Result<_>>()?;
    let sampler = SphereSampler::new(seed);
    let mut rows = Vec::new();
    for basis in bases {
        let p = basis.p();
        let mut attempt = 0u64;
        let z = loop {
            let a = sampler.sample(EXPERIMENT_SEQUENCE, ((p as u64) << 16) | attempt, basis.dim());
            match zeros(basis, &a) {
                Ok(z) => break z,
                Err(LabError::NumericallyDegenerate(_)) if attempt < 8 => attempt += 1,
                Err(e) => return Err(e),
            }
        };
        let deviations: Vec<f64> = family
            .bumps
            .iter()
            .zip(&refs)
            .map(|(chi, r)| (z.pair(chi, p) - r).abs())
            .collect();
        let rms = (deviations.iter().map(|d| d * d).sum::<f64>() / deviations.len() as f64).sqrt();
        rows.push(SequenceRow { p, deviations, rms });
    }
    let verdict = rows.len() >= 2 && per_doubling_factor(&rows) <= SEQUENCE_DECAY;
    Ok(SequenceReport { seed, rows, verdict })
}

/// Least-squares slope of `ln rms` against `log2 p`, exponentiated.
pub fn per_doubling_factor(rows: &[SequenceRow]) -> f64 {
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| (r.p as f64).log2()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.rms.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxy / sxx).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{SingularWeight, VolumeDensity};

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = SphereSampler::new(7);
        assert_eq!(s.sample(1, 5, 4), s.sample(1, 5, 4));
        assert_ne!(s.sample(1, 5, 4), s.sample(1, 6, 4));
        assert_ne!(s.sample(1, 5, 4), s.sample(2, 5, 4));
        let v = s.sample(1, 0, 6);
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fs_quadratic_example() {
        let basis = OrthoBasis::build(&SingularWeight::fubini_study(), &VolumeDensity::FubiniStudy, 2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = [Complex64::new(-s, 0.0), Complex64::new(0.0, 0.0), Complex64::new(s, 0.0)];
        let z = zeros(&basis, &a).unwrap();
        assert_eq!(z.total(), 2);
        let mut re: Vec<f64> = z.points.iter().map(|(p, _)| p.finite().unwrap().re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 1.0).abs() < 1e-12 && (re[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zeros_include_base_points() {
        let w = SingularWeight::with_single_atom(SpherePoint::origin(), 0.5).unwrap();
        let basis = OrthoBasis::build(&w, &VolumeDensity::FubiniStudy, 6).unwrap();
        let a = SphereSampler::new(1).sample(0, 0, basis.dim());
        let z = zeros(&basis, &a).unwrap();
        assert_eq!(z.total(), 6);
        let at_origin: u32 = z.points.iter().filter(|(p, _)| p.is_origin()).map(|(_, m)| m).sum();
        assert!(at_origin >= 3);
    }

    #[test]
    fn collapsed_leading_coefficient() {
        let basis = OrthoBasis::build(&SingularWeight::fubini_study(), &VolumeDensity::FubiniStudy, 3).unwrap();
        let a = [Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        let z = zeros(&basis, &a).unwrap();
        let inf: u32 = z.points.iter().filter(|(p, _)| *p == SpherePoint::Infinity).map(|(_, m)| m).sum();
        assert_eq!(inf, 2);
    }

    #[test]
    fn cd_constant_small_dimension() {
        let e = cd_constant(3, 20000, &SphereSampler::new(11)).unwrap();
        assert!((e.reference + 0.75).abs() < 1e-15);
        assert!(e.z_score() < 4.0, "{e:?}");
    }
}
