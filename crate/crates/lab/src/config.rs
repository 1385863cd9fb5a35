//! Sectioned `key = value` experiment configuration: parsing, validation and
//! a normalized emitter with `parse(emit(c)) == c`.

use std::fmt::Write as _;

use equilab::geom::{Complex64, SpherePoint};
use equilab::l2::MAX_DEGREE;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: key `{key}`: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, key: &str, message: impl Into<String>) -> Self {
        ConfigError { line, key: key.to_string(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Dim,
    Bergman,
    FsCurrent,
    Zeros,
    Expectation,
    Ma2,
    ReportAll,
}

impl Kind {
    pub const ALL: [Kind; 7] =
        [Kind::Dim, Kind::Bergman, Kind::FsCurrent, Kind::Zeros, Kind::Expectation, Kind::Ma2, Kind::ReportAll];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Dim => "dim",
            Kind::Bergman => "bergman",
            Kind::FsCurrent => "fscurrent",
            Kind::Zeros => "zeros",
            Kind::Expectation => "expectation",
            Kind::Ma2 => "ma2",
            Kind::ReportAll => "report-all",
        }
    }

    fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Sphere,
    Product,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Sphere => "sphere",
            Model::Product => "product",
        }
    }
}

/// Weight on one sphere factor.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub fs_scale: f64,
    pub atoms: Vec<(SpherePoint, f64)>,
    pub epsilon: f64,
    pub punctures: Vec<SpherePoint>,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec { fs_scale: 1.0, atoms: Vec::new(), epsilon: 0.0, punctures: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeSpec {
    FubiniStudy,
    Poincare { punctures: Vec<SpherePoint>, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub standoff: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec { r_min: 0.5, r_max: 2.0, n_r: 10, n_theta: 10, standoff: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub seeds: Vec<u64>,
    pub samples: usize,
    /// Draws for the dimensional-constant estimate; zero skips it.
    pub cd_samples: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec { seeds: vec![1], samples: 200, cd_samples: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: Kind,
    pub model: Model,
    pub p_list: Vec<u32>,
    pub weight: WeightSpec,
    pub weight2: Option<WeightSpec>,
    pub volume: VolumeSpec,
    pub region: RegionSpec,
    /// Half-width and node count of the square grid in logarithmic coordinates.
    pub grid: (f64, usize),
    pub sampling: SamplingSpec,
    pub svg: bool,
}

impl ExperimentConfig {
    pub fn new(name: &str, kind: Kind) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            kind,
            model: Model::Sphere,
            p_list: vec![4, 8, 16],
            weight: WeightSpec::default(),
            weight2: None,
            volume: VolumeSpec::FubiniStudy,
            region: RegionSpec::default(),
            grid: (4.0, 81),
            sampling: SamplingSpec::default(),
            svg: false,
        }
    }
}

pub fn format_point(p: SpherePoint) -> String {
    match p {
        SpherePoint::Infinity => "inf".into(),
        SpherePoint::Finite(z) if z.im == 0.0 => format!("{}", z.re),
        SpherePoint::Finite(z) => format!("{}{}{}i", z.re, if z.im < 0.0 { "-" } else { "+" }, z.im.abs()),
    }
}

/// Parses `inf`, `x`, `x+yi`, `x-yi` or `yi`.
pub fn parse_point(s: &str) -> Option<SpherePoint> {
    let s = s.trim();
    if s == "inf" {
        return Some(SpherePoint::Infinity);
    }
    if let Some(body) = s.strip_suffix('i') {
        // split at the last sign that is not an exponent sign or the leading one
        let bytes = body.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
                split = Some(k);
                break;
            }
        }
        let (re, im) = match split {
            Some(k) => (body[..k].parse::<f64>().ok()?, body[k..].parse::<f64>().ok()?),
            None => (0.0, body.parse::<f64>().ok()?),
        };
        return finite(Complex64::new(re, im));
    }
    finite(Complex64::new(s.parse::<f64>().ok()?, 0.0))
}

fn finite(z: Complex64) -> Option<SpherePoint> {
    (z.re.is_finite() && z.im.is_finite()).then_some(SpherePoint::Finite(z))
}

fn list<T, F: Fn(&str) -> Option<T>>(v: &str, f: F) -> Option<Vec<T>> {
    if v.trim().is_empty() {
        return Some(Vec::new());
    }
    v.split(',').map(|x| f(x.trim())).collect()
}

fn num(v: &str) -> Option<f64> {
    v.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

fn join<T, F: Fn(&T) -> String>(xs: &[T], f: F) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(", ")
}

const SECTIONS: [&str; 8] = ["experiment", "weight", "weight2", "volume", "region", "grid", "sampling", "output"];

/// Parses a configuration; every key must belong to its section.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::new("", Kind::Dim);
    let mut section = String::new();
    let mut seen_name = false;
    let mut seen_kind = false;
    let mut volume_kind: Option<(usize, String)> = None;
    let mut volume_punctures = Vec::new();
    let mut volume_delta = equilab::geom::VolumeDensity::DEFAULT_POINCARE_DELTA;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::new(line, name, "unknown section"));
            }
            if name == "weight2" {
                cfg.weight2.get_or_insert_with(WeightSpec::default);
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::new(line, content, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| ConfigError::new(line, key, format!("invalid {what} `{value}`"));
        let full = format!("{section}.{key}");
        match full.as_str() {
            "experiment.name" => {
                if value.is_empty() || value.contains(char::is_whitespace) {
                    return Err(bad("name"));
                }
                cfg.name = value.to_string();
                seen_name = true;
            }
            "experiment.kind" => {
                cfg.kind = Kind::parse(value).ok_or_else(|| bad("kind"))?;
                seen_kind = true;
            }
            "experiment.model" => {
                cfg.model = match value {
                    "sphere" => Model::Sphere,
                    "product" => Model::Product,
                    _ => return Err(bad("model")),
                }
            }
            "experiment.p_list" => {
                cfg.p_list = list(value, |x| x.parse::<u32>().ok()).ok_or_else(|| bad("degree list"))?;
                if cfg.p_list.is_empty() || cfg.p_list.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ConfigError::new(line, key, "degree list must be nonempty and increasing"));
                }
                if cfg.p_list.iter().any(|&p| p > MAX_DEGREE) {
                    return Err(ConfigError::new(line, key, format!("degrees above {MAX_DEGREE} are not supported")));
                }
            }
            "weight.fs_scale" | "weight2.fs_scale" => {
                let w = weight_mut(&mut cfg, &section);
                w.fs_scale = num(value).ok_or_else(|| bad("number"))?;
            }
            "weight.epsilon" | "weight2.epsilon" => {
                let w = weight_mut(&mut cfg, &section);
                w.epsilon = num(value).ok_or_else(|| bad("number"))?;
            }
            "weight.atoms" | "weight2.atoms" => {
                let atoms = list(value, |x| {
                    let (pt, nu) = x.rsplit_once(':')?;
                    Some((parse_point(pt)?, num(nu)?))
                })
                .ok_or_else(|| bad("atom list"))?;
                weight_mut(&mut cfg, &section).atoms = atoms;
            }
            "weight.punctures" | "weight2.punctures" => {
                let p = list(value, parse_point).ok_or_else(|| bad("point list"))?;
                weight_mut(&mut cfg, &section).punctures = p;
            }
            "volume.kind" => volume_kind = Some((line, value.to_string())),
            "volume.punctures" => volume_punctures = list(value, parse_point).ok_or_else(|| bad("point list"))?,
            "volume.delta" => volume_delta = num(value).ok_or_else(|| bad("number"))?,
            "region.r_min" => cfg.region.r_min = num(value).ok_or_else(|| bad("number"))?,
            "region.r_max" => cfg.region.r_max = num(value).ok_or_else(|| bad("number"))?,
            "region.n_r" => cfg.region.n_r = value.parse().map_err(|_| bad("count"))?,
            "region.n_theta" => cfg.region.n_theta = value.parse().map_err(|_| bad("count"))?,
            "region.standoff" => cfg.region.standoff = num(value).ok_or_else(|| bad("number"))?,
            "grid.half_width" => cfg.grid.0 = num(value).ok_or_else(|| bad("number"))?,
            "grid.nodes" => {
                cfg.grid.1 = value.parse().map_err(|_| bad("count"))?;
                if cfg.grid.1 < 3 {
                    return Err(ConfigError::new(line, key, "grid needs at least 3 nodes"));
                }
            }
            "sampling.seeds" => {
                cfg.sampling.seeds = list(value, |x| x.parse::<u64>().ok()).ok_or_else(|| bad("seed list"))?;
                if cfg.sampling.seeds.is_empty() {
                    return Err(ConfigError::new(line, key, "at least one seed is required"));
                }
            }
            "sampling.samples" => {
                cfg.sampling.samples = value.parse().map_err(|_| bad("count"))?;
                if cfg.sampling.samples < 2 {
                    return Err(ConfigError::new(line, key, "at least two samples are required"));
                }
            }
            "sampling.cd_samples" => cfg.sampling.cd_samples = value.parse().map_err(|_| bad("count"))?,
            "output.svg" => {
                cfg.svg = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad("boolean")),
                }
            }
            _ if section.is_empty() => return Err(ConfigError::new(line, key, "key outside any section")),
            _ => return Err(ConfigError::new(line, key, format!("unknown key in [{section}]"))),
        }
    }
    if !seen_name {
        return Err(ConfigError::new(0, "name", "missing [experiment] name"));
    }
    if !seen_kind {
        return Err(ConfigError::new(0, "kind", "missing [experiment] kind"));
    }
    cfg.volume = match volume_kind {
        None => VolumeSpec::FubiniStudy,
        Some((_, k)) if k == "fubini-study" => VolumeSpec::FubiniStudy,
        Some((_, k)) if k == "poincare" => VolumeSpec::Poincare { punctures: volume_punctures, delta: volume_delta },
        Some((line, k)) => return Err(ConfigError::new(line, "kind", format!("unknown volume kind `{k}`"))),
    };
    Ok(cfg)
}

fn weight_mut<'a>(cfg: &'a mut ExperimentConfig, section: &str) -> &'a mut WeightSpec {
    if section == "weight2" {
        cfg.weight2.get_or_insert_with(WeightSpec::default)
    } else {
        &mut cfg.weight
    }
}

fn emit_weight(out: &mut String, header: &str, w: &WeightSpec) {
    let _ = writeln!(out, "\n[{header}]");
    let _ = writeln!(out, "fs_scale = {}", w.fs_scale);
    let _ = writeln!(out, "atoms = {}", join(&w.atoms, |(p, nu)| format!("{}:{}", format_point(*p), nu)));
    let _ = writeln!(out, "epsilon = {}", w.epsilon);
    let _ = writeln!(out, "punctures = {}", join(&w.punctures, |p| format_point(*p)));
}

/// Normalized text form: every key written, fixed order.
pub fn emit(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[experiment]");
    let _ = writeln!(out, "name = {}", cfg.name);
    let _ = writeln!(out, "kind = {}", cfg.kind.name());
    let _ = writeln!(out, "model = {}", cfg.model.name());
    let _ = writeln!(out, "p_list = {}", join(&cfg.p_list, |p| p.to_string()));
    emit_weight(&mut out, "weight", &cfg.weight);
    if let Some(w) = &cfg.weight2 {
        emit_weight(&mut out, "weight2", w);
    }
    let _ = writeln!(out, "\n[volume]");
    match &cfg.volume {
        VolumeSpec::FubiniStudy => {
            let _ = writeln!(out, "kind = fubini-study");
        }
        VolumeSpec::Poincare { punctures, delta } => {
            let _ = writeln!(out, "kind = poincare");
            let _ = writeln!(out, "punctures = {}", join(punctures, |p| format_point(*p)));
            let _ = writeln!(out, "delta = {delta}");
        }
    }
    let r = &cfg.region;
    let _ = writeln!(out, "\n[region]");
    let _ = writeln!(out, "r_min = {}\nr_max = {}\nn_r = {}\nn_theta = {}\nstandoff = {}", r.r_min, r.r_max, r.n_r, r.n_theta, r.standoff);
    let _ = writeln!(out, "\n[grid]\nhalf_width = {}\nnodes = {}", cfg.grid.0, cfg.grid.1);
    let _ = writeln!(out, "\n[sampling]");
    let _ = writeln!(out, "seeds = {}", join(&cfg.sampling.seeds, |s| s.to_string()));
    let _ = writeln!(out, "samples = {}", cfg.sampling.samples);
    let _ = writeln!(out, "cd_samples = {}", cfg.sampling.cd_samples);
    let _ = writeln!(out, "\n[output]\nsvg = {}", cfg.svg);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip() {
        for s in ["inf", "0", "0.5", "-1.25", "0.5+2i", "0.5-2i", "1e-3-2e-3i"] {
            let p = parse_point(s).unwrap();
            assert_eq!(parse_point(&format_point(p)), Some(p), "{s}");
        }
        assert_eq!(parse_point("3i"), Some(SpherePoint::Finite(Complex64::new(0.0, 3.0))));
        assert_eq!(parse_point("x"), None);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse("[experiment]\nname = a\nkind = dim\nbogus = 1\n").unwrap_err();
        assert_eq!(err.key, "bogus");
        assert_eq!(err.line, 4);
    }

    #[test]
    fn emit_parse_identity() {
        let mut c = ExperimentConfig::new("demo", Kind::Bergman);
        c.weight.atoms = vec![(SpherePoint::origin(), 0.5)];
        c.volume = VolumeSpec::Poincare { punctures: vec![SpherePoint::Infinity], delta: 0.25 };
        c.weight2 = Some(WeightSpec::default());
        assert_eq!(parse(&emit(&c)).unwrap(), c);
    }
}
