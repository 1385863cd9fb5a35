//! CSV tables, pass/fail checks, optional SVG plots and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Fixed-precision formatting so that reruns are byte-identical.
pub fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[k].parse().ok()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.to_string(), passed, detail }
    }
}

/// Line plot with one polyline per series; axes are linear in the given values.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

impl Plot {
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (640.0, 420.0, 60.0);
        let pts = self.series.iter().flat_map(|(_, s)| s.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in pts {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
        if !(x1 > x0) {
            x1 = x0 + 1.0;
        }
        if !(y1 > y0) {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
        let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, self.title);
        let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
        let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, self.x_label);
        let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, self.y_label);
        for (v, anchor) in [(x0, "start"), (x1, "end")] {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="{anchor}">{v:.3}</text>"#, sx(v), h - m + 16.0);
        }
        for v in [y0, y1] {
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3e}</text>"#, m - 4.0, sy(v) + 4.0);
        }
        for (k, (label, data)) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let path: Vec<String> = data
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            for p in &path {
                let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            }
            let ly = m + 16.0 * k as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{label}</text>"#, w - m);
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Everything one run produces.
#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub config_text: String,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub plots: Vec<Plot>,
    pub timings: Vec<(String, f64)>,
    pub cache_events: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["check", "passed", "detail"]);
        for c in &self.checks {
            t.push(vec![c.name.clone(), c.passed.to_string(), c.detail.clone()]);
        }
        t
    }

    /// Writes the config, CSVs, optional SVGs and the manifest into `dir`.
    pub fn write(&self, dir: &Path, svg: bool) -> Result<(), CliError> {
        let io = |e: std::io::Error, p: &Path| CliError::Io(format!("{}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        let mut files: Vec<(String, String)> = Vec::new();
        let mut put = |name: String, body: &str| -> Result<(), CliError> {
            let path = dir.join(&name);
            fs::write(&path, body).map_err(|e| io(e, &path))?;
            files.push((name, hex_digest(body.as_bytes())));
            Ok(())
        };
        put("config.ini".into(), &self.config_text)?;
        for t in self.tables.iter().chain(std::iter::once(&self.checks_table())) {
            put(format!("{}.csv", t.name), &t.to_csv())?;
        }
        if svg {
            for p in &self.plots {
                put(format!("{}.svg", p.name), &p.to_svg())?;
            }
        }
        let mut m = String::new();
        let _ = writeln!(m, "config_sha256 = {}", hex_digest(self.config_text.as_bytes()));
        let _ = writeln!(m, "version = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "passed = {}", self.passed());
        for (name, digest) in &files {
            let _ = writeln!(m, "file {name} sha256 = {digest}");
        }
        for (what, event) in &self.cache_events {
            let _ = writeln!(m, "cache {what} = {event}");
        }
        for (name, secs) in &self.timings {
            let _ = writeln!(m, "wall_time_seconds {name} = {secs:.3}");
        }
        let path = dir.join("manifest.txt");
        fs::write(&path, m).map_err(|e| io(e, &path))
    }
}
