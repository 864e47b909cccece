//! Config-file schema and input parsing.
//!
//! A config file is a single JSON object in which every field is optional;
//! command-line flags override file values field by field. The resolved
//! ("effective") configuration is embedded verbatim in each report together
//! with its SHA-256 hash, so a report always names the inputs that produced
//! it.

use crate::Failure;
use num_complex::Complex64;
use polyberg::experiments::NormBudget;
use polyberg::geometry::Polygon;
use polyberg::polygons;
use polyberg::toeplitz::ConditionSampling;
use polyberg::QuadratureSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// On-disk configuration. Fields apply only to the subcommands that use
/// them; unknown fields are rejected to catch typos.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub polygon: Option<PolygonSource>,
    pub p: Option<f64>,
    pub alpha_max: Option<f64>,
    pub symbol: Option<serde_json::Value>,
    pub f: Option<serde_json::Value>,
    pub quadrature: Option<QuadratureSpec>,
    pub budget: Option<NormBudget>,
    pub sampling: Option<ConditionSampling>,
    pub max_level: Option<u32>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub depth: Option<u32>,
    pub margin: Option<f64>,
    pub t: Option<f64>,
    pub radius: Option<f64>,
    pub witness: Option<bool>,
    pub z: Option<[f64; 2]>,
    pub w: Option<[f64; 2]>,
    pub grid: Option<usize>,
    pub samples: Option<usize>,
    pub weighted_t: Option<f64>,
    pub vertex: Option<usize>,
    pub output: Option<OutputSpec>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Failure::config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Failure::config(format!("config {}: {e}", p.display())))
            }
        }
    }
}

/// Where a polygon comes from: a registry name, inline vertices, or a file
/// containing `{"vertices": [[x, y], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolygonSource {
    Named(String),
    Inline { vertices: Vec<[f64; 2]> },
    File { path: PathBuf },
}

/// Parses the --polygon flag: inline JSON when it looks like an object,
/// otherwise a registry name.
pub fn parse_polygon_flag(s: &str) -> Result<PolygonSource, Failure> {
    if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| Failure::config(format!("polygon descriptor: {e}")))
    } else {
        Ok(PolygonSource::Named(s.to_string()))
    }
}

fn named_polygon(name: &str) -> Result<Polygon, Failure> {
    match name {
        "unit-square" => Ok(polygons::unit_square()),
        "triangle" => Ok(polygons::equilateral_triangle()),
        "l-hexagon" => Ok(polygons::l_hexagon()),
        _ => {
            if let Some(rest) = name.strip_prefix("regular-") {
                let n: usize = rest.parse().map_err(|_| {
                    Failure::config(format!("polygon '{name}': expected regular-<n>"))
                })?;
                return Ok(polygons::regular_ngon(n)?);
            }
            if let Some(rest) = name.strip_prefix("spiked-pentagon-") {
                let alpha: f64 = rest.parse().map_err(|_| {
                    Failure::config(format!("polygon '{name}': expected spiked-pentagon-<alpha>"))
                })?;
                return Ok(polygons::spiked_pentagon(alpha)?);
            }
            if let Some(rest) = name.strip_prefix("random-7gon-") {
                let seed: u64 = rest.parse().map_err(|_| {
                    Failure::config(format!("polygon '{name}': expected random-7gon-<seed>"))
                })?;
                return Ok(polygons::random_simple_7gon(seed));
            }
            Err(Failure::config(format!(
                "unknown polygon name '{name}' (expected unit-square, triangle, l-hexagon, \
                 regular-<n>, spiked-pentagon-<alpha>, or random-7gon-<seed>)"
            )))
        }
    }
}

/// Resolves a polygon source to a polygon plus the canonical descriptor
/// embedded in reports: the name when one was given, and always the full
/// vertex list.
pub fn resolve_polygon(source: &PolygonSource) -> Result<(Polygon, serde_json::Value), Failure> {
    let (polygon, name) = match source {
        PolygonSource::Named(name) => (named_polygon(name)?, Some(name.clone())),
        PolygonSource::Inline { vertices } => {
            let points = vertices
                .iter()
                .map(|&[x, y]| Complex64::new(x, y))
                .collect();
            (Polygon::new(points)?, None)
        }
        PolygonSource::File { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::config(format!("cannot read polygon {}: {e}", path.display()))
            })?;
            (Polygon::from_json(&text)?, None)
        }
    };
    let vertices: Vec<[f64; 2]> = polygon.vertices().iter().map(|v| [v.re, v.im]).collect();
    let descriptor = match name {
        Some(name) => serde_json::json!({ "name": name, "vertices": vertices }),
        None => serde_json::json!({ "vertices": vertices }),
    };
    Ok((polygon, descriptor))
}

/// Picks the polygon from flag or config and resolves it.
pub fn require_polygon(
    flag: &Option<String>,
    cfg: &RunConfig,
) -> Result<(Polygon, serde_json::Value), Failure> {
    let source = match flag {
        Some(s) => parse_polygon_flag(s)?,
        None => cfg
            .polygon
            .clone()
            .ok_or_else(|| Failure::config("a polygon is required (--polygon or config)"))?,
    };
    resolve_polygon(&source)
}

/// Parses "x,y" into a point.
pub fn parse_point(s: &str) -> Result<Complex64, Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Failure::config(format!(
            "point '{s}': expected two comma-separated coordinates"
        )));
    }
    let x: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| Failure::config(format!("point '{s}': bad x coordinate")))?;
    let y: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| Failure::config(format!("point '{s}': bad y coordinate")))?;
    Ok(Complex64::new(x, y))
}

/// Parses "x,y;x,y;..." into a point list.
pub fn parse_point_list(s: &str) -> Result<Vec<Complex64>, Failure> {
    s.split(';')
        .filter(|part| !part.trim().is_empty())
        .map(parse_point)
        .collect()
}

/// Parses "a..b" (inclusive), "a,b,c", or "a" into an integer list.
pub fn parse_u32_list(s: &str) -> Result<Vec<u32>, Failure> {
    let bad = || Failure::config(format!("'{s}': expected <a>..<b>, <a>,<b>,..., or <a>"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|part| part.trim().parse().map_err(|_| bad()))
        .collect()
}

/// Parses "a,b,c" into a float list.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| Failure::config(format!("'{s}': expected comma-separated numbers")))
        })
        .collect()
}

/// Output destinations: flags first, then the config file.
pub fn outputs(
    json_flag: &Option<PathBuf>,
    csv_flag: &Option<PathBuf>,
    cfg: &RunConfig,
) -> (Option<PathBuf>, Option<PathBuf>) {
    let out = cfg.output.as_ref();
    let json = json_flag
        .clone()
        .or_else(|| out.and_then(|o| o.json.clone()));
    let csv = csv_flag.clone().or_else(|| out.and_then(|o| o.csv.clone()));
    (json, csv)
}
