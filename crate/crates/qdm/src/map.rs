//! Choropleth SVG from GeoJSON polygons and a per-region field.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use serde_json::{json, Value};

use qdm_core::assessment::FitResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 20.0;
const LEGEND_WIDTH: f64 = 120.0;
const LOW: [u8; 3] = [0xff, 0xf7, 0xec];
const HIGH: [u8; 3] = [0x7f, 0x00, 0x00];

/// A per-region quantity taken from a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    RelativeRisk,
    RelativeRiskLower,
    RelativeRiskUpper,
    PredictedCases,
    Predictor,
    Observed,
    Smr,
    /// Posterior mean of the shared field.
    Shared,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::RelativeRisk => "relative_risk",
            Field::RelativeRiskLower => "rr_lower",
            Field::RelativeRiskUpper => "rr_upper",
            Field::PredictedCases => "predicted_cases",
            Field::Predictor => "predictor",
            Field::Observed => "observed",
            Field::Smr => "smr",
            Field::Shared => "shared",
        }
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "relative_risk" => Field::RelativeRisk,
            "rr_lower" => Field::RelativeRiskLower,
            "rr_upper" => Field::RelativeRiskUpper,
            "predicted_cases" => Field::PredictedCases,
            "predictor" => Field::Predictor,
            "observed" => Field::Observed,
            "smr" => Field::Smr,
            "shared" => Field::Shared,
            other => {
                return Err(format!(
                    "unknown field '{other}' (expected relative_risk, rr_lower, rr_upper, predicted_cases, predictor, observed, smr or shared)"
                ))
            }
        })
    }
}

/// Values by region id for disease `disease` (1-based).
pub fn field_values(r: &FitResult, field: Field, disease: usize) -> Result<BTreeMap<String, f64>> {
    let k = r.diseases.iter().position(|&d| d == disease).ok_or_else(|| anyhow!("the fit does not include disease {disease}"))?;
    let table = &r.regions[k];
    if field == Field::Shared {
        let s = r.latent_block("S");
        if s.is_empty() {
            bail!("the fit has no shared field");
        }
        return Ok(table.iter().zip(s).map(|(row, l)| (row.region.clone(), l.summary.mean)).collect());
    }
    Ok(table
        .iter()
        .map(|row| {
            let v = match field {
                Field::RelativeRisk => row.relative_risk.mean,
                Field::RelativeRiskLower => row.relative_risk.q025,
                Field::RelativeRiskUpper => row.relative_risk.q975,
                Field::PredictedCases => row.predicted_cases,
                Field::Predictor => row.predictor.mean,
                Field::Observed => row.observed as f64,
                Field::Smr => row.observed as f64 / row.expected,
                Field::Shared => unreachable!(),
            };
            (row.region.clone(), v)
        })
        .collect())
}

type Ring = Vec<[f64; 2]>;

fn feature_id(f: &Value, key: &str) -> Option<String> {
    let v = f.get("properties").and_then(|p| p.get(key)).or_else(|| f.get("id"))?;
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn ring(v: &Value) -> Result<Ring> {
    v.as_array()
        .ok_or_else(|| anyhow!("ring is not an array"))?
        .iter()
        .map(|p| match p.as_array().map(|a| a.as_slice()) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok([x, y]),
                _ => bail!("coordinate is not numeric"),
            },
            _ => bail!("position needs two coordinates"),
        })
        .collect()
}

fn rings(geometry: &Value) -> Result<Vec<Ring>> {
    let coords = geometry.get("coordinates").ok_or_else(|| anyhow!("geometry has no coordinates"))?;
    let polygon = |p: &Value| -> Result<Vec<Ring>> { p.as_array().ok_or_else(|| anyhow!("polygon is not an array"))?.iter().map(ring).collect() };
    match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => polygon(coords),
        Some("MultiPolygon") => {
            let mut out = Vec::new();
            for p in coords.as_array().ok_or_else(|| anyhow!("multipolygon is not an array"))? {
                out.extend(polygon(p)?);
            }
            Ok(out)
        }
        Some(other) => bail!("unsupported geometry type {other}"),
        None => bail!("geometry has no type"),
    }
}

fn colour(t: f64) -> String {
    let c: Vec<u8> = LOW.iter().zip(HIGH).map(|(&a, b)| (a as f64 + t * (b as f64 - a as f64)).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub struct MapOptions<'a> {
    pub title: &'a str,
    /// Property holding the region id; the feature `id` is the fallback.
    pub id_property: &'a str,
    /// Draw features without a value hatched instead of failing.
    pub allow_missing: bool,
}

/// Renders the choropleth. Every feature must match a region and every
/// region must have a feature unless `allow_missing` is set, in which case
/// unmatched features are hatched.
pub fn render_svg(geojson: &Value, values: &BTreeMap<String, f64>, opts: &MapOptions) -> Result<String> {
    let features = geojson
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| anyhow!("GeoJSON must be a FeatureCollection"))?;
    let mut shapes: Vec<(String, Vec<Ring>)> = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let id = feature_id(f, opts.id_property).ok_or_else(|| anyhow!("feature {i} has no '{}' property", opts.id_property))?;
        let geometry = f.get("geometry").ok_or_else(|| anyhow!("feature {id} has no geometry"))?;
        let r = rings(geometry).map_err(|e| anyhow!("feature {id}: {e}"))?;
        shapes.push((id, r));
    }
    let ids: BTreeSet<&str> = shapes.iter().map(|(id, _)| id.as_str()).collect();
    let unmatched: Vec<&str> = ids.iter().copied().filter(|id| !values.contains_key(*id)).collect();
    let unmapped: Vec<&str> = values.keys().map(String::as_str).filter(|id| !ids.contains(id)).collect();
    if !opts.allow_missing && (!unmatched.is_empty() || !unmapped.is_empty()) {
        let mut msg = String::from("region ids do not match");
        if !unmatched.is_empty() {
            let _ = write!(msg, "; GeoJSON ids without values: {}", unmatched.join(", "));
        }
        if !unmapped.is_empty() {
            let _ = write!(msg, "; result regions without geometry: {}", unmapped.join(", "));
        }
        bail!(msg);
    }
    if let Some((id, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        bail!("value for region {id} is not finite: {v}");
    }

    let pts = shapes.iter().flat_map(|(_, r)| r.iter().flatten());
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if !(x1 > x0) || !(y1 > y0) {
        bail!("GeoJSON has no extent to draw");
    }
    let area_w = WIDTH - 2.0 * MARGIN - LEGEND_WIDTH;
    let area_h = HEIGHT - 2.0 * MARGIN - 20.0;
    let scale = (area_w / (x1 - x0)).min(area_h / (y1 - y0));
    let project = |p: &[f64; 2]| (MARGIN + (p[0] - x0) * scale, MARGIN + 20.0 + (y1 - p[1]) * scale);

    let drawn: Vec<f64> = shapes.iter().filter_map(|(id, _)| values.get(id).copied()).collect();
    let lo = drawn.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = drawn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(svg, "<defs>");
    let _ = writeln!(svg, r##"<pattern id="missing" patternUnits="userSpaceOnUse" width="6" height="6"><rect width="6" height="6" fill="#ffffff"/><path d="M0,6 L6,0" stroke="#888888" stroke-width="1"/></pattern>"##);
    let _ = writeln!(svg, r#"<linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0"><stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient>"#, colour(0.0), colour(1.0));
    let _ = writeln!(svg, "</defs>");
    let _ = writeln!(svg, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="14">{}</text>"#, MARGIN + 4.0, escape(opts.title));
    let _ = writeln!(svg, r##"<g stroke="#333333" stroke-width="0.5" fill-rule="evenodd">"##);
    for (id, rings) in &shapes {
        let mut d = String::new();
        for r in rings {
            for (k, p) in r.iter().enumerate() {
                let (x, y) = project(p);
                let _ = write!(d, "{}{x:.2},{y:.2}", if k == 0 { "M" } else { " L" });
            }
            d.push_str(" Z ");
        }
        let (fill, label) = match values.get(id) {
            Some(&v) => (colour(t(v)), format!("{id}: {v:.4}")),
            None => ("url(#missing)".to_string(), format!("{id}: missing")),
        };
        let _ = writeln!(svg, r#"<path d="{}" fill="{fill}"><title>{}</title></path>"#, d.trim_end(), escape(&label));
    }
    let _ = writeln!(svg, "</g>");

    let lx = WIDTH - LEGEND_WIDTH + 10.0;
    let ly = MARGIN + 30.0;
    let lh = 200.0;
    let _ = writeln!(svg, r##"<g font-family="sans-serif" font-size="11">"##);
    if hi > lo {
        let _ = writeln!(svg, r##"<rect x="{lx}" y="{ly}" width="16" height="{lh}" fill="url(#ramp)" stroke="#333333" stroke-width="0.5"/>"##);
        for (frac, v) in [(0.0, lo), (0.5, 0.5 * (lo + hi)), (1.0, hi)] {
            let y = ly + lh * (1.0 - frac);
            let _ = writeln!(svg, r#"<text x="{}" y="{:.2}">{}</text>"#, lx + 22.0, y + 4.0, fmt_tick(v));
        }
    } else if lo.is_finite() {
        let _ = writeln!(svg, r##"<rect x="{lx}" y="{ly}" width="16" height="16" fill="{}" stroke="#333333" stroke-width="0.5"/>"##, colour(0.0));
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 22.0, ly + 12.0, fmt_tick(lo));
    }
    if drawn.len() < shapes.len() {
        let my = ly + lh + 20.0;
        let _ = writeln!(svg, r##"<rect x="{lx}" y="{my}" width="16" height="16" fill="url(#missing)" stroke="#333333" stroke-width="0.5"/>"##);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">missing</text>"#, lx + 22.0, my + 12.0);
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Unit squares for a row-major lattice with some cells (1-based) removed;
/// ids follow the re-indexed graph.
pub fn lattice_geojson(rows: usize, cols: usize, dropped: &[usize]) -> Value {
    let mut features = Vec::new();
    let mut next = 1;
    for r in 0..rows {
        for c in 0..cols {
            if dropped.contains(&(r * cols + c + 1)) {
                continue;
            }
            let (x, y) = (c as f64, (rows - 1 - r) as f64);
            features.push(json!({
                "type": "Feature",
                "properties": { "id": next.to_string() },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[x, y], [x + 1.0, y], [x + 1.0, y + 1.0], [x, y + 1.0], [x, y]]]
                }
            }));
            next += 1;
        }
    }
    json!({ "type": "FeatureCollection", "features": features })
}
