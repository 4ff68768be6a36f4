//! Bare-bones static figures: SVG line charts and PGM heat maps.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart with a legend and min/max axis labels.
pub fn svg_lines(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.is_empty() || pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("plot needs finite points".into()));
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{PAD} {} L{} {} M{PAD} {} L{PAD} {PAD}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}" text-anchor="middle">{x0:.3}</text>"#, H - PAD + 16.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x1:.3}</text>"#, W - PAD, H - PAD + 16.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text>"#, PAD - 4.0, H - PAD);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{y1:.3}</text>"#, PAD - 4.0, PAD + 4.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" stroke="{colour}" fill="none" stroke-width="1.5"/>"#, path.join(" "));
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{colour}"/>"#, W - PAD - 120.0, ly - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, W - PAD - 105.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Plain-text PGM of a row-major grid, darkest at the minimum.
pub fn pgm(rows: usize, cols: usize, values: &[f64]) -> Result<String> {
    if rows * cols != values.len() || values.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} values for a {rows}x{cols} grid", values.len())));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("grid has non-finite values".into()));
    }
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut out = format!("P2\n{cols} {rows}\n255\n");
    for r in 0..rows {
        let line: Vec<String> =
            values[r * cols..(r + 1) * cols].iter().map(|v| (((v - lo) * scale).round() as u8).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}
