//! Minimal plot writers: SVG line charts and greyscale PGM heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::domain::Matrix;
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLOURS: [&str; 4] = ["#1f4e9c", "#c0392b", "#27864a", "#7d3c98"];

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

pub fn line_plot(series: &[Series], title: &str, x_label: &str, y_label: &str) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(svg, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(fx),
            HEIGHT - MARGIN + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            py(fy) + 4.0,
            tick(fy)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let points: Vec<String> = s
            .x
            .iter()
            .zip(s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            MARGIN + 16.0 * (i + 1) as f64,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatmapAxis {
    pub label: String,
    pub units: String,
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    rows: &'a HeatmapAxis,
    columns: &'a HeatmapAxis,
    /// Value mapped to full white.
    max_value: f64,
}

/// Binary greyscale PGM, linear from 0 to the matrix maximum, plus a
/// `<stem>.axes.toml` sidecar describing the axes.
pub fn write_pgm(m: &Matrix, path: impl AsRef<Path>, bits: u8, rows: &HeatmapAxis, columns: &HeatmapAxis) -> Result<()> {
    let path = path.as_ref();
    let max_level: u32 = match bits {
        8 => 255,
        16 => 65_535,
        _ => return Err(Error::invalid(format!("PGM depth must be 8 or 16 bits, got {bits}"))),
    };
    let peak = m.as_slice().iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let level = |v: f64| -> u32 {
        if peak > 0.0 && v.is_finite() {
            ((v.max(0.0) / peak) * max_level as f64).round() as u32
        } else {
            0
        }
    };
    let mut bytes = format!("P5\n{} {}\n{}\n", m.cols(), m.rows(), max_level).into_bytes();
    for v in m.as_slice() {
        let l = level(*v);
        if bits == 8 {
            bytes.push(l as u8);
        } else {
            bytes.extend_from_slice(&(l as u16).to_be_bytes());
        }
    }
    fs::write(path, bytes)?;
    let sidecar = Sidecar {
        rows,
        columns,
        max_value: peak,
    };
    let text = toml::to_string(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(path.with_file_name(format!("{stem}.axes.toml")), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_contains_one_polyline_per_series() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 3.0, 2.0];
        let svg = line_plot(
            &[
                Series { label: "a", x: &x, y: &y },
                Series { label: "b<c", x: &x, y: &y },
            ],
            "t",
            "x",
            "y",
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }

    #[test]
    fn pgm_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_fn(3, 4, |r, c| (r + c) as f64);
        let axis = HeatmapAxis {
            label: "x".into(),
            units: "nm".into(),
            start: 0.0,
            step: 1.0,
            count: 4,
        };
        for bits in [8u8, 16] {
            let p = dir.path().join(format!("m{bits}.pgm"));
            write_pgm(&m, &p, bits, &axis, &axis).unwrap();
            let bytes = fs::read(&p).unwrap();
            let header = format!("P5\n4 3\n{}\n", if bits == 8 { 255 } else { 65535 });
            assert!(bytes.starts_with(header.as_bytes()));
            assert_eq!(bytes.len(), header.len() + 12 * (bits as usize / 8));
            assert!(dir.path().join(format!("m{bits}.axes.toml")).exists());
        }
        assert!(write_pgm(&m, dir.path().join("x.pgm"), 12, &axis, &axis).is_err());
    }
}
