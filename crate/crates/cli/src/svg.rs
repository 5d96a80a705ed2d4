//! Minimal self-contained SVG charts for the comparison artifacts.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const PANEL: f64 = 110.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub name: &'a str,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || hi <= lo {
        (lo.min(0.0).min(hi), lo.max(hi) + 1.0)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0
    );
}

/// Stacked step charts sharing the x axis, one panel per series.
pub fn step_panels(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let height = 2.0 * MARGIN + PANEL * series.len() as f64;
    let mut out = String::new();
    header(&mut out, height, title);
    let (x0, x1) = extent(series.iter().flat_map(|s| s.x.iter().copied()));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    for (p, s) in series.iter().enumerate() {
        let top = MARGIN + PANEL * p as f64;
        let (y0, y1) = extent(s.y.iter().copied());
        let sy = |y: f64| top + PANEL - 15.0 - (y - y0) / (y1 - y0) * (PANEL - 30.0);
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN}" y="{top}" width="{}" height="{PANEL}" fill="none" stroke="#bbb"/>"##,
            WIDTH - 2.0 * MARGIN
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            MARGIN + 5.0,
            top + 13.0,
            s.name
        );
        let mut d = String::new();
        for (i, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
            if i == 0 {
                let _ = write!(d, "M{:.2},{:.2}", sx(x), sy(y));
            } else {
                let _ = write!(d, " H{:.2} V{:.2}", sx(x), sy(y));
            }
        }
        let _ = writeln!(
            out,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1"/>"#,
            COLORS[p % COLORS.len()]
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        height - 15.0
    );
    out.push_str("</svg>\n");
    out
}

/// Overlaid scatter of several point clouds with a legend.
pub fn scatter(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let height = 600.0;
    let mut out = String::new();
    header(&mut out, height, title);
    let (x0, x1) = extent(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = extent(series.iter().flat_map(|s| s.y.iter().copied()));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| height - MARGIN - (y - y0) / (y1 - y0) * (height - 2.0 * MARGIN);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#bbb"/>"##,
        WIDTH - 2.0 * MARGIN,
        height - 2.0 * MARGIN
    );
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="#ddd"/>"##,
            WIDTH - MARGIN,
            sy(0.0),
            sy(0.0)
        );
    }
    for (p, s) in series.iter().enumerate() {
        let color = COLORS[p % COLORS.len()];
        let _ = writeln!(out, r#"<g fill="{color}" fill-opacity="0.5">"#);
        for (&x, &y) in s.x.iter().zip(&s.y) {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.8"/>"#,
                sx(x),
                sy(y)
            );
        }
        out.push_str("</g>\n");
        let ly = MARGIN + 15.0 + 15.0 * p as f64;
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - MARGIN - 110.0,
            ly - 4.0,
            WIDTH - MARGIN - 100.0,
            ly,
            s.name
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        height - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{y_label}</text>"#,
        height / 2.0,
        height / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}">{x0:.0}</text><text x="{}" y="{}" text-anchor="end">{x1:.0}</text>"#,
        height - MARGIN + 14.0,
        WIDTH - MARGIN,
        height - MARGIN + 14.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{y1:.0}</text><text x="{}" y="{}" text-anchor="end">{y0:.0}</text>"#,
        MARGIN - 4.0,
        MARGIN + 4.0,
        MARGIN - 4.0,
        height - MARGIN
    );
    out.push_str("</svg>\n");
    out
}
