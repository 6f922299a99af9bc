//! Minimal standalone SVG 1.1 log-log plots of error tables.

use std::fmt::Write as _;

use crate::study::ErrorTable;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 70.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    /// τ against absolute error for the valid rows of `table`.
    pub fn from_table(label: &str, table: &ErrorTable) -> Self {
        Self {
            label: label.to_string(),
            points: table
                .rows
                .iter()
                .filter(|r| r.valid && r.absolute > 0.0)
                .map(|r| (r.tau, r.absolute))
                .collect(),
        }
    }
}

fn decade_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(f64::log10)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        let (lo, hi) = (lo.floor(), hi.ceil());
        Some(if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) })
    } else {
        None
    }
}

/// Log₁₀ axes, one polyline per series and a dashed slope-1 guide through
/// the first point of the first series.
pub fn loglog_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter().copied());
    let (x0, x1) = decade_range(all().map(|p| p.0)).unwrap_or((-1.0, 0.0));
    let (y0, y1) = decade_range(all().map(|p| p.1)).unwrap_or((-1.0, 0.0));
    let px = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    )
    .unwrap();
    for e in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(e));
        writeln!(s, r#"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{bottom}" stroke="silver"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">1e{e}</text>"#,
            bottom + 18.0
        )
        .unwrap();
    }
    for e in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(e));
        writeln!(s, r#"<line x1="{left}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="silver"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">1e{e}</text>"#,
            left - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 20 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    )
    .unwrap();

    if let Some(&(gx, gy)) = series.first().and_then(|s| s.points.first()) {
        // slope-1 guide clipped to the x range: y = gy · (x / gx)
        let lo = 10f64.powf(x0);
        let hi = 10f64.powf(x1);
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6,4"/>"#,
            px(lo),
            py(gy * lo / gx).clamp(0.0, HEIGHT),
            px(hi),
            py(gy * hi / gx).clamp(0.0, HEIGHT)
        )
        .unwrap();
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" ")).unwrap();
        for &(x, y) in &ser.points {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y)).unwrap();
        }
        let ly = top + 18.0 + 18.0 * i as f64;
        writeln!(
            s,
            r#"<text x="{}" y="{ly:.2}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            left + 10.0,
            escape(&ser.label)
        )
        .unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_guide_and_series() {
        let series = vec![Series {
            label: "a<b".into(),
            points: vec![(1.0, 1.0), (0.1, 0.1), (0.01, 0.01)],
        }];
        let svg = loglog_svg("t", "tau", "error", &series);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.contains(r#"version="1.1""#));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
