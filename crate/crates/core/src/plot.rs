//! Minimal dependency-free SVG rendering for heatmaps and scatter plots.

use std::fmt::Write as _;

/// Escape text for inclusion in SVG.
fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Viridis-ish ramp from dark blue to yellow, `v` in [0, 1].
fn ramp(v: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let x = v * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let a = x - i as f64;
    let (l, r) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * a).round() as u8;
    (mix(l.0, r.0), mix(l.1, r.1), mix(l.2, r.2))
}

/// Heatmap of a row-major `rows x cols` matrix. Rows run left to right
/// (time), columns bottom to top (frequency).
pub fn heatmap(title: &str, rows: usize, cols: usize, values: &[f64]) -> String {
    let cell = 4usize;
    let (w, h) = (rows * cell, cols * cell);
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#,
        w + 20,
        h + 40
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="18" font-family="sans-serif" font-size="12">{}</text>"#,
        esc(title)
    );
    for r in 0..rows {
        for c in 0..cols {
            let v = values[r * cols + c];
            let (cr, cg, cb) = ramp((v - lo) / span);
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({cr},{cg},{cb})"/>"#,
                10 + r * cell,
                30 + (cols - 1 - c) * cell
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One labelled point of a scatter plot.
#[derive(Clone, Debug)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

/// Scatter plot with quadrant guides at `split` (x, y).
pub fn scatter(title: &str, x_label: &str, y_label: &str, pts: &[Point], split: Option<(f64, f64)>) -> String {
    let (w, h, m) = (480.0, 400.0, 50.0);
    let bounds = |f: fn(&Point) -> f64| {
        let (lo, hi) = pts
            .iter()
            .map(f)
            .chain(split.map(|s| f(&Point { x: s.0, y: s.1, label: String::new() })))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = bounds(|p| p.x);
    let (y0, y1) = bounds(|p| p.y);
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(
        s,
        r#"<text x="{m}" y="20" font-family="sans-serif" font-size="13">{}</text>"#,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    if let Some((sx, sy)) = split {
        let _ = writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{m}" x2="{0:.2}" y2="{1}" stroke="gray" stroke-dasharray="4"/>"#,
            px(sx),
            h - m
        );
        let _ = writeln!(
            s,
            r#"<line x1="{m}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="gray" stroke-dasharray="4"/>"#,
            py(sy),
            w - m
        );
    }
    for p in pts {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{}</text>"#,
            px(p.x),
            py(p.y),
            px(p.x) + 6.0,
            py(p.y) - 6.0,
            esc(&p.label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 12.0,
        esc(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        h / 2.0,
        h / 2.0,
        esc(y_label)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_has_one_rect_per_cell() {
        let s = heatmap("t<1>", 3, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.matches("<rect").count(), 6);
        assert!(s.contains("t&lt;1&gt;"));
    }

    #[test]
    fn constant_scatter_stays_finite() {
        let pts = vec![Point { x: 1.0, y: 1.0, label: "a".into() }];
        let s = scatter("s", "x", "y", &pts, None);
        assert!(!s.contains("NaN"));
    }
}
