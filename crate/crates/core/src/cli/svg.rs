//! Minimal static SVG charts.

use std::fmt::Write;

use crate::analysis::Histogram;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_x: bool,
    log_y: bool,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>, log_x: bool, log_y: bool) -> Option<Self> {
        let tx = |v: f64| if log_x { v.log10() } else { v };
        let ty = |v: f64| if log_y { v.log10() } else { v };
        let (mut x, mut y) = (
            (f64::INFINITY, f64::NEG_INFINITY),
            (f64::INFINITY, f64::NEG_INFINITY),
        );
        for (px, py) in points {
            let (px, py) = (tx(px), ty(py));
            if px.is_finite() && py.is_finite() {
                x = (x.0.min(px), x.1.max(px));
                y = (y.0.min(py), y.1.max(py));
            }
        }
        if !x.0.is_finite() {
            return None;
        }
        let pad = |r: (f64, f64)| if r.1 > r.0 { r } else { (r.0 - 0.5, r.1 + 0.5) };
        Some(Self {
            x: pad(x),
            y: pad(y),
            log_x,
            log_y,
        })
    }

    fn map(&self, px: f64, py: f64) -> Option<(f64, f64)> {
        let px = if self.log_x { px.log10() } else { px };
        let py = if self.log_y { py.log10() } else { py };
        if !(px.is_finite() && py.is_finite()) {
            return None;
        }
        let sx = MARGIN + (px - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN);
        let sy =
            HEIGHT - MARGIN - (py - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN);
        Some((sx, sy))
    }
}

fn open(out: &mut String, title: &str, comment: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, "<!-- {comment} -->");
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    let label = |v: f64, log: bool| {
        if log {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3}")
        }
    };
    let small = r#"font-family="sans-serif" font-size="11""#;
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{}" {small}>{}</text>"#,
        y0 + 15.0,
        label(frame.x.0, frame.log_x)
    );
    let _ = writeln!(
        out,
        r#"<text x="{x1}" y="{}" {small} text-anchor="end">{}</text>"#,
        y0 + 15.0,
        label(frame.x.1, frame.log_x)
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{y0}" {small}>{}</text>"#,
        label(frame.y.0, frame.log_y)
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" {small}>{}</text>"#,
        y1 + 4.0,
        label(frame.y.1, frame.log_y)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" {small} text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" {small} text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = points
        .iter()
        .filter_map(|&(x, y)| frame.map(x, y))
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    if !coords.is_empty() {
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Bars of the histogram density with an optional reference curve.
pub fn histogram_svg(
    hist: &Histogram,
    overlay: Option<&[(f64, f64)]>,
    title: &str,
    comment: &str,
) -> String {
    let mut out = String::new();
    open(&mut out, title, comment);
    let corners = hist
        .bin_edges
        .iter()
        .map(|&x| (x, 0.0))
        .chain(hist.density.iter().map(|&d| (hist.bin_edges[0], d)))
        .chain(overlay.unwrap_or(&[]).iter().copied());
    if let Some(frame) = Frame::fit(corners, false, false) {
        for (e, d) in hist.bin_edges.windows(2).zip(&hist.density) {
            if let (Some((x0, y0)), Some((x1, y1))) = (frame.map(e[0], *d), frame.map(e[1], 0.0)) {
                let _ = writeln!(
                    out,
                    r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd"/>"##,
                    x1 - x0,
                    y1 - y0
                );
            }
        }
        if let Some(curve) = overlay {
            polyline(&mut out, &frame, curve, PALETTE[1]);
        }
        axes(&mut out, &frame, "eigenvalue", "density");
    }
    out.push_str("</svg>\n");
    out
}

/// Line chart of one or more series; non-positive values are dropped on log axes.
pub fn line_chart_svg(
    series: &[Series],
    log_x: bool,
    log_y: bool,
    title: &str,
    labels: (&str, &str),
    comment: &str,
) -> String {
    let mut out = String::new();
    open(&mut out, title, comment);
    let all = series.iter().flat_map(|s| s.points.iter().copied());
    if let Some(frame) = Frame::fit(all, log_x, log_y) {
        for (i, s) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            polyline(&mut out, &frame, &s.points, color);
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                WIDTH - MARGIN - 120.0,
                MARGIN + 14.0 * i as f64,
                escape(&s.label)
            );
        }
        axes(&mut out, &frame, labels.0, labels.1);
    }
    out.push_str("</svg>\n");
    out
}
