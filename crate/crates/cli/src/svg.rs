//! Minimal SVG emitter: line charts, trajectory plots and heatmaps. Each
//! plotted series or heatmap row becomes its own `<g>` element.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, color: &str, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            color: color.into(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Clone, Copy)]
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Frame {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for &(px, py) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        let pad = |r: (f64, f64)| {
            if !r.0.is_finite() {
                (0.0, 1.0)
            } else if r.1 - r.0 < 1e-12 {
                (r.0 - 0.5, r.1 + 0.5)
            } else {
                let p = 0.04 * (r.1 - r.0);
                (r.0 - p, r.1 + p)
            }
        };
        Frame { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (WIDTH - MARGIN_R + MARGIN_L) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
    let _ = writeln!(out, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g class="ticks" fill="black">"#);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            y0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    let _ = writeln!(out, "</g>");
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn polyline(points: &[(f64, f64)], f: &Frame) -> String {
    points
        .iter()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn legend(out: &mut String, i: usize, name: &str, color: &str) {
    let x = WIDTH - MARGIN_R + 12.0;
    let y = MARGIN_T + 8.0 + 18.0 * i as f64;
    let _ = writeln!(
        out,
        r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
        x + 18.0,
        x + 24.0,
        y + 4.0,
        escape(name)
    );
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter()));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<g class="series" data-name="{}">
<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            escape(&s.name),
            s.color,
            polyline(&s.points, &frame)
        );
        legend(&mut out, i, &s.name, &s.color);
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

/// Blue (low) to yellow (high) through green, for `t` in `[0, 1]`.
pub fn color_map(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let stops = [(68.0, 1.0, 84.0), (33.0, 145.0, 140.0), (253.0, 231.0, 37.0)];
    let (a, b, u) = if t < 0.5 {
        (stops[0], stops[1], t * 2.0)
    } else {
        (stops[1], stops[2], t * 2.0 - 1.0)
    };
    let mix = |p: f64, q: f64| (p + (q - p) * u).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Each path is one `<g>` with its polyline and markers colored by the point
/// magnitude `‖p‖`. `lines` are drawn as additional dashed series.
pub fn trajectory_plot(title: &str, paths: &[Vec<(f64, f64)>], lines: &[Series]) -> String {
    let frame = Frame::fit(paths.iter().flatten().chain(lines.iter().flat_map(|s| s.points.iter())));
    let max_mag = paths
        .iter()
        .flatten()
        .map(|p| p.0.hypot(p.1))
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, "h[0]", "h[1]");
    for (i, s) in lines.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<g class="series" data-name="{}">
<polyline fill="none" stroke="{}" stroke-width="1.5" stroke-dasharray="6 4" points="{}"/>"#,
            escape(&s.name),
            s.color,
            polyline(&s.points, &frame)
        );
        legend(&mut out, i, &s.name, &s.color);
        let _ = writeln!(out, "</g>");
    }
    for (k, path) in paths.iter().enumerate() {
        let _ = writeln!(
            out,
            r##"<g class="series" data-name="trajectory {k}">
<polyline fill="none" stroke="#999999" stroke-width="0.8" points="{}"/>"##,
            polyline(path, &frame)
        );
        for &(x, y) in path.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{}"/>"#,
                frame.px(x),
                frame.py(y),
                color_map(x.hypot(y) / max_mag)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

/// Rows of `values` are drawn top to bottom, one `<g>` per row. Colors span
/// `range`.
pub fn heatmap(title: &str, row_label: &str, col_label: &str, values: &[Vec<f64>], range: (f64, f64)) -> String {
    let rows = values.len().max(1);
    let cols = values.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let w = (WIDTH - MARGIN_L - MARGIN_R) / cols as f64;
    let h = (HEIGHT - MARGIN_T - MARGIN_B) / rows as f64;
    let span = (range.1 - range.0).max(1e-12);
    let mut out = String::new();
    header(&mut out, title);
    for (r, row) in values.iter().enumerate() {
        let _ = writeln!(out, r#"<g class="row" data-name="{} {r}">"#, escape(row_label));
        for (c, v) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{v}</title></rect>"#,
                MARGIN_L + c as f64 * w,
                MARGIN_T + r as f64 * h,
                w,
                h,
                color_map((v - range.0) / span)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(
        out,
        r#"<g class="labels"><text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text><text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text></g>"#,
        (WIDTH - MARGIN_R + MARGIN_L) / 2.0,
        HEIGHT - 16.0,
        escape(col_label),
        (HEIGHT - MARGIN_B + MARGIN_T) / 2.0,
        (HEIGHT - MARGIN_B + MARGIN_T) / 2.0,
        escape(row_label)
    );
    let bar_x = WIDTH - MARGIN_R + 24.0;
    let _ = writeln!(out, r#"<g class="colorbar">"#);
    for k in 0..20 {
        let t = 1.0 - k as f64 / 19.0;
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            MARGIN_T + k as f64 * (HEIGHT - MARGIN_T - MARGIN_B) / 20.0,
            (HEIGHT - MARGIN_T - MARGIN_B) / 20.0,
            color_map(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}">{}</text><text x="{}" y="{}">{}</text>"#,
        bar_x + 22.0,
        MARGIN_T + 10.0,
        tick(range.1),
        bar_x + 22.0,
        HEIGHT - MARGIN_B,
        tick(range.0)
    );
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}
