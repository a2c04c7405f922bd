//! Minimal self-contained SVG charts.

use std::fmt::Write as _;

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(w: f64, h: f64) -> Canvas {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        Canvas { out }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, label: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="{fill}"><title>{}</title></rect>"#,
            esc(label)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        let mut d = String::with_capacity(pts.len() * 16);
        for (x, y) in pts {
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            d.trim_end()
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Axis range covering `values` and zero.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    (lo, hi)
}

pub struct BarPanel<'a> {
    pub title: &'a str,
    pub labels: &'a [String],
    pub values: &'a [f64],
}

pub const BAR_PANEL_HEIGHT: f64 = 220.0;
const PANEL_W: f64 = 320.0;
const TOP: f64 = 40.0;

/// Side-by-side bar charts; bar heights are proportional to the values,
/// measured from a zero baseline.
pub fn bar_panels(title: &str, panels: &[BarPanel]) -> String {
    let w = PANEL_W * panels.len() as f64;
    let h = TOP + BAR_PANEL_HEIGHT + 50.0;
    let mut c = Canvas::new(w, h);
    c.text(w / 2.0, 18.0, "middle", title);
    for (p, panel) in panels.iter().enumerate() {
        let x0 = p as f64 * PANEL_W + 40.0;
        let pw = PANEL_W - 60.0;
        let (lo, hi) = span(panel.values.iter().copied());
        let scale = BAR_PANEL_HEIGHT / (hi - lo);
        let zero_y = TOP + hi * scale;
        c.text(x0 + pw / 2.0, TOP - 8.0, "middle", panel.title);
        c.line(x0, TOP, x0, TOP + BAR_PANEL_HEIGHT, "black");
        c.line(x0, zero_y, x0 + pw, zero_y, "black");
        c.text(x0 - 4.0, TOP + 4.0, "end", &format!("{hi:.3}"));
        c.text(x0 - 4.0, zero_y + 4.0, "end", "0");
        if lo < 0.0 {
            c.text(x0 - 4.0, TOP + BAR_PANEL_HEIGHT, "end", &format!("{lo:.3}"));
        }
        let n = panel.values.len().max(1) as f64;
        let slot = pw / n;
        for (i, (label, v)) in panel.labels.iter().zip(panel.values).enumerate() {
            let v = if v.is_finite() { *v } else { 0.0 };
            let bh = v.abs() * scale;
            let y = if v >= 0.0 { zero_y - bh } else { zero_y };
            let x = x0 + slot * i as f64 + slot * 0.15;
            c.rect(x, y, slot * 0.7, bh, color(i), &format!("{label}: {v:.4}"));
            c.text(x + slot * 0.35, TOP + BAR_PANEL_HEIGHT + 16.0, "middle", label);
        }
    }
    c.finish()
}

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

/// Line chart with a shared x axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (900.0, 360.0);
    let (l, r, t, b) = (60.0, 120.0, 30.0, 40.0);
    let mut c = Canvas::new(w, h);
    c.text(w / 2.0, 18.0, "middle", title);
    let xs = series.iter().flat_map(|s| s.x.iter().copied());
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in xs {
        x_lo = x_lo.min(v);
        x_hi = x_hi.max(v);
    }
    if !(x_hi > x_lo) {
        x_lo = 0.0;
        x_hi = 1.0;
    }
    let (y_lo, y_hi) = span(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| l + (x - x_lo) / (x_hi - x_lo) * (w - l - r);
    let py = |y: f64| t + (y_hi - y) / (y_hi - y_lo) * (h - t - b);
    c.line(l, t, l, h - b, "black");
    c.line(l, py(0.0), w - r, py(0.0), "#888");
    c.text(l - 4.0, t + 4.0, "end", &format!("{y_hi:.3}"));
    c.text(l - 4.0, h - b, "end", &format!("{y_lo:.3}"));
    c.text(w / 2.0, h - 8.0, "middle", x_label);
    c.text(12.0, h / 2.0, "start", y_label);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s.x.iter().zip(s.y).map(|(x, y)| (px(*x), py(*y))).collect();
        c.polyline(&pts, color(i), 0.8);
        c.rect(w - r + 10.0, t + 16.0 * i as f64, 10.0, 10.0, color(i), s.label);
        c.text(w - r + 24.0, t + 9.0 + 16.0 * i as f64, "start", s.label);
    }
    c.finish()
}

pub struct Histogram<'a> {
    pub label: &'a str,
    pub edges: &'a [f64],
    pub density: &'a [f64],
    pub gaussian: &'a [f64],
}

/// One small panel per histogram: bars of empirical density with the fitted
/// normal density drawn over the bin centers.
pub fn histogram_panels(title: &str, x_label: &str, panels: &[Histogram]) -> String {
    let (pw, ph) = (260.0, 200.0);
    let w = pw * panels.len().max(1) as f64;
    let h = ph + 70.0;
    let mut c = Canvas::new(w, h);
    c.text(w / 2.0, 18.0, "middle", title);
    for (p, hist) in panels.iter().enumerate() {
        let x0 = p as f64 * pw + 30.0;
        let inner = pw - 45.0;
        let top = 45.0;
        c.text(x0 + inner / 2.0, top - 10.0, "middle", hist.label);
        let (lo, hi) = match (hist.edges.first(), hist.edges.last()) {
            (Some(a), Some(b)) if b > a => (*a, *b),
            (Some(a), _) => (*a - 0.5, *a + 0.5),
            _ => (0.0, 1.0),
        };
        let finite = |v: &&f64| v.is_finite();
        let ymax = hist
            .density
            .iter()
            .chain(hist.gaussian)
            .filter(finite)
            .fold(0.0f64, |a, b| a.max(*b))
            .max(1e-12);
        let px = |x: f64| x0 + (x - lo) / (hi - lo) * inner;
        let py = |y: f64| top + ph - (y / ymax).min(1.0) * ph;
        c.line(x0, top + ph, x0 + inner, top + ph, "black");
        for (i, d) in hist.density.iter().enumerate() {
            if hist.edges.len() > i + 1 {
                let (a, b) = (hist.edges[i], hist.edges[i + 1]);
                let d = if d.is_finite() { *d } else { ymax };
                c.rect(px(a), py(d), (px(b) - px(a)).max(0.5), top + ph - py(d), color(p), &format!("{d:.4}"));
            }
        }
        let pts: Vec<(f64, f64)> = hist
            .edges
            .windows(2)
            .zip(hist.gaussian)
            .filter(|(_, g)| g.is_finite())
            .map(|(e, g)| (px(0.5 * (e[0] + e[1])), py(*g)))
            .collect();
        if pts.len() > 1 {
            c.polyline(&pts, "black", 1.2);
        }
        c.text(x0, top + ph + 14.0, "start", &format!("{lo:.3}"));
        c.text(x0 + inner, top + ph + 14.0, "end", &format!("{hi:.3}"));
    }
    c.text(w / 2.0, h - 6.0, "middle", x_label);
    c.finish()
}
