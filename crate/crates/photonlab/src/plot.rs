//! Self-contained SVG plots of a data series with its model overlay.

use std::fmt::Write as _;

use crate::report::Series;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;

/// Most drawn data points; longer series are reduced to per-column extremes.
pub const MAX_DRAWN_POINTS: usize = 4000;

/// Keep the minimum and maximum of each of `columns` x-buckets, in x order.
/// Series already short enough are returned as they are.
pub fn decimate(points: &[(f64, f64)], columns: usize) -> Vec<(f64, f64)> {
    if points.len() <= 2 * columns || columns == 0 {
        return points.to_vec();
    }
    let per = points.len().div_ceil(columns);
    let mut out = Vec::with_capacity(2 * columns);
    for chunk in points.chunks(per) {
        let lo = chunk.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).unwrap_or(0);
        let hi = chunk.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).unwrap_or(0);
        let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        out.push(chunk[a]);
        if b != a {
            out.push(chunk[b]);
        }
    }
    out
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() * step;
    (0..)
        .map(|i| first + i as f64 * step)
        .take_while(|&t| t <= hi + 1e-9 * step)
        .map(|t| if t.abs() < 1e-12 * step { 0.0 } else { t })
        .collect()
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds<'a>(pts: impl Iterator<Item = &'a (f64, f64)>) -> Option<(f64, f64, f64, f64)> {
    pts.filter(|p| p.0.is_finite() && p.1.is_finite()).fold(None, |acc, &(x, y)| match acc {
        None => Some((x, x, y, y)),
        Some((x0, x1, y0, y1)) => Some((x0.min(x), x1.max(x), y0.min(y), y1.max(y))),
    })
}

/// Render `s` as a standalone SVG document.
pub fn render_svg(s: &Series) -> String {
    let data = decimate(&s.points, MAX_DRAWN_POINTS / 2);
    let (mut x0, mut x1, mut y0, mut y1) = bounds(data.iter().chain(s.model.iter())).unwrap_or((0.0, 1.0, 0.0, 1.0));
    if s.bars {
        y0 = y0.min(0.0);
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    y1 += pad;
    if !s.bars || y0 < 0.0 {
        y0 -= pad;
    }
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&s.title));

    for t in ticks(x0, x1, 8) {
        let x = px(t);
        let _ = writeln!(o, r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#e4e4e4"/>"##, TOP + ph);
        let _ = writeln!(o, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, label(t));
    }
    for t in ticks(y0, y1, 6) {
        let y = py(t);
        let _ = writeln!(o, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e4e4e4"/>"##, LEFT + pw);
        let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, label(t));
    }
    let _ = writeln!(o, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 14.0, escape(&s.x_label));
    let _ = writeln!(
        o,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(&s.y_label)
    );

    if s.bars && !data.is_empty() {
        let w = if s.points.len() > 1 && data.len() == s.points.len() {
            ((px(data[data.len() - 1].0) - px(data[0].0)) / (data.len() - 1) as f64).max(0.5)
        } else {
            (pw / data.len() as f64).max(0.5)
        };
        let base = py(0.0f64.clamp(y0, y1));
        let mut path = String::new();
        for &(x, y) in data.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let (cx, cy) = (px(x), py(y));
            let _ = write!(path, "M{:.2} {:.2}h{:.2}V{:.2}h{:.2}Z", cx - w / 2.0, base, w, cy, -w);
        }
        let _ = writeln!(o, r##"<path d="{path}" fill="#4a78b0" stroke="none"/>"##);
    } else {
        for &(x, y) in data.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(o, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#4a78b0"/>"##, px(x), py(y));
        }
    }
    if !s.model.is_empty() {
        let pts: Vec<String> = decimate(&s.model, MAX_DRAWN_POINTS / 2)
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(o, r##"<polyline points="{}" fill="none" stroke="#d0402b" stroke-width="1.5"/>"##, pts.join(" "));
    }
    o.push_str("</svg>\n");
    o
}
