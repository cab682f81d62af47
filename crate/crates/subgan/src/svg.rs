//! Self-contained SVG charts: line plots, scatter plots, error-bar plots
//! and heatmaps. Non-finite values are skipped.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let range = |it: &mut dyn Iterator<Item = f64>| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in it.filter(|v| v.is_finite()) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if lo == hi {
                let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
                (lo - pad, hi + pad)
            } else {
                let pad = (hi - lo) * 0.05;
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = range(&mut { xs });
        let (y0, y1) = range(&mut { ys });
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xticks: bool) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = write!(out, r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##, r - l, b - t);
    for y in ticks(f.y0, f.y1) {
        let p = f.py(y);
        let _ = write!(out, r##"<line x1="{l}" y1="{p:.2}" x2="{r}" y2="{p:.2}" stroke="#e4e4e4"/>"##);
        let _ = write!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 6.0, p + 4.0, label(y));
    }
    if xticks {
        for x in ticks(f.x0, f.x1) {
            let p = f.px(x);
            let _ = write!(out, r##"<line x1="{p:.2}" y1="{b}" x2="{p:.2}" y2="{}" stroke="#444"/>"##, b + 5.0);
            let _ = write!(out, r#"<text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, label(x));
        }
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        H - 14.0,
        escape(xlabel)
    );
    let _ = write!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn legend(out: &mut String, names: &[(String, &'static str, bool)]) {
    let x = W - RIGHT + 14.0;
    for (i, (name, c, dashed)) in names.iter().enumerate() {
        let y = TOP + 12.0 + 18.0 * i as f64;
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = write!(out, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{c}" stroke-width="2"{dash}/>"#, x + 22.0);
        let _ = write!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 28.0, y + 4.0, escape(name));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points,
            dashed: false,
        }
    }
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter().copied());
    let f = Frame::fit(pts().map(|p| p.0), pts().map(|p| p.1));
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, true);
    let mut names = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let c = color(i);
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if path.len() == 1 {
            let (x, y) = path[0].split_once(',').expect("pair");
            let _ = write!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{c}"/>"#);
        } else if !path.is_empty() {
            let _ = write!(
                out,
                r#"<polyline fill="none" stroke="{c}" stroke-width="1.6"{dash} points="{}"/>"#,
                path.join(" ")
            );
        }
        names.push((s.name.clone(), c, s.dashed));
    }
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

pub fn scatter_plot(title: &str, groups: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = || groups.iter().flat_map(|g| g.1.iter().copied());
    let f = Frame::fit(pts().map(|p| p.0), pts().map(|p| p.1));
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, "x0", "x1", true);
    let mut names = Vec::new();
    for (i, (name, points)) in groups.iter().enumerate() {
        let c = color(i);
        for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.8" fill="{c}" fill-opacity="0.45"/>"#,
                f.px(x),
                f.py(y)
            );
        }
        names.push((name.clone(), c, false));
    }
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean ± standard error per condition, joined by a line, with an optional
/// dashed baseline level and its ±stderr band.
pub fn error_bar_plot(title: &str, xlabel: &str, ylabel: &str, bars: &[Bar], baseline: Option<(f64, f64)>) -> String {
    let n = bars.len().max(1) as f64;
    let mut ys: Vec<f64> = bars.iter().flat_map(|b| [b.mean - b.stderr, b.mean + b.stderr]).collect();
    if let Some((m, s)) = baseline {
        ys.extend([m - s, m + s]);
    }
    let mut f = Frame::fit([0.0, n - 1.0].into_iter(), ys.into_iter());
    f.x0 = -0.5;
    f.x1 = n - 0.5;
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, false);
    let b = H - BOTTOM;
    for (i, bar) in bars.iter().enumerate() {
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            f.px(i as f64),
            b + 18.0,
            escape(&bar.label)
        );
    }
    let mut names = Vec::new();
    if let Some((m, s)) = baseline.filter(|(m, _)| m.is_finite()) {
        let c = "#555555";
        let s = if s.is_finite() { s } else { 0.0 };
        let _ = write!(
            out,
            r#"<rect x="{LEFT}" y="{:.2}" width="{}" height="{:.2}" fill="{c}" fill-opacity="0.12"/>"#,
            f.py(m + s),
            W - LEFT - RIGHT,
            f.py(m - s) - f.py(m + s)
        );
        let _ = write!(
            out,
            r#"<line x1="{LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="{c}" stroke-width="1.6" stroke-dasharray="6 4"/>"#,
            f.py(m),
            W - RIGHT
        );
        names.push(("baseline".to_string(), c, true));
    }
    let c = color(0);
    let path: Vec<String> = bars
        .iter()
        .enumerate()
        .filter(|(_, b)| b.mean.is_finite())
        .map(|(i, b)| format!("{:.2},{:.2}", f.px(i as f64), f.py(b.mean)))
        .collect();
    if path.len() > 1 {
        let _ = write!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="1.6" points="{}"/>"#, path.join(" "));
    }
    for (i, bar) in bars.iter().enumerate().filter(|(_, b)| b.mean.is_finite()) {
        let x = f.px(i as f64);
        let s = if bar.stderr.is_finite() { bar.stderr } else { 0.0 };
        let (top, bot) = (f.py(bar.mean + s), f.py(bar.mean - s));
        let _ = write!(out, r#"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{bot:.2}" stroke="{c}" stroke-width="1.4"/>"#);
        for y in [top, bot] {
            let _ = write!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{c}" stroke-width="1.4"/>"#, x - 5.0, x + 5.0);
        }
        let _ = write!(out, r#"<circle cx="{x:.2}" cy="{:.2}" r="3.5" fill="{c}"/>"#, f.py(bar.mean));
    }
    names.push(("mean ± stderr".to_string(), c, false));
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// `n × n` matrix as coloured cells, blue for negative, red for positive.
pub fn heatmap(title: &str, n: usize, data: &[f64]) -> String {
    let mut out = String::new();
    open(&mut out, title);
    let size = (H - TOP - BOTTOM).min(W - LEFT - RIGHT);
    let cell = size / n.max(1) as f64;
    let peak = data.iter().filter(|v| v.is_finite()).fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..n {
            let v = data[i * n + j];
            let t = if peak > 0.0 && v.is_finite() { (v / peak).clamp(-1.0, 1.0) } else { 0.0 };
            let fade = |a: f64| (255.0 * (1.0 - a.abs())).round() as u8;
            let fill = if t >= 0.0 {
                format!("rgb(255,{0},{0})", fade(t))
            } else {
                format!("rgb({0},{0},255)", fade(t))
            };
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}" stroke="white"/>"#,
                LEFT + j as f64 * cell,
                TOP + i as f64 * cell
            );
            if n <= 8 {
                let _ = write!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    LEFT + (j as f64 + 0.5) * cell,
                    TOP + (i as f64 + 0.5) * cell + 4.0,
                    label(v)
                );
            }
        }
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}">max |entry| = {}</text>"#,
        LEFT + size + 16.0,
        TOP + 16.0,
        label(peak)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover_range() {
        let t = ticks(0.03, 0.97);
        assert!(t.len() >= 3 && t.len() <= 7, "{t:?}");
        assert!(t.iter().all(|v| (v * 10.0 - (v * 10.0).round()).abs() < 1e-9 || (v * 4.0 - (v * 4.0).round()).abs() < 1e-9));
    }

    #[test]
    fn documents_are_well_formed_and_skip_nan() {
        let s = line_plot("a<b", "x", "y", &[Series::new("s", vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)])]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        assert!(!s.contains("NaN"));
        let e = error_bar_plot("t", "x", "y", &[Bar { label: "c".into(), mean: 1.0, stderr: 0.1 }], Some((1.2, 0.05)));
        assert!(e.contains("stroke-dasharray"));
        let h = heatmap("k", 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(h.contains("rgb(255,0,0)") && h.contains("rgb(0,0,255)"));
    }
}
