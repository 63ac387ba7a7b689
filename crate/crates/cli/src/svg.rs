//! Minimal SVG line charts with optional error bars and reference lines.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bar half-widths, one per point.
    pub errors: Option<Vec<f64>>,
    pub line: bool,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    /// Upper clip for the y axis (the threshold peak dwarfs everything else).
    pub y_max: Option<f64>,
    pub series: Vec<Series>,
    pub hlines: Vec<(String, f64)>,
}

fn tr(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

impl Chart {
    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for (i, (x, y)) in s.points.iter().enumerate() {
                let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
                if (self.log_x && *x <= 0.0) || (self.log_y && *y <= 0.0) || !y.is_finite() {
                    continue;
                }
                xs.push(tr(*x, self.log_x));
                ys.push(tr(*y, self.log_y));
                if e > 0.0 && !self.log_y {
                    ys.push(y + e);
                    ys.push(y - e);
                }
            }
        }
        for (_, y) in &self.hlines {
            ys.push(tr(*y, self.log_y));
        }
        if xs.is_empty() {
            return None;
        }
        let fold = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)))
        };
        let (x0, x1) = fold(&xs);
        let (mut y0, mut y1) = fold(&ys);
        if let Some(m) = self.y_max {
            y1 = y1.min(tr(m, self.log_y));
        }
        if !self.log_y {
            y0 = y0.min(0.0);
        }
        let pad = |a: f64, b: f64| if a == b { (a - 1.0, b + 1.0) } else { (a, b) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Some((x0, x1, y0, y1))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let Some((x0, x1, y0, y1)) = self.bounds() else {
            out.push_str("</svg>\n");
            return out;
        };
        let px = |x: f64| MARGIN + (tr(x, self.log_x) - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let py = |y: f64| {
            let t = tr(y, self.log_y).clamp(y0, y1);
            H - MARGIN - (t - y0) / (y1 - y0) * (H - 2.0 * MARGIN)
        };
        let _ = writeln!(
            out,
            r#"<path d="M{m} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
            m = MARGIN,
            t = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let xl = if self.log_x { 10f64.powf(xv) } else { xv };
            let yl = if self.log_y { 10f64.powf(yv) } else { yv };
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                px(xl),
                H - MARGIN + 16.0,
                tick(xl)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN - 4.0,
                py(yl) + 4.0,
                tick(yl)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (label, y) in &self.hlines {
            let _ = writeln!(
                out,
                r##"<line x1="{m}" x2="{r}" y1="{y:.1}" y2="{y:.1}" stroke="#555" stroke-dasharray="4 3"/><text x="{r}" y="{ty:.1}" text-anchor="end" fill="#555">{l}</text>"##,
                m = MARGIN,
                r = W - MARGIN,
                y = py(*y),
                ty = py(*y) - 4.0,
                l = escape(label)
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<(usize, f64, f64)> = s
                .points
                .iter()
                .enumerate()
                .filter(|(_, (x, y))| {
                    y.is_finite() && !(self.log_x && *x <= 0.0) && !(self.log_y && *y <= 0.0)
                })
                .map(|(i, (x, y))| (i, px(*x), py(*y)))
                .collect();
            if s.line && pts.len() > 1 {
                let d: Vec<String> = pts
                    .iter()
                    .enumerate()
                    .map(|(j, (_, x, y))| format!("{}{x:.1} {y:.1}", if j == 0 { "M" } else { "L" }))
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<path d="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
                    d.join(" ")
                );
            }
            for (i, x, y) in &pts {
                if let Some(err) = &s.errors {
                    let (_, yv) = s.points[*i];
                    let lo = if self.log_y { (yv - err[*i]).max(yv * 1e-3) } else { yv - err[*i] };
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x:.1}" x2="{x:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}"/>"#,
                        py(lo),
                        py(yv + err[*i])
                    );
                }
                if !s.line {
                    let _ = writeln!(out, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = MARGIN + 16.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                W - MARGIN - 150.0,
                ly - 9.0,
                W - MARGIN - 135.0,
                ly,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
