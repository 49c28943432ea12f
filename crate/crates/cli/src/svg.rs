//! Minimal deterministic SVG renderings: colored scatter plots and line charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub enum Color {
    /// Categorical label.
    Label(usize),
    /// Continuous value mapped onto a blue-to-yellow ramp.
    Value(f64),
}

pub struct Point {
    pub x: f64,
    pub y: f64,
    pub color: Color,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x0, x1) = bounds(xs);
        let (y0, y1) = bounds(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(48.0, 250.0), lerp(18.0, 230.0), lerp(160.0, 30.0))
}

fn open(out: &mut String, title: &str, f: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (v, anchor, x, y) in [
        (f.x0, "start", PAD, H - PAD + 16.0),
        (f.x1, "end", W - PAD, H - PAD + 16.0),
    ] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, tick(v));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 4.0, H - PAD, tick(f.y0));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 4.0, PAD + 10.0, tick(f.y1));
}

fn tick(v: f64) -> String {
    format!("{v:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn scatter(points: &[Point], title: &str, x_label: &str, y_label: &str) -> String {
    let f = Frame::fit(points.iter().map(|p| p.x), points.iter().map(|p| p.y));
    let (v0, v1) = bounds(points.iter().filter_map(|p| match p.color {
        Color::Value(v) => Some(v),
        Color::Label(_) => None,
    }));
    let mut out = String::new();
    open(&mut out, title, &f, x_label, y_label);
    for p in points {
        let fill = match p.color {
            Color::Label(l) => PALETTE[l % PALETTE.len()].to_string(),
            Color::Value(v) if v.is_finite() => ramp((v - v0) / (v1 - v0)),
            Color::Value(_) => "#000000".to_string(),
        };
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{fill}"/>"#, f.px(p.x), f.py(p.y));
    }
    out.push_str("</svg>\n");
    out
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn lines(series: &[Series], title: &str, x_label: &str, y_label: &str) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let f = Frame::fit(all().map(|p| p.0), all().map(|p| p.1));
    let mut out = String::new();
    open(&mut out, title, &f, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.px(x), f.py(y));
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            PAD + 8.0,
            PAD + 16.0 * (i + 1) as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_has_one_circle_per_point() {
        let pts: Vec<Point> = (0..5)
            .map(|i| Point {
                x: i as f64,
                y: (i * i) as f64,
                color: Color::Label(i),
            })
            .collect();
        let s = scatter(&pts, "t", "x", "y");
        assert_eq!(s.matches("<circle").count(), 5);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
    }

    #[test]
    fn degenerate_ranges_render() {
        let s = lines(
            &[Series {
                label: "a<b".into(),
                points: vec![(1.0, 2.0)],
            }],
            "t",
            "x",
            "y",
        );
        assert!(s.contains("a&lt;b"));
        assert!(!s.contains("NaN"));
    }
}
