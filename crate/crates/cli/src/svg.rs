//! Minimal SVG plots: points with error bars, fitted curves, bands.
//!
//! The root element carries the data-to-pixel transform as `data-*`
//! attributes so plots can be checked structurally.

use std::fmt::Write;

use coherence_core::fit::{FitResult, VisibilityBand, VisibilityPoint};
use coherence_core::shots::DataSet;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 360.0;
/// Samples per fitted curve.
pub const CURVE_SAMPLES: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (RIGHT - LEFT)
    }

    pub fn py(&self, y: f64) -> f64 {
        BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (BOTTOM - TOP)
    }

    /// Inverse of [`Frame::px`].
    pub fn data_x(&self, px: f64) -> f64 {
        self.x_min + (px - LEFT) / (RIGHT - LEFT) * (self.x_max - self.x_min)
    }

    pub fn data_y(&self, py: f64) -> f64 {
        self.y_min + (BOTTOM - py) / (BOTTOM - TOP) * (self.y_max - self.y_min)
    }

    /// Reads the transform back from a rendered plot.
    pub fn from_svg(svg: &str) -> Option<Frame> {
        let attr = |name: &str| -> Option<f64> {
            let key = format!("{name}=\"");
            let i = svg.find(&key)? + key.len();
            svg[i..].split('"').next()?.parse().ok()
        };
        Some(Frame { x_min: attr("data-x-min")?, x_max: attr("data-x-max")?, y_min: attr("data-y-min")?, y_max: attr("data-y-max")? })
    }
}

fn padded(lo: f64, hi: f64, pad: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo - 0.5, lo + 0.5);
    }
    let d = (hi - lo) * pad;
    (lo - d, hi + d)
}

/// Round tick spacing giving roughly `n` ticks.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

struct Canvas {
    frame: Frame,
    body: String,
}

impl Canvas {
    fn new(frame: Frame, title: &str, x_label: &str, x_scale: f64, y_label: &str) -> Self {
        let mut c = Canvas { frame, body: String::new() };
        let b = &mut c.body;
        let _ =
            writeln!(b, r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#, RIGHT - LEFT, BOTTOM - TOP);
        for t in ticks(frame.x_min, frame.x_max, 6) {
            let x = frame.px(t);
            let _ = writeln!(b, r#"<line class="tick" x1="{x:.2}" y1="{BOTTOM}" x2="{x:.2}" y2="{}" stroke="black"/>"#, BOTTOM - 5.0);
            let _ = writeln!(
                b,
                r#"<text x="{x:.2}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
                BOTTOM + 18.0,
                fmt_tick(t * x_scale)
            );
        }
        for t in ticks(frame.y_min, frame.y_max, 5) {
            let y = frame.py(t);
            let _ = writeln!(b, r#"<line class="tick" x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="black"/>"#, LEFT + 5.0);
            let _ = writeln!(b, r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(t));
        }
        let _ = writeln!(
            b,
            r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
            0.5 * (LEFT + RIGHT),
            HEIGHT - 20.0,
            escape(x_label)
        );
        let _ = writeln!(
            b,
            r#"<text x="20" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
            0.5 * (TOP + BOTTOM),
            0.5 * (TOP + BOTTOM),
            escape(y_label)
        );
        let _ = writeln!(b, r#"<text x="{}" y="25" font-size="14" text-anchor="middle">{}</text>"#, 0.5 * (LEFT + RIGHT), escape(title));
        c
    }

    fn points(&mut self, pts: impl Iterator<Item = (f64, f64, f64)>) {
        let f = self.frame;
        self.body.push_str("<g class=\"data\">\n");
        for (x, y, e) in pts {
            let (px, py) = (f.px(x), f.py(y));
            if e > 0.0 && e.is_finite() {
                let _ = writeln!(
                    self.body,
                    r#"<line class="errbar" x1="{px:.4}" y1="{:.4}" x2="{px:.4}" y2="{:.4}" stroke="black"/>"#,
                    f.py(y - e),
                    f.py(y + e)
                );
            }
            let _ = writeln!(self.body, r#"<circle class="point" cx="{px:.4}" cy="{py:.4}" r="2.5" fill="black"/>"#);
        }
        self.body.push_str("</g>\n");
    }

    fn curve(&mut self, class: &str, color: &str, f: impl Fn(f64) -> f64) {
        let fr = self.frame;
        let pts: Vec<String> = (0..CURVE_SAMPLES)
            .map(|i| fr.x_min + (fr.x_max - fr.x_min) * i as f64 / (CURVE_SAMPLES - 1) as f64)
            .map(|x| (x, f(x)))
            .filter(|(_, y)| y.is_finite())
            .map(|(x, y)| format!("{:.4},{:.4}", fr.px(x), fr.py(y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }

    fn band(&mut self, b: &VisibilityBand) {
        let f = self.frame;
        let upper = b.taus.iter().zip(&b.upper).map(|(t, u)| format!("{:.4},{:.4}", f.px(*t), f.py(*u)));
        let lower = b.taus.iter().zip(&b.lower).rev().map(|(t, l)| format!("{:.4},{:.4}", f.px(*t), f.py(*l)));
        let pts: Vec<String> = upper.chain(lower).collect();
        let _ =
            writeln!(self.body, r##"<polygon class="band" fill="#9ecae1" fill-opacity="0.5" stroke="none" points="{}"/>"##, pts.join(" "));
    }

    fn finish(self) -> String {
        let f = self.frame;
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" "#,
                r#"data-x-min="{:?}" data-x-max="{:?}" data-y-min="{:?}" data-y-max="{:?}" "#,
                r#"data-left="{l}" data-right="{r}" data-top="{t}" data-bottom="{b}">"#,
                "\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n"
            ),
            f.x_min,
            f.x_max,
            f.y_min,
            f.y_max,
            w = WIDTH,
            h = HEIGHT,
            l = LEFT,
            r = RIGHT,
            t = TOP,
            b = BOTTOM,
            body = self.body
        )
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// P₃ versus time (in ms) with an optional fitted curve.
pub fn scan_plot(title: &str, data: &DataSet, fit: Option<&FitResult>) -> String {
    let xs = data.xs();
    let (x_min, x_max) = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    let (x_min, x_max) = if x_max > x_min { (x_min, x_max) } else { padded(x_min, x_max, 0.1) };
    let (lo, hi) = data
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.p3_mean - p.p3_stderr), a.1.max(p.p3_mean + p.p3_stderr)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi.max(lo + 0.1)) } else { (0.0, 1.0) };
    let (y_min, y_max) = padded(lo, hi, 0.05);
    let mut c = Canvas::new(Frame { x_min, x_max, y_min, y_max }, title, "t (ms)", 1e3, "P3");
    if let Some(f) = fit {
        c.curve("fit", "#d62728", |x| f.eval(x));
    }
    c.points(data.points.iter().map(|p| (p.x, p.p3_mean, p.p3_stderr)));
    c.finish()
}

/// Visibility versus `τ_π` (in ms), with decay fit and prediction band.
pub fn visibility_plot(title: &str, pts: &[VisibilityPoint], fit: Option<&FitResult>, band: Option<&VisibilityBand>) -> String {
    let x_max = pts.iter().map(|p| p.tau_pi).chain(band.and_then(|b| b.taus.last().copied())).fold(0.0, f64::max).max(1e-6);
    let hi = pts.iter().map(|p| p.visibility + p.error).fold(1.0, f64::max);
    let mut c =
        Canvas::new(Frame { x_min: 0.0, x_max: x_max * 1.05, y_min: 0.0, y_max: hi * 1.05 }, title, "tau_pi (ms)", 1e3, "visibility");
    if let Some(b) = band {
        c.band(b);
    }
    if let Some(f) = fit {
        c.curve("fit", "#d62728", |x| f.eval(x));
    }
    c.points(pts.iter().map(|p| (p.tau_pi, p.visibility, p.error)));
    c.finish()
}

/// `(x, y)` pairs of the polyline with the given class, in data units.
pub fn curve_samples(svg: &str, class: &str) -> Option<Vec<(f64, f64)>> {
    let frame = Frame::from_svg(svg)?;
    let tag = format!("<polyline class=\"{class}\"");
    let start = svg.find(&tag)?;
    let rest = &svg[start..];
    let i = rest.find("points=\"")? + "points=\"".len();
    let list = rest[i..].split('"').next()?;
    list.split_whitespace()
        .map(|pair| {
            let (a, b) = pair.split_once(',')?;
            Some((frame.data_x(a.parse().ok()?), frame.data_y(b.parse().ok()?)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = Frame { x_min: 1e-3, x_max: 4e-3, y_min: -0.1, y_max: 0.9 };
        for x in [1e-3, 2.5e-3, 4e-3] {
            assert!((f.data_x(f.px(x)) - x).abs() < 1e-15);
        }
        assert!((f.data_y(f.py(0.3)) - 0.3).abs() < 1e-14);
        let svg = Canvas::new(f, "t", "x", 1.0, "y").finish();
        assert_eq!(Frame::from_svg(&svg), Some(f));
    }

    #[test]
    fn ticks_are_round() {
        let t = ticks(0.0, 1.0, 5);
        assert_eq!(t.len(), 6);
        assert!(t.iter().enumerate().all(|(k, v)| (v - 0.2 * k as f64).abs() < 1e-12));
        assert!(ticks(0.0, 3e-3, 6).len() >= 4);
    }

    #[test]
    fn title_is_escaped() {
        let d = DataSet::from_xy(&[0.0, 1.0], &[0.2, 0.4], &[0.01, 0.01]);
        let s = scan_plot("a<b", &d, None);
        assert!(s.contains("a&lt;b") && s.matches("class=\"point\"").count() == 2);
    }
}
