//! Plot descriptions with self-contained SVG and plain-text renderers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diagnostics::CorrelogramPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlotKind {
    Scatter {
        points: Vec<(f64, f64)>,
        line: Option<Line>,
    },
    /// Spikes at each lag with a shaded confidence band.
    Correlogram { points: Vec<CorrelogramPoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: PlotKind,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.0 {
        2.0
    } else if f < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(mut x0: f64, mut x1: f64, mut y0: f64, mut y1: f64) -> Self {
        if !(x1 > x0) {
            x0 -= 1.0;
            x1 += 1.0;
        }
        if !(y1 > y0) {
            y0 -= 1.0;
            y1 += 1.0;
        }
        let (px, py) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
        Frame { x0: x0 - px, x1: x1 + px, y0: y0 - py, y1: y1 + py }
    }

    /// Segment of `line` inside the frame, if any.
    fn clip(&self, line: Line) -> Option<(f64, f64, f64, f64)> {
        let y = |x: f64| line.intercept + line.slope * x;
        let (mut xa, mut xb) = (self.x0, self.x1);
        if line.slope != 0.0 {
            let xs = |v: f64| (v - line.intercept) / line.slope;
            let (lo, hi) = {
                let (a, b) = (xs(self.y0), xs(self.y1));
                (a.min(b), a.max(b))
            };
            xa = xa.max(lo);
            xb = xb.min(hi);
        } else if !(self.y0..=self.y1).contains(&line.intercept) {
            return None;
        }
        (xa < xb).then(|| (xa, y(xa), xb, y(xb)))
    }

    fn sx(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

impl PlotSpec {
    /// Renders a standalone SVG document using only generic font families.
    pub fn to_svg(&self) -> String {
        let frame = match &self.kind {
            PlotKind::Scatter { points, .. } => {
                let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
                for &(x, y) in points {
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
                if points.is_empty() {
                    (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
                }
                Frame::new(x0, x1, y0, y1)
            }
            PlotKind::Correlogram { points } => {
                let max_lag = points.iter().map(|p| p.lag).max().unwrap_or(1) as f64;
                let mut lo = -0.2f64;
                let mut hi = 0.2f64;
                for p in points {
                    lo = lo.min(p.value).min(-p.conf_band);
                    hi = hi.max(p.value).max(p.conf_band);
                }
                Frame::new(0.0, max_lag, lo.max(-1.0), hi.min(1.0))
            }
        };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let (bx0, by0, bx1, by1) = (LEFT, TOP, W - RIGHT, H - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{bx0}" y="{by0}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            bx1 - bx0,
            by1 - by0
        );
        for t in ticks(frame.x0, frame.x1) {
            let x = frame.sx(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{by1}" x2="{x:.2}" y2="{:.1}" stroke="black"/><text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
                by1 + 5.0,
                by1 + 18.0,
                fmt_tick(t)
            );
        }
        for t in ticks(frame.y0, frame.y1) {
            let y = frame.sy(t);
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{y:.2}" x2="{bx0}" y2="{y:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
                bx0 - 5.0,
                bx0 - 8.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (bx0 + bx1) / 2.0,
            H - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (by0 + by1) / 2.0,
            (by0 + by1) / 2.0,
            escape(&self.y_label)
        );

        match &self.kind {
            PlotKind::Scatter { points, line } => {
                for &(x, y) in points {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="none" stroke="black"/>"#,
                        frame.sx(x),
                        frame.sy(y)
                    );
                }
                if let Some((xa, ya, xb, yb)) = line.and_then(|l| frame.clip(l)) {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
                        frame.sx(xa),
                        frame.sy(ya),
                        frame.sx(xb),
                        frame.sy(yb)
                    );
                }
            }
            PlotKind::Correlogram { points } => {
                if let Some(band) = points.first().map(|p| p.conf_band) {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{bx0}" y="{:.2}" width="{:.1}" height="{:.2}" fill="lightgray" opacity="0.6"/>"#,
                        frame.sy(band),
                        bx1 - bx0,
                        frame.sy(-band) - frame.sy(band)
                    );
                }
                let zero = frame.sy(0.0);
                let _ = writeln!(s, r#"<line x1="{bx0}" y1="{zero:.2}" x2="{bx1}" y2="{zero:.2}" stroke="black"/>"#);
                for p in points {
                    let x = frame.sx(p.lag as f64);
                    let y = frame.sy(p.value);
                    let _ = writeln!(
                        s,
                        r#"<line x1="{x:.2}" y1="{zero:.2}" x2="{x:.2}" y2="{y:.2}" stroke="black" stroke-width="2"/><circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="black"/>"#
                    );
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }

    /// Plain-text dump of the plotted data, one point per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("# {}\n# x: {}\n# y: {}\n", self.title, self.x_label, self.y_label);
        match &self.kind {
            PlotKind::Scatter { points, line } => {
                if let Some(l) = line {
                    let _ = writeln!(s, "# line: slope={} intercept={}", l.slope, l.intercept);
                }
                for (x, y) in points {
                    let _ = writeln!(s, "{x}\t{y}");
                }
            }
            PlotKind::Correlogram { points } => {
                for p in points {
                    let _ = writeln!(s, "{}\t{}\t{}", p.lag, p.value, p.conf_band);
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_dump_golden() {
        let spec = PlotSpec {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            kind: PlotKind::Scatter { points: vec![(1.0, 2.0), (2.0, 3.5)], line: None },
        };
        assert_eq!(spec.to_text(), "# t\n# x: x\n# y: y\n1\t2\n2\t3.5\n");
    }

    #[test]
    fn svg_is_self_contained() {
        let spec = PlotSpec {
            title: "a < b".into(),
            x_label: "lag".into(),
            y_label: "acf".into(),
            kind: PlotKind::Correlogram {
                points: vec![
                    CorrelogramPoint { lag: 1, value: 0.5, conf_band: 0.1 },
                    CorrelogramPoint { lag: 2, value: -0.2, conf_band: 0.1 },
                ],
            },
        };
        let svg = spec.to_svg();
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("@font-face") && !svg.contains("href"));
        assert_eq!(svg, spec.to_svg());
    }

    #[test]
    fn tick_generation() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.len(), 6);
        assert!(t.iter().zip([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(fmt_tick(0.6000000000000001), "0.6");
        assert_eq!(fmt_tick(-0.0), "0");
    }
}
