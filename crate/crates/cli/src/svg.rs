//! Static line plots on a fixed 800×600 canvas.

use std::fmt::Write as _;

use thiserror::Error;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct PlotOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum SvgError {
    #[error("series {0:?} has fewer than 2 points")]
    TooFewPoints(String),
    #[error("nothing to plot")]
    Empty,
    #[error("series {0:?} has a non-positive value on a log axis")]
    LogDomain(String),
    #[error("series {0:?} has a non-finite value")]
    NonFinite(String),
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = values
            .map(|v| if log { v.log10() } else { v })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    /// Position in `[0, 1]`.
    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn label(&self, u: f64) -> String {
        let v = self.lo + u * (self.hi - self.lo);
        if self.log {
            format!("1e{v:.1}")
        } else {
            format!("{v:.4e}")
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(series: &[Series], opts: &PlotOptions) -> Result<String, SvgError> {
    if series.is_empty() {
        return Err(SvgError::Empty);
    }
    for s in series {
        if s.points.len() < 2 {
            return Err(SvgError::TooFewPoints(s.label.clone()));
        }
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(SvgError::NonFinite(s.label.clone()));
        }
        if s.points
            .iter()
            .any(|&(x, y)| (opts.log_x && x <= 0.0) || (opts.log_y && y <= 0.0))
        {
            return Err(SvgError::LogDomain(s.label.clone()));
        }
    }
    let all = || series.iter().flat_map(|s| s.points.iter().copied());
    let ax = Axis::new(all().map(|p| p.0), opts.log_x);
    let ay = Axis::new(all().map(|p| p.1), opts.log_y);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + ax.unit(x) * pw;
    let py = |y: f64| TOP + (1.0 - ay.unit(y)) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let u = i as f64 / 4.0;
        let (x, y) = (LEFT + u * pw, TOP + (1.0 - u) * ph);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ccc"/><text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + ph,
            TOP + ph + 16.0,
            ax.label(u)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ccc"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 4.0,
            y + 4.0,
            ay.label(u)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" font-size="14" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&opts.title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(&opts.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&opts.y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 16.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: Vec<(f64, f64)>) -> Vec<Series> {
        vec![Series {
            label: "s".into(),
            points,
        }]
    }

    #[test]
    fn two_points_give_one_segment() {
        let svg = render(&series(vec![(0.0, 0.0), (1.0, 1.0)]), &PlotOptions::default()).unwrap();
        assert!(svg.contains(r#"points="80.00,540.00 640.00,40.00""#), "{svg}");
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains(r#"width="800" height="600""#));
    }

    #[test]
    fn rejects_short_and_empty_series() {
        let opts = PlotOptions::default();
        assert_eq!(render(&[], &opts), Err(SvgError::Empty));
        assert!(matches!(render(&series(vec![]), &opts), Err(SvgError::TooFewPoints(_))));
        assert!(matches!(render(&series(vec![(0.0, 1.0)]), &opts), Err(SvgError::TooFewPoints(_))));
    }

    #[test]
    fn log_axis_needs_positive_values() {
        let opts = PlotOptions {
            log_y: true,
            ..Default::default()
        };
        assert!(matches!(
            render(&series(vec![(0.0, 1.0), (1.0, 0.0)]), &opts),
            Err(SvgError::LogDomain(_))
        ));
        assert!(render(&series(vec![(0.0, 1e-3), (1.0, 1e3)]), &opts).is_ok());
    }

    #[test]
    fn constant_series_is_drawable_and_deterministic() {
        let s = series(vec![(0.0, 2.0), (1.0, 2.0), (2.0, 2.0)]);
        let a = render(&s, &PlotOptions::default()).unwrap();
        let b = render(&s, &PlotOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("NaN"));
    }
}
