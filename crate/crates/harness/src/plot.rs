//! Deterministic SVG charts. Coordinates are printed with two decimals so
//! identical input gives identical bytes.

use std::fmt::Write as _;

use crate::experiment::{ExperimentReport, ScanReport};
use crate::verify::VerifyReport;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Style {
    Line,
    Dashed,
    Markers,
    Bars,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn new(label: &str, style: Style, xs: &[f64], ys: &[f64]) -> Self {
        Self { label: label.into(), points: xs.iter().copied().zip(ys.iter().copied()).collect(), style }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Series are drawn in order, so later ones sit on top; legend entries
/// follow the same order.
pub fn chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = range(pts().map(|p| p.0));
    let (mut y0, y1) = range(pts().map(|p| p.1));
    if series.iter().any(|s| s.style == Style::Bars) {
        y0 = y0.min(0.0);
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15" font-family="sans-serif">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph,
        TOP + ph
    );
    for k in 0..=4 {
        let u = k as f64 / 4.0;
        let (xv, yv) = (x0 + u * (x1 - x0), y0 + u * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11" font-family="sans-serif">{xv:.3e}</text>"#,
            sx(xv),
            TOP + ph + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11" font-family="sans-serif">{yv:.3e}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" font-family="sans-serif">{}</text>"#,
        LEFT + pw / 2.0,
        H - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let finite: Vec<(f64, f64)> =
            ser.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        match ser.style {
            Style::Line | Style::Dashed => {
                if finite.len() > 1 {
                    let path: Vec<String> = finite.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let dash = if ser.style == Style::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                        path.join(" ")
                    );
                }
            }
            Style::Markers => {
                for &(x, y) in &finite {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
                }
            }
            Style::Bars => {
                let bw = if finite.len() > 1 { (sx(finite[1].0) - sx(finite[0].0)).abs() * 0.9 } else { 10.0 };
                for &(x, y) in &finite {
                    let (top, base) = (sy(y.max(0.0)), sy(y.min(0.0)));
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                        sx(x) - bw / 2.0,
                        top,
                        bw,
                        base - top
                    );
                }
            }
        }
        let ly = TOP + 12.0 + 16.0 * k as f64;
        let lx = LEFT + pw - 170.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" font-family="sans-serif">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Measured distance with its noise floor, then the analytic bound on top.
pub fn mixing_svg(r: &ExperimentReport) -> String {
    let floor = vec![r.floor; r.times.len()];
    let series = vec![
        Series::new("measured W", Style::Line, &r.times, &r.w),
        Series::new("sample floor", Style::Dashed, &r.times, &floor),
        Series::new("W2 upper bound", Style::Dashed, &r.times, &r.bounds.w2_upper),
    ];
    let title =
        format!("mixing curve, n={} beta={} a={} b={}", r.params.n(), r.params.beta(), r.params.a(), r.params.b());
    chart(&title, "t", "distance", &series)
}

/// Histogram of curvature margins pooled over parameter sets.
pub fn margins_svg(r: &VerifyReport) -> String {
    let all: Vec<f64> = r.curvature.iter().flat_map(|c| c.margins.iter().copied()).filter(|v| v.is_finite()).collect();
    let series = if all.is_empty() {
        Vec::new()
    } else {
        let (lo, hi) = range(all.iter().copied());
        let bins = 30;
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0.0; bins];
        for v in &all {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1.0;
        }
        let centers: Vec<f64> = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
        vec![Series::new("points", Style::Bars, &centers, &counts)]
    };
    chart("curvature margin over (C_a+C_b)/4", "min eigenvalue - bound", "count", &series)
}

/// `W(t)/W(0)` against `t / t_mix` for each size.
pub fn profiles_svg(r: &ScanReport) -> String {
    let series: Vec<Series> = r
        .curves
        .iter()
        .zip(&r.rows)
        .filter_map(|(c, row)| {
            let tm = row.t_mix.filter(|t| *t > 0.0)?;
            let xs: Vec<f64> = c.times.iter().map(|t| t / tm).collect();
            let ys: Vec<f64> = c.w.iter().map(|w| w / row.w0).collect();
            Some(Series::new(&format!("n={}", row.n), Style::Line, &xs, &ys))
        })
        .collect();
    chart("cutoff profiles", "t / t_mix", "W(t) / W(0)", &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_chart_has_axes_only() {
        let s = chart("empty", "x", "y", &[]);
        assert!(s.starts_with("<svg"));
        assert!(s.contains("<line"));
        assert!(!s.contains("<polyline"));
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn identical_input_identical_bytes() {
        let ser = vec![Series::new("a", Style::Line, &[0.0, 1.0, 2.0], &[1.0, 0.5, 0.25])];
        assert_eq!(chart("t", "x", "y", &ser), chart("t", "x", "y", &ser));
    }

    #[test]
    fn later_series_drawn_on_top_and_legend_in_order() {
        let ser = vec![
            Series::new("measured W", Style::Line, &[0.0, 1.0], &[1.0, 0.5]),
            Series::new("W2 upper bound", Style::Dashed, &[0.0, 1.0], &[2.0, 1.0]),
        ];
        let s = chart("t", "x", "y", &ser);
        let m = s.find("measured W").unwrap();
        let b = s.find("W2 upper bound").unwrap();
        assert!(m < b);
        let first_poly = s.find("<polyline").unwrap();
        let dashed = s.find("stroke-dasharray").unwrap();
        assert!(first_poly < dashed);
    }

    #[test]
    fn non_finite_points_are_skipped() {
        let ser = vec![Series::new("a", Style::Markers, &[0.0, 1.0], &[f64::NAN, 1.0])];
        assert_eq!(chart("t", "x", "y", &ser).matches("<circle").count(), 1);
    }
}
