//! Minimal standalone SVG line plots.

use std::fmt::Write;
use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Horizontal dashed reference line and its legend label.
    pub baseline: Option<(String, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Renders the series as an SVG document.
pub fn render_svg(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(invalid("plot needs at least one non-empty series"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                return Err(invalid(format!("series {} has a non-finite point", s.name)));
            }
            xs.push(x);
            ys.push(y);
        }
    }
    if let Some((_, b)) = &style.baseline {
        if !b.is_finite() {
            return Err(invalid("baseline reference is not finite"));
        }
        ys.push(*b);
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = padded_range(min(&xs), max(&xs));
    let (y0, y1) = padded_range(min(&ys), max(&ys));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&style.title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.1}" y1="{1}" x2="{0:.1}" y2="{2}" stroke="black"/><text x="{0:.1}" y="{3}" text-anchor="middle">{4:.2}</text>"#,
            px(xv),
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 19.0,
            xv
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1:.1}" x2="{2}" y2="{1:.1}" stroke="black"/><text x="{3}" y="{4:.1}" text-anchor="end">{5:.3}</text>"#,
            LEFT - 5.0,
            py(yv),
            LEFT,
            LEFT - 8.0,
            py(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(&style.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(&style.y_label)
    );

    let mut legend_y = TOP + 10.0;
    let legend_x = LEFT + pw + 15.0;
    let mut legend = |svg: &mut String, stroke: &str, dash: &str, label: &str| {
        let _ = writeln!(
            svg,
            r#"<line x1="{legend_x}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{stroke}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            legend_x + 25.0,
            legend_x + 32.0,
            legend_y + 4.0,
            escape(label)
        );
        legend_y += 20.0;
    };

    if let Some((label, b)) = &style.baseline {
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#d62728" stroke-width="1.5" stroke-dasharray="6 4"/>"##,
            py(*b),
            LEFT + pw
        );
        legend(&mut svg, "#d62728", r#" stroke-dasharray="6 4""#, label);
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        legend(&mut svg, color, "", &s.name);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(series: &[Series], style: &PlotStyle, path: &Path) -> Result<()> {
    let svg = render_svg(series, style)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(name: &str, points: Vec<(f64, f64)>) -> Series {
        Series {
            name: name.into(),
            points,
        }
    }

    #[test]
    fn single_point_and_legend_entries() {
        let one = render_svg(&[s("a", vec![(0.5, 0.8)])], &PlotStyle::default()).unwrap();
        assert!(one.starts_with("<svg") && one.trim_end().ends_with("</svg>"));
        let style = PlotStyle {
            baseline: Some(("base".into(), 0.7)),
            ..PlotStyle::default()
        };
        let two = render_svg(
            &[s("a<b", vec![(0.1, 0.5), (0.2, 0.6)]), s("c", vec![(0.1, 0.4)])],
            &style,
        )
        .unwrap();
        assert_eq!(two.matches("<polyline").count(), 2);
        assert!(two.contains("a&lt;b"));
        assert!(two.contains("stroke-dasharray"));
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(render_svg(&[], &PlotStyle::default()).is_err());
        assert!(render_svg(&[s("a", vec![])], &PlotStyle::default()).is_err());
        assert!(render_svg(&[s("a", vec![(0.0, f64::NAN)])], &PlotStyle::default()).is_err());
    }
}
