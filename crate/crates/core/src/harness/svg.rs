//! Static SVG 1.1 charts: log-scale convergence curves and cost heatmaps.
//!
//! Output depends only on the input data, so identical data gives identical
//! bytes. Coordinates are printed with two decimals.

use std::fmt::Write as _;
use std::path::Path;

use super::export::write_bytes;
use super::HarnessError;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Curves drawn against a logarithmic y axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Row-major grid of costs; `None` marks cells without a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub row_label: String,
    pub col_label: String,
    pub rows: u32,
    pub cols: u32,
    pub values: Vec<Option<f64>>,
    /// One-based `(row, col)` of the outlined cell.
    pub highlight: Option<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plot {
    Lines(LineChart),
    Heatmap(Heatmap),
}

pub fn render(plot: &Plot) -> Result<String, HarnessError> {
    match plot {
        Plot::Lines(c) => render_lines(c),
        Plot::Heatmap(h) => render_heatmap(h),
    }
}

pub fn render_svg(plot: &Plot, path: &Path) -> Result<(), HarnessError> {
    write_bytes(path, render(plot)?.as_bytes())
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

fn note(out: &mut String, x: f64, y: f64, text: &str) {
    let _ = writeln!(
        out,
        r##"<text class="note" x="{x:.2}" y="{y:.2}" fill="#a00">{}</text>"##,
        escape(text)
    );
}

fn tick_label(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e7 {
        format!("{v:.0}")
    } else {
        format!("{v:.3e}")
    }
}

/// Every `k`-th point plus the last, so at most about [`MAX_POINTS`] remain.
fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let k = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<_> = points.iter().copied().step_by(k).collect();
    if (points.len() - 1) % k != 0 {
        out.push(points[points.len() - 1]);
    }
    out
}

pub fn render_lines(chart: &LineChart) -> Result<String, HarnessError> {
    if chart.series.is_empty() {
        return Err(HarnessError::EmptyPlot("line chart without series"));
    }
    let (width, height) = (760.0, 460.0);
    let (left, right, top, bottom) = (80.0, 200.0, 40.0, 60.0);
    let (pw, ph) = (width - left - right, height - top - bottom);

    let usable: Vec<Vec<(f64, f64)>> = chart
        .series
        .iter()
        .map(|s| {
            let pts: Vec<_> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && *y > 0.0)
                .map(|&(x, y)| (x, y.log10()))
                .collect();
            thin(&pts)
        })
        .collect();
    let all = usable.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut count = 0usize;
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
        count += 1;
    }
    let mut notes = Vec::new();
    if count == 0 {
        notes.push("no positive finite values to plot");
        (x0, x1, y0, y1) = (0.0, 1.0, -1.0, 0.0);
    } else if count == 1 || x0 == x1 || y0 == y1 {
        notes.push("degenerate data: single point or constant range");
    }
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let (mut y0, mut y1) = (y0.floor(), y1.ceil());
    if y0 == y1 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    header(&mut out, width, height, &chart.title);
    let _ = writeln!(
        out,
        r##"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##
    );
    let decades = (y1 - y0) as i64;
    let step = ((decades as f64 / 10.0).ceil() as i64).max(1);
    let mut e = y0 as i64;
    while e <= y1 as i64 {
        let y = sy(e as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            left + pw
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            left - 6.0,
            y + 4.0
        );
        e += step;
    }
    for k in 0..=4 {
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let x = sx(xv);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##,
            top + ph,
            top + ph + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            tick_label(xv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        height - 15.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{} (log scale)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(&chart.y_label)
    );

    for (k, pts) in usable.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut coords = String::new();
        for (j, &(x, y)) in pts.iter().enumerate() {
            if j > 0 {
                coords.push(' ');
            }
            let _ = write!(coords, "{:.2},{:.2}", sx(x), sy(y));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>"#
        );
    }

    let lx = left + pw + 16.0;
    let _ = writeln!(out, r#"<g class="legend">"#);
    for (k, s) in chart.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let y = top + 12.0 + 20.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 24.0
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 30.0, y + 4.0, escape(&s.label));
    }
    let _ = writeln!(out, "</g>");
    for (k, text) in notes.iter().enumerate() {
        note(&mut out, left + 8.0, top + 16.0 + 16.0 * k as f64, text);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn lerp_color(t: f64) -> String {
    let (a, b) = ([255.0, 255.0, 204.0], [37.0, 52.0, 148.0]);
    let c: Vec<u8> = (0..3).map(|i| (a[i] + (b[i] - a[i]) * t).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn render_heatmap(map: &Heatmap) -> Result<String, HarnessError> {
    if map.rows == 0 || map.cols == 0 {
        return Err(HarnessError::EmptyPlot("heatmap without cells"));
    }
    if map.values.len() != (map.rows * map.cols) as usize {
        return Err(HarnessError::invalid(format!(
            "heatmap has {} values for a {}x{} grid",
            map.values.len(),
            map.rows,
            map.cols
        )));
    }
    let cell = 64.0;
    let (left, top) = (70.0, 60.0);
    let width = left + cell * map.cols as f64 + 30.0;
    let height = top + cell * map.rows as f64 + 50.0;

    let logs: Vec<Option<f64>> = map
        .values
        .iter()
        .map(|v| v.filter(|c| c.is_finite() && *c > 0.0).map(f64::log10))
        .collect();
    let known: Vec<f64> = logs.iter().flatten().copied().collect();
    let lo = known.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = known.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut notes = Vec::new();
    if known.is_empty() {
        notes.push("no cell has a value");
    } else if known.len() == 1 || lo == hi {
        notes.push("degenerate data: single value");
    }

    let mut out = String::new();
    header(&mut out, width, height.max(160.0), &map.title);
    for r in 0..map.rows {
        let y = top + cell * r as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}={}</text>"#,
            left - 6.0,
            y + cell / 2.0 + 4.0,
            escape(&map.row_label),
            r + 1
        );
        for c in 0..map.cols {
            let x = left + cell * c as f64;
            let k = (r * map.cols + c) as usize;
            let (fill, text) = match (logs[k], map.values[k]) {
                (Some(lv), Some(v)) => {
                    let t = if hi > lo { (lv - lo) / (hi - lo) } else { 0.5 };
                    (lerp_color(t), format!("{v:.2e}"))
                }
                _ => ("#cccccc".to_string(), "n/r".to_string()),
            };
            let _ = writeln!(
                out,
                r##"<rect class="cell" x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}" stroke="#fff"/>"##
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{text}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for c in 0..map.cols {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}={}</text>"#,
            left + cell * c as f64 + cell / 2.0,
            top - 8.0,
            escape(&map.col_label),
            c + 1
        );
    }
    if let Some((r, c)) = map.highlight {
        let _ = writeln!(
            out,
            r##"<rect class="argmin" x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="none" stroke="#d62728" stroke-width="3"/>"##,
            left + cell * (c - 1) as f64,
            top + cell * (r - 1) as f64
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{left:.2}" y="{:.2}">color: log10 cost (light = low); n/r = not reached</text>"#,
        top + cell * map.rows as f64 + 20.0
    );
    for (k, text) in notes.iter().enumerate() {
        note(&mut out, left, top + cell * map.rows as f64 + 36.0 + 16.0 * k as f64, text);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_curves() -> LineChart {
        LineChart {
            title: "gap".into(),
            x_label: "rounds".into(),
            y_label: "opt_gap".into(),
            series: vec![
                Series {
                    label: "A & B".into(),
                    points: (0..50).map(|k| (k as f64, 0.9f64.powi(k))).collect(),
                },
                Series {
                    label: "C".into(),
                    points: (0..50).map(|k| (k as f64, 0.5f64.powi(k))).collect(),
                },
            ],
        }
    }

    #[test]
    fn two_curves_give_two_polylines_and_a_legend() {
        let svg = render_lines(&two_curves()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(r#"<g class="legend">"#));
        assert!(svg.contains("A &amp; B"));
        assert!(!svg.contains("class=\"note\""));
        assert!(!svg.contains("<script"));
        assert_eq!(svg, render_lines(&two_curves()).unwrap());
    }

    #[test]
    fn single_point_gets_a_note() {
        let chart = LineChart {
            series: vec![Series {
                label: "x".into(),
                points: vec![(1.0, 1e-3)],
            }],
            ..two_curves()
        };
        let svg = render_lines(&chart).unwrap();
        assert!(svg.contains(r#"class="note""#));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn empty_input_is_rejected() {
        let chart = LineChart {
            series: vec![],
            ..two_curves()
        };
        assert!(matches!(render_lines(&chart), Err(HarnessError::EmptyPlot(_))));
    }

    #[test]
    fn heatmap_cells_and_outline() {
        let map = Heatmap {
            title: "cost".into(),
            row_label: "d1".into(),
            col_label: "d2".into(),
            rows: 6,
            cols: 6,
            values: (0..36).map(|k| if k == 35 { None } else { Some(1.0 + k as f64) }).collect(),
            highlight: Some((1, 1)),
        };
        let svg = render_heatmap(&map).unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 36);
        assert_eq!(svg.matches(r#"class="argmin""#).count(), 1);
        assert!(svg.contains("n/r"));
        assert_eq!(svg, render_heatmap(&map).unwrap());
    }

    #[test]
    fn long_series_are_thinned_but_keep_the_end() {
        let pts: Vec<_> = (0..10_001).map(|k| (k as f64, 1.0)).collect();
        let t = thin(&pts);
        assert!(t.len() <= MAX_POINTS + 1);
        assert_eq!(t.first(), pts.first());
        assert_eq!(t.last(), pts.last());
    }
}
