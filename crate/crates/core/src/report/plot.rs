use std::fmt::Write as _;
use std::path::Path;

use super::{format_real, Metric, RunReport};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn coord(v: f64) -> String {
    format!("{v:.2}")
}

/// Line plot of `metric` across `reports`: one polyline per report, axes
/// with tick labels and a legend of run ids. Output bytes depend only on
/// the inputs.
pub fn render_svg(reports: &[&RunReport], metric: Metric) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::BadReport("nothing to plot".into()));
    }
    let series: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| {
            r.series(metric).filter(|s| !s.is_empty()).ok_or_else(|| Error::MetricAbsent(metric.name().to_string()))
        })
        .collect::<Result<_>>()?;
    let max_epoch = series.iter().map(Vec::len).max().unwrap_or(1).max(2);
    let (mut lo, mut hi) = if metric.higher_is_better() {
        (0.0, 1.0)
    } else {
        let all = series.iter().flatten().copied();
        (0.0f64.min(all.clone().fold(f64::INFINITY, f64::min)), all.fold(f64::NEG_INFINITY, f64::max))
    };
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        hi = lo + 1.0;
    }
    if !metric.higher_is_better() {
        hi *= 1.05;
        lo = lo.min(0.0);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |epoch: usize| LEFT + (epoch - 1) as f64 / (max_epoch - 1) as f64 * plot_w;
    let y_of = |v: f64| TOP + (1.0 - (v - lo) / (hi - lo)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w, TOP, TOP + plot_h);
    let _ = writeln!(
        svg,
        r#"<path d="M{} {} L{} {} L{} {}" fill="none" stroke="black"/>"#,
        coord(x0),
        coord(y0),
        coord(x0),
        coord(y1),
        coord(x1),
        coord(y1)
    );
    let step = max_epoch.div_ceil(10).max(1);
    for epoch in (1..=max_epoch).filter(|e| (e - 1) % step == 0 || *e == max_epoch) {
        let x = coord(x_of(epoch));
        let _ =
            writeln!(svg, r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#, coord(y1), coord(y1 + 4.0));
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{epoch}</text>"#, coord(y1 + 16.0));
    }
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = coord(y_of(v));
        let _ =
            writeln!(svg, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#, coord(x0 - 4.0), coord(x0));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            coord(x0 - 6.0),
            format_real((v * 1e4).round() / 1e4)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        coord(x0 + plot_w / 2.0),
        coord(HEIGHT - 10.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        coord(y0 + plot_h / 2.0),
        coord(y0 + plot_h / 2.0),
        metric.name()
    );
    for (k, (report, values)) in reports.iter().zip(&series).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let points: Vec<String> =
            values.iter().enumerate().map(|(i, &v)| format!("{},{}", coord(x_of(i + 1)), coord(y_of(v)))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 12.0 + 18.0 * k as f64;
        let lx = x1 + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{colour}" stroke-width="2"/>"#,
            coord(lx),
            coord(ly),
            coord(lx + 20.0),
            coord(ly)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" dominant-baseline="middle">{}</text>"#,
            coord(lx + 26.0),
            coord(ly),
            escape(&report.run_id)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_svg_plot(reports: &[&RunReport], metric: Metric, path: &Path) -> Result<()> {
    write_atomic(path, render_svg(reports, metric)?.as_bytes())
}
