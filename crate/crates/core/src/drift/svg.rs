//! Minimal hand-written SVG charts. Coordinates are printed with a fixed
//! number of decimals so output bytes depend only on the inputs.

use std::fmt::Write as _;

use super::{BucketSeries, SpecimenChangeRow};
use crate::types::YearBucket;

const W: f64 = 760.0;
const H: f64 = 380.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const COLORS: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (W - RIGHT + LEFT) / 2.0,
        escape(title)
    );
    let (x0, y0, x1) = (LEFT, H - BOTTOM, W - RIGHT);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (TOP + y0) / 2.0,
        (TOP + y0) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 16.0;
        let _ = writeln!(out, r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, y - 9.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 18.0, escape(label));
    }
}

fn y_ticks(out: &mut String, y_max: f64) {
    let y0 = H - BOTTOM;
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y0 - (y0 - TOP) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, LEFT - 6.0, y + 4.0);
    }
}

/// One polyline per bucket over the normalized counts.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[BucketSeries]) -> String {
    let mut out = String::new();
    header(&mut out, title, x_label, y_label);
    let curves: Vec<(&BucketSeries, &Vec<f64>)> = series
        .iter()
        .filter_map(|s| s.normalized.as_ref().map(|n| (s, n)))
        .collect();
    let n_bins = series.first().map_or(1, |s| s.bins.len()).max(2);
    let y_max = curves
        .iter()
        .flat_map(|(_, n)| n.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    y_ticks(&mut out, y_max);
    let (x0, y0, x1) = (LEFT, H - BOTTOM, W - RIGHT);
    let step = ((n_bins as f64) / 10.0).ceil().max(1.0) as usize;
    if let Some(s) = series.first() {
        for (i, bin) in s.bins.iter().enumerate().step_by(step) {
            let x = x0 + (x1 - x0) * i as f64 / (n_bins - 1) as f64;
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 16.0, escape(bin));
        }
    }
    for (s, norm) in &curves {
        let color = COLORS[s.bucket.index()];
        let mut pts = String::new();
        for (i, v) in norm.iter().enumerate() {
            let x = x0 + (x1 - x0) * i as f64 / (n_bins - 1) as f64;
            let y = y0 - (y0 - TOP) * v / y_max;
            let _ = write!(pts, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
    }
    let entries: Vec<(String, &str)> = YearBucket::ALL
        .iter()
        .map(|b| (b.as_str().to_string(), COLORS[b.index()]))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per specimen type, one bar per bucket.
pub fn specimen_bars(rows: &[SpecimenChangeRow]) -> String {
    let mut out = String::new();
    header(&mut out, "Specimen types with the largest change", "specimen type", "samples");
    let y_max = rows
        .iter()
        .flat_map(|r| r.counts)
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    y_ticks(&mut out, y_max);
    let (x0, y0, x1) = (LEFT, H - BOTTOM, W - RIGHT);
    let group = (x1 - x0) / rows.len().max(1) as f64;
    let bar = group * 0.8 / 4.0;
    for (g, r) in rows.iter().enumerate() {
        let gx = x0 + group * g as f64 + group * 0.1;
        for (b, &c) in r.counts.iter().enumerate() {
            let h = (y0 - TOP) * c as f64 / y_max;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar:.2}" height="{h:.2}" fill="{}"/>"#,
                gx + bar * b as f64,
                y0 - h,
                COLORS[b]
            );
        }
        let cx = gx + bar * 2.0;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.1}" text-anchor="end" font-size="9" transform="rotate(-30 {cx:.2} {:.1})">{}</text>"#,
            y0 + 12.0,
            y0 + 12.0,
            escape(&r.specimen_type)
        );
    }
    let entries: Vec<(String, &str)> = YearBucket::ALL
        .iter()
        .map(|b| (b.as_str().to_string(), COLORS[b.index()]))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}
