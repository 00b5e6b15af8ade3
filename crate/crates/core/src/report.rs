//! Per-layer report rows and their CSV, JSON and SVG renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Header of every report CSV, in column order.
pub const CSV_HEADER: &str =
    "layer_index,block_kind,projection,delta_fro,delta_rel,residual_pre,residual_post,dist_fro,dist_angular_deg";

/// One CSV line. Fields a command does not measure are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub layer_index: usize,
    pub block_kind: String,
    pub projection: String,
    pub delta_fro: Option<f64>,
    pub delta_rel: Option<f64>,
    pub residual_pre: Option<f64>,
    pub residual_post: Option<f64>,
    pub dist_fro: Option<f64>,
    pub dist_angular_deg: Option<f64>,
}

impl ReportRow {
    fn measured(&self) -> [Option<f64>; 6] {
        [self.delta_fro, self.delta_rel, self.residual_pre, self.residual_post, self.dist_fro, self.dist_angular_deg]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    /// Sum of `delta_fro` over all rows.
    pub total_delta_fro: f64,
    /// Largest single-projection `delta_fro`.
    pub max_layer_delta: f64,
    pub method: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub summary: ReportSummary,
    pub rows: Vec<ReportRow>,
}

impl EditReport {
    /// Sorts rows by layer (stable, so projection order within a layer is kept)
    /// and derives the summary.
    pub fn new(mut rows: Vec<ReportRow>, method: &str, seed: u64) -> Self {
        rows.sort_by_key(|r| r.layer_index);
        let deltas = rows.iter().filter_map(|r| r.delta_fro);
        let total_delta_fro = deltas.clone().sum();
        let max_layer_delta = deltas.fold(0.0, f64::max);
        Self { summary: ReportSummary { total_delta_fro, max_layer_delta, method: method.to_string(), seed }, rows }
    }

    pub fn is_all_zero(&self) -> bool {
        self.rows.iter().all(|r| r.measured().iter().flatten().all(|v| *v == 0.0))
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8");
    format!("{CSV_HEADER}\n{body}")
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

/// One line of a chart: label plus `(depth, value)` points.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal line chart with depth on the x axis.
pub fn svg_line_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, pad) = (640.0, 400.0, 56.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let mut y1 = all.iter().fold(0.0f64, |m, p| m.max(p.1));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / y1 * (h - 2.0 * pad);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">depth</text>"#, w / 2.0, h - 16.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{:.3e}</text>"#, pad - 4.0, pad + 4.0, y1);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            pad + 14.0 * (i as f64 + 1.0),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
