//! Static SVG line plots with stacked panels.
//!
//! Output depends only on the input data: coordinates are printed with a
//! fixed number of decimals and colors follow the series order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const PANEL_GAP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const DASHES: [&str; 3] = ["", "6 3", "2 3"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, t: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            t,
            y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub panels: Vec<Panel>,
}

impl Figure {
    pub fn new(title: impl Into<String>) -> Self {
        Figure {
            title: title.into(),
            x_label: "t [s]".into(),
            panels: Vec::new(),
        }
    }

    pub fn panel(mut self, y_label: impl Into<String>, series: Vec<Series>) -> Self {
        self.panels.push(Panel {
            y_label: y_label.into(),
            series,
        });
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round-number tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let v = if v.abs() < 1e-12 { 0.0 } else { v };
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.5;
        Some((lo - pad, hi + pad))
    } else {
        let pad = 0.05 * (hi - lo);
        Some((lo - pad, hi + pad))
    }
}

/// Render `fig` as an SVG document.
pub fn render_svg(fig: &Figure) -> Result<String> {
    if fig.panels.is_empty() || fig.panels.iter().any(|p| p.series.is_empty()) {
        return Err(Error::arg("a plot needs at least one panel and one series per panel"));
    }
    for s in fig.panels.iter().flat_map(|p| &p.series) {
        if s.t.is_empty() || s.t.len() != s.y.len() {
            return Err(Error::arg(format!("series '{}' is empty or misaligned", s.label)));
        }
    }
    let (t_lo, t_hi) = range(fig.panels.iter().flat_map(|p| &p.series).flat_map(|s| s.t.iter().copied()))
        .ok_or_else(|| Error::arg("no finite time values"))?;
    let height = MARGIN_TOP + fig.panels.len() as f64 * (PANEL_HEIGHT + PANEL_GAP) - PANEL_GAP + MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {height}" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(&fig.title)
    );
    let sx = |t: f64| MARGIN_LEFT + (t - t_lo) / (t_hi - t_lo) * plot_w;
    for (pi, panel) in fig.panels.iter().enumerate() {
        let top = MARGIN_TOP + pi as f64 * (PANEL_HEIGHT + PANEL_GAP);
        let bottom = top + PANEL_HEIGHT;
        let (y_lo, y_hi) = range(panel.series.iter().flat_map(|s| s.y.iter().copied())).unwrap_or((-1.0, 1.0));
        let sy = |y: f64| bottom - (y - y_lo) / (y_hi - y_lo) * PANEL_HEIGHT;
        let _ = writeln!(out, r#"<g class="panel" id="panel{pi}">"#);
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_LEFT:.2}" y="{top:.2}" width="{plot_w:.2}" height="{PANEL_HEIGHT:.2}" fill="none" stroke="#333"/>"##
        );
        for t in ticks(t_lo, t_hi) {
            let x = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{bottom:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                bottom + 16.0,
                tick_label(t)
            );
        }
        for y in ticks(y_lo, y_hi) {
            let yy = sy(y);
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_LEFT:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 6.0,
                yy + 4.0,
                tick_label(y)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            top + PANEL_HEIGHT / 2.0,
            top + PANEL_HEIGHT / 2.0,
            escape(&panel.y_label)
        );
        for (si, s) in panel.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let dash = DASHES[(si / PALETTE.len() + si) % DASHES.len()];
            let dash_attr = if dash.is_empty() {
                String::new()
            } else {
                format!(r#" stroke-dasharray="{dash}""#)
            };
            // Non-finite samples split the curve into separate polylines.
            let mut runs: Vec<Vec<String>> = vec![Vec::new()];
            for (t, y) in s.t.iter().zip(&s.y) {
                if t.is_finite() && y.is_finite() {
                    runs.last_mut().unwrap().push(format!("{:.2},{:.2}", sx(*t), sy(*y)));
                } else if !runs.last().unwrap().is_empty() {
                    runs.push(Vec::new());
                }
            }
            let _ = writeln!(out, r#"<g class="series" data-label="{}">"#, escape(&s.label));
            for run in runs.iter().filter(|r| !r.is_empty()) {
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.6"{dash_attr} points="{}"/>"#,
                    run.join(" ")
                );
            }
            let _ = writeln!(out, "</g>");
            let ly = top + 14.0 + 18.0 * si as f64;
            let lx = MARGIN_LEFT + plot_w + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash_attr}/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 24.0,
                lx + 30.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        if pi + 1 == fig.panels.len() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                MARGIN_LEFT + plot_w / 2.0,
                bottom + 36.0,
                escape(&fig.x_label)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_plot(fig: &Figure, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_svg(fig)?)?;
    Ok(())
}
