//! Minimal SVG line plots: true vs. estimated CO₂ above true vs. estimated
//! occupancy, one file per identified day.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 50.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

pub struct Panel<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
}

fn bounds(panel: &Panel) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &panel.series {
        for &v in s.values.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn draw_panel(out: &mut String, panel: &Panel, top: f64, x_label: &str) {
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let (lo, hi) = bounds(panel);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        top - 8.0,
        panel.title
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        top + PANEL_H / 2.0,
        top + PANEL_H / 2.0,
        panel.y_label
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = top + PANEL_H - PANEL_H * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{:.0}</text>"#,
            MARGIN_L - 4.0,
            y + 3.0,
            v
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{x_label}</text>"#,
        MARGIN_L + plot_w / 2.0,
        top + PANEL_H + 16.0
    );
    for (i, s) in panel.series.iter().enumerate() {
        let n = s.values.len().max(2) - 1;
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let x = MARGIN_L + plot_w * t as f64 / n as f64;
                let y = top + PANEL_H * (hi - v) / (hi - lo);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            s.color,
            points.join(" ")
        );
        let ly = top + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{}">{}</text>"#,
            MARGIN_L + 8.0,
            s.color,
            s.label
        );
    }
}

/// Renders panels stacked vertically.
pub fn render(panels: &[Panel], x_label: &str) -> String {
    let height = MARGIN_T + panels.len() as f64 * (PANEL_H + GAP);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, MARGIN_T + i as f64 * (PANEL_H + GAP), x_label);
    }
    out.push_str("</svg>\n");
    out
}
