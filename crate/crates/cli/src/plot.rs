//! Static SVG line plots of MSE against the swept variable, log10 y axis.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ridgeiv::{GridVariable, SweepResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Renders the MSE curve for one `lambda` as SVG text. Points with a non-positive or
/// non-finite MSE cannot be drawn on a log axis and are left out.
pub fn render_plot(result: &SweepResult, lambda: f64) -> Result<String> {
    let cells: Vec<_> = result.cells_for(lambda).collect();
    if cells.is_empty() {
        bail!("no sweep cells for lambda = {lambda}");
    }
    let points: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.mse.is_finite() && c.mse > 0.0)
        .map(|c| (c.grid_value, c.mse.log10()))
        .collect();

    let (x_lo, x_hi) = padded(
        cells
            .iter()
            .map(|c| c.grid_value)
            .fold(f64::INFINITY, f64::min),
        cells
            .iter()
            .map(|c| c.grid_value)
            .fold(f64::NEG_INFINITY, f64::max),
    );
    let (y_lo, y_hi) = if points.is_empty() {
        (0.0, 1.0)
    } else {
        padded(
            points
                .iter()
                .map(|p| p.1)
                .fold(f64::INFINITY, f64::min)
                .floor(),
            points
                .iter()
                .map(|p| p.1)
                .fold(f64::NEG_INFINITY, f64::max)
                .ceil(),
        )
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let x_label = match result.grid_variable {
        GridVariable::Pi1 => "first-stage slope pi1",
        GridVariable::Beta1 => "effect size beta1",
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )?;
    writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">MSE of ridge IV, lambda = {lambda}</text>"#,
        WIDTH / 2.0
    )?;
    // axes
    writeln!(
        s,
        r#"<path d="M{:.2},{:.2} V{:.2} H{:.2}" stroke="black" fill="none"/>"#,
        LEFT,
        TOP,
        TOP + plot_h,
        LEFT + plot_w
    )?;
    for i in 0..=4 {
        let x = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let px = sx(x);
        writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{x:.3}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0
        )?;
    }
    let decades = (y_hi - y_lo).round() as i64;
    let step = ((decades as f64) / 8.0).ceil().max(1.0) as i64;
    let mut k = y_lo.round() as i64;
    while k as f64 <= y_hi + 1e-9 {
        let py = sy(k as f64);
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        )?;
        k += step;
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    )?;
    writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">MSE (log10 scale)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    )?;

    if points.len() > 1 {
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            coords.join(" ")
        )?;
    }
    for &(x, y) in &points {
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            sx(x),
            sy(y)
        )?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(result: &SweepResult, lambda: f64, path: &Path) -> Result<()> {
    let svg = render_plot(result, lambda)?;
    std::fs::write(path, svg).with_context(|| format!("cannot write {}", path.display()))
}

/// File name used for the plot of one lambda, e.g. `mse_lambda_0.8.svg`.
pub fn plot_file_name(lambda: f64) -> String {
    format!("mse_lambda_{lambda}.svg")
}
