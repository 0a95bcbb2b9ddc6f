use super::config::ScenarioConfig;
use super::output::{results_header, results_values};
use super::pipeline::SweepResult;
use crate::error::{Error, Result};
use plotters::prelude::*;
use std::path::{Path, PathBuf};

/// `(file stem, y label, column suffix)` per plot.
const PLOTS: [(&str, &str, &str); 4] = [
    ("demand", "energy demand (J)", "_energy_j"),
    ("price", "mean unit price (MU/J)", "_unit_price"),
    ("profit", "profit (MU)", "_profit"),
    ("production", "production (J)", "_production_j"),
];

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

pub(crate) fn write_plots(cfg: &ScenarioConfig, results: &[SweepResult], dir: &Path) -> Result<Vec<PathBuf>> {
    let header = results_header(cfg);
    let rows: Vec<(f64, Option<Vec<f64>>)> = results
        .iter()
        .enumerate()
        .map(|(i, r)| (r.axis_value.unwrap_or(i as f64), results_values(r)))
        .collect();
    let x_label = cfg.sweep.as_ref().map_or("point", |s| s.axis.as_str());

    let mut files = Vec::new();
    for (stem, y_label, suffix) in PLOTS {
        let series: Vec<(String, Vec<(f64, f64)>)> = header[2..]
            .iter()
            .enumerate()
            .filter(|(_, h)| h.ends_with(suffix))
            .map(|(c, h)| {
                let pts = rows
                    .iter()
                    .filter_map(|(x, v)| v.as_ref().map(|v| (*x, v[c])))
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .collect();
                (h.trim_end_matches(suffix).to_string(), pts)
            })
            .collect();
        let path = dir.join(format!("{stem}-vs-axis.svg"));
        draw(&path, x_label, y_label, &series).map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        files.push(path);
    }
    Ok(files)
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

fn draw(
    path: &Path,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let pts = series.iter().flat_map(|(_, p)| p);
    let (x0, x1) = pts.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y0, y1) = pts.fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).y_label_formatter(&|v| format!("{v:.3e}")).draw()?;
    for (i, (name, p)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(p.iter().copied(), color.stroke_width(2)))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart.draw_series(p.iter().map(|&xy| Circle::new(xy, 3, color.filled())))?;
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}
