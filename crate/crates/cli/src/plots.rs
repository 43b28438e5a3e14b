//! SVG figure rendering for reports.

use std::path::Path;

use plotters::prelude::*;

use vpaudit_core::error::{Error, Result};
use vpaudit_core::report::Matrix;

fn plot_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("plot {what}: {e}"))
}

const SERIES_COLORS: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Multi-series line chart over a shared numeric x-axis.
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    if series.is_empty() || series.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(Error::Input(format!("no data for plot '{title}'")));
    }
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .collect();
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_pad = ((x_max - x_min) * 0.05).max(1e-9);

    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(title, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(x_min - x_pad..x_max + x_pad, 0.0..1.05)
        .map_err(|e| plot_err(title, e))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(title, e))?;
    for (i, (name, points)) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_err(title, e))?
            .label(name.clone())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2))
            });
        chart
            .draw_series(
                points
                    .iter()
                    .map(|&(x, y)| Circle::new((x, y), 3, color.filled())),
            )
            .map_err(|e| plot_err(title, e))?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(|e| plot_err(title, e))?;
    root.present().map_err(|e| plot_err(title, e))?;
    Ok(())
}

/// Accuracy heatmap with matched configurations on the diagonal.
pub fn heatmap(path: &Path, title: &str, matrix: &Matrix) -> Result<()> {
    let n_rows = matrix.values.len();
    let n_cols = matrix.values.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::Input(format!("empty matrix for plot '{title}'")));
    }
    let root = SVGBackend::new(path, (560, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(title, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(80)
        .y_label_area_size(90)
        .build_cartesian_2d(0..n_cols as i32, (n_rows as i32)..0)
        .map_err(|e| plot_err(title, e))?;
    let row_labels = matrix.row_labels.clone();
    let col_labels = matrix.col_labels.clone();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .disable_y_mesh()
        .x_labels(n_cols)
        .y_labels(n_rows)
        .x_label_formatter(&move |v| {
            col_labels
                .get(*v as usize)
                .cloned()
                .unwrap_or_default()
        })
        .y_label_formatter(&move |v| {
            let idx = (*v as usize).saturating_sub(1);
            row_labels.get(idx).cloned().unwrap_or_default()
        })
        .x_desc("target")
        .y_desc("shadow")
        .draw()
        .map_err(|e| plot_err(title, e))?;
    for (r, row) in matrix.values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            // 0.5 (chance) maps to light, 1.0 to saturated blue
            let t = ((v - 0.5).max(0.0) * 2.0).clamp(0.0, 1.0);
            let color = RGBColor(
                (240.0 - 180.0 * t) as u8,
                (244.0 - 120.0 * t) as u8,
                250,
            );
            chart
                .draw_series(std::iter::once(Rectangle::new(
                    [(c as i32, r as i32), (c as i32 + 1, r as i32 + 1)],
                    color.filled(),
                )))
                .map_err(|e| plot_err(title, e))?;
            chart
                .draw_series(std::iter::once(Text::new(
                    format!("{v:.3}"),
                    (c as i32, r as i32),
                    ("sans-serif", 15).into_font().color(&BLACK),
                )))
                .map_err(|e| plot_err(title, e))?;
        }
    }
    root.present().map_err(|e| plot_err(title, e))?;
    Ok(())
}

/// Scatter plot with a caption annotation (e.g. a correlation value).
pub fn scatter(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
    annotation: &str,
) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Input(format!("no data for plot '{title}'")));
    }
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let pad = ((x_max - x_min) * 0.08).max(0.01);
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(title, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{title} ({annotation})"), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(x_min - pad..x_max + pad, 0.0..1.05)
        .map_err(|e| plot_err(title, e))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(title, e))?;
    chart
        .draw_series(
            points
                .iter()
                .map(|&(x, y)| Circle::new((x, y), 4, SERIES_COLORS[0].filled())),
        )
        .map_err(|e| plot_err(title, e))?;
    root.present().map_err(|e| plot_err(title, e))?;
    Ok(())
}
