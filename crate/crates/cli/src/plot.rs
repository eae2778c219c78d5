//! Static SVG chart: empirical points with ±2 s.e. bars over a theory curve.

use anyhow::{anyhow, Result};
use plotters::prelude::*;

pub(crate) struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub curve: Vec<(f64, f64)>,
    /// (x, value, standard error).
    pub points: Vec<(f64, f64, f64)>,
}

pub(crate) fn render_svg(plot: &Plot) -> Result<String> {
    let xs = plot.curve.iter().map(|p| p.0).chain(plot.points.iter().map(|p| p.0));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if !(x_lo < x_hi) {
        return Err(anyhow!("plot '{}' has no x range", plot.title));
    }
    let ys = plot
        .curve
        .iter()
        .map(|p| p.1)
        .chain(plot.points.iter().flat_map(|p| [p.1 - 2.0 * p.2, p.1 + 2.0 * p.2]));
    let (y_lo, y_hi) = ys.fold((0.0f64, 1.0f64), |(lo, hi), y| (lo.min(y), hi.max(y)));
    let draw = |e: &dyn std::fmt::Display| anyhow!("drawing '{}': {e}", plot.title);

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 450)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| draw(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(&plot.title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(56)
            .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi * 1.02)
            .map_err(|e| draw(&e))?;
        chart
            .configure_mesh()
            .x_desc(plot.x_label.as_str())
            .y_desc(plot.y_label.as_str())
            .draw()
            .map_err(|e| draw(&e))?;
        chart
            .draw_series(LineSeries::new(plot.curve.iter().copied(), BLUE.stroke_width(2)))
            .map_err(|e| draw(&e))?
            .label("theory")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE.stroke_width(2)));
        chart
            .draw_series(plot.points.iter().map(|&(x, v, se)| {
                ErrorBar::new_vertical(x, v - 2.0 * se, v, v + 2.0 * se, RED.filled(), 8)
            }))
            .map_err(|e| draw(&e))?
            .label("empirical ± 2 s.e.")
            .legend(|(x, y)| Circle::new((x + 10, y), 3, RED.filled()));
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::LowerLeft)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| draw(&e))?;
        root.present().map_err(|e| draw(&e))?;
    }
    Ok(svg)
}
