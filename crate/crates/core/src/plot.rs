//! Bitmap figures. No fonts are linked, so charts carry no text; the CSV
//! written next to each image holds the numbers.

use std::path::Path;

use nalgebra::DMatrix;
use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::fock::WignerGrid;
use crate::ppo::Histogram;

const SIZE: (u32, u32) = (800, 600);
const MARGIN: i32 = 30;
const PALETTE: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line chart of several series. `marks` are vertical lines at given x.
pub fn line_chart(path: &Path, series: &[Vec<(f64, f64)>], marks: &[f64]) -> Result<()> {
    let root = BitMapBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (x0, x1) = bounds(series.iter().flatten().map(|p| p.0).chain(marks.iter().copied()));
    let (y0, y1) = bounds(series.iter().flatten().map(|p| p.1));
    let mut chart = ChartBuilder::on(&root).margin(MARGIN).build_cartesian_2d(x0..x1, y0..y1).map_err(plot_err)?;
    chart.plotting_area().draw(&Rectangle::new([(x0, y0), (x1, y1)], BLACK.stroke_width(1))).map_err(plot_err)?;
    for &m in marks {
        chart.draw_series(LineSeries::new([(m, y0), (m, y1)], BLACK.mix(0.4))).map_err(plot_err)?;
    }
    for (k, s) in series.iter().enumerate() {
        chart.draw_series(LineSeries::new(s.iter().copied(), PALETTE[k % PALETTE.len()].stroke_width(2))).map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

pub fn histogram_chart(path: &Path, h: &Histogram) -> Result<()> {
    let root = BitMapBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let x0 = h.edges.first().copied().unwrap_or(0.0);
    let x1 = h.edges.last().copied().unwrap_or(1.0);
    let top = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut chart = ChartBuilder::on(&root).margin(MARGIN).build_cartesian_2d(x0..x1, 0.0..top).map_err(plot_err)?;
    chart.plotting_area().draw(&Rectangle::new([(x0, 0.0), (x1, top)], BLACK.stroke_width(1))).map_err(plot_err)?;
    chart
        .draw_series(h.counts.iter().enumerate().map(|(k, &c)| Rectangle::new([(h.edges[k], 0.0), (h.edges[k + 1], c as f64)], BLUE.mix(0.6).filled())))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Diverging map: red positive, blue negative, scaled by `max |W|`.
pub fn wigner_chart(path: &Path, w: &DMatrix<f64>, grid: &WignerGrid) -> Result<()> {
    let root = BitMapBackend::new(path, (600, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let xs = grid.xs();
    let ps = grid.ps();
    let dx = if xs.len() > 1 { xs[1] - xs[0] } else { 1.0 };
    let dp = if ps.len() > 1 { ps[1] - ps[0] } else { 1.0 };
    let mut chart = ChartBuilder::on(&root)
        .margin(MARGIN)
        .build_cartesian_2d(grid.x_min - dx / 2.0..grid.x_max + dx / 2.0, grid.p_min - dp / 2.0..grid.p_max + dp / 2.0)
        .map_err(plot_err)?;
    let cells = (0..w.nrows()).flat_map(|i| (0..w.ncols()).map(move |j| (i, j)));
    chart
        .draw_series(cells.map(|(i, j)| {
            let v = (w[(i, j)] / scale).clamp(-1.0, 1.0);
            let fade = |t: f64| (255.0 * (1.0 - t)) as u8;
            let colour = if v >= 0.0 { RGBColor(255, fade(v), fade(v)) } else { RGBColor(fade(-v), fade(-v), 255) };
            let (x, p) = (xs[i], ps[j]);
            Rectangle::new([(x - dx / 2.0, p - dp / 2.0), (x + dx / 2.0, p + dp / 2.0)], colour.filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_render_to_png() {
        let dir = tempfile::tempdir().unwrap();
        let s = vec![(0..10).map(|k| (k as f64, (k as f64).sin())).collect::<Vec<_>>()];
        line_chart(&dir.path().join("l.png"), &s, &[3.0]).unwrap();
        let h = Histogram::integer("n", &[0, 1, 1, 4]);
        histogram_chart(&dir.path().join("h.png"), &h).unwrap();
        let g = WignerGrid::square(2.0, 5);
        let w = DMatrix::from_fn(5, 5, |i, j| i as f64 - j as f64);
        wigner_chart(&dir.path().join("w.png"), &w, &g).unwrap();
        for f in ["l.png", "h.png", "w.png"] {
            assert!(std::fs::metadata(dir.path().join(f)).unwrap().len() > 100);
        }
    }
}
