use std::path::Path;

use super::Grid;
use crate::error::{Error, Result};
use crate::plot;
use crate::scalar::Real;

/// CSV text, one row per frame, no header.
pub fn grid_csv<T: Real>(g: &Grid<T>) -> String {
    let mut s = String::with_capacity(g.rows() * g.cols() * 12);
    for r in 0..g.rows() {
        let line: Vec<String> = g.row(r).iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn write_grid_csv<T: Real>(g: &Grid<T>, path: &Path) -> Result<()> {
    std::fs::write(path, grid_csv(g)).map_err(|e| Error::io(path, e))
}

/// Heatmap with time on x and frequency bin on y.
pub fn grid_svg<T: Real>(g: &Grid<T>, title: &str) -> String {
    let vals: Vec<f64> = g.data().iter().map(|v| v.to_f64_lossy()).collect();
    plot::heatmap(title, g.rows(), g.cols(), &vals)
}
