use std::path::Path;

use super::{HarnessError, SweepResult};
use crate::risk_mc::rolling_average_levels;

/// Tidy tables of rolling-averaged risk.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// (level, bin, bin_low, bin_high, smoothed_risk_mw), ordered by level then bin.
    pub bins: Vec<(u32, usize, f64, f64, f64)>,
    /// (level, smoothed_risk_mw).
    pub total: Vec<(u32, f64)>,
}

pub fn emit_plot_data(result: &SweepResult) -> PlotData {
    let levels: Vec<u32> = result.levels.iter().map(|l| l.level).collect();
    let edges = result.levels.first().map(|l| l.estimate.bin_edges.edges().to_vec()).unwrap_or_default();
    let nb = edges.len().saturating_sub(1);
    let per_bin: Vec<Vec<f64>> = (0..nb)
        .map(|b| {
            let series: Vec<f64> = result.levels.iter().map(|l| l.estimate.bin_risk_mw[b]).collect();
            rolling_average_levels(&levels, &series)
        })
        .collect();
    let mut bins = Vec::with_capacity(levels.len() * nb);
    for (i, &level) in levels.iter().enumerate() {
        for b in 0..nb {
            bins.push((level, b, edges[b], edges[b + 1], per_bin[b][i]));
        }
    }
    let total = levels.iter().copied().zip(result.smoothed_total()).collect();
    PlotData { bins, total }
}

/// Writes `plot_bins.csv` and `plot_total.csv` into `dir`.
pub fn write_plot_data(data: &PlotData, dir: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(dir.join("plot_bins.csv"))?;
    w.write_record(["level", "bin", "bin_low", "bin_high", "smoothed_risk_mw"])?;
    for (level, bin, lo, hi, v) in &data.bins {
        w.write_record([level.to_string(), bin.to_string(), lo.to_string(), hi.to_string(), v.to_string()])?;
    }
    w.flush().map_err(HarnessError::io(dir))?;
    let mut w = csv::Writer::from_path(dir.join("plot_total.csv"))?;
    w.write_record(["level", "smoothed_risk_mw"])?;
    for (level, v) in &data.total {
        w.write_record([level.to_string(), v.to_string()])?;
    }
    w.flush().map_err(HarnessError::io(dir))
}
