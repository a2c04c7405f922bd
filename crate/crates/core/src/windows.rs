//! Windowed regression datasets: each sample holds the last `W` hours of
//! upstream discharge and downstream stage ending at the target timestamp.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::timeseries::{format_timestamp, TimeSeries, HOUR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub window_hours: usize,
    pub target_stride_hours: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window_hours: 24,
            target_stride_hours: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Discharge,
    Stage,
}

/// z-score parameters, always computed on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

/// Standard deviations below this are replaced by 1.
pub const STD_FLOOR: f64 = 1e-12;

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std < STD_FLOOR { 1.0 } else { std })
}

impl NormStats {
    pub fn fit(x: &Matrix, y: &[f64]) -> NormStats {
        let (x_mean, x_std) = (0..x.cols())
            .map(|j| mean_std(&x.column(j)))
            .unzip();
        let (y_mean, y_std) = mean_std(y);
        NormStats {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    pub fn width(&self) -> usize {
        self.x_mean.len()
    }

    pub fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                got: x.cols(),
            });
        }
        if let Some(i) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput {
                row: i / x.cols(),
                col: i % x.cols(),
            });
        }
        Ok(())
    }

    pub fn transform_x(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.x_mean).zip(&self.x_std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn transform_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_mean) / self.y_std).collect()
    }

    pub fn denormalize_y(&self, y_norm: &[f64]) -> Vec<f64> {
        denormalize_target(y_norm, self)
    }
}

pub fn denormalize_target(y_norm: &[f64], stats: &NormStats) -> Vec<f64> {
    y_norm.iter().map(|v| v * stats.y_std + stats.y_mean).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub timestamps: Vec<i64>,
    /// n × 2W: discharge block then stage block, each oldest to newest.
    pub x: Matrix,
    pub y: Vec<f64>,
    pub window_hours: usize,
    pub norm_stats: NormStats,
    /// Candidate targets dropped because their window touched a gap.
    pub excluded: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn width(&self) -> usize {
        self.x.cols()
    }

    pub fn block_of(&self, col: usize) -> Block {
        if col < self.window_hours {
            Block::Discharge
        } else {
            Block::Stage
        }
    }

    pub fn discharge_columns(&self) -> std::ops::Range<usize> {
        0..self.window_hours
    }

    pub fn stage_columns(&self) -> std::ops::Range<usize> {
        self.window_hours..2 * self.window_hours
    }

    /// Rows at the given indices; norm stats are kept, not refit.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            window_hours: self.window_hours,
            norm_stats: self.norm_stats.clone(),
            excluded: self.excluded,
        }
    }

    /// At most `max` rows, evenly strided from the start.
    pub fn thin(&self, max: Option<usize>) -> Dataset {
        match max {
            Some(m) if m > 0 && m < self.len() => {
                let idx: Vec<usize> = (0..m).map(|k| k * self.len() / m).collect();
                self.subset(&idx)
            }
            _ => self.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let w = self.window_hours;
        let mut out = String::from("timestamp");
        for prefix in ["q", "h"] {
            for lag in (0..w).rev() {
                let _ = write!(out, ",{prefix}_lag{lag}");
            }
        }
        out.push_str(",target\n");
        for (i, row) in self.x.row_iter().enumerate() {
            out.push_str(&format_timestamp(self.timestamps[i]));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", self.y[i]);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Dense hourly lookup over the span of a series.
struct HourGrid {
    start: i64,
    values: Vec<Option<f64>>,
}

impl HourGrid {
    fn new(ts: &TimeSeries, name: &str) -> Result<Self> {
        let Some(&start) = ts.timestamps().first() else {
            return Err(Error::Misaligned(format!("{name} series is empty")));
        };
        if ts.timestamps().iter().any(|t| t.rem_euclid(HOUR) != 0) {
            return Err(Error::Misaligned(format!("{name} series is not on the hourly grid")));
        }
        let end = *ts.timestamps().last().expect("non-empty");
        let mut values = vec![None; ((end - start) / HOUR + 1) as usize];
        for (t, v) in ts.iter() {
            values[((t - start) / HOUR) as usize] = Some(v);
        }
        Ok(HourGrid { start, values })
    }

    fn get(&self, t: i64) -> Option<f64> {
        let off = t - self.start;
        if off < 0 {
            return None;
        }
        self.values.get((off / HOUR) as usize).copied().flatten()
    }
}

/// Builds one sample per target timestamp on the stride grid (multiples of
/// `target_stride_hours` since the epoch) whose whole window is gap free.
pub fn build_dataset(
    q: &TimeSeries,
    h: &TimeSeries,
    target: &TimeSeries,
    spec: &WindowSpec,
) -> Result<Dataset> {
    let w = spec.window_hours;
    if w == 0 || spec.target_stride_hours == 0 {
        return Err(Error::InvalidWindow(format!(
            "window and stride must be positive: {spec:?}"
        )));
    }
    let qg = HourGrid::new(q, "discharge")?;
    let hg = HourGrid::new(h, "stage")?;
    if target.timestamps().iter().any(|t| t.rem_euclid(HOUR) != 0) {
        return Err(Error::Misaligned("target series is not on the hourly grid".into()));
    }
    let stride = spec.target_stride_hours as i64 * HOUR;

    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut excluded = 0;
    let mut row = vec![0.0; 2 * w];
    'targets: for (t, v) in target.iter() {
        if t.rem_euclid(stride) != 0 {
            continue;
        }
        for k in 0..w {
            let at = t - (w - 1 - k) as i64 * HOUR;
            match (qg.get(at), hg.get(at)) {
                (Some(qv), Some(hv)) => {
                    row[k] = qv;
                    row[w + k] = hv;
                }
                _ => {
                    excluded += 1;
                    continue 'targets;
                }
            }
        }
        timestamps.push(t);
        data.extend_from_slice(&row);
        y.push(v);
    }
    if y.is_empty() {
        return Err(Error::NoEligibleSamples { excluded });
    }
    let x = Matrix::new(y.len(), 2 * w, data)?;
    let norm_stats = NormStats::fit(&x, &y);
    Ok(Dataset {
        timestamps,
        x,
        y,
        window_hours: w,
        norm_stats,
        excluded,
    })
}

/// The dataset with X and y z-scored by its own stats.
pub fn normalize(ds: &Dataset) -> Result<Dataset> {
    normalize_with(ds, &ds.norm_stats)
}

/// X and y z-scored by `stats` (training statistics for test blocks).
pub fn normalize_with(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    Ok(Dataset {
        timestamps: ds.timestamps.clone(),
        x: stats.transform_x(&ds.x)?,
        y: stats.transform_y(&ds.y),
        window_hours: ds.window_hours,
        norm_stats: stats.clone(),
        excluded: ds.excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{year_start, Quantity};

    fn hourly(station: &str, q: Quantity, t0: i64, vals: Vec<f64>) -> TimeSeries {
        let ts = (0..vals.len() as i64).map(|i| t0 + i * HOUR).collect();
        TimeSeries::new(station, q, ts, vals).unwrap()
    }

    #[test]
    fn width_is_twice_window() {
        let t0 = year_start(2010);
        let q = hourly("q", Quantity::Discharge, t0, (0..72).map(|i| i as f64).collect());
        let h = hourly("h", Quantity::Stage, t0, (0..72).map(|i| 0.1 * i as f64).collect());
        let y = hourly("y", Quantity::Stage, t0, vec![1.0; 72]);
        let spec = WindowSpec {
            window_hours: 24,
            target_stride_hours: 1,
        };
        let ds = build_dataset(&q, &h, &y, &spec).unwrap();
        assert_eq!(ds.width(), 48);
        assert_eq!(ds.len(), 72 - 23);
        // row 0 ends at hour 23: oldest first, lookups are exact
        assert_eq!(ds.x.row(0)[0], 0.0);
        assert_eq!(ds.x.row(0)[23], 23.0);
        assert_eq!(ds.x.row(0)[24], 0.0);
        assert_eq!(ds.x.row(0)[47], 0.1 * 23.0);
        assert_eq!(ds.block_of(10), Block::Discharge);
        assert_eq!(ds.block_of(30), Block::Stage);
    }

    #[test]
    fn minimal_window() {
        let t0 = year_start(2010);
        let q = hourly("q", Quantity::Discharge, t0, vec![1.0, 2.0, 3.0]);
        let h = hourly("h", Quantity::Stage, t0, vec![4.0, 5.0, 6.0]);
        let y = hourly("y", Quantity::Stage, t0, vec![7.0, 8.0, 9.0]);
        let spec = WindowSpec {
            window_hours: 1,
            target_stride_hours: 1,
        };
        let ds = build_dataset(&q, &h, &y, &spec).unwrap();
        assert_eq!((ds.x.rows(), ds.x.cols()), (3, 2));
        assert_eq!(ds.x.row(2), &[3.0, 6.0]);
    }

    #[test]
    fn gap_excludes_overlapping_windows_only() {
        let t0 = year_start(2010);
        let q = hourly("q", Quantity::Discharge, t0, vec![1.0; 10]);
        let h = hourly("h", Quantity::Stage, t0, vec![2.0; 10]).filter(|t, _| t != t0 + 5 * HOUR);
        let y = hourly("y", Quantity::Stage, t0, vec![3.0; 10]);
        let spec = WindowSpec {
            window_hours: 3,
            target_stride_hours: 1,
        };
        let ds = build_dataset(&q, &h, &y, &spec).unwrap();
        // candidates: hours 0..9; need hours t-2..t; hours 0,1 lack history,
        // hours 5,6,7 touch the gap
        assert_eq!(ds.timestamps, vec![t0 + 2 * HOUR, t0 + 3 * HOUR, t0 + 4 * HOUR, t0 + 8 * HOUR, t0 + 9 * HOUR]);
        assert_eq!(ds.excluded, 5);
    }

    #[test]
    fn stride_selects_midnights() {
        let t0 = year_start(2010);
        let n = 24 * 5;
        let q = hourly("q", Quantity::Discharge, t0, vec![1.0; n]);
        let h = hourly("h", Quantity::Stage, t0, vec![2.0; n]);
        let y = hourly("y", Quantity::Stage, t0, vec![3.0; n]);
        let spec = WindowSpec {
            window_hours: 24,
            target_stride_hours: 24,
        };
        let ds = build_dataset(&q, &h, &y, &spec).unwrap();
        assert_eq!(ds.len(), 4);
        assert!(ds.timestamps.iter().all(|t| t % 86400 == 0));
    }

    #[test]
    fn no_eligible_samples() {
        let t0 = year_start(2010);
        let q = hourly("q", Quantity::Discharge, t0, vec![1.0; 3]);
        let h = hourly("h", Quantity::Stage, t0, vec![2.0; 3]);
        let y = hourly("y", Quantity::Stage, t0, vec![3.0; 3]);
        let spec = WindowSpec {
            window_hours: 24,
            target_stride_hours: 1,
        };
        assert!(matches!(
            build_dataset(&q, &h, &y, &spec),
            Err(Error::NoEligibleSamples { excluded: 3 })
        ));
    }

    #[test]
    fn normalization_rules() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]).unwrap();
        let y = vec![10.0, 20.0, 30.0];
        let stats = NormStats::fit(&x, &y);
        assert_eq!(stats.x_std[1], 1.0); // constant column passes unscaled
        let xn = stats.transform_x(&x).unwrap();
        assert_eq!(xn.column(1), vec![0.0, 0.0, 0.0]);
        let m: f64 = xn.column(0).iter().sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-15);
        let back = denormalize_target(&stats.transform_y(&y), &stats);
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        let test = Matrix::from_rows(&[vec![7.0, 6.0]]).unwrap();
        let tn = stats.transform_x(&test).unwrap();
        assert!(tn[(0, 0)] > 0.0 && tn[(0, 1)] == 1.0);
    }
}
