//! Hydraulic time series: loading, hourly resampling, spike cleaning and
//! calendar splits.
//!
//! Gaps are represented by absent timestamps. Every stored value is finite.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOUR: i64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Discharge,
    Stage,
}

impl Quantity {
    pub fn unit(self) -> &'static str {
        match self {
            Quantity::Discharge => "m3s",
            Quantity::Stage => "m",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Discharge => "discharge",
            Quantity::Stage => "stage",
        }
    }

    fn parse(name: &str, unit: &str) -> Result<Self> {
        let q = match name {
            "discharge" => Quantity::Discharge,
            "stage" => Quantity::Stage,
            other => return Err(Error::UnknownQuantity(other.to_string())),
        };
        if q.unit() != unit {
            return Err(Error::UnknownQuantity(format!(
                "unit '{unit}' does not match quantity '{name}'"
            )));
        }
        Ok(q)
    }
}

/// A timestamped, unit-tagged sequence of measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    station: String,
    quantity: Quantity,
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(
        station: impl Into<String>,
        quantity: Quantity,
        timestamps: Vec<i64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "timestamp {} not strictly increasing",
                i + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value at {i}")));
        }
        Ok(TimeSeries {
            station: station.into(),
            quantity,
            timestamps,
            values,
        })
    }

    pub fn station(&self) -> &str {
        &self.station
    }

    pub fn quantity(&self) -> Quantity {
        self.quantity
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.timestamps.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at an exact timestamp, if present.
    pub fn value_at(&self, t: i64) -> Option<f64> {
        self.timestamps
            .binary_search(&t)
            .ok()
            .map(|i| self.values[i])
    }

    pub fn max(&self) -> Option<(i64, f64)> {
        self.iter()
            .fold(None, |acc: Option<(i64, f64)>, (t, v)| match acc {
                Some((_, best)) if best >= v => acc,
                _ => Some((t, v)),
            })
    }

    /// Keep the points for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(i64, f64) -> bool) -> TimeSeries {
        let (timestamps, values) = self.iter().filter(|&(t, v)| keep(t, v)).unzip();
        TimeSeries {
            station: self.station.clone(),
            quantity: self.quantity,
            timestamps,
            values,
        }
    }

    /// Same timestamps, values mapped.
    pub fn map_values(&self, mut f: impl FnMut(i64, f64) -> f64) -> Result<TimeSeries> {
        let values = self.iter().map(|(t, v)| f(t, v)).collect();
        TimeSeries::new(
            self.station.clone(),
            self.quantity,
            self.timestamps.clone(),
            values,
        )
    }

    pub fn with_station(mut self, station: impl Into<String>) -> Self {
        self.station = station.into();
        self
    }
}

pub fn format_timestamp(t: i64) -> String {
    match Utc.timestamp_opt(t, 0).single() {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

/// Seconds since epoch of `year`-01-01T00:00:00Z.
pub fn year_start(year: i32) -> i64 {
    Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0)
        .single()
        .map(|d| d.timestamp())
        .unwrap_or(i64::MIN)
}

pub fn year_of(t: i64) -> i32 {
    Utc.timestamp_opt(t, 0)
        .single()
        .map(|d| d.year())
        .unwrap_or(i32::MIN)
}

pub fn parse_csv(text: &str) -> Result<TimeSeries> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let header = header.trim_end_matches('\r');
    let fields = header.strip_prefix('#').ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing '# station=... quantity=... unit=...' header".into(),
    })?;
    let (mut station, mut quantity, mut unit) = (None, None, None);
    for token in fields.split_whitespace() {
        match token.split_once('=') {
            Some(("station", v)) => station = Some(v.to_string()),
            Some(("quantity", v)) => quantity = Some(v.to_string()),
            Some(("unit", v)) => unit = Some(v.to_string()),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unexpected header token '{token}'"),
                })
            }
        }
    }
    let missing = |what: &str| Error::Parse {
        line: 1,
        message: format!("header missing {what}"),
    };
    let station = station.ok_or_else(|| missing("station"))?;
    let quantity = Quantity::parse(
        &quantity.ok_or_else(|| missing("quantity"))?,
        &unit.ok_or_else(|| missing("unit"))?,
    )?;

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut last: Option<i64> = None;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line == "timestamp,value" {
            continue;
        }
        let (ts, val) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected 'timestamp,value'".into(),
        })?;
        let t = parse_timestamp(ts.trim()).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("bad timestamp '{ts}'"),
        })?;
        if last.is_some_and(|prev| t <= prev) {
            return Err(Error::NonIncreasing { line: line_no });
        }
        last = Some(t);
        let val = val.trim();
        if val.is_empty() {
            continue;
        }
        let v: f64 = val.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad value '{val}'"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite value '{val}'"),
            });
        }
        timestamps.push(t);
        values.push(v);
    }
    TimeSeries::new(station, quantity, timestamps, values)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn to_csv(ts: &TimeSeries) -> String {
    let mut out = format!(
        "# station={} quantity={} unit={}\n",
        ts.station,
        ts.quantity.name(),
        ts.quantity.unit()
    );
    for (t, v) in ts.iter() {
        let _ = writeln!(out, "{},{}", format_timestamp(t), v);
    }
    out
}

pub fn write_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv(ts)).map_err(|e| Error::io(path, e))
}

/// Linear interpolation onto the exact hourly grid spanning `ts`.
///
/// Grid points inside an observation gap longer than `max_gap_hours` stay absent.
pub fn resample_hourly(ts: &TimeSeries, max_gap_hours: u32) -> Result<TimeSeries> {
    if ts.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: ts.len(),
        });
    }
    if max_gap_hours == 0 {
        return Err(Error::InvalidArgument("max_gap_hours must be positive".into()));
    }
    let max_gap = i64::from(max_gap_hours) * HOUR;
    let t = &ts.timestamps;
    let v = &ts.values;
    let first = t[0].div_euclid(HOUR) * HOUR + if t[0].rem_euclid(HOUR) == 0 { 0 } else { HOUR };
    let last = t[t.len() - 1].div_euclid(HOUR) * HOUR;

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut i = 0usize;
    let mut g = first;
    while g <= last {
        while i + 1 < t.len() && t[i + 1] <= g {
            i += 1;
        }
        if t[i] == g {
            timestamps.push(g);
            values.push(v[i]);
        } else if i + 1 < t.len() && t[i + 1] - t[i] <= max_gap {
            let (t0, t1, v0, v1) = (t[i], t[i + 1], v[i], v[i + 1]);
            let frac = (g - t0) as f64 / (t1 - t0) as f64;
            let lo = v0.min(v1);
            let hi = v0.max(v1);
            timestamps.push(g);
            values.push((v0 + (v1 - v0) * frac).clamp(lo, hi));
        }
        g += HOUR;
    }
    TimeSeries::new(ts.station.clone(), ts.quantity, timestamps, values)
}

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeFilter {
    pub window: usize,
    pub k: f64,
    pub mad_floor: f64,
}

impl Default for SpikeFilter {
    fn default() -> Self {
        SpikeFilter {
            window: 5,
            k: 5.0,
            mad_floor: 1e-6,
        }
    }
}

/// Removes points deviating from the running median by more than
/// `k * max(MAD, mad_floor)`. Returns the cleaned series and the number of
/// removed points.
///
/// Near the ends the window is shifted inward so it always spans `window`
/// points.
pub fn clean_spikes(ts: &TimeSeries, filter: &SpikeFilter) -> Result<(TimeSeries, usize)> {
    let w = filter.window;
    if w < 3 || w % 2 == 0 {
        return Err(Error::InvalidWindow(format!(
            "spike window must be odd and >= 3, got {w}"
        )));
    }
    if w > ts.len() {
        return Err(Error::InvalidWindow(format!(
            "spike window {w} exceeds series length {}",
            ts.len()
        )));
    }
    if !(filter.k > 0.0) {
        return Err(Error::InvalidArgument("spike threshold k must be positive".into()));
    }
    let n = ts.len();
    let half = w / 2;
    let mut keep = vec![true; n];
    let mut buf = vec![0.0; w];
    let mut dev = vec![0.0; w];
    for i in 0..n {
        let start = i.saturating_sub(half).min(n - w);
        let window = &ts.values[start..start + w];
        buf.copy_from_slice(window);
        let med = median(&mut buf);
        for (d, x) in dev.iter_mut().zip(window) {
            *d = (x - med).abs();
        }
        let mad = median(&mut dev).max(filter.mad_floor);
        if (ts.values[i] - med).abs() > filter.k * mad {
            keep[i] = false;
        }
    }
    let removed = keep.iter().filter(|k| !**k).count();
    let mut idx = 0;
    let cleaned = ts.filter(|_, _| {
        let k = keep[idx];
        idx += 1;
        k
    });
    Ok((cleaned, removed))
}

/// Inclusive calendar-year ranges (UTC) for training and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: [i32; 2],
    pub test: [i32; 2],
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.train;
        let [c, d] = self.test;
        if a > b || c > d {
            return Err(Error::InvalidConfig(format!("empty year range in {self:?}")));
        }
        if b >= c {
            return Err(Error::InvalidConfig(format!(
                "train years must precede and not overlap test years: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn in_train(&self, t: i64) -> bool {
        let y = year_of(t);
        self.train[0] <= y && y <= self.train[1]
    }

    pub fn in_test(&self, t: i64) -> bool {
        let y = year_of(t);
        self.test[0] <= y && y <= self.test[1]
    }
}

/// Partitions `ts` by calendar year into (train, test).
pub fn split_by_period(ts: &TimeSeries, spec: &SplitSpec) -> Result<(TimeSeries, TimeSeries)> {
    spec.validate()?;
    let train = ts.filter(|t, _| spec.in_train(t));
    let test = ts.filter(|t, _| spec.in_test(t));
    if train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if test.is_empty() {
        return Err(Error::EmptyPartition("test"));
    }
    Ok((train, test))
}
