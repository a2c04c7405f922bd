//! Synthetic catchment: upstream discharge, downstream stage and the stage
//! at the target gauge.
//!
//! Discharge is a base flow with a seasonal cycle and superposed storm pulses.
//! The target stage is a power-law rating of unit-hydrograph-routed discharge
//! plus a backwater term from the downstream stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{year_start, Quantity, TimeSeries, HOUR};

pub const HOURS_PER_YEAR: usize = 8760;

const STREAM_STORMS: u64 = 1;
const STREAM_LOW_FREQ: u64 = 2;
const STREAM_OBS_NOISE: u64 = 5;
const STREAM_OBS_EVENTS: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatchmentScenario {
    pub seed: u64,
    pub start_year: i32,
    pub n_years: u32,
    /// m³/s
    pub base_discharge: f64,
    /// m³/s, amplitude of the annual cycle (peak in January)
    pub seasonal_amplitude: f64,
    /// events per year
    pub storm_rate: f64,
    pub storm_magnitude_shape: f64,
    /// m³/s
    pub storm_magnitude_scale: f64,
    pub storm_rise_hours: f64,
    pub recession_hours: f64,
    pub lag_hours: u32,
    pub rating_a: f64,
    pub rating_b: f64,
    /// rating coefficient of the downstream gauge
    pub downstream_rating_a: f64,
    /// m, total amplitude of the slow downstream-stage component
    pub low_freq_amplitude: f64,
    pub backwater_weight: f64,
    /// m
    pub obs_noise_std: f64,
    pub obs_noise_ar1: f64,
    /// gap events per year
    pub gap_rate: f64,
    pub gap_max_hours: u32,
    /// spikes per year on the target gauge
    pub spike_rate: f64,
    /// spikes per year on the downstream-boundary stage record
    pub boundary_spike_rate: f64,
    /// m
    pub spike_magnitude: f64,
    /// m³/s; when positive, one extra storm of this size in December of the final year
    pub final_year_flood: f64,
}

impl Default for CatchmentScenario {
    /// The bundled `garonne_like` scenario.
    fn default() -> Self {
        CatchmentScenario {
            seed: 2013,
            start_year: 2013,
            n_years: 5,
            base_discharge: 180.0,
            seasonal_amplitude: 110.0,
            storm_rate: 10.0,
            storm_magnitude_shape: 2.0,
            storm_magnitude_scale: 450.0,
            storm_rise_hours: 18.0,
            recession_hours: 60.0,
            lag_hours: 6,
            rating_a: 0.5,
            rating_b: 0.4,
            downstream_rating_a: 0.4,
            low_freq_amplitude: 0.3,
            backwater_weight: 0.3,
            obs_noise_std: 0.03,
            obs_noise_ar1: 0.95,
            gap_rate: 12.0,
            gap_max_hours: 6,
            spike_rate: 6.0,
            boundary_spike_rate: 0.0,
            spike_magnitude: 1.5,
            final_year_flood: 0.0,
        }
    }
}

impl CatchmentScenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(format!("scenario: {m}")));
        if self.n_years == 0 {
            return fail("n_years must be positive".into());
        }
        for (name, v) in [
            ("base_discharge", self.base_discharge),
            ("storm_magnitude_shape", self.storm_magnitude_shape),
            ("storm_magnitude_scale", self.storm_magnitude_scale),
            ("storm_rise_hours", self.storm_rise_hours),
            ("recession_hours", self.recession_hours),
            ("rating_a", self.rating_a),
            ("downstream_rating_a", self.downstream_rating_a),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("storm_rate", self.storm_rate),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("low_freq_amplitude", self.low_freq_amplitude),
            ("obs_noise_std", self.obs_noise_std),
            ("gap_rate", self.gap_rate),
            ("spike_rate", self.spike_rate),
            ("boundary_spike_rate", self.boundary_spike_rate),
            ("spike_magnitude", self.spike_magnitude),
            ("final_year_flood", self.final_year_flood),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.seasonal_amplitude >= self.base_discharge {
            return fail("seasonal_amplitude must be below base_discharge".into());
        }
        if self.lag_hours == 0 {
            return fail("lag_hours must be positive".into());
        }
        if self.gap_max_hours == 0 {
            return fail("gap_max_hours must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.backwater_weight) {
            return fail("backwater_weight must lie in [0, 1]".into());
        }
        if !(self.rating_b > 0.0 && self.rating_b <= 1.0) {
            return fail("rating_b must lie in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.obs_noise_ar1) {
            return fail("obs_noise_ar1 must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn n_hours(&self) -> usize {
        self.n_years as usize * HOURS_PER_YEAR
    }

    pub fn start_timestamp(&self) -> i64 {
        year_start(self.start_year)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn rating(&self, q: f64) -> f64 {
        self.rating_a * q.max(0.0).powf(self.rating_b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StormEvent {
    /// hours from the scenario start
    pub start_hour: f64,
    /// m³/s
    pub magnitude: f64,
}

/// Poisson storm arrivals with gamma-distributed magnitudes.
pub fn storm_events(s: &CatchmentScenario) -> Result<Vec<StormEvent>> {
    s.validate()?;
    let mut events = Vec::new();
    let horizon = s.n_hours() as f64;
    if s.storm_rate > 0.0 {
        let mut rng = s.rng(STREAM_STORMS);
        let gaps = Exp::new(s.storm_rate / HOURS_PER_YEAR as f64)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mags = Gamma::new(s.storm_magnitude_shape, s.storm_magnitude_scale)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut t = gaps.sample(&mut rng);
        while t < horizon {
            events.push(StormEvent {
                start_hour: t,
                magnitude: mags.sample(&mut rng),
            });
            t += gaps.sample(&mut rng);
        }
    }
    if s.final_year_flood > 0.0 {
        let final_year = s.start_year + s.n_years as i32 - 1;
        let start = (year_start(final_year) - s.start_timestamp()) / HOUR + 330 * 24;
        events.push(StormEvent {
            start_hour: start as f64,
            magnitude: s.final_year_flood,
        });
    }
    Ok(events)
}

fn storm_pulse(s: &CatchmentScenario, tau: f64) -> f64 {
    if tau < 0.0 {
        0.0
    } else if tau < s.storm_rise_hours {
        tau / s.storm_rise_hours
    } else {
        (-(tau - s.storm_rise_hours) / s.recession_hours).exp()
    }
}

fn hourly_series(
    s: &CatchmentScenario,
    station: &str,
    quantity: Quantity,
    values: Vec<f64>,
) -> Result<TimeSeries> {
    let t0 = s.start_timestamp();
    let timestamps = (0..values.len() as i64).map(|i| t0 + i * HOUR).collect();
    TimeSeries::new(station, quantity, timestamps, values)
}

/// Hourly upstream discharge (`ton`) and downstream stage (`lar`), gap free.
pub fn generate_boundaries(s: &CatchmentScenario) -> Result<(TimeSeries, TimeSeries)> {
    let events = storm_events(s)?;
    let n = s.n_hours();
    let year = HOURS_PER_YEAR as f64;
    let two_pi = std::f64::consts::TAU;

    let mut q: Vec<f64> = (0..n)
        .map(|t| s.base_discharge + s.seasonal_amplitude * (two_pi * t as f64 / year).cos())
        .collect();
    let tail = s.storm_rise_hours + 12.0 * s.recession_hours;
    for ev in &events {
        let first = ev.start_hour.ceil().max(0.0) as usize;
        let last = ((ev.start_hour + tail).ceil() as usize).min(n);
        for (t, qt) in q.iter_mut().enumerate().take(last).skip(first) {
            *qt += ev.magnitude * storm_pulse(s, t as f64 - ev.start_hour);
        }
    }

    // downstream gauge: rating of a lagged 12 h moving average plus slow swings
    let lag = s.lag_hours as usize;
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in q.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mut rng = s.rng(STREAM_LOW_FREQ);
    let periods = [17.0 * 24.0, 43.0 * 24.0, 97.0 * 24.0];
    let phases: Vec<f64> = periods.iter().map(|_| rng.random_range(0.0..two_pi)).collect();
    let amp = s.low_freq_amplitude / periods.len() as f64;
    let h: Vec<f64> = (0..n)
        .map(|t| {
            let end = t.saturating_sub(lag);
            let start = end.saturating_sub(11);
            let smooth = (prefix[end + 1] - prefix[start]) / (end + 1 - start) as f64;
            let slow: f64 = periods
                .iter()
                .zip(&phases)
                .map(|(p, ph)| amp * (two_pi * t as f64 / p + ph).sin())
                .sum();
            s.downstream_rating_a * smooth.powf(s.rating_b) + slow
        })
        .collect();

    Ok((
        hourly_series(s, "ton", Quantity::Discharge, q)?,
        hourly_series(s, "lar", Quantity::Stage, h)?,
    ))
}

/// Discretized gamma-shaped unit hydrograph (shape 4, mode at `lag_hours`),
/// `4 × lag_hours` taps, normalized to unit sum.
pub fn unit_hydrograph(lag_hours: u32) -> Vec<f64> {
    let lag = f64::from(lag_hours.max(1));
    let shape = 4.0;
    let scale = lag / (shape - 1.0);
    let taps = 4 * lag_hours.max(1) as usize;
    let raw: Vec<f64> = (0..taps)
        .map(|j| {
            let t = j as f64 + 0.5;
            t.powf(shape - 1.0) * (-t / scale).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// Smooth deterministic stage, subsampled to daily (midnight UTC).
    Physical,
    /// Hourly stage with AR(1) noise, gaps and spikes.
    Observed,
}

fn check_hourly_aligned(q: &TimeSeries, h: &TimeSeries) -> Result<()> {
    if q.timestamps() != h.timestamps() {
        return Err(Error::Misaligned(
            "discharge and stage timestamps differ".into(),
        ));
    }
    if q.timestamps().windows(2).any(|w| w[1] - w[0] != HOUR) {
        return Err(Error::Misaligned("boundary series must be gap-free hourly".into()));
    }
    if q.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok(())
}

/// Routed discharge `Σ_j k_j q(t − j)`, holding the first value before the start.
pub fn route_discharge(q: &[f64], kernel: &[f64]) -> Vec<f64> {
    (0..q.len())
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * q[t.saturating_sub(j)])
                .sum()
        })
        .collect()
}

/// Stage at the target gauge.
pub fn route_to_target(
    q: &TimeSeries,
    h: &TimeSeries,
    s: &CatchmentScenario,
    mode: TargetMode,
) -> Result<TimeSeries> {
    s.validate()?;
    check_hourly_aligned(q, h)?;
    let kernel = unit_hydrograph(s.lag_hours);
    let routed = route_discharge(q.values(), &kernel);
    let h_mean = h.values().iter().sum::<f64>() / h.len() as f64;
    let stage: Vec<f64> = routed
        .iter()
        .zip(h.values())
        .map(|(qr, hl)| s.rating(*qr) + s.backwater_weight * (hl - h_mean))
        .collect();
    let target = TimeSeries::new("mar", Quantity::Stage, q.timestamps().to_vec(), stage)?;
    match mode {
        TargetMode::Physical => Ok(target.filter(|t, _| t.rem_euclid(86400) == 0)),
        TargetMode::Observed => {
            let mut noise_rng = s.rng(STREAM_OBS_NOISE);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let phi = s.obs_noise_ar1;
            let innov = (1.0 - phi * phi).sqrt() * s.obs_noise_std;
            let mut e = s.obs_noise_std * normal.sample(&mut noise_rng);
            let noisy = target.map_values(|_, v| {
                let out = v + e;
                e = phi * e + innov * normal.sample(&mut noise_rng);
                out
            })?;
            let mut rng = s.rng(STREAM_OBS_EVENTS);
            degrade(
                &noisy,
                &Degradation {
                    gap_rate: s.gap_rate,
                    gap_max_hours: s.gap_max_hours,
                    spike_rate: s.spike_rate,
                    spike_magnitude: s.spike_magnitude,
                },
                &mut rng,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation {
    pub gap_rate: f64,
    pub gap_max_hours: u32,
    pub spike_rate: f64,
    pub spike_magnitude: f64,
}

/// Poisson-placed gaps (runs of 1..=gap_max_hours missing points) and isolated
/// spikes of ±`spike_magnitude`.
pub fn degrade(ts: &TimeSeries, d: &Degradation, rng: &mut ChaCha8Rng) -> Result<TimeSeries> {
    let n = ts.len();
    if n == 0 {
        return Ok(ts.clone());
    }
    let years = n as f64 / HOURS_PER_YEAR as f64;
    let mut values = ts.values().to_vec();
    let mut keep = vec![true; n];
    let place = |rate: f64, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut at = Vec::new();
        if rate > 0.0 {
            let gaps = Exp::new(rate / HOURS_PER_YEAR as f64).expect("positive rate");
            let mut t = gaps.sample(rng);
            while t < years * HOURS_PER_YEAR as f64 {
                at.push((t as usize).min(n - 1));
                t += gaps.sample(rng);
            }
        }
        at
    };
    for i in place(d.spike_rate, rng) {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        values[i] += sign * d.spike_magnitude;
    }
    for i in place(d.gap_rate, rng) {
        let len = rng.random_range(1..=d.gap_max_hours.max(1)) as usize;
        for k in keep.iter_mut().skip(i).take(len) {
            *k = false;
        }
    }
    let (timestamps, values): (Vec<i64>, Vec<f64>) = ts
        .timestamps()
        .iter()
        .zip(values)
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(p, _)| (*p.0, p.1))
        .unzip();
    TimeSeries::new(ts.station(), ts.quantity(), timestamps, values)
}

/// Boundary series as a gauge would record them: gaps on both, spikes on the
/// downstream stage only.
pub fn observe_boundaries(
    q: &TimeSeries,
    h: &TimeSeries,
    s: &CatchmentScenario,
) -> Result<(TimeSeries, TimeSeries)> {
    let mut rng_q = s.rng(3);
    let mut rng_h = s.rng(4);
    let gaps_only = Degradation {
        gap_rate: s.gap_rate,
        gap_max_hours: s.gap_max_hours,
        spike_rate: 0.0,
        spike_magnitude: 0.0,
    };
    let with_spikes = Degradation {
        spike_rate: s.boundary_spike_rate,
        spike_magnitude: s.spike_magnitude,
        ..gaps_only
    };
    Ok((
        degrade(q, &gaps_only, &mut rng_q)?,
        degrade(h, &with_spikes, &mut rng_h)?,
    ))
}
