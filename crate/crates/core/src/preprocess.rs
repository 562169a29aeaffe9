//! Raw RSSI streams to labelled, normalized, fixed-width windows.
//!
//! Order of operations: snap to a regular grid, forward-fill short gaps,
//! fill what is left with the sentinel, min-max normalize with statistics
//! from the fingerprint partition only, then cut overlapping windows.

use serde::{Deserialize, Serialize};

use crate::domain::{
    HouseConfig, HouseDataset, LabelledWindow, Partition, Provenance, RssiWindow, CANONICAL_RATE_HZ, SENTINEL_DBM,
};
use crate::error::{Error, Result};

const TIME_EPS: f64 = 1e-6;

/// Per-timestamp readings from every access point, plus room annotations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawStream {
    pub timestamps: Vec<f64>,
    /// `readings[i][ap]`, dBm, `None` when no packet was received.
    pub readings: Vec<Vec<Option<f64>>>,
    pub rooms: Vec<Option<usize>>,
}

impl RawStream {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn push(&mut self, t: f64, readings: Vec<Option<f64>>, room: Option<usize>) {
        self.timestamps.push(t);
        self.readings.push(readings);
        self.rooms.push(room);
    }

    pub fn check(&self, n_aps: usize) -> Result<()> {
        if self.readings.len() != self.timestamps.len() || self.rooms.len() != self.timestamps.len() {
            return Err(Error::Invalid("stream columns have different lengths".into()));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Invalid(format!("timestamps decrease at row {}", i + 1)));
        }
        if let Some(i) = self.readings.iter().position(|r| r.len() != n_aps) {
            return Err(Error::Invalid(format!("row {i} has {} readings, expected {n_aps}", self.readings[i].len())));
        }
        Ok(())
    }

    pub fn missing_count(&self) -> usize {
        self.readings.iter().flatten().filter(|r| r.is_none()).count()
    }
}

/// Snap a stream onto a regular `rate_hz` grid starting at its first
/// timestamp. Each grid point takes the nearest raw row within one grid
/// period; grid points with no such row become fully missing and unlabelled.
pub fn resample_nearest(stream: &RawStream, n_aps: usize, rate_hz: f64) -> RawStream {
    let mut out = RawStream::default();
    if stream.is_empty() {
        return out;
    }
    let period = 1.0 / rate_hz;
    let t0 = stream.timestamps[0];
    let span = stream.timestamps[stream.len() - 1] - t0;
    let n = (span / period + TIME_EPS).floor() as usize + 1;
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 * period;
        while j + 1 < stream.len() && (stream.timestamps[j + 1] - t).abs() <= (stream.timestamps[j] - t).abs() {
            j += 1;
        }
        if (stream.timestamps[j] - t).abs() <= period + TIME_EPS {
            out.push(t, stream.readings[j].clone(), stream.rooms[j]);
        } else {
            out.push(t, vec![None; n_aps], None);
        }
    }
    out
}

/// Replace each missing reading with the latest observation of the same AP
/// when that observation is at most `max_gap_s` old.
pub fn forward_fill(stream: &RawStream, max_gap_s: f64) -> RawStream {
    let mut out = stream.clone();
    let n_aps = stream.readings.first().map_or(0, Vec::len);
    for ap in 0..n_aps {
        let mut last: Option<(f64, f64)> = None;
        for i in 0..out.len() {
            let t = out.timestamps[i];
            match stream.readings[i][ap] {
                Some(v) => last = Some((t, v)),
                None => {
                    if let Some((t_obs, v)) = last {
                        if t - t_obs <= max_gap_s + TIME_EPS {
                            out.readings[i][ap] = Some(v);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Fill every remaining gap with `sentinel_dbm`.
pub fn sentinel_fill(stream: &RawStream, sentinel_dbm: f64) -> RawStream {
    let mut out = stream.clone();
    for row in &mut out.readings {
        for r in row.iter_mut() {
            r.get_or_insert(sentinel_dbm);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApRange {
    pub min_dbm: f64,
    pub max_dbm: f64,
}

/// Per-AP min/max fitted on fingerprint data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    per_ap: Vec<ApRange>,
}

impl NormStats {
    pub fn new(per_ap: Vec<ApRange>) -> Self {
        Self { per_ap }
    }

    pub fn per_ap(&self) -> &[ApRange] {
        &self.per_ap
    }

    pub fn n_aps(&self) -> usize {
        self.per_ap.len()
    }

    /// Fit on sentinel-filled streams. Missing cells (if any) are ignored;
    /// an AP never observed gets the degenerate range `[-120, -120]`.
    pub fn fit<'a>(streams: impl IntoIterator<Item = &'a RawStream>, n_aps: usize) -> Self {
        let mut per_ap = vec![ApRange { min_dbm: f64::INFINITY, max_dbm: f64::NEG_INFINITY }; n_aps];
        for s in streams {
            for row in &s.readings {
                for (r, v) in per_ap.iter_mut().zip(row) {
                    if let Some(v) = *v {
                        r.min_dbm = r.min_dbm.min(v);
                        r.max_dbm = r.max_dbm.max(v);
                    }
                }
            }
        }
        for (ap, r) in per_ap.iter_mut().enumerate() {
            if !r.min_dbm.is_finite() {
                *r = ApRange { min_dbm: SENTINEL_DBM, max_dbm: SENTINEL_DBM };
            }
            if r.min_dbm == r.max_dbm {
                log::warn!("AP {ap} is constant at {} dBm in the fingerprint data; it normalizes to 0", r.min_dbm);
            }
        }
        Self { per_ap }
    }

    /// `(v − min)/(max − min)` clamped to `[0, 1]`; degenerate APs map to 0.
    pub fn normalize(&self, ap: usize, v: f64) -> f64 {
        let r = self.per_ap[ap];
        let span = r.max_dbm - r.min_dbm;
        if span <= 0.0 {
            return 0.0;
        }
        ((v - r.min_dbm) / span).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, ap: usize, u: f64) -> f64 {
        let r = self.per_ap[ap];
        r.min_dbm + u * (r.max_dbm - r.min_dbm)
    }

    /// Image of the sentinel for each AP; what a dropped reading looks like
    /// after normalization.
    pub fn normalized_sentinel(&self) -> Vec<f32> {
        (0..self.per_ap.len()).map(|ap| self.normalize(ap, SENTINEL_DBM) as f32).collect()
    }

    pub fn apply(&self, stream: &RawStream) -> NormalizedStream {
        let values = stream
            .readings
            .iter()
            .map(|row| row.iter().enumerate().map(|(ap, v)| self.normalize(ap, v.unwrap_or(SENTINEL_DBM))).collect())
            .collect();
        NormalizedStream { timestamps: stream.timestamps.clone(), values, rooms: stream.rooms.clone() }
    }
}

/// Stream with every reading present and scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedStream {
    pub timestamps: Vec<f64>,
    /// `values[i][ap]`
    pub values: Vec<Vec<f64>>,
    pub rooms: Vec<Option<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub window_s: f64,
    pub overlap: f64,
    pub rate_hz: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { window_s: 4.0, overlap: 0.5, rate_hz: CANONICAL_RATE_HZ }
    }
}

impl WindowSpec {
    pub fn width(&self) -> usize {
        (self.window_s * self.rate_hz).round().max(1.0) as usize
    }

    pub fn stride(&self) -> usize {
        ((self.width() as f64) * (1.0 - self.overlap)).round().max(1.0) as usize
    }
}

/// Majority room among `labels`; `None` if any is unlabelled or the top
/// count is shared.
pub fn majority_label(labels: &[Option<usize>]) -> Option<usize> {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for l in labels {
        let l = (*l)?;
        match counts.iter_mut().find(|(id, _)| *id == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().map(|&(_, c)| c).max()?;
    let mut winners = counts.iter().filter(|&&(_, c)| c == best);
    let first = winners.next()?.0;
    if winners.next().is_some() {
        return None;
    }
    Some(first)
}

/// Cut `spec.width()`-column windows every `spec.stride()` samples.
pub fn segment_windows(stream: &NormalizedStream, spec: &WindowSpec, partition: Partition) -> Vec<LabelledWindow> {
    let width = spec.width();
    let stride = spec.stride();
    let n = stream.timestamps.len();
    let n_aps = stream.values.first().map_or(0, Vec::len);
    if n < width || n_aps == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut offset = 0;
    while offset + width <= n {
        if let Some(label) = majority_label(&stream.rooms[offset..offset + width]) {
            let window = RssiWindow::from_fn(n_aps, width, |ap, t| stream.values[offset + t][ap] as f32);
            out.push(LabelledWindow { window, label, provenance: Provenance::Recorded { partition, offset } });
        }
        offset += stride;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessOptions {
    pub max_gap_s: f64,
    pub sentinel_dbm: f64,
    pub window: WindowSpec,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self { max_gap_s: 1.0, sentinel_dbm: SENTINEL_DBM, window: WindowSpec::default() }
    }
}

/// Raw house recording as produced by the simulator or read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawHouseData {
    pub config: HouseConfig,
    pub fingerprint: RawStream,
    pub free_living: RawStream,
}

fn clean(stream: &RawStream, cfg: &HouseConfig, opts: &PreprocessOptions) -> Result<RawStream> {
    stream.check(cfg.n_aps)?;
    let gridded = resample_nearest(stream, cfg.n_aps, opts.window.rate_hz);
    Ok(sentinel_fill(&forward_fill(&gridded, opts.max_gap_s), opts.sentinel_dbm))
}

/// Full preprocessing of one house.
pub fn preprocess_house(raw: &RawHouseData, opts: &PreprocessOptions) -> Result<HouseDataset> {
    let problems = raw.config.check();
    if !problems.is_empty() {
        return Err(Error::Invalid(problems.join("; ")));
    }
    let fp = clean(&raw.fingerprint, &raw.config, opts)?;
    let fl = clean(&raw.free_living, &raw.config, opts)?;
    let norm_stats = NormStats::fit([&fp], raw.config.n_aps);
    let mut config = raw.config.clone();
    config.sample_rate_hz = opts.window.rate_hz;
    Ok(HouseDataset {
        config,
        fingerprint: segment_windows(&norm_stats.apply(&fp), &opts.window, Partition::Fingerprint),
        free_living: segment_windows(&norm_stats.apply(&fl), &opts.window, Partition::FreeLiving),
        norm_stats,
    })
}
