//! Shared domain types: windows, rooms, house datasets and result records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::NormStats;

/// 4 s at 5 Hz.
pub const WINDOW_WIDTH: usize = 20;
pub const CANONICAL_RATE_HZ: f64 = 5.0;
/// Raw reading reserved for "no signal"; never produced by a live receiver.
pub const SENTINEL_DBM: f64 = -120.0;

/// Fixed-shape block of signal strength, one row per access point and one
/// column per timestamp, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RssiWindow {
    n_aps: usize,
    n_timestamps: usize,
    values: Vec<f32>,
}

impl RssiWindow {
    pub fn new(n_aps: usize, n_timestamps: usize, values: Vec<f32>) -> Result<Self> {
        if n_aps == 0 || n_timestamps == 0 || values.len() != n_aps * n_timestamps {
            return Err(Error::Shape(format!("window [{n_aps} x {n_timestamps}] cannot hold {} values", values.len())));
        }
        Ok(Self { n_aps, n_timestamps, values })
    }

    pub fn from_fn(n_aps: usize, n_timestamps: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let values = (0..n_aps * n_timestamps).map(|i| f(i / n_timestamps, i % n_timestamps)).collect();
        Self { n_aps, n_timestamps, values }
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_timestamps(&self) -> usize {
        self.n_timestamps
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_aps, self.n_timestamps)
    }

    pub fn get(&self, ap: usize, t: usize) -> f32 {
        self.values[ap * self.n_timestamps + t]
    }

    pub fn set(&mut self, ap: usize, t: usize, v: f32) {
        self.values[ap * self.n_timestamps + t] = v;
    }

    pub fn row(&self, ap: usize) -> &[f32] {
        &self.values[ap * self.n_timestamps..(ap + 1) * self.n_timestamps]
    }

    /// Flattened `[n_aps * n_timestamps]` feature vector.
    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Deserialised windows can break the length invariant; this rechecks it.
    pub fn is_consistent(&self) -> bool {
        self.values.len() == self.n_aps * self.n_timestamps
    }

    pub fn distance(&self, other: &RssiWindow) -> f64 {
        squared_distance(&self.values, &other.values).sqrt()
    }
}

pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoomLabel {
    pub id: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseConfig {
    pub house_id: String,
    pub n_aps: usize,
    pub sample_rate_hz: f64,
    pub rooms: Vec<RoomLabel>,
}

impl HouseConfig {
    pub fn n_classes(&self) -> usize {
        self.rooms.len()
    }

    pub fn room_name(&self, id: usize) -> Option<&str> {
        self.rooms.iter().find(|r| r.id == id).map(|r| r.name.as_str())
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_aps == 0 {
            out.push("config: n_aps must be at least 1".to_string());
        }
        if !(self.sample_rate_hz > 0.0) {
            out.push(format!("config: sample_rate_hz {} must be positive", self.sample_rate_hz));
        }
        if self.rooms.is_empty() {
            out.push("config: rooms must be non-empty".to_string());
        }
        let ids: BTreeSet<usize> = self.rooms.iter().map(|r| r.id).collect();
        if ids.len() != self.rooms.len() {
            out.push("config: room ids are not unique".to_string());
        } else if ids.iter().copied().ne(0..self.rooms.len()) {
            out.push("config: room ids are not dense in 0..n_classes".to_string());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Fingerprint,
    FreeLiving,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Fingerprint => "fingerprint",
            Partition::FreeLiving => "free_living",
        })
    }
}

/// Where a window came from; used to prove that no held-out data reaches a
/// training set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    /// Real window starting at `offset` samples into its partition's stream.
    Recorded { partition: Partition, offset: usize },
    /// Produced by an augmenter from fingerprint data.
    Synthetic { method: String },
}

impl Provenance {
    pub fn is_free_living(&self) -> bool {
        matches!(self, Provenance::Recorded { partition: Partition::FreeLiving, .. })
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self, Provenance::Synthetic { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledWindow {
    pub window: RssiWindow,
    pub label: usize,
    pub provenance: Provenance,
}

impl LabelledWindow {
    pub fn synthetic(window: RssiWindow, label: usize, method: &str) -> Self {
        Self { window, label, provenance: Provenance::Synthetic { method: method.to_string() } }
    }
}

/// Preprocessed house: labelled windows split into the scripted
/// (training) and free-living (held-out) partitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseDataset {
    pub config: HouseConfig,
    pub fingerprint: Vec<LabelledWindow>,
    pub free_living: Vec<LabelledWindow>,
    pub norm_stats: NormStats,
}

impl HouseDataset {
    /// Fingerprint windows grouped by room id, covering every room (possibly
    /// with empty groups).
    pub fn fingerprint_by_class(&self) -> Vec<Vec<&RssiWindow>> {
        let mut out = vec![Vec::new(); self.config.n_classes()];
        for w in &self.fingerprint {
            if let Some(slot) = out.get_mut(w.label) {
                slot.push(&w.window);
            }
        }
        out
    }

    pub fn class_counts(windows: &[LabelledWindow], n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for w in windows {
            if w.label < n_classes {
                counts[w.label] += 1;
            }
        }
        counts
    }
}

/// One broken invariant found by [`validate_dataset`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Partition and index of the offending window, if the rule is per-window.
    pub window: Option<(Partition, usize)>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.window {
            Some((p, i)) => write!(f, "{p} window {i}: {}", self.rule),
            None => f.write_str(&self.rule),
        }
    }
}

/// Check every dataset invariant and report what is broken. Never fails.
pub fn validate_dataset(ds: &HouseDataset) -> Vec<Violation> {
    let mut out: Vec<Violation> = ds.config.check().into_iter().map(|rule| Violation { window: None, rule }).collect();

    let stats = ds.norm_stats.per_ap();
    if stats.len() != ds.config.n_aps {
        out.push(Violation {
            window: None,
            rule: format!("norm_stats: {} APs, config has {}", stats.len(), ds.config.n_aps),
        });
    }
    for (ap, s) in stats.iter().enumerate() {
        if !(s.min_dbm <= s.max_dbm) || s.min_dbm < SENTINEL_DBM {
            out.push(Violation {
                window: None,
                rule: format!("norm_stats: AP {ap} has invalid range [{}, {}]", s.min_dbm, s.max_dbm),
            });
        }
    }

    let n_classes = ds.config.n_classes();
    for (partition, windows) in [(Partition::Fingerprint, &ds.fingerprint), (Partition::FreeLiving, &ds.free_living)] {
        for (i, lw) in windows.iter().enumerate() {
            let mut bad = |rule: String| out.push(Violation { window: Some((partition, i)), rule });
            let w = &lw.window;
            if !w.is_consistent() {
                bad(format!("holds {} values for shape [{} x {}]", w.values.len(), w.n_aps, w.n_timestamps));
                continue;
            }
            if w.n_aps != ds.config.n_aps || w.n_timestamps != WINDOW_WIDTH {
                bad(format!(
                    "shape [{} x {}], expected [{} x {WINDOW_WIDTH}]",
                    w.n_aps, w.n_timestamps, ds.config.n_aps
                ));
            }
            if let Some(v) = w.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                bad(format!("normalized value {v} outside [0, 1]"));
            }
            if lw.label >= n_classes {
                bad(format!("label {} is not a room of this house", lw.label));
            }
            let origin_ok = match (&lw.provenance, partition) {
                (Provenance::Recorded { partition: p, .. }, want) => *p == want,
                (Provenance::Synthetic { .. }, Partition::Fingerprint) => true,
                (Provenance::Synthetic { .. }, Partition::FreeLiving) => false,
            };
            if !origin_ok {
                bad(format!("provenance {:?} does not belong to the {partition} partition", lw.provenance));
            }
        }
    }
    out
}

/// Experiment arms, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Baseline,
    Weighted,
    Oversample,
    Smote,
    Expert,
    Congan,
    TCongan,
    TConganSphere,
}

impl Arm {
    pub const ALL: [Arm; 8] = [
        Arm::Baseline,
        Arm::Weighted,
        Arm::Oversample,
        Arm::Smote,
        Arm::Expert,
        Arm::Congan,
        Arm::TCongan,
        Arm::TConganSphere,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Weighted => "weighted",
            Arm::Oversample => "oversample",
            Arm::Smote => "smote",
            Arm::Expert => "expert",
            Arm::Congan => "congan",
            Arm::TCongan => "t_congan",
            Arm::TConganSphere => "t_congan_sphere",
        }
    }

    pub fn is_augmentation(self) -> bool {
        !matches!(self, Arm::Baseline | Arm::Weighted)
    }

    pub fn is_gan(self) -> bool {
        matches!(self, Arm::Congan | Arm::TCongan | Arm::TConganSphere)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| Error::Invalid(format!("unknown arm `{s}`")))
    }
}

/// One repeat of one arm on one house.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub house_id: String,
    pub arm: Arm,
    pub repeat_index: usize,
    /// Percent.
    pub macro_f1: f64,
    /// Recall per room name, percent. Rooms absent from the test data are
    /// left out.
    pub per_class_accuracy: BTreeMap<String, f64>,
    pub mivo: Option<f64>,
    pub seed: u64,
    pub wall_time_s: f64,
}
