//! Synthetic houses: log-distance propagation through rectangular rooms,
//! scripted and free-living movement, and raw stream synthesis.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{HouseConfig, RoomLabel};
use crate::error::{Error, Result};
use crate::preprocess::{RawHouseData, RawStream};
use crate::seeds;

/// Start of every synthetic recording, in unix seconds.
pub const EPOCH_UNIX_S: f64 = 1_600_000_000.0;
/// Gap between the fingerprint and free-living recordings.
const SESSION_GAP_S: f64 = 86_400.0;
const PERSON_HEIGHT_M: f64 = 1.0;
const WALK_SPEED_MPS: f64 = 0.7;
const SCRIPTED_VISIT_S: f64 = 45.0;
const PARETO_SHAPE: f64 = 2.5;
const MAX_DWELL_FACTOR: f64 = 20.0;
const FADING_SIGMA_DB: f64 = 5.0;
const FADING_TIME_S: f64 = 5.0;
const SESSION_SIGMA_DB: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Propagation {
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    /// Independent per-reading noise.
    pub shadowing_sigma_db: f64,
    pub wall_attenuation_db: f64,
    /// Slow per-AP fading, an AR(1) process with time constant `fading_time_s`.
    #[serde(default = "default_fading_sigma")]
    pub fading_sigma_db: f64,
    #[serde(default = "default_fading_time")]
    pub fading_time_s: f64,
    /// Per-AP offset drawn once per recording session.
    #[serde(default = "default_session_sigma")]
    pub session_sigma_db: f64,
}

fn default_fading_sigma() -> f64 {
    FADING_SIGMA_DB
}

fn default_fading_time() -> f64 {
    FADING_TIME_S
}

fn default_session_sigma() -> f64 {
    SESSION_SIGMA_DB
}

impl Default for Propagation {
    fn default() -> Self {
        Self {
            tx_power_dbm: -40.0,
            path_loss_exponent: 2.7,
            reference_distance_m: 1.0,
            shadowing_sigma_db: 3.0,
            wall_attenuation_db: 6.0,
            fading_sigma_db: FADING_SIGMA_DB,
            fading_time_s: FADING_TIME_S,
            session_sigma_db: SESSION_SIGMA_DB,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_dwell() -> f64 {
    90.0
}

/// One rectangular room on one floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomRegion {
    pub id: usize,
    pub name: String,
    pub floor: u32,
    /// `[x0, y0, x1, y1]` in meters.
    pub rect: [f64; 4],
    /// Height of the walking surface above the floor (stairs sit between floors).
    #[serde(default)]
    pub elevation_m: f64,
    /// Relative share of scripted recording time.
    #[serde(default = "one")]
    pub scripted_weight: f64,
    /// Stationary share of free-living time.
    #[serde(default = "one")]
    pub living_weight: f64,
    /// Mean free-living dwell per visit.
    #[serde(default = "default_dwell")]
    pub mean_dwell_s: f64,
    /// Where a person tends to sit during free living (sofa, bed, desk).
    #[serde(default)]
    pub hotspot: Option<[f64; 2]>,
}

impl RoomRegion {
    fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.rect;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseSpec {
    pub house_id: String,
    pub sample_rate_hz: f64,
    pub floor_height_m: f64,
    pub rooms: Vec<RoomRegion>,
    pub ap_positions: Vec<[f64; 3]>,
    #[serde(default)]
    pub propagation: Propagation,
    pub drop_prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    Scripted,
    FreeLiving,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: [f64; 3],
    pub room: usize,
}

impl HouseSpec {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.ap_positions.is_empty() {
            problems.push("at least one AP is required".to_string());
        }
        if self.rooms.len() < 2 {
            problems.push("at least two rooms are required".to_string());
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            problems.push(format!("drop_prob {} outside [0, 1)", self.drop_prob));
        }
        if !(self.sample_rate_hz > 0.0) || !(self.floor_height_m > 0.0) {
            problems.push("sample rate and floor height must be positive".to_string());
        }
        let p = &self.propagation;
        if !(p.reference_distance_m > 0.0)
            || !(p.shadowing_sigma_db >= 0.0)
            || !(p.path_loss_exponent >= 0.0)
            || !(p.fading_sigma_db >= 0.0)
            || !(p.fading_time_s > 0.0)
            || !(p.session_sigma_db >= 0.0)
        {
            problems.push("propagation parameters out of range".to_string());
        }
        for (i, r) in self.rooms.iter().enumerate() {
            if r.id != i {
                problems.push(format!("room `{}` has id {} at position {i}", r.name, r.id));
            }
            let [x0, y0, x1, y1] = r.rect;
            if !(x1 > x0 && y1 > y0) {
                problems.push(format!("room `{}` has an empty rectangle", r.name));
            }
            if r.scripted_weight < 0.0 || r.living_weight < 0.0 || !(r.mean_dwell_s > 0.0) {
                problems.push(format!("room `{}` has negative weights or non-positive dwell", r.name));
            }
            if let Some([hx, hy]) = r.hotspot {
                if !r.contains(hx, hy) {
                    problems.push(format!("room `{}` hotspot lies outside the room", r.name));
                }
            }
        }
        if self.rooms.iter().all(|r| r.living_weight == 0.0) {
            problems.push("all living weights are zero".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(format!("house spec `{}`: {}", self.house_id, problems.join("; "))))
        }
    }

    pub fn house_config(&self) -> HouseConfig {
        HouseConfig {
            house_id: self.house_id.clone(),
            n_aps: self.n_aps(),
            sample_rate_hz: self.sample_rate_hz,
            rooms: self.rooms.iter().map(|r| RoomLabel { id: r.id, name: r.name.clone() }).collect(),
        }
    }

    /// Room containing a point, using the floor implied by its height.
    pub fn region_at(&self, p: [f64; 3]) -> Option<usize> {
        let floor = (p[2] / self.floor_height_m).floor().max(0.0) as u32;
        self.rooms.iter().position(|r| r.floor == floor && r.contains(p[0], p[1]))
    }

    /// Number of region boundaries the straight segment `a → b` crosses.
    pub fn walls_between(&self, a: [f64; 3], b: [f64; 3]) -> usize {
        let mut ts = vec![0.0, 1.0];
        let mut cut = |from: f64, to: f64, at: f64| {
            let d = to - from;
            if d.abs() > 1e-12 {
                let t = (at - from) / d;
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        };
        for r in &self.rooms {
            let [x0, y0, x1, y1] = r.rect;
            cut(a[0], b[0], x0);
            cut(a[0], b[0], x1);
            cut(a[1], b[1], y0);
            cut(a[1], b[1], y1);
        }
        let (zlo, zhi) = (a[2].min(b[2]), a[2].max(b[2]));
        let mut k = (zlo / self.floor_height_m).ceil();
        while k * self.floor_height_m < zhi {
            cut(a[2], b[2], k * self.floor_height_m);
            k += 1.0;
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        let lerp = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
        let regions: Vec<Option<usize>> = ts.windows(2).map(|w| self.region_at(lerp((w[0] + w[1]) / 2.0))).collect();
        regions.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Mean received power (no shadowing) at `position` from one AP.
    pub fn mean_rssi(&self, position: [f64; 3], ap: usize) -> Result<f64> {
        let apos = *self
            .ap_positions
            .get(ap)
            .ok_or_else(|| Error::Invalid(format!("AP index {ap} out of range for {} APs", self.n_aps())))?;
        let p = &self.propagation;
        let d = (0..3).map(|i| (position[i] - apos[i]).powi(2)).sum::<f64>().sqrt();
        let walls = self.walls_between(position, apos) as f64;
        let loss = 10.0 * p.path_loss_exponent * (d.max(p.reference_distance_m) / p.reference_distance_m).log10();
        Ok(p.tx_power_dbm - loss - walls * p.wall_attenuation_db)
    }

    /// One noisy reading, clamped so −120 dBm stays reserved for "missing".
    pub fn rssi_at(&self, position: [f64; 3], ap: usize, rng: &mut seeds::Rng) -> Result<f64> {
        let mean = self.mean_rssi(position, ap)?;
        Ok((mean + normal(self.propagation.shadowing_sigma_db, rng)).clamp(-119.0, 0.0))
    }

    fn standing_height(&self, room: &RoomRegion) -> f64 {
        room.floor as f64 * self.floor_height_m + room.elevation_m + PERSON_HEIGHT_M
    }

    fn n_samples(&self, duration_s: f64) -> usize {
        ((duration_s * self.sample_rate_hz + 1e-9).floor() as usize).max(1)
    }
}

/// Movement inside one room: walk between random waypoints with short
/// pauses, or sit still near the hotspot.
struct Mover {
    pos: [f64; 2],
    target: [f64; 2],
    pause_s: f64,
    seated: bool,
}

impl Mover {
    fn enter(room: &RoomRegion, seated: bool, rng: &mut seeds::Rng) -> Self {
        let pos = match (seated, room.hotspot) {
            (true, Some([hx, hy])) => {
                let jitter = Normal::new(0.0, 0.2).expect("sigma");
                let [x0, y0, x1, y1] = room.rect;
                [(hx + jitter.sample(rng)).clamp(x0, x1), (hy + jitter.sample(rng)).clamp(y0, y1)]
            }
            _ => waypoint(room, rng),
        };
        Self { pos, target: waypoint(room, rng), pause_s: 0.0, seated: seated && room.hotspot.is_some() }
    }

    fn step(&mut self, room: &RoomRegion, dt: f64, rng: &mut seeds::Rng) {
        if self.seated {
            return;
        }
        if self.pause_s > 0.0 {
            self.pause_s -= dt;
            return;
        }
        let (dx, dy) = (self.target[0] - self.pos[0], self.target[1] - self.pos[1]);
        let dist = (dx * dx + dy * dy).sqrt();
        let reach = WALK_SPEED_MPS * dt;
        if dist <= reach {
            self.pos = self.target;
            self.target = waypoint(room, rng);
            self.pause_s = rng.random_range(0.0..4.0);
        } else {
            self.pos[0] += dx / dist * reach;
            self.pos[1] += dy / dist * reach;
        }
    }
}

fn waypoint(room: &RoomRegion, rng: &mut seeds::Rng) -> [f64; 2] {
    let [x0, y0, x1, y1] = room.rect;
    let mx = (0.3f64).min((x1 - x0) / 4.0);
    let my = (0.3f64).min((y1 - y0) / 4.0);
    [rng.random_range(x0 + mx..=x1 - mx), rng.random_range(y0 + my..=y1 - my)]
}

/// Scripted visit plan: every room gets at least one visit, total time per
/// room proportional to its scripted weight, visit order shuffled.
fn scripted_plan(spec: &HouseSpec, duration_s: f64, rng: &mut seeds::Rng) -> Vec<(usize, f64)> {
    let total_w: f64 = spec.rooms.iter().map(|r| r.scripted_weight).sum();
    let mut visits = Vec::new();
    for r in &spec.rooms {
        let share = if total_w > 0.0 { r.scripted_weight / total_w } else { 1.0 / spec.rooms.len() as f64 };
        let budget = duration_s * share;
        let k = ((budget / SCRIPTED_VISIT_S).round() as usize).max(1);
        visits.extend(std::iter::repeat_n((r.id, budget / k as f64), k));
    }
    visits.shuffle(rng);
    // every room must own at least one sample even when the recording is short
    let min_len = 1.0 / spec.sample_rate_hz;
    let floor_total: f64 = visits.iter().map(|v| v.1.max(min_len)).sum();
    let scale = duration_s / floor_total;
    visits.iter().map(|&(r, len)| (r, len.max(min_len) * scale)).collect()
}

fn pareto(mean: f64, rng: &mut seeds::Rng) -> f64 {
    let xm = mean * (PARETO_SHAPE - 1.0) / PARETO_SHAPE;
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    (xm / u.powf(1.0 / PARETO_SHAPE)).min(mean * MAX_DWELL_FACTOR)
}

/// Markov walk over rooms. A visit to room r is chosen with probability
/// proportional to `living_weight / mean_dwell_s`, which makes the long-run
/// share of time in r equal to its normalized living weight.
fn living_plan(spec: &HouseSpec, duration_s: f64, rng: &mut seeds::Rng) -> Vec<(usize, f64)> {
    let rates: Vec<f64> = spec.rooms.iter().map(|r| r.living_weight / r.mean_dwell_s).collect();
    let total: f64 = rates.iter().sum();
    let mut plan = Vec::new();
    let mut elapsed = 0.0;
    while elapsed < duration_s {
        let mut u = rng.random_range(0.0..total);
        let mut room = rates.len() - 1;
        for (i, &w) in rates.iter().enumerate() {
            if u < w {
                room = i;
                break;
            }
            u -= w;
        }
        let dwell = pareto(spec.rooms[room].mean_dwell_s, rng);
        plan.push((room, dwell));
        elapsed += dwell;
    }
    plan
}

/// Person trajectory sampled at the house sample rate, starting at `t = 0`.
pub fn generate_trajectory(
    spec: &HouseSpec,
    duration_s: f64,
    mode: TrajectoryMode,
    seed: u64,
) -> Result<Vec<TrajectorySample>> {
    spec.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::Invalid(format!("duration must be positive, got {duration_s}")));
    }
    let mut rng = seeds::rng(seed);
    let plan = match mode {
        TrajectoryMode::Scripted => scripted_plan(spec, duration_s, &mut rng),
        TrajectoryMode::FreeLiving => living_plan(spec, duration_s, &mut rng),
    };
    let n = spec.n_samples(duration_s);
    let dt = 1.0 / spec.sample_rate_hz;
    let mut out = Vec::with_capacity(n);
    let mut boundary = 0.0;
    let mut visit = plan.iter();
    let mut current: Option<(&RoomRegion, Mover, usize)> = None;
    let mut end_index = 0;
    for i in 0..n {
        while current.is_none() || i >= end_index {
            let &(room_id, len) = match visit.next() {
                Some(v) => v,
                // rounding can leave the last sample uncovered: extend the final visit
                None => {
                    end_index = n;
                    break;
                }
            };
            boundary += len;
            end_index = ((boundary * spec.sample_rate_hz).round() as usize).max(i + 1);
            let room = &spec.rooms[room_id];
            let seated = mode == TrajectoryMode::FreeLiving && rng.random_bool(0.6);
            current = Some((room, Mover::enter(room, seated, &mut rng), room_id));
        }
        let (room, mover, room_id) = current.as_mut().expect("plan is never empty");
        out.push(TrajectorySample {
            t: i as f64 * dt,
            position: [mover.pos[0], mover.pos[1], spec.standing_height(room)],
            room: *room_id,
        });
        mover.step(room, dt, &mut rng);
    }
    Ok(out)
}

fn normal(sigma: f64, rng: &mut seeds::Rng) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

fn synthesize_stream(spec: &HouseSpec, traj: &[TrajectorySample], t0: f64, seed: u64) -> Result<RawStream> {
    let mut rng = seeds::rng(seed);
    let p = &spec.propagation;
    let n_aps = spec.n_aps();
    let offset: Vec<f64> = (0..n_aps).map(|_| normal(p.session_sigma_db, &mut rng)).collect();
    let mut fade: Vec<f64> = (0..n_aps).map(|_| normal(p.fading_sigma_db, &mut rng)).collect();
    let keep = (-1.0 / (spec.sample_rate_hz * p.fading_time_s)).exp();
    let innovation = p.fading_sigma_db * (1.0 - keep * keep).sqrt();
    let mut stream = RawStream::default();
    for s in traj {
        let mut row = Vec::with_capacity(n_aps);
        for ap in 0..n_aps {
            fade[ap] = keep * fade[ap] + normal(innovation, &mut rng);
            let v = spec.rssi_at(s.position, ap, &mut rng)? + offset[ap] + fade[ap];
            let v = v.round().clamp(-119.0, 0.0);
            let dropped = spec.drop_prob > 0.0 && rng.random_bool(spec.drop_prob);
            row.push((!dropped).then_some(v));
        }
        // millisecond timestamps survive the CSV round trip exactly
        stream.push(((t0 + s.t) * 1000.0).round() / 1000.0, row, Some(s.room));
    }
    Ok(stream)
}

/// Raw fingerprint (scripted) and free-living recordings for one house.
/// Readings are whole dBm values; each is independently lost with `drop_prob`.
pub fn synthesize_dataset(
    spec: &HouseSpec,
    fingerprint_minutes: f64,
    free_living_minutes: f64,
    seed: u64,
) -> Result<RawHouseData> {
    if !(fingerprint_minutes > 0.0 && free_living_minutes > 0.0) {
        return Err(Error::Invalid("recording durations must be positive".into()));
    }
    let fp_traj = generate_trajectory(
        spec,
        fingerprint_minutes * 60.0,
        TrajectoryMode::Scripted,
        seeds::derive_named(seed, "fingerprint-trajectory"),
    )?;
    let fl_traj = generate_trajectory(
        spec,
        free_living_minutes * 60.0,
        TrajectoryMode::FreeLiving,
        seeds::derive_named(seed, "free-living-trajectory"),
    )?;
    let fl_start = EPOCH_UNIX_S + fingerprint_minutes * 60.0 + SESSION_GAP_S;
    Ok(RawHouseData {
        config: spec.house_config(),
        fingerprint: synthesize_stream(spec, &fp_traj, EPOCH_UNIX_S, seeds::derive_named(seed, "fingerprint-rssi"))?,
        free_living: synthesize_stream(spec, &fl_traj, fl_start, seeds::derive_named(seed, "free-living-rssi"))?,
    })
}

// ---------------------------------------------------------------------------
// Builtin houses

struct R {
    name: &'static str,
    floor: u32,
    rect: [f64; 4],
    elevation: f64,
    scripted: f64,
    living: f64,
    dwell: f64,
    hotspot: Option<[f64; 2]>,
}

const fn room(name: &'static str, floor: u32, rect: [f64; 4]) -> R {
    R { name, floor, rect, elevation: 0.0, scripted: 1.0, living: 1.0, dwell: 90.0, hotspot: None }
}

impl R {
    const fn sits(mut self, x: f64, y: f64) -> Self {
        self.hotspot = Some([x, y]);
        self
    }

    const fn weights(mut self, scripted: f64, living: f64, dwell: f64) -> Self {
        self.scripted = scripted;
        self.living = living;
        self.dwell = dwell;
        self
    }

    const fn raised(mut self, elevation: f64) -> Self {
        self.elevation = elevation;
        self
    }
}

fn build(
    house_id: &str,
    rate: f64,
    rooms: Vec<R>,
    aps: &[(f64, f64, u32)],
    propagation: Propagation,
    drop_prob: f64,
) -> HouseSpec {
    let floor_height_m = 2.6;
    HouseSpec {
        house_id: house_id.to_string(),
        sample_rate_hz: rate,
        floor_height_m,
        rooms: rooms
            .into_iter()
            .enumerate()
            .map(|(id, r)| RoomRegion {
                id,
                name: r.name.to_string(),
                floor: r.floor,
                rect: r.rect,
                elevation_m: r.elevation,
                scripted_weight: r.scripted,
                living_weight: r.living,
                mean_dwell_s: r.dwell,
                hotspot: r.hotspot,
            })
            .collect(),
        ap_positions: aps.iter().map(|&(x, y, f)| [x, y, f as f64 * floor_height_m + 0.8]).collect(),
        propagation,
        drop_prob,
    }
}

fn target_b() -> HouseSpec {
    let rooms = vec![
        room("living room", 0, [0.0, 0.0, 4.5, 5.0]).sits(1.0, 3.5).weights(1.0, 6.0, 300.0),
        room("dining room", 0, [4.5, 0.0, 8.0, 4.0]).sits(6.0, 2.0).weights(1.0, 1.5, 120.0),
        room("kitchen", 0, [4.5, 4.0, 8.0, 10.0]).sits(7.0, 8.5).weights(1.0, 2.5, 120.0),
        room("hall", 0, [0.0, 5.0, 3.5, 10.0]).weights(1.0, 0.5, 15.0),
        room("lower stairs", 0, [3.5, 5.0, 4.5, 10.0]).raised(0.7).weights(0.35, 0.12, 8.0),
        room("outside", 0, [0.0, -5.0, 8.0, 0.0]).sits(6.5, -3.5).weights(0.7, 0.5, 180.0),
        room("upper stairs", 1, [3.5, 5.0, 4.5, 10.0]).raised(-0.7).weights(0.35, 0.12, 8.0),
        room("bedroom 1", 1, [0.0, 0.0, 4.5, 5.0]).sits(1.0, 1.2).weights(1.0, 5.0, 600.0),
        room("bedroom 2", 1, [4.5, 0.0, 8.0, 5.0]).sits(7.0, 3.5).weights(1.0, 1.5, 300.0),
        room("bathroom", 1, [4.5, 5.0, 8.0, 10.0]).weights(1.0, 1.0, 120.0),
        room("landing", 1, [0.0, 5.0, 3.5, 10.0]).weights(1.0, 0.4, 15.0),
    ];
    let aps = [
        (2.2, 2.5, 0),
        (6.2, 2.0, 0),
        (6.2, 7.0, 0),
        (1.7, 7.5, 0),
        (7.6, 9.6, 0),
        (0.4, 0.4, 0),
        (2.2, 2.5, 1),
        (6.2, 2.5, 1),
        (6.2, 7.5, 1),
        (1.7, 7.5, 1),
        (0.4, 4.6, 1),
    ];
    build("target_b", 5.0, rooms, &aps, Propagation::default(), 0.15)
}

fn target_c() -> HouseSpec {
    let rooms = vec![
        room("living room", 0, [0.0, 0.0, 5.0, 6.0]).sits(1.0, 4.5).weights(1.0, 6.0, 300.0),
        room("kitchen", 0, [5.0, 0.0, 9.0, 10.0]).sits(8.0, 2.0).weights(1.2, 3.0, 150.0),
        room("hall", 0, [0.0, 6.0, 4.0, 10.0]).weights(1.0, 0.6, 15.0),
        room("stairs", 0, [4.0, 6.0, 5.0, 10.0]).raised(1.3).weights(0.4, 0.15, 10.0),
        room("outside", 0, [0.0, 10.0, 9.0, 14.0]).sits(2.0, 12.5).weights(0.6, 0.5, 180.0),
        room("bedroom 1", 1, [0.0, 0.0, 4.5, 5.0]).sits(1.0, 1.0).weights(1.0, 5.0, 600.0),
        room("bedroom 2", 1, [4.5, 0.0, 9.0, 5.0]).sits(8.0, 4.0).weights(1.0, 1.5, 300.0),
        room("bedroom 3", 1, [0.0, 5.0, 4.0, 10.0]).sits(1.0, 8.5).weights(1.0, 1.0, 300.0),
        room("bathroom", 1, [5.0, 5.0, 9.0, 10.0]).weights(1.0, 1.0, 120.0),
    ];
    let aps = [
        (1.5, 3.0, 0),
        (4.0, 1.0, 0),
        (7.0, 2.0, 0),
        (7.0, 8.0, 0),
        (2.0, 8.0, 0),
        (0.4, 9.6, 0),
        (2.0, 2.5, 1),
        (7.0, 2.5, 1),
        (2.0, 7.5, 1),
        (7.0, 7.5, 1),
        (8.6, 0.4, 1),
    ];
    build("target_c", 5.0, rooms, &aps, Propagation::default(), 0.15)
}

fn target_d() -> HouseSpec {
    let rooms = vec![
        room("living room", 0, [0.0, 0.0, 5.0, 5.0]).sits(1.0, 1.0).weights(1.0, 6.0, 300.0),
        room("dining room", 0, [5.0, 0.0, 8.0, 5.0]).sits(6.5, 4.0).weights(1.0, 1.5, 120.0),
        room("kitchen", 0, [4.0, 5.0, 8.0, 9.0]).sits(7.0, 8.0).weights(1.0, 2.5, 120.0),
        room("hall", 0, [0.0, 5.0, 3.0, 9.0]).weights(1.0, 0.5, 15.0),
        room("stairs", 0, [3.0, 5.0, 4.0, 9.0]).raised(1.3).weights(0.4, 0.15, 10.0),
        room("outside", 0, [-5.0, 0.0, 0.0, 9.0]).sits(-3.5, 2.0).weights(0.6, 0.5, 180.0),
        room("bedroom 1", 1, [0.0, 0.0, 4.0, 5.0]).sits(1.0, 4.0).weights(1.0, 5.0, 600.0),
        room("bedroom 2", 1, [4.0, 0.0, 8.0, 5.0]).sits(7.0, 1.0).weights(1.0, 1.5, 300.0),
        room("bathroom", 1, [4.0, 5.0, 8.0, 9.0]).weights(1.0, 1.0, 120.0),
        room("landing", 1, [0.0, 5.0, 4.0, 9.0]).weights(1.0, 0.4, 15.0),
    ];
    let aps = [
        (2.5, 2.5, 0),
        (0.4, 4.6, 0),
        (6.5, 2.5, 0),
        (6.0, 7.0, 0),
        (7.6, 8.6, 0),
        (1.5, 7.0, 0),
        (2.0, 2.5, 1),
        (6.0, 2.5, 1),
        (6.0, 7.0, 1),
        (2.0, 7.0, 1),
        (0.4, 0.4, 1),
    ];
    build("target_d", 5.0, rooms, &aps, Propagation::default(), 0.15)
}

/// Single-floor, three-room fixture used by small experiments.
fn three_room() -> HouseSpec {
    let rooms = vec![
        room("kitchen", 0, [0.0, 0.0, 4.0, 4.0]).sits(1.0, 1.0),
        room("living room", 0, [4.0, 0.0, 9.0, 4.0]).sits(8.0, 3.0),
        room("bedroom", 0, [0.0, 4.0, 9.0, 8.0]).sits(7.5, 7.0),
    ];
    let aps = [
        (1.0, 1.0, 0),
        (3.0, 3.0, 0),
        (2.0, 0.4, 0),
        (5.0, 1.0, 0),
        (8.0, 3.0, 0),
        (6.5, 0.4, 0),
        (1.0, 6.0, 0),
        (4.5, 7.6, 0),
        (8.0, 5.0, 0),
        (6.0, 6.0, 0),
        (2.5, 7.6, 0),
    ];
    build("three_room", 5.0, rooms, &aps, Propagation::default(), 0.15)
}

fn source_propagation(tx: f64, n: f64, sigma: f64) -> Propagation {
    Propagation { tx_power_dbm: tx, path_loss_exponent: n, shadowing_sigma_db: sigma, ..Propagation::default() }
}

fn source_1() -> HouseSpec {
    let rooms = vec![
        room("living room", 0, [0.0, 0.0, 6.0, 5.0]).sits(1.0, 1.0).weights(1.0, 5.0, 300.0),
        room("kitchen", 0, [6.0, 0.0, 10.0, 5.0]).sits(9.0, 4.0).weights(1.0, 2.5, 120.0),
        room("bedroom 1", 0, [0.0, 5.0, 5.0, 10.0]).sits(1.0, 9.0).weights(1.0, 5.0, 600.0),
        room("bedroom 2", 0, [5.0, 5.0, 8.0, 10.0]).weights(1.0, 1.0, 300.0),
        room("bathroom", 0, [8.0, 5.0, 10.0, 10.0]).weights(1.0, 1.0, 120.0),
        room("outside", 0, [0.0, -4.0, 10.0, 0.0]).weights(0.5, 0.5, 180.0),
    ];
    let aps = [
        (2.0, 2.5, 0),
        (5.0, 1.0, 0),
        (8.0, 2.5, 0),
        (2.5, 7.5, 0),
        (6.5, 7.5, 0),
        (9.0, 7.5, 0),
        (0.4, 4.6, 0),
        (9.6, 0.4, 0),
        (4.5, 9.6, 0),
    ];
    build("source_1", 4.0, rooms, &aps, source_propagation(-45.0, 2.4, 5.0), 0.25)
}

fn source_2() -> HouseSpec {
    let rooms = vec![
        room("living room", 0, [0.0, 0.0, 5.0, 5.0]).sits(4.0, 1.0).weights(1.0, 5.0, 300.0),
        room("kitchen", 0, [5.0, 0.0, 9.0, 5.0]).sits(8.0, 1.0).weights(1.0, 2.5, 120.0),
        room("hall", 0, [0.0, 5.0, 8.0, 8.0]).weights(1.0, 0.5, 15.0),
        room("stairs", 0, [8.0, 5.0, 9.0, 8.0]).raised(1.3).weights(0.5, 0.2, 10.0),
        room("bedroom 1", 1, [0.0, 0.0, 5.0, 5.0]).sits(1.0, 1.0).weights(1.0, 5.0, 600.0),
        room("bedroom 2", 1, [5.0, 0.0, 9.0, 5.0]).weights(1.0, 1.0, 300.0),
        room("bathroom", 1, [0.0, 5.0, 8.0, 8.0]).weights(1.0, 1.0, 120.0),
    ];
    let aps = [
        (2.5, 2.5, 0),
        (7.0, 2.5, 0),
        (4.0, 6.5, 0),
        (0.4, 0.4, 0),
        (2.5, 2.5, 1),
        (7.0, 2.5, 1),
        (4.0, 6.5, 1),
        (8.6, 0.4, 1),
        (0.4, 7.6, 1),
    ];
    build("source_2", 4.0, rooms, &aps, source_propagation(-42.0, 3.0, 4.5), 0.25)
}

fn source_3() -> HouseSpec {
    let rooms = vec![
        room("living room", 0, [0.0, 0.0, 6.0, 4.0]).sits(1.0, 3.0).weights(1.0, 5.0, 300.0),
        room("kitchen", 0, [6.0, 0.0, 9.0, 4.0]).sits(8.0, 1.0).weights(1.0, 2.5, 120.0),
        room("hall", 0, [0.0, 4.0, 9.0, 6.0]).weights(1.0, 0.5, 15.0),
        room("bedroom", 0, [0.0, 6.0, 5.0, 10.0]).sits(1.0, 9.0).weights(1.0, 5.0, 600.0),
        room("bathroom", 0, [5.0, 6.0, 7.0, 10.0]).weights(1.0, 1.0, 120.0),
        room("study", 0, [7.0, 6.0, 9.0, 10.0]).sits(8.0, 9.0).weights(1.0, 2.0, 600.0),
    ];
    let aps = [
        (2.0, 2.0, 0),
        (4.5, 2.0, 0),
        (7.5, 2.0, 0),
        (4.5, 5.0, 0),
        (2.5, 8.0, 0),
        (6.0, 8.0, 0),
        (8.0, 8.0, 0),
        (0.4, 0.4, 0),
        (8.6, 9.6, 0),
    ];
    build("source_3", 4.0, rooms, &aps, source_propagation(-38.0, 2.8, 3.5), 0.25)
}

pub const BUILTIN_TARGETS: [&str; 3] = ["target_b", "target_c", "target_d"];
pub const BUILTIN_SOURCES: [&str; 3] = ["source_1", "source_2", "source_3"];

pub fn builtin_names() -> [&'static str; 7] {
    ["target_b", "target_c", "target_d", "source_1", "source_2", "source_3", "three_room"]
}

pub fn builtin(name: &str) -> Option<HouseSpec> {
    Some(match name {
        "target_b" => target_b(),
        "target_c" => target_c(),
        "target_d" => target_d(),
        "source_1" => source_1(),
        "source_2" => source_2(),
        "source_3" => source_3(),
        "three_room" => three_room(),
        _ => return None,
    })
}

/// `builtin:<name>` or a path to a JSON house spec.
pub fn resolve_spec(reference: &str) -> Result<HouseSpec> {
    let spec = if let Some(name) = reference.strip_prefix("builtin:") {
        builtin(name).ok_or_else(|| {
            Error::Invalid(format!("unknown builtin house `{name}`; known: {}", builtin_names().join(", ")))
        })?
    } else {
        let text = std::fs::read_to_string(reference).map_err(|source| Error::Io { path: reference.into(), source })?;
        serde_json::from_str(&text)?
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(mut spec: HouseSpec) -> HouseSpec {
        spec.propagation.shadowing_sigma_db = 0.0;
        spec
    }

    fn two_rooms() -> HouseSpec {
        let rooms = vec![room("a", 0, [0.0, 0.0, 4.0, 4.0]), room("b", 0, [4.0, 0.0, 8.0, 4.0])];
        build("pair", 5.0, rooms, &[(2.0, 2.0, 0), (6.0, 2.0, 0)], Propagation::default(), 0.0)
    }

    #[test]
    fn reference_distance_gives_tx_power() {
        let spec = quiet(two_rooms());
        let ap = spec.ap_positions[0];
        let mut rng = seeds::rng(0);
        let v = spec.rssi_at([ap[0] + 1.0, ap[1], ap[2]], 0, &mut rng).unwrap();
        assert_eq!(v, -40.0);
    }

    #[test]
    fn ten_reference_distances_lose_twenty_db_at_exponent_two() {
        let mut spec = quiet(two_rooms());
        spec.propagation.path_loss_exponent = 2.0;
        // stay inside room a along the vertical so no wall is crossed
        spec.rooms[0].rect = [0.0, 0.0, 40.0, 40.0];
        spec.rooms[1].rect = [40.0, 0.0, 48.0, 4.0];
        spec.ap_positions[0] = [2.0, 2.0, 1.0];
        let mut rng = seeds::rng(0);
        let v = spec.rssi_at([12.0, 2.0, 1.0], 0, &mut rng).unwrap();
        assert!((v - -60.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn readings_never_reach_the_sentinel() {
        let mut spec = two_rooms();
        spec.propagation.shadowing_sigma_db = 40.0;
        let mut rng = seeds::rng(3);
        for i in 0..2000 {
            let p = [i as f64 * 0.05, 1.0, 1.0];
            let v = spec.rssi_at(p, 0, &mut rng).unwrap();
            assert!((-119.0..=0.0).contains(&v));
        }
        assert!(spec.rssi_at([0.0; 3], 7, &mut rng).is_err());
    }

    #[test]
    fn walls_counted_once_per_boundary() {
        let spec = two_rooms();
        assert_eq!(spec.walls_between([1.0, 1.0, 1.0], [3.0, 3.0, 1.0]), 0);
        assert_eq!(spec.walls_between([1.0, 1.0, 1.0], [7.0, 1.0, 1.0]), 1);
        // stepping out of every room is one boundary
        assert_eq!(spec.walls_between([1.0, 1.0, 1.0], [1.0, 9.0, 1.0]), 1);
    }

    #[test]
    fn scripted_visits_every_room() {
        for name in builtin_names() {
            let spec = builtin(name).unwrap();
            for seed in 0..3 {
                let traj = generate_trajectory(&spec, 600.0, TrajectoryMode::Scripted, seed).unwrap();
                let mut seen = vec![false; spec.rooms.len()];
                for s in &traj {
                    seen[s.room] = true;
                }
                assert!(seen.iter().all(|&b| b), "{name} seed {seed}");
            }
        }
    }

    #[test]
    fn short_duration_gives_one_sample() {
        let spec = builtin("target_b").unwrap();
        for mode in [TrajectoryMode::Scripted, TrajectoryMode::FreeLiving] {
            assert_eq!(generate_trajectory(&spec, 0.2, mode, 1).unwrap().len(), 1);
        }
        assert!(generate_trajectory(&spec, 0.0, TrajectoryMode::Scripted, 1).is_err());
    }

    #[test]
    fn positions_stay_inside_labelled_room() {
        let spec = builtin("target_c").unwrap();
        for mode in [TrajectoryMode::Scripted, TrajectoryMode::FreeLiving] {
            let traj = generate_trajectory(&spec, 1800.0, mode, 5).unwrap();
            for s in &traj {
                let r = &spec.rooms[s.room];
                assert!(r.contains(s.position[0], s.position[1]), "{:?} outside {}", s.position, r.name);
                assert_eq!(spec.region_at(s.position), Some(s.room));
            }
        }
    }

    #[test]
    fn rare_room_share_tracks_living_weight() {
        let mut spec = builtin("target_b").unwrap();
        let stairs = 4;
        let rest: f64 = spec.rooms.iter().enumerate().filter(|(i, _)| *i != stairs).map(|(_, r)| r.living_weight).sum();
        spec.rooms[stairs].living_weight = 0.02 / 0.98 * rest;
        let mut fraction = 0.0;
        for seed in 0..20 {
            let traj = generate_trajectory(&spec, 3600.0, TrajectoryMode::FreeLiving, seed).unwrap();
            fraction += traj.iter().filter(|s| s.room == stairs).count() as f64 / traj.len() as f64;
        }
        fraction /= 20.0;
        assert!((fraction - 0.02).abs() <= 0.01, "stairs share {fraction}");
    }

    #[test]
    fn drop_probability_controls_missing_share() {
        let mut spec = two_rooms();
        spec.drop_prob = 0.0;
        let raw = synthesize_dataset(&spec, 1.0, 1.0, 9).unwrap();
        assert_eq!(raw.fingerprint.missing_count() + raw.free_living.missing_count(), 0);

        spec.drop_prob = 0.3;
        let raw = synthesize_dataset(&spec, 10000.0 / 2.0 / 5.0 / 60.0, 0.1, 9).unwrap();
        let total = raw.fingerprint.len() * 2;
        assert_eq!(total, 10000);
        let frac = raw.fingerprint.missing_count() as f64 / total as f64;
        assert!((frac - 0.3).abs() < 0.02, "{frac}");
    }

    #[test]
    fn synthesis_is_deterministic() {
        let spec = builtin("source_2").unwrap();
        let a = synthesize_dataset(&spec, 2.0, 3.0, 11).unwrap();
        let b = synthesize_dataset(&spec, 2.0, 3.0, 11).unwrap();
        let c = synthesize_dataset(&spec, 2.0, 3.0, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.fingerprint.timestamps.last() < a.free_living.timestamps.first());
    }

    #[test]
    fn own_room_ap_dominates_its_room() {
        for name in builtin_names() {
            let spec = quiet(builtin(name).unwrap());
            let traj = generate_trajectory(&spec, 3600.0, TrajectoryMode::Scripted, 2).unwrap();
            for (ap, &pos) in spec.ap_positions.iter().enumerate() {
                let Some(home) = spec.region_at(pos) else { continue };
                let mut sums = vec![(0.0, 0usize); spec.rooms.len()];
                for s in &traj {
                    sums[s.room].0 += spec.mean_rssi(s.position, ap).unwrap();
                    sums[s.room].1 += 1;
                }
                let mean = |r: usize| sums[r].0 / sums[r].1 as f64;
                for other in (0..spec.rooms.len()).filter(|&r| r != home) {
                    let gap = mean(home) - mean(other);
                    assert!(
                        gap >= spec.propagation.wall_attenuation_db / 2.0,
                        "{name}: AP {ap} in {} only {gap:.2} dB above {}",
                        spec.rooms[home].name,
                        spec.rooms[other].name
                    );
                }
            }
        }
    }

    #[test]
    fn builtin_shapes() {
        for name in BUILTIN_TARGETS {
            let s = builtin(name).unwrap();
            assert_eq!(s.n_aps(), 11);
            assert!((9..=11).contains(&s.rooms.len()));
            assert!(s.rooms.iter().any(|r| r.name.contains("stairs")));
            assert!(s.rooms.iter().any(|r| r.name == "outside"));
            assert!(s.rooms.iter().any(|r| r.floor == 1));
        }
        for name in BUILTIN_SOURCES {
            assert_eq!(builtin(name).unwrap().n_aps(), 9);
        }
        for name in builtin_names() {
            builtin(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = builtin("target_d").unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: HouseSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
