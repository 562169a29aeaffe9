//! Classic augmenters: duplication, SMOTE interpolation and expert
//! noise/drop perturbation. Each tops every class up to a target count,
//! keeps all originals and tags new windows with their method.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{squared_distance, HouseConfig, LabelledWindow, RssiWindow};
use crate::error::{Error, Result};
use crate::seeds;

pub const SMOTE_K: usize = 5;
pub const EXPERT_NOISE_SIGMA: f64 = 0.05;
pub const EXPERT_DROP_FRACTION: f64 = 2.0 / 11.0;

/// How many windows each class is short of `target`.
pub fn shortfall(windows: &[LabelledWindow], n_classes: usize, target: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for w in windows {
        counts[w.label] += 1;
    }
    counts.iter().map(|&c| target.saturating_sub(c)).collect()
}

/// Windows grouped by class; errors on labels out of range and on classes
/// that have no windows but still need some.
pub(crate) fn group_by_class<'a>(
    windows: &'a [LabelledWindow],
    config: &HouseConfig,
    target: usize,
) -> Result<Vec<Vec<&'a RssiWindow>>> {
    let k = config.n_classes();
    let mut groups = vec![Vec::new(); k];
    for w in windows {
        let slot = groups.get_mut(w.label).ok_or(Error::LabelOutOfRange { label: w.label, n_classes: k })?;
        slot.push(&w.window);
    }
    for (c, g) in groups.iter().enumerate() {
        if g.is_empty() && target > 0 {
            return Err(Error::EmptyClass(config.room_name(c).unwrap_or("?").to_string()));
        }
    }
    Ok(groups)
}

/// Originals followed by `make(class, members, rng)` for each missing slot.
fn top_up(
    windows: &[LabelledWindow],
    config: &HouseConfig,
    target: usize,
    seed: u64,
    method: &str,
    mut make: impl FnMut(usize, &[&RssiWindow], &mut seeds::Rng) -> Result<RssiWindow>,
) -> Result<Vec<LabelledWindow>> {
    let groups = group_by_class(windows, config, target)?;
    let mut out = windows.to_vec();
    for (c, members) in groups.iter().enumerate() {
        let need = target.saturating_sub(members.len());
        if need == 0 {
            continue;
        }
        let mut rng = seeds::rng(seeds::derive(seed, c as u64));
        for _ in 0..need {
            out.push(LabelledWindow::synthetic(make(c, members, &mut rng)?, c, method));
        }
    }
    Ok(out)
}

/// Duplicate uniformly chosen originals until each class reaches `target`.
pub fn random_oversample(
    windows: &[LabelledWindow],
    config: &HouseConfig,
    target: usize,
    seed: u64,
) -> Result<Vec<LabelledWindow>> {
    top_up(windows, config, target, seed, "oversample", |_, members, rng| {
        Ok(members[rng.random_range(0..members.len())].clone())
    })
}

/// `x + u·(nn − x)`; convex, so values stay inside the hull of the pair.
pub fn smote_point(x: &RssiWindow, nn: &RssiWindow, u: f32) -> RssiWindow {
    let mut s = x.clone();
    for (v, &b) in s.values_mut().iter_mut().zip(nn.as_slice()) {
        *v += u * (b - *v);
    }
    s
}

/// Indices of the `k` nearest other members of each member.
fn neighbours(members: &[&RssiWindow], k: usize) -> Vec<Vec<usize>> {
    let n = members.len();
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_distance(members[i].as_slice(), members[j].as_slice());
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    (0..n)
        .map(|i| {
            let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            // ties broken by index so the result does not depend on sort stability
            idx.sort_by(|&a, &b| d[i * n + a].total_cmp(&d[i * n + b]).then(a.cmp(&b)));
            idx.truncate(k);
            idx
        })
        .collect()
}

/// SMOTE with `k` same-class neighbours on flattened windows. A class with a
/// single window can only be duplicated, which is logged.
pub fn smote(
    windows: &[LabelledWindow],
    config: &HouseConfig,
    k: usize,
    target: usize,
    seed: u64,
) -> Result<Vec<LabelledWindow>> {
    if k == 0 {
        return Err(Error::Invalid("SMOTE needs k ≥ 1".into()));
    }
    let mut cache: Vec<Option<Vec<Vec<usize>>>> = vec![None; config.n_classes()];
    top_up(windows, config, target, seed, "smote", |c, members, rng| {
        if members.len() == 1 {
            if cache[c].is_none() {
                log::warn!(
                    "class `{}` has one window; SMOTE falls back to duplication",
                    config.room_name(c).unwrap_or("?")
                );
                cache[c] = Some(vec![]);
            }
            return Ok(members[0].clone());
        }
        let nn = cache[c].get_or_insert_with(|| neighbours(members, k));
        let i = rng.random_range(0..members.len());
        let j = nn[i][rng.random_range(0..nn[i].len())];
        Ok(smote_point(members[i], members[j], rng.random::<f32>()))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DropMode {
    /// Replace `round(fraction · n_aps)` randomly chosen AP rows with the sentinel.
    RandomAp { fraction: f64 },
    /// Replace every `every`-th timestamp column with the sentinel.
    Periodic { every: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertOptions {
    pub noise_sigma: f64,
    pub drop: Option<DropMode>,
}

impl Default for ExpertOptions {
    /// Noise and random AP drop together, as used by the expert arm.
    fn default() -> Self {
        Self { noise_sigma: EXPERT_NOISE_SIGMA, drop: Some(DropMode::RandomAp { fraction: EXPERT_DROP_FRACTION }) }
    }
}

/// Gaussian noise clamped to [0,1], then the requested drop pattern.
/// `sentinel[ap]` is the normalized image of the missing-signal value.
pub fn expert_augment(
    window: &RssiWindow,
    opts: &ExpertOptions,
    sentinel: &[f32],
    rng: &mut seeds::Rng,
) -> Result<RssiWindow> {
    let (n_aps, width) = window.shape();
    if sentinel.len() != n_aps {
        return Err(Error::Shape(format!("sentinel has {} entries for {n_aps} APs", sentinel.len())));
    }
    if !(opts.noise_sigma >= 0.0) {
        return Err(Error::Invalid(format!("noise sigma {} must be ≥ 0", opts.noise_sigma)));
    }
    let mut out = window.clone();
    if opts.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, opts.noise_sigma).expect("finite sigma");
        for v in out.values_mut() {
            *v = (*v as f64 + noise.sample(rng)).clamp(0.0, 1.0) as f32;
        }
    }
    match opts.drop {
        None => {}
        Some(DropMode::RandomAp { fraction }) => {
            let n_drop = (fraction * n_aps as f64).round();
            if !(n_drop >= 0.0) || n_drop as usize >= n_aps {
                return Err(Error::Invalid(format!("dropping {n_drop} of {n_aps} APs leaves none")));
            }
            for ap in sample(rng, n_aps, n_drop as usize) {
                for t in 0..width {
                    out.set(ap, t, sentinel[ap]);
                }
            }
        }
        Some(DropMode::Periodic { every }) => {
            if every < 2 {
                return Err(Error::Invalid(format!("periodic drop every {every} would drop every column")));
            }
            for t in (every - 1..width).step_by(every) {
                for (ap, &s) in sentinel.iter().enumerate() {
                    out.set(ap, t, s);
                }
            }
        }
    }
    Ok(out)
}

/// Perturbed copies of uniformly chosen originals up to `target` per class.
pub fn expert_oversample(
    windows: &[LabelledWindow],
    config: &HouseConfig,
    sentinel: &[f32],
    opts: &ExpertOptions,
    target: usize,
    seed: u64,
) -> Result<Vec<LabelledWindow>> {
    top_up(windows, config, target, seed, "expert", |_, members, rng| {
        let src = members[rng.random_range(0..members.len())];
        expert_augment(src, opts, sentinel, rng)
    })
}
