//! One arm of the localisation experiment: augment the fingerprint windows,
//! train a localiser, score it on free-living windows.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::localiser::{train_localiser, LocaliserGrid};
use super::metrics::{macro_f1, mivo, per_class_accuracy};
use crate::augment::{expert_oversample, random_oversample, smote, ExpertOptions, SMOTE_K};
use crate::checkpoint::GanCheckpoint;
use crate::congan::{self, GanConfig};
use crate::domain::{Arm, ExperimentResult, HouseDataset, LabelledWindow, RssiWindow};
use crate::error::{Error, Result};
use crate::seeds;
use crate::transfer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    /// Classes are topped up to this many fingerprint windows.
    pub target_per_class: usize,
    pub smote_k: usize,
    pub expert: ExpertOptions,
    /// Used for ConGAN training and for fine-tuning.
    pub gan: GanConfig,
    pub localiser: LocaliserGrid,
    pub mivo: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            target_per_class: 1000,
            smote_k: SMOTE_K,
            expert: ExpertOptions::default(),
            gan: GanConfig::default(),
            localiser: LocaliserGrid::default(),
            mivo: true,
        }
    }
}

/// Pretrained models the transfer arms start from.
#[derive(Clone, Debug, Default)]
pub struct Prerequisites {
    /// Pretrained on houses recorded like the target.
    pub same_protocol: Option<GanCheckpoint>,
    /// Pretrained on houses with another AP layout and rate.
    pub cross_protocol: Option<GanCheckpoint>,
}

impl Prerequisites {
    pub fn check(&self, arm: Arm) -> Result<()> {
        self.pretrained(arm).map(|_| ())
    }

    fn pretrained(&self, arm: Arm) -> Result<Option<&GanCheckpoint>> {
        match arm {
            Arm::TCongan => self.same_protocol.as_ref().map(Some).ok_or_else(|| {
                Error::MissingPrerequisite("t_congan needs a same-protocol pretrained checkpoint".into())
            }),
            Arm::TConganSphere => self.cross_protocol.as_ref().map(Some).ok_or_else(|| {
                Error::MissingPrerequisite("t_congan_sphere needs a cross-protocol pretrained checkpoint".into())
            }),
            _ => Ok(None),
        }
    }
}

/// One window kept for plotting; `method` is an arm name or `real`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleWindow {
    pub house_id: String,
    pub method: String,
    pub room: String,
    pub window: RssiWindow,
}

/// The first real and the first synthetic window of every room.
pub fn example_windows(ds: &HouseDataset, method: &str, synthetic: &[&LabelledWindow]) -> Vec<ExampleWindow> {
    let mut out = Vec::new();
    for (c, room) in ds.config.rooms.iter().enumerate() {
        let real = ds.fingerprint.iter().find(|w| w.label == c).map(|w| ("real", w));
        let fake = synthetic.iter().find(|w| w.label == c).map(|w| (method, *w));
        for (m, w) in real.into_iter().chain(fake) {
            out.push(ExampleWindow {
                house_id: ds.config.house_id.clone(),
                method: m.to_string(),
                room: room.name.clone(),
                window: w.window.clone(),
            });
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct RepeatOutput {
    pub result: ExperimentResult,
    pub examples: Vec<ExampleWindow>,
}

fn class_names(ds: &HouseDataset) -> Vec<String> {
    ds.config.rooms.iter().map(|r| r.name.clone()).collect()
}

/// The GAN an arm samples from, trained for this repeat.
pub fn arm_model(
    ds: &HouseDataset,
    arm: Arm,
    pre: &Prerequisites,
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<Option<GanCheckpoint>> {
    let cfg = GanConfig { seed: seeds::derive_named(seed, "gan"), ..opts.gan.clone() };
    match arm {
        Arm::Congan => congan::train(&ds.fingerprint, &ds.config, &cfg).map(Some),
        Arm::TCongan | Arm::TConganSphere => {
            let pretrained = pre.pretrained(arm)?.expect("transfer arm");
            let surgered =
                transfer::surgery(pretrained, class_names(ds), ds.config.n_aps, seeds::derive_named(seed, "surgery"))?;
            transfer::finetune(&surgered, &ds.fingerprint, &ds.config, &cfg).map(Some)
        }
        _ => Ok(None),
    }
}

/// Fingerprint windows plus this arm's synthetic ones.
pub fn augmented_training_set(
    ds: &HouseDataset,
    arm: Arm,
    model: Option<&GanCheckpoint>,
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<Vec<LabelledWindow>> {
    let fp = &ds.fingerprint;
    let target = opts.target_per_class;
    let aug_seed = seeds::derive_named(seed, "augment");
    match arm {
        Arm::Baseline | Arm::Weighted => Ok(fp.clone()),
        Arm::Oversample => random_oversample(fp, &ds.config, target, aug_seed),
        Arm::Smote => smote(fp, &ds.config, opts.smote_k, target, aug_seed),
        Arm::Expert => {
            let sentinel = ds.norm_stats.normalized_sentinel();
            expert_oversample(fp, &ds.config, &sentinel, &opts.expert, target, aug_seed)
        }
        Arm::Congan | Arm::TCongan | Arm::TConganSphere => {
            let ck = model.ok_or_else(|| Error::MissingPrerequisite(format!("{arm} needs a trained generator")))?;
            congan::gan_oversample(ck, fp, &ds.config, target, aug_seed, arm.name())
        }
    }
}

/// Mean over classes with synthetic windows of the per-class MiVo scalar.
pub fn class_mivo(real: &[LabelledWindow], synthetic: &[&LabelledWindow], n_classes: usize) -> Result<Option<f64>> {
    let mut scores = Vec::new();
    for c in 0..n_classes {
        let gen: Vec<RssiWindow> = synthetic.iter().filter(|w| w.label == c).map(|w| w.window.clone()).collect();
        if gen.is_empty() {
            continue;
        }
        let rea: Vec<RssiWindow> = real.iter().filter(|w| w.label == c).map(|w| w.window.clone()).collect();
        scores.push(mivo(&rea, &gen)?.scalar);
    }
    Ok((!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64))
}

/// Train/test hygiene: nothing recorded during free living may be trained on.
fn check_hygiene(train: &[LabelledWindow]) -> Result<()> {
    if let Some(w) = train.iter().find(|w| w.provenance.is_free_living()) {
        return Err(Error::Invalid(format!("free-living window in a training set: {:?}", w.provenance)));
    }
    Ok(())
}

pub fn run_repeat(
    ds: &HouseDataset,
    arm: Arm,
    repeat_index: usize,
    seed: u64,
    pre: &Prerequisites,
    opts: &ExperimentOptions,
) -> Result<RepeatOutput> {
    let start = Instant::now();
    if ds.free_living.is_empty() {
        return Err(Error::Invalid(format!(
            "house `{}` has no free-living windows to evaluate on",
            ds.config.house_id
        )));
    }
    check_hygiene(&ds.fingerprint)?;
    let model = arm_model(ds, arm, pre, opts, seed)?;
    let train = augmented_training_set(ds, arm, model.as_ref(), opts, seed)?;
    check_hygiene(&train)?;
    let synthetic: Vec<&LabelledWindow> = train.iter().filter(|w| w.provenance.is_synthetic()).collect();
    if !arm.is_augmentation() && !synthetic.is_empty() {
        return Err(Error::Invalid(format!("{arm} produced synthetic windows")));
    }
    let names = class_names(ds);
    let mivo = if opts.mivo { class_mivo(&ds.fingerprint, &synthetic, names.len())? } else { None };
    let examples = example_windows(ds, arm.name(), &synthetic);

    let x: Vec<&RssiWindow> = train.iter().map(|w| &w.window).collect();
    let y: Vec<usize> = train.iter().map(|w| w.label).collect();
    let loc =
        train_localiser(&x, &y, &names, arm == Arm::Weighted, &opts.localiser, seeds::derive_named(seed, "localiser"))?;
    let test_x: Vec<&RssiWindow> = ds.free_living.iter().map(|w| &w.window).collect();
    let truth: Vec<usize> = ds.free_living.iter().map(|w| w.label).collect();
    let pred = loc.predict(&test_x)?;
    let per_class_accuracy = per_class_accuracy(&pred, &truth)?
        .into_iter()
        .map(|(c, a)| (names.get(c).cloned().unwrap_or_else(|| c.to_string()), a))
        .collect();
    let result = ExperimentResult {
        house_id: ds.config.house_id.clone(),
        arm,
        repeat_index,
        macro_f1: macro_f1(&pred, &truth)?,
        per_class_accuracy,
        mivo,
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "{} {arm} repeat {repeat_index}: macro F1 {:.2}, {} synthetic, {:.1}s",
        result.house_id,
        result.macro_f1,
        synthetic.len(),
        result.wall_time_s
    );
    Ok(RepeatOutput { result, examples })
}

/// Seed of repeat `i` for a run seeded with `seed`.
pub fn repeat_seed(seed: u64, house_id: &str, i: usize) -> u64 {
    seeds::derive(seeds::derive_named(seed, house_id), i as u64)
}

/// Every repeat of one arm. The repeat seeds do not depend on the arm, so
/// arms are paired repeat by repeat.
pub fn run_experiment(
    ds: &HouseDataset,
    arm: Arm,
    seeds: &[u64],
    pre: &Prerequisites,
    opts: &ExperimentOptions,
) -> Result<Vec<RepeatOutput>> {
    pre.check(arm)?;
    seeds.iter().enumerate().map(|(i, &s)| run_repeat(ds, arm, i, s, pre, opts)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub house_id: String,
    pub arm: Arm,
    pub repeats: usize,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub mivo_mean: Option<f64>,
    pub per_class_mean: BTreeMap<String, f64>,
    /// Per-class mean minus the baseline's, when the baseline was run.
    pub per_class_delta: BTreeMap<String, f64>,
}

impl ArmSummary {
    /// `mean±std` with two decimals.
    pub fn macro_f1_cell(&self) -> String {
        mean_std(self.macro_f1_mean, self.macro_f1_std)
    }
}

pub fn mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.2}±{std:.2}")
}

/// Mean and population standard deviation.
pub fn mean_and_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// One row per (house, arm), houses in first-seen order and arms in table order.
pub fn summarize(results: &[ExperimentResult]) -> Vec<ArmSummary> {
    let mut houses: Vec<&str> = Vec::new();
    for r in results {
        if !houses.contains(&r.house_id.as_str()) {
            houses.push(&r.house_id);
        }
    }
    let mut out = Vec::new();
    for house in houses {
        let mut rows = Vec::new();
        for arm in Arm::ALL {
            let rs: Vec<&ExperimentResult> = results.iter().filter(|r| r.house_id == house && r.arm == arm).collect();
            if rs.is_empty() {
                continue;
            }
            let (macro_f1_mean, macro_f1_std) = mean_and_std(&rs.iter().map(|r| r.macro_f1).collect::<Vec<_>>());
            let mivos: Vec<f64> = rs.iter().filter_map(|r| r.mivo).collect();
            let mut per_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in &rs {
                for (room, &a) in &r.per_class_accuracy {
                    per_class.entry(room.clone()).or_default().push(a);
                }
            }
            rows.push(ArmSummary {
                house_id: house.to_string(),
                arm,
                repeats: rs.len(),
                macro_f1_mean,
                macro_f1_std,
                mivo_mean: (!mivos.is_empty()).then(|| mean_and_std(&mivos).0),
                per_class_mean: per_class.into_iter().map(|(k, v)| (k, mean_and_std(&v).0)).collect(),
                per_class_delta: BTreeMap::new(),
            });
        }
        if let Some(base) = rows.iter().find(|r| r.arm == Arm::Baseline).map(|r| r.per_class_mean.clone()) {
            for row in &mut rows {
                row.per_class_delta = row
                    .per_class_mean
                    .iter()
                    .filter_map(|(room, &a)| base.get(room).map(|&b| (room.clone(), a - b)))
                    .collect();
            }
        }
        out.extend(rows);
    }
    out
}
