//! Config-driven end-to-end runs with a checksum manifest.
//!
//! Each stage writes into a staging directory that is moved into place only
//! when the stage succeeds, so a failing stage leaves earlier artifacts as
//! they were. A stage is skipped when its key (config section, seed and
//! input checksums) matches the previous manifest and its outputs are intact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{ExpertOptions, SMOTE_K};
use crate::checkpoint::GanCheckpoint;
use crate::congan::{self, GanConfig};
use crate::domain::{Arm, HouseDataset};
use crate::error::{Error, IoContext, Result};
use crate::evaluate::experiment::{
    augmented_training_set, class_mivo, example_windows, repeat_seed, run_repeat, summarize, ExampleWindow,
    ExperimentOptions, Prerequisites,
};
use crate::evaluate::localiser::LocaliserGrid;
use crate::evaluate::report::{delta_table, macro_f1_table, panels_svg};
use crate::evaluate::results::{read_results, room_columns, write_results};
use crate::io;
use crate::preprocess::{preprocess_house, PreprocessOptions};
use crate::seeds;
use crate::simulate::{resolve_spec, synthesize_dataset, BUILTIN_SOURCES, BUILTIN_TARGETS};
use crate::transfer;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const EXAMPLES_FILE: &str = "results.examples.json";
const STAGING_DIR: &str = ".staging";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Preprocess,
    Pretrain,
    Adapt,
    Finetune,
    Augment,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Simulate,
        Stage::Preprocess,
        Stage::Pretrain,
        Stage::Adapt,
        Stage::Finetune,
        Stage::Augment,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Preprocess => "preprocess",
            Stage::Pretrain => "pretrain",
            Stage::Adapt => "adapt",
            Stage::Finetune => "finetune",
            Stage::Augment => "augment",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Model sizes as published.
    Paper,
    /// Narrow networks for single-core machines.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Pretrain on the target houses' fingerprint recordings.
    Same,
    /// Pretrain on the source houses, which have another AP layout.
    Cross,
}

impl Protocol {
    fn name(self) -> &'static str {
        match self {
            Protocol::Same => "same",
            Protocol::Cross => "cross",
        }
    }

    fn arm(self) -> Arm {
        match self {
            Protocol::Same => Arm::TCongan,
            Protocol::Cross => Arm::TConganSphere,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// `builtin:<name>` or a path to a house spec JSON.
    pub targets: Vec<String>,
    pub sources: Vec<String>,
    pub fingerprint_minutes: f64,
    pub free_living_minutes: f64,
    /// Both recordings of every source house.
    pub source_minutes: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            targets: BUILTIN_TARGETS.iter().map(|n| format!("builtin:{n}")).collect(),
            sources: BUILTIN_SOURCES.iter().map(|n| format!("builtin:{n}")).collect(),
            fingerprint_minutes: 30.0,
            free_living_minutes: 180.0,
            source_minutes: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub protocols: Vec<Protocol>,
    /// Defaults to `congan.epochs`.
    pub pretrain_epochs: Option<usize>,
    /// Defaults to `congan.epochs`.
    pub finetune_epochs: Option<usize>,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self { protocols: vec![Protocol::Same, Protocol::Cross], pretrain_epochs: None, finetune_epochs: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub target_per_class: usize,
    pub smote_k: usize,
    pub expert: ExpertOptions,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self { target_per_class: 1000, smote_k: SMOTE_K, expert: ExpertOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub arms: Vec<Arm>,
    pub repeats: usize,
    pub localiser: LocaliserGrid,
    pub mivo: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { arms: Arm::ALL.to_vec(), repeats: 10, localiser: LocaliserGrid::default(), mivo: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub plots: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { plots: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub preset: Preset,
    pub stages: Vec<Stage>,
    pub simulate: SimulateSection,
    pub preprocess: PreprocessOptions,
    pub congan: GanConfig,
    pub transfer: TransferSection,
    pub augment: AugmentSection,
    pub evaluate: EvaluateSection,
    pub report: ReportSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            preset: Preset::Paper,
            stages: Stage::ALL.to_vec(),
            simulate: SimulateSection::default(),
            preprocess: PreprocessOptions::default(),
            congan: GanConfig::default(),
            transfer: TransferSection::default(),
            augment: AugmentSection::default(),
            evaluate: EvaluateSection::default(),
            report: ReportSection::default(),
        }
    }
}

fn overlay(base: &mut serde_json::Value, top: serde_json::Value) {
    match (base, top) {
        (serde_json::Value::Object(b), serde_json::Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn schema_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    Error::Config { path, msg: e.into_inner().to_string() }
}

impl PipelineConfig {
    /// Parse a config document. With `"preset": "desk"` the `congan` section
    /// starts from the desk-sized network instead of the published one.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config { path: ".".into(), msg: e.to_string() })?;
        if !value.is_object() {
            return Err(Error::Config { path: ".".into(), msg: "config must be a JSON object".into() });
        }
        let preset = match value.get("preset") {
            None => Preset::Paper,
            Some(p) => serde_path_to_error::deserialize(p.clone())
                .map_err(|e| Error::Config { path: "preset".into(), msg: schema_error(e).to_string() })?,
        };
        let mut full = serde_json::to_value(Self::defaults_for(preset))?;
        overlay(&mut full, value);
        let cfg: Self = serde_path_to_error::deserialize(full).map_err(schema_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Self::from_json(&text)
    }

    pub fn defaults_for(preset: Preset) -> Self {
        let congan = match preset {
            Preset::Paper => GanConfig::default(),
            Preset::Desk => GanConfig::desk(),
        };
        Self { preset, congan, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |path: &str, msg: String| Err(Error::Config { path: path.into(), msg });
        self.congan.validate().map_err(|e| match e {
            Error::Config { path, msg } => Error::Config { path: format!("congan.{path}"), msg },
            e => e,
        })?;
        self.evaluate
            .localiser
            .validate()
            .map_err(|e| Error::Config { path: "evaluate.localiser".into(), msg: e.to_string() })?;
        let s = &self.simulate;
        if s.targets.is_empty() {
            return cfg_err("simulate.targets", "at least one target house is required".into());
        }
        for (name, v) in [
            ("fingerprint_minutes", s.fingerprint_minutes),
            ("free_living_minutes", s.free_living_minutes),
            ("source_minutes", s.source_minutes),
        ] {
            if !(v > 0.0) {
                return cfg_err(&format!("simulate.{name}"), format!("must be positive, got {v}"));
            }
        }
        if self.transfer.protocols.contains(&Protocol::Same) && s.targets.len() < 2 {
            return cfg_err("transfer.protocols", "same-protocol pretraining needs at least 2 target houses".into());
        }
        if self.transfer.protocols.contains(&Protocol::Cross) && s.sources.len() < 2 {
            return cfg_err("transfer.protocols", "cross-protocol pretraining needs at least 2 source houses".into());
        }
        for p in [Protocol::Same, Protocol::Cross] {
            if self.evaluate.arms.contains(&p.arm()) && !self.transfer.protocols.contains(&p) {
                return cfg_err("evaluate.arms", format!("arm `{}` needs transfer protocol `{}`", p.arm(), p.name()));
            }
        }
        if self.evaluate.repeats == 0 {
            return cfg_err("evaluate.repeats", "must be positive".into());
        }
        let mut seen = Vec::new();
        for st in &self.stages {
            if seen.contains(st) {
                return cfg_err("stages", format!("stage `{}` listed twice", st.name()));
            }
            seen.push(*st);
        }
        Ok(())
    }

    fn gan_for(&self, epochs: Option<usize>) -> GanConfig {
        GanConfig { epochs: epochs.unwrap_or(self.congan.epochs), ..self.congan.clone() }
    }

    fn experiment_options(&self) -> ExperimentOptions {
        ExperimentOptions {
            target_per_class: self.augment.target_per_class,
            smote_k: self.augment.smote_k,
            expert: self.augment.expert,
            gan: self.gan_for(self.transfer.finetune_epochs),
            localiser: self.evaluate.localiser.clone(),
            mivo: self.evaluate.mivo,
        }
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).at(path)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
    /// Not declared this run; artifacts from an earlier run left in place.
    Kept,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub key: String,
    pub seed: u64,
    /// Relative path to sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn artifacts(&self) -> Vec<&str> {
        self.stages.iter().flat_map(|s| s.outputs.keys().map(String::as_str)).collect()
    }
}

/// Houses as named in the config, in config order.
struct Houses {
    targets: Vec<String>,
    sources: Vec<String>,
}

fn house_ids(cfg: &PipelineConfig) -> Result<Houses> {
    let ids = |refs: &[String], section: &str| -> Result<Vec<String>> {
        let mut out: Vec<String> = Vec::new();
        for (i, r) in refs.iter().enumerate() {
            let spec = resolve_spec(r)
                .map_err(|e| Error::Config { path: format!("simulate.{section}[{i}]"), msg: e.to_string() })?;
            if out.contains(&spec.house_id) {
                return Err(Error::Config {
                    path: format!("simulate.{section}[{i}]"),
                    msg: format!("house `{}` listed twice", spec.house_id),
                });
            }
            out.push(spec.house_id);
        }
        Ok(out)
    };
    let targets = ids(&cfg.simulate.targets, "targets")?;
    let sources = ids(&cfg.simulate.sources, "sources")?;
    if let Some(h) = targets.iter().find(|h| sources.contains(h)) {
        return Err(Error::Config { path: "simulate.sources".into(), msg: format!("house `{h}` is also a target") });
    }
    Ok(Houses { targets, sources })
}

fn raw_dir(house: &str) -> String {
    format!("raw/{house}")
}

fn dataset_path(house: &str) -> String {
    format!("data/{house}/{}", io::DATASET_FILE)
}

fn pretrain_path(p: Protocol) -> String {
    format!("models/pretrain_{}.ckpt", p.name())
}

fn adapt_path(house: &str, p: Protocol) -> String {
    format!("models/{house}/adapt_{}.ckpt", p.name())
}

fn model_path(house: &str, arm: Arm) -> String {
    format!("models/{house}/{}.ckpt", arm.name())
}

const MIVO_FILE: &str = "augment/mivo.csv";
const AUGMENT_EXAMPLES_FILE: &str = "augment/examples.json";

/// Where one stage reads from and writes to.
struct StageCtx<'a> {
    out: &'a Path,
    staging: PathBuf,
    inputs: BTreeMap<String, String>,
}

impl StageCtx<'_> {
    /// Final location of an earlier artifact, recorded as an input.
    fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if !p.is_file() {
            return Err(Error::MissingPrerequisite(format!("{rel} (run the stage that produces it first)")));
        }
        self.inputs.insert(rel.to_string(), sha256_file(&p)?);
        Ok(p)
    }

    /// Staging location of an artifact this stage produces.
    fn output(&self, rel: &str) -> Result<PathBuf> {
        let p = self.staging.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).at(parent)?;
        }
        Ok(p)
    }
}

fn files_under(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if !root.exists() {
        return Ok(out);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).at(&dir)? {
            let path = entry.at(&dir)?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn rel_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).expect("path under root");
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn stage_seed(cfg: &PipelineConfig, stage: Stage) -> u64 {
    seeds::derive_named(cfg.seed, stage.name())
}

/// Config that a stage's outputs depend on; part of its skip key.
fn stage_section(cfg: &PipelineConfig, stage: Stage) -> Result<serde_json::Value> {
    use serde_json::json;
    Ok(match stage {
        Stage::Simulate => json!({ "simulate": cfg.simulate }),
        Stage::Preprocess => json!({ "preprocess": cfg.preprocess, "simulate": cfg.simulate }),
        Stage::Pretrain => json!({ "congan": cfg.gan_for(cfg.transfer.pretrain_epochs), "transfer": cfg.transfer }),
        Stage::Adapt => json!({ "transfer": cfg.transfer }),
        Stage::Finetune => json!({ "congan": cfg.gan_for(cfg.transfer.finetune_epochs), "transfer": cfg.transfer }),
        Stage::Augment => json!({ "augment": cfg.augment, "arms": cfg.evaluate.arms }),
        Stage::Evaluate => json!({ "experiment": cfg.experiment_options(), "evaluate": cfg.evaluate }),
        Stage::Report => json!({ "report": cfg.report }),
    })
}

/// Artifacts a stage will read, known before it runs. Optional inputs count
/// only when present.
fn declared_inputs(cfg: &PipelineConfig, stage: Stage, houses: &Houses, out: &Path) -> Vec<String> {
    let raw = |h: &String| {
        [io::CONFIG_FILE, io::FINGERPRINT_FILE, io::FREE_LIVING_FILE].map(|f| format!("{}/{f}", raw_dir(h)))
    };
    let protocols = &cfg.transfer.protocols;
    let mut v = Vec::new();
    match stage {
        Stage::Simulate => {}
        Stage::Preprocess => {
            for h in houses.targets.iter().chain(&houses.sources) {
                v.extend(raw(h));
            }
        }
        Stage::Pretrain => {
            if protocols.contains(&Protocol::Same) {
                v.extend(houses.targets.iter().map(|h| dataset_path(h)));
            }
            if protocols.contains(&Protocol::Cross) {
                v.extend(houses.sources.iter().map(|h| dataset_path(h)));
            }
        }
        Stage::Adapt => {
            v.extend(protocols.iter().map(|&p| pretrain_path(p)));
            v.extend(houses.targets.iter().map(|h| dataset_path(h)));
        }
        Stage::Finetune => {
            for h in &houses.targets {
                v.push(dataset_path(h));
                v.extend(protocols.iter().map(|&p| adapt_path(h, p)));
            }
        }
        Stage::Augment => {
            for h in &houses.targets {
                v.push(dataset_path(h));
                for &arm in cfg.evaluate.arms.iter().filter(|a| a.is_gan()) {
                    v.push(model_path(h, arm));
                }
            }
        }
        Stage::Evaluate => {
            v.extend(houses.targets.iter().map(|h| dataset_path(h)));
            for &p in protocols {
                if cfg.evaluate.arms.contains(&p.arm()) {
                    v.push(pretrain_path(p));
                }
            }
        }
        Stage::Report => {
            v.push(RESULTS_FILE.to_string());
            v.extend([EXAMPLES_FILE, MIVO_FILE].iter().filter(|f| out.join(f).is_file()).map(|f| f.to_string()));
        }
    }
    v
}

fn stage_key(cfg: &PipelineConfig, stage: Stage, inputs: &BTreeMap<String, String>) -> Result<String> {
    let doc = serde_json::json!({
        "stage": stage.name(),
        "seed": stage_seed(cfg, stage),
        "config": stage_section(cfg, stage)?,
        "inputs": inputs,
    });
    Ok(sha256_hex(serde_json::to_string(&doc)?.as_bytes()))
}

fn current_inputs(out: &Path, rels: &[String]) -> Result<Option<BTreeMap<String, String>>> {
    let mut m = BTreeMap::new();
    for r in rels {
        let p = out.join(r);
        if !p.is_file() {
            return Ok(None);
        }
        m.insert(r.clone(), sha256_file(&p)?);
    }
    Ok(Some(m))
}

fn outputs_intact(out: &Path, rec: &StageRecord) -> Result<bool> {
    for (rel, sha) in &rec.outputs {
        let p = out.join(rel);
        if !p.is_file() || sha256_file(&p)? != *sha {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn read_manifest(out: &Path) -> Result<Option<Manifest>> {
    let p = out.join(MANIFEST_FILE);
    if !p.exists() {
        return Ok(None);
    }
    match io::read_json(&p) {
        Ok(m) => Ok(Some(m)),
        Err(e) => {
            log::warn!("ignoring unreadable manifest: {e}");
            Ok(None)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
}

/// Run the declared stages in canonical order under `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<Vec<StageOutcome>> {
    cfg.validate()?;
    fs::create_dir_all(out).at(out)?;
    let houses = house_ids(cfg)?;
    let previous = read_manifest(out)?;
    let mut manifest = Manifest { config_hash: cfg.hash()?, seed: cfg.seed, config: cfg.clone(), stages: Vec::new() };
    let staging_root = out.join(STAGING_DIR);
    let mut outcomes = Vec::new();
    for stage in Stage::ALL {
        let old = previous.as_ref().and_then(|m| m.stages.iter().find(|r| r.stage == stage));
        if !cfg.stages.contains(&stage) {
            if let Some(rec) = old.filter(|r| outputs_intact(out, r).unwrap_or(false)) {
                manifest.stages.push(StageRecord { status: StageStatus::Kept, ..rec.clone() });
            }
            continue;
        }
        let declared = declared_inputs(cfg, stage, &houses, out);
        let before = current_inputs(out, &declared)?;
        if let (Some(rec), Some(inputs)) = (old, &before) {
            if rec.key == stage_key(cfg, stage, inputs)? && outputs_intact(out, rec)? {
                log::info!("stage {}: up to date, skipped", stage.name());
                manifest.stages.push(StageRecord { status: StageStatus::Skipped, ..rec.clone() });
                outcomes.push(StageOutcome { stage, status: StageStatus::Skipped });
                io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
                continue;
            }
        }
        log::info!("stage {}: running", stage.name());
        let staging = staging_root.join(stage.name());
        if staging.exists() {
            fs::remove_dir_all(&staging).at(&staging)?;
        }
        fs::create_dir_all(&staging).at(&staging)?;
        let mut ctx = StageCtx { out, staging: staging.clone(), inputs: BTreeMap::new() };
        let run = run_stage(cfg, stage, &houses, &mut ctx);
        if let Err(e) = run {
            let _ = fs::remove_dir_all(&staging);
            let _ = fs::remove_dir(&staging_root);
            return Err(Error::Stage { stage: stage.name().into(), source: Box::new(e) });
        }
        let mut outputs = BTreeMap::new();
        for file in files_under(&staging)? {
            let rel = rel_name(&staging, &file);
            let dest = out.join(&rel);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).at(parent)?;
            }
            outputs.insert(rel, sha256_file(&file)?);
            fs::rename(&file, &dest).at(&dest)?;
        }
        fs::remove_dir_all(&staging).at(&staging)?;
        let key = stage_key(cfg, stage, before.as_ref().unwrap_or(&ctx.inputs))?;
        manifest.stages.push(StageRecord {
            stage,
            status: StageStatus::Ran,
            key,
            seed: stage_seed(cfg, stage),
            inputs: ctx.inputs,
            outputs,
        });
        outcomes.push(StageOutcome { stage, status: StageStatus::Ran });
        io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    }
    if staging_root.exists() {
        fs::remove_dir_all(&staging_root).at(&staging_root)?;
    }
    io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(outcomes)
}

fn run_stage(cfg: &PipelineConfig, stage: Stage, houses: &Houses, ctx: &mut StageCtx) -> Result<()> {
    let seed = stage_seed(cfg, stage);
    match stage {
        Stage::Simulate => {
            let s = &cfg.simulate;
            for (refs, fp, fl) in [
                (&s.targets, s.fingerprint_minutes, s.free_living_minutes),
                (&s.sources, s.source_minutes, s.source_minutes),
            ] {
                for r in refs {
                    let spec = resolve_spec(r)?;
                    let raw = synthesize_dataset(&spec, fp, fl, seeds::derive_named(seed, &spec.house_id))?;
                    io::write_raw_house(&ctx.output(&raw_dir(&spec.house_id))?, &raw)?;
                }
            }
        }
        Stage::Preprocess => {
            for h in houses.targets.iter().chain(&houses.sources) {
                for f in [io::CONFIG_FILE, io::FINGERPRINT_FILE, io::FREE_LIVING_FILE] {
                    ctx.input(&format!("{}/{f}", raw_dir(h)))?;
                }
                let raw = io::read_raw_house(&ctx.out.join(raw_dir(h)))?;
                let ds = preprocess_house(&raw, &cfg.preprocess)?;
                let target = ctx.output(&dataset_path(h))?;
                io::write_dataset(target.parent().expect("dataset dir"), &ds)?;
            }
        }
        Stage::Pretrain => {
            let gan = GanConfig { seed, ..cfg.gan_for(cfg.transfer.pretrain_epochs) };
            for &p in &cfg.transfer.protocols {
                let (ids, with_free_living) = match p {
                    Protocol::Same => (&houses.targets, false),
                    Protocol::Cross => (&houses.sources, true),
                };
                let mut corpus = BTreeMap::new();
                for h in ids {
                    let ds = load_dataset(ctx, h)?;
                    corpus.insert(h.clone(), transfer::pretrain_corpus(&ds, with_free_living));
                }
                let ck = transfer::pretrain_multihouse(
                    &corpus,
                    &GanConfig { seed: seeds::derive_named(seed, p.name()), ..gan.clone() },
                )?;
                ck.save(&ctx.output(&pretrain_path(p))?)?;
            }
        }
        Stage::Adapt => {
            for &p in &cfg.transfer.protocols {
                let pre = load_checkpoint(ctx, &pretrain_path(p))?;
                for h in &houses.targets {
                    let ds = load_dataset(ctx, h)?;
                    let names = ds.config.rooms.iter().map(|r| r.name.clone()).collect();
                    let s = seeds::derive_named(seeds::derive_named(seed, h), p.name());
                    transfer::surgery(&pre, names, ds.config.n_aps, s)?.save(&ctx.output(&adapt_path(h, p))?)?;
                }
            }
        }
        Stage::Finetune => {
            let gan = cfg.gan_for(cfg.transfer.finetune_epochs);
            for h in &houses.targets {
                let ds = load_dataset(ctx, h)?;
                let house_seed = seeds::derive_named(seed, h);
                if cfg.evaluate.arms.contains(&Arm::Congan) {
                    let ck =
                        congan::train(&ds.fingerprint, &ds.config, &GanConfig { seed: house_seed, ..gan.clone() })?;
                    ck.save(&ctx.output(&model_path(h, Arm::Congan))?)?;
                }
                for &p in &cfg.transfer.protocols {
                    let adapted = load_checkpoint(ctx, &adapt_path(h, p))?;
                    let s = seeds::derive_named(house_seed, p.name());
                    let ck = transfer::finetune(
                        &adapted,
                        &ds.fingerprint,
                        &ds.config,
                        &GanConfig { seed: s, ..gan.clone() },
                    )?;
                    ck.save(&ctx.output(&model_path(h, p.arm()))?)?;
                }
            }
        }
        Stage::Augment => augment_stage(cfg, houses, ctx, seed)?,
        Stage::Evaluate => evaluate_stage(cfg, houses, ctx)?,
        Stage::Report => report_stage(cfg, ctx)?,
    }
    Ok(())
}

fn load_dataset(ctx: &mut StageCtx, house: &str) -> Result<HouseDataset> {
    let p = ctx.input(&dataset_path(house))?;
    io::read_dataset(&p)
}

fn load_checkpoint(ctx: &mut StageCtx, rel: &str) -> Result<GanCheckpoint> {
    let p = ctx.input(rel)?;
    GanCheckpoint::load(&p)
}

/// MiVo of every augmentation arm against the fingerprint windows, using the
/// models from the fine-tune stage.
fn augment_stage(cfg: &PipelineConfig, houses: &Houses, ctx: &mut StageCtx, seed: u64) -> Result<()> {
    let opts = cfg.experiment_options();
    let mut rows = vec!["house_id,method,mivo_scalar\n".to_string()];
    let mut examples = Vec::new();
    for h in &houses.targets {
        let ds = load_dataset(ctx, h)?;
        for &arm in cfg.evaluate.arms.iter().filter(|a| a.is_augmentation()) {
            let model = if arm.is_gan() { Some(load_checkpoint(ctx, &model_path(h, arm))?) } else { None };
            let train = augmented_training_set(&ds, arm, model.as_ref(), &opts, seeds::derive_named(seed, h))?;
            let synthetic: Vec<_> = train.iter().filter(|w| w.provenance.is_synthetic()).collect();
            let m = class_mivo(&ds.fingerprint, &synthetic, ds.config.n_classes())?;
            rows.push(format!("{h},{arm},{}\n", m.map(|v| format!("{v:.6}")).unwrap_or_default()));
            examples.extend(example_windows(&ds, arm.name(), &synthetic));
        }
    }
    fs::write(ctx.output(MIVO_FILE)?, rows.concat()).at(MIVO_FILE)?;
    io::write_json(&ctx.output(AUGMENT_EXAMPLES_FILE)?, &dedup_examples(examples))?;
    Ok(())
}

/// First example per house, method and room.
pub fn dedup_examples(examples: Vec<ExampleWindow>) -> Vec<ExampleWindow> {
    let mut out: Vec<ExampleWindow> = Vec::new();
    for e in examples {
        if !out.iter().any(|o| o.house_id == e.house_id && o.method == e.method && o.room == e.room) {
            out.push(e);
        }
    }
    out
}

fn evaluate_stage(cfg: &PipelineConfig, houses: &Houses, ctx: &mut StageCtx) -> Result<()> {
    let opts = cfg.experiment_options();
    let mut pre = Prerequisites::default();
    for &p in &cfg.transfer.protocols {
        if !cfg.evaluate.arms.contains(&p.arm()) {
            continue;
        }
        let ck = load_checkpoint(ctx, &pretrain_path(p))?;
        match p {
            Protocol::Same => pre.same_protocol = Some(ck),
            Protocol::Cross => pre.cross_protocol = Some(ck),
        }
    }
    let mut results = Vec::new();
    let mut examples = Vec::new();
    let mut configs = Vec::new();
    for h in &houses.targets {
        let ds = load_dataset(ctx, h)?;
        for &arm in &cfg.evaluate.arms {
            pre.check(arm)?;
            for i in 0..cfg.evaluate.repeats {
                let out = run_repeat(&ds, arm, i, repeat_seed(cfg.seed, h, i), &pre, &opts)?;
                if i == 0 {
                    examples.extend(out.examples);
                }
                results.push(out.result);
            }
        }
        configs.push(ds.config);
    }
    write_results(&ctx.output(RESULTS_FILE)?, &results, &room_columns(&configs))?;
    io::write_json(&ctx.output(EXAMPLES_FILE)?, &dedup_examples(examples))?;
    Ok(())
}

/// Text and JSON summaries plus one SVG per house and room.
pub fn write_report(
    results_path: &Path,
    examples: &[ExampleWindow],
    mivo_csv: Option<&str>,
    dir: &Path,
    plots: bool,
) -> Result<Vec<PathBuf>> {
    let results = read_results(results_path)?;
    let summaries = summarize(&results);
    fs::create_dir_all(dir).at(dir)?;
    let mut written = Vec::new();
    let mut text = String::from("Macro F1 (%), mean±std over repeats\n\n");
    text.push_str(&macro_f1_table(&summaries));
    text.push_str("\nPer-room accuracy change vs baseline (percentage points)\n\n");
    text.push_str(&delta_table(&summaries));
    if let Some(m) = mivo_csv {
        text.push_str("\nMiVo against the fingerprint windows (lower is closer)\n\n");
        text.push_str(m);
    }
    let p = dir.join("summary.txt");
    fs::write(&p, &text).at(&p)?;
    written.push(p);
    let p = dir.join("summary.json");
    io::write_json(&p, &summaries)?;
    written.push(p);
    if plots {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for e in examples {
            if !keys.contains(&(e.house_id.as_str(), e.room.as_str())) {
                keys.push((&e.house_id, &e.room));
            }
        }
        for (house, room) in keys {
            let panels: Vec<(&str, &crate::domain::RssiWindow)> = examples
                .iter()
                .filter(|e| e.house_id == house && e.room == room)
                .map(|e| (e.method.as_str(), &e.window))
                .collect();
            let name: String = format!("{house}_{room}")
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
                .collect();
            let p = dir.join("plots").join(format!("{name}.svg"));
            fs::create_dir_all(p.parent().expect("plots dir")).at(&p)?;
            fs::write(&p, panels_svg(&panels, &format!("{house}: {room}"))).at(&p)?;
            written.push(p);
        }
    }
    Ok(written)
}

fn report_stage(cfg: &PipelineConfig, ctx: &mut StageCtx) -> Result<()> {
    let results = ctx.input(RESULTS_FILE)?;
    let examples: Vec<ExampleWindow> = match ctx.input(EXAMPLES_FILE) {
        Ok(p) => io::read_json(&p)?,
        Err(_) => Vec::new(),
    };
    let mivo = match ctx.input(MIVO_FILE) {
        Ok(p) => Some(fs::read_to_string(&p).at(&p)?),
        Err(_) => None,
    };
    let dir = ctx.output("report/summary.txt")?.parent().expect("report dir").to_path_buf();
    write_report(&results, &examples, mivo.as_deref(), &dir, cfg.report.plots)?;
    Ok(())
}

/// Pretrained models for the transfer arms, read from a pipeline output
/// directory when present.
pub fn prerequisites_from(out: &Path) -> Result<Prerequisites> {
    let load = |p: Protocol| -> Result<Option<GanCheckpoint>> {
        let path = out.join(pretrain_path(p));
        if path.is_file() {
            GanCheckpoint::load(&path).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(Prerequisites { same_protocol: load(Protocol::Same)?, cross_protocol: load(Protocol::Cross)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_constants() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg.congan, GanConfig::default());
        assert_eq!(cfg.evaluate.repeats, 10);
        assert_eq!(cfg.evaluate.arms.len(), 8);
        assert_eq!(cfg.augment.target_per_class, 1000);
        assert_eq!(cfg.stages, Stage::ALL.to_vec());
    }

    #[test]
    fn desk_preset_changes_only_the_network() {
        let cfg = PipelineConfig::from_json(r#"{"preset": "desk", "congan": {"epochs": 5}}"#).unwrap();
        assert_eq!(cfg.congan, GanConfig { epochs: 5, ..GanConfig::desk() });
        assert_eq!(cfg.evaluate.repeats, 10);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = PipelineConfig::from_json(r#"{"congan": {"batch_size": "big"}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "congan.batch_size"), "{err}");
        let err = PipelineConfig::from_json(r#"{"evaluate": {"localiser": {"tres": []}}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path.starts_with("evaluate.localiser")), "{err}");
        let err = PipelineConfig::from_json(r#"{"stages": ["simulate", "dance"]}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "stages[1]"), "{err}");
        let err = PipelineConfig::from_json(r#"{"congan": {"kernel_size": 4}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "congan.kernel_size"), "{err}");
        let err = PipelineConfig::from_json(r#"{"transfer": {"protocols": ["cross"]}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "evaluate.arms"), "{err}");
    }

    #[test]
    fn empty_stage_list_writes_only_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::from_json(r#"{"stages": []}"#).unwrap();
        assert!(run_pipeline(&cfg, dir.path()).unwrap().is_empty());
        let files = files_under(dir.path()).unwrap();
        assert_eq!(files, vec![dir.path().join(MANIFEST_FILE)]);
        let m = read_manifest(dir.path()).unwrap().unwrap();
        assert!(m.stages.is_empty());
        assert_eq!(m.config_hash, cfg.hash().unwrap());
    }

    #[test]
    fn overlay_merges_nested_objects() {
        let mut a = serde_json::json!({"x": {"y": 1, "z": 2}, "w": 3});
        overlay(&mut a, serde_json::json!({"x": {"y": 5}, "v": 1}));
        assert_eq!(a, serde_json::json!({"x": {"y": 5, "z": 2}, "w": 3, "v": 1}));
    }
}
