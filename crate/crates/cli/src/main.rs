use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rssiforge_core::checkpoint::GanCheckpoint;
use rssiforge_core::congan::{self, GanConfig};
use rssiforge_core::evaluate::experiment::{
    augmented_training_set, class_mivo, repeat_seed, run_experiment, summarize, ExperimentOptions, Prerequisites,
};
use rssiforge_core::evaluate::report::{delta_table, macro_f1_table};
use rssiforge_core::evaluate::results::{read_results, room_columns, write_results};
use rssiforge_core::evaluate::{mivo, LocaliserGrid};
use rssiforge_core::pipeline::{dedup_examples, run_pipeline, write_report, PipelineConfig};
use rssiforge_core::preprocess::{preprocess_house, PreprocessOptions};
use rssiforge_core::simulate::{builtin_names, resolve_spec, synthesize_dataset};
use rssiforge_core::{io, transfer, Arm, HouseDataset, LabelledWindow, RssiWindow};

const SEED_ENV: &str = "RSSIFORGE_SEED";

#[derive(Parser)]
#[command(name = "rssiforge", version, about = "RSSI window augmentation, transfer and room localisation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize raw recordings for a house.
    Simulate(SimulateArgs),
    /// Clean, normalize and window a raw house directory.
    Preprocess(PreprocessArgs),
    /// Top up every room of a dataset with synthetic windows.
    Augment(AugmentArgs),
    /// Train or sample a conditional GAN.
    #[command(subcommand)]
    Congan(ConganCmd),
    /// Multi-house pretraining, layer surgery and fine-tuning.
    #[command(subcommand)]
    Transfer(TransferCmd),
    /// Localisation experiments and reports.
    #[command(subcommand)]
    Evaluate(EvaluateCmd),
    /// Run the staged pipeline described by a JSON config.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// `builtin:<name>` or a house spec JSON file.
    #[arg(long, visible_alias = "spec", required_unless_present = "list")]
    house: Option<String>,
    #[arg(long, visible_alias = "fingerprint-min", default_value_t = 30.0)]
    fingerprint_minutes: f64,
    #[arg(long, visible_alias = "free-living-min", default_value_t = 180.0)]
    free_living_minutes: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
    /// Print the builtin house names.
    #[arg(long)]
    list: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory with config.json, fingerprint.csv and free_living.csv.
    #[arg(long, visible_alias = "in")]
    raw: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON file with preprocessing options; the flags below override it.
    #[arg(long)]
    options: Option<PathBuf>,
    /// Longest gap bridged by forward fill.
    #[arg(long)]
    max_gap_s: Option<f64>,
    #[arg(long)]
    window_s: Option<f64>,
    /// Fraction of a window shared with the next one.
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

#[derive(Args)]
struct GanArgs {
    /// Network and training sizes.
    #[arg(long, value_enum, default_value = "paper")]
    preset: PresetArg,
    /// JSON file overriding GAN settings.
    #[arg(long, visible_alias = "config")]
    gan_config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

impl GanArgs {
    fn config(&self) -> Result<GanConfig> {
        let mut cfg = match self.preset {
            PresetArg::Paper => GanConfig::default(),
            PresetArg::Desk => GanConfig::desk(),
        };
        if let Some(path) = &self.gan_config {
            let mut base = serde_json::to_value(&cfg)?;
            let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
            let top: serde_json::Value = serde_json::from_str(&text)?;
            let (Some(b), Some(t)) = (base.as_object_mut(), top.as_object()) else {
                bail!("{} must hold a JSON object", path.display());
            };
            for (k, v) in t {
                b.insert(k.clone(), v.clone());
            }
            cfg = serde_json::from_value(base).with_context(|| path.display().to_string())?;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Oversample,
    Smote,
    Expert,
    Congan,
    #[value(alias = "t_congan")]
    TCongan,
    #[value(alias = "t_congan_sphere")]
    TConganSphere,
}

impl Method {
    fn arm(self) -> Arm {
        match self {
            Method::Oversample => Arm::Oversample,
            Method::Smote => Arm::Smote,
            Method::Expert => Arm::Expert,
            Method::Congan => Arm::Congan,
            Method::TCongan => Arm::TCongan,
            Method::TConganSphere => Arm::TConganSphere,
        }
    }
}

#[derive(Args)]
struct AugmentArgs {
    /// Dataset directory or dataset.json.
    #[arg(long, visible_alias = "in")]
    house: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, default_value_t = 1000)]
    target: usize,
    /// Trained generator for the GAN methods.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory; its fingerprint holds originals and synthetic windows.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum ConganCmd {
    /// Train on a dataset's fingerprint windows.
    Train {
        #[arg(long, visible_alias = "dataset")]
        house: PathBuf,
        #[command(flatten)]
        gan: GanArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Sample windows of one room.
    Generate {
        #[arg(long, visible_alias = "ckpt")]
        checkpoint: PathBuf,
        /// Room name or class index.
        #[arg(long, visible_alias = "label")]
        class: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        /// JSON file of windows.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TransferCmd {
    /// Train one GAN with houses as classes.
    Pretrain {
        /// Dataset directories, at least two; repeat the flag or separate with commas.
        #[arg(long = "house", visible_alias = "houses", required = true, num_args = 1.., value_delimiter = ',')]
        houses: Vec<PathBuf>,
        /// Also use free-living windows (source houses only).
        #[arg(long)]
        include_free_living: bool,
        #[command(flatten)]
        gan: GanArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace embeddings and IO layers for a target house.
    Adapt {
        #[arg(long, visible_alias = "ckpt")]
        checkpoint: PathBuf,
        /// Target dataset; supplies room names and AP count.
        #[arg(long, conflicts_with_all = ["classes", "aps"])]
        house: Option<PathBuf>,
        #[arg(long, requires = "aps")]
        classes: Option<usize>,
        #[arg(long, requires = "classes")]
        aps: Option<usize>,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Continue training an adapted model on the target's fingerprint windows.
    Finetune {
        #[arg(long, visible_alias = "ckpt")]
        checkpoint: PathBuf,
        #[arg(long, visible_alias = "dataset")]
        house: PathBuf,
        #[command(flatten)]
        gan: GanArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvaluateCmd {
    /// Repeat one arm and write a results CSV.
    Run {
        #[arg(long)]
        house: PathBuf,
        #[arg(long)]
        arm: Arm,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Pretrained same-protocol checkpoint, for t_congan.
        #[arg(long)]
        pretrained_same: Option<PathBuf>,
        /// Pretrained cross-protocol checkpoint, for t_congan_sphere.
        #[arg(long)]
        pretrained_cross: Option<PathBuf>,
        /// JSON experiment options (target_per_class, gan, localiser, ...).
        #[arg(long)]
        options: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "paper")]
        preset: PresetArg,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Summary table, per-room deltas and window plots from a results CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for summary files and plots (default: next to the CSV).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// MiVo between the fingerprint windows of a dataset and generated windows.
    Mivo {
        #[arg(long)]
        real: PathBuf,
        /// JSON file of windows, as written by `congan generate`.
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "rssiforge-run")]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_dataset(path: &Path) -> Result<HouseDataset> {
    io::read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<GanCheckpoint> {
    GanCheckpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.list {
        let names = builtin_names();
        if a.json {
            return print_json(&json!(names));
        }
        for n in names {
            println!("builtin:{n}");
        }
        return Ok(());
    }
    let (house, out) = (a.house.expect("clap"), a.out.expect("clap"));
    let spec = resolve_spec(&house)?;
    let raw = synthesize_dataset(&spec, a.fingerprint_minutes, a.free_living_minutes, a.seed)?;
    io::write_raw_house(&out, &raw)?;
    let summary = json!({
        "house_id": spec.house_id,
        "n_aps": spec.n_aps(),
        "fingerprint_samples": raw.fingerprint.len(),
        "free_living_samples": raw.free_living.len(),
        "out": out,
    });
    if a.json {
        print_json(&summary)
    } else {
        println!(
            "{}: {} fingerprint and {} free-living samples -> {}",
            spec.house_id,
            raw.fingerprint.len(),
            raw.free_living.len(),
            out.display()
        );
        Ok(())
    }
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let mut opts: PreprocessOptions = match &a.options {
        Some(p) => io::read_json(p)?,
        None => PreprocessOptions::default(),
    };
    if let Some(v) = a.max_gap_s {
        opts.max_gap_s = v;
    }
    if let Some(v) = a.window_s {
        opts.window.window_s = v;
    }
    if let Some(v) = a.overlap {
        opts.window.overlap = v;
    }
    let raw = io::read_raw_house(&a.raw)?;
    let ds = preprocess_house(&raw, &opts)?;
    io::write_dataset(&a.out, &ds)?;
    let counts = HouseDataset::class_counts(&ds.fingerprint, ds.config.n_classes());
    let per_room: BTreeMap<&str, usize> = ds.config.rooms.iter().map(|r| (r.name.as_str(), counts[r.id])).collect();
    if a.json {
        return print_json(&json!({
            "house_id": ds.config.house_id,
            "fingerprint_windows": ds.fingerprint.len(),
            "free_living_windows": ds.free_living.len(),
            "fingerprint_per_room": per_room,
        }));
    }
    println!(
        "{}: {} fingerprint, {} free-living windows",
        ds.config.house_id,
        ds.fingerprint.len(),
        ds.free_living.len()
    );
    for (room, n) in per_room {
        println!("  {room:16} {n}");
    }
    Ok(())
}

fn augment(a: AugmentArgs) -> Result<()> {
    let ds = load_dataset(&a.house)?;
    let arm = a.method.arm();
    let model = match (arm.is_gan(), &a.checkpoint) {
        (true, Some(p)) => Some(load_checkpoint(p)?),
        (true, None) => bail!("method {arm} needs --checkpoint"),
        (false, _) => None,
    };
    let opts = ExperimentOptions { target_per_class: a.target, ..ExperimentOptions::default() };
    let train = augmented_training_set(&ds, arm, model.as_ref(), &opts, a.seed)?;
    let synthetic: Vec<&LabelledWindow> = train.iter().filter(|w| w.provenance.is_synthetic()).collect();
    let m = class_mivo(&ds.fingerprint, &synthetic, ds.config.n_classes())?;
    let n_synth = synthetic.len();
    let out = HouseDataset { fingerprint: train, ..ds };
    io::write_dataset(&a.out, &out)?;
    if a.json {
        return print_json(&json!({ "method": arm.name(), "synthetic": n_synth, "mivo": m }));
    }
    println!("{arm}: {n_synth} synthetic windows, MiVo {}", m.map_or("-".into(), |v| format!("{v:.4}")));
    Ok(())
}

fn class_index(ck: &GanCheckpoint, class: &str) -> Result<usize> {
    if let Some(i) = ck.arch.class_names.iter().position(|n| n == class) {
        return Ok(i);
    }
    match class.parse::<usize>() {
        Ok(i) if i < ck.arch.n_classes => Ok(i),
        _ => bail!("unknown class `{class}`; known: {}", ck.arch.class_names.join(", ")),
    }
}

fn congan_cmd(c: ConganCmd) -> Result<()> {
    match c {
        ConganCmd::Train { house, gan, out, json } => {
            let ds = load_dataset(&house)?;
            let cfg = gan.config()?;
            let ck = congan::train(&ds.fingerprint, &ds.config, &cfg)?;
            ck.save(&out)?;
            let w = ck.train.wasserstein.last().copied();
            if json {
                return print_json(&json!({ "epochs": ck.train.epochs_completed, "wasserstein": w, "out": out }));
            }
            println!(
                "trained {} epochs, final wasserstein estimate {:?} -> {}",
                ck.train.epochs_completed,
                w,
                out.display()
            );
        }
        ConganCmd::Generate { checkpoint, class, n, seed, out } => {
            let ck = load_checkpoint(&checkpoint)?;
            let label = class_index(&ck, &class)?;
            let windows = congan::generate(&ck, label, n, seed)?;
            io::write_json(&out, &windows)?;
            println!("{n} windows of `{}` -> {}", ck.arch.class_names[label], out.display());
        }
    }
    Ok(())
}

fn transfer_cmd(c: TransferCmd) -> Result<()> {
    match c {
        TransferCmd::Pretrain { houses, include_free_living, gan, out } => {
            let cfg = gan.config()?;
            let mut corpus = BTreeMap::new();
            for p in &houses {
                let ds = load_dataset(p)?;
                let id = ds.config.house_id.clone();
                if corpus.insert(id.clone(), transfer::pretrain_corpus(&ds, include_free_living)).is_some() {
                    bail!("house `{id}` given twice");
                }
            }
            let ck = transfer::pretrain_multihouse(&corpus, &cfg)?;
            ck.save(&out)?;
            println!("pretrained on {} houses -> {}", corpus.len(), out.display());
        }
        TransferCmd::Adapt { checkpoint, house, classes, aps, seed, out, json } => {
            let pre = load_checkpoint(&checkpoint)?;
            let (names, n_aps) = match (house, classes, aps) {
                (Some(h), _, _) => {
                    let ds = load_dataset(&h)?;
                    (ds.config.rooms.iter().map(|r| r.name.clone()).collect(), ds.config.n_aps)
                }
                (None, Some(k), Some(a)) => (transfer::numbered_classes(k), a),
                _ => bail!("give --house or both --classes and --aps"),
            };
            let post = transfer::surgery(&pre, names, n_aps, seed)?;
            post.save(&out)?;
            let layers: Vec<String> =
                transfer::modified_layers(pre.arch.n_aps, n_aps).iter().map(|(n, l)| format!("{n}/{l}")).collect();
            if json {
                return print_json(&json!({
                    "n_classes": post.arch.n_classes,
                    "n_aps": post.arch.n_aps,
                    "reinitialized": layers,
                    "out": out,
                }));
            }
            println!("{} classes × {} APs; reinitialized {}", post.arch.n_classes, post.arch.n_aps, layers.join(", "));
        }
        TransferCmd::Finetune { checkpoint, house, gan, out } => {
            let ds = load_dataset(&house)?;
            let ck = transfer::finetune(&load_checkpoint(&checkpoint)?, &ds.fingerprint, &ds.config, &gan.config()?)?;
            ck.save(&out)?;
            println!("fine-tuned {} epochs -> {}", ck.train.epochs_completed, out.display());
        }
    }
    Ok(())
}

fn evaluate_cmd(c: EvaluateCmd) -> Result<()> {
    match c {
        EvaluateCmd::Run {
            house,
            arm,
            repeats,
            pretrained_same,
            pretrained_cross,
            options,
            preset,
            seed,
            out,
            json,
        } => {
            let ds = load_dataset(&house)?;
            let mut opts = ExperimentOptions {
                gan: match preset {
                    PresetArg::Paper => GanConfig::default(),
                    PresetArg::Desk => GanConfig::desk(),
                },
                localiser: LocaliserGrid::default(),
                ..ExperimentOptions::default()
            };
            if let Some(p) = options {
                let mut base = serde_json::to_value(&opts)?;
                let top: serde_json::Value = io::read_json(&p)?;
                if let (Some(b), Some(t)) = (base.as_object_mut(), top.as_object()) {
                    for (k, v) in t {
                        b.insert(k.clone(), v.clone());
                    }
                }
                opts = serde_json::from_value(base).with_context(|| p.display().to_string())?;
            }
            let pre = Prerequisites {
                same_protocol: pretrained_same.as_deref().map(load_checkpoint).transpose()?,
                cross_protocol: pretrained_cross.as_deref().map(load_checkpoint).transpose()?,
            };
            let seeds: Vec<u64> = (0..repeats).map(|i| repeat_seed(seed, &ds.config.house_id, i)).collect();
            let outputs = run_experiment(&ds, arm, &seeds, &pre, &opts)?;
            let mut results = Vec::new();
            let mut examples = Vec::new();
            for o in outputs {
                results.push(o.result);
                examples.extend(o.examples);
            }
            write_results(&out, &results, &room_columns([&ds.config]))?;
            io::write_json(&out.with_extension("examples.json"), &dedup_examples(examples))?;
            let summary = summarize(&results);
            if json {
                return print_json(&serde_json::to_value(&summary)?);
            }
            print!("{}", macro_f1_table(&summary));
        }
        EvaluateCmd::Report { input, out, json } => {
            let dir = out.unwrap_or_else(|| input.with_extension("report"));
            let examples_path = input.with_extension("examples.json");
            let examples = if examples_path.is_file() { io::read_json(&examples_path)? } else { Vec::new() };
            let written = write_report(&input, &examples, None, &dir, true)?;
            let summary = summarize(&read_results(&input)?);
            if json {
                return print_json(&json!({ "summary": summary, "files": written }));
            }
            print!("{}", macro_f1_table(&summary));
            let deltas = delta_table(&summary);
            if !deltas.is_empty() {
                println!();
                print!("{deltas}");
            }
            println!("\n{} files in {}", written.len(), dir.display());
        }
        EvaluateCmd::Mivo { real, generated, json } => {
            let ds = load_dataset(&real)?;
            let gen: Vec<RssiWindow> = io::read_json(&generated)?;
            let reals: Vec<RssiWindow> = ds.fingerprint.iter().map(|w| w.window.clone()).collect();
            let m = mivo(&reals, &gen)?;
            if json {
                return print_json(&serde_json::to_value(m)?);
            }
            println!(
                "mean incoming {:.6}\nvar outgoing  {:.6}\nMiVo          {:.6}",
                m.mean_incoming, m.var_outgoing, m.scalar
            );
        }
    }
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Ok(s) = std::env::var(SEED_ENV) {
        cfg.seed = s.parse().with_context(|| format!("{SEED_ENV}=`{s}` is not an unsigned integer"))?;
    }
    let outcomes = run_pipeline(&cfg, &a.out)?;
    if a.json {
        return print_json(&json!({ "seed": cfg.seed, "out": a.out, "stages": outcomes }));
    }
    for o in &outcomes {
        println!("{:10} {:?}", o.stage.name(), o.status);
    }
    println!("manifest: {}", a.out.join(rssiforge_core::pipeline::MANIFEST_FILE).display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let run = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Augment(a) => augment(a),
        Command::Congan(c) => congan_cmd(c),
        Command::Transfer(c) => transfer_cmd(c),
        Command::Evaluate(c) => evaluate_cmd(c),
        Command::Pipeline(a) => pipeline(a),
    };
    if let Err(e) = run {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
