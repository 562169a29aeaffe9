//! Transfer between houses: pretrain with houses as classes, swap the
//! label-embedding and IO layers for a target house, then fine-tune.

use std::collections::BTreeMap;

use crate::checkpoint::GanCheckpoint;
use crate::congan::{self, discriminator_shapes, generator_shapes, init_layer, GanConfig};
use crate::domain::{HouseConfig, HouseDataset, LabelledWindow};
use crate::error::{Error, Result};
use crate::seeds;

/// Windows of one house for pretraining. Target houses contribute only
/// fingerprint windows so their held-out data never reaches a model.
pub fn pretrain_corpus(ds: &HouseDataset, include_free_living: bool) -> Vec<LabelledWindow> {
    let mut out = ds.fingerprint.clone();
    if include_free_living {
        out.extend(ds.free_living.iter().cloned());
    }
    out
}

/// ConGAN conditioned on house identity; room labels are discarded.
pub fn pretrain_multihouse(houses: &BTreeMap<String, Vec<LabelledWindow>>, cfg: &GanConfig) -> Result<GanCheckpoint> {
    if houses.len() < 2 {
        return Err(Error::Invalid(format!("pretraining needs at least 2 houses, got {}", houses.len())));
    }
    let mut n_aps = None;
    let mut pooled = Vec::new();
    for (h, (id, windows)) in houses.iter().enumerate() {
        let Some(first) = windows.first() else {
            return Err(Error::EmptyClass(id.clone()));
        };
        let aps = first.window.n_aps();
        match n_aps {
            None => n_aps = Some(aps),
            Some(n) if n != aps => {
                return Err(Error::Shape(format!("house `{id}` has {aps} APs, the corpus has {n}")));
            }
            _ => {}
        }
        for w in windows {
            if w.window.n_aps() != aps {
                return Err(Error::Shape(format!("house `{id}` mixes AP counts")));
            }
            pooled.push(LabelledWindow { window: w.window.clone(), label: h, provenance: w.provenance.clone() });
        }
    }
    let n_aps = n_aps.expect("at least two houses");
    let config = HouseConfig {
        house_id: houses.keys().cloned().collect::<Vec<_>>().join("+"),
        n_aps,
        sample_rate_hz: crate::domain::CANONICAL_RATE_HZ,
        rooms: houses
            .keys()
            .enumerate()
            .map(|(id, name)| crate::domain::RoomLabel { id, name: name.clone() })
            .collect(),
    };
    let mut ck = congan::train(&pooled, &config, cfg)?;
    ck.train.lineage.insert(0, "pretrain".into());
    Ok(ck)
}

/// `(network, layer)` pairs that surgery replaces.
pub fn modified_layers(source_n_aps: usize, target_n_aps: usize) -> Vec<(&'static str, &'static str)> {
    let mut v = vec![("generator", "embed.weight"), ("discriminator", "embed.weight")];
    if source_n_aps != target_n_aps {
        v.extend([
            ("generator", "out.convt.weight"),
            ("generator", "out.convt.bias"),
            ("discriminator", "block0.conv.weight"),
        ]);
    }
    v
}

/// Fresh embeddings for the target classes and, when the AP count changes,
/// fresh generator output and critic input layers. Everything else is copied.
pub fn surgery(pre: &GanCheckpoint, class_names: Vec<String>, target_n_aps: usize, seed: u64) -> Result<GanCheckpoint> {
    if class_names.is_empty() {
        return Err(Error::Invalid("target needs at least one class".into()));
    }
    if target_n_aps == 0 {
        return Err(Error::Invalid("target needs at least one AP".into()));
    }
    congan::check_weights(pre)?;
    let mut arch = pre.arch.clone();
    arch.n_classes = class_names.len();
    arch.class_names = class_names;
    arch.n_aps = target_n_aps;
    let gen_shapes = generator_shapes(&arch);
    let disc_shapes = discriminator_shapes(&arch);
    let mut generator = pre.generator.clone();
    let mut discriminator = pre.discriminator.clone();
    let mut rng = seeds::rng(seeds::derive_named(seed, "surgery"));
    for (net, name) in modified_layers(pre.arch.n_aps, target_n_aps) {
        let (shapes, weights) = match net {
            "generator" => (&gen_shapes, &mut generator),
            _ => (&disc_shapes, &mut discriminator),
        };
        weights.insert(name.to_string(), init_layer(shapes, name, &mut rng));
    }
    let mut train = pre.train.clone();
    train.critic_loss.clear();
    train.wasserstein.clear();
    train.generator_loss.clear();
    train.epochs_completed = 0;
    train.seed = seed;
    train.lineage.push(format!("surgery:{}x{}", arch.n_classes, arch.n_aps));
    let ck = GanCheckpoint { arch, train, generator, discriminator };
    congan::check_weights(&ck)?;
    Ok(ck)
}

/// Continue training a surgered model on the target house's rooms.
pub fn finetune(
    surgered: &GanCheckpoint,
    windows: &[LabelledWindow],
    config: &HouseConfig,
    cfg: &GanConfig,
) -> Result<GanCheckpoint> {
    if surgered.arch.n_classes != config.n_classes() {
        return Err(Error::Shape(format!(
            "model has {} classes, house `{}` has {}",
            surgered.arch.n_classes,
            config.house_id,
            config.n_classes()
        )));
    }
    if surgered.arch.n_aps != config.n_aps {
        return Err(Error::Shape(format!("model expects {} APs, house has {}", surgered.arch.n_aps, config.n_aps)));
    }
    if windows.iter().any(|w| w.provenance.is_free_living()) {
        return Err(Error::Invalid("free-living windows may not be used for training".into()));
    }
    if cfg.epochs == 0 {
        return Ok(surgered.clone());
    }
    crate::augment::group_by_class(windows, config, 1)?;
    let mut ck = congan::train_from(surgered.clone(), windows, cfg, |_| {})?;
    if let Some(last) = ck.train.lineage.last_mut() {
        *last = last.replacen("train", "finetune", 1);
    }
    Ok(ck)
}

/// Generic class names for a target known only by its class count.
pub fn numbered_classes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class{i}")).collect()
}
