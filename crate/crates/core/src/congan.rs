//! Conditional WGAN-GP over RSSI windows.
//!
//! Generator: latent `[latent_dim × W]` stacked with a label embedding
//! `[embed_size × W]`, transposed-conv blocks with batch norm and ReLU, then a
//! transposed conv to `n_aps` channels and a sigmoid. Critic: window stacked
//! with its own label embedding, conv blocks with instance norm and leaky
//! ReLU, then a conv whose kernel spans the whole width. Every convolution is
//! stride 1 with padding `kernel / 2`, so widths stay at `W` throughout.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rssiforge_nn::{Adam, Graph, Real, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::augment::group_by_class;
use crate::checkpoint::{ArchMeta, GanCheckpoint, TrainMeta, Weights};
use crate::domain::{HouseConfig, LabelledWindow, RssiWindow, WINDOW_WIDTH};
use crate::error::{Error, Result};
use crate::seeds;

const NORM_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const LEAKY_SLOPE: f64 = 0.2;
const GP_EPS: f64 = 1e-12;
const DIVERGENCE_LIMIT: f64 = 1e6;
const GENERATE_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub embed_size: usize,
    pub input_width: usize,
    pub kernel_size: usize,
    pub gen_channels: Vec<usize>,
    pub disc_channels: Vec<usize>,
    pub gp_lambda: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: [f64; 2],
    pub critic_iters: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 100,
            embed_size: 100,
            input_width: WINDOW_WIDTH,
            kernel_size: 5,
            gen_channels: vec![64, 256, 512, 128],
            disc_channels: vec![1024, 512, 64, 64],
            gp_lambda: 10.0,
            batch_size: 48,
            learning_rate: 0.002077,
            adam_betas: [0.0, 0.9],
            critic_iters: 10,
            epochs: 300,
            seed: 0,
        }
    }
}

impl GanConfig {
    /// Same topology with narrow layers, for single-core runs and tests.
    pub fn desk() -> Self {
        Self {
            latent_dim: 16,
            embed_size: 8,
            gen_channels: vec![16, 32, 64, 32],
            disc_channels: vec![64, 32, 16, 16],
            epochs: 60,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_dim", self.latent_dim),
            ("embed_size", self.embed_size),
            ("input_width", self.input_width),
            ("kernel_size", self.kernel_size),
            ("batch_size", self.batch_size),
            ("critic_iters", self.critic_iters),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config { path: name.into(), msg: "must be positive".into() });
            }
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config { path: "kernel_size".into(), msg: "must be odd to keep widths fixed".into() });
        }
        for (name, ch) in [("gen_channels", &self.gen_channels), ("disc_channels", &self.disc_channels)] {
            if ch.is_empty() || ch.contains(&0) {
                return Err(Error::Config { path: name.into(), msg: "needs at least one positive entry".into() });
            }
        }
        if !(self.learning_rate > 0.0 && self.gp_lambda >= 0.0) {
            return Err(Error::Config { path: "learning_rate".into(), msg: "must be positive".into() });
        }
        Ok(())
    }

    pub fn arch(&self, n_aps: usize, class_names: Vec<String>) -> ArchMeta {
        ArchMeta {
            n_classes: class_names.len(),
            n_aps,
            latent_dim: self.latent_dim,
            embed_size: self.embed_size,
            input_width: self.input_width,
            kernel_size: self.kernel_size,
            gen_channels: self.gen_channels.clone(),
            disc_channels: self.disc_channels.clone(),
            class_names,
        }
    }
}

// ---------------------------------------------------------------------------
// Layer layout

pub fn generator_shapes(a: &ArchMeta) -> BTreeMap<String, Vec<usize>> {
    let k = a.kernel_size;
    let mut s = BTreeMap::new();
    s.insert("embed.weight".into(), vec![a.n_classes, a.embed_size * a.input_width]);
    let mut c_in = a.latent_dim + a.embed_size;
    for (i, &c) in a.gen_channels.iter().enumerate() {
        s.insert(format!("block{i}.convt.weight"), vec![c_in, c, k]);
        for p in ["weight", "bias", "running_mean", "running_var"] {
            s.insert(format!("block{i}.bn.{p}"), vec![c]);
        }
        c_in = c;
    }
    s.insert("out.convt.weight".into(), vec![c_in, a.n_aps, k]);
    s.insert("out.convt.bias".into(), vec![a.n_aps]);
    s
}

pub fn discriminator_shapes(a: &ArchMeta) -> BTreeMap<String, Vec<usize>> {
    let k = a.kernel_size;
    let mut s = BTreeMap::new();
    s.insert("embed.weight".into(), vec![a.n_classes, a.embed_size * a.input_width]);
    let mut c_in = a.n_aps + a.embed_size;
    for (i, &c) in a.disc_channels.iter().enumerate() {
        s.insert(format!("block{i}.conv.weight"), vec![c, c_in, k]);
        s.insert(format!("block{i}.norm.weight"), vec![c]);
        s.insert(format!("block{i}.norm.bias"), vec![c]);
        c_in = c;
    }
    s.insert("out.conv.weight".into(), vec![1, c_in, a.input_width]);
    s.insert("out.conv.bias".into(), vec![1]);
    s
}

fn is_buffer(name: &str) -> bool {
    name.ends_with("running_mean") || name.ends_with("running_var")
}

fn uniform_tensor(shape: &[usize], fan_in: usize, rng: &mut seeds::Rng) -> Tensor<f32> {
    let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
    let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::from_fn(shape, |_| u.sample(rng))
}

/// Fresh value for one layer of a network: normal embeddings, fan-in
/// uniform convolutions and biases, identity normalization. Conv weights
/// `[O, C, K]` and transposed weights `[I, O, K]` both take `dim1 · K` as
/// fan-in.
pub fn init_layer(shapes: &BTreeMap<String, Vec<usize>>, name: &str, rng: &mut seeds::Rng) -> Tensor<f32> {
    let shape = &shapes[name];
    if name.ends_with("embed.weight") {
        Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
    } else if name.ends_with("running_var") || name.ends_with("bn.weight") || name.ends_with("norm.weight") {
        Tensor::full(shape, 1.0)
    } else if name.ends_with("running_mean") || name.ends_with("bn.bias") || name.ends_with("norm.bias") {
        Tensor::zeros(shape)
    } else if name.ends_with(".weight") {
        uniform_tensor(shape, shape[1] * shape[2], rng)
    } else {
        let w = &shapes[&name.replace(".bias", ".weight")];
        uniform_tensor(shape, w[1] * w[2], rng)
    }
}

fn init_net(shapes: &BTreeMap<String, Vec<usize>>, rng: &mut seeds::Rng) -> Weights {
    shapes.keys().map(|name| (name.clone(), init_layer(shapes, name, rng))).collect()
}

pub fn init_weights(arch: &ArchMeta, seed: u64) -> (Weights, Weights) {
    let mut rng = seeds::rng(seed);
    let g = init_net(&generator_shapes(arch), &mut rng);
    let d = init_net(&discriminator_shapes(arch), &mut rng);
    (g, d)
}

/// Untrained checkpoint for an architecture.
pub fn init_checkpoint(arch: ArchMeta, seed: u64) -> GanCheckpoint {
    let (generator, discriminator) = init_weights(&arch, seed);
    GanCheckpoint { arch, train: TrainMeta { seed, ..TrainMeta::default() }, generator, discriminator }
}

/// Every tensor present with exactly the shape the architecture implies.
pub fn check_weights(ck: &GanCheckpoint) -> Result<()> {
    let a = &ck.arch;
    if a.class_names.len() != a.n_classes {
        return Err(Error::Checkpoint(format!("{} class names for {} classes", a.class_names.len(), a.n_classes)));
    }
    for (net, weights, shapes) in [
        ("generator", &ck.generator, generator_shapes(a)),
        ("discriminator", &ck.discriminator, discriminator_shapes(a)),
    ] {
        if weights.len() != shapes.len() || weights.keys().ne(shapes.keys()) {
            let have: Vec<_> = weights.keys().cloned().collect();
            let want: Vec<_> = shapes.keys().cloned().collect();
            return Err(Error::Checkpoint(format!("{net} layers {have:?} do not match architecture {want:?}")));
        }
        for (name, shape) in &shapes {
            let got = weights[name].shape();
            if got != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{net}/{name} has shape {got:?}, architecture implies {shape:?}"
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Forward passes

pub type Bound<'g, T> = BTreeMap<String, Var<'g, T>>;

/// Put weights on a tape; running statistics are always constants.
pub fn bind<'g, T: Real>(g: &'g Graph<T>, weights: &Weights, trainable: bool) -> Bound<'g, T> {
    weights.iter().map(|(k, v)| (k.clone(), g.leaf(v.cast(), trainable && !is_buffer(k)))).collect()
}

/// Row `label` of an embedding table as `[embed_size × input_width]`.
pub fn embed_label(table: &Tensor<f32>, label: usize, embed_size: usize, input_width: usize) -> Result<Tensor<f32>> {
    let (rows, d) = (table.shape()[0], table.shape()[1]);
    if label >= rows {
        return Err(Error::LabelOutOfRange { label, n_classes: rows });
    }
    if d != embed_size * input_width {
        return Err(Error::Shape(format!("embedding rows have {d} entries, expected {embed_size}×{input_width}")));
    }
    Tensor::new(&[embed_size, input_width], table.data()[label * d..(label + 1) * d].to_vec())
        .map_err(|e| Error::Shape(e.to_string()))
}

fn embed<'g, T: Real>(table: Var<'g, T>, labels: &Rc<[usize]>, a: &ArchMeta) -> Result<Var<'g, T>> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= a.n_classes) {
        return Err(Error::LabelOutOfRange { label: bad, n_classes: a.n_classes });
    }
    Ok(table.gather_rows(labels).reshape(&[labels.len(), a.embed_size, a.input_width]))
}

fn channel_view<'g, T: Real>(v: Var<'g, T>, shape: &[usize]) -> Var<'g, T> {
    v.reshape(&[1, shape[1], 1]).expand(shape)
}

fn expect_shape(what: &str, got: &[usize], want: &[usize]) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: expected {want:?}, got {got:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and report them.
    Train,
    /// Normalize with the stored running statistics.
    Eval,
}

/// Per-channel batch mean and biased variance from each batch-norm layer.
pub type BatchStats = Vec<(Vec<f64>, Vec<f64>)>;

pub fn generator_forward<'g, T: Real>(
    a: &ArchMeta,
    p: &Bound<'g, T>,
    z: Var<'g, T>,
    labels: &Rc<[usize]>,
    mode: BnMode,
) -> Result<(Var<'g, T>, BatchStats)> {
    let b = labels.len();
    expect_shape("generator latent", &z.shape(), &[b, a.latent_dim, a.input_width])?;
    let pad = a.kernel_size / 2;
    let mut h = Var::concat(&[z, embed(p["embed.weight"], labels, a)?]);
    let mut stats = Vec::new();
    for i in 0..a.gen_channels.len() {
        h = h.conv_transpose1d(p[&format!("block{i}.convt.weight")], pad);
        let shape = h.shape();
        let red = [1, shape[1], 1];
        let n = T::of((shape[0] * shape[2]) as f64);
        let (centered, inv_std) = match mode {
            BnMode::Train => {
                let mean = h.sum_to(&red).scale(T::one() / n);
                let c = h - mean.expand(&shape);
                let var = c.square().sum_to(&red).scale(T::one() / n);
                let to_f64 = |v: Var<'g, T>| v.value().data().iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
                stats.push((to_f64(mean), to_f64(var)));
                (c, var.add_scalar(T::of(NORM_EPS)).sqrt().recip())
            }
            BnMode::Eval => {
                let rm = p[&format!("block{i}.bn.running_mean")].reshape(&red);
                let rv = p[&format!("block{i}.bn.running_var")].reshape(&red);
                (h - rm.expand(&shape), rv.add_scalar(T::of(NORM_EPS)).sqrt().recip())
            }
        };
        let gamma = channel_view(p[&format!("block{i}.bn.weight")], &shape);
        let beta = channel_view(p[&format!("block{i}.bn.bias")], &shape);
        h = (centered * inv_std.expand(&shape) * gamma + beta).relu();
    }
    let out = h.conv_transpose1d(p["out.convt.weight"], pad);
    let shape = out.shape();
    let out = (out + channel_view(p["out.convt.bias"], &shape)).sigmoid();
    Ok((out, stats))
}

/// Critic scores, one per window: `[B]`.
pub fn critic_forward<'g, T: Real>(
    a: &ArchMeta,
    p: &Bound<'g, T>,
    x: Var<'g, T>,
    labels: &Rc<[usize]>,
) -> Result<Var<'g, T>> {
    let b = labels.len();
    expect_shape("critic input", &x.shape(), &[b, a.n_aps, a.input_width])?;
    let pad = a.kernel_size / 2;
    let mut h = Var::concat(&[x, embed(p["embed.weight"], labels, a)?]);
    for i in 0..a.disc_channels.len() {
        h = h.conv1d(p[&format!("block{i}.conv.weight")], pad);
        let shape = h.shape();
        let red = [shape[0], shape[1], 1];
        let n = T::one() / T::of(shape[2] as f64);
        let c = h - h.sum_to(&red).scale(n).expand(&shape);
        let inv_std = c.square().sum_to(&red).scale(n).add_scalar(T::of(NORM_EPS)).sqrt().recip();
        let gamma = channel_view(p[&format!("block{i}.norm.weight")], &shape);
        let beta = channel_view(p[&format!("block{i}.norm.bias")], &shape);
        h = (c * inv_std.expand(&shape) * gamma + beta).leaky_relu(T::of(LEAKY_SLOPE));
    }
    let out = h.conv1d(p["out.conv.weight"], 0);
    let bias = p["out.conv.bias"].reshape(&[1, 1, 1]).expand(&[b, 1, 1]);
    Ok((out + bias).reshape(&[b]))
}

/// `E[(‖∇ D(x̂)‖ − 1)²]` at `x̂ = ε·real + (1−ε)·fake`, one `ε` per sample.
///
/// The returned node stays on the tape (the input gradient is taken with
/// `create_graph`), so it can be differentiated with respect to the
/// critic's weights.
pub fn gradient_penalty<'g, T: Real>(
    g: &'g Graph<T>,
    critic: impl FnOnce(Var<'g, T>) -> Result<Var<'g, T>>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    eps: &[T],
) -> Result<Var<'g, T>> {
    let shape = real.shape().to_vec();
    expect_shape("penalty fake batch", fake.shape(), &shape)?;
    let b = shape[0];
    if eps.len() != b {
        return Err(Error::Shape(format!("{} mixing weights for batch of {b}", eps.len())));
    }
    let per = real.numel() / b.max(1);
    let mut mixed = real.clone();
    for (i, v) in mixed.data_mut().iter_mut().enumerate() {
        let e = eps[i / per];
        *v = e * *v + (T::one() - e) * fake.data()[i];
    }
    let x = g.leaf(mixed, true);
    let scores = critic(x)?;
    let grad = g.grad(scores.sum(), &[x], true)[0];
    let gv = grad.value();
    if !gv.is_finite() {
        let bad = gv.data().iter().filter(|v| !v.is_finite()).count();
        return Err(Error::NonFinite(format!("{bad} of {} input-gradient entries over batch of {b}", gv.numel())));
    }
    let mut red = vec![1; shape.len()];
    red[0] = b;
    let norms = grad.square().sum_to(&red).add_scalar(T::of(GP_EPS)).sqrt();
    Ok(norms.add_scalar(-T::one()).square().mean())
}

// ---------------------------------------------------------------------------
// Training

fn normal_tensor(shape: &[usize], rng: &mut seeds::Rng) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

fn grads_map<'g>(
    g: &'g Graph<f32>,
    loss: Var<'g, f32>,
    params: &Bound<'g, f32>,
) -> Result<BTreeMap<String, Tensor<f32>>> {
    let names: Vec<&String> = params.keys().filter(|k| !is_buffer(k)).collect();
    let vars: Vec<Var<'g, f32>> = names.iter().map(|k| params[*k]).collect();
    let grads = g.grad(loss, &vars, false);
    let mut out = BTreeMap::new();
    for (name, v) in names.into_iter().zip(grads) {
        let t = (*v.value()).clone();
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("gradient of `{name}`")));
        }
        out.insert(name.clone(), t);
    }
    Ok(out)
}

fn update_running_stats(weights: &mut Weights, stats: &BatchStats, batch_elems: usize) {
    let unbias = if batch_elems > 1 { batch_elems as f64 / (batch_elems - 1) as f64 } else { 1.0 };
    for (i, (mean, var)) in stats.iter().enumerate() {
        let rm = weights.get_mut(&format!("block{i}.bn.running_mean")).expect("bn buffer");
        for (r, &m) in rm.data_mut().iter_mut().zip(mean) {
            *r = ((1.0 - BN_MOMENTUM) * *r as f64 + BN_MOMENTUM * m) as f32;
        }
        let rv = weights.get_mut(&format!("block{i}.bn.running_var")).expect("bn buffer");
        for (r, &v) in rv.data_mut().iter_mut().zip(var) {
            *r = ((1.0 - BN_MOMENTUM) * *r as f64 + BN_MOMENTUM * v * unbias) as f32;
        }
    }
}

/// Windows packed for batching.
struct Corpus {
    values: Vec<f32>,
    labels: Vec<usize>,
    cell: usize,
}

impl Corpus {
    fn new(windows: &[LabelledWindow], a: &ArchMeta) -> Result<Self> {
        let cell = a.n_aps * a.input_width;
        let mut values = Vec::with_capacity(windows.len() * cell);
        let mut labels = Vec::with_capacity(windows.len());
        for (i, w) in windows.iter().enumerate() {
            if w.window.shape() != (a.n_aps, a.input_width) {
                return Err(Error::Shape(format!(
                    "window {i} is {:?}, model expects ({}, {})",
                    w.window.shape(),
                    a.n_aps,
                    a.input_width
                )));
            }
            if w.label >= a.n_classes {
                return Err(Error::LabelOutOfRange { label: w.label, n_classes: a.n_classes });
            }
            values.extend_from_slice(w.window.as_slice());
            labels.push(w.label);
        }
        Ok(Self { values, labels, cell })
    }

    fn batch(&self, idx: &[usize], a: &ArchMeta) -> (Tensor<f32>, Rc<[usize]>) {
        let mut data = Vec::with_capacity(idx.len() * self.cell);
        for &i in idx {
            data.extend_from_slice(&self.values[i * self.cell..(i + 1) * self.cell]);
        }
        let x = Tensor::new(&[idx.len(), a.n_aps, a.input_width], data).expect("batch shape");
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Per-epoch summary handed to an optional observer.
#[derive(Clone, Debug)]
pub struct EpochReport {
    pub epoch: usize,
    pub critic_loss: f64,
    pub wasserstein: f64,
    pub generator_loss: Option<f64>,
}

/// Train a fresh model on labelled windows.
pub fn train(windows: &[LabelledWindow], config: &HouseConfig, cfg: &GanConfig) -> Result<GanCheckpoint> {
    cfg.validate()?;
    group_by_class(windows, config, 1)?;
    let names = config.rooms.iter().map(|r| r.name.clone()).collect();
    let init = init_checkpoint(cfg.arch(config.n_aps, names), seeds::derive_named(cfg.seed, "init"));
    let mut ck = train_from(init, windows, cfg, |_| {})?;
    ck.train.lineage.insert(0, "init".into());
    Ok(ck)
}

/// Continue training an existing checkpoint with every weight trainable.
/// Only the optimization settings of `cfg` are used; the architecture comes
/// from the checkpoint.
pub fn train_from(
    mut ck: GanCheckpoint,
    windows: &[LabelledWindow],
    cfg: &GanConfig,
    mut observe: impl FnMut(&EpochReport),
) -> Result<GanCheckpoint> {
    cfg.validate()?;
    check_weights(&ck)?;
    let a = ck.arch.clone();
    let corpus = Corpus::new(windows, &a)?;
    let n = corpus.labels.len();
    if cfg.batch_size > n {
        return Err(Error::Invalid(format!("batch size {} exceeds the {n} training windows", cfg.batch_size)));
    }
    let mut rng = seeds::rng(seeds::derive_named(cfg.seed, "train"));
    let lr = cfg.learning_rate as f32;
    let [b1, b2] = cfg.adam_betas.map(|b| b as f32);
    let mut opt_g = Adam::new(lr, b1, b2);
    let mut opt_d = Adam::new(lr, b1, b2);
    let batches = n / cfg.batch_size;
    let mut order: Vec<usize> = (0..n).collect();
    let mut critic_steps = 0usize;
    let z_shape = [cfg.batch_size, a.latent_dim, a.input_width];
    let mix = Uniform::new(0.0f32, 1.0).expect("unit interval");
    ck.train.seed = cfg.seed;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut c_sum, mut w_sum, mut g_sum, mut g_count) = (0.0, 0.0, 0.0, 0);
        for bi in 0..batches {
            let (real, labels) = corpus.batch(&order[bi * cfg.batch_size..(bi + 1) * cfg.batch_size], &a);
            let z = normal_tensor(&z_shape, &mut rng);
            let eps: Vec<f32> = (0..cfg.batch_size).map(|_| mix.sample(&mut rng)).collect();

            // critic update
            let (loss, wdist, grads, stats) = {
                let g = Graph::<f32>::new();
                let gp_ = bind(&g, &ck.generator, false);
                let dp = bind(&g, &ck.discriminator, true);
                g.set_grad_enabled(false);
                let (fake, stats) = generator_forward(&a, &gp_, g.constant(z), &labels, BnMode::Train)?;
                g.set_grad_enabled(true);
                let fake = (*fake.value()).clone();
                let d_real = critic_forward(&a, &dp, g.constant(real.clone()), &labels)?.mean();
                let d_fake = critic_forward(&a, &dp, g.constant(fake.clone()), &labels)?.mean();
                let gp = gradient_penalty(&g, |x| critic_forward(&a, &dp, x, &labels), &real, &fake, &eps)?;
                let loss = d_fake - d_real + gp.scale(cfg.gp_lambda as f32);
                let lv = loss.value().item() as f64;
                let wv = (d_real.value().item() - d_fake.value().item()) as f64;
                if !lv.is_finite() || lv.abs() > DIVERGENCE_LIMIT {
                    return Err(Error::Diverged { epoch, batch: bi, loss: lv });
                }
                (lv, wv, grads_map(&g, loss, &dp)?, stats)
            };
            opt_d.step(&mut ck.discriminator, &grads);
            update_running_stats(&mut ck.generator, &stats, cfg.batch_size * a.input_width);
            ck.train.critic_loss.push(loss);
            ck.train.wasserstein.push(wdist);
            c_sum += loss;
            w_sum += wdist;
            critic_steps += 1;

            if critic_steps.is_multiple_of(cfg.critic_iters) {
                let labels: Rc<[usize]> = (0..cfg.batch_size).map(|_| rng.random_range(0..a.n_classes)).collect();
                let z = normal_tensor(&z_shape, &mut rng);
                let (gl, grads, stats) = {
                    let g = Graph::<f32>::new();
                    let gp_ = bind(&g, &ck.generator, true);
                    let dp = bind(&g, &ck.discriminator, false);
                    let (fake, stats) = generator_forward(&a, &gp_, g.constant(z), &labels, BnMode::Train)?;
                    let loss = critic_forward(&a, &dp, fake, &labels)?.mean().scale(-1.0);
                    let lv = loss.value().item() as f64;
                    if !lv.is_finite() {
                        return Err(Error::NonFinite(format!("generator loss at epoch {epoch}, batch {bi}")));
                    }
                    (lv, grads_map(&g, loss, &gp_)?, stats)
                };
                opt_g.step(&mut ck.generator, &grads);
                update_running_stats(&mut ck.generator, &stats, cfg.batch_size * a.input_width);
                ck.train.generator_loss.push(gl);
                g_sum += gl;
                g_count += 1;
            }
        }
        ck.train.epochs_completed += 1;
        let report = EpochReport {
            epoch,
            critic_loss: c_sum / batches as f64,
            wasserstein: w_sum / batches as f64,
            generator_loss: (g_count > 0).then(|| g_sum / g_count as f64),
        };
        log::debug!(
            "epoch {epoch}: critic {:.4}, W {:.4}, gen {:?}",
            report.critic_loss,
            report.wasserstein,
            report.generator_loss
        );
        observe(&report);
    }
    ck.train.lineage.push(format!("train:{}", cfg.epochs));
    Ok(ck)
}

// ---------------------------------------------------------------------------
// Sampling

/// `n` windows of class `label`, generator in inference mode.
pub fn generate(ck: &GanCheckpoint, label: usize, n: usize, seed: u64) -> Result<Vec<RssiWindow>> {
    let a = &ck.arch;
    if label >= a.n_classes {
        return Err(Error::LabelOutOfRange { label, n_classes: a.n_classes });
    }
    check_weights(ck)?;
    let mut rng = seeds::rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let b = (n - out.len()).min(GENERATE_CHUNK);
        let g = Graph::<f32>::new();
        g.set_grad_enabled(false);
        let p = bind(&g, &ck.generator, false);
        let z = g.constant(normal_tensor(&[b, a.latent_dim, a.input_width], &mut rng));
        let labels: Rc<[usize]> = vec![label; b].into();
        let (x, _) = generator_forward(a, &p, z, &labels, BnMode::Eval)?;
        let x = x.value();
        if !x.is_finite() {
            return Err(Error::NonFinite("generator produced non-finite values".into()));
        }
        let cell = a.n_aps * a.input_width;
        for i in 0..b {
            out.push(RssiWindow::new(a.n_aps, a.input_width, x.data()[i * cell..(i + 1) * cell].to_vec())?);
        }
    }
    Ok(out)
}

/// Critic scores for a set of windows under one label.
pub fn score(ck: &GanCheckpoint, windows: &[RssiWindow], label: usize) -> Result<Vec<f64>> {
    let a = &ck.arch;
    let g = Graph::<f32>::new();
    g.set_grad_enabled(false);
    let p = bind(&g, &ck.discriminator, false);
    let data: Vec<f32> = windows.iter().flat_map(|w| w.as_slice().iter().copied()).collect();
    let x = Tensor::new(&[windows.len(), a.n_aps, a.input_width], data).map_err(|e| Error::Shape(e.to_string()))?;
    let labels: Rc<[usize]> = vec![label; windows.len()].into();
    let s = critic_forward(a, &p, g.constant(x), &labels)?;
    let v = s.value();
    Ok(v.data().iter().map(|&x| x as f64).collect())
}

/// Originals plus generated windows topping each class up to `target`.
pub fn gan_oversample(
    ck: &GanCheckpoint,
    windows: &[LabelledWindow],
    config: &HouseConfig,
    target: usize,
    seed: u64,
    method: &str,
) -> Result<Vec<LabelledWindow>> {
    if ck.arch.n_classes != config.n_classes() || ck.arch.n_aps != config.n_aps {
        return Err(Error::Shape(format!(
            "model is for {} classes × {} APs, house has {} × {}",
            ck.arch.n_classes,
            ck.arch.n_aps,
            config.n_classes(),
            config.n_aps
        )));
    }
    let groups = group_by_class(windows, config, 0)?;
    let mut out = windows.to_vec();
    for (c, members) in groups.iter().enumerate() {
        let need = target.saturating_sub(members.len());
        for w in generate(ck, c, need, seeds::derive(seed, c as u64))? {
            out.push(LabelledWindow::synthetic(w, c, method));
        }
    }
    Ok(out)
}
