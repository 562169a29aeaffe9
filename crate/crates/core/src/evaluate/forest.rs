//! Random forest on quantile-binned features.
//!
//! Trees are CART with Gini impurity, bootstrap resampling, `√d` candidate
//! features per split and optional per-class sample weights. Features are
//! binned once (at most 64 bins each), so split search is a histogram scan.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seeds;

const MAX_BINS: usize = 64;
/// Below this many samples a node sorts instead of histogramming.
const SMALL_NODE: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

/// Per-feature cut points; a value's bin is the number of cuts below it.
#[derive(Clone, Debug, PartialEq)]
pub struct Binner {
    cuts: Vec<Vec<f32>>,
}

/// Column-major binned feature matrix.
#[derive(Clone, Debug)]
pub struct Binned {
    n: usize,
    cols: Vec<u8>,
}

impl Binned {
    fn col(&self, f: usize) -> &[u8] {
        &self.cols[f * self.n..(f + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl Binner {
    /// `rows` are samples of equal length.
    pub fn fit(rows: &[&[f32]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let cuts = (0..d)
            .map(|f| {
                let mut v: Vec<f32> = rows.iter().map(|r| r[f]).collect();
                v.sort_by(f32::total_cmp);
                v.dedup();
                if v.len() <= MAX_BINS {
                    v.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect()
                } else {
                    let mut c: Vec<f32> = (1..MAX_BINS).map(|j| v[j * v.len() / MAX_BINS]).collect();
                    c.dedup();
                    c
                }
            })
            .collect();
        Self { cuts }
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn transform(&self, rows: &[&[f32]]) -> Binned {
        let n = rows.len();
        let mut cols = vec![0u8; n * self.cuts.len()];
        for (f, cuts) in self.cuts.iter().enumerate() {
            let col = &mut cols[f * n..(f + 1) * n];
            for (i, r) in rows.iter().enumerate() {
                col[i] = cuts.partition_point(|&c| c < r[f]) as u8;
            }
        }
        Binned { n, cols }
    }
}

#[derive(Clone, Copy, Debug)]
enum Node {
    Split { feature: u32, bin: u8, left: u32, right: u32 },
    Leaf { probs: u32 },
}

#[derive(Clone, Debug)]
pub struct Tree {
    nodes: Vec<Node>,
    probs: Vec<f32>,
    k: usize,
}

struct Builder<'a> {
    x: &'a Binned,
    y: &'a [usize],
    w: &'a [f64],
    k: usize,
    d: usize,
    mtry: usize,
    params: ForestParams,
    hist: Vec<f64>,
    counts: Vec<usize>,
    features: Vec<usize>,
}

struct Best {
    score: f64,
    feature: usize,
    bin: u8,
}

impl Builder<'_> {
    fn class_weights(&self, idx: &[usize]) -> Vec<f64> {
        let mut cw = vec![0.0; self.k];
        for &i in idx {
            cw[self.y[i]] += self.w[i];
        }
        cw
    }

    /// `Σ L_c²/W_L + Σ R_c²/W_R`; larger is purer.
    fn score(left: &[f64], total: &[f64]) -> f64 {
        let (mut wl, mut wr, mut sl, mut sr) = (0.0, 0.0, 0.0, 0.0);
        for (&l, &t) in left.iter().zip(total) {
            let r = t - l;
            wl += l;
            wr += r;
            sl += l * l;
            sr += r * r;
        }
        if wl <= 0.0 || wr <= 0.0 {
            return f64::NEG_INFINITY;
        }
        sl / wl + sr / wr
    }

    fn scan_hist(&mut self, idx: &[usize], f: usize, total: &[f64], best: &mut Option<Best>) -> bool {
        let col = self.x.col(f);
        let k = self.k;
        let (mut lo, mut hi) = (u8::MAX, 0u8);
        for &i in idx {
            let b = col[i];
            lo = lo.min(b);
            hi = hi.max(b);
        }
        if lo == hi {
            return false;
        }
        let (lo, hi) = (lo as usize, hi as usize);
        self.hist[lo * k..(hi + 1) * k].fill(0.0);
        self.counts[lo..=hi].fill(0);
        for &i in idx {
            let b = col[i] as usize;
            self.hist[b * k + self.y[i]] += self.w[i];
            self.counts[b] += 1;
        }
        let mut left = vec![0.0; k];
        let mut n_left = 0;
        let min_leaf = self.params.min_samples_leaf;
        for b in lo..hi {
            for (l, h) in left.iter_mut().zip(&self.hist[b * k..(b + 1) * k]) {
                *l += h;
            }
            n_left += self.counts[b];
            if n_left < min_leaf || idx.len() - n_left < min_leaf || self.counts[b] == 0 {
                continue;
            }
            let s = Self::score(&left, total);
            if best.as_ref().is_none_or(|bb| s > bb.score) {
                *best = Some(Best { score: s, feature: f, bin: b as u8 });
            }
        }
        true
    }

    fn scan_sorted(&self, idx: &[usize], f: usize, total: &[f64], best: &mut Option<Best>) -> bool {
        let col = self.x.col(f);
        let mut order: Vec<(u8, usize)> = idx.iter().map(|&i| (col[i], i)).collect();
        order.sort_unstable();
        if order[0].0 == order[order.len() - 1].0 {
            return false;
        }
        let mut left = vec![0.0; self.k];
        let min_leaf = self.params.min_samples_leaf;
        for j in 0..order.len() - 1 {
            let (b, i) = order[j];
            left[self.y[i]] += self.w[i];
            if order[j + 1].0 == b {
                continue;
            }
            let n_left = j + 1;
            if n_left < min_leaf || order.len() - n_left < min_leaf {
                continue;
            }
            let s = Self::score(&left, total);
            if best.as_ref().is_none_or(|bb| s > bb.score) {
                *best = Some(Best { score: s, feature: f, bin: b });
            }
        }
        true
    }

    fn leaf(tree: &mut Tree, cw: &[f64]) -> u32 {
        let total: f64 = cw.iter().sum();
        let at = tree.probs.len() as u32;
        tree.probs.extend(cw.iter().map(|&c| if total > 0.0 { (c / total) as f32 } else { 0.0 }));
        tree.nodes.push(Node::Leaf { probs: at });
        (tree.nodes.len() - 1) as u32
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, tree: &mut Tree, rng: &mut seeds::Rng) -> u32 {
        let cw = self.class_weights(idx);
        let pure = cw.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_done || idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return Self::leaf(tree, &cw);
        }
        let wt: f64 = cw.iter().sum();
        let parent = cw.iter().map(|c| c * c).sum::<f64>() / wt;
        // draw features until mtry non-constant ones have been tried
        let mut best = None;
        let mut tried = 0;
        for j in 0..self.d {
            if tried >= self.mtry {
                break;
            }
            let r = rng.random_range(j..self.d);
            self.features.swap(j, r);
            let f = self.features[j];
            let varied = if idx.len() < SMALL_NODE {
                self.scan_sorted(idx, f, &cw, &mut best)
            } else {
                self.scan_hist(idx, f, &cw, &mut best)
            };
            tried += varied as usize;
        }
        let Some(best) = best.filter(|b| b.score > parent + 1e-12 * parent.abs().max(1.0)) else {
            return Self::leaf(tree, &cw);
        };
        let col = self.x.col(best.feature);
        let mut split = 0;
        for j in 0..idx.len() {
            if col[idx[j]] <= best.bin {
                idx.swap(j, split);
                split += 1;
            }
        }
        let me = tree.nodes.len();
        tree.nodes.push(Node::Leaf { probs: 0 });
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1, tree, rng);
        let right = self.build(r, depth + 1, tree, rng);
        tree.nodes[me] = Node::Split { feature: best.feature as u32, bin: best.bin, left, right };
        me as u32
    }
}

impl Tree {
    fn leaf_probs(&self, x: &Binned, i: usize) -> &[f32] {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { probs } => return &self.probs[probs as usize..probs as usize + self.k],
                Node::Split { feature, bin, left, right } => {
                    at = if x.col(feature as usize)[i] <= bin { left } else { right } as usize;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Forest {
    trees: Vec<Tree>,
    n_classes: usize,
}

impl Forest {
    /// `class_weight[c]` scales every sample of class `c` (all ones for none).
    pub fn fit(
        x: &Binned,
        y: &[usize],
        n_classes: usize,
        class_weight: &[f64],
        params: ForestParams,
        d: usize,
        seed: u64,
    ) -> Self {
        let w: Vec<f64> = y.iter().map(|&c| class_weight[c]).collect();
        let mtry = ((d as f64).sqrt().floor() as usize).max(1);
        let mut builder = Builder {
            x,
            y,
            w: &w,
            k: n_classes,
            d,
            mtry,
            params,
            hist: vec![0.0; MAX_BINS * n_classes],
            counts: vec![0; MAX_BINS],
            features: (0..d).collect(),
        };
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = seeds::rng(seeds::derive(seed, t as u64));
                let mut idx: Vec<usize> = (0..x.n).map(|_| rng.random_range(0..x.n)).collect();
                builder.features = (0..d).collect();
                let mut tree = Tree { nodes: Vec::new(), probs: Vec::new(), k: n_classes };
                builder.build(&mut idx, 0, &mut tree, &mut rng);
                tree
            })
            .collect();
        Self { trees, n_classes }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Argmax of summed leaf distributions after each of `checkpoints` trees
    /// (e.g. `[100, 300, 500]`), so nested forests share one fit.
    pub fn predict_at(&self, x: &Binned, checkpoints: &[usize]) -> Vec<Vec<usize>> {
        let k = self.n_classes;
        let mut acc = vec![0.0f64; x.n * k];
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut done = 0;
        for &cp in checkpoints {
            let cp = cp.min(self.trees.len());
            for tree in self.trees.iter().take(cp).skip(done) {
                for i in 0..x.n {
                    let p = tree.leaf_probs(x, i);
                    for c in 0..k {
                        acc[i * k + c] += p[c] as f64;
                    }
                }
            }
            done = done.max(cp);
            out.push(
                (0..x.n)
                    .map(|i| {
                        let row = &acc[i * k..(i + 1) * k];
                        // first maximum wins, so ties resolve to the lower class id
                        row.iter().enumerate().fold(0, |b, (c, &v)| if v > row[b] { c } else { b })
                    })
                    .collect(),
            );
        }
        out
    }

    pub fn predict(&self, x: &Binned) -> Vec<usize> {
        self.predict_at(x, &[self.trees.len()]).pop().expect("one checkpoint")
    }
}
