//! Room classifier: a random forest on flattened windows, hyperparameters
//! picked by stratified k-fold cross-validated macro F1.

use serde::{Deserialize, Serialize};

use super::forest::{Binner, Forest, ForestParams};
use super::metrics::{class_weights, macro_f1};
use crate::domain::RssiWindow;
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocaliserGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_leaf: Vec<usize>,
    pub folds: usize,
}

impl Default for LocaliserGrid {
    fn default() -> Self {
        Self {
            n_trees: vec![100, 300, 500],
            max_depth: vec![None, Some(10), Some(20)],
            min_samples_leaf: vec![1, 5],
            folds: 3,
        }
    }
}

impl LocaliserGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees.is_empty() || self.max_depth.is_empty() || self.min_samples_leaf.is_empty() {
            return Err(Error::Invalid("localiser grid has an empty axis".into()));
        }
        if self.n_trees.contains(&0) || self.min_samples_leaf.contains(&0) || self.max_depth.contains(&Some(0)) {
            return Err(Error::Invalid("localiser grid values must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Invalid(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }

    /// Every combination, tree counts varying fastest.
    pub fn candidates(&self) -> Vec<ForestParams> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depth {
            for &min_samples_leaf in &self.min_samples_leaf {
                for &n_trees in &self.n_trees {
                    out.push(ForestParams { n_trees, max_depth, min_samples_leaf });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Localiser {
    binner: Binner,
    forest: Forest,
    pub params: ForestParams,
    /// Mean cross-validated macro F1 of the selected parameters.
    pub cv_macro_f1: f64,
}

impl Localiser {
    pub fn predict(&self, windows: &[&RssiWindow]) -> Result<Vec<usize>> {
        let rows = rows_of(windows)?;
        if let Some(r) = rows.first() {
            if r.len() != self.binner.n_features() {
                return Err(Error::Shape(format!(
                    "localiser expects {} features, got {}",
                    self.binner.n_features(),
                    r.len()
                )));
            }
        }
        Ok(self.forest.predict(&self.binner.transform(&rows)))
    }
}

fn rows_of<'a>(windows: &[&'a RssiWindow]) -> Result<Vec<&'a [f32]>> {
    if let Some(first) = windows.first() {
        if let Some(w) = windows.iter().find(|w| w.shape() != first.shape()) {
            return Err(Error::Shape(format!("windows differ in shape: {:?} vs {:?}", first.shape(), w.shape())));
        }
    }
    Ok(windows.iter().map(|w| w.as_slice()).collect())
}

/// Fold index per sample; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = seeds::rng(seed);
    let mut out = vec![0; labels.len()];
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            out[i] = j % folds;
        }
    }
    out
}

fn weight_vector(labels: &[usize], n_classes: usize, use_weights: bool) -> Vec<f64> {
    let mut w = vec![1.0; n_classes];
    if use_weights {
        for (c, v) in class_weights(labels) {
            w[c] = v;
        }
    }
    w
}

/// Grid search then refit on all of `windows`. `class_names[c]` names label `c`.
pub fn train_localiser(
    windows: &[&RssiWindow],
    labels: &[usize],
    class_names: &[String],
    use_weights: bool,
    grid: &LocaliserGrid,
    seed: u64,
) -> Result<Localiser> {
    grid.validate()?;
    if windows.len() != labels.len() {
        return Err(Error::Shape(format!("{} windows for {} labels", windows.len(), labels.len())));
    }
    let k = class_names.len();
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label: l, n_classes: k });
    }
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 && n < grid.folds {
            return Err(Error::TooFewSamples { class: class_names[c].clone(), count: n, needed: grid.folds });
        }
    }
    if labels.is_empty() {
        return Err(Error::Invalid("no training windows".into()));
    }
    let rows = rows_of(windows)?;
    let d = rows[0].len();
    let binner = Binner::fit(&rows);
    let all = binner.transform(&rows);

    let fold_of = stratified_folds(labels, k, grid.folds, seeds::derive_named(seed, "folds"));
    let mut tree_counts = grid.n_trees.clone();
    tree_counts.sort_unstable();
    tree_counts.dedup();
    let max_trees = *tree_counts.last().expect("validated");
    let mut best: Option<(f64, ForestParams)> = None;
    for &max_depth in &grid.max_depth {
        for &min_samples_leaf in &grid.min_samples_leaf {
            let shape = ForestParams { n_trees: max_trees, max_depth, min_samples_leaf };
            let mut scores = vec![0.0; tree_counts.len()];
            for f in 0..grid.folds {
                let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
                let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
                let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i]).collect::<Vec<_>>();
                let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
                let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
                let x_train = binner.transform(&pick(&train));
                let x_test = binner.transform(&pick(&test));
                let w = weight_vector(&y_train, k, use_weights);
                let forest = Forest::fit(&x_train, &y_train, k, &w, shape, d, seeds::derive(seed, f as u64));
                for (s, pred) in scores.iter_mut().zip(forest.predict_at(&x_test, &tree_counts)) {
                    *s += macro_f1(&pred, &y_test)? / grid.folds as f64;
                }
            }
            for (&n_trees, &s) in tree_counts.iter().zip(&scores) {
                if !grid.n_trees.contains(&n_trees) {
                    continue;
                }
                let p = ForestParams { n_trees, ..shape };
                log::debug!("cv {p:?}: {s:.3}");
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, p));
                }
            }
        }
    }
    let (cv_macro_f1, params) = best.expect("non-empty grid");
    let w = weight_vector(labels, k, use_weights);
    let forest = Forest::fit(&all, labels, k, &w, params, d, seeds::derive_named(seed, "refit"));
    Ok(Localiser { binner, forest, params, cv_macro_f1 })
}
