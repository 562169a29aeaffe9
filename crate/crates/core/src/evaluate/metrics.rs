//! Distribution and classification metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{squared_distance, RssiWindow};
use crate::error::{Error, Result};

/// Nearest-neighbour distance summary between a real and a generated set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mivo {
    /// Mean over generated windows of the distance to the closest real one.
    pub mean_incoming: f64,
    /// Variance over real windows of the distance to the closest generated one.
    pub var_outgoing: f64,
    pub scalar: f64,
}

/// For each window of `from`, the Euclidean distance to its nearest window in `to`.
pub fn min_distances(from: &[RssiWindow], to: &[RssiWindow]) -> Vec<f64> {
    from.iter()
        .map(|a| to.iter().map(|b| squared_distance(a.as_slice(), b.as_slice())).fold(f64::INFINITY, f64::min).sqrt())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

pub fn mivo(real: &[RssiWindow], generated: &[RssiWindow]) -> Result<Mivo> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::Invalid("MiVo needs two non-empty sets".into()));
    }
    let shape = real[0].shape();
    if let Some(w) = real.iter().chain(generated).find(|w| w.shape() != shape) {
        return Err(Error::Shape(format!("MiVo windows differ in shape: {shape:?} vs {:?}", w.shape())));
    }
    let mean_incoming = mean(&min_distances(generated, real));
    let var_outgoing = variance(&min_distances(real, generated));
    Ok(Mivo { mean_incoming, var_outgoing, scalar: mean_incoming + var_outgoing })
}

/// Balanced inverse-frequency weights `N / (k · N_c)` over the `k` classes present.
pub fn class_weights(labels: &[usize]) -> BTreeMap<usize, f64> {
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let k = counts.len() as f64;
    let n = labels.len() as f64;
    counts.into_iter().map(|(c, m)| (c, n / (k * m as f64))).collect()
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} truths", pred.len(), truth.len())));
    }
    Ok(())
}

/// Per-class F1 over every class seen in either vector, in percent.
pub fn per_class_f1(pred: &[usize], truth: &[usize]) -> Result<BTreeMap<usize, f64>> {
    check_lengths(pred, truth)?;
    let mut tp = BTreeMap::<usize, usize>::new();
    let mut n_pred = BTreeMap::<usize, usize>::new();
    let mut n_true = BTreeMap::<usize, usize>::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *n_pred.entry(p).or_default() += 1;
        *n_true.entry(t).or_default() += 1;
        if p == t {
            *tp.entry(p).or_default() += 1;
        }
        tp.entry(t).or_default();
        tp.entry(p).or_default();
    }
    Ok(tp
        .into_iter()
        .map(|(c, hits)| {
            let denom = n_pred.get(&c).copied().unwrap_or(0) + n_true.get(&c).copied().unwrap_or(0);
            // F1 = 2·TP / (|predicted c| + |true c|); one division so the percentage is correctly rounded
            let f1 = if denom == 0 { 0.0 } else { (200 * hits) as f64 / denom as f64 };
            (c, f1)
        })
        .collect())
}

/// Unweighted mean of per-class F1, in percent.
pub fn macro_f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let per = per_class_f1(pred, truth)?;
    if per.is_empty() {
        return Ok(0.0);
    }
    Ok(per.values().sum::<f64>() / per.len() as f64)
}

/// Recall of every class present in `truth`, in percent.
pub fn per_class_accuracy(pred: &[usize], truth: &[usize]) -> Result<BTreeMap<usize, f64>> {
    check_lengths(pred, truth)?;
    let mut hit = BTreeMap::<usize, (usize, usize)>::new();
    for (&p, &t) in pred.iter().zip(truth) {
        let e = hit.entry(t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    Ok(hit.into_iter().map(|(c, (h, n))| (c, 100.0 * h as f64 / n as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: f32, n: usize) -> RssiWindow {
        RssiWindow::from_fn(n, 20, |_, _| v)
    }

    #[test]
    fn identical_sets_score_zero() {
        let xs: Vec<_> = (0..5).map(|i| w(i as f32 / 5.0, 3)).collect();
        let m = mivo(&xs, &xs).unwrap();
        assert_eq!((m.mean_incoming, m.var_outgoing, m.scalar), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_pair_distance() {
        let m = mivo(&[w(0.0, 11)], &[w(0.1, 11)]).unwrap();
        let expect = (220.0f64 * 0.1f32 as f64 * 0.1f32 as f64).sqrt();
        assert!((m.mean_incoming - expect).abs() < 1e-9);
        assert!((m.mean_incoming - 1.4832).abs() < 1e-4);
        assert_eq!(m.var_outgoing, 0.0);
    }

    #[test]
    fn mivo_rejects_empty_and_mixed_shapes() {
        assert!(mivo(&[], &[w(0.0, 2)]).is_err());
        assert!(mivo(&[w(0.0, 2)], &[w(0.0, 3)]).is_err());
    }

    #[test]
    fn balanced_and_skewed_weights() {
        let w = class_weights(&[0, 1, 2, 0, 1, 2]);
        assert!(w.values().all(|&v| (v - 1.0).abs() < 1e-12));
        let mut labels = vec![0; 90];
        labels.extend([1; 10]);
        let w = class_weights(&labels);
        assert!((w[&0] - 100.0 / 180.0).abs() < 1e-12);
        assert!((w[&1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn f1_fixtures() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2]).unwrap(), 100.0);
        assert!((macro_f1(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap() - 50.0).abs() < 1e-12);
        assert!((macro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert!(macro_f1(&[0], &[0, 1]).is_err());
        let acc = per_class_accuracy(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(acc[&0], 100.0);
        assert_eq!(acc[&1], 50.0);
    }
}
