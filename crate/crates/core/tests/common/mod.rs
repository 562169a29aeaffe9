//! Brute-force reference implementations shared by the property and acceptance tests.
#![allow(dead_code)]

use rssiforge_core::RssiWindow;

fn dist(a: &RssiWindow, b: &RssiWindow) -> f64 {
    let mut s = 0.0;
    for ap in 0..a.n_aps() {
        for t in 0..a.n_timestamps() {
            let d = a.get(ap, t) as f64 - b.get(ap, t) as f64;
            s += d * d;
        }
    }
    s.sqrt()
}

fn nearest(from: &RssiWindow, to: &[RssiWindow]) -> f64 {
    let mut best = f64::INFINITY;
    for b in to {
        let d = dist(from, b);
        if d < best {
            best = d;
        }
    }
    best
}

/// `(mean incoming, variance outgoing, sum)` by explicit double loops.
pub fn mivo_oracle(real: &[RssiWindow], generated: &[RssiWindow]) -> (f64, f64, f64) {
    let mut incoming = 0.0;
    for g in generated {
        incoming += nearest(g, real);
    }
    incoming /= generated.len() as f64;
    let out: Vec<f64> = real.iter().map(|r| nearest(r, generated)).collect();
    let m = out.iter().sum::<f64>() / out.len() as f64;
    let var = out.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / out.len() as f64;
    (incoming, var, incoming + var)
}

/// Macro F1 in percent from a dense confusion matrix over every label seen.
pub fn macro_f1_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let k = pred.iter().chain(truth).max().map_or(0, |m| m + 1);
    let mut cm = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        cm[t][p] += 1;
    }
    let mut scores = Vec::new();
    for c in 0..k {
        let row: usize = cm[c].iter().sum();
        let col: usize = cm.iter().map(|r| r[c]).sum();
        if row + col == 0 {
            continue;
        }
        let tp = cm[c][c];
        let fp = col - tp;
        let fn_ = row - tp;
        scores.push(100.0 * (2 * tp) as f64 / (2 * tp + fp + fn_) as f64);
    }
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// `n_samples / (n_classes · count_c)` for each present class, in label order.
pub fn class_weights_oracle(labels: &[usize]) -> Vec<(usize, f64)> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i, labels.len() as f64 / (present * c as f64)))
        .collect()
}
