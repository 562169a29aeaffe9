use std::collections::BTreeMap;

use crate::tensor::{Real, Tensor};

/// Adam over a named parameter map. Moment buffers are created lazily the
/// first time a name is seen.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: i32,
    m: BTreeMap<String, Vec<T>>,
    v: BTreeMap<String, Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: T, beta1: T, beta2: T) -> Self {
        Self { lr, beta1, beta2, eps: T::of(1e-8), step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update. Parameters without an entry in `grads` are left alone.
    pub fn step(&mut self, params: &mut BTreeMap<String, Tensor<T>>, grads: &BTreeMap<String, Tensor<T>>) {
        self.step += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step);
        let bc2 = one - self.beta2.powi(self.step);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            assert_eq!(p.shape(), g.shape(), "adam: gradient shape for {name}");
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.numel()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.numel()]);
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (one - self.beta1) * gi;
                *vi = self.beta2 * *vi + (one - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi = *pi - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
