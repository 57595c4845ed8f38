//! Bias-corrected Adam.

use std::collections::HashMap;

use crate::error::{shape_err, AutodiffError, Result};
use crate::graph::{Gradients, Matrix};
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Matrix,
    v: Matrix,
}

/// Optimizer state: per-parameter first/second moments and a step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<ParamId, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients of a backward sweep.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        self.step_with(store, grads.params())
    }

    /// Applies one update. Parameters absent from `grads` (or frozen) are
    /// left untouched and their moments do not decay.
    pub fn step_with<'a>(
        &mut self,
        store: &mut ParamStore,
        grads: impl IntoIterator<Item = (ParamId, &'a Matrix)>,
    ) -> Result<()> {
        let grads: Vec<_> = grads.into_iter().collect();
        for (id, g) in &grads {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(AutodiffError::NumericFault { op: "adam" });
            }
            if store.value(*id).dim() != g.dim() {
                return shape_err(
                    "adam",
                    format!("{}: {:?} vs grad {:?}", store.name(*id), store.value(*id).dim(), g.dim()),
                );
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for (id, g) in grads {
            if store.is_frozen(id) {
                continue;
            }
            let mom = self.moments.entry(id).or_insert_with(|| Moments {
                m: Matrix::zeros(g.dim()),
                v: Matrix::zeros(g.dim()),
            });
            let param = store.value_mut(id);
            ndarray::Zip::from(param)
                .and(&mut mom.m)
                .and(&mut mom.v)
                .and(g)
                .for_each(|p, m, v, &gi| {
                    *m = beta1 * *m + (1.0 - beta1) * gi;
                    *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                });
        }
        Ok(())
    }
}
