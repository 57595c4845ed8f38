//! Small feed-forward building blocks.

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};

/// Forward-pass mode shared by every layer call.
pub struct Mode<'a, R: Rng + ?Sized> {
    pub train: bool,
    pub dropout: f64,
    pub rng: &'a mut R,
}

/// Two-layer perceptron: `relu(x W1 + b1)` with dropout on the hidden
/// activation, then a linear output `h W2 + b2`.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: store.add_xavier(format!("{prefix}.w1"), input, hidden, rng),
            b1: store.add_zeros(format!("{prefix}.b1"), 1, hidden),
            w2: store.add_xavier(format!("{prefix}.w2"), hidden, output, rng),
            b2: store.add_zeros(format!("{prefix}.b2"), 1, output),
        }
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        let w1 = g.param(store, self.w1)?;
        let b1 = g.param(store, self.b1)?;
        let w2 = g.param(store, self.w2)?;
        let b2 = g.param(store, self.b2)?;
        let h = g.matmul(x, w1)?;
        let h = g.add_row(h, b1)?;
        let h = g.relu(h)?;
        let h = g.dropout(h, mode.dropout, mode.train, mode.rng)?;
        let o = g.matmul(h, w2)?;
        g.add_row(o, b2)
    }
}
