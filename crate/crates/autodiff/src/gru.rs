//! Gated recurrent unit.
//!
//! ```text
//! z  = sigmoid(x Wz + bz + h Uz)
//! r  = sigmoid(x Wr + br + h Ur)
//! n  = tanh(x Wn + bn + r * (h Un + bhn))
//! h' = (1 - z) * n + z * h
//! ```
//!
//! The input projections (`x W + b`) are split out so that callers feeding
//! a small vocabulary of inputs can project each distinct input once and
//! gather rows per step.

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub wz: ParamId,
    pub wr: ParamId,
    pub wn: ParamId,
    pub uz: ParamId,
    pub ur: ParamId,
    pub un: ParamId,
    pub bz: ParamId,
    pub br: ParamId,
    pub bn: ParamId,
    pub bhn: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Input-side pre-activations for the update, reset and candidate gates.
#[derive(Debug, Clone, Copy)]
pub struct GruInput {
    pub z: Var,
    pub r: Var,
    pub n: Var,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |gate: &str, rows: usize, rng: &mut R| {
            store.add_xavier(format!("{prefix}.{gate}"), rows, hidden, rng)
        };
        let (wz, wr, wn) = (w("wz", input, rng), w("wr", input, rng), w("wn", input, rng));
        let (uz, ur, un) = (w("uz", hidden, rng), w("ur", hidden, rng), w("un", hidden, rng));
        Self {
            wz,
            wr,
            wn,
            uz,
            ur,
            un,
            bz: store.add_zeros(format!("{prefix}.bz"), 1, hidden),
            br: store.add_zeros(format!("{prefix}.br"), 1, hidden),
            bn: store.add_zeros(format!("{prefix}.bn"), 1, hidden),
            bhn: store.add_zeros(format!("{prefix}.bhn"), 1, hidden),
            input,
            hidden,
        }
    }

    pub fn params(&self) -> [ParamId; 10] {
        [
            self.wz, self.wr, self.wn, self.uz, self.ur, self.un, self.bz, self.br, self.bn,
            self.bhn,
        ]
    }

    pub fn project(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<GruInput> {
        let mut lin = |w: ParamId, b: ParamId| -> Result<Var> {
            let w = g.param(store, w)?;
            let b = g.param(store, b)?;
            let xw = g.matmul(x, w)?;
            g.add_row(xw, b)
        };
        Ok(GruInput {
            z: lin(self.wz, self.bz)?,
            r: lin(self.wr, self.br)?,
            n: lin(self.wn, self.bn)?,
        })
    }

    pub fn step_projected(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: GruInput,
        h: Var,
    ) -> Result<Var> {
        let uz = g.param(store, self.uz)?;
        let ur = g.param(store, self.ur)?;
        let un = g.param(store, self.un)?;
        let bhn = g.param(store, self.bhn)?;

        let hz = g.matmul(h, uz)?;
        let z = g.add(x.z, hz)?;
        let z = g.sigmoid(z)?;

        let hr = g.matmul(h, ur)?;
        let r = g.add(x.r, hr)?;
        let r = g.sigmoid(r)?;

        let hn = g.matmul(h, un)?;
        let hn = g.add_row(hn, bhn)?;
        let rn = g.mul(r, hn)?;
        let n = g.add(x.n, rn)?;
        let n = g.tanh(n)?;

        let keep = g.one_minus(z)?;
        let fresh = g.mul(keep, n)?;
        let carried = g.mul(z, h)?;
        g.add(fresh, carried)
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let proj = self.project(g, store, x)?;
        self.step_projected(g, store, proj, h)
    }

    /// Runs the cell over `xs` from `h0` and returns the final hidden state.
    pub fn unroll(&self, g: &mut Graph, store: &ParamStore, xs: &[Var], h0: Var) -> Result<Var> {
        xs.iter()
            .try_fold(h0, |h, &x| self.step(g, store, x, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(store: &mut ParamStore, cell: &GruCell) {
        for id in cell.params() {
            let dim = store.value(id).dim();
            store.set(id, Matrix::zeros(dim)).unwrap();
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 4, 5, &mut rng);
        zeroed(&mut store, &cell);
        let mut g = Graph::new();
        let x = g.constant(Matrix::zeros((1, 4))).unwrap();
        let h = g.constant(Matrix::zeros((1, 5))).unwrap();
        let out = cell.step(&mut g, &store, x, h).unwrap();
        assert_eq!(g.value(out), &Matrix::zeros((1, 5)));
    }

    #[test]
    fn single_step_unroll_equals_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
        let xv = Matrix::from_shape_fn((2, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let hv = Matrix::from_shape_fn((2, 4), |(i, j)| ((i + j) as f64).sin());

        let mut g = Graph::new();
        let x = g.constant(xv.clone()).unwrap();
        let h = g.constant(hv.clone()).unwrap();
        let direct = cell.step(&mut g, &store, x, h).unwrap();
        let unrolled = cell.unroll(&mut g, &store, &[x], h).unwrap();
        assert_eq!(g.value(direct), g.value(unrolled));
    }
}
