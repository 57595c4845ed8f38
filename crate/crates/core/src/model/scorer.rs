//! Fast evaluation-time scoring against every entity.
//!
//! Without dropout the decoder distance splits into a query part and a
//! candidate part:
//! `||(u_z - MLP_ez(z) + r') + (MLP_um(M'_c) - MLP_em(M'_c) - e'_c)||`.
//! The candidate part is computed once per evaluation pass.

use autodiff::{Graph, Matrix, Mode, Var};
use ndarray::{ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RawNp;
use crate::error::{Error, Result};
use crate::kg::RelationId;

#[derive(Debug, Clone)]
pub struct CandidateScorer {
    offsets: Matrix,
}

impl CandidateScorer {
    /// `motif_reps` holds one motif representation per entity.
    pub fn build(model: &RawNp, motif_reps: &Matrix) -> Result<Self> {
        let n = model.config.num_entities;
        if motif_reps.dim() != (n, model.dim()) {
            return Err(Error::Invalid(format!(
                "motif table {:?}, expected ({n}, {})",
                motif_reps.dim(),
                model.dim()
            )));
        }
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mode = eval_mode(&mut rng);
        let m = g.constant(motif_reps.clone())?;
        let um = model.p.dec_um.forward(&mut g, &model.store, m, &mut mode)?;
        let em = model.p.dec_em.forward(&mut g, &model.store, m, &mut mode)?;
        let mut offsets = g.value(um) - g.value(em);
        offsets -= model.store.value(model.p.entity);
        Ok(Self { offsets })
    }

    /// Query row `u' + MLP_uz(z) - MLP_ez(z) + r'` (evaluation mode).
    pub fn query(&self, model: &RawNp, g: &mut Graph, u: Var, z: Var, relation: RelationId) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mode = eval_mode(&mut rng);
        let uz = model.p.dec_uz.forward(g, &model.store, z, &mut mode)?;
        let ez = model.p.dec_ez.forward(g, &model.store, z, &mut mode)?;
        let rel = model.store.value(model.p.relation);
        if relation.idx() >= rel.nrows() {
            return Err(Error::Invalid(format!("relation {relation} out of range")));
        }
        let q = g.value(u) + g.value(uz) - g.value(ez);
        Ok(q.row(0).iter().zip(rel.row(relation.idx())).map(|(a, b)| a + b).collect())
    }

    /// Distance of every entity to the query row.
    pub fn score_all(&self, query: &[f64]) -> Vec<f64> {
        let q = ArrayView1::from(query);
        self.offsets
            .axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .zip(q.iter())
                    .map(|(a, b)| (a + b) * (a + b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn num_entities(&self) -> usize {
        self.offsets.nrows()
    }
}

pub(crate) fn eval_mode<R: Rng + ?Sized>(rng: &mut R) -> Mode<'_, R> {
    Mode {
        train: false,
        dropout: 0.0,
        rng,
    }
}
