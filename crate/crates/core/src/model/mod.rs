//! The RawNP network.
//!
//! * motif encoder: one-hot position codes -> `f_enc` MLP -> GRU, final
//!   hidden states mean-pooled per entity;
//! * I-RGNN: `u' = relu(mean_i(W_{r_i} r'_i + W e'_i))` over the support;
//! * context encoder: `c_i = MLP(u' | r'_i | e'_i | y_i | M'_{e_i})`,
//!   mean-aggregated into `z`, then `h_z = relu(MLP(z))`,
//!   `mu = MLP(h_z)`, `sigma = 0.1 + 0.9 sigmoid(MLP(h_z))`;
//! * decoder: `h_u = u' + MLP_uz(z) + MLP_um(M'_e)`,
//!   `h_e = e' + MLP_ez(z) + MLP_em(M'_e)`, score `||h_u + r' - h_e||`
//!   (a distance: lower is more plausible).
//!
//! All learned mappings are two-layer MLPs with ReLU hidden activations
//! and dropout on the hidden layer during training.

mod persist;
mod scorer;

use std::collections::BTreeMap;

use autodiff::{Graph, GruCell, Matrix, Mlp, Mode, ParamId, ParamStore, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::pretrain::EmbeddingTable;
use crate::walk::MotifSet;

pub use scorer::CandidateScorer;

/// Lower clamp bound applied to the sigma head's pre-activation; keeps the
/// sigmoid strictly inside (0, 1) in `f64`.
const SIGMA_LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub hidden: usize,
    /// Maximum walk length `l`; position codes are one-hot over `1..=l`.
    pub walk_length: usize,
    pub dropout: f64,
    pub num_entities: usize,
    /// Oriented relation count (`2|R|`).
    pub num_relations: usize,
}

impl ModelConfig {
    pub fn new(num_entities: usize, num_relations: usize) -> Self {
        Self {
            dim: 100,
            hidden: 100,
            walk_length: 10,
            dropout: 0.3,
            num_entities,
            num_relations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub entity: ParamId,
    pub relation: ParamId,
    pub fenc: Mlp,
    pub gru: GruCell,
    /// `num_relations` stacked `dim x dim` blocks.
    pub w_rel: ParamId,
    pub w: ParamId,
    pub ctx: Mlp,
    pub trunk: Mlp,
    pub mu: Mlp,
    pub sigma: Mlp,
    pub dec_uz: Mlp,
    pub dec_ez: Mlp,
    pub dec_um: Mlp,
    pub dec_em: Mlp,
}

/// Value-level diagonal Gaussian over the latent `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl LatentGaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Graph-level latent distribution (`1 x dim` rows).
#[derive(Debug, Clone, Copy)]
pub struct LatentVars {
    pub mean: Var,
    pub std: Var,
}

impl LatentVars {
    pub fn read(&self, g: &Graph) -> LatentGaussian {
        LatentGaussian {
            mean: g.value(self.mean).iter().copied().collect(),
            stddev: g.value(self.std).iter().copied().collect(),
        }
    }
}

/// One context triple `(u, relation, other)` with its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextItem {
    pub relation: RelationId,
    pub other: EntityId,
    pub label: f64,
}

#[derive(Debug, Clone)]
pub struct RawNp {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub p: Params,
    no_raw: bool,
}

impl RawNp {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ModelConfig {
            dim: d,
            hidden: h,
            walk_length: l,
            ..
        } = config;
        let mut store = ParamStore::new();
        let entity = store.add_xavier("embed.entity", config.num_entities, d, &mut rng);
        let relation = store.add_xavier("embed.relation", config.num_relations, d, &mut rng);
        let fenc = Mlp::new(&mut store, "motif.fenc", l, h, d, &mut rng);
        let gru = GruCell::new(&mut store, "motif.gru", d, d, &mut rng);
        let bound = (6.0 / (2 * d) as f64).sqrt();
        let w_rel = store.add(
            "irgnn.w_rel",
            Matrix::from_shape_fn((config.num_relations * d, d), |_| {
                rng.random_range(-bound..bound)
            }),
        );
        let w = store.add_xavier("irgnn.w", d, d, &mut rng);
        let ctx = Mlp::new(&mut store, "enc.ctx", 4 * d + 1, h, d, &mut rng);
        let trunk = Mlp::new(&mut store, "enc.trunk", d, h, d, &mut rng);
        let mu = Mlp::new(&mut store, "enc.mu", d, h, d, &mut rng);
        let sigma = Mlp::new(&mut store, "enc.sigma", d, h, d, &mut rng);
        let dec_uz = Mlp::new(&mut store, "dec.u_z", d, h, d, &mut rng);
        let dec_ez = Mlp::new(&mut store, "dec.e_z", d, h, d, &mut rng);
        let dec_um = Mlp::new(&mut store, "dec.u_m", d, h, d, &mut rng);
        let dec_em = Mlp::new(&mut store, "dec.e_m", d, h, d, &mut rng);
        Self {
            config,
            store,
            p: Params {
                entity,
                relation,
                fenc,
                gru,
                w_rel,
                w,
                ctx,
                trunk,
                mu,
                sigma,
                dec_uz,
                dec_ez,
                dec_um,
                dec_em,
            },
            no_raw: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Copies pretrained embeddings into the model.
    pub fn load_embeddings(&mut self, table: &EmbeddingTable) -> Result<()> {
        self.store.set(self.p.entity, table.entity.clone())?;
        self.store.set(self.p.relation, table.relation.clone())?;
        Ok(())
    }

    /// Removes the motif pathway: motif representations become zero and the
    /// decoder's motif-injection MLPs are zeroed and frozen.
    pub fn disable_motifs(&mut self) {
        self.no_raw = true;
        for id in self.p.dec_um.params().into_iter().chain(self.p.dec_em.params()) {
            self.store.value_mut(id).fill(0.0);
            self.store.set_frozen(id, true);
        }
    }

    pub fn motifs_enabled(&self) -> bool {
        !self.no_raw
    }

    /// Encodes one representation per motif set (`sets.len() x dim`).
    ///
    /// Identical motifs are encoded once; each set's row is the mean of its
    /// motifs' final GRU states, and an empty set maps to the zero row.
    pub fn encode_motif_sets<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        sets: &[&MotifSet],
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        let d = self.dim();
        let l = self.config.walk_length;
        let mut distinct: BTreeMap<&[u16], usize> = BTreeMap::new();
        for set in sets {
            for m in &set.motifs {
                if let Some(bad) = m.codes.iter().find(|c| **c == 0 || **c as usize > l) {
                    return Err(Error::Invalid(format!(
                        "motif code {bad} outside 1..={l}"
                    )));
                }
                let next = distinct.len();
                distinct.entry(m.codes.as_slice()).or_insert(next);
            }
        }
        if self.no_raw || distinct.is_empty() {
            return Ok(g.constant(Matrix::zeros((sets.len(), d)))?);
        }
        let motifs: Vec<&[u16]> = {
            let mut v = vec![&[][..]; distinct.len()];
            for (codes, i) in &distinct {
                v[*i] = codes;
            }
            v
        };
        let m = motifs.len();
        let mut weights = Matrix::zeros((sets.len(), m));
        for (row, set) in sets.iter().enumerate() {
            let share = 1.0 / set.motifs.len().max(1) as f64;
            for motif in &set.motifs {
                weights[[row, distinct[motif.codes.as_slice()]]] += share;
            }
        }

        let onehot = g.constant(Matrix::eye(l))?;
        let code_embed = self.p.fenc.forward(g, &self.store, onehot, mode)?;
        let proj = self.p.gru.project(g, &self.store, code_embed)?;

        let max_len = motifs.iter().map(|c| c.len()).max().unwrap_or(0);
        let mut h = g.constant(Matrix::zeros((m, d)))?;
        for t in 0..max_len {
            let rows: Vec<usize> = motifs
                .iter()
                .map(|c| c.get(t).map(|v| *v as usize - 1).unwrap_or(0))
                .collect();
            let step_in = autodiff::gru::GruInput {
                z: g.gather(proj.z, &rows)?,
                r: g.gather(proj.r, &rows)?,
                n: g.gather(proj.n, &rows)?,
            };
            let next = self.p.gru.step_projected(g, &self.store, step_in, h)?;
            if motifs.iter().all(|c| c.len() > t) {
                h = next;
            } else {
                let mask = Matrix::from_shape_fn((m, d), |(i, _)| {
                    if motifs[i].len() > t {
                        1.0
                    } else {
                        0.0
                    }
                });
                let mask = g.constant(mask)?;
                let delta = g.sub(next, h)?;
                let gated = g.mul(mask, delta)?;
                h = g.add(h, gated)?;
            }
        }
        let w = g.constant(weights)?;
        Ok(g.matmul(w, h)?)
    }

    /// `u' = relu(mean over support of (W_r r' + W e'))`.
    pub fn embed_unseen(&self, g: &mut Graph, support: &[(RelationId, EntityId)]) -> Result<Var> {
        if support.is_empty() {
            return Err(Error::Invalid("I-RGNN needs a non-empty support set".into()));
        }
        let rels: Vec<usize> = support.iter().map(|(r, _)| r.idx()).collect();
        let ents: Vec<usize> = support.iter().map(|(_, e)| e.idx()).collect();
        let rel_table = g.param(&self.store, self.p.relation)?;
        let ent_table = g.param(&self.store, self.p.entity)?;
        let w_rel = g.param(&self.store, self.p.w_rel)?;
        let w = g.param(&self.store, self.p.w)?;
        let r = g.gather(rel_table, &rels)?;
        let wr = g.block_vecmat(w_rel, &rels, r)?;
        let e = g.gather(ent_table, &ents)?;
        let we = g.matmul(e, w)?;
        let msg = g.add(wr, we)?;
        let mean = g.mean_rows(msg)?;
        Ok(g.relu(mean)?)
    }

    /// One context vector per item (`items.len() x dim`).
    pub fn encode_context<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        u: Var,
        items: &[ContextItem],
        motif_rows: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        if let Some(bad) = items.iter().find(|i| i.label != 0.0 && i.label != 1.0) {
            return Err(Error::Invalid(format!(
                "context label {} is not 0 or 1",
                bad.label
            )));
        }
        let n = items.len();
        if g.shape(motif_rows).0 != n {
            return Err(Error::Invalid(format!(
                "{} motif rows for {n} context items",
                g.shape(motif_rows).0
            )));
        }
        let rels: Vec<usize> = items.iter().map(|i| i.relation.idx()).collect();
        let ents: Vec<usize> = items.iter().map(|i| i.other.idx()).collect();
        let rel_table = g.param(&self.store, self.p.relation)?;
        let ent_table = g.param(&self.store, self.p.entity)?;
        let u_rows = g.gather(u, &vec![0; n])?;
        let r = g.gather(rel_table, &rels)?;
        let e = g.gather(ent_table, &ents)?;
        let y = g.constant(Matrix::from_shape_fn((n, 1), |(i, _)| items[i].label))?;
        let x = g.concat(&[u_rows, r, e, y, motif_rows])?;
        Ok(self.p.ctx.forward(g, &self.store, x, mode)?)
    }

    /// Permutation-invariant mean of the context vectors.
    pub fn aggregate(&self, g: &mut Graph, contexts: Var) -> Result<Var> {
        if g.shape(contexts).0 == 0 {
            return Err(Error::Invalid("cannot aggregate an empty context".into()));
        }
        Ok(g.mean_rows(contexts)?)
    }

    pub fn latent_dist<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        z: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<LatentVars> {
        let h = self.p.trunk.forward(g, &self.store, z, mode)?;
        let h = g.relu(h)?;
        let mean = self.p.mu.forward(g, &self.store, h, mode)?;
        let logit = self.p.sigma.forward(g, &self.store, h, mode)?;
        let logit = g.clamp(logit, -SIGMA_LOGIT_CLAMP, SIGMA_LOGIT_CLAMP)?;
        let s = g.sigmoid(logit)?;
        let s = g.scale(s, 0.9)?;
        let std = g.add_scalar(s, 0.1)?;
        Ok(LatentVars { mean, std })
    }

    /// Reparameterized draw `mean + std * eps`.
    pub fn sample_latent(&self, g: &mut Graph, dist: LatentVars, eps: &[f64]) -> Result<Var> {
        let d = g.shape(dist.mean).1;
        if eps.len() != d {
            return Err(Error::Invalid(format!("noise of length {} for dim {d}", eps.len())));
        }
        let eps = g.constant(Matrix::from_shape_vec((1, d), eps.to_vec()).expect("1 x d"))?;
        let spread = g.mul(dist.std, eps)?;
        Ok(g.add(dist.mean, spread)?)
    }

    /// Distance scores (`n x 1`) of candidates `(u, relations[i], candidates[i])`.
    #[allow(clippy::too_many_arguments)]
    pub fn decode<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        u: Var,
        relations: &[RelationId],
        candidates: &[EntityId],
        z: Var,
        candidate_motifs: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        let rel_table = g.param(&self.store, self.p.relation)?;
        let ent_table = g.param(&self.store, self.p.entity)?;
        let rels: Vec<usize> = relations.iter().map(|r| r.idx()).collect();
        let ents: Vec<usize> = candidates.iter().map(|e| e.idx()).collect();
        let r = g.gather(rel_table, &rels)?;
        let e = g.gather(ent_table, &ents)?;
        self.decode_vectors(g, u, r, e, z, candidate_motifs, mode)
    }

    /// [`RawNp::decode`] on explicit relation/candidate vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_vectors<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        u: Var,
        r: Var,
        e: Var,
        z: Var,
        candidate_motifs: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        let uz_shift = self.p.dec_uz.forward(g, &self.store, z, mode)?;
        let ez_shift = self.p.dec_ez.forward(g, &self.store, z, mode)?;
        let u_z = g.add(u, uz_shift)?;
        let um = self.p.dec_um.forward(g, &self.store, candidate_motifs, mode)?;
        let em = self.p.dec_em.forward(g, &self.store, candidate_motifs, mode)?;
        let h_u = g.add_row(um, u_z)?;
        let e_z = g.add_row(e, ez_shift)?;
        let h_e = g.add(e_z, em)?;
        let t = g.add(h_u, r)?;
        let diff = g.sub(t, h_e)?;
        Ok(g.row_norm(diff)?)
    }
}
