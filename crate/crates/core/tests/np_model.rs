//! Network components against straight-line recomputations.

use autodiff::{grad_check, Graph, Matrix, Mlp, Mode, ParamStore, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rawnp::kg::{EntityId, RelationId};
use rawnp::model::{ContextItem, LatentVars, ModelConfig, RawNp};

const DIM: usize = 6;

fn config() -> ModelConfig {
    ModelConfig {
        dim: DIM,
        hidden: 5,
        walk_length: 4,
        dropout: 0.3,
        num_entities: 9,
        num_relations: 6,
    }
}

fn model(seed: u64) -> RawNp {
    RawNp::new(config(), seed)
}

fn eval_mode(rng: &mut ChaCha8Rng) -> Mode<'_, ChaCha8Rng> {
    Mode { train: false, dropout: 0.0, rng }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// `relu(x W1 + b1) W2 + b2` with plain ndarray arithmetic.
fn mlp_oracle(store: &ParamStore, mlp: &Mlp, x: &Matrix) -> Matrix {
    let h = (x.dot(store.value(mlp.w1)) + store.value(mlp.b1)).mapv(|v| v.max(0.0));
    h.dot(store.value(mlp.w2)) + store.value(mlp.b2)
}

fn row(m: &Matrix, i: usize) -> Matrix {
    m.row(i).to_owned().insert_axis(ndarray::Axis(0))
}

fn zero_all(model: &mut RawNp) {
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        model.store.value_mut(id).fill(0.0);
    }
}

#[test]
fn decode_matches_straight_line_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let m = model(seed);
        let s = &m.store;
        let u = random(&mut rng, 1, DIM, 1.0);
        let z = random(&mut rng, 1, DIM, 1.0);
        let motifs = random(&mut rng, 3, DIM, 1.0);
        let relations = [RelationId(0), RelationId(4), RelationId(2)];
        let candidates = [EntityId(1), EntityId(8), EntityId(3)];

        let mut g = Graph::new();
        let (uv, zv, mv) = (g.constant(u.clone()).unwrap(), g.constant(z.clone()).unwrap(), g.constant(motifs.clone()).unwrap());
        let out = m.decode(&mut g, uv, &relations, &candidates, zv, mv, &mut eval_mode(&mut rng)).unwrap();
        let got = g.value(out).clone();

        for i in 0..3 {
            let r = row(s.value(m.p.relation), relations[i].idx());
            let e = row(s.value(m.p.entity), candidates[i].idx());
            let mi = row(&motifs, i);
            let h_u = &u + &mlp_oracle(s, &m.p.dec_uz, &z) + mlp_oracle(s, &m.p.dec_um, &mi);
            let h_e = &e + &mlp_oracle(s, &m.p.dec_ez, &z) + mlp_oracle(s, &m.p.dec_em, &mi);
            let diff = h_u + r - h_e;
            let expected = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((got[[i, 0]] - expected).abs() <= 1e-12, "{} vs {expected}", got[[i, 0]]);
        }
    }
}

#[test]
fn decode_degenerate_cases_vanish() {
    let mut m = model(0);
    zero_all(&mut m);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let zeros = g.constant(Matrix::zeros((1, DIM))).unwrap();
    let out = m.decode(&mut g, zeros, &[RelationId(1)], &[EntityId(2)], zeros, zeros, &mut eval_mode(&mut rng)).unwrap();
    assert_eq!(g.value(out)[[0, 0]], 0.0);

    // Zero decoder, zero relation, candidate equal to u: exact cancellation.
    let mut m = model(3);
    for mlp in [m.p.dec_uz, m.p.dec_ez, m.p.dec_um, m.p.dec_em] {
        for id in mlp.params() {
            m.store.value_mut(id).fill(0.0);
        }
    }
    let mut g = Graph::new();
    let u = g.constant(Matrix::from_shape_fn((1, DIM), |(_, j)| 0.3 * j as f64 - 0.7)).unwrap();
    let r = g.constant(Matrix::zeros((1, DIM))).unwrap();
    let z = g.constant(random(&mut rng, 1, DIM, 1.0)).unwrap();
    let mv = g.constant(random(&mut rng, 1, DIM, 1.0)).unwrap();
    let out = m.decode_vectors(&mut g, u, r, u, z, mv, &mut eval_mode(&mut rng)).unwrap();
    assert_eq!(g.value(out)[[0, 0]], 0.0);
}

#[test]
fn irgnn_matches_manual_mean_and_is_order_free() {
    let m = model(2);
    let s = &m.store;
    let support = [(RelationId(1), EntityId(2)), (RelationId(5), EntityId(0)), (RelationId(1), EntityId(7))];
    let block = |r: RelationId| {
        s.value(m.p.w_rel)
            .slice(ndarray::s![r.idx() * DIM..(r.idx() + 1) * DIM, ..])
            .to_owned()
    };
    let msg = |(r, e): (RelationId, EntityId)| {
        row(s.value(m.p.relation), r.idx()).dot(&block(r)) + row(s.value(m.p.entity), e.idx()).dot(s.value(m.p.w))
    };
    let mean = support.iter().map(|p| msg(*p)).fold(Matrix::zeros((1, DIM)), |a, b| a + b) / 3.0;
    let expected = mean.mapv(|v| v.max(0.0));

    let embed = |pairs: &[(RelationId, EntityId)]| {
        let mut g = Graph::new();
        let u = m.embed_unseen(&mut g, pairs).unwrap();
        g.value(u).clone()
    };
    let got = embed(&support);
    assert!(got.iter().zip(&expected).all(|(a, b)| (a - b).abs() <= 1e-12));
    let single = embed(&support[..1]);
    let expected_single = msg(support[0]).mapv(|v| v.max(0.0));
    assert!(single.iter().zip(&expected_single).all(|(a, b)| (a - b).abs() <= 1e-12));
    let reversed: Vec<_> = support.iter().rev().copied().collect();
    let again = embed(&reversed);
    assert!(again.iter().zip(&got).all(|(a, b)| (a - b).abs() <= 1e-15));

    let mut zero = model(2);
    zero_all(&mut zero);
    let mut g = Graph::new();
    let u = zero.embed_unseen(&mut g, &support).unwrap();
    assert!(g.value(u).iter().all(|v| *v == 0.0));
    assert!(zero.embed_unseen(&mut Graph::new(), &[]).is_err());
}

fn contexts(m: &RawNp, items: &[ContextItem], motifs: &Matrix, u: &Matrix) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let uv = g.constant(u.clone()).unwrap();
    let mv = g.constant(motifs.clone()).unwrap();
    let c = m.encode_context(&mut g, uv, items, mv, &mut eval_mode(&mut rng)).unwrap();
    g.value(c).clone()
}

#[test]
fn flipping_the_label_changes_the_context_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..10 {
        let m = model(100 + seed);
        let u = random(&mut rng, 1, DIM, 1.0);
        let motifs = random(&mut rng, 2, DIM, 1.0);
        let pos = ContextItem { relation: RelationId(2), other: EntityId(4), label: 1.0 };
        let neg = ContextItem { label: 0.0, ..pos };
        let c = contexts(&m, &[pos, neg], &Matrix::from_shape_fn((2, DIM), |(_, j)| motifs[[0, j]]), &u);
        assert_ne!(row(&c, 0), row(&c, 1), "seed {seed}");
        let same = contexts(&m, &[pos, pos], &Matrix::from_shape_fn((2, DIM), |(_, j)| motifs[[0, j]]), &u);
        assert_eq!(row(&same, 0), row(&same, 1));
    }
}

#[test]
fn three_shot_context_has_six_rows_and_rejects_bad_labels() {
    let m = model(0);
    let items: Vec<ContextItem> = (0..6)
        .map(|i| ContextItem { relation: RelationId(i % 3), other: EntityId(i), label: (i < 3) as u8 as f64 })
        .collect();
    let c = contexts(&m, &items, &Matrix::zeros((6, DIM)), &Matrix::zeros((1, DIM)));
    assert_eq!(c.dim(), (6, DIM));

    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let u = g.constant(Matrix::zeros((1, DIM))).unwrap();
    let mv = g.constant(Matrix::zeros((1, DIM))).unwrap();
    let bad = [ContextItem { relation: RelationId(0), other: EntityId(0), label: 0.5 }];
    assert!(m.encode_context(&mut g, u, &bad, mv, &mut eval_mode(&mut rng)).is_err());
}

#[test]
fn aggregation_edge_cases() {
    let m = model(0);
    let mut g = Graph::new();
    let v = Matrix::from_shape_fn((1, DIM), |(_, j)| j as f64 - 2.5);
    let single = g.constant(v.clone()).unwrap();
    let z = m.aggregate(&mut g, single).unwrap();
    assert_eq!(g.value(z), &v);
    let pair = g.constant(ndarray::concatenate![ndarray::Axis(0), v, -&v]).unwrap();
    let z = m.aggregate(&mut g, pair).unwrap();
    assert!(g.value(z).iter().all(|x| *x == 0.0));
    let empty = g.constant(Matrix::zeros((0, DIM))).unwrap();
    assert!(m.aggregate(&mut g, empty).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_is_permutation_invariant(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, DIM), 1..12),
        seed in 0u64..1000,
    ) {
        use rand::seq::SliceRandom;
        let m = model(0);
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let agg = |rs: &[Vec<f64>]| {
            let mut g = Graph::new();
            let c = g.constant(Matrix::from_shape_fn((rs.len(), DIM), |(i, j)| rs[i][j])).unwrap();
            let z = m.aggregate(&mut g, c).unwrap();
            g.value(z).clone()
        };
        // Bit-exact: the aggregate sums in canonical (sorted) order.
        prop_assert_eq!(agg(&rows), agg(&shuffled));
    }
}

#[test]
fn sigma_stays_strictly_inside_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for amplify in [1.0, 1e3] {
        let mut m = model(7);
        m.store.value_mut(m.p.sigma.w2).mapv_inplace(|v| v * amplify);
        let mut g = Graph::new();
        let z = g.constant(random(&mut rng, 5_000, DIM, 50.0)).unwrap();
        let dist = m.latent_dist(&mut g, z, &mut eval_mode(&mut rng)).unwrap();
        let std = g.value(dist.std);
        assert_eq!(std.nrows(), 5_000);
        assert!(std.iter().all(|s| *s > 0.1 && *s < 1.0));
    }
}

#[test]
fn zero_parameters_give_the_sigmoid_midpoint() {
    let mut m = model(0);
    zero_all(&mut m);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let z = g.constant(random(&mut rng, 1, DIM, 3.0)).unwrap();
    let dist = m.latent_dist(&mut g, z, &mut eval_mode(&mut rng)).unwrap();
    assert!(g.value(dist.std).iter().all(|s| *s == 0.55));
    assert!(g.value(dist.mean).iter().all(|v| *v == 0.0));
}

#[test]
fn same_input_same_distribution() {
    let m = model(5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z = random(&mut rng, 1, DIM, 1.0);
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let zv = g.constant(z.clone()).unwrap();
        m.latent_dist(&mut g, zv, &mut eval_mode(&mut rng)).unwrap().read(&g)
    };
    assert_eq!(run(), run());
}

fn latent(g: &mut Graph, mean: &[f64], std: &[f64]) -> LatentVars {
    let row = |v: &[f64]| Matrix::from_shape_vec((1, v.len()), v.to_vec()).unwrap();
    LatentVars { mean: g.input(row(mean)).unwrap(), std: g.input(row(std)).unwrap() }
}

#[test]
fn reparameterized_samples() {
    let m = model(0);
    let mean = [0.3, -1.2, 2.0, 0.0, 0.5, -0.1];
    let std = [0.4, 0.1, 0.9, 0.2, 0.3, 0.7];

    let mut g = Graph::new();
    let dist = latent(&mut g, &mean, &std);
    let z = m.sample_latent(&mut g, dist, &[0.0; DIM]).unwrap();
    assert_eq!(g.value(z).iter().copied().collect::<Vec<_>>(), mean.to_vec());

    let mut g = Graph::new();
    let dist = latent(&mut g, &mean, &[0.1; DIM]);
    let z = m.sample_latent(&mut g, dist, &[1.0; DIM]).unwrap();
    for (got, mu) in g.value(z).iter().zip(mean) {
        assert_eq!(*got, mu + 0.1);
    }

    // d sample / d mean = 1, d sample / d std = eps.
    let eps = [0.5, -1.0, 2.0, 0.0, 1.5, -0.3];
    let mut g = Graph::new();
    let dist = latent(&mut g, &mean, &std);
    let z = m.sample_latent(&mut g, dist, &eps).unwrap();
    let total = g.sum(z).unwrap();
    let grads = g.backward(total).unwrap();
    assert!(grads.get(dist.mean).unwrap().iter().all(|v| *v == 1.0));
    assert_eq!(grads.get(dist.std).unwrap().iter().copied().collect::<Vec<_>>(), eps.to_vec());

    let weights = Matrix::from_shape_fn((1, DIM), |(_, j)| 0.2 + 0.3 * j as f64);
    let err = grad_check(
        |g: &mut Graph, v: &[Var]| {
            let z = m.sample_latent(g, LatentVars { mean: v[0], std: v[1] }, &eps).map_err(|e| match e {
                rawnp::Error::Autodiff(a) => a,
                other => panic!("{other}"),
            })?;
            let z2 = g.square(z)?;
            let w = g.constant(weights.clone())?;
            let p = g.mul(z2, w)?;
            g.sum(p)
        },
        &[Matrix::from_shape_vec((1, DIM), mean.to_vec()).unwrap(), Matrix::from_shape_vec((1, DIM), std.to_vec()).unwrap()],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn sample_mean_converges_to_mu() {
    let m = model(0);
    let mean = [0.3, -1.2, 2.0, 0.0, 0.5, -0.1];
    let std = [0.4, 0.1, 0.9, 0.2, 0.3, 0.7];
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut acc = [0.0; DIM];
    for _ in 0..n {
        let eps: Vec<f64> = (0..DIM).map(|_| rng.sample(StandardNormal)).collect();
        let mut g = Graph::new();
        let dist = latent(&mut g, &mean, &std);
        let z = m.sample_latent(&mut g, dist, &eps).unwrap();
        for (a, v) in acc.iter_mut().zip(g.value(z).iter()) {
            *a += v;
        }
    }
    for j in 0..DIM {
        let tol = 3.0 * std[j] / (n as f64).sqrt();
        assert!((acc[j] / n as f64 - mean[j]).abs() <= tol, "coordinate {j}");
    }
}

#[test]
fn checkpoint_round_trip_and_shape_guard() {
    let mut m = model(3);
    m.disable_motifs();
    let ckpt = m.to_checkpoint(Default::default());
    let back = RawNp::from_checkpoint(&autodiff::Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap()).unwrap();
    assert_eq!(back.config, m.config);
    assert!(!back.motifs_enabled());
    for id in m.store.ids() {
        assert_eq!(back.store.value(id), m.store.value(id));
    }

    let mut bad = ckpt.clone();
    bad.metadata.insert("model.dim".into(), "7".into());
    assert!(RawNp::from_checkpoint(&bad).is_err());
}
