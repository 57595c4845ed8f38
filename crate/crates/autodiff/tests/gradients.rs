use autodiff::nn::Mode;
use autodiff::{grad_check, Graph, GruCell, Matrix, Mlp, ParamStore, Result, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-1.5..1.5))
}

fn positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(0.2..2.0))
}

/// Contracts an arbitrary-shape output with fixed weights so every output
/// coordinate contributes a distinct amount to the scalar.
fn reduce(g: &mut Graph, v: Var) -> Result<Var> {
    let (r, c) = g.shape(v);
    let w = Matrix::from_shape_fn((r, c), |(i, j)| 0.3 + 0.17 * i as f64 - 0.11 * j as f64);
    let w = g.constant(w)?;
    let p = g.mul(v, w)?;
    g.sum(p)
}

type Case = (&'static str, Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Matrix>>, fn(&mut Graph, &[Var]) -> Result<Var>);

fn cases() -> Vec<Case> {
    vec![
        ("matmul", Box::new(|r| vec![random(r, 3, 4), random(r, 4, 2)]), |g, v| {
            let y = g.matmul(v[0], v[1])?;
            reduce(g, y)
        }),
        ("add", Box::new(|r| vec![random(r, 2, 3), random(r, 2, 3)]), |g, v| {
            let y = g.add(v[0], v[1])?;
            reduce(g, y)
        }),
        ("add_row", Box::new(|r| vec![random(r, 3, 3), random(r, 1, 3)]), |g, v| {
            let y = g.add_row(v[0], v[1])?;
            reduce(g, y)
        }),
        ("sub", Box::new(|r| vec![random(r, 2, 3), random(r, 2, 3)]), |g, v| {
            let y = g.sub(v[0], v[1])?;
            reduce(g, y)
        }),
        ("mul", Box::new(|r| vec![random(r, 2, 3), random(r, 2, 3)]), |g, v| {
            let y = g.mul(v[0], v[1])?;
            reduce(g, y)
        }),
        ("div", Box::new(|r| vec![random(r, 2, 3), positive(r, 2, 3)]), |g, v| {
            let y = g.div(v[0], v[1])?;
            reduce(g, y)
        }),
        ("scale", Box::new(|r| vec![random(r, 2, 2)]), |g, v| {
            let y = g.scale(v[0], -2.5)?;
            reduce(g, y)
        }),
        ("add_scalar", Box::new(|r| vec![random(r, 2, 2)]), |g, v| {
            let y = g.add_scalar(v[0], 0.7)?;
            let y = g.square(y)?;
            reduce(g, y)
        }),
        ("concat", Box::new(|r| vec![random(r, 2, 2), random(r, 2, 3), random(r, 2, 1)]), |g, v| {
            let y = g.concat(v)?;
            reduce(g, y)
        }),
        ("gather", Box::new(|r| vec![random(r, 4, 3)]), |g, v| {
            let y = g.gather(v[0], &[2, 0, 2, 3])?;
            reduce(g, y)
        }),
        ("mean_rows", Box::new(|r| vec![random(r, 5, 3)]), |g, v| {
            let y = g.mean_rows(v[0])?;
            reduce(g, y)
        }),
        ("block_vecmat", Box::new(|r| vec![random(r, 9, 3), random(r, 4, 3)]), |g, v| {
            let y = g.block_vecmat(v[0], &[2, 0, 2, 1], v[1])?;
            reduce(g, y)
        }),
        ("relu", Box::new(|r| vec![random(r, 3, 3)]), |g, v| {
            let y = g.relu(v[0])?;
            reduce(g, y)
        }),
        ("tanh", Box::new(|r| vec![random(r, 3, 3)]), |g, v| {
            let y = g.tanh(v[0])?;
            reduce(g, y)
        }),
        ("sigmoid", Box::new(|r| vec![random(r, 3, 3)]), |g, v| {
            let y = g.sigmoid(v[0])?;
            reduce(g, y)
        }),
        ("exp", Box::new(|r| vec![random(r, 2, 3)]), |g, v| {
            let y = g.exp(v[0])?;
            reduce(g, y)
        }),
        ("ln", Box::new(|r| vec![positive(r, 2, 3)]), |g, v| {
            let y = g.ln(v[0])?;
            reduce(g, y)
        }),
        ("square", Box::new(|r| vec![random(r, 2, 3)]), |g, v| {
            let y = g.square(v[0])?;
            reduce(g, y)
        }),
        ("clamp", Box::new(|r| vec![random(r, 3, 3)]), |g, v| {
            let y = g.clamp(v[0], -1.0, 1.0)?;
            reduce(g, y)
        }),
        ("row_norm", Box::new(|r| vec![random(r, 3, 4)]), |g, v| {
            let y = g.row_norm(v[0])?;
            reduce(g, y)
        }),
        ("sum", Box::new(|r| vec![random(r, 2, 3)]), |g, v| {
            let y = g.square(v[0])?;
            g.sum(y)
        }),
        ("mean", Box::new(|r| vec![random(r, 2, 3)]), |g, v| {
            let y = g.square(v[0])?;
            g.mean(y)
        }),
    ]
}

#[test]
fn every_primitive_passes_grad_check_at_ten_points() {
    for (name, make, f) in cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xD1FF);
        for point in 0..10 {
            let inputs = make(&mut rng);
            let err = grad_check(f, &inputs, EPS).unwrap();
            assert!(err < TOL, "{name} point {point}: relative error {err:e}");
        }
    }
}

#[test]
fn mlp_and_dropout_eval_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", 4, 6, 3, &mut rng);
    for _ in 0..10 {
        let x = random(&mut rng, 2, 4);
        let params: Vec<Matrix> = mlp.params().iter().map(|p| store.value(*p).clone()).collect();
        let mut inputs = vec![x];
        inputs.extend(params);
        let err = grad_check(
            |g, v| {
                // MLP equations applied to the probed leaves.
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let h = g.matmul(v[0], v[1])?;
                let h = g.add_row(h, v[2])?;
                let h = g.relu(h)?;
                let h = g.dropout(h, 0.3, false, &mut rng)?;
                let o = g.matmul(h, v[3])?;
                let o = g.add_row(o, v[4])?;
                reduce(g, o)
            },
            &inputs,
            EPS,
        )
        .unwrap();
        assert!(err < TOL, "{err:e}");
    }

    // The layer object and the hand-written equations agree.
    let x = random(&mut rng, 2, 4);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let mut mode = Mode {
        train: false,
        dropout: 0.3,
        rng: &mut rng,
    };
    let out = mlp.forward(&mut g, &store, xv, &mut mode).unwrap();
    let expected = (x.dot(store.value(mlp.w1)) + store.value(mlp.b1))
        .mapv(|v| v.max(0.0))
        .dot(store.value(mlp.w2))
        + store.value(mlp.b2);
    assert_eq!(g.value(out), &expected);
}

#[test]
fn gru_ten_step_unroll_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
    let xs: Vec<Matrix> = (0..10).map(|_| random(&mut rng, 2, 3)).collect();
    let h0 = random(&mut rng, 2, 4);
    let mut inputs = xs.clone();
    inputs.push(h0);
    let param_ids = cell.params();
    inputs.extend(param_ids.iter().map(|p| store.value(*p).clone()));

    let err = grad_check(
        |g, v| {
            // Leaves 11.. are the cell parameters in GruCell::params() order.
            let unrolled_params: Vec<Var> = v[11..].to_vec();
            let step = |g: &mut Graph, x: Var, h: Var| -> Result<Var> {
                let p = &unrolled_params;
                let lin = |g: &mut Graph, w: Var, b: Var, u: Var| -> Result<Var> {
                    let xw = g.matmul(x, w)?;
                    let xw = g.add_row(xw, b)?;
                    let hu = g.matmul(h, u)?;
                    g.add(xw, hu)
                };
                let z = lin(g, p[0], p[6], p[3])?;
                let z = g.sigmoid(z)?;
                let r = lin(g, p[1], p[7], p[4])?;
                let r = g.sigmoid(r)?;
                let xn = g.matmul(x, p[2])?;
                let xn = g.add_row(xn, p[8])?;
                let hn = g.matmul(h, p[5])?;
                let hn = g.add_row(hn, p[9])?;
                let rn = g.mul(r, hn)?;
                let n = g.add(xn, rn)?;
                let n = g.tanh(n)?;
                let keep = g.one_minus(z)?;
                let a = g.mul(keep, n)?;
                let b = g.mul(z, h)?;
                g.add(a, b)
            };
            let mut h = v[10];
            for x in &v[..10] {
                h = step(g, *x, h)?;
            }
            reduce(g, h)
        },
        &inputs,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "{err:e}");

    // The hand-written step above mirrors GruCell exactly.
    let manual = grad_check(
        |g, v| {
            let h = cell.unroll(g, &store, &v[..10], v[10])?;
            reduce(g, h)
        },
        &inputs[..11],
        EPS,
    )
    .unwrap();
    assert!(manual < TOL, "{manual:e}");
}

#[test]
fn gru_cell_parameters_receive_checked_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
    let xs: Vec<Matrix> = (0..10).map(|_| random(&mut rng, 1, 3)).collect();

    let loss_at = |store: &ParamStore| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone()).unwrap()).collect();
        let h0 = g.constant(Matrix::zeros((1, 4))).unwrap();
        let h = cell.unroll(&mut g, store, &vars, h0).unwrap();
        let l = reduce(&mut g, h).unwrap();
        g.scalar(l)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone()).unwrap()).collect();
    let h0 = g.constant(Matrix::zeros((1, 4))).unwrap();
    let h = cell.unroll(&mut g, &store, &vars, h0).unwrap();
    let l = reduce(&mut g, h).unwrap();
    let grads = g.backward(l).unwrap();
    let analytic: Vec<_> = grads.params().into_iter().map(|(id, m)| (id, m.clone())).collect();
    assert_eq!(analytic.len(), cell.params().len());

    let mut worst = 0.0f64;
    for (id, grad) in analytic {
        for idx in 0..grad.len() {
            let (r, c) = (idx / grad.ncols(), idx % grad.ncols());
            let orig = store.value(id)[[r, c]];
            store.value_mut(id)[[r, c]] = orig + EPS;
            let up = loss_at(&store);
            store.value_mut(id)[[r, c]] = orig - EPS;
            let down = loss_at(&store);
            store.value_mut(id)[[r, c]] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            worst = worst.max(autodiff::gradcheck::relative_error(grad[[r, c]], numeric));
        }
    }
    assert!(worst < TOL, "{worst:e}");
}

#[test]
fn forward_and_updates_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", 3, 5, 2, &mut rng);
        let mut adam = autodiff::Adam::new(Default::default());
        let x = random(&mut rng, 4, 3);
        for _ in 0..5 {
            let mut g = Graph::new();
            let xv = g.constant(x.clone()).unwrap();
            let mut mode = Mode {
                train: true,
                dropout: 0.3,
                rng: &mut rng,
            };
            let y = mlp.forward(&mut g, &store, xv, &mut mode).unwrap();
            let sq = g.square(y).unwrap();
            let l = g.sum(sq).unwrap();
            let grads = g.backward(l).unwrap();
            adam.step(&mut store, &grads).unwrap();
        }
        store.ids().map(|id| store.value(id).clone()).collect::<Vec<_>>()
    };
    let a = run();
    let b = run();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(
            x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

proptest! {
    #[test]
    fn quadratic_gradient_is_exact(values in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
        let n = values.len();
        let x = Matrix::from_shape_vec((1, n), values).unwrap();
        let err = grad_check(|g, v| { let s = g.square(v[0])?; g.sum(s) }, &[x], EPS).unwrap();
        prop_assert!(err < 1e-6);
    }

    #[test]
    fn dropout_off_is_identity(values in proptest::collection::vec(-5.0f64..5.0, 1..16), rate in 0.0f64..0.9) {
        let n = values.len();
        let x = Matrix::from_shape_vec((1, n), values).unwrap();
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = g.input(x.clone()).unwrap();
        let y = g.dropout(v, rate, false, &mut rng).unwrap();
        prop_assert_eq!(g.value(y), &x);
    }
}
