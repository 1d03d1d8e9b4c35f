mod common;

use std::sync::Arc;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use ugnn::autodiff::{grad_check, BoundParams, ParameterStore, RowMap, Tape, Tensor};
use ugnn::graph::CsrMatrix;
use ugnn::Result;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn store(entries: Vec<(&str, Array2<f64>)>) -> ParameterStore<f64> {
    let mut s = ParameterStore::new();
    for (name, v) in entries {
        s.insert(name, v).unwrap();
    }
    s
}

fn away_from_zero(mut a: Array2<f64>) -> Array2<f64> {
    a.mapv_inplace(|v| v + 0.1 * v.signum());
    a
}

// squared error against a fixed target turns any tensor into a scalar loss
fn to_loss(tape: &mut Tape<f64>, x: Tensor, target: &Array2<f64>) -> Result<Tensor> {
    let t = tape.constant(target.clone())?;
    tape.mse(x, t)
}

fn check<F>(f: F, params: &ParameterStore<f64>) -> f64
where
    F: Fn(&mut Tape<f64>, &BoundParams) -> Result<Tensor>,
{
    grad_check(f, params, STEP).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matmul_add_and_scale(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (m, k, n) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
        let p = store(vec![("a", gaussian(&mut r, m, k)), ("b", gaussian(&mut r, k, n)), ("c", gaussian(&mut r, 1, n))]);
        let target = gaussian(&mut r, m, n);
        let factor = r.random_range(-2.0..2.0);
        let err = check(|tape, b| {
            let ab = tape.matmul(b.get("a")?, b.get("b")?)?;
            let biased = tape.add(ab, b.get("c")?)?;
            let y = tape.scale(biased, factor)?;
            to_loss(tape, y, &target)
        }, &p);
        prop_assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn concat_and_slice(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rows = r.random_range(1..5);
        let p = store(vec![("a", gaussian(&mut r, rows, 3)), ("b", gaussian(&mut r, rows, 2))]);
        let target = gaussian(&mut r, rows, 3);
        let err = check(|tape, b| {
            let ab = tape.concat_cols(&[b.get("a")?, b.get("b")?])?;
            let mid = tape.slice_cols(ab, 1, 4)?;
            to_loss(tape, mid, &target)
        }, &p);
        prop_assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn activations(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = store(vec![("x", away_from_zero(gaussian(&mut r, 4, 3)))]);
        let target = gaussian(&mut r, 4, 3);
        let relu = check(|tape, b| {
            let y = tape.relu(b.get("x")?)?;
            to_loss(tape, y, &target)
        }, &p);
        let silu = check(|tape, b| {
            let y = tape.silu(b.get("x")?)?;
            to_loss(tape, y, &target)
        }, &p);
        prop_assert!(relu < TOL && silu < TOL, "relu {relu} silu {silu}");
    }

    #[test]
    fn layer_norm(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cols = r.random_range(2..6);
        let p = store(vec![
            ("x", gaussian(&mut r, 3, cols)),
            ("g", gaussian(&mut r, 1, cols)),
            ("b", gaussian(&mut r, 1, cols)),
        ]);
        let target = gaussian(&mut r, 3, cols);
        let err = check(|tape, b| {
            let y = tape.layer_norm(b.get("x")?, b.get("g")?, b.get("b")?)?;
            to_loss(tape, y, &target)
        }, &p);
        prop_assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn row_maps_and_sparse_products(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..8);
        let adj = random_adjacency(&mut r, n, 0.4);
        let csr = Arc::new(CsrMatrix::from_dense(adj.view()));
        let kept: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
        let gather = Arc::new(RowMap::gather(n, &kept).unwrap());
        let scatter = Arc::new(RowMap::scatter(n, &kept).unwrap());
        let p = store(vec![("x", gaussian(&mut r, n, 2))]);
        let target = gaussian(&mut r, n, 2);
        let err = check(|tape, b| {
            let sx = tape.sparse_matmul(&csr, b.get("x")?)?;
            let small = tape.row_select(sx, &gather)?;
            let back = tape.row_select(small, &scatter)?;
            let y = tape.sparse_matmul(&csr, back)?;
            to_loss(tape, y, &target)
        }, &p);
        prop_assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn reused_nodes_accumulate(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = store(vec![("w", gaussian(&mut r, 3, 3))]);
        let x = gaussian(&mut r, 4, 3);
        let target = gaussian(&mut r, 4, 3);
        let err = check(|tape, b| {
            let w = b.get("w")?;
            let xc = tape.constant(x.clone())?;
            let h = tape.matmul(xc, w)?;
            let h = tape.silu(h)?;
            let h2 = tape.matmul(h, w)?;
            let y = tape.add(h2, h)?;
            to_loss(tape, y, &target)
        }, &p);
        prop_assert!(err < TOL, "relative error {err}");
    }
}

#[test]
fn constants_receive_no_parameter_gradient() {
    let mut tape = Tape::<f64>::new();
    let p = store(vec![("w", Array2::from_elem((2, 2), 0.5))]);
    let bound = tape.bind(&p).unwrap();
    let c = tape.constant(Array2::eye(2)).unwrap();
    let y = tape.matmul(c, c).unwrap();
    let loss = to_loss(&mut tape, y, &Array2::zeros((2, 2))).unwrap();
    let grads = tape.backward(loss).unwrap().parameters();
    assert!(grads.get("w").unwrap().iter().all(|&g| g == 0.0));
    let _ = bound;
}
