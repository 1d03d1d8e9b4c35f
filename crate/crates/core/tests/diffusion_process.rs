mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use ugnn::autodiff::ParameterStore;
use ugnn::diffusion::{
    draw_noise, evaluate_loss, forward_sample, loss_with_noise, sample_windows, sample_windows_with_ids, standard_normal,
    Example, NoiseDraw, NoiseSchedule, Objective,
};
use ugnn::graph::GraphShift;
use ugnn::model::{Activation, ConvView, Normalization, UGnn, UGnnConfig};

fn small_model(n: usize, seed: u64) -> (UGnn<f64>, ParameterStore<f64>) {
    let mut r = rng(seed);
    let adj = random_adjacency(&mut r, n, 0.5);
    let cfg = UGnnConfig {
        depth: 2,
        layers_per_block: 1,
        taps: vec![2],
        stride: 1,
        widths: vec![8, 4, 2],
        node_counts: UGnnConfig::node_counts_from_ratios(n, &[1.0, 0.6]),
        activation: Activation::Silu,
        normalization: Normalization::Layer,
        conv_view: ConvView::ZeroPad,
        conditioning_width: 1,
        target_width: 2,
    };
    let model = UGnn::with_degree_selection(cfg, GraphShift::from_adjacency(adj.view(), true).unwrap()).unwrap();
    let params = model.init_params(&mut r);
    (model, params)
}

#[test]
fn forward_marginals_match_closed_form() {
    let s = NoiseSchedule::<f64>::cosine(500).unwrap();
    let x0 = Array2::from_shape_vec((1, 3), vec![1.5, -0.5, 0.0]).unwrap();
    let mut r = rng(3);
    let draws = 20_000;
    for &t in &[1usize, 60, 250, 420, 500] {
        let ab = s.alpha_bar(t).unwrap();
        let mut sum = Array2::<f64>::zeros((1, 3));
        let mut sq = Array2::<f64>::zeros((1, 3));
        for _ in 0..draws {
            let eps = standard_normal(&mut r, 1, 3);
            let x = forward_sample(&x0, t, &eps, &s).unwrap();
            sum += &x;
            sq += &x.mapv(|v| v * v);
        }
        let n = draws as f64;
        let var = 1.0 - ab;
        for c in 0..3 {
            let mean = sum[[0, c]] / n;
            let emp_var = sq[[0, c]] / n - mean * mean;
            assert!((mean - ab.sqrt() * x0[[0, c]]).abs() < 4.0 * (var / n).sqrt(), "t={t} mean {mean}");
            assert!((emp_var - var).abs() < 4.0 * var * (2.0 / n).sqrt(), "t={t} var {emp_var}");
        }
    }
    assert!(s.alpha_bar(500).unwrap() < 1e-3);
}

#[test]
fn zero_predictor_has_unit_eps_loss() {
    let s = NoiseSchedule::<f64>::cosine(100).unwrap();
    let x0s: Vec<Array2<f64>> = (0..200).map(|i| Array2::from_elem((5, 2), i as f64 * 0.01)).collect();
    let u = Array2::zeros((5, 1));
    let batch: Vec<Example<f64>> = x0s.iter().map(|x0| Example { x0, u: &u }).collect();
    let noise = draw_noise(&batch, &s, &mut rng(1));
    let loss = evaluate_loss(&ZeroDenoiser { n: 5, f: 2 }, &ParameterStore::new(), &batch, &noise, &s, Objective::EpsPred).unwrap();
    // 2000 chi-square(1) draws averaged: sd ≈ 0.032
    assert!((loss - 1.0).abs() < 0.13, "loss {loss}");
}

#[test]
fn oracle_beats_zero_predictor() {
    let s = NoiseSchedule::<f64>::cosine(100).unwrap();
    let mean = Array2::from_shape_vec((2, 1), vec![1.0, -1.0]).unwrap();
    let var = Array2::from_elem((2, 1), 0.1);
    let oracle = GaussianOracle::new(mean.clone(), var.clone(), &s);
    let mut r = rng(9);
    let x0s: Vec<Array2<f64>> = (0..500).map(|_| &mean + &(standard_normal::<f64, _>(&mut r, 2, 1) * 0.1f64.sqrt())).collect();
    let u = Array2::zeros((2, 1));
    let batch: Vec<Example<f64>> = x0s.iter().map(|x0| Example { x0, u: &u }).collect();
    let noise = draw_noise(&batch, &s, &mut r);
    let p = ParameterStore::new();
    let best = evaluate_loss(&oracle, &p, &batch, &noise, &s, Objective::EpsPred).unwrap();
    let zero = evaluate_loss(&ZeroDenoiser { n: 2, f: 1 }, &p, &batch, &noise, &s, Objective::EpsPred).unwrap();
    assert!(best < 0.8 * zero, "oracle {best} zero {zero}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loss_ignores_batch_order(seed in any::<u64>(), objective in prop_oneof![Just(Objective::EpsPred), Just(Objective::X0Pred)]) {
        let n = 5;
        let (model, params) = small_model(n, seed);
        let s = NoiseSchedule::<f64>::cosine(50).unwrap();
        let mut r = rng(seed ^ 1);
        let m = r.random_range(2..6);
        let x0s: Vec<Array2<f64>> = (0..m).map(|_| gaussian(&mut r, n, 2)).collect();
        let us: Vec<Array2<f64>> = (0..m).map(|_| gaussian(&mut r, n, 1)).collect();
        let batch: Vec<Example<f64>> = x0s.iter().zip(&us).map(|(x0, u)| Example { x0, u }).collect();
        let noise = draw_noise(&batch, &s, &mut r);
        let (l1, g1) = loss_with_noise(&model, &params, &batch, &noise, &s, objective).unwrap();
        let rev_b: Vec<Example<f64>> = batch.iter().rev().copied().collect();
        let rev_n: Vec<NoiseDraw<f64>> = noise.iter().rev().cloned().collect();
        let (l2, g2) = loss_with_noise(&model, &params, &rev_b, &rev_n, &s, objective).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-12);
        for (name, g) in g1.iter() {
            let other = g2.get(name).unwrap();
            prop_assert!(max_abs_diff(g, other) < 1e-10);
        }
    }
}

#[test]
fn analytic_denoiser_recovers_gaussian_target() {
    let s = NoiseSchedule::<f64>::cosine(200).unwrap();
    let mean = Array2::from_shape_vec((3, 1), vec![1.0, -0.5, 0.0]).unwrap();
    let var = Array2::from_shape_vec((3, 1), vec![0.1, 1.0, 2.0]).unwrap();
    let oracle = GaussianOracle::new(mean.clone(), var.clone(), &s);
    let u = Array2::zeros((3, 1));
    let n_traj = 3000;
    let out = sample_windows(&oracle, &ParameterStore::new(), &[u], &s, Objective::EpsPred, n_traj, 5, 256).unwrap();
    let trajs = &out[0];
    let n = n_traj as f64;
    for i in 0..3 {
        let m = trajs.iter().map(|x| x[[i, 0]]).sum::<f64>() / n;
        let v = trajs.iter().map(|x| (x[[i, 0]] - m).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((m - mean[[i, 0]]).abs() < 4.0 * (var[[i, 0]] / n).sqrt(), "node {i} mean {m}");
        assert!((v / var[[i, 0]] - 1.0).abs() < 0.1, "node {i} var {v}");
    }
}

#[test]
fn sampling_is_independent_of_batching() {
    let (model, params) = small_model(4, 2);
    let s = NoiseSchedule::<f64>::cosine(10).unwrap();
    let mut r = rng(8);
    let windows: Vec<Array2<f64>> = (0..3).map(|_| gaussian(&mut r, 4, 1)).collect();
    let run = |batch: usize| sample_windows(&model, &params, &windows, &s, Objective::EpsPred, 5, 77, batch).unwrap();
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(64));
    assert_ne!(a[0][0], a[0][1]);
    assert_ne!(a[0][0], a[1][0]);

    let alone = sample_windows_with_ids(&model, &params, &windows[2..], &[2], &s, Objective::EpsPred, 5, 77, 3).unwrap();
    assert_eq!(alone[0], a[2]);
    let other_seed = sample_windows(&model, &params, &windows, &s, Objective::EpsPred, 5, 78, 64).unwrap();
    assert_ne!(other_seed, a);
}

#[test]
fn sampling_rejects_bad_conditioning() {
    let (model, params) = small_model(4, 2);
    let s = NoiseSchedule::<f64>::cosine(10).unwrap();
    let bad = vec![Array2::zeros((3, 1))];
    assert!(sample_windows(&model, &params, &bad, &s, Objective::EpsPred, 2, 0, 8).is_err());
    let ok = vec![Array2::zeros((4, 1))];
    assert!(sample_windows(&model, &params, &ok, &s, Objective::EpsPred, 0, 0, 8).is_err());
}
