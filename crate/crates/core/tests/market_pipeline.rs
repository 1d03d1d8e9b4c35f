mod common;

use common::*;
use ndarray::{s, Array2, Array3, Axis};
use proptest::prelude::*;
use rand::Rng;
use ugnn::graph::GraphShift;
use ugnn::market::{
    build_fundamentals_graph, chunk_split, day_features, log_returns, prices_from_returns, synth_fundamentals, synth_market,
    synth_returns, windows_for, Feature, FundamentalsTable, PriceTable, Standardizer, SynthProcess,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn returns_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (days, n) = (r.random_range(2..40), r.random_range(1..6));
        let prices = Array2::from_shape_fn((days, n), |_| r.random_range(1.0..500.0));
        let ret = log_returns(&prices, &[], &[]).unwrap();
        prop_assert_eq!(ret.dim(), (days - 1, n));
        let back = prices_from_returns(&prices.row(0).to_vec(), &ret);
        for (a, b) in back.iter().zip(prices.iter()) {
            prop_assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn splits_partition_chunks_and_windows_stay_inside(seed in any::<u64>()) {
        let mut r = rng(seed);
        let chunk_len = r.random_range(10..40);
        let n_days = chunk_len * r.random_range(3..30) + r.random_range(0..chunk_len);
        let split = chunk_split(n_days, chunk_len, (0.8, 0.1, 0.1), seed).unwrap();
        let n_chunks = n_days / chunk_len;
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n_chunks).collect::<Vec<_>>());
        prop_assert_eq!(split.val.len(), (0.1 * n_chunks as f64 + 1e-9).floor() as usize);

        let returns = Array2::from_shape_fn((n_days, 2), |(d, i)| (d * 2 + i) as f64);
        let features = returns.clone().insert_axis(Axis(2));
        let (t_p, t_h) = (r.random_range(1..6), r.random_range(1..6));
        for set in [&split.train, &split.val, &split.test] {
            for w in windows_for(returns.view(), features.view(), &split, set, t_p, t_h, 1).unwrap() {
                let c = &split.chunks[w.origin.chunk];
                prop_assert!(set.contains(&w.origin.chunk));
                prop_assert!(c.start <= w.origin.start && w.origin.start + t_p + t_h <= c.end);
                // the past block sees days start..start+t_p, the target the next t_h
                prop_assert_eq!(w.past[[0, t_p - 1]], returns[[w.origin.start + t_p - 1, 0]]);
                prop_assert_eq!(w.future[[1, 0]], returns[[w.origin.start + t_p, 1]]);
            }
        }
    }

    #[test]
    fn fundamentals_graph_follows_stock_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(3..12);
        let fund = synth_fundamentals(n, 5, 3, seed).unwrap();
        let adj = build_fundamentals_graph(&fund).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let shuffled = FundamentalsTable {
            tickers: perm.iter().map(|&i| fund.tickers[i].clone()).collect(),
            names: fund.names.clone(),
            indicators: Array2::from_shape_fn(fund.indicators.dim(), |(i, j)| fund.indicators[[perm[i], j]]),
        };
        let padj = build_fundamentals_graph(&shuffled).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((padj[[i, j]] - adj[[perm[i], perm[j]]]).abs() < 1e-12);
            }
            prop_assert_eq!(adj[[i, i]], 0.0);
        }
        prop_assert!(adj.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(&adj, &adj.t().to_owned());
    }
}

#[test]
fn fundamentals_graph_ignores_column_units() {
    let fund = synth_fundamentals(8, 4, 2, 3).unwrap();
    let adj = build_fundamentals_graph(&fund).unwrap();
    let mut rescaled = fund.clone();
    rescaled.indicators.column_mut(0).mapv_inplace(|v| 1e6 * v - 42.0);
    let adj2 = build_fundamentals_graph(&rescaled).unwrap();
    assert!(max_abs_diff(&adj, &adj2) < 1e-9);
    // a constant column is dropped rather than poisoning the correlations
    let mut with_const = fund.clone();
    with_const.indicators.column_mut(1).fill(7.0);
    let mut without = fund.clone();
    without.indicators = ndarray::concatenate![Axis(1), fund.indicators.slice(s![.., 0..1]), fund.indicators.slice(s![.., 2..])];
    without.names.remove(1);
    let a = build_fundamentals_graph(&with_const).unwrap();
    let b = build_fundamentals_graph(&without).unwrap();
    assert!(max_abs_diff(&a, &b) < 1e-12);
}

#[test]
fn standardizer_sees_only_training_days() {
    let mut r = rng(2);
    let data = Array3::from_shape_fn((120, 3, 2), |_| r.random_range(-1.0..1.0));
    let split = chunk_split(120, 20, (0.6, 0.2, 0.2), 1).unwrap();
    let days = split.train_days();
    let a = Standardizer::fit(data.view(), &days).unwrap();
    let mut poisoned = data.clone();
    for &c in split.val.iter().chain(&split.test) {
        poisoned.slice_mut(s![split.chunks[c].clone(), .., ..]).fill(1e9);
    }
    let b = Standardizer::fit(poisoned.view(), &days).unwrap();
    assert_eq!(a, b);
    let x = Array2::from_shape_fn((3, 6), |(i, c)| (i + c) as f64);
    let back = a.destandardize(&a.standardize(&x).unwrap()).unwrap();
    assert!(max_abs_diff(&back, &x) < 1e-12);
}

#[test]
fn graph_var_has_the_intended_lag_one_coefficient() {
    let mut r = rng(17);
    let adj = random_adjacency(&mut r, 6, 0.5);
    let shift = GraphShift::from_adjacency(adj.view(), true).unwrap();
    let (rho, mu) = (0.4, 0.0005);
    let ret = synth_returns(6, 100_000, Some(&shift), SynthProcess::GraphVar { rho, sigma: 0.02, mu }, &mut r).unwrap();
    let dev = ret.mapv(|v| v - mu);
    let s = shift.to_dense();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..dev.nrows() {
        let lag = s.dot(&dev.row(k - 1));
        num += lag.dot(&dev.row(k));
        den += lag.dot(&lag);
    }
    let coef = num / den * shift.spectral_norm();
    assert!((coef - rho).abs() < 0.05, "lag-1 coefficient {coef}");
}

#[test]
fn synthetic_market_is_reproducible_and_round_trips_through_csv() {
    let t = synth_market(4, 30, None, SynthProcess::Grw { mu: 0.0, sigma: 0.01 }, 5).unwrap();
    assert_eq!(t, synth_market(4, 30, None, SynthProcess::Grw { mu: 0.0, sigma: 0.01 }, 5).unwrap());
    assert_eq!(t.prices.row(0).to_vec(), vec![100.0; 4]);
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    assert_eq!(PriceTable::read_csv(buf.as_slice()).unwrap(), t);

    let f = synth_fundamentals(4, 3, 2, 1).unwrap();
    let mut buf = Vec::new();
    f.write_csv(&mut buf).unwrap();
    assert_eq!(FundamentalsTable::read_csv(buf.as_slice()).unwrap(), f);
}

#[test]
fn day_features_line_up_with_returns() {
    let t = synth_market(3, 25, None, SynthProcess::Grw { mu: 0.0, sigma: 0.01 }, 2).unwrap();
    let (ret, feats) = day_features(&t, &[Feature::LogReturn, Feature::LogVolume]).unwrap();
    assert_eq!(ret.dim(), (24, 3));
    assert_eq!(feats.dim(), (24, 3, 2));
    assert_eq!(feats.slice(s![.., .., 0]), ret);
    let vol = t.volumes.as_ref().unwrap();
    assert!((feats[[0, 1, 1]] - (1.0 + vol[[1, 1]]).ln()).abs() < 1e-12);
}

#[test]
fn long_csv_with_gaps_is_filled() {
    let text = "date,ticker,adj_close\n\
                2020-01-01,A,10\n\
                2020-01-02,A,11\n2020-01-02,B,5\n\
                2020-01-03,B,6\n\
                2020-01-06,A,12\n2020-01-06,B,7\n";
    let t = PriceTable::read_csv(text.as_bytes()).unwrap();
    assert_eq!(t.dates, vec!["2020-01-02", "2020-01-03", "2020-01-06"]);
    assert_eq!(t.prices.column(0).to_vec(), vec![11.0, 11.0, 12.0]);
    assert!(PriceTable::read_csv("date,ticker,adj_close\n2020-01-01,A,1\n2020-01-01,A,2\n".as_bytes()).is_err());
    let bad = "date,ticker,adj_close\n2020-01-01,A,1\n2020-01-02,A,-3\n";
    let t = PriceTable::read_csv(bad.as_bytes()).unwrap();
    let err = log_returns(&t.prices, &t.tickers, &t.dates).unwrap_err().to_string();
    assert!(err.contains('A') && err.contains("2020-01-02"), "{err}");
}
