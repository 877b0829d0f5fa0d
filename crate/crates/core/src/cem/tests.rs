use ndarray::{Array1, ArrayView2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::nn::OutputActivation;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn neg_sq_norm(a: ArrayView2<f64>) -> Result<Array1<f64>> {
    Ok(a.rows().into_iter().map(|r| -r.dot(&r)).collect())
}

fn cfg(d: usize, iterations: usize, samples: usize, elites: usize) -> CemConfig {
    CemConfig {
        iterations,
        samples,
        elites,
        action_dim: d,
        variance_floor: 1e-6,
    }
}

#[test]
fn finds_origin_of_negative_square() {
    for seed in 0..20 {
        let sol = cem_argmax(neg_sq_norm, &cfg(1, 4, 64, 6), &mut rng(seed)).unwrap();
        assert!(sol.action[0].abs() < 0.05, "seed {seed}: {:?}", sol.action);
    }
}

#[test]
fn constant_score_refit_is_unbiased() {
    let c = cfg(1, 1, 64, 6);
    let means: Vec<f64> = (0..1000)
        .map(|seed| {
            let (_, trace) =
                cem_argmax_traced(|a| Ok(Array1::from_elem(a.nrows(), 3.0)), &c, &mut rng(seed))
                    .unwrap();
            trace[0].proposal.mean[0]
        })
        .collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    let se = (var / means.len() as f64).sqrt();
    assert!(m.abs() < 3.0 * se, "mean {m}, se {se}");
    // k of n standard normals: variance of their mean is 1/k
    assert!((var - 1.0 / 6.0).abs() < 0.03, "var {var}");
}

#[test]
fn matches_grid_optimum_on_frozen_critic() {
    let state = [0.2, -0.7, 1.1];
    let net = DenseNet::new(&[5, 32, 32, 1], OutputActivation::Identity, &mut rng(77)).unwrap();
    let score = |a: ArrayView2<f64>| {
        let s = Array2::from_shape_fn((a.nrows(), 3), |(_, j)| state[j]);
        net.q_values(s.view(), a)
    };
    let grid: Vec<f64> = (0..201).map(|i| -1.0 + 2.0 * i as f64 / 200.0).collect();
    let mut pts = Array2::zeros((201 * 201, 2));
    for (i, x) in grid.iter().enumerate() {
        for (j, y) in grid.iter().enumerate() {
            pts[[i * 201 + j, 0]] = *x;
            pts[[i * 201 + j, 1]] = *y;
        }
    }
    let vals = score(pts.view()).unwrap();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let sol = cem_argmax(score, &cfg(2, 2, 64, 6), &mut rng(5)).unwrap();
    assert!(sol.value >= max - 1e-2 * (max - min), "{} vs {max}", sol.value);
}

#[test]
fn policy_finds_interior_maximizer() {
    let q = FnQ(|_s: ArrayView2<f64>, a: ArrayView2<f64>| a.column(0).mapv(|x| -(x - 0.5).powi(2)));
    for seed in 0..10 {
        let a = cem_policy(&[1.0, 2.0], &q, &CemConfig::new(1), &mut rng(seed)).unwrap();
        assert!((a[0] - 0.5).abs() < 0.05, "seed {seed}: {a:?}");
    }
}

#[test]
fn single_iteration_without_selection_returns_raw_argmax() {
    let c = cfg(2, 1, 16, 16);
    let score = |a: ArrayView2<f64>| -> Result<Array1<f64>> {
        Ok(a.rows().into_iter().map(|r| r[0] - 2.0 * r[1] * r[1]).collect())
    };
    let sol = cem_argmax(score, &c, &mut rng(9)).unwrap();
    // replay the sample stream: row-major standard normals, then tanh
    let mut r = rng(9);
    let mut best = (f64::NEG_INFINITY, vec![]);
    for _ in 0..16 {
        let a: Vec<f64> = (0..2)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                z.tanh()
            })
            .collect();
        let s = a[0] - 2.0 * a[1] * a[1];
        if s > best.0 {
            best = (s, a);
        }
    }
    assert_eq!(sol.value, best.0);
    assert_eq!(sol.action, best.1);
}

#[test]
fn same_seed_same_action() {
    let net = DenseNet::new(&[4, 16, 16, 1], OutputActivation::Identity, &mut rng(1)).unwrap();
    let c = CemConfig::new(2);
    let a = cem_policy(&[0.1, 0.2], &net, &c, &mut rng(42)).unwrap();
    let b = cem_policy(&[0.1, 0.2], &net, &c, &mut rng(42)).unwrap();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn rejects_more_elites_than_samples() {
    let err = cem_argmax(neg_sq_norm, &cfg(1, 2, 4, 5), &mut rng(0)).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "cem_elites"));
}

#[test]
fn non_finite_score_names_action() {
    let score = |a: ArrayView2<f64>| -> Result<Array1<f64>> {
        Ok(a.rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| if i == 3 { f64::NAN } else { r[0] })
            .collect())
    };
    match cem_argmax(score, &cfg(1, 2, 8, 2), &mut rng(0)) {
        Err(Error::NonFiniteScore { index, action, .. }) => {
            assert_eq!(index, 3);
            assert_eq!(action.len(), 1);
        }
        other => panic!("expected NonFiniteScore, got {other:?}"),
    }
}

#[test]
fn exactly_one_score_call_per_iteration() {
    for iterations in [1, 2, 4, 7] {
        let mut calls = 0;
        cem_argmax_batch(
            5,
            |a| {
                calls += 1;
                assert_eq!(a.nrows(), 5 * 64);
                neg_sq_norm(a)
            },
            &cfg(3, iterations, 64, 6),
            &mut rng(1),
        )
        .unwrap();
        assert_eq!(calls, iterations);
    }
}

#[test]
fn batch_policy_solves_each_state() {
    // optimum at a = state[0]
    let q = FnQ(|s: ArrayView2<f64>, a: ArrayView2<f64>| {
        (&a.column(0) - &s.column(0)).mapv(|x| -x * x)
    });
    let states = ndarray::array![[-0.6], [0.0], [0.4], [0.8]];
    let c = cfg(1, 4, 64, 6);
    let acts = cem_policy_batch(states.view(), &q, &c, &mut rng(3)).unwrap();
    for (s, a) in states.column(0).iter().zip(acts.column(0)) {
        assert!((s - a).abs() < 0.05, "{s} vs {a}");
    }
}

#[test]
fn variance_floor_holds_after_collapse() {
    // all samples tie; elites are the first k, whose variance can be tiny
    let c = CemConfig {
        variance_floor: 0.5,
        ..cfg(2, 3, 8, 1)
    };
    let (_, trace) =
        cem_argmax_traced(|a| Ok(Array1::zeros(a.nrows())), &c, &mut rng(0)).unwrap();
    for t in trace {
        assert!(t.proposal.variance.iter().all(|&v| v >= 0.5));
    }
}

#[test]
fn elite_quality_rarely_regresses_on_concave_scores() {
    let c = cfg(2, 4, 64, 6);
    let mut ok = 0;
    let runs = 200;
    for seed in 0..runs {
        let target = [0.3 * ((seed % 7) as f64 - 3.0) / 3.0, -0.4];
        let score = |a: ArrayView2<f64>| -> Result<Array1<f64>> {
            Ok(a.rows()
                .into_iter()
                .map(|r| -(r[0] - target[0]).powi(2) - (r[1] - target[1]).powi(2))
                .collect())
        };
        let (_, trace) = cem_argmax_traced(score, &c, &mut rng(seed)).unwrap();
        // per-iteration noise allowance: 1e-3 of the O(1) score scale
        if trace
            .windows(2)
            .all(|w| w[1].best_elite_score >= w[0].best_elite_score - 1e-3)
        {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.95 * runs as f64, "{ok}/{runs}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_actions_stay_in_open_box(seed in 0u64..u64::MAX, d in 1usize..4, shift in -50.0f64..50.0) {
        // a linear score pushes every elite toward one corner
        let score = |a: ArrayView2<f64>| -> Result<Array1<f64>> {
            Ok(a.rows().into_iter().map(|r| shift * r.sum()).collect())
        };
        let sol = cem_argmax(score, &cfg(d, 6, 32, 4), &mut rng(seed)).unwrap();
        prop_assert!(sol.action.iter().all(|x| x.abs() < 1.0));
    }
}
