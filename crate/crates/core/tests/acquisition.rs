mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{grid_model, grid_scores, observe};
use rlabo::acquisition::{candidate_set, maximize_af, ucb_value, AcquisitionSpec};
use rlabo::benchmarks::{BenchmarkKind, Bounds};
use rlabo::gp::{GpModel, ObservationSet};
use rlabo::rng;

#[test]
fn exploitation_of_a_single_point_matches_grid() {
    let bounds = Bounds::cube(-2.0, 2.0, 2).unwrap();
    let obs = ObservationSet::new(vec![bounds.center()], vec![5.0]).unwrap();
    let m = GpModel::fit(&obs, &bounds).unwrap();
    let spec = AcquisitionSpec::from_index(0).unwrap();
    let x = maximize_af(&m, spec, &bounds, &mut rng::stream(1, "af", &[]));
    let grid_best = (0..200 * 200)
        .map(|k| {
            let u = [(k / 200) as f64 / 199.0, (k % 200) as f64 / 199.0];
            m.posterior(&bounds.from_unit(&u)).0
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((m.posterior(&x).0 - grid_best).abs() < 1e-3);
}

#[test]
fn exploration_leaves_a_data_cluster() {
    let bounds = Bounds::cube(0.0, 10.0, 2).unwrap();
    let mut r = rng::stream(2, "cluster", &[]);
    let pts: Vec<Vec<f64>> = (0..8).map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)]).collect();
    let ys = pts.iter().map(|p| p[0] - p[1]).collect();
    let obs = ObservationSet::new(pts.clone(), ys).unwrap();
    let m = GpModel::fit(&obs, &bounds).unwrap();
    let x = maximize_af(&m, AcquisitionSpec::from_index(4).unwrap(), &bounds, &mut r);
    let c = [pts.iter().map(|p| p[0]).sum::<f64>() / 8.0, pts.iter().map(|p| p[1]).sum::<f64>() / 8.0];
    let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
    assert!(d >= 0.25 * bounds.diagonal(), "distance {d}");
}

#[test]
fn larger_weights_pick_more_uncertain_points() {
    let mut holds = 0;
    for j in 0..100u64 {
        let mut r = rng::stream(3, "ordering", &[j]);
        let kind = BenchmarkKind::ALL[j as usize % 5];
        let n = r.random_range(3..30);
        let (obs, bounds) = observe(kind, n, &mut r);
        let m = GpModel::fit(&obs, &bounds).unwrap();
        let (a, b) = loop {
            let a = r.random_range(0..4);
            let b = r.random_range(0..4);
            if a != b {
                break (a.min(b), a.max(b));
            }
        };
        let seed = r.random::<u64>();
        let xa = maximize_af(&m, AcquisitionSpec::from_index(a).unwrap(), &bounds, &mut rng::stream(seed, "p", &[]));
        let xb = maximize_af(&m, AcquisitionSpec::from_index(b).unwrap(), &bounds, &mut rng::stream(seed, "p", &[]));
        if m.posterior(&xb).1 >= m.posterior(&xa).1 - 1e-6 {
            holds += 1;
        }
    }
    assert!(holds >= 90, "ordering held on {holds} of 100 models");
}

#[test]
fn inner_optimizer_reaches_grid_optimum() {
    for kind in BenchmarkKind::ALL {
        for j in 0..2 {
            let m = grid_model(kind, j);
            let mut r = rng::stream(42, kind.name(), &[j]);
            for (spec, score) in candidate_set().iter().zip(grid_scores(&m, 128, &mut r)) {
                assert!(score >= 0.99, "{kind} fit {j} beta {}: {score}", spec.beta());
            }
        }
    }
}

#[test]
fn same_seed_same_point() {
    let mut r = rng::stream(4, "det", &[]);
    let (obs, bounds) = observe(BenchmarkKind::Schwefel, 12, &mut r);
    let m = GpModel::fit(&obs, &bounds).unwrap();
    for spec in candidate_set() {
        let a = maximize_af(&m, spec, &bounds, &mut rng::stream(9, "x", &[]));
        let b = maximize_af(&m, spec, &bounds, &mut rng::stream(9, "x", &[]));
        assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn ucb_is_monotone_in_mean_and_std(m in -1e3f64..1e3, s in 0.0f64..1e3, dm in 0.0f64..10.0, ds in 0.0f64..10.0, i in 0usize..5) {
        let spec = AcquisitionSpec::from_index(i).unwrap();
        let base = ucb_value(m, s, spec).unwrap();
        prop_assert!(ucb_value(m, s + ds, spec).unwrap() >= base);
        if i < 4 {
            prop_assert!(ucb_value(m + dm, s, spec).unwrap() >= base);
        } else {
            prop_assert_eq!(ucb_value(m + dm, s, spec).unwrap(), base);
        }
    }

    #[test]
    fn ucb_is_monotone_in_beta(m in -1e3f64..1e3, s in 0.0f64..1e3) {
        let vals: Vec<f64> = candidate_set()[..4].iter().map(|&c| ucb_value(m, s, c).unwrap()).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }
}
