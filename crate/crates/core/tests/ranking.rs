mod support;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use segbench_core::ranking::{
    aggregate_rank, fill_penalties, leaderboard, per_case_metric_ranks, Cell, Leaderboard, Metric, MetricMatrix,
    MetricValues, PartialMetricMatrix, PenaltyPolicy, RankingError,
};
use support::{names, random_matrix, rng};

#[test]
fn weighted_mean_of_one_case() {
    // five algorithms on one case; alg00 ranks 1, 2, 3, 4, 5 on the five metrics
    let rows = [
        [0.95, 0.80, 30.0, 4000.0, 500.0],
        [0.90, 0.90, 10.0, 1000.0, 100.0],
        [0.85, 0.70, 20.0, 2000.0, 200.0],
        [0.80, 0.60, 40.0, 3000.0, 300.0],
        [0.75, 0.50, 50.0, 5000.0, 400.0],
    ];
    let m = MetricMatrix::new(names("alg", 5), names("case", 1), rows.map(MetricValues::from_array).to_vec()).unwrap();
    let rt = per_case_metric_ranks(&m).unwrap();
    let ranks: Vec<f64> = Metric::ALL.iter().map(|&mt| rt.rank(0, 0, mt)).collect();
    assert_eq!(ranks, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let lb = aggregate_rank(&rt);
    assert_eq!(lb.get("alg00").unwrap().aggregate_score, 2.625);
}

#[test]
fn three_algorithm_two_case_fixture() {
    // hand computation:
    // case 1 ranks  a: 1 1.5 1 2 3   b: 2 1.5 2 2 1   c: 3 3 3 2 2
    // case 2 ranks  a: 3 3 1 2 1     b: 1.5 2 2 1 2   c: 1.5 1 3 3 3
    // weighted sums a: 6 + 8.5, b: 7 + 7, c: 11 + 8.5; divided by 2 · 4
    let rows = [
        [0.9, 0.9, 10.0, 0.0, 300.0],
        [0.6, 0.7, 5.0, 1000.0, 10.0],
        [0.8, 0.9, 20.0, 0.0, 100.0],
        [0.85, 0.8, 50.0, 0.0, 20.0],
        [0.7, 0.5, 30.0, 0.0, 200.0],
        [0.85, 0.9, 500.0, 3000.0, 30.0],
    ];
    let m = MetricMatrix::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec!["c1".into(), "c2".into()],
        rows.map(MetricValues::from_array).to_vec(),
    )
    .unwrap();
    let lb = leaderboard(&m).unwrap();
    let got: Vec<(&str, f64, f64)> = lb
        .entries
        .iter()
        .map(|e| (e.algorithm.as_str(), e.aggregate_score, e.final_rank))
        .collect();
    assert_eq!(got, vec![("b", 1.75, 1.0), ("a", 1.8125, 2.0), ("c", 2.4375, 3.0)]);
}

#[test]
fn tie_fixture() {
    let rows = [[0.9, 0.5, 1.0, 0.0, 0.0], [0.9, 0.5, 1.0, 0.0, 0.0], [0.7, 0.5, 1.0, 0.0, 0.0]];
    let m = MetricMatrix::new(vec!["a0".into(), "a1".into(), "a2".into()], names("c", 1), rows.map(MetricValues::from_array).to_vec()).unwrap();
    let rt = per_case_metric_ranks(&m).unwrap();
    assert_eq!((0..3).map(|a| rt.rank(a, 0, Metric::Dsc)).collect::<Vec<_>>(), vec![1.5, 1.5, 3.0]);
    let lb = aggregate_rank(&rt);
    assert_eq!(lb.final_rank("a0"), Some(1.5));
    assert_eq!(lb.final_rank("a1"), Some(1.5));
    assert_eq!(lb.final_rank("a2"), Some(3.0));
}

#[test]
fn penalty_fill_changes_exactly_the_missing_cell() {
    let mut r = rng(8);
    let full = random_matrix(&mut r, 3, 4);
    let mut p = PartialMetricMatrix::new(full.algorithms().to_vec(), full.cases().to_vec()).unwrap();
    for (a, name) in full.algorithms().iter().enumerate() {
        for (c, case) in full.cases().iter().enumerate() {
            p.set(name, case, Cell::Measured(*full.value(a, c))).unwrap();
        }
    }
    assert_eq!(fill_penalties(&p, &PenaltyPolicy::default()).unwrap(), full);
    p.set("alg02", "case01", Cell::Stuck).unwrap();
    let filled = fill_penalties(&p, &PenaltyPolicy::default()).unwrap();
    let mut diffs = 0;
    for a in 0..3 {
        for c in 0..4 {
            if filled.value(a, c) != full.value(a, c) {
                diffs += 1;
                assert_eq!(filled.value(a, c).to_array(), [0.0, 0.0, 3600.0, 29_491_200.0, 360_000.0]);
            }
        }
    }
    assert_eq!(diffs, 1);
}

#[test]
fn nan_values_are_data_errors() {
    let mut v = MetricValues::PENALTY;
    v.time_s = f64::NAN;
    let err = MetricMatrix::new(names("a", 1), names("c", 1), vec![v]).unwrap_err();
    assert!(matches!(err, RankingError::Data(ref m) if m.contains("a0") && m.contains("c0")));
}

fn arb_matrix() -> impl Strategy<Value = MetricMatrix> {
    (any::<u64>(), 2usize..8, 1usize..12).prop_map(|(seed, a, c)| random_matrix(&mut rng(seed), a, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ranks_sum_to_triangular_number(m in arb_matrix()) {
        let rt = per_case_metric_ranks(&m).unwrap();
        let a = m.n_algorithms() as f64;
        for c in 0..m.n_cases() {
            for metric in Metric::ALL {
                let sum: f64 = (0..m.n_algorithms()).map(|k| rt.rank(k, c, metric)).sum();
                prop_assert_eq!(sum, a * (a + 1.0) / 2.0);
            }
        }
        let lb = aggregate_rank(&rt);
        for e in &lb.entries {
            prop_assert!(e.aggregate_score >= 1.0 && e.aggregate_score <= a);
        }
        let final_sum: f64 = lb.entries.iter().map(|e| e.final_rank).sum();
        prop_assert_eq!(final_sum, a * (a + 1.0) / 2.0);
    }

    #[test]
    fn monotone_transforms_do_not_change_the_leaderboard(m in arb_matrix()) {
        let base = leaderboard(&m).unwrap().to_json().unwrap();
        let cubed = m.map_metric(Metric::Dsc, |x| x * x * x).unwrap();
        prop_assert_eq!(&leaderboard(&cubed).unwrap().to_json().unwrap(), &base);
        let logged = m.map_metric(Metric::TimeS, |t| (1.0 + t).ln()).unwrap();
        prop_assert_eq!(&leaderboard(&logged).unwrap().to_json().unwrap(), &base);
    }

    #[test]
    fn row_order_does_not_matter(m in arb_matrix(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..m.n_algorithms()).collect();
        order.shuffle(&mut rng(seed));
        let shuffled = m.reorder_algorithms(&order).unwrap();
        prop_assert_eq!(leaderboard(&shuffled).unwrap(), leaderboard(&m).unwrap());
        let reloaded = MetricMatrix::from_csv(&shuffled.to_csv().unwrap()).unwrap();
        prop_assert_eq!(leaderboard(&reloaded).unwrap(), leaderboard(&m).unwrap());
    }

    #[test]
    fn a_uniformly_worst_dummy_keeps_the_order(m in arb_matrix()) {
        let before = leaderboard(&m).unwrap();
        let mut algorithms = m.algorithms().to_vec();
        algorithms.push("zz-dummy".into());
        let mut values = Vec::new();
        for a in 0..m.n_algorithms() {
            for c in 0..m.n_cases() {
                values.push(*m.value(a, c));
            }
        }
        let worst = MetricValues { dsc: 0.0, nsd: 0.0, time_s: 1e9, auc_gpu: 1e12, auc_cpu: 1e12 };
        values.extend(std::iter::repeat_n(worst, m.n_cases()));
        let with_dummy = MetricMatrix::new(algorithms, m.cases().to_vec(), values).unwrap();
        let after = leaderboard(&with_dummy).unwrap();
        let order = |lb: &Leaderboard| -> Vec<(f64, String)> {
            lb.entries.iter().filter(|e| e.algorithm != "zz-dummy").map(|e| (e.final_rank, e.algorithm.clone())).collect()
        };
        // ties may be broken only if they were ties before; compare pairwise order
        let b = order(&before);
        let a = order(&after);
        for (x, y) in b.iter().zip(b.iter().skip(1)) {
            let rx = a.iter().find(|e| e.1 == x.1).unwrap().0;
            let ry = a.iter().find(|e| e.1 == y.1).unwrap().0;
            if x.0 < y.0 { prop_assert!(rx < ry); } else { prop_assert_eq!(rx, ry); }
        }
    }

    #[test]
    fn csv_and_json_round_trip(m in arb_matrix()) {
        prop_assert_eq!(&MetricMatrix::from_csv(&m.to_csv().unwrap()).unwrap(), &m);
        let lb = leaderboard(&m).unwrap();
        prop_assert_eq!(&Leaderboard::from_csv(&lb.to_csv().unwrap()).unwrap(), &lb);
        prop_assert_eq!(&Leaderboard::from_json(&lb.to_json().unwrap()).unwrap(), &lb);
    }
}
