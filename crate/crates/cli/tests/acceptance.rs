//! One test per acceptance criterion. Each prints a single `PASS` line
//! (visible with `--nocapture`); a failing criterion fails its test.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use segbench_core::harness::{CaseOutcome, EvaluationRun, VolumeReport};
use segbench_core::metrics::{dsc, evaluate_case, nsd, surface_overlap, ToleranceTable};
use segbench_core::profiler::{
    auc_cpu, auc_gpu, run_and_profile, Invocation, MockSampler, ResourceTrace, RunResult, RunStatus,
    NOMINAL_CADENCE_S,
};
use segbench_core::ranking::{
    aggregate_rank, fill_penalties, leaderboard, per_case_metric_ranks, Cell, Leaderboard, Metric, MetricMatrix,
    MetricValues, PartialMetricMatrix, PenaltyPolicy,
};
use segbench_core::stats::{
    bootstrap_rankings, kendall_tau, wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonMethod,
};
use segbench_core::volume::{load_volume, to_canonical_ras, write_volume, OrganId};
use segbench_core::LabelVolume;
use support::*;

fn pass(criterion: &str) {
    println!("PASS {criterion}");
}

#[test]
fn acc_01_metric_oracle_equivalence() {
    let started = Instant::now();
    let mut r = rng(2024);
    for i in 0..200 {
        let dims = [r.random_range(1..=16), r.random_range(1..=16), r.random_range(1..=16)];
        let spacing = [r.random_range(0.2..4.0), r.random_range(0.2..4.0), r.random_range(0.2..4.0)];
        let tau = r.random_range(0.0..=5.0);
        let g = random_mask(&mut r, dims);
        let s = if i % 10 == 0 { g.clone() } else { random_mask(&mut r, dims) };
        let o = surface_overlap(&g, &s, spacing, tau).unwrap();
        assert_eq!(
            (o.gt_within, o.gt_boundary, o.pred_within, o.pred_boundary),
            oracle_surface_counts(&g, &s, spacing, tau),
            "pair {i}"
        );
        let (twice_inter, total) = oracle_dice_counts(&g, &s);
        let fast_dsc = dsc(&g, &s).unwrap();
        if total > 0 {
            assert!((fast_dsc - twice_inter as f64 / total as f64).abs() <= 1e-12, "pair {i}");
        } else {
            assert_eq!(fast_dsc, 1.0);
        }
        assert!((nsd(&g, &s, spacing, tau).unwrap() - oracle_nsd(&g, &s, spacing, tau)).abs() <= 1e-12, "pair {i}");
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "{secs} s");
    pass(&format!("metric oracle equivalence (200 pairs, {secs:.2} s)"));
}

#[test]
fn acc_02_edge_conventions() {
    let tol = ToleranceTable::uniform(2.0).unwrap();
    let gt = phantom(&mut rng(3), 32, [0.8, 0.8, 2.5]);
    let empty = LabelVolume::with_spacing(gt.dims(), gt.spacing(), vec![0; gt.len()]).unwrap();
    let identity = evaluate_case(&gt, &gt, &tol).unwrap();
    let pred_empty = evaluate_case(&gt, &empty, &tol).unwrap();
    let gt_empty = evaluate_case(&empty, &gt, &tol).unwrap();
    let both_empty = evaluate_case(&empty, &empty, &tol).unwrap();
    for organ in OrganId::ALL {
        let pair = |a: &segbench_core::metrics::CaseAccuracy| (a.organ(organ).dsc, a.organ(organ).nsd);
        assert_eq!(pair(&identity), (1.0, 1.0), "{organ}");
        assert_eq!(pair(&pred_empty), (0.0, 0.0), "{organ}");
        assert_eq!(pair(&gt_empty), (0.0, 0.0), "{organ}");
        assert_eq!(pair(&both_empty), (1.0, 1.0), "{organ}");
    }
    pass("edge conventions for all 13 organs");
}

#[test]
fn acc_03_penalty_constants() {
    let expected = [0.0, 0.0, 3600.0, 29_491_200.0, 360_000.0];
    // a real run that overruns its budget
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("case.nii.gz");
    std::fs::write(&input, b"").unwrap();
    let mut sampler = MockSampler::constant(8000.0, 100.0).unwrap();
    let inv = Invocation::new("sh", ["-c", "sleep 30"]);
    let r = run_and_profile(&inv, &input, &dir.path().join("out"), 1.0, &mut sampler, None).unwrap();
    assert_eq!(r.status, RunStatus::Stuck);
    assert_eq!([r.time_s, r.auc_gpu, r.auc_cpu], expected[2..]);
    // the same triple from any trace, and the full row in the matrix
    let trace = ResourceTrace::new(Vec::new(), NOMINAL_CADENCE_S, 0.5).unwrap();
    let s = RunResult::from_trace(RunStatus::Stuck, trace, None);
    assert_eq!([s.time_s, s.auc_gpu, s.auc_cpu], expected[2..]);
    assert_eq!(MetricValues::PENALTY.to_array(), expected);
    let mut p = PartialMetricMatrix::new(vec!["a".into()], vec!["c".into()]).unwrap();
    p.set("a", "c", Cell::Stuck).unwrap();
    let m = fill_penalties(&p, &PenaltyPolicy::default()).unwrap();
    assert_eq!(m.value(0, 0).to_array(), expected);
    pass("stuck penalty (0, 0, 3600, 29491200, 360000)");
}

#[test]
fn acc_04_auc_reductions() {
    let flat = MockSampler::constant(2048.0, 0.0).unwrap().trace(12.3, NOMINAL_CADENCE_S).unwrap();
    assert_eq!(auc_gpu(&flat).value, 0.0);
    let gpu = MockSampler::constant(3072.0, 0.0).unwrap().trace(10.0, NOMINAL_CADENCE_S).unwrap();
    assert!((auc_gpu(&gpu).value - 10240.0).abs() <= 1e-9, "{}", auc_gpu(&gpu).value);
    let cpu = MockSampler::constant(0.0, 50.0).unwrap().trace(20.0, NOMINAL_CADENCE_S).unwrap();
    assert!((auc_cpu(&cpu).value - 1000.0).abs() <= 1e-9, "{}", auc_cpu(&cpu).value);
    pass("AUC reductions 0 / 10240 / 1000");
}

#[test]
fn acc_05_ranking_fixtures() {
    // one case, five algorithms; alg00 places 1st to 5th on the five metrics
    let rows = [
        [0.95, 0.80, 30.0, 4000.0, 500.0],
        [0.90, 0.90, 10.0, 1000.0, 100.0],
        [0.85, 0.70, 20.0, 2000.0, 200.0],
        [0.80, 0.60, 40.0, 3000.0, 300.0],
        [0.75, 0.50, 50.0, 5000.0, 400.0],
    ];
    let m = MetricMatrix::new(names("alg", 5), names("case", 1), rows.map(MetricValues::from_array).to_vec()).unwrap();
    let rt = per_case_metric_ranks(&m).unwrap();
    assert_eq!(Metric::ALL.map(|mt| rt.rank(0, 0, mt)), [1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(aggregate_rank(&rt).get("alg00").unwrap().aggregate_score, 2.625);

    let tied = [[0.9, 0.5, 1.0, 0.0, 0.0], [0.9, 0.5, 1.0, 0.0, 0.0], [0.7, 0.5, 1.0, 0.0, 0.0]];
    let m = MetricMatrix::new(names("t", 3), names("case", 1), tied.map(MetricValues::from_array).to_vec()).unwrap();
    let rt = per_case_metric_ranks(&m).unwrap();
    assert_eq!([0, 1, 2].map(|a| rt.rank(a, 0, Metric::Dsc)), [1.5, 1.5, 3.0]);

    let mut r = rng(55);
    for _ in 0..100 {
        let n_alg = r.random_range(1..=10);
        let n_cases = r.random_range(1..=20);
        let m = random_matrix(&mut r, n_alg, n_cases);
        let rt = per_case_metric_ranks(&m).unwrap();
        let a = n_alg as f64;
        for c in 0..m.n_cases() {
            for mt in Metric::ALL {
                let sum: f64 = (0..n_alg).map(|k| rt.rank(k, c, mt)).sum();
                assert_eq!(sum, a * (a + 1.0) / 2.0);
            }
        }
    }
    pass("ranking fixtures (2.625, 1.5/1.5/3, rank sums on 100 matrices)");
}

#[test]
fn acc_06_monotone_transform_invariance() {
    let mut r = rng(66);
    for _ in 0..20 {
        let (n_alg, n_cases) = (r.random_range(2..=8), r.random_range(1..=30));
        let m = random_matrix(&mut r, n_alg, n_cases);
        let before = leaderboard(&m).unwrap();
        let after = leaderboard(&m.map_metric(Metric::Dsc, |x| x * x * x).unwrap()).unwrap();
        assert_eq!(before.to_json().unwrap(), after.to_json().unwrap());
        assert_eq!(before.to_csv().unwrap(), after.to_csv().unwrap());
    }
    pass("x^3 on DSC leaves the leaderboard byte-identical");
}

#[test]
fn acc_07_kendall_tau() {
    let a = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
    assert_eq!(kendall_tau(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
    assert_eq!(kendall_tau(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap(), 2.0 / 3.0);
    let mut r = rng(77);
    for _ in 0..100 {
        let n = r.random_range(2..=50);
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut y = x.clone();
        y.shuffle(&mut r);
        assert!((kendall_tau(&x, &y).unwrap() - oracle_kendall(&x, &y)).abs() < 1e-12);
    }
    pass("Kendall tau (1, -1, 2/3, 100 permutations)");
}

#[test]
fn acc_08_wilcoxon_exactness() {
    let mut r = rng(88);
    let mut checked = 0;
    while checked < 200 {
        let n = r.random_range(5..=12);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0..10) as f64 / 2.0).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(0..10) as f64 / 2.0).collect();
        if a.iter().zip(&b).filter(|(x, y)| x != y).count() < 5 {
            continue;
        }
        let (_, p) = oracle_wilcoxon(&a, &b);
        let got = wilcoxon_signed_rank(&a, &b).unwrap().p_value;
        assert!((got - p).abs() <= 1e-12, "{got} vs {p}");
        checked += 1;
    }
    for _ in 0..50 {
        let a: Vec<f64> = (0..25).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + r.random_range(-0.5..0.6)).collect();
        let exact = wilcoxon_signed_rank_with(&a, &b, WilcoxonMethod::Exact).unwrap().p_value;
        let normal = wilcoxon_signed_rank_with(&a, &b, WilcoxonMethod::Normal).unwrap().p_value;
        assert!((exact - normal).abs() < 0.01, "{exact} vs {normal}");
    }
    pass("Wilcoxon exact vs enumeration, exact vs normal at n = 25");
}

#[test]
fn acc_09_bootstrap_stability() {
    let m = graded_matrix(&mut rng(99), 5, 40);
    let started = Instant::now();
    let report = bootstrap_rankings(&m, 1000, 20220901).unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert!(report.overall_summary.median >= 0.99, "{}", report.overall_summary.median);
    assert_eq!(report.distribution("alg00").unwrap().fraction_at(1.0), 1.0);
    let again = bootstrap_rankings(&m, 1000, 20220901).unwrap();
    assert_eq!(again.to_json().unwrap(), report.to_json().unwrap());
    assert!(secs < 30.0, "{secs} s");
    pass(&format!(
        "bootstrap stability (median tau {:.4}, {secs:.2} s)",
        report.overall_summary.median
    ));
}

struct MiniChallenge {
    root: PathBuf,
    manifest: PathBuf,
    labels: PathBuf,
}

fn mini_challenge(root: &Path, n_cases: usize) -> MiniChallenge {
    let images = root.join("images");
    let labels = root.join("labels");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::create_dir_all(&labels).unwrap();
    let mut r = rng(2022);
    let mut manifest = String::from("#!tolerances: tol.txt\ncase_id,image,label,sex\n");
    for i in 0..n_cases {
        let id = format!("case{i:02}");
        let vol = phantom(&mut r, 32, [0.9, 0.9, 2.0]);
        // the image content is irrelevant to the mock algorithms
        write_volume(&vol, images.join(format!("{id}.nii.gz"))).unwrap();
        write_volume(&vol, labels.join(format!("{id}.nii.gz"))).unwrap();
        manifest.push_str(&format!("{id},images/{id}.nii.gz,labels/{id}.nii.gz,{}\n", ["F", "M"][i % 2]));
    }
    std::fs::write(root.join("tol.txt"), ToleranceTable::uniform(1.0).unwrap().to_config_string()).unwrap();
    std::fs::write(root.join("manifest.csv"), manifest).unwrap();
    MiniChallenge {
        root: root.to_path_buf(),
        manifest: root.join("manifest.csv"),
        labels,
    }
}

fn segbench(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_segbench"))
        .args(args)
        .env("SEGBENCH_SAMPLER", "mock")
        .env_remove("SEGBENCH_MOCK_TRACE")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "segbench {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_challenge(ch: &MiniChallenge, tag: &str) -> (Leaderboard, String) {
    let out = ch.root.join(tag);
    let mock = env!("CARGO_BIN_EXE_segbench-mock-algo");
    let labels = ch.labels.to_str().unwrap();
    for mode in ["identity", "dilate", "crash"] {
        segbench(&[
            "evaluate",
            "--manifest",
            ch.manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--name",
            mode,
            "--",
            mock,
            mode,
            "--labels",
            labels,
        ]);
    }
    let runs: Vec<String> = ["identity", "dilate", "crash"]
        .iter()
        .map(|m| out.join(m).to_str().unwrap().to_string())
        .collect();
    let rank_dir = out.join("rank");
    let mut args = vec!["rank", "--out", rank_dir.to_str().unwrap(), "--n-boot", "200"];
    args.extend(runs.iter().map(String::as_str));
    segbench(&args);
    let json = std::fs::read_to_string(rank_dir.join("leaderboard.json")).unwrap();
    (Leaderboard::from_json(&json).unwrap(), std::fs::read_to_string(rank_dir.join("stability.json")).unwrap())
}

#[test]
fn acc_10_end_to_end_mini_challenge() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let ch = mini_challenge(tmp.path(), 20);
    let (lb, stability) = run_challenge(&ch, "first");
    let order: Vec<(&str, f64)> = lb.entries.iter().map(|e| (e.algorithm.as_str(), e.final_rank)).collect();
    assert_eq!(order, vec![("identity", 1.0), ("dilate", 2.0), ("crash", 3.0)]);

    let identity = EvaluationRun::load(&ch.root.join("first/identity")).unwrap();
    assert!(identity.cases.iter().all(|c: &CaseOutcome| c.values.dsc == 1.0 && c.values.nsd == 1.0));
    let crash = EvaluationRun::load(&ch.root.join("first/crash")).unwrap();
    assert!(crash.cases.iter().all(|c| c.status() == RunStatus::Failed));

    let vol_dir = ch.root.join("first/volumes");
    segbench(&["volumes", "--run", ch.root.join("first/identity").to_str().unwrap(), "--out", vol_dir.to_str().unwrap()]);
    let report = VolumeReport::from_json(&std::fs::read_to_string(vol_dir.join("volumes.json")).unwrap()).unwrap();
    for organ in OrganId::ALL {
        let o = report.organ(organ);
        assert_eq!(o.pairs.len(), 20, "{organ}");
        let r = o.pearson_r.unwrap_or_else(|| panic!("{organ}: {:?}", o.notice));
        assert!((r - 1.0).abs() < 1e-12, "{organ}: r = {r}");
    }

    let sub_dir = ch.root.join("first/subgroup");
    segbench(&[
        "subgroup",
        "--manifest",
        ch.manifest.to_str().unwrap(),
        "--run",
        ch.root.join("first/dilate").to_str().unwrap(),
        "--key",
        "sex",
        "--out",
        sub_dir.to_str().unwrap(),
    ]);
    assert!(sub_dir.join("subgroup_sex.csv").is_file());

    // a second full pass gives the same leaderboard order and bootstrap ranks
    let (lb2, stability2) = run_challenge(&ch, "second");
    let order2: Vec<(&str, f64)> = lb2.entries.iter().map(|e| (e.algorithm.as_str(), e.final_rank)).collect();
    assert_eq!(order2, order);
    let ranks = |s: &str| {
        segbench_core::stats::BootstrapReport::from_json(s)
            .unwrap()
            .rank_distribution
            .into_iter()
            .map(|d| (d.algorithm, d.ranks))
            .collect::<Vec<_>>()
    };
    assert_eq!(ranks(&stability), ranks(&stability2));

    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 300.0, "{secs} s");
    pass(&format!("end-to-end mini challenge (3 algorithms x 20 cases, {secs:.1} s)"));
}

#[test]
fn acc_11_nifti_round_trip_and_reorientation() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(111);
    let mut lps = 0;
    for i in 0..100 {
        let vol = random_label_volume(&mut r);
        let path = dir.path().join(if i % 2 == 0 { "v.nii.gz" } else { "v.nii" });
        write_volume(&vol, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back.dims(), vol.dims());
        assert_eq!(back.voxels(), vol.voxels(), "volume {i}");
        assert_same_world_content(&vol, &to_canonical_ras(&vol).unwrap());
        if vol.affine()[0][0] < 0.0 {
            lps += 1;
        }
    }
    assert!(lps > 10, "too few LPS fixtures: {lps}");
    // hand-built asymmetric LPS fixture
    let dims = [5, 3, 4];
    let spacing = [0.8, 1.7, 3.0];
    let voxels: Vec<u8> = (0..60).map(|i| ((i * 7 + i / 5) % 14) as u8).collect();
    let src = LabelVolume::new(dims, spacing, lps_affine(spacing, [40.0, -12.0, 5.5]), voxels).unwrap();
    assert_same_world_content(&src, &to_canonical_ras(&src).unwrap());
    pass(&format!("NIfTI round trip (100 volumes, {lps} LPS) and LPS to RAS"));
}
