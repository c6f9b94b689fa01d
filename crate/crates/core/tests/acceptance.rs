//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynchain::dataset::{save_csv, MultiLabelDataset};
use dynchain::dynamic_order::{local_counts_in, local_f1, FuzzyNeighborhood, ValidationCache};
use dynchain::ensemble::{aggregate_votes, BaseModel, EnsembleConfig, Ordering, Tunable};
use dynchain::harness::{run_on, AlgorithmSpec, ExperimentResult, ExperimentSpec};
use dynchain::knn_chain::{predict_chain_knn, KnnChainModel};
use dynchain::metrics::evaluate;
use dynchain::nb_chain::{plain_views, predict_chain_nb, train_nb};
use dynchain::preprocess::{select_features, undersample, LabelView};
use dynchain::stats::{friedman_nemenyi, holm_adjust, wilcoxon_signed_rank, ComparisonMatrix};
use dynchain::{LabelPermutation, RngSeed};

use common::{extended_nb_chain, full_sort_knn_chain, synth};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(
        elapsed < limit,
        format!("took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()),
    )
}

/// Per-label views after undersampling and feature selection, as an ensemble member builds them.
fn conditioned_views(ds: &MultiLabelDataset, max_ir: f64, cap: usize, seed: u64) -> (Vec<LabelView>, Vec<dynchain::preprocess::FeatureSubset>) {
    let s = RngSeed(seed);
    let views: Vec<LabelView> = (0..ds.n_labels())
        .map(|i| undersample(&LabelView::from_dataset(ds, i).unwrap(), max_ir, s.derive(i as u64)).unwrap())
        .collect();
    let subsets = views
        .iter()
        .map(|v| select_features(v, cap, s.derive(100 + v.label as u64)).unwrap())
        .collect();
    (views, subsets)
}

fn reorder_equivalence() -> Outcome {
    let start = Instant::now();
    let train = synth(200, 6, 5, 0.7, 0.1, 101);
    let queries = synth(25, 6, 5, 0.7, 0.1, 102);
    let perms = LabelPermutation::all(5);
    check(perms.len() == 120, format!("{} permutations", perms.len()))?;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (views, subsets) in [plain_views(&train), conditioned_views(&train, 1.5, 3, 7)] {
        let model = train_nb(&train, &views, &subsets, 1.0).map_err(|e| e.to_string())?;
        for pi in &perms {
            for q in 0..queries.n_rows() {
                let x = queries.feature_row(q);
                let (oracle_lp, oracle_hard) = extended_nb_chain(&train, &views, &subsets, pi, x);
                let lp = model.chain_log_posteriors(x, pi).map_err(|e| e.to_string())?;
                let pred = predict_chain_nb(&model, x, pi).map_err(|e| e.to_string())?;
                check(pred.hard == oracle_hard, format!("order {pi}, query {q}: hard labels differ"))?;
                for (a, b) in lp.iter().zip(&oracle_lp) {
                    for y in 0..2 {
                        worst = worst.max((a[y] - b[y]).abs());
                    }
                }
                compared += 1;
            }
        }
    }
    check(worst <= 1e-9, format!("max log-posterior gap {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("{compared} chains, max log-posterior gap {worst:.1e}"))
}

fn knn_oracle() -> Outcome {
    let start = Instant::now();
    let train = synth(50, 3, 4, 0.6, 0.1, 201);
    let queries = synth(20, 3, 4, 0.6, 0.1, 202);
    let mut compared = 0;
    for r in [1, 3, 5, 8] {
        let model = KnnChainModel::new(train.clone(), r).map_err(|e| e.to_string())?;
        for pi in LabelPermutation::all(4) {
            for q in 0..queries.n_rows() {
                let x = queries.feature_row(q);
                let p = predict_chain_knn(&model, x, &pi).map_err(|e| e.to_string())?;
                let (hard, scores) = full_sort_knn_chain(&model, &pi, x);
                check(p.hard == hard && p.scores == scores, format!("r={r}, order {pi}, query {q} differs"))?;
                compared += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{compared} chains match over 24 orders"))
}

fn estimator_budget() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let mut cases = 0;
    for l in 1..=8usize {
        for _ in 0..3 {
            let d = rng.gen_range(1..12);
            let ds = synth(rng.gen_range(30..90), d, l, 0.5, 0.1, rng.gen());
            let (views, subsets) = conditioned_views(&ds, 20.0, rng.gen_range(1..=d), rng.gen());
            let model = train_nb(&ds, &views, &subsets, 1.0).map_err(|e| e.to_string())?;
            let sum_d: usize = subsets.iter().map(|s| s.len()).sum();
            check(
                model.valid_conditional_count() == 2 * l * (l - 1),
                format!("L={l}: {} conditionals", model.valid_conditional_count()),
            )?;
            check(model.prior_entry_count() == 2 * l, format!("L={l}: {} priors", model.prior_entry_count()))?;
            check(
                model.gaussian_count() == 2 * sum_d,
                format!("L={l}: {} Gaussians for Σd={sum_d}", model.gaussian_count()),
            )?;
            check(
                model.valid_conditional_count() + model.prior_entry_count() == 2 * l * l,
                "label estimators != 2L²",
            )?;
            cases += 1;
        }
    }
    Ok(format!("{cases} models, L = 1..8"))
}

fn crisp_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..40);
        let d = rng.gen_range(1..4);
        let l = rng.gen_range(1..6);
        let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
        let y = Array2::from_shape_fn((n, l), |_| u8::from(rng.gen_bool(0.4)));
        let h = Array2::from_shape_fn((n, l), |_| u8::from(rng.gen_bool(0.5)));
        let ds = MultiLabelDataset::from_arrays(x, y.clone()).map_err(|e| e.to_string())?;
        let cache = ValidationCache::new(ds, h.clone()).map_err(|e| e.to_string())?;
        let query: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tiny = FuzzyNeighborhood::around(&cache, &query, 1e-300).map_err(|e| e.to_string())?;
        check(tiny.memberships.iter().all(|&m| m == 1.0), "β→0⁺ memberships are not 1")?;
        for nbhd in [FuzzyNeighborhood::crisp(n), tiny] {
            for label in 0..l {
                let c = local_counts_in(&cache, label, &nbhd).map_err(|e| e.to_string())?;
                let got = local_f1(c.tp, c.fp, c.fn_);
                let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
                for i in 0..n {
                    match (y[[i, label]], h[[i, label]]) {
                        (1, 1) => tp += 1,
                        (0, 1) => fp += 1,
                        (1, 0) => fn_ += 1,
                        _ => {}
                    }
                }
                let den = 2 * tp + fp + fn_;
                let want = if den == 0 { 0.0 } else { f64::from(2 * tp) / f64::from(den) };
                worst = worst.max((got - want).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("max gap {worst:e}"))?;
    Ok(format!("100 fixtures, max gap {worst:.1e}"))
}

type Q = Ratio<i64>;

fn q_fdr(tp: i64, fp: i64) -> Q {
    if tp + fp == 0 {
        Q::from_integer(0)
    } else {
        Q::new(fp, tp + fp)
    }
}

fn q_fnr(tp: i64, fn_: i64) -> Q {
    if tp + fn_ == 0 {
        Q::from_integer(0)
    } else {
        Q::new(fn_, tp + fn_)
    }
}

fn q_f1_loss(tp: i64, fp: i64, fn_: i64) -> Q {
    if 2 * tp + fp + fn_ == 0 {
        Q::from_integer(0)
    } else {
        Q::from_integer(1) - Q::new(2 * tp, 2 * tp + fp + fn_)
    }
}

/// The eleven criteria computed with exact rationals from raw tallies.
fn rational_metrics(truth: &Array2<u8>, pred: &Array2<u8>) -> [Q; 11] {
    let (n, l) = truth.dim();
    let zero = Q::from_integer(0);
    let (mut wrong, mut rows_wrong) = (0i64, 0i64);
    let (mut ex_fdr, mut ex_fnr, mut ex_f1) = (zero, zero, zero);
    let mut per_label = vec![(0i64, 0i64, 0i64); l];
    for i in 0..n {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for j in 0..l {
            let (t, p) = (truth[[i, j]], pred[[i, j]]);
            if t == 1 && p == 1 {
                tp += 1;
                per_label[j].0 += 1;
            }
            if t == 0 && p == 1 {
                fp += 1;
                per_label[j].1 += 1;
            }
            if t == 1 && p == 0 {
                fn_ += 1;
                per_label[j].2 += 1;
            }
        }
        wrong += fp + fn_;
        if fp + fn_ > 0 {
            rows_wrong += 1;
        }
        ex_fdr += q_fdr(tp, fp);
        ex_fnr += q_fnr(tp, fn_);
        ex_f1 += q_f1_loss(tp, fp, fn_);
    }
    let (ni, li) = (n as i64, l as i64);
    let mut m = [zero; 3];
    let (mut stp, mut sfp, mut sfn) = (0, 0, 0);
    for &(tp, fp, fn_) in &per_label {
        m[0] += q_fdr(tp, fp);
        m[1] += q_fnr(tp, fn_);
        m[2] += q_f1_loss(tp, fp, fn_);
        stp += tp;
        sfp += fp;
        sfn += fn_;
    }
    [
        Q::new(wrong, ni * li),
        Q::new(rows_wrong, ni),
        ex_fdr / ni,
        ex_fnr / ni,
        ex_f1 / ni,
        m[0] / li,
        m[1] / li,
        m[2] / li,
        q_fdr(stp, sfp),
        q_fnr(stp, sfn),
        q_f1_loss(stp, sfp, sfn),
    ]
}

fn to_f64(q: &Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..25);
        let l = rng.gen_range(1..9);
        let density = rng.gen_range(0.05..0.95);
        let truth = Array2::from_shape_fn((n, l), |_| u8::from(rng.gen_bool(density)));
        let pred = Array2::from_shape_fn((n, l), |_| u8::from(rng.gen_bool(density)));
        let report = evaluate(&truth, &pred).map_err(|e| e.to_string())?;
        for (got, want) in report.values().iter().zip(rational_metrics(&truth, &pred).iter()) {
            worst = worst.max((got - to_f64(want)).abs());
        }
    }
    check(worst <= 1e-12, format!("max gap {worst:e}"))?;
    let t = ndarray::array![[1u8, 0, 1]];
    let p = ndarray::array![[1u8, 1, 1]];
    let r = evaluate(&t, &p).map_err(|e| e.to_string())?;
    let expected = [1.0 / 3.0, 1.0, 1.0 / 3.0, 0.0, 0.2];
    let got = [r.hamming, r.zero_one, r.ex_fdr, r.ex_fnr, r.ex_f1_loss];
    for (g, e) in got.iter().zip(&expected) {
        check((g - e).abs() <= 1e-12, format!("hand example: {got:?} vs {expected:?}"))?;
    }
    Ok(format!("1000 fixtures, max gap {worst:.1e}; hand example ok"))
}

fn vote_threshold() -> Outcome {
    for positives in 0..=20usize {
        let votes: Vec<Vec<u8>> = (0..20).map(|m| vec![u8::from(m < positives)]).collect();
        let p = aggregate_votes(&votes).map_err(|e| e.to_string())?;
        let want = u8::from(positives > 10);
        check(p.hard[0] == want, format!("{positives}/20 votes gave {}", p.hard[0]))?;
        check(p.scores[0] == positives as f64 / 20.0, "vote fraction")?;
    }
    Ok("0..=20 votes: relevant iff ≥ 11".into())
}

fn directional_experiment() -> ExperimentResult {
    let datasets: Vec<(String, MultiLabelDataset)> = (0..20)
        .map(|s| (format!("synth{s:02}"), synth(600, 10, 6, 0.8, 0.1, 7000 + s)))
        .collect();
    let spec = ExperimentSpec {
        datasets: Vec::new(),
        algorithms: vec![
            AlgorithmSpec::new(BaseModel::NaiveBayes, Ordering::Dynamic),
            AlgorithmSpec::new(BaseModel::NaiveBayes, Ordering::Random),
            AlgorithmSpec::new(BaseModel::NaiveBayes, Ordering::Fixed(None)),
            AlgorithmSpec::new(BaseModel::NaiveBayes, Ordering::BinaryRelevance),
        ],
        folds: 5,
        config: EnsembleConfig {
            k: 20,
            beta: Tunable::Tune,
            ..EnsembleConfig::default()
        },
        out: None,
        seed: RngSeed(2024),
        alpha: 0.1,
    };
    run_on(&spec, &datasets).expect("experiment runs")
}

fn directional(result: &ExperimentResult, criterion: &str, better: &str, worse: &str, elapsed: Duration) -> Outcome {
    check(result.failed_cells() == 0, format!("{} failed cells", result.failed_cells()))?;
    let m = result.comparison_matrix(criterion).map_err(|e| e.to_string())?;
    let row = |name: &str| -> Result<Vec<f64>, String> {
        let i = m
            .algorithm_names
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| format!("no algorithm {name}"))?;
        Ok(m.scores.row(i).to_vec())
    };
    let (a, b) = (row(better)?, row(worse)?);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&a), mean(&b));
    let p = wilcoxon_signed_rank(&a, &b).map(|w| format!("{:.4}", w.p_value)).unwrap_or_else(|e| e.to_string());
    within(elapsed, Duration::from_secs(600))?;
    let summary = format!("{criterion}: {better} {ma:.4} vs {worse} {mb:.4}, Wilcoxon p = {p}");
    check(ma <= mb, summary.clone())?;
    Ok(summary)
}

fn stats_fixtures() -> Outcome {
    // ten pairs with distinct |differences| ranked 1..10; ranks 1 and 10 negative, so W = 11
    let diffs = [-0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, -5.0];
    let before: Vec<f64> = (0..10).map(|i| 10.0 + i as f64).collect();
    let after: Vec<f64> = before.iter().zip(&diffs).map(|(b, d)| b + d).collect();
    let w = wilcoxon_signed_rank(&after, &before).map_err(|e| e.to_string())?;
    check(w.statistic == 11.0, format!("W = {}", w.statistic))?;
    let mut at_most = 0u32;
    for mask in 0u32..1024 {
        let w_plus: u32 = (0..10).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).sum();
        if w_plus <= 11 {
            at_most += 1;
        }
    }
    let exact = 2.0 * f64::from(at_most) / 1024.0;
    check((w.p_value - exact).abs() <= 1e-3, format!("p {} vs enumeration {exact}", w.p_value))?;

    let holm = holm_adjust(&[0.01, 0.04]).map_err(|e| e.to_string())?;
    check(holm == vec![0.02, 0.04], format!("Holm gave {holm:?}"))?;

    for a in 3..=6usize {
        let m = ComparisonMatrix::new(
            Array2::from_elem((a, 8), 0.25),
            (0..a).map(|i| format!("alg{i}")).collect(),
            (0..8).map(|i| format!("ds{i}")).collect(),
        )
        .map_err(|e| e.to_string())?;
        let f = friedman_nemenyi(&m, 0.1).map_err(|e| e.to_string())?;
        let mid = (a as f64 + 1.0) / 2.0;
        check(f.p_value == 1.0, format!("A={a}: Friedman p {}", f.p_value))?;
        check(f.avg_ranks.iter().all(|&r| r == mid), format!("A={a}: ranks {:?}", f.avg_ranks))?;
    }
    Ok(format!("Wilcoxon p {:.5} (enumeration {exact:.5}); Holm exact; Friedman all-tie ok", w.p_value))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn end_to_end_benchmark() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = synth(194, 43, 7, 0.6, 0.1, 901);
    save_csv(&ds, tmp.path().join("flags_like.csv")).map_err(|e| e.to_string())?;
    std::fs::write(
        tmp.path().join("bench.txt"),
        "dataset = flags_like.csv 7\nalgorithm = nb dynamic\nfolds = 10\nk = 20\nbeta = tune\nseed = 17\n",
    )
    .map_err(|e| e.to_string())?;
    let run = |out: &str| -> Result<Duration, String> {
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_dynchain"))
            .arg("benchmark")
            .arg(tmp.path().join("bench.txt"))
            .arg("--out")
            .arg(tmp.path().join(out))
            .output()
            .map_err(|e| e.to_string())?;
        check(
            status.status.success(),
            format!("benchmark exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)),
        )?;
        Ok(start.elapsed())
    };
    let first = run("run1")?;
    within(first, Duration::from_secs(300))?;
    run("run2")?;
    let a = read_dir_sorted(&tmp.path().join("run1"));
    let b = read_dir_sorted(&tmp.path().join("run2"));
    check(!a.is_empty() && a == b, "reruns differ")?;
    let folds = String::from_utf8_lossy(&a.iter().find(|(n, _)| n == "folds.csv").unwrap().1).into_owned();
    let ok_rows = folds.lines().filter(|l| l.contains(",ok,")).count();
    check(ok_rows == 10, format!("{ok_rows} successful folds"))?;
    Ok(format!("10 folds in {:.1}s, rerun byte-identical ({} files)", first.as_secs_f64(), a.len()))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("[PASS] criterion {id:>2}: {name} ({secs:.1}s) {detail}");
            true
        }
        Err(why) => {
            println!("[FAIL] criterion {id:>2}: {name} ({secs:.1}s) {why}");
            false
        }
    }
}

fn main() {
    let mut ok = true;
    ok &= run(1, "reorder-without-retrain equivalence", reorder_equivalence);
    ok &= run(2, "nearest-neighbour chain full-sort oracle", knn_oracle);
    ok &= run(3, "estimator budget", estimator_budget);
    ok &= run(4, "crisp reduction of the local F1", crisp_reduction);
    ok &= run(5, "metric oracle", metric_oracle);
    ok &= run(6, "strict majority vote threshold", vote_threshold);

    let start = Instant::now();
    let experiment = catch_unwind(directional_experiment);
    let elapsed = start.elapsed();
    match &experiment {
        Ok(result) => {
            ok &= run(7, "dynamic order precision vs random-order ensemble", || {
                directional(result, "macro_fdr", "nb-dynamic", "nb-random", elapsed)
            });
            ok &= run(8, "chain vs binary relevance on dependent labels", || {
                directional(result, "zero_one", "nb-fixed", "nb-br", elapsed)
            });
        }
        Err(_) => {
            ok &= run(7, "dynamic order precision vs random-order ensemble", || Err("experiment failed".into()));
            ok &= run(8, "chain vs binary relevance on dependent labels", || Err("experiment failed".into()));
        }
    }

    ok &= run(9, "statistics fixtures", stats_fixtures);
    ok &= run(10, "end-to-end benchmark determinism and scale", end_to_end_benchmark);
    if !ok {
        std::process::exit(1);
    }
}
