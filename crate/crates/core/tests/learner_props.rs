use panelalpha::learner::{fit_matrix, run_walk_forward, BoostParams, TrainWindow, WalkForwardSchedule};
use panelalpha::panel::{Date, Panel};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn start() -> Date {
    Date::from_ymd(2020, 1, 1).unwrap()
}

/// 12 securities over 120 days with two features and a target that depends on them.
fn learning_panel(seed: u64) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ids, mut dates, mut f1, mut f2, mut y) = (vec![], vec![], vec![], vec![], vec![]);
    for i in 0..12 {
        for t in 0..120 {
            let a = normal(&mut rng);
            let b = if rng.random::<f64>() < 0.1 { f64::NAN } else { normal(&mut rng) };
            ids.push(format!("S{i:02}"));
            dates.push(start().add_days(t));
            f1.push(a);
            f2.push(b);
            y.push(0.5 * a - 0.2 * b.max(0.0) + normal(&mut rng));
        }
    }
    Panel::from_rows(&ids, &dates, vec![("f1".into(), f1), ("f2".into(), f2), ("target".into(), y)]).unwrap()
}

fn schedule() -> WalkForwardSchedule {
    WalkForwardSchedule {
        train_start: start(),
        train_end: start().add_days(59),
        test_start: start().add_days(60),
        test_end: start().add_days(119),
        refit_interval: 20,
        window: TrainWindow::Expanding,
    }
}

fn params(seed: u64) -> BoostParams {
    BoostParams {
        n_trees: 15,
        max_depth: 3,
        learning_rate: 0.1,
        min_leaf_count: 20,
        seed,
        ..BoostParams::default()
    }
}

/// Copy of `p` with every target dated on or after `from` permuted.
fn shuffled_from(p: &Panel, from: Date, seed: u64) -> Panel {
    let y = p.column("target").unwrap();
    let late: Vec<usize> = (0..p.len()).filter(|&r| p.index().date(r) >= from).collect();
    let mut values: Vec<f64> = late.iter().map(|&r| y[r]).collect();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
    let mut shuffled = y.to_vec();
    for (&r, v) in late.iter().zip(values) {
        shuffled[r] = v;
    }
    p.with_column("target", shuffled).unwrap()
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// With a single fit, no target dated on or after the test start can
    /// reach any emitted score.
    #[test]
    fn shuffling_test_period_targets_leaves_scores_unchanged(seed in any::<u64>(), horizon in 1usize..4) {
        let p = learning_panel(seed);
        let sched = WalkForwardSchedule { refit_interval: 60, ..schedule() };
        let base = run_walk_forward(&p, &["f1", "f2"], "target", horizon, &sched, &params(seed)).unwrap();
        let out = run_walk_forward(&shuffled_from(&p, sched.test_start, seed), &["f1", "f2"], "target", horizon, &sched, &params(seed)).unwrap();
        prop_assert!(bits_equal(base.scores.values(), out.scores.values()));
    }

    /// With refits, each block may train on targets realized before its own
    /// start, so the shuffle starts at the block start.
    #[test]
    fn shuffling_targets_from_a_block_start_leaves_that_block_unchanged(seed in any::<u64>(), horizon in 1usize..4, window in prop_oneof![Just(TrainWindow::Expanding), Just(TrainWindow::Rolling)]) {
        let p = learning_panel(seed);
        let sched = WalkForwardSchedule { window, ..schedule() };
        let base = run_walk_forward(&p, &["f1", "f2"], "target", horizon, &sched, &params(seed)).unwrap();
        let index = base.scores.index().clone();
        for block in base.blocks.iter().filter(|b| b.fitted) {
            let out = run_walk_forward(&shuffled_from(&p, block.start, seed), &["f1", "f2"], "target", horizon, &sched, &params(seed)).unwrap();
            for r in 0..index.len() {
                let d = index.date(r);
                if d >= block.start && d <= block.end {
                    prop_assert_eq!(base.scores.values()[r].to_bits(), out.scores.values()[r].to_bits());
                }
            }
        }
    }

    #[test]
    fn fits_are_identical_across_runs_and_thread_counts(seed in any::<u64>()) {
        let p = learning_panel(seed);
        let run = || run_walk_forward(&p, &["f1", "f2"], "target", 1, &schedule(), &params(seed)).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
        let again = run();
        prop_assert!(bits_equal(one.scores.values(), three.scores.values()));
        prop_assert!(bits_equal(one.scores.values(), again.scores.values()));
        prop_assert_eq!(
            one.last_model.map(|m| m.dump()),
            three.last_model.map(|m| m.dump())
        );
    }

    #[test]
    fn training_mse_never_rises_with_more_trees(
        seed in any::<u64>(),
        n in 40usize..300,
        k in 1usize..4,
        depth in 1usize..5,
        min_leaf in 1usize..20,
        lr in 0.01..1.0f64,
        l2 in 0.0..5.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| if rng.random::<f64>() < 0.1 { f64::NAN } else { normal(&mut rng) }).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|r| columns[0][r].abs().min(2.0) + normal(&mut rng)).collect();
        let names: Vec<String> = (0..k).map(|j| format!("f{j}")).collect();
        let params = BoostParams {
            n_trees: 25,
            max_depth: depth,
            learning_rate: lr,
            min_leaf_count: min_leaf,
            l2_leaf_penalty: l2,
            subsample_fraction: 1.0,
            seed,
        };
        let model = fit_matrix(&names, &columns, &y, &params).unwrap();
        let mut pred = vec![0.0; n];
        let mut last = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
        for tree in &model.trees {
            for (r, p) in pred.iter_mut().enumerate() {
                *p += tree.predict(|j| columns[j][r]);
            }
            let mse = y.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
            prop_assert!(mse <= last * (1.0 + 1e-12), "mse rose from {} to {}", last, mse);
            last = mse;
        }
    }
}
