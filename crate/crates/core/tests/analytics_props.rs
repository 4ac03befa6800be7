use panelalpha::analytics::{max_drawdown, newey_west_variance, sharpe, spearman_ic};
use panelalpha::panel::{Date, ScorePanel};
use proptest::prelude::*;

fn returns() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.2..0.2f64, 2..300)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| 1.0 + x.iter().filter(|u| *u < v).count() as f64 + 0.5 * (x.iter().filter(|u| *u == v).count() as f64 - 1.0))
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

proptest! {
    #[test]
    fn sharpe_scales_with_the_sign_of_the_multiplier(x in returns(), c in prop_oneof![-100.0..-0.01f64, 0.01..100.0f64]) {
        let Ok(base) = sharpe(&x) else { return Ok(()) };
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let s = sharpe(&scaled).unwrap();
        prop_assert!((s - c.signum() * base).abs() <= 1e-9 * (1.0 + base.abs()), "{} vs {}", s, base);
    }

    #[test]
    fn newey_west_without_lags_is_population_variance_over_n(x in prop::collection::vec(-1e3..1e3f64, 1..200)) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        prop_assert_eq!(newey_west_variance(&x, 0).to_bits(), (var / n).to_bits());
    }

    #[test]
    fn a_new_equity_high_leaves_max_drawdown_unchanged(x in returns(), extra in 0.0..0.5f64) {
        let (mut equity, mut peak) = (1.0f64, 1.0f64);
        for r in &x {
            equity *= 1.0 + r;
            peak = peak.max(equity);
        }
        // Smallest return that lifts equity above the running peak, plus a margin.
        let r = peak / equity * (1.0 + extra) - 1.0 + 1e-9;
        let mut longer = x.clone();
        longer.push(r);
        prop_assert_eq!(max_drawdown(&longer).to_bits(), max_drawdown(&x).to_bits());
    }

    #[test]
    fn spearman_ic_matches_pairwise_ranks(
        days in prop::collection::vec(
            prop::collection::vec((prop_oneof![4 => -5.0..5.0f64, 1 => (-3i32..3).prop_map(f64::from), 1 => Just(f64::NAN)],
                                   prop_oneof![4 => -5.0..5.0f64, 1 => (-3i32..3).prop_map(f64::from), 1 => Just(f64::NAN)]), 0..60),
            1..6,
        )
    ) {
        let d0 = Date::from_ymd(2020, 6, 1).unwrap();
        let mut s = Vec::new();
        let mut r = Vec::new();
        let mut expected = Vec::new();
        for (t, pairs) in days.iter().enumerate() {
            let d = d0.add_days(t as i32);
            for (i, (a, b)) in pairs.iter().enumerate() {
                s.push((format!("S{i}"), d, *a));
                r.push((format!("S{i}"), d, *b));
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().filter(|(a, b)| !a.is_nan() && !b.is_nan()).copied().unzip();
            if xs.len() >= 3 {
                if let Some(ic) = pearson(&ranks(&xs), &ranks(&ys)) {
                    expected.push((d, ic));
                }
            }
        }
        if s.is_empty() {
            return Ok(());
        }
        let got = spearman_ic(&ScorePanel::from_triples(&s).unwrap(), &ScorePanel::from_triples(&r).unwrap());
        prop_assert_eq!(got.len(), expected.len());
        for ((dg, g), (de, e)) in got.iter().zip(&expected) {
            prop_assert_eq!(dg, de);
            prop_assert!((g - e).abs() <= 1e-12);
        }
    }
}
