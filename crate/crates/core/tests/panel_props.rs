use std::collections::BTreeMap;

use panelalpha::panel::{
    apply_universe_filter, forward_return, forward_return_column, load_panel, write_panel, Date, FormatSpec, Panel,
    UniverseSpec, RETURN_COLUMN,
};
use proptest::prelude::*;

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => -1e6..1e6f64,
        1 => Just(f64::NAN),
        1 => prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO | prop::num::f64::INFINITE,
    ]
}

/// Securities with their own subsets of a shared calendar and two columns.
fn panel() -> impl Strategy<Value = Panel> {
    (1usize..5, 1usize..25)
        .prop_flat_map(|(n_sec, n_day)| {
            let cells = n_sec * n_day;
            (
                Just((n_sec, n_day)),
                prop::collection::vec(any::<bool>(), cells),
                prop::collection::vec(value(), cells),
                prop::collection::vec(value(), cells),
            )
        })
        .prop_map(|((n_sec, n_day), present, a, b)| {
            let start = Date::from_ymd(2020, 1, 1).unwrap();
            let (mut ids, mut dates, mut ca, mut cb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..n_sec {
                for t in 0..n_day {
                    let k = i * n_day + t;
                    if present[k] || t == 0 {
                        ids.push(format!("ID{i}"));
                        dates.push(start.add_days(t as i32));
                        ca.push(a[k]);
                        cb.push(b[k]);
                    }
                }
            }
            Panel::from_rows(&ids, &dates, vec![(RETURN_COLUMN.to_string(), ca), ("cap".to_string(), cb)]).unwrap()
        })
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
}

proptest! {
    #[test]
    fn write_then_load_is_bit_identical(p in panel(), tab in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.txt");
        write_panel(&p, &path, if tab { b'\t' } else { b',' }).unwrap();
        let back = load_panel(&path, &FormatSpec::new("id", "date")).unwrap();
        prop_assert_eq!(back.index().ids(), p.index().ids());
        prop_assert_eq!(back.index().dates(), p.index().dates());
        for name in p.column_names() {
            prop_assert!(same_bits(back.column(name).unwrap(), p.column(name).unwrap()), "column {}", name);
        }
    }

    #[test]
    fn forward_return_lags_are_shifts_of_lag_zero(p in panel(), lag in 0usize..6) {
        let zero = forward_return(&p, 0).unwrap();
        let shifted = forward_return(&p, lag).unwrap();
        let f0 = zero.column(&forward_return_column(0)).unwrap();
        let fl = shifted.column(&forward_return_column(lag)).unwrap();
        for block in p.index().blocks() {
            for r in block.rows.clone() {
                if r + lag < block.rows.end {
                    prop_assert!(same_bits(&[fl[r]], &[f0[r + lag]]));
                } else {
                    prop_assert!(fl[r].is_nan());
                }
            }
        }
    }

    #[test]
    fn universe_keeps_at_most_top_k_largest(p in panel(), top_k in 1usize..4) {
        let spec = UniverseSpec::new(top_k, "cap").unwrap();
        let u = apply_universe_filter(&p, &spec).unwrap();
        let mut kept: BTreeMap<Date, Vec<f64>> = BTreeMap::new();
        let cap = u.column("cap").unwrap();
        for r in 0..u.len() {
            kept.entry(u.index().date(r)).or_default().push(cap[r]);
        }
        let all = p.column("cap").unwrap();
        for g in p.index().date_groups() {
            let chosen = kept.remove(&g.date).unwrap_or_default();
            prop_assert!(chosen.len() <= top_k);
            prop_assert!(chosen.iter().all(|c| !c.is_nan()));
            let eligible = g.rows.iter().filter(|&&r| !all[r].is_nan()).count();
            prop_assert_eq!(chosen.len(), eligible.min(top_k));
            // Every dropped eligible name is no larger than every kept one.
            let floor = chosen.iter().copied().fold(f64::INFINITY, f64::min);
            let dropped = g.rows.iter().map(|&r| all[r]).filter(|c| !c.is_nan()).filter(|c| *c > floor).count();
            prop_assert!(dropped <= chosen.len());
        }
    }
}
