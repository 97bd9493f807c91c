use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use proptest::prelude::*;
use proptest::sample::SizeRange;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use prime_core::causal::{bootstrap_learn, pc_stable, BootstrapOptions, CorrData, PcOptions};
use prime_core::features::{
    align, correlation_matrix, prune_collinear, split, AlignedDataset, DatasetMeta, RowKey, SplitSpec,
};
use prime_core::ingest::{
    interpolate_socio_panel, read_hazard_events, read_socio, write_hazard_events, write_socio, HazardEvent,
    HazardLoadOptions, HazardSchema, InterpolationOptions, PopulationPanel, RegionCode, SocioPanel,
};
use prime_core::models::ensemble::{fit_gbt, fit_random_forest, ForestParams, GbtParams};
use prime_core::models::linear::{fit_lasso, fit_ols, fit_ridge, lasso_critical_alpha, LassoOptions};
use prime_core::scoring::{
    compute_hazard_stats, compute_threat, min_max_normalize, quantile_classify, score_events, Period, ScoreOptions,
    YearWindow,
};
use prime_core::synth::{generate, SynthOptions};

const TYPES: [&str; 4] = ["Flood", "Tornado", "Hail", "Wildfire"];

fn event() -> impl Strategy<Value = HazardEvent> {
    (
        0usize..6,
        0usize..TYPES.len(),
        2000i32..2010,
        prop_oneof![Just(0.0), 0.0f64..500.0],
        prop_oneof![(1u32..30).prop_map(f64::from), 0.01f64..30.0],
        proptest::option::of(0u32..365),
    )
        .prop_map(|(r, t, year, damage, duration, day)| HazardEvent {
            region_code: RegionCode::new(format!("4800{r}")),
            hazard_type: TYPES[t].to_string(),
            year,
            damage_per_capita: damage,
            duration_days: duration,
            date: day.map(|d| NaiveDate::from_yo_opt(year, d + 1).unwrap()),
        })
}

fn events(size: impl Into<SizeRange>) -> impl Strategy<Value = Vec<HazardEvent>> {
    prop::collection::vec(event(), size)
}

fn full_population() -> PopulationPanel {
    let mut pop = PopulationPanel::default();
    for r in 0..6 {
        for y in 1999..=2011 {
            pop.insert(RegionCode::new(format!("4800{r}")), y, 10_000 + 977 * r as u64 + 131 * y as u64 % 4_000)
                .unwrap();
        }
    }
    pop
}

fn hazard_csv(events: &[HazardEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_hazard_events(&mut buf, events, &HazardSchema::default()).unwrap();
    buf
}

fn dataset(columns: &[Vec<f64>]) -> AlignedDataset {
    let n = columns[0].len();
    AlignedDataset {
        feature_names: (0..columns.len()).map(|j| format!("v{j}")).collect(),
        keys: (0..n)
            .map(|i| RowKey {
                region_code: RegionCode::new(format!("{:05}", i)),
                period: Period::Year(2001),
            })
            .collect(),
        features: (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect(),
        targets: BTreeMap::new(),
        meta: DatasetMeta {
            column_order: (0..columns.len()).map(|j| format!("v{j}")).collect(),
            ..Default::default()
        },
    }
}

/// Columns that are random mixtures of a few shared factors, so some pairs
/// are strongly correlated.
fn mixed_columns(seed: u64, n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    (0..p)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let noise: f64 = rand::Rng::random_range(&mut rng, 0.05..1.0);
            (0..n)
                .map(|i| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (0..3).map(|k| w[k] * factors[k][i]).sum::<f64>() + noise * e
                })
                .collect()
        })
        .collect()
}

fn regression_data(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let beta: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = x
        .iter()
        .map(|r| {
            let e: f64 = StandardNormal.sample(&mut rng);
            1.5 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + 0.3 * e
        })
        .collect();
    (x, y)
}

proptest! {
    #[test]
    fn hazard_events_round_trip(evs in events(0..40)) {
        let load = read_hazard_events(hazard_csv(&evs).as_slice(), &HazardLoadOptions::default()).unwrap();
        prop_assert!(load.report.rejections.is_empty(), "{:?}", load.report.rejections);
        prop_assert_eq!(load.events, evs);
    }

    #[test]
    fn every_row_is_an_event_or_a_rejection(
        rows in prop::collection::vec(
            (
                prop_oneof![Just("48001".to_string()), Just("4801".to_string()), Just(String::new())],
                prop_oneof![Just("Flood"), Just("")],
                prop_oneof![Just("2005"), Just("20x5")],
                prop_oneof![Just("1.5"), Just("-2"), Just("abc"), Just("0")],
                prop_oneof![Just("3"), Just("0"), Just("-1"), Just("inf")],
                prop_oneof![Just("2005-03-01"), Just(""), Just("March")],
            ),
            0..30,
        )
    ) {
        let h = HazardSchema::default();
        let mut text = [h.region_code, h.hazard_type, h.year, h.damage_per_capita, h.duration_days, h.date].join(",");
        text.push('\n');
        for (r, t, y, d, u, date) in &rows {
            text.push_str(&format!("{r},{t},{y},{d},{u},{date}\n"));
        }
        let load = read_hazard_events(text.as_bytes(), &HazardLoadOptions::default()).unwrap();
        prop_assert_eq!(load.report.rows_in, rows.len());
        prop_assert_eq!(load.report.rows_in, load.events.len() + load.report.rejections.len());
    }

    #[test]
    fn interpolation_keeps_observed_and_stays_in_range(
        series in prop::collection::vec(
            prop::collection::vec(proptest::option::of(-1e3f64..1e3), 11),
            1..4,
        ),
        span in 0.2f64..1.0,
    ) {
        let mut panel = SocioPanel::new(vec!["a".into(), "b".into()]);
        for (r, values) in series.iter().enumerate() {
            let region = RegionCode::new(format!("4900{r}"));
            for (i, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    let second = if i % 2 == 0 { v * 0.5 } else { f64::NAN };
                    panel.insert(region.clone(), 2000 + i as i32, vec![*v, second]).unwrap();
                }
            }
        }
        let opts = InterpolationOptions { span, clamp: true };
        let (out, report) = interpolate_socio_panel(&panel, 2000..=2010, &opts).unwrap();
        let excluded: BTreeSet<_> = report.excluded_regions.iter().cloned().collect();
        for (region, year, values) in panel.iter() {
            if excluded.contains(region) {
                prop_assert!(out.get(region, year).is_none());
                continue;
            }
            let filled = out.get(region, year).unwrap();
            for (a, b) in values.iter().zip(filled) {
                if a.is_finite() {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
        for region in out.regions() {
            for j in 0..2 {
                let observed: Vec<f64> = panel
                    .iter()
                    .filter(|(r, _, v)| **r == region && v[j].is_finite())
                    .map(|(_, _, v)| v[j])
                    .collect();
                let lo = observed.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for year in 2000..=2010 {
                    let v = out.get(&region, year).unwrap()[j];
                    prop_assert!(v.is_finite() && v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn event_order_never_changes_scores(evs in events(1..40), seed in any::<u64>()) {
        let pop = full_population();
        let window = YearWindow::new(2000, 2009).unwrap();
        let a = score_events(&evs, &pop, window, ScoreOptions::default()).unwrap();
        let mut shuffled = evs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = score_events(&shuffled, &pop, window, ScoreOptions::default()).unwrap();
        prop_assert_eq!(a.scores, b.scores);
        prop_assert_eq!(a.hazard_stats, b.hazard_stats);
    }

    #[test]
    fn normalized_scores_span_unit_interval(evs in events(1..40)) {
        let run = score_events(&evs, &full_population(), YearWindow::new(2000, 2009).unwrap(), ScoreOptions::default())
            .unwrap();
        for s in &run.scores {
            for v in [s.threat_norm, s.damage_norm, s.recovery_norm] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let identity = s.recovery_norm - 2.0 * s.damage_norm + s.threat_norm;
            prop_assert!((s.resilience - identity).abs() <= 1e-12);
        }
    }

    #[test]
    fn min_max_hits_both_ends(values in prop::collection::btree_set(-1_000_000i64..1_000_000, 2..50)) {
        let map: BTreeMap<usize, f64> = values.iter().enumerate().map(|(i, v)| (i, *v as f64 / 7.0)).collect();
        let n = min_max_normalize(&map).unwrap();
        prop_assert!(n.values().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(n.values().filter(|v| **v == 0.0).count(), 1);
        prop_assert_eq!(n.values().filter(|v| **v == 1.0).count(), 1);
    }

    #[test]
    fn splitting_an_event_keeps_threat(evs in events(1..20), pick in any::<prop::sample::Index>()) {
        let window = YearWindow::new(2000, 2009).unwrap();
        let stats = compute_hazard_stats(&evs, window).unwrap();
        let i = pick.index(evs.len());
        let mut halves = evs.clone();
        let mut half = halves[i].clone();
        half.duration_days /= 2.0;
        halves[i] = half.clone();
        halves.push(half);
        let whole = compute_threat(&evs, &stats).unwrap();
        let split_up = compute_threat(&halves, &stats).unwrap();
        prop_assert_eq!(whole.len(), split_up.len());
        for (k, v) in &whole {
            prop_assert!((v - split_up[k]).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn longer_events_raise_threat(evs in events(1..20), pick in any::<prop::sample::Index>(), extra in 0.01f64..10.0) {
        let window = YearWindow::new(2000, 2009).unwrap();
        let stats = compute_hazard_stats(&evs, window).unwrap();
        let i = pick.index(evs.len());
        prop_assume!(stats[&evs[i].hazard_type].weightage > 0.0);
        let mut longer = evs.clone();
        longer[i].duration_days += extra;
        let key = (evs[i].region_code.clone(), evs[i].year);
        let before = compute_threat(&evs, &stats).unwrap()[&key];
        let after = compute_threat(&longer, &stats).unwrap()[&key];
        prop_assert!(after > before);
    }

    #[test]
    fn distinct_scores_fill_quartiles_evenly(values in prop::collection::btree_set(-10_000i32..10_000, 4..120)) {
        let map: BTreeMap<usize, f64> = values.iter().enumerate().map(|(i, v)| (i, *v as f64)).collect();
        let c = quantile_classify(&map, 4).unwrap();
        let mut counts = [0usize; 4];
        for class in c.classes.values() {
            counts[*class as usize - 1] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "{counts:?}");
        let sorted: Vec<f64> = map.values().copied().collect();
        for (k, b) in c.boundaries.iter().enumerate() {
            let h = (sorted.len() - 1) as f64 * (k + 1) as f64 / 4.0;
            let (f, frac) = (h.floor() as usize, h - h.floor());
            let expected = sorted[f] + frac * (sorted[(f + 1).min(sorted.len() - 1)] - sorted[f]);
            prop_assert!((b - expected).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pruned_columns_stay_under_threshold(seed in any::<u64>(), p in 3usize..9, threshold in 0.3f64..0.95) {
        let data = dataset(&mixed_columns(seed, 60, p));
        let (pruned, report) = prune_collinear(&data, threshold, &[]).unwrap();
        let m = correlation_matrix(&pruned).unwrap();
        prop_assert!(m.max_abs_off_diagonal() <= threshold);
        prop_assert_eq!(pruned.n_features() + report.removed.len(), p);
        let (again, second) = prune_collinear(&pruned, threshold, &[]).unwrap();
        prop_assert!(second.removed.is_empty());
        prop_assert_eq!(again.features, pruned.features);
        let order: Vec<usize> = pruned.feature_names.iter().map(|n| data.feature_index(n).unwrap()).collect();
        prop_assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn split_partitions_rows(n in 2usize..400, fraction in 0.05f64..0.95, seed in any::<u64>()) {
        let spec = SplitSpec { train_fraction: fraction, seed };
        let Ok((train, test)) = split(n, spec) else {
            // Only a split that would leave one side empty may be refused.
            let k = (fraction * n as f64).round() as usize;
            prop_assert!(k == 0 || k == n);
            return Ok(());
        };
        prop_assert_eq!(train.len(), (fraction * n as f64).round() as usize);
        let all: BTreeSet<usize> = train.iter().chain(&test).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(train.len() + test.len(), n);
        prop_assert_eq!(split(n, spec).unwrap(), (train, test));
    }

    #[test]
    fn linear_fits_agree(seed in any::<u64>(), n in 12usize..40, p in 1usize..5) {
        let (x, y) = regression_data(seed, n, p);
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let ols = fit_ols(&x, &y, &names).unwrap();
        let ridge = fit_ridge(&x, &y, 0.0).unwrap();
        prop_assert!((ols.intercept - ridge.intercept).abs() <= 1e-9);
        for (a, b) in ols.coefficients.iter().zip(&ridge.coefficients) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let resid: Vec<f64> = x.iter().zip(&y).map(|(r, v)| v - ols.predict(r)).collect();
        prop_assert!(resid.iter().sum::<f64>().abs() <= 1e-8);
        for j in 0..p {
            let dot: f64 = x.iter().zip(&resid).map(|(r, e)| r[j] * e).sum();
            prop_assert!(dot.abs() <= 1e-8, "column {j}: {dot}");
        }
        let crit = lasso_critical_alpha(&x, &y).unwrap();
        let lasso = fit_lasso(&x, &y, crit * 1.0001, LassoOptions::default()).unwrap();
        prop_assert!(lasso.coefficients.iter().all(|b| *b == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ensemble_importances_are_shares(seed in any::<u64>()) {
        let (x, y) = regression_data(seed, 60, 4);
        let forest = fit_random_forest(
            &x,
            &y,
            ForestParams { n_trees: 8, max_depth: Some(4), min_leaf: 2, features_per_split: None, bootstrap: true },
            seed,
        )
        .unwrap();
        let gbt = fit_gbt(&x, &y, GbtParams { n_trees: 10, learning_rate: 0.2, max_depth: 2, min_leaf: 2 }).unwrap();
        for imp in [&forest.importances, &gbt.importances] {
            prop_assert!(imp.iter().all(|v| *v >= 0.0));
            prop_assert!((imp.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn pc_skeleton_ignores_variable_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 400;
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for j in 0..5 {
            let mut parents: Vec<(usize, f64)> = Vec::new();
            for k in 0..j {
                if rand::Rng::random_bool(&mut rng, 0.4) {
                    parents.push((k, rand::Rng::random_range(&mut rng, 0.4..0.9)));
                }
            }
            let col: Vec<f64> = (0..n)
                .map(|i| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    parents.iter().map(|(k, w)| w * cols[*k][i]).sum::<f64>() + e
                })
                .collect();
            cols.push(col);
        }
        let names: Vec<String> = (0..5).map(|j| format!("n{j}")).collect();
        let base = pc_stable(&CorrData::from_columns(&names, &cols).unwrap(), PcOptions::default()).unwrap();
        prop_assert!(base.dag.is_acyclic());
        for _ in 0..5 {
            let mut order: Vec<usize> = (0..5).collect();
            order.shuffle(&mut rng);
            let pn: Vec<String> = order.iter().map(|&i| names[i].clone()).collect();
            let pc: Vec<Vec<f64>> = order.iter().map(|&i| cols[i].clone()).collect();
            let res = pc_stable(&CorrData::from_columns(&pn, &pc).unwrap(), PcOptions::default()).unwrap();
            prop_assert_eq!(res.dag.skeleton(), base.dag.skeleton());
            prop_assert!(res.dag.is_acyclic());
        }
        let opts = BootstrapOptions { replicates: 12, seed, ..Default::default() };
        let boot = bootstrap_learn(&names, &cols, opts).unwrap();
        prop_assert!(boot.is_acyclic());
        for arc in &boot.arcs {
            prop_assert!(arc.from != arc.to);
            prop_assert!(arc.confidence > 0.0 && arc.confidence <= 1.0);
            prop_assert!(arc.confidence >= opts.threshold);
        }
        for e in &boot.undirected {
            prop_assert!(!boot.has_arc(&e.a, &e.b) && !boot.has_arc(&e.b, &e.a));
        }
    }

    #[test]
    fn socio_row_order_does_not_change_alignment(seed in 0u64..1000) {
        let data = generate(&SynthOptions { regions: 12, start_year: 2003, end_year: 2008, seed, missing_fraction: 0.0 })
            .unwrap();
        let run = score_events(&data.events, &data.population, YearWindow::new(2003, 2008).unwrap(), ScoreOptions::default())
            .unwrap();
        let mut buf = Vec::new();
        write_socio(&mut buf, &data.socio).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = format!("{header}\n{}\n", lines.join("\n"));
        let reread = read_socio(shuffled.as_bytes()).unwrap();
        prop_assert_eq!(align(&run.scores, &reread).unwrap(), align(&run.scores, &data.socio).unwrap());
    }
}
