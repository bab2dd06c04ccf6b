use autoansatz::analysis::*;
use autoansatz::ansatz::{AnsatzSpec, EmbeddingKind, VariationalKind};
use autoansatz::automl::*;
use autoansatz::data::{generate_synthetic, split_by_session, SynthConfig};
use autoansatz::model::trainable_count;
use autoansatz::train::TrainConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trials_with<F: Fn(&TrialConfig) -> f64>(n: usize, seed: u64, objective: F) -> Vec<TrialRecord> {
    let space = SearchSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as u64)
        .map(|id| {
            let config = space.sample_uniform(&mut rng);
            let loss = objective(&config);
            TrialRecord {
                id,
                param_count: trainable_count(&config.spec(0)),
                config,
                seed: id,
                epochs: vec![loss],
                status: TrialStatus::Completed,
                final_metrics: FinalMetrics {
                    val_loss: Some(loss),
                    val_acc: Some(0.5),
                    test_acc: Some(0.5),
                },
                wall_s: None,
            }
        })
        .collect()
}

fn assert_sums_to_one(r: &ImportanceReport) {
    let total: f64 = r.scores.iter().map(|s| s.1).sum::<f64>() + r.residual;
    assert!((total - 1.0).abs() <= 1e-9, "sum {total}");
    assert!(r.scores.iter().all(|s| s.1 >= 0.0));
}

#[test]
fn constant_objective_has_zero_importance() {
    let trials = trials_with(30, 1, |_| 0.7);
    let r = fanova_importance(&trials, 0).unwrap();
    assert!(r.scores.iter().all(|s| s.1 == 0.0));
    assert_eq!(r.residual, 1.0);
    assert_eq!(r.trees_used, 0);
}

#[test]
fn variational_category_drives_importance() {
    for seed in 0..3 {
        let trials = trials_with(60, seed, |c| {
            if c.variational == VariationalKind::Mps { 0.1 } else { 1.0 }
        });
        let r = fanova_importance(&trials, seed).unwrap();
        assert_sums_to_one(&r);
        assert!(r.score(Param::Variational) >= 0.8, "{r:?}");
        for p in [Param::Embedding, Param::N, Param::Layers, Param::Lr0] {
            assert!(r.score(p) <= 0.1, "{p}: {r:?}");
        }
    }
}

#[test]
fn lr0_drives_importance() {
    for seed in 0..3 {
        let trials = trials_with(60, 10 + seed, |c| (c.lr0.log10() + 1.7).powi(2));
        let r = fanova_importance(&trials, seed).unwrap();
        assert_sums_to_one(&r);
        assert!(r.score(Param::Lr0) >= 0.8, "{r:?}");
        for p in [Param::Embedding, Param::Variational, Param::N, Param::Layers] {
            assert!(r.score(p) <= 0.1, "{p}: {r:?}");
        }
        assert_eq!(r.ranked()[0].0, "lr0");
    }
}

#[test]
fn integer_parameters_drive_importance() {
    let trials = trials_with(60, 4, |c| c.n as f64);
    let r = fanova_importance(&trials, 4).unwrap();
    assert_sums_to_one(&r);
    assert!(r.score(Param::N) >= 0.8, "{r:?}");
    let trials = trials_with(60, 5, |c| c.layers as f64 * 0.3);
    let r = fanova_importance(&trials, 5).unwrap();
    assert!(r.score(Param::Layers) >= 0.8, "{r:?}");
}

#[test]
fn additive_objective_splits_importance() {
    // two equal-variance additive terms: no interaction, roughly half each
    let trials = trials_with(200, 6, |c| {
        let e = if c.embedding == EmbeddingKind::Iqp { 1.0 } else { 0.0 };
        e + (c.lr0.log10() + 2.0).signum()
    });
    let r = fanova_importance(&trials, 6).unwrap();
    assert_sums_to_one(&r);
    assert!(r.residual < 0.1, "{r:?}");
    assert!(r.score(Param::Embedding) > 0.1 && r.score(Param::Lr0) > 0.1, "{r:?}");
}

#[test]
fn importance_is_deterministic_and_needs_enough_trials() {
    let trials = trials_with(40, 7, |c| c.lr0 + c.n as f64 * 0.01);
    assert_eq!(fanova_importance(&trials, 3).unwrap(), fanova_importance(&trials, 3).unwrap());
    assert!(matches!(
        fanova_importance(&trials[..19], 3),
        Err(autoansatz::Error::TooFewTrials { need: 20, have: 19 })
    ));
}

#[test]
fn slice_rows_are_sorted() {
    let trials = trials_with(3, 8, |c| c.lr0);
    let rows = slice_export(&trials, Param::Lr0);
    assert_eq!(rows.len(), 3);
    let lrs: Vec<f64> = rows.iter().map(|r| r.value.parse().unwrap()).collect();
    assert!(lrs.windows(2).all(|w| w[0] <= w[1]));
    let trials = trials_with(30, 9, |c| c.n as f64);
    let rows = slice_export(&trials, Param::Variational);
    let order = |name: &str| VariationalKind::ALL.iter().position(|v| v.name() == name).unwrap();
    assert!(rows.windows(2).all(|w| order(&w[0].value) <= order(&w[1].value)));
    assert!("depth".parse::<Param>().is_err());
    let mut out = Vec::new();
    write_slice_csv(&mut out, Param::Variational, &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("variational,objective,trial_id,pruned\n"));
    assert_eq!(text.lines().count(), 31);
}

fn search_store(n_trials: usize, seed: u64) -> Vec<TrialRecord> {
    let data = generate_synthetic(&SynthConfig {
        per_class_per_session: 4,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let (tr, te) = split_by_session(&data).unwrap();
    let (fit, val) = tr.random_split(0.2, 3);
    let data = SearchData::new(fit, val, te).unwrap();
    let space = SearchSpace {
        n: (5, 6),
        layers: (1, 2),
        ..SearchSpace::default()
    };
    let opts = SearchOptions {
        n_trials,
        master_seed: seed,
        train: TrainConfig {
            batch_size: 16,
            max_epochs: 4,
            ..TrainConfig::default()
        },
        ..SearchOptions::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let mut store = TrialStore::create(&path).unwrap();
    run_search(&space, &data, &opts, &mut store, |_| {}).unwrap();
    TrialStore::replay(&path).unwrap()
}

#[test]
fn slices_of_a_replayed_search_flag_pruned_trials() {
    let trials = search_store(20, 5);
    let rows = slice_export(&trials, Param::N);
    assert_eq!(rows.len(), trials.iter().filter(|t| t.objective().is_finite()).count());
    for row in &rows {
        let t = &trials[row.trial_id as usize];
        assert_eq!(row.pruned, t.status != TrialStatus::Completed);
        assert_eq!(row.objective, *t.epochs.last().unwrap());
    }
    assert!(rows.iter().any(|r| r.pruned));
    assert!(rows.windows(2).all(|w| w[0].value.parse::<usize>().unwrap() <= w[1].value.parse().unwrap()));
}

#[test]
fn contour_single_trial_and_interpolation_bounds() {
    let one = trials_with(1, 11, |_| 0.42);
    let g = contour_export(&one, Param::N, Param::Lr0, 5, DEFAULT_RADIUS).unwrap();
    assert!(g.values.iter().flatten().all(|&v| v == 0.42));
    assert!(g.values.iter().any(|v| v.is_some()));

    let mut two = trials_with(2, 12, |_| 0.0);
    two[0].config.n = 5;
    two[0].config.lr0 = 1e-3;
    two[0].epochs = vec![1.0];
    two[1].config.n = 15;
    two[1].config.lr0 = 1e-1;
    two[1].epochs = vec![3.0];
    let g = contour_export(&two, Param::N, Param::Lr0, 3, DEFAULT_RADIUS).unwrap();
    let mid = g.get(1, 1).unwrap();
    assert!(mid > 1.0 && mid < 3.0, "{mid}");
    assert_eq!(g.get(0, 0), Some(1.0));
    assert_eq!(g.get(2, 2), Some(3.0));
    assert_eq!(g.get(0, 2), None);
}

#[test]
fn categorical_contour_axes_use_one_cell_per_category() {
    let trials = trials_with(40, 13, |c| c.n as f64);
    let g = contour_export(&trials, Param::Variational, Param::Embedding, 4, DEFAULT_RADIUS).unwrap();
    assert_eq!(g.a.labels.len(), 7);
    assert_eq!(g.b.labels.len(), 2);
    for (i, v) in VariationalKind::ALL.iter().enumerate() {
        for (j, e) in EmbeddingKind::ALL.iter().enumerate() {
            let matching: Vec<f64> = trials
                .iter()
                .filter(|t| t.config.variational == *v && t.config.embedding == *e)
                .map(|t| t.objective())
                .collect();
            match g.get(i, j) {
                None => assert!(matching.is_empty()),
                Some(x) => {
                    let mean = matching.iter().sum::<f64>() / matching.len() as f64;
                    assert!((x - mean).abs() < 1e-12);
                }
            }
        }
    }
    assert!(contour_export(&trials, Param::N, Param::N, 4, 0.5).is_err());
    assert!(contour_export(&trials, Param::N, Param::Lr0, 1, 0.5).is_err());
}

#[test]
fn contour_of_seeded_search_is_reproducible() {
    let a = search_store(16, 9);
    let b = search_store(16, 9);
    let ga = contour_export(&a, Param::N, Param::Layers, 6, DEFAULT_RADIUS).unwrap();
    let gb = contour_export(&b, Param::N, Param::Layers, 6, DEFAULT_RADIUS).unwrap();
    let bits = |g: &ContourGrid| g.values.iter().map(|v| v.map(f64::to_bits)).collect::<Vec<_>>();
    assert_eq!(bits(&ga), bits(&gb));
    let mut out = Vec::new();
    write_contour_csv(&mut out, &ga).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 37);
}

#[test]
fn scatter_keeps_completed_trials_only() {
    let mut trials = trials_with(10, 14, |_| 1.0);
    trials[0].config = TrialConfig {
        embedding: EmbeddingKind::Angle,
        variational: VariationalKind::S2d,
        n: 10,
        layers: 1,
        lr0: 0.02,
    };
    trials[0].param_count = trainable_count(&AnsatzSpec::new(EmbeddingKind::Angle, VariationalKind::S2d, 10, 1));
    for t in &mut trials[5..] {
        t.status = TrialStatus::Pruned;
    }
    let rows = scatter_export(&trials);
    assert_eq!(rows.len(), 5);
    assert_eq!((rows[0].param_count, rows[0].variational), (476, VariationalKind::S2d));
    let mut out = Vec::new();
    write_scatter_csv(&mut out, &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("476,0.5,s2d,angle,0"));
}
