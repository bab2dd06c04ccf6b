use autoansatz::ansatz::{AnsatzSpec, EmbeddingKind, VariationalKind};
use autoansatz::data::{generate_synthetic, split_by_session, Dataset, Sample, Standardizer, SynthConfig};
use autoansatz::model::QnnModel;
use autoansatz::train::{train, Decision, TrainConfig, TrainStatus};

fn small_data() -> (Dataset, Dataset) {
    let data = generate_synthetic(&SynthConfig {
        per_class_per_session: 3,
        seed: 17,
        ..Default::default()
    })
    .unwrap();
    split_by_session(&data).unwrap()
}

#[test]
fn every_template_memorizes_a_single_sample() {
    let (tr, _) = small_data();
    let st = Standardizer::fit(&tr).unwrap();
    let config = TrainConfig {
        batch_size: 1,
        max_epochs: 100,
        ..Default::default()
    };
    for row in [0, 5, 40] {
        let one = Dataset::new(vec![tr.samples()[row].clone()]).unwrap();
        for kind in VariationalKind::ALL {
            let spec = AnsatzSpec::new(EmbeddingKind::Angle, kind, 5, 1);
            let mut model = QnnModel::init(spec, st.clone(), 3).unwrap();
            let out = train(&mut model, &one, &one, &config, |_| Decision::Continue).unwrap();
            let last = out.history.last().unwrap().val_loss;
            assert!(last < 0.01, "row {row} {kind}: final loss {last}");
        }
    }
}

#[test]
fn iqp_single_sample_loss_drops_tenfold() {
    let (tr, _) = small_data();
    let st = Standardizer::fit(&tr).unwrap();
    let one = Dataset::new(vec![tr.samples()[5].clone()]).unwrap();
    let config = TrainConfig {
        batch_size: 1,
        max_epochs: 100,
        ..Default::default()
    };
    for kind in VariationalKind::ALL {
        let spec = AnsatzSpec::new(EmbeddingKind::Iqp, kind, 5, 1);
        let mut model = QnnModel::init(spec, st.clone(), 3).unwrap();
        let out = train(&mut model, &one, &one, &config, |_| Decision::Continue).unwrap();
        let first = out.history[0].train_loss;
        let last = out.history.last().unwrap().val_loss;
        assert!(last < first / 10.0, "{kind}: {first} -> {last}");
    }
}

#[test]
fn training_is_deterministic_and_lr_never_increases() {
    let (tr, va) = small_data();
    let st = Standardizer::fit(&tr).unwrap();
    let spec = AnsatzSpec::new(EmbeddingKind::Angle, VariationalKind::S2d, 5, 1);
    let config = TrainConfig {
        batch_size: 16,
        max_epochs: 12,
        plateau_patience: 1,
        seed: 8,
        ..Default::default()
    };
    let run = || {
        let mut m = QnnModel::init(spec.clone(), st.clone(), 4).unwrap();
        let out = train(&mut m, &tr, &va, &config, |_| Decision::Continue).unwrap();
        (out, m)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    assert_eq!(a.status, TrainStatus::Completed);
    assert_eq!(a.history.len(), 12);
    for w in a.history.windows(2) {
        assert!(w[1].lr <= w[0].lr);
    }
}

#[test]
fn zero_epochs_leaves_model_untouched() {
    let (tr, va) = small_data();
    let spec = AnsatzSpec::new(EmbeddingKind::Iqp, VariationalKind::Ttn, 5, 1);
    let before = QnnModel::init(spec, Standardizer::identity(), 1).unwrap();
    let mut m = before.clone();
    let config = TrainConfig {
        max_epochs: 0,
        ..Default::default()
    };
    let out = train(&mut m, &tr, &va, &config, |_| Decision::Continue).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(m, before);
}

#[test]
fn observer_can_prune_but_not_on_last_epoch() {
    let (tr, va) = small_data();
    let spec = AnsatzSpec::new(EmbeddingKind::Angle, VariationalKind::BasicEntangler, 5, 1);
    let config = TrainConfig {
        max_epochs: 3,
        ..Default::default()
    };
    let mut m = QnnModel::init(spec.clone(), Standardizer::identity(), 1).unwrap();
    let out = train(&mut m, &tr, &va, &config, |e| {
        if e.epoch == 2 { Decision::Prune } else { Decision::Continue }
    })
    .unwrap();
    assert_eq!((out.status, out.history.len()), (TrainStatus::Pruned, 2));
    let mut m = QnnModel::init(spec, Standardizer::identity(), 1).unwrap();
    let out = train(&mut m, &tr, &va, &config, |_| Decision::Prune).unwrap();
    assert_eq!(out.status, TrainStatus::Pruned);
    assert_eq!(out.history.len(), 1);
}

#[test]
fn huge_learning_rate_is_reported_as_divergence() {
    let (tr, va) = small_data();
    let spec = AnsatzSpec::new(EmbeddingKind::Angle, VariationalKind::S2d, 5, 1);
    let mut m = QnnModel::init(spec, Standardizer::identity(), 1).unwrap();
    // inputs far outside the standardized range make output weights blow up
    let wild: Vec<Sample> = tr
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.features.iter_mut().for_each(|f| *f *= 1e3);
            s
        })
        .collect();
    let wild = Dataset::new(wild).unwrap();
    let config = TrainConfig {
        lr0: 1e6,
        max_epochs: 20,
        ..Default::default()
    };
    let out = train(&mut m, &wild, &va, &config, |_| Decision::Continue).unwrap();
    assert_eq!(out.status, TrainStatus::Diverged);
    assert!(out.history.last().unwrap().diverged);
}
