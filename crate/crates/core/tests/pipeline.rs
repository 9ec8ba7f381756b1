use linfilt::attack_eval::{
    ks_report, load_records, per_class_advantage, save_records, shadow_experiment, AttackKind, Origin, Scope,
    ShadowConfig,
};
use linfilt::data::{load_idx, remove_classes, synth_blobs_split, write_idx, DatasetSpec};
use linfilt::filtration::{unlearn_with_plan, FiltrationPlan, Strategy};
use linfilt::inversion::{invert_class, save_pgm, InversionConfig};
use linfilt::model::{accuracy_and_loss, init_model, train, MlpClassifier, TrainConfig};

fn small_shadow() -> ShadowConfig {
    ShadowConfig {
        dataset: DatasetSpec::Synth {
            classes: 4,
            dim: 5,
            train_per_class: 50,
            test_per_class: 25,
            spread: 0.1,
            seed: 4,
        },
        layer_dims: vec![5, 10, 4],
        deleted: vec![2],
        strategy: Strategy::Normalization,
        models_per_pool: 4,
        train: TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        },
        baseline_pool: true,
        ..ShadowConfig::default()
    }
}

#[test]
fn records_survive_csv_and_reports_are_stable() {
    let records = shadow_experiment(&small_shadow()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    save_records(&path, &records).unwrap();
    let back = load_records(&path).unwrap();
    assert_eq!(back, records);

    let kinds = AttackKind::ALL;
    let a = per_class_advantage(&records, &[2], &kinds, 0.7, 1).unwrap();
    let b = per_class_advantage(&back, &[2], &kinds, 0.7, 1).unwrap();
    assert_eq!(a, b);
    assert!(a.get(AttackKind::Knn, Scope::Class(2)).is_some());
    // baseline models never reach the attacks
    assert!(a.split.train.iter().chain(&a.split.test).all(|&id| id < 8));

    let ks = ks_report(&records, &[2], 25, 0).unwrap();
    for scope in ["class_0", "unlearned", "remaining", "baseline_unlearned", "baseline_remaining"] {
        let v = ks.get(scope).unwrap();
        assert!((0.0..=1.0).contains(&v), "{scope} = {v}");
    }
    assert_eq!(
        records.iter().filter(|r| r.origin == Origin::Seen).count(),
        4 * 100
    );
}

#[test]
fn model_plan_and_dataset_files() {
    let (tr, te) = synth_blobs_split(3, 4, 60, 20, 0.1, 8).unwrap();
    let model = train(&init_model(&[4, 8, 3], 1).unwrap(), &tr, &TrainConfig::default()).unwrap();
    let (filtered, plan) = unlearn_with_plan(&model, &tr, &[1], Strategy::Randomization, Some(15), 3).unwrap();

    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path().join("m.json")).unwrap();
    plan.save(dir.path().join("p.json")).unwrap();
    let model_back = MlpClassifier::load(dir.path().join("m.json")).unwrap();
    let plan_back = FiltrationPlan::load(dir.path().join("p.json")).unwrap();
    assert_eq!(plan_back, plan);
    let refiltered = linfilt::filtration::apply_filtration(&plan_back, &model_back).unwrap();
    for i in 0..te.len() {
        assert_eq!(refiltered.logits(te.input(i)).unwrap(), filtered.logits(te.input(i)).unwrap());
    }

    let retained = remove_classes(&te, &[1]).unwrap();
    let (acc, loss) = accuracy_and_loss(&filtered, &retained).unwrap();
    assert!((0.0..=1.0).contains(&acc) && loss.is_finite());

    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    write_idx(&te, 2, 2, &img, &lab).unwrap();
    let loaded = load_idx(&img, &lab).unwrap();
    assert_eq!(loaded.labels, te.labels);
    let worst = loaded
        .inputs
        .as_slice()
        .iter()
        .zip(te.inputs.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.5 / 255.0 + 1e-12);

    let inv = invert_class(
        &filtered,
        &InversionConfig {
            target_class: 1,
            steps: 20,
            ..InversionConfig::default()
        },
    )
    .unwrap();
    let pgm = dir.path().join("x.pgm");
    save_pgm(&inv.input, 2, 2, &pgm).unwrap();
    assert_eq!(std::fs::read(&pgm).unwrap().len(), 11 + 4);
    assert!(save_pgm(&inv.input, 3, 2, &pgm).is_err());
}
