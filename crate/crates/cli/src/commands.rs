use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use linfilt::attack_eval::{
    label_change_report, ks_report, load_records, per_class_advantage, save_records, LabelChangeReport,
    ShadowPools,
};
use linfilt::data::{class_remap, remove_classes, Dataset};
use linfilt::filtration::{unlearn_with_plan, Strategy};
use linfilt::inversion::{grid_shape, invert_class, save_pgm, InversionConfig};
use linfilt::model::{accuracy_and_loss, init_model_with, train as train_model, MlpClassifier, TrainConfig};

use crate::{CliError, ExperimentConfig};

type Result<T> = std::result::Result<T, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    Ok(cfg.dataset.load()?)
}

fn train_full(cfg: &ExperimentConfig, train: &Dataset) -> Result<MlpClassifier> {
    let tc = TrainConfig {
        seed: cfg.base_seed,
        ..cfg.train.clone()
    };
    let init = init_model_with(&cfg.layer_dims, cfg.base_seed, tc.init_scale)?;
    Ok(train_model(&init, train, &tc)?)
}

pub fn synth_data(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = load_data(cfg)?;
    train.save_json(cfg.out_dir.join("train.json"))?;
    test.save_json(cfg.out_dir.join("test.json"))?;
    Ok(())
}

/// Accuracy (percent) and cross-entropy loss, mean and standard deviation
/// over a group of models.
struct AccuracyRow {
    model: String,
    split: &'static str,
    stats: Vec<(f64, f64)>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn write_accuracy(path: &Path, rows: &[AccuracyRow]) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    writeln!(w, "model,split,models,accuracy_pct_mean,accuracy_pct_std,loss_mean,loss_std")?;
    for r in rows {
        let (am, asd) = mean_std(r.stats.iter().map(|s| 100.0 * s.0));
        let (lm, lsd) = mean_std(r.stats.iter().map(|s| s.1));
        writeln!(
            w,
            "{},{},{},{am:.2},{asd:.2},{lm:.4},{lsd:.4}",
            r.model,
            r.split,
            r.stats.len()
        )?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate(models: &[MlpClassifier], ds: &Dataset) -> Result<Vec<(f64, f64)>> {
    Ok(models.iter().map(|m| accuracy_and_loss(m, ds)).collect::<linfilt::Result<_>>()?)
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = load_data(cfg)?;
    let model = train_full(cfg, &train)?;
    model.save(cfg.out_dir.join("model.json"))?;
    let one = std::slice::from_ref(&model);
    write_accuracy(
        &cfg.out_dir.join("accuracy.csv"),
        &[
            AccuracyRow {
                model: "original".into(),
                split: "train",
                stats: evaluate(one, &train)?,
            },
            AccuracyRow {
                model: "original".into(),
                split: "test",
                stats: evaluate(one, &test)?,
            },
        ],
    )
}

pub fn unlearn(cfg: &ExperimentConfig, model: Option<PathBuf>) -> Result<()> {
    let path = model.unwrap_or_else(|| cfg.out_dir.join("model.json"));
    let model = MlpClassifier::load(&path)?;
    let (train, test) = load_data(cfg)?;
    let source = match cfg.estimate_on {
        linfilt::attack_eval::MeanSource::Train => &train,
        linfilt::attack_eval::MeanSource::Test => &test,
    };
    for &strategy in &cfg.strategies {
        let (filtered, plan) =
            unlearn_with_plan(&model, source, &cfg.deleted, strategy, cfg.sample_size, cfg.base_seed)?;
        filtered.save(cfg.out_dir.join(format!("unlearned_{strategy}.json")))?;
        plan.save(cfg.out_dir.join(format!("plan_{strategy}.json")))?;
    }
    Ok(())
}

fn records_path(cfg: &ExperimentConfig, strategy: Strategy) -> PathBuf {
    if cfg.strategies.len() == 1 {
        cfg.out_dir.join("records.csv")
    } else {
        cfg.out_dir.join(strategy.name()).join("records.csv")
    }
}

fn train_pools(cfg: &ExperimentConfig) -> Result<ShadowPools> {
    let (train, test) = load_data(cfg)?;
    Ok(ShadowPools::train(&cfg.shadow(cfg.strategies[0]), &train, &test)?)
}

pub fn shadow_run(cfg: &ExperimentConfig) -> Result<()> {
    let pools = train_pools(cfg)?;
    for &strategy in &cfg.strategies {
        let records = pools.records(strategy, cfg.sample_size, cfg.estimate_on)?;
        let path = records_path(cfg, strategy);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        save_records(path, &records)?;
    }
    Ok(())
}

fn write_advantage(cfg: &ExperimentConfig, records: &[linfilt::attack_eval::LogitRecord], out: &Path) -> Result<()> {
    let report = per_class_advantage(records, &cfg.deleted, &cfg.attacks, cfg.train_fraction, cfg.base_seed)?;
    report.write_csv(create(out)?)?;
    Ok(())
}

fn write_ks(cfg: &ExperimentConfig, records: &[linfilt::attack_eval::LogitRecord], out: &Path) -> Result<()> {
    let report = ks_report(records, &cfg.deleted, cfg.directions, cfg.base_seed)?;
    report.write_csv(create(out)?)?;
    Ok(())
}

pub fn attack(cfg: &ExperimentConfig, records: Option<PathBuf>) -> Result<()> {
    let path = records.unwrap_or_else(|| cfg.out_dir.join("records.csv"));
    write_advantage(cfg, &load_records(path)?, &cfg.out_dir.join("advantage.csv"))
}

pub fn ks(cfg: &ExperimentConfig, records: Option<PathBuf>) -> Result<()> {
    let path = records.unwrap_or_else(|| cfg.out_dir.join("records.csv"));
    write_ks(cfg, &load_records(path)?, &cfg.out_dir.join("ks.csv"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

pub fn label_audit(cfg: &ExperimentConfig, naive: &Path, other: &Path) -> Result<()> {
    let (_, test) = load_data(cfg)?;
    let report = label_change_report(&MlpClassifier::load(naive)?, &MlpClassifier::load(other)?, &test, &cfg.deleted)?;
    LabelChangeReport::write_csv(&[(stem(other), report)], create(&cfg.out_dir.join("labels.csv"))?)?;
    Ok(())
}

/// Writes `class_<i>_<tag>.pgm` per output class, `i` in original class
/// numbering. Unlearned models have no output for deleted classes, so those
/// are skipped.
fn invert_all(
    cfg: &ExperimentConfig,
    model: &MlpClassifier,
    classes: &[usize],
    tag: &str,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let d = model.input_dim();
    let (width, height) = cfg.dataset.image_shape().unwrap_or_else(|| grid_shape(d));
    for (output, &class) in classes.iter().enumerate() {
        let inv = invert_class(
            model,
            &InversionConfig {
                target_class: output,
                objective: cfg.inversion.objective,
                steps: cfg.inversion.steps,
                step_size: cfg.inversion.step_size,
                init: None,
                clamp: true,
            },
        )?;
        let mut image = inv.input;
        image.resize(width * height, 0.0);
        save_pgm(&image, width, height, dir.join(format!("class_{class}_{tag}.pgm")))?;
    }
    Ok(())
}

fn original_classes(num_classes: usize, deleted: &[usize], unlearned: bool) -> Vec<usize> {
    if unlearned {
        class_remap(num_classes, deleted)
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_some())
            .map(|(c, _)| c)
            .collect()
    } else {
        (0..num_classes).collect()
    }
}

pub fn invert(cfg: &ExperimentConfig, model: Option<PathBuf>, tag: Option<String>, unlearned: bool) -> Result<()> {
    let path = model.unwrap_or_else(|| cfg.out_dir.join("model.json"));
    let m = MlpClassifier::load(&path)?;
    let k = *cfg.layer_dims.last().expect("validated");
    let classes = original_classes(k, &cfg.deleted, unlearned);
    if classes.len() != m.num_outputs() {
        return Err(CliError::Config(format!(
            "model has {} outputs, expected {} (pass --unlearned for filtered models)",
            m.num_outputs(),
            classes.len()
        )));
    }
    let tag = tag.unwrap_or_else(|| stem(&path));
    invert_all(cfg, &m, &classes, &tag, &cfg.out_dir.join("inversion"))
}

/// Pools are trained once and shared by every strategy.
pub fn full(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = load_data(cfg)?;
    let pools = ShadowPools::train(&cfg.shadow(cfg.strategies[0]), &train, &test)?;
    let k = train.num_classes;
    let retained_test = remove_classes(&test, &pools.deleted)?;

    let mut accuracy = vec![
        AccuracyRow {
            model: "original".into(),
            split: "test",
            stats: evaluate(&pools.full, &test)?,
        },
        AccuracyRow {
            model: "retrained".into(),
            split: "test_retained",
            stats: evaluate(&pools.retrained, &retained_test)?,
        },
    ];
    let naive = pools.unlearned(Strategy::Naive, cfg.sample_size, cfg.estimate_on)?;
    let mut labels = Vec::new();
    let inversion_dir = cfg.out_dir.join("inversion");
    invert_all(cfg, &pools.full[0], &original_classes(k, &[], false), "original", &inversion_dir)?;
    let retained = original_classes(k, &pools.deleted, true);
    invert_all(cfg, &pools.retrained[0], &retained, "retrained", &inversion_dir)?;

    for &strategy in &cfg.strategies {
        let dir = cfg.out_dir.join(strategy.name());
        std::fs::create_dir_all(&dir)?;
        let records = pools.records(strategy, cfg.sample_size, cfg.estimate_on)?;
        save_records(dir.join("records.csv"), &records)?;
        write_advantage(cfg, &records, &dir.join("advantage.csv"))?;
        write_ks(cfg, &records, &dir.join("ks.csv"))?;

        let unlearned = pools.unlearned(strategy, cfg.sample_size, cfg.estimate_on)?;
        accuracy.push(AccuracyRow {
            model: strategy.name().into(),
            split: "test_retained",
            stats: evaluate(&unlearned, &retained_test)?,
        });
        labels.push((
            strategy.name().to_string(),
            label_change_report(&naive[0], &unlearned[0], &test, &pools.deleted)?,
        ));
        invert_all(cfg, &unlearned[0], &retained, strategy.name(), &inversion_dir)?;
    }
    write_accuracy(&cfg.out_dir.join("accuracy.csv"), &accuracy)?;
    LabelChangeReport::write_csv(&labels, create(&cfg.out_dir.join("labels.csv"))?)?;
    std::fs::write(cfg.out_dir.join("config.json"), cfg.to_json())?;
    Ok(())
}
