use resgin::data::toy::write_toy_files;
use resgin::data::{Dataset, LoadOptions};
use resgin::model::{checkpoint, ModelConfig};
use resgin::train::{predict_indices, run_cv, TrainConfig};

fn small() -> TrainConfig {
    TrainConfig {
        lr: 5e-3,
        epochs: 2,
        batch_size: 16,
        folds: 3,
        seed: 12,
        model: ModelConfig {
            d_hidden: 12,
            d_middle: 6,
            d_attn: 6,
            d_lstm: 12,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn files_to_checkpoint_and_back() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, cells) = write_toy_files(dir.path(), 48, 21).unwrap();
    let dataset = Dataset::load(&samples, &cells, LoadOptions::default()).unwrap();
    assert_eq!(dataset.len(), 48);

    let cv = run_cv(&dataset, &small(), None).unwrap();
    assert_eq!(cv.folds.len(), 3);
    let mut tested: Vec<usize> = cv.folds.iter().flat_map(|f| f.test_indices.clone()).collect();
    tested.sort_unstable();
    assert_eq!(tested, (0..48).collect::<Vec<_>>());

    for fold in &cv.folds {
        let path = dir.path().join(format!("fold{}.ckpt", fold.fold + 1));
        checkpoint::save(&fold.model, &path).unwrap();
        let restored = checkpoint::load(&path).unwrap();
        let again = predict_indices(&restored, &dataset, &fold.test_indices).unwrap();
        assert_eq!(again, fold.test_scores);
        assert!(again.iter().all(|p| *p > 0.0 && *p < 1.0));
    }
    assert!(cv.mean.acc.is_some());
    assert!(cv.std.acc.is_some());
}

#[test]
fn repeated_runs_agree_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, cells) = write_toy_files(dir.path(), 30, 2).unwrap();
    let dataset = Dataset::load(samples, cells, LoadOptions::default()).unwrap();
    let a = run_cv(&dataset, &small(), None).unwrap();
    let b = run_cv(&dataset, &small(), None).unwrap();
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.std, b.std);
    for (x, y) in a.folds.iter().zip(&b.folds) {
        assert_eq!(x.epoch_losses, y.epoch_losses);
    }
}
