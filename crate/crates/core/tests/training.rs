use vipera_core::dataset::{select_training_subset, split_manifest, synthetic_manifest, Generator, Split, SubsetSize};
use vipera_core::head::HeadConfig;
use vipera_core::metrics::{evaluate, grouped_report, EvalPlan};
use vipera_core::source::SyntheticClusters;
use vipera_core::trainer::{fit, fit_with_observer, TrainConfig};

fn task() -> (vipera_core::dataset::DatasetManifest, SyntheticClusters) {
    let gens = [Generator::TokenFlow, Generator::DynamiCrafter];
    let manifest = split_manifest(&synthetic_manifest(60, &gens, 48), 3).unwrap();
    (manifest, SyntheticClusters::new(8, 128, 0.1, 1.0, 9).unwrap())
}

fn short() -> TrainConfig {
    TrainConfig {
        max_epochs: 50,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn learns_separable_clusters() {
    let (manifest, source) = task();
    let gens = [Generator::TokenFlow, Generator::DynamiCrafter];
    let view = select_training_subset(&manifest, &gens, SubsetSize::All, 0).unwrap();
    let mut min_log_sigma = f64::INFINITY;
    let out = fit_with_observer(&view, &source, HeadConfig::default(), &short(), |p| {
        min_log_sigma = min_log_sigma.min(p.log_sigma(0));
    })
    .unwrap();
    assert!(min_log_sigma > 0.0);
    assert!(out.log.iter().all(|l| l.val_loss.is_finite()));
    assert!(out.log.last().unwrap().val_loss < out.log[0].val_loss);
    let records = evaluate(manifest.in_split(Split::Test), &source, &out.best, EvalPlan::default()).unwrap();
    let report = grouped_report(&records).unwrap();
    assert!(report.overall.accuracy >= 0.95, "accuracy {}", report.overall.accuracy);
}

#[test]
fn training_is_reproducible() {
    let (manifest, source) = task();
    let gens = [Generator::TokenFlow];
    let view = select_training_subset(&manifest, &gens, SubsetSize::Count(10), 1).unwrap();
    let cfg = TrainConfig { max_epochs: 3, ..short() };
    let a = fit(&view, &source, HeadConfig::default(), &cfg).unwrap();
    let b = fit(&view, &source, HeadConfig::default(), &cfg).unwrap();
    assert_eq!(a, b);
    let c = fit(&view, &source, HeadConfig::default(), &TrainConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(a.last, c.last);
}

#[test]
fn zero_epochs_returns_initial_head() {
    let (manifest, source) = task();
    let view = select_training_subset(&manifest, &[Generator::TokenFlow], SubsetSize::All, 0).unwrap();
    let out = fit(&view, &source, HeadConfig::default(), &TrainConfig { max_epochs: 0, ..short() }).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.best, out.last);
    assert_eq!(out.best_epoch, None);
}
