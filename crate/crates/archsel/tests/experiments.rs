use std::path::Path;

use archsel::config::{ExperimentConfig, Overrides};
use archsel::harness::Experiment;
use archsel::report::{emit_report, read_report, Report};

fn experiment(text: &str) -> Experiment {
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    Experiment::prepare(cfg.finish(Path::new("."), &Overrides::default()).unwrap()).unwrap()
}

const SUITE: &str = r#"
[[architectures]]
conv_blocks = [{ out_channels = 4, kernel_size = 3, pool = true }]
nonlinearity = "relu"
fc_layers = [8]
learning_rate = 0.05
momentum = 0.9

[[architectures]]
conv_blocks = [{ out_channels = 2, kernel_size = 3, pool = true }]
nonlinearity = "tanh"
fc_layers = []
learning_rate = 0.02
momentum = 0.5

[[architectures]]
conv_blocks = [{ out_channels = 3, kernel_size = 5, pool = false }]
nonlinearity = "relu"
fc_layers = [4]
learning_rate = 0.0005
momentum = 0.0

[[architectures]]
conv_blocks = [{ out_channels = 4, kernel_size = 3, pool = false }, { out_channels = 4, kernel_size = 3, pool = true }]
nonlinearity = "relu"
fc_layers = []
learning_rate = 0.1
momentum = 0.9
"#;

#[test]
fn self_correlation_hook_gives_one() {
    let text = format!(
        r#"
kind = "correlation"
seed = 3

[dataset]
name = "blobs"
format = "synthetic"
classes = 4
per_class = 40
height = 8
width = 8
noise_sigma = 0.6

[full]
epochs = 2
n_seeds = 1

[hooks]
self_correlation = true
{SUITE}"#
    );
    let exp = experiment(&text);
    let Report::Correlation(r) = exp.run().unwrap() else { panic!() };
    assert!(r.self_correlation);
    for row in &r.rows {
        assert_eq!(row.full, row.heuristic);
    }
    let means = r.full_means();
    assert!(means.iter().any(|&m| m != means[0]), "errors must vary: {means:?}");
    assert!((r.corr_mean_best.unwrap() - 1.0).abs() < 1e-12);
    assert!((r.corr_best_best.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn shuffled_labels_are_flagged_as_noise() {
    let text = format!(
        r#"
kind = "correlation"
seed = 5

[dataset]
name = "blobs"
format = "synthetic"
classes = 10
per_class = 600
height = 6
width = 6
noise_sigma = 0.3
val_fraction = 0.5
shuffle_labels = true

[full]
epochs = 2
n_seeds = 1

[heuristic]
conv_epochs = 1
fc_epochs = 1
n_seeds = 1
{SUITE}"#
    );
    let exp = experiment(&text);
    let Report::Correlation(r) = exp.run().unwrap() else { panic!() };
    assert!((r.chance_error - 0.9).abs() < 1e-12);
    assert!(r.high_noise, "{:?}", r.rows.iter().map(|x| (x.full.mean, x.heuristic.best)).collect::<Vec<_>>());
}

#[test]
fn reports_survive_json_round_trip() {
    let text = format!(
        r#"
kind = "timing"
seed = 9

[dataset]
name = "blobs"
format = "synthetic"
classes = 3
per_class = 20
height = 8
width = 8
noise_sigma = 0.2

[full]
epochs = 1
n_seeds = 1

[heuristic]
conv_epochs = 1
fc_epochs = 1
n_seeds = 2

[random_weights]
fc_epochs = 1
n_seeds = 2
{SUITE}"#
    );
    let exp = experiment(&text);
    let report = exp.run().unwrap();
    let Report::Timing(t) = &report else { panic!() };
    assert_eq!(t.rows.len(), 4);
    assert!(t.rows.iter().all(|r| r.heuristic_ratio > 0.0 && r.heuristic_ratio.is_finite()));
    assert_eq!(Report::from_json(&report.to_json()).unwrap(), report);
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&report, dir.path()).unwrap();
    assert_eq!(read_report(&paths[0]).unwrap(), report);
    let estimate = Report::Estimate(exp.estimate_one(2, archsel_core::estimate::Mode::Heuristic).unwrap());
    assert_eq!(Report::from_json(&estimate.to_json()).unwrap(), estimate);
}

#[test]
fn shipped_configs_load() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["correlation_mnist.toml", "timing_mnist.toml", "search_mnist.toml"] {
        let loaded = ExperimentConfig::load(&configs.join(name), &Overrides::default()).unwrap();
        let exp = Experiment::prepare(loaded).unwrap();
        assert_eq!(exp.data.train.len(), 6000);
        assert_eq!(exp.data.val.len(), 1000);
        assert_eq!(exp.data.train.sample_shape(), [1, 28, 28]);
        if name != "search_mnist.toml" {
            assert_eq!(exp.config.architectures.len(), 16);
            exp.check_architectures().unwrap();
        }
    }
}
