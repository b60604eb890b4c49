use std::path::Path;

use lightningnet::experiment::{ExperimentConfig, Overrides};
use lightningnet::Error;

const BASE: &str = r#"
seed = 3

[network]
n_cells = 20
n_clusters = 2
cluster_radius_km = 1.0

[windows]
mb = 12
hz = 12

[graph]
threshold_km = 1.0
k = 2
"#;

fn parse(text: &str) -> lightningnet::Result<ExperimentConfig> {
    ExperimentConfig::from_toml_str(text, &Overrides::default(), None)
}

fn validation_message(r: lightningnet::Result<ExperimentConfig>) -> String {
    match r {
        Err(Error::Validation(m)) => m,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn base_config_parses_with_defaults() {
    let cfg = parse(BASE).unwrap();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.windows.mb, 12);
    assert_eq!(cfg.graph.k, 2);
    assert_eq!(cfg.kpis.hours, 1440);
    assert_eq!(cfg.labels.target_hot_rate, Some(0.0025));
    assert_eq!(cfg.prep.n_selected, 10);
}

#[test]
fn missing_required_field_is_named() {
    let text = BASE.replace("seed = 3\n", "");
    assert!(validation_message(parse(&text)).contains("seed"));
    let text = BASE.replace("hz = 12\n", "");
    assert!(validation_message(parse(&text)).contains("hz"));
}

#[test]
fn unknown_field_is_named() {
    let text = BASE.replace("k = 2", "k = 2\nclusters = 4");
    assert!(validation_message(parse(&text)).contains("clusters"));
}

#[test]
fn nonstandard_grid_values_need_opt_in() {
    let text = BASE.replace("mb = 12", "mb = 13");
    assert!(validation_message(parse(&text)).contains("mb"));
    let text = format!("allow_nonstandard = true\n{text}");
    let cfg = parse(&text).unwrap();
    let warnings = cfg.validate().unwrap();
    assert_eq!(warnings.len(), 1, "{warnings:?}");
}

#[test]
fn threshold_off_grid_rejected() {
    let text = BASE.replace("threshold_km = 1.0", "threshold_km = 2.0");
    assert!(validation_message(parse(&text)).contains("threshold"));
}

#[test]
fn k_above_cell_count_rejected() {
    let text = BASE.replace("k = 2", "k = 21");
    parse(&text).unwrap_err();
}

#[test]
fn needs_exactly_one_cell_source() {
    let text = format!("cells_file = \"cells.csv\"\n{BASE}");
    parse(&text).unwrap_err();
    let no_network = BASE.replace("[network]\nn_cells = 20\nn_clusters = 2\ncluster_radius_km = 1.0\n", "");
    parse(&no_network).unwrap_err();
}

#[test]
fn lightning_is_not_a_baseline() {
    let text = format!("baselines = [\"lightning\"]\n{BASE}");
    parse(&text).unwrap_err();
}

#[test]
fn overrides_win_over_file() {
    let o = Overrides {
        seed: Some(9),
        mb: Some(24),
        hz: Some(48),
        threshold_km: Some(0.5),
        k: Some(1),
        ..Default::default()
    };
    let cfg = ExperimentConfig::from_toml_str(BASE, &o, None).unwrap();
    assert_eq!((cfg.seed, cfg.windows.mb, cfg.windows.hz, cfg.graph.k), (9, 24, 48, 1));
    assert_eq!(cfg.graph.threshold_km, 0.5);
}

#[test]
fn relative_paths_resolve_against_config_dir() {
    let text = format!("out_dir = \"runs/a\"\n{BASE}");
    let cfg = ExperimentConfig::from_toml_str(&text, &Overrides::default(), Some(Path::new("/tmp/x"))).unwrap();
    assert_eq!(cfg.out_dir.unwrap(), Path::new("/tmp/x/runs/a"));
}

#[test]
fn toml_round_trip() {
    let cfg = parse(BASE).unwrap();
    let text = cfg.to_toml_string().unwrap();
    assert_eq!(parse(&text).unwrap(), cfg);
}

#[test]
fn bad_toml_is_a_validation_error() {
    validation_message(parse("seed = "));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["reference.toml", "small.toml"] {
        let cfg = ExperimentConfig::load(&root.join(name), &Overrides::default()).unwrap();
        assert!(cfg.validate().unwrap().is_empty(), "{name}");
    }
    let reference = ExperimentConfig::load(&root.join("reference.toml"), &Overrides::default()).unwrap();
    let net = reference.network.unwrap();
    assert_eq!((net.n_cells, net.n_clusters, reference.kpis.hours), (400, 4, 1440));
    assert_eq!((reference.windows.mb, reference.windows.hz, reference.graph.k), (24, 12, 4));
}
