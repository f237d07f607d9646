use std::path::PathBuf;

use clem_core::deploy::config_size;
use clem_core::train::load_grid;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sizes(name: &str, classes: usize) -> Vec<f64> {
    let grid = load_grid(&configs_dir().join(name)).unwrap();
    let configs = grid.configs(None).unwrap();
    configs
        .iter()
        .map(|c| config_size(&c.model_config(classes)).total_mb())
        .collect()
}

#[test]
fn every_published_grid_parses() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            let grid = load_grid(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            for c in grid.configs(None).unwrap() {
                c.validate().unwrap();
            }
            seen += 1;
        }
    }
    assert!(seen >= 3);
}

#[test]
fn size_curve_grids_span_a_hundredth_to_one_megabyte() {
    let mut all = sizes("ag_size_curve.toml", 4);
    all.extend(sizes("ag_size_curve_small.toml", 4));
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(0.0, f64::max);
    assert!(lo <= 0.012, "smallest {lo}");
    assert!(hi >= 0.95, "largest {hi}");
}

#[test]
fn table_grid_reproduces_reported_sizes() {
    let got = sizes("imdb_table.toml", 2);
    for (size, want) in got.iter().zip([0.137, 0.046, 0.058, 0.051]) {
        assert!((size - want).abs() <= 0.001, "{size} vs {want}");
    }
}
