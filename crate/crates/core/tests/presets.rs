use std::path::PathBuf;

use lstsim::cli::{
    parse_settings, resolve_monetize, CalibrateSettings, EvaluateSettings, GridSettings,
    MevSweepSettings, ReplaySettings, TrainSettings,
};

fn preset(name: &str) -> toml::Table {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets").join(name);
    std::fs::read_to_string(&path).unwrap().parse().unwrap()
}

#[test]
fn every_preset_parses_into_its_settings() {
    parse_settings::<TrainSettings>(preset("train_self_optimization.toml")).unwrap();
    parse_settings::<TrainSettings>(preset("train_griefing.toml")).unwrap();
    parse_settings::<EvaluateSettings>(preset("evaluate_griefing.toml")).unwrap();
    let grid: GridSettings = parse_settings(preset("grid_griefing.toml")).unwrap();
    assert_eq!(grid.alphas.len(), 6);
    let mev: MevSweepSettings = parse_settings(preset("mev_sweep.toml")).unwrap();
    assert_eq!(mev.deltas.len() * mev.fees.len() * mev.objectives.len(), 32);
    let m = resolve_monetize(preset("monetize_rocketpool_wide_slippage.toml")).unwrap();
    assert_eq!(m.scenario.slippage, 0.002);
    let c: CalibrateSettings = parse_settings(preset("calibrate.toml")).unwrap();
    assert_eq!(c.pools.len(), 1);
    parse_settings::<ReplaySettings>(preset("replay.toml")).unwrap();
}

#[test]
fn unknown_keys_are_rejected() {
    let mut t = preset("train_griefing.toml");
    t.insert("bugdet".into(), 5.into());
    let err = parse_settings::<TrainSettings>(t).unwrap_err();
    assert!(err.to_string().contains("bugdet"), "{err}");
}
