use apil::config::ExperimentConfig;

fn repo_file(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn shipped_configs_match_the_presets() {
    assert_eq!(ExperimentConfig::from_toml(&repo_file("desk.toml")).unwrap(), ExperimentConfig::desk());
    assert_eq!(ExperimentConfig::from_toml(&repo_file("full.toml")).unwrap(), ExperimentConfig::full());
}
