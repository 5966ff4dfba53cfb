use std::path::PathBuf;

use refprint::experiment::zoo::{default_image_config, default_text_config, default_vector_config};
use refprint::experiment::ExperimentConfig;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Set `REFPRINT_WRITE_CONFIGS=1` to rewrite the shipped files.
#[test]
fn shipped_configs_match_defaults() {
    let write = std::env::var_os("REFPRINT_WRITE_CONFIGS").is_some();
    for (name, cfg) in [
        ("vector.json", default_vector_config()),
        ("text.json", default_text_config()),
        ("image.json", default_image_config()),
    ] {
        let path = configs_dir().join(name);
        if write {
            std::fs::write(&path, cfg.to_json()).unwrap();
        }
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded, cfg, "{name} drifted from the built-in default");
    }
}
