use std::path::PathBuf;

use cortexforge_core::pipeline::ReconConfig;
use cortexforge_core::synth::SynthConfig;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn shipped_recon_config_matches_defaults() {
    assert_eq!(
        ReconConfig::load(config("recon_default.json")).unwrap(),
        ReconConfig::default()
    );
}

#[test]
fn shipped_synth_config_is_valid() {
    let cfg = SynthConfig::load(config("synth_default.json")).unwrap();
    assert_eq!(cfg.gmm.labels.len(), 4);
    assert_eq!(cfg.clip_mm, 5.0);
}
