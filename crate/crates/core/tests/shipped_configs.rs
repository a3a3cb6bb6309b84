use std::path::PathBuf;

use dpws_core::config::{Profile, SimConfig};

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_reproduce_their_profiles() {
    // the base profile passed here is the opposite one, so the file's own
    // `profile` key has to take effect
    let ci = SimConfig::load(&shipped("ci.toml"), Profile::Paper).unwrap();
    assert_eq!(ci, SimConfig::ci());
    let paper = SimConfig::load(&shipped("paper.toml"), Profile::Ci).unwrap();
    assert_eq!(paper, SimConfig::paper());
}
