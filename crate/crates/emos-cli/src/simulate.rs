//! `emos simulate`: seeded synthetic archive generation.

use crate::manifest::RunManifest;
use crate::{files, CmdError, CmdResult};
use anyhow::Context;
use emos_core::dataio::{generate_synthetic, save_dataset, save_group_spec, SyntheticConfig};
use std::path::Path;
use std::time::Instant;

pub fn run(config_path: &Path, out: &Path) -> CmdResult {
    let started = Instant::now();

    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))
        .map_err(CmdError::usage)?;
    let config: SyntheticConfig = serde_json::from_str(&text)
        .with_context(|| format!("config {}", config_path.display()))
        .map_err(CmdError::usage)?;

    let dataset = generate_synthetic(&config);

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(CmdError::runtime)?;
    }
    save_dataset(&dataset, out)
        .with_context(|| format!("writing dataset {}", out.display()))
        .map_err(CmdError::runtime)?;
    let groups_path = files::groups_sidecar(out);
    save_group_spec(config.group_spec(), &groups_path)
        .with_context(|| format!("writing group spec {}", groups_path.display()))
        .map_err(CmdError::runtime)?;

    let mut manifest = RunManifest::new(
        "simulate",
        serde_json::to_value(&config).expect("config serializes"),
    );
    manifest.seed = Some(config.seed());
    manifest
        .add_input(config_path)
        .map_err(CmdError::runtime)?;
    manifest.wall_ms = started.elapsed().as_millis();
    manifest
        .write(&out.with_extension("manifest.json"))
        .map_err(CmdError::runtime)?;

    println!(
        "simulate: {} cases ({} stations x {} days, {} members) -> {}",
        dataset.len(),
        config.stations(),
        config.days(),
        config.group_spec().member_count(),
        out.display()
    );
    Ok(())
}
