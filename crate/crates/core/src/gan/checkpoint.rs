//! Checkpoint directories: `config.json`, `weights.bin` and `log.csv`.
//!
//! A checkpoint is written next to its destination as `<dir>.partial` and
//! swapped in with renames, so an interrupted save leaves either the previous
//! checkpoint or the new one, never a mix.

use std::fs;
use std::path::{Path, PathBuf};

use gutcheck_nn::Container;
use serde_json::json;

use super::{GanConfig, GeneratorState, TrainingLog};
use crate::Error;

fn sibling(dir: &Path, suffix: &str) -> PathBuf {
    let mut name = dir.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "checkpoint".into());
    name.push(suffix);
    dir.with_file_name(name)
}

pub fn save_checkpoint(dir: &Path, state: &GeneratorState, log: &TrainingLog) -> Result<(), Error> {
    let partial = sibling(dir, ".partial");
    let old = sibling(dir, ".old");
    if partial.exists() {
        fs::remove_dir_all(&partial)?;
    }
    fs::create_dir_all(&partial)?;
    fs::write(partial.join("config.json"), serde_json::to_vec_pretty(&state.config)?)?;
    let mut c = Container::new(json!({
        "step": state.step,
        "ema": state.ema.is_some(),
        "discriminator": state.discriminator.is_some(),
    }));
    c.push_store("", &state.generator);
    if let Some(ema) = &state.ema {
        c.push_store("ema/", ema);
    }
    if let Some(d) = &state.discriminator {
        c.push_store("", d);
    }
    c.save(&partial.join("weights.bin"))?;
    fs::write(partial.join("log.csv"), log.to_csv())?;

    if dir.exists() {
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        fs::rename(dir, &old)?;
    }
    fs::rename(&partial, dir)?;
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    Ok(())
}

/// Loads a checkpoint, falling back to `<dir>.old` when a swap was interrupted.
pub fn load_checkpoint(dir: &Path) -> Result<GeneratorState, Error> {
    let old = sibling(dir, ".old");
    let src = if dir.join("weights.bin").exists() {
        dir.to_path_buf()
    } else if old.join("weights.bin").exists() {
        log::warn!("using fallback checkpoint {}", old.display());
        old
    } else {
        return Err(Error::InvalidInput(format!("no checkpoint in {}", dir.display())));
    };
    let config: GanConfig = serde_json::from_slice(&fs::read(src.join("config.json"))?)?;
    let c = Container::load(&src.join("weights.bin"))?;
    let (mut state, _, _) = GeneratorState::init(&config)?;
    c.load_store("", &mut state.generator)?;
    state.step = c.meta["step"].as_u64().unwrap_or(0);
    state.ema = if c.meta["ema"].as_bool() == Some(true) {
        let mut e = state.generator.clone();
        c.load_store("ema/", &mut e)?;
        Some(e)
    } else {
        None
    };
    state.discriminator = match (c.meta["discriminator"].as_bool(), state.discriminator.take()) {
        (Some(true), Some(mut d)) => {
            c.load_store("", &mut d)?;
            Some(d)
        }
        _ => None,
    };
    Ok(state)
}
