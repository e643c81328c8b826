//! Loading universes, tasks and datasets named on the command line.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use catp_core::datagen::PlanDataset;
use catp_core::{presets, TaskSpec, ToolUniverse};

use crate::exit::Invalid;

/// A universe file, or a built-in universe when no such file exists.
pub fn universe(arg: &str) -> Result<ToolUniverse> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(u) = presets::by_name(arg) {
            return Ok(u);
        }
    }
    ToolUniverse::load(path).with_context(|| format!("loading universe {arg}"))
}

pub fn dataset(path: &Path) -> Result<PlanDataset> {
    PlanDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

/// One task object or an array of tasks.
pub fn tasks(path: &Path) -> Result<Vec<TaskSpec>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let tasks = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    if Vec::is_empty(&tasks) {
        return Err(Invalid(format!("{} lists no tasks", path.display())).into());
    }
    Ok(tasks)
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
