//! File and built-in input loading.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use sectionflow_core::cases;
use sectionflow_core::grid::{load_section_config, parse_matpower_case, Section};
use sectionflow_core::GridCase;

/// Load a case from a path or `builtin:<name>`.
pub fn load_case(spec: &str) -> Result<(GridCase, String)> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let case = cases::builtin_case(name)
            .ok_or_else(|| anyhow!("unknown built-in case `{name}` (two_bus, nine_bus, bench30)"))?;
        return Ok((case, spec.to_string()));
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading case file {spec}"))?;
    let case = parse_matpower_case(&text).map_err(|e| anyhow!("parsing {spec}: {e}"))?;
    Ok((case, spec.to_string()))
}

/// Load a section config from a path or `builtin:<name>`.
pub fn load_sections(spec: &str, case: &GridCase) -> Result<Vec<Section>> {
    let text = if let Some(name) = spec.strip_prefix("builtin:") {
        cases::builtin_sections(name)
            .ok_or_else(|| anyhow!("unknown built-in section set `{name}` (nine_bus, bench30)"))?
    } else {
        fs::read_to_string(spec).with_context(|| format!("reading section config {spec}"))?
    };
    load_section_config(&text, case).map_err(|e| anyhow!("section config {spec}: {e}"))
}

/// Write a file, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
