use anyhow::Result;
use catp_core::{presets, ToolUniverse};

use crate::args::UniverseCmd;
use crate::exit::Invalid;
use crate::inputs;

pub fn run(cmd: UniverseCmd) -> Result<()> {
    match cmd {
        UniverseCmd::Validate { path } => {
            let u = ToolUniverse::load(&path)?;
            println!(
                "{}: ok ({} tools, {} kinds, k = {}, digest {})",
                path.display(),
                u.n_tools(),
                u.kinds.len(),
                u.k,
                u.digest()
            );
            Ok(())
        }
        UniverseCmd::Export { name, out } => {
            let u = presets::by_name(&name).ok_or_else(|| Invalid(format!("no built-in universe named `{name}`")))?;
            inputs::write(&out, &u.to_canonical_json())?;
            eprintln!("wrote {} ({} tools)", out.display(), u.n_tools());
            Ok(())
        }
    }
}
