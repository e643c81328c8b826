use std::fs::File;

use anyhow::{Context, Result};

use crate::args::ReportArgs;
use crate::exit::Invalid;
use crate::results;

pub fn run(a: ReportArgs) -> Result<()> {
    let file = File::open(&a.results).with_context(|| format!("opening {}", a.results.display()))?;
    let rows = results::read_csv(file).with_context(|| format!("parsing {}", a.results.display()))?;
    let summaries = results::summarize(&rows);
    if summaries.is_empty() {
        return Err(Invalid(format!("{} holds no task rows", a.results.display())).into());
    }
    print!("{}", results::markdown(&summaries));
    Ok(())
}
