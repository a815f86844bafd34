use std::path::Path;

use geodyn::variational::expr::ExprSystem;
use geodyn::variational::{builtin, check, halton_cloud, CheckOptions, SecondOrderSystem, BUILTIN_NAMES};

use crate::args::CheckArgs;
use crate::error::CliError;
use crate::run::positive;

fn load(system: &str) -> Result<Box<dyn SecondOrderSystem>, CliError> {
    if let Some(sys) = builtin(system) {
        return Ok(sys);
    }
    let path = Path::new(system);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "{system:?} is neither a builtin ({}) nor a readable file",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let src = std::fs::read_to_string(path).map_err(|e| CliError::io(system, e))?;
    // Parse errors carry their own line and column.
    let sys = ExprSystem::parse(&src).map_err(|e| CliError::Usage(format!("{system}: {e}")))?;
    Ok(Box::new(sys))
}

pub fn cmd_check(a: &CheckArgs) -> Result<(), CliError> {
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let opts = CheckOptions {
        delta: positive("delta", a.delta)?,
        tolerance: positive("tolerance", a.tolerance)?,
    };
    let sys = load(&a.system)?;
    let samples = halton_cloud(sys.as_ref(), &sys.domain(), a.samples)?;
    let report = check(sys.as_ref(), &samples, &opts)?;
    println!("{report}");
    if report.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}
