//! Synthetic data generation. The wheeze study's raw records are not
//! bundled, so this writes clearly labeled stand-in files with the same
//! shape for exercising the pipeline end to end.

use std::path::Path;

use crate::data::{synth_generic, synth_sixcities, Schema};
use crate::error::CliError;

pub fn run(
    schema: Schema,
    seed: u64,
    rows: usize,
    dims: usize,
    out: &Path,
) -> Result<(), CliError> {
    let content = match schema {
        Schema::SixCities => synth_sixcities(seed),
        Schema::Generic => {
            if rows == 0 || dims == 0 {
                return Err(CliError::Config(
                    "generic synthesis needs --rows and --dims of at least 1".into(),
                ));
            }
            synth_generic(seed, rows, dims)
        }
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Numerical(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(out, content)
        .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", out.display())))?;
    println!("synthetic {} data written to {}", schema.name(), out.display());
    Ok(())
}
