//! Data validation: parse a file against a schema and report its shape, or
//! fail with the parser's line and column diagnostics.

use std::path::Path;

use crate::data::{ingest_csv, Schema};
use crate::error::CliError;

pub fn run(data: &Path, schema: Schema) -> Result<(), CliError> {
    let (dataset, layout) = ingest_csv(data, schema)?;
    let structure = dataset
        .structure(layout)
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!("schema={}", schema.name());
    println!("layout={layout:?}");
    println!("n={}", dataset.n());
    println!("p={}", dataset.p());
    println!("k={}", structure.k());
    println!(
        "block_dims={}",
        dataset
            .block_dims()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    );
    println!("ok");
    Ok(())
}
