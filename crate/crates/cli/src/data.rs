//! CSV ingestion for the two supported layouts, plus a synthetic data
//! generator for smoke testing without the real survey file.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mvprobit::probit::{Layout, Observation, ProbitDataset};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// Four-wave wheeze panel: header `y7,y8,y9,y10,smoke`, exactly 537
    /// rows, one shared coefficient vector with covariates
    /// (1, age-9, smoke, (age-9)*smoke) per component.
    SixCities,
    /// `y1..yp` response columns followed by per-component covariate columns
    /// named `x<component>` or `x<component>_<label>`, grouped by component;
    /// separate coefficient block per component.
    Generic,
}

impl Schema {
    pub fn name(self) -> &'static str {
        match self {
            Schema::SixCities => "sixcities",
            Schema::Generic => "generic",
        }
    }
}

pub const SIXCITIES_HEADER: &str = "y7,y8,y9,y10,smoke";
pub const SIXCITIES_ROWS: usize = 537;

/// Parse a data file into a dataset and the layout its schema implies.
pub fn ingest_csv(path: &Path, schema: Schema) -> Result<(ProbitDataset, Layout), CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = raw
        .lines()
        .map(str::trim_end)
        .enumerate()
        .filter(|(_, l)| !l.is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file", path.display())))?;
    match schema {
        Schema::SixCities => ingest_sixcities(path, header, lines),
        Schema::Generic => ingest_generic(path, header, lines),
    }
}

fn parse_binary(field: &str, line: usize, column: &str, path: &Path) -> Result<bool, CliError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CliError::Data(format!(
            "{}: line {line}, column {column}: expected 0 or 1, found `{other}`",
            path.display()
        ))),
    }
}

fn ingest_sixcities<'a>(
    path: &Path,
    header: &str,
    lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<(ProbitDataset, Layout), CliError> {
    if header != SIXCITIES_HEADER {
        return Err(CliError::Data(format!(
            "{}: header must be exactly `{SIXCITIES_HEADER}`, found `{header}`",
            path.display()
        )));
    }
    let columns = ["y7", "y8", "y9", "y10", "smoke"];
    let mut observations = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Data(format!(
                "{}: line {lineno}: expected 5 fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        let mut bits = [false; 5];
        for (c, field) in fields.iter().enumerate() {
            bits[c] = parse_binary(field, lineno, columns[c], path)?;
        }
        let response = bits[..4].to_vec();
        let h = if bits[4] { 1.0 } else { 0.0 };
        // Component i covers age 7+i; the age covariate is centered at 9.
        let covariates = (0..4)
            .map(|i| {
                let age = (7 + i) as f64 - 9.0;
                vec![1.0, age, h, age * h]
            })
            .collect();
        observations.push(Observation {
            response,
            covariates,
        });
    }
    if observations.len() != SIXCITIES_ROWS {
        return Err(CliError::Data(format!(
            "{}: expected exactly {SIXCITIES_ROWS} data rows, found {}",
            path.display(),
            observations.len()
        )));
    }
    let dataset = ProbitDataset::new(observations)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((dataset, Layout::Shared))
}

/// Column plan of a generic header: response count and, per component, the
/// covariate column indices.
fn parse_generic_header(path: &Path, header: &str) -> Result<(usize, Vec<usize>), CliError> {
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut p = 0;
    while p < names.len() && names[p] == format!("y{}", p + 1) {
        p += 1;
    }
    if p == 0 {
        return Err(CliError::Data(format!(
            "{}: header must start with response columns y1..yp, found `{}`",
            path.display(),
            names.first().unwrap_or(&"")
        )));
    }
    let mut block_sizes = vec![0usize; p];
    let mut current = 0usize;
    for (c, name) in names.iter().enumerate().skip(p) {
        let rest = name.strip_prefix('x').ok_or_else(|| {
            CliError::Data(format!(
                "{}: column {}: covariate columns must be named x<component> or \
                 x<component>_<label>, found `{name}`",
                path.display(),
                c + 1
            ))
        })?;
        let comp_str = rest.split('_').next().unwrap_or("");
        let comp: usize = comp_str.parse().map_err(|_| {
            CliError::Data(format!(
                "{}: column {}: cannot read a component index from `{name}`",
                path.display(),
                c + 1
            ))
        })?;
        if comp == 0 || comp > p {
            return Err(CliError::Data(format!(
                "{}: column {}: component {comp} outside 1..={p}",
                path.display(),
                c + 1
            )));
        }
        if comp - 1 < current {
            return Err(CliError::Data(format!(
                "{}: column {}: covariate columns must be grouped by component in order",
                path.display(),
                c + 1
            )));
        }
        current = comp - 1;
        block_sizes[current] += 1;
    }
    if let Some(i) = block_sizes.iter().position(|&k| k == 0) {
        return Err(CliError::Data(format!(
            "{}: component {} has no covariate columns",
            path.display(),
            i + 1
        )));
    }
    Ok((p, block_sizes))
}

fn ingest_generic<'a>(
    path: &Path,
    header: &str,
    lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<(ProbitDataset, Layout), CliError> {
    let (p, block_sizes) = parse_generic_header(path, header)?;
    let total: usize = p + block_sizes.iter().sum::<usize>();
    let mut observations = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != total {
            return Err(CliError::Data(format!(
                "{}: line {lineno}: expected {total} fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        let mut response = Vec::with_capacity(p);
        for c in 0..p {
            response.push(parse_binary(
                fields[c],
                lineno,
                &format!("y{}", c + 1),
                path,
            )?);
        }
        let mut covariates = Vec::with_capacity(p);
        let mut offset = p;
        for &k in &block_sizes {
            let mut block = Vec::with_capacity(k);
            for j in 0..k {
                let field = fields[offset + j].trim();
                let value: f64 = field.parse().map_err(|_| {
                    CliError::Data(format!(
                        "{}: line {lineno}, column {}: not a number: `{field}`",
                        path.display(),
                        offset + j + 1
                    ))
                })?;
                if !value.is_finite() {
                    return Err(CliError::Data(format!(
                        "{}: line {lineno}, column {}: non-finite covariate",
                        path.display(),
                        offset + j + 1
                    )));
                }
                block.push(value);
            }
            offset += k;
            covariates.push(block);
        }
        observations.push(Observation {
            response,
            covariates,
        });
    }
    if observations.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let dataset = ProbitDataset::new(observations)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((dataset, Layout::BlockDiagonal))
}

/// Synthetic stand-in shaped like the wheeze panel: responses simulated from
/// a latent Gaussian with plausible parameter values. Useful for exercising
/// the pipeline; estimates from it mean nothing about the real survey.
pub fn synth_sixcities(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = [-1.12, -0.08, 0.16, 0.04];
    let mut omega = DMatrix::from_element(4, 4, 0.6);
    for i in 0..4 {
        omega[(i, i)] = 1.0;
    }
    let chol = omega.cholesky().expect("correlation matrix is SPD");
    let mut out = String::with_capacity(SIXCITIES_ROWS * 12);
    out.push_str(SIXCITIES_HEADER);
    out.push('\n');
    for _ in 0..SIXCITIES_ROWS {
        let h = if rng.gen_bool(0.4) { 1.0 } else { 0.0 };
        let eps = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let noise = chol.l() * eps;
        let mut fields = Vec::with_capacity(5);
        for i in 0..4 {
            let age = (7 + i) as f64 - 9.0;
            let mean =
                lambda[0] + lambda[1] * age + lambda[2] * h + lambda[3] * age * h;
            fields.push(if mean + noise[i] > 0.0 { "1" } else { "0" });
        }
        fields.push(if h > 0.5 { "1" } else { "0" });
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

/// Synthetic block-diagonal dataset: intercept plus one standard-normal
/// covariate per component.
pub fn synth_generic(seed: u64, rows: usize, p: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = DMatrix::from_element(p, p, 0.5);
    for i in 0..p {
        omega[(i, i)] = 1.0;
    }
    let chol = omega.cholesky().expect("correlation matrix is SPD");
    let mut header: Vec<String> = (1..=p).map(|i| format!("y{i}")).collect();
    for i in 1..=p {
        header.push(format!("x{i}_const"));
        header.push(format!("x{i}_z"));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{}", header.join(","));
    for _ in 0..rows {
        let x: Vec<f64> = (0..p)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let eps = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let noise = chol.l() * eps;
        let mut fields = Vec::with_capacity(3 * p);
        for i in 0..p {
            let mean = 0.3 + 0.5 * x[i];
            fields.push(if mean + noise[i] > 0.0 {
                "1".to_string()
            } else {
                "0".to_string()
            });
        }
        for &xi in &x {
            fields.push("1".to_string());
            fields.push(format!("{xi:.6}"));
        }
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}
