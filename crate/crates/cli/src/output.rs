//! Artifact writers. All files are UTF-8, tab-separated with a one-line
//! header (or line-oriented key=value for diagnostics), and contain nothing
//! non-deterministic, so reruns with the same configuration are
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::CliError;

/// Full-precision serialization: 17 significant digits round-trips f64.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Glance column in thousandths, rounded half away from zero.
pub fn x1000(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

pub struct EstimateRow {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
}

pub fn render_estimates(rows: &[EstimateRow]) -> String {
    let mut out = String::from("parameter\testimate_x1000\tse_x1000\testimate\tse\n");
    for row in rows {
        let (se_milli, se_full) = match row.se {
            Some(se) => (x1000(se).to_string(), sig17(se)),
            None => ("NA".into(), "NA".into()),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            row.name,
            x1000(row.value),
            se_milli,
            sig17(row.value),
            se_full
        );
    }
    out
}

pub fn render_key_values(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Numerical(format!("cannot create {}: {e}", dir.display()))
    })?;
    let path = dir.join(name);
    fs::write(&path, content)
        .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousandths_round_half_away_from_zero() {
        assert_eq!(x1000(-1.1225), -1123);
        assert_eq!(x1000(-1.1234999), -1123);
        assert_eq!(x1000(0.6845), 685);
        assert_eq!(x1000(-0.0005), -1);
        assert_eq!(x1000(0.0004999), 0);
    }

    #[test]
    fn full_precision_column_round_trips() {
        for x in [
            -1.1230000000000002,
            0.68400000000000005,
            1e-300,
            -795.2199999999999,
        ] {
            let parsed: f64 = sig17(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn rendered_table_round_trips_its_own_columns() {
        let rows = vec![
            EstimateRow {
                name: "beta0".into(),
                value: -1.1225637,
                se: Some(0.0623),
            },
            EstimateRow {
                name: "sigma_1_2".into(),
                value: 0.5818,
                se: None,
            },
        ];
        let table = render_estimates(&rows);
        let mut lines = table.lines();
        assert_eq!(
            lines.next().unwrap(),
            "parameter\testimate_x1000\tse_x1000\testimate\tse"
        );
        for (line, row) in lines.zip(&rows) {
            let fields: Vec<&str> = line.split('\t').collect();
            assert_eq!(fields[0], row.name);
            let full: f64 = fields[3].parse().unwrap();
            assert_eq!(fields[1].parse::<i64>().unwrap(), x1000(full));
            match row.se {
                Some(_) => {
                    let se_full: f64 = fields[4].parse().unwrap();
                    assert_eq!(fields[2].parse::<i64>().unwrap(), x1000(se_full));
                }
                None => {
                    assert_eq!(fields[2], "NA");
                    assert_eq!(fields[4], "NA");
                }
            }
        }
    }
}
