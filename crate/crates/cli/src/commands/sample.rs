//! Standalone truncated-normal sampling: parse μ, Σ and an orthant from the
//! command line, run the sampler, and write the weighted particles plus a
//! step-by-step diagnostics log.

use nalgebra::{DMatrix, DVector};

use mvprobit::probit::Orthant;
use mvprobit::tmvn::{sample_tmvn, SmcConfig};

use crate::config::SampleSettings;
use crate::error::CliError;
use crate::output::{render_key_values, sig17, write_file};

pub fn parse_vector(s: &str) -> Result<DVector<f64>, CliError> {
    let values: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let values =
        values.map_err(|_| CliError::Config(format!("cannot parse `{s}` as a vector")))?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("vector `{s}` must be finite")));
    }
    Ok(DVector::from_vec(values))
}

/// Rows separated by `;`, entries by `,`: `1,0.9;0.9,1`.
pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>, CliError> {
    let rows: Vec<DVector<f64>> = s
        .split(';')
        .map(parse_vector)
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("cannot parse matrix: {e}")))?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!(
            "matrix `{s}` must be square with `;` separated rows"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn parse_orthant(s: &str) -> Result<Orthant, CliError> {
    let signs: Result<Vec<bool>, CliError> = s
        .chars()
        .map(|c| match c {
            '+' => Ok(true),
            '-' => Ok(false),
            other => Err(CliError::Config(format!(
                "orthant must be a string of + and -, found `{other}`"
            ))),
        })
        .collect();
    let signs = signs?;
    if signs.is_empty() {
        return Err(CliError::Config("orthant cannot be empty".into()));
    }
    Ok(Orthant::from_response(&signs))
}

pub fn run(settings: &SampleSettings) -> Result<(), CliError> {
    let mu = parse_vector(&settings.mu)?;
    let sigma = parse_matrix(&settings.sigma)?;
    let orthant = parse_orthant(&settings.orthant)?;
    if mu.len() != orthant.dim() || sigma.nrows() != orthant.dim() {
        return Err(CliError::Config(format!(
            "dimensions disagree: mu has {}, sigma {}x{}, orthant {}",
            mu.len(),
            sigma.nrows(),
            sigma.ncols(),
            orthant.dim()
        )));
    }
    let config = SmcConfig {
        particles: settings.particles,
        record_steps: true,
        ..SmcConfig::default()
    };
    let sample = sample_tmvn(&orthant, &mu, &sigma, &config, settings.seed)?;

    let particles = sample.particles_original();
    let weights = sample.weights();
    let mut csv = String::from("weight");
    for i in 0..orthant.dim() {
        csv.push_str(&format!(",z{}", i + 1));
    }
    csv.push('\n');
    for k in 0..particles.ncols() {
        csv.push_str(&sig17(weights[k]));
        for i in 0..particles.nrows() {
            csv.push(',');
            csv.push_str(&sig17(particles[(i, k)]));
        }
        csv.push('\n');
    }
    write_file(&settings.out_dir, "particles.csv", &csv)?;

    let stats = sample.stats();
    let mut diag = settings.show();
    diag.push(("log_prob".into(), sig17(sample.log_prob())));
    diag.push(("prob".into(), sig17(sample.log_prob().exp())));
    diag.push((
        "truncation_steps".into(),
        stats.truncation_steps.to_string(),
    ));
    diag.push(("resamples".into(), stats.resamples.to_string()));
    diag.push(("relocations".into(), stats.relocations.to_string()));
    diag.push((
        "terminal_resample".into(),
        stats.terminal_resample.to_string(),
    ));
    diag.push(("final_ess".into(), sig17(stats.final_ess)));
    if let Some(records) = &stats.records {
        for (i, r) in records.iter().enumerate() {
            diag.push((
                format!("step{i}"),
                format!(
                    "phase={:?} theta={} nu={} ess={} resampled={} relocated={} acceptance={} kappa={}",
                    r.phase,
                    sig17(r.theta),
                    sig17(r.nu),
                    sig17(r.ess),
                    r.resampled,
                    r.relocated,
                    sig17(r.acceptance),
                    sig17(r.kappa)
                ),
            ));
        }
    }
    write_file(
        &settings.out_dir,
        "diagnostics.log",
        &render_key_values(&diag),
    )?;

    println!(
        "log orthant probability: {}",
        sig17(sample.log_prob())
    );
    println!("orthant probability: {}", sig17(sample.log_prob().exp()));
    println!(
        "particles: {} (ess {:.1})",
        particles.ncols(),
        stats.final_ess
    );
    println!("artifacts: {}", settings.out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_vectors_matrices_and_orthants() {
        let v = parse_vector("0.5, -1, 2e-1").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[2], 0.2);

        let m = parse_matrix("1,0.9;0.9,1").unwrap();
        assert_eq!(m.nrows(), 2);
        assert_eq!(m[(0, 1)], 0.9);

        let o = parse_orthant("+-+").unwrap();
        assert_eq!(o.signs(), &[true, false, true]);

        assert!(parse_vector("1,x").is_err());
        assert!(parse_matrix("1,0;0").is_err());
        assert!(parse_orthant("+0").is_err());
        assert!(parse_orthant("").is_err());
    }
}
