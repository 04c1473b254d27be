//! Sampler cost experiment: for each dimension, draw truncations whose log
//! orthant probability is uniform over a wide interval, force the sampler's
//! first cut to a common quarter-mass reference region, and record how many
//! adaptive truncation steps it takes from there to the target. Step counts
//! regressed on log(r0/r) should be close to linear, with slope growing in
//! the dimension.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvprobit::normal::sf_quantile;
use mvprobit::probit::Orthant;
use mvprobit::tmvn::{initial_lower_bounds, sample_tmvn, SmcConfig};

use crate::config::ScalingSettings;
use crate::error::CliError;
use crate::output::{render_key_values, sig17, write_file};
use crate::stats::linear_fit;

const LOG_PROB_LOW: f64 = -18.420680743952367; // ln 1e-8
const LOG_PROB_HIGH: f64 = -2.995732273553991; // ln 0.05

struct Run {
    dim: usize,
    log_ratio: f64,
    steps: usize,
}

pub fn run(settings: &ScalingSettings) -> Result<(), CliError> {
    super::init_threads(settings.threads)?;
    let started = std::time::Instant::now();
    let mut master = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut runs: Vec<Run> = Vec::new();
    let mut diag = settings.show();
    for &dim in &settings.dims {
        for _ in 0..settings.replicates {
            let log_prob = master.gen_range(LOG_PROB_LOW..LOG_PROB_HIGH);
            let run_seed: u64 = master.gen();
            runs.push(run_once(dim, log_prob, run_seed, settings.particles)?);
        }
    }

    let mut table = String::from("dim\tlog_ratio\tsteps\n");
    for r in &runs {
        table.push_str(&format!("{}\t{}\t{}\n", r.dim, sig17(r.log_ratio), r.steps));
    }
    write_file(&settings.out_dir, "scaling.tsv", &table)?;

    println!("scaling: {} runs", runs.len());
    for &dim in &settings.dims {
        let xs: Vec<f64> = runs
            .iter()
            .filter(|r| r.dim == dim)
            .map(|r| r.log_ratio)
            .collect();
        let ys: Vec<f64> = runs
            .iter()
            .filter(|r| r.dim == dim)
            .map(|r| r.steps as f64)
            .collect();
        let (intercept, slope, r2) = linear_fit(&xs, &ys);
        diag.push((format!("dim{dim}_intercept"), sig17(intercept)));
        diag.push((format!("dim{dim}_slope"), sig17(slope)));
        diag.push((format!("dim{dim}_r2"), sig17(r2)));
        println!("  dim {dim:>2}: steps = {intercept:.2} + {slope:.3} * log(r0/r), R^2 = {r2:.3}");
    }
    write_file(
        &settings.out_dir,
        "diagnostics.log",
        &render_key_values(&diag),
    )?;
    println!("wall time: {:.2}s", started.elapsed().as_secs_f64());
    println!("artifacts: {}", settings.out_dir.display());
    Ok(())
}

/// One replicate: a mean shift puts the all-plus orthant at the drawn log
/// probability, and the forced first move lands on the reference cut whose
/// orthant probability is one quarter.
fn run_once(dim: usize, log_prob: f64, seed: u64, particles: usize) -> Result<Run, CliError> {
    let p = dim;
    let c_target = sf_quantile((log_prob / p as f64).exp());
    let c_ref = sf_quantile(0.25f64.powf(1.0 / p as f64));
    let mu = DVector::from_element(p, -c_target);
    let mut sigma = DMatrix::identity(p, p);
    if p >= 2 {
        sigma[(0, 1)] = 0.9;
        sigma[(1, 0)] = 0.9;
    }
    let orthant = Orthant::from_response(&vec![true; p]);

    // The truncation schedule moves lower bounds from the initial cut s
    // linearly to zero, so the reference bound c_ref - c_target sits at
    // theta = 1 - (c_ref - c_target) / s. Coordinates share one s because
    // the marginals are exchangeable.
    let end = DVector::zeros(p);
    let config = SmcConfig {
        particles,
        ..SmcConfig::default()
    };
    let s = initial_lower_bounds(&mu, &sigma, config.nu_init, &end)
        .map_err(CliError::from)?[0];
    let theta_star = (1.0 - (c_ref - c_target) / s).clamp(1e-3, 1.0);

    let config = SmcConfig {
        forced_first_theta: Some(theta_star),
        ..config
    };
    let sample = sample_tmvn(&orthant, &mu, &sigma, &config, seed)?;
    let stats = sample.stats();
    let log_ref_mass = stats.log_mass_after_forced.ok_or_else(|| {
        CliError::Numerical("sampler did not report the forced-region mass".into())
    })?;
    Ok(Run {
        dim,
        log_ratio: log_ref_mass - sample.log_prob(),
        steps: stats.truncation_steps,
    })
}
