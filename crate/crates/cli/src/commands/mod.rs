pub mod fit;
pub mod sample;
pub mod scaling;
pub mod synth;
pub mod validate;

use crate::error::CliError;

/// Cap worker threads when asked; keep the default pool otherwise. The pool
/// is process-global, so a second call (tests, repeated dispatch) is a no-op.
pub fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}
