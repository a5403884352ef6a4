//! Worker pools sized by `XTRACK_THREADS`. Every parallel section in the
//! crate collects results in input order and reduces sequentially, so the
//! worker count never changes a result bit.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "XTRACK_THREADS";

/// Worker cap from the environment; `None` when unset or empty.
pub fn env_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Pool with `threads` workers, falling back to the environment and then to
/// rayon's default.
pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match threads {
        Some(n) => Some(n),
        None => env_threads()?,
    };
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = n {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}
