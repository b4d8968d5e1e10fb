//! Trial-level data parallelism with a sequential fallback.
//!
//! Without the `parallel` feature every [`Execution`] runs sequentially.

/// Environment variable the command-line front end reads to cap the number
/// of benchmark worker threads.
pub const THREADS_ENV: &str = "CPTP_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon worker pool; `None` uses the global pool.
    Parallel {
        threads: Option<usize>,
    },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { threads: None }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Parallel execution with the thread count taken from [`THREADS_ENV`]
    /// when it holds a positive integer.
    pub fn from_env() -> Self {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .filter(|&n| n > 0);
        match threads {
            Some(1) => Execution::Sequential,
            threads => match Execution::default() {
                Execution::Parallel { .. } => Execution::Parallel { threads },
                seq => seq,
            },
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Execution::Parallel { .. })
    }
}

/// `(0..n).map(f)` in index order, evaluated concurrently when `exec` allows.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel { threads } => {
            use rayon::prelude::*;
            let run = || (0..n).into_par_iter().map(&f).collect();
            match threads {
                Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                    Ok(pool) => pool.install(run),
                    Err(_) => run(),
                },
                None => run(),
            }
        }
        _ => (0..n).map(f).collect(),
    }
}
