//! Independent runs in parallel.

use rayon::prelude::*;

use super::{run, Scenario, Trace};
use crate::Result;

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "ASYNC_LAB_THREADS";

/// Thread count from [`THREADS_ENV`], or `None` for the rayon default.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Applies `f` to every scenario in parallel, preserving order.
pub fn sweep_map<T, F>(scenarios: &[Scenario], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Scenario) -> T + Sync + Send,
{
    let work = || scenarios.par_iter().map(&f).collect();
    match thread_cap().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

pub fn run_sweep(scenarios: &[Scenario]) -> Vec<Result<Trace>> {
    sweep_map(scenarios, run)
}
