//! Experiment runner behind the `fcopt` command.

pub mod config;
pub mod error;
pub mod experiments;
pub mod families;
pub mod problems;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{Result, RunError};
pub use experiments::{list_experiments, run};
pub use report::RunReport;

/// Thread count for a run: the configured count (or all cores) capped by
/// the `FCOPT_THREADS` value when it parses.
pub fn effective_threads(configured: Option<usize>, env_cap: Option<&str>, available: usize) -> usize {
    let want = configured.unwrap_or(available).max(1);
    match env_cap.and_then(|v| v.trim().parse::<usize>().ok()).filter(|n| *n > 0) {
        Some(cap) => want.min(cap),
        None => want,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_caps_threads() {
        assert_eq!(effective_threads(None, Some("2"), 8), 2);
        assert_eq!(effective_threads(Some(4), None, 8), 4);
        assert_eq!(effective_threads(Some(4), Some("junk"), 8), 4);
        assert_eq!(effective_threads(None, Some("0"), 3), 3);
    }
}
