//! Process-level runtime knobs.

use std::sync::Once;

/// Environment variable capping kernel parallelism (thread count).
pub const THREADS_ENV: &str = "MET_TAB_THREADS";

static INIT: Once = Once::new();

/// Configure the global rayon pool from `MET_TAB_THREADS`, once.
///
/// Kernel results do not depend on the thread count (rows are computed
/// independently), so this only trades wall time. Unset or invalid values
/// leave the default pool.
pub fn init_thread_pool_from_env() {
    INIT.call_once(|| {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    // Ignore the error: another pool may already be installed
                    // (e.g. by the test harness), which is fine.
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}
