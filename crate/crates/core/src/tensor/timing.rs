//! Opt-in (feature = "timing") global counters for kernel hot spots.

use std::sync::atomic::{AtomicU64, Ordering};

pub static IM2COL_NS: AtomicU64 = AtomicU64::new(0);
pub static GEMM_NS: AtomicU64 = AtomicU64::new(0);
pub static COL2IM_NS: AtomicU64 = AtomicU64::new(0);
pub static NORM_NS: AtomicU64 = AtomicU64::new(0);
pub static ALLOC_NS: AtomicU64 = AtomicU64::new(0);

pub fn add(counter: &AtomicU64, start: std::time::Instant) {
    counter.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
}

pub fn report_and_reset() -> String {
    let take = |c: &AtomicU64| c.swap(0, Ordering::Relaxed) as f64 / 1e6;
    format!(
        "im2col {:.0} ms | gemm {:.0} ms | col2im {:.0} ms | norm {:.0} ms | alloc {:.0} ms",
        take(&IM2COL_NS),
        take(&GEMM_NS),
        take(&COL2IM_NS),
        take(&NORM_NS),
        take(&ALLOC_NS)
    )
}
