//! Worker-thread budget for batch-splittable kernels.
//!
//! Results never depend on the thread count: work units are independent
//! per image and any cross-image reduction is summed in image order after
//! the parallel section.

use std::sync::OnceLock;

/// One-time allocator tuning. Activation and gradient buffers run to tens
/// of megabytes and are allocated every step; with glibc's default mmap
/// threshold each one becomes an mmap/munmap pair plus page faults, which
/// costs more than the arithmetic. Raising the threshold keeps the buffers
/// on the free lists.
pub(crate) fn init_allocator() {
    static ONCE: OnceLock<()> = OnceLock::new();
    ONCE.get_or_init(|| {
        #[cfg(target_os = "linux")]
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
        }
    });
}

/// Worker cap: `T2NET_THREADS` when set, otherwise the machine parallelism.
pub fn worker_threads() -> usize {
    static CACHE: OnceLock<usize> = OnceLock::new();
    *CACHE.get_or_init(|| {
        init_allocator();
        if let Ok(v) = std::env::var("T2NET_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                return n.clamp(1, 64);
            }
        }
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .clamp(1, 64)
    })
}

thread_local! {
    static IN_WORKER: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// Marks the current thread as already inside a parallel section; kernels
/// on this thread then stay single-threaded instead of oversubscribing.
pub struct WorkerScopeGuard {
    prev: bool,
}

impl Drop for WorkerScopeGuard {
    fn drop(&mut self) {
        IN_WORKER.with(|w| w.set(self.prev));
    }
}

pub fn enter_worker_scope() -> WorkerScopeGuard {
    IN_WORKER.with(|w| {
        let prev = w.get();
        w.set(true);
        WorkerScopeGuard { prev }
    })
}

pub(crate) fn nested() -> bool {
    IN_WORKER.with(|w| w.get())
}

/// Split `0..n` into at most `worker_threads()` contiguous ranges.
pub(crate) fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    let workers = if nested() { 1 } else { worker_threads() }.min(n.max(1));
    let base = n / workers;
    let extra = n % workers;
    let mut ranges = Vec::with_capacity(workers);
    let mut start = 0;
    for i in 0..workers {
        let len = base + usize::from(i < extra);
        if len == 0 {
            continue;
        }
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

/// Like [`chunk_ranges`], but stays single-range when the total work is too
/// small to pay for thread spawns.
pub(crate) fn maybe_ranges(items: usize, work_per_item: usize) -> Vec<std::ops::Range<usize>> {
    if items == 0 || items.saturating_mul(work_per_item) < (1 << 16) {
        return vec![0..items];
    }
    chunk_ranges(items)
}

/// Carve a buffer into per-range mutable sub-slices (`unit` elements per
/// item). Ranges must be contiguous ascending and cover a prefix.
pub(crate) fn split_by_ranges<'a, T>(
    mut buf: &'a mut [T],
    ranges: &[std::ops::Range<usize>],
    unit: usize,
) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(ranges.len());
    for r in ranges {
        let (head, rest) = buf.split_at_mut(r.len() * unit);
        out.push(head);
        buf = rest;
    }
    out
}
