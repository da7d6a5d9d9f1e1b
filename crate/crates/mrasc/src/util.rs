//! Small shared utilities: stable seed derivation and deterministic
//! fixed-chunk parallelism.

use std::sync::atomic::{AtomicUsize, Ordering};

/// FNV-1a over a byte stream. Stable across platforms and releases, unlike
/// `DefaultHasher`, so derived seeds are reproducible forever.
fn fnv1a(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(0x0000_0100_0000_01b3);
    }
    state
}

/// Derive a child seed from a master seed and a list of string labels,
/// e.g. `derive_seed(master, &["augment", path, "pitch"])`.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut state = fnv1a(&master.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
    for label in labels {
        state = fnv1a(label.as_bytes(), state);
        state = fnv1a(&[0xff], state);
    }
    state
}

static WORKER_CAP: AtomicUsize = AtomicUsize::new(0);

/// Number of worker threads used by chunked maps. Defaults to the available
/// parallelism, capped by the `MRASC_THREADS` environment variable.
pub fn worker_count() -> usize {
    let cached = WORKER_CAP.load(Ordering::Relaxed);
    if cached != 0 {
        return cached;
    }
    let avail = std::thread::available_parallelism()
        .map(std::num::NonZeroUsize::get)
        .unwrap_or(1);
    let capped = match std::env::var("MRASC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(n) if n >= 1 => avail.min(n),
        _ => avail,
    };
    WORKER_CAP.store(capped, Ordering::Relaxed);
    capped
}

/// Map `f` over `items` on up to [`worker_count`] scoped threads.
///
/// Work is dealt out by index from a shared counter, and results land in
/// the slot matching their input, so the output order never depends on
/// scheduling. `f` must be deterministic per item for full-run determinism.
pub fn parallel_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = worker_count().min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let mut out: Vec<Option<R>> = Vec::with_capacity(items.len());
    out.resize_with(items.len(), || None);
    let next = AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut Option<R>>> =
        out.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                **slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    drop(slots);
    out.into_iter().map(|r| r.expect("slot filled")).collect()
}
