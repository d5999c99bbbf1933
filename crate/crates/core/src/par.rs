//! Data-parallel execution layer.
//!
//! Every parallel loop in the crate goes through the helpers here. With the
//! `parallel` feature they dispatch to rayon; without it (or when the thread
//! knob is 1) they run as plain sequential loops. Reductions are always
//! expressed over fixed-size row chunks whose partial results are combined
//! in chunk order, so numeric output is independent of the thread count.

use std::cell::Cell;
use std::ops::Range;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

/// Default number of rows per reduction chunk.
pub const DEFAULT_ROW_CHUNK: usize = 2048;

static ROW_CHUNK: AtomicUsize = AtomicUsize::new(DEFAULT_ROW_CHUNK);
static GLOBAL_SEQUENTIAL: AtomicBool = AtomicBool::new(false);
static GLOBAL_THREADS: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static LOCAL_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Sets the process-wide thread count. `0` means one thread per hardware
/// thread; `1` selects the sequential path. May be called once before any
/// parallel work for counts above one; later calls only toggle the
/// sequential switch.
pub fn set_threads(n: usize) {
    GLOBAL_THREADS.store(n, Ordering::SeqCst);
    GLOBAL_SEQUENTIAL.store(n == 1, Ordering::SeqCst);
    #[cfg(feature = "parallel")]
    if n > 1 {
        // Fails if the global pool is already initialised; the switch above
        // still applies in that case.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Effective thread count for work started from the calling thread.
pub fn threads() -> usize {
    if sequential() {
        return 1;
    }
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Sets the rows-per-chunk used by blocked reductions. Results are
/// reproducible only between runs that use the same value.
pub fn set_row_chunk(rows: usize) {
    ROW_CHUNK.store(rows.max(1), Ordering::SeqCst);
}

pub fn row_chunk() -> usize {
    ROW_CHUNK.load(Ordering::Relaxed)
}

/// Number of hardware threads reported by the OS.
pub fn hardware_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn sequential() -> bool {
    !cfg!(feature = "parallel")
        || GLOBAL_SEQUENTIAL.load(Ordering::Relaxed)
        || LOCAL_SEQUENTIAL.with(|s| s.get())
}

/// Runs `f` with exactly `n` worker threads (`1` = sequential path).
///
/// Unlike [`set_threads`] this does not touch global state, so it is safe to
/// use from concurrently running tests and benchmarks.
pub fn with_threads<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> R {
    if n <= 1 {
        let prev = LOCAL_SEQUENTIAL.with(|s| s.replace(true));
        let out = f();
        LOCAL_SEQUENTIAL.with(|s| s.set(prev));
        return out;
    }
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}

/// Ordered map over `0..n`.
pub fn map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !sequential() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Ordered map over consecutive index ranges of length `chunk` covering
/// `0..n` (the last range may be shorter).
pub fn map_chunks<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map(count, |c| f(c * chunk..((c + 1) * chunk).min(n)))
}

/// Applies `f` to every element with its index.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !sequential() {
        use rayon::prelude::*;
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        return;
    }
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

/// Applies `f` to consecutive mutable chunks; `f` receives the index of the
/// first element of its chunk.
pub fn for_each_chunk_mut<T, F>(items: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if !sequential() {
        use rayon::prelude::*;
        items
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(c, s)| f(c * chunk, s));
        return;
    }
    items
        .chunks_mut(chunk)
        .enumerate()
        .for_each(|(c, s)| f(c * chunk, s));
}
