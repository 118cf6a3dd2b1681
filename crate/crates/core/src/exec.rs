//! Data-parallel execution helpers.
//!
//! All parallel entry points in this crate funnel through [`map_indexed`]:
//! results are collected in index order, so output is identical whether the
//! work ran on one thread or many. With the `parallel` feature disabled the
//! same API falls back to a plain sequential loop.

/// How many worker threads a data-parallel region may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Jobs {
    /// Run on the calling thread.
    Sequential,
    /// Use the rayon default (all cores) when the `parallel` feature is on.
    Auto,
    /// Use at most this many threads.
    Threads(usize),
}

impl Jobs {
    /// Parse the CLI convention: 1 → sequential, 0 → auto, n → n threads.
    pub fn from_flag(n: usize) -> Jobs {
        match n {
            0 => Jobs::Auto,
            1 => Jobs::Sequential,
            n => Jobs::Threads(n),
        }
    }
}

#[cfg(feature = "parallel")]
fn run_pooled<R: Send>(threads: Option<usize>, n: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    use rayon::prelude::*;
    let body = || (0..n).into_par_iter().map(&f).collect();
    match threads {
        None => body(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map(|pool| pool.install(body))
            .unwrap_or_else(|_| (0..n).map(&f).collect()),
    }
}

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<R: Send>(jobs: Jobs, n: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    match jobs {
        Jobs::Sequential => (0..n).map(&f).collect(),
        #[cfg(feature = "parallel")]
        Jobs::Auto => run_pooled(None, n, f),
        #[cfg(feature = "parallel")]
        Jobs::Threads(t) => run_pooled(Some(t), n, f),
        #[cfg(not(feature = "parallel"))]
        _ => (0..n).map(&f).collect(),
    }
}

/// Fill `out` by computing disjoint row chunks of `chunk_len` elements each.
/// `f(chunk_index, chunk)` writes one chunk; chunks never overlap, so the
/// result is bitwise identical across thread counts.
pub fn fill_chunks<F>(jobs: Jobs, out: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    assert!(chunk_len > 0, "chunk_len must be positive");
    match jobs {
        Jobs::Sequential => {
            for (ci, chunk) in out.chunks_mut(chunk_len).enumerate() {
                f(ci, chunk);
            }
        }
        #[cfg(feature = "parallel")]
        _ => {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(ci, chunk)| f(ci, chunk));
        }
        #[cfg(not(feature = "parallel"))]
        _ => {
            for (ci, chunk) in out.chunks_mut(chunk_len).enumerate() {
                f(ci, chunk);
            }
        }
    }
}
