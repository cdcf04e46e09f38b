//! Multi-threaded correlation. Work is split into fixed chunks of the first
//! stream, so the merged histogram is identical for every thread count.

use rayon::prelude::*;

use photonlab_core::correlator::{check_sorted, correlate_chunk, CorrelationHistogram};
use photonlab_core::TimeTag;

use crate::{Error, Result};

/// Tags of the first stream handled per work item.
const CHUNK: usize = 1 << 16;

/// Environment variable consulted when no thread count is given.
pub const THREADS_ENV: &str = "PHOTONLAB_THREADS";

/// Resolve the worker count: explicit value, then `PHOTONLAB_THREADS`, then all cores.
pub fn thread_count(explicit: Option<usize>) -> Result<usize> {
    if let Some(n) = explicit {
        return if n == 0 { Err(Error::Usage("--threads must be at least 1".into())) } else { Ok(n) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Usage(format!("{THREADS_ENV}=`{v}` is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Run `f` inside a pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Parallel equivalent of [`photonlab_core::correlator::correlate`].
pub fn par_correlate(a: &[TimeTag], b: &[TimeTag], bin_ps: u64, range_ps: u64) -> Result<CorrelationHistogram> {
    check_sorted(a, "a")?;
    check_sorted(b, "b")?;
    let mut total = CorrelationHistogram::empty(bin_ps, range_ps)?;
    let starts: Vec<usize> = (0..a.len()).step_by(CHUNK).collect();
    let parts: Vec<CorrelationHistogram> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + CHUNK).min(a.len());
            let t0 = a[s].time_ps.saturating_sub(range_ps);
            let t1 = a[e - 1].time_ps.saturating_add(range_ps);
            let lo = b.partition_point(|t| t.time_ps < t0);
            let hi = b.partition_point(|t| t.time_ps <= t1);
            correlate_chunk(&a[s..e], 0..e - s, &b[lo..hi], bin_ps, range_ps)
        })
        .collect::<Result<_, _>>()?;
    for p in &parts {
        for (t, c) in total.counts.iter_mut().zip(&p.counts) {
            *t += c;
        }
    }
    total.n_a = a.len() as u64;
    total.n_b = b.len() as u64;
    let last = |t: &[TimeTag]| t.last().map_or(0, |x| x.time_ps + 1);
    total.duration_ps = last(a).max(last(b));
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use photonlab_core::correlator::correlate;

    #[test]
    fn matches_serial() {
        let mut t = 0u64;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..200_000u64 {
            t += (i * 7919) % 1000 + 1;
            if i % 3 == 0 {
                b.push(TimeTag::new(1, t));
            } else {
                a.push(TimeTag::new(0, t + i % 5));
            }
        }
        a.sort();
        let serial = correlate(&a, &b, 10, 5000).unwrap();
        for threads in [1, 3] {
            let par = with_threads(threads, || par_correlate(&a, &b, 10, 5000)).unwrap().unwrap();
            assert_eq!(par, serial);
        }
    }

    #[test]
    fn explicit_thread_count() {
        assert_eq!(thread_count(Some(4)).unwrap(), 4);
        assert!(thread_count(Some(0)).is_err());
    }
}
