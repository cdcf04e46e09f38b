//! Start-stop correlation of sorted time-tag streams.
//!
//! Bins are centred on multiples of the bin width and rounded symmetrically:
//! a delay `d` lands in bin `sign(d) * floor((2|d| + bin) / (2 bin))`, so a
//! delay on a bin edge goes to the bin farther from zero. This makes
//! `correlate(a, b)` the exact mirror of `correlate(b, a)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, TimeTag};

/// Binned delays `t_b - t_a` within `[-range_ps, range_ps]`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrelationHistogram {
    pub bin_ps: u64,
    pub range_ps: u64,
    /// `2 J + 1` bins; bin `i` is centred on `(i - J) * bin_ps`.
    pub counts: Vec<u64>,
    pub n_a: u64,
    pub n_b: u64,
    pub duration_ps: u64,
}

impl CorrelationHistogram {
    pub fn empty(bin_ps: u64, range_ps: u64) -> Result<Self> {
        if bin_ps == 0 {
            return Err(Error::Binning("bin width must be positive"));
        }
        if range_ps > TimeTag::MAX_TIME_PS / 4 {
            return Err(Error::Binning("correlation range too large"));
        }
        let j = half_bins(bin_ps, range_ps);
        Ok(Self { bin_ps, range_ps, counts: vec![0; 2 * j + 1], n_a: 0, n_b: 0, duration_ps: 0 })
    }

    /// Index of the zero-delay bin.
    pub fn zero_bin(&self) -> usize {
        self.counts.len() / 2
    }

    pub fn bin_center_ps(&self, i: usize) -> i64 {
        (i as i64 - self.zero_bin() as i64) * self.bin_ps as i64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Add another histogram with the same binning, e.g. from a chunk of `a`.
    pub fn merge(&mut self, other: &CorrelationHistogram) -> Result<()> {
        if other.bin_ps != self.bin_ps || other.range_ps != self.range_ps {
            return Err(Error::Binning("cannot merge histograms with different binning"));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.n_a += other.n_a;
        self.n_b = self.n_b.max(other.n_b);
        self.duration_ps = self.duration_ps.max(other.duration_ps);
        Ok(())
    }

    /// The histogram with the delay axis negated.
    pub fn mirrored(&self) -> Self {
        let mut m = self.clone();
        m.counts.reverse();
        core::mem::swap(&mut m.n_a, &mut m.n_b);
        m
    }
}

fn half_bins(bin: u64, range: u64) -> usize {
    ((2 * range + bin) / (2 * bin)) as usize
}

/// Signed bin index of delay `d`.
pub fn bin_index(d: i64, bin: i64) -> i64 {
    let m = (2 * d.abs() + bin) / (2 * bin);
    if d < 0 {
        -m
    } else {
        m
    }
}

/// [`bin_index`] with the division replaced by a reciprocal multiply and an
/// exact integer correction.
#[derive(Debug, Clone, Copy)]
struct Binner {
    bin: i64,
    two_bin: i64,
    inv: f64,
}

impl Binner {
    fn new(bin: i64) -> Self {
        Self { bin, two_bin: 2 * bin, inv: 1.0 / (2 * bin) as f64 }
    }

    #[inline]
    fn index(&self, d: i64) -> i64 {
        let n = 2 * d.abs() + self.bin;
        let mut m = (n as f64 * self.inv) as i64;
        if m * self.two_bin > n {
            m -= 1;
        } else if (m + 1) * self.two_bin <= n {
            m += 1;
        }
        if d < 0 {
            -m
        } else {
            m
        }
    }
}

/// Largest delay that still maps to bin `idx`.
fn bin_upper(idx: i64, bin: i64) -> i64 {
    if idx > 0 {
        ((2 * idx + 1) * bin - 1).div_euclid(2)
    } else if idx == 0 {
        (bin - 1) / 2
    } else {
        -((-2 * idx - 1) * bin + 1).div_euclid(2)
    }
}

pub fn check_sorted(tags: &[TimeTag], stream: &'static str) -> Result<()> {
    match tags.windows(2).position(|w| w[1].time_ps < w[0].time_ps) {
        Some(i) => Err(Error::Unsorted { stream, index: i + 1 }),
        None => Ok(()),
    }
}

fn last_time(a: &[TimeTag], b: &[TimeTag]) -> u64 {
    let last = |t: &[TimeTag]| t.last().map_or(0, |x| x.time_ps + 1);
    last(a).max(last(b))
}

/// Histogram bins updated per pass over `a`; keeps the live slice of `counts`
/// in cache for wide histograms.
const TILE_BINS: usize = 8192;

/// Accumulate delays for every `a` tag into `counts`. With `skip_self`, `a` and
/// `b` are the same slice and the pair of a tag with itself is skipped.
///
/// The histogram is filled tile by tile; each `a` tag remembers where its scan
/// of `b` stopped, so every pair is still visited exactly once.
fn accumulate(a: &[TimeTag], b: &[TimeTag], a_offset: usize, skip_self: bool, bin: u64, range: u64, counts: &mut [u64]) {
    let n = counts.len();
    let j = (n / 2) as i64;
    let bin = bin as i64;
    let binner = Binner::new(bin);
    let range_i = range as i64;
    let mut next = Vec::with_capacity(a.len());
    let mut lo = 0usize;
    for ta in a {
        while lo < b.len() && b[lo].time_ps + range < ta.time_ps {
            lo += 1;
        }
        next.push(lo);
    }
    let mut start = 0;
    while start < n {
        let end = (start + TILE_BINS).min(n);
        let d_max = if end == n { range_i } else { bin_upper(end as i64 - 1 - j, bin).min(range_i) };
        for (ia, ta) in a.iter().enumerate() {
            let t = ta.time_ps as i64;
            let mut idx = i64::MIN;
            let mut upper = i64::MIN;
            let mut jb = next[ia];
            while jb < b.len() {
                let d = b[jb].time_ps as i64 - t;
                if d > d_max {
                    break;
                }
                if !(skip_self && jb == ia + a_offset) {
                    if d > upper {
                        idx = binner.index(d);
                        upper = bin_upper(idx, bin);
                    }
                    counts[(idx + j) as usize] += 1;
                }
                jb += 1;
            }
            next[ia] = jb;
        }
        start = end;
    }
}

/// Histogram of `t_b - t_a` for all pairs with `|t_b - t_a| <= range_ps`.
pub fn correlate(a: &[TimeTag], b: &[TimeTag], bin_ps: u64, range_ps: u64) -> Result<CorrelationHistogram> {
    check_sorted(a, "a")?;
    check_sorted(b, "b")?;
    let mut h = CorrelationHistogram::empty(bin_ps, range_ps)?;
    accumulate(a, b, 0, false, bin_ps, range_ps, &mut h.counts);
    h.n_a = a.len() as u64;
    h.n_b = b.len() as u64;
    h.duration_ps = last_time(a, b);
    Ok(h)
}

/// Correlation of a stream with itself, excluding each tag paired with itself.
pub fn autocorrelate(tags: &[TimeTag], bin_ps: u64, range_ps: u64) -> Result<CorrelationHistogram> {
    check_sorted(tags, "a")?;
    let mut h = CorrelationHistogram::empty(bin_ps, range_ps)?;
    accumulate(tags, tags, 0, true, bin_ps, range_ps, &mut h.counts);
    h.n_a = tags.len() as u64;
    h.n_b = tags.len() as u64;
    h.duration_ps = last_time(tags, tags);
    Ok(h)
}

/// Contribution of `a[start..end]` against all of `b`. Summing the chunks of any
/// partition of `a` with [`CorrelationHistogram::merge`] reproduces [`correlate`].
pub fn correlate_chunk(
    a: &[TimeTag],
    range: core::ops::Range<usize>,
    b: &[TimeTag],
    bin_ps: u64,
    range_ps: u64,
) -> Result<CorrelationHistogram> {
    let mut h = CorrelationHistogram::empty(bin_ps, range_ps)?;
    let chunk = &a[range];
    accumulate(chunk, b, 0, false, bin_ps, range_ps, &mut h.counts);
    h.n_a = chunk.len() as u64;
    h.n_b = b.len() as u64;
    h.duration_ps = last_time(a, b);
    Ok(h)
}

/// Long-range correlation with bins of one repetition period, centred on pulses.
pub fn coarse_correlate(a: &[TimeTag], b: &[TimeTag], period_ps: u64, range_ps: u64) -> Result<CorrelationHistogram> {
    if period_ps == 0 {
        return Err(Error::Binning("repetition period must be positive"));
    }
    correlate(a, b, period_ps, range_ps)
}

/// Integrated coincidences of each peak of a pulsed correlation histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeakAreas {
    pub period_ps: u64,
    pub window_ps: u64,
    /// Peaks `-k..=k`; `areas[m + k]` belongs to the peak at `m * period_ps`.
    pub areas: Vec<u64>,
}

impl PeakAreas {
    /// Largest peak index present.
    pub fn max_index(&self) -> i64 {
        (self.areas.len() / 2) as i64
    }

    pub fn area(&self, m: i64) -> Option<u64> {
        let k = self.max_index();
        (m.abs() <= k).then(|| self.areas[(m + k) as usize])
    }

    pub fn central(&self) -> u64 {
        self.areas[self.areas.len() / 2]
    }
}

/// Sum `hist` over a window centred on each multiple of `period_ps`.
pub fn peak_areas(hist: &CorrelationHistogram, period_ps: u64, window_ps: u64) -> Result<PeakAreas> {
    let bin = hist.bin_ps;
    if window_ps == 0 || window_ps > period_ps {
        return Err(Error::Binning("integration window must lie in (0, period]"));
    }
    if window_ps % bin != 0 || period_ps % bin != 0 {
        return Err(Error::Binning("bin width must divide both window and period"));
    }
    let w = window_ps / bin;
    if w % 2 == 0 {
        return Err(Error::Binning("window must span an odd number of bins"));
    }
    let half = (w / 2) as i64;
    let step = (period_ps / bin) as i64;
    let j = hist.zero_bin() as i64;
    if j < half {
        return Err(Error::Binning("histogram narrower than one window"));
    }
    let k = (j - half) / step;
    let areas = (-k..=k)
        .map(|m| {
            let c = j + m * step;
            hist.counts[(c - half) as usize..=(c + half) as usize].iter().sum()
        })
        .collect();
    Ok(PeakAreas { period_ps, window_ps, areas })
}

/// Start-stop histogram of tag times modulo the trigger period.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TcspcHistogram {
    pub period_ps: u64,
    pub bin_ps: u64,
    /// Bin `i` covers `[i * bin_ps, (i + 1) * bin_ps)`.
    pub counts: Vec<u64>,
}

impl TcspcHistogram {
    pub fn bin_center_ps(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_ps as f64
    }
}

/// Histogram of `t mod period` over `[0, range_ps)`.
pub fn tcspc(tags: &[TimeTag], period_ps: u64, range_ps: u64, bin_ps: u64) -> Result<TcspcHistogram> {
    if bin_ps == 0 || period_ps == 0 {
        return Err(Error::Binning("bin width and period must be positive"));
    }
    let n = range_ps.div_ceil(bin_ps) as usize;
    let mut counts = vec![0u64; n];
    for t in tags {
        let phase = t.time_ps % period_ps;
        if phase < range_ps {
            counts[(phase / bin_ps) as usize] += 1;
        }
    }
    Ok(TcspcHistogram { period_ps, bin_ps, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(times: &[u64]) -> Vec<TimeTag> {
        times.iter().map(|&t| TimeTag::new(0, t)).collect()
    }

    #[test]
    fn single_pair_lands_in_centred_bin() {
        let h = correlate(&tags(&[0]), &tags(&[100]), 10, 1000).unwrap();
        let i = h.counts.iter().position(|&c| c == 1).unwrap();
        assert_eq!(h.bin_center_ps(i), 100);
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn edge_delays_round_away_from_zero() {
        assert_eq!(bin_index(5, 10), 1);
        assert_eq!(bin_index(-5, 10), -1);
        assert_eq!(bin_index(4, 10), 0);
        assert_eq!(bin_index(-4, 10), 0);
        for bin in [1i64, 2, 7, 10, 30] {
            for idx in -5..=5 {
                let up = bin_upper(idx, bin);
                assert_eq!(bin_index(up, bin), idx);
                assert_eq!(bin_index(up + 1, bin), idx + 1);
            }
        }
    }

    #[test]
    fn empty_and_unsorted() {
        let h = correlate(&[], &tags(&[1, 2]), 10, 100).unwrap();
        assert_eq!(h.total(), 0);
        let err = correlate(&tags(&[5, 3]), &[], 10, 100).unwrap_err();
        assert_eq!(err, Error::Unsorted { stream: "a", index: 1 });
    }

    #[test]
    fn autocorrelation_skips_self_pairs_only() {
        let h = autocorrelate(&tags(&[0, 0, 50]), 10, 100).unwrap();
        // (0,0) twice across distinct tags, (0,50) x2, (50,0) x2.
        assert_eq!(h.total(), 6);
        assert_eq!(h.counts[h.zero_bin()], 2);
    }

    #[test]
    fn peak_areas_of_a_comb() {
        let mut h = CorrelationHistogram::empty(30, 10 * 6570 + 3285).unwrap();
        let j = h.zero_bin();
        for m in -10i64..=10 {
            h.counts[(j as i64 + m * 219) as usize] = 7;
        }
        let p = peak_areas(&h, 6570, 6570).unwrap();
        assert_eq!(p.max_index(), 10);
        assert!(p.areas.iter().all(|&a| a == 7));
        assert!(peak_areas(&h, 6570, 6540).is_err());
        assert!(peak_areas(&h, 6570, 6600).is_err());
    }

    #[test]
    fn tcspc_folds_on_the_period() {
        let h = tcspc(&tags(&[0, 6570, 13140 + 25]), 6570, 6570, 10).unwrap();
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[2], 1);
    }
}
