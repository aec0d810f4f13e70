//! Per-delay hazards, delay-bin proposal and the Kaplan-Meier link.
//!
//! For an exponential `Ũ` and a model with one exposure per delay, the
//! likelihood without its truncation term is maximised at
//!
//! ```text
//! α_d = -ln(1 - N_{=d} / N_{>=d})
//! ```
//!
//! so `Π_{i<=d} e^{-α_i}` is exactly the Kaplan-Meier survival curve. The
//! hazard table is also the input to [`propose_bins`], which groups delays
//! with roughly constant `α_d` into the bins of the `delay_bins` effect.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counts::CountTriangle;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BinError {
    #[error("delay bins must start at delay 0")]
    MissingZero,
    #[error("delay bin starts must be strictly increasing (at position {0})")]
    NotIncreasing(usize),
    #[error("hazard table is empty")]
    EmptyTable,
}

/// Contiguous delay bins `[starts[b], starts[b+1])`; the last bin is
/// `[starts[last], ∞)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct DelayBins {
    starts: Vec<u32>,
}

impl DelayBins {
    pub fn new(starts: Vec<u32>) -> Result<Self, BinError> {
        if starts.first() != Some(&0) {
            return Err(BinError::MissingZero);
        }
        if let Some(i) = starts.windows(2).position(|w| w[0] >= w[1]) {
            return Err(BinError::NotIncreasing(i + 1));
        }
        Ok(DelayBins { starts })
    }

    /// One bin per delay `0..n-1` plus the open bin `[n, ∞)`.
    pub fn singletons(n: u32) -> Self {
        DelayBins {
            starts: (0..=n).collect(),
        }
    }

    pub fn starts(&self) -> &[u32] {
        &self.starts
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bin_of(&self, delay: u32) -> usize {
        self.starts.partition_point(|&s| s <= delay) - 1
    }

    /// Inclusive upper end of bin `b`, `None` for the open last bin.
    pub fn end(&self, b: usize) -> Option<u32> {
        self.starts.get(b + 1).map(|s| s - 1)
    }

    pub fn label(&self, b: usize) -> String {
        let lo = self.starts[b];
        match self.end(b) {
            None => format!("{lo}+"),
            Some(hi) if hi == lo => format!("{lo}"),
            Some(hi) => format!("{lo}-{hi}"),
        }
    }

    /// True when every boundary of `coarser` is also a boundary here.
    pub fn refines(&self, coarser: &DelayBins) -> bool {
        coarser
            .starts
            .iter()
            .all(|s| self.starts.binary_search(s).is_ok())
    }
}

impl TryFrom<Vec<u32>> for DelayBins {
    type Error = BinError;
    fn try_from(v: Vec<u32>) -> Result<Self, BinError> {
        DelayBins::new(v)
    }
}

impl From<DelayBins> for Vec<u32> {
    fn from(b: DelayBins) -> Vec<u32> {
        b.starts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardRow {
    pub delay: u32,
    pub count_equal: u64,
    pub count_geq: u64,
    /// `-ln(1 - count_equal / count_geq)`; infinite when the risk set is
    /// exhausted.
    pub hazard: f64,
}

/// Hazard exposures for delays `0..=max observed delay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardTable {
    rows: Vec<HazardRow>,
}

impl HazardTable {
    /// Builds the table from observed delay counts, ignoring truncation.
    pub fn from_delay_counts(counts: &BTreeMap<u32, u64>) -> Self {
        let max = counts.keys().next_back().copied();
        let mut rows = Vec::new();
        if let Some(max) = max {
            let mut geq: u64 = counts.values().sum();
            for d in 0..=max {
                let eq = counts.get(&d).copied().unwrap_or(0);
                rows.push(HazardRow {
                    delay: d,
                    count_equal: eq,
                    count_geq: geq,
                    hazard: hazard_exposure(eq, geq),
                });
                geq -= eq;
            }
        }
        HazardTable { rows }
    }

    pub fn from_delays(delays: &[u32]) -> Self {
        let mut counts = BTreeMap::new();
        for &d in delays {
            *counts.entry(d).or_insert(0) += 1;
        }
        HazardTable::from_delay_counts(&counts)
    }

    pub fn rows(&self) -> &[HazardRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn hazard(&self, d: u32) -> Option<f64> {
        self.rows.get(d as usize).map(|r| r.hazard)
    }

    /// Mean log-hazard over the delays of each bin, skipping zero and
    /// infinite hazards. `None` for bins without a usable delay.
    pub fn bin_log_hazards(&self, bins: &DelayBins) -> Vec<Option<f64>> {
        let mut sums = alloc::vec![(0.0, 0usize); bins.len()];
        for r in &self.rows {
            if r.hazard > 0.0 && r.hazard.is_finite() {
                let b = bins.bin_of(r.delay);
                sums[b].0 += libm::log(r.hazard);
                sums[b].1 += 1;
            }
        }
        sums.into_iter()
            .map(|(s, n)| (n > 0).then(|| s / n as f64))
            .collect()
    }
}

fn hazard_exposure(eq: u64, geq: u64) -> f64 {
    if eq == 0 {
        0.0
    } else if eq == geq {
        f64::INFINITY
    } else {
        -libm::log1p(-(eq as f64) / geq as f64)
    }
}

pub fn hazard_table(triangle: &CountTriangle) -> HazardTable {
    HazardTable::from_delay_counts(&triangle.delay_counts())
}

/// Knobs of [`propose_bins`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinOptions {
    /// Delays `0..min_singleton` always get their own bin.
    pub min_singleton: u32,
    /// Split a bin when a log-hazard deviates from the bin mean by more
    /// than this.
    pub threshold: f64,
    /// Bins starting at delay `d` wider than `d * (growth - 1)` are split
    /// already at half the threshold.
    pub growth: f64,
    /// A delay whose hazard exceeds both neighbours by this factor becomes
    /// a singleton.
    pub spike_factor: f64,
    /// Minimum events at a spike delay.
    pub min_spike_events: u64,
    /// Minimum events on each side of a split.
    pub min_bin_events: u64,
    /// A deviation only counts when it also exceeds this many standard
    /// errors of the delay's log-hazard, `sqrt((1 - h) / N_=d)`.
    pub noise_z: f64,
}

impl Default for BinOptions {
    fn default() -> Self {
        BinOptions {
            min_singleton: 8,
            threshold: 0.15,
            growth: 1.5,
            spike_factor: 3.0,
            min_spike_events: 10,
            min_bin_events: 20,
            noise_z: 3.0,
        }
    }
}

/// Groups delays with approximately constant hazard exposure.
///
/// The first `min_singleton` delays and hazard spikes become singletons.
/// Each remaining stretch is split recursively at the point minimising the
/// within-bin sum of squared log-hazard deviations, for as long as a bin
/// holds a delay further than `threshold` from its mean (or half that for
/// bins wider than the geometric width cap) and further than `noise_z`
/// standard errors. Lowering `threshold` therefore only adds boundaries.
pub fn propose_bins(table: &HazardTable, opts: &BinOptions) -> Result<DelayBins, BinError> {
    if table.is_empty() {
        return Err(BinError::EmptyTable);
    }
    let rows = table.rows();
    let n = rows.len() as u32;
    let log_h: Vec<Option<f64>> = rows
        .iter()
        .map(|r| (r.hazard > 0.0 && r.hazard.is_finite()).then(|| libm::log(r.hazard)))
        .collect();

    let mut fixed: Vec<u32> = (0..opts.min_singleton.min(n)).collect();
    let mut spikes = Vec::new();
    for d in opts.min_singleton.max(1)..n.saturating_sub(1) {
        let r = &rows[d as usize];
        let left = rows[d as usize - 1].hazard;
        let right = rows[d as usize + 1].hazard;
        if r.count_equal >= opts.min_spike_events
            && r.hazard.is_finite()
            && right.is_finite()
            && r.hazard > opts.spike_factor * left.max(right)
        {
            spikes.push(d);
        }
    }
    for &d in &spikes {
        fixed.push(d);
        fixed.push(d + 1);
    }
    if n > opts.min_singleton {
        fixed.push(opts.min_singleton);
    }
    fixed.sort_unstable();
    fixed.dedup();
    fixed.retain(|&d| d < n);

    let mut starts = fixed.clone();
    for (i, &a) in fixed.iter().enumerate() {
        if a < opts.min_singleton || spikes.binary_search(&a).is_ok() {
            continue;
        }
        let b = fixed.get(i + 1).copied().unwrap_or(n);
        split_segment(rows, &log_h, a, b, opts, &mut starts);
    }
    starts.sort_unstable();
    starts.dedup();
    DelayBins::new(starts)
}

fn split_segment(
    rows: &[HazardRow],
    log_h: &[Option<f64>],
    a: u32,
    b: u32,
    opts: &BinOptions,
    starts: &mut Vec<u32>,
) {
    let vals: Vec<(u32, f64)> = (a..b)
        .filter_map(|d| log_h[d as usize].map(|v| (d, v)))
        .collect();
    if vals.len() < 2 {
        return;
    }
    let mean = vals.iter().map(|v| v.1).sum::<f64>() / vals.len() as f64;
    let cap = ((a as f64) * (opts.growth - 1.0)).max(1.0);
    let threshold = if (b - a) as f64 > cap {
        0.5 * opts.threshold
    } else {
        opts.threshold
    };
    let deviates = vals.iter().any(|&(d, v)| {
        let r = &rows[d as usize];
        let se = libm::sqrt((1.0 - r.hazard).max(0.0) / r.count_equal as f64);
        (v - mean).abs() > threshold.max(opts.noise_z * se)
    });
    if !deviates {
        return;
    }
    let events = |lo: u32, hi: u32| -> u64 {
        rows[lo as usize..hi as usize]
            .iter()
            .map(|r| r.count_equal)
            .sum()
    };
    let mut best: Option<(f64, u32)> = None;
    for k in 1..vals.len() {
        let cut = vals[k].0;
        if events(a, cut) < opts.min_bin_events || events(cut, b) < opts.min_bin_events {
            continue;
        }
        let cost = sse(&vals[..k]) + sse(&vals[k..]);
        if best.map_or(true, |(c, _)| cost < c) {
            best = Some((cost, cut));
        }
    }
    if let Some((_, cut)) = best {
        starts.push(cut);
        split_segment(rows, log_h, a, cut, opts, starts);
        split_segment(rows, log_h, cut, b, opts, starts);
    }
}

fn sse(vals: &[(u32, f64)]) -> f64 {
    let m = vals.iter().map(|v| v.1).sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v.1 - m) * (v.1 - m)).sum()
}

/// Kaplan-Meier survival `Ŝ(d) = Π_{i<=d} (1 - N_{=i}/N_{>=i})` for
/// `d = 0..=max delay`.
pub fn kaplan_meier(table: &HazardTable) -> Vec<f64> {
    let mut s = 1.0;
    table
        .rows()
        .iter()
        .map(|r| {
            s *= 1.0 - r.count_equal as f64 / r.count_geq as f64;
            s
        })
        .collect()
}

pub fn kaplan_meier_from_delays(delays: &[u32]) -> Vec<f64> {
    kaplan_meier(&HazardTable::from_delays(delays))
}

/// Maximiser of `-R α + N ln(1 - e^{-α})`, the per-delay likelihood once
/// truncation is ignored (`R` events with a longer delay, `N` at this
/// delay). The score `-R + N/(e^α - 1)` is convex and decreasing, so Newton's
/// method started below the root (at `N/(N+R)`) climbs to it monotonically.
pub fn fit_delay_exposure(n: u64, r: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if r == 0 {
        return f64::INFINITY;
    }
    let (n, r) = (n as f64, r as f64);
    let mut a = n / (n + r);
    for _ in 0..200 {
        let em1 = libm::expm1(a);
        let score = -r + n / em1;
        let slope = -n * (em1 + 1.0) / (em1 * em1);
        let step = -score / slope;
        if !(step > 1e-17 * a) {
            break;
        }
        a += step;
    }
    a
}

/// Model and Kaplan-Meier survival curves from the per-delay fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCheck {
    pub model_survival: Vec<f64>,
    pub km_survival: Vec<f64>,
    pub max_deviation: f64,
}

/// Fits one exposure per observed delay (truncation term dropped) and
/// compares `Π e^{-α_i}` with the Kaplan-Meier estimator.
pub fn km_equivalence_check(triangle: &CountTriangle) -> KmCheck {
    km_check_table(&hazard_table(triangle))
}

pub fn km_check_table(table: &HazardTable) -> KmCheck {
    let km_survival = kaplan_meier(table);
    let mut cum = 0.0;
    let model_survival: Vec<f64> = table
        .rows()
        .iter()
        .map(|r| {
            cum += fit_delay_exposure(r.count_equal, r.count_geq - r.count_equal);
            libm::exp(-cum)
        })
        .collect();
    let max_deviation = model_survival
        .iter()
        .zip(&km_survival)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    KmCheck {
        model_survival,
        km_survival,
        max_deviation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hand_table() {
        let t = HazardTable::from_delays(&[0, 0, 1, 2]);
        assert_relative_eq!(t.hazard(0).unwrap(), core::f64::consts::LN_2, max_relative = 1e-15);
        assert_relative_eq!(t.hazard(1).unwrap(), core::f64::consts::LN_2, max_relative = 1e-15);
        assert_eq!(t.hazard(2), Some(f64::INFINITY));
        let gap = HazardTable::from_delays(&[0, 2, 2]);
        assert_eq!(gap.hazard(1), Some(0.0));
    }

    #[test]
    fn hand_kaplan_meier() {
        assert_eq!(kaplan_meier_from_delays(&[0, 0, 1, 2]), vec![0.5, 0.25, 0.0]);
        assert_eq!(kaplan_meier_from_delays(&[0, 0, 0]), vec![0.0]);
        assert!(km_check_table(&HazardTable::from_delays(&[0, 0, 1, 2])).max_deviation < 1e-15);
    }

    #[test]
    fn delay_bins_basics() {
        let b = DelayBins::new(vec![0, 1, 2, 7, 30]).unwrap();
        assert_eq!(b.bin_of(0), 0);
        assert_eq!(b.bin_of(6), 2);
        assert_eq!(b.bin_of(7), 3);
        assert_eq!(b.bin_of(10_000), 4);
        assert_eq!(b.label(2), "2-6");
        assert_eq!(b.label(1), "1");
        assert_eq!(b.label(4), "30+");
        assert_eq!(DelayBins::new(vec![1, 2]), Err(BinError::MissingZero));
        assert_eq!(DelayBins::new(vec![0, 2, 2]), Err(BinError::NotIncreasing(2)));
    }

    /// `2^20` events, half of the remaining risk set observed each day.
    fn constant_hazard_table() -> HazardTable {
        let mut counts = BTreeMap::new();
        for d in 0..20u32 {
            counts.insert(d, 1u64 << (19 - d));
        }
        *counts.get_mut(&19).unwrap() += 1;
        HazardTable::from_delay_counts(&counts)
    }

    #[test]
    fn constant_hazard_collapses() {
        let t = constant_hazard_table();
        assert_eq!(t.hazard(19), Some(f64::INFINITY));
        let bins = propose_bins(&t, &BinOptions::default()).unwrap();
        assert_eq!(bins, DelayBins::singletons(8));
    }

    /// Geometric risk set with a 10x hazard at delay 14.
    fn spike_table() -> HazardTable {
        let base = 0.05f64;
        let mut at_risk = 1e9f64;
        let mut counts = BTreeMap::new();
        for d in 0..120u32 {
            let a = if d == 14 { 10.0 * base } else { base };
            let n = libm::round(at_risk * -libm::expm1(-a));
            counts.insert(d, n as u64);
            at_risk -= n;
        }
        counts.insert(120, at_risk as u64);
        HazardTable::from_delay_counts(&counts)
    }

    #[test]
    fn spike_is_singleton() {
        let bins = propose_bins(&spike_table(), &BinOptions::default()).unwrap();
        let b = bins.bin_of(14);
        assert_eq!(bins.starts()[b], 14);
        assert_eq!(bins.end(b), Some(14));
    }

    #[test]
    fn lower_threshold_refines() {
        let mut counts = BTreeMap::new();
        let mut at_risk = 1e7f64;
        for d in 0..200u32 {
            // Slowly decaying hazard with a weekly ripple.
            let a = 0.3 / (1.0 + 0.05 * d as f64) * (1.0 + 0.3 * libm::sin(d as f64));
            let n = libm::round(at_risk * -libm::expm1(-a));
            counts.insert(d, n as u64);
            at_risk -= n;
        }
        let t = HazardTable::from_delay_counts(&counts);
        let mut prev = propose_bins(&t, &BinOptions { threshold: 1.0, ..Default::default() }).unwrap();
        for th in [0.5, 0.3, 0.15, 0.05, 0.01] {
            let next = propose_bins(&t, &BinOptions { threshold: th, ..Default::default() }).unwrap();
            assert!(next.refines(&prev), "{th}");
            prev = next;
        }
    }

    #[test]
    fn delay_fit_matches_closed_form() {
        for (n, r) in [(1u64, 1u64), (5, 1000), (1000, 5), (123_456, 7_890_123)] {
            let a = fit_delay_exposure(n, r);
            let expect = -libm::log1p(-(n as f64) / (n + r) as f64);
            assert_relative_eq!(a, expect, max_relative = 1e-12);
        }
        assert_eq!(fit_delay_exposure(0, 5), 0.0);
        assert_eq!(fit_delay_exposure(5, 0), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn km_identity(delays in prop::collection::vec(0u32..40, 1..400)) {
            let c = km_check_table(&HazardTable::from_delays(&delays));
            prop_assert!(c.max_deviation <= 1e-10);
            prop_assert_eq!(*c.km_survival.last().unwrap(), 0.0);
            prop_assert!(c.km_survival.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn table_invariants(delays in prop::collection::vec(0u32..40, 1..400)) {
            let t = HazardTable::from_delays(&delays);
            for w in t.rows().windows(2) {
                prop_assert!(w[1].count_geq <= w[0].count_geq);
            }
            for r in t.rows() {
                prop_assert!(r.count_equal <= r.count_geq);
                prop_assert!(r.hazard >= 0.0);
                prop_assert_eq!(r.hazard.is_infinite(), r.count_equal == r.count_geq && r.count_equal > 0);
            }
        }

        #[test]
        fn proposal_is_deterministic_partition(delays in prop::collection::vec(0u32..80, 1..600)) {
            let t = HazardTable::from_delays(&delays);
            let a = propose_bins(&t, &BinOptions::default()).unwrap();
            let b = propose_bins(&t, &BinOptions::default()).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.starts()[0], 0);
            for d in 0..100 {
                let k = a.bin_of(d);
                prop_assert!(a.starts()[k] <= d);
                prop_assert!(a.end(k).map_or(true, |e| d <= e));
            }
        }
    }
}
