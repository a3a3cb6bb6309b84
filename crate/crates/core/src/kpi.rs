//! Cell KPIs: 12-bin SNR and timing-advance histograms, the tail
//! descriptors built on them, and throughput percentiles.
//!
//! Bins are half-open `[lower, upper)` with the lower edge inclusive.
//! Descriptor bin indices are 1-based (`ell = 1..=12`) to match the usual
//! KPI naming (`R6`, `D5`, ...).

use serde::Serialize;

use crate::error::{Error, Result};

pub const BINS: usize = 12;

pub const SNR_EDGES_DB: [f64; BINS + 1] = [
    f64::NEG_INFINITY,
    -5.0,
    -2.0,
    1.0,
    4.0,
    7.0,
    10.0,
    13.0,
    16.0,
    19.0,
    22.0,
    25.0,
    f64::INFINITY,
];

/// Timing advance edges in percent of the cell range. Values below the
/// first edge fall into bin 1.
pub const TA_EDGES_PERCENT: [f64; BINS + 1] = [
    5.0,
    15.0,
    25.0,
    35.0,
    45.0,
    55.0,
    65.0,
    75.0,
    85.0,
    95.0,
    105.0,
    115.0,
    f64::INFINITY,
];

/// Stand-in for `R` when every sample sits at or above the split bin.
pub const R_SENTINEL: f64 = 1e3;

/// Percentile fractions of the reward factors, followed by the mean.
pub const PERCENTILES: [f64; 8] = [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45];
pub const FACTOR_LABELS: [&str; 9] = ["p10", "p15", "p20", "p25", "p30", "p35", "p40", "p45", "avg"];
pub const MIN_PERCENTILE_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Histogram12 {
    pub counts: [u64; BINS],
    pub edges: [f64; BINS + 1],
    /// Clamp values below `edges[0]` into the first bin.
    clamp_low: bool,
}

impl Histogram12 {
    pub fn snr() -> Self {
        Histogram12 {
            counts: [0; BINS],
            edges: SNR_EDGES_DB,
            clamp_low: false,
        }
    }

    pub fn ta() -> Self {
        Histogram12 {
            counts: [0; BINS],
            edges: TA_EDGES_PERCENT,
            clamp_low: true,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// 0-based bin of `x`. NaN goes to the first bin.
    pub fn bin_index(&self, x: f64) -> usize {
        if x.is_nan() || x < self.edges[1] {
            return 0;
        }
        // edges[BINS] is +inf, so a match always exists below it except for +inf itself
        (1..BINS)
            .rev()
            .find(|&i| x >= self.edges[i])
            .unwrap_or(BINS - 1)
    }

    pub fn add(&mut self, x: f64) {
        let i = self.bin_index(x);
        self.counts[i] += 1;
    }

    /// Elementwise sum; both histograms must share edges.
    pub fn merge(&mut self, other: &Histogram12) {
        debug_assert_eq!(self.edges, other.edges);
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    fn tail(&self, ell: usize) -> u64 {
        self.counts[ell - 1..].iter().sum()
    }

    /// Ratio of samples in bins `ell..=12` to those in `1..ell`.
    ///
    /// A zero denominator yields `sentinel`.
    pub fn descriptor_r(&self, ell: usize, sentinel: f64) -> Result<f64> {
        if !(2..=BINS).contains(&ell) {
            return Err(Error::invalid(format!("R descriptor bin {ell} outside 2..=12")));
        }
        if self.is_empty() {
            return Err(Error::UndefinedDescriptor("empty histogram".into()));
        }
        let above = self.tail(ell);
        let below = self.total() - above;
        if below == 0 {
            return Ok(sentinel);
        }
        Ok(above as f64 / below as f64)
    }

    /// Fraction of samples in bins `ell..=12`, an empirical CCDF.
    pub fn descriptor_d(&self, ell: usize) -> Result<f64> {
        if !(1..=BINS).contains(&ell) {
            return Err(Error::invalid(format!("D descriptor bin {ell} outside 1..=12")));
        }
        if self.is_empty() {
            return Err(Error::UndefinedDescriptor("empty histogram".into()));
        }
        Ok(self.tail(ell) as f64 / self.total() as f64)
    }
}

pub fn bin_snr(mut h: Histogram12, snr_db: f64) -> Histogram12 {
    h.add(snr_db);
    h
}

pub fn bin_ta(mut h: Histogram12, ta_percent: f64) -> Result<Histogram12> {
    if ta_percent < 0.0 || ta_percent.is_nan() {
        return Err(Error::invalid(format!("negative timing advance {ta_percent}")));
    }
    h.add(ta_percent);
    Ok(h)
}

/// Quantile of already sorted data by linear interpolation between the
/// closest ranks: position `h = (n - 1) q`, blend of `x[floor h]` and
/// `x[floor h + 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Throughput reward factors in bits/s: p10, p15, ..., p45 and the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputStats {
    pub values: [f64; 9],
}

impl ThroughputStats {
    pub fn percentile(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn mean(&self) -> f64 {
        self.values[8]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ThroughputStats {
            values: self.values.map(|v| v * factor),
        }
    }
}

pub fn throughput_percentiles(samples: &[f64]) -> Result<ThroughputStats> {
    if samples.len() < MIN_PERCENTILE_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_PERCENTILE_SAMPLES,
            got: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut values = [0.0; 9];
    for (v, &q) in values.iter_mut().zip(PERCENTILES.iter()) {
        *v = quantile(&sorted, q);
    }
    values[8] = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(ThroughputStats { values })
}

/// Everything the network reports about one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellKpiReport {
    pub snr_hist: Histogram12,
    pub ta_hist: Histogram12,
    /// Mean SRS SNR over all UEs and SRS occasions of the step (dB).
    pub mean_gamma_db: f64,
    /// `None` when too few UEs were scheduled to form percentiles.
    pub throughput: Option<ThroughputStats>,
}

impl CellKpiReport {
    pub const CSV_HEADER_PREFIX: &'static str = "step,zeta,xi,mean_snr";

    pub fn csv_header() -> String {
        let mut cols = vec![Self::CSV_HEADER_PREFIX.to_string()];
        cols.extend((1..=BINS).map(|i| format!("snr_bin{i}")));
        cols.extend((1..=BINS).map(|i| format!("ta_bin{i}")));
        cols.extend(FACTOR_LABELS.iter().map(|l| format!("tput_{l}")));
        cols.join(",")
    }

    /// One CSV row; missing throughput stats are written as empty fields.
    pub fn csv_row(&self, step: usize, zeta: f64, xi: f64) -> String {
        let mut cols = vec![
            step.to_string(),
            zeta.to_string(),
            xi.to_string(),
            self.mean_gamma_db.to_string(),
        ];
        cols.extend(self.snr_hist.counts.iter().map(u64::to_string));
        cols.extend(self.ta_hist.counts.iter().map(u64::to_string));
        match &self.throughput {
            Some(t) => cols.extend(t.values.iter().map(f64::to_string)),
            None => cols.extend(std::iter::repeat_n(String::new(), 9)),
        }
        cols.join(",")
    }
}
