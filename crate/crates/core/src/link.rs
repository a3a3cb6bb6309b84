//! Per-slot link abstraction: path loss, fractional power control with the
//! MPR cap, block fading, SNR, codebook precoding and AMC.
//!
//! Powers are dBm throughout; the dBW noise expression is converted once.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{Modulation, Waveform};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Rank-1 two-port precoders.
pub const CODEBOOK: [[Complex64; 2]; 4] = [
    [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(FRAC_1_SQRT_2, 0.0)],
    [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(-FRAC_1_SQRT_2, 0.0)],
    [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(0.0, FRAC_1_SQRT_2)],
    [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(0.0, -FRAC_1_SQRT_2)],
];

/// UMa line-of-sight path loss in dB, `28 + 22 log10(d) + 20 log10(fc)`.
pub fn path_loss_uma(distance_m: f64, fc_ghz: f64) -> Result<f64> {
    if !(10.0..=1e4).contains(&distance_m) {
        return Err(Error::invalid(format!(
            "distance {distance_m} m outside the 10 m..10 km model range"
        )));
    }
    if !(fc_ghz > 0.0) {
        return Err(Error::invalid(format!("carrier {fc_ghz} GHz must be positive")));
    }
    Ok(28.0 + 22.0 * distance_m.log10() + 20.0 * fc_ghz.log10())
}

/// Maximum power reduction per waveform and modulation (dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MprTable {
    /// QPSK, 16QAM, 64QAM.
    pub cp_ofdm: [f64; 3],
    pub dft_s_ofdm: [f64; 3],
}

impl Default for MprTable {
    fn default() -> Self {
        MprTable {
            cp_ofdm: [3.0, 3.5, 4.0],
            dft_s_ofdm: [1.0, 1.5, 2.0],
        }
    }
}

impl MprTable {
    pub fn get(&self, waveform: Waveform, modulation: Modulation) -> f64 {
        match waveform {
            Waveform::CpOfdm => self.cp_ofdm[modulation.index()],
            Waveform::DftSOfdm => self.dft_s_ofdm[modulation.index()],
        }
    }

    pub fn min(&self) -> f64 {
        self.cp_ofdm
            .iter()
            .chain(&self.dft_s_ofdm)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        for m in Modulation::ALL {
            let cp = self.get(Waveform::CpOfdm, m);
            let dft = self.get(Waveform::DftSOfdm, m);
            if !(cp >= 0.0 && dft >= 0.0) {
                return Err(Error::invalid(format!("negative MPR for {}", m.label())));
            }
            let gap = cp - dft;
            if !(1.5..=2.5).contains(&gap) {
                return Err(Error::invalid(format!(
                    "CP-OFDM/DFT-S-OFDM MPR gap {gap} dB for {} outside 1.5..=2.5 dB",
                    m.label()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerControlConfig {
    /// Target received power (dBm).
    pub p0_dbm: f64,
    /// Fractional path-loss compensation.
    pub alpha: f64,
    pub p_max_dbm: f64,
    #[serde(default)]
    pub mpr: MprTable,
}

impl Default for PowerControlConfig {
    fn default() -> Self {
        PowerControlConfig {
            p0_dbm: -84.0,
            alpha: 0.8,
            p_max_dbm: 23.0,
            mpr: MprTable::default(),
        }
    }
}

impl PowerControlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !self.p_max_dbm.is_finite() || !self.p0_dbm.is_finite() {
            return Err(Error::invalid("P0 and P_max must be finite"));
        }
        self.mpr.validate()
    }
}

/// `min(P0 + alpha PL, P_max - MPR)` in dBm.
pub fn transmit_power(
    pc: &PowerControlConfig,
    path_loss_db: f64,
    waveform: Waveform,
    modulation: Modulation,
) -> f64 {
    let decided = pc.p0_dbm + pc.alpha * path_loss_db;
    let cap = pc.p_max_dbm - pc.mpr.get(waveform, modulation);
    decided.min(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub subcarrier_spacing_hz: f64,
    pub n_rb: u32,
    pub noise_figure_db: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            subcarrier_spacing_hz: 15_000.0,
            n_rb: 20,
            noise_figure_db: 5.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.subcarrier_spacing_hz > 0.0) || self.n_rb == 0 {
            return Err(Error::invalid("subcarrier spacing and PRB count must be positive"));
        }
        Ok(())
    }

    pub fn bandwidth_hz(&self) -> f64 {
        12.0 * self.subcarrier_spacing_hz * self.n_rb as f64
    }

    pub fn noise_power_dbw(&self) -> f64 {
        -204.0 + 10.0 * self.bandwidth_hz().log10() + self.noise_figure_db
    }
}

/// Thermal noise over the allocation, in dBm.
pub fn noise_power(nc: &NoiseConfig) -> f64 {
    nc.noise_power_dbw() + 30.0
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Flat block-fading channel, `n_rx x n_tx`, row-major, unit mean power per
/// element, evolving as a first-order Gauss-Markov process.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingState {
    h: Vec<Complex64>,
    n_rx: usize,
    n_tx: usize,
    rho: f64,
}

impl FadingState {
    pub fn new(h: Vec<Complex64>, n_rx: usize, n_tx: usize, rho: f64) -> Result<Self> {
        if n_rx == 0 || n_tx == 0 || h.len() != n_rx * n_tx {
            return Err(Error::invalid(format!(
                "channel of {} entries is not {n_rx} x {n_tx}",
                h.len()
            )));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(format!("correlation {rho} outside [0, 1]")));
        }
        Ok(FadingState { h, n_rx, n_tx, rho })
    }

    pub fn random<R: Rng + ?Sized>(n_rx: usize, n_tx: usize, rho: f64, rng: &mut R) -> Result<Self> {
        let h = (0..n_rx * n_tx).map(|_| complex_gaussian(rng)).collect();
        Self::new(h, n_rx, n_tx, rho)
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn get(&self, rx: usize, tx: usize) -> Complex64 {
        self.h[rx * self.n_tx + tx]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.h
    }

    /// `h' = rho h + sqrt(1 - rho^2) w`, one fresh draw per element.
    pub fn evolve<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let innovation = (1.0 - self.rho * self.rho).sqrt();
        for h in &mut self.h {
            *h = *h * self.rho + complex_gaussian(rng) * innovation;
        }
    }

    /// Per receive antenna channel after applying `precoder` on the ports.
    pub fn effective(&self, precoder: &[Complex64]) -> Vec<Complex64> {
        (0..self.n_rx)
            .map(|i| {
                precoder
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| self.get(i, j) * w)
                    .sum()
            })
            .collect()
    }

    /// `sum_i |(h w)_i|^2`.
    pub fn precoded_gain(&self, precoder: &[Complex64]) -> f64 {
        (0..self.n_rx)
            .map(|i| {
                precoder
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| self.get(i, j) * w)
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum()
    }

    /// Receive-combined gain of one port alone.
    pub fn port_gain(&self, port: usize) -> f64 {
        (0..self.n_rx).map(|i| self.get(i, port).norm_sqr()).sum()
    }

    /// Port-averaged gain seen by an unprecoded sounding signal that splits
    /// its power over `ports` ports.
    pub fn sounding_gain(&self, ports: usize) -> f64 {
        (0..ports).map(|p| self.port_gain(p)).sum::<f64>() / ports as f64
    }
}

pub fn evolve_fading<R: Rng + ?Sized>(state: &FadingState, rng: &mut R) -> FadingState {
    let mut next = state.clone();
    next.evolve(rng);
    next
}

/// Index of the codebook entry maximising received power; ties go to the
/// lowest index.
pub fn select_precoder(h: &FadingState, codebook: &[[Complex64; 2]]) -> Result<usize> {
    if h.n_tx() < 2 {
        return Err(Error::invalid("precoder selection needs a two-port channel"));
    }
    if codebook.is_empty() {
        return Err(Error::invalid("empty codebook"));
    }
    let mut best = 0;
    let mut best_gain = f64::NEG_INFINITY;
    for (i, w) in codebook.iter().enumerate() {
        let g = h.precoded_gain(w);
        if g > best_gain {
            best = i;
            best_gain = g;
        }
    }
    Ok(best)
}

/// `P_out - PL + 10 log10(sum_i |h_i|^2) - N0`. A zero channel gives -inf.
pub fn compute_snr(p_out_dbm: f64, path_loss_db: f64, h_eff: &[Complex64], n0_dbm: f64) -> Result<f64> {
    if h_eff.is_empty() {
        return Err(Error::invalid("SNR needs at least one receive antenna"));
    }
    let gain: f64 = h_eff.iter().map(|h| h.norm_sqr()).sum();
    Ok(snr_from_gain(p_out_dbm, path_loss_db, gain, n0_dbm))
}

/// [`compute_snr`] with the channel gain already summed.
pub fn snr_from_gain(p_out_dbm: f64, path_loss_db: f64, gain: f64, n0_dbm: f64) -> f64 {
    if gain <= 0.0 {
        return f64::NEG_INFINITY;
    }
    p_out_dbm - path_loss_db + 10.0 * gain.log10() - n0_dbm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub snr_threshold_db: f64,
    /// bits/s/Hz
    pub spectral_efficiency: f64,
    pub modulation: Modulation,
}

/// AMC ladder. Each threshold is the 10% BLER operating point of its entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<McsEntry>", into = "Vec<McsEntry>")]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl TryFrom<Vec<McsEntry>> for McsTable {
    type Error = Error;

    fn try_from(entries: Vec<McsEntry>) -> Result<Self> {
        McsTable::new(entries)
    }
}

impl From<McsTable> for Vec<McsEntry> {
    fn from(t: McsTable) -> Self {
        t.entries
    }
}

impl Default for McsTable {
    /// CQI-style ladder from QPSK 78/1024 to 64QAM 948/1024.
    fn default() -> Self {
        use Modulation::*;
        let rows = [
            (-6.0, 0.1523, Qpsk),
            (-4.0, 0.2344, Qpsk),
            (-2.2, 0.3770, Qpsk),
            (-0.2, 0.6016, Qpsk),
            (1.8, 0.8770, Qpsk),
            (3.8, 1.1758, Qpsk),
            (5.6, 1.4766, Qam16),
            (7.4, 1.9141, Qam16),
            (9.2, 2.4063, Qam16),
            (11.0, 2.7305, Qam64),
            (12.8, 3.3223, Qam64),
            (14.6, 3.9023, Qam64),
            (16.4, 4.5234, Qam64),
            (18.1, 5.1152, Qam64),
            (19.8, 5.5547, Qam64),
        ];
        let entries = rows
            .into_iter()
            .map(|(snr_threshold_db, spectral_efficiency, modulation)| McsEntry {
                snr_threshold_db,
                spectral_efficiency,
                modulation,
            })
            .collect();
        McsTable::new(entries).expect("default MCS table is valid")
    }
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("MCS table is empty"));
        }
        for pair in entries.windows(2) {
            if !(pair[1].snr_threshold_db > pair[0].snr_threshold_db
                && pair[1].spectral_efficiency > pair[0].spectral_efficiency)
            {
                return Err(Error::invalid(
                    "MCS thresholds and efficiencies must be strictly increasing",
                ));
            }
        }
        Ok(McsTable { entries })
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn lowest_threshold(&self) -> f64 {
        self.entries[0].snr_threshold_db
    }

    /// Highest entry with threshold at or below `snr`, optionally restricted
    /// to one modulation.
    fn pick(&self, snr_db: f64, modulation: Option<Modulation>) -> Option<usize> {
        self.entries
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, e)| modulation.is_none_or(|m| e.modulation == m))
            .find(|(_, e)| e.snr_threshold_db <= snr_db)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRate {
    pub bits_per_s: f64,
    pub outage: bool,
    pub mcs_index: Option<usize>,
}

impl LinkRate {
    pub const OUTAGE: LinkRate = LinkRate {
        bits_per_s: 0.0,
        outage: true,
        mcs_index: None,
    };
}

/// AMC lookup; a closed lower bound, so `snr == threshold` selects the entry.
pub fn map_throughput(snr_db: f64, mcs: &McsTable, bandwidth_hz: f64) -> LinkRate {
    rate_for(mcs, mcs.pick(snr_db, None), bandwidth_hz)
}

fn rate_for(mcs: &McsTable, idx: Option<usize>, bandwidth_hz: f64) -> LinkRate {
    match idx {
        None => LinkRate::OUTAGE,
        Some(i) => LinkRate {
            bits_per_s: mcs.entries[i].spectral_efficiency * bandwidth_hz,
            outage: false,
            mcs_index: Some(i),
        },
    }
}

/// Cell-wide link parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub carrier_ghz: f64,
    pub rx_antennas: usize,
    pub shadowing_sigma_db: f64,
    /// Fixed penetration and body loss on top of the UMa LOS formula.
    pub excess_loss_db: f64,
    /// Slot-to-slot fading correlation.
    pub fading_rho: f64,
    /// Effective-SNR penalty standing in for the higher DFT-S-OFDM BLER.
    pub dfts_snr_penalty_db: f64,
    pub power_control: PowerControlConfig,
    pub noise: NoiseConfig,
    pub mcs: McsTable,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            carrier_ghz: 28.0,
            rx_antennas: 8,
            shadowing_sigma_db: 4.0,
            excess_loss_db: 24.0,
            fading_rho: 0.99,
            dfts_snr_penalty_db: 0.3,
            power_control: PowerControlConfig::default(),
            noise: NoiseConfig::default(),
            mcs: McsTable::default(),
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_ghz > 0.0) || self.rx_antennas == 0 {
            return Err(Error::invalid("carrier and receive antenna count must be positive"));
        }
        if !(0.0..=1.0).contains(&self.fading_rho) {
            return Err(Error::invalid(format!("fading_rho {} outside [0, 1]", self.fading_rho)));
        }
        if self.shadowing_sigma_db < 0.0 || self.dfts_snr_penalty_db < 0.0 {
            return Err(Error::invalid("shadowing sigma and DFT-S-OFDM penalty must be >= 0"));
        }
        self.power_control.validate()?;
        self.noise.validate()
    }

    pub fn noise_dbm(&self) -> f64 {
        noise_power(&self.noise)
    }

    /// SNR estimated from the unprecoded SRS of a UE on `waveform`.
    pub fn srs_snr(&self, path_loss_db: f64, waveform: Waveform, fading: &FadingState) -> f64 {
        let p = transmit_power(&self.power_control, path_loss_db, waveform, Modulation::Qpsk);
        let gain = fading.sounding_gain(waveform.ports());
        snr_from_gain(p, path_loss_db, gain, self.noise_dbm())
    }

    /// Data SNR on `waveform` at the power allowed for `modulation`, before
    /// any BLER penalty.
    pub fn data_snr(
        &self,
        path_loss_db: f64,
        waveform: Waveform,
        modulation: Modulation,
        fading: &FadingState,
        precoder: &[Complex64; 2],
    ) -> f64 {
        let p = transmit_power(&self.power_control, path_loss_db, waveform, modulation);
        let gain = match waveform {
            Waveform::CpOfdm => fading.precoded_gain(precoder),
            Waveform::DftSOfdm => fading.port_gain(0),
        };
        snr_from_gain(p, path_loss_db, gain, self.noise_dbm())
    }

    /// Slot rate under AMC. Every modulation is tried at its own MPR-limited
    /// power; the best resulting MCS wins.
    pub fn slot_rate(
        &self,
        path_loss_db: f64,
        waveform: Waveform,
        fading: &FadingState,
        precoder: &[Complex64; 2],
    ) -> LinkRate {
        let penalty = match waveform {
            Waveform::CpOfdm => 0.0,
            Waveform::DftSOfdm => self.dfts_snr_penalty_db,
        };
        let best = Modulation::ALL
            .iter()
            .filter_map(|&m| {
                let snr = self.data_snr(path_loss_db, waveform, m, fading, precoder) - penalty;
                self.mcs.pick(snr, Some(m))
            })
            .max();
        rate_for(&self.mcs, best, self.noise.bandwidth_hz())
    }
}
