//! Baseband transmit chains for the two uplink waveforms, the memoryless
//! Rapp power amplifier and PAPR measurement.
//!
//! All DFTs are unitary (scaled by `1/sqrt(n)`), so signal energy is the same
//! in the time and frequency domains and power checks do not depend on the
//! transform size.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kpi::quantile;

/// Uplink waveform. CP-OFDM uses two antenna ports, DFT-S-OFDM one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Waveform {
    #[serde(rename = "cp-ofdm")]
    CpOfdm,
    #[serde(rename = "dft-s-ofdm")]
    DftSOfdm,
}

impl Waveform {
    pub fn ports(self) -> usize {
        match self {
            Waveform::CpOfdm => 2,
            Waveform::DftSOfdm => 1,
        }
    }

    pub fn toggled(self) -> Waveform {
        match self {
            Waveform::CpOfdm => Waveform::DftSOfdm,
            Waveform::DftSOfdm => Waveform::CpOfdm,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Waveform::CpOfdm => "cp-ofdm",
            Waveform::DftSOfdm => "dft-s-ofdm",
        }
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Square QAM constellations used on the PUSCH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    Qam16,
    Qam64,
}

impl Modulation {
    pub const ALL: [Modulation; 3] = [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64];

    pub fn index(self) -> usize {
        match self {
            Modulation::Qpsk => 0,
            Modulation::Qam16 => 1,
            Modulation::Qam64 => 2,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
            Modulation::Qam64 => "64qam",
        }
    }

    /// Draws one constellation point, normalised to unit average power.
    pub fn random_symbol<R: Rng + ?Sized>(self, rng: &mut R) -> Complex64 {
        let levels = 1usize << (self.bits_per_symbol() / 2);
        // Average power of a levels x levels grid on odd integers.
        let norm = (2.0 * ((levels * levels - 1) as f64) / 3.0).sqrt();
        let axis = |r: &mut R| (2 * r.random_range(0..levels)) as f64 - (levels - 1) as f64;
        let re = axis(rng);
        let im = axis(rng);
        Complex64::new(re, im) / norm
    }
}

/// Data symbols `d` fed into either transmit chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    data: Vec<Complex64>,
}

impl SymbolBlock {
    pub fn new(data: Vec<Complex64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("symbol block must hold at least one symbol"));
        }
        Ok(SymbolBlock { data })
    }

    pub fn random<R: Rng + ?Sized>(modulation: Modulation, len: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..len).map(|_| modulation.random_symbol(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.data
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.data)
    }
}

/// Subcarrier grid shared by both generators.
///
/// Occupied subcarriers are contiguous, starting at `offset`. With
/// `oversampling > 1` the IDFT is taken over `n_subcarriers * oversampling`
/// points with the extra bins left empty, which interpolates the
/// critically sampled signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmGrid {
    pub n_subcarriers: usize,
    pub dft_size: usize,
    pub offset: usize,
    pub ports: usize,
    pub oversampling: usize,
}

impl Default for OfdmGrid {
    /// 20 PRBs of 12 subcarriers on a 256-point IDFT.
    fn default() -> Self {
        OfdmGrid {
            n_subcarriers: 256,
            dft_size: 240,
            offset: 0,
            ports: 1,
            oversampling: 1,
        }
    }
}

impl OfdmGrid {
    pub fn validate(&self) -> Result<()> {
        if !self.n_subcarriers.is_power_of_two() {
            return Err(Error::invalid(format!(
                "IDFT size {} is not a power of two",
                self.n_subcarriers
            )));
        }
        if self.dft_size == 0 || self.dft_size > self.n_subcarriers {
            return Err(Error::invalid(format!(
                "DFT size {} must lie in 1..={}",
                self.dft_size, self.n_subcarriers
            )));
        }
        if self.ports == 0 || self.oversampling == 0 {
            return Err(Error::invalid("ports and oversampling must be positive"));
        }
        Ok(())
    }

    pub fn ifft_size(&self) -> usize {
        self.n_subcarriers * self.oversampling
    }

    /// Cyclic prefix length in samples: an eighth of the symbol.
    pub fn cp_len(&self) -> usize {
        self.ifft_size() / 8
    }

    fn check_mapping(&self, used: usize) -> Result<()> {
        if self.offset + used > self.n_subcarriers {
            return Err(Error::invalid(format!(
                "{used} subcarriers from offset {} overflow a {}-subcarrier grid",
                self.offset, self.n_subcarriers
            )));
        }
        Ok(())
    }
}

/// Memoryless Rapp amplifier with AM/AM conversion only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RappPa {
    /// Small-signal gain (linear).
    pub gain: f64,
    /// Limiting output amplitude (linear).
    pub a_sat: f64,
    /// Smoothness of the linear-to-saturation transition.
    pub smoothness: f64,
}

impl RappPa {
    pub fn new(gain: f64, a_sat: f64, smoothness: f64) -> Result<Self> {
        if !(gain > 0.0 && a_sat > 0.0 && smoothness > 0.0) {
            return Err(Error::invalid("Rapp gain, A_sat and p must all be positive"));
        }
        Ok(RappPa {
            gain,
            a_sat,
            smoothness,
        })
    }

    /// A_sat given as a power in dBm over a 1 ohm reference.
    pub fn from_dbm(gain: f64, a_sat_dbm: f64, smoothness: f64) -> Result<Self> {
        let watts = 10f64.powf((a_sat_dbm - 30.0) / 10.0);
        Self::new(gain, watts.sqrt(), smoothness)
    }

    /// Output amplitude for an input amplitude `a`.
    pub fn amplitude(&self, a: f64) -> f64 {
        let va = self.gain * a;
        let two_p = 2.0 * self.smoothness;
        va * (1.0 + (va / self.a_sat).abs().powf(two_p)).powf(-1.0 / two_p)
    }

    pub fn amplify(&self, sample: Complex64) -> Complex64 {
        rapp_amplify(self, sample)
    }
}

/// Passes one sample through the PA. The phase is untouched.
pub fn rapp_amplify(pa: &RappPa, sample: Complex64) -> Complex64 {
    let a = sample.norm();
    if a == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    sample * (pa.amplitude(a) / a)
}

/// Unitary inverse DFT helper, planned once per size.
struct Transforms {
    inverse: Arc<dyn Fft<f64>>,
    forward_m: Option<Arc<dyn Fft<f64>>>,
}

impl Transforms {
    fn new(grid: &OfdmGrid, with_spread: bool) -> Self {
        let mut planner = FftPlanner::new();
        Transforms {
            inverse: planner.plan_fft_inverse(grid.ifft_size()),
            forward_m: with_spread.then(|| planner.plan_fft_forward(grid.dft_size)),
        }
    }
}

fn unitary(fft: &dyn Fft<f64>, buf: &mut [Complex64]) {
    fft.process(buf);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    buf.iter_mut().for_each(|x| *x *= scale);
}

/// CP-OFDM: precode, map onto contiguous subcarriers, IDFT per port.
///
/// Returns one time-domain vector per antenna port, without cyclic prefix.
pub fn generate_cp_ofdm(
    d: &SymbolBlock,
    precoder: &[Complex64],
    grid: &OfdmGrid,
) -> Result<Vec<Vec<Complex64>>> {
    grid.validate()?;
    if precoder.len() != grid.ports {
        return Err(Error::invalid(format!(
            "precoder has {} entries for {} ports",
            precoder.len(),
            grid.ports
        )));
    }
    grid.check_mapping(d.len())?;
    let transforms = Transforms::new(grid, false);
    Ok(cp_ofdm_with(&transforms, d, precoder, grid))
}

fn cp_ofdm_with(
    transforms: &Transforms,
    d: &SymbolBlock,
    precoder: &[Complex64],
    grid: &OfdmGrid,
) -> Vec<Vec<Complex64>> {
    precoder
        .iter()
        .map(|&w| {
            let mut buf = vec![Complex64::new(0.0, 0.0); grid.ifft_size()];
            for (k, &s) in d.symbols().iter().enumerate() {
                buf[grid.offset + k] = w * s;
            }
            unitary(transforms.inverse.as_ref(), &mut buf);
            buf
        })
        .collect()
}

/// DFT-S-OFDM: M-point DFT spreading, contiguous mapping, IDFT. One port.
pub fn generate_dft_s_ofdm(d: &SymbolBlock, grid: &OfdmGrid) -> Result<Vec<Complex64>> {
    grid.validate()?;
    if d.len() > grid.dft_size {
        return Err(Error::invalid(format!(
            "{} symbols exceed DFT size {}",
            d.len(),
            grid.dft_size
        )));
    }
    grid.check_mapping(grid.dft_size)?;
    let transforms = Transforms::new(grid, true);
    Ok(dft_s_ofdm_with(&transforms, d, grid))
}

fn dft_s_ofdm_with(transforms: &Transforms, d: &SymbolBlock, grid: &OfdmGrid) -> Vec<Complex64> {
    let mut spread = vec![Complex64::new(0.0, 0.0); grid.dft_size];
    spread[..d.len()].copy_from_slice(d.symbols());
    let forward = transforms.forward_m.as_ref().expect("planned with spreading");
    unitary(forward.as_ref(), &mut spread);

    let mut buf = vec![Complex64::new(0.0, 0.0); grid.ifft_size()];
    buf[grid.offset..grid.offset + grid.dft_size].copy_from_slice(&spread);
    unitary(transforms.inverse.as_ref(), &mut buf);
    buf
}

/// Prepends the last `cp_len` samples.
pub fn add_cyclic_prefix(symbol: &[Complex64], cp_len: usize) -> Vec<Complex64> {
    let cp_len = cp_len.min(symbol.len());
    let mut out = Vec::with_capacity(symbol.len() + cp_len);
    out.extend_from_slice(&symbol[symbol.len() - cp_len..]);
    out.extend_from_slice(symbol);
    out
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// `10 log10(quantile(|x|^2, percentile) / mean(|x|^2))`, with the quantile
/// taken by linear interpolation between closest ranks.
pub fn measure_papr(signal: &[Complex64], percentile: f64) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::invalid("PAPR of an empty signal"));
    }
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::invalid(format!(
            "percentile {percentile} outside (0, 1)"
        )));
    }
    let mut powers: Vec<f64> = signal.iter().map(|s| s.norm_sqr()).collect();
    let mean = powers.iter().sum::<f64>() / powers.len() as f64;
    if mean == 0.0 {
        return Err(Error::UndefinedRatio("all-zero signal".into()));
    }
    powers.sort_by(f64::total_cmp);
    Ok(10.0 * (quantile(&powers, percentile) / mean).log10())
}

/// Monte-Carlo PAPR experiment configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaprConfig {
    pub grid: OfdmGrid,
    /// Number of OFDM symbols drawn per (waveform, modulation) pair.
    pub blocks: usize,
}

impl Default for PaprConfig {
    fn default() -> Self {
        PaprConfig {
            grid: OfdmGrid::default(),
            blocks: 10_000,
        }
    }
}

/// Envelope power samples, cyclic prefix excluded, from `blocks` random
/// symbols of one waveform. CP-OFDM is generated on a single port with unit
/// precoder since port scaling does not change the envelope statistics.
pub fn papr_samples<R: Rng + ?Sized>(
    waveform: Waveform,
    modulation: Modulation,
    cfg: &PaprConfig,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let grid = OfdmGrid { ports: 1, ..cfg.grid };
    grid.validate()?;
    grid.check_mapping(grid.dft_size)?;
    let transforms = Transforms::new(&grid, waveform == Waveform::DftSOfdm);
    let unit = [Complex64::new(1.0, 0.0)];
    let mut out = Vec::with_capacity(cfg.blocks * grid.ifft_size());
    for _ in 0..cfg.blocks {
        let d = SymbolBlock::random(modulation, grid.dft_size, rng)?;
        let symbol = match waveform {
            Waveform::CpOfdm => cp_ofdm_with(&transforms, &d, &unit, &grid).remove(0),
            Waveform::DftSOfdm => dft_s_ofdm_with(&transforms, &d, &grid),
        };
        let with_cp = add_cyclic_prefix(&symbol, grid.cp_len());
        out.extend_from_slice(&with_cp[grid.cp_len()..]);
    }
    Ok(out)
}

/// One row of the PAPR table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaprPoint {
    pub waveform: Waveform,
    pub modulation: Modulation,
    pub percentile: f64,
    pub papr_db: f64,
}

/// PAPR at each requested percentile for both waveforms and the given
/// modulations. Each (waveform, modulation) pair gets its own RNG stream.
pub fn papr_table(
    cfg: &PaprConfig,
    modulations: &[Modulation],
    percentiles: &[f64],
    seed: u64,
) -> Result<Vec<PaprPoint>> {
    let mut rows = Vec::new();
    for (wi, waveform) in [Waveform::CpOfdm, Waveform::DftSOfdm].into_iter().enumerate() {
        for &modulation in modulations {
            let mut rng = crate::rng::stream(seed, &[0x9a92, wi as u64, modulation.index() as u64]);
            let samples = papr_samples(waveform, modulation, cfg, &mut rng)?;
            for &percentile in percentiles {
                rows.push(PaprPoint {
                    waveform,
                    modulation,
                    percentile,
                    papr_db: measure_papr(&samples, percentile)?,
                });
            }
        }
    }
    Ok(rows)
}
