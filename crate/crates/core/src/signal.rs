//! Signal containers and unit conversions shared by every block.
//!
//! Field amplitudes are normalised so that the mean-square amplitude of a
//! waveform over one symbol period equals the mean photon number per symbol.
//! Quadrature noise is expressed in shot-noise units (SNU) with the vacuum
//! quadrature variance equal to 1.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Sampled complex optical field envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
}

impl ComplexWaveform {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("waveform has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of |s|² over all samples.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Amplitude-scaled copy.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Quantum and pilot polarisation planes sharing one laser phase history.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolFrame {
    quantum: ComplexWaveform,
    pilot: ComplexWaveform,
}

impl DualPolFrame {
    pub fn new(quantum: ComplexWaveform, pilot: ComplexWaveform) -> Result<Self> {
        if quantum.len() != pilot.len() {
            return Err(Error::InvalidArgument(format!(
                "plane lengths differ: quantum {} vs pilot {}",
                quantum.len(),
                pilot.len()
            )));
        }
        if quantum.sample_rate_hz() != pilot.sample_rate_hz() {
            return Err(Error::InvalidArgument(format!(
                "plane sample rates differ: {} vs {}",
                quantum.sample_rate_hz(),
                pilot.sample_rate_hz()
            )));
        }
        Ok(Self { quantum, pilot })
    }

    pub fn quantum(&self) -> &ComplexWaveform {
        &self.quantum
    }

    pub fn pilot(&self) -> &ComplexWaveform {
        &self.pilot
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.quantum.sample_rate_hz()
    }

    pub fn len(&self) -> usize {
        self.quantum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantum.is_empty()
    }

    pub fn into_planes(self) -> (ComplexWaveform, ComplexWaveform) {
        (self.quantum, self.pilot)
    }
}

/// Unit-energy constellation points at the quantum symbol rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    symbols: Vec<Complex64>,
    symbol_rate_baud: f64,
}

impl SymbolFrame {
    pub fn new(symbols: Vec<Complex64>, symbol_rate_baud: f64) -> Result<Self> {
        if !(symbol_rate_baud.is_finite() && symbol_rate_baud > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "symbol rate must be positive, got {symbol_rate_baud}"
            )));
        }
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("symbol frame is empty".into()));
        }
        let energy = mean_power(&symbols);
        if (energy - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "symbols must have unit mean energy, got {energy}"
            )));
        }
        Ok(Self {
            symbols,
            symbol_rate_baud,
        })
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn symbol_rate_baud(&self) -> f64 {
        self.symbol_rate_baud
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

pub fn db_to_linear(db: f64) -> Result<f64> {
    if !db.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "decibel value must be finite, got {db}"
        )));
    }
    Ok(10f64.powf(db / 10.0))
}

pub fn linear_to_db(ratio: f64) -> Result<f64> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power ratio must be positive and finite, got {ratio}"
        )));
    }
    Ok(10.0 * ratio.log10())
}

/// Attenuation in dB as an amplitude factor; +∞ dB maps to 0.
pub(crate) fn db_to_amplitude_attenuation(db: f64) -> f64 {
    if db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-db / 20.0)
    }
}

/// Gaussian-ensemble modulation variance for a mean photon number per symbol.
pub fn photons_to_vmod(mean_photons: f64) -> Result<f64> {
    if !(mean_photons.is_finite() && mean_photons >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mean photon number must be non-negative, got {mean_photons}"
        )));
    }
    Ok(2.0 * mean_photons)
}
