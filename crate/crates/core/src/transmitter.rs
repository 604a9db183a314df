//! QPSK quantum signal and single-sideband pilot synthesis.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{fft_filter_centered, rrc_taps};
use crate::rng;
use crate::signal::{db_to_amplitude_attenuation, db_to_linear, ComplexWaveform, DualPolFrame, SymbolFrame};

/// Pulse-shaping filter span in symbols.
pub const RRC_SPAN_SYMBOLS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TxConfig {
    pub symbol_rate_baud: f64,
    pub mean_photons: f64,
    pub pilot_freq_hz: f64,
    pub pilot_ratio_db: f64,
    pub carrier_suppression_db: f64,
    pub ssb_image_rejection_db: f64,
    pub pulse_rolloff: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            symbol_rate_baud: 100e6,
            mean_photons: 4.0,
            pilot_freq_hz: 1e9,
            pilot_ratio_db: 23.4,
            carrier_suppression_db: 40.0,
            ssb_image_rejection_db: 40.0,
            pulse_rolloff: 0.2,
            sample_rate_hz: 4e9,
            seed: 1,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.symbol_rate_baud.is_finite() && self.symbol_rate_baud > 0.0) {
            return bad(format!(
                "tx.symbol_rate_baud must be positive, got {}",
                self.symbol_rate_baud
            ));
        }
        if !(self.mean_photons.is_finite() && self.mean_photons >= 0.0) {
            return bad(format!(
                "tx.mean_photons must be non-negative, got {}",
                self.mean_photons
            ));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad(format!(
                "tx.sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            ));
        }
        if !self.pilot_ratio_db.is_finite() {
            return bad("tx.pilot_ratio_db must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.pulse_rolloff) {
            return bad(format!(
                "tx.pulse_rolloff must lie in [0, 1], got {}",
                self.pulse_rolloff
            ));
        }
        if self.carrier_suppression_db < 0.0 || self.ssb_image_rejection_db < 0.0 {
            return bad("tx suppression depths must be non-negative".into());
        }
        if self.sample_rate_hz < 2.0 * (self.pilot_freq_hz.abs() + self.symbol_rate_baud) {
            return bad(format!(
                "tx.sample_rate_hz {} is below 2·(pilot_freq_hz + symbol_rate_baud) = {}",
                self.sample_rate_hz,
                2.0 * (self.pilot_freq_hz.abs() + self.symbol_rate_baud)
            ));
        }
        self.samples_per_symbol().map(|_| ())
    }

    /// Integer oversampling factor.
    pub fn samples_per_symbol(&self) -> Result<usize> {
        let ratio = self.sample_rate_hz / self.symbol_rate_baud;
        let sps = ratio.round();
        if sps < 2.0 || (ratio - sps).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "sample rate / symbol rate must be an integer ≥ 2, got {ratio}"
            )));
        }
        Ok(sps as usize)
    }

    pub fn v_mod_snu(&self) -> f64 {
        2.0 * self.mean_photons
    }
}

/// Uniform QPSK symbols {(±1 ± j)/√2}.
pub fn generate_symbols(n: usize, seed: u64) -> Result<SymbolFrame> {
    generate_symbols_at(n, seed, 1.0)
}

pub(crate) fn generate_symbols_at(n: usize, seed: u64, symbol_rate_baud: f64) -> Result<SymbolFrame> {
    if n == 0 {
        return Err(Error::InvalidArgument("symbol count must be positive".into()));
    }
    let mut r = rng::stream(seed, rng::STREAM_SYMBOLS);
    let symbols = (0..n)
        .map(|_| {
            let bits: u8 = r.random_range(0..4);
            let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            Complex64::new(re, im)
        })
        .collect();
    SymbolFrame::new(symbols, symbol_rate_baud)
}

/// RRC-shaped baseband waveform whose mean power per sample equals n̄.
pub fn modulate_quantum(frame: &SymbolFrame, cfg: &TxConfig) -> Result<ComplexWaveform> {
    cfg.validate()?;
    let occupied = cfg.symbol_rate_baud * (1.0 + cfg.pulse_rolloff);
    if cfg.sample_rate_hz < occupied {
        return Err(Error::Config(format!(
            "sample rate {} Hz below shaped-signal bandwidth {occupied} Hz",
            cfg.sample_rate_hz
        )));
    }
    let sps = cfg.samples_per_symbol()?;
    let taps = rrc_taps(cfg.pulse_rolloff, sps, RRC_SPAN_SYMBOLS)?;
    let amp = (cfg.mean_photons * sps as f64).sqrt();
    let mut up = vec![Complex64::new(0.0, 0.0); frame.len() * sps];
    for (k, s) in frame.symbols().iter().enumerate() {
        up[k * sps] = s * amp;
    }
    ComplexWaveform::new(fft_filter_centered(&up, &taps), cfg.sample_rate_hz)
}

/// Carrier-suppressed single-sideband pilot: main line at +Ω with residual
/// carrier and image lines at their configured suppression depths.
pub fn generate_pilot(cfg: &TxConfig, n_samples: usize) -> Result<ComplexWaveform> {
    if cfg.pilot_freq_hz.abs() >= cfg.sample_rate_hz / 2.0 {
        return Err(Error::Config(format!(
            "pilot frequency {} Hz is at or above Nyquist {} Hz",
            cfg.pilot_freq_hz,
            cfg.sample_rate_hz / 2.0
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("pilot needs at least one sample".into()));
    }
    let amp = (cfg.mean_photons.max(1.0) * db_to_linear(cfg.pilot_ratio_db)?).sqrt();
    let carrier = db_to_amplitude_attenuation(cfg.carrier_suppression_db);
    let image = db_to_amplitude_attenuation(cfg.ssb_image_rejection_db);
    let w = 2.0 * PI * cfg.pilot_freq_hz / cfg.sample_rate_hz;
    let samples = (0..n_samples)
        .map(|i| {
            let ph = w * i as f64;
            let mut v = Complex64::from_polar(1.0, ph);
            if carrier > 0.0 {
                v += carrier;
            }
            if image > 0.0 {
                v += Complex64::from_polar(image, -ph);
            }
            v * amp
        })
        .collect();
    ComplexWaveform::new(samples, cfg.sample_rate_hz)
}

/// Pair the planes, scaling the pilot so its mean power is A_q above the
/// quantum plane. The quantum plane is passed through untouched.
pub fn assemble_frame(q: ComplexWaveform, p: ComplexWaveform, cfg: &TxConfig) -> Result<DualPolFrame> {
    let pq = q.mean_power();
    if pq <= 0.0 {
        return Err(Error::UndefinedRatio("quantum plane carries zero power".into()));
    }
    let pp = p.mean_power();
    if pp <= 0.0 {
        return Err(Error::UndefinedRatio("pilot plane carries zero power".into()));
    }
    let gain = (db_to_linear(cfg.pilot_ratio_db)? * pq / pp).sqrt();
    DualPolFrame::new(q, p.scaled(gain))
}

/// Symbols plus the assembled frame for a transmitter configuration.
pub fn transmit(n_symbols: usize, cfg: &TxConfig) -> Result<(SymbolFrame, DualPolFrame)> {
    let symbols = generate_symbols_at(n_symbols, cfg.seed, cfg.symbol_rate_baud)?;
    let q = modulate_quantum(&symbols, cfg)?;
    let p = generate_pilot(cfg, q.len())?;
    Ok((symbols, assemble_frame(q, p, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn qpsk_membership_and_energy() {
        let f = generate_symbols(4096, 9).unwrap();
        for s in f.symbols() {
            assert_relative_eq!(s.re.abs(), FRAC_1_SQRT_2, epsilon = 1e-15);
            assert_relative_eq!(s.im.abs(), FRAC_1_SQRT_2, epsilon = 1e-15);
        }
        assert_eq!(generate_symbols(100, 3).unwrap(), generate_symbols(100, 3).unwrap());
        assert_ne!(generate_symbols(100, 3).unwrap(), generate_symbols(100, 4).unwrap());
        assert!(generate_symbols(0, 1).is_err());
    }

    #[test]
    fn modulation_power_bookkeeping() {
        let cfg = TxConfig::default();
        let f = generate_symbols(20_000, 2).unwrap();
        let w = modulate_quantum(&f, &cfg).unwrap();
        assert_eq!(w.len(), 20_000 * 40);
        assert_relative_eq!(w.mean_power(), 4.0, max_relative = 0.01);
        let zero = TxConfig {
            mean_photons: 0.0,
            ..cfg
        };
        assert!(modulate_quantum(&f, &zero)
            .unwrap()
            .samples()
            .iter()
            .all(|s| s.norm() == 0.0));
    }

    #[test]
    fn config_checks() {
        let mut cfg = TxConfig {
            sample_rate_hz: 2e9,
            ..TxConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.sample_rate_hz = 4e9;
        cfg.symbol_rate_baud = 3e8;
        assert!(cfg.validate().is_err()); // non-integer oversampling
        cfg.symbol_rate_baud = 1e8;
        cfg.pulse_rolloff = 1.2;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pure_pilot_in_the_limit() {
        let cfg = TxConfig {
            carrier_suppression_db: f64::INFINITY,
            ssb_image_rejection_db: f64::INFINITY,
            ..TxConfig::default()
        };
        let p = generate_pilot(&cfg, 64).unwrap();
        let amp = p.samples()[0].norm();
        for (i, s) in p.samples().iter().enumerate() {
            let expect = Complex64::from_polar(amp, 2.0 * PI * 0.25 * i as f64);
            assert!((s - expect).norm() < 1e-9 * amp);
        }
        let high = TxConfig {
            pilot_freq_hz: 2.5e9,
            sample_rate_hz: 4e9,
            ..TxConfig::default()
        };
        assert!(generate_pilot(&high, 8).is_err());
    }

    #[test]
    fn assemble_sets_ratio_and_keeps_quantum() {
        let cfg = TxConfig::default();
        let (_, frame) = transmit(2000, &cfg).unwrap();
        let ratio = frame.pilot().mean_power() / frame.quantum().mean_power();
        assert_relative_eq!(ratio, db_to_linear(23.4).unwrap(), max_relative = 1e-9);
        let q = ComplexWaveform::zeros(8, 4e9).unwrap();
        let p = generate_pilot(&cfg, 8).unwrap();
        assert!(matches!(assemble_frame(q, p, &cfg), Err(Error::UndefinedRatio(_))));
    }
}
