//! Optical front-ends: 90° hybrid intradyne and 180° hybrid heterodyne
//! detection with shot noise, TIA noise, detector roll-off, CMRR residue and
//! pilot bleed-through.
//!
//! Scaling: a mode with amplitude α at the receiver input produces, after the
//! receiver's matched filter and division by √sps, `√(2·η)·α` per detected
//! complex sample on top of unit-variance (1 SNU) shot noise per quadrature.
//! The heterodyne trace places the quantum band at −IF_q (LO above the
//! carrier), so the pilot line lands at Ω − IF_q.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{phasor, Butterworth};
use crate::rng;
use crate::signal::{db_to_amplitude_attenuation, ComplexWaveform, DualPolFrame};
use crate::transmitter::TxConfig;

const PLANCK: f64 = 6.626_070_15e-34;
const CARRIER_HZ: f64 = 193.4e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Intradyne,
    Heterodyne,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Intradyne => "intradyne",
            Architecture::Heterodyne => "heterodyne",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSpec {
    pub bandwidth_hz: f64,
    pub rolloff_order: usize,
    pub clearance_db: f64,
    pub cmrr_db: f64,
    pub ref_lo_power_mw: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            bandwidth_hz: 360e6,
            rolloff_order: 2,
            clearance_db: 20.0,
            cmrr_db: 47.3,
            ref_lo_power_mw: 10.0,
        }
    }
}

impl DetectorSpec {
    pub fn pilot_default() -> Self {
        Self {
            bandwidth_hz: 1.6e9,
            cmrr_db: 38.0,
            ..Self::default()
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::Config(format!("{name}.bandwidth_hz must be positive")));
        }
        if !(self.clearance_db > 0.0) {
            return Err(Error::Config(format!("{name}.clearance_db must be positive")));
        }
        if !(self.cmrr_db > 0.0) {
            return Err(Error::Config(format!("{name}.cmrr_db must be positive")));
        }
        if !(self.ref_lo_power_mw > 0.0 && self.ref_lo_power_mw.is_finite()) {
            return Err(Error::Config(format!("{name}.ref_lo_power_mw must be positive")));
        }
        Ok(())
    }

    /// Electronic-to-shot variance ratio at the given LO power.
    pub fn electronic_ratio(&self, lo_power_mw: f64) -> Result<f64> {
        let clearance = self.clearance_db + 10.0 * (lo_power_mw / self.ref_lo_power_mw).log10();
        if !(clearance >= 0.0) {
            return Err(Error::Config(format!(
                "LO power {lo_power_mw} mW gives clearance {clearance:.2} dB < 0 dB"
            )));
        }
        if self.clearance_db == f64::INFINITY {
            return Ok(0.0);
        }
        Ok(10f64.powf(-clearance / 10.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverConfig {
    pub architecture: Architecture,
    pub lo_power_dbm: f64,
    pub lo_detuning_hz: f64,
    pub hybrid_excess_loss_db: f64,
    pub extra_insertion_loss_db: f64,
    pub detection_efficiency: f64,
    pub pol_extinction_db: f64,
    pub quantum_det: DetectorSpec,
    pub pilot_det: DetectorSpec,
    /// Shot and electronic noise; disable for noiseless fidelity checks.
    pub noise_enabled: bool,
    pub seed: u64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self::heterodyne()
    }
}

impl ReceiverConfig {
    pub fn heterodyne() -> Self {
        Self {
            architecture: Architecture::Heterodyne,
            lo_power_dbm: 13.0,
            lo_detuning_hz: 200e6,
            hybrid_excess_loss_db: 0.0,
            extra_insertion_loss_db: 0.0,
            detection_efficiency: 0.85,
            pol_extinction_db: 25.0,
            quantum_det: DetectorSpec::default(),
            pilot_det: DetectorSpec::pilot_default(),
            noise_enabled: true,
            seed: 3,
        }
    }

    pub fn intradyne() -> Self {
        Self {
            architecture: Architecture::Intradyne,
            lo_detuning_hz: 0.0,
            hybrid_excess_loss_db: 3.0,
            ..Self::heterodyne()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "receiver.detection_efficiency must lie in (0, 1], got {}",
                self.detection_efficiency
            )));
        }
        if !(self.hybrid_excess_loss_db >= 0.0 && self.extra_insertion_loss_db >= 0.0) {
            return Err(Error::Config("receiver loss terms must be ≥ 0 dB".into()));
        }
        if !(self.pol_extinction_db >= 0.0) {
            return Err(Error::Config("receiver.pol_extinction_db must be ≥ 0".into()));
        }
        if !self.lo_power_dbm.is_finite() || !self.lo_detuning_hz.is_finite() {
            return Err(Error::Config("receiver LO parameters must be finite".into()));
        }
        if self.architecture == Architecture::Intradyne && self.lo_detuning_hz != 0.0 {
            return Err(Error::Config("intradyne reception requires lo_detuning_hz = 0".into()));
        }
        self.quantum_det.validate("receiver.quantum_det")?;
        self.pilot_det.validate("receiver.pilot_det")?;
        self.quantum_det.electronic_ratio(self.lo_power_mw())?;
        self.pilot_det.electronic_ratio(self.lo_power_mw())?;
        Ok(())
    }

    pub fn lo_power_mw(&self) -> f64 {
        10f64.powf(self.lo_power_dbm / 10.0)
    }

    /// Power transmittance from the receiver input to the photodiodes.
    pub fn effective_efficiency(&self) -> f64 {
        self.detection_efficiency * 10f64.powf(-(self.hybrid_excess_loss_db + self.extra_insertion_loss_db) / 10.0)
    }

    /// Electronic noise of the quantum detector in SNU per quadrature.
    pub fn v_el_snu(&self) -> Result<f64> {
        self.quantum_det.electronic_ratio(self.lo_power_mw())
    }
}

/// Detector output traces.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetection {
    pub architecture: Architecture,
    pub quantum_i: Vec<f64>,
    pub quantum_q: Option<Vec<f64>>,
    pub pilot_i: Vec<f64>,
    pub pilot_q: Option<Vec<f64>>,
    pub sample_rate_hz: f64,
    /// Shot-noise variance of one quantum trace after the detector filter.
    pub snu_scale: f64,
}

impl RawDetection {
    pub fn len(&self) -> usize {
        self.quantum_i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantum_i.is_empty()
    }

    /// Quantum plane as I + jQ (intradyne only).
    pub fn quantum_complex(&self) -> Option<Vec<Complex64>> {
        self.quantum_q.as_ref().map(|q| pair(&self.quantum_i, q))
    }

    pub fn pilot_complex(&self) -> Option<Vec<Complex64>> {
        self.pilot_q.as_ref().map(|q| pair(&self.pilot_i, q))
    }
}

fn pair(i: &[f64], q: &[f64]) -> Vec<Complex64> {
    i.iter().zip(q).map(|(&a, &b)| Complex64::new(a, b)).collect()
}

/// Anti-folding condition for the heterodyne band.
pub fn check_anti_folding(cfg: &ReceiverConfig, tx: &TxConfig) -> Result<()> {
    if cfg.architecture != Architecture::Heterodyne {
        return Ok(());
    }
    let half = tx.symbol_rate_baud * (1.0 + tx.pulse_rolloff) / 2.0;
    if !(cfg.lo_detuning_hz > half) {
        return Err(Error::Config(format!(
            "anti-folding condition violated: lo_detuning_hz {} must exceed R_q·(1+rolloff)/2 = {half}",
            cfg.lo_detuning_hz
        )));
    }
    Ok(())
}

/// Detect a frame. Fails if the heterodyne band would fold around DC.
pub fn detect(frame: &DualPolFrame, cfg: &ReceiverConfig, tx: &TxConfig) -> Result<RawDetection> {
    check_anti_folding(cfg, tx)?;
    detect_unchecked(frame, cfg, tx)
}

/// Detection without the anti-folding precondition, for folding studies.
pub fn detect_unchecked(frame: &DualPolFrame, cfg: &ReceiverConfig, tx: &TxConfig) -> Result<RawDetection> {
    cfg.validate()?;
    let n = frame.len();
    let fs = frame.sample_rate_hz();
    let sps = fs / tx.symbol_rate_baud;
    let eta = cfg.effective_efficiency();
    let leak = db_to_amplitude_attenuation(cfg.pol_extinction_db);
    let q_field: Vec<Complex64> = frame
        .quantum()
        .samples()
        .iter()
        .zip(frame.pilot().samples())
        .map(|(q, p)| q + p * leak)
        .collect();
    let lo_photons = cfg.lo_power_mw() * 1e-3 / (PLANCK * CARRIER_HZ) / fs;
    let beat = Beat {
        eta,
        sps,
        lo_photons,
        lo_power_mw: cfg.lo_power_mw(),
        detuning_hz: cfg.lo_detuning_hz,
        fs,
        noise: cfg.noise_enabled,
    };
    let (qi, qq) = beat.detect_plane(cfg.architecture, &q_field, &cfg.quantum_det, cfg.seed, 0, true)?;
    let (pi, pq) = beat.detect_plane(
        cfg.architecture,
        frame.pilot().samples(),
        &cfg.pilot_det,
        cfg.seed,
        1,
        true,
    )?;
    debug_assert_eq!(qi.len(), n);
    Ok(RawDetection {
        architecture: cfg.architecture,
        quantum_i: qi,
        quantum_q: qq,
        pilot_i: pi,
        pilot_q: pq,
        sample_rate_hz: fs,
        snu_scale: beat.shot_variance(cfg.architecture) * noise_gain(&cfg.quantum_det, fs)?,
    })
}

/// Vacuum (LO on, signal off) and dark (LO off) records through the same
/// detection path as `detect`.
pub fn calibration_records(
    cfg: &ReceiverConfig,
    tx: &TxConfig,
    n_samples: usize,
) -> Result<(RawDetection, RawDetection)> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("calibration needs at least one sample".into()));
    }
    cfg.validate()?;
    let fs = tx.sample_rate_hz;
    let zeros = ComplexWaveform::zeros(n_samples, fs)?;
    let frame = DualPolFrame::new(zeros.clone(), zeros)?;
    let sps = fs / tx.symbol_rate_baud;
    let beat = Beat {
        eta: cfg.effective_efficiency(),
        sps,
        lo_photons: f64::INFINITY,
        lo_power_mw: cfg.lo_power_mw(),
        detuning_hz: cfg.lo_detuning_hz,
        fs,
        noise: true,
    };
    let snu_scale = beat.shot_variance(cfg.architecture) * noise_gain(&cfg.quantum_det, fs)?;
    let mut out = Vec::with_capacity(2);
    for (stream, shot_on) in [(2u64, true), (4u64, false)] {
        let (qi, qq) = beat.detect_plane(
            cfg.architecture,
            frame.quantum().samples(),
            &cfg.quantum_det,
            cfg.seed,
            stream,
            shot_on,
        )?;
        let (pi, pq) = beat.detect_plane(
            cfg.architecture,
            frame.pilot().samples(),
            &cfg.pilot_det,
            cfg.seed,
            stream + 1,
            shot_on,
        )?;
        out.push(RawDetection {
            architecture: cfg.architecture,
            quantum_i: qi,
            quantum_q: qq,
            pilot_i: pi,
            pilot_q: pq,
            sample_rate_hz: fs,
            snu_scale,
        });
    }
    let dark = out.pop().expect("two records");
    let vacuum = out.pop().expect("two records");
    Ok((vacuum, dark))
}

/// Power gain of the detector filter on white noise (Σ h²).
fn noise_gain(det: &DetectorSpec, fs: f64) -> Result<f64> {
    let filt = detector_filter(det, fs)?;
    let len = 1 << 14;
    let mut imp = vec![0.0; len];
    imp[0] = 1.0;
    Ok(filt.filter_real(&imp).iter().map(|v| v * v).sum())
}

fn detector_filter(det: &DetectorSpec, fs: f64) -> Result<Butterworth> {
    if det.rolloff_order == 0 || det.bandwidth_hz >= fs / 2.0 {
        return Butterworth::lowpass(0, 1.0, fs);
    }
    Butterworth::lowpass(det.rolloff_order, det.bandwidth_hz, fs)
}

struct Beat {
    eta: f64,
    sps: f64,
    lo_photons: f64,
    lo_power_mw: f64,
    detuning_hz: f64,
    fs: f64,
    noise: bool,
}

impl Beat {
    /// Per-sample shot variance of one output trace.
    fn shot_variance(&self, arch: Architecture) -> f64 {
        match arch {
            Architecture::Intradyne => self.sps,
            Architecture::Heterodyne => 2.0 * self.sps,
        }
    }

    fn detect_plane(
        &self,
        arch: Architecture,
        field: &[Complex64],
        det: &DetectorSpec,
        seed: u64,
        stream: u64,
        lo_on: bool,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let n = field.len();
        let shot_var = self.shot_variance(arch);
        let el_var = shot_var * det.electronic_ratio(self.lo_power_mw)?;
        let g = (2.0 * self.eta).sqrt();
        let cmrr = db_to_amplitude_attenuation(det.cmrr_db);
        let residue_scale = if self.lo_photons.is_finite() {
            cmrr * self.eta / (2f64.sqrt() * self.lo_photons.sqrt())
        } else {
            0.0
        };
        let shot_sigma = if lo_on && self.noise { shot_var.sqrt() } else { 0.0 };
        let el_sigma = if self.noise { el_var.sqrt() } else { 0.0 };
        let mut shot = rng::stream(seed.wrapping_add(stream << 32), rng::STREAM_SHOT);
        let mut elec = rng::stream(seed.wrapping_add(stream << 32), rng::STREAM_ELECTRONIC);
        let mut noise = |r: &mut Vec<f64>| {
            for v in r.iter_mut() {
                if shot_sigma > 0.0 {
                    *v += shot_sigma * rng::normal(&mut shot);
                }
                if el_sigma > 0.0 {
                    *v += el_sigma * rng::normal(&mut elec);
                }
            }
        };
        let filt = detector_filter(det, self.fs)?;
        match arch {
            Architecture::Intradyne => {
                let mut i = Vec::with_capacity(n);
                let mut q = Vec::with_capacity(n);
                for e in field {
                    let dd = residue_scale * e.norm_sqr();
                    let b = e * g;
                    i.push(b.re + dd);
                    q.push(b.im + dd);
                }
                noise(&mut i);
                noise(&mut q);
                Ok((filt.filter_real(&i), Some(filt.filter_real(&q))))
            }
            Architecture::Heterodyne => {
                let lo = phasor(field.len(), -2.0 * PI * self.detuning_hz / self.fs, 0.0);
                let mut h: Vec<f64> = field
                    .iter()
                    .zip(lo)
                    .map(|(e, lo)| 2.0 * g * (e * lo).re + residue_scale * e.norm_sqr())
                    .collect();
                noise(&mut h);
                Ok((filt.filter_real(&h), None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn var(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn electronic_ratio_scales_with_lo() {
        let d = DetectorSpec::default();
        assert_relative_eq!(d.electronic_ratio(10.0).unwrap(), 0.01, max_relative = 1e-12);
        assert_relative_eq!(d.electronic_ratio(20.0).unwrap(), 0.005, max_relative = 1e-12);
        assert!(d.electronic_ratio(0.05).is_err());
    }

    #[test]
    fn anti_folding_guard() {
        let tx = TxConfig::default();
        let mut rx = ReceiverConfig::heterodyne();
        assert!(check_anti_folding(&rx, &tx).is_ok());
        rx.lo_detuning_hz = 50e6;
        let err = check_anti_folding(&rx, &tx).unwrap_err();
        assert!(err.to_string().contains("anti-folding"));
    }

    #[test]
    fn calibration_records_ratio() {
        let tx = TxConfig::default();
        let mut rx = ReceiverConfig::heterodyne();
        rx.lo_power_dbm = 10.0;
        let (vac, dark) = calibration_records(&rx, &tx, 200_000).unwrap();
        let (vv, vd) = (var(&vac.quantum_i), var(&dark.quantum_i));
        assert!(vv > vd);
        assert_relative_eq!(vv - vd, vac.snu_scale, max_relative = 0.03);
        assert_relative_eq!(vv / vd, 101.0, max_relative = 0.05);
    }

    #[test]
    fn intradyne_vacuum_is_one_snu_per_quadrature() {
        let tx = TxConfig::default();
        let mut rx = ReceiverConfig::intradyne();
        rx.quantum_det.clearance_db = f64::INFINITY;
        rx.quantum_det.rolloff_order = 0;
        let (vac, _) = calibration_records(&rx, &tx, 400_000).unwrap();
        let sps = 40.0;
        assert_relative_eq!(var(&vac.quantum_i) / sps, 1.0, max_relative = 0.02);
        assert_relative_eq!(var(vac.quantum_q.as_ref().unwrap()) / sps, 1.0, max_relative = 0.02);
    }
}
