//! Receiver DSP: Welch spectra, pilot frequency-offset estimation, digital
//! hybrid down-conversion, pilot-aided carrier-phase recovery, matched
//! filtering and symbol decimation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::PhaseTrace;
use crate::error::{Error, Result, StageExt};
use crate::filters::{fft_filter_centered, phasor, rrc_taps, Butterworth};
use crate::frontend::{Architecture, RawDetection, ReceiverConfig};
use crate::signal::ComplexWaveform;
use crate::transmitter::{TxConfig, RRC_SPAN_SYMBOLS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub fft_size: usize,
    /// Moving-average length for phase smoothing; one symbol when unset.
    pub phase_smoothing_window_samples: Option<usize>,
    /// Mirror-rejection cutoff; 1.2·(R_q/2)·(1+rolloff) when unset.
    pub mirror_filter_cutoff_hz: Option<f64>,
    /// Butterworth order of the mirror filter; 0 disables it.
    pub mirror_filter_order: usize,
    /// Low-pass cutoff isolating the pilot line after shifting it to DC.
    pub pilot_filter_cutoff_hz: f64,
    pub pilot_filter_order: usize,
    /// Fixed decimation phase; searched over one symbol when unset.
    pub timing_offset_samples: Option<usize>,
    pub matched_filter_rolloff: f64,
    pub phase_correction: bool,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            fft_size: 4096,
            phase_smoothing_window_samples: None,
            mirror_filter_cutoff_hz: None,
            mirror_filter_order: 8,
            pilot_filter_cutoff_hz: 150e6,
            pilot_filter_order: 4,
            timing_offset_samples: None,
            matched_filter_rolloff: 0.2,
            phase_correction: true,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 8 {
            return Err(Error::Config(format!(
                "dsp.fft_size must be a power of two ≥ 8, got {}",
                self.fft_size
            )));
        }
        if self.phase_smoothing_window_samples == Some(0) {
            return Err(Error::Config("dsp.phase_smoothing_window_samples must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.matched_filter_rolloff) {
            return Err(Error::Config("dsp.matched_filter_rolloff must lie in [0, 1]".into()));
        }
        if !(self.pilot_filter_cutoff_hz > 0.0) {
            return Err(Error::Config("dsp.pilot_filter_cutoff_hz must be positive".into()));
        }
        if let Some(c) = self.mirror_filter_cutoff_hz {
            if !(c > 0.0) {
                return Err(Error::Config("dsp.mirror_filter_cutoff_hz must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn mirror_cutoff(&self, tx: &TxConfig) -> f64 {
        self.mirror_filter_cutoff_hz
            .unwrap_or(1.2 * tx.symbol_rate_baud / 2.0 * (1.0 + tx.pulse_rolloff))
    }
}

/// Borrowed detector trace, real (single beat) or complex (I + jQ).
#[derive(Debug, Clone, Copy)]
pub enum Trace<'a> {
    Real(&'a [f64]),
    Complex(&'a [Complex64]),
}

impl Trace<'_> {
    fn len(&self) -> usize {
        match self {
            Trace::Real(x) => x.len(),
            Trace::Complex(x) => x.len(),
        }
    }
}

/// Power spectral density estimate. Frequencies ascend; one-sided for real
/// traces and two-sided for complex traces.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub frequency_hz: Vec<f64>,
    pub density: Vec<f64>,
}

impl Psd {
    pub fn bin_width(&self) -> f64 {
        if self.frequency_hz.len() < 2 {
            0.0
        } else {
            self.frequency_hz[1] - self.frequency_hz[0]
        }
    }

    /// Σ PSD·Δf, the mean-square value of the trace.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.frequency_hz
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
            .map(|(_, d)| d)
            .sum::<f64>()
            * self.bin_width()
    }

    pub fn db(&self) -> Vec<f64> {
        self.density.iter().map(|d| 10.0 * d.max(1e-300).log10()).collect()
    }

    pub fn peak_index(&self) -> usize {
        self.density
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc })
            .0
    }
}

/// Welch periodogram with a Hann window and 50 % overlap.
pub fn spectrum(trace: Trace<'_>, sample_rate_hz: f64, fft_size: usize) -> Result<Psd> {
    if fft_size < 2 || !fft_size.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "fft size {fft_size} must be a power of two"
        )));
    }
    if trace.len() < fft_size {
        return Err(Error::InvalidArgument(format!(
            "trace of {} samples is shorter than fft size {fft_size}",
            trace.len()
        )));
    }
    let n = fft_size;
    let win: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect();
    let wss: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let hop = n / 2;
    let segments = (trace.len() - n) / hop + 1;
    let mut acc = vec![0.0; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for s in 0..segments {
        let off = s * hop;
        match trace {
            Trace::Real(x) => {
                for i in 0..n {
                    buf[i] = Complex64::new(x[off + i] * win[i], 0.0);
                }
            }
            Trace::Complex(x) => {
                for i in 0..n {
                    buf[i] = x[off + i] * win[i];
                }
            }
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let scale = 1.0 / (segments as f64 * sample_rate_hz * wss);
    let df = sample_rate_hz / n as f64;
    match trace {
        Trace::Real(_) => {
            let half = n / 2;
            let density = (0..=half)
                .map(|k| {
                    let two = if k == 0 || k == half { 1.0 } else { 2.0 };
                    acc[k] * scale * two
                })
                .collect();
            let frequency_hz = (0..=half).map(|k| k as f64 * df).collect();
            Ok(Psd { frequency_hz, density })
        }
        Trace::Complex(_) => {
            let half = n / 2;
            let mut frequency_hz = Vec::with_capacity(n);
            let mut density = Vec::with_capacity(n);
            for j in 0..n {
                let k = (j + half) % n;
                frequency_hz.push((j as f64 - half as f64) * df);
                density.push(acc[k] * scale);
            }
            Ok(Psd { frequency_hz, density })
        }
    }
}

/// Pilot-line frequency (parabolic interpolation on dB values) minus the
/// expected intermediate frequency.
pub fn estimate_frequency_offset(
    pilot: Trace<'_>,
    sample_rate_hz: f64,
    expected_if_hz: f64,
    cfg: &DspConfig,
) -> Result<f64> {
    let psd = spectrum(pilot, sample_rate_hz, cfg.fft_size)?;
    let db = psd.db();
    let k = psd.peak_index();
    let mut sorted = db.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    if db[k] < median + 6.0 {
        return Err(Error::EstimationFailure(format!(
            "no dominant pilot line: peak {:.1} dB vs median {:.1} dB",
            db[k], median
        )));
    }
    let mut f = psd.frequency_hz[k];
    if k > 0 && k + 1 < db.len() {
        let (a, b, c) = (db[k - 1], db[k], db[k + 1]);
        let den = a - 2.0 * b + c;
        if den.abs() > 1e-12 {
            let d = 0.5 * (a - c) / den;
            if d.abs() <= 0.5 {
                f += d * psd.bin_width();
            }
        }
    }
    Ok(f - expected_if_hz)
}

fn mix(trace: Trace<'_>, f_hz: f64, fs: f64) -> Vec<Complex64> {
    let rot = phasor(trace.len(), -2.0 * PI * f_hz / fs, 0.0);
    match trace {
        Trace::Real(x) => x.iter().zip(rot).map(|(&v, r)| r * v).collect(),
        Trace::Complex(x) => x.iter().zip(rot).map(|(&v, r)| r * v).collect(),
    }
}

/// Multiply a real trace by e^{−j2π·f_mix·t} and remove the mirror at
/// −2·f_mix with a zero-phase Butterworth low-pass.
pub fn digital_hybrid_downconvert(
    trace: &[f64],
    sample_rate_hz: f64,
    f_mix_hz: f64,
    signal_halfwidth_hz: f64,
    cfg: &DspConfig,
    cutoff_hz: f64,
) -> Result<ComplexWaveform> {
    if f_mix_hz.abs() >= sample_rate_hz / 2.0 {
        return Err(Error::Config(format!(
            "mixing frequency {f_mix_hz} Hz is at or above Nyquist"
        )));
    }
    let mixed = mix(Trace::Real(trace), f_mix_hz, sample_rate_hz);
    if cfg.mirror_filter_order == 0 {
        return ComplexWaveform::new(mixed, sample_rate_hz);
    }
    let limit = 2.0 * f_mix_hz.abs() - signal_halfwidth_hz;
    if cutoff_hz >= limit {
        return Err(Error::Config(format!(
            "mirror not separable: cutoff {cutoff_hz} Hz ≥ 2·|f_mix| − halfwidth = {limit} Hz"
        )));
    }
    let lp = Butterworth::lowpass(cfg.mirror_filter_order, cutoff_hz, sample_rate_hz)?;
    ComplexWaveform::new(lp.filtfilt_complex(&mixed), sample_rate_hz)
}

/// Result of pilot-based phase tracking.
#[derive(Debug, Clone)]
pub struct CarrierEstimate {
    pub phase: PhaseTrace,
    pub pilot_snr_db: f64,
}

fn moving_average(x: &[Complex64], window: usize) -> Vec<Complex64> {
    let n = x.len();
    let w = window.min(n).max(1);
    let lead = (w - 1) / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Complex64::new(0.0, 0.0));
    let mut acc = Complex64::new(0.0, 0.0);
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(lead);
            let hi = (lo + w).min(n);
            let lo = hi - w;
            (prefix[hi] - prefix[lo]) / w as f64
        })
        .collect()
}

/// Remove 2π jumps so that successive samples differ by less than π.
pub fn unwrap(phase: &mut [f64]) {
    let mut offset = 0.0;
    for i in 1..phase.len() {
        let raw = phase[i] + offset;
        let d = raw - phase[i - 1];
        let k = (d / (2.0 * PI)).round();
        offset -= k * 2.0 * PI;
        phase[i] = raw - k * 2.0 * PI;
    }
}

/// Carrier phase from an isolated pilot line at DC.
pub fn recover_carrier_phase(pilot_baseband: &ComplexWaveform, window: usize) -> Result<CarrierEstimate> {
    let x = pilot_baseband.samples();
    let smooth = moving_average(x, window);
    let sig = smooth.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
    let noise = x.iter().zip(&smooth).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / x.len() as f64;
    let snr_db = if noise > 0.0 {
        10.0 * (sig / noise).max(1e-30).log10()
    } else {
        300.0
    };
    if !(snr_db >= 6.0) {
        return Err(Error::TrackingFailure(format!("pilot SNR {snr_db:.1} dB below 6 dB")));
    }
    let mut phi: Vec<f64> = smooth.iter().map(|v| v.arg()).collect();
    unwrap(&mut phi);
    Ok(CarrierEstimate {
        phase: PhaseTrace::new(phi, pilot_baseband.sample_rate_hz())?,
        pilot_snr_db: snr_db,
    })
}

/// Shift the pilot line at `pilot_freq_hz` to DC and isolate it.
pub fn select_pilot(
    pilot: Trace<'_>,
    sample_rate_hz: f64,
    pilot_freq_hz: f64,
    cfg: &DspConfig,
) -> Result<ComplexWaveform> {
    let shifted = mix(pilot, pilot_freq_hz, sample_rate_hz);
    let lp = Butterworth::lowpass(cfg.pilot_filter_order, cfg.pilot_filter_cutoff_hz, sample_rate_hz)?;
    ComplexWaveform::new(lp.filtfilt_complex(&shifted), sample_rate_hz)
}

/// Recovered symbols and pipeline diagnostics.
#[derive(Debug, Clone)]
pub struct RxSymbols {
    pub symbols: Vec<Complex64>,
    pub diagnostics: RxDiagnostics,
}

#[derive(Debug, Clone)]
pub struct RxDiagnostics {
    pub estimated_offset_hz: f64,
    pub phase_trace_estimate: PhaseTrace,
    pub pilot_snr_db: f64,
    pub timing_offset_samples: usize,
}

/// Matched filter and decimation. Output is scaled so that a mode amplitude
/// α detected with unit gain appears as α.
pub fn matched_filter_decimate(
    baseband: &[Complex64],
    sps: usize,
    rolloff: f64,
    timing: Option<usize>,
) -> Result<(Vec<Complex64>, usize)> {
    let taps = rrc_taps(rolloff, sps, RRC_SPAN_SYMBOLS)?;
    let y = fft_filter_centered(baseband, &taps);
    let tau = match timing {
        Some(t) if t < sps => t,
        Some(t) => {
            return Err(Error::Config(format!("timing offset {t} must be below sps = {sps}")));
        }
        None => best_timing(&y, sps),
    };
    let scale = 1.0 / (sps as f64).sqrt();
    let out: Vec<Complex64> = y.iter().skip(tau).step_by(sps).map(|v| v * scale).collect();
    Ok((out, tau))
}

fn best_timing(y: &[Complex64], sps: usize) -> usize {
    (0..sps)
        .map(|t| (t, y.iter().skip(t).step_by(sps).map(|v| v.norm_sqr()).sum::<f64>()))
        .fold((0, f64::MIN), |acc, (t, e)| if e > acc.1 { (t, e) } else { acc })
        .0
}

/// Complex baseband of the quantum plane with the frequency offset removed.
fn quantum_baseband(
    raw: &RawDetection,
    rx: &ReceiverConfig,
    tx: &TxConfig,
    cfg: &DspConfig,
    offset_hz: f64,
) -> Result<Vec<Complex64>> {
    let fs = raw.sample_rate_hz;
    match raw.architecture {
        Architecture::Heterodyne => {
            let half = tx.symbol_rate_baud * (1.0 + tx.pulse_rolloff) / 2.0;
            let f_mix = -rx.lo_detuning_hz + offset_hz;
            Ok(digital_hybrid_downconvert(&raw.quantum_i, fs, f_mix, half, cfg, cfg.mirror_cutoff(tx))?.into_samples())
        }
        Architecture::Intradyne => {
            let iq = raw
                .quantum_complex()
                .ok_or_else(|| Error::InvalidArgument("intradyne detection lacks a Q trace".into()))?;
            if offset_hz == 0.0 {
                Ok(iq)
            } else {
                Ok(mix(Trace::Complex(&iq), offset_hz, fs))
            }
        }
    }
}

/// Linear part of the chain (down-conversion, matched filter, decimation)
/// without carrier recovery, used for noise-calibration records.
pub fn linear_symbols(
    raw: &RawDetection,
    rx: &ReceiverConfig,
    tx: &TxConfig,
    cfg: &DspConfig,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    let sps = tx.samples_per_symbol()?;
    let bb = quantum_baseband(raw, rx, tx, cfg, 0.0)?;
    Ok(matched_filter_decimate(
        &bb,
        sps,
        cfg.matched_filter_rolloff,
        Some(cfg.timing_offset_samples.unwrap_or(0)),
    )?
    .0)
}

/// Full receiver chain for either architecture.
pub fn run_rx_dsp(raw: &RawDetection, rx: &ReceiverConfig, tx: &TxConfig, cfg: &DspConfig) -> Result<RxSymbols> {
    cfg.validate().stage("dsp config")?;
    if (cfg.matched_filter_rolloff - tx.pulse_rolloff).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "matched filter roll-off {} differs from pulse roll-off {}",
            cfg.matched_filter_rolloff, tx.pulse_rolloff
        )));
    }
    let fs = raw.sample_rate_hz;
    let sps = tx.samples_per_symbol()?;
    let omega = tx.pilot_freq_hz;

    let pilot_complex;
    let (expected, pilot_trace) = match raw.architecture {
        Architecture::Heterodyne => (omega - rx.lo_detuning_hz, Trace::Real(&raw.pilot_i)),
        Architecture::Intradyne => {
            pilot_complex = raw
                .pilot_complex()
                .ok_or_else(|| Error::InvalidArgument("intradyne detection lacks a pilot Q trace".into()))?;
            (omega, Trace::Complex(&pilot_complex))
        }
    };
    let offset = estimate_frequency_offset(pilot_trace, fs, expected, cfg).stage("frequency offset")?;

    // The pilot takes the same mixing as the quantum plane, which leaves its
    // line at Ω; select_pilot then moves that line to DC.
    let pilot_line = match raw.architecture {
        Architecture::Heterodyne => -rx.lo_detuning_hz + offset + omega,
        Architecture::Intradyne => offset + omega,
    };
    let pilot_bb = select_pilot(pilot_trace, fs, pilot_line, cfg).stage("pilot band select")?;
    let window = cfg.phase_smoothing_window_samples.unwrap_or(sps);
    let carrier = recover_carrier_phase(&pilot_bb, window).stage("carrier phase")?;

    let mut bb = quantum_baseband(raw, rx, tx, cfg, offset).stage("down-conversion")?;
    if cfg.phase_correction {
        for (v, p) in bb.iter_mut().zip(carrier.phase.phi()) {
            let (s, c) = p.sin_cos();
            *v *= Complex64::new(c, -s);
        }
    }
    let (symbols, tau) = matched_filter_decimate(&bb, sps, cfg.matched_filter_rolloff, cfg.timing_offset_samples)
        .stage("matched filter")?;
    Ok(RxSymbols {
        symbols,
        diagnostics: RxDiagnostics {
            estimated_offset_hz: offset,
            phase_trace_estimate: carrier.phase,
            pilot_snr_db: carrier.pilot_snr_db,
            timing_offset_samples: tau,
        },
    })
}

/// Error-vector magnitude of `rx` against `tx` after removing the best
/// complex gain: RMS error over RMS reference.
pub fn evm(tx: &[Complex64], rx: &[Complex64]) -> f64 {
    let n = tx.len().min(rx.len());
    let (tx, rx) = (&tx[..n], &rx[..n]);
    let num: Complex64 = rx.iter().zip(tx).map(|(r, a)| r * a.conj()).sum();
    let den: f64 = tx.iter().map(|a| a.norm_sqr()).sum();
    let g = num / den;
    let err: f64 = rx.iter().zip(tx).map(|(r, a)| (r - g * a).norm_sqr()).sum();
    (err / (g.norm_sqr() * den)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    #[test]
    fn welch_parseval_white_noise() {
        let mut r = rng::stream(5, 1);
        let x = rng::gaussian_vec(&mut r, 1 << 17, 1.5);
        let psd = spectrum(Trace::Real(&x), 1e9, 1024).unwrap();
        assert_relative_eq!(psd.total_power(), 2.25, max_relative = 0.03);
        let z: Vec<Complex64> = x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let psdc = spectrum(Trace::Complex(&z), 1e9, 1024).unwrap();
        assert_relative_eq!(psdc.total_power(), 4.5, max_relative = 0.03);
        assert!(spectrum(Trace::Real(&x[..100]), 1e9, 1024).is_err());
    }

    #[test]
    fn tone_peak_and_offset() {
        let fs = 4e9;
        let f0 = 803e6;
        let x: Vec<f64> = (0..1 << 16).map(|i| (2.0 * PI * f0 * i as f64 / fs).cos()).collect();
        let cfg = DspConfig::default();
        let df = estimate_frequency_offset(Trace::Real(&x), fs, 800e6, &cfg).unwrap();
        assert!((df - 3e6).abs() < fs / cfg.fft_size as f64, "{df}");
        let mut r = rng::stream(1, 2);
        let noise = rng::gaussian_vec(&mut r, 1 << 16, 1.0);
        let err = estimate_frequency_offset(Trace::Real(&noise), fs, 800e6, &cfg).unwrap_err();
        assert!(matches!(err, Error::EstimationFailure(_)));
    }

    #[test]
    fn cosine_mixes_to_half() {
        let fs = 4e9;
        let f0 = 200e6;
        let x: Vec<f64> = (0..40_000).map(|i| (2.0 * PI * f0 * i as f64 / fs).cos()).collect();
        let y = digital_hybrid_downconvert(&x, fs, f0, 60e6, &DspConfig::default(), 72e6).unwrap();
        for v in &y.samples()[2000..38_000] {
            assert_relative_eq!(v.norm(), 0.5, max_relative = 0.01);
        }
        assert!(digital_hybrid_downconvert(&x, fs, f0, 60e6, &DspConfig::default(), 350e6).is_err());
    }

    #[test]
    fn unwrap_removes_jumps() {
        let mut p: Vec<f64> = (0..200)
            .map(|i| ((i as f64 * 0.3) + PI).rem_euclid(2.0 * PI) - PI)
            .collect();
        unwrap(&mut p);
        for w in p.windows(2) {
            assert!((w[1] - w[0] - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_ramp_slope() {
        let fs = 1e8;
        let n = 200_000;
        let w: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(3.0, 2.0 * PI * 1e3 * i as f64 / fs))
            .collect();
        let est = recover_carrier_phase(&ComplexWaveform::new(w, fs).unwrap(), 16).unwrap();
        let phi = est.phase.phi();
        let slope = (phi[n - 100] - phi[100]) / ((n - 200) as f64 / fs);
        assert_relative_eq!(slope, 2.0 * PI * 1e3, max_relative = 0.01);
    }

    #[test]
    fn evm_of_scaled_copy_is_zero() {
        let a: Vec<Complex64> = (0..50).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let b: Vec<Complex64> = a.iter().map(|v| v * Complex64::new(0.3, -2.0)).collect();
        assert!(evm(&a, &b) < 1e-12);
    }
}
