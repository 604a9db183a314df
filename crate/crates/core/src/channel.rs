//! Fibre link: loss, common laser phase noise, frequency offset and optional
//! additive excess noise on the quantum plane.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::phasor;
use crate::rng;
use crate::signal::{ComplexWaveform, DualPolFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub length_km: f64,
    #[serde(alias = "alpha")]
    pub alpha_db_per_km: f64,
    pub extra_loss_db: f64,
    pub linewidth_hz: f64,
    pub freq_offset_hz: f64,
    pub channel_excess_snu: f64,
    pub seed: u64,
}

/// Combined linewidth that reproduces a ~35 rad/µs peak phase velocity over
/// 10 ns windows; regenerate with `calibrate_linewidth`.
pub const DEFAULT_LINEWIDTH_HZ: f64 = 131_000.0;

/// Window used for the peak phase-velocity statistic.
pub const DEFAULT_VELOCITY_WINDOW_US: f64 = 0.01;

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            length_km: 15.2,
            alpha_db_per_km: 0.2,
            extra_loss_db: 0.0,
            linewidth_hz: DEFAULT_LINEWIDTH_HZ,
            freq_offset_hz: 0.0,
            channel_excess_snu: 0.0,
            seed: 2,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("channel.length_km", self.length_km),
            ("channel.alpha_db_per_km", self.alpha_db_per_km),
            ("channel.extra_loss_db", self.extra_loss_db),
            ("channel.linewidth_hz", self.linewidth_hz),
            ("channel.channel_excess_snu", self.channel_excess_snu),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if !self.freq_offset_hz.is_finite() {
            return Err(Error::Config("channel.freq_offset_hz must be finite".into()));
        }
        Ok(())
    }

    /// Power transmittance of the link.
    pub fn transmittance(&self) -> f64 {
        10f64.powf(-total_loss_db(self) / 10.0)
    }
}

/// Applied (or estimated) carrier phase in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    phi: Vec<f64>,
    sample_rate_hz: f64,
}

impl PhaseTrace {
    pub fn new(phi: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("phase trace contains non-finite values".into()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(
                "phase trace sample rate must be positive".into(),
            ));
        }
        Ok(Self { phi, sample_rate_hz })
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

pub fn total_loss_db(cfg: &ChannelConfig) -> f64 {
    cfg.alpha_db_per_km * cfg.length_km + cfg.extra_loss_db
}

/// Wiener phase walk starting at zero with increments N(0, 2π·Δν/fs).
pub fn wiener_phase(n: usize, linewidth_hz: f64, sample_rate_hz: f64, seed: u64) -> Vec<f64> {
    let mut phi = vec![0.0; n];
    if linewidth_hz <= 0.0 || n == 0 {
        return phi;
    }
    let sigma = (2.0 * PI * linewidth_hz / sample_rate_hz).sqrt();
    let mut r = rng::stream(seed, rng::STREAM_PHASE);
    for i in 1..n {
        phi[i] = phi[i - 1] + sigma * rng::normal(&mut r);
    }
    phi
}

/// Propagate a frame through the link. `symbol_rate_baud` sets the band in
/// which the injected excess noise is specified.
pub fn propagate(
    frame: &DualPolFrame,
    cfg: &ChannelConfig,
    symbol_rate_baud: f64,
) -> Result<(DualPolFrame, PhaseTrace)> {
    cfg.validate()?;
    let fs = frame.sample_rate_hz();
    let n = frame.len();
    let amp = 10f64.powf(-total_loss_db(cfg) / 20.0);
    let phi = wiener_phase(n, cfg.linewidth_hz, fs, cfg.seed);
    let w_off = 2.0 * PI * cfg.freq_offset_hz / fs;
    let identity_rot = cfg.linewidth_hz == 0.0 && cfg.freq_offset_hz == 0.0;
    let rot: Vec<Complex64> = if identity_rot {
        Vec::new()
    } else {
        phi.iter()
            .zip(phasor(n, w_off, 0.0))
            .map(|(p, off)| {
                let (s, c) = p.sin_cos();
                off * Complex64::new(c, s)
            })
            .collect()
    };
    let apply = |w: &ComplexWaveform| -> Vec<Complex64> {
        if identity_rot {
            w.samples().iter().map(|s| s * amp).collect()
        } else {
            w.samples().iter().zip(&rot).map(|(s, r)| s * r * amp).collect()
        }
    };
    let mut q = apply(frame.quantum());
    let p = apply(frame.pilot());
    if cfg.channel_excess_snu > 0.0 {
        if !(symbol_rate_baud > 0.0) {
            return Err(Error::InvalidArgument("symbol rate must be positive".into()));
        }
        // A quadrature x = 2·Re(α); matched filtering at R_q maps a per-sample
        // component variance σ² to σ²·R_q/fs at symbol level.
        let sigma = (cfg.channel_excess_snu / 4.0 * fs / symbol_rate_baud).sqrt();
        let mut r = rng::stream(cfg.seed, rng::STREAM_CHANNEL_NOISE);
        for s in q.iter_mut() {
            *s += Complex64::new(sigma * rng::normal(&mut r), sigma * rng::normal(&mut r));
        }
    }
    let out = DualPolFrame::new(ComplexWaveform::new(q, fs)?, ComplexWaveform::new(p, fs)?)?;
    Ok((out, PhaseTrace::new(phi, fs)?))
}

/// Largest |Φ(t+w) − Φ(t)|/w over the trace, in rad/µs.
pub fn peak_phase_velocity(phi: &PhaseTrace, window_us: f64) -> Result<f64> {
    if !(window_us > 0.0 && window_us.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "window must be positive, got {window_us}"
        )));
    }
    let w = (window_us * 1e-6 * phi.sample_rate_hz()).round().max(1.0) as usize;
    if phi.len() <= w {
        return Err(Error::InvalidArgument(format!(
            "trace of {} samples is not longer than the {w}-sample window",
            phi.len()
        )));
    }
    let dt_us = w as f64 / phi.sample_rate_hz() * 1e6;
    let p = phi.phi();
    let peak = p.windows(w + 1).map(|s| (s[w] - s[0]).abs()).fold(0.0, f64::max);
    Ok(peak / dt_us)
}

/// Linewidth giving `target_rad_per_us` peak phase velocity on a Wiener trace
/// of `duration_s` at `sample_rate_hz`. For a fixed seed the statistic scales
/// with √Δν, so one evaluation at 1 Hz fixes the answer.
pub fn calibrate_linewidth(
    target_rad_per_us: f64,
    window_us: f64,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<f64> {
    if !(target_rad_per_us > 0.0 && duration_s > 0.0 && sample_rate_hz > 0.0) {
        return Err(Error::InvalidArgument(
            "linewidth calibration needs positive inputs".into(),
        ));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let phi = PhaseTrace::new(wiener_phase(n, 1.0, sample_rate_hz, seed), sample_rate_hz)?;
    let v1 = peak_phase_velocity(&phi, window_us)?;
    if v1 <= 0.0 {
        return Err(Error::CalibrationFailure("reference trace has no phase motion".into()));
    }
    Ok((target_rad_per_us / v1).powi(2))
}
