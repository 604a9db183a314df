//! Shot-noise calibration and transmittance / excess-noise estimation.
//!
//! Conventions: symbol-level samples are SNU-normalised so that vacuum gives
//! unit variance per quadrature. Alice's displacement in SNU is
//! `A = √(2·V_mod)·a` for unit-energy symbols `a`. The received sample is
//! modelled as `r = g·A + n` with `t² = 2|g|²` the power transmittance from
//! Alice to the detector and per-quadrature noise `1 + t²ξ/2` (ξ referred to
//! the channel input).

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::SymbolFrame;

pub const MIN_CALIBRATION_SAMPLES: usize = 100_000;
pub const MIN_ESTIMATION_SYMBOLS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseCalibration {
    pub shot_variance_raw: f64,
    pub electronic_variance_raw: f64,
    pub snu_per_raw: f64,
    pub v_el_snu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamEstimate {
    /// Amplitude transmittance from Alice to the detector.
    pub t_hat: f64,
    /// Total excess noise referred to the receiver input.
    pub xi_snu: f64,
    /// Excess noise with the calibrated electronic noise removed.
    pub xi_trusted_snu: f64,
    /// Total excess noise referred to the channel input.
    pub xi_channel_input_snu: f64,
    pub v_el_snu: f64,
    pub snr: f64,
    pub n_symbols_used: usize,
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Noise scale from a vacuum record (LO on) and a dark record (LO off).
pub fn calibrate(vacuum: &[f64], dark: &[f64]) -> Result<NoiseCalibration> {
    if vacuum.len() < MIN_CALIBRATION_SAMPLES || dark.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "calibration records need ≥ {MIN_CALIBRATION_SAMPLES} samples, got {} and {}",
            vacuum.len(),
            dark.len()
        )));
    }
    let vv = variance(vacuum);
    let vd = variance(dark);
    let shot = vv - vd;
    if !(shot > 0.0) {
        return Err(Error::CalibrationFailure(format!(
            "vacuum variance {vv} does not exceed dark variance {vd}"
        )));
    }
    Ok(NoiseCalibration {
        shot_variance_raw: shot,
        electronic_variance_raw: vd,
        snu_per_raw: 1.0 / shot,
        v_el_snu: vd / shot,
    })
}

/// Quadrature samples (re, im interleaved) of complex symbol-level records.
pub fn quadratures(x: &[Complex64]) -> Vec<f64> {
    x.iter().flat_map(|v| [v.re, v.im]).collect()
}

/// Estimate transmittance and excess noise from known transmitted symbols.
///
/// `rx` are raw symbol-level samples aligned with `tx`; `receiver_eta` is the
/// power transmittance between the receiver input and the photodiodes, used
/// to refer the excess noise to the receiver input.
pub fn estimate_channel_params(
    tx: &SymbolFrame,
    rx: &[Complex64],
    calib: &NoiseCalibration,
    v_mod_snu: f64,
    receiver_eta: f64,
) -> Result<ParamEstimate> {
    estimate_with_vacuum(tx, rx, calib, v_mod_snu, receiver_eta, true)
}

/// As `estimate_channel_params`; with `vacuum_present = false` (receiver
/// noise disabled) the whole residual counts as excess noise and the
/// electronic contribution is taken as zero.
pub fn estimate_with_vacuum(
    tx: &SymbolFrame,
    rx: &[Complex64],
    calib: &NoiseCalibration,
    v_mod_snu: f64,
    receiver_eta: f64,
    vacuum_present: bool,
) -> Result<ParamEstimate> {
    if tx.len() != rx.len() {
        return Err(Error::InvalidArgument(format!(
            "symbol counts differ: tx {} vs rx {}",
            tx.len(),
            rx.len()
        )));
    }
    let n = tx.len();
    if n < MIN_ESTIMATION_SYMBOLS {
        return Err(Error::InsufficientData(format!(
            "{n} symbols, at least {MIN_ESTIMATION_SYMBOLS} required"
        )));
    }
    if !(v_mod_snu > 0.0) || !(receiver_eta > 0.0 && receiver_eta <= 1.0) {
        return Err(Error::InvalidArgument(
            "v_mod must be > 0 and receiver_eta in (0, 1]".into(),
        ));
    }
    let norm = calib.snu_per_raw.sqrt();
    let amp = (2.0 * v_mod_snu).sqrt();
    let mut cross = Complex64::new(0.0, 0.0);
    let mut energy = 0.0;
    for (a, r) in tx.symbols().iter().zip(rx) {
        let big_a = a * amp;
        cross += r * norm * big_a.conj();
        energy += big_a.norm_sqr();
    }
    let g = cross / energy;
    let t2 = 2.0 * g.norm_sqr();
    if !(t2 > 0.0) {
        return Err(Error::EstimationFailure(
            "no correlation between tx and rx symbols".into(),
        ));
    }
    let resid: f64 = tx
        .symbols()
        .iter()
        .zip(rx)
        .map(|(a, r)| (r * norm - g * a * amp).norm_sqr())
        .sum();
    let noise = resid / (2.0 * n as f64);
    let (excess, v_el) = if vacuum_present {
        (noise - 1.0, calib.v_el_snu)
    } else {
        (noise, 0.0)
    };
    let xi_in = 2.0 * excess / receiver_eta;
    Ok(ParamEstimate {
        t_hat: t2.sqrt(),
        xi_snu: xi_in,
        xi_trusted_snu: xi_in - 2.0 * v_el / receiver_eta,
        xi_channel_input_snu: 2.0 * excess / t2,
        v_el_snu: v_el,
        snr: t2 * v_mod_snu / 2.0 / noise,
        n_symbols_used: n,
    })
}

/// Referral point for `referred_excess`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Referral {
    /// Move a value seen after a transmittance t² back to before it.
    ReceiverInput,
    /// Move a value seen before a transmittance t² forward to after it.
    ChannelOutput,
}

pub fn referred_excess(xi_snu: f64, t_hat: f64, to: Referral) -> Result<f64> {
    if !(t_hat > 0.0 && t_hat.is_finite()) {
        return Err(Error::NumericDomain(format!(
            "amplitude transmittance must be positive, got {t_hat}"
        )));
    }
    let t2 = t_hat * t_hat;
    Ok(match to {
        Referral::ReceiverInput => xi_snu / t2,
        Referral::ChannelOutput => xi_snu * t2,
    })
}
