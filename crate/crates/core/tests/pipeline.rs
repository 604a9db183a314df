//! End-to-end chain behaviour: fidelity, spectra, offset and phase tracking.

use num_complex::Complex64;

use cvqkd::channel::{
    peak_phase_velocity, propagate, wiener_phase, ChannelConfig, PhaseTrace, DEFAULT_LINEWIDTH_HZ,
    DEFAULT_VELOCITY_WINDOW_US,
};
use cvqkd::dsp::{evm, run_rx_dsp, spectrum, DspConfig, RxSymbols, Trace};
use cvqkd::frontend::{detect, Architecture, RawDetection, ReceiverConfig};
use cvqkd::signal::SymbolFrame;
use cvqkd::transmitter::{transmit, TxConfig};

const GUARD: usize = 64;

fn quiet_channel() -> ChannelConfig {
    ChannelConfig {
        length_km: 0.0,
        alpha_db_per_km: 0.0,
        linewidth_hz: 0.0,
        ..ChannelConfig::default()
    }
}

fn ideal_receiver(arch: Architecture) -> ReceiverConfig {
    let mut rx = match arch {
        Architecture::Heterodyne => ReceiverConfig::heterodyne(),
        Architecture::Intradyne => ReceiverConfig::intradyne(),
    };
    rx.noise_enabled = false;
    rx.pol_extinction_db = f64::INFINITY;
    rx.quantum_det.rolloff_order = 0;
    rx.pilot_det.rolloff_order = 0;
    rx
}

struct Run {
    symbols: SymbolFrame,
    raw: RawDetection,
    out: RxSymbols,
    truth: PhaseTrace,
}

fn run(n: usize, tx: &TxConfig, ch: &ChannelConfig, rx: &ReceiverConfig, dsp: &DspConfig) -> Run {
    let (symbols, frame) = transmit(n, tx).unwrap();
    let (received, truth) = propagate(&frame, ch, tx.symbol_rate_baud).unwrap();
    let raw = detect(&received, rx, tx).unwrap();
    let out = run_rx_dsp(&raw, rx, tx, dsp).unwrap();
    Run {
        symbols,
        raw,
        out,
        truth,
    }
}

fn trimmed(x: &[Complex64]) -> &[Complex64] {
    &x[GUARD..x.len() - GUARD]
}

/// Best complex gain mapping `a` onto `b`.
fn gain(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let num: Complex64 = a.iter().zip(b).map(|(a, b)| b * a.conj()).sum();
    let den: f64 = a.iter().map(|a| a.norm_sqr()).sum();
    num / den
}

fn quadrant(z: Complex64) -> (bool, bool) {
    (z.re > 0.0, z.im > 0.0)
}

/// Residual (true − estimated) carrier phase std, after removing the
/// estimated frequency ramp and the mean.
fn phase_residual_std(r: &Run, fs: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * r.out.diagnostics.estimated_offset_hz / fs;
    let d: Vec<f64> = r
        .out
        .diagnostics
        .phase_trace_estimate
        .phi()
        .iter()
        .zip(r.truth.phi())
        .enumerate()
        .map(|(i, (e, t))| e + w * i as f64 - t)
        .collect();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
}

#[test]
fn noiseless_chain_recovers_qpsk_without_errors() {
    for arch in [Architecture::Heterodyne, Architecture::Intradyne] {
        let tx = TxConfig {
            mean_photons: 400.0,
            ..TxConfig::default()
        };
        let r = run(
            10_000,
            &tx,
            &quiet_channel(),
            &ideal_receiver(arch),
            &DspConfig::default(),
        );
        let (a, b) = (trimmed(r.symbols.symbols()), trimmed(&r.out.symbols));
        let e = evm(a, b);
        assert!(e < 0.01, "{arch}: EVM {e}");
        let g = gain(a, b);
        let errors = a
            .iter()
            .zip(b)
            .filter(|(a, b)| quadrant(**a) != quadrant(*b / g))
            .count();
        assert_eq!(errors, 0, "{arch}");
    }
}

#[test]
fn architectures_agree_at_high_snr() {
    let tx = TxConfig {
        mean_photons: 400.0,
        ..TxConfig::default()
    };
    let h = run(
        10_000,
        &tx,
        &quiet_channel(),
        &ideal_receiver(Architecture::Heterodyne),
        &DspConfig::default(),
    );
    let mut rx_i = ideal_receiver(Architecture::Intradyne);
    rx_i.hybrid_excess_loss_db = 0.0;
    let i = run(10_000, &tx, &quiet_channel(), &rx_i, &DspConfig::default());
    let (sh, si) = (trimmed(&h.out.symbols), trimmed(&i.out.symbols));
    let g = gain(sh, si);
    let scale = sh.iter().map(|z| z.norm()).sum::<f64>() / sh.len() as f64;
    let worst = sh
        .iter()
        .zip(si)
        .map(|(a, b)| (b / g - a).norm() / scale)
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "max per-symbol deviation {worst}");
}

#[test]
fn hybrid_loss_halves_signal_power() {
    let tx = TxConfig {
        mean_photons: 400.0,
        ..TxConfig::default()
    };
    let mut rx = ideal_receiver(Architecture::Intradyne);
    rx.hybrid_excess_loss_db = 0.0;
    let lossless = run(10_000, &tx, &quiet_channel(), &rx, &DspConfig::default());
    rx.hybrid_excess_loss_db = 3.0;
    let lossy = run(10_000, &tx, &quiet_channel(), &rx, &DspConfig::default());
    let a = trimmed(lossless.symbols.symbols());
    let ratio = gain(a, trimmed(&lossy.out.symbols)).norm_sqr() / gain(a, trimmed(&lossless.out.symbols)).norm_sqr();
    assert!((ratio / 10f64.powf(-0.3) - 1.0).abs() < 0.01, "power ratio {ratio}");
}

#[test]
fn heterodyne_spectrum_places_signal_and_pilot() {
    let tx = TxConfig {
        mean_photons: 400.0,
        ..TxConfig::default()
    };
    let r = run(
        20_000,
        &tx,
        &quiet_channel(),
        &ideal_receiver(Architecture::Heterodyne),
        &DspConfig::default(),
    );
    let fs = tx.sample_rate_hz;
    let q = spectrum(Trace::Real(&r.raw.quantum_i), fs, 4096).unwrap();
    let frac = q.band_power(100e6, 300e6) / q.total_power();
    assert!(frac > 0.95, "in-band fraction {frac}");
    let p = spectrum(Trace::Real(&r.raw.pilot_i), fs, 4096).unwrap();
    let peak = p.frequency_hz[p.peak_index()];
    assert!((peak - 800e6).abs() <= p.bin_width(), "pilot beat at {peak}");
}

#[test]
fn injected_frequency_offset_is_recovered() {
    let tx = TxConfig::default();
    let ch = ChannelConfig {
        freq_offset_hz: 3e6,
        ..quiet_channel()
    };
    let dsp = DspConfig::default();
    for arch in [Architecture::Heterodyne, Architecture::Intradyne] {
        let mut rx = ideal_receiver(arch);
        rx.noise_enabled = true;
        let r = run(20_000, &tx, &ch, &rx, &dsp);
        let err = (r.out.diagnostics.estimated_offset_hz - 3e6).abs();
        assert!(
            err < tx.sample_rate_hz / dsp.fft_size as f64,
            "{arch}: offset error {err}"
        );
    }
}

#[test]
fn phase_tracking_at_default_linewidth() {
    // back-to-back keeps the pilot above 25 dB SNR
    let tx = TxConfig::default();
    let ch = ChannelConfig {
        length_km: 0.0,
        linewidth_hz: DEFAULT_LINEWIDTH_HZ,
        ..ChannelConfig::default()
    };
    let rx = ReceiverConfig::heterodyne();
    let dsp = DspConfig::default();
    let on = run(20_000, &tx, &ch, &rx, &dsp);
    assert!(
        on.out.diagnostics.pilot_snr_db >= 25.0,
        "pilot SNR {}",
        on.out.diagnostics.pilot_snr_db
    );
    let sd = phase_residual_std(&on, tx.sample_rate_hz);
    assert!(sd <= 0.05, "residual phase std {sd} rad");

    let off = run(
        20_000,
        &tx,
        &ch,
        &rx,
        &DspConfig {
            phase_correction: false,
            ..dsp
        },
    );
    let a = trimmed(on.symbols.symbols());
    let spread = |s: &[Complex64]| {
        let g = gain(a, s);
        a.iter().zip(s).map(|(a, s)| (s - g * a).norm_sqr()).sum::<f64>() / a.len() as f64
    };
    assert!(spread(trimmed(&on.out.symbols)) < spread(trimmed(&off.out.symbols)));
}

#[test]
fn phase_error_shrinks_with_pilot_power() {
    let ch = ChannelConfig {
        linewidth_hz: DEFAULT_LINEWIDTH_HZ,
        ..ChannelConfig::default()
    };
    let rx = ReceiverConfig::heterodyne();
    let mut last = f64::INFINITY;
    for ratio in [10.0, 15.0, 20.0, 23.4] {
        let tx = TxConfig {
            pilot_ratio_db: ratio,
            ..TxConfig::default()
        };
        let sd = phase_residual_std(&run(20_000, &tx, &ch, &rx, &DspConfig::default()), tx.sample_rate_hz);
        assert!(sd < last, "A_q = {ratio} dB: {sd} rad (previous {last})");
        last = sd;
    }
}

#[test]
fn default_linewidth_matches_phase_velocity() {
    let fs = 4e9;
    let n = (1e-3 * fs) as usize;
    let phi = PhaseTrace::new(wiener_phase(n, DEFAULT_LINEWIDTH_HZ, fs, 11), fs).unwrap();
    let v = peak_phase_velocity(&phi, DEFAULT_VELOCITY_WINDOW_US).unwrap();
    assert!((v - 35.0).abs() <= 15.0, "peak phase velocity {v} rad/us");
}

#[test]
fn chain_is_deterministic() {
    let tx = TxConfig::default();
    let ch = ChannelConfig::default();
    let rx = ReceiverConfig::heterodyne();
    let a = run(5_000, &tx, &ch, &rx, &DspConfig::default());
    let b = run(5_000, &tx, &ch, &rx, &DspConfig::default());
    assert_eq!(a.out.symbols, b.out.symbols);
}
