//! Command orchestration behind the CLI: frame-based Monte-Carlo simulation,
//! analytic planning, calibration and spectrum export. Every command returns
//! its artifacts in memory; `Artifacts::write` is the single writer.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{calibrate_linewidth, peak_phase_velocity, propagate, wiener_phase, PhaseTrace};
use crate::config::RunConfig;
use crate::dsp::{evm, linear_symbols, run_rx_dsp, spectrum, Psd, Trace};
use crate::error::{Error, Result, StageExt};
use crate::estimation::{calibrate, estimate_with_vacuum, quadratures, NoiseCalibration, ParamEstimate};
use crate::frontend::{calibration_records, detect, Architecture, ReceiverConfig};
use crate::keyrate::{secure_key_rate, KeyrateInput, KeyrateReport};
use crate::planner::{
    aes_capacity, calibrate_efficiency, find_crossover, reach_at_rate, sweep, AesCapacity, Crossover, EfficiencyFit,
    ReachPair, ScenarioPair, SkrCurve, TrustModel, AES_BYTES_PER_KEY, AES_KEY_BITS, SEGMENTS,
};
use crate::rng;
use crate::signal::SymbolFrame;
use crate::transmitter::{transmit, TxConfig};

pub const SCHEMA_VERSION: u32 = 1;

const FRAME_LABEL_TX: u64 = 0x7478;
const FRAME_LABEL_CHANNEL: u64 = 0x6368;
const FRAME_LABEL_RX: u64 = 0x7278;
const FRAME_LABEL_CAL: u64 = 0x6361;

/// Files produced by a command, keyed by file name.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub json: Vec<(String, String)>,
    pub csv: Vec<(String, String)>,
    pub toml: Vec<(String, String)>,
}

impl Artifacts {
    /// Write the selected artifact kinds into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, json: bool, csv: bool) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let groups = [(json, &self.json), (csv, &self.csv), (true, &self.toml)];
        for (name, body) in groups.iter().filter(|g| g.0).flat_map(|g| g.1.iter()) {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn frame_seeds(cfg: &RunConfig, frame: usize) -> (TxConfig, crate::channel::ChannelConfig, ReceiverConfig) {
    let k = frame as u64;
    let mut tx = cfg.tx.clone();
    let mut ch = cfg.channel.clone();
    let mut rx = cfg.receiver.clone();
    tx.seed = rng::derive(rng::derive(cfg.seed, FRAME_LABEL_TX ^ cfg.tx.seed), k);
    ch.seed = rng::derive(rng::derive(cfg.seed, FRAME_LABEL_CHANNEL ^ cfg.channel.seed), k);
    rx.seed = rng::derive(rng::derive(cfg.seed, FRAME_LABEL_RX ^ cfg.receiver.seed), k);
    (tx, ch, rx)
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::InvalidArgument(format!("cannot serialise report: {e}")))
}

fn psd_csv(psd: &Psd) -> String {
    let mut out = String::from("frequency_hz,psd_db\n");
    for (f, d) in psd.frequency_hz.iter().zip(psd.db()) {
        out.push_str(&format!("{f},{d}\n"));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub estimated_offset_hz: f64,
    pub pilot_snr_db: f64,
    pub timing_offset_samples: usize,
    pub evm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KeyrateSummary {
    pub input: KeyrateInput,
    pub report: KeyrateReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub architecture: Architecture,
    pub noise_enabled: bool,
    pub frames: usize,
    pub symbols_used: usize,
    pub calibration_symbols: usize,
    pub estimate: ParamEstimate,
    pub calibration: NoiseCalibration,
    pub configured_transmittance: f64,
    pub keyrate: Option<KeyrateSummary>,
    pub keyrate_error: Option<String>,
    pub diagnostics: Vec<FrameDiagnostics>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub report: SimulationReport,
    pub psd: Option<(Psd, Psd)>,
}

impl SimulationOutcome {
    pub fn artifacts(&self) -> Result<Artifacts> {
        let mut a = Artifacts {
            json: vec![("report.json".into(), json(&self.report)?)],
            ..Default::default()
        };
        if let Some((q, p)) = &self.psd {
            a.csv.push(("psd_quantum.csv".into(), psd_csv(q)));
            a.csv.push(("psd_pilot.csv".into(), psd_csv(p)));
        }
        Ok(a)
    }
}

/// Power spectra of the detected quantum and pilot traces of one frame.
fn detected_spectra(raw: &crate::frontend::RawDetection, fft: usize) -> Result<(Psd, Psd)> {
    let fs = raw.sample_rate_hz;
    let q = match raw.quantum_complex() {
        Some(c) => spectrum(Trace::Complex(&c), fs, fft)?,
        None => spectrum(Trace::Real(&raw.quantum_i), fs, fft)?,
    };
    let p = match raw.pilot_complex() {
        Some(c) => spectrum(Trace::Complex(&c), fs, fft)?,
        None => spectrum(Trace::Real(&raw.pilot_i), fs, fft)?,
    };
    Ok((q, p))
}

/// Transmitter → channel → detection → DSP → estimation over the configured
/// frames, with pooled parameter estimation.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationOutcome> {
    cfg.validate()?;
    let sim = &cfg.simulation;
    let g = sim.guard_symbols;
    let n = sim.symbols_per_frame;
    let sps = cfg.tx.samples_per_symbol()?;
    let mut tx_pool = Vec::with_capacity(sim.frames * (n - 2 * g));
    let mut rx_pool: Vec<Complex64> = Vec::with_capacity(sim.frames * (n - 2 * g));
    let mut diagnostics = Vec::with_capacity(sim.frames);
    let mut psd = None;

    for k in 0..sim.frames {
        let (tx, ch, rx) = frame_seeds(cfg, k);
        let (symbols, frame) = transmit(n, &tx).stage("transmitter")?;
        let (received, _) = propagate(&frame, &ch, tx.symbol_rate_baud).stage("channel")?;
        drop(frame);
        let raw = detect(&received, &rx, &tx).stage("receiver front-end")?;
        drop(received);
        if sim.psd && k == 0 {
            psd = Some(detected_spectra(&raw, cfg.dsp.fft_size).stage("spectrum")?);
        }
        let out = run_rx_dsp(&raw, &rx, &tx, &cfg.dsp).stage("dsp")?;
        let (a, r) = (&symbols.symbols()[g..n - g], &out.symbols[g..n - g]);
        diagnostics.push(FrameDiagnostics {
            frame: k,
            estimated_offset_hz: out.diagnostics.estimated_offset_hz,
            pilot_snr_db: out.diagnostics.pilot_snr_db,
            timing_offset_samples: out.diagnostics.timing_offset_samples,
            evm: evm(a, r),
        });
        tx_pool.extend_from_slice(a);
        rx_pool.extend_from_slice(r);
    }

    let mut vac = Vec::new();
    let mut dark = Vec::new();
    for k in 0..sim.calibration_frames {
        let mut rx = cfg.receiver.clone();
        rx.seed = rng::derive(rng::derive(cfg.seed, FRAME_LABEL_CAL ^ cfg.receiver.seed), k as u64);
        let (v, d) = calibration_records(&rx, &cfg.tx, n * sps).stage("noise calibration")?;
        vac.extend(quadratures(
            &linear_symbols(&v, &rx, &cfg.tx, &cfg.dsp).stage("noise calibration")?[g..n - g],
        ));
        dark.extend(quadratures(
            &linear_symbols(&d, &rx, &cfg.tx, &cfg.dsp).stage("noise calibration")?[g..n - g],
        ));
    }
    let calib = calibrate(&vac, &dark).stage("noise calibration")?;
    let used = tx_pool.len();
    let tx_frame = SymbolFrame::new(tx_pool, cfg.tx.symbol_rate_baud)?;
    let eta = cfg.receiver.effective_efficiency();
    let estimate = estimate_with_vacuum(
        &tx_frame,
        &rx_pool,
        &calib,
        cfg.tx.v_mod_snu(),
        eta,
        cfg.receiver.noise_enabled,
    )
    .stage("estimation")?;

    let (keyrate, keyrate_error) = match keyrate_from_estimate(cfg, &estimate) {
        Ok(k) => (Some(k), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SimulationOutcome {
        report: SimulationReport {
            schema_version: SCHEMA_VERSION,
            command: "simulate",
            seed: cfg.seed,
            architecture: cfg.receiver.architecture,
            noise_enabled: cfg.receiver.noise_enabled,
            frames: sim.frames,
            symbols_used: used,
            calibration_symbols: vac.len() / 2,
            estimate,
            calibration: calib,
            configured_transmittance: cfg.channel.transmittance(),
            keyrate,
            keyrate_error,
            diagnostics,
            config: cfg.clone(),
        },
        psd,
    })
}

/// Key rate implied by a measured estimate, with the same noise referral as
/// the planner: untrusted counts all excess noise against the channel,
/// trusted moves the electronic share into v_el.
pub fn keyrate_from_estimate(cfg: &RunConfig, p: &ParamEstimate) -> Result<KeyrateSummary> {
    let eta = cfg.receiver.effective_efficiency();
    let t = (p.t_hat * p.t_hat / eta).min(1.0);
    let base = KeyrateInput {
        v_mod_snu: cfg.tx.v_mod_snu(),
        t_channel: t,
        xi_channel_snu: 0.0,
        eta_det: eta,
        v_el_snu: 0.0,
        beta_rec: cfg.keyrate.beta_rec,
        trusted: cfg.keyrate.trusted,
        symbol_rate_baud: cfg.tx.symbol_rate_baud,
    };
    let mut input = cfg.keyrate.apply(base);
    if input.trusted {
        input.xi_channel_snu = p.xi_trusted_snu.max(0.0) / t;
        input.v_el_snu = p.v_el_snu;
    } else {
        input.xi_channel_snu = p.xi_snu.max(0.0) / t;
    }
    let report = secure_key_rate(&input)?;
    Ok(KeyrateSummary { input, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct AesRow {
    pub skr_bps: f64,
    #[serde(flatten)]
    pub capacity: AesCapacity,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentRecommendation {
    pub label: &'static str,
    pub min_km: f64,
    pub max_km: f64,
    pub trust: TrustModel,
    /// Architecture with the higher SKR at the far end of the segment.
    pub recommended: Architecture,
    pub skr_heterodyne_bps: f64,
    pub skr_intradyne_bps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub trusted: bool,
    pub reach: Vec<ReachPair>,
    pub crossover: Crossover,
    pub aes: Vec<AesRow>,
    pub segments: Vec<SegmentRecommendation>,
    pub assumptions: Vec<String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub report: PlanReport,
    pub curve: SkrCurve,
}

impl PlanOutcome {
    pub fn artifacts(&self) -> Result<Artifacts> {
        Ok(Artifacts {
            json: vec![("report.json".into(), json(&self.report)?)],
            csv: vec![("curve.csv".into(), curve_csv(&self.curve))],
            ..Default::default()
        })
    }

    pub fn reach_km(&self, target_bps: f64, arch: Architecture) -> Option<f64> {
        let r = self.report.reach.iter().find(|r| r.target_bps == target_bps)?;
        match arch {
            Architecture::Heterodyne => r.heterodyne.km(),
            Architecture::Intradyne => r.intradyne.km(),
        }
    }
}

pub fn curve_csv(c: &SkrCurve) -> String {
    let mut out = String::from("distance_km,skr_het_bps,skr_int_bps,trusted_flag\n");
    for ((d, h), i) in c.distance_km.iter().zip(&c.heterodyne_bps).zip(&c.intradyne_bps) {
        out.push_str(&format!("{d},{h},{i},{}\n", u8::from(c.trusted)));
    }
    out
}

pub fn plan(cfg: &RunConfig) -> Result<PlanOutcome> {
    cfg.validate()?;
    let pair = &cfg.planner.scenario;
    let grid = cfg.planner.grid.distances()?;
    let curve = sweep(pair, &grid).stage("sweep")?;
    let reach = cfg
        .planner
        .rate_targets_bps
        .iter()
        .map(|&r| reach_at_rate(&curve, r))
        .collect::<Result<Vec<_>>>()?;
    let crossover = find_crossover(&curve);
    let aes = cfg
        .planner
        .rate_targets_bps
        .iter()
        .map(|&r| {
            Ok(AesRow {
                skr_bps: r,
                capacity: aes_capacity(r, AES_KEY_BITS, AES_BYTES_PER_KEY)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut segments = Vec::with_capacity(SEGMENTS.len());
    for s in SEGMENTS {
        let p = ScenarioPair {
            trusted: s.trust == TrustModel::Trusted,
            ..pair.clone()
        };
        let h = p.skr_at(Architecture::Heterodyne, s.max_km)?;
        let i = p.skr_at(Architecture::Intradyne, s.max_km)?;
        segments.push(SegmentRecommendation {
            label: s.label,
            min_km: s.min_km,
            max_km: s.max_km,
            trust: s.trust,
            recommended: if i > h {
                Architecture::Intradyne
            } else {
                Architecture::Heterodyne
            },
            skr_heterodyne_bps: h,
            skr_intradyne_bps: i,
        });
    }
    let mut assumptions = vec![
        "excess noise is referred to the receiver input and held constant over distance".to_string(),
        format!("detection efficiency {} for both receivers", pair.eta_det),
    ];
    if pair.trusted {
        assumptions.push(format!(
            "intradyne trusted excess noise {} SNU is assumed, not measured: it subtracts the heterodyne electronic share",
            pair.intradyne.xi_trusted_snu
        ));
    }
    Ok(PlanOutcome {
        report: PlanReport {
            schema_version: SCHEMA_VERSION,
            command: "plan",
            seed: cfg.seed,
            trusted: pair.trusted,
            reach,
            crossover,
            aes,
            segments,
            assumptions,
            config: cfg.clone(),
        },
        curve,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub efficiency: EfficiencyFit,
    pub linewidth_hz: f64,
    pub achieved_peak_velocity_rad_per_us: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub report: CalibrationReport,
    pub calibrated_config: String,
}

impl CalibrationOutcome {
    pub fn artifacts(&self) -> Result<Artifacts> {
        Ok(Artifacts {
            json: vec![("report.json".into(), json(&self.report)?)],
            toml: vec![("calibrated.toml".into(), self.calibrated_config.clone())],
            ..Default::default()
        })
    }
}

/// Fit the detection efficiency to the reach targets and the linewidth to
/// the peak phase-velocity target, and emit the calibrated configuration.
pub fn calibrate_run(cfg: &RunConfig) -> Result<CalibrationOutcome> {
    cfg.validate()?;
    let c = cfg
        .calibration
        .as_ref()
        .ok_or_else(|| Error::Config("no [calibration] section with targets".into()))?;
    let fit = calibrate_efficiency(&c.targets, &cfg.planner.scenario, (c.eta_min, c.eta_max))?;
    let fs = cfg.tx.sample_rate_hz;
    let lw_seed = rng::derive(cfg.seed, cfg.channel.seed);
    let lw = calibrate_linewidth(
        c.phase_velocity_target_rad_per_us,
        c.velocity_window_us,
        c.trace_duration_s,
        fs,
        lw_seed,
    )?;
    let n = (c.trace_duration_s * fs).round() as usize;
    let achieved = peak_phase_velocity(
        &PhaseTrace::new(wiener_phase(n, lw, fs, lw_seed), fs)?,
        c.velocity_window_us,
    )?;

    let mut out = cfg.clone();
    out.planner.scenario.eta_det = fit.eta_det;
    out.channel.linewidth_hz = lw;
    let header = format!(
        "# Calibrated configuration written by `cvqkd calibrate` (seed {}).\n\
         # planner.scenario.eta_det = {:.6}: golden-section fit to {} reach targets, rms relative error {:.2} %.\n\
         # channel.linewidth_hz = {:.1}: peak phase velocity {:.2} rad/us over {} us windows of a {} s trace.\n\n",
        cfg.seed,
        fit.eta_det,
        c.targets.len(),
        100.0 * fit.rms_relative_error,
        lw,
        achieved,
        c.velocity_window_us,
        c.trace_duration_s
    );
    let calibrated_config = header + &out.to_toml()?;
    Ok(CalibrationOutcome {
        report: CalibrationReport {
            schema_version: SCHEMA_VERSION,
            command: "calibrate",
            seed: cfg.seed,
            efficiency: fit,
            linewidth_hz: lw,
            achieved_peak_velocity_rad_per_us: achieved,
            config: cfg.clone(),
        },
        calibrated_config,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub architecture: Architecture,
    pub quantum_peak_hz: f64,
    pub pilot_peak_hz: f64,
    pub resolution_hz: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct SpectrumOutcome {
    pub report: SpectrumReport,
    pub quantum: Psd,
    pub pilot: Psd,
}

impl SpectrumOutcome {
    pub fn artifacts(&self) -> Result<Artifacts> {
        Ok(Artifacts {
            json: vec![("report.json".into(), json(&self.report)?)],
            csv: vec![
                ("psd_quantum.csv".into(), psd_csv(&self.quantum)),
                ("psd_pilot.csv".into(), psd_csv(&self.pilot)),
            ],
            ..Default::default()
        })
    }
}

/// Detected power spectra of the first simulation frame.
pub fn spectrum_run(cfg: &RunConfig) -> Result<SpectrumOutcome> {
    cfg.validate()?;
    let (tx, ch, rx) = frame_seeds(cfg, 0);
    let (_, frame) = transmit(cfg.simulation.symbols_per_frame, &tx).stage("transmitter")?;
    let (received, _) = propagate(&frame, &ch, tx.symbol_rate_baud).stage("channel")?;
    let raw = detect(&received, &rx, &tx).stage("receiver front-end")?;
    let (quantum, pilot) = detected_spectra(&raw, cfg.dsp.fft_size).stage("spectrum")?;
    Ok(SpectrumOutcome {
        report: SpectrumReport {
            schema_version: SCHEMA_VERSION,
            command: "spectrum",
            seed: cfg.seed,
            architecture: rx.architecture,
            quantum_peak_hz: quantum.frequency_hz[quantum.peak_index()],
            pilot_peak_hz: pilot.frequency_hz[pilot.peak_index()],
            resolution_hz: quantum.bin_width(),
            config: cfg.clone(),
        },
        quantum,
        pilot,
    })
}

/// Process exit status for an error: 2 configuration, 4 a failed
/// calibration command, 3 any other pipeline failure.
pub fn exit_code(e: &Error) -> i32 {
    match (e, e.root()) {
        (_, Error::Config(_)) => 2,
        (Error::CalibrationFailure(_), _) => 4,
        _ => 3,
    }
}
