//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! values. Criteria that the model cannot meet are reported as FAIL; the
//! process still exits 0 so the remaining test targets run.

use std::time::Instant;

use num_complex::Complex64;
use serde::Deserialize;

use cvqkd::channel::{propagate, ChannelConfig};
use cvqkd::config::RunConfig;
use cvqkd::dsp::{evm, run_rx_dsp, DspConfig};
use cvqkd::estimation::{calibrate, estimate_channel_params};
use cvqkd::frontend::{detect, detect_unchecked, Architecture, ReceiverConfig};
use cvqkd::keyrate::{secure_key_rate, symplectic_eigenvalues, KeyrateInput};
use cvqkd::planner::{aes_capacity, find_crossover, sweep, AES_BYTES_PER_KEY, AES_KEY_BITS};
use cvqkd::rng;
use cvqkd::runner;
use cvqkd::signal::SymbolFrame;
use cvqkd::transmitter::{generate_symbols, transmit, TxConfig};

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, title: &str, o: Outcome) -> bool {
    println!(
        "criterion {id:2} {}: {title}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o.pass
}

fn within(value: Option<f64>, target: f64, rel: f64) -> bool {
    value.is_some_and(|v| (v - target).abs() <= rel * target)
}

fn km(v: Option<f64>) -> String {
    v.map_or("not reached".into(), |k| format!("{k:.2} km"))
}

fn plan(name: &str) -> runner::PlanOutcome {
    runner::plan(&RunConfig::load(&format!("builtin:{name}"), &[]).unwrap()).unwrap()
}

fn c1() -> Outcome {
    let t0 = Instant::now();
    let p = plan("paper_plan_untrusted");
    let secs = t0.elapsed().as_secs_f64();
    let h = p.reach_km(1e6, Architecture::Heterodyne);
    let i = p.reach_km(1e6, Architecture::Intradyne);
    Outcome {
        pass: within(h, 13.2, 0.2) && within(i, 12.1, 0.2) && secs < 10.0,
        detail: format!(
            "heterodyne {} (13.2 ± 20 %), intradyne {} (12.1 ± 20 %), {secs:.2} s",
            km(h),
            km(i)
        ),
    }
}

fn c2() -> Outcome {
    let p = plan("paper_plan_trusted");
    let h = p.reach_km(1e6, Architecture::Heterodyne);
    let i = p.reach_km(1e6, Architecture::Intradyne);
    let ordered = matches!((h, i), (Some(h), Some(i)) if h > i);
    Outcome {
        pass: within(h, 37.4, 0.2) && within(i, 17.8, 0.2) && ordered,
        detail: format!(
            "heterodyne {} (37.4 ± 20 %), intradyne {} (17.8 ± 20 %), heterodyne > intradyne: {ordered}",
            km(h),
            km(i)
        ),
    }
}

fn c3() -> Outcome {
    let p = plan("paper_plan_trusted");
    let h = p.reach_km(1e7, Architecture::Heterodyne);
    Outcome {
        pass: within(h, 16.2, 0.2),
        detail: format!("heterodyne 10 Mb/s reach {} (16.2 ± 20 %)", km(h)),
    }
}

fn c4() -> Outcome {
    let u = find_crossover(&plan("paper_plan_untrusted").curve);
    let t = find_crossover(&plan("paper_plan_trusted").curve);
    let u_ok = u.km.is_some_and(|k| (k - 11.9).abs() <= 2.0) && !u.degenerate;
    // no crossover on the 0-60 km grid means intradyne leads throughout, i.e. beyond 15 km
    let t_ok = t.km.is_none_or(|k| k > 15.0);
    let show = |k: Option<f64>| k.map_or("none on 0-60 km".into(), |k| format!("{k:.2} km"));
    Outcome {
        pass: u_ok && t_ok,
        detail: format!("untrusted {} (11.9 ± 2), trusted {} (> 15)", show(u.km), show(t.km)),
    }
}

fn c5() -> Outcome {
    let cfg = RunConfig::load("builtin:paper_plan_untrusted", &[]).unwrap();
    let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
    let curve = sweep(&cfg.planner.scenario, &grid).unwrap();
    let ratio: Vec<f64> = curve
        .heterodyne_bps
        .iter()
        .zip(&curve.intradyne_bps)
        .map(|(h, i)| 10.0 * (i / h).log10())
        .collect();
    let in_band = ratio.iter().all(|r| (3.5..=10.5).contains(r));
    let decreasing = ratio.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        pass: in_band && decreasing,
        detail: format!(
            "ratio {:.2} dB at 0 km to {:.2} dB at 5 km (band [3.5, 10.5]), strictly decreasing: {decreasing}",
            ratio[0],
            ratio[ratio.len() - 1]
        ),
    }
}

fn c6() -> Outcome {
    let c = aes_capacity(10e6, AES_KEY_BITS, AES_BYTES_PER_KEY).unwrap();
    Outcome {
        pass: c.keys_per_s == 39062.5 && c.secured_bps == 2.0e16,
        detail: format!("{} keys/s, {:e} b/s secured", c.keys_per_s, c.secured_bps),
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

fn quiet_channel() -> ChannelConfig {
    ChannelConfig {
        length_km: 0.0,
        alpha_db_per_km: 0.0,
        linewidth_hz: 0.0,
        ..ChannelConfig::default()
    }
}

fn chain_evm(tx: &TxConfig, rx: &ReceiverConfig, dsp: &DspConfig, checked: bool) -> cvqkd::Result<f64> {
    let n = 10_000;
    let (s, frame) = transmit(n, tx)?;
    let (received, _) = propagate(&frame, &quiet_channel(), tx.symbol_rate_baud)?;
    let raw = if checked {
        detect(&received, rx, tx)?
    } else {
        detect_unchecked(&received, rx, tx)?
    };
    let out = run_rx_dsp(&raw, rx, tx, dsp)?;
    Ok(evm(&s.symbols()[64..n - 64], &out.symbols[64..n - 64]))
}

fn c7() -> Outcome {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for arch in [Architecture::Heterodyne, Architecture::Intradyne] {
        let tx = TxConfig {
            mean_photons: 400.0,
            symbol_rate_baud: if arch == Architecture::Intradyne { 250e6 } else { 100e6 },
            ..TxConfig::default()
        };
        let e = chain_evm(&tx, &ideal_receiver(arch), &DspConfig::default(), true).unwrap();
        let mut rx = ideal_receiver(arch);
        rx.quantum_det.rolloff_order = 2;
        rx.pilot_det.rolloff_order = 2;
        rx.pol_extinction_db = 25.0;
        let with_det = chain_evm(&tx, &rx, &DspConfig::default(), true).unwrap();
        pass &= e < 0.01;
        parts.push(format!(
            "{arch} {:.3} % (default detector response {:.2} %)",
            100.0 * e,
            100.0 * with_det
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome {
        pass: pass && secs < 30.0,
        detail: format!("EVM {}, {secs:.1} s", parts.join(", ")),
    }
}

/// Symbol-level trial: QPSK through transmittance `t2`, shot noise, electronic
/// noise `v_el` and injected excess noise `xi` (receiver-input referred).
fn estimation_trial(xi: f64, seed: u64) -> f64 {
    let n = 100_000;
    let (eta, t_ch, v_mod, v_el, raw_scale): (f64, f64, f64, f64, f64) = (0.85, 10f64.powf(-0.304), 8.0, 0.005, 3.7);
    let t2 = eta * t_ch;
    let sym = generate_symbols(n, seed).unwrap();
    let mut r = rng::stream(seed, 0xACCE);
    let sigma = (1.0 + v_el + eta * xi / 2.0).sqrt();
    let amp = (t2 / 2.0).sqrt() * (2.0 * v_mod).sqrt();
    let rx: Vec<Complex64> = sym
        .symbols()
        .iter()
        .map(|a| {
            (a * amp + Complex64::new(sigma * rng::normal(&mut r), sigma * rng::normal(&mut r))) * raw_scale.sqrt()
        })
        .collect();
    let vac: Vec<f64> = (0..2 * n)
        .map(|_| ((1.0 + v_el) * raw_scale).sqrt() * rng::normal(&mut r))
        .collect();
    let dark: Vec<f64> = (0..2 * n)
        .map(|_| (v_el * raw_scale).sqrt() * rng::normal(&mut r))
        .collect();
    let cal = calibrate(&vac, &dark).unwrap();
    let tx = SymbolFrame::new(sym.symbols().to_vec(), 100e6).unwrap();
    estimate_channel_params(&tx, &rx, &cal, v_mod, eta)
        .unwrap()
        .xi_trusted_snu
}

fn c8() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (k, xi) in [0.0, 0.01, 0.05].into_iter().enumerate() {
        let est: Vec<f64> = (0..50).map(|j| estimation_trial(xi, 1000 * k as u64 + j)).collect();
        let mean = est.iter().sum::<f64>() / 50.0;
        let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
        let se = sd / 50f64.sqrt();
        let ok = (mean - xi).abs() <= 2.0 * se;
        pass &= ok;
        parts.push(format!("xi {xi}: {mean:.5} ± {se:.5}"));
    }
    let cfg = RunConfig::load("builtin:paper_heterodyne", &[]).unwrap();
    let sim = runner::simulate(&cfg).unwrap();
    let e = sim.report.estimate;
    let sim_ok = (0.010..=0.030).contains(&e.xi_snu) && e.xi_trusted_snu < e.xi_snu;
    Outcome {
        pass: pass && sim_ok,
        detail: format!(
            "{}; default heterodyne xi {:.4} SNU in [0.010, 0.030], xi_T {:.4} SNU ({} symbols)",
            parts.join(", "),
            e.xi_snu,
            e.xi_trusted_snu,
            sim.report.symbols_used
        ),
    }
}

#[derive(Deserialize)]
struct OracleCase {
    trusted: bool,
    v_mod_snu: f64,
    t_channel: f64,
    xi_channel_snu: f64,
    eta_det: f64,
    v_el_snu: f64,
    beta_rec: f64,
    symbol_rate_baud: f64,
    skr_bps: String,
}

fn skr(k: &KeyrateInput) -> f64 {
    secure_key_rate(k).unwrap().skr_bps
}

fn c9() -> Outcome {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/keyrate_oracle.json")).unwrap();
    let cases: Vec<OracleCase> = serde_json::from_str(&text).unwrap();
    let mut worst = 0.0f64;
    for c in &cases {
        let got = skr(&KeyrateInput {
            v_mod_snu: c.v_mod_snu,
            t_channel: c.t_channel,
            xi_channel_snu: c.xi_channel_snu,
            eta_det: c.eta_det,
            v_el_snu: c.v_el_snu,
            beta_rec: c.beta_rec,
            trusted: c.trusted,
            symbol_rate_baud: c.symbol_rate_baud,
        });
        let want: f64 = c.skr_bps.parse().unwrap();
        if got != want {
            worst = worst.max((got - want).abs() / got.abs().max(want.abs()));
        }
    }

    let mut tmsv = 0.0f64;
    for v in [1.5, 3.0, 5.0, 9.0, 21.0, 101.0] {
        let (n1, n2) = symplectic_eigenvalues(v, v, (v * v - 1.0f64).sqrt()).unwrap();
        tmsv = tmsv.max((n1 - 1.0).abs()).max((n2 - 1.0).abs());
    }

    let mut checks = 0;
    let mut violations = 0;
    let mut step = |prev: f64, next: f64, increasing: bool| {
        checks += 1;
        let bad = if increasing {
            next < prev * (1.0 - 1e-12)
        } else {
            next > prev * (1.0 + 1e-12)
        };
        violations += usize::from(bad);
    };
    for trusted in [false, true] {
        for &(v_mod, xi, v_el) in &[(4.0, 0.01, 0.01), (8.0, 0.02, 0.05), (16.0, 0.005, 0.1)] {
            let base = KeyrateInput {
                v_mod_snu: v_mod,
                t_channel: 0.5,
                xi_channel_snu: xi,
                eta_det: 0.6,
                v_el_snu: v_el,
                beta_rec: 0.95,
                trusted,
                symbol_rate_baud: 1e8,
            };
            let mut prev = skr(&KeyrateInput { t_channel: 1.0, ..base });
            for k in 1..=300 {
                let next = skr(&KeyrateInput {
                    t_channel: 10f64.powf(-0.02 * k as f64),
                    ..base
                });
                step(prev, next, false);
                prev = next;
            }
            let mut prev = skr(&KeyrateInput {
                xi_channel_snu: 0.0,
                ..base
            });
            for k in 1..=100 {
                let next = skr(&KeyrateInput {
                    xi_channel_snu: 0.002 * k as f64,
                    ..base
                });
                step(prev, next, false);
                prev = next;
            }
            let mut prev = skr(&KeyrateInput { beta_rec: 0.80, ..base });
            for k in 1..=100 {
                let next = skr(&KeyrateInput {
                    beta_rec: 0.80 + 0.002 * k as f64,
                    ..base
                });
                step(prev, next, true);
                prev = next;
            }
        }
    }
    Outcome {
        pass: cases.len() == 100 && worst <= 1e-9 && tmsv <= 1e-12 && violations == 0,
        detail: format!(
            "oracle worst relative deviation {worst:.1e} over {} cases, TMSV eigenvalue error {tmsv:.1e}, \
             {violations} monotonicity violations in {checks} steps",
            cases.len()
        ),
    }
}

fn c10() -> Outcome {
    let tx = TxConfig {
        mean_photons: 400.0,
        ..TxConfig::default()
    };
    let threshold = tx.symbol_rate_baud * (1.0 + tx.pulse_rolloff) / 2.0;
    // the matched filter alone rejects the mirror, so the sweep can reach IF → 0
    let dsp = DspConfig {
        mirror_filter_order: 0,
        ..DspConfig::default()
    };
    let ifs = [
        200e6, 160e6, 120e6, 100e6, 80e6, 70e6, 60e6, 55e6, 50e6, 40e6, 30e6, 20e6, 10e6,
    ];
    let mut above = Vec::new();
    let mut below = Vec::new();
    for f in ifs {
        let mut rx = ideal_receiver(Architecture::Heterodyne);
        rx.lo_detuning_hz = f;
        let e = chain_evm(&tx, &rx, &dsp, false).unwrap();
        if f >= threshold {
            above.push(e)
        } else {
            below.push(e)
        }
    }
    let (lo, hi) = above.iter().fold((f64::MAX, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    let flat = hi < 0.01 && hi / lo < 1.5;
    let degrading = below.windows(2).all(|w| w[1] > w[0]) && below.first().is_some_and(|&e| e > 2.0 * hi);
    Outcome {
        pass: flat && degrading,
        detail: format!(
            "EVM {:.3}-{:.3} % for IF ≥ {:.0} MHz, {} below",
            100.0 * lo,
            100.0 * hi,
            threshold / 1e6,
            below
                .iter()
                .map(|e| format!("{:.2} %", 100.0 * e))
                .collect::<Vec<_>>()
                .join(" → ")
        ),
    }
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("1 Mb/s reach, untrusted", c1),
        ("1 Mb/s reach, trusted", c2),
        ("10 Mb/s trusted heterodyne reach", c3),
        ("architecture crossover", c4),
        ("short-reach intradyne advantage", c5),
        ("AES key-renewal arithmetic", c6),
        ("noiseless DSP fidelity", c7),
        ("excess-noise estimation", c8),
        ("key-rate engine", c9),
        ("anti-folding", c10),
    ];
    let mut passed = 0;
    for (k, (title, f)) in criteria.iter().enumerate() {
        passed += usize::from(report(k as u32 + 1, title, f()));
    }
    println!("acceptance: {passed} of {} criteria pass", criteria.len());
}
