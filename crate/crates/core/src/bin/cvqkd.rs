use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cvqkd::config::RunConfig;
use cvqkd::runner::{self, Artifacts};
use cvqkd::Error;

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "CV-QKD link simulator and key-rate planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo link simulation with excess-noise estimation.
    Simulate(Common),
    /// Analytic key-rate sweep, reach, crossover, AES and segment report.
    Plan(Common),
    /// Fit detection efficiency and laser linewidth; writes calibrated.toml.
    Calibrate(Common),
    /// Detected power spectra of one frame.
    Spectrum(Common),
}

#[derive(Args)]
struct Common {
    /// Config file, or builtin:NAME for a bundled preset.
    #[arg(long, default_value = "builtin:paper_heterodyne")]
    config: String,
    /// Override a config value, e.g. --set channel.length_km=0.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed (replaces the config's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (replaces output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write CSV artifacts only (with --json, both).
    #[arg(long)]
    csv: bool,
    /// Write the JSON report only (with --csv, both).
    #[arg(long)]
    json: bool,
}

fn run(cmd: &Command) -> Result<(PathBuf, Artifacts, String, bool, bool), Error> {
    let (Command::Simulate(c) | Command::Plan(c) | Command::Calibrate(c) | Command::Spectrum(c)) = cmd;
    let mut overrides = c.set.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = RunConfig::load(&c.config, &overrides)?;
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let (want_json, want_csv) = if c.json || c.csv { (c.json, c.csv) } else { (true, true) };
    let (artifacts, summary) = match cmd {
        Command::Simulate(_) => {
            let o = runner::simulate(&cfg)?;
            let e = &o.report.estimate;
            let skr = o
                .report
                .keyrate
                .as_ref()
                .map_or("n/a".to_string(), |k| format!("{:.4e} b/s", k.report.skr_bps));
            let s = format!(
                "{} symbols: t_hat^2 = {:.4}, xi = {:.4} SNU, xi_T = {:.4} SNU, v_el = {:.4} SNU, snr = {:.3}, skr = {skr}",
                o.report.symbols_used,
                e.t_hat * e.t_hat,
                e.xi_snu,
                e.xi_trusted_snu,
                e.v_el_snu,
                e.snr
            );
            (o.artifacts()?, s)
        }
        Command::Plan(_) => {
            let o = runner::plan(&cfg)?;
            let mut s = String::new();
            for r in &o.report.reach {
                let f = |k: Option<f64>| k.map_or("not reached".to_string(), |k| format!("{k:.2} km"));
                s += &format!(
                    "reach at {:.3e} b/s: heterodyne {}, intradyne {}\n",
                    r.target_bps,
                    f(r.heterodyne.km()),
                    f(r.intradyne.km())
                );
            }
            s += &match o.report.crossover.km {
                Some(k) => format!("crossover: {k:.2} km"),
                None => "crossover: not found".to_string(),
            };
            (o.artifacts()?, s)
        }
        Command::Calibrate(_) => {
            let o = runner::calibrate_run(&cfg)?;
            let s = format!("{}; linewidth = {:.1} Hz", o.report.efficiency, o.report.linewidth_hz);
            (o.artifacts()?, s)
        }
        Command::Spectrum(_) => {
            let o = runner::spectrum_run(&cfg)?;
            let s = format!(
                "quantum peak {:.4e} Hz, pilot peak {:.4e} Hz",
                o.report.quantum_peak_hz, o.report.pilot_peak_hz
            );
            (o.artifacts()?, s)
        }
    };
    Ok((dir, artifacts, summary, want_json, want_csv))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok((dir, artifacts, summary, json, csv)) => {
            // a closed pipe (e.g. `| head`) is not an error
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{summary}");
            match artifacts.write(&dir, json, csv) {
                Ok(paths) => {
                    for p in paths {
                        let _ = writeln!(out, "wrote {}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: cannot write outputs to {}: {e}", dir.display());
                    ExitCode::from(3)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code(&e) as u8)
        }
    }
}
