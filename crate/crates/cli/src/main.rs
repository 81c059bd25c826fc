//! `qkdsim`: run the link scenarios and write CSV tables plus a summary.
//!
//! Every verb writes into `--out` (default `./out`):
//!
//! * `config.toml` with the fully resolved configuration,
//! * one CSV table per verb,
//! * `summary.txt` with reference-value verdict lines (also printed).
//!
//! On failure a one-line JSON record `{"error":{"kind":…,"message":…}}` goes
//! to stderr and the process exits with status 2 (configuration/input
//! errors, including bad command lines) or 1 (everything else).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qkdsim_core::detection::write_events_csv;
use qkdsim_core::experiments::calibrate::{run_calibration, CalibrationRow};
use qkdsim_core::experiments::fit::{fit_parameters, FitResidual};
use qkdsim_core::experiments::report::{write_csv_file, Summary, Verdict};
use qkdsim_core::experiments::sweeps::{longrun, sweep_channel, sweep_ob, sweep_reach};
use qkdsim_core::experiments::ExperimentConfig;
use qkdsim_core::protocol::session::{run_session, session_events, LaunchKind, Mode};
use qkdsim_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qkdsim", version, about = "BB84 link simulator for a silicon QKD transmitter")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults describe the 45.9 km field link.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// analytic | mc
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Set any configuration value, e.g. `session.duration=2`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Verb {
    /// One session with the `[session]` configuration.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write raw detector events for the first N symbols (Monte Carlo).
        #[arg(long, value_name = "N")]
        events: Option<u64>,
    },
    /// Optical-budget sweep with a VOA on the lab bench.
    SweepOb(Common),
    /// Fiber-reach sweep on the lab bench.
    SweepReach(Common),
    /// One session per WDM grid channel.
    SweepChannel(Common),
    /// Hour-long run with polarization drift and optional realignment.
    Longrun(Common),
    /// Repeated TOPS calibration on devices with random hidden offsets.
    Calibrate(Common),
    /// Fit source and receiver parameters to the reference anchors.
    Fit(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("session.seed={seed}"));
    }
    if let Some(mode) = &common.mode {
        let m: Mode = mode.parse()?;
        let name = match m {
            Mode::Analytic => "analytic",
            Mode::Montecarlo => "montecarlo",
        };
        overrides.push(format!("session.mode=\"{name}\""));
    }
    ExperimentConfig::load(common.config.as_deref(), &overrides)
}

fn prepare_out(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Error::Io(format!("creating {}: {e}", common.out.display())))?;
    write_text(&common.out.join("config.toml"), &cfg.to_toml()?)?;
    Ok(common.out.clone())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}

fn finish(out: &Path, summary: &Summary) -> Result<()> {
    let text = summary.to_string();
    write_text(&out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn simulate(common: &Common, events: Option<u64>) -> Result<()> {
    let cfg = load(common)?;
    let out = prepare_out(common, &cfg)?;
    let run = run_session(&cfg.session)?;
    let r = &run.result;
    write_csv_file(&[r.to_record()], &out.join("session.csv"))?;
    if let Some(series) = &run.series {
        write_csv_file(series, &out.join("series.csv"))?;
    }
    if let Some(n) = events {
        let ev = session_events(&cfg.session, n)?;
        let f = std::fs::File::create(out.join("events.csv"))?;
        write_events_csv(&ev, std::io::BufWriter::new(f))?;
    }
    let mut s = Summary::new("simulate");
    s.note(format!("mode {:?}, mu_tx {:.5}, link loss {:.2} dB", r.mode, r.mu_tx, r.link_loss_db))
        .note(format!("rkr {:.1} b/s, qber {:.4} ± {:.4}, skr {:.1} b/s", r.rkr, r.qber, r.qber_sigma, r.skr))
        .note(format!("aes capacity {:.4e} b/s", r.aes_capacity))
        .check(Verdict::relative("field rkr [b/s]", 1550.0, r.rkr, 0.10))
        .check(Verdict::absolute("field qber", 0.0505, r.qber, 0.005))
        .check(Verdict::relative("field skr [b/s]", 655.0, r.skr, 0.10))
        .check(Verdict::relative("field aes capacity [b/s]", 1.31e12, r.aes_capacity, 0.10));
    finish(&out, &s)
}

fn do_sweep_ob(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let out = prepare_out(common, &cfg)?;
    let r = sweep_ob(&cfg)?;
    write_csv_file(&r.rows, &out.join("sweep_ob.csv"))?;
    let mut s = Summary::new("sweep-ob");
    for (k, c) in &r.crossings {
        s.note(format!("{k:?}: 11% crossing at {}", c.map_or("none".into(), |x| format!("{x:.3} dB"))));
    }
    let ext = r.crossing_for(LaunchKind::ExternalLaser);
    let int = r.crossing_for(LaunchKind::InternalSige);
    if let Some(first) = r.rows.iter().find(|x| x.source == LaunchKind::ExternalLaser) {
        s.check(Verdict::absolute("external 0 dB qber", 0.0638, first.qber, 0.1 * 0.0638))
            .check(Verdict::relative("external 0 dB rkr [b/s]", 51.2e3, first.rkr, 0.10));
    }
    s.check(Verdict::optional("external 11% crossing [dB]", 16.8, ext, 1.5));
    let shift = ext.zip(int).map(|(a, b)| a - b);
    let expected = 10.0 * (cfg.lab.external_mu / 0.015).log10();
    s.check(Verdict::optional("internal vs external crossing shift [dB]", expected, shift, 1.0));
    finish(&out, &s)
}

fn do_sweep_reach(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let out = prepare_out(common, &cfg)?;
    let r = sweep_reach(&cfg)?;
    write_csv_file(&r.rows, &out.join("sweep_reach.csv"))?;
    let att = cfg.sweep_reach.attenuation_db_per_km;
    let mut s = Summary::new("sweep-reach");
    s.note(format!("max secure reach {}", r.max_secure_km.map_or("none".into(), |x| format!("{x:.2} km"))))
        .check(Verdict::optional("max secure reach [km]", 31.0, r.max_secure_km, 3.0))
        .check(Verdict::absolute("loss at 31 km [dB]", 8.5, 31.0 * att, 0.1));
    finish(&out, &s)
}

fn do_sweep_channel(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let out = prepare_out(common, &cfg)?;
    let r = sweep_channel(&cfg)?;
    write_csv_file(&r.rows, &out.join("sweep_channel.csv"))?;
    let mut s = Summary::new("sweep-channel");
    s.note(format!("{} channels, {} secure, {} above 1 kb/s (four detectors)", r.rows.len(), r.secure_channels(), r.channels_above_1k()));
    if let Some(c) = r.channel(34) {
        s.check(Verdict::relative("channel 34 rkr [b/s/basis]", 4.2e3, c.rkr, 0.15))
            .check(Verdict::relative("channel 34 qber", 0.0881, c.qber, 0.15))
            .check(Verdict::relative("channel 34 skr [b/s/basis]", 591.0, c.skr, 0.15));
    }
    s.check(Verdict::absolute("secure channels", 32.0, r.secure_channels() as f64, 2.0))
        .check(Verdict::absolute("channels above 1 kb/s", 11.0, r.channels_above_1k() as f64, 2.0));
    finish(&out, &s)
}

fn do_longrun(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let out = prepare_out(common, &cfg)?;
    let r = longrun(&cfg)?;
    write_csv_file(&r.series, &out.join("longrun.csv"))?;
    let mut s = Summary::new("longrun");
    let rise = 100.0 * r.qber_rise_per_hour();
    s.note(format!("qber slope {rise:.3} points/hour, rkr spread {:.2}%", 100.0 * r.rkr_variation()))
        .check(Verdict::absolute("qber rise [points/hour]", 1.5, rise, 0.5))
        .check(Verdict::absolute("rkr variation", 0.0, r.rkr_variation(), 0.05));
    for (k, x) in r.series.iter().enumerate().filter(|(_, x)| x.realigned) {
        let base = &r.series[0];
        let sigma = (x.qber_sigma.powi(2) + base.qber_sigma.powi(2)).sqrt();
        s.check(Verdict::absolute(format!("qber after realign at sample {k} (t={}s)", x.t), base.qber, x.qber, 3.0 * sigma));
    }
    finish(&out, &s)
}

fn do_calibrate(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let out = prepare_out(common, &cfg)?;
    let rows: Vec<CalibrationRow> = run_calibration(&cfg)?;
    write_csv_file(&rows, &out.join("calibration.csv"))?;
    let worst_phase = rows.iter().map(|r| r.phase_error.abs()).fold(0.0, f64::max);
    let worst_fid = rows.iter().map(|r| r.min_fidelity).fold(1.0, f64::min);
    let mut s = Summary::new("calibrate");
    s.note(format!("{} trials, photocurrent noise {}", rows.len(), cfg.calibrate.noise))
        .check(Verdict::absolute("worst residual phase error [rad]", 0.0, worst_phase, 0.05))
        .check(Verdict::absolute("worst BB84 state fidelity", 1.0, worst_fid, 1e-3));
    finish(&out, &s)
}

fn do_fit(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let out = prepare_out(common, &cfg)?;
    let report = fit_parameters(&cfg)?;
    write_csv_file(&report.residuals, &out.join("fit_residuals.csv"))?;
    write_text(&out.join("fitted_overrides.txt"), &(report.params.overrides().join("\n") + "\n"))?;
    let mut s = Summary::new("fit");
    for o in report.params.overrides() {
        s.note(o);
    }
    s.note(format!(
        "fwhm interval [{:.3}, {:.3}] THz: {} secure, {} above 1 kb/s",
        report.fwhm.interval.0, report.fwhm.interval.1, report.fwhm.secure_channels, report.fwhm.channels_above_1k
    ));
    for r in &report.residuals {
        let r: &FitResidual = r;
        s.check(Verdict::absolute(format!("{} relative residual", r.target), 0.0, r.relative(), 1e-3));
    }
    finish(&out, &s)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.verb {
        Verb::Simulate { common, events } => simulate(common, *events),
        Verb::SweepOb(c) => do_sweep_ob(c),
        Verb::SweepReach(c) => do_sweep_reach(c),
        Verb::SweepChannel(c) => do_sweep_channel(c),
        Verb::Longrun(c) => do_longrun(c),
        Verb::Calibrate(c) => do_calibrate(c),
        Verb::Fit(c) => do_fit(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let message = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let record = serde_json::json!({ "error": { "kind": "usage", "message": message } });
            eprintln!("{record}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{record}");
            match e {
                Error::Config(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
