mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qahh::dynamics::{default_dt, PulsePair};
use qahh::experiments::{
    connected_region, estimate_band, merge_columns, single_spin_profile, BandEstimate, PlaneSweep, RegionEstimate,
    Sequence, SweepMetadata, SweepResult,
};
use qahh::operators::BasisLabel;
use qahh::pulse::{rad_to_hz, Pulse};
use qahh::Observable;
use serde::Serialize;

use config::{build_pulse, CliError, Command, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GridScale {
    Coarse,
    Paper,
}

/// Simulate Hartmann-Hahn transfer under frequency-modulated sech pulses.
#[derive(Parser, Debug)]
#[command(name = "qahh", version)]
struct Cli {
    /// Overrides the `command` key of the config.
    #[arg(value_enum)]
    command: Option<Command>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (or waveform table); the JSON sidecar goes next to it.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads for grid sweeps.
    #[arg(long)]
    workers: Option<usize>,
    /// Slice length in microseconds.
    #[arg(long)]
    dt_us: Option<f64>,
    #[arg(long, value_enum, default_value = "coarse")]
    grid_scale: GridScale,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a RunConfig,
    runs: Vec<SweepMetadata>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    bands: Vec<NamedBand>,
    #[serde(skip_serializing_if = "Option::is_none")]
    region: Option<RegionEstimate>,
}

#[derive(Serialize)]
struct NamedBand {
    column: String,
    estimate: BandEstimate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qahh: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(path), _) => RunConfig::load(&path.to_string_lossy())?,
        (None, Some(Command::Validate)) => RunConfig::parse("command = \"validate\"")?,
        (None, _) => return Err(CliError::Config("--config: a configuration file is required".into())),
    };
    if let Some(c) = cli.command {
        cfg.command = c;
    }
    if let Some(out) = &cli.output {
        cfg.output = Some(out.to_string_lossy().into_owned());
    }
    if let Some(dt) = cli.dt_us {
        cfg.dt_us = Some(dt);
    }
    if cli.grid_scale == GridScale::Paper {
        cfg.apply_paper_scale();
    }
    let workers = match cli.workers {
        Some(0) => return Err(CliError::Config("--workers: must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };

    match cfg.command {
        Command::DesignPulse => design_pulse(&cfg),
        Command::Profile => profile(&cfg, workers),
        Command::Sweep => plane(&cfg, workers, false),
        Command::Echo => plane(&cfg, workers, true),
        Command::Validate => validate(&cfg),
    }
}

fn core_err(e: qahh::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes via a temporary file so a failed run never leaves a partial output.
fn write_atomically(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    let file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    let mut out = BufWriter::new(file);
    write(&mut out).and_then(|_| out.flush()).map_err(|e| io_err(&tmp, e))?;
    drop(out);
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn emit(cfg: &RunConfig, result: &SweepResult, sidecar: Sidecar) -> Result<(), CliError> {
    match &cfg.output {
        Some(out) => {
            let path = PathBuf::from(out);
            write_atomically(&path, |w| result.write_csv(w))?;
            let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
            let side = sidecar_path(&path);
            write_atomically(&side, |w| writeln!(w, "{json}"))?;
            eprintln!("wrote {} and {}", path.display(), side.display());
        }
        None => {
            let stdout = std::io::stdout();
            result.write_csv(stdout.lock()).map_err(|e| CliError::Io(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

fn design_pulse(cfg: &RunConfig) -> Result<(), CliError> {
    let pc = cfg.pulse_config()?;
    let pulse = build_pulse(pc, "pulse", None)?;
    let Pulse::Designed(designed) = &pulse else {
        return Err(CliError::Config("pulse.shape: design-pulse needs an analytic sech shape".into()));
    };
    let dt = match cfg.dt()? {
        Some(dt) => dt,
        None => default_dt(&PulsePair::identical(pulse.clone()), 0.0, 0.0),
    };
    let w = designed.sample(dt).map_err(core_err)?;
    let out = cfg.output.as_ref().ok_or_else(|| CliError::Config("output: required for design-pulse".into()))?;
    write_atomically(Path::new(out), |f| w.write_table(f))?;
    eprintln!(
        "wrote {out}: {} samples, dt {:.6e} s, sweep extent {:.3} Hz",
        w.len(),
        w.dt,
        rad_to_hz(w.sweep_extent())
    );
    Ok(())
}

fn duration_label(ms: f64) -> String {
    format!("_tp{ms}ms")
}

fn profile(cfg: &RunConfig, workers: usize) -> Result<(), CliError> {
    let pc = cfg.pulse_config()?;
    let grid = cfg.grid(false)?;
    let dt = cfg.dt()?;
    let direction = cfg.direction.unwrap_or_default();
    let band = cfg.band()?;
    let durations: Vec<Option<f64>> =
        if pc.durations_ms.is_empty() { vec![None] } else { pc.durations_ms.iter().map(|&d| Some(d)).collect() };

    let mut results = Vec::new();
    let mut bands = Vec::new();
    for d in durations {
        let pulse = build_pulse(pc, "pulse", d)?;
        let mut r = single_spin_profile(&pulse, &grid, direction, dt, workers).map_err(core_err)?;
        if let Some(ms) = d {
            r = r.with_suffix(&duration_label(ms));
        }
        if let Some((obs, criterion)) = &band {
            let column = match d {
                Some(ms) => format!("{obs}{}", duration_label(ms)),
                None => obs.clone(),
            };
            let estimate = estimate_band(&r, &column, *criterion).map_err(|e| CliError::Config(format!("band.observable: {e}")))?;
            match estimate.edges {
                Some(e) => println!("{column}: band {:.1} .. {:.1} Hz (width {:.1} Hz)", e.w_minus, e.w_plus, e.width()),
                None => println!("{column}: no point satisfies the band criterion"),
            }
            bands.push(NamedBand { column, estimate });
        }
        results.push(r);
    }
    let runs = results.iter().map(|r| r.metadata.clone()).collect();
    let merged = merge_columns(results).map_err(core_err)?;
    emit(cfg, &merged, Sidecar { config: cfg, runs, bands, region: None })
}

fn plane(cfg: &RunConfig, workers: usize, echo: bool) -> Result<(), CliError> {
    let pulses = cfg.pulse_pair()?;
    let grid = cfg.grid(true)?;
    let j_hz = cfg.j_hz()?;
    let mut observables = cfg.observables()?;
    let (sequence, initial) = if echo {
        if let Some(s) = cfg.sequence.filter(|s| *s != Sequence::Echo) {
            return Err(CliError::Config(format!("sequence: echo runs use the echo sequence, got {s:?}")));
        }
        if observables.is_empty() {
            observables = vec![Observable::SzTransfer, Observable::Evomq, Observable::Coefficient(BasisLabel::Iz)];
        }
        (Sequence::Echo, cfg.initial()?)
    } else {
        let seq = cfg.sequence.ok_or_else(|| CliError::Config("sequence: required for sweep".into()))?;
        if observables.is_empty() {
            return Err(CliError::Config("observables: at least one observable is required".into()));
        }
        (seq, cfg.initial()?)
    };
    let sweep = PlaneSweep { j_hz, pulses, grid, sequence, initial, observables, dt: cfg.dt()? };
    let result = sweep.run(workers).map_err(core_err)?;
    if result.metadata.max_unitarity_error > 1e-8 {
        eprintln!("warning: propagator unitarity error {:.3e}", result.metadata.max_unitarity_error);
    }
    let region = match &cfg.region {
        Some(rc) => {
            let r = connected_region(&result, &rc.observable, rc.threshold)
                .map_err(|e| CliError::Config(format!("region.observable: {e}")))?;
            match &r {
                Some(r) => println!(
                    "{} >= {}: {} points, extent {:.1} x {:.1} Hz, mean {:.4}, std {:.4}",
                    rc.observable, rc.threshold, r.count, r.extent_i_hz, r.extent_s_hz, r.mean, r.std_dev
                ),
                None => println!("{} >= {}: no points", rc.observable, rc.threshold),
            }
            r
        }
        None => None,
    };
    for c in &result.columns {
        let max = c.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = c.values.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("{}: min {min:.4}, max {max:.4}", c.name);
    }
    let runs = vec![result.metadata.clone()];
    emit(cfg, &result, Sidecar { config: cfg, runs, bands: Vec::new(), region })
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let vc = cfg.validate.clone().unwrap_or(config::ValidateConfig { draws: None, seed: None });
    let outcomes = qahh::validation::run_suite(vc.draws.unwrap_or(1000), vc.seed.unwrap_or(1)).map_err(core_err)?;
    let mut failed = Vec::new();
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<40} worst {:.3e} (tolerance {:.1e})", o.name, o.worst, o.tolerance);
        if !o.passed {
            failed.push(o.name);
        }
    }
    if let Some(out) = &cfg.output {
        let json = serde_json::to_string_pretty(&outcomes).expect("report serializes");
        write_atomically(Path::new(out), |w| writeln!(w, "{json}"))?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}
