//! Batch pipeline driver: configure, simulate, reconstruct, scan, report.
//!
//! Every run derives all randomness from `--seed`, records a manifest next
//! to its artifacts, and writes outputs with canonical ordering, so a
//! repeated invocation produces byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pmloop::campaign::{fit_phase_law, scan_pump_phase, simulate_campaign, CampaignMode};
use pmloop::config::ExperimentConfig;
use pmloop::detection::SamplingMode;
use pmloop::records;
use pmloop::tomography::{
    bootstrap_errors, reconstruct_records, Likelihood, MleOptions, ProjectorSet, TomographyResult,
};
use pmloop::two_photon::DensityMatrix;

#[derive(Parser)]
#[command(
    name = "pmloop",
    version,
    about = "Fiber-loop entangled-pair source simulator and tomography pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the 16-setting counting campaign and write count records.
    Simulate(SimulateArgs),
    /// Reconstruct a density matrix from count records.
    Tomo(TomoArgs),
    /// Sweep the pump phase and fit the emitted-phase law.
    ScanPhase(ScanPhaseArgs),
    /// Summarize tomography results and emit plot-ready matrix data.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed for all randomness.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Counting time per repeat, seconds.
    #[arg(long = "duration-s", default_value_t = 10.0)]
    duration_s: f64,
    /// Measurement repeats per setting.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Write noise-free expectation records instead of sampling.
    #[arg(long)]
    analytic: bool,
    /// Sample gate by gate instead of in aggregate (slow; for validation).
    #[arg(long = "per-gate")]
    per_gate: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TomoArgs {
    /// Count records (CSV or JSON, as written by `simulate`).
    #[arg(long)]
    records: PathBuf,
    /// Skip accidental subtraction.
    #[arg(long)]
    raw: bool,
    /// Likelihood model.
    #[arg(long, value_parser = parse_likelihood, default_value = "poisson")]
    likelihood: Likelihood,
    /// Parametric-bootstrap resamples for error bars (0 = skip).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// Seed for the bootstrap resampling.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScanPhaseArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Pump-phase grid: "start:end:steps" or a comma-separated list (rad).
    #[arg(long = "phi-p", default_value = "-0.3:0.3:13")]
    phi_p: String,
    /// Counting time per grid point, seconds.
    #[arg(long = "duration-s", default_value_t = 10.0)]
    duration_s: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Tomography result files (JSON), at least one.
    #[arg(long = "results", required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    /// Output directory for the matrix CSV data.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_likelihood(s: &str) -> Result<Likelihood, String> {
    match s {
        "poisson" => Ok(Likelihood::Poisson),
        "gaussian" => Ok(Likelihood::Gaussian),
        other => Err(format!("unknown likelihood `{other}` (poisson|gaussian)")),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    subcommand: &'a str,
    config_path: Option<String>,
    seed: Option<u64>,
    duration_s: Option<f64>,
    repeats: Option<usize>,
    analytic: Option<bool>,
    raw: Option<bool>,
    likelihood: Option<&'a str>,
    phi_p: Option<&'a str>,
    outputs: Vec<String>,
}

impl<'a> Manifest<'a> {
    fn new(subcommand: &'a str) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config_path: None,
            seed: None,
            duration_s: None,
            repeats: None,
            analytic: None,
            raw: None,
            likelihood: None,
            phi_p: None,
            outputs: Vec::new(),
        }
    }

    fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(format!("manifest_{}.json", self.subcommand));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_path(path).with_context(|| format!("config {}", path.display()))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    if args.duration_s <= 0.0 {
        bail!("config: duration-s: must be > 0");
    }
    if args.repeats == 0 {
        bail!("config: repeats: must be >= 1");
    }
    ensure_out_dir(&args.out)?;

    let mode = if args.analytic {
        CampaignMode::Analytic
    } else if args.per_gate {
        CampaignMode::MonteCarlo(SamplingMode::PerGate)
    } else {
        CampaignMode::MonteCarlo(SamplingMode::Aggregate)
    };
    let mut records = simulate_campaign(&config, args.duration_s, args.repeats, args.seed, mode)?;
    // Canonical artifact order: by setting id, repeats in sequence.
    records.sort_by(|a, b| a.setting_id.cmp(&b.setting_id));

    let csv_path = args.out.join("records.csv");
    let json_path = args.out.join("records.json");
    fs::write(&csv_path, records::to_csv(&records))?;
    fs::write(&json_path, records::to_json(&records))?;

    let mut manifest = Manifest::new("simulate");
    manifest.config_path = Some(args.config.display().to_string());
    manifest.seed = Some(args.seed);
    manifest.duration_s = Some(args.duration_s);
    manifest.repeats = Some(args.repeats);
    manifest.analytic = Some(args.analytic);
    manifest.outputs = vec![
        csv_path.display().to_string(),
        json_path.display().to_string(),
    ];
    manifest.write(&args.out)?;

    println!(
        "wrote {} records ({} settings x {} repeats) to {}",
        records.len(),
        records.len() / args.repeats,
        args.repeats,
        csv_path.display()
    );
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<records::CountRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        records::from_json(&text)
    } else {
        records::from_csv(&text)
    };
    parsed.with_context(|| format!("records {}", path.display()))
}

fn cmd_tomo(args: &TomoArgs) -> Result<()> {
    let recs = load_records(&args.records)?;
    ensure_out_dir(&args.out)?;

    let set = ProjectorSet::default16();
    let opts = MleOptions {
        likelihood: args.likelihood,
        ..MleOptions::default()
    };
    let result = reconstruct_records(&recs, &set, &opts, args.raw)?;

    #[derive(Serialize)]
    struct TomoOutput {
        #[serde(flatten)]
        result: TomographyResult,
        bootstrap: Option<pmloop::tomography::BootstrapErrors>,
    }
    let bootstrap = if args.bootstrap > 0 {
        Some(bootstrap_errors(
            &recs,
            &set,
            &opts,
            args.bootstrap,
            args.raw,
            args.seed,
        )?)
    } else {
        None
    };

    let out_path = args.out.join(if args.raw {
        "tomography_raw.json"
    } else {
        "tomography.json"
    });
    let output = TomoOutput { result, bootstrap };
    let mut text = serde_json::to_string_pretty(&output)?;
    text.push('\n');
    fs::write(&out_path, text)?;

    let mut manifest = Manifest::new(if args.raw { "tomo_raw" } else { "tomo" });
    manifest.raw = Some(args.raw);
    manifest.seed = Some(args.seed);
    manifest.likelihood = Some(match args.likelihood {
        Likelihood::Poisson => "poisson",
        Likelihood::Gaussian => "gaussian",
    });
    manifest.outputs = vec![out_path.display().to_string()];
    manifest.write(&args.out)?;

    let r = &output.result;
    println!(
        "fidelity(Phi+) {:.4}  purity {:.4}  best_phase {}  iterations {}  converged {}  -> {}",
        r.fidelity_phi_plus,
        r.purity,
        r.best_phase_rad
            .map_or("n/a".to_string(), |p| format!("{p:.4} rad")),
        r.iterations,
        r.converged,
        out_path.display()
    );
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            bail!("grid: expected start:end:steps, got `{spec}`");
        }
        let start: f64 = parts[0].parse().context("grid: bad start")?;
        let end: f64 = parts[1].parse().context("grid: bad end")?;
        let steps: usize = parts[2].parse().context("grid: bad steps")?;
        if steps == 0 {
            bail!("grid: steps must be >= 1");
        }
        if steps == 1 {
            return Ok(vec![start]);
        }
        let h = (end - start) / (steps - 1) as f64;
        return Ok((0..steps).map(|k| start + h * k as f64).collect());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("grid: bad value `{s}`"))
        })
        .collect()
}

fn cmd_scan_phase(args: &ScanPhaseArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let grid = parse_grid(&args.phi_p)?;
    ensure_out_dir(&args.out)?;

    let points = scan_pump_phase(&config, &grid, args.duration_s, &MleOptions::default())?;
    let (slope, intercept) = fit_phase_law(&points);

    let mut csv =
        String::from("phi_p_rad,pump_qwp_deg,pump_hwp_deg,best_phase_rad,fidelity_best_phase\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p.phi_p_rad, p.pump_qwp_deg, p.pump_hwp_deg, p.best_phase_rad, p.fidelity_best_phase
        ));
    }
    let csv_path = args.out.join("phase_scan.csv");
    fs::write(&csv_path, csv)?;

    let mut manifest = Manifest::new("scan_phase");
    manifest.config_path = Some(args.config.display().to_string());
    manifest.duration_s = Some(args.duration_s);
    manifest.phi_p = Some(&args.phi_p);
    manifest.outputs = vec![csv_path.display().to_string()];
    manifest.write(&args.out)?;

    for p in &points {
        println!(
            "phi_p {:+.4}  ->  phase {:+.4} rad  (fidelity at phase {:.4})",
            p.phi_p_rad, p.best_phase_rad, p.fidelity_best_phase
        );
    }
    println!("fit: phase = {slope:.4} * phi_p + {intercept:.4}");
    Ok(())
}

fn matrix_csv(rho: &DensityMatrix) -> String {
    let labels = ["HH", "HV", "VH", "VV"];
    let mut csv = String::from("row,col,re,im\n");
    for (r, row_label) in labels.iter().enumerate() {
        for (c, col_label) in labels.iter().enumerate() {
            let z = rho.entry(r, c);
            csv.push_str(&format!("{row_label},{col_label},{},{}\n", z.re, z.im));
        }
    }
    csv
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut outputs = Vec::new();

    println!(
        "{:<24} {:>9} {:>9} {:>12} {:>8}",
        "result", "fidelity", "purity", "best_phase", "raw"
    );
    for path in &args.results {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let result: TomographyResult =
            serde_json::from_str(&text).with_context(|| format!("result {}", path.display()))?;

        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("result");
        let csv_path = args.out.join(format!("{stem}_matrix.csv"));
        fs::write(&csv_path, matrix_csv(&result.rho))?;
        outputs.push(csv_path.display().to_string());

        println!(
            "{:<24} {:>9.4} {:>9.4} {:>12} {:>8}",
            stem,
            result.fidelity_phi_plus,
            result.purity,
            result
                .best_phase_rad
                .map_or("n/a".to_string(), |p| format!("{p:+.4} rad")),
            result.raw_mode,
        );
    }

    let mut manifest = Manifest::new("report");
    manifest.outputs = outputs;
    manifest.write(&args.out)?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Tomo(args) => cmd_tomo(args),
        Command::ScanPhase(args) => cmd_scan_phase(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = result {
        // Single-line, machine-parsable: "error: <context>: <cause>".
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
