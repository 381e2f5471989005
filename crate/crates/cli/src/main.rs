use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use emfiscan::campaign::{
    plan_trials, replay_reader, run_simulated, CampaignConfig, Execution, FileLog, LayerMap, LogEntry, LogSink,
    ReplayOptions, ReplayReport, RunOptions,
};
use emfiscan::classify::FaultClass;
use emfiscan::map::{export_heatmap_csv, export_pgm, export_scatter_csv};
use emfiscan::stats::{wilson_interval, ClassCounts, Z_95};
use emfiscan::target::TargetBackend;

const OUT_DIR_ENV: &str = "EMFISCAN_OUT_DIR";

/// Spatial EMFI susceptibility mapping on simulated targets.
#[derive(Debug, Parser)]
#[command(name = "emfiscan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Campaign configuration (TOML).
    config: PathBuf,
    /// Override the campaign seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially, 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the coarse trial plan without running it.
    Plan {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// List every planned trial.
        #[arg(long)]
        trials: bool,
    },
    /// Run a campaign, writing the trial log and maps to the output directory.
    Run {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long, env = OUT_DIR_ENV)]
        out: PathBuf,
        /// Write zero timestamps so the log is byte-for-byte reproducible.
        #[arg(long)]
        zero_timestamps: bool,
    },
    /// Coarse scan only, summarised per parameter point.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Re-classify every trial of a log.
    Classify { log: PathBuf },
    /// Export maps rebuilt from a log.
    Map {
        log: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
        out: PathBuf,
        /// Only this layer.
        #[arg(long)]
        layer: Option<u32>,
        /// PGM full-scale error count (default: the map's maximum).
        #[arg(long)]
        scale: Option<u64>,
    },
    /// Re-run classification over a log and report disagreements.
    Replay { log: PathBuf },
    /// Simulator fault probability at every coarse point.
    GroundTruth { config: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Pgm,
    Scatter,
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<CampaignConfig> {
    let mut config = CampaignConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn param_label(layer_map: &LayerMap) -> String {
    match &layer_map.map.metadata.parameters {
        Some(p) => p.tag(),
        None => "all".into(),
    }
}

fn map_stem(campaign_id: &str, m: &LayerMap) -> String {
    let mut stem = format!("{campaign_id}_{}", param_label(m));
    if m.layer != 0 {
        stem.push_str(&format!(".layer{}", m.layer));
    }
    stem
}

fn write_heatmaps(dir: &Path, campaign_id: &str, maps: &[LayerMap]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for m in maps {
        let path = dir.join(format!("{}.heatmap.csv", map_stem(campaign_id, m)));
        fs::write(&path, export_heatmap_csv(&m.map))?;
        written.push(path);
    }
    Ok(written)
}

fn print_totals(out: &mut impl Write, totals: &ClassCounts) -> io::Result<()> {
    for class in FaultClass::ALL {
        writeln!(out, "{:<16}{}", class.as_str(), totals.get(class))?;
    }
    Ok(())
}

fn cmd_plan(config: &Path, seed: Option<u64>, list: bool) -> Result<()> {
    let config = load_config(config, seed)?;
    let plan = plan_trials(&config)?;
    let mut out = io::stdout().lock();
    writeln!(out, "campaign {} (config {})", config.campaign_id, config.hash())?;
    writeln!(out, "seed {}", config.seed)?;
    writeln!(out, "parameter points {}", plan.parameter_points.len())?;
    for (k, p) in plan.parameter_points.iter().enumerate() {
        writeln!(
            out,
            "  [{k}] voltage={} width_ns={} polarity={} offset_ns={} tag={}",
            p.voltage,
            p.width_ns,
            p.polarity,
            p.timing_offset_ns,
            p.tag()
        )?;
    }
    for layer in &plan.coarse_layers {
        let g = &layer.grid;
        writeln!(
            out,
            "layer {} z={} origin=({}, {}) pitch={} {}x{}",
            layer.id, g.z, g.origin[0], g.origin[1], g.pitch, g.nx, g.ny
        )?;
    }
    writeln!(out, "coarse trials {}", plan.coarse.len())?;
    writeln!(
        out,
        "refinement rounds up to {} (threshold {}, factor {})",
        plan.refinement_rounds(),
        plan.refinement.threshold,
        plan.refinement.factor
    )?;
    if list {
        writeln!(out, "layer,point,x,y,z,param_index,trial_index,trial_seed")?;
        for t in &plan.coarse {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                t.layer,
                t.point,
                t.coordinate.x,
                t.coordinate.y,
                t.coordinate.z,
                t.param_index,
                t.trial_index,
                t.trial_seed
            )?;
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs, out_dir: &Path, zero_timestamps: bool) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let log_path = out_dir.join(format!("{}.trials.jsonl", config.campaign_id));
    let mut log = FileLog::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let options = RunOptions { execution: Execution::from_workers(args.workers), zero_timestamps };
    let outcome = run_simulated(&config, &mut log, options)?;
    let maps = write_heatmaps(out_dir, &config.campaign_id, &outcome.maps)?;

    let mut out = io::stdout().lock();
    writeln!(out, "campaign {} trials {} layers {}", outcome.campaign_id, outcome.trials, outcome.layers.len())?;
    print_totals(&mut out, &outcome.class_totals)?;
    writeln!(out, "log {}", log_path.display())?;
    writeln!(out, "maps {}", maps.len())?;
    Ok(())
}

/// Sink for runs whose log is not kept.
struct Discard;

impl LogSink for Discard {
    fn append(&mut self, _: &LogEntry) -> io::Result<()> {
        Ok(())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let mut config = load_config(&args.config, args.seed)?;
    config.refinement.max_levels = 0;
    let options = RunOptions { execution: Execution::from_workers(args.workers), zero_timestamps: true };
    let outcome = run_simulated(&config, &mut Discard, options)?;

    let mut totals = vec![ClassCounts::default(); outcome.parameter_points.len()];
    for m in &outcome.maps {
        if let Some(p) = m.param_index {
            for (_, cell) in m.map.populated() {
                totals[p].add(&cell.counts);
            }
        }
    }
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "param_index,voltage,width_ns,polarity,offset_ns,trials,faults,fault_rate,wilson_low,wilson_high,control_flow,data_corruption,system_level"
    )?;
    for (k, (p, c)) in outcome.parameter_points.iter().zip(&totals).enumerate() {
        let (lo, hi) = wilson_interval(c.faults(), c.total(), Z_95);
        let rate = if c.total() == 0 { 0.0 } else { c.faults() as f64 / c.total() as f64 };
        writeln!(
            out,
            "{k},{},{},{},{},{},{},{rate:.6},{lo:.6},{hi:.6},{},{},{}",
            p.voltage,
            p.width_ns,
            p.polarity,
            p.timing_offset_ns,
            c.total(),
            c.faults(),
            c.control_flow,
            c.data_corruption,
            c.system_level
        )?;
    }
    Ok(())
}

fn replay_file(path: &Path, keep_records: bool) -> Result<ReplayReport> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(replay_reader(BufReader::new(file), ReplayOptions { keep_records })?)
}

fn report_malformed(report: &ReplayReport) {
    for m in &report.malformed {
        eprintln!("line {}: malformed record: {}", m.line, m.error);
    }
}

fn cmd_classify(log: &Path) -> Result<()> {
    let report = replay_file(log, true)?;
    report_malformed(&report);
    let mut out = io::stdout().lock();
    writeln!(out, "seq,layer,x,y,z,param_index,trial_index,class,detail,error_count")?;
    for r in &report.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.seq,
            r.layer,
            r.coordinate.x,
            r.coordinate.y,
            r.coordinate.z,
            r.param_index,
            r.trial_index,
            r.classification.class,
            r.classification.detail,
            r.error_count
        )?;
    }
    out.flush()?;
    let mut err = io::stderr().lock();
    print_totals(&mut err, &report.class_totals)?;
    Ok(())
}

fn cmd_map(log: &Path, format: Format, out_dir: &Path, layer: Option<u32>, scale: Option<u64>) -> Result<()> {
    let report = replay_file(log, format == Format::Scatter)?;
    report_malformed(&report);
    let Some(header) = &report.header else { bail!("{} has no campaign header", log.display()) };
    let id = &header.campaign_id;
    fs::create_dir_all(out_dir)?;
    let maps: Vec<&LayerMap> = report.maps.iter().filter(|m| layer.is_none_or(|l| m.layer == l)).collect();
    let mut written = Vec::new();
    match format {
        Format::Csv => {
            for m in maps {
                let path = out_dir.join(format!("{}.heatmap.csv", map_stem(id, m)));
                fs::write(&path, export_heatmap_csv(&m.map))?;
                written.push(path);
            }
        }
        Format::Pgm => {
            for m in maps {
                let s = scale.unwrap_or_else(|| m.map.max_error_total()).max(1);
                let path = out_dir.join(format!("{}.pgm", map_stem(id, m)));
                fs::write(&path, export_pgm(&m.map, s)?)?;
                written.push(path);
            }
        }
        Format::Scatter => {
            for m in maps {
                let records = report
                    .records
                    .iter()
                    .filter(|r| r.layer == m.layer && m.param_index.is_none_or(|p| r.param_index == p));
                let path = out_dir.join(format!("{}.scatter.csv", map_stem(id, m)));
                fs::write(&path, export_scatter_csv(records))?;
                written.push(path);
            }
        }
    }
    let mut out = io::stdout().lock();
    for p in written {
        writeln!(out, "{}", p.display())?;
    }
    Ok(())
}

fn cmd_replay(log: &Path) -> Result<bool> {
    let report = replay_file(log, false)?;
    report_malformed(&report);
    let mut out = io::stdout().lock();
    for d in &report.disagreements {
        writeln!(
            out,
            "seq {} (line {}): {} stored {} / {} recomputed {} / {}",
            d.seq,
            d.line,
            d.fields.join(","),
            d.stored.class,
            d.stored.detail,
            d.recomputed.class,
            d.recomputed.detail
        )?;
    }
    writeln!(
        out,
        "trials {} disagreements {} malformed {}",
        report.trials,
        report.disagreements.len(),
        report.malformed.len()
    )?;
    print_totals(&mut out, &report.class_totals)?;
    if report.header.is_none() {
        writeln!(out, "no campaign header")?;
        return Ok(false);
    }
    Ok(report.is_clean())
}

fn cmd_ground_truth(config: &Path) -> Result<()> {
    let config = load_config(config, None)?;
    let target = config.build_target()?;
    let params = config.parameter_points()?;
    let mut out = io::stdout().lock();
    writeln!(out, "x,y,z,param_index,probability")?;
    for grid in config.coarse_grids() {
        for k in 0..grid.len() {
            let c = grid.coordinate_at(k);
            for (pi, p) in params.iter().enumerate() {
                let prob = target.ground_truth(&c, p).unwrap_or(f64::NAN);
                writeln!(out, "{},{},{},{pi},{prob:.9}", c.x, c.y, c.z)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan { config, seed, trials } => cmd_plan(config, *seed, *trials).map(|_| true),
        Command::Run { args, out, zero_timestamps } => cmd_run(args, out, *zero_timestamps).map(|_| true),
        Command::Sweep { args } => cmd_sweep(args).map(|_| true),
        Command::Classify { log } => cmd_classify(log).map(|_| true),
        Command::Map { log, format, out, layer, scale } => cmd_map(log, *format, out, *layer, *scale).map(|_| true),
        Command::Replay { log } => cmd_replay(log),
        Command::GroundTruth { config } => cmd_ground_truth(config).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e)
            if e.chain()
                .any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
