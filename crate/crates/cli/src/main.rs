use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use qbst::config::{apply_overrides, load_synth_config, load_tracker_config};
use qbst::datasets::{
    generate_synthetic, load_library, load_otb_sequence, standard_suite, Sequence,
};
use qbst::engine::{
    read_results, run_tracker, write_diagnostics, write_results, QueryMode, TrackResult,
    TrackerConfig,
};
use qbst::eval::{report, write_report, EvalReport, Trajectory};
use qbst::geometry::BoundingBox;

#[derive(Parser)]
#[command(
    name = "qbst",
    version,
    about = "Query-by-boosting visual object tracker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct TrackerArgs {
    /// TOML tracker configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides any config key, e.g. `--set qbst.delta=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl TrackerArgs {
    fn load(&self) -> Result<TrackerConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                load_tracker_config(p).with_context(|| format!("loading config {}", p.display()))?
            }
            None => TrackerConfig::default(),
        };
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if !overrides.is_empty() {
            cfg = apply_overrides(&cfg, &overrides)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence directory and write its result files.
    Track {
        seq_dir: PathBuf,
        #[command(flatten)]
        tracker: TrackerArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Also write the final committee and oracle stores here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Track every sequence of a library and write an evaluation report.
    Bench {
        library_dir: PathBuf,
        #[command(flatten)]
        tracker: TrackerArgs,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
    },
    /// Render a synthetic sequence (or the bundled suite) in OTB layout.
    Synth {
        /// Synthetic sequence configuration.
        synth_config: Option<PathBuf>,
        /// Export the bundled suite instead, one directory per sequence.
        #[arg(long, conflicts_with = "synth_config")]
        suite: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the query band width and a random-query baseline.
    SweepDelta {
        library_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.38,0.5,0.8,1.0")]
        deltas: Vec<f64>,
        /// Query probability of the random baseline.
        #[arg(long)]
        random_p: Option<f64>,
        #[command(flatten)]
        tracker: TrackerArgs,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Re-score existing result files against a library.
    Eval {
        results_dir: PathBuf,
        library_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn result_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.txt"))
}

fn first_box(seq: &Sequence) -> Result<BoundingBox> {
    let gt = seq.require_ground_truth()?;
    gt.first()
        .copied()
        .with_context(|| format!("sequence {} has no frames", seq.name))
}

/// Tracks `seq` and writes `<name>.txt` and `<name>_diagnostics.csv`.
fn track_sequence(
    seq: &Sequence,
    cfg: TrackerConfig,
    out: &Path,
    checkpoint: Option<&Path>,
) -> Result<TrackResult> {
    let p1 = first_box(seq)?;
    info!("tracking {} ({} frames)", seq.name, seq.len());
    let (tracker, result) =
        run_tracker(seq.frames(), p1, cfg).with_context(|| format!("tracking {}", seq.name))?;
    fs::create_dir_all(out)?;
    write_results(
        fs::File::create(result_path(out, &seq.name))?,
        &result.frames,
    )?;
    write_diagnostics(
        fs::File::create(out.join(format!("{}_diagnostics.csv", seq.name)))?,
        &result.frames,
    )?;
    if let Some(dir) = checkpoint {
        tracker.write_checkpoint(dir)?;
    }
    let failed = result.frames.iter().filter(|f| f.failure.is_some()).count();
    info!(
        "{}: {:.2} fps, {} oracle queries, {} failed frames",
        seq.name,
        result.fps(),
        result.total_queries(),
        failed
    );
    Ok(result)
}

fn trajectory<'a>(
    seq: &'a Sequence,
    estimate: &'a [BoundingBox],
    fps: Option<f64>,
) -> Trajectory<'a> {
    Trajectory {
        name: seq.name.clone(),
        attributes: seq.attributes.iter().copied().collect(),
        estimate,
        truth: seq.ground_truth().unwrap_or(&[]),
        fps,
    }
}

/// Tracks the whole library and scores it. Sequences that fail to track
/// are listed as failures in the report.
fn bench_library(
    library: &[Sequence],
    cfg: TrackerConfig,
    out: &Path,
) -> Result<(EvalReport, f64)> {
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for seq in library {
        match track_sequence(seq, cfg, out, None) {
            Ok(r) => runs.push((seq, r)),
            Err(e) => {
                log::error!("{e:#}");
                failures.push(qbst::eval::Failure {
                    name: seq.name.clone(),
                    error: format!("{e:#}"),
                });
            }
        }
    }
    let boxes: Vec<Vec<BoundingBox>> = runs.iter().map(|(_, r)| r.boxes()).collect();
    let trajectories: Vec<Trajectory> = runs
        .iter()
        .zip(&boxes)
        .map(|((seq, r), b)| trajectory(seq, b, Some(r.fps())))
        .collect();
    let queries: usize = runs.iter().map(|(_, r)| r.total_queries()).sum();
    let frames: usize = runs.iter().map(|(_, r)| r.frames.len()).sum();
    let mut rep = report(&trajectories);
    rep.failures.extend(failures);
    rep.failures.sort_by(|a, b| a.name.cmp(&b.name));
    Ok((
        rep,
        if frames > 0 {
            queries as f64 / frames as f64
        } else {
            0.0
        },
    ))
}

fn print_summary(rep: &EvalReport) {
    for s in &rep.sequences {
        println!(
            "{:<24} auc {:.4}  prec@20 {:.4}  fps {}",
            s.name,
            s.auc,
            s.precision_at_20,
            s.fps.map_or("-".into(), |f| format!("{f:.2}"))
        );
    }
    println!(
        "overall auc {:.4}  precision auc {:.4}  prec@20 {:.4}",
        rep.overall_auc, rep.overall_precision_auc, rep.precision_at_20
    );
    for (tag, auc) in &rep.attribute_auc {
        println!("  {tag:<4} auc {auc:.4}");
    }
    for f in &rep.failures {
        println!("failed {}: {}", f.name, f.error);
    }
}

fn load_nonempty_library(dir: &Path) -> Result<Vec<Sequence>> {
    let library =
        load_library(dir).with_context(|| format!("loading library {}", dir.display()))?;
    if library.is_empty() {
        return Err(qbst::Error::ConfigOutOfBounds(format!(
            "no sequence directories under {}",
            dir.display()
        )))
        .context("loading library");
    }
    Ok(library)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track {
            seq_dir,
            tracker,
            out,
            checkpoint,
        } => {
            let cfg = tracker.load()?;
            let seq = load_otb_sequence(&seq_dir)
                .with_context(|| format!("loading {}", seq_dir.display()))?;
            let result = track_sequence(&seq, cfg, &out, checkpoint.as_deref())?;
            if seq.ground_truth().is_some() {
                let boxes = result.boxes();
                print_summary(&report(&[trajectory(&seq, &boxes, Some(result.fps()))]));
            }
            println!("wrote {}", result_path(&out, &seq.name).display());
        }
        Command::Bench {
            library_dir,
            tracker,
            out,
        } => {
            let cfg = tracker.load()?;
            let library = load_nonempty_library(&library_dir)?;
            let (rep, _) = bench_library(&library, cfg, &out)?;
            write_report(&rep, &out)?;
            print_summary(&rep);
        }
        Command::Synth {
            synth_config,
            suite,
            out,
        } => {
            if suite {
                for cfg in standard_suite() {
                    let dir = out.join(&cfg.name);
                    generate_synthetic(&cfg)?.export(&dir)?;
                    println!("wrote {}", dir.display());
                }
            } else {
                let Some(path) = synth_config else {
                    return Err(qbst::Error::ConfigOutOfBounds(
                        "give a synthetic config or --suite".into(),
                    )
                    .into());
                };
                let cfg = load_synth_config(&path)
                    .with_context(|| format!("loading {}", path.display()))?;
                generate_synthetic(&cfg)?.export(&out)?;
                println!("wrote {}", out.display());
            }
        }
        Command::SweepDelta {
            library_dir,
            deltas,
            random_p,
            tracker,
            out,
        } => {
            let base = tracker.load()?;
            let library = load_nonempty_library(&library_dir)?;
            let mut settings: Vec<(String, TrackerConfig)> = Vec::new();
            for d in deltas {
                let mut cfg = base;
                cfg.qbst.query_mode = QueryMode::Active;
                cfg.qbst.delta = d;
                cfg.validate()?;
                settings.push((format!("delta_{d}"), cfg));
            }
            if let Some(p) = random_p {
                let mut cfg = base;
                cfg.qbst.query_mode = QueryMode::Random(p);
                cfg.validate()?;
                settings.push((format!("random_{p}"), cfg));
            }
            fs::create_dir_all(&out)?;
            let mut table = String::from(
                "setting,success_auc,precision_auc,precision_at_20,queries_per_frame,mean_fps\n",
            );
            for (label, cfg) in settings {
                let dir = out.join(&label);
                let (rep, qpf) = bench_library(&library, cfg, &dir)?;
                write_report(&rep, &dir)?;
                let line = format!(
                    "{label},{:.6},{:.6},{:.6},{:.3},{}",
                    rep.overall_auc,
                    rep.overall_precision_auc,
                    rep.precision_at_20,
                    qpf,
                    rep.mean_fps.map_or(String::new(), |f| format!("{f:.3}"))
                );
                println!("{line}");
                table.push_str(&line);
                table.push('\n');
            }
            fs::write(out.join("sweep.csv"), table)?;
        }
        Command::Eval {
            results_dir,
            library_dir,
            out,
        } => {
            let library = load_nonempty_library(&library_dir)?;
            let mut estimates = Vec::new();
            let mut missing = Vec::new();
            for seq in &library {
                let path = result_path(&results_dir, &seq.name);
                match fs::File::open(&path) {
                    Ok(f) => {
                        let rows = read_results(f, &path)?;
                        estimates.push((seq, rows.iter().map(|r| r.target).collect::<Vec<_>>()));
                    }
                    Err(e) => missing.push(qbst::eval::Failure {
                        name: seq.name.clone(),
                        error: format!("{}: {e}", path.display()),
                    }),
                }
            }
            let trajectories: Vec<Trajectory> = estimates
                .iter()
                .map(|(seq, est)| trajectory(seq, est, None))
                .collect();
            let mut rep = report(&trajectories);
            rep.failures.extend(missing);
            rep.failures.sort_by(|a, b| a.name.cmp(&b.name));
            if let Some(dir) = out {
                write_report(&rep, &dir)?;
            }
            print_summary(&rep);
            if rep.sequences.is_empty() {
                bail!(qbst::Error::LengthMismatch {
                    estimated: 0,
                    truth: library.len()
                });
            }
        }
    }
    Ok(())
}

/// Validation problems exit with 1, everything else with 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| {
        e.downcast_ref::<qbst::Error>()
            .is_some_and(qbst::Error::is_validation)
    });
    if validation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
