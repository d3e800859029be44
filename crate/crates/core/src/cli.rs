//! `swaykin` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::anatomy::{Axis, Segment};
use crate::camera::{BoardGeometry, CalibrationConfig};
use crate::error::{Error, Result};
use crate::features::DetectorConfig;
use crate::io::{self, IntrinsicsFile};
use crate::metrics::{tpl_table, StanceBins, TplResult};
use crate::pipeline::{self, PipelineConfig, TargetInput};
use crate::synth::Scenario;

#[derive(Debug, Parser)]
#[command(name = "swaykin", version, about = "Monocular fiducial tracking of postural sway")]
pub struct Cli {
    /// Worker threads for independent frames, targets and trials.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate camera intrinsics from checkerboard frames.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic recording with ground truth.
    Simulate(SimulateArgs),
    /// Track targets into anatomical sway trajectories.
    Track(TrackArgs),
    /// Path lengths per stance bin, optionally compared across two condition sets.
    Analyze(AnalyzeArgs),
    /// Bland-Altman agreement between two trajectories.
    Agree(AgreeArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Directory of binary PGM board frames.
    #[arg(long)]
    pub frames: PathBuf,
    /// Board descriptor JSON: rows, cols, square_size_mm (inner corners).
    #[arg(long)]
    pub board: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fix the radial coefficients at zero.
    #[arg(long)]
    pub no_distortion: bool,
    /// Detector settings JSON.
    #[arg(long)]
    pub detector: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write rendered PGM frames.
    #[arg(long)]
    pub render_frames: bool,
    /// Overrides the observation noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Frames directory; overrides the config.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub window_sec: Option<f64>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub max_gap_sec: Option<f64>,
    #[arg(long)]
    pub stance_start_sec: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory of trajectory CSVs, one trial per file.
    #[arg(long)]
    pub traj: PathBuf,
    /// Second condition set to compare against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Stance bin edges in seconds.
    #[arg(long, value_delimiter = ',', default_value = "0,20,40,60")]
    pub bins: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Common resampling rate, Hz.
    #[arg(long, default_value_t = 30.0)]
    pub rate: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "AP")]
    pub axis: Axis,
    /// Segment to compare; defaults to the only one present, else lower.
    #[arg(long)]
    pub segment: Option<Segment>,
}

/// Usage and configuration problems exit with 2, computational failures with 1.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Format { .. }
        | Error::InvalidParameter(_)
        | Error::InvalidModel(_)
        | Error::AmbiguousTarget { .. } => 2,
        _ => 1,
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Calibrate(a) => calibrate(a),
        Command::Simulate(a) => simulate(a),
        Command::Track(a) => track(a),
        Command::Analyze(a) => analyze(a),
        Command::Agree(a) => agree(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let board: BoardGeometry = io::read_json(&args.board)?;
    board.validate()?;
    let detector: DetectorConfig = match &args.detector {
        Some(p) => io::read_json(p)?,
        None => DetectorConfig::default(),
    };
    let config = CalibrationConfig {
        estimate_distortion: !args.no_distortion,
        ..CalibrationConfig::default()
    };
    let result = pipeline::calibrate_frames(&args.frames, &board, &detector, &config)?;
    let c = &result.calibration;
    io::write_json(
        &args.out,
        &IntrinsicsFile {
            intrinsics: c.intrinsics,
            rms_px: Some(c.rms_px),
        },
    )?;
    println!(
        "calibrated from {} views ({} skipped): RMS reprojection {:.4} px, condition number {:.3e}{}",
        result.used.len(),
        result.skipped.len(),
        c.rms_px,
        c.condition_number,
        if c.converged { "" } else { " (refinement did not converge)" }
    );
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.noise.seed = seed;
    }
    let sim = scenario.run()?;
    let out = &args.out;
    create_dir(out)?;
    io::write_json(
        out.join("intrinsics.json"),
        &IntrinsicsFile {
            intrinsics: scenario.camera,
            rms_px: None,
        },
    )?;
    io::write_json(out.join("anatomical_frame.json"), &scenario.anatomical_frame)?;

    let mut feature_targets = Vec::new();
    let mut frame_targets = Vec::new();
    let mut truths = Vec::new();
    for (entry, t) in scenario.targets.iter().zip(&sim.targets) {
        let seg = t.segment;
        let model_file = format!("model_{seg}.json");
        io::write_json(out.join(&model_file), &t.model)?;
        let features_file = format!("features_{seg}.csv");
        io::write_features(out.join(&features_file), &t.observations)?;
        io::write_pose_sequence(out.join(format!("truth_pose_{seg}.csv")), sim.rate_hz, &t.truth)?;
        truths.push(&t.truth_trajectory);
        feature_targets.push(TargetInput {
            model: model_file.clone(),
            segment: seg,
            features: Some(features_file.into()),
            init_pose: None,
        });
        frame_targets.push(TargetInput {
            model: model_file,
            segment: seg,
            features: None,
            init_pose: Some(entry.base_pose),
        });
    }
    io::write_trajectories(out.join("truth_trajectory.csv"), &truths)?;

    let frame_count = sim.targets.first().map_or(0, |t| t.truth.len());
    let config = |targets: Vec<TargetInput>, frames_dir: Option<PathBuf>| PipelineConfig {
        intrinsics: "intrinsics.json".into(),
        anatomical_frame: "anatomical_frame.json".into(),
        targets,
        frames_dir,
        frame_count: Some(frame_count),
        rate_hz: sim.rate_hz,
        stance_start_sec: 0.0,
        filter: Default::default(),
        max_gap_sec: 0.5,
        detector: Default::default(),
        matching: Default::default(),
        fit: Default::default(),
        max_rms_px: None,
        base_dir: None,
    };
    io::write_json(out.join("track_config.json"), &config(feature_targets, None))?;

    if args.render_frames {
        let dir = out.join("frames");
        create_dir(&dir)?;
        (0..frame_count).into_par_iter().try_for_each(|k| {
            scenario
                .render_frame(&sim, k)?
                .write_pgm(dir.join(format!("frame_{k:05}.pgm")))
        })?;
        io::write_json(
            out.join("track_config_frames.json"),
            &config(frame_targets, Some("frames".into())),
        )?;
    }
    println!(
        "simulated {} frames at {} Hz for {} target(s) into {}",
        frame_count,
        sim.rate_hz,
        sim.targets.len(),
        out.display()
    );
    Ok(())
}

fn track(args: &TrackArgs) -> Result<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(f) = &args.frames {
        config.frames_dir = Some(std::path::absolute(f).map_err(|e| Error::io(f, e))?);
    }
    if let Some(r) = args.rate {
        config.rate_hz = r;
    }
    if let Some(w) = args.window_sec {
        config.filter.window_sec = w;
    }
    if let Some(o) = args.order {
        config.filter.order = o;
    }
    if let Some(g) = args.max_gap_sec {
        config.max_gap_sec = g;
    }
    if let Some(s) = args.stance_start_sec {
        config.stance_start_sec = s;
    }
    let results = pipeline::run_tracking(&config)?;
    pipeline::write_tracking_outputs(&args.out, &results)?;
    for r in &results {
        println!("{}", r.summary());
    }
    Ok(())
}

fn trial_tpl(dir: &Path, bins: &StanceBins) -> Result<Vec<(String, Vec<TplResult>)>> {
    let trials = pipeline::load_trials(dir)?;
    Ok(trials
        .par_iter()
        .map(|t| {
            let rows = t.trajectories.iter().flat_map(|traj| tpl_table(traj, bins)).collect();
            (t.name.clone(), rows)
        })
        .collect())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let bins = StanceBins::from_edges(&args.bins)?;
    let a = trial_tpl(&args.traj, &bins)?;
    let b = args.compare.as_deref().map(|d| trial_tpl(d, &bins)).transpose()?;
    create_dir(&args.out)?;
    for (name, rows) in &a {
        io::write_tpl(args.out.join(format!("tpl_{name}.csv")), rows)?;
    }
    if let Some(b) = &b {
        for (name, rows) in b {
            io::write_tpl(args.out.join(format!("compare_tpl_{name}.csv")), rows)?;
        }
        let effects = pipeline::compare_conditions(&a, b);
        io::write_rows(args.out.join("cohens_d.csv"), &effects)?;
        println!("{} trial(s) vs {} trial(s), {} outcome(s) compared", a.len(), b.len(), effects.len());
    } else {
        println!("{} trial(s) analyzed", a.len());
    }
    Ok(())
}

fn agree(args: &AgreeArgs) -> Result<()> {
    let a = io::read_trajectories(&args.a)?;
    let b = io::read_trajectories(&args.b)?;
    let ta = pipeline::select_segment(&a, args.segment)?;
    let tb = pipeline::select_segment(&b, args.segment)?;
    let report = pipeline::agreement_between(ta, tb, args.rate, args.axis)?;
    io::write_json(&args.out, &report)?;
    println!(
        "{} {}: bias {:.4} mm, limits [{:.4}, {:.4}] mm, slope {:.4}, r2 {:.4}, n {}",
        ta.segment(),
        args.axis,
        report.bias_mm,
        report.loa[0],
        report.loa[1],
        report.slope,
        report.r2,
        report.n
    );
    Ok(())
}
